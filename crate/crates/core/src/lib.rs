mod disc;
pub mod econ;
pub mod error;
pub mod linalg;
pub mod mads;
pub mod model;
pub mod parallel;
pub mod permgen;
pub mod respmat;
pub mod sim1p;
pub mod sim2p;
pub mod st_qp;
pub mod st_sweep;

pub use error::{Error, Result, StageExt};
