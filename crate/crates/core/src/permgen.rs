//! Seeded two-valued channel permeability fields: sinuous high-permeability
//! bands running along x through a low-permeability background.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub n_channels: usize,
    /// mD
    pub k_channel: f64,
    /// mD
    pub k_background: f64,
    /// Channel width in cells.
    pub width: f64,
    /// Meander amplitude as a fraction of `ny`.
    pub amplitude: f64,
    /// Meander wavelength as a fraction of `nx`.
    pub wavelength: f64,
}

impl ChannelParams {
    pub fn new(nx: usize, ny: usize, nz: usize, n_channels: usize) -> Self {
        ChannelParams {
            nx,
            ny,
            nz,
            n_channels,
            k_channel: 1000.0,
            k_background: 10.0,
            width: (ny as f64 / 12.0).max(1.5),
            amplitude: 0.12,
            wavelength: 0.6,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx == 0 || self.ny == 0 || self.nz == 0 {
            return Err(Error::InvalidGeometry(format!(
                "field dimensions {}x{}x{} must be positive",
                self.nx, self.ny, self.nz
            )));
        }
        if !(self.k_background > 0.0) || !(self.k_channel > self.k_background) {
            return Err(Error::Config(format!(
                "need k_channel > k_background > 0, got {} and {}",
                self.k_channel, self.k_background
            )));
        }
        if !(self.width > 0.0) || !(self.amplitude >= 0.0) || !(self.wavelength > 0.0) {
            return Err(Error::InvalidGeometry(
                "channel width and wavelength must be > 0, amplitude >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// Cell permeabilities (x fastest, then y, then z). Identical for equal
/// parameters and seed.
pub fn generate_channel_perm(params: &ChannelParams, seed: u64) -> Result<Vec<f64>> {
    params.validate()?;
    let (nx, ny, nz) = (params.nx, params.ny, params.nz);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut k = vec![params.k_background; nx * ny * nz];
    for layer in 0..nz {
        for _ in 0..params.n_channels {
            let y0 = rng.gen_range(0.0..ny as f64);
            let amp = params.amplitude * ny as f64 * rng.gen_range(0.5..1.5);
            let lambda = params.wavelength * nx as f64 * rng.gen_range(0.7..1.3);
            let phase = rng.gen_range(0.0..std::f64::consts::TAU);
            let half = 0.5 * params.width * rng.gen_range(0.8..1.2);
            for i in 0..nx {
                let yc = y0 + amp * (std::f64::consts::TAU * (i as f64 + 0.5) / lambda + phase).sin();
                for j in 0..ny {
                    if ((j as f64 + 0.5) - yc).abs() <= half {
                        k[i + nx * (j + ny * layer)] = params.k_channel;
                    }
                }
            }
        }
    }
    Ok(k)
}
