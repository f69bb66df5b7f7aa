#![allow(dead_code)]

use surroflood::model::{
    CaseModel, CoreyParams, EconomicParams, FluidProperties, Grid, RelPermModel, RockProperties, Schedule, WellSpec,
};
use surroflood::permgen::{generate_channel_perm, ChannelParams};

pub fn fluid_for_ratio(m: f64) -> FluidProperties {
    if m == 1.0 {
        FluidProperties::unit_mobility()
    } else {
        FluidProperties {
            mu_o: m,
            mu_w: 1.0,
            relperm: RelPermModel::Corey(CoreyParams::default()),
            ..FluidProperties::default()
        }
    }
}

pub fn economics(well_cost: f64) -> EconomicParams {
    EconomicParams {
        oil_price: 60.0,
        water_prod_cost: 5.0,
        water_inj_cost: 5.0,
        well_cost,
        discount_rate: 0.0,
        drill_times: Vec::new(),
    }
}

pub struct CaseSpec {
    pub n: usize,
    pub cell: f64,
    pub thickness: f64,
    pub seed: u64,
    pub n_channels: usize,
    pub mobility_ratio: f64,
    pub wells: Vec<WellSpec>,
    pub horizon: f64,
    pub well_cost: f64,
}

pub fn build(spec: &CaseSpec) -> CaseModel {
    let mut params = ChannelParams::new(spec.n, spec.n, 1, spec.n_channels);
    params.k_channel = 500.0;
    params.k_background = 20.0;
    let perm = generate_channel_perm(&params, spec.seed).unwrap();
    CaseModel::new(
        Grid::new(spec.n, spec.n, 1, spec.cell, spec.cell, spec.thickness).unwrap(),
        RockProperties::isotropic(perm, 0.25, 1e-9),
        fluid_for_ratio(spec.mobility_ratio),
        spec.wells.clone(),
        economics(spec.well_cost),
        Schedule::new(spec.horizon, 1),
        6000.0,
    )
    .unwrap()
}

/// Three producers around a central injector pair on a 20x20 channelized
/// grid.
pub fn desk_case(seed: u64, mobility_ratio: f64) -> CaseModel {
    build(&CaseSpec {
        n: 20,
        cell: 80.0,
        thickness: 100.0,
        seed,
        n_channels: 3,
        mobility_ratio,
        wells: vec![
            WellSpec::producer("P1", 2, 3, 1000.0),
            WellSpec::producer("P2", 17, 2, 1000.0),
            WellSpec::producer("P3", 10, 17, 1000.0),
            WellSpec::injector("I1", 7, 10, 10000.0),
            WellSpec::injector("I2", 12, 9, 10000.0),
        ],
        horizon: 7300.0,
        well_cost: 5e6,
    })
}

/// The three seeded cases with mobility ratios 1, 3 and 5.
pub fn desk_cases() -> Vec<(String, CaseModel)> {
    [(101, 1.0), (202, 3.0), (303, 5.0)]
        .iter()
        .map(|&(seed, m)| (format!("seed {seed}, M={m}"), desk_case(seed, m)))
        .collect()
}

/// Water saturation of the Buckley-Leverett solution at dimensionless time
/// `td` and positions `xd`, from the Welge tangent.
pub fn buckley_leverett(fluid: &FluidProperties, td: f64, xd: &[f64]) -> Vec<f64> {
    let swc = fluid.relperm.connate_water();
    let smax = fluid.relperm.max_water();
    let f = |s: f64| fluid.fractional_flow(s);
    let df = |s: f64| (f(s + 1e-7) - f(s - 1e-7)) / 2e-7;
    let n = 20000;
    let mut s_front = swc;
    let mut best = 0.0;
    for k in 1..=n {
        let s = swc + (smax - swc) * k as f64 / n as f64;
        let slope = f(s) / (s - swc);
        if slope > best {
            best = slope;
            s_front = s;
        }
    }
    xd.iter()
        .map(|&x| {
            let v = x / td;
            if v > df(s_front) {
                return swc;
            }
            let (mut lo, mut hi) = (s_front, smax - 1e-9);
            if df(hi) >= v {
                return hi;
            }
            for _ in 0..100 {
                let mid = 0.5 * (lo + hi);
                if df(mid) > v {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            0.5 * (lo + hi)
        })
        .collect()
}
