//! Discounted net present value of a simulated schedule.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::EconomicParams;
use crate::sim2p::SimulationResult;

/// NPV and its parts in dollars; costs are positive numbers.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct NpvBreakdown {
    pub revenue: f64,
    pub water_handling_cost: f64,
    pub injection_cost: f64,
    pub well_capex: f64,
    pub npv: f64,
}

/// Per-step rates (STB/day) entering the cash-flow sum.
#[derive(Clone, Copy, Debug)]
pub struct StepRates<'a> {
    pub t_end: f64,
    pub dt: f64,
    pub q_o: &'a [f64],
    pub q_wp: &'a [f64],
    pub q_wi: &'a [f64],
}

/// NPV of a simulation. `drilled[k]` marks wells whose capex is charged;
/// drill times come from `econ.drill_times` (missing entries are day 0).
pub fn npv(result: &SimulationResult, econ: &EconomicParams, drilled: &[bool]) -> Result<NpvBreakdown> {
    let steps = result.steps.iter().map(|s| StepRates {
        t_end: s.t_end,
        dt: s.dt,
        q_o: &s.q_o,
        q_wp: &s.q_wp,
        q_wi: &s.q_wi,
    });
    npv_from_steps(steps, econ, drilled)
}

/// NPV with every well drilled.
pub fn npv_all_drilled(result: &SimulationResult, econ: &EconomicParams) -> Result<NpvBreakdown> {
    npv(result, econ, &vec![true; result.well_names.len()])
}

pub fn npv_from_steps<'a>(
    steps: impl IntoIterator<Item = StepRates<'a>>,
    econ: &EconomicParams,
    drilled: &[bool],
) -> Result<NpvBreakdown> {
    let base = 1.0 + econ.discount_rate;
    let mut out = NpvBreakdown::default();
    for (i, s) in steps.into_iter().enumerate() {
        if !(s.dt >= 0.0) {
            return Err(Error::Domain(format!("step {i} has negative duration {}", s.dt)));
        }
        let disc = base.powf(s.t_end / 365.0);
        out.revenue += s.dt * econ.oil_price * s.q_o.iter().sum::<f64>() / disc;
        out.water_handling_cost += s.dt * econ.water_prod_cost * s.q_wp.iter().sum::<f64>() / disc;
        out.injection_cost += s.dt * econ.water_inj_cost * s.q_wi.iter().sum::<f64>() / disc;
    }
    for (k, d) in drilled.iter().enumerate() {
        if *d {
            let t = econ.drill_times.get(k).copied().unwrap_or(0.0);
            out.well_capex += econ.well_cost / base.powf(t / 365.0);
        }
    }
    out.npv = out.revenue - out.water_handling_cost - out.injection_cost - out.well_capex;
    Ok(out)
}
