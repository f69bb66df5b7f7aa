//! Box-constrained pattern search over scaled well controls, with a
//! stick-breaking encoding of per-role rate fractions and per-period field
//! rates.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::econ::npv_all_drilled;
use crate::error::{Error, Result, StageExt};
use crate::model::{CaseModel, EconomicParams, WellKind};
use crate::parallel::par_map;
use crate::sim2p::{Controls, SimOptions, Simulator};
use crate::st_qp::RateRatios;
use crate::st_sweep::{run_two_step_st, StConfig, StResult};

/// Layout of the scaled control vector. Per period: the free stick-breaking
/// variables of the producers, then of the injectors, then the field rate.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ControlLayout {
    pub n_periods: usize,
    pub kinds: Vec<WellKind>,
    pub pvi_lo: f64,
    pub pvi_hi: f64,
}

/// Decoded controls of one period.
#[derive(Clone, Debug, PartialEq)]
pub struct PeriodSetting {
    pub ratios: RateRatios,
    pub pvi: f64,
}

fn stick_exponent(remaining: usize) -> f64 {
    (remaining as f64).log2()
}

fn decode_simplex(x: &[f64]) -> Vec<f64> {
    let m = x.len() + 1;
    let mut out = Vec::with_capacity(m);
    let mut rest = 1.0;
    for (k, v) in x.iter().enumerate() {
        let b = v.clamp(0.0, 1.0).powf(stick_exponent(m - k));
        out.push(rest * b);
        rest *= 1.0 - b;
    }
    out.push(rest);
    out
}

fn encode_simplex(f: &[f64]) -> Vec<f64> {
    let m = f.len();
    let mut out = Vec::with_capacity(m.saturating_sub(1));
    let mut rest = 1.0;
    for k in 0..m.saturating_sub(1) {
        let x = if rest > 0.0 {
            let b = (f[k] / rest).clamp(0.0, 1.0);
            b.powf(1.0 / stick_exponent(m - k))
        } else {
            0.5
        };
        out.push(x);
        rest -= f[k];
        rest = rest.max(0.0);
    }
    out
}

impl ControlLayout {
    pub fn new(model: &CaseModel, n_periods: usize) -> Result<Self> {
        if model.n_wells() < 2 || n_periods == 0 {
            return Err(Error::Config("need at least two wells and one period".into()));
        }
        Ok(ControlLayout {
            n_periods,
            kinds: model.kinds(),
            pvi_lo: 0.25,
            pvi_hi: 3.0,
        })
    }

    fn role_count(&self, kind: WellKind) -> usize {
        self.kinds.iter().filter(|k| **k == kind).count()
    }

    pub fn per_period(&self) -> usize {
        self.role_count(WellKind::Producer) - 1 + self.role_count(WellKind::Injector) - 1 + 1
    }

    pub fn n_opt(&self) -> usize {
        self.n_periods * self.per_period()
    }

    pub fn decode(&self, x: &[f64]) -> Result<Vec<PeriodSetting>> {
        if x.len() != self.n_opt() {
            return Err(Error::Dimension {
                expected: self.n_opt(),
                got: x.len(),
            });
        }
        let n_p = self.role_count(WellKind::Producer);
        let n_i = self.role_count(WellKind::Injector);
        Ok(x.chunks(self.per_period())
            .map(|chunk| {
                let fp = decode_simplex(&chunk[..n_p - 1]);
                let fi = decode_simplex(&chunk[n_p - 1..n_p + n_i - 2]);
                let (mut ip, mut ii) = (0, 0);
                let f = self
                    .kinds
                    .iter()
                    .map(|k| match k {
                        WellKind::Producer => {
                            ip += 1;
                            fp[ip - 1]
                        }
                        WellKind::Injector => {
                            ii += 1;
                            fi[ii - 1]
                        }
                    })
                    .collect();
                let xr = chunk[chunk.len() - 1].clamp(0.0, 1.0);
                PeriodSetting {
                    ratios: RateRatios {
                        f,
                        kinds: self.kinds.clone(),
                    },
                    pvi: self.pvi_lo + xr * (self.pvi_hi - self.pvi_lo),
                }
            })
            .collect())
    }

    pub fn encode(&self, periods: &[PeriodSetting]) -> Result<Vec<f64>> {
        if periods.len() != self.n_periods {
            return Err(Error::Dimension {
                expected: self.n_periods,
                got: periods.len(),
            });
        }
        let mut x = Vec::with_capacity(self.n_opt());
        for p in periods {
            x.extend(encode_simplex(&p.ratios.role(WellKind::Producer)));
            x.extend(encode_simplex(&p.ratios.role(WellKind::Injector)));
            x.push(((p.pvi - self.pvi_lo) / (self.pvi_hi - self.pvi_lo)).clamp(0.0, 1.0));
        }
        Ok(x)
    }

    /// The same setting in every period.
    pub fn replicate(&self, setting: PeriodSetting) -> Vec<PeriodSetting> {
        vec![setting; self.n_periods]
    }

    /// Per-period rate controls for the simulator.
    pub fn controls(&self, model: &CaseModel, x: &[f64]) -> Result<Controls> {
        let periods: Vec<Vec<f64>> = self
            .decode(x)?
            .iter()
            .map(|p| p.ratios.signed_rates(model.field_rate_for_pvi(p.pvi)))
            .collect();
        Ok(Controls::from_period_rates(model, &periods))
    }
}

#[derive(Clone, Debug)]
pub struct MadsConfig {
    pub initial_mesh: f64,
    /// Stop once the mesh falls below this size.
    pub threshold: f64,
    pub max_iter: usize,
    pub seed: u64,
    pub workers: usize,
}

impl Default for MadsConfig {
    fn default() -> Self {
        MadsConfig {
            initial_mesh: 0.25,
            threshold: 0.01,
            max_iter: 15,
            seed: 0,
            workers: 1,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct MadsIteration {
    pub iteration: usize,
    pub mesh: f64,
    pub best: f64,
    pub evaluations: usize,
    pub improved: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct MadsResult {
    pub x_best: Vec<f64>,
    pub f_best: f64,
    pub f_initial: f64,
    pub history: Vec<MadsIteration>,
    pub evaluations: usize,
    pub iterations: usize,
    /// Every evaluated point in evaluation order.
    pub poll_points: Vec<Vec<f64>>,
}

impl MadsResult {
    /// Sequential depth in objective-evaluation units with one batch per
    /// iteration, plus the initial point when it was evaluated here.
    pub fn parallel_units(&self) -> f64 {
        let start = if self.evaluations > self.iterations * 2 * self.x_best.len() { 1.0 } else { 0.0 };
        start + self.iterations as f64
    }

    pub fn write_history_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "iteration,mesh,best_npv,evaluations,improved")?;
        for h in &self.history {
            writeln!(f, "{},{},{},{},{}", h.iteration, h.mesh, h.best, h.evaluations, h.improved as u8)?;
        }
        Ok(())
    }
}

/// Maximizes `objective` over `[0,1]^n` by complete coordinate polls of
/// `2n` points, visited in a seeded order each iteration. The best
/// improving point becomes the incumbent; a poll without improvement
/// halves the mesh. Non-finite objective values count as minus infinity.
/// `f0` supplies a known objective value for `x0` so it is not re-evaluated.
pub fn optimize<F>(objective: F, x0: &[f64], f0: Option<f64>, cfg: &MadsConfig) -> Result<MadsResult>
where
    F: Fn(&[f64]) -> f64 + Sync + Send,
{
    if !(cfg.threshold > 0.0) || !(cfg.initial_mesh > 0.0) {
        return Err(Error::Config("mesh size and threshold must be > 0".into()));
    }
    let n = x0.len();
    let clean = |v: f64| if v.is_finite() { v } else { f64::NEG_INFINITY };
    let mut x: Vec<f64> = x0.iter().map(|v| v.clamp(0.0, 1.0)).collect();
    let mut poll_points = Vec::new();
    let (mut fx, mut evaluations) = match f0 {
        Some(v) => (clean(v), 0),
        None => {
            poll_points.push(x.clone());
            (clean(objective(&x)), 1)
        }
    };
    let f_initial = fx;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut mesh = cfg.initial_mesh;
    let mut history = vec![MadsIteration {
        iteration: 0,
        mesh,
        best: fx,
        evaluations,
        improved: false,
    }];
    let mut iterations = 0;
    while iterations < cfg.max_iter && mesh >= cfg.threshold && n > 0 {
        let mut dirs: Vec<(usize, f64)> = (0..n).flat_map(|i| [(i, 1.0), (i, -1.0)]).collect();
        dirs.shuffle(&mut rng);
        let points: Vec<Vec<f64>> = dirs
            .iter()
            .map(|&(i, s)| {
                let mut p = x.clone();
                p[i] = (p[i] + s * mesh).clamp(0.0, 1.0);
                p
            })
            .collect();
        let values: Vec<f64> = par_map(&points, cfg.workers, |p| clean(objective(p)));
        evaluations += points.len();
        iterations += 1;
        let mut best = None;
        for (k, v) in values.iter().enumerate() {
            if *v > fx && best.is_none_or(|b: usize| *v > values[b]) {
                best = Some(k);
            }
        }
        let improved = best.is_some();
        if let Some(b) = best {
            x = points[b].clone();
            fx = values[b];
        } else {
            mesh *= 0.5;
        }
        if values.iter().any(|v| *v == f64::NEG_INFINITY) {
            log::debug!("iteration {iterations}: some poll points failed");
        }
        poll_points.extend(points);
        history.push(MadsIteration {
            iteration: iterations,
            mesh,
            best: fx,
            evaluations,
            improved,
        });
    }
    Ok(MadsResult {
        x_best: x,
        f_best: fx,
        f_initial,
        history,
        evaluations,
        iterations,
        poll_points,
    })
}

/// NPV of the decoded controls; failed simulations give minus infinity.
pub fn npv_objective<'a>(
    model: &'a CaseModel,
    econ: &'a EconomicParams,
    layout: &'a ControlLayout,
    sim: &'a SimOptions,
) -> impl Fn(&[f64]) -> f64 + Sync + Send + 'a {
    move |x: &[f64]| {
        let run = || -> Result<f64> {
            let controls = layout.controls(model, x)?;
            let r = Simulator::new(model, sim.clone())?.run(&controls)?;
            Ok(npv_all_drilled(&r, econ)?.npv)
        };
        match run() {
            Ok(v) => v,
            Err(e) => {
                log::warn!("objective evaluation failed: {e}");
                f64::NEG_INFINITY
            }
        }
    }
}

/// Uniform fractions and mid-range PVI in every period.
pub fn center_point(layout: &ControlLayout) -> Vec<f64> {
    vec![0.5; layout.n_opt()]
}

#[derive(Clone, Debug, Serialize)]
pub struct RestartSummary {
    pub runs: Vec<MadsResult>,
    pub median: f64,
    pub min: f64,
    pub max: f64,
    pub median_evaluations: f64,
    pub median_iterations: f64,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Cold-start runs: the first from the center point, the rest from seeded
/// random points; run `r` polls with seed `cfg.seed + r`.
pub fn mads_restarts(
    model: &CaseModel,
    econ: &EconomicParams,
    layout: &ControlLayout,
    sim: &SimOptions,
    cfg: &MadsConfig,
    restarts: usize,
) -> Result<RestartSummary> {
    if restarts == 0 {
        return Err(Error::Config("need at least one restart".into()));
    }
    let objective = npv_objective(model, econ, layout, sim);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut runs = Vec::with_capacity(restarts);
    for r in 0..restarts {
        let x0 = if r == 0 {
            center_point(layout)
        } else {
            (0..layout.n_opt()).map(|_| rng.gen::<f64>()).collect()
        };
        let run_cfg = MadsConfig {
            seed: cfg.seed + r as u64,
            ..cfg.clone()
        };
        runs.push(optimize(&objective, &x0, None, &run_cfg)?);
    }
    let best: Vec<f64> = runs.iter().map(|r| r.f_best).collect();
    Ok(RestartSummary {
        median: median(best.clone()),
        min: best.iter().copied().fold(f64::INFINITY, f64::min),
        max: best.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        median_evaluations: median(runs.iter().map(|r| r.evaluations as f64).collect()),
        median_iterations: median(runs.iter().map(|r| r.iterations as f64).collect()),
        runs,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct StMadsResult {
    pub st: StResult,
    pub st_npv: f64,
    pub mads: MadsResult,
    pub refined_npv: f64,
    pub layout: ControlLayout,
}

/// Two-step optimization on one period, replicated over all control
/// periods as the starting point of a pattern search.
pub fn st_then_mads(
    model: &CaseModel,
    econ: &EconomicParams,
    st_cfg: &StConfig,
    cfg: &MadsConfig,
    n_periods: usize,
) -> Result<StMadsResult> {
    let single = CaseModel {
        schedule: model.schedule.with_periods(1),
        ..model.clone()
    };
    let st = run_two_step_st(&single, econ, st_cfg).stage("st")?;
    let multi = CaseModel {
        schedule: model.schedule.with_periods(n_periods),
        ..model.clone()
    };
    let layout = ControlLayout::new(&multi, n_periods)?;
    let start = PeriodSetting {
        ratios: st.f_star.clone(),
        pvi: st.sweep.pvi_star,
    };
    let x0 = layout.encode(&layout.replicate(start))?;
    let objective = npv_objective(&multi, econ, &layout, &st_cfg.sweep.sim);
    let mads = optimize(&objective, &x0, Some(st.npv()), cfg).stage("mads")?;
    drop(objective);
    Ok(StMadsResult {
        st_npv: st.npv(),
        refined_npv: mads.f_best,
        st,
        mads,
        layout,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{FluidProperties, Grid, RockProperties, Schedule, WellSpec};
    use proptest::prelude::*;

    fn model(n_p: usize, n_i: usize) -> CaseModel {
        let grid = Grid::new(8, 8, 1, 60.0, 60.0, 30.0).unwrap();
        let n = grid.n_cells();
        let mut wells = Vec::new();
        for k in 0..n_p {
            wells.push(WellSpec::producer(&format!("P{k}"), 7, k, 500.0));
        }
        for k in 0..n_i {
            wells.push(WellSpec::injector(&format!("I{k}"), 0, k, 9000.0));
        }
        CaseModel::new(
            grid,
            RockProperties::uniform(n, 100.0, 0.2, 3e-6),
            FluidProperties::default(),
            wells,
            EconomicParams {
                well_cost: 1e5,
                discount_rate: 0.1,
                ..EconomicParams::default()
            },
            Schedule::new(720.0, 1),
            4000.0,
        )
        .unwrap()
    }

    #[test]
    fn layout_sizes() {
        let m = model(4, 2);
        assert_eq!(ControlLayout::new(&m, 4).unwrap().n_opt(), 20);
        assert_eq!(ControlLayout::new(&model(1, 1), 1).unwrap().n_opt(), 1);
    }

    #[test]
    fn center_is_uniform() {
        let m = model(3, 2);
        let layout = ControlLayout::new(&m, 2).unwrap();
        let d = layout.decode(&center_point(&layout)).unwrap();
        for p in &d {
            for (v, k) in p.ratios.f.iter().zip(&p.ratios.kinds) {
                let want = if *k == WellKind::Producer { 1.0 / 3.0 } else { 0.5 };
                assert!((v - want).abs() < 1e-12);
            }
            assert!((p.pvi - 1.625).abs() < 1e-12);
        }
        let uniform = PeriodSetting {
            ratios: RateRatios::uniform(&m.kinds()),
            pvi: 1.625,
        };
        let x = layout.encode(&layout.replicate(uniform)).unwrap();
        assert!(x.iter().all(|v| (v - 0.5).abs() < 1e-12));
    }

    proptest! {
        #[test]
        fn decode_is_feasible_and_round_trips(x in proptest::collection::vec(0.0..1.0f64, 12)) {
            let m = model(4, 3);
            let layout = ControlLayout::new(&m, 2).unwrap();
            let d = layout.decode(&x).unwrap();
            for p in &d {
                p.ratios.validate(1e-12).unwrap();
                prop_assert!(p.pvi >= 0.25 && p.pvi <= 3.0);
            }
            let back = layout.encode(&d).unwrap();
            for (a, b) in x.iter().zip(&back) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn concave_quadratic_maximizer() {
        let target = [0.3, 0.7, 0.55];
        let obj = |x: &[f64]| -x.iter().zip(&target).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        let cfg = MadsConfig {
            max_iter: 100,
            ..MadsConfig::default()
        };
        let r = optimize(obj, &[0.5, 0.5, 0.5], None, &cfg).unwrap();
        for (a, b) in r.x_best.iter().zip(&target) {
            assert!((a - b).abs() <= 0.02, "{a} vs {b}");
        }
        assert!(r.history.last().unwrap().mesh < 0.01);
        assert_eq!(r.evaluations, 1 + r.iterations * 6);
        assert!(r.history.windows(2).all(|w| w[1].best >= w[0].best));
        assert!(r.history.windows(2).all(|w| w[1].evaluations - w[0].evaluations == 6));
    }

    #[test]
    fn polls_are_reproducible_and_failures_ignored() {
        let obj = |x: &[f64]| if x[0] > 0.6 { f64::NAN } else { x[0] + x[1] };
        let cfg = MadsConfig {
            seed: 9,
            ..MadsConfig::default()
        };
        let a = optimize(obj, &[0.2, 0.2], None, &cfg).unwrap();
        let b = optimize(obj, &[0.2, 0.2], None, &cfg).unwrap();
        assert_eq!(a.poll_points, b.poll_points);
        assert!(a.x_best[0] <= 0.6);
        assert!(a.f_best.is_finite());
        let c = optimize(obj, &[0.2, 0.2], None, &MadsConfig { seed: 10, ..cfg }).unwrap();
        assert_ne!(a.poll_points, c.poll_points);
        assert!(a.iterations <= 15);
        let dir = tempfile::tempdir().unwrap();
        a.write_history_csv(&dir.path().join("h.csv")).unwrap();
    }

    #[test]
    fn known_start_is_not_reevaluated() {
        let r = optimize(|x: &[f64]| -x[0], &[0.5], Some(-0.5), &MadsConfig::default()).unwrap();
        assert_eq!(r.evaluations, 2 * r.iterations);
        assert!(r.f_best >= -0.5);
        assert_eq!(r.parallel_units(), r.iterations as f64);
    }

    #[test]
    fn chained_search_never_loses_value() {
        let mut m = model(2, 1);
        m.schedule = Schedule::new(720.0, 2);
        let st_cfg = StConfig {
            sweep: crate::st_sweep::SweepConfig {
                n_points: 3,
                ..Default::default()
            },
            ..StConfig::default()
        };
        let cfg = MadsConfig {
            max_iter: 2,
            ..MadsConfig::default()
        };
        let r = st_then_mads(&m, &m.economics, &st_cfg, &cfg, 2).unwrap();
        assert!(r.refined_npv >= r.st_npv);
        assert_eq!(r.mads.evaluations, 2 * r.layout.n_opt() * r.mads.iterations);
        assert_eq!(r.st.cost.full_evaluations, 3);
    }
}
