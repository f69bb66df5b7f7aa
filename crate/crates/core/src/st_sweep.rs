//! Field-rate sweep at fixed rate ratios and the two-step optimization
//! built on it: QP for the ratios, then a parallel scan over the field rate
//! with BHP-limit reallocation.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::econ::{npv_all_drilled, NpvBreakdown};
use crate::error::{Error, Result, StageExt};
use crate::model::{CaseModel, EconomicParams, WellKind};
use crate::parallel::par_map;
use crate::respmat::{build_response, load_or_build, BuildOptions, ResponseMatrices};
use crate::sim2p::{Controls, SimOptions, SimulationResult, Simulator, WellControl};
use crate::st_qp::{
    assemble_qp, solve_rate_ratio_qp, QpObjective, QpOptions, QpProblem, QpSolution, RateRatios, WeightMatrices,
};

#[derive(Clone, Debug)]
pub struct SweepConfig {
    pub pvi_lo: f64,
    pub pvi_hi: f64,
    pub n_points: usize,
    /// Re-grid with 11 points over one grid cell each side of the incumbent.
    pub refine: bool,
    pub workers: usize,
    /// Re-simulate points with early BHP switches after reallocating rates.
    pub reallocate: bool,
    pub sim: SimOptions,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            pvi_lo: 0.5,
            pvi_hi: 2.5,
            n_points: 41,
            refine: false,
            workers: 1,
            reallocate: true,
            sim: SimOptions::default(),
        }
    }
}

impl SweepConfig {
    pub fn grid(&self) -> Result<Vec<f64>> {
        if !(self.pvi_lo < self.pvi_hi) || !(self.pvi_lo > 0.0) {
            return Err(Error::Config(format!(
                "PVI range [{}, {}] must be positive and increasing",
                self.pvi_lo, self.pvi_hi
            )));
        }
        if self.n_points < 2 {
            return Err(Error::Config("a sweep needs at least 2 points".into()));
        }
        Ok(even_grid(self.pvi_lo, self.pvi_hi, self.n_points))
    }
}

fn even_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| {
            if i + 1 == n {
                hi
            } else {
                lo + (hi - lo) * i as f64 / (n - 1) as f64
            }
        })
        .collect()
}

/// Outcome of the simulations at one field rate.
#[derive(Clone, Debug, Serialize)]
pub struct SweepPoint {
    pub pvi: f64,
    /// Field reservoir rate (RB/day).
    pub q: f64,
    /// NPV per requested set of economics; NaN when the point failed.
    pub npv: Vec<f64>,
    pub breakdown: Option<NpvBreakdown>,
    pub valid: bool,
    /// Wells that switched to BHP during the initial transient.
    pub early_switches: Vec<usize>,
    pub reallocated: bool,
    /// Early switches remained after the single reallocation.
    pub residual_violation: bool,
    /// Wells on BHP control at the end of the accepted run.
    pub switched: Vec<usize>,
    /// Share of each well in its role's cumulative reservoir volume.
    pub achieved_fractions: Vec<f64>,
    pub full_evaluations: usize,
    /// Work in units of one full simulation at this point.
    pub work_units: f64,
    /// Pressure solves of the accepted run.
    pub pressure_solves: usize,
    pub error: Option<String>,
}

impl SweepPoint {
    pub fn violation(&self) -> bool {
        !self.early_switches.is_empty()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepResult {
    pub pvi: Vec<f64>,
    pub q: Vec<f64>,
    pub npv: Vec<f64>,
    pub violations: Vec<bool>,
    pub best: usize,
    pub pvi_star: f64,
    pub q_star: f64,
    pub npv_star: f64,
    pub on_boundary: bool,
    pub points: Vec<SweepPoint>,
    pub full_evaluations: usize,
    /// Batch depth of the sweep in full-simulation units.
    pub parallel_units: f64,
}

impl SweepResult {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "pvi,q,npv,violation,reallocated,valid")?;
        for p in &self.points {
            writeln!(
                f,
                "{},{},{},{},{},{}",
                p.pvi,
                p.q,
                p.npv[0],
                p.violation() as u8,
                p.reallocated as u8,
                p.valid as u8
            )?;
        }
        Ok(())
    }

    fn from_points(mut points: Vec<SweepPoint>, which: usize) -> Result<Self> {
        points.sort_by(|a, b| a.pvi.total_cmp(&b.pvi));
        points.dedup_by(|a, b| (a.pvi - b.pvi).abs() < 1e-12);
        let mut best: Option<usize> = None;
        for (i, p) in points.iter().enumerate() {
            if p.valid && best.is_none_or(|b| p.npv[which] > points[b].npv[which]) {
                best = Some(i);
            }
        }
        let best = best.ok_or_else(|| Error::Simulation {
            step: 0,
            reason: "every sweep point failed".into(),
        })?;
        let on_boundary = best == 0 || best + 1 == points.len();
        let full_evaluations = points.iter().map(|p| p.full_evaluations).sum();
        let parallel_units = points.iter().fold(0.0f64, |m, p| m.max(p.work_units));
        Ok(SweepResult {
            pvi: points.iter().map(|p| p.pvi).collect(),
            q: points.iter().map(|p| p.q).collect(),
            npv: points.iter().map(|p| p.npv[which]).collect(),
            violations: points.iter().map(|p| p.violation()).collect(),
            pvi_star: points[best].pvi,
            q_star: points[best].q,
            npv_star: points[best].npv[which],
            best,
            on_boundary,
            points,
            full_evaluations,
            parallel_units,
        })
    }
}

/// Controls placing `bhp_wells` on their limits and sharing `q` among the
/// remaining wells of each role in proportion to `f`.
pub fn controls_with_bhp_wells(model: &CaseModel, f: &RateRatios, q: f64, bhp_wells: &[usize]) -> Result<Controls> {
    let mut out = Vec::with_capacity(model.n_wells());
    let mut shares = f.f.clone();
    for kind in [WellKind::Producer, WellKind::Injector] {
        let idx: Vec<usize> = (0..f.f.len())
            .filter(|&k| f.kinds[k] == kind && !bhp_wells.contains(&k))
            .collect();
        if idx.is_empty() && f.kinds.contains(&kind) {
            return Err(Error::Infeasible(format!("every {kind:?} well is on BHP control")));
        }
        let sub: Vec<f64> = idx.iter().map(|&k| f.f[k]).collect();
        let new = reallocate_ratios(&sub)?;
        for (k, v) in idx.iter().zip(new) {
            shares[*k] = v;
        }
    }
    for (k, w) in model.wells.iter().enumerate() {
        if bhp_wells.contains(&k) {
            out.push(WellControl::Bhp(w.bhp_limit));
        } else {
            let b = match w.kind {
                WellKind::Producer => model.fluid.b_o,
                WellKind::Injector => model.fluid.b_w,
            };
            out.push(WellControl::Rate(shares[k] * q / b));
        }
    }
    Ok(Controls::constant(out))
}

/// Renormalizes the fractions of the wells still under rate control.
pub fn reallocate_ratios(f_sub: &[f64]) -> Result<Vec<f64>> {
    if f_sub.is_empty() {
        return Err(Error::Infeasible("no rate-controlled well left to reallocate to".into()));
    }
    let s: f64 = f_sub.iter().sum();
    if !(s > 0.0) {
        // zero-share survivors split the rate evenly
        return Ok(vec![1.0 / f_sub.len() as f64; f_sub.len()]);
    }
    Ok(f_sub.iter().map(|v| v / s).collect())
}

fn achieved_fractions(model: &CaseModel, r: &SimulationResult) -> Vec<f64> {
    let vol: Vec<f64> = (0..model.n_wells())
        .map(|k| match model.wells[k].kind {
            WellKind::Producer => r.cum_oil[k] * model.fluid.b_o + r.cum_water_prod[k] * model.fluid.b_w,
            WellKind::Injector => r.cum_water_inj[k] * model.fluid.b_w,
        })
        .collect();
    let total = |kind: WellKind| -> f64 {
        (0..vol.len()).filter(|&k| model.wells[k].kind == kind).map(|k| vol[k]).sum()
    };
    let (tp, ti) = (total(WellKind::Producer), total(WellKind::Injector));
    (0..vol.len())
        .map(|k| {
            let t = if model.wells[k].kind == WellKind::Producer { tp } else { ti };
            if t > 0.0 {
                vol[k] / t
            } else {
                0.0
            }
        })
        .collect()
}

/// Simulates one field rate, reallocating once on early BHP switches.
pub fn evaluate_point(
    model: &CaseModel,
    f: &RateRatios,
    pvi: f64,
    econs: &[EconomicParams],
    cfg: &SweepConfig,
) -> SweepPoint {
    let q = model.field_rate_for_pvi(pvi);
    let mut point = SweepPoint {
        pvi,
        q,
        npv: vec![f64::NAN; econs.len()],
        breakdown: None,
        valid: false,
        early_switches: Vec::new(),
        reallocated: false,
        residual_violation: false,
        switched: Vec::new(),
        achieved_fractions: Vec::new(),
        full_evaluations: 0,
        work_units: 0.0,
        pressure_solves: 0,
        error: None,
    };
    let run = |controls: &Controls, stop_early: bool| -> Result<SimulationResult> {
        let opts = SimOptions {
            stop_on_early_switch: stop_early,
            ..cfg.sim.clone()
        };
        Simulator::new(model, opts)?.run(controls)
    };
    let outcome = (|| -> Result<SimulationResult> {
        let controls = controls_with_bhp_wells(model, f, q, &[])?;
        let first = run(&controls, cfg.reallocate)?;
        point.full_evaluations += 1;
        point.early_switches = first.early_switches().map(|e| e.well).collect();
        point.early_switches.dedup();
        if !first.truncated {
            point.work_units = 1.0;
            return Ok(first);
        }
        let first_solves = first.pressure_solves as f64;
        match controls_with_bhp_wells(model, f, q, &point.early_switches) {
            Ok(c) => {
                let second = run(&c, false)?;
                point.full_evaluations += 1;
                point.reallocated = true;
                point.residual_violation = second.early_switches().next().is_some();
                point.work_units = 1.0 + first_solves / second.pressure_solves.max(1) as f64;
                Ok(second)
            }
            Err(e) => {
                log::warn!("pvi {pvi}: reallocation impossible ({e}), keeping rate targets");
                let full = run(&controls, false)?;
                point.full_evaluations += 1;
                point.residual_violation = true;
                point.work_units = 1.0 + first_solves / full.pressure_solves.max(1) as f64;
                Ok(full)
            }
        }
    })();
    match outcome {
        Ok(r) => {
            point.pressure_solves = r.pressure_solves;
            point.switched = r.final_state.switched.iter().enumerate().filter(|(_, s)| **s).map(|(k, _)| k).collect();
            point.achieved_fractions = achieved_fractions(model, &r);
            let mut ok = true;
            for (i, e) in econs.iter().enumerate() {
                match npv_all_drilled(&r, e) {
                    Ok(b) => {
                        point.npv[i] = b.npv;
                        if i == 0 {
                            point.breakdown = Some(b);
                        }
                    }
                    Err(err) => {
                        ok = false;
                        point.error = Some(err.to_string());
                    }
                }
            }
            point.valid = ok && point.npv.iter().all(|v| v.is_finite());
        }
        Err(e) => {
            log::warn!("sweep point pvi {pvi} failed: {e}");
            point.error = Some(e.to_string());
        }
    }
    point
}

/// Evaluates each PVI for every economics set; results are in input order.
pub fn sweep_points(
    model: &CaseModel,
    f: &RateRatios,
    pvis: &[f64],
    econs: &[EconomicParams],
    cfg: &SweepConfig,
) -> Vec<SweepPoint> {
    par_map(pvis, cfg.workers, |pvi| evaluate_point(model, f, *pvi, econs, cfg))
}

/// Scans the field rate at fixed ratios and keeps the most valuable point.
/// Ties go to the lower rate.
pub fn sweep_field_rate(
    model: &CaseModel,
    f_star: &RateRatios,
    econ: &EconomicParams,
    cfg: &SweepConfig,
) -> Result<SweepResult> {
    let grid = cfg.grid()?;
    let econs = std::slice::from_ref(econ);
    let mut points = sweep_points(model, f_star, &grid, econs, cfg);
    let mut result = SweepResult::from_points(points.clone(), 0)?;
    if cfg.refine {
        let h = grid[1] - grid[0];
        let c = result.pvi_star;
        let lo = (c - h).max(grid[0]);
        let hi = (c + h).min(grid[grid.len() - 1]);
        let extra: Vec<f64> = even_grid(lo, hi, 11)
            .into_iter()
            .filter(|p| !grid.iter().any(|g| (g - p).abs() < 1e-12))
            .collect();
        points.extend(sweep_points(model, f_star, &extra, econs, cfg));
        let depth = result.parallel_units;
        result = SweepResult::from_points(points, 0)?;
        result.parallel_units += depth;
    }
    if result.on_boundary {
        log::warn!(
            "best field rate is at the edge of the PVI range ({}); consider widening it",
            result.pvi_star
        );
    }
    Ok(result)
}

#[derive(Clone, Debug)]
pub struct StConfig {
    pub sweep: SweepConfig,
    pub build: BuildOptions,
    pub weights: Option<WeightMatrices>,
    pub objective: QpObjective,
    pub qp: QpOptions,
    /// Directory for cached response matrices.
    pub cache_dir: Option<PathBuf>,
}

impl Default for StConfig {
    fn default() -> Self {
        StConfig {
            sweep: SweepConfig::default(),
            build: BuildOptions::default(),
            weights: None,
            objective: QpObjective::SquaredVelocity,
            qp: QpOptions::default(),
            cache_dir: None,
        }
    }
}

/// Evaluation counts and costs of an optimization run.
#[derive(Clone, Debug, Default, Serialize)]
pub struct CostReport {
    pub full_evaluations: usize,
    pub pss_solves: usize,
    /// Sequential depth in full-simulation units with unlimited workers.
    pub parallel_units: f64,
    pub wall_seconds: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct StIteration {
    pub f: Vec<f64>,
    pub caps: Vec<f64>,
    pub q_star: f64,
    pub npv_star: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct StResult {
    pub f_star: RateRatios,
    pub qp_objective: f64,
    pub kkt_residual: f64,
    pub sweep: SweepResult,
    pub reallocation_applied: bool,
    pub iterations: Vec<StIteration>,
    pub cost: CostReport,
}

impl StResult {
    pub fn npv(&self) -> f64 {
        self.sweep.npv_star
    }

    /// Signed reservoir rates at the best point.
    pub fn best_rates(&self) -> Vec<f64> {
        self.f_star.signed_rates(self.sweep.q_star)
    }
}

fn response(model: &CaseModel, cfg: &StConfig) -> Result<ResponseMatrices> {
    match &cfg.cache_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            Ok(load_or_build(model, dir, &cfg.build)?.0)
        }
        None => build_response(model, &cfg.build),
    }
}

/// Response matrices, QP problem and the unconstrained-by-caps solution.
pub fn solve_ratios(model: &CaseModel, cfg: &StConfig) -> Result<(QpProblem, QpSolution, f64)> {
    let t0 = Instant::now();
    let resp = response(model, cfg).stage("response")?;
    let weights = cfg
        .weights
        .clone()
        .unwrap_or_else(|| WeightMatrices::ones(model.grid.n_cells()));
    let problem = assemble_qp(&resp, &weights, cfg.objective).stage("qp")?;
    let sol = solve_rate_ratio_qp(&problem, None, &cfg.qp).stage("qp")?;
    Ok((problem, sol, t0.elapsed().as_secs_f64()))
}

/// Cost of the concurrent single-phase solves as a fraction of one sweep
/// simulation, counting one linear solve against the run's pressure solves.
fn pss_units(sweep: &SweepResult) -> f64 {
    let fewest = sweep
        .points
        .iter()
        .filter(|p| p.valid && p.pressure_solves > 0)
        .map(|p| p.pressure_solves)
        .min();
    fewest.map_or(0.0, |n| 1.0 / n as f64)
}

/// Optimal ratios from the QP, then the best field rate from a sweep.
pub fn run_two_step_st(model: &CaseModel, econ: &EconomicParams, cfg: &StConfig) -> Result<StResult> {
    let t0 = Instant::now();
    let (_, sol, _) = solve_ratios(model, cfg)?;
    let sweep = sweep_field_rate(model, &sol.ratios, econ, &cfg.sweep).stage("sweep")?;
    let reallocation_applied = sweep.points.iter().any(|p| p.reallocated);
    let cost = CostReport {
        full_evaluations: sweep.full_evaluations,
        pss_solves: model.n_wells(),
        parallel_units: sweep.parallel_units + pss_units(&sweep),
        wall_seconds: t0.elapsed().as_secs_f64(),
    };
    Ok(StResult {
        iterations: vec![StIteration {
            f: sol.ratios.f.clone(),
            caps: vec![1.0; model.n_wells()],
            q_star: sweep.q_star,
            npv_star: sweep.npv_star,
        }],
        f_star: sol.ratios,
        qp_objective: sol.objective,
        kkt_residual: sol.kkt_residual,
        sweep,
        reallocation_applied,
        cost,
    })
}

/// Repeats the two-step method with achieved fractions of BHP-limited wells
/// as upper bounds on their ratios, until no new well hits its limit.
pub fn run_iterative_bhp_st(
    model: &CaseModel,
    econ: &EconomicParams,
    cfg: &StConfig,
    max_iters: usize,
) -> Result<StResult> {
    let t0 = Instant::now();
    let (problem, sol, _) = solve_ratios(model, cfg)?;
    let n = model.n_wells();
    let mut caps = vec![1.0; n];
    let mut capped = vec![false; n];
    let mut sweep = sweep_field_rate(model, &sol.ratios, econ, &cfg.sweep).stage("sweep")?;
    let mut cost = CostReport {
        full_evaluations: sweep.full_evaluations,
        pss_solves: n,
        parallel_units: sweep.parallel_units + pss_units(&sweep),
        wall_seconds: 0.0,
    };
    let mut iterations = vec![StIteration {
        f: sol.ratios.f.clone(),
        caps: caps.clone(),
        q_star: sweep.q_star,
        npv_star: sweep.npv_star,
    }];
    let mut best = (sol.clone(), sweep.clone());
    let mut current_sweep = sweep;
    for it in 1..max_iters.max(1) {
        let point = &current_sweep.points[current_sweep.best];
        let new: Vec<usize> = point.switched.iter().copied().filter(|k| !capped[*k]).collect();
        if new.is_empty() {
            break;
        }
        for k in new {
            capped[k] = true;
            caps[k] = caps[k].min(point.achieved_fractions[k]);
        }
        let sol = match solve_rate_ratio_qp(&problem, Some(&caps), &cfg.qp) {
            Ok(s) => s,
            Err(e) => {
                log::warn!("iteration {it}: capped QP failed ({e}); keeping the best iterate");
                break;
            }
        };
        sweep = sweep_field_rate(model, &sol.ratios, econ, &cfg.sweep).stage("sweep")?;
        cost.full_evaluations += sweep.full_evaluations;
        cost.parallel_units += sweep.parallel_units;
        iterations.push(StIteration {
            f: sol.ratios.f.clone(),
            caps: caps.clone(),
            q_star: sweep.q_star,
            npv_star: sweep.npv_star,
        });
        if sweep.npv_star > best.1.npv_star {
            best = (sol.clone(), sweep.clone());
        }
        current_sweep = sweep;
        if it + 1 == max_iters {
            log::warn!("iterative BHP bounds stopped at {max_iters} iterations");
        }
    }
    cost.wall_seconds = t0.elapsed().as_secs_f64();
    let (sol, sweep) = best;
    Ok(StResult {
        f_star: sol.ratios,
        qp_objective: sol.objective,
        kkt_residual: sol.kkt_residual,
        reallocation_applied: sweep.points.iter().any(|p| p.reallocated),
        sweep,
        iterations,
        cost,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct BaseCase {
    pub pvi: f64,
    pub q: f64,
    pub npv: f64,
}

/// NPV with equal rates per role at each PVI.
pub fn equal_rate_base_cases(
    model: &CaseModel,
    econ: &EconomicParams,
    pvi_list: &[f64],
    cfg: &SweepConfig,
) -> Result<Vec<BaseCase>> {
    if pvi_list.is_empty() {
        return Err(Error::Config("no PVI values given".into()));
    }
    let f = RateRatios::uniform(&model.kinds());
    let plain = SweepConfig {
        reallocate: false,
        ..cfg.clone()
    };
    let points = sweep_points(model, &f, pvi_list, std::slice::from_ref(econ), &plain);
    points
        .into_iter()
        .map(|p| {
            if p.valid {
                Ok(BaseCase {
                    pvi: p.pvi,
                    q: p.q,
                    npv: p.npv[0],
                })
            } else {
                Err(Error::Simulation {
                    step: 0,
                    reason: p.error.unwrap_or_else(|| "invalid base case".into()),
                })
            }
        })
        .collect()
}

/// Ranks with ties sharing their mean rank.
fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|a, b| v[*a].total_cmp(&v[*b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let mean = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            r[idx[k]] = mean;
        }
        i = j + 1;
    }
    r
}

pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for i in 0..a.len() {
        cov += (ra[i] - ma) * (rb[i] - mb);
        va += (ra[i] - ma).powi(2);
        vb += (rb[i] - mb).powi(2);
    }
    cov / (va * vb).sqrt()
}

/// Uniformly distributed fractions per role.
pub fn random_ratios(kinds: &[WellKind], rng: &mut ChaCha8Rng) -> RateRatios {
    use rand::Rng;
    let mut f: Vec<f64> = kinds.iter().map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
    for kind in [WellKind::Producer, WellKind::Injector] {
        let s: f64 = (0..f.len()).filter(|&k| kinds[k] == kind).map(|k| f[k]).sum();
        for k in 0..f.len() {
            if kinds[k] == kind {
                f[k] /= s;
            }
        }
    }
    RateRatios {
        f,
        kinds: kinds.to_vec(),
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CorrelationRun {
    pub discount_rate: f64,
    /// Best NPV over the sweep for each ratio vector.
    pub npv: Vec<f64>,
    pub spearman: f64,
    pub npv_f_star: f64,
    pub max_npv: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct CorrelationStudy {
    /// First entry is the QP optimum, the rest are sampled.
    pub ratios: Vec<Vec<f64>>,
    pub squared_velocity: Vec<f64>,
    pub runs: Vec<CorrelationRun>,
}

/// Compares the squared-velocity objective with swept NPV over the QP
/// optimum and `n_random` random ratio vectors. The same
/// simulations serve every discount rate.
pub fn velocity_npv_correlation(
    model: &CaseModel,
    econ: &EconomicParams,
    discount_rates: &[f64],
    n_random: usize,
    seed: u64,
    cfg: &StConfig,
) -> Result<CorrelationStudy> {
    let (problem, sol, _) = solve_ratios(model, cfg)?;
    let kinds = model.kinds();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ratios = vec![sol.ratios.clone()];
    for _ in 0..n_random {
        ratios.push(random_ratios(&kinds, &mut rng));
    }
    let econs: Vec<EconomicParams> = discount_rates.iter().map(|d| econ.clone().with_discount(*d)).collect();
    let grid = cfg.sweep.grid()?;
    let jobs: Vec<(usize, f64)> = (0..ratios.len())
        .flat_map(|r| grid.iter().map(move |p| (r, *p)))
        .collect();
    let serial = SweepConfig {
        workers: 1,
        ..cfg.sweep.clone()
    };
    let points = par_map(&jobs, cfg.sweep.workers, |(r, pvi)| {
        evaluate_point(model, &ratios[*r], *pvi, &econs, &serial)
    });
    let squared_velocity: Vec<f64> = ratios.iter().map(|r| problem.objective(&r.f)).collect();
    let mut runs = Vec::new();
    for (d, disc) in discount_rates.iter().enumerate() {
        let npv: Vec<f64> = (0..ratios.len())
            .map(|r| {
                points[r * grid.len()..(r + 1) * grid.len()]
                    .iter()
                    .filter(|p| p.valid)
                    .map(|p| p.npv[d])
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect();
        let max_npv = npv.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        runs.push(CorrelationRun {
            discount_rate: *disc,
            spearman: spearman(&squared_velocity, &npv),
            npv_f_star: npv[0],
            max_npv,
            npv,
        });
    }
    Ok(CorrelationStudy {
        ratios: ratios.into_iter().map(|r| r.f).collect(),
        squared_velocity,
        runs,
    })
}
