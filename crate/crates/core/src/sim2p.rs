//! Two-phase oil-water simulator: implicit pressure, explicit saturation.
//!
//! Pressure is solved with two-point fluxes, per-phase upstream mobilities
//! and a compressibility accumulation term. Saturation is then advanced in
//! CFL-limited substeps with the face total fluxes held fixed. Wells are
//! Peaceman completions over the full column; rate wells carry their BHP as
//! an extra unknown. Gravity enters through phase potentials when `nz > 1`.
//!
//! Surface rates are STB/day: producers are controlled by liquid rate,
//! injectors by water rate. Internally all rates are reservoir volumes with
//! positive withdrawal.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::disc::Discretization;
use crate::error::{Error, Result};
use crate::linalg::{SolverOptions, SymmetricSystem};
use crate::model::{CaseModel, WellKind, GRAVITY_PSI};

/// Requested setting of one well over a control period.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum WellControl {
    /// Surface rate (STB/day): liquid for producers, water for injectors.
    Rate(f64),
    /// Bottom-hole pressure at the top completion (psi).
    Bhp(f64),
    Shut,
}

/// Per-period, per-well settings. A single period applies to the whole run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Controls {
    pub periods: Vec<Vec<WellControl>>,
}

impl Controls {
    pub fn constant(settings: Vec<WellControl>) -> Self {
        Controls {
            periods: vec![settings],
        }
    }

    /// Rate controls from signed reservoir rates (positive withdrawal):
    /// injectors `-q / B_w`, producers `q / B_o`.
    pub fn from_reservoir_rates(model: &CaseModel, q: &[f64]) -> Self {
        Controls::constant(reservoir_to_surface(model, q))
    }

    /// One set of signed reservoir rates per period.
    pub fn from_period_rates(model: &CaseModel, periods: &[Vec<f64>]) -> Self {
        Controls {
            periods: periods.iter().map(|q| reservoir_to_surface(model, q)).collect(),
        }
    }

    fn validate(&self, model: &CaseModel) -> Result<()> {
        let n_p = self.periods.len();
        if n_p != 1 && n_p != model.schedule.n_control_periods {
            return Err(Error::Config(format!(
                "controls cover {n_p} periods, schedule has {}",
                model.schedule.n_control_periods
            )));
        }
        for settings in &self.periods {
            if settings.len() != model.n_wells() {
                return Err(Error::Dimension {
                    expected: model.n_wells(),
                    got: settings.len(),
                });
            }
            for (c, w) in settings.iter().zip(&model.wells) {
                if let WellControl::Rate(r) = c {
                    if !(*r >= 0.0) || !r.is_finite() {
                        return Err(Error::InvalidWell {
                            well: w.name.clone(),
                            reason: format!("rate {r} must be finite and >= 0"),
                        });
                    }
                }
            }
        }
        Ok(())
    }
}

fn reservoir_to_surface(model: &CaseModel, q: &[f64]) -> Vec<WellControl> {
    q.iter()
        .zip(&model.wells)
        .map(|(q, w)| match w.kind {
            WellKind::Producer => WellControl::Rate(q.max(0.0) / model.fluid.b_o),
            WellKind::Injector => WellControl::Rate((-q).max(0.0) / model.fluid.b_w),
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct SimOptions {
    /// Target largest saturation change per pressure step.
    pub target_ds: f64,
    pub dt_growth: f64,
    pub dt_cut: f64,
    pub initial_dt: f64,
    pub max_dt: f64,
    pub min_dt: f64,
    /// Steps counted as the initial transient for switch classification.
    pub transient_steps: usize,
    /// Courant number for saturation substeps.
    pub cfl: f64,
    pub bhp_switching: bool,
    /// End the run after the transient if any well switched during it.
    pub stop_on_early_switch: bool,
    /// Times at which saturation snapshots are stored; they also become step ends.
    pub snapshot_times: Vec<f64>,
    pub solver: SolverOptions,
    pub max_steps: usize,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            target_ds: 0.05,
            dt_growth: 1.5,
            dt_cut: 0.5,
            initial_dt: 1.0,
            max_dt: 120.0,
            min_dt: 1e-6,
            transient_steps: 5,
            cfl: 0.9,
            bhp_switching: true,
            stop_on_early_switch: false,
            snapshot_times: Vec::new(),
            solver: SolverOptions::default(),
            max_steps: 100_000,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum ActiveControl {
    Rate(f64),
    Bhp(f64),
    Shut,
}

#[derive(Clone, Debug)]
pub struct SimState {
    pub p: Vec<f64>,
    pub s_w: Vec<f64>,
    pub t: f64,
    pub bhp: Vec<f64>,
    pub control: Vec<ActiveControl>,
    /// Wells permanently moved to BHP control.
    pub switched: Vec<bool>,
}

/// Averages over one accepted time step.
#[derive(Clone, Debug, Serialize)]
pub struct StepRecord {
    pub t_start: f64,
    pub t_end: f64,
    pub dt: f64,
    /// Oil production per well (STB/day).
    pub q_o: Vec<f64>,
    /// Water production per well (STB/day).
    pub q_wp: Vec<f64>,
    /// Water injection per well (STB/day).
    pub q_wi: Vec<f64>,
    pub bhp: Vec<f64>,
    /// Field injection and production in reservoir volumes (RB/day).
    pub inj_res: f64,
    pub prod_res: f64,
    pub substeps: usize,
    /// `|inj - prod - change in place| / pore volume` for total fluid.
    pub mb_total: f64,
    /// Same for water.
    pub mb_water: f64,
}

impl StepRecord {
    /// Voidage replacement ratio of the step.
    pub fn vrr(&self) -> f64 {
        if self.prod_res > 0.0 {
            self.inj_res / self.prod_res
        } else {
            f64::INFINITY
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SwitchEvent {
    pub step: usize,
    pub time: f64,
    pub well: usize,
    /// BHP the rate target would have required.
    pub implied_bhp: f64,
    /// Detected within the initial transient.
    pub early: bool,
    /// The well's share of its role's target rate when it switched.
    pub ratio: f64,
}

#[derive(Clone, Debug)]
pub struct SimulationResult {
    pub well_names: Vec<String>,
    pub kinds: Vec<WellKind>,
    pub steps: Vec<StepRecord>,
    /// Cumulative volumes per well (STB).
    pub cum_oil: Vec<f64>,
    pub cum_water_prod: Vec<f64>,
    pub cum_water_inj: Vec<f64>,
    pub switches: Vec<SwitchEvent>,
    pub final_state: SimState,
    pub snapshots: Vec<(f64, Vec<f64>)>,
    pub pressure_solves: usize,
    /// Stopped after the transient because of an early switch.
    pub truncated: bool,
}

impl SimulationResult {
    pub fn max_mb_error(&self) -> f64 {
        self.steps
            .iter()
            .fold(0.0f64, |m, s| m.max(s.mb_total).max(s.mb_water))
    }

    pub fn early_switches(&self) -> impl Iterator<Item = &SwitchEvent> {
        self.switches.iter().filter(|e| e.early)
    }

    pub fn field_oil(&self) -> f64 {
        self.cum_oil.iter().sum()
    }

    /// One row per step: time, dt, then per-well q_o, q_wp, q_wi, bhp.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        let mut header = vec!["t_start".to_string(), "t_end".into(), "dt".into()];
        for name in &self.well_names {
            for col in ["q_o", "q_wp", "q_wi", "bhp"] {
                header.push(format!("{name}_{col}"));
            }
        }
        header.push("vrr".into());
        writeln!(f, "{}", header.join(","))?;
        for s in &self.steps {
            let mut row = vec![s.t_start.to_string(), s.t_end.to_string(), s.dt.to_string()];
            for w in 0..self.well_names.len() {
                for v in [s.q_o[w], s.q_wp[w], s.q_wi[w], s.bhp[w]] {
                    row.push(v.to_string());
                }
            }
            row.push(s.vrr().to_string());
            writeln!(f, "{}", row.join(","))?;
        }
        Ok(())
    }

    /// Writes each snapshot as `cell,s_w` into `dir/snapshot_<t>.csv`.
    pub fn write_snapshots(&self, dir: &Path) -> Result<()> {
        for (t, s) in &self.snapshots {
            let mut f = std::io::BufWriter::new(std::fs::File::create(dir.join(format!("snapshot_{t}.csv")))?);
            writeln!(f, "cell,s_w")?;
            for (c, v) in s.iter().enumerate() {
                writeln!(f, "{c},{v}")?;
            }
        }
        Ok(())
    }
}

/// Outcome of the pressure stage of one step.
struct PressureSolution {
    x: Vec<f64>,
    /// Reservoir withdrawal per completion.
    well_q: Vec<Vec<f64>>,
    face_ft: Vec<f64>,
    ct: Vec<f64>,
    control: Vec<ActiveControl>,
    new_switches: Vec<(usize, f64, f64)>,
}

pub struct Simulator<'a> {
    model: &'a CaseModel,
    disc: Discretization,
    opts: SimOptions,
    gamma: f64,
    max_dfw: f64,
    max_dgrav: f64,
}

impl<'a> Simulator<'a> {
    pub fn new(model: &'a CaseModel, opts: SimOptions) -> Result<Self> {
        let disc = Discretization::new(model)?;
        let gamma = if model.grid.has_gravity() { GRAVITY_PSI } else { 0.0 };
        let fluid = &model.fluid;
        let n = 2000;
        let mut max_dfw = 0.0f64;
        let mut max_dgrav = 0.0f64;
        let grav = |s: f64| {
            let (lw, lo) = fluid.mobilities(s);
            if lw + lo > 0.0 {
                lw * lo / (lw + lo)
            } else {
                0.0
            }
        };
        for k in 0..n {
            let (a, b) = (k as f64 / n as f64, (k + 1) as f64 / n as f64);
            max_dfw = max_dfw.max((fluid.fractional_flow(b) - fluid.fractional_flow(a)).abs() * n as f64);
            max_dgrav = max_dgrav.max((grav(b) - grav(a)).abs() * n as f64);
        }
        Ok(Simulator {
            model,
            disc,
            opts,
            gamma,
            max_dfw: max_dfw * 1.05,
            max_dgrav: max_dgrav * 1.05,
        })
    }

    /// Hydrostatic pressure at the initial saturation.
    pub fn initial_state(&self) -> SimState {
        let m = self.model;
        let s0 = m.fluid.initial_water();
        let (lw, lo) = m.fluid.mobilities(s0);
        let rho = if lw + lo > 0.0 {
            (lw * m.fluid.rho_w + lo * m.fluid.rho_o) / (lw + lo)
        } else {
            0.5 * (m.fluid.rho_w + m.fluid.rho_o)
        };
        let p: Vec<f64> = (0..self.disc.n_cells)
            .map(|c| m.initial_pressure + self.gamma * rho * (m.grid.cell_depth(c) - m.grid.datum_depth))
            .collect();
        let bhp = self.disc.completions.iter().map(|c| p[c[0].cell]).collect();
        SimState {
            s_w: vec![s0; self.disc.n_cells],
            p,
            t: 0.0,
            bhp,
            control: vec![ActiveControl::Shut; self.disc.n_wells],
            switched: vec![false; self.disc.n_wells],
        }
    }

    fn requested(&self, controls: &Controls, t: f64) -> Vec<WellControl> {
        if controls.periods.len() == 1 {
            return controls.periods[0].clone();
        }
        let ends = self.model.schedule.period_ends();
        let k = ends.iter().position(|e| t < e - 1e-9).unwrap_or(ends.len() - 1);
        controls.periods[k].clone()
    }

    fn active(&self, state: &SimState, requested: &[WellControl]) -> Vec<ActiveControl> {
        requested
            .iter()
            .enumerate()
            .map(|(w, c)| {
                if state.switched[w] {
                    return ActiveControl::Bhp(self.model.wells[w].bhp_limit);
                }
                match *c {
                    WellControl::Rate(r) if r > 0.0 => ActiveControl::Rate(r),
                    WellControl::Rate(_) | WellControl::Shut => ActiveControl::Shut,
                    WellControl::Bhp(b) => ActiveControl::Bhp(b),
                }
            })
            .collect()
    }

    pub fn run(&self, controls: &Controls) -> Result<SimulationResult> {
        controls.validate(self.model)?;
        let m = self.model;
        let n_w = self.disc.n_wells;
        let mut boundaries = m.schedule.boundaries();
        let horizon = m.schedule.horizon;
        for t in &self.opts.snapshot_times {
            if *t > 0.0 && *t < horizon {
                boundaries.push(*t);
            }
        }
        boundaries.sort_by(f64::total_cmp);
        boundaries.dedup_by(|a, b| (*a - *b).abs() < 1e-9);

        let mut state = self.initial_state();
        let mut result = SimulationResult {
            well_names: m.wells.iter().map(|w| w.name.clone()).collect(),
            kinds: m.kinds(),
            steps: Vec::new(),
            cum_oil: vec![0.0; n_w],
            cum_water_prod: vec![0.0; n_w],
            cum_water_inj: vec![0.0; n_w],
            switches: Vec::new(),
            final_state: state.clone(),
            snapshots: Vec::new(),
            pressure_solves: 0,
            truncated: false,
        };
        let mut a = self.disc.pattern.clone();
        let mut dt = self.opts.initial_dt.min(self.opts.max_dt);
        let mut last_rate: Option<Vec<f64>> = None;
        for &end in &boundaries {
            while end - state.t > 1e-9 * horizon.max(1.0) {
                if result.steps.len() >= self.opts.max_steps {
                    return Err(Error::Simulation {
                        step: result.steps.len(),
                        reason: format!("exceeded {} time steps", self.opts.max_steps),
                    });
                }
                let remaining = end - state.t;
                let mut dt_try = dt.min(remaining);
                if remaining - dt_try < 0.1 * dt_try {
                    dt_try = remaining;
                }
                let step = result.steps.len();
                let requested = self.requested(controls, state.t);
                let guess: Option<Vec<f64>> = last_rate.as_ref().map(|r| r.iter().map(|v| v * dt_try).collect());
                let (pressure, solves) = self
                    .solve_pressure(&state, &requested, dt_try, guess.as_deref(), &mut a)
                    .map_err(|e| Error::Simulation {
                        step,
                        reason: e.to_string(),
                    })?;
                result.pressure_solves += solves;
                let (new_state, record, max_ds) = self.transport(&state, &pressure, dt_try);
                if max_ds > 2.0 * self.opts.target_ds && dt_try > self.opts.min_dt {
                    dt = dt_try * self.opts.dt_cut;
                    continue;
                }
                let early = step < self.opts.transient_steps;
                for &(w, implied, ratio) in &pressure.new_switches {
                    log::debug!("well {} switched to BHP at step {step}", m.wells[w].name);
                    result.switches.push(SwitchEvent {
                        step,
                        time: state.t,
                        well: w,
                        implied_bhp: implied,
                        early,
                        ratio,
                    });
                }
                for w in 0..n_w {
                    result.cum_oil[w] += record.q_o[w] * record.dt;
                    result.cum_water_prod[w] += record.q_wp[w] * record.dt;
                    result.cum_water_inj[w] += record.q_wi[w] * record.dt;
                }
                result.steps.push(record);
                let x0 = state.p.iter().chain(&state.bhp);
                last_rate = Some(pressure.x.iter().zip(x0).map(|(x, p)| (x - p) / dt_try).collect());
                state = new_state;
                if (state.t - end).abs() <= 1e-9 * horizon.max(1.0) {
                    state.t = end;
                }
                if self.opts.snapshot_times.iter().any(|t| (t - state.t).abs() < 1e-9 * horizon.max(1.0)) {
                    result.snapshots.push((state.t, state.s_w.clone()));
                }
                let factor = if max_ds > 0.0 {
                    (self.opts.target_ds / max_ds).clamp(self.opts.dt_cut, self.opts.dt_growth)
                } else {
                    self.opts.dt_growth
                };
                dt = (dt_try * factor).clamp(self.opts.min_dt, self.opts.max_dt);
                if self.opts.stop_on_early_switch
                    && result.steps.len() == self.opts.transient_steps
                    && result.switches.iter().any(|e| e.early)
                {
                    result.truncated = true;
                    result.final_state = state;
                    return Ok(result);
                }
            }
        }
        result.final_state = state;
        Ok(result)
    }

    /// Mobility-weighted mixture density of a producer's completions.
    fn well_density(&self, w: usize, s: &[f64]) -> f64 {
        let f = &self.model.fluid;
        if self.model.wells[w].kind == WellKind::Injector {
            return f.rho_w;
        }
        let (mut num, mut den) = (0.0, 0.0);
        for c in &self.disc.completions[w] {
            let (lw, lo) = f.mobilities(s[c.cell]);
            num += c.wi * (lw * f.rho_w + lo * f.rho_o);
            den += c.wi * (lw + lo);
        }
        if den > 0.0 {
            num / den
        } else {
            f.rho_o
        }
    }

    fn solve_pressure(
        &self,
        state: &SimState,
        requested: &[WellControl],
        dt: f64,
        guess: Option<&[f64]>,
        a: &mut SymmetricSystem,
    ) -> Result<(PressureSolution, usize)> {
        let m = self.model;
        let f = &m.fluid;
        let n = self.disc.n_cells;
        let n_w = self.disc.n_wells;
        let g = self.gamma;
        let s = &state.s_w;
        let mob: Vec<(f64, f64)> = s.iter().map(|v| f.mobilities(*v)).collect();
        let ct: Vec<f64> = s
            .iter()
            .map(|v| m.rock.compressibility + f.fluid_compressibility(*v))
            .collect();

        // upstream phase mobilities from the start-of-step potentials
        let nf = self.disc.faces.len();
        let mut face_lt = vec![0.0; nf];
        let mut face_grav = vec![0.0; nf];
        for (k, face) in self.disc.faces.iter().enumerate() {
            let dp = state.p[face.a] - state.p[face.b];
            let dz = self.disc.face_dz[k];
            let dphi_w = dp + g * f.rho_w * dz;
            let dphi_o = dp + g * f.rho_o * dz;
            let lw = if dphi_w >= 0.0 { mob[face.a].0 } else { mob[face.b].0 };
            let lo = if dphi_o >= 0.0 { mob[face.a].1 } else { mob[face.b].1 };
            face_lt[k] = lw + lo;
            face_grav[k] = g * (lw * f.rho_w + lo * f.rho_o) * dz;
        }
        let heads: Vec<Vec<f64>> = (0..n_w)
            .map(|w| {
                let rho = self.well_density(w, s);
                self.disc.completions[w].iter().map(|c| g * rho * c.dh).collect()
            })
            .collect();
        let well_lt: Vec<Vec<f64>> = self
            .disc
            .completions
            .iter()
            .map(|comp| comp.iter().map(|c| c.wi * (mob[c.cell].0 + mob[c.cell].1)).collect())
            .collect();

        let mut control = self.active(state, requested);
        let mut switched = state.switched.clone();
        let mut new_switches = Vec::new();
        let mut shut_now = vec![false; n_w];
        let mut x0 = state.p.clone();
        x0.extend_from_slice(&state.bhp);
        let mut solves = 0;
        let mut dx = match guess {
            Some(g) if g.len() == n + n_w => g.to_vec(),
            _ => vec![0.0; n + n_w],
        };
        loop {
            a.clear();
            let mut b = vec![0.0; n + n_w];
            for (k, face) in self.disc.faces.iter().enumerate() {
                let t = self.disc.trans[k];
                a.add_conductance(k, face.a, face.b, t * face_lt[k]);
                b[face.a] -= t * face_grav[k];
                b[face.b] += t * face_grav[k];
            }
            let mut pinned = Vec::new();
            for w in 0..n_w {
                let ctl = if shut_now[w] { ActiveControl::Shut } else { control[w] };
                let node = n + w;
                if ctl == ActiveControl::Shut {
                    a.add_diag(node, 1.0);
                    continue;
                }
                let mut head_sum = 0.0;
                for (j, c) in self.disc.completions[w].iter().enumerate() {
                    let cond = well_lt[w][j];
                    a.add_conductance(c.pair, c.cell, node, cond);
                    b[c.cell] += cond * heads[w][j];
                    head_sum += cond * heads[w][j];
                }
                match ctl {
                    ActiveControl::Rate(r) => {
                        b[node] = -self.reservoir_rate(w, r, s) - head_sum;
                    }
                    ActiveControl::Bhp(p) => {
                        b[node] = -head_sum;
                        pinned.push((node, p));
                    }
                    ActiveControl::Shut => unreachable!(),
                }
            }
            // increment form: b - A x0, then accumulation
            let mut ax = vec![0.0; n + n_w];
            a.matvec(&x0, &mut ax);
            for i in 0..n + n_w {
                b[i] -= ax[i];
            }
            for w in 0..n_w {
                if shut_now[w] || control[w] == ActiveControl::Shut {
                    b[n + w] = 0.0;
                }
            }
            for c in 0..n {
                a.add_diag(c, self.disc.pv[c] * ct[c] / dt);
            }
            for &(node, p) in &pinned {
                a.pin(node, p - x0[node], &mut b);
            }
            let level = (0..n).map(|i| (a.get(i, i) * x0[i]).powi(2)).sum::<f64>().sqrt();
            let opts = SolverOptions {
                atol: self.opts.solver.atol.max(1e-14 * level),
                ..self.opts.solver
            };
            a.solve(&b, &mut dx, &opts)?;
            solves += 1;
            let mut x: Vec<f64> = x0.iter().zip(&dx).map(|(x, d)| x + d).collect();
            for w in 0..n_w {
                if shut_now[w] || control[w] == ActiveControl::Shut {
                    x[n + w] = x[self.disc.completions[w][0].cell];
                }
            }

            let mut changed = false;
            if self.opts.bhp_switching {
                for w in 0..n_w {
                    if let ActiveControl::Rate(_) = control[w] {
                        let limit = m.wells[w].bhp_limit;
                        let bhp = x[n + w];
                        let violated = match m.wells[w].kind {
                            WellKind::Producer => bhp < limit,
                            WellKind::Injector => bhp > limit,
                        };
                        if violated {
                            new_switches.push((w, bhp, self.target_share(w, &control, s)));
                            control[w] = ActiveControl::Bhp(limit);
                            switched[w] = true;
                            changed = true;
                        }
                    }
                }
            }
            let well_q = self.completion_rates(&x, &heads, &well_lt, &control, &shut_now);
            for w in 0..n_w {
                if let ActiveControl::Bhp(_) = control[w] {
                    if shut_now[w] {
                        continue;
                    }
                    let total: f64 = well_q[w].iter().sum();
                    let wrong_sign = match m.wells[w].kind {
                        WellKind::Producer => total < 0.0,
                        WellKind::Injector => total > 0.0,
                    };
                    if wrong_sign {
                        shut_now[w] = true;
                        changed = true;
                    }
                }
            }
            if changed && solves <= 2 * n_w + 2 {
                continue;
            }
            let well_q = self.completion_rates(&x, &heads, &well_lt, &control, &shut_now);
            let mut face_ft = vec![0.0; nf];
            for (k, face) in self.disc.faces.iter().enumerate() {
                let t = self.disc.trans[k];
                face_ft[k] = t * (face_lt[k] * (x[face.a] - x[face.b]) + face_grav[k]);
            }
            for w in 0..n_w {
                if shut_now[w] {
                    control[w] = ActiveControl::Shut;
                    if switched[w] {
                        control[w] = ActiveControl::Bhp(m.wells[w].bhp_limit);
                    }
                }
            }
            return Ok((
                PressureSolution {
                    x,
                    well_q,
                    face_ft,
                    ct,
                    control,
                    new_switches,
                },
                solves,
            ));
        }
    }

    fn completion_rates(
        &self,
        x: &[f64],
        heads: &[Vec<f64>],
        well_lt: &[Vec<f64>],
        control: &[ActiveControl],
        shut_now: &[bool],
    ) -> Vec<Vec<f64>> {
        let n = self.disc.n_cells;
        (0..self.disc.n_wells)
            .map(|w| {
                let comp = &self.disc.completions[w];
                if shut_now[w] || control[w] == ActiveControl::Shut {
                    return vec![0.0; comp.len()];
                }
                comp.iter()
                    .enumerate()
                    .map(|(j, c)| well_lt[w][j] * (x[c.cell] - x[n + w] - heads[w][j]))
                    .collect()
            })
            .collect()
    }

    /// Reservoir withdrawal for a surface-rate target.
    fn reservoir_rate(&self, w: usize, rate: f64, s: &[f64]) -> f64 {
        let f = &self.model.fluid;
        match self.model.wells[w].kind {
            WellKind::Injector => -rate * f.b_w,
            WellKind::Producer => {
                let (mut lw, mut lt) = (0.0, 0.0);
                for c in &self.disc.completions[w] {
                    let (a, b) = f.mobilities(s[c.cell]);
                    lw += c.wi * a;
                    lt += c.wi * (a + b);
                }
                let fw = if lt > 0.0 { lw / lt } else { 0.0 };
                rate / (fw / f.b_w + (1.0 - fw) / f.b_o)
            }
        }
    }

    fn target_share(&self, w: usize, control: &[ActiveControl], s: &[f64]) -> f64 {
        let kind = self.model.wells[w].kind;
        let target = |k: usize| match control[k] {
            ActiveControl::Rate(r) => self.reservoir_rate(k, r, s).abs(),
            _ => 0.0,
        };
        let total: f64 = (0..control.len())
            .filter(|&k| self.model.wells[k].kind == kind)
            .map(target)
            .sum();
        if total > 0.0 {
            target(w) / total
        } else {
            0.0
        }
    }

    /// Explicit saturation update in substeps; returns the new state, the
    /// step record and the largest saturation change.
    fn transport(&self, state: &SimState, ps: &PressureSolution, dt: f64) -> (SimState, StepRecord, f64) {
        let m = self.model;
        let fl = &m.fluid;
        let n = self.disc.n_cells;
        let n_w = self.disc.n_wells;
        let pv = &self.disc.pv;
        let dpdt: Vec<f64> = (0..n).map(|c| (ps.x[c] - state.p[c]) / dt).collect();
        let c_wt = m.rock.compressibility + fl.c_w;
        let dens = self.gamma * (fl.rho_w - fl.rho_o);
        let face_g: Vec<f64> = (0..self.disc.faces.len())
            .map(|k| self.disc.trans[k] * dens * self.disc.face_dz[k])
            .collect();
        let has_gravity = face_g.iter().any(|v| *v != 0.0);

        // source terms per cell: producer completions lose fluid at the cell's
        // fractional flow, injector completions add water
        let mut q_prod = vec![0.0; n];
        let mut q_inj = vec![0.0; n];
        for w in 0..n_w {
            for (j, c) in self.disc.completions[w].iter().enumerate() {
                let q = ps.well_q[w][j];
                if q > 0.0 {
                    q_prod[c.cell] += q;
                } else {
                    q_inj[c.cell] -= q;
                }
            }
        }

        let mut throughput = vec![0.0; n];
        for (k, face) in self.disc.faces.iter().enumerate() {
            let ft = ps.face_ft[k];
            let into = if ft >= 0.0 { face.b } else { face.a };
            throughput[into] += ft.abs() * self.max_dfw;
            let gterm = face_g[k].abs() * self.max_dgrav;
            throughput[face.a] += gterm;
            throughput[face.b] += gterm;
        }
        let mut dt_sub = dt;
        for c in 0..n {
            let rate = throughput[c] + q_inj[c] * self.max_dfw + pv[c] * (dpdt[c].abs() * (ps.ct[c] + c_wt));
            if rate > 0.0 && pv[c] > 0.0 {
                dt_sub = dt_sub.min(self.opts.cfl * pv[c] / rate);
            }
        }
        let n_sub = ((dt / dt_sub).ceil() as usize).max(1);
        let h = dt / n_sub as f64;

        let mut s = state.s_w.clone();
        let mut fw = vec![0.0; n];
        let mut mobs = vec![(0.0, 0.0); n];
        let mut rhs = vec![0.0; n];
        let mut water_out = vec![0.0; n_w];
        let mut compress = 0.0;
        for _ in 0..n_sub {
            for c in 0..n {
                mobs[c] = fl.mobilities(s[c]);
                let lt = mobs[c].0 + mobs[c].1;
                fw[c] = if lt > 0.0 { mobs[c].0 / lt } else { 0.0 };
            }
            rhs.iter_mut().for_each(|v| *v = 0.0);
            for (k, face) in self.disc.faces.iter().enumerate() {
                let ft = ps.face_ft[k];
                let fwat = if has_gravity {
                    water_flux(ft, face_g[k], mobs[face.a], mobs[face.b])
                } else if ft >= 0.0 {
                    fw[face.a] * ft
                } else {
                    fw[face.b] * ft
                };
                // outflow from a is (fwat, ft); from b it is the negative
                rhs[face.a] -= fwat - fw[face.a] * ft;
                rhs[face.b] += fwat - fw[face.b] * ft;
            }
            for c in 0..n {
                rhs[c] += (1.0 - fw[c]) * q_inj[c];
                compress += pv[c] * s[c] * c_wt * dpdt[c] * h;
                rhs[c] += pv[c] * (fw[c] * ps.ct[c] - s[c] * c_wt) * dpdt[c];
            }
            for w in 0..n_w {
                for (j, c) in self.disc.completions[w].iter().enumerate() {
                    let q = ps.well_q[w][j];
                    if q > 0.0 {
                        water_out[w] += fw[c.cell] * q * h;
                    }
                }
            }
            for c in 0..n {
                if pv[c] > 0.0 {
                    s[c] = (s[c] + h * rhs[c] / pv[c]).clamp(0.0, 1.0);
                }
            }
        }

        let mut q_o = vec![0.0; n_w];
        let mut q_wp = vec![0.0; n_w];
        let mut q_wi = vec![0.0; n_w];
        let (mut inj_res, mut prod_res) = (0.0, 0.0);
        let mut water_in_total = 0.0;
        let mut water_out_total = 0.0;
        for w in 0..n_w {
            let prod: f64 = ps.well_q[w].iter().filter(|q| **q > 0.0).sum();
            let inj: f64 = -ps.well_q[w].iter().filter(|q| **q < 0.0).sum::<f64>();
            q_wp[w] = water_out[w] / dt / fl.b_w;
            q_o[w] = (prod - water_out[w] / dt) / fl.b_o;
            q_wi[w] = inj / fl.b_w;
            inj_res += inj;
            prod_res += prod;
            water_in_total += inj * dt;
            water_out_total += water_out[w];
        }
        let total_pv = self.disc.total_pv();
        let dv: f64 = (0..n).map(|c| pv[c] * ps.ct[c] * (ps.x[c] - state.p[c])).sum();
        let mb_total = ((inj_res - prod_res) * dt - dv).abs() / total_pv;
        let ds_in_place: f64 = (0..n).map(|c| pv[c] * (s[c] - state.s_w[c])).sum();
        let mb_water = (ds_in_place + compress - (water_in_total - water_out_total)).abs() / total_pv;
        let max_ds = (0..n).fold(0.0f64, |a, c| a.max((s[c] - state.s_w[c]).abs()));

        let record = StepRecord {
            t_start: state.t,
            t_end: state.t + dt,
            dt,
            q_o,
            q_wp,
            q_wi,
            bhp: ps.x[n..].to_vec(),
            inj_res,
            prod_res,
            substeps: n_sub,
            mb_total,
            mb_water,
        };
        let mut switched = state.switched.clone();
        for &(w, _, _) in &ps.new_switches {
            switched[w] = true;
        }
        let new_state = SimState {
            p: ps.x[..n].to_vec(),
            s_w: s,
            t: state.t + dt,
            bhp: ps.x[n..].to_vec(),
            control: ps.control.clone(),
            switched,
        };
        (new_state, record, max_ds)
    }
}

/// Water flux across a face with total flux `ft` (a to b) and gravity
/// coefficient `tg = T * gamma * (rho_w - rho_o) * (depth_b - depth_a)`,
/// using phase-wise upstream mobilities consistent with the flux signs.
fn water_flux(ft: f64, tg: f64, mob_a: (f64, f64), mob_b: (f64, f64)) -> f64 {
    let flux = |lw: f64, lo: f64| {
        let lt = lw + lo;
        if lt > 0.0 {
            (lw * ft + lw * lo * tg) / lt
        } else {
            0.0
        }
    };
    for (wa, oa) in [(true, true), (true, false), (false, true), (false, false)] {
        let lw = if wa { mob_a.0 } else { mob_b.0 };
        let lo = if oa { mob_a.1 } else { mob_b.1 };
        let fwat = flux(lw, lo);
        let foil = ft - fwat;
        let ok_w = if wa { fwat >= 0.0 } else { fwat <= 0.0 };
        let ok_o = if oa { foil >= 0.0 } else { foil <= 0.0 };
        if ok_w && ok_o {
            return fwat;
        }
    }
    let (lw, lo) = if ft >= 0.0 { mob_a } else { mob_b };
    flux(lw, lo)
}

/// Runs a full simulation with default step control.
pub fn simulate(model: &CaseModel, controls: &Controls) -> Result<SimulationResult> {
    Simulator::new(model, SimOptions::default())?.run(controls)
}

/// Permanently switches rate-controlled wells whose implied BHP crosses
/// their limit. Returns the indices of the wells that switched.
pub fn check_bhp_and_switch(state: &mut SimState, model: &CaseModel) -> Vec<usize> {
    let mut out = Vec::new();
    for (w, well) in model.wells.iter().enumerate() {
        if let ActiveControl::Rate(_) = state.control[w] {
            let violated = match well.kind {
                WellKind::Producer => state.bhp[w] < well.bhp_limit,
                WellKind::Injector => state.bhp[w] > well.bhp_limit,
            };
            if violated {
                state.control[w] = ActiveControl::Bhp(well.bhp_limit);
                state.switched[w] = true;
                out.push(w);
            }
        }
    }
    out
}
