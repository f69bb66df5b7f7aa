//! Single-phase, slightly compressible pressure solver and Darcy-velocity
//! reconstruction.
//!
//! Well rates are reservoir volumes (RB/day), positive for withdrawal. The
//! fluid mobility is `1 / mu_w`. Each well is an extra unknown (its BHP)
//! tied to its completion cells by the Peaceman index, which keeps the
//! system symmetric for multi-layer completions.

use std::io::Write;
use std::path::Path;

use crate::disc::Discretization;
use crate::error::{Error, Result};
use crate::linalg::{SolverOptions, SymmetricSystem};
use crate::model::{Axis, CaseModel, Grid, FT3_PER_RB};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PressureMode {
    Transient,
    Pss,
}

#[derive(Clone, Debug)]
pub struct PressureField {
    /// Cell pressures (psi).
    pub p: Vec<f64>,
    /// Well BHPs (psi), in `model.wells` order.
    pub bhp: Vec<f64>,
    pub mode: PressureMode,
    /// Uniform `dp/dt` (psi/day) reached at pseudo-steady state.
    pub pss_constant: f64,
    /// Time steps taken (zero for the direct solve).
    pub steps: usize,
}

/// Face velocities on the staggered face arrays, one per axis, including
/// the zero exterior faces (ft/day).
#[derive(Clone, Debug, PartialEq)]
pub struct FaceVelocities {
    pub comp: [Vec<f64>; 3],
}

/// Cell-centred velocity components (ft/day), one vector per axis.
#[derive(Clone, Debug, PartialEq)]
pub struct VelocityField {
    pub comp: [Vec<f64>; 3],
}

impl VelocityField {
    pub fn zeros(n_cells: usize) -> Self {
        VelocityField {
            comp: [vec![0.0; n_cells], vec![0.0; n_cells], vec![0.0; n_cells]],
        }
    }

    pub fn n_cells(&self) -> usize {
        self.comp[0].len()
    }

    pub fn max_abs(&self) -> f64 {
        self.comp
            .iter()
            .flatten()
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Sum over cells and axes of `u_d^2`.
    pub fn sum_squares(&self) -> f64 {
        self.comp.iter().flatten().map(|v| v * v).sum()
    }

    /// Writes `cell,u_x,u_y,u_z`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["cell", "u_x", "u_y", "u_z"])?;
        for c in 0..self.n_cells() {
            w.write_record(&[
                c.to_string(),
                self.comp[0][c].to_string(),
                self.comp[1][c].to_string(),
                self.comp[2][c].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

impl PressureField {
    /// Writes `cell,p`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "cell,p")?;
        for (c, p) in self.p.iter().enumerate() {
            writeln!(f, "{c},{p}")?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Sim1pOptions {
    /// Relative spread of `dp/dt` across cells that counts as PSS.
    pub pss_tol: f64,
    pub max_steps: usize,
    pub initial_dt: f64,
    pub dt_growth: f64,
    /// Cell whose pressure is pinned in the direct solve.
    pub reference_cell: usize,
    pub solver: SolverOptions,
}

impl Default for Sim1pOptions {
    fn default() -> Self {
        Sim1pOptions {
            pss_tol: 1e-6,
            max_steps: 400,
            initial_dt: 0.01,
            dt_growth: 1.5,
            reference_cell: 0,
            solver: SolverOptions::default(),
        }
    }
}

/// Darcy flux and velocity across one face in consistent units: flux
/// `t_lambda * dp` and velocity `flux / area`.
pub fn face_flux(t_lambda: f64, dp: f64, area: f64) -> (f64, f64) {
    let q = t_lambda * dp;
    (q, q / area)
}

/// Reusable solver for one case; the discretization is built once.
#[derive(Clone, Debug)]
pub struct PssSolver<'a> {
    model: &'a CaseModel,
    disc: Discretization,
    mobility: f64,
    opts: Sim1pOptions,
}

impl<'a> PssSolver<'a> {
    pub fn new(model: &'a CaseModel, opts: Sim1pOptions) -> Result<Self> {
        let disc = Discretization::new(model)?;
        if opts.reference_cell >= disc.n_cells {
            return Err(Error::Config(format!(
                "reference cell {} outside the grid",
                opts.reference_cell
            )));
        }
        disc.check_connected(opts.reference_cell)?;
        Ok(PssSolver {
            model,
            disc,
            mobility: 1.0 / model.fluid.mu_w,
            opts,
        })
    }

    pub fn model(&self) -> &CaseModel {
        self.model
    }

    fn check_rates(&self, rates: &[f64]) -> Result<()> {
        if rates.len() != self.disc.n_wells {
            return Err(Error::Dimension {
                expected: self.disc.n_wells,
                got: rates.len(),
            });
        }
        Ok(())
    }

    /// Conductance part of the matrix (faces and completions).
    fn assemble_flow(&self) -> SymmetricSystem {
        let mut a = self.disc.pattern.clone();
        for (f, (face, t)) in self.disc.faces.iter().zip(&self.disc.trans).enumerate() {
            a.add_conductance(f, face.a, face.b, t * self.mobility);
        }
        for (w, comp) in self.disc.completions.iter().enumerate() {
            for c in comp {
                a.add_conductance(c.pair, c.cell, self.disc.n_cells + w, c.wi * self.mobility);
            }
        }
        a
    }

    fn split(&self, mut x: Vec<f64>, mode: PressureMode, pss_constant: f64, steps: usize) -> PressureField {
        let bhp = x.split_off(self.disc.n_cells);
        PressureField {
            p: x,
            bhp,
            mode,
            pss_constant,
            steps,
        }
    }

    /// `dp/dt` at PSS for the given rates (psi/day).
    pub fn pss_rate(&self, rates: &[f64]) -> f64 {
        let ct = self.model.initial_total_compressibility();
        let net: f64 = rates.iter().sum();
        -net / (ct * self.disc.total_pv())
    }

    /// Direct PSS solve: the accumulation term is replaced by the uniform
    /// decline, `A p = -q + pv_i * (sum q) / PV`, with the reference cell
    /// pinned to the initial pressure.
    pub fn solve_pss(&self, rates: &[f64]) -> Result<PressureField> {
        self.check_rates(rates)?;
        let n = self.disc.n_cells;
        let net: f64 = rates.iter().sum();
        let total_pv = self.disc.total_pv();
        let mut b = vec![0.0; self.disc.n_unknowns()];
        for c in 0..n {
            b[c] = self.disc.pv[c] * net / total_pv;
        }
        for (w, q) in rates.iter().enumerate() {
            b[n + w] = -q;
        }
        // unknown is the deviation from the reference pressure
        let mut a = self.assemble_flow();
        a.pin(self.opts.reference_cell, 0.0, &mut b);
        let mut x = vec![0.0; b.len()];
        a.solve(&b, &mut x, &self.opts.solver)?;
        x.iter_mut().for_each(|v| *v += self.model.initial_pressure);
        Ok(self.split(x, PressureMode::Pss, self.pss_rate(rates), 0))
    }

    /// One implicit Euler step of length `dt` from cell pressures `p_prev`
    /// with total compressibility `ct`. Returns cell pressures then BHPs.
    pub fn transient_step(&self, p_prev: &[f64], rates: &[f64], dt: f64, ct: f64) -> Result<Vec<f64>> {
        self.check_rates(rates)?;
        let mut a = self.assemble_flow();
        self.step_with(&mut a, p_prev, rates, dt, ct, None)
    }

    fn step_with(
        &self,
        a: &mut SymmetricSystem,
        p_prev: &[f64],
        rates: &[f64],
        dt: f64,
        ct: f64,
        guess: Option<&[f64]>,
    ) -> Result<Vec<f64>> {
        let n = self.disc.n_cells;
        if p_prev.len() != n {
            return Err(Error::Dimension {
                expected: n,
                got: p_prev.len(),
            });
        }
        if !(dt > 0.0) || !(ct > 0.0) {
            return Err(Error::Precondition(
                "transient step needs dt > 0 and compressibility > 0".into(),
            ));
        }
        // unknown is the increment over the previous state
        let mut x0 = p_prev.to_vec();
        x0.extend(self.disc.completions.iter().map(|c| p_prev[c[0].cell]));
        let mut b = vec![0.0; self.disc.n_unknowns()];
        a.matvec(&x0, &mut b);
        b.iter_mut().for_each(|v| *v = -*v);
        for (w, q) in rates.iter().enumerate() {
            b[n + w] -= q;
        }
        for c in 0..n {
            a.add_diag(c, self.disc.pv[c] * ct / dt);
        }
        let mut dx = match guess {
            Some(g) => g.iter().zip(&x0).map(|(g, x)| g - x).collect(),
            None => vec![0.0; x0.len()],
        };
        // rounding floor of the residual of the previous state
        let level: f64 = (0..x0.len()).map(|i| (a.get(i, i) * x0[i]).powi(2)).sum::<f64>().sqrt();
        let opts = SolverOptions {
            atol: self.opts.solver.atol.max(1e-14 * level),
            ..self.opts.solver
        };
        let res = a.solve(&b, &mut dx, &opts);
        for c in 0..n {
            a.add_diag(c, -self.disc.pv[c] * ct / dt);
        }
        let x = x0.iter().zip(&dx).map(|(x, d)| x + d).collect();
        res?;
        Ok(x)
    }

    /// Implicit time stepping from the uniform initial pressure until
    /// `dp/dt` is uniform to `pss_tol`.
    pub fn solve_transient(&self, rates: &[f64]) -> Result<PressureField> {
        self.check_rates(rates)?;
        let n = self.disc.n_cells;
        let ct = self.model.initial_total_compressibility();
        let mut a = self.assemble_flow();
        let mut p = vec![self.model.initial_pressure; n];
        let mut dt = self.opts.initial_dt;
        let mut x_prev: Option<Vec<f64>> = None;
        for step in 1..=self.opts.max_steps {
            let x = self.step_with(&mut a, &p, rates, dt, ct, x_prev.as_deref())?;
            let rate: Vec<f64> = (0..n).map(|c| (x[c] - p[c]) / dt).collect();
            let mean = rate.iter().sum::<f64>() / n as f64;
            let spread = rate.iter().fold(0.0f64, |m, r| m.max((r - mean).abs()));
            let settled = if mean.abs() > 0.0 {
                spread / mean.abs() < self.opts.pss_tol
            } else {
                spread == 0.0
            };
            p.copy_from_slice(&x[..n]);
            if settled {
                return Ok(self.split(x, PressureMode::Transient, mean, step));
            }
            x_prev = Some(x);
            dt *= self.opts.dt_growth;
        }
        Err(Error::Convergence(format!(
            "pressure did not reach PSS in {} steps",
            self.opts.max_steps
        )))
    }

    /// Face velocities from a pressure field solved on this case.
    pub fn face_velocities(&self, pressure: &PressureField) -> FaceVelocities {
        face_velocities_with(&self.model.grid, &self.disc, self.mobility, &pressure.p)
    }

    pub fn velocities(&self, pressure: &PressureField) -> VelocityField {
        cell_velocities(&self.model.grid, &self.face_velocities(pressure))
    }
}

fn face_velocities_with(grid: &Grid, disc: &Discretization, mobility: f64, p: &[f64]) -> FaceVelocities {
    let mut comp = [
        vec![0.0; grid.n_faces(Axis::X)],
        vec![0.0; grid.n_faces(Axis::Y)],
        vec![0.0; grid.n_faces(Axis::Z)],
    ];
    for (face, t) in disc.faces.iter().zip(&disc.trans) {
        let area = grid.face_area(face.axis);
        let (_, u) = face_flux(t * mobility, p[face.a] - p[face.b], area);
        // minus face of cell b on the staggered array
        let (i, j, k) = grid.coords(face.b);
        comp[face.axis.index()][grid.face_index(face.axis, i, j, k)] = u * FT3_PER_RB;
    }
    FaceVelocities { comp }
}

/// Direct PSS solve; see [`PssSolver::solve_pss`].
pub fn solve_pss_direct(model: &CaseModel, well_rates: &[f64]) -> Result<PressureField> {
    PssSolver::new(model, Sim1pOptions::default())?.solve_pss(well_rates)
}

/// Transient solve run to PSS; see [`PssSolver::solve_transient`].
pub fn solve_transient_to_pss(model: &CaseModel, well_rates: &[f64]) -> Result<PressureField> {
    PssSolver::new(model, Sim1pOptions::default())?.solve_transient(well_rates)
}

/// Face velocities (ft/day) of a single-phase pressure field.
pub fn face_velocities(model: &CaseModel, pressure: &PressureField) -> Result<FaceVelocities> {
    let disc = Discretization::new(model)?;
    if pressure.p.len() != disc.n_cells {
        return Err(Error::Dimension {
            expected: disc.n_cells,
            got: pressure.p.len(),
        });
    }
    Ok(face_velocities_with(&model.grid, &disc, 1.0 / model.fluid.mu_w, &pressure.p))
}

/// Cell-centred components as the mean of the two bounding faces.
pub fn cell_velocities(grid: &Grid, faces: &FaceVelocities) -> VelocityField {
    let n = grid.n_cells();
    let mut out = VelocityField::zeros(n);
    for axis in Axis::ALL {
        let f = &faces.comp[axis.index()];
        let u = &mut out.comp[axis.index()];
        for c in 0..n {
            let (i, j, k) = grid.coords(c);
            let (ip, jp, kp) = match axis {
                Axis::X => (i + 1, j, k),
                Axis::Y => (i, j + 1, k),
                Axis::Z => (i, j, k + 1),
            };
            let lo = f[grid.face_index(axis, i, j, k)];
            let hi = f[grid.face_index(axis, ip, jp, kp)];
            u[c] = 0.5 * (lo + hi);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{EconomicParams, FluidProperties, RockProperties, Schedule, WellSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn box_case(nx: usize, ny: usize, perm: Vec<f64>, wells: Vec<WellSpec>) -> CaseModel {
        let grid = Grid::new(nx, ny, 1, 50.0, 50.0, 100.0).unwrap();
        CaseModel::new(
            grid,
            RockProperties::isotropic(perm, 0.25, 3e-6),
            FluidProperties::default(),
            wells,
            EconomicParams::default(),
            Schedule::new(3650.0, 1),
            4000.0,
        )
        .unwrap()
    }

    fn random_perm(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| 10f64.powf(rng.gen_range(0.0..3.0))).collect()
    }

    fn two_wells() -> Vec<WellSpec> {
        vec![
            WellSpec::producer("P1", 2, 3, 500.0),
            WellSpec::injector("I1", 8, 6, 8000.0),
        ]
    }

    #[test]
    fn zero_rates_give_uniform_pressure() {
        let m = box_case(6, 5, vec![100.0; 30], two_wells_small());
        let pf = solve_pss_direct(&m, &[0.0, 0.0]).unwrap();
        assert!(pf.p.iter().all(|p| (p - 4000.0).abs() < 1e-9));
        let tr = solve_transient_to_pss(&m, &[0.0, 0.0]).unwrap();
        assert_eq!(tr.steps, 1);
        assert!(tr.p.iter().all(|p| (p - 4000.0).abs() < 1e-9));
    }

    fn two_wells_small() -> Vec<WellSpec> {
        vec![
            WellSpec::producer("P1", 1, 1, 500.0),
            WellSpec::injector("I1", 4, 3, 8000.0),
        ]
    }

    #[test]
    fn pss_constant_from_material_balance() {
        let m = box_case(10, 10, vec![100.0; 100], two_wells());
        let q = [500.0, 0.0];
        let pf = solve_pss_direct(&m, &q).unwrap();
        let ct = m.initial_total_compressibility();
        let expected = -500.0 / (ct * m.pore_volume().rb);
        assert!((pf.pss_constant - expected).abs() <= 1e-8 * expected.abs());
    }

    #[test]
    fn centred_well_gives_symmetric_pressure() {
        let wells = vec![
            WellSpec::producer("P", 4, 4, 500.0),
            WellSpec::injector("I", 0, 0, 8000.0),
        ];
        let m = box_case(9, 9, vec![100.0; 81], wells);
        let pf = solve_pss_direct(&m, &[1000.0, 0.0]).unwrap();
        let g = &m.grid;
        let scale = pf.p.iter().fold(0.0f64, |a, p| a.max((p - pf.p[0]).abs()));
        for c in 0..81 {
            let (i, j, _) = g.coords(c);
            for (mi, mj) in [(8 - i, j), (i, 8 - j), (j, i)] {
                let d = pf.p[c] - pf.p[g.index(mi, mj, 0)];
                assert!(d.abs() <= 1e-9 * scale, "asymmetry {d} at ({i},{j})");
            }
        }
    }

    #[test]
    fn transient_matches_direct_on_heterogeneous_field() {
        let wells = vec![
            WellSpec::producer("P1", 3, 20, 500.0),
            WellSpec::producer("P2", 21, 4, 500.0),
            WellSpec::injector("I1", 12, 12, 8000.0),
        ];
        let m = box_case(25, 25, random_perm(625, 7), wells);
        let q = [800.0, 400.0, -600.0];
        let solver = PssSolver::new(&m, Sim1pOptions::default()).unwrap();
        let direct = solver.velocities(&solver.solve_pss(&q).unwrap());
        let tr = solver.solve_transient(&q).unwrap();
        assert_eq!(tr.mode, PressureMode::Transient);
        let trans = solver.velocities(&tr);
        let scale = direct.max_abs();
        let err = (0..3)
            .flat_map(|d| direct.comp[d].iter().zip(&trans.comp[d]).map(|(a, b)| (a - b).abs()))
            .fold(0.0f64, f64::max);
        assert!(err / scale < 1e-4, "relative error {}", err / scale);
        assert!((tr.pss_constant - direct_pss(&solver, &q)).abs() < 1e-4 * tr.pss_constant.abs());
    }

    fn direct_pss(s: &PssSolver, q: &[f64]) -> f64 {
        s.pss_rate(q)
    }

    #[test]
    fn doubling_rate_doubles_deviation() {
        let m = box_case(10, 10, random_perm(100, 3), two_wells());
        let s = PssSolver::new(&m, Sim1pOptions::default()).unwrap();
        let a = s.solve_transient(&[300.0, 0.0]).unwrap();
        let b = s.solve_transient(&[600.0, 0.0]).unwrap();
        let dev = |p: &[f64]| {
            let mean = p.iter().sum::<f64>() / p.len() as f64;
            p.iter().map(|v| v - mean).collect::<Vec<_>>()
        };
        let (da, db) = (dev(&a.p), dev(&b.p));
        let scale = db.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (x, y) in da.iter().zip(&db) {
            assert!((2.0 * x - y).abs() < 1e-5 * scale);
        }
    }

    #[test]
    fn face_flux_example() {
        let (q, u) = face_flux(2.0, 3.0, 5000.0);
        assert_eq!(q, 6.0);
        assert!((u - 0.0012).abs() < 1e-15);
    }

    #[test]
    fn cell_velocity_averaging() {
        let grid = Grid::new(1, 1, 1, 1.0, 1.0, 1.0).unwrap();
        let faces = FaceVelocities {
            comp: [vec![2.0, 4.0], vec![0.0, 5.0], vec![7.0, 7.0]],
        };
        let u = cell_velocities(&grid, &faces);
        assert_eq!(u.comp[0], vec![3.0]);
        assert_eq!(u.comp[1], vec![2.5]);
        assert_eq!(u.comp[2], vec![7.0]);
    }

    #[test]
    fn exterior_faces_carry_no_flow() {
        let m = box_case(10, 10, random_perm(100, 11), two_wells());
        let pf = solve_pss_direct(&m, &[1000.0, -1000.0]).unwrap();
        let fv = face_velocities(&m, &pf).unwrap();
        let g = &m.grid;
        for j in 0..g.ny {
            assert_eq!(fv.comp[0][g.face_index(Axis::X, 0, j, 0)], 0.0);
            assert_eq!(fv.comp[0][g.face_index(Axis::X, g.nx, j, 0)], 0.0);
        }
        for i in 0..g.nx {
            assert_eq!(fv.comp[1][g.face_index(Axis::Y, i, 0, 0)], 0.0);
            assert_eq!(fv.comp[1][g.face_index(Axis::Y, i, g.ny, 0)], 0.0);
        }
        assert!(fv.comp[2].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn steady_flux_is_divergence_free_away_from_wells() {
        let m = box_case(12, 12, random_perm(144, 5), two_wells());
        let pf = solve_pss_direct(&m, &[700.0, -700.0]).unwrap();
        let fv = face_velocities(&m, &pf).unwrap();
        let g = &m.grid;
        let well_cells: Vec<usize> = m.wells.iter().map(|w| g.index(w.i, w.j, 0)).collect();
        let ax = g.face_area(Axis::X);
        let ay = g.face_area(Axis::Y);
        let mut max_flux = 0.0f64;
        let mut max_div = 0.0f64;
        for c in 0..g.n_cells() {
            let (i, j, _) = g.coords(c);
            let fxl = fv.comp[0][g.face_index(Axis::X, i, j, 0)] * ax;
            let fxr = fv.comp[0][g.face_index(Axis::X, i + 1, j, 0)] * ax;
            let fyl = fv.comp[1][g.face_index(Axis::Y, i, j, 0)] * ay;
            let fyr = fv.comp[1][g.face_index(Axis::Y, i, j + 1, 0)] * ay;
            max_flux = max_flux.max(fxl.abs()).max(fxr.abs()).max(fyl.abs()).max(fyr.abs());
            if !well_cells.contains(&c) {
                max_div = max_div.max((fxr - fxl + fyr - fyl).abs());
            }
        }
        assert!(max_div <= 1e-8 * max_flux, "divergence {max_div} vs {max_flux}");
    }

    #[test]
    fn velocity_does_not_depend_on_gauge() {
        let m = box_case(10, 10, random_perm(100, 9), two_wells());
        let q = [650.0, -200.0];
        let a = PssSolver::new(&m, Sim1pOptions::default()).unwrap();
        let b = PssSolver::new(
            &m,
            Sim1pOptions {
                reference_cell: 57,
                ..Sim1pOptions::default()
            },
        )
        .unwrap();
        let ua = a.velocities(&a.solve_pss(&q).unwrap());
        let ub = b.velocities(&b.solve_pss(&q).unwrap());
        let scale = ua.max_abs();
        for d in 0..3 {
            for (x, y) in ua.comp[d].iter().zip(&ub.comp[d]) {
                assert!((x - y).abs() <= 1e-9 * scale);
            }
        }
    }

    #[test]
    fn isolated_well_is_a_solver_error() {
        let mut perm = vec![100.0; 36];
        perm[0] = 0.0;
        let wells = vec![
            WellSpec::producer("P", 0, 0, 500.0),
            WellSpec::injector("I", 5, 5, 8000.0),
        ];
        let m = box_case(6, 6, perm, wells);
        assert!(matches!(solve_pss_direct(&m, &[100.0, 0.0]), Err(Error::Solver(_))));
    }

    #[test]
    fn rate_length_is_checked() {
        let m = box_case(6, 5, vec![100.0; 30], two_wells_small());
        assert!(matches!(
            solve_pss_direct(&m, &[1.0]),
            Err(Error::Dimension { .. })
        ));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(16))]
            #[test]
            fn velocities_superpose(q1 in -2000.0f64..2000.0, q2 in -2000.0f64..2000.0, seed in 0u64..1000) {
                let m = box_case(10, 10, random_perm(100, seed), two_wells());
                let s = PssSolver::new(&m, Sim1pOptions::default()).unwrap();
                let u = |q: [f64; 2]| s.velocities(&s.solve_pss(&q).unwrap());
                let both = u([q1, q2]);
                let a = u([q1, 0.0]);
                let b = u([0.0, q2]);
                let scale = both.max_abs().max(1e-300);
                for d in 0..3 {
                    for c in 0..100 {
                        let e = (both.comp[d][c] - a.comp[d][c] - b.comp[d][c]).abs();
                        prop_assert!(e <= 1e-9 * scale);
                    }
                }
            }
        }
    }
}
