//! Well-rate ratios that minimize the weighted squared velocity of the
//! superposed single-phase field at unit field rate.
//!
//! With `S = diag(+1 producers, -1 injectors)` the velocities of a ratio
//! vector `f` are `V_d S f`, so the objective is `f' S H S f` with
//! `H = sum_d V_d' W_d V_d`. The feasible set is the product of the
//! producer and injector simplices, optionally with upper bounds.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::WellKind;
use crate::respmat::ResponseMatrices;

/// Per-well fractions of the field rate; each role sums to one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateRatios {
    pub f: Vec<f64>,
    pub kinds: Vec<WellKind>,
}

impl RateRatios {
    pub fn new(f: Vec<f64>, kinds: Vec<WellKind>) -> Result<Self> {
        let r = RateRatios { f, kinds };
        r.validate(1e-10)?;
        Ok(r)
    }

    /// `1/n_p` for producers and `1/n_i` for injectors.
    pub fn uniform(kinds: &[WellKind]) -> Self {
        let n_p = kinds.iter().filter(|k| **k == WellKind::Producer).count() as f64;
        let n_i = kinds.len() as f64 - n_p;
        let f = kinds
            .iter()
            .map(|k| if *k == WellKind::Producer { 1.0 / n_p } else { 1.0 / n_i })
            .collect();
        RateRatios {
            f,
            kinds: kinds.to_vec(),
        }
    }

    pub fn validate(&self, tol: f64) -> Result<()> {
        if self.f.len() != self.kinds.len() {
            return Err(Error::Dimension {
                expected: self.kinds.len(),
                got: self.f.len(),
            });
        }
        if let Some(v) = self.f.iter().find(|v| !(-tol..=1.0 + tol).contains(*v)) {
            return Err(Error::Domain(format!("rate ratio {v} outside [0, 1]")));
        }
        for kind in [WellKind::Producer, WellKind::Injector] {
            let s: f64 = self.role(kind).iter().sum();
            if (s - 1.0).abs() > tol {
                return Err(Error::Domain(format!("{kind:?} ratios sum to {s}, not 1")));
            }
        }
        Ok(())
    }

    /// Fractions of one role, in well order.
    pub fn role(&self, kind: WellKind) -> Vec<f64> {
        self.f
            .iter()
            .zip(&self.kinds)
            .filter(|(_, k)| **k == kind)
            .map(|(v, _)| *v)
            .collect()
    }

    /// Signed reservoir rates `S f Q` (producers positive).
    pub fn signed_rates(&self, q: f64) -> Vec<f64> {
        self.f
            .iter()
            .zip(&self.kinds)
            .map(|(v, k)| if *k == WellKind::Producer { v * q } else { -v * q })
            .collect()
    }
}

/// Diagonal weights per direction.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightMatrices {
    pub w: [Vec<f64>; 3],
}

impl WeightMatrices {
    pub fn ones(n_cells: usize) -> Self {
        WeightMatrices {
            w: [vec![1.0; n_cells], vec![1.0; n_cells], vec![1.0; n_cells]],
        }
    }

    /// Same per-cell weight in every direction.
    pub fn from_cells(w: Vec<f64>) -> Self {
        WeightMatrices {
            w: [w.clone(), w.clone(), w],
        }
    }

    pub fn validate(&self, n_cells: usize) -> Result<()> {
        for w in &self.w {
            if w.len() != n_cells {
                return Err(Error::Dimension {
                    expected: n_cells,
                    got: w.len(),
                });
            }
            if let Some(v) = w.iter().find(|v| !(**v >= 0.0)) {
                return Err(Error::Domain(format!("weight {v} must be >= 0")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QpObjective {
    /// Weighted sum of squared velocities.
    #[default]
    SquaredVelocity,
    /// Weighted variance of each velocity component about its weighted mean.
    Variance,
}

#[derive(Clone, Debug)]
pub struct QpProblem {
    /// `sum_d V_d' W_d V_d` after PSD repair.
    pub h: DMatrix<f64>,
    pub kinds: Vec<WellKind>,
    /// `max |H_ij|`; the solver works with `H / scale`.
    pub scale: f64,
    /// Number of negative eigenvalues clipped during repair.
    pub clipped: usize,
}

impl QpProblem {
    pub fn n(&self) -> usize {
        self.kinds.len()
    }

    fn sign(&self, k: usize) -> f64 {
        if self.kinds[k] == WellKind::Producer {
            1.0
        } else {
            -1.0
        }
    }

    /// `S H S / scale`.
    pub fn normalized_signed(&self) -> DMatrix<f64> {
        let n = self.n();
        let inv = if self.scale > 0.0 { 1.0 / self.scale } else { 0.0 };
        DMatrix::from_fn(n, n, |i, j| self.sign(i) * self.sign(j) * self.h[(i, j)] * inv)
    }

    /// `f' S H S f` in velocity units squared.
    pub fn objective(&self, f: &[f64]) -> f64 {
        let n = self.n();
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                s += self.sign(i) * self.sign(j) * self.h[(i, j)] * f[i] * f[j];
            }
        }
        s
    }

    /// Objective divided by `scale`.
    pub fn objective_normalized(&self, f: &[f64]) -> f64 {
        if self.scale > 0.0 {
            self.objective(f) / self.scale
        } else {
            0.0
        }
    }
}

/// Builds `H` from the response matrices and weights.
pub fn assemble_qp(resp: &ResponseMatrices, weights: &WeightMatrices, objective: QpObjective) -> Result<QpProblem> {
    let n_b = resp.n_cells;
    weights.validate(n_b)?;
    let n = resp.n_wells();
    let mut h = DMatrix::<f64>::zeros(n, n);
    for d in 0..3 {
        let w = &weights.w[d];
        let cols: Vec<&[f64]> = (0..n).map(|j| resp.column(d, j)).collect();
        for i in 0..n {
            for j in i..n {
                let s: f64 = (0..n_b).map(|c| cols[i][c] * w[c] * cols[j][c]).sum();
                h[(i, j)] += s;
            }
        }
        if objective == QpObjective::Variance {
            let wsum: f64 = w.iter().sum();
            if wsum > 0.0 {
                let m: Vec<f64> = cols
                    .iter()
                    .map(|col| col.iter().zip(w).map(|(v, w)| v * w).sum())
                    .collect();
                for i in 0..n {
                    for j in i..n {
                        h[(i, j)] -= m[i] * m[j] / wsum;
                    }
                }
            }
        }
    }
    for i in 0..n {
        for j in 0..i {
            h[(i, j)] = h[(j, i)];
        }
    }
    let (h, clipped) = repair_psd(h);
    let scale = h.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Ok(QpProblem {
        h,
        kinds: resp.kinds.clone(),
        scale,
        clipped,
    })
}

/// Clips negative eigenvalues to zero. The matrix is returned untouched
/// when it has none.
pub fn repair_psd(h: DMatrix<f64>) -> (DMatrix<f64>, usize) {
    let eig = SymmetricEigen::new(h.clone());
    let clipped = eig.eigenvalues.iter().filter(|v| **v < 0.0).count();
    if clipped == 0 {
        return (h, 0);
    }
    let lambda = eig.eigenvalues.map(|v| v.max(0.0));
    let q = &eig.eigenvectors;
    let mut r = q * DMatrix::from_diagonal(&lambda) * q.transpose();
    let n = r.nrows();
    for i in 0..n {
        for j in 0..i {
            let m = 0.5 * (r[(i, j)] + r[(j, i)]);
            r[(i, j)] = m;
            r[(j, i)] = m;
        }
    }
    (r, clipped)
}

/// KKT multipliers in normalized objective units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Multipliers {
    /// Producer and injector simplex equalities.
    pub eq: [f64; 2],
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Multipliers {
    pub fn zeros(n: usize) -> Self {
        Multipliers {
            eq: [0.0; 2],
            lower: vec![0.0; n],
            upper: vec![0.0; n],
        }
    }
}

#[derive(Clone, Debug)]
pub struct QpSolution {
    pub ratios: RateRatios,
    /// `f' S H S f`.
    pub objective: f64,
    pub objective_normalized: f64,
    pub multipliers: Multipliers,
    pub kkt_residual: f64,
    pub iterations: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct QpOptions {
    /// Tikhonov term added to the normalized Hessian.
    pub regularization: f64,
    pub max_iter: usize,
}

impl Default for QpOptions {
    fn default() -> Self {
        QpOptions {
            regularization: 1e-10,
            max_iter: 500,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Status {
    Free,
    Lower,
    Upper,
}

fn role_index(kind: WellKind) -> usize {
    match kind {
        WellKind::Producer => 0,
        WellKind::Injector => 1,
    }
}

/// Largest feasible point of the form `min(t, u_k)` per role.
fn water_fill(kinds: &[WellKind], upper: &[f64]) -> Result<Vec<f64>> {
    let mut f = vec![0.0; kinds.len()];
    for kind in [WellKind::Producer, WellKind::Injector] {
        let idx: Vec<usize> = (0..kinds.len()).filter(|&k| kinds[k] == kind).collect();
        if idx.is_empty() {
            return Err(Error::Infeasible(format!("no {kind:?} wells")));
        }
        let cap: f64 = idx.iter().map(|&k| upper[k].min(1.0)).sum();
        if cap < 1.0 - 1e-12 {
            return Err(Error::Infeasible(format!(
                "{kind:?} upper bounds sum to {cap} < 1"
            )));
        }
        let fill = |t: f64| idx.iter().map(|&k| t.min(upper[k])).sum::<f64>();
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if fill(mid) < 1.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        for &k in &idx {
            f[k] = hi.min(upper[k]);
        }
        // put the rounding remainder on the lowest-index well with slack
        let excess = idx.iter().map(|&k| f[k]).sum::<f64>() - 1.0;
        if let Some(&k) = idx.iter().find(|&&k| f[k] - excess >= 0.0 && f[k] - excess <= upper[k]) {
            f[k] -= excess;
        }
    }
    Ok(f)
}

/// Solves the ratio QP with optional per-well upper bounds.
pub fn solve_rate_ratio_qp(problem: &QpProblem, upper: Option<&[f64]>, opts: &QpOptions) -> Result<QpSolution> {
    let n = problem.n();
    let caps: Vec<f64> = match upper {
        Some(u) if u.len() != n => {
            return Err(Error::Dimension {
                expected: n,
                got: u.len(),
            })
        }
        Some(u) => u.iter().map(|v| v.clamp(0.0, 1.0)).collect(),
        None => vec![1.0; n],
    };
    let bounded = upper.is_some();
    let kinds = &problem.kinds;
    let role: Vec<usize> = kinds.iter().map(|k| role_index(*k)).collect();
    let mut g_mat = problem.normalized_signed() * 2.0;
    for i in 0..n {
        g_mat[(i, i)] += 2.0 * opts.regularization;
    }
    let mut f = water_fill(kinds, &caps)?;
    let mut status: Vec<Status> = (0..n)
        .map(|k| {
            if f[k] <= 0.0 {
                Status::Lower
            } else if bounded && f[k] >= caps[k] {
                Status::Upper
            } else {
                Status::Free
            }
        })
        .collect();
    let tol = 1e-12;
    for iter in 1..=opts.max_iter {
        let grad = &g_mat * DVector::from_column_slice(&f);
        let free: Vec<usize> = (0..n).filter(|&k| status[k] == Status::Free).collect();
        let roles_free: Vec<usize> = (0..2).filter(|r| free.iter().any(|&k| role[k] == *r)).collect();
        let m = free.len() + roles_free.len();
        let mut kkt = DMatrix::<f64>::zeros(m, m);
        let mut rhs = DVector::<f64>::zeros(m);
        for (a, &i) in free.iter().enumerate() {
            for (b, &j) in free.iter().enumerate() {
                kkt[(a, b)] = g_mat[(i, j)];
            }
            rhs[a] = -grad[i];
            for (e, r) in roles_free.iter().enumerate() {
                if role[i] == *r {
                    kkt[(a, free.len() + e)] = 1.0;
                    kkt[(free.len() + e, a)] = 1.0;
                }
            }
        }
        let sol = kkt
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Solver("singular KKT system in ratio QP".into()))?;
        let mut p = vec![0.0; n];
        for (a, &i) in free.iter().enumerate() {
            p[i] = sol[a];
        }
        let mut mu = [f64::NAN; 2];
        for (e, r) in roles_free.iter().enumerate() {
            mu[*r] = -sol[free.len() + e];
        }
        let p_norm = p.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if p_norm <= 1e-14 {
            // roles without free wells: any mu between the binding gradients
            for r in 0..2 {
                if mu[r].is_nan() {
                    let lo_max = (0..n)
                        .filter(|&k| role[k] == r && status[k] == Status::Upper)
                        .map(|k| grad[k])
                        .fold(f64::NEG_INFINITY, f64::max);
                    let lower_min = (0..n)
                        .filter(|&k| role[k] == r && status[k] == Status::Lower)
                        .map(|k| grad[k])
                        .fold(f64::INFINITY, f64::min);
                    mu[r] = match (lo_max.is_finite(), lower_min.is_finite()) {
                        (true, true) if lo_max <= lower_min => 0.5 * (lo_max + lower_min),
                        (true, _) => lo_max,
                        (false, true) => lower_min,
                        (false, false) => 0.0,
                    };
                }
            }
            let mut mult = Multipliers::zeros(n);
            mult.eq = mu;
            let mut worst: Option<(usize, f64)> = None;
            for k in 0..n {
                let lam = match status[k] {
                    Status::Free => continue,
                    Status::Lower => {
                        let v = grad[k] - mu[role[k]];
                        mult.lower[k] = v;
                        v
                    }
                    Status::Upper => {
                        let v = mu[role[k]] - grad[k];
                        mult.upper[k] = v;
                        v
                    }
                };
                if lam < -tol && worst.is_none_or(|(_, w)| lam < w) {
                    worst = Some((k, lam));
                }
            }
            match worst {
                Some((k, _)) => status[k] = Status::Free,
                None => {
                    let ratios = RateRatios {
                        f: f.clone(),
                        kinds: kinds.clone(),
                    };
                    let kkt_res = kkt_residual(problem, &f, &mult, upper.map(|_| &caps[..]));
                    return Ok(QpSolution {
                        objective: problem.objective(&f),
                        objective_normalized: problem.objective_normalized(&f),
                        ratios,
                        multipliers: mult,
                        kkt_residual: kkt_res,
                        iterations: iter,
                    });
                }
            }
            continue;
        }
        let mut alpha = 1.0;
        let mut block: Option<(usize, Status)> = None;
        for &k in &free {
            if p[k] < 0.0 {
                let a = f[k] / -p[k];
                if a < alpha {
                    alpha = a;
                    block = Some((k, Status::Lower));
                }
            } else if p[k] > 0.0 && bounded {
                let a = (caps[k] - f[k]) / p[k];
                if a < alpha {
                    alpha = a;
                    block = Some((k, Status::Upper));
                }
            }
        }
        for k in 0..n {
            f[k] += alpha * p[k];
        }
        if let Some((k, s)) = block {
            f[k] = if s == Status::Lower { 0.0 } else { caps[k] };
            status[k] = s;
        }
    }
    Err(Error::Convergence(format!(
        "ratio QP did not terminate in {} iterations",
        opts.max_iter
    )))
}

/// Solves the QP without upper bounds and with default options.
pub fn solve_unbounded(problem: &QpProblem) -> Result<QpSolution> {
    solve_rate_ratio_qp(problem, None, &QpOptions::default())
}

/// Largest violation of stationarity, complementarity and feasibility for
/// the normalized objective `f' S H S f / scale`.
pub fn kkt_residual(problem: &QpProblem, f: &[f64], mult: &Multipliers, upper: Option<&[f64]>) -> f64 {
    let n = problem.n();
    let g = problem.normalized_signed() * DVector::from_column_slice(f) * 2.0;
    let role: Vec<usize> = problem.kinds.iter().map(|k| role_index(*k)).collect();
    let mut worst = 0.0f64;
    let mut sums = [0.0; 2];
    for k in 0..n {
        let u = upper.map_or(f64::INFINITY, |u| u[k]);
        let stat = g[k] - mult.eq[role[k]] - mult.lower[k] + mult.upper[k];
        worst = worst.max(stat.abs());
        worst = worst.max((mult.lower[k] * f[k]).abs());
        if u.is_finite() {
            worst = worst.max((mult.upper[k] * (u - f[k])).abs());
            worst = worst.max(f[k] - u);
        } else {
            worst = worst.max(mult.upper[k].abs());
        }
        worst = worst.max(-f[k]).max(-mult.lower[k]).max(-mult.upper[k]);
        sums[role[k]] += f[k];
    }
    worst.max((sums[0] - 1.0).abs()).max((sums[1] - 1.0).abs())
}
