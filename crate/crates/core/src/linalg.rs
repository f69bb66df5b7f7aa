//! Sparse symmetric systems on a fixed pattern, solved by conjugate
//! gradients with an incomplete-Cholesky preconditioner.

use crate::error::{Error, Result};

/// Symmetric sparse matrix in CSR form with a fixed pattern. Values can be
/// refilled without reallocating, which is how the time-stepping solvers
/// reuse one pattern for every step.
#[derive(Clone, Debug)]
pub struct SymmetricSystem {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    values: Vec<f64>,
    diag_pos: Vec<usize>,
    /// For each registered pair: positions of (i, j) and (j, i).
    pair_pos: Vec<(usize, usize)>,
}

impl SymmetricSystem {
    /// Builds the pattern for `n` unknowns coupled by `pairs` (i != j).
    pub fn new(n: usize, pairs: &[(usize, usize)]) -> Self {
        let mut rows: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
        for &(i, j) in pairs {
            debug_assert!(i != j && i < n && j < n);
            rows[i].push(j);
            rows[j].push(i);
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        row_ptr.push(0);
        for r in rows.iter_mut() {
            r.sort_unstable();
            r.dedup();
            cols.extend_from_slice(r);
            row_ptr.push(cols.len());
        }
        let find = |row_ptr: &[usize], cols: &[usize], i: usize, j: usize| -> usize {
            let s = &cols[row_ptr[i]..row_ptr[i + 1]];
            row_ptr[i] + s.binary_search(&j).expect("entry in pattern")
        };
        let diag_pos = (0..n).map(|i| find(&row_ptr, &cols, i, i)).collect();
        let pair_pos = pairs
            .iter()
            .map(|&(i, j)| (find(&row_ptr, &cols, i, j), find(&row_ptr, &cols, j, i)))
            .collect();
        let nnz = cols.len();
        SymmetricSystem {
            n,
            row_ptr,
            cols,
            values: vec![0.0; nnz],
            diag_pos,
            pair_pos,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn clear(&mut self) {
        self.values.iter_mut().for_each(|v| *v = 0.0);
    }

    #[inline]
    pub fn add_diag(&mut self, i: usize, v: f64) {
        self.values[self.diag_pos[i]] += v;
    }

    /// Adds a conductance `c` between the two unknowns of pair `p`:
    /// `+c` on both diagonals and `-c` on both off-diagonals.
    #[inline]
    pub fn add_conductance(&mut self, p: usize, i: usize, j: usize, c: f64) {
        let (pij, pji) = self.pair_pos[p];
        self.values[pij] -= c;
        self.values[pji] -= c;
        self.values[self.diag_pos[i]] += c;
        self.values[self.diag_pos[j]] += c;
    }

    /// Adds `v` to both off-diagonal entries of pair `p`.
    #[inline]
    pub fn add_offdiag(&mut self, p: usize, v: f64) {
        let (pij, pji) = self.pair_pos[p];
        self.values[pij] += v;
        self.values[pji] += v;
    }

    /// Replaces row and column `i` by the identity, fixing unknown `i` to
    /// the value placed in the right-hand side. `rhs` is corrected so the
    /// remaining equations stay consistent.
    pub fn pin(&mut self, i: usize, value: f64, rhs: &mut [f64]) {
        for pos in self.row_ptr[i]..self.row_ptr[i + 1] {
            let j = self.cols[pos];
            if j == i {
                continue;
            }
            let a_ji = self.get(j, i);
            rhs[j] -= a_ji * value;
            self.set(j, i, 0.0);
            self.values[pos] = 0.0;
        }
        self.values[self.diag_pos[i]] = 1.0;
        rhs[i] = value;
    }

    fn position(&self, i: usize, j: usize) -> Option<usize> {
        let s = &self.cols[self.row_ptr[i]..self.row_ptr[i + 1]];
        s.binary_search(&j).ok().map(|p| self.row_ptr[i] + p)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.position(i, j).map_or(0.0, |p| self.values[p])
    }

    fn set(&mut self, i: usize, j: usize, v: f64) {
        if let Some(p) = self.position(i, j) {
            self.values[p] = v;
        }
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.n {
            let mut s = 0.0;
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.values[p] * x[self.cols[p]];
            }
            y[i] = s;
        }
    }

    /// Solves `A x = b` by preconditioned CG, starting from the contents of `x`.
    pub fn solve(&self, b: &[f64], x: &mut [f64], opts: &SolverOptions) -> Result<SolveStats> {
        pcg(self, b, x, opts)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SolverOptions {
    /// Relative residual target `||b - A x|| <= tol ||b||`.
    pub tol: f64,
    /// Absolute residual norm that is always accepted.
    pub atol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-12,
            atol: 0.0,
            max_iter: 20_000,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Zero-fill incomplete Cholesky factor, lower triangle stored by rows.
struct IncompleteCholesky {
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    values: Vec<f64>,
}

impl IncompleteCholesky {
    fn new(a: &SymmetricSystem) -> Self {
        let n = a.n;
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for i in 0..n {
            for p in a.row_ptr[i]..a.row_ptr[i + 1] {
                let j = a.cols[p];
                if j <= i {
                    cols.push(j);
                    values.push(a.values[p]);
                }
            }
            row_ptr.push(cols.len());
        }
        let mut ic = IncompleteCholesky {
            row_ptr,
            cols,
            values,
        };
        ic.factor();
        ic
    }

    fn factor(&mut self) {
        let n = self.row_ptr.len() - 1;
        for i in 0..n {
            let (start, end) = (self.row_ptr[i], self.row_ptr[i + 1]);
            for p in start..end {
                let k = self.cols[p];
                if k == i {
                    let mut d = self.values[p];
                    for q in start..p {
                        d -= self.values[q] * self.values[q];
                    }
                    let orig = self.values[p];
                    // breakdown: fall back to the unfactored diagonal
                    self.values[p] = if d > 1e-14 * orig.abs() && d > 0.0 {
                        d.sqrt()
                    } else {
                        orig.abs().max(1e-300).sqrt()
                    };
                } else {
                    // L_ik = (a_ik - sum_{j<k} L_ij L_kj) / L_kk
                    let (ks, ke) = (self.row_ptr[k], self.row_ptr[k + 1]);
                    let mut s = self.values[p];
                    let (mut qi, mut qk) = (start, ks);
                    while qi < p && qk < ke - 1 {
                        let (ci, ck) = (self.cols[qi], self.cols[qk]);
                        if ci == ck {
                            s -= self.values[qi] * self.values[qk];
                            qi += 1;
                            qk += 1;
                        } else if ci < ck {
                            qi += 1;
                        } else {
                            qk += 1;
                        }
                    }
                    let l_kk = self.values[ke - 1];
                    self.values[p] = s / l_kk;
                }
            }
        }
    }

    /// z = (L L^T)^{-1} r
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        let n = self.row_ptr.len() - 1;
        for i in 0..n {
            let (s, e) = (self.row_ptr[i], self.row_ptr[i + 1]);
            let mut v = r[i];
            for p in s..e - 1 {
                v -= self.values[p] * z[self.cols[p]];
            }
            z[i] = v / self.values[e - 1];
        }
        for i in (0..n).rev() {
            let (s, e) = (self.row_ptr[i], self.row_ptr[i + 1]);
            z[i] /= self.values[e - 1];
            let zi = z[i];
            for p in s..e - 1 {
                z[self.cols[p]] -= self.values[p] * zi;
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn pcg(a: &SymmetricSystem, b: &[f64], x: &mut [f64], opts: &SolverOptions) -> Result<SolveStats> {
    let n = a.n;
    if b.len() != n || x.len() != n {
        return Err(Error::Dimension {
            expected: n,
            got: b.len().min(x.len()),
        });
    }
    let b_norm = dot(b, b).sqrt();
    if b_norm <= opts.atol {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(SolveStats {
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let mut r = vec![0.0; n];
    a.matvec(x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let tol = opts.tol.max(opts.atol / b_norm);
    let mut res = dot(&r, &r).sqrt() / b_norm;
    if res <= tol {
        return Ok(SolveStats {
            iterations: 0,
            relative_residual: res,
        });
    }
    let precond = IncompleteCholesky::new(a);
    let mut z = vec![0.0; n];
    precond.apply(&r, &mut z);
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    for it in 1..=opts.max_iter {
        a.matvec(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::Solver(format!(
                "matrix not positive definite (p'Ap = {pap:e}) at iteration {it}"
            )));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        res = dot(&r, &r).sqrt() / b_norm;
        if res <= tol {
            // confirm against the true residual to guard against drift
            a.matvec(x, &mut ap);
            let true_res = b
                .iter()
                .zip(&ap)
                .map(|(bi, ai)| (bi - ai) * (bi - ai))
                .sum::<f64>()
                .sqrt()
                / b_norm;
            if true_res <= tol * 10.0 {
                return Ok(SolveStats {
                    iterations: it,
                    relative_residual: true_res,
                });
            }
            for i in 0..n {
                r[i] = b[i] - ap[i];
            }
        }
        precond.apply(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::Solver(format!(
        "CG did not reach relative residual {:e} in {} iterations (last {res:e})",
        opts.tol, opts.max_iter
    )))
}
