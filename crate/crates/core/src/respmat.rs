//! Velocity response matrices: column `j` holds the cell velocities
//! produced by well `j` withdrawing 1 RB/day at pseudo-steady state.
//!
//! Sign convention for rate vectors `q_hat`: positive values withdraw
//! (producers), negative values inject. With this convention the velocity
//! of any rate vector is `V_d q_hat`.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{CaseModel, WellKind};
use crate::parallel::par_map;
use crate::sim1p::{PssSolver, Sim1pOptions, VelocityField};

/// Default memory cap for dense response storage (bytes).
pub const DEFAULT_MEMORY_CAP: u64 = 2 << 30;

#[derive(Clone, Debug, PartialEq)]
pub struct ResponseMatrices {
    pub n_cells: usize,
    pub well_order: Vec<String>,
    pub kinds: Vec<WellKind>,
    /// Column-major `n_cells x n_wells` matrices for x, y and z.
    pub v: [Vec<f64>; 3],
}

#[derive(Clone, Copy, Debug)]
pub struct BuildOptions {
    pub workers: usize,
    pub memory_cap: u64,
    pub solver: Sim1pOptions,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions {
            workers: 1,
            memory_cap: DEFAULT_MEMORY_CAP,
            solver: Sim1pOptions::default(),
        }
    }
}

impl ResponseMatrices {
    pub fn n_wells(&self) -> usize {
        self.well_order.len()
    }

    /// Column `j` of direction `d`.
    pub fn column(&self, d: usize, j: usize) -> &[f64] {
        &self.v[d][j * self.n_cells..(j + 1) * self.n_cells]
    }

    pub fn bytes_needed(n_cells: usize, n_wells: usize) -> u64 {
        3 * n_cells as u64 * n_wells as u64 * 8
    }

    /// Writes column `j` as `cell,v_x,v_y,v_z`.
    pub fn write_column_csv(&self, j: usize, path: &Path) -> Result<()> {
        if j >= self.n_wells() {
            return Err(Error::Dimension {
                expected: self.n_wells(),
                got: j,
            });
        }
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["cell", "v_x", "v_y", "v_z"])?;
        for c in 0..self.n_cells {
            w.write_record(&[
                c.to_string(),
                self.column(0, j)[c].to_string(),
                self.column(1, j)[c].to_string(),
                self.column(2, j)[c].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Builds one column per well, in `model.wells` order, using a unit
/// withdrawal at that well only.
pub fn build_response(model: &CaseModel, opts: &BuildOptions) -> Result<ResponseMatrices> {
    let n_cells = model.grid.n_cells();
    let n_w = model.n_wells();
    let needed = ResponseMatrices::bytes_needed(n_cells, n_w);
    if needed > opts.memory_cap {
        return Err(Error::MemoryCap {
            needed,
            cap: opts.memory_cap,
        });
    }
    let solver = PssSolver::new(model, opts.solver)?;
    let wells: Vec<usize> = (0..n_w).collect();
    let columns = par_map(&wells, opts.workers, |&j| {
        let mut q = vec![0.0; n_w];
        q[j] = 1.0;
        solver
            .solve_pss(&q)
            .map(|p| solver.velocities(&p))
            .map_err(|e| Error::InvalidWell {
                well: model.wells[j].name.clone(),
                reason: format!("unit-rate solve failed: {e}"),
            })
    });
    let mut v = [
        Vec::with_capacity(n_cells * n_w),
        Vec::with_capacity(n_cells * n_w),
        Vec::with_capacity(n_cells * n_w),
    ];
    for col in columns {
        let col = col?;
        for d in 0..3 {
            v[d].extend_from_slice(&col.comp[d]);
        }
    }
    Ok(ResponseMatrices {
        n_cells,
        well_order: model.wells.iter().map(|w| w.name.clone()).collect(),
        kinds: model.kinds(),
        v,
    })
}

/// `u_d = V_d q_hat` for each direction.
pub fn superpose(resp: &ResponseMatrices, q_hat: &[f64]) -> Result<VelocityField> {
    if q_hat.len() != resp.n_wells() {
        return Err(Error::Dimension {
            expected: resp.n_wells(),
            got: q_hat.len(),
        });
    }
    let mut out = VelocityField::zeros(resp.n_cells);
    for d in 0..3 {
        let u = &mut out.comp[d];
        for (j, q) in q_hat.iter().enumerate() {
            if *q == 0.0 {
                continue;
            }
            for (ui, vi) in u.iter_mut().zip(resp.column(d, j)) {
                *ui += vi * q;
            }
        }
    }
    Ok(out)
}

/// Discrepancy between superposed and directly solved velocities.
#[derive(Clone, Debug, PartialEq)]
pub struct SuperpositionError {
    pub avg_abs: [f64; 3],
    pub max_abs: [f64; 3],
    /// Largest velocity magnitude in the direct solution.
    pub max_velocity: f64,
}

impl SuperpositionError {
    /// Worst average error relative to the largest velocity.
    pub fn relative_avg(&self) -> f64 {
        if self.max_velocity == 0.0 {
            return 0.0;
        }
        self.avg_abs.iter().fold(0.0f64, |m, e| m.max(*e)) / self.max_velocity
    }
}

/// Compares `superpose(q_hat)` with a direct steady solve. Requires a
/// balanced rate vector (injection equals production).
pub fn superposition_residual(
    model: &CaseModel,
    resp: &ResponseMatrices,
    q_hat: &[f64],
) -> Result<SuperpositionError> {
    let net: f64 = q_hat.iter().sum();
    let scale = q_hat.iter().fold(0.0f64, |m, q| m.max(q.abs()));
    if net.abs() > 1e-9 * scale.max(1e-300) {
        return Err(Error::Precondition(format!(
            "superposition reproduces steady flow only for balanced rates, net = {net:e}"
        )));
    }
    let sup = superpose(resp, q_hat)?;
    let solver = PssSolver::new(model, Sim1pOptions::default())?;
    let direct = solver.velocities(&solver.solve_pss(q_hat)?);
    let n = resp.n_cells as f64;
    let mut avg_abs = [0.0; 3];
    let mut max_abs = [0.0f64; 3];
    for d in 0..3 {
        for (a, b) in sup.comp[d].iter().zip(&direct.comp[d]) {
            let e = (a - b).abs();
            avg_abs[d] += e / n;
            max_abs[d] = max_abs[d].max(e);
        }
    }
    Ok(SuperpositionError {
        avg_abs,
        max_abs,
        max_velocity: direct.max_abs(),
    })
}

const CACHE_MAGIC: &[u8; 8] = b"SFRESP01";

/// Content hash of everything that determines the response matrices.
pub fn cache_key(model: &CaseModel) -> String {
    let mut h = Sha256::new();
    let g = &model.grid;
    for v in [g.nx, g.ny, g.nz] {
        h.update((v as u64).to_le_bytes());
    }
    for v in [g.dx, g.dy, g.dz, model.fluid.mu_w] {
        h.update(v.to_le_bytes());
    }
    let r = &model.rock;
    for field in [&r.perm_x, &r.perm_y, &r.perm_z, &r.porosity] {
        for v in field.iter() {
            h.update(v.to_le_bytes());
        }
    }
    for w in &model.wells {
        h.update(w.name.as_bytes());
        h.update([0u8, w.is_producer() as u8]);
        h.update((w.i as u64).to_le_bytes());
        h.update((w.j as u64).to_le_bytes());
        h.update(w.radius.to_le_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

pub fn cache_path(dir: &Path, model: &CaseModel) -> PathBuf {
    dir.join(format!("resp-{}.bin", &cache_key(model)[..16]))
}

pub fn write_cache(path: &Path, key: &str, resp: &ResponseMatrices) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(CACHE_MAGIC)?;
    f.write_all(key.as_bytes())?;
    f.write_all(&(resp.n_cells as u64).to_le_bytes())?;
    f.write_all(&(resp.n_wells() as u64).to_le_bytes())?;
    for v in &resp.v {
        for x in v {
            f.write_all(&x.to_le_bytes())?;
        }
    }
    f.flush()?;
    Ok(())
}

/// Reads a cache file; `None` if it was written for a different key.
pub fn read_cache(path: &Path, key: &str, model: &CaseModel) -> Result<Option<ResponseMatrices>> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let head = CACHE_MAGIC.len() + key.len();
    if bytes.len() < head + 16 || &bytes[..8] != CACHE_MAGIC || &bytes[8..head] != key.as_bytes() {
        return Ok(None);
    }
    let word = |at: usize| u64::from_le_bytes(bytes[at..at + 8].try_into().expect("8 bytes")) as usize;
    let (n_cells, n_w) = (word(head), word(head + 8));
    let body = &bytes[head + 16..];
    if n_w != model.n_wells() || body.len() != 3 * n_cells * n_w * 8 {
        return Ok(None);
    }
    let values: Vec<f64> = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let per = n_cells * n_w;
    Ok(Some(ResponseMatrices {
        n_cells,
        well_order: model.wells.iter().map(|w| w.name.clone()).collect(),
        kinds: model.kinds(),
        v: [
            values[..per].to_vec(),
            values[per..2 * per].to_vec(),
            values[2 * per..].to_vec(),
        ],
    }))
}

/// Loads matrices from `dir` when a matching cache exists, otherwise builds
/// and stores them. Returns the matrices and whether the cache was hit.
pub fn load_or_build(model: &CaseModel, dir: &Path, opts: &BuildOptions) -> Result<(ResponseMatrices, bool)> {
    let key = cache_key(model);
    let path = cache_path(dir, model);
    if path.exists() {
        if let Some(resp) = read_cache(&path, &key, model)? {
            return Ok((resp, true));
        }
    }
    let resp = build_response(model, opts)?;
    std::fs::create_dir_all(dir)?;
    write_cache(&path, &key, &resp)?;
    Ok((resp, false))
}
