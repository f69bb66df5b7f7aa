//! Geometry shared by the single- and two-phase solvers: faces with their
//! transmissibilities, well completions and the sparse pattern over cell
//! and well-node unknowns.

use crate::error::{Error, Result};
use crate::linalg::SymmetricSystem;
use crate::model::{face_transmissibilities, peaceman_index, CaseModel, Face, FT3_PER_RB};

/// One completed cell of a well.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Completion {
    pub cell: usize,
    pub wi: f64,
    /// Pair index in the sparse pattern.
    pub pair: usize,
    /// Depth below the well's reference depth (ft).
    pub dh: f64,
}

#[derive(Clone, Debug)]
pub(crate) struct Discretization {
    pub n_cells: usize,
    pub n_wells: usize,
    pub faces: Vec<Face>,
    pub trans: Vec<f64>,
    /// `depth(b) - depth(a)` per face.
    pub face_dz: Vec<f64>,
    pub completions: Vec<Vec<Completion>>,
    /// Pore volume per cell in RB.
    pub pv: Vec<f64>,
    pub pattern: SymmetricSystem,
}

impl Discretization {
    pub fn new(model: &CaseModel) -> Result<Self> {
        let grid = &model.grid;
        let n_cells = grid.n_cells();
        let n_wells = model.wells.len();
        let faces = grid.interior_faces();
        let trans = face_transmissibilities(grid, &model.rock);
        let face_dz = faces
            .iter()
            .map(|f| grid.cell_depth(f.b) - grid.cell_depth(f.a))
            .collect();
        let mut pairs: Vec<(usize, usize)> = faces.iter().map(|f| (f.a, f.b)).collect();
        let mut completions = Vec::with_capacity(n_wells);
        for (w, well) in model.wells.iter().enumerate() {
            let cells = well.cells(grid);
            let ref_depth = grid.cell_depth(cells[0]);
            let mut comp = Vec::with_capacity(cells.len());
            for c in cells {
                let wi = peaceman_index(grid, &model.rock, c, well)?;
                comp.push(Completion {
                    cell: c,
                    wi,
                    pair: pairs.len(),
                    dh: grid.cell_depth(c) - ref_depth,
                });
                pairs.push((c, n_cells + w));
            }
            if comp.iter().all(|c| c.wi <= 0.0) {
                return Err(Error::Solver(format!(
                    "well {} has no permeable completion",
                    well.name
                )));
            }
            completions.push(comp);
        }
        let cell_pv = grid.cell_volume() / FT3_PER_RB;
        let pv = model.rock.porosity.iter().map(|phi| phi * cell_pv).collect();
        let pattern = SymmetricSystem::new(n_cells + n_wells, &pairs);
        Ok(Discretization {
            n_cells,
            n_wells,
            faces,
            trans,
            face_dz,
            completions,
            pv,
            pattern,
        })
    }

    pub fn n_unknowns(&self) -> usize {
        self.n_cells + self.n_wells
    }

    pub fn total_pv(&self) -> f64 {
        self.pv.iter().sum()
    }

    /// Checks that every cell with pore volume communicates with `reference`
    /// through nonzero transmissibilities, so a single pinned cell fixes the
    /// gauge of a closed system.
    pub fn check_connected(&self, reference: usize) -> Result<()> {
        let mut parent: Vec<usize> = (0..self.n_cells).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for (f, t) in self.faces.iter().zip(&self.trans) {
            if *t > 0.0 {
                let (ra, rb) = (find(&mut parent, f.a), find(&mut parent, f.b));
                if ra != rb {
                    parent[ra.max(rb)] = ra.min(rb);
                }
            }
        }
        let root = find(&mut parent, reference);
        for w in &self.completions {
            for c in w.iter().filter(|c| c.wi > 0.0) {
                if find(&mut parent, c.cell) != root {
                    return Err(Error::Solver(format!(
                        "cell {} of a well is not connected to the reference cell",
                        c.cell
                    )));
                }
            }
        }
        for c in 0..self.n_cells {
            if self.pv[c] > 0.0 && find(&mut parent, c) != root {
                return Err(Error::Solver(format!(
                    "cell {c} is isolated from the reference cell by zero permeability"
                )));
            }
        }
        Ok(())
    }
}
