use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Coordinate direction of a face or velocity component.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }
}

/// Uniform Cartesian grid, layer `k = 0` on top. Cells are numbered
/// `i + nx * (j + ny * k)` (x fastest).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub dx: f64,
    pub dy: f64,
    pub dz: f64,
    /// Depth of the top of layer 0 (ft).
    #[serde(default)]
    pub top_depth: f64,
    /// Depth at which the initial pressure is specified (ft).
    #[serde(default)]
    pub datum_depth: f64,
}

/// An interior face between cells `a` (lower index side) and `b`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Face {
    pub a: usize,
    pub b: usize,
    pub axis: Axis,
}

impl Grid {
    pub fn new(nx: usize, ny: usize, nz: usize, dx: f64, dy: f64, dz: f64) -> Result<Self> {
        let grid = Grid {
            nx,
            ny,
            nz,
            dx,
            dy,
            dz,
            top_depth: 0.0,
            datum_depth: 0.0,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn with_depths(mut self, top_depth: f64, datum_depth: f64) -> Self {
        self.top_depth = top_depth;
        self.datum_depth = datum_depth;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx == 0 || self.ny == 0 || self.nz == 0 {
            return Err(Error::InvalidGeometry(format!(
                "grid dimensions must be positive, got {}x{}x{}",
                self.nx, self.ny, self.nz
            )));
        }
        for (name, v) in [("dx", self.dx), ("dy", self.dy), ("dz", self.dz)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidGeometry(format!("{name} must be > 0, got {v}")));
            }
        }
        Ok(())
    }

    pub fn n_cells(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.nx * (j + self.ny * k)
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> (usize, usize, usize) {
        let i = idx % self.nx;
        let j = (idx / self.nx) % self.ny;
        let k = idx / (self.nx * self.ny);
        (i, j, k)
    }

    pub fn cell_volume(&self) -> f64 {
        self.dx * self.dy * self.dz
    }

    /// Depth of the centre of a cell (ft).
    pub fn cell_depth(&self, idx: usize) -> f64 {
        let (_, _, k) = self.coords(idx);
        self.top_depth + (k as f64 + 0.5) * self.dz
    }

    pub fn has_gravity(&self) -> bool {
        self.nz > 1
    }

    pub fn face_area(&self, axis: Axis) -> f64 {
        match axis {
            Axis::X => self.dy * self.dz,
            Axis::Y => self.dx * self.dz,
            Axis::Z => self.dx * self.dy,
        }
    }

    pub fn spacing(&self, axis: Axis) -> f64 {
        match axis {
            Axis::X => self.dx,
            Axis::Y => self.dy,
            Axis::Z => self.dz,
        }
    }

    /// Number of cells along an axis.
    pub fn extent(&self, axis: Axis) -> usize {
        match axis {
            Axis::X => self.nx,
            Axis::Y => self.ny,
            Axis::Z => self.nz,
        }
    }

    /// Interior faces, x faces first, then y, then z.
    pub fn interior_faces(&self) -> Vec<Face> {
        let mut faces = Vec::new();
        for k in 0..self.nz {
            for j in 0..self.ny {
                for i in 0..self.nx.saturating_sub(1) {
                    faces.push(Face {
                        a: self.index(i, j, k),
                        b: self.index(i + 1, j, k),
                        axis: Axis::X,
                    });
                }
            }
        }
        for k in 0..self.nz {
            for j in 0..self.ny.saturating_sub(1) {
                for i in 0..self.nx {
                    faces.push(Face {
                        a: self.index(i, j, k),
                        b: self.index(i, j + 1, k),
                        axis: Axis::Y,
                    });
                }
            }
        }
        for k in 0..self.nz.saturating_sub(1) {
            for j in 0..self.ny {
                for i in 0..self.nx {
                    faces.push(Face {
                        a: self.index(i, j, k),
                        b: self.index(i, j, k + 1),
                        axis: Axis::Z,
                    });
                }
            }
        }
        faces
    }

    /// Shape of the staggered face array for an axis, including the two
    /// exterior faces: `(nx + 1, ny, nz)` for x and so on.
    pub fn face_shape(&self, axis: Axis) -> (usize, usize, usize) {
        match axis {
            Axis::X => (self.nx + 1, self.ny, self.nz),
            Axis::Y => (self.nx, self.ny + 1, self.nz),
            Axis::Z => (self.nx, self.ny, self.nz + 1),
        }
    }

    /// Linear index into the staggered face array of `axis`.
    pub fn face_index(&self, axis: Axis, i: usize, j: usize, k: usize) -> usize {
        let (fx, fy, _) = self.face_shape(axis);
        i + fx * (j + fy * k)
    }

    pub fn n_faces(&self, axis: Axis) -> usize {
        let (a, b, c) = self.face_shape(axis);
        a * b * c
    }
}
