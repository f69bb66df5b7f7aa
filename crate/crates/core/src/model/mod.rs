//! Static case description: grid, rock, fluid, wells, economics and the
//! control schedule, plus the geometric quantities the solvers share.
//!
//! Field units throughout: ft, psi, mD, cp, RB/STB, days.

mod case_file;
mod fluid;
mod grid;

pub use case_file::{load_case, parse_case, read_field_file, write_field_file, FieldSource};
pub use fluid::{rel_perm, CoreyParams, FluidProperties, RelPermModel};
pub use grid::{Axis, Face, Grid};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Darcy constant for field units: RB/day from mD·ft·psi/(cp·ft).
pub const DARCY: f64 = 0.001127;
/// Cubic feet per reservoir barrel.
pub const FT3_PER_RB: f64 = 5.614583;
/// Hydrostatic gradient per unit density: psi/ft per lbm/ft³.
pub const GRAVITY_PSI: f64 = 1.0 / 144.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RockProperties {
    pub perm_x: Vec<f64>,
    pub perm_y: Vec<f64>,
    pub perm_z: Vec<f64>,
    pub porosity: Vec<f64>,
    pub compressibility: f64,
}

impl RockProperties {
    /// Homogeneous isotropic rock.
    pub fn uniform(n_cells: usize, perm: f64, porosity: f64, compressibility: f64) -> Self {
        RockProperties {
            perm_x: vec![perm; n_cells],
            perm_y: vec![perm; n_cells],
            perm_z: vec![perm; n_cells],
            porosity: vec![porosity; n_cells],
            compressibility,
        }
    }

    /// Isotropic rock from one permeability field.
    pub fn isotropic(perm: Vec<f64>, porosity: f64, compressibility: f64) -> Self {
        let n = perm.len();
        RockProperties {
            perm_y: perm.clone(),
            perm_z: perm.clone(),
            perm_x: perm,
            porosity: vec![porosity; n],
            compressibility,
        }
    }

    pub fn perm(&self, axis: Axis) -> &[f64] {
        match axis {
            Axis::X => &self.perm_x,
            Axis::Y => &self.perm_y,
            Axis::Z => &self.perm_z,
        }
    }

    pub fn validate(&self, n_cells: usize) -> Result<()> {
        for (name, field) in [
            ("perm_x", &self.perm_x),
            ("perm_y", &self.perm_y),
            ("perm_z", &self.perm_z),
            ("porosity", &self.porosity),
        ] {
            if field.len() != n_cells {
                return Err(Error::Config(format!(
                    "{name} has {} values, grid has {n_cells} cells",
                    field.len()
                )));
            }
        }
        if let Some(k) = self
            .perm_x
            .iter()
            .chain(&self.perm_y)
            .chain(&self.perm_z)
            .find(|k| !(**k >= 0.0) || !k.is_finite())
        {
            return Err(Error::Domain(format!("permeability {k} must be finite and >= 0")));
        }
        if let Some(p) = self.porosity.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::Domain(format!("porosity {p} outside [0, 1]")));
        }
        if self.compressibility < 0.0 {
            return Err(Error::Domain("rock compressibility must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WellKind {
    Producer,
    Injector,
}

/// A vertical well completed through every layer of column `(i, j)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WellSpec {
    pub name: String,
    pub kind: WellKind,
    pub i: usize,
    pub j: usize,
    #[serde(default = "default_radius")]
    pub radius: f64,
    /// Minimum BHP for producers, maximum for injectors (psi).
    pub bhp_limit: f64,
}

fn default_radius() -> f64 {
    0.25
}

impl WellSpec {
    pub fn producer(name: &str, i: usize, j: usize, bhp_limit: f64) -> Self {
        WellSpec {
            name: name.to_string(),
            kind: WellKind::Producer,
            i,
            j,
            radius: default_radius(),
            bhp_limit,
        }
    }

    pub fn injector(name: &str, i: usize, j: usize, bhp_limit: f64) -> Self {
        WellSpec {
            name: name.to_string(),
            kind: WellKind::Injector,
            i,
            j,
            radius: default_radius(),
            bhp_limit,
        }
    }

    pub fn is_producer(&self) -> bool {
        self.kind == WellKind::Producer
    }

    /// Cells of the completion, top to bottom.
    pub fn cells(&self, grid: &Grid) -> Vec<usize> {
        (0..grid.nz).map(|k| grid.index(self.i, self.j, k)).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EconomicParams {
    /// $/STB
    pub oil_price: f64,
    /// $/STB of produced water
    pub water_prod_cost: f64,
    /// $/STB of injected water
    pub water_inj_cost: f64,
    /// $ per drilled well
    pub well_cost: f64,
    /// Annual discount rate (fraction).
    #[serde(default)]
    pub discount_rate: f64,
    /// Drilling time per well (days); missing entries mean day 0.
    #[serde(default)]
    pub drill_times: Vec<f64>,
}

impl Default for EconomicParams {
    fn default() -> Self {
        EconomicParams {
            oil_price: 60.0,
            water_prod_cost: 5.0,
            water_inj_cost: 5.0,
            well_cost: 20e6,
            discount_rate: 0.0,
            drill_times: Vec::new(),
        }
    }
}

impl EconomicParams {
    pub fn validate(&self) -> Result<()> {
        let costs = [
            self.oil_price,
            self.water_prod_cost,
            self.water_inj_cost,
            self.well_cost,
            self.discount_rate,
        ];
        if costs.iter().any(|c| !(*c >= 0.0)) {
            return Err(Error::Config("prices, costs and discount rate must be >= 0".into()));
        }
        if self.drill_times.iter().any(|t| !(*t >= 0.0)) {
            return Err(Error::Config("drill times must be >= 0".into()));
        }
        Ok(())
    }

    pub fn with_discount(mut self, d: f64) -> Self {
        self.discount_rate = d;
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    /// Days.
    pub horizon: f64,
    #[serde(default = "one")]
    pub n_control_periods: usize,
    /// Extra report times (days); every simulation time step ends on them.
    #[serde(default)]
    pub report_times: Vec<f64>,
}

fn one() -> usize {
    1
}

impl Schedule {
    pub fn new(horizon: f64, n_control_periods: usize) -> Self {
        Schedule {
            horizon,
            n_control_periods,
            report_times: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0) {
            return Err(Error::Config(format!("horizon must be > 0, got {}", self.horizon)));
        }
        if self.n_control_periods == 0 {
            return Err(Error::Config("need at least one control period".into()));
        }
        if self.report_times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("report times must be ascending".into()));
        }
        Ok(())
    }

    /// End times of the equal-length control periods.
    pub fn period_ends(&self) -> Vec<f64> {
        let n = self.n_control_periods;
        (1..=n)
            .map(|p| if p == n { self.horizon } else { self.horizon * p as f64 / n as f64 })
            .collect()
    }

    /// Times every simulation must land on: period ends and report times.
    pub fn boundaries(&self) -> Vec<f64> {
        let mut b: Vec<f64> = self
            .period_ends()
            .into_iter()
            .chain(self.report_times.iter().copied().filter(|t| *t > 0.0 && *t < self.horizon))
            .collect();
        b.sort_by(f64::total_cmp);
        b.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
        b
    }

    /// Same horizon and boundaries, with a different number of control periods.
    pub fn with_periods(&self, n: usize) -> Self {
        Schedule {
            n_control_periods: n,
            ..self.clone()
        }
    }
}

/// Full static case. Immutable once built; share it freely across threads.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseModel {
    pub grid: Grid,
    pub rock: RockProperties,
    pub fluid: FluidProperties,
    pub wells: Vec<WellSpec>,
    pub economics: EconomicParams,
    pub schedule: Schedule,
    /// Initial pressure at the datum depth (psi).
    pub initial_pressure: f64,
}

impl CaseModel {
    pub fn new(
        grid: Grid,
        rock: RockProperties,
        fluid: FluidProperties,
        wells: Vec<WellSpec>,
        economics: EconomicParams,
        schedule: Schedule,
        initial_pressure: f64,
    ) -> Result<Self> {
        let model = CaseModel {
            grid,
            rock,
            fluid,
            wells,
            economics,
            schedule,
            initial_pressure,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        self.rock.validate(self.grid.n_cells())?;
        self.fluid.validate()?;
        self.economics.validate()?;
        self.schedule.validate()?;
        let mut columns = std::collections::HashSet::new();
        let mut names = std::collections::HashSet::new();
        for w in &self.wells {
            if w.i >= self.grid.nx || w.j >= self.grid.ny {
                return Err(Error::InvalidWell {
                    well: w.name.clone(),
                    reason: format!("column ({}, {}) outside the grid", w.i, w.j),
                });
            }
            if !columns.insert((w.i, w.j)) {
                return Err(Error::InvalidWell {
                    well: w.name.clone(),
                    reason: "shares a cell column with another well".into(),
                });
            }
            if !names.insert(w.name.as_str()) {
                return Err(Error::InvalidWell {
                    well: w.name.clone(),
                    reason: "duplicate well name".into(),
                });
            }
            if !(w.radius > 0.0) {
                return Err(Error::InvalidWell {
                    well: w.name.clone(),
                    reason: "radius must be > 0".into(),
                });
            }
        }
        if self.producers().is_empty() || self.injectors().is_empty() {
            return Err(Error::Config(
                "need at least one producer and one injector".into(),
            ));
        }
        Ok(())
    }

    pub fn n_wells(&self) -> usize {
        self.wells.len()
    }

    /// Indices of producers in `wells`.
    pub fn producers(&self) -> Vec<usize> {
        (0..self.wells.len()).filter(|&k| self.wells[k].is_producer()).collect()
    }

    /// Indices of injectors in `wells`.
    pub fn injectors(&self) -> Vec<usize> {
        (0..self.wells.len()).filter(|&k| !self.wells[k].is_producer()).collect()
    }

    pub fn kinds(&self) -> Vec<WellKind> {
        self.wells.iter().map(|w| w.kind).collect()
    }

    pub fn pore_volume(&self) -> PoreVolume {
        pore_volume(&self.grid, &self.rock)
    }

    /// Total compressibility at the initial saturation.
    pub fn initial_total_compressibility(&self) -> f64 {
        self.rock.compressibility + self.fluid.fluid_compressibility(self.fluid.initial_water())
    }

    /// Reservoir field rate (RB/day) that injects `pvi` pore volumes over the horizon.
    pub fn field_rate_for_pvi(&self, pvi: f64) -> f64 {
        pvi_to_field_rate(pvi, self.pore_volume().ft3, self.schedule.horizon)
    }

    pub fn pvi_for_field_rate(&self, q: f64) -> f64 {
        field_rate_to_pvi(q, self.pore_volume().ft3, self.schedule.horizon)
    }

    pub fn well_index(&self, name: &str) -> Option<usize> {
        self.wells.iter().position(|w| w.name == name)
    }
}

/// Distance-weighted harmonic mean of two permeabilities.
pub fn weighted_harmonic_mean(k_a: f64, d_a: f64, k_b: f64, d_b: f64) -> f64 {
    if k_a <= 0.0 || k_b <= 0.0 {
        return 0.0;
    }
    (d_a + d_b) / (d_a / k_a + d_b / k_b)
}

/// Geometric transmissibility `C k_h A / L` (RB·cp/(day·psi)) between two
/// cells whose centres are `dist` apart, with equal half-distances.
pub fn transmissibility(k_a: f64, k_b: f64, area: f64, dist: f64) -> Result<f64> {
    if !(dist > 0.0) {
        return Err(Error::InvalidGeometry(format!("distance must be > 0, got {dist}")));
    }
    if k_a < 0.0 || k_b < 0.0 || area < 0.0 {
        return Err(Error::Domain("permeability and area must be >= 0".into()));
    }
    let k_h = weighted_harmonic_mean(k_a, 0.5 * dist, k_b, 0.5 * dist);
    Ok(DARCY * k_h * area / dist)
}

/// Geometric transmissibility of every interior face, in `grid.interior_faces()` order.
pub fn face_transmissibilities(grid: &Grid, rock: &RockProperties) -> Vec<f64> {
    grid.interior_faces()
        .iter()
        .map(|f| {
            let k = rock.perm(f.axis);
            let area = grid.face_area(f.axis);
            let dist = grid.spacing(f.axis);
            // grid validation guarantees dist > 0
            transmissibility(k[f.a], k[f.b], area, dist).unwrap_or(0.0)
        })
        .collect()
}

/// Peaceman equivalent radius for a cell with horizontal permeabilities `kx`, `ky`.
pub fn peaceman_radius(kx: f64, ky: f64, dx: f64, dy: f64) -> f64 {
    if kx > 0.0 && ky > 0.0 && (kx - ky).abs() > 1e-12 * kx.max(ky) {
        let ryx = (ky / kx).sqrt();
        let rxy = (kx / ky).sqrt();
        0.28 * (ryx * dx * dx + rxy * dy * dy).sqrt() / (ryx.sqrt() + rxy.sqrt())
    } else {
        0.14 * (dx * dx + dy * dy).sqrt()
    }
}

/// Peaceman well index (RB·cp/(day·psi)) for the completion in `cell`.
pub fn peaceman_index(grid: &Grid, rock: &RockProperties, cell: usize, well: &WellSpec) -> Result<f64> {
    let kx = rock.perm_x[cell];
    let ky = rock.perm_y[cell];
    let r_o = peaceman_radius(kx, ky, grid.dx, grid.dy);
    if well.radius >= r_o {
        return Err(Error::InvalidWell {
            well: well.name.clone(),
            reason: format!("radius {} >= equivalent radius {r_o:.4}", well.radius),
        });
    }
    let k = (kx * ky).sqrt();
    Ok(DARCY * 2.0 * std::f64::consts::PI * k * grid.dz / (r_o / well.radius).ln())
}

/// Pore volume in both unit systems.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoreVolume {
    pub ft3: f64,
    pub rb: f64,
}

pub fn pore_volume(grid: &Grid, rock: &RockProperties) -> PoreVolume {
    let ft3 = grid.cell_volume() * rock.porosity.iter().sum::<f64>();
    PoreVolume {
        ft3,
        rb: ft3 / FT3_PER_RB,
    }
}

/// Field rate (RB/day) injecting `pvi` pore volumes over `horizon` days.
pub fn pvi_to_field_rate(pvi: f64, pv_ft3: f64, horizon: f64) -> f64 {
    pvi * pv_ft3 / (horizon * FT3_PER_RB)
}

pub fn field_rate_to_pvi(q: f64, pv_ft3: f64, horizon: f64) -> f64 {
    q * horizon * FT3_PER_RB / pv_ft3
}
