//! TOML case files.
//!
//! ```toml
//! # Units: ft, psi, mD, cp, RB/STB, 1/psi, lbm/ft3, days, $/STB, $.
//! initial_pressure = 6000.0          # psi at grid.datum_depth
//!
//! [grid]
//! nx = 100
//! ny = 100
//! nz = 1
//! dx = 50.0
//! dy = 50.0
//! dz = 100.0
//! top_depth = 6000.0
//! datum_depth = 6000.0
//!
//! [rock]
//! perm_x = { file = "perm.bin" }     # or { uniform = 100.0 } or { values = [..] }
//! porosity = { uniform = 0.25 }      # perm_y and perm_z default to perm_x
//! compressibility = 1e-9
//!
//! [fluid]
//! mu_o = 3.0
//! mu_w = 1.0
//! relperm = { model = "corey", swc = 0.2, sor = 0.2, krw_end = 0.7, kro_end = 1.0, nw_exp = 2.0, no_exp = 2.0 }
//!
//! [[wells]]
//! name = "P1"
//! kind = "producer"
//! i = 10
//! j = 10
//! bhp_limit = 1000.0
//!
//! [economics]
//! oil_price = 60.0
//! water_prod_cost = 5.0
//! water_inj_cost = 5.0
//! well_cost = 20e6
//! discount_rate = 0.0
//!
//! [schedule]
//! horizon = 7300.0
//! n_control_periods = 1
//! ```
//!
//! Field files are row-major with x fastest. A `.csv` or `.txt` file holds
//! numbers separated by commas or whitespace; anything else is read as raw
//! little-endian `f64`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{
    CaseModel, EconomicParams, FluidProperties, Grid, RockProperties, Schedule, WellSpec,
};
use crate::error::{Error, Result};

/// Where a per-cell property comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldSource {
    Uniform(f64),
    Values(Vec<f64>),
    File(PathBuf),
}

impl FieldSource {
    pub fn resolve(&self, n_cells: usize, base_dir: &Path) -> Result<Vec<f64>> {
        let values = match self {
            FieldSource::Uniform(v) => vec![*v; n_cells],
            FieldSource::Values(v) => v.clone(),
            FieldSource::File(p) => {
                let path = if p.is_absolute() { p.clone() } else { base_dir.join(p) };
                read_field_file(&path)?
            }
        };
        if values.len() != n_cells {
            return Err(Error::Config(format!(
                "field has {} values, grid has {n_cells} cells",
                values.len()
            )));
        }
        Ok(values)
    }
}

/// Reads a per-cell field written by [`write_field_file`].
pub fn read_field_file(path: &Path) -> Result<Vec<f64>> {
    let is_text = matches!(
        path.extension().and_then(|e| e.to_str()),
        Some("csv") | Some("txt")
    );
    if is_text {
        let text = std::fs::read_to_string(path)?;
        text.split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|e| Error::Parse(format!("{}: bad value {s:?}: {e}", path.display())))
            })
            .collect()
    } else {
        let bytes = std::fs::read(path)?;
        if bytes.len() % 8 != 0 {
            return Err(Error::Parse(format!(
                "{}: binary field length {} is not a multiple of 8",
                path.display(),
                bytes.len()
            )));
        }
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect())
    }
}

/// Writes a per-cell field; format chosen by extension as in [`read_field_file`].
pub fn write_field_file(path: &Path, values: &[f64]) -> Result<()> {
    let is_text = matches!(
        path.extension().and_then(|e| e.to_str()),
        Some("csv") | Some("txt")
    );
    if is_text {
        let mut out = String::with_capacity(values.len() * 12);
        for v in values {
            out.push_str(&format!("{v}\n"));
        }
        std::fs::write(path, out)?;
    } else {
        let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
        std::fs::write(path, bytes)?;
    }
    Ok(())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RockSection {
    perm_x: FieldSource,
    perm_y: Option<FieldSource>,
    perm_z: Option<FieldSource>,
    porosity: FieldSource,
    #[serde(default)]
    compressibility: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CaseDocument {
    initial_pressure: f64,
    grid: Grid,
    rock: RockSection,
    fluid: FluidProperties,
    wells: Vec<WellSpec>,
    #[serde(default)]
    economics: EconomicParams,
    schedule: Schedule,
}

/// Parses a case document; relative field paths resolve against `base_dir`.
pub fn parse_case(text: &str, base_dir: &Path) -> Result<CaseModel> {
    let doc: CaseDocument = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    doc.grid.validate()?;
    let n = doc.grid.n_cells();
    let perm_x = doc.rock.perm_x.resolve(n, base_dir)?;
    let perm_y = match &doc.rock.perm_y {
        Some(src) => src.resolve(n, base_dir)?,
        None => perm_x.clone(),
    };
    let perm_z = match &doc.rock.perm_z {
        Some(src) => src.resolve(n, base_dir)?,
        None => perm_x.clone(),
    };
    let rock = RockProperties {
        perm_x,
        perm_y,
        perm_z,
        porosity: doc.rock.porosity.resolve(n, base_dir)?,
        compressibility: doc.rock.compressibility,
    };
    CaseModel::new(
        doc.grid,
        rock,
        doc.fluid,
        doc.wells,
        doc.economics,
        doc.schedule,
        doc.initial_pressure,
    )
}

pub fn load_case(path: &Path) -> Result<CaseModel> {
    let text = std::fs::read_to_string(path)?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    parse_case(&text, base)
}
