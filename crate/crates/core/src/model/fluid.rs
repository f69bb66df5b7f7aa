use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Corey relative permeability parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoreyParams {
    pub swc: f64,
    pub sor: f64,
    pub krw_end: f64,
    pub kro_end: f64,
    pub nw_exp: f64,
    pub no_exp: f64,
}

impl Default for CoreyParams {
    fn default() -> Self {
        CoreyParams {
            swc: 0.2,
            sor: 0.2,
            krw_end: 0.7,
            kro_end: 1.0,
            nw_exp: 2.0,
            no_exp: 2.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum RelPermModel {
    /// `k_rw = S_w`, `k_ro = 1 - S_w`.
    StraightLine,
    Corey(CoreyParams),
}

impl Default for RelPermModel {
    fn default() -> Self {
        RelPermModel::Corey(CoreyParams::default())
    }
}

impl RelPermModel {
    pub fn validate(&self) -> Result<()> {
        if let RelPermModel::Corey(c) = self {
            let ok = (0.0..1.0).contains(&c.swc)
                && (0.0..1.0).contains(&c.sor)
                && c.swc + c.sor < 1.0
                && c.krw_end > 0.0
                && c.krw_end <= 1.0
                && c.kro_end > 0.0
                && c.kro_end <= 1.0
                && c.nw_exp > 0.0
                && c.no_exp > 0.0;
            if !ok {
                return Err(Error::Config(format!("invalid Corey parameters {c:?}")));
            }
        }
        Ok(())
    }

    /// Connate water saturation (zero for straight-line curves).
    pub fn connate_water(&self) -> f64 {
        match self {
            RelPermModel::StraightLine => 0.0,
            RelPermModel::Corey(c) => c.swc,
        }
    }

    /// Largest water saturation reachable by displacement.
    pub fn max_water(&self) -> f64 {
        match self {
            RelPermModel::StraightLine => 1.0,
            RelPermModel::Corey(c) => 1.0 - c.sor,
        }
    }

    /// `(k_rw, k_ro)` without domain checking; saturations are clamped.
    #[inline]
    pub fn eval(&self, s_w: f64) -> (f64, f64) {
        match self {
            RelPermModel::StraightLine => {
                let s = s_w.clamp(0.0, 1.0);
                (s, 1.0 - s)
            }
            RelPermModel::Corey(c) => {
                let sn = ((s_w - c.swc) / (1.0 - c.swc - c.sor)).clamp(0.0, 1.0);
                (c.krw_end * pow(sn, c.nw_exp), c.kro_end * pow(1.0 - sn, c.no_exp))
            }
        }
    }
}

#[inline]
fn pow(x: f64, e: f64) -> f64 {
    if e == 2.0 {
        x * x
    } else if e == 1.0 {
        x
    } else {
        x.powf(e)
    }
}

/// Relative permeabilities `(k_rw, k_ro)` at water saturation `s_w`.
pub fn rel_perm(s_w: f64, model: &RelPermModel) -> Result<(f64, f64)> {
    if !(0.0..=1.0).contains(&s_w) {
        return Err(Error::Domain(format!("water saturation {s_w} outside [0, 1]")));
    }
    Ok(model.eval(s_w))
}

/// Oil-water fluid description. Formation volume factors are constant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FluidProperties {
    pub mu_o: f64,
    pub mu_w: f64,
    #[serde(default = "default_fvf")]
    pub b_o: f64,
    #[serde(default = "default_fvf")]
    pub b_w: f64,
    #[serde(default = "default_compressibility")]
    pub c_o: f64,
    #[serde(default = "default_compressibility")]
    pub c_w: f64,
    #[serde(default = "default_rho_o")]
    pub rho_o: f64,
    #[serde(default = "default_rho_w")]
    pub rho_w: f64,
    #[serde(default)]
    pub relperm: RelPermModel,
    /// Initial water saturation; connate water when omitted.
    #[serde(default)]
    pub initial_sw: Option<f64>,
}

fn default_fvf() -> f64 {
    1.075
}
fn default_compressibility() -> f64 {
    1e-5
}
fn default_rho_o() -> f64 {
    53.10
}
fn default_rho_w() -> f64 {
    64.79
}

impl Default for FluidProperties {
    fn default() -> Self {
        FluidProperties {
            mu_o: 3.0,
            mu_w: 1.0,
            b_o: default_fvf(),
            b_w: default_fvf(),
            c_o: default_compressibility(),
            c_w: default_compressibility(),
            rho_o: default_rho_o(),
            rho_w: default_rho_w(),
            relperm: RelPermModel::default(),
            initial_sw: None,
        }
    }
}

impl FluidProperties {
    /// Unit-mobility fluid: equal viscosities and straight-line curves.
    pub fn unit_mobility() -> Self {
        FluidProperties {
            mu_o: 1.0,
            mu_w: 1.0,
            relperm: RelPermModel::StraightLine,
            ..FluidProperties::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("mu_o", self.mu_o),
            ("mu_w", self.mu_w),
            ("b_o", self.b_o),
            ("b_w", self.b_w),
        ] {
            if !(v > 0.0) {
                return Err(Error::Config(format!("{name} must be > 0, got {v}")));
            }
        }
        if self.c_o < 0.0 || self.c_w < 0.0 {
            return Err(Error::Config("fluid compressibilities must be >= 0".into()));
        }
        self.relperm.validate()?;
        if let Some(s) = self.initial_sw {
            if !(0.0..=1.0).contains(&s) {
                return Err(Error::Config(format!("initial_sw {s} outside [0, 1]")));
            }
        }
        Ok(())
    }

    /// Mobility ratio `mu_o / mu_w`.
    pub fn mobility_ratio(&self) -> f64 {
        self.mu_o / self.mu_w
    }

    pub fn initial_water(&self) -> f64 {
        self.initial_sw.unwrap_or_else(|| self.relperm.connate_water())
    }

    /// Phase mobilities `(lambda_w, lambda_o)` in 1/cp.
    #[inline]
    pub fn mobilities(&self, s_w: f64) -> (f64, f64) {
        let (krw, kro) = self.relperm.eval(s_w);
        (krw / self.mu_w, kro / self.mu_o)
    }

    /// Water fractional flow `lambda_w / lambda_t`.
    #[inline]
    pub fn fractional_flow(&self, s_w: f64) -> f64 {
        let (lw, lo) = self.mobilities(s_w);
        let lt = lw + lo;
        if lt > 0.0 {
            lw / lt
        } else {
            0.0
        }
    }

    /// Fluid part of the total compressibility at saturation `s_w`.
    pub fn fluid_compressibility(&self, s_w: f64) -> f64 {
        s_w * self.c_w + (1.0 - s_w) * self.c_o
    }
}
