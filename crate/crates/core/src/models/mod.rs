//! The nine model families: parameter slots, admissibility, characteristic
//! functions, surface pricing and one-day transition laws.

mod cev;
mod cf;
mod cos;
mod fourier;
mod pricing;
mod sabr;
mod transition;
mod vg;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use cf::{char_fn, cumulants, Cumulants};
pub use fourier::{density_from_cf, DensityTable};
pub use pricing::{
    cf_price_surface, delta_surface, normalized_delta_surface, normalized_surface, price_surface,
};
pub use sabr::hagan_vol;
pub(crate) use transition::bin_masses;
pub use transition::{
    transition_law, transition_log_density, TransitionLaw, DEFAULT_LOG_DENSITY_FLOOR,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelFamily {
    BlackScholes,
    Cev,
    Heston,
    Sabr,
    Bates,
    Merton,
    Kou,
    VarianceGamma,
    Nig,
}

/// How a slot takes part in calibration and gridding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    /// Calibrated and gridded.
    Free,
    /// Current variance or volatility level; gridded like a parameter.
    State,
    /// Held at its default.
    Fixed,
}

/// Natural spacing of a slot on a grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Geometry {
    /// Positive scale: log-uniform spacing.
    Scale,
    /// Correlations, exponents, probabilities, signed sizes: uniform spacing.
    Shape,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamSpec {
    pub name: &'static str,
    pub role: Role,
    pub geometry: Geometry,
    /// Starting value for calibration (and default for fixed slots).
    pub typical: f64,
    /// Search box used by the calibrator.
    pub fit_lo: f64,
    pub fit_hi: f64,
}

const fn p(
    name: &'static str,
    role: Role,
    geometry: Geometry,
    typical: f64,
    fit_lo: f64,
    fit_hi: f64,
) -> ParamSpec {
    ParamSpec {
        name,
        role,
        geometry,
        typical,
        fit_lo,
        fit_hi,
    }
}

use Geometry::{Scale, Shape};
use Role::{Fixed, Free, State};

const BLACK_SCHOLES: [ParamSpec; 1] = [p("sigma", Free, Scale, 0.2, 0.01, 2.0)];
const CEV: [ParamSpec; 2] = [
    p("sigma", Free, Scale, 0.2, 0.01, 2.0),
    p("beta", Free, Shape, 0.5, 0.05, 1.0),
];
const HESTON: [ParamSpec; 5] = [
    p("kappa", Free, Scale, 2.0, 0.05, 20.0),
    p("theta", Free, Scale, 0.04, 0.001, 1.0),
    p("sigma_v", Free, Scale, 0.4, 0.01, 3.0),
    p("rho", Free, Shape, -0.7, -0.99, 0.99),
    p("v0", State, Scale, 0.04, 0.001, 1.0),
];
const SABR: [ParamSpec; 4] = [
    p("alpha", Free, Scale, 0.2, 0.01, 2.0),
    p("beta", Fixed, Shape, 0.5, 0.0, 1.0),
    p("rho", Free, Shape, -0.5, -0.99, 0.99),
    p("nu", Free, Scale, 0.8, 0.01, 5.0),
];
const BATES: [ParamSpec; 7] = [
    p("kappa", Free, Scale, 2.0, 0.05, 20.0),
    p("theta", Free, Scale, 0.04, 0.001, 1.0),
    p("sigma_v", Free, Scale, 0.3, 0.01, 3.0),
    p("rho", Free, Shape, -0.7, -0.99, 0.99),
    p("v0", State, Scale, 0.04, 0.001, 1.0),
    p("lambda_j", Free, Scale, 0.5, 0.0, 5.0),
    p("mu_j", Free, Shape, -0.08, -0.5, 0.5),
];
const MERTON: [ParamSpec; 4] = [
    p("sigma", Free, Scale, 0.15, 0.01, 2.0),
    p("lambda_j", Free, Scale, 0.5, 0.0, 5.0),
    p("mu_j", Free, Shape, -0.1, -0.5, 0.5),
    p("sigma_j", Free, Scale, 0.1, 0.005, 0.5),
];
const KOU: [ParamSpec; 4] = [
    p("sigma", Free, Scale, 0.15, 0.01, 2.0),
    p("lambda_j", Free, Scale, 0.5, 0.0, 5.0),
    p("p_up", Free, Shape, 0.3, 0.0, 1.0),
    p("eta", Free, Scale, 10.0, 1.5, 100.0),
];
const VARIANCE_GAMMA: [ParamSpec; 3] = [
    p("sigma", Free, Scale, 0.2, 0.01, 2.0),
    p("nu", Free, Scale, 0.2, 0.005, 2.0),
    p("theta", Free, Shape, -0.15, -1.0, 1.0),
];
const NIG: [ParamSpec; 3] = [
    p("alpha", Free, Scale, 8.0, 0.5, 100.0),
    p("beta", Free, Shape, -3.0, -50.0, 50.0),
    p("delta", Free, Scale, 0.3, 0.01, 3.0),
];

impl ModelFamily {
    pub const ALL: [ModelFamily; 9] = [
        ModelFamily::BlackScholes,
        ModelFamily::Cev,
        ModelFamily::Heston,
        ModelFamily::Sabr,
        ModelFamily::Bates,
        ModelFamily::Merton,
        ModelFamily::Kou,
        ModelFamily::VarianceGamma,
        ModelFamily::Nig,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelFamily::BlackScholes => "black_scholes",
            ModelFamily::Cev => "cev",
            ModelFamily::Heston => "heston",
            ModelFamily::Sabr => "sabr",
            ModelFamily::Bates => "bates",
            ModelFamily::Merton => "merton",
            ModelFamily::Kou => "kou",
            ModelFamily::VarianceGamma => "variance_gamma",
            ModelFamily::Nig => "nig",
        }
    }

    /// All parameter slots in storage order.
    pub fn slots(self) -> &'static [ParamSpec] {
        match self {
            ModelFamily::BlackScholes => &BLACK_SCHOLES,
            ModelFamily::Cev => &CEV,
            ModelFamily::Heston => &HESTON,
            ModelFamily::Sabr => &SABR,
            ModelFamily::Bates => &BATES,
            ModelFamily::Merton => &MERTON,
            ModelFamily::Kou => &KOU,
            ModelFamily::VarianceGamma => &VARIANCE_GAMMA,
            ModelFamily::Nig => &NIG,
        }
    }

    /// Number of free model parameters (state and fixed slots excluded).
    pub fn param_count(self) -> usize {
        self.slots().iter().filter(|s| s.role == Free).count()
    }

    /// Whether the family carries a volatility state.
    pub fn is_stochastic_vol(self) -> bool {
        matches!(
            self,
            ModelFamily::Heston | ModelFamily::Bates | ModelFamily::Sabr
        )
    }

    pub fn has_char_fn(self) -> bool {
        !matches!(self, ModelFamily::Cev | ModelFamily::Sabr)
    }

    pub fn slot_index(self, name: &str) -> Option<usize> {
        self.slots().iter().position(|s| s.name == name)
    }

    pub fn typical(self) -> ModelInstance {
        ModelInstance {
            family: self,
            params: self.slots().iter().map(|s| s.typical).collect(),
        }
    }
}

impl fmt::Display for ModelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace(['-', ' '], "_");
        let family = match key.as_str() {
            "black_scholes" | "bs" | "blackscholes" => ModelFamily::BlackScholes,
            "cev" => ModelFamily::Cev,
            "heston" => ModelFamily::Heston,
            "sabr" => ModelFamily::Sabr,
            "bates" => ModelFamily::Bates,
            "merton" => ModelFamily::Merton,
            "kou" => ModelFamily::Kou,
            "variance_gamma" | "vg" | "variancegamma" => ModelFamily::VarianceGamma,
            "nig" | "normal_inverse_gaussian" => ModelFamily::Nig,
            _ => return Err(Error::invalid(format!("unknown model family {s:?}"))),
        };
        Ok(family)
    }
}

/// A family with one concrete parameter vector, slots in [`ModelFamily::slots`] order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelInstance {
    pub family: ModelFamily,
    pub params: Vec<f64>,
}

impl ModelInstance {
    pub fn new(family: ModelFamily, params: Vec<f64>) -> Result<Self> {
        let m = ModelInstance { family, params };
        m.check()?;
        Ok(m)
    }

    /// Builds from `name=value` pairs; fixed slots may be omitted.
    pub fn from_named(family: ModelFamily, pairs: &[(&str, f64)]) -> Result<Self> {
        let slots = family.slots();
        let mut params: Vec<Option<f64>> = slots
            .iter()
            .map(|s| (s.role == Fixed).then_some(s.typical))
            .collect();
        for (name, value) in pairs {
            let i = family.slot_index(name).ok_or_else(|| Error::Inadmissible {
                family,
                message: format!("unknown parameter {name:?}"),
            })?;
            params[i] = Some(*value);
        }
        let params = params
            .into_iter()
            .zip(slots)
            .map(|(v, s)| {
                v.ok_or_else(|| Error::Inadmissible {
                    family,
                    message: format!("missing parameter {}", s.name),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(family, params)
    }

    pub fn get(&self, name: &str) -> f64 {
        let i = self
            .family
            .slot_index(name)
            .unwrap_or_else(|| panic!("{} has no slot {name}", self.family));
        self.params[i]
    }

    /// Current volatility state: `v0` for Heston and Bates (a variance), `alpha`
    /// for SABR (a volatility).
    pub fn vol_state(&self) -> Option<f64> {
        match self.family {
            ModelFamily::Heston | ModelFamily::Bates => Some(self.get("v0")),
            ModelFamily::Sabr => Some(self.get("alpha")),
            _ => None,
        }
    }

    pub fn is_admissible(&self) -> bool {
        self.check().is_ok()
    }

    /// Family admissibility, including the strip conditions the
    /// characteristic functions need.
    pub fn check(&self) -> Result<()> {
        let family = self.family;
        let bad = |message: String| Err(Error::Inadmissible { family, message });
        if self.params.len() != family.slots().len() {
            return bad(format!(
                "expected {} parameters, got {}",
                family.slots().len(),
                self.params.len()
            ));
        }
        if let Some((s, v)) = family
            .slots()
            .iter()
            .zip(&self.params)
            .find(|(_, v)| !v.is_finite())
        {
            return bad(format!("{} = {v} is not finite", s.name));
        }
        let x = &self.params;
        let positive = |names: &[&str]| -> Result<()> {
            for name in names {
                let v = self.get(name);
                if v <= 0.0 {
                    return Err(Error::Inadmissible {
                        family,
                        message: format!("{name} = {v} must be positive"),
                    });
                }
            }
            Ok(())
        };
        let non_negative = |names: &[&str]| -> Result<()> {
            for name in names {
                let v = self.get(name);
                if v < 0.0 {
                    return Err(Error::Inadmissible {
                        family,
                        message: format!("{name} = {v} must be non-negative"),
                    });
                }
            }
            Ok(())
        };
        let correlation = |v: f64| -> Result<()> {
            if v.abs() >= 1.0 {
                return Err(Error::Inadmissible {
                    family,
                    message: format!("rho = {v} must lie in (-1, 1)"),
                });
            }
            Ok(())
        };
        match family {
            ModelFamily::BlackScholes => positive(&["sigma"]),
            ModelFamily::Cev => {
                positive(&["sigma"])?;
                if !(x[1] > 0.0 && x[1] <= 1.0) {
                    return bad(format!("beta = {} must lie in (0, 1]", x[1]));
                }
                Ok(())
            }
            ModelFamily::Heston => {
                positive(&["kappa", "theta", "sigma_v", "v0"])?;
                correlation(self.get("rho"))
            }
            ModelFamily::Sabr => {
                positive(&["alpha"])?;
                non_negative(&["nu"])?;
                let beta = self.get("beta");
                if !(0.0..=1.0).contains(&beta) {
                    return bad(format!("beta = {beta} must lie in [0, 1]"));
                }
                correlation(self.get("rho"))
            }
            ModelFamily::Bates => {
                positive(&["kappa", "theta", "sigma_v", "v0"])?;
                non_negative(&["lambda_j"])?;
                correlation(self.get("rho"))
            }
            ModelFamily::Merton => {
                positive(&["sigma"])?;
                non_negative(&["lambda_j", "sigma_j"])
            }
            ModelFamily::Kou => {
                positive(&["sigma"])?;
                non_negative(&["lambda_j"])?;
                let p_up = self.get("p_up");
                if !(0.0..=1.0).contains(&p_up) {
                    return bad(format!("p_up = {p_up} must lie in [0, 1]"));
                }
                if self.get("eta") <= 1.0 {
                    return bad(format!(
                        "eta = {} must exceed 1 for a finite forward",
                        self.get("eta")
                    ));
                }
                Ok(())
            }
            ModelFamily::VarianceGamma => {
                positive(&["sigma", "nu"])?;
                let (sigma, nu, theta) = (x[0], x[1], x[2]);
                let margin = 1.0 - theta * nu - 0.5 * sigma * sigma * nu;
                if margin <= 0.0 {
                    return bad(format!(
                        "1 - theta nu - sigma^2 nu / 2 = {margin} must be positive"
                    ));
                }
                Ok(())
            }
            ModelFamily::Nig => {
                positive(&["alpha", "delta"])?;
                let (alpha, beta) = (x[0], x[1]);
                if alpha <= beta.abs() || alpha <= (beta + 1.0).abs() {
                    return bad(format!(
                        "need alpha > |beta| and alpha > |beta + 1| (alpha {alpha}, beta {beta})"
                    ));
                }
                Ok(())
            }
        }
    }

    /// Parses `family,name=value,...`.
    pub fn parse_line(line: &str) -> Result<Self> {
        let mut fields = line.split(',').map(str::trim);
        let family: ModelFamily = fields.next().unwrap_or_default().parse()?;
        let mut pairs = Vec::new();
        for field in fields {
            if field.is_empty() {
                continue;
            }
            let (name, value) = field
                .split_once('=')
                .ok_or_else(|| Error::invalid(format!("expected name=value, found {field:?}")))?;
            let value: f64 = value
                .trim()
                .parse()
                .map_err(|_| Error::invalid(format!("bad number in {field:?}")))?;
            pairs.push((name.trim(), value));
        }
        Self::from_named(family, &pairs)
    }
}

impl fmt::Display for ModelInstance {
    /// `family,name=value,...` with values that round-trip exactly.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.family.name())?;
        for (s, v) in self.family.slots().iter().zip(&self.params) {
            write!(f, ",{}={}", s.name, v)?;
        }
        Ok(())
    }
}

impl FromStr for ModelInstance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::parse_line(s)
    }
}
