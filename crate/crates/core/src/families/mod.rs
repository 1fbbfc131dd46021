//! Parametric stable tail dependence families.

mod alog;
mod factor;
mod logistic;
mod phi;

pub use alog::{alog_l, alog_partials, alog_stdf, AsymLogistic};
pub use factor::FactorModel;
pub use logistic::{logistic_l, logistic_partials, logistic_stdf, Logistic, THETA_MAX_BRANCH};
pub use phi::{integrate_homogeneous, phi, phi_jacobian, PHI_FD_STEP};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{LinearConstraint, ParameterSpace};
use crate::sample::stdf_bounds_check;
use crate::util::{logistic_sigmoid, logit};

/// A parametric stable tail dependence function.
#[derive(Debug, Clone, PartialEq)]
pub enum Family {
    Logistic(Logistic),
    AsymLogistic(AsymLogistic),
    Factor(FactorModel),
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::Logistic(_) => "logistic",
            Family::AsymLogistic(_) => "alog",
            Family::Factor(_) => "factor",
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Family::Logistic(m) => m.d(),
            Family::AsymLogistic(_) => 2,
            Family::Factor(m) => m.d(),
        }
    }

    pub fn n_params(&self) -> usize {
        match self {
            Family::Logistic(_) => 1,
            Family::AsymLogistic(_) => 3,
            Family::Factor(m) => (m.r() - 1) * m.d(),
        }
    }

    /// Parameter vector: `theta` (logistic), `(theta, eta1, eta2)` (alog),
    /// stacked loading columns (factor).
    pub fn params(&self) -> Vec<f64> {
        match self {
            Family::Logistic(m) => vec![m.theta()],
            Family::AsymLogistic(m) => {
                let (e1, e2) = m.eta();
                vec![m.theta(), e1, e2]
            }
            Family::Factor(m) => m.params(),
        }
    }

    /// Same family and shape with a new parameter vector.
    pub fn with_params(&self, theta: &[f64]) -> Result<Family> {
        if theta.len() != self.n_params() {
            return Err(Error::Config(format!(
                "{} model takes {} parameters, got {}",
                self.name(),
                self.n_params(),
                theta.len()
            )));
        }
        Ok(match self {
            Family::Logistic(m) => Family::Logistic(Logistic::new(m.d(), theta[0])?),
            Family::AsymLogistic(_) => Family::AsymLogistic(AsymLogistic::from_eta(theta[0], theta[1], theta[2])?),
            Family::Factor(m) => Family::Factor(FactorModel::from_stacked(m.d(), m.r(), theta)?),
        })
    }

    pub fn param_names(&self) -> Vec<String> {
        match self {
            Family::Logistic(_) => vec!["theta".into()],
            Family::AsymLogistic(_) => vec!["theta".into(), "eta1".into(), "eta2".into()],
            Family::Factor(m) => (0..m.r() - 1)
                .flat_map(|i| (0..m.d()).map(move |j| format!("b[{}][{}]", j + 1, i + 1)))
                .collect(),
        }
    }

    pub fn param_space(&self) -> ParameterSpace {
        let names = self.param_names();
        match self {
            Family::Logistic(_) => ParameterSpace::boxed(names, vec![0.0], vec![1.0]),
            Family::AsymLogistic(_) => {
                let mut s = ParameterSpace::boxed(names, vec![0.0, 0.0, -0.5], vec![1.0, 1.0, 0.5]);
                // |eta2| <= eta1 and |eta2| <= 1 - eta1
                for (c1, c2, upper) in [(-1.0, 1.0, 0.0), (-1.0, -1.0, 0.0), (1.0, 1.0, 1.0), (1.0, -1.0, 1.0)] {
                    s.constraints.push(LinearConstraint {
                        coefs: vec![0.0, c1, c2],
                        upper,
                    });
                }
                s
            }
            Family::Factor(m) => {
                let p = self.n_params();
                let mut s = ParameterSpace::boxed(names, vec![0.0; p], vec![1.0; p]);
                for j in 0..m.d() {
                    let mut coefs = vec![0.0; p];
                    for i in 0..m.r() - 1 {
                        coefs[i * m.d() + j] = 1.0;
                    }
                    s.constraints.push(LinearConstraint { coefs, upper: 1.0 });
                }
                s
            }
        }
    }

    pub fn stdf(&self, x: &[f64]) -> f64 {
        let v = match self {
            Family::Logistic(m) => m.stdf(x),
            Family::AsymLogistic(m) => m.stdf(x),
            Family::Factor(m) => m.stdf(x),
        };
        debug_assert!(
            !x.iter().all(|&v| v >= 0.0) || stdf_bounds_check(v, x),
            "{} stdf {v} at {x:?} violates max/sum bounds",
            self.name()
        );
        v
    }

    /// Right-hand partial derivatives in `x`.
    pub fn partials(&self, x: &[f64], out: &mut [f64]) {
        match self {
            Family::Logistic(m) => m.partials(x, out),
            Family::AsymLogistic(m) => m.partials(x, out),
            Family::Factor(m) => m.partials(x, out),
        }
    }

    /// Analytic `d l / d theta`, when the family provides it.
    pub fn param_gradient(&self, x: &[f64], out: &mut [f64]) -> bool {
        match self {
            Family::Logistic(m) => {
                out[0] = m.dtheta(x);
                true
            }
            Family::AsymLogistic(m) => {
                m.param_gradient(x, out);
                true
            }
            Family::Factor(_) => false,
        }
    }

    /// A member of the family named by `model` (`logistic`, `alog` or
    /// `factor:R`) in dimension `d`, for use as a shape template.
    pub fn template(model: &str, d: usize) -> Result<Family> {
        let model = model.trim();
        match model {
            "logistic" => Ok(Family::Logistic(Logistic::new(d, 0.5)?)),
            "alog" => {
                if d != 2 {
                    return Err(Error::Config(format!(
                        "the asymmetric logistic model is bivariate, data have {d} columns"
                    )));
                }
                Ok(Family::AsymLogistic(AsymLogistic::symmetric(0.5, 0.5)?))
            }
            _ => {
                let r = model
                    .strip_prefix("factor:")
                    .and_then(|r| r.trim().parse::<usize>().ok())
                    .filter(|&r| r >= 1)
                    .ok_or_else(|| Error::Config(format!("unknown model {model:?}; use logistic, alog or factor:R")))?;
                let b = vec![1.0 / r as f64; d * r];
                Ok(Family::Factor(FactorModel::new(d, r, b)?))
            }
        }
    }

    /// The member of `model` with parameter vector `params`; factor
    /// parameters are the stacked first `r - 1` loading columns.
    pub fn from_model(model: &str, d: usize, params: &[f64]) -> Result<Family> {
        let template = Family::template(model, d)?;
        if let Family::Factor(m) = &template {
            return Ok(Family::Factor(FactorModel::from_stacked(d, m.r(), params)?));
        }
        if params.len() != template.n_params() {
            return Err(Error::Config(format!(
                "{} needs {} parameters, got {}",
                template.name(),
                template.n_params(),
                params.len()
            )));
        }
        template.with_params(params)
    }

    /// Maps the parameter vector to unconstrained coordinates.
    pub fn to_unconstrained(&self) -> Vec<f64> {
        match self {
            Family::Logistic(m) => vec![logit(m.theta())],
            Family::AsymLogistic(m) => {
                let (p1, p2) = m.psi();
                vec![logit(m.theta()), logit(p1), logit(p2)]
            }
            Family::Factor(m) => {
                let (d, r) = (m.d(), m.r());
                let mut u = vec![0.0; (r - 1) * d];
                for j in 0..d {
                    let last = m.loading(r - 1, j).max(1e-300);
                    for i in 0..r - 1 {
                        let v = m.loading(i, j).max(1e-300);
                        u[i * d + j] = (v / last).ln().clamp(-700.0, 700.0);
                    }
                }
                u
            }
        }
    }

    /// Inverse of [`Family::to_unconstrained`]; every finite input maps
    /// to an interior point.
    pub fn from_unconstrained(&self, u: &[f64]) -> Result<Family> {
        Ok(match self {
            Family::Logistic(m) => Family::Logistic(Logistic::new(m.d(), logistic_sigmoid(u[0]).max(1e-300))?),
            Family::AsymLogistic(_) => Family::AsymLogistic(AsymLogistic::new(
                logistic_sigmoid(u[0]).max(1e-300),
                logistic_sigmoid(u[1]),
                logistic_sigmoid(u[2]),
            )?),
            Family::Factor(m) => {
                let (d, r) = (m.d(), m.r());
                let mut b = vec![0.0; d * r];
                for j in 0..d {
                    let top = (0..r - 1).map(|i| u[i * d + j]).fold(0.0_f64, f64::max);
                    let mut total = (-top).exp();
                    for i in 0..r - 1 {
                        let e = (u[i * d + j] - top).exp();
                        b[j * r + i] = e;
                        total += e;
                    }
                    b[j * r + r - 1] = (-top).exp();
                    for i in 0..r {
                        b[j * r + i] /= total;
                    }
                }
                Family::Factor(FactorModel::new(d, r, b)?)
            }
        })
    }

    /// Canonical representative (factor columns sorted); identity otherwise.
    pub fn canonical(&self) -> Family {
        match self {
            Family::Factor(m) => Family::Factor(m.canonical()),
            other => other.clone(),
        }
    }

    pub fn to_json(&self) -> FamilyJson {
        let (r, b) = match self {
            Family::Factor(m) => (Some(m.r()), Some(m.rows())),
            _ => (None, None),
        };
        FamilyJson {
            family: self.name().to_string(),
            d: self.dim(),
            params: self.params(),
            r,
            b,
            theta: match self {
                Family::Factor(m) => Some(m.canonical().params()),
                _ => None,
            },
        }
    }

    pub fn from_json(json: &FamilyJson) -> Result<Family> {
        match json.family.as_str() {
            "logistic" => Ok(Family::Logistic(Logistic::new(
                json.d,
                *json
                    .params
                    .first()
                    .ok_or_else(|| Error::Config("missing theta".into()))?,
            )?)),
            "alog" => {
                if json.params.len() != 3 {
                    return Err(Error::Config("alog takes (theta, eta1, eta2)".into()));
                }
                Ok(Family::AsymLogistic(AsymLogistic::from_eta(
                    json.params[0],
                    json.params[1],
                    json.params[2],
                )?))
            }
            "factor" => {
                let rows = json
                    .b
                    .as_ref()
                    .ok_or_else(|| Error::Config("factor model needs the loading matrix b".into()))?;
                let r = rows.first().map_or(0, Vec::len);
                Ok(Family::Factor(FactorModel::new(rows.len(), r, rows.concat())?))
            }
            other => Err(Error::Config(format!("unknown family {other:?}"))),
        }
    }
}

/// Serialized form of a fitted family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyJson {
    pub family: String,
    pub d: usize,
    pub params: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub r: Option<usize>,
    /// Loadings, one row per coordinate, one column per factor.
    #[serde(rename = "B", skip_serializing_if = "Option::is_none", default)]
    pub b: Option<Vec<Vec<f64>>>,
    /// Canonical parameter vector of a factor model.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub theta: Option<Vec<f64>>,
}

impl Serialize for Family {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_json().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Family {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let json = FamilyJson::deserialize(d)?;
        Family::from_json(&json).map_err(serde::de::Error::custom)
    }
}
