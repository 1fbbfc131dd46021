use serde::{Deserialize, Serialize};

use super::logistic::{check_theta, logistic_dtheta, logistic_l, logistic_partials_into};
use crate::error::{Error, Result};

/// Bivariate asymmetric logistic model
///
/// ```text
/// l(x, y) = (1 - psi1) x + (1 - psi2) y + ((psi1 x)^{1/theta} + (psi2 y)^{1/theta})^theta
/// ```
///
/// Its parameter vector is `(theta, eta1, eta2)` with
/// `eta1 = (psi1 + psi2) / 2` and `eta2 = (psi1 - psi2) / 2`, so symmetry
/// is the hypothesis `eta2 = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymLogistic {
    theta: f64,
    psi1: f64,
    psi2: f64,
}

fn check_psi(name: &str, psi: f64) -> Result<()> {
    if (0.0..=1.0).contains(&psi) {
        Ok(())
    } else {
        Err(Error::ParameterDomain {
            name: name.into(),
            value: psi,
            domain: "[0, 1]".into(),
        })
    }
}

impl AsymLogistic {
    pub fn new(theta: f64, psi1: f64, psi2: f64) -> Result<Self> {
        check_theta(theta)?;
        check_psi("psi1", psi1)?;
        check_psi("psi2", psi2)?;
        Ok(AsymLogistic { theta, psi1, psi2 })
    }

    /// Symmetric submodel `psi1 = psi2 = psi`.
    pub fn symmetric(theta: f64, psi: f64) -> Result<Self> {
        Self::new(theta, psi, psi)
    }

    pub fn from_eta(theta: f64, eta1: f64, eta2: f64) -> Result<Self> {
        let tol = 1e-12;
        if !(-tol..=1.0 + tol).contains(&eta1) {
            return Err(Error::ParameterDomain {
                name: "eta1".into(),
                value: eta1,
                domain: "[0, 1]".into(),
            });
        }
        if eta2.abs() > eta1.min(1.0 - eta1) + tol {
            return Err(Error::ParameterDomain {
                name: "eta2".into(),
                value: eta2,
                domain: format!("|eta2| <= min(eta1, 1 - eta1) = {}", eta1.min(1.0 - eta1)),
            });
        }
        let psi1 = (eta1 + eta2).clamp(0.0, 1.0);
        let psi2 = (eta1 - eta2).clamp(0.0, 1.0);
        Self::new(theta, psi1, psi2)
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn psi(&self) -> (f64, f64) {
        (self.psi1, self.psi2)
    }

    pub fn eta(&self) -> (f64, f64) {
        (0.5 * (self.psi1 + self.psi2), 0.5 * (self.psi1 - self.psi2))
    }

    pub fn stdf(&self, x: &[f64]) -> f64 {
        alog_l(self.theta, self.psi1, self.psi2, x[0], x[1])
    }

    pub fn partials(&self, x: &[f64], out: &mut [f64]) {
        let [a, b] = alog_partials(self.theta, self.psi1, self.psi2, x[0], x[1]);
        out[0] = a;
        out[1] = b;
    }

    /// Derivatives with respect to `(theta, eta1, eta2)`.
    pub fn param_gradient(&self, x: &[f64], out: &mut [f64]) {
        let (x, y) = (x[0], x[1]);
        let u = [self.psi1 * x, self.psi2 * y];
        let mut du = [0.0; 2];
        logistic_partials_into(self.theta, &u, &mut du);
        let d_theta = logistic_dtheta(self.theta, &u);
        let d_psi1 = -x + x * du[0];
        let d_psi2 = -y + y * du[1];
        out[0] = d_theta;
        out[1] = d_psi1 + d_psi2;
        out[2] = d_psi1 - d_psi2;
    }
}

pub fn alog_l(theta: f64, psi1: f64, psi2: f64, x: f64, y: f64) -> f64 {
    if psi1 == psi2 {
        return (1.0 - psi1) * (x + y) + psi1 * logistic_l(theta, &[x, y]);
    }
    (1.0 - psi1) * x + (1.0 - psi2) * y + logistic_l(theta, &[psi1 * x, psi2 * y])
}

/// Checked evaluation.
pub fn alog_stdf(theta: f64, psi1: f64, psi2: f64, x: f64, y: f64) -> Result<f64> {
    AsymLogistic::new(theta, psi1, psi2).map(|m| m.stdf(&[x, y]))
}

/// Right-hand partial derivatives in `x` and `y`.
pub fn alog_partials(theta: f64, psi1: f64, psi2: f64, x: f64, y: f64) -> [f64; 2] {
    let mut du = [0.0; 2];
    logistic_partials_into(theta, &[psi1 * x, psi2 * y], &mut du);
    [(1.0 - psi1) + psi1 * du[0], (1.0 - psi2) + psi2 * du[1]]
}
