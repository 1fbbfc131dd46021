//! Parameter spaces: coordinate boxes plus linear inequality constraints.

use serde::{Deserialize, Serialize};

/// `coefs . theta <= upper`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearConstraint {
    pub coefs: Vec<f64>,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSpace {
    pub names: Vec<String>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub constraints: Vec<LinearConstraint>,
}

impl ParameterSpace {
    pub fn boxed(names: Vec<String>, lower: Vec<f64>, upper: Vec<f64>) -> Self {
        ParameterSpace {
            names,
            lower,
            upper,
            constraints: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    /// Smallest slack over all box and linear constraints; negative when
    /// `theta` is infeasible.
    pub fn min_slack(&self, theta: &[f64]) -> f64 {
        let mut slack = f64::INFINITY;
        for ((&t, &lo), &hi) in theta.iter().zip(&self.lower).zip(&self.upper) {
            slack = slack.min(t - lo).min(hi - t);
        }
        for c in &self.constraints {
            let v: f64 = c.coefs.iter().zip(theta).map(|(a, t)| a * t).sum();
            slack = slack.min(c.upper - v);
        }
        slack
    }

    pub fn contains(&self, theta: &[f64], tol: f64) -> bool {
        theta.len() == self.dim() && theta.iter().all(|t| t.is_finite()) && self.min_slack(theta) >= -tol
    }

    pub fn width(&self, i: usize) -> f64 {
        self.upper[i] - self.lower[i]
    }
}
