//! Interpolated moment maps for one-parameter families.

use rayon::prelude::*;

use super::{CubatureMoments, MomentMap};
use crate::error::{Error, Result};
use crate::families::Family;

/// `phi` of a one-parameter family interpolated in the parameter at
/// Chebyshev points of the second kind on `[lo, hi]`; parameters outside
/// the interval fall back to `exact`.
///
/// The moments do not depend on the data, so one table serves every
/// replication and every `k` of a study.
#[derive(Debug, Clone)]
pub struct TabulatedMoments {
    lo: f64,
    hi: f64,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    values: Vec<Vec<f64>>,
    exact: CubatureMoments,
}

impl TabulatedMoments {
    pub fn new(template: &Family, exact: CubatureMoments, lo: f64, hi: f64, degree: usize) -> Result<Self> {
        if template.n_params() != 1 {
            return Err(Error::Config("tabulation needs a one-parameter family".into()));
        }
        if !(lo < hi) || degree < 2 {
            return Err(Error::Config("invalid tabulation interval".into()));
        }
        let nodes: Vec<f64> = (0..=degree)
            .map(|j| {
                let c = (std::f64::consts::PI * j as f64 / degree as f64).cos();
                0.5 * (lo + hi) + 0.5 * (hi - lo) * c
            })
            .collect();
        let weights: Vec<f64> = (0..=degree)
            .map(|j| {
                let s = if j % 2 == 0 { 1.0 } else { -1.0 };
                if j == 0 || j == degree {
                    0.5 * s
                } else {
                    s
                }
            })
            .collect();
        let values = nodes
            .par_iter()
            .map(|&t| exact.phi(&template.with_params(&[t])?))
            .collect::<Result<Vec<_>>>()?;
        Ok(TabulatedMoments {
            lo,
            hi,
            nodes,
            weights,
            values,
            exact,
        })
    }

    fn interpolate(&self, t: f64) -> Vec<f64> {
        let q = self.values[0].len();
        let mut num = vec![0.0; q];
        let mut den = 0.0;
        for ((&x, &w), v) in self.nodes.iter().zip(&self.weights).zip(&self.values) {
            let diff = t - x;
            if diff == 0.0 {
                return v.clone();
            }
            let c = w / diff;
            den += c;
            for (n, vi) in num.iter_mut().zip(v) {
                *n += c * vi;
            }
        }
        num.iter().map(|n| n / den).collect()
    }
}

impl MomentMap for TabulatedMoments {
    fn phi(&self, family: &Family) -> Result<Vec<f64>> {
        let t = family.params()[0];
        if (self.lo..=self.hi).contains(&t) {
            Ok(self.interpolate(t))
        } else {
            self.exact.phi(family)
        }
    }
}
