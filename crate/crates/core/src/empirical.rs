//! The rank-based nonparametric estimator of the stable tail dependence
//! function and exact integration of monomial weights against it.
//!
//! With thresholds `a_ij = (n + 1/2 - R_i^j) / k`, the estimator is
//!
//! ```text
//! l_hat(x) = (1/k) #{ i : x_j > a_ij for some j }.
//! ```
//!
//! Each observation contributes the indicator of the complement of the
//! box `[0, a_i1] x ... x [0, a_id]`, so integrals of monomials over the
//! unit cube are available in closed form.

use crate::error::{Error, Result};
use crate::sample::{compute_ranks, RankMatrix, Sample};
use crate::util::pairwise_sum;
use crate::weights::WeightSpec;

#[derive(Debug, Clone)]
pub struct EmpiricalStdf {
    thresholds: Vec<f64>,
    n: usize,
    d: usize,
    k: usize,
}

impl EmpiricalStdf {
    pub fn new(ranks: &RankMatrix, k: usize) -> Result<Self> {
        let (n, d) = (ranks.n(), ranks.d());
        if k == 0 || k > n {
            return Err(Error::Config(format!("threshold k = {k} must lie in 1..={n}")));
        }
        let kf = k as f64;
        let offset = n as f64 + 0.5;
        let mut thresholds = Vec::with_capacity(n * d);
        for i in 0..n {
            thresholds.extend(ranks.row(i).iter().map(|&r| (offset - r as f64) / kf));
        }
        Ok(EmpiricalStdf { thresholds, n, d, k })
    }

    pub fn from_sample(sample: &Sample, k: usize) -> Result<Self> {
        Self::new(&compute_ranks(sample), k)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn threshold_row(&self, i: usize) -> &[f64] {
        &self.thresholds[i * self.d..(i + 1) * self.d]
    }

    /// `l_hat(x)`; `x` must be componentwise nonnegative.
    pub fn eval(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.d);
        let count = self
            .thresholds
            .chunks_exact(self.d)
            .filter(|row| row.iter().zip(x).any(|(&a, &xj)| xj > a))
            .count();
        count as f64 / self.k as f64
    }

    /// Exact values of `integral over [0,1]^d of g_m(x) l_hat(x) dx` for each `m`.
    pub fn integrate(&self, g: &WeightSpec) -> Vec<f64> {
        let basis = g.basis();
        let d = self.d;
        let mut per_basis = Vec::with_capacity(basis.len());
        let mut contributions = vec![0.0; self.n];
        for exps in &basis.exponents {
            let full: f64 = exps.iter().map(|&p| 1.0 / (p + 1.0)).product();
            for (c, row) in contributions.iter_mut().zip(self.thresholds.chunks_exact(d)) {
                let boxed: f64 = row
                    .iter()
                    .zip(exps)
                    .map(|(&a, &p)| {
                        let c = a.clamp(0.0, 1.0);
                        c.powf(p + 1.0) / (p + 1.0)
                    })
                    .product();
                *c = full - boxed;
            }
            per_basis.push(pairwise_sum(&contributions) / self.k as f64);
        }
        basis.combine(&per_basis, 1)
    }
}
