//! Seeded samplers for the max-stable laws of the implemented families.
//!
//! Replication `r` of a study with master seed `s` draws from
//! `ChaCha8Rng::seed_from_u64(s)` on stream `r`; streams are independent,
//! so replications can be generated in any order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::families::{AsymLogistic, FactorModel, Family, Logistic};
use crate::sample::Sample;

/// Generator for replication `stream` under master `seed`.
pub fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Unit Frechet variate `1 / E`.
pub fn frechet<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let e: f64 = Exp1.sample(rng);
    1.0 / e
}

/// Positive stable variate with Laplace transform `exp(-t^alpha)`,
/// `0 < alpha < 1`, by Kanter's representation (the Chambers-Mallows-Stuck
/// transform specialised to total skewness).
pub fn positive_stable<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> f64 {
    let u: f64 = std::f64::consts::PI * rng.gen::<f64>();
    let w: f64 = Exp1.sample(rng);
    let a = (alpha * u).sin() / u.sin().powf(1.0 / alpha);
    let b = (((1.0 - alpha) * u).sin() / w).powf((1.0 - alpha) / alpha);
    a * b
}

/// One logistic draw: with `S` positive stable of index `theta` and `E_j`
/// unit exponential, `X_j = (S / E_j)^theta`.
fn logistic_row<R: Rng + ?Sized>(theta: f64, out: &mut [f64], rng: &mut R) {
    if theta >= 1.0 {
        out.iter_mut().for_each(|x| *x = frechet(rng));
        return;
    }
    let s = positive_stable(theta, rng);
    for x in out.iter_mut() {
        let e: f64 = Exp1.sample(rng);
        *x = (s / e).powf(theta);
    }
}

pub fn sample_logistic_with<R: Rng + ?Sized>(theta: f64, d: usize, n: usize, rng: &mut R) -> Result<Sample> {
    Logistic::new(d, theta)?;
    let mut data = vec![0.0; n * d];
    for row in data.chunks_mut(d) {
        logistic_row(theta, row, rng);
    }
    Sample::new(data, n, d)
}

/// `n` draws from the `d`-variate logistic max-stable law with unit
/// Frechet margins.
pub fn sample_logistic(theta: f64, d: usize, n: usize, seed: u64) -> Result<Sample> {
    sample_logistic_with(theta, d, n, &mut substream(seed, 0))
}

pub fn sample_alog_with<R: Rng + ?Sized>(model: &AsymLogistic, n: usize, rng: &mut R) -> Result<Sample> {
    let theta = model.theta();
    let (p1, p2) = model.psi();
    let mut data = vec![0.0; 2 * n];
    let mut v = [0.0; 2];
    for row in data.chunks_mut(2) {
        let z1 = frechet(rng);
        let z2 = frechet(rng);
        logistic_row(theta, &mut v, rng);
        row[0] = ((1.0 - p1) * z1).max(p1 * v[0]);
        row[1] = ((1.0 - p2) * z2).max(p2 * v[1]);
    }
    Sample::new(data, n, 2)
}

/// `n` pairs `(max((1 - psi1) Z1, psi1 V1), max((1 - psi2) Z2, psi2 V2))`
/// with `Z` independent unit Frechet and `V` bivariate logistic.
pub fn sample_alog(theta: f64, psi1: f64, psi2: f64, n: usize, seed: u64) -> Result<Sample> {
    let model = AsymLogistic::new(theta, psi1, psi2)?;
    sample_alog_with(&model, n, &mut substream(seed, 0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FactorForm {
    /// `X_j = max_i a_ij Z_i`.
    Max,
    /// `X_j = sum_i a_ij Z_i + noise * N(0, 1)`.
    Sum { noise: f64 },
}

/// Factor-model generator with nonnegative loadings `a` (row-major
/// `d x r`, `a[j * r + i]` loads factor `i` on coordinate `j`) and
/// Frechet(`nu`) factors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorSampler {
    pub d: usize,
    pub r: usize,
    pub a: Vec<f64>,
    pub nu: f64,
    pub form: FactorForm,
}

impl FactorSampler {
    pub fn new(d: usize, r: usize, a: Vec<f64>, nu: f64, form: FactorForm) -> Result<Self> {
        if a.len() != d * r || a.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::ParameterDomain {
                name: "a".into(),
                value: f64::NAN,
                domain: format!("{d} x {r} nonnegative finite loadings"),
            });
        }
        if !(nu > 0.0 && nu.is_finite()) {
            return Err(Error::ParameterDomain {
                name: "nu".into(),
                value: nu,
                domain: "(0, inf)".into(),
            });
        }
        for j in 0..d {
            if (0..r).all(|i| a[j * r + i] == 0.0) {
                return Err(Error::ParameterDomain {
                    name: format!("a[.][{j}]"),
                    value: 0.0,
                    domain: "at least one positive loading per coordinate".into(),
                });
            }
        }
        if let FactorForm::Sum { noise } = form {
            if !(noise >= 0.0 && noise.is_finite()) {
                return Err(Error::ParameterDomain {
                    name: "noise".into(),
                    value: noise,
                    domain: "[0, inf)".into(),
                });
            }
        }
        Ok(FactorSampler { d, r, a, nu, form })
    }

    /// `a = B`, `nu = 1`: unit Frechet margins and stdf of `model`.
    pub fn from_model(model: &FactorModel, form: FactorForm) -> Self {
        FactorSampler {
            d: model.d(),
            r: model.r(),
            a: model.matrix().to_vec(),
            nu: 1.0,
            form,
        }
    }

    pub fn sample_with<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Sample> {
        let (d, r) = (self.d, self.r);
        let mut data = vec![0.0; n * d];
        let mut z = vec![0.0; r];
        for row in data.chunks_mut(d) {
            for zi in z.iter_mut() {
                let e: f64 = Exp1.sample(rng);
                *zi = e.powf(-1.0 / self.nu);
            }
            for (j, x) in row.iter_mut().enumerate() {
                let loads = &self.a[j * r..(j + 1) * r];
                *x = match self.form {
                    FactorForm::Max => loads.iter().zip(&z).map(|(a, z)| a * z).fold(0.0, f64::max),
                    FactorForm::Sum { .. } => loads.iter().zip(&z).map(|(a, z)| a * z).sum(),
                };
            }
            if let FactorForm::Sum { noise } = self.form {
                for x in row.iter_mut() {
                    let e: f64 = StandardNormal.sample(rng);
                    *x += noise * e;
                }
            }
        }
        Sample::new(data, n, d)
    }

    pub fn sample(&self, n: usize, seed: u64) -> Result<Sample> {
        self.sample_with(n, &mut substream(seed, 0))
    }
}

/// Draws from the max-stable law with stable tail dependence function
/// `family` (factor models use `a = B`, `nu = 1`, max form).
pub fn sample_family_with<R: Rng + ?Sized>(family: &Family, n: usize, rng: &mut R) -> Result<Sample> {
    match family {
        Family::Logistic(m) => sample_logistic_with(m.theta(), m.d(), n, rng),
        Family::AsymLogistic(m) => sample_alog_with(m, n, rng),
        Family::Factor(m) => FactorSampler::from_model(m, FactorForm::Max).sample_with(n, rng),
    }
}
