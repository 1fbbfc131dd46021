//! Asymptotic covariance of the estimator and Wald-type statistics.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, Continuous, ContinuousCDF};

use crate::config::EstimationConfig;
use crate::error::{Error, Result};
use crate::estimator::EstimateResult;
use crate::families::{phi_jacobian, Family};
use crate::quadrature::{integrate_cube_vec, CubatureSpec};
use crate::weights::WeightSpec;

/// Eigenvalues of `Sigma` below `-PSD_TOL` are treated as genuine failures.
pub const PSD_TOL: f64 = 1e-8;
/// Smallest admissible singular value of the moment Jacobian.
pub const RANK_TOL: f64 = 1e-10;

/// `E[W(x) W(y)] = l(x) + l(y) - l(x v y)`.
pub fn wl_cov(l: impl Fn(&[f64]) -> f64, x: &[f64], y: &[f64]) -> f64 {
    let join: Vec<f64> = x.iter().zip(y).map(|(a, b)| a.max(*b)).collect();
    l(x) + l(y) - l(&join)
}

/// Covariance function of the limit process of `sqrt(k) (l_hat - l)`.
#[derive(Debug, Clone)]
pub struct CovKernel {
    family: Family,
}

impl CovKernel {
    pub fn new(family: &Family) -> Self {
        CovKernel { family: family.clone() }
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn wl(&self, x: &[f64], y: &[f64]) -> f64 {
        wl_cov(|z| self.family.stdf(z), x, y)
    }

    /// `E[B(x) B(y)]` expanded into covariances of `W` at `x`, `y` and
    /// their one-coordinate projections, weighted by right-hand partials.
    pub fn b_cov(&self, x: &[f64], y: &[f64]) -> f64 {
        // a fixed argument order makes the result exactly symmetric
        let (x, y) = match x.partial_cmp(y) {
            Some(std::cmp::Ordering::Greater) => (y, x),
            _ => (x, y),
        };
        let d = x.len();
        let l = |z: &[f64]| self.family.stdf(z);
        let mut lx = vec![0.0; d];
        let mut ly = vec![0.0; d];
        self.family.partials(x, &mut lx);
        self.family.partials(y, &mut ly);
        let (l_x, l_y) = (l(x), l(y));
        let mut z = vec![0.0; d];

        z.iter_mut().zip(x.iter().zip(y)).for_each(|(z, (a, b))| *z = a.max(*b));
        let joint = l_x + l_y - l(&z);

        let mut cross_y = 0.0;
        for j in 0..d {
            if ly[j] == 0.0 || y[j] == 0.0 {
                continue;
            }
            z.copy_from_slice(x);
            z[j] = x[j].max(y[j]);
            cross_y += ly[j] * (l_x + y[j] - l(&z));
        }
        let mut cross_x = 0.0;
        for i in 0..d {
            if lx[i] == 0.0 || x[i] == 0.0 {
                continue;
            }
            z.copy_from_slice(y);
            z[i] = y[i].max(x[i]);
            cross_x += lx[i] * (x[i] + l_y - l(&z));
        }
        let mut margins = 0.0;
        z.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..d {
            if lx[i] == 0.0 || x[i] == 0.0 {
                continue;
            }
            for j in 0..d {
                if ly[j] == 0.0 || y[j] == 0.0 {
                    continue;
                }
                let c = if i == j {
                    x[i].min(y[j])
                } else {
                    z[i] = x[i];
                    z[j] = y[j];
                    let v = x[i] + y[j] - l(&z);
                    z[i] = 0.0;
                    z[j] = 0.0;
                    v
                };
                margins += lx[i] * ly[j] * c;
            }
        }
        joint - cross_y - cross_x + margins
    }
}

fn symmetrize_psd(mut s: DMatrix<f64>) -> Result<DMatrix<f64>> {
    let t = s.transpose();
    s = (&s + t) * 0.5;
    let eig = SymmetricEigen::new(s.clone());
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if min < -PSD_TOL {
        return Err(Error::NotPositiveSemidefinite(min));
    }
    if min >= 0.0 {
        return Ok(s);
    }
    let floored = eig.eigenvalues.map(|v| v.max(0.0));
    let out = &eig.eigenvectors * DMatrix::from_diagonal(&floored) * eig.eigenvectors.transpose();
    let t = out.transpose();
    Ok((&out + t) * 0.5)
}

/// `Sigma = double integral of b_cov(x, y) g(x) g(y)^T` for arbitrary
/// weights given by `weights(x, out)` with `q` outputs.
pub fn sigma_matrix_with<G>(family: &Family, q: usize, weights: G, spec: &CubatureSpec) -> Result<DMatrix<f64>>
where
    G: Fn(&[f64], &mut [f64]) + Sync,
{
    let d = family.dim();
    let kernel = CovKernel::new(family);
    let result = integrate_cube_vec(
        2 * d,
        q * q,
        |xy, out| {
            let (x, y) = xy.split_at(d);
            let mut gx = vec![0.0; q];
            let mut gy = vec![0.0; q];
            weights(x, &mut gx);
            weights(y, &mut gy);
            if gx.iter().all(|v| *v == 0.0) || gy.iter().all(|v| *v == 0.0) {
                out.iter_mut().for_each(|o| *o = 0.0);
                return;
            }
            let b = kernel.b_cov(x, y);
            for m in 0..q {
                for mm in 0..q {
                    out[m * q + mm] = b * gx[m] * gy[mm];
                }
            }
        },
        spec,
    )?;
    symmetrize_psd(DMatrix::from_row_slice(q, q, &result.values))
}

/// `Sigma` for monomial weights.
pub fn sigma_matrix(family: &Family, g: &WeightSpec, spec: &CubatureSpec) -> Result<DMatrix<f64>> {
    sigma_matrix_with(family, g.q(), |x, out| g.eval(x, out), spec)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MMatrix {
    pub m: DMatrix<f64>,
    pub sigma: DMatrix<f64>,
    pub jacobian: DMatrix<f64>,
}

impl MMatrix {
    /// Sub-block on `indices` (rows and columns).
    pub fn block(&self, indices: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(indices.len(), indices.len(), |a, b| self.m[(indices[a], indices[b])])
    }
}

/// `M = (J^T J)^{-1} J^T Sigma J (J^T J)^{-1}` through `J = QR`, i.e.
/// `M = R^{-1} Q^T Sigma Q R^{-T}`.
pub fn m_from_parts(jacobian: DMatrix<f64>, sigma: DMatrix<f64>) -> Result<MMatrix> {
    let p = jacobian.ncols();
    if jacobian.nrows() < p {
        return Err(Error::WeightSpec("fewer weight functions than parameters".into()));
    }
    let svd = jacobian.clone().svd(false, true);
    let (imin, smin) = svd
        .singular_values
        .iter()
        .copied()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("nonempty");
    if !(smin > RANK_TOL) {
        let v_t = svd.v_t.expect("requested");
        return Err(Error::Identifiability {
            sigma_min: smin,
            direction: v_t.row(imin).iter().copied().collect(),
        });
    }
    let qr = jacobian.clone().qr();
    let q = qr.q();
    let r = qr.r();
    let inner = q.transpose() * &sigma * &q;
    let left = r
        .solve_upper_triangular(&inner)
        .ok_or_else(|| Error::Singular("triangular factor of the jacobian".into()))?;
    let m = r
        .solve_upper_triangular(&left.transpose())
        .ok_or_else(|| Error::Singular("triangular factor of the jacobian".into()))?
        .transpose();
    let t = m.transpose();
    Ok(MMatrix {
        m: (&m + t) * 0.5,
        sigma,
        jacobian,
    })
}

/// Asymptotic covariance `M(theta)` of `sqrt(k) (theta_hat - theta)`.
pub fn m_matrix(
    family: &Family,
    g: &WeightSpec,
    phi_spec: &CubatureSpec,
    sigma_spec: &CubatureSpec,
) -> Result<MMatrix> {
    let jacobian = phi_jacobian(family, g, phi_spec)?;
    let sigma = sigma_matrix(family, g, sigma_spec)?;
    m_from_parts(jacobian, sigma)
}

/// Fills `covariance = M(theta_hat) / k` and standard errors.
pub fn attach_covariance(result: &mut EstimateResult, g: &WeightSpec, config: &EstimationConfig) -> Result<MMatrix> {
    let m = m_matrix(&result.family, g, &config.phi_cubature, &config.sigma_cubature)?;
    let k = result.k as f64;
    let p = m.m.nrows();
    result.covariance = Some((0..p).map(|a| (0..p).map(|b| m.m[(a, b)] / k).collect()).collect());
    result.std_errors = Some((0..p).map(|a| (m.m[(a, a)] / k).max(0.0).sqrt()).collect());
    Ok(m)
}

fn quadratic_form_inv(cov: &DMatrix<f64>, v: &DVector<f64>) -> Result<f64> {
    let sol = match cov.clone().cholesky() {
        Some(ch) => ch.solve(v),
        None => cov
            .clone()
            .lu()
            .solve(v)
            .ok_or_else(|| Error::Singular("covariance matrix".into()))?,
    };
    let value = v.dot(&sol);
    if !value.is_finite() {
        return Err(Error::Singular("covariance matrix".into()));
    }
    Ok(value)
}

/// `(theta_hat - theta0)^T (M(theta_hat) / k)^{-1} (theta_hat - theta0)`,
/// asymptotically chi-square with `p` degrees of freedom.
pub fn confidence_statistic(result: &EstimateResult, theta0: &[f64]) -> Result<f64> {
    let cov = result
        .covariance
        .as_ref()
        .ok_or_else(|| Error::Config("estimate carries no covariance".into()))?;
    let p = result.theta.len();
    if theta0.len() != p {
        return Err(Error::Config(format!(
            "hypothesis has {} components, model {p}",
            theta0.len()
        )));
    }
    let c = DMatrix::from_fn(p, p, |a, b| cov[a][b]);
    let d = DVector::from_fn(p, |a, _| result.theta[a] - theta0[a]);
    quadratic_form_inv(&c, &d)
}

/// `P(chi2_dof <= x)` quantile.
pub fn chi2_quantile(level: f64, dof: usize) -> f64 {
    if level >= 1.0 {
        return f64::INFINITY;
    }
    if level <= 0.0 {
        return 0.0;
    }
    let dist = ChiSquared::new(dof as f64).expect("positive dof");
    // the library inverse is a coarse bisection; polish with Newton steps
    let mut x = dist.inverse_cdf(level);
    for _ in 0..20 {
        let step = (dist.cdf(x) - level) / dist.pdf(x);
        if !step.is_finite() {
            break;
        }
        x = (x - step).max(0.5 * x);
        if step.abs() <= 1e-15 * x {
            break;
        }
    }
    x
}

pub fn chi2_sf(x: f64, dof: usize) -> f64 {
    1.0 - ChiSquared::new(dof as f64).expect("positive dof").cdf(x)
}

/// Null hypothesis fixing some parameters, e.g. `eta2=0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis {
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
    pub text: String,
}

impl Hypothesis {
    /// Parses comma-separated `name=value` pairs against `names`.
    pub fn parse(text: &str, names: &[String]) -> Result<Self> {
        let mut indices = Vec::new();
        let mut values = Vec::new();
        for part in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let (name, value) = part
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("expected name=value, got {part:?}")))?;
            let name = name.trim();
            let idx = names
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| Error::Config(format!("unknown parameter {name:?}; have {names:?}")))?;
            if indices.contains(&idx) {
                return Err(Error::Config(format!("parameter {name} fixed twice")));
            }
            let v: f64 = value
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad value in {part:?}")))?;
            indices.push(idx);
            values.push(v);
        }
        if indices.is_empty() {
            return Err(Error::Config("empty hypothesis".into()));
        }
        Ok(Hypothesis {
            indices,
            values,
            text: text.trim().to_string(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    pub k: usize,
    pub model: String,
    pub hypothesis: String,
    pub estimate: Vec<f64>,
    pub hybrid_point: Vec<f64>,
}

/// `S = k (theta2_hat - theta2*)^T M2(theta1_hat, theta2*)^{-1} (theta2_hat - theta2*)`
/// from a fit of the full model.
pub fn submodel_test(
    fit: &EstimateResult,
    hypothesis: &Hypothesis,
    g: &WeightSpec,
    config: &EstimationConfig,
) -> Result<TestResult> {
    let mut hybrid = fit.theta.clone();
    for (&i, &v) in hypothesis.indices.iter().zip(&hypothesis.values) {
        if i >= hybrid.len() {
            return Err(Error::Config("hypothesis index out of range".into()));
        }
        hybrid[i] = v;
    }
    let family = fit.family.with_params(&hybrid)?;
    let m = m_matrix(&family, g, &config.phi_cubature, &config.sigma_cubature)?;
    let m2 = m.block(&hypothesis.indices);
    let diff = DVector::from_fn(hypothesis.indices.len(), |a, _| {
        fit.theta[hypothesis.indices[a]] - hypothesis.values[a]
    });
    let statistic = fit.k as f64 * quadratic_form_inv(&m2, &diff)?;
    let dof = hypothesis.indices.len();
    Ok(TestResult {
        statistic,
        dof,
        p_value: chi2_sf(statistic, dof),
        k: fit.k,
        model: fit.family.name().to_string(),
        hypothesis: hypothesis.text.clone(),
        estimate: fit.theta.clone(),
        hybrid_point: hybrid,
    })
}
