//! Moment-matching criterion, its minimization and starting values.

mod kmeans;
mod nelder_mead;
mod tabulated;

use std::io::Write;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use kmeans::{extreme_directions, factor_init_kmeans, kmeans, nnls, Clustering, MASS_FLOOR};
pub use nelder_mead::{nelder_mead, Evaluation, NelderMeadOutcome, NelderMeadSettings};
pub use tabulated::TabulatedMoments;

use crate::config::{EstimationConfig, OptimizerConfig};
use crate::empirical::EmpiricalStdf;
use crate::error::{Error, Result};
use crate::families::{phi, Family};
use crate::quadrature::CubatureSpec;
use crate::sample::RankMatrix;
use crate::weights::WeightSpec;

/// Distance to the boundary below which an optimum is flagged.
pub const BOUNDARY_FLAG: f64 = 1e-4;

/// Source of the model moments `phi(theta)`.
pub trait MomentMap: Send + Sync {
    fn phi(&self, family: &Family) -> Result<Vec<f64>>;
}

/// Moments by cubature (or closed form where available) at every call.
#[derive(Debug, Clone)]
pub struct CubatureMoments {
    pub g: WeightSpec,
    pub spec: CubatureSpec,
}

impl MomentMap for CubatureMoments {
    fn phi(&self, family: &Family) -> Result<Vec<f64>> {
        phi(family, &self.g, &self.spec)
    }
}

/// `Q(theta) = |phi(theta) - integral g l_hat|^2`.
#[derive(Clone)]
pub struct Criterion {
    template: Family,
    g: WeightSpec,
    moments: Vec<f64>,
    k: usize,
    n: usize,
    map: Arc<dyn MomentMap>,
}

impl Criterion {
    pub fn new(
        template: &Family,
        g: &WeightSpec,
        moments: Vec<f64>,
        k: usize,
        n: usize,
        map: Arc<dyn MomentMap>,
    ) -> Result<Self> {
        if g.d() != template.dim() {
            return Err(Error::WeightSpec(format!(
                "weights are {}-dimensional, model is {}-dimensional",
                g.d(),
                template.dim()
            )));
        }
        if g.q() < template.n_params() {
            return Err(Error::WeightSpec(format!(
                "{} weight functions cannot identify {} parameters",
                g.q(),
                template.n_params()
            )));
        }
        if moments.len() != g.q() {
            return Err(Error::WeightSpec("moment vector length differs from q".into()));
        }
        Ok(Criterion {
            template: template.clone(),
            g: g.clone(),
            moments,
            k,
            n,
            map,
        })
    }

    /// Criterion with empirical moments from `emp` and cubature moments.
    pub fn from_empirical(template: &Family, g: &WeightSpec, emp: &EmpiricalStdf, spec: &CubatureSpec) -> Result<Self> {
        let map = Arc::new(CubatureMoments {
            g: g.clone(),
            spec: spec.clone(),
        });
        Self::new(template, g, emp.integrate(g), emp.k(), emp.n(), map)
    }

    pub fn with_map(mut self, map: Arc<dyn MomentMap>) -> Self {
        self.map = map;
        self
    }

    pub fn template(&self) -> &Family {
        &self.template
    }

    pub fn g(&self) -> &WeightSpec {
        &self.g
    }

    pub fn moments(&self) -> &[f64] {
        &self.moments
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn eval_family(&self, family: &Family) -> f64 {
        match self.map.phi(family) {
            Ok(phi) => phi.iter().zip(&self.moments).map(|(p, m)| (p - m) * (p - m)).sum(),
            Err(_) => f64::INFINITY,
        }
    }

    /// `+inf` outside the parameter space.
    pub fn eval(&self, theta: &[f64]) -> f64 {
        if !self.template.param_space().contains(theta, 1e-12) {
            return f64::INFINITY;
        }
        match self.template.with_params(theta) {
            Ok(f) => self.eval_family(&f),
            Err(_) => f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub start: Vec<f64>,
    pub theta: Vec<f64>,
    pub q_value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerTrace {
    pub runs: Vec<RunTrace>,
    pub best_run: usize,
    pub converged: bool,
}

impl OptimizerTrace {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "run",
            "iterations",
            "evaluations",
            "converged",
            "q_value",
            "start",
            "theta",
        ])?;
        for (i, r) in self.runs.iter().enumerate() {
            let join = |v: &[f64]| v.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(" ");
            w.write_record([
                i.to_string(),
                r.iterations.to_string(),
                r.evaluations.to_string(),
                r.converged.to_string(),
                format!("{:e}", r.q_value),
                join(&r.start),
                join(&r.theta),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Fitted model at one `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateResult {
    pub family: Family,
    pub theta: Vec<f64>,
    pub param_names: Vec<String>,
    pub q_value: f64,
    /// `M(theta_hat) / k`.
    pub covariance: Option<Vec<Vec<f64>>>,
    pub std_errors: Option<Vec<f64>>,
    pub trace: OptimizerTrace,
    pub k: usize,
    pub n: usize,
    pub g: String,
    pub near_boundary: bool,
    pub warnings: Vec<String>,
}

fn jittered_start(start: &Family, jitter: f64, rng: &mut ChaCha8Rng) -> Family {
    let space = start.param_space();
    let theta = start.params();
    let delta: Vec<f64> = (0..theta.len())
        .map(|i| {
            let w = space.width(i);
            let w = if w.is_finite() { w } else { 1.0 };
            rng.gen_range(-1.0..=1.0) * jitter * w
        })
        .collect();
    let mut t = 1.0;
    for _ in 0..40 {
        let cand: Vec<f64> = theta
            .iter()
            .zip(&delta)
            .enumerate()
            .map(|(i, (x, dx))| {
                let pad = 1e-6 * space.width(i).min(1.0);
                (x + t * dx).clamp(space.lower[i] + pad, space.upper[i] - pad)
            })
            .collect();
        if space.min_slack(&cand) > 0.0 {
            if let Ok(f) = start.with_params(&cand) {
                return f;
            }
        }
        t *= 0.5;
    }
    start.clone()
}

/// Multi-start Nelder-Mead in unconstrained coordinates.
///
/// The first run starts at `start`, later ones at uniform jitters of it;
/// the best run is chosen by `(Q, run index)`. Factor models are returned
/// in canonical column order.
pub fn minimize(criterion: &Criterion, start: &Family, opt: &OptimizerConfig, seed: u64) -> Result<EstimateResult> {
    let start = &start.canonical();
    let space = criterion.template.param_space();
    if !space.contains(&start.params(), 1e-12) {
        return Err(Error::FitFailed(format!("infeasible start {:?}", start.params())));
    }
    let settings = NelderMeadSettings {
        step: opt.step,
        ftol: opt.ftol,
        xtol: opt.xtol,
        max_iter: opt.max_iter,
    };
    let runs: Vec<(RunTrace, Option<Family>)> = (0..opt.restarts.max(1))
        .into_par_iter()
        .map(|run| {
            let from = if run == 0 {
                start.clone()
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(run as u64);
                jittered_start(start, opt.jitter, &mut rng)
            };
            let outcome = nelder_mead(
                |u| match start.from_unconstrained(u) {
                    Ok(f) => (criterion.eval_family(&f), Some(f.params())),
                    Err(_) => (f64::INFINITY, None),
                },
                &from.to_unconstrained(),
                &settings,
            );
            let fitted = start.from_unconstrained(&outcome.u).ok();
            let trace = RunTrace {
                start: from.params(),
                theta: fitted.as_ref().map(|f| f.params()).unwrap_or_default(),
                q_value: outcome.value,
                iterations: outcome.iterations,
                evaluations: outcome.evaluations,
                converged: outcome.converged,
            };
            (trace, fitted)
        })
        .collect();

    let best_run = (0..runs.len())
        .min_by(|&a, &b| runs[a].0.q_value.total_cmp(&runs[b].0.q_value).then(a.cmp(&b)))
        .expect("at least one run");
    let converged = runs.iter().any(|r| r.0.converged);
    let trace = OptimizerTrace {
        runs: runs.iter().map(|r| r.0.clone()).collect(),
        best_run,
        converged,
    };
    let best = runs[best_run].1.clone();
    let best = match best {
        Some(f) if converged && runs[best_run].0.q_value.is_finite() => f.canonical(),
        _ => {
            return Err(Error::FitFailed(format!(
                "no optimizer run converged to a finite criterion: {}",
                serde_json::to_string(&trace).unwrap_or_default()
            )))
        }
    };
    let theta = best.params();
    let near_boundary = space.min_slack(&theta) < BOUNDARY_FLAG;
    let mut warnings = Vec::new();
    if near_boundary {
        warnings.push(format!(
            "estimate lies within {BOUNDARY_FLAG} of the parameter-space boundary"
        ));
    }
    if !runs[best_run].0.converged {
        warnings.push("best run stopped at the iteration limit".into());
    }
    Ok(EstimateResult {
        q_value: runs[best_run].0.q_value,
        param_names: best.param_names(),
        family: best,
        theta,
        covariance: None,
        std_errors: None,
        trace,
        k: criterion.k,
        n: criterion.n,
        g: criterion.g.to_string(),
        near_boundary,
        warnings,
    })
}

/// Starting value from the data.
///
/// Logistic: `theta = ln l_hat(1, ..., 1) / ln d`, clamped to
/// `[0.05, 0.99]`. Asymmetric logistic: the same `theta` with
/// `(eta1, eta2) = (0.75, 0)`. Factor: clustering of extreme directions.
pub fn starting_point(ranks: &RankMatrix, template: &Family, config: &EstimationConfig) -> Result<Family> {
    let d = template.dim();
    let logistic_theta = || -> Result<f64> {
        let emp = EmpiricalStdf::new(ranks, config.k)?;
        let l1 = emp.eval(&vec![1.0; d]).max(1.0);
        Ok((l1.ln() / (d as f64).ln()).clamp(0.05, 0.99))
    };
    match template {
        Family::Logistic(_) => template.with_params(&[logistic_theta()?]),
        Family::AsymLogistic(_) => template.with_params(&[logistic_theta()?, 0.75, 0.0]),
        Family::Factor(m) => Ok(Family::Factor(factor_init_kmeans(
            ranks,
            m.r(),
            config.threshold_divisor,
            config.seed,
        )?)),
    }
}

/// Minimizes the criterion for the sample behind `ranks` from `start`.
pub fn fit_from(
    ranks: &RankMatrix,
    template: &Family,
    g: &WeightSpec,
    config: &EstimationConfig,
    start: &Family,
) -> Result<EstimateResult> {
    fit_with_map(ranks, template, g, config, start, None)
}

/// [`fit_from`] with the model moments supplied by `map` (cubature when
/// `None`).
pub fn fit_with_map(
    ranks: &RankMatrix,
    template: &Family,
    g: &WeightSpec,
    config: &EstimationConfig,
    start: &Family,
    map: Option<Arc<dyn MomentMap>>,
) -> Result<EstimateResult> {
    config.validate(ranks.n())?;
    let emp = EmpiricalStdf::new(ranks, config.k)?;
    let mut criterion = Criterion::from_empirical(template, g, &emp, &config.phi_cubature)?;
    if let Some(map) = map {
        criterion = criterion.with_map(map);
    }
    minimize(&criterion, start, &config.optimizer, config.seed)
}

/// Point estimate at `config.k` with a data-driven starting value.
pub fn fit(ranks: &RankMatrix, template: &Family, g: &WeightSpec, config: &EstimationConfig) -> Result<EstimateResult> {
    config.validate(ranks.n())?;
    if ranks.d() != template.dim() {
        return Err(Error::InvalidSample(format!(
            "data have {} columns, model has dimension {}",
            ranks.d(),
            template.dim()
        )));
    }
    let start = starting_point(ranks, template, config)?;
    fit_from(ranks, template, g, config, &start)
}

/// Default weight functions for a family: `1` for logistic models,
/// `1; x1; x2` for the bivariate asymmetric logistic model, and for
/// factor models the coordinates, then their squares, ..., then `1`,
/// with at least `p + 1` functions in total.
pub fn default_weights(template: &Family) -> WeightSpec {
    let d = template.dim();
    let text = match template {
        Family::Logistic(_) => "1".to_string(),
        Family::AsymLogistic(_) => "1;x1;x2".to_string(),
        Family::Factor(_) => {
            let p = template.n_params();
            let mut terms = Vec::new();
            let mut power = 1;
            while terms.len() < p {
                for j in 1..=d {
                    terms.push(if power == 1 {
                        format!("x{j}")
                    } else {
                        format!("x{j}^{power}")
                    });
                }
                power += 1;
            }
            terms.push("1".to_string());
            terms.join(";")
        }
    };
    WeightSpec::parse(&text, d).expect("generated weight specification parses")
}
