//! Replication studies: bias and RMSE over a grid of `k`, plug-in versus
//! nonparametric estimation of derived quantities, confidence-region
//! coverage and the size or power of submodel tests.

use std::io::Write;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::EstimationConfig;
use crate::empirical::EmpiricalStdf;
use crate::error::{Error, Result};
use crate::estimator::{default_weights, fit_with_map, starting_point, CubatureMoments, MomentMap, TabulatedMoments};
use crate::families::Family;
use crate::inference::{attach_covariance, chi2_quantile, confidence_statistic, submodel_test, Hypothesis};
use crate::sample::{compute_ranks, RankMatrix, Sample};
use crate::samplers::{sample_family_with, substream, FactorForm, FactorSampler};
use crate::weights::WeightSpec;

/// Fraction of failed fits at one `k` above which a report is flagged.
pub const FAILURE_FLAG: f64 = 0.10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum StudyKind {
    /// Bias and RMSE of the parameter estimates.
    #[default]
    Estimate,
    /// Plug-in `l(1, ..., 1; theta_hat)` against `l_hat(1, ..., 1)`.
    Derived,
    /// Coverage of the Wald-type confidence region at `level`.
    Coverage,
    /// Rejection rate of the submodel test `hypothesis` at `level`.
    Submodel,
}

/// Declarative study description (TOML).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    #[serde(default)]
    pub kind: StudyKind,
    /// `logistic`, `alog` or `factor:R`.
    pub model: String,
    pub d: usize,
    /// True parameter (stacked loading columns for factor models).
    pub theta0: Vec<f64>,
    pub n: usize,
    pub reps: usize,
    pub k_grid: Vec<usize>,
    /// Weight functions; the model default when absent.
    #[serde(default)]
    pub g: Option<String>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Factor models only: `max` or `sum`.
    #[serde(default = "default_form")]
    pub sampler_form: String,
    /// Noise scale for the `sum` form.
    #[serde(default = "default_noise")]
    pub noise: f64,
    /// Confidence level (coverage) or one minus the test size (submodel).
    #[serde(default = "default_level")]
    pub level: f64,
    /// Submodel hypothesis such as `eta2=0`.
    #[serde(default)]
    pub hypothesis: Option<String>,
    /// Interpolate the moments of one-parameter families.
    #[serde(default = "default_true")]
    pub tabulate: bool,
    #[serde(default)]
    pub estimation: EstimationConfig,
}

fn default_seed() -> u64 {
    1
}
fn default_form() -> String {
    "max".into()
}
fn default_noise() -> f64 {
    1.0
}
fn default_level() -> f64 {
    0.95
}
fn default_true() -> bool {
    true
}

impl StudyConfig {
    pub fn new(model: &str, d: usize, theta0: Vec<f64>, n: usize, reps: usize, k_grid: Vec<usize>) -> Self {
        StudyConfig {
            kind: StudyKind::Estimate,
            model: model.into(),
            d,
            theta0,
            n,
            reps,
            k_grid,
            g: None,
            seed: default_seed(),
            sampler_form: default_form(),
            noise: default_noise(),
            level: default_level(),
            hypothesis: None,
            tabulate: true,
            estimation: EstimationConfig::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn truth(&self) -> Result<Family> {
        Ok(Family::from_model(&self.model, self.d, &self.theta0)?.canonical())
    }

    pub fn weights(&self, truth: &Family) -> Result<WeightSpec> {
        match &self.g {
            Some(text) => WeightSpec::parse(text, self.d),
            None => Ok(default_weights(truth)),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(Error::Config("reps must be positive".into()));
        }
        if self.k_grid.is_empty() {
            return Err(Error::Config("empty k grid".into()));
        }
        if let Some(&k) = self.k_grid.iter().find(|&&k| k == 0 || k >= self.n) {
            return Err(Error::Config(format!("k = {k} outside 1..n = {}", self.n)));
        }
        if !(0.0..=1.0).contains(&self.level) {
            return Err(Error::Config("level must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// One tidy record: `metric` of `estimator` for `component` at `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub k: usize,
    pub estimator: String,
    pub component: String,
    pub metric: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureCount {
    pub k: usize,
    pub failures: usize,
    pub reasons: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub config: StudyConfig,
    pub truth: Vec<f64>,
    pub rows: Vec<MetricRow>,
    pub failures: Vec<FailureCount>,
    /// More than [`FAILURE_FLAG`] of the fits failed at some `k`.
    pub flagged: bool,
    pub wall_clock_secs: f64,
}

impl StudyReport {
    pub fn value(&self, k: usize, estimator: &str, component: &str, metric: &str) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.k == k && r.estimator == estimator && r.component == component && r.metric == metric)
            .map(|r| r.value)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["k", "estimator", "component", "metric", "value"])?;
        for r in &self.rows {
            w.write_record([
                r.k.to_string(),
                r.estimator.clone(),
                r.component.clone(),
                r.metric.clone(),
                format!("{:e}", r.value),
            ])?;
        }
        for f in &self.failures {
            w.write_record([
                f.k.to_string(),
                "all".into(),
                "all".into(),
                "failures".into(),
                f.failures.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Mean, bias and RMSE of `values` about `truth`, in input order.
pub fn bias_rmse(values: &[f64], truth: f64) -> (f64, f64, f64) {
    let m = values.len() as f64;
    let mean = values.iter().sum::<f64>() / m;
    let bias = values.iter().map(|v| v - truth).sum::<f64>() / m;
    let mse = values.iter().map(|v| (v - truth) * (v - truth)).sum::<f64>() / m;
    (mean, bias, mse.sqrt())
}

/// What one replication produced at one `k`.
#[derive(Debug, Clone)]
enum Outcome {
    Estimate(Vec<f64>),
    Derived { plug_in: f64, nonparametric: f64 },
    Indicator(bool),
    Failed(String),
}

struct Setup {
    config: StudyConfig,
    truth: Family,
    template: Family,
    g: WeightSpec,
    map: Option<Arc<dyn MomentMap>>,
    hypothesis: Option<Hypothesis>,
    sampler: Option<FactorSampler>,
}

impl Setup {
    fn new(config: &StudyConfig) -> Result<Self> {
        config.validate()?;
        let truth = config.truth()?;
        let g = config.weights(&truth)?;
        let template = truth.clone();
        let map: Option<Arc<dyn MomentMap>> = if config.tabulate && template.n_params() == 1 {
            let exact = CubatureMoments {
                g: g.clone(),
                spec: config.estimation.phi_cubature.clone(),
            };
            Some(Arc::new(TabulatedMoments::new(&template, exact, 0.02, 1.0, 64)?))
        } else {
            None
        };
        let hypothesis = match (config.kind, &config.hypothesis) {
            (StudyKind::Submodel, Some(h)) => Some(Hypothesis::parse(h, &truth.param_names())?),
            (StudyKind::Submodel, None) => return Err(Error::Config("submodel study needs a hypothesis".into())),
            _ => None,
        };
        let sampler = match (&truth, config.sampler_form.as_str()) {
            (Family::Factor(m), "max") => Some(FactorSampler::from_model(m, FactorForm::Max)),
            (Family::Factor(m), "sum") => Some(FactorSampler::from_model(m, FactorForm::Sum { noise: config.noise })),
            (Family::Factor(_), other) => return Err(Error::Config(format!("unknown sampler form {other:?}"))),
            _ => None,
        };
        Ok(Setup {
            config: config.clone(),
            truth,
            template,
            g,
            map,
            hypothesis,
            sampler,
        })
    }

    fn draw(&self, rep: usize) -> Result<Sample> {
        let mut rng = substream(self.config.seed, rep as u64);
        match &self.sampler {
            Some(s) => s.sample_with(self.config.n, &mut rng),
            None => sample_family_with(&self.truth, self.config.n, &mut rng),
        }
    }

    fn replicate(&self, rep: usize) -> Vec<Outcome> {
        let ranks = match self.draw(rep).map(|s| compute_ranks(&s)) {
            Ok(r) => r,
            Err(e) => return vec![Outcome::Failed(e.to_string()); self.config.k_grid.len()],
        };
        // clustering starts do not depend on k
        let shared_start = match &self.template {
            Family::Factor(_) => Some(starting_point(&ranks, &self.template, &self.config.estimation)),
            _ => None,
        };
        self.config
            .k_grid
            .iter()
            .map(|&k| {
                let start = match &shared_start {
                    Some(Ok(s)) => Ok(s.clone()),
                    Some(Err(e)) => Err(Error::Clustering(e.to_string())),
                    None => {
                        let cfg = self.config.estimation.clone().with_k(k);
                        starting_point(&ranks, &self.template, &cfg)
                    }
                };
                match start.and_then(|s| self.at_k(&ranks, k, &s)) {
                    Ok(o) => o,
                    Err(e) => Outcome::Failed(e.to_string()),
                }
            })
            .collect()
    }

    fn at_k(&self, ranks: &RankMatrix, k: usize, start: &Family) -> Result<Outcome> {
        let cfg = self.config.estimation.clone().with_k(k);
        let mut est = fit_with_map(ranks, &self.template, &self.g, &cfg, start, self.map.clone())?;
        Ok(match self.config.kind {
            StudyKind::Estimate => Outcome::Estimate(est.theta),
            StudyKind::Derived => {
                let ones = vec![1.0; self.config.d];
                let emp = EmpiricalStdf::new(ranks, k)?;
                Outcome::Derived {
                    plug_in: est.family.stdf(&ones),
                    nonparametric: emp.eval(&ones),
                }
            }
            StudyKind::Coverage => {
                attach_covariance(&mut est, &self.g, &cfg)?;
                let stat = confidence_statistic(&est, &self.truth.params())?;
                Outcome::Indicator(stat <= chi2_quantile(self.config.level, est.theta.len()))
            }
            StudyKind::Submodel => {
                let h = self.hypothesis.as_ref().expect("validated");
                let t = submodel_test(&est, h, &self.g, &cfg)?;
                Outcome::Indicator(t.statistic > chi2_quantile(self.config.level, t.dof))
            }
        })
    }
}

/// Runs the study described by `config`. Replications run in parallel on
/// independent substreams; aggregation is sequential in replication
/// order, so results do not depend on the thread count.
pub fn run_study(config: &StudyConfig) -> Result<StudyReport> {
    let clock = Instant::now();
    let setup = Setup::new(config)?;
    let outcomes: Vec<Vec<Outcome>> = (0..config.reps)
        .into_par_iter()
        .map(|rep| setup.replicate(rep))
        .collect();
    let truth = setup.truth.params();
    let names = setup.truth.param_names();
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    let mut flagged = false;
    for (ki, &k) in config.k_grid.iter().enumerate() {
        let at_k: Vec<&Outcome> = outcomes.iter().map(|o| &o[ki]).collect();
        let reasons: Vec<String> = at_k
            .iter()
            .filter_map(|o| match o {
                Outcome::Failed(r) => Some(r.clone()),
                _ => None,
            })
            .collect();
        let ok = config.reps - reasons.len();
        if reasons.len() as f64 > FAILURE_FLAG * config.reps as f64 {
            flagged = true;
        }
        let mut push = |estimator: &str, component: &str, metric: &str, value: f64| {
            rows.push(MetricRow {
                k,
                estimator: estimator.into(),
                component: component.into(),
                metric: metric.into(),
                value,
            })
        };
        push("all", "all", "successes", ok as f64);
        if ok > 0 {
            match config.kind {
                StudyKind::Estimate => {
                    for (c, name) in names.iter().enumerate() {
                        let vals: Vec<f64> = at_k
                            .iter()
                            .filter_map(|o| match o {
                                Outcome::Estimate(t) => Some(t[c]),
                                _ => None,
                            })
                            .collect();
                        let (mean, bias, rmse) = bias_rmse(&vals, truth[c]);
                        push("m-estimator", name, "mean", mean);
                        push("m-estimator", name, "bias", bias);
                        push("m-estimator", name, "rmse", rmse);
                    }
                }
                StudyKind::Derived => {
                    let target = setup.truth.stdf(&vec![1.0; config.d]);
                    for (label, pick) in [("plug-in", 0), ("nonparametric", 1)] {
                        let vals: Vec<f64> = at_k
                            .iter()
                            .filter_map(|o| match o {
                                Outcome::Derived { plug_in, nonparametric } => {
                                    Some(if pick == 0 { *plug_in } else { *nonparametric })
                                }
                                _ => None,
                            })
                            .collect();
                        let (mean, bias, rmse) = bias_rmse(&vals, target);
                        push(label, "stdf_at_ones", "mean", mean);
                        push(label, "stdf_at_ones", "bias", bias);
                        push(label, "stdf_at_ones", "rmse", rmse);
                    }
                }
                StudyKind::Coverage | StudyKind::Submodel => {
                    let hits = at_k.iter().filter(|o| matches!(o, Outcome::Indicator(true))).count();
                    let metric = if config.kind == StudyKind::Coverage {
                        "coverage"
                    } else {
                        "rejection_rate"
                    };
                    push("m-estimator", "all", metric, hits as f64 / ok as f64);
                }
            }
        }
        failures.push(FailureCount {
            k,
            failures: reasons.len(),
            reasons,
        });
    }
    Ok(StudyReport {
        config: config.clone(),
        truth,
        rows,
        failures,
        flagged,
        wall_clock_secs: clock.elapsed().as_secs_f64(),
    })
}

/// Coverage of the nominal `config.level` confidence region at each `k`.
pub fn run_coverage_study(config: &StudyConfig) -> Result<StudyReport> {
    let mut c = config.clone();
    c.kind = StudyKind::Coverage;
    run_study(&c)
}

/// Plug-in `l(1, ..., 1; theta_hat)` against `l_hat(1, ..., 1)`.
pub fn run_derived_quantity_study(config: &StudyConfig) -> Result<StudyReport> {
    let mut c = config.clone();
    c.kind = StudyKind::Derived;
    run_study(&c)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(kind: StudyKind) -> StudyConfig {
        let mut c = StudyConfig::new("logistic", 2, vec![0.5], 400, 6, vec![40, 80]);
        c.kind = kind;
        c.estimation.optimizer.restarts = 2;
        c.estimation.sigma_cubature = crate::quadrature::CubatureSpec::default().fixed(1 << 10);
        c
    }

    #[test]
    fn single_replication_bias_is_error() {
        let mut c = small(StudyKind::Estimate);
        c.reps = 1;
        let r = run_study(&c).unwrap();
        let bias = r.value(40, "m-estimator", "theta", "bias").unwrap();
        let rmse = r.value(40, "m-estimator", "theta", "rmse").unwrap();
        assert_eq!(rmse, bias.abs());
    }

    #[test]
    fn rmse_dominates_bias() {
        let r = run_study(&small(StudyKind::Estimate)).unwrap();
        for k in [40, 80] {
            let b = r.value(k, "m-estimator", "theta", "bias").unwrap();
            let e = r.value(k, "m-estimator", "theta", "rmse").unwrap();
            assert!(e * e >= b * b * (1.0 - 1e-12));
        }
        assert!(!r.flagged);
    }

    #[test]
    fn level_one_covers_everything() {
        let mut c = small(StudyKind::Coverage);
        c.level = 1.0;
        let r = run_study(&c).unwrap();
        assert_eq!(r.value(40, "m-estimator", "all", "coverage"), Some(1.0));
    }

    #[test]
    fn toml_roundtrip() {
        let text = r#"
            kind = "derived"
            model = "logistic"
            d = 5
            theta0 = [0.5]
            n = 1500
            reps = 3
            k_grid = [40, 80]
            seed = 9
            [estimation.optimizer]
            restarts = 2
        "#;
        let c = StudyConfig::from_toml(text).unwrap();
        assert_eq!(c.kind, StudyKind::Derived);
        assert_eq!(c.estimation.optimizer.restarts, 2);
        assert_eq!(c.estimation.optimizer.ftol, 1e-10);
        assert!(StudyConfig::from_toml("model = \"logistic\"\nbogus = 1").is_err());
    }

    #[test]
    fn report_csv_is_tidy() {
        let r = run_study(&small(StudyKind::Estimate)).unwrap();
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("k,estimator,component,metric,value"));
        assert!(text.lines().all(|l| l.split(',').count() == 5));
    }
}
