use std::sync::Arc;

use stdf::estimator::{default_weights, fit_from, minimize, starting_point, Criterion, CubatureMoments};
use stdf::families::{FactorModel, Family};
use stdf::samplers::{sample_alog, sample_logistic, FactorForm, FactorSampler};
use stdf::{compute_ranks, fit, EmpiricalStdf, EstimationConfig, Sample, WeightSpec};

fn fit_model(sample: &Sample, model: &str, k: usize) -> stdf::EstimateResult {
    let template = Family::template(model, sample.d()).unwrap();
    let g = default_weights(&template);
    let config = EstimationConfig::default().with_k(k);
    fit(&compute_ranks(sample), &template, &g, &config).unwrap()
}

#[test]
fn logistic_round_trip() {
    for (d, theta) in [(2, 0.3), (3, 0.7)] {
        let sample = sample_logistic(theta, d, 5000, 11).unwrap();
        let r = fit_model(&sample, "logistic", 300);
        assert!((r.theta[0] - theta).abs() < 0.05, "d={d}: {} vs {theta}", r.theta[0]);
        assert_eq!(r.param_names, vec!["theta"]);
        assert!(!r.near_boundary);
    }
}

#[test]
fn alog_round_trip_recovers_asymmetry() {
    let sample = sample_alog(0.4, 0.9, 0.5, 8000, 12).unwrap();
    let r = fit_model(&sample, "alog", 400);
    // eta2 = (psi1 - psi2) / 2
    assert!((r.theta[2] - 0.2).abs() < 0.08, "eta2 {}", r.theta[2]);
    assert!((r.theta[1] - 0.7).abs() < 0.15, "eta1 {}", r.theta[1]);
}

#[test]
fn factor_round_trip() {
    let truth = FactorModel::from_columns(&[vec![0.2, 0.5, 0.7, 0.9], vec![0.8, 0.5, 0.3, 0.1]]).unwrap();
    let sample = FactorSampler::from_model(&truth, FactorForm::Max)
        .sample(5000, 1)
        .unwrap();
    let mut config = EstimationConfig::default().with_k(300);
    config.optimizer.restarts = 1;
    let template = Family::template("factor:2", 4).unwrap();
    let r = fit(&compute_ranks(&sample), &template, &default_weights(&template), &config).unwrap();
    for (est, t) in r.theta.iter().zip(truth.canonical().params()) {
        assert!((est - t).abs() < 0.1, "{:?}", r.theta);
    }
}

#[test]
fn estimates_are_rank_invariant() {
    let sample = sample_logistic(0.5, 3, 2000, 14).unwrap();
    let scales = [3.5, 1e-3, 250.0];
    let scaled = sample.map_columns(|j, v| v * scales[j]).unwrap();
    let monotone = sample
        .map_columns(|j, v| if j == 0 { v.ln() } else { v.powf(0.3) })
        .unwrap();
    let base = fit_model(&sample, "logistic", 150);
    for other in [&scaled, &monotone] {
        let r = fit_model(other, "logistic", 150);
        assert_eq!(r.theta, base.theta);
        assert_eq!(r.q_value, base.q_value);
    }
}

#[test]
fn fits_are_deterministic() {
    let a = sample_alog(0.5, 0.8, 0.6, 3000, 15).unwrap();
    let b = sample_alog(0.5, 0.8, 0.6, 3000, 15).unwrap();
    assert_eq!(a, b);
    let ra = serde_json::to_string(&fit_model(&a, "alog", 200)).unwrap();
    let rb = serde_json::to_string(&fit_model(&b, "alog", 200)).unwrap();
    assert_eq!(ra, rb);
}

#[test]
fn factor_fit_ignores_column_order_of_start() {
    let truth = FactorModel::from_columns(&[vec![0.3, 0.6, 0.8], vec![0.7, 0.4, 0.2]]).unwrap();
    let sample = FactorSampler::from_model(&truth, FactorForm::Max)
        .sample(3000, 16)
        .unwrap();
    let ranks = compute_ranks(&sample);
    let template = Family::template("factor:2", 3).unwrap();
    let g = default_weights(&template);
    let config = EstimationConfig::default().with_k(200);
    let start = starting_point(&ranks, &template, &config).unwrap();
    let Family::Factor(m) = &start else { unreachable!() };
    let swapped = Family::Factor(FactorModel::from_columns(&[m.column(1), m.column(0)]).unwrap());
    let a = fit_from(&ranks, &template, &g, &config, &start).unwrap();
    let b = fit_from(&ranks, &template, &g, &config, &swapped).unwrap();
    assert_eq!(a.theta, b.theta);
}

#[test]
fn exactly_solvable_moments_reach_zero_criterion() {
    // moments of the model itself: the criterion vanishes at the truth
    let truth = Family::template("alog", 2)
        .unwrap()
        .with_params(&[0.6, 0.6, 0.1])
        .unwrap();
    let g = WeightSpec::parse("1;x1;x2", 2).unwrap();
    let config = EstimationConfig::default();
    let moments = stdf::families::phi(&truth, &g, &config.phi_cubature).unwrap();
    let map = Arc::new(CubatureMoments {
        g: g.clone(),
        spec: config.phi_cubature.clone(),
    });
    let criterion = Criterion::new(&truth, &g, moments, 100, 1000, map).unwrap();
    let start = truth.with_params(&[0.5, 0.5, 0.0]).unwrap();
    let r = minimize(&criterion, &start, &config.optimizer, 1).unwrap();
    assert!(r.q_value < 1e-16, "Q = {:e}", r.q_value);
    for (a, b) in r.theta.iter().zip(truth.params()) {
        assert!((a - b).abs() < 1e-5, "{:?}", r.theta);
    }
}

#[test]
fn invalid_inputs_are_rejected() {
    let sample = sample_logistic(0.5, 2, 100, 17).unwrap();
    let ranks = compute_ranks(&sample);
    let template = Family::template("logistic", 2).unwrap();
    let g = default_weights(&template);
    assert!(fit(&ranks, &template, &g, &EstimationConfig::default().with_k(100)).is_err());
    assert!(fit(&ranks, &template, &g, &EstimationConfig::default().with_k(0)).is_err());
    let wrong_dim = Family::template("logistic", 3).unwrap();
    assert!(fit(
        &ranks,
        &wrong_dim,
        &default_weights(&wrong_dim),
        &EstimationConfig::default().with_k(20)
    )
    .is_err());
    assert!(EmpiricalStdf::new(&ranks, 101).is_err());
}
