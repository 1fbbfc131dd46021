use nalgebra::DMatrix;
use stdf::families::{phi, Family, Logistic};
use stdf::inference::{
    attach_covariance, confidence_statistic, m_from_parts, m_matrix, sigma_matrix, sigma_matrix_with,
};
use stdf::quadrature::{integrate_cube, CubatureSpec, Rule};
use stdf::samplers::{sample_logistic, sample_logistic_with, substream};
use stdf::{compute_ranks, fit, EmpiricalStdf, EstimationConfig, WeightSpec};

fn logistic(theta: f64) -> Family {
    Family::Logistic(Logistic::new(2, theta).unwrap())
}

fn sigma_spec() -> CubatureSpec {
    CubatureSpec::default().fixed(1 << 16)
}

#[test]
fn sigma_matches_simulated_variance_of_integrated_estimator() {
    let truth = logistic(0.5);
    let g = WeightSpec::constant(2);
    let exact = CubatureSpec::default()
        .with_rule(Rule::GaussLegendre)
        .with_tolerance(1e-13);
    let integral = phi(&truth, &g, &exact).unwrap()[0];
    let sigma = sigma_matrix(&truth, &g, &sigma_spec()).unwrap()[(0, 0)];

    let (n, k, reps) = (20_000, 400, 2000);
    let draws: Vec<f64> = (0..reps)
        .map(|rep| {
            let sample = sample_logistic_with(0.5, 2, n, &mut substream(41, rep)).unwrap();
            let emp = EmpiricalStdf::new(&compute_ranks(&sample), k).unwrap();
            (k as f64).sqrt() * (emp.integrate(&g)[0] - integral)
        })
        .collect();
    let mean = draws.iter().sum::<f64>() / reps as f64;
    let var = draws.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (reps - 1) as f64;
    assert!((var - sigma).abs() < 0.1 * sigma, "simulated {var} vs sigma {sigma}");
}

#[test]
fn score_weight_does_not_increase_variance() {
    let truth = logistic(0.5);
    let Family::Logistic(model) = &truth else {
        unreachable!()
    };
    let score = |x: &[f64], out: &mut [f64]| out[0] = model.dtheta(x);
    let ones = |_: &[f64], out: &mut [f64]| out[0] = 1.0;
    let jac_spec = CubatureSpec::default()
        .with_rule(Rule::GaussLegendre)
        .with_tolerance(1e-12);
    let m_of = |w: &(dyn Fn(&[f64], &mut [f64]) + Sync)| {
        let jac = integrate_cube(
            2,
            |x| {
                let mut g = [0.0];
                w(x, &mut g);
                g[0] * model.dtheta(x)
            },
            &jac_spec,
        )
        .unwrap()
        .value();
        let sigma = sigma_matrix_with(&truth, 1, w, &sigma_spec()).unwrap();
        m_from_parts(DMatrix::from_element(1, 1, jac), sigma).unwrap().m[(0, 0)]
    };
    let (m_score, m_ones) = (m_of(&score), m_of(&ones));
    assert!(m_score <= m_ones, "score {m_score} vs constant {m_ones}");
    let via_weights = m_matrix(&truth, &WeightSpec::constant(2), &jac_spec, &sigma_spec())
        .unwrap()
        .m[(0, 0)];
    assert!((via_weights - m_ones).abs() < 1e-6 * m_ones);
}

#[test]
fn predicted_rmse_matches_study_minimum() {
    // minimum RMSE of the n = 1500 logistic study over the k grid, near k = 150
    let m = m_matrix(
        &logistic(0.5),
        &WeightSpec::constant(2),
        &CubatureSpec::default(),
        &sigma_spec(),
    )
    .unwrap();
    let predicted = (m.m[(0, 0)] / 150.0).sqrt();
    assert!((predicted - 0.034).abs() < 0.25 * 0.034, "predicted {predicted}");
}

#[test]
fn confidence_statistic_is_a_nonnegative_form() {
    let sample = sample_logistic(0.5, 2, 3000, 42).unwrap();
    let template = logistic(0.5);
    let g = WeightSpec::constant(2);
    let config = EstimationConfig::default().with_k(200);
    let mut r = fit(&compute_ranks(&sample), &template, &g, &config).unwrap();
    attach_covariance(&mut r, &g, &config).unwrap();
    assert_eq!(confidence_statistic(&r, &r.theta.clone()).unwrap(), 0.0);
    for t in [0.3, 0.45, 0.5, 0.6] {
        assert!(confidence_statistic(&r, &[t]).unwrap() >= 0.0);
    }
    let se = r.std_errors.as_ref().unwrap()[0];
    let s = confidence_statistic(&r, &[r.theta[0] + se]).unwrap();
    assert!((s - 1.0).abs() < 1e-12);
}
