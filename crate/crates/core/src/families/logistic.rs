use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Below this dependence parameter the logistic function is replaced by
/// its limit `max_j x_j`.
pub const THETA_MAX_BRANCH: f64 = 1e-12;

/// The logistic stable tail dependence function
/// `l(x; theta) = (sum_j x_j^{1/theta})^theta`, `theta in (0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Logistic {
    d: usize,
    theta: f64,
}

impl Logistic {
    pub fn new(d: usize, theta: f64) -> Result<Self> {
        check_theta(theta)?;
        if d < 2 {
            return Err(Error::Config(format!("logistic model needs d >= 2, got {d}")));
        }
        Ok(Logistic { d, theta })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn stdf(&self, x: &[f64]) -> f64 {
        logistic_l(self.theta, x)
    }

    pub fn partials(&self, x: &[f64], out: &mut [f64]) {
        logistic_partials_into(self.theta, x, out)
    }

    pub fn dtheta(&self, x: &[f64]) -> f64 {
        logistic_dtheta(self.theta, x)
    }
}

pub(crate) fn check_theta(theta: f64) -> Result<()> {
    if theta > 0.0 && theta <= 1.0 {
        Ok(())
    } else {
        Err(Error::ParameterDomain {
            name: "theta".into(),
            value: theta,
            domain: "(0, 1]".into(),
        })
    }
}

/// `(sum_j x_j^{1/theta})^theta`, evaluated after factoring out `max_j x_j`.
pub fn logistic_l(theta: f64, x: &[f64]) -> f64 {
    let m = x.iter().copied().fold(0.0_f64, f64::max);
    if m == 0.0 {
        return 0.0;
    }
    if theta < THETA_MAX_BRANCH {
        return m;
    }
    if theta == 1.0 {
        return x.iter().sum();
    }
    let inv = 1.0 / theta;
    let s: f64 = x.iter().map(|&v| (v / m).powf(inv)).sum();
    m * s.powf(theta)
}

/// Checked variant of [`logistic_l`].
pub fn logistic_stdf(theta: f64, x: &[f64]) -> Result<f64> {
    check_theta(theta)?;
    Ok(logistic_l(theta, x))
}

/// Right-hand partial derivatives
/// `x_j^{1/theta - 1} (sum_s x_s^{1/theta})^{theta - 1}`.
pub fn logistic_partials(theta: f64, x: &[f64]) -> Result<Vec<f64>> {
    check_theta(theta)?;
    let mut out = vec![0.0; x.len()];
    logistic_partials_into(theta, x, &mut out);
    Ok(out)
}

pub(crate) fn logistic_partials_into(theta: f64, x: &[f64], out: &mut [f64]) {
    if theta == 1.0 {
        out.iter_mut().for_each(|o| *o = 1.0);
        return;
    }
    let m = x.iter().copied().fold(0.0_f64, f64::max);
    if m == 0.0 {
        // l(h e_j) / h = 1
        out.iter_mut().for_each(|o| *o = 1.0);
        return;
    }
    if theta < THETA_MAX_BRANCH {
        // derivative of the max: first maximal coordinate
        let arg = x.iter().position(|&v| v == m).unwrap_or(0);
        for (j, o) in out.iter_mut().enumerate() {
            *o = if j == arg { 1.0 } else { 0.0 };
        }
        return;
    }
    let inv = 1.0 / theta;
    let s: f64 = x.iter().map(|&v| (v / m).powf(inv)).sum();
    let scale = s.powf(theta - 1.0);
    for (o, &v) in out.iter_mut().zip(x) {
        *o = if v == 0.0 { 0.0 } else { (v / m).powf(inv - 1.0) * scale };
    }
}

/// `d l / d theta` for fixed `x`.
pub(crate) fn logistic_dtheta(theta: f64, x: &[f64]) -> f64 {
    let m = x.iter().copied().fold(0.0_f64, f64::max);
    if m == 0.0 || theta < THETA_MAX_BRANCH {
        return 0.0;
    }
    let inv = 1.0 / theta;
    let mut s = 0.0;
    let mut s_log = 0.0;
    for &v in x {
        if v > 0.0 {
            let y = v / m;
            let p = y.powf(inv);
            s += p;
            s_log += p * y.ln();
        }
    }
    m * s.powf(theta) * (s.ln() - inv * s_log / s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn independence_case() {
        assert_eq!(logistic_stdf(1.0, &[1.0, 1.0]).unwrap(), 2.0);
    }

    #[test]
    fn five_dimensional_value_is_sqrt_five() {
        let v = logistic_stdf(0.5, &[1.0; 5]).unwrap();
        assert!((v - 5f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn pythagorean_value() {
        assert!((logistic_stdf(0.5, &[3.0, 4.0]).unwrap() - 5.0).abs() < 1e-14);
    }

    #[test]
    fn domain_errors() {
        assert!(logistic_stdf(0.0, &[1.0, 1.0]).is_err());
        assert!(logistic_stdf(1.2, &[1.0, 1.0]).is_err());
        assert!(Logistic::new(1, 0.5).is_err());
    }

    #[test]
    fn tiny_theta_uses_max_limit() {
        assert_eq!(logistic_l(1e-13, &[0.3, 2.0, 1.0]), 2.0);
        // no overflow just above the switch
        let v = logistic_l(1e-3, &[0.3, 2.0, 1.0]);
        assert!((v - 2.0).abs() < 1e-12, "{v}");
    }

    #[test]
    fn partial_at_diagonal() {
        // analytic value 2^{-1/2}
        let g = logistic_partials(0.5, &[1.0, 1.0]).unwrap();
        assert!((g[0] - 0.5f64.sqrt()).abs() < 1e-14);
        let h = 1e-6;
        let fd = (logistic_l(0.5, &[1.0 + h, 1.0]) - logistic_l(0.5, &[1.0 - h, 1.0])) / (2.0 * h);
        assert!((g[0] - fd).abs() < 1e-8);
    }

    #[test]
    fn partials_at_theta_one_are_ones() {
        assert_eq!(logistic_partials(1.0, &[0.2, 3.0, 0.0]).unwrap(), vec![1.0; 3]);
    }

    #[test]
    fn euler_relation_at_ones() {
        for &theta in &[0.2, 0.5, 0.9] {
            let x = [1.0; 4];
            let g = logistic_partials(theta, &x).unwrap();
            let lhs: f64 = g.iter().zip(&x).map(|(a, b)| a * b).sum();
            assert!((lhs - logistic_l(theta, &x)).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_coordinate_has_zero_right_hand_partial() {
        let g = logistic_partials(0.5, &[0.0, 2.0]).unwrap();
        assert_eq!(g[0], 0.0);
        assert!((g[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn dtheta_matches_finite_difference() {
        for &theta in &[0.3, 0.5, 0.8] {
            let x = [0.4, 0.9, 0.2];
            let h = 1e-6;
            let fd = (logistic_l(theta + h, &x) - logistic_l(theta - h, &x)) / (2.0 * h);
            assert!((logistic_dtheta(theta, &x) - fd).abs() < 1e-7);
        }
    }
}
