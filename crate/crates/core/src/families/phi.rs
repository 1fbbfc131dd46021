//! The moment map `phi(theta) = integral over [0,1]^d of g(x) l(x; theta) dx`
//! and its Jacobian.

use nalgebra::DMatrix;

use super::Family;
use crate::error::{Error, Result};
use crate::quadrature::{integrate_cube_vec, CubatureSpec, Rule};
use crate::weights::{eval_powers, WeightSpec};

/// Central finite-difference step for factor-model Jacobians.
pub const PHI_FD_STEP: f64 = 1e-5;

/// Integrals `integral over [0,1]^d of m_b(x) h_w(x) dx` for monomials
/// `m_b` (given by exponent vectors) and the `width` outputs of a function
/// `h` that is homogeneous of order one. Output is basis-major.
///
/// When the rule resolves to Gauss-Legendre in `d - 1` dimensions, the
/// cube is split by which coordinate is largest; on the piece where
/// `x_j` is maximal, substituting `x = s t` with `t_j = 1` gives
/// `integral m h = (deg(m) + d + 1)^{-1} integral over [0,1]^{d-1} of m(t) h(t) dt`,
/// which removes the kink of the maximum from the integrand.
pub fn integrate_homogeneous<H>(
    d: usize,
    exponents: &[Vec<f64>],
    width: usize,
    h: H,
    spec: &CubatureSpec,
) -> Result<Vec<f64>>
where
    H: Fn(&[f64], &mut [f64]) + Sync,
{
    let nb = exponents.len();
    if nb == 0 {
        return Ok(Vec::new());
    }
    let reduce = d >= 2 && spec.resolved_rule(d - 1) == Rule::GaussLegendre;
    let result = if reduce {
        let scale: Vec<f64> = exponents
            .iter()
            .map(|e| 1.0 / (e.iter().sum::<f64>() + d as f64 + 1.0))
            .collect();
        integrate_cube_vec(
            d - 1,
            nb * width,
            |t, out| {
                let mut x = vec![0.0; d];
                let mut hv = vec![0.0; width];
                for face in 0..d {
                    x[..face].copy_from_slice(&t[..face]);
                    x[face] = 1.0;
                    x[face + 1..].copy_from_slice(&t[face..]);
                    hv.iter_mut().for_each(|v| *v = 0.0);
                    h(&x, &mut hv);
                    for (b, e) in exponents.iter().enumerate() {
                        let m = eval_powers(e, &x) * scale[b];
                        for w in 0..width {
                            out[b * width + w] += m * hv[w];
                        }
                    }
                }
            },
            spec,
        )?
    } else {
        integrate_cube_vec(
            d,
            nb * width,
            |x, out| {
                let mut hv = vec![0.0; width];
                h(x, &mut hv);
                for (b, e) in exponents.iter().enumerate() {
                    let m = eval_powers(e, x);
                    for w in 0..width {
                        out[b * width + w] = m * hv[w];
                    }
                }
            },
            spec,
        )?
    };
    Ok(result.values)
}

/// `phi(theta)` for the parameter of `family`.
///
/// For a factor model with all loadings positive, single-coordinate
/// monomials `x_k^s` use the closed-form one-dimensional reduction; every
/// other term goes through cubature.
pub fn phi(family: &Family, g: &WeightSpec, spec: &CubatureSpec) -> Result<Vec<f64>> {
    check_dims(family, g)?;
    let basis = g.basis();
    let mut values = vec![f64::NAN; basis.len()];
    let mut generic = Vec::new();
    match family {
        Family::Factor(m) if m.all_positive() => {
            for (b, e) in basis.exponents.iter().enumerate() {
                let mono = crate::weights::Monomial {
                    coef: 1.0,
                    exponents: e.clone(),
                };
                match mono.single_coordinate() {
                    Some((k, s)) => values[b] = m.weighted_integral(k, s)?,
                    None => generic.push(b),
                }
            }
        }
        _ => generic.extend(0..basis.len()),
    }
    if !generic.is_empty() {
        let exps: Vec<Vec<f64>> = generic.iter().map(|&b| basis.exponents[b].clone()).collect();
        let ints = integrate_homogeneous(family.dim(), &exps, 1, |x, out| out[0] = family.stdf(x), spec)?;
        for (&b, v) in generic.iter().zip(ints) {
            values[b] = v;
        }
    }
    Ok(basis.combine(&values, 1))
}

/// The `q x p` Jacobian of `phi`.
///
/// Logistic and asymmetric logistic models integrate the analytic
/// parameter gradient of `l`; factor models use central differences of
/// `phi` in the stacked loading coordinates (one-sided next to the
/// boundary). Returns [`Error::Boundary`] for smooth families whose
/// parameter is not interior.
pub fn phi_jacobian(family: &Family, g: &WeightSpec, spec: &CubatureSpec) -> Result<DMatrix<f64>> {
    check_dims(family, g)?;
    let theta = family.params();
    let p = theta.len();
    let q = g.q();
    let space = family.param_space();
    match family {
        Family::Logistic(_) | Family::AsymLogistic(_) => {
            if space.min_slack(&theta) <= 0.0 {
                return Err(Error::Boundary(theta));
            }
            let basis = g.basis();
            let ints = integrate_homogeneous(
                family.dim(),
                &basis.exponents,
                p,
                |x, out| {
                    family.param_gradient(x, out);
                },
                spec,
            )?;
            let jac = basis.combine(&ints, p);
            Ok(DMatrix::from_row_slice(q, p, &jac))
        }
        Family::Factor(_) => {
            let h = PHI_FD_STEP;
            let mut jac = DMatrix::zeros(q, p);
            for m in 0..p {
                let mut up = theta.clone();
                let mut dn = theta.clone();
                up[m] += h;
                dn[m] -= h;
                let up_ok = space.contains(&up, 0.0);
                let dn_ok = space.contains(&dn, 0.0);
                let (fu, fd, width) = match (up_ok, dn_ok) {
                    (true, true) => (up, dn, 2.0 * h),
                    (true, false) => (up, theta.clone(), h),
                    (false, true) => (theta.clone(), dn, h),
                    (false, false) => return Err(Error::Boundary(theta)),
                };
                let pu = phi(&family.with_params(&fu)?, g, spec)?;
                let pd = phi(&family.with_params(&fd)?, g, spec)?;
                for r in 0..q {
                    jac[(r, m)] = (pu[r] - pd[r]) / width;
                }
            }
            Ok(jac)
        }
    }
}

fn check_dims(family: &Family, g: &WeightSpec) -> Result<()> {
    if family.dim() != g.d() {
        return Err(Error::WeightSpec(format!(
            "weights are {}-dimensional, model is {}-dimensional",
            g.d(),
            family.dim()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::families::{FactorModel, Logistic};
    use crate::quadrature::integrate_cube;

    fn logistic(d: usize, theta: f64) -> Family {
        Family::Logistic(Logistic::new(d, theta).unwrap())
    }

    fn auto() -> CubatureSpec {
        CubatureSpec::default().with_rule(Rule::Auto)
    }

    #[test]
    fn independence_integrals_are_exact() {
        let f = logistic(2, 1.0);
        let g = WeightSpec::parse("1;x1", 2).unwrap();
        let v = phi(&f, &g, &auto()).unwrap();
        assert!((v[0] - 1.0).abs() < 1e-13, "{v:?}");
        assert!((v[1] - 7.0 / 12.0).abs() < 1e-13, "{v:?}");
        let spec = CubatureSpec::default().with_budget(1 << 18).with_tolerance(1e-9);
        let v = phi(&f, &g, &spec).unwrap();
        assert!((v[0] - 1.0).abs() < 1e-7, "{v:?}");
        assert!((v[1] - 7.0 / 12.0).abs() < 1e-7, "{v:?}");
    }

    #[test]
    fn reduction_matches_direct_cubature() {
        let f = logistic(3, 0.45);
        let g = WeightSpec::parse("1;x2^2;x1*x3", 3).unwrap();
        let reduced = phi(&f, &g, &auto()).unwrap();
        let direct = phi(
            &f,
            &g,
            &CubatureSpec::default().with_budget(1 << 18).with_tolerance(1e-8),
        )
        .unwrap();
        for (a, b) in reduced.iter().zip(&direct) {
            assert!((a - b).abs() < 2e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn logistic_half_against_plain_monte_carlo() {
        use rand::{Rng, SeedableRng};
        let v = phi(&logistic(2, 0.5), &WeightSpec::constant(2), &auto()).unwrap()[0];
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let n = 10_000_000;
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let (x, y): (f64, f64) = (rng.gen(), rng.gen());
            let l = (x * x + y * y).sqrt();
            s += l;
            s2 += l * l;
        }
        let mean = s / n as f64;
        let se = ((s2 / n as f64 - mean * mean) / n as f64).sqrt();
        assert!((v - mean).abs() < 3.0 * se, "{v} vs {mean} +- {se}");
    }

    #[test]
    fn factor_closed_form_matches_bivariate_oracle() {
        // integral of max(a x, c y) over the unit square is M/2 + m^2/(6M)
        let cols: [Vec<f64>; 2] = [vec![0.3, 0.6], vec![0.7, 0.4]];
        let oracle: f64 = cols
            .iter()
            .map(|c| {
                let (hi, lo) = (c[0].max(c[1]), c[0].min(c[1]));
                hi / 2.0 + lo * lo / (6.0 * hi)
            })
            .sum();
        let m = FactorModel::from_columns(&cols).unwrap();
        let v = phi(&Family::Factor(m), &WeightSpec::constant(2), &auto()).unwrap()[0];
        assert!((v - oracle).abs() < 1e-12, "{v} vs {oracle}");
    }

    #[test]
    fn factor_closed_form_matches_cubature() {
        let m = FactorModel::from_columns(&[vec![0.2, 0.5, 0.7, 0.9], vec![0.8, 0.5, 0.3, 0.1]]).unwrap();
        let spec = CubatureSpec::default().with_budget(1 << 20).with_tolerance(1e-9);
        for (k, s) in [(0, 0.0), (2, 1.0), (3, 2.0)] {
            let closed = m.weighted_integral(k, s).unwrap();
            let mut e = vec![0.0; 4];
            if s > 0.0 {
                e[k] = s;
            }
            let generic = integrate_homogeneous(4, &[e], 1, |x, o| o[0] = m.stdf(x), &spec).unwrap()[0];
            assert!((closed - generic).abs() < 5e-6, "{closed} vs {generic}");
        }
    }

    #[test]
    fn jacobian_matches_finite_difference_of_phi() {
        let g = WeightSpec::constant(2);
        let spec = auto().with_tolerance(1e-14).with_budget(1 << 12);
        for &theta in &[0.3, 0.5, 0.8] {
            let jac = phi_jacobian(&logistic(2, theta), &g, &spec).unwrap();
            let h = 1e-5;
            let fd = (phi(&logistic(2, theta + h), &g, &spec).unwrap()[0]
                - phi(&logistic(2, theta - h), &g, &spec).unwrap()[0])
                / (2.0 * h);
            assert!((jac[(0, 0)] - fd).abs() < 1e-6, "{} vs {fd}", jac[(0, 0)]);
            assert!(jac[(0, 0)].abs() > 1e-3);
        }
    }

    #[test]
    fn jacobian_at_boundary_signals() {
        let err = phi_jacobian(&logistic(2, 1.0), &WeightSpec::constant(2), &auto()).unwrap_err();
        assert!(matches!(err, Error::Boundary(_)));
    }

    #[test]
    fn factor_jacobian_shape() {
        let m = FactorModel::from_columns(&[vec![0.5, 0.4, 0.3], vec![0.3, 0.4, 0.2], vec![0.2, 0.2, 0.5]]).unwrap();
        let g = WeightSpec::parse("x1;x2;x3;x1^2;x2^2;x3^2;1", 3).unwrap();
        let jac = phi_jacobian(&Family::Factor(m), &g, &auto()).unwrap();
        assert_eq!((jac.nrows(), jac.ncols()), (7, 6));
    }

    #[test]
    fn plain_cubature_of_reduced_integrand_sanity() {
        let r = integrate_cube(1, |t| 1.0 + t[0], &auto()).unwrap();
        assert!((r.value() - 1.5).abs() < 1e-14);
    }
}
