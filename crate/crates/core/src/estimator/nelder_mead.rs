//! Derivative-free simplex minimization.

/// Objective value together with the point in natural coordinates, or
/// `None` when the point is infeasible.
pub type Evaluation = (f64, Option<Vec<f64>>);

#[derive(Debug, Clone)]
pub struct NelderMeadSettings {
    pub step: f64,
    pub ftol: f64,
    pub xtol: f64,
    pub max_iter: usize,
}

#[derive(Debug, Clone)]
pub struct NelderMeadOutcome {
    pub u: Vec<f64>,
    pub value: f64,
    pub natural: Option<Vec<f64>>,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

struct Vertex {
    u: Vec<f64>,
    f: f64,
    natural: Option<Vec<f64>>,
}

fn sanitize(f: f64) -> f64 {
    if f.is_nan() {
        f64::INFINITY
    } else {
        f
    }
}

/// Minimizes `objective` from `u0` with the standard reflection (1),
/// expansion (2), contraction (1/2) and shrink (1/2) coefficients.
///
/// Stops when `2|f_hi - f_lo| <= ftol (|f_hi| + |f_lo|)` or when every
/// vertex lies within `xtol` of the best one in natural coordinates.
pub fn nelder_mead<F>(mut objective: F, u0: &[f64], settings: &NelderMeadSettings) -> NelderMeadOutcome
where
    F: FnMut(&[f64]) -> Evaluation,
{
    let n = u0.len();
    let mut evaluations = 0;
    let mut eval = |u: Vec<f64>, evaluations: &mut usize| {
        *evaluations += 1;
        let (f, natural) = objective(&u);
        Vertex {
            u,
            f: sanitize(f),
            natural,
        }
    };
    let mut simplex = Vec::with_capacity(n + 1);
    simplex.push(eval(u0.to_vec(), &mut evaluations));
    for i in 0..n {
        let mut u = u0.to_vec();
        u[i] += settings.step;
        simplex.push(eval(u, &mut evaluations));
    }

    let mut iterations = 0;
    let mut converged = false;
    loop {
        simplex.sort_by(|a, b| a.f.total_cmp(&b.f));
        if has_converged(&simplex, settings) {
            converged = true;
            break;
        }
        if iterations >= settings.max_iter {
            break;
        }
        iterations += 1;

        let mut centroid = vec![0.0; n];
        for v in &simplex[..n] {
            for (c, x) in centroid.iter_mut().zip(&v.u) {
                *c += x / n as f64;
            }
        }
        let along =
            |t: f64, worst: &[f64]| -> Vec<f64> { centroid.iter().zip(worst).map(|(c, w)| c + t * (c - w)).collect() };
        let worst = simplex[n].u.clone();
        let reflected = eval(along(1.0, &worst), &mut evaluations);
        if reflected.f < simplex[0].f {
            let expanded = eval(along(2.0, &worst), &mut evaluations);
            simplex[n] = if expanded.f < reflected.f { expanded } else { reflected };
        } else if reflected.f < simplex[n - 1].f {
            simplex[n] = reflected;
        } else {
            let outside = reflected.f < simplex[n].f;
            let t = if outside { 0.5 } else { -0.5 };
            let contracted = eval(along(t, &worst), &mut evaluations);
            let bound = if outside { reflected.f } else { simplex[n].f };
            if contracted.f <= bound {
                simplex[n] = contracted;
            } else {
                let best = simplex[0].u.clone();
                for v in simplex.iter_mut().skip(1) {
                    let u: Vec<f64> = best.iter().zip(&v.u).map(|(b, x)| b + 0.5 * (x - b)).collect();
                    *v = eval(u, &mut evaluations);
                }
            }
        }
    }
    let best = simplex.swap_remove(0);
    NelderMeadOutcome {
        u: best.u,
        value: best.f,
        natural: best.natural,
        iterations,
        evaluations,
        converged,
    }
}

fn has_converged(simplex: &[Vertex], s: &NelderMeadSettings) -> bool {
    let lo = simplex[0].f;
    let hi = simplex[simplex.len() - 1].f;
    if !lo.is_finite() {
        return false;
    }
    if hi.is_finite() && 2.0 * (hi - lo).abs() <= s.ftol * (hi.abs() + lo.abs()) + f64::MIN_POSITIVE {
        return true;
    }
    let Some(best) = simplex[0].natural.as_ref() else {
        return false;
    };
    let mut spread: f64 = 0.0;
    for v in &simplex[1..] {
        match &v.natural {
            Some(p) => {
                for (a, b) in p.iter().zip(best) {
                    spread = spread.max((a - b).abs());
                }
            }
            None => return false,
        }
    }
    spread < s.xtol
}
