use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Max-linear factor model `l(x) = sum_i max_j b_ij x_j`.
///
/// Loadings are stored as the `d x r` matrix whose column `i` holds the
/// coefficients of factor `i`; every row sums to one and every column
/// has a positive sum. The parameter vector stacks all columns except the
/// last, so for a canonical model it omits the column with the lowest sum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorModel {
    d: usize,
    r: usize,
    /// Row-major `d x r`.
    b: Vec<f64>,
}

const ROW_SUM_TOL: f64 = 1e-9;

impl FactorModel {
    /// `b` is row-major `d x r`.
    pub fn new(d: usize, r: usize, b: Vec<f64>) -> Result<Self> {
        if d == 0 || r == 0 || b.len() != d * r {
            return Err(Error::Config(format!(
                "factor loadings must be a {d} x {r} matrix, got {} entries",
                b.len()
            )));
        }
        if let Some(pos) = b.iter().position(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::ParameterDomain {
                name: format!("b[{}][{}]", pos % r, pos / r),
                value: b[pos],
                domain: "[0, inf)".into(),
            });
        }
        for j in 0..d {
            let s: f64 = b[j * r..(j + 1) * r].iter().sum();
            if (s - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::ParameterDomain {
                    name: format!("sum_i b[i][{j}]"),
                    value: s,
                    domain: "{1}".into(),
                });
            }
        }
        let model = FactorModel { d, r, b };
        for i in 0..r {
            if model.column_sum(i) <= 0.0 {
                return Err(Error::ParameterDomain {
                    name: format!("sum_j b[{i}][j]"),
                    value: 0.0,
                    domain: "(0, inf)".into(),
                });
            }
        }
        Ok(model)
    }

    /// From factor columns, each of length `d`.
    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self> {
        let r = columns.len();
        let d = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != d) {
            return Err(Error::Config("factor columns of unequal length".into()));
        }
        let mut b = vec![0.0; d * r];
        for (i, col) in columns.iter().enumerate() {
            for (j, &v) in col.iter().enumerate() {
                b[j * r + i] = v;
            }
        }
        Self::new(d, r, b)
    }

    /// Builds the model from stacked columns `1..r-1`; the last column is
    /// implied by the row sums.
    pub fn from_stacked(d: usize, r: usize, theta: &[f64]) -> Result<Self> {
        if r == 0 || theta.len() != (r - 1) * d {
            return Err(Error::Config(format!(
                "factor parameter needs {} entries, got {}",
                (r.max(1) - 1) * d,
                theta.len()
            )));
        }
        let mut b = vec![0.0; d * r];
        for j in 0..d {
            let mut rest = 1.0;
            for i in 0..r - 1 {
                let v = theta[i * d + j];
                b[j * r + i] = v;
                rest -= v;
            }
            if rest < -ROW_SUM_TOL {
                return Err(Error::ParameterDomain {
                    name: format!("1 - sum of row {j}"),
                    value: rest,
                    domain: "[0, 1]".into(),
                });
            }
            b[j * r + r - 1] = rest.max(0.0);
        }
        Self::new(d, r, b)
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn r(&self) -> usize {
        self.r
    }

    /// `b_ij`: factor `i`, coordinate `j`.
    pub fn loading(&self, i: usize, j: usize) -> f64 {
        self.b[j * self.r + i]
    }

    pub fn column(&self, i: usize) -> Vec<f64> {
        (0..self.d).map(|j| self.loading(i, j)).collect()
    }

    pub fn column_sum(&self, i: usize) -> f64 {
        (0..self.d).map(|j| self.loading(i, j)).sum()
    }

    /// Row-major `d x r` loadings.
    pub fn matrix(&self) -> &[f64] {
        &self.b
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.b.chunks(self.r).map(<[f64]>::to_vec).collect()
    }

    pub fn all_positive(&self) -> bool {
        self.b.iter().all(|&v| v > 0.0)
    }

    /// Columns ordered by decreasing sum, ties by decreasing lexicographic
    /// order of the full column vectors.
    pub fn canonical(&self) -> FactorModel {
        let mut cols: Vec<Vec<f64>> = (0..self.r).map(|i| self.column(i)).collect();
        cols.sort_by(|a, b| canonical_order(a, b));
        let mut b = vec![0.0; self.d * self.r];
        for (i, col) in cols.iter().enumerate() {
            for (j, &v) in col.iter().enumerate() {
                b[j * self.r + i] = v;
            }
        }
        FactorModel {
            d: self.d,
            r: self.r,
            b,
        }
    }

    /// Columns `1..r-1` stacked in their current order.
    pub fn params(&self) -> Vec<f64> {
        (0..self.r.saturating_sub(1)).flat_map(|i| self.column(i)).collect()
    }

    pub fn stdf(&self, x: &[f64]) -> f64 {
        (0..self.r)
            .map(|i| (0..self.d).map(|j| self.loading(i, j) * x[j]).fold(0.0, f64::max))
            .sum()
    }

    /// Right-hand partials `sum_i b_ij 1{b_ij x_j >= max_{s != j} b_is x_s}`.
    pub fn partials(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for i in 0..self.r {
            for j in 0..self.d {
                let bij = self.loading(i, j);
                let own = bij * x[j];
                let others = (0..self.d)
                    .filter(|&s| s != j)
                    .map(|s| self.loading(i, s) * x[s])
                    .fold(0.0, f64::max);
                if own >= others {
                    out[j] += bij;
                }
            }
        }
    }

    /// Atoms of the discrete spectral measure: `(b_i / sum_j b_ij, sum_j b_ij)`.
    pub fn spectral_atoms(&self) -> Vec<(Vec<f64>, f64)> {
        (0..self.r)
            .map(|i| {
                let mass = self.column_sum(i);
                let point = self.column(i).iter().map(|v| v / mass).collect();
                (point, mass)
            })
            .collect()
    }

    /// `integral over [0,1]^d of x_k^s l(x) dx`, reduced to one-dimensional
    /// integrals of piecewise power functions that are evaluated exactly.
    /// Requires all loadings positive.
    pub fn weighted_integral(&self, k: usize, s: f64) -> Result<f64> {
        if let Some(pos) = self.b.iter().position(|&v| v <= 0.0) {
            return Err(Error::ZeroLoading {
                factor: pos % self.r,
                coord: pos / self.r,
            });
        }
        let d = self.d;
        let mut total = 0.0;
        let mut ratios = vec![0.0; d];
        for i in 0..self.r {
            for j in 0..d {
                let bij = self.loading(i, j);
                for (l, c) in ratios.iter_mut().enumerate() {
                    *c = bij / self.loading(i, l);
                }
                let weight = if j == k { 1.0 } else { 1.0 + s };
                total += bij / weight * truncated_power_integral(&ratios, k, s);
            }
        }
        Ok(total)
    }
}

fn canonical_order(a: &[f64], b: &[f64]) -> Ordering {
    let (sa, sb): (f64, f64) = (a.iter().sum(), b.iter().sum());
    sb.total_cmp(&sa).then_with(|| {
        for (x, y) in a.iter().zip(b) {
            match y.total_cmp(x) {
                Ordering::Equal => continue,
                other => return other,
            }
        }
        Ordering::Equal
    })
}

/// `integral_0^1 (c_k t ^ 1)^s prod_l (c_l t ^ 1) dt` where `^` is the
/// minimum. Between consecutive breakpoints `1/c_l` the integrand is
/// `C t^e`, integrated in closed form.
fn truncated_power_integral(ratios: &[f64], k: usize, s: f64) -> f64 {
    let mut cuts: Vec<f64> = ratios
        .iter()
        .map(|&c| 1.0 / c)
        .filter(|&t| t > 0.0 && t < 1.0)
        .collect();
    cuts.push(0.0);
    cuts.push(1.0);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let mut total = 0.0;
    for w in cuts.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        if hi <= lo {
            continue;
        }
        let mut coef = 1.0;
        let mut exponent = 0.0;
        for (l, &c) in ratios.iter().enumerate() {
            // factor l is still below its cap on (lo, hi)
            if c * hi <= 1.0 + 1e-12 {
                coef *= c;
                exponent += 1.0;
                if l == k && s != 0.0 {
                    coef *= c.powf(s);
                    exponent += s;
                }
            }
        }
        let e1 = exponent + 1.0;
        total += coef * (hi.powf(e1) - lo.powf(e1)) / e1;
    }
    total
}
