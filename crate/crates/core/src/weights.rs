//! Weight functions `g = (g_1, ..., g_q)`: each `g_m` is a finite linear
//! combination of monomials `c * x_1^e_1 * ... * x_d^e_d` with nonnegative
//! real exponents.
//!
//! Text form: functions are separated by `;`, terms by `+`/`-`, factors by
//! `*`. Examples: `1;x1`, `2*x1+2*x2`, `x1^2;0.5*x1*x2^1.5`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    pub coef: f64,
    pub exponents: Vec<f64>,
}

impl Monomial {
    pub fn constant(d: usize, coef: f64) -> Self {
        Monomial {
            coef,
            exponents: vec![0.0; d],
        }
    }

    /// `x_{coord}^{power}` with unit coefficient.
    pub fn power(d: usize, coord: usize, power: f64) -> Self {
        let mut exponents = vec![0.0; d];
        exponents[coord] = power;
        Monomial { coef: 1.0, exponents }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.coef * eval_powers(&self.exponents, x)
    }

    /// Total degree `sum_j e_j`.
    pub fn degree(&self) -> f64 {
        self.exponents.iter().sum()
    }

    /// `Some((coordinate, power))` when at most one exponent is nonzero.
    /// The constant monomial reports coordinate 0 with power 0.
    pub fn single_coordinate(&self) -> Option<(usize, f64)> {
        let mut nonzero = self.exponents.iter().enumerate().filter(|(_, &e)| e != 0.0);
        match (nonzero.next(), nonzero.next()) {
            (None, _) => Some((0, 0.0)),
            (Some((j, &e)), None) => Some((j, e)),
            _ => None,
        }
    }
}

pub(crate) fn eval_powers(exponents: &[f64], x: &[f64]) -> f64 {
    exponents
        .iter()
        .zip(x)
        .map(|(&e, &v)| {
            if e == 0.0 {
                1.0
            } else if e == 1.0 {
                v
            } else if e == 2.0 {
                v * v
            } else {
                v.powf(e)
            }
        })
        .product()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightFunction {
    pub terms: Vec<Monomial>,
}

impl WeightFunction {
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|t| t.eval(x)).sum()
    }
}

/// The vector of weight functions defining the moment map and criterion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightSpec {
    d: usize,
    functions: Vec<WeightFunction>,
}

/// Distinct monomials of a [`WeightSpec`] together with the `q x M`
/// coefficient matrix mapping basis integrals to weight integrals.
#[derive(Debug, Clone)]
pub struct MonomialBasis {
    pub exponents: Vec<Vec<f64>>,
    /// Row-major `q x M`.
    pub coefs: Vec<f64>,
}

impl MonomialBasis {
    pub fn len(&self) -> usize {
        self.exponents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exponents.is_empty()
    }

    /// Combines basis values (length `M * width`, basis-major) into
    /// `q * width` weight values.
    pub fn combine(&self, basis_values: &[f64], width: usize) -> Vec<f64> {
        let m = self.len();
        let q = if m == 0 { 0 } else { self.coefs.len() / m };
        let mut out = vec![0.0; q * width];
        for row in 0..q {
            for b in 0..m {
                let c = self.coefs[row * m + b];
                if c == 0.0 {
                    continue;
                }
                for w in 0..width {
                    out[row * width + w] += c * basis_values[b * width + w];
                }
            }
        }
        out
    }
}

impl WeightSpec {
    pub fn new(d: usize, functions: Vec<WeightFunction>) -> Result<Self> {
        if functions.is_empty() {
            return Err(Error::WeightSpec("at least one weight function needed".into()));
        }
        for f in &functions {
            for t in &f.terms {
                if t.exponents.len() != d {
                    return Err(Error::WeightSpec(format!(
                        "monomial has {} exponents, dimension is {d}",
                        t.exponents.len()
                    )));
                }
                if t.exponents.iter().any(|&e| !(e >= 0.0) || !e.is_finite()) {
                    return Err(Error::WeightSpec("exponents must be finite and >= 0".into()));
                }
                if !t.coef.is_finite() {
                    return Err(Error::WeightSpec("coefficients must be finite".into()));
                }
            }
        }
        Ok(WeightSpec { d, functions })
    }

    /// `g = 1`.
    pub fn constant(d: usize) -> Self {
        WeightSpec {
            d,
            functions: vec![WeightFunction {
                terms: vec![Monomial::constant(d, 1.0)],
            }],
        }
    }

    /// Parses the text form for dimension `d`.
    pub fn parse(text: &str, d: usize) -> Result<Self> {
        let functions = text
            .split(';')
            .map(|f| parse_function(f, d))
            .collect::<Result<Vec<_>>>()?;
        Self::new(d, functions)
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn q(&self) -> usize {
        self.functions.len()
    }

    pub fn functions(&self) -> &[WeightFunction] {
        &self.functions
    }

    pub fn eval(&self, x: &[f64], out: &mut [f64]) {
        for (o, f) in out.iter_mut().zip(&self.functions) {
            *o = f.eval(x);
        }
    }

    pub fn basis(&self) -> MonomialBasis {
        let mut exponents: Vec<Vec<f64>> = Vec::new();
        let mut entries: Vec<(usize, usize, f64)> = Vec::new();
        for (row, f) in self.functions.iter().enumerate() {
            for t in &f.terms {
                let idx = match exponents.iter().position(|e| *e == t.exponents) {
                    Some(i) => i,
                    None => {
                        exponents.push(t.exponents.clone());
                        exponents.len() - 1
                    }
                };
                entries.push((row, idx, t.coef));
            }
        }
        let m = exponents.len();
        let mut coefs = vec![0.0; self.q() * m];
        for (row, idx, c) in entries {
            coefs[row * m + idx] += c;
        }
        MonomialBasis { exponents, coefs }
    }
}

impl fmt::Display for WeightSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let funcs: Vec<String> = self
            .functions
            .iter()
            .map(|func| {
                if func.terms.is_empty() {
                    return "0".to_string();
                }
                func.terms
                    .iter()
                    .enumerate()
                    .map(|(i, t)| {
                        let mut factors = Vec::new();
                        let c = if i > 0 { t.coef.abs() } else { t.coef };
                        let vars: Vec<String> = t
                            .exponents
                            .iter()
                            .enumerate()
                            .filter(|(_, &e)| e != 0.0)
                            .map(|(j, &e)| {
                                if e == 1.0 {
                                    format!("x{}", j + 1)
                                } else {
                                    format!("x{}^{}", j + 1, e)
                                }
                            })
                            .collect();
                        if c != 1.0 || vars.is_empty() {
                            factors.push(format!("{c}"));
                        }
                        factors.extend(vars);
                        let body = factors.join("*");
                        if i == 0 {
                            body
                        } else if t.coef < 0.0 {
                            format!("-{body}")
                        } else {
                            format!("+{body}")
                        }
                    })
                    .collect::<String>()
            })
            .collect();
        write!(f, "{}", funcs.join(";"))
    }
}

fn parse_function(text: &str, d: usize) -> Result<WeightFunction> {
    let compact: String = text.chars().filter(|c| !c.is_whitespace()).collect();
    if compact.is_empty() {
        return Err(Error::WeightSpec("empty weight function".into()));
    }
    // split into signed terms, ignoring signs that belong to an exponent
    // or to scientific notation
    let bytes = compact.as_bytes();
    let mut terms = Vec::new();
    let mut start = 0;
    for i in 1..bytes.len() {
        let c = bytes[i];
        let prev = bytes[i - 1];
        if (c == b'+' || c == b'-') && !matches!(prev, b'^' | b'*' | b'e' | b'E') {
            terms.push(&compact[start..i]);
            start = i;
        }
    }
    terms.push(&compact[start..]);
    let terms = terms
        .into_iter()
        .map(|t| parse_term(t, d))
        .collect::<Result<Vec<_>>>()?;
    Ok(WeightFunction { terms })
}

fn parse_term(text: &str, d: usize) -> Result<Monomial> {
    let (sign, body) = match text.as_bytes().first() {
        Some(b'-') => (-1.0, &text[1..]),
        Some(b'+') => (1.0, &text[1..]),
        _ => (1.0, text),
    };
    if body.is_empty() {
        return Err(Error::WeightSpec(format!("dangling sign in {text:?}")));
    }
    let mut mono = Monomial::constant(d, sign);
    for factor in body.split('*') {
        if let Some(var) = factor.strip_prefix('x') {
            let (idx, power) = match var.split_once('^') {
                Some((i, p)) => (i, p),
                None => (var, "1"),
            };
            let j: usize = idx
                .parse()
                .map_err(|_| Error::WeightSpec(format!("bad variable index in {factor:?}")))?;
            if j == 0 || j > d {
                return Err(Error::WeightSpec(format!(
                    "variable x{j} out of range for dimension {d}"
                )));
            }
            let p: f64 = power
                .parse()
                .map_err(|_| Error::WeightSpec(format!("bad exponent in {factor:?}")))?;
            if !(p >= 0.0) {
                return Err(Error::WeightSpec(format!("negative exponent in {factor:?}")));
            }
            mono.exponents[j - 1] += p;
        } else {
            let c: f64 = factor
                .parse()
                .map_err(|_| Error::WeightSpec(format!("cannot parse factor {factor:?}")))?;
            mono.coef *= c;
        }
    }
    Ok(mono)
}
