//! Deterministic integration over the unit cube.
//!
//! The default rule is an Owen-scrambled Sobol sequence evaluated under two
//! independent scramblings; the estimate is their mean and the reported
//! error is half their difference. Point counts double from
//! `min_points` until the tolerance is met or `max_points` is reached.
//! A tensor Gauss-Legendre rule is available for smooth integrands in one
//! or two dimensions.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::pairwise_sum_vecs;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rule {
    ScrambledSobol,
    GaussLegendre,
    /// Gauss-Legendre up to two dimensions, scrambled Sobol above.
    Auto,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CubatureSpec {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Points per randomization at the first stage (rounded up to a
    /// power of two, at least 256).
    pub min_points: usize,
    /// Budget per randomization.
    pub max_points: usize,
    pub seed: u64,
    pub rule: Rule,
    /// Unmet tolerance is an error instead of a flag.
    pub strict: bool,
}

impl Default for CubatureSpec {
    fn default() -> Self {
        CubatureSpec {
            rel_tol: 1e-6,
            abs_tol: 1e-12,
            min_points: 1 << 10,
            max_points: 1 << 14,
            seed: 0x5EED_CAFE,
            rule: Rule::ScrambledSobol,
            strict: false,
        }
    }
}

impl CubatureSpec {
    pub fn with_budget(mut self, max_points: usize) -> Self {
        self.max_points = max_points;
        self
    }

    pub fn with_tolerance(mut self, rel_tol: f64) -> Self {
        self.rel_tol = rel_tol;
        self
    }

    pub fn with_rule(mut self, rule: Rule) -> Self {
        self.rule = rule;
        self
    }

    /// Runs exactly `points` per randomization, ignoring tolerances.
    pub fn fixed(mut self, points: usize) -> Self {
        self.min_points = points;
        self.max_points = points;
        self.rel_tol = 0.0;
        self.abs_tol = 0.0;
        self
    }

    pub fn resolved_rule(&self, dim: usize) -> Rule {
        match self.rule {
            Rule::Auto if dim <= 2 => Rule::GaussLegendre,
            Rule::Auto => Rule::ScrambledSobol,
            r => r,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CubatureResult {
    pub values: Vec<f64>,
    pub error: Vec<f64>,
    pub points: usize,
    pub converged: bool,
}

impl CubatureResult {
    pub fn value(&self) -> f64 {
        self.values[0]
    }

    pub fn max_error(&self) -> f64 {
        self.error.iter().copied().fold(0.0, f64::max)
    }

    fn into_checked(self, spec: &CubatureSpec) -> Result<Self> {
        if spec.strict && !self.converged {
            return Err(Error::QuadratureTolerance {
                error: self.max_error(),
                points: self.points,
            });
        }
        Ok(self)
    }
}

/// Integrates a scalar function over `[0,1]^dim`.
pub fn integrate_cube<F>(dim: usize, f: F, spec: &CubatureSpec) -> Result<CubatureResult>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    integrate_cube_vec(dim, 1, |x, out| out[0] = f(x), spec)
}

/// Integrates a vector-valued function `f(x, out)` with `width` outputs.
pub fn integrate_cube_vec<F>(dim: usize, width: usize, f: F, spec: &CubatureSpec) -> Result<CubatureResult>
where
    F: Fn(&[f64], &mut [f64]) + Sync,
{
    if dim == 0 {
        let mut out = vec![0.0; width];
        f(&[], &mut out);
        return Ok(CubatureResult {
            values: out,
            error: vec![0.0; width],
            points: 1,
            converged: true,
        });
    }
    let result = match spec.resolved_rule(dim) {
        Rule::GaussLegendre => gauss_legendre(dim, width, &f, spec),
        _ => scrambled_sobol(dim, width, &f, spec)?,
    };
    result.into_checked(spec)
}

fn tolerance_met(values: &[f64], error: &[f64], spec: &CubatureSpec) -> bool {
    values
        .iter()
        .zip(error)
        .all(|(v, e)| *e <= (spec.rel_tol * v.abs()).max(spec.abs_tol))
}

// ---------------------------------------------------------------------------
// Scrambled Sobol

const BLOCK: usize = 256;

/// Primitive polynomial degree, coefficients and initial direction numbers
/// for dimensions 2..=32 (Joe and Kuo, new-joe-kuo-6.21201).
const SOBOL_TABLE: [(u32, u32, &[u32]); 31] = [
    (1, 0, &[1]),
    (2, 1, &[1, 3]),
    (3, 1, &[1, 3, 1]),
    (3, 2, &[1, 1, 1]),
    (4, 1, &[1, 1, 3, 3]),
    (4, 4, &[1, 3, 5, 13]),
    (5, 2, &[1, 1, 5, 5, 17]),
    (5, 4, &[1, 1, 5, 5, 5]),
    (5, 7, &[1, 1, 7, 11, 19]),
    (5, 11, &[1, 1, 5, 1, 1]),
    (5, 13, &[1, 1, 1, 3, 11]),
    (5, 14, &[1, 3, 5, 5, 31]),
    (6, 1, &[1, 3, 3, 9, 7, 49]),
    (6, 13, &[1, 1, 1, 15, 21, 21]),
    (6, 16, &[1, 3, 1, 13, 27, 49]),
    (6, 19, &[1, 1, 1, 15, 7, 5]),
    (6, 22, &[1, 3, 1, 15, 13, 25]),
    (6, 25, &[1, 1, 5, 5, 19, 61]),
    (7, 1, &[1, 3, 7, 11, 23, 15, 103]),
    (7, 4, &[1, 3, 7, 13, 13, 15, 69]),
    (7, 7, &[1, 1, 3, 13, 7, 35, 63]),
    (7, 8, &[1, 3, 5, 9, 1, 25, 53]),
    (7, 14, &[1, 3, 1, 13, 9, 35, 107]),
    (7, 19, &[1, 3, 1, 5, 27, 61, 31]),
    (7, 21, &[1, 1, 5, 11, 19, 41, 61]),
    (7, 28, &[1, 3, 5, 3, 3, 13, 69]),
    (7, 31, &[1, 1, 7, 13, 1, 19, 1]),
    (7, 32, &[1, 3, 7, 5, 13, 19, 59]),
    (7, 37, &[1, 1, 3, 9, 25, 29, 41]),
    (7, 41, &[1, 3, 5, 13, 23, 1, 55]),
    (7, 42, &[1, 3, 7, 3, 13, 59, 17]),
];

pub const MAX_SOBOL_DIM: usize = SOBOL_TABLE.len() + 1;

fn direction_numbers(dim: usize) -> [u32; 32] {
    let mut v = [0u32; 32];
    if dim == 0 {
        for (k, vk) in v.iter_mut().enumerate() {
            *vk = 1 << (31 - k);
        }
        return v;
    }
    let (s, a, m) = SOBOL_TABLE[dim - 1];
    let s = s as usize;
    for k in 0..32 {
        if k < s {
            v[k] = m[k] << (31 - k);
        } else {
            let mut x = v[k - s] ^ (v[k - s] >> s);
            for l in 1..s {
                if (a >> (s - 1 - l)) & 1 == 1 {
                    x ^= v[k - l];
                }
            }
            v[k] = x;
        }
    }
    v
}

/// Unscrambled Sobol coordinates of point `index`, as 32-bit integers.
pub(crate) struct SobolTable {
    directions: Vec<[u32; 32]>,
}

impl SobolTable {
    pub(crate) fn new(dim: usize) -> Self {
        assert!(dim <= MAX_SOBOL_DIM, "Sobol table supports {MAX_SOBOL_DIM} dimensions");
        SobolTable {
            directions: (0..dim).map(direction_numbers).collect(),
        }
    }

    #[inline]
    pub(crate) fn coordinate(&self, index: u32, dim: usize) -> u32 {
        let v = &self.directions[dim];
        let mut i = index;
        let mut x = 0u32;
        while i != 0 {
            let b = i.trailing_zeros() as usize;
            x ^= v[b];
            i &= i - 1;
        }
        x
    }
}

#[inline]
fn laine_karras(mut x: u32, seed: u32) -> u32 {
    x ^= x.wrapping_mul(0x3d20_adea);
    x = x.wrapping_add(seed);
    x = x.wrapping_mul((seed >> 16) | 1);
    x ^= x.wrapping_mul(0x0552_6c56);
    x ^= x.wrapping_mul(0x53a2_2864);
    x
}

/// Owen-style nested uniform scramble of the 32-bit fraction `x`.
#[inline]
fn owen_scramble(x: u32, seed: u32) -> u32 {
    laine_karras(x.reverse_bits(), seed).reverse_bits()
}

fn mix_seed(seed: u64, randomization: u64, dim: u64) -> u32 {
    // splitmix64 finalizer
    let mut z = seed
        .wrapping_add(randomization.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(dim.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    (z ^ (z >> 31)) as u32
}

const TWO_POW_32: f64 = 4_294_967_296.0;

fn sobol_block_sum<F>(table: &SobolTable, seeds: &[u32], start: usize, len: usize, width: usize, f: &F) -> Vec<f64>
where
    F: Fn(&[f64], &mut [f64]) + Sync,
{
    let dim = seeds.len();
    let mut x = vec![0.0; dim];
    let mut out = vec![0.0; width];
    let mut acc = vec![0.0; width];
    for idx in start..start + len {
        for (j, (xj, &seed)) in x.iter_mut().zip(seeds).enumerate() {
            let raw = table.coordinate(idx as u32, j);
            *xj = (owen_scramble(raw, seed) as f64 + 0.5) / TWO_POW_32;
        }
        out.iter_mut().for_each(|o| *o = 0.0);
        f(&x, &mut out);
        for (a, o) in acc.iter_mut().zip(&out) {
            *a += o;
        }
    }
    acc
}

fn scrambled_sobol<F>(dim: usize, width: usize, f: &F, spec: &CubatureSpec) -> Result<CubatureResult>
where
    F: Fn(&[f64], &mut [f64]) + Sync,
{
    if dim > MAX_SOBOL_DIM {
        return Err(Error::Config(format!(
            "cubature dimension {dim} exceeds {MAX_SOBOL_DIM}"
        )));
    }
    let table = SobolTable::new(dim);
    let seeds: [Vec<u32>; 2] = [0u64, 1].map(|r| (0..dim as u64).map(|j| mix_seed(spec.seed, r, j)).collect());
    let max_points = spec.max_points.max(BLOCK).next_power_of_two();
    let mut target = spec.min_points.max(BLOCK).next_power_of_two().min(max_points);
    let mut blocks: [Vec<Vec<f64>>; 2] = [Vec::new(), Vec::new()];
    let mut done = 0usize;
    loop {
        let new_blocks = (target - done) / BLOCK;
        for (r, store) in blocks.iter_mut().enumerate() {
            let sums: Vec<Vec<f64>> = (0..new_blocks)
                .into_par_iter()
                .map(|b| sobol_block_sum(&table, &seeds[r], done + b * BLOCK, BLOCK, width, f))
                .collect();
            store.extend(sums);
        }
        done = target;
        let est: Vec<Vec<f64>> = blocks
            .iter()
            .map(|bl| {
                pairwise_sum_vecs(bl, width)
                    .into_iter()
                    .map(|s| s / done as f64)
                    .collect()
            })
            .collect();
        let values: Vec<f64> = est[0].iter().zip(&est[1]).map(|(a, b)| 0.5 * (a + b)).collect();
        let error: Vec<f64> = est[0].iter().zip(&est[1]).map(|(a, b)| 0.5 * (a - b).abs()).collect();
        let converged = tolerance_met(&values, &error, spec);
        if converged || done >= max_points {
            return Ok(CubatureResult {
                values,
                error,
                points: done,
                converged,
            });
        }
        target = (done * 2).min(max_points);
    }
}

// ---------------------------------------------------------------------------
// Gauss-Legendre

type Nodes = Arc<(Vec<f64>, Vec<f64>)>;

/// Gauss-Legendre nodes and weights of the given order on `[0, 1]`.
pub fn gauss_legendre_nodes(order: usize) -> Nodes {
    static CACHE: OnceLock<Mutex<HashMap<usize, Nodes>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(n) = cache.lock().unwrap().get(&order) {
        return n.clone();
    }
    let nodes = Arc::new(compute_gauss_legendre(order));
    cache.lock().unwrap().insert(order, nodes.clone());
    nodes
}

fn compute_gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 0 { 1.0 } else { p1 };
            let pm1 = if n == 1 { 1.0 } else { p0 };
            dp = nf * (z * p - pm1) / (z * z - 1.0);
            let dz = p / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        let weight = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = 0.5 * (1.0 - z);
        x[n - 1 - i] = 0.5 * (1.0 + z);
        w[i] = 0.5 * weight;
        w[n - 1 - i] = 0.5 * weight;
    }
    (x, w)
}

fn gauss_legendre_apply<F>(dim: usize, width: usize, order: usize, f: &F) -> Vec<f64>
where
    F: Fn(&[f64], &mut [f64]) + Sync,
{
    let nodes = gauss_legendre_nodes(order);
    let (x, w) = (&nodes.0, &nodes.1);
    let total = order.pow(dim as u32);
    let mut point = vec![0.0; dim];
    let mut out = vec![0.0; width];
    let mut acc = vec![0.0; width];
    for idx in 0..total {
        let mut rem = idx;
        let mut weight = 1.0;
        for p in point.iter_mut() {
            let i = rem % order;
            rem /= order;
            *p = x[i];
            weight *= w[i];
        }
        out.iter_mut().for_each(|o| *o = 0.0);
        f(&point, &mut out);
        for (a, o) in acc.iter_mut().zip(&out) {
            *a += weight * o;
        }
    }
    acc
}

fn gauss_legendre<F>(dim: usize, width: usize, f: &F, spec: &CubatureSpec) -> CubatureResult
where
    F: Fn(&[f64], &mut [f64]) + Sync,
{
    let max_order = ((spec.max_points as f64).powf(1.0 / dim as f64).floor() as usize).max(8);
    let mut order = 8usize;
    let mut prev = gauss_legendre_apply(dim, width, order / 2, f);
    loop {
        let values = gauss_legendre_apply(dim, width, order, f);
        let error: Vec<f64> = values.iter().zip(&prev).map(|(a, b)| (a - b).abs()).collect();
        let converged = tolerance_met(&values, &error, spec);
        if converged || order * 2 > max_order {
            return CubatureResult {
                values,
                error,
                points: order.pow(dim as u32),
                converged,
            };
        }
        prev = values;
        order *= 2;
    }
}
