//! Small numeric helpers shared across modules.

/// Pairwise (tree) summation. The reduction order depends only on the
/// slice length, so results are reproducible regardless of how the
/// summands were produced.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const LEAF: usize = 32;
    if values.len() <= LEAF {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Componentwise pairwise summation of equally sized vectors.
pub fn pairwise_sum_vecs(blocks: &[Vec<f64>], width: usize) -> Vec<f64> {
    match blocks.len() {
        0 => vec![0.0; width],
        1 => blocks[0].clone(),
        len => {
            let mid = len / 2;
            let left = pairwise_sum_vecs(&blocks[..mid], width);
            let right = pairwise_sum_vecs(&blocks[mid..], width);
            left.iter().zip(&right).map(|(a, b)| a + b).collect()
        }
    }
}

pub(crate) fn logistic_sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn logit(p: f64) -> f64 {
    let p = p.clamp(1e-12, 1.0 - 1e-12);
    (p / (1.0 - p)).ln()
}
