//! Clustering and configuration agreement measures.

use std::collections::HashMap;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

fn choose2(x: u64) -> u128 {
    let x = x as u128;
    x * x.saturating_sub(1) / 2
}

fn dense_codes(labels: &[usize]) -> (Vec<usize>, usize) {
    let mut map = HashMap::new();
    let codes = labels
        .iter()
        .map(|l| {
            let next = map.len();
            *map.entry(*l).or_insert(next)
        })
        .collect();
    (codes, map.len())
}

/// ARI together with a flag set when the index is undefined (both
/// partitions trivial) and reported as 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AriValue {
    pub value: f64,
    pub degenerate: bool,
}

/// Adjusted Rand index between two labelings of the same nodes. Label values
/// are arbitrary identifiers.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> Result<f64> {
    adjusted_rand_index_flagged(a, b).map(|v| v.value)
}

pub fn adjusted_rand_index_flagged(a: &[usize], b: &[usize]) -> Result<AriValue> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch(format!(
            "partitions of length {} and {}",
            a.len(),
            b.len()
        )));
    }
    let n = a.len() as u64;
    let (ca, ka) = dense_codes(a);
    let (cb, kb) = dense_codes(b);
    let mut table = vec![0u64; ka * kb];
    let mut ra = vec![0u64; ka];
    let mut rb = vec![0u64; kb];
    for (&x, &y) in ca.iter().zip(&cb) {
        table[x * kb + y] += 1;
        ra[x] += 1;
        rb[y] += 1;
    }
    // Scaled by C(n, 2) so that the only rounding is the final division:
    // ARI = 2 (N·I − A·B) / (N (A + B) − 2 A·B).
    let index: u128 = table.iter().map(|&c| choose2(c)).sum();
    let sa: u128 = ra.iter().map(|&c| choose2(c)).sum();
    let sb: u128 = rb.iter().map(|&c| choose2(c)).sum();
    let total = choose2(n);
    let num = 2 * (total * index) as i128 - 2 * (sa * sb) as i128;
    let denom = (total * (sa + sb)) as i128 - 2 * (sa * sb) as i128;
    if denom == 0 {
        return Ok(AriValue {
            value: 1.0,
            degenerate: true,
        });
    }
    Ok(AriValue {
        value: num as f64 / denom as f64,
        degenerate: false,
    })
}

fn centred_unit(m: &DMatrix<f64>, cols: usize) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    let mut out = DMatrix::zeros(n, cols);
    for l in 0..m.ncols() {
        let mean = m.column(l).mean();
        for i in 0..n {
            out[(i, l)] = m[(i, l)] - mean;
        }
    }
    let norm = out.norm();
    if !(norm > 1e-300) || !norm.is_finite() {
        return Err(Error::Degenerate("configuration has zero variance".into()));
    }
    Ok(out / norm)
}

/// Procrustes correlation 1 − m², where m² is the residual sum of squares
/// after centring, scaling both configurations to unit sum of squares and
/// the best rotation plus scaling of one onto the other. The narrower
/// configuration is zero-padded.
pub fn procrustes_correlation(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    if a.nrows() != b.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "configurations with {} and {} rows",
            a.nrows(),
            b.nrows()
        )));
    }
    let cols = a.ncols().max(b.ncols());
    let a = centred_unit(a, cols)?;
    let b = centred_unit(b, cols)?;
    let cross = a.transpose() * b;
    let trace: f64 = cross.singular_values().iter().sum();
    Ok((trace * trace).clamp(0.0, 1.0))
}
