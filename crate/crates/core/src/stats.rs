//! Goodness-of-fit helpers used by the statistical checks.

use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChiSquareResult {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

fn upper_tail(statistic: f64, dof: usize) -> Result<f64> {
    if dof == 0 {
        return Ok(1.0);
    }
    let dist = ChiSquared::new(dof as f64).map_err(|e| Error::Internal(e.to_string()))?;
    Ok(dist.sf(statistic))
}

/// Pearson test of `counts` against the uniform distribution on its cells.
pub fn chi_square_uniformity(counts: &[u64]) -> Result<ChiSquareResult> {
    let total: u64 = counts.iter().sum();
    if counts.len() < 2 || total == 0 {
        return Err(Error::Domain("need at least two cells and one observation".into()));
    }
    let expected = total as f64 / counts.len() as f64;
    let statistic = counts
        .iter()
        .map(|&c| (c as f64 - expected).powi(2) / expected)
        .sum();
    let dof = counts.len() - 1;
    Ok(ChiSquareResult {
        statistic,
        dof,
        p_value: upper_tail(statistic, dof)?,
    })
}

/// Two-sample homogeneity test on a `2 × k` contingency table. Cells empty in
/// both samples are dropped.
pub fn chi_square_two_sample(a: &[u64], b: &[u64]) -> Result<ChiSquareResult> {
    if a.len() != b.len() {
        return Err(Error::Domain("histograms have different lengths".into()));
    }
    let (na, nb): (u64, u64) = (a.iter().sum(), b.iter().sum());
    if na == 0 || nb == 0 {
        return Err(Error::Domain("both samples must be non-empty".into()));
    }
    let total = (na + nb) as f64;
    let mut statistic = 0.0;
    let mut cells = 0usize;
    for (&ca, &cb) in a.iter().zip(b) {
        let col = (ca + cb) as f64;
        if col == 0.0 {
            continue;
        }
        cells += 1;
        let ea = col * na as f64 / total;
        let eb = col * nb as f64 / total;
        statistic += (ca as f64 - ea).powi(2) / ea + (cb as f64 - eb).powi(2) / eb;
    }
    let dof = cells.saturating_sub(1);
    Ok(ChiSquareResult {
        statistic,
        dof,
        p_value: upper_tail(statistic, dof)?,
    })
}

/// `½ Σ |p − q|` between two normalized histograms.
pub fn total_variation(a: &[u64], b: &[u64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Domain("histograms have different lengths".into()));
    }
    let (na, nb) = (a.iter().sum::<u64>() as f64, b.iter().sum::<u64>() as f64);
    if na == 0.0 || nb == 0.0 {
        return Err(Error::Domain("both samples must be non-empty".into()));
    }
    Ok(0.5
        * a.iter()
            .zip(b)
            .map(|(&x, &y)| (x as f64 / na - y as f64 / nb).abs())
            .sum::<f64>())
}

/// Histogram of values in `[0, k)`.
pub fn histogram<I: IntoIterator<Item = u64>>(values: I, k: usize) -> Vec<u64> {
    let mut h = vec![0u64; k];
    for v in values {
        h[v as usize] += 1;
    }
    h
}
