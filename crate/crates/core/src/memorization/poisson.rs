//! Goodness of fit of per-slice event counts to a Poisson distribution.
//!
//! The primary test is the dispersion index `D = Σ (xᵢ − x̄)² / x̄`, which is
//! approximately χ² with `n − 1` degrees of freedom when the counts are
//! i.i.d. Poisson. Trends over time or clustering inflate it; the test is
//! two-sided so under-dispersion is flagged as well.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma_lr, gamma_ur};

use crate::error::{Error, Result};

/// `P(X ≤ q)` for `X ~ Poisson(lambda)`.
pub fn poisson_cdf(q: u64, lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    gamma_ur(q as f64 + 1.0, lambda)
}

/// Smallest integer `q` with `P(X ≤ q) ≥ p`.
pub fn poisson_quantile(p: f64, lambda: f64) -> u64 {
    let mut q = 0;
    while poisson_cdf(q, lambda) < p {
        q += 1;
    }
    q
}

/// Survival and distribution function of χ²(df) at `x`.
fn chi_square_tails(x: f64, df: f64) -> (f64, f64) {
    if x <= 0.0 {
        return (0.0, 1.0);
    }
    (gamma_lr(df / 2.0, x / 2.0), gamma_ur(df / 2.0, x / 2.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QqPoint {
    pub theoretical: u64,
    pub empirical: u64,
    pub multiplicity: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoissonFit {
    pub n: usize,
    /// Mean events per slice.
    pub lambda_hat: f64,
    /// Dispersion statistic; absent when every count is zero.
    pub dispersion: Option<f64>,
    pub df: usize,
    /// Two-sided p-value of the dispersion test.
    pub p_value: f64,
    pub qq_points: Vec<QqPoint>,
}

impl PoissonFit {
    pub fn passes(&self, alpha: f64) -> bool {
        self.p_value > alpha
    }

    /// Variance-to-mean ratio.
    pub fn dispersion_index(&self) -> Option<f64> {
        self.dispersion.map(|d| d / self.df as f64)
    }
}

pub fn fit_poisson(counts: &[u64]) -> Result<PoissonFit> {
    if counts.len() < 2 {
        return Err(Error::Input(format!("a Poisson fit needs at least 2 slices, got {}", counts.len())));
    }
    let n = counts.len();
    let mean = counts.iter().map(|&c| c as f64).sum::<f64>() / n as f64;
    let df = n - 1;
    let qq = qq_points(counts, mean);
    if mean == 0.0 {
        return Ok(PoissonFit { n, lambda_hat: 0.0, dispersion: None, df, p_value: 1.0, qq_points: qq });
    }
    let ss: f64 = counts.iter().map(|&c| (c as f64 - mean).powi(2)).sum();
    let d = ss / mean;
    let (lower, upper) = chi_square_tails(d, df as f64);
    let p_value = (2.0 * lower.min(upper)).min(1.0);
    Ok(PoissonFit { n, lambda_hat: mean, dispersion: Some(d), df, p_value, qq_points: qq })
}

/// Q-Q pairs against `Poisson(lambda)` using plotting positions
/// `(i − 0.5) / n`. Identical pairs are merged and counted; the list is
/// sorted by (theoretical, empirical).
pub fn qq_points(counts: &[u64], lambda: f64) -> Vec<QqPoint> {
    let n = counts.len();
    let mut empirical = counts.to_vec();
    empirical.sort_unstable();
    let mut points: Vec<QqPoint> = Vec::new();
    // Probabilities increase with i, so the quantile search resumes where
    // the previous one stopped.
    let mut q = 0u64;
    let mut cdf = poisson_cdf(0, lambda);
    for (i, &e) in empirical.iter().enumerate() {
        let p = (i as f64 + 0.5) / n as f64;
        while cdf < p {
            q += 1;
            cdf = poisson_cdf(q, lambda);
        }
        match points.last_mut() {
            Some(last) if last.theoretical == q && last.empirical == e => last.multiplicity += 1,
            _ => points.push(QqPoint { theoretical: q, empirical: e, multiplicity: 1 }),
        }
    }
    points.sort_unstable_by_key(|p| (p.theoretical, p.empirical));
    points
}

/// Binned Pearson χ² test, cells merged until each expects at least 5.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinnedChiSquare {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
    /// Cell lower bounds; the last cell is open-ended.
    pub cell_starts: Vec<u64>,
    pub observed: Vec<u64>,
    pub expected: Vec<f64>,
}

/// `None` when fewer than three cells survive merging.
pub fn chi_square_binned(counts: &[u64], lambda: f64) -> Option<BinnedChiSquare> {
    const MIN_EXPECTED: f64 = 5.0;
    let n = counts.len() as f64;
    if counts.is_empty() || lambda <= 0.0 {
        return None;
    }
    let max = *counts.iter().max()?;
    let mut cell_starts = Vec::new();
    let mut observed = Vec::new();
    let mut expected = Vec::new();
    let (mut start, mut obs, mut exp) = (0u64, 0u64, 0.0f64);
    let mut below = 0.0; // P(X < v)
    for v in 0..=max {
        let cdf = poisson_cdf(v, lambda);
        obs += counts.iter().filter(|&&c| c == v).count() as u64;
        exp += n * (cdf - below);
        below = cdf;
        if exp >= MIN_EXPECTED && n * (1.0 - cdf) >= MIN_EXPECTED {
            cell_starts.push(start);
            observed.push(obs);
            expected.push(exp);
            start = v + 1;
            obs = 0;
            exp = 0.0;
        }
    }
    // Open tail from `start`, merged into the previous cell if it is small.
    exp += n * (1.0 - below);
    if exp < MIN_EXPECTED && !observed.is_empty() {
        *observed.last_mut().unwrap() += obs;
        *expected.last_mut().unwrap() += exp;
    } else {
        cell_starts.push(start);
        observed.push(obs);
        expected.push(exp);
    }
    if observed.len() < 3 {
        return None;
    }
    let statistic: f64 = observed.iter().zip(&expected).map(|(&o, &e)| (o as f64 - e).powi(2) / e).sum();
    let df = observed.len() - 2;
    let (_, p_value) = chi_square_tails(statistic, df as f64);
    Some(BinnedChiSquare { statistic, df, p_value, cell_starts, observed, expected })
}
