//! Two-sided paired permutation test on per-instance correctness.
//!
//! Under the null hypothesis the two systems are exchangeable on every
//! instance, so each paired difference `dᵢ = aᵢ - bᵢ` keeps its magnitude and
//! gets a random sign. The p-value is the probability that a sign assignment
//! gives `|Σ sᵢ dᵢ| >= |Σ dᵢ|`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::EvalReport;
use crate::error::{Error, Result};

/// Largest number of pairs for which the p-value is computed exactly.
pub const EXACT_LIMIT: usize = 20;

/// Sign-flip resamples used above [`EXACT_LIMIT`].
pub const RESAMPLES: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignificanceMethod {
    ExactPermutation,
    MonteCarloPermutation { resamples: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceResult {
    /// Accuracy of `a` minus accuracy of `b`.
    pub statistic: f64,
    pub p_value: f64,
    pub n_pairs: usize,
    pub method: SignificanceMethod,
    pub alpha: f64,
    pub significant: bool,
}

fn differences(a: &[bool], b: &[bool]) -> Vec<i32> {
    a.iter().zip(b).map(|(&x, &y)| i32::from(x) - i32::from(y)).collect()
}

/// Exact two-sided p-value over all `2^N` sign assignments.
///
/// Only the `k` discordant pairs matter; the flipped sum equals `2j - k`
/// where `j` counts the pairs that end up positive, with multiplicity
/// `C(k, j)`.
pub fn exact_p_value(a: &[bool], b: &[bool]) -> f64 {
    let d = differences(a, b);
    let observed: i64 = d.iter().map(|&x| x as i64).sum::<i64>().abs();
    let k = d.iter().filter(|&&x| x != 0).count() as u32;
    if k == 0 {
        return 1.0;
    }
    let mut binom: f64 = 1.0;
    let mut hits = 0.0;
    for j in 0..=k {
        if (2 * j as i64 - k as i64).abs() >= observed {
            hits += binom;
        }
        binom = binom * (k - j) as f64 / (j + 1) as f64;
    }
    hits / 2f64.powi(k as i32)
}

/// Monte Carlo estimate `(hits + 1) / (resamples + 1)` with a seeded
/// ChaCha8 stream.
pub fn monte_carlo_p_value(a: &[bool], b: &[bool], resamples: usize, seed: u64) -> f64 {
    let d: Vec<i32> = differences(a, b).into_iter().filter(|&x| x != 0).collect();
    let observed: i64 = d.iter().map(|&x| x as i64).sum::<i64>().abs();
    if d.is_empty() {
        return 1.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hits = 0usize;
    for _ in 0..resamples {
        let s: i64 = d.iter().map(|&x| if rng.random::<bool>() { x as i64 } else { -(x as i64) }).sum();
        if s.abs() >= observed {
            hits += 1;
        }
    }
    (hits + 1) as f64 / (resamples + 1) as f64
}

fn paired(a: &EvalReport, b: &EvalReport) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Unpaired(format!("{} vs {} instances", a.len(), b.len())));
    }
    if let Some((x, y)) = a.per_instance.iter().zip(&b.per_instance).find(|(x, y)| x.id != y.id) {
        return Err(Error::Unpaired(format!("instance `{}` paired with `{}`", x.id, y.id)));
    }
    Ok(())
}

/// Tests whether `a` and `b` differ in accuracy on the same instances.
pub fn significance(a: &EvalReport, b: &EvalReport, alpha: f64, seed: u64) -> Result<SignificanceResult> {
    paired(a, b)?;
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidArgument(format!("alpha {alpha} outside [0, 1]")));
    }
    let (ca, cb) = (a.correctness(), b.correctness());
    let n = ca.len();
    let (p_value, method) = if n <= EXACT_LIMIT {
        (exact_p_value(&ca, &cb), SignificanceMethod::ExactPermutation)
    } else {
        (
            monte_carlo_p_value(&ca, &cb, RESAMPLES, seed),
            SignificanceMethod::MonteCarloPermutation { resamples: RESAMPLES, seed },
        )
    };
    Ok(SignificanceResult {
        statistic: a.recomputed_accuracy() - b.recomputed_accuracy(),
        p_value,
        n_pairs: n,
        method,
        alpha,
        significant: p_value < alpha,
    })
}
