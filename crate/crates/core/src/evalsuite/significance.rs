use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::StreamKey;

/// Largest sample enumerated exhaustively.
pub const EXACT_LIMIT: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomizationResult {
    /// Observed `mean(b − a)`.
    pub statistic: f64,
    pub p_value: f64,
    pub exact: bool,
    /// Sign assignments examined.
    pub trials: u64,
}

fn tolerance(diffs: &[f64]) -> f64 {
    1e-12 * diffs.iter().map(|d| d.abs()).sum::<f64>().max(1.0)
}

/// Paired one-sided approximate randomization: is `a` better (lower) than `b`?
///
/// The statistic is `mean(b − a)`. Up to [`EXACT_LIMIT`] segments every sign
/// assignment of the paired differences is enumerated and the exact p-value
/// is returned. Beyond that `trials` random assignments are drawn and the
/// conservative estimate `(count + 1) / (trials + 1)` is returned.
pub fn paired_randomization_test(
    a: &[f64],
    b: &[f64],
    trials: u64,
    seed: u64,
) -> Result<RandomizationResult> {
    if a.len() != b.len() {
        return Err(Error::input(format!(
            "paired samples differ in length: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::input("randomization test needs at least one pair"));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| y - x).collect();
    if a.len() <= EXACT_LIMIT {
        Ok(exact(&diffs))
    } else {
        monte_carlo(&diffs, trials, seed)
    }
}

fn exact(diffs: &[f64]) -> RandomizationResult {
    let n = diffs.len();
    let observed: f64 = diffs.iter().sum();
    let tol = tolerance(diffs);
    let total = 1u64 << n;
    let mut count = 0u64;
    for mask in 0..total {
        let mut s = 0.0;
        for (i, d) in diffs.iter().enumerate() {
            s += if mask >> i & 1 == 1 { -d } else { *d };
        }
        if s >= observed - tol {
            count += 1;
        }
    }
    RandomizationResult {
        statistic: observed / n as f64,
        p_value: count as f64 / total as f64,
        exact: true,
        trials: total,
    }
}

/// Monte Carlo estimate regardless of sample size.
pub fn monte_carlo(diffs: &[f64], trials: u64, seed: u64) -> Result<RandomizationResult> {
    if trials == 0 {
        return Err(Error::input("Monte Carlo randomization needs trials ≥ 1"));
    }
    let observed: f64 = diffs.iter().sum();
    let tol = tolerance(diffs);
    let mut rng = StreamKey::root(seed).label("randomization").rng();
    let mut count = 0u64;
    for _ in 0..trials {
        let s: f64 = diffs
            .iter()
            .map(|d| if rng.gen::<bool>() { -d } else { *d })
            .sum();
        if s >= observed - tol {
            count += 1;
        }
    }
    Ok(RandomizationResult {
        statistic: observed / diffs.len() as f64,
        p_value: (count + 1) as f64 / (trials + 1) as f64,
        exact: false,
        trials,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_enumerated_cases() {
        let r = paired_randomization_test(&[0.0, 0.0], &[1.0, 1.0], 0, 0).unwrap();
        assert!(r.exact);
        assert_eq!(r.p_value, 0.25);
        let same = [0.3, 0.1, 0.7];
        assert_eq!(
            paired_randomization_test(&same, &same, 0, 0)
                .unwrap()
                .p_value,
            1.0
        );
        // diffs (1, −1): sums {0, 2, −2, 0}, three of which reach 0.
        assert_eq!(
            paired_randomization_test(&[0.0, 1.0], &[1.0, 0.0], 0, 0)
                .unwrap()
                .p_value,
            0.75
        );
    }

    #[test]
    fn errors() {
        assert!(paired_randomization_test(&[1.0], &[1.0, 2.0], 10, 0).is_err());
        assert!(paired_randomization_test(&[], &[], 10, 0).is_err());
    }
}
