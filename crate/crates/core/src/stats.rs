//! Streaming mean and error estimation for correlated time series.

use serde::{Deserialize, Serialize};

/// Minimum number of blocks for a blocking level to be trusted.
const MIN_BLOCKS: u64 = 32;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
struct Level {
    count: u64,
    sum: f64,
    sum_sq: f64,
    pending: Option<f64>,
}

/// Online blocking (Flyvbjerg-Petersen) accumulator for one observable.
/// Level `l` holds means of `2^l` consecutive samples, so the spread of
/// the plateau level accounts for autocorrelation. Accumulators for
/// independent series merge by adding their level statistics.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Blocking {
    levels: Vec<Level>,
}

impl Blocking {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        let mut value = x;
        let mut l = 0;
        loop {
            if self.levels.len() == l {
                self.levels.push(Level::default());
            }
            let level = &mut self.levels[l];
            level.count += 1;
            level.sum += value;
            level.sum_sq += value * value;
            match level.pending.take() {
                None => {
                    level.pending = Some(value);
                    return;
                }
                Some(prev) => {
                    value = 0.5 * (prev + value);
                    l += 1;
                }
            }
        }
    }

    /// Combine with the statistics of an independent series.
    pub fn merge(&mut self, other: &Blocking) {
        if self.levels.len() < other.levels.len() {
            self.levels.resize(other.levels.len(), Level::default());
        }
        for (a, b) in self.levels.iter_mut().zip(&other.levels) {
            a.count += b.count;
            a.sum += b.sum;
            a.sum_sq += b.sum_sq;
        }
    }

    pub fn count(&self) -> u64 {
        self.levels.first().map_or(0, |l| l.count)
    }

    pub fn mean(&self) -> f64 {
        let l = &self.levels[0];
        l.sum / l.count as f64
    }

    fn level_stderr(level: &Level) -> f64 {
        let n = level.count as f64;
        let mean = level.sum / n;
        let var = ((level.sum_sq - n * mean * mean) / (n - 1.0)).max(0.0);
        (var / n).sqrt()
    }

    /// Naive standard error assuming independent samples.
    pub fn naive_stderr(&self) -> f64 {
        match self.levels.first() {
            Some(l) if l.count > 1 => Self::level_stderr(l),
            _ => f64::NAN,
        }
    }

    /// Largest standard error over the levels that still have enough
    /// blocks, a conservative reading of the blocking plateau.
    pub fn stderr(&self) -> f64 {
        let mut best = self.naive_stderr();
        for level in self.levels.iter().skip(1) {
            if level.count < MIN_BLOCKS {
                break;
            }
            best = best.max(Self::level_stderr(level));
        }
        best
    }

    /// Ratio of the blocked to the naive variance of the mean.
    pub fn inflation(&self) -> f64 {
        (self.stderr() / self.naive_stderr()).powi(2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn independent_samples_have_no_inflation() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut b = Blocking::new();
        let xs: Vec<f64> = (0..1 << 14).map(|_| StandardNormal.sample(&mut rng)).collect();
        for &x in &xs {
            b.push(x);
        }
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        assert!((b.mean() - mean).abs() < 1e-12);
        assert!((b.naive_stderr() - 1.0 / 128.0).abs() < 0.05 / 128.0);
        assert!(b.inflation() < 1.6, "{}", b.inflation());
    }

    #[test]
    fn ar1_inflation_matches_correlation_time() {
        // x_t = a x_{t-1} + noise has variance inflation (1 + a) / (1 - a).
        let a: f64 = 0.8;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut b = Blocking::new();
        let mut x = 0.0;
        for _ in 0..1 << 18 {
            let e: f64 = StandardNormal.sample(&mut rng);
            x = a * x + e;
            b.push(x);
        }
        let expect = (1.0 + a) / (1.0 - a);
        let got = b.inflation();
        assert!((got / expect - 1.0).abs() < 0.3, "{got} vs {expect}");
    }

    #[test]
    fn merge_equals_sequential_for_level_zero() {
        let mut a = Blocking::new();
        let mut b = Blocking::new();
        let mut all = Blocking::new();
        for i in 0..100 {
            let x = (i as f64).sin();
            if i < 37 {
                a.push(x)
            } else {
                b.push(x)
            }
            all.push(x);
        }
        a.merge(&b);
        assert_eq!(a.count(), 100);
        assert!((a.mean() - all.mean()).abs() < 1e-14);
        assert!((a.naive_stderr() - all.naive_stderr()).abs() < 1e-14);
    }
}
