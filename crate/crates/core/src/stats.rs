//! Sample statistics and binned distribution comparisons.

use crate::grid::{pairwise_sum, GridFunction};

/// A Monte Carlo mean together with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub estimate: f64,
    pub std_error: f64,
}

impl McEstimate {
    /// Sample mean and standard error of `samples`, reduced in a fixed order.
    pub fn from_samples(samples: &[f64]) -> Self {
        let n = samples.len();
        if n == 0 {
            return Self {
                estimate: f64::NAN,
                std_error: f64::NAN,
            };
        }
        let mean = pairwise_sum(samples) / n as f64;
        if n == 1 {
            return Self {
                estimate: mean,
                std_error: 0.0,
            };
        }
        let sq: Vec<f64> = samples.iter().map(|x| (x - mean) * (x - mean)).collect();
        let var = pairwise_sum(&sq) / (n - 1) as f64;
        Self {
            estimate: mean,
            std_error: (var / n as f64).sqrt(),
        }
    }

    /// Whether `value` lies within `k` standard errors plus `allowance`.
    pub fn agrees_with(&self, value: f64, k: f64, allowance: f64) -> bool {
        (self.estimate - value).abs() <= k * self.std_error + allowance
    }
}

/// Counts of `points` in `bins` equal cells of `[0, 1)`.
pub fn histogram(points: impl IntoIterator<Item = f64>, bins: usize) -> Vec<u64> {
    let mut counts = vec![0u64; bins];
    for x in points {
        let b = ((crate::grid::wrap(x) * bins as f64) as usize).min(bins - 1);
        counts[b] += 1;
    }
    counts
}

/// Probability mass of each of `bins` equal cells under the periodic
/// piecewise-linear interpolant of `density`.
pub fn binned_mass(density: &GridFunction, bins: usize) -> Vec<f64> {
    let cdf = LinearCdf::new(density);
    (0..bins)
        .map(|j| cdf.cdf((j + 1) as f64 / bins as f64) - cdf.cdf(j as f64 / bins as f64))
        .collect()
}

/// Half the L1 distance between two probability vectors.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Cumulative distribution of the periodic piecewise-linear interpolant of a
/// nonnegative grid density.
#[derive(Debug, Clone)]
pub struct LinearCdf {
    values: Vec<f64>,
    /// Unnormalized mass up to each node; `cum[n]` is the total.
    cum: Vec<f64>,
    h: f64,
}

impl LinearCdf {
    pub fn new(density: &GridFunction) -> Self {
        let values = density.values().to_vec();
        let n = values.len();
        let h = density.grid().h();
        let mut cum = Vec::with_capacity(n + 1);
        cum.push(0.0);
        for i in 0..n {
            let next = values[(i + 1) % n];
            let last = cum[i];
            cum.push(last + 0.5 * h * (values[i] + next));
        }
        Self { values, cum, h }
    }

    fn total(&self) -> f64 {
        self.cum[self.values.len()]
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let n = self.values.len();
        if x <= 0.0 {
            return 0.0;
        }
        if x >= 1.0 {
            return 1.0;
        }
        let s = x / self.h;
        let i = (s.floor() as usize).min(n - 1);
        let t = s - i as f64;
        let a = self.values[i];
        let b = self.values[(i + 1) % n];
        (self.cum[i] + self.h * (a * t + 0.5 * (b - a) * t * t)) / self.total()
    }

    /// Inverse of [`cdf`](Self::cdf) for `u` in `[0, 1)`.
    pub fn quantile(&self, u: f64) -> f64 {
        let n = self.values.len();
        let target = u.clamp(0.0, 1.0) * self.total();
        // first node whose cumulative mass exceeds the target
        let i = self.cum[1..].partition_point(|&c| c <= target);
        if i >= n {
            return 0.0;
        }
        let a = self.values[i];
        let b = self.values[(i + 1) % n];
        // h (a t + (b - a) t^2 / 2) = r, solved for t in [0, 1]
        let r = (target - self.cum[i]) / self.h;
        let slope = b - a;
        let t = if slope.abs() <= 1e-14 * a.abs().max(1e-300) {
            if a > 0.0 {
                r / a
            } else {
                0.0
            }
        } else {
            // numerically stable root of slope/2 t^2 + a t - r = 0
            let disc = (a * a + 2.0 * slope * r).max(0.0);
            2.0 * r / (a + disc.sqrt())
        };
        crate::grid::wrap((i as f64 + t.clamp(0.0, 1.0)) * self.h)
    }
}
