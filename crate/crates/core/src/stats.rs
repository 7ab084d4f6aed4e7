//! Summation and Markov-chain error analysis.

use serde::{Deserialize, Serialize};

/// Neumaier compensated sum.
#[derive(Clone, Copy, Debug, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = Self::new();
        for x in iter {
            s.add(x);
        }
        s
    }
}

pub fn compensated_sum(xs: impl IntoIterator<Item = f64>) -> f64 {
    xs.into_iter().collect::<CompensatedSum>().value()
}

pub fn mean(xs: &[f64]) -> f64 {
    compensated_sum(xs.iter().copied()) / xs.len() as f64
}

/// Mean with standard error and integrated autocorrelation time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub tau_int: f64,
}

impl Estimate {
    /// Distance between two independent estimates in units of their
    /// combined standard error.
    pub fn sigma_distance(&self, other: &Estimate) -> f64 {
        let d = (self.mean - other.mean).abs();
        let s = self.stderr.hypot(other.stderr);
        if s == 0.0 {
            if d == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            d / s
        }
    }

    /// Distance to an exact value in units of the standard error.
    pub fn sigma_from(&self, exact: f64) -> f64 {
        self.sigma_distance(&Estimate {
            mean: exact,
            stderr: 0.0,
            tau_int: 0.0,
        })
    }
}

/// Mean and batch-means standard error of a time series. The tail that
/// does not fill a whole batch is dropped from the error estimate but kept
/// in the mean.
pub fn batch_means(series: &[f64], n_batches: usize) -> (f64, f64) {
    let n = series.len();
    let m = mean(series);
    let n_batches = n_batches.min(n);
    if n_batches < 2 {
        return (m, f64::INFINITY);
    }
    let size = n / n_batches;
    let batch: Vec<f64> = series
        .chunks_exact(size)
        .take(n_batches)
        .map(mean)
        .collect();
    let bm = mean(&batch);
    let var = compensated_sum(batch.iter().map(|b| (b - bm).powi(2))) / (n_batches - 1) as f64;
    (m, (var / n_batches as f64).sqrt())
}

/// Integrated autocorrelation time with Sokal's automatic window: the
/// smallest `W` with `W >= c * tau(W)`, `c = 5`. Uncorrelated data gives
/// `tau_int = 0.5`.
pub fn tau_int(series: &[f64]) -> f64 {
    const WINDOW_FACTOR: f64 = 5.0;
    let n = series.len();
    if n < 4 {
        return 0.5;
    }
    let m = mean(series);
    let centered: Vec<f64> = series.iter().map(|x| x - m).collect();
    let c0 = compensated_sum(centered.iter().map(|x| x * x)) / n as f64;
    if c0 == 0.0 {
        return 0.5;
    }
    let mut tau = 0.5;
    for lag in 1..n / 2 {
        let c = compensated_sum(
            centered[..n - lag]
                .iter()
                .zip(&centered[lag..])
                .map(|(x, y)| x * y),
        ) / (n - lag) as f64;
        tau += c / c0;
        if lag as f64 >= WINDOW_FACTOR * tau {
            break;
        }
    }
    tau.max(0.5)
}

pub fn estimate(series: &[f64], n_batches: usize) -> Estimate {
    let (mean, stderr) = batch_means(series, n_batches);
    Estimate {
        mean,
        stderr,
        tau_int: tau_int(series),
    }
}

/// Least-squares slope of `y` against `x`.
pub fn fit_slope(x: &[f64], y: &[f64]) -> f64 {
    let mx = mean(x);
    let my = mean(y);
    let sxy = compensated_sum(x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)));
    let sxx = compensated_sum(x.iter().map(|a| (a - mx).powi(2)));
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn compensated_sum_recovers_cancellation() {
        let xs = [1e16, 1.0, -1e16, 1.0];
        assert_eq!(compensated_sum(xs), 2.0);
    }

    #[test]
    fn batch_means_of_iid_normal() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let xs: Vec<f64> = (0..40_000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let (m, se) = batch_means(&xs, 40);
        assert!((se - 1.0 / 200.0).abs() < 0.0015, "se = {se}");
        assert!(m.abs() < 4.0 * se);
        let tau = tau_int(&xs);
        assert!((tau - 0.5).abs() < 0.05, "tau = {tau}");
    }

    #[test]
    fn tau_int_of_ar1_chain() {
        // AR(1) with coefficient r has tau_int = (1 + r) / (2 (1 - r)).
        let r: f64 = 0.8;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut x = 0.0;
        let xs: Vec<f64> = (0..200_000)
            .map(|_| {
                let e: f64 = StandardNormal.sample(&mut rng);
                x = r * x + (1.0 - r * r).sqrt() * e;
                x
            })
            .collect();
        let expected = (1.0 + r) / (2.0 * (1.0 - r));
        let tau = tau_int(&xs);
        assert!((tau - expected).abs() < 0.1 * expected, "tau = {tau}");
    }

    #[test]
    fn batch_means_degenerate_inputs() {
        let (m, se) = batch_means(&[2.0], 20);
        assert_eq!(m, 2.0);
        assert!(se.is_infinite());
        let (_, se) = batch_means(&[1.0; 100], 20);
        assert_eq!(se, 0.0);
        assert_eq!(tau_int(&[1.0; 100]), 0.5);
    }

    #[test]
    fn slope_of_line() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y: Vec<f64> = x.iter().map(|v| 3.0 - 2.0 * v).collect();
        assert!((fit_slope(&x, &y) + 2.0).abs() < 1e-14);
    }

    #[test]
    fn sigma_distance_conventions() {
        let a = Estimate { mean: 1.0, stderr: 0.3, tau_int: 1.0 };
        let b = Estimate { mean: 1.5, stderr: 0.4, tau_int: 1.0 };
        assert!((a.sigma_distance(&b) - 1.0).abs() < 1e-15);
        assert!((a.sigma_from(1.6) - 2.0).abs() < 1e-12);
    }
}
