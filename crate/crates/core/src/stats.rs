//! Small statistics toolbox used by the estimators and the test suites:
//! running moments, batch-means intervals, Wilson proportion intervals,
//! least-squares tail fits and a few critical values.

use alloc::vec::Vec;
#[allow(unused_imports)] use num_traits::Float;

/// Streaming mean/variance accumulator (Welford).
#[derive(Debug, Clone, Default)]
pub struct RunningStat {
    n: u64,
    mean: f64,
    m2: f64,
}

impl RunningStat {
    pub fn new() -> Self {
        RunningStat::default()
    }

    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance; 0 for fewer than two samples.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn std_dev(&self) -> f64 {
        self.variance().sqrt()
    }

    /// Standard error of the mean; 0 for fewer than two samples.
    pub fn std_error(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.std_dev() / (self.n as f64).sqrt()
        }
    }
}

/// Mean and standard error of a sample.
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let mut s = RunningStat::new();
    for &x in xs {
        s.push(x);
    }
    (s.mean(), s.std_error())
}

/// Sample covariance (unbiased, `n - 1` denominator).
pub fn sample_covariance(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let mut acc = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        acc += (x - mx) * (y - my);
    }
    acc / (n - 1) as f64
}

/// Split `xs` into `batches` contiguous batches and return the batch means.
/// Trailing remainder elements join the last batch.
pub fn batch_means(xs: &[f64], batches: usize) -> Vec<f64> {
    let batches = batches.max(1).min(xs.len().max(1));
    let size = xs.len() / batches;
    if size == 0 {
        return xs.to_vec();
    }
    let mut out = Vec::with_capacity(batches);
    for b in 0..batches {
        let lo = b * size;
        let hi = if b + 1 == batches { xs.len() } else { lo + size };
        let (m, _) = mean_stderr(&xs[lo..hi]);
        out.push(m);
    }
    out
}

/// Ratio-of-means estimator with a batch-means standard error.
///
/// Splits the `(numerator, denominator)` pairs into contiguous batches,
/// forms the ratio per batch and reports the spread of batch ratios; the
/// point estimate uses the full sample. Returns `(ratio, stderr)`.
pub fn ratio_with_batch_se(pairs: &[(f64, f64)], batches: usize) -> (f64, f64) {
    let num: f64 = pairs.iter().map(|p| p.0).sum();
    let den: f64 = pairs.iter().map(|p| p.1).sum();
    let ratio = num / den;
    let batches = batches.max(1).min(pairs.len());
    let size = pairs.len() / batches;
    if size == 0 || batches < 2 {
        return (ratio, 0.0);
    }
    let mut stat = RunningStat::new();
    for b in 0..batches {
        let lo = b * size;
        let hi = if b + 1 == batches { pairs.len() } else { lo + size };
        let n: f64 = pairs[lo..hi].iter().map(|p| p.0).sum();
        let d: f64 = pairs[lo..hi].iter().map(|p| p.1).sum();
        if d != 0.0 {
            stat.push(n / d);
        }
    }
    (ratio, stat.std_error())
}

/// Wilson score interval for a binomial proportion at `z` standard normal
/// units. Returns `(low, high)`.
pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Ordinary least squares fit `y = slope x + intercept`.
#[derive(Debug, Clone, Copy)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    pub r2: f64,
    pub points: usize,
}

pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Option<LinearFit> {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len();
    if n < 2 {
        return None;
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let e = y - (slope * x + intercept);
            e * e
        })
        .sum();
    let r2 = if syy == 0.0 { 1.0 } else { 1.0 - ss_res / syy };
    let slope_se = if n > 2 { (ss_res / (nf - 2.0) / sxx).sqrt() } else { 0.0 };
    Some(LinearFit { slope, intercept, slope_se, r2, points: n })
}

/// Sample autocorrelation of `xs` at `lag`.
pub fn autocorrelation(xs: &[f64], lag: usize) -> f64 {
    let n = xs.len();
    if n <= lag + 1 {
        return 0.0;
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..n {
        den += (xs[i] - mean) * (xs[i] - mean);
    }
    for i in 0..n - lag {
        num += (xs[i] - mean) * (xs[i + lag] - mean);
    }
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Welch's t statistic for the difference of two sample means.
pub fn welch_t(mean_a: f64, se_a: f64, mean_b: f64, se_b: f64) -> f64 {
    let denom = (se_a * se_a + se_b * se_b).sqrt();
    if denom == 0.0 {
        0.0
    } else {
        (mean_a - mean_b) / denom
    }
}

/// Chi-square critical values at significance 0.001 for small degrees of
/// freedom (1 through 8).
pub fn chi2_crit_001(df: usize) -> f64 {
    const TABLE: [f64; 8] =
        [10.828, 13.816, 16.266, 18.467, 20.515, 22.458, 24.322, 26.124];
    assert!((1..=TABLE.len()).contains(&df));
    TABLE[df - 1]
}

/// Asymptotic Kolmogorov-Smirnov critical value at significance 0.01.
pub fn ks_crit_001_level(n: usize) -> f64 {
    1.628 / (n as f64).sqrt()
}
