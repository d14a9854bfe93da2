//! Monte Carlo harness and goodness-of-fit tests.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{config, Result};
use crate::rng::Seed;

/// Neumaier compensated sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sum {
    s: f64,
    c: f64,
}

impl Sum {
    pub fn add(&mut self, x: f64) {
        let t = self.s + x;
        if self.s.abs() >= x.abs() {
            self.c += (self.s - t) + x;
        } else {
            self.c += (x - t) + self.s;
        }
        self.s = t;
    }

    pub fn value(&self) -> f64 {
        self.s + self.c
    }
}

pub fn sum(xs: &[f64]) -> f64 {
    let mut s = Sum::default();
    xs.iter().for_each(|&x| s.add(x));
    s.value()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n_trials: usize,
    pub master_seed: u64,
    pub theory: Option<f64>,
    /// (mean - theory) / stderr.
    pub z_score: Option<f64>,
}

impl McEstimate {
    pub fn from_samples(xs: &[f64], master_seed: u64, theory: Option<f64>) -> Self {
        let n = xs.len();
        let mean = if n == 0 { f64::NAN } else { sum(xs) / n as f64 };
        let var = if n < 2 {
            f64::NAN
        } else {
            let mut s = Sum::default();
            xs.iter().for_each(|&x| s.add((x - mean) * (x - mean)));
            s.value() / (n - 1) as f64
        };
        let stderr = (var / n as f64).sqrt();
        let z_score = theory.map(|t| (mean - t) / stderr);
        McEstimate { mean, stderr, n_trials: n, master_seed, theory, z_score }
    }

    pub fn rel_error(&self) -> Option<f64> {
        self.theory.map(|t| ((self.mean - t) / t).abs())
    }
}

/// Thread pool honouring BIFSIM_THREADS, falling back to rayon's default.
pub fn pool() -> rayon::ThreadPool {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = std::env::var("BIFSIM_THREADS").ok().and_then(|v| v.parse::<usize>().ok()).filter(|&n| n > 0) {
        b = b.num_threads(n);
    }
    b.build().expect("thread pool")
}

/// Runs `f` for trials 0..n with independent per-trial seeds. Results are in
/// trial order regardless of scheduling, so output depends only on the seed.
pub fn run_trials<T, F>(n: usize, seed: Seed, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64, Seed) -> Result<T> + Sync,
{
    pool().install(|| (0..n as u64).into_par_iter().map(|i| f(i, seed.trial(i))).collect())
}

fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut q = 0.0;
    for j in 1..=100 {
        let jf = j as f64;
        let term = 2.0 * (if j % 2 == 1 { 1.0 } else { -1.0 }) * (-2.0 * jf * jf * lambda * lambda).exp();
        q += term;
        if term.abs() < 1e-16 {
            break;
        }
    }
    q.clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// One-sample Kolmogorov-Smirnov test against a continuous CDF.
pub fn ks_one_sample(xs: &[f64], cdf: impl Fn(f64) -> f64) -> Result<TestResult> {
    if xs.is_empty() {
        return config("KS test needs at least one sample");
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in v.iter().enumerate() {
        let f = cdf(x);
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    let sn = n.sqrt();
    Ok(TestResult { statistic: d, p_value: kolmogorov_q((sn + 0.12 + 0.11 / sn) * d) })
}

/// Two-sample Kolmogorov-Smirnov test.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<TestResult> {
    if a.is_empty() || b.is_empty() {
        return config("KS test needs nonempty samples");
    }
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let (n, m) = (x.len() as f64, y.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < x.len() && j < y.len() {
        let t = x[i].min(y[j]);
        while i < x.len() && x[i] <= t {
            i += 1;
        }
        while j < y.len() && y[j] <= t {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    let ne = (n * m / (n + m)).sqrt();
    Ok(TestResult { statistic: d, p_value: kolmogorov_q((ne + 0.12 + 0.11 / ne) * d) })
}

/// Pearson chi-square test of observed counts against expected counts.
pub fn chi_square(observed: &[u64], expected: &[f64], fitted_params: usize) -> Result<TestResult> {
    if observed.len() != expected.len() || observed.len() <= fitted_params + 1 {
        return config("chi-square needs matching bins and positive degrees of freedom");
    }
    let mut stat = 0.0;
    for (&o, &e) in observed.iter().zip(expected) {
        if !(e > 0.0) {
            return config("expected counts must be positive");
        }
        stat += (o as f64 - e).powi(2) / e;
    }
    let df = (observed.len() - 1 - fitted_params) as f64;
    let dist = ChiSquared::new(df).map_err(|e| crate::Error::Numerical(e.to_string()))?;
    Ok(TestResult { statistic: stat, p_value: 1.0 - dist.cdf(stat) })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum() {
        let xs = [1e16, 1.0, -1e16, 1.0];
        assert_eq!(sum(&xs), 2.0);
    }

    #[test]
    fn estimate_fields() {
        let e = McEstimate::from_samples(&[1.0, 2.0, 3.0, 4.0], 7, Some(2.0));
        assert_eq!(e.mean, 2.5);
        assert!((e.stderr - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
        assert!((e.z_score.unwrap() - 0.5 / e.stderr).abs() < 1e-15);
    }

    #[test]
    fn trials_are_ordered_and_reproducible() {
        let f = |i: u64, s: Seed| Ok((i, s.rng().uniform()));
        let a = run_trials(200, Seed::new(3), f).unwrap();
        let b = run_trials(200, Seed::new(3), f).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().enumerate().all(|(k, (i, _))| k as u64 == *i));
    }

    #[test]
    fn kolmogorov_tail() {
        assert!((kolmogorov_q(1.36) - 0.0494).abs() < 1e-3);
        assert!((kolmogorov_q(1.63) - 0.0098).abs() < 1e-3);
    }

    #[test]
    fn ks_uniform() {
        let xs: Vec<f64> = run_trials(4000, Seed::new(9), |_, s| Ok(s.rng().uniform())).unwrap();
        let r = ks_one_sample(&xs, |x| x.clamp(0.0, 1.0)).unwrap();
        assert!(r.p_value > 0.01);
        let r = ks_one_sample(&xs, |x| (x * x).clamp(0.0, 1.0)).unwrap();
        assert!(r.p_value < 1e-6);
        let ys: Vec<f64> = run_trials(3000, Seed::new(10), |_, s| Ok(s.rng().uniform())).unwrap();
        assert!(ks_two_sample(&xs, &ys).unwrap().p_value > 0.01);
    }

    #[test]
    fn chi_square_exact() {
        let r = chi_square(&[10, 20, 30], &[20.0, 20.0, 20.0], 0).unwrap();
        assert!((r.statistic - 10.0).abs() < 1e-12);
        assert!((r.p_value - (-5.0f64).exp()).abs() < 1e-9);
    }
}
