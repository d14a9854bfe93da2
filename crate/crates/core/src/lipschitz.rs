//! Lipschitz envelopes of a driver and the special solution X* that stays
//! within O(log t) of it.

use serde::{Deserialize, Serialize};

use crate::analytics::{mean_abs_gap, mean_envelope_gap};
use crate::error::{config, Error, Result};
use crate::mc::{run_trials, McEstimate, Sum};
use crate::paths::{sample_brownian, GridSpec, PathKind, SampledPath};
use crate::rng::Seed;
use crate::solver::{solve, ModelParams, Scheme, SolutionPath};

fn check_beta(beta: f64) -> Result<()> {
    if !(beta > 0.0) || !beta.is_finite() {
        return config("Lipschitz constant beta must be positive");
    }
    Ok(())
}

/// Smallest beta-Lipschitz function above the driver on its grid:
/// Z(t_k) = max_j B_j - beta |t_k - t_j|.
pub fn upper_envelope(driver: &SampledPath, beta: f64) -> Result<SampledPath> {
    check_beta(beta)?;
    let (t, b) = (driver.times(), driver.values());
    let n = t.len();
    // argmax of B_j + beta t_j over j <= k, and of B_j - beta t_j over j >= k
    let mut fwd = vec![0usize; n];
    let mut best = 0usize;
    for k in 0..n {
        if b[k] + beta * t[k] >= b[best] + beta * t[best] {
            best = k;
        }
        fwd[k] = best;
    }
    let mut z = vec![0.0; n];
    let mut best = n - 1;
    for k in (0..n).rev() {
        if b[k] - beta * t[k] >= b[best] - beta * t[best] {
            best = k;
        }
        let (f, g) = (fwd[k], best);
        z[k] = (b[f] - beta * (t[k] - t[f])).max(b[g] - beta * (t[g] - t[k]));
    }
    Ok(SampledPath::new_unchecked(t.to_vec(), z, PathKind::Envelope))
}

/// Largest beta-Lipschitz function below the driver.
pub fn lower_envelope(driver: &SampledPath, beta: f64) -> Result<SampledPath> {
    let neg = driver.map_values(|v| -v, PathKind::Unlabeled);
    Ok(upper_envelope(&neg, beta)?.map_values(|v| -v, PathKind::Envelope))
}

/// The O(n^2) definition, for testing.
pub fn upper_envelope_brute(driver: &SampledPath, beta: f64) -> Vec<f64> {
    let (t, b) = (driver.times(), driver.values());
    t.iter()
        .map(|&tk| t.iter().zip(b).map(|(&tj, &bj)| bj - beta * (tk - tj).abs()).fold(f64::NEG_INFINITY, f64::max))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopePair {
    pub upper: SampledPath,
    pub lower: SampledPath,
    pub beta: f64,
    pub inner_window: (f64, f64),
}

/// Envelopes plus the window [t_start + margin, t_end - margin] used for statistics.
pub fn envelopes(driver: &SampledPath, beta: f64, margin: f64) -> Result<EnvelopePair> {
    Ok(EnvelopePair {
        upper: upper_envelope(driver, beta)?,
        lower: lower_envelope(driver, beta)?,
        beta,
        inner_window: (driver.t_start() + margin, driver.t_end() - margin),
    })
}

pub fn default_margin(beta: f64, sigma2: f64) -> f64 {
    10.0 * sigma2 / beta
}

pub fn write_envelopes_csv<W: std::io::Write>(driver: &SampledPath, env: &EnvelopePair, mut w: W) -> Result<()> {
    let io = |e: std::io::Error| Error::Format(e.to_string());
    writeln!(w, "t,B,Zplus,Zminus").map_err(io)?;
    for k in 0..driver.len() {
        writeln!(w, "{:e},{:e},{:e},{:e}", driver.times()[k], driver.values()[k], env.upper.values()[k], env.lower.values()[k])
            .map_err(io)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct XStar {
    pub xbar: f64,
    /// Forward solution from xbar. Perturbations grow at every crossing, so in
    /// floating point it tracks X* only for a while; see `horizon_flag`.
    pub solution: SolutionPath,
    /// X* on the whole window from `xstar_backward`.
    pub stable_path: SampledPath,
    /// Bracket width after each bisection step.
    pub widths: Vec<f64>,
    /// Last time X* met the driver.
    pub last_contact: Option<f64>,
    /// The last contact is before the middle of the window.
    pub horizon_flag: bool,
}

fn last_zero(y: &[f64], t: &[f64]) -> Option<f64> {
    for k in (0..y.len()).rev() {
        if y[k] == 0.0 {
            return Some(t[k]);
        }
        if k > 0 && y[k - 1] * y[k] < 0.0 {
            return Some(t[k - 1] + (t[k] - t[k - 1]) * y[k - 1] / (y[k - 1] - y[k]));
        }
    }
    None
}

/// Which side of the driver the solution from x ends on: true if above.
fn ends_above(params: &ModelParams, driver: &SampledPath) -> Result<bool> {
    let sol = solve(params, driver, Scheme::Maximal)?;
    let y = *driver.values().last().unwrap() - *sol.base.values().last().unwrap();
    if y == 0.0 {
        return Err(Error::HorizonExceeded { horizon: driver.t_end() - driver.t_start(), partial: 0.0 });
    }
    Ok(y < 0.0)
}

/// Initial value of the solution of dX = beta sgn(X - B) dt that never leaves
/// the driver, located by bisection on the final side.
pub fn find_xstar_bisection(beta: f64, driver: &SampledPath, tol: f64) -> Result<XStar> {
    check_beta(beta)?;
    if !(tol > 0.0) {
        return config("tolerance must be positive");
    }
    let t0 = driver.t_start();
    let span = driver.t_end() - t0;
    let reach = driver.values().iter().fold(0.0f64, |m, v| m.max(v.abs())) + beta * span + 1.0;
    let base = ModelParams::new(-beta, beta);
    let (mut lo, mut hi) = (-reach, reach);
    if ends_above(&base.with_start(t0, lo), driver)? || !ends_above(&base.with_start(t0, hi), driver)? {
        return Err(Error::Numerical("bisection seeds do not bracket the special solution".into()));
    }
    let mut widths = vec![hi - lo];
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let above = match ends_above(&base.with_start(t0, mid), driver) {
            Ok(a) => a,
            // landed exactly on the driver at the end: this is as close as the grid allows
            Err(Error::HorizonExceeded { .. }) => {
                lo = mid;
                hi = mid;
                widths.push(0.0);
                break;
            }
            Err(e) => return Err(e),
        };
        if above {
            hi = mid;
        } else {
            lo = mid;
        }
        widths.push(hi - lo);
    }
    let xbar = 0.5 * (lo + hi);
    let solution = solve(&base.with_start(t0, xbar), driver, Scheme::Maximal)?;
    let y = driver.minus(&solution.base)?;
    let last_contact = last_zero(y.values(), y.times());
    let horizon_flag = last_contact.is_none_or(|t| t < t0 + 0.5 * span);
    let stable_path = xstar_backward(beta, driver)?;
    Ok(XStar { xbar, solution, stable_path, widths, last_contact, horizon_flag })
}

/// X* on the driver's window from the attracting equation run backward in time
/// from the driver's final value. Starting-point effects die out at rate beta,
/// so the path is accurate except within O(|B| / beta) of the right end.
pub fn xstar_backward(beta: f64, driver: &SampledPath) -> Result<SampledPath> {
    check_beta(beta)?;
    let rev = crate::paths::time_reverse(driver);
    let params = ModelParams::new(beta, -beta).with_start(rev.t_start(), rev.values()[0]);
    let sol = solve(&params, &rev, Scheme::Maximal)?;
    Ok(crate::paths::time_reverse(&sol.base).map_values(|v| v, PathKind::Solution))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryPair {
    pub driver: SampledPath,
    pub xstar: SampledPath,
    /// Stationary initial draw of the forward gap.
    pub y0: f64,
    /// Forward gap at the middle of the forward window.
    pub y_mid: f64,
}

impl StationaryPair {
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        let io = |e: std::io::Error| Error::Format(e.to_string());
        writeln!(w, "t,B,Xstar").map_err(io)?;
        for k in 0..self.driver.len() {
            writeln!(w, "{:e},{:e},{:e}", self.driver.times()[k], self.driver.values()[k], self.xstar.values()[k])
                .map_err(io)?;
        }
        Ok(())
    }
}

/// Exact-in-law (B, X*) on [0, T]: run the attracting system from its stationary
/// law, then reverse time.
pub fn sample_stationary_pair(beta: f64, sigma2: f64, t_max: f64, n_steps: usize, seed: Seed) -> Result<StationaryPair> {
    check_beta(beta)?;
    let grid = GridSpec::new(0.0, t_max, n_steps)?;
    let mut rng = seed.child(1).rng();
    let y0 = rng.sign() * rng.exponential(sigma2 / (2.0 * beta));
    let bhat = sample_brownian(grid, sigma2, seed)?;
    let params = ModelParams::new(beta, -beta).with_sigma2(sigma2).with_start(0.0, -y0);
    let xhat = solve(&params, &bhat, Scheme::Maximal)?;
    let y_mid = bhat.eval(0.5 * t_max).unwrap() - xhat.eval(0.5 * t_max).unwrap();
    let b_end = *bhat.values().last().unwrap();
    let times = grid.times();
    let rev = |p: &SampledPath| -> Vec<f64> { p.values().iter().rev().map(|v| v - b_end).collect() };
    let driver = SampledPath::new_unchecked(times.clone(), rev(&bhat), PathKind::Driver { sigma2 });
    let xstar = SampledPath::new_unchecked(times, rev(&xhat.base), PathKind::Solution);
    Ok(StationaryPair { driver, xstar, y0, y_mid })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapStatistics {
    /// E|B - X*|.
    pub abs_gap: McEstimate,
    /// E(Z+ - B).
    pub upper_gap: McEstimate,
    /// E(B - Z-).
    pub lower_gap: McEstimate,
    /// E(Z+ - Z-).
    pub envelope_width: McEstimate,
    pub inner_window: (f64, f64),
    pub low_statistics: bool,
}

fn window_mean(t: &[f64], v: &[f64], lo: f64, hi: f64) -> Option<f64> {
    let mut s = Sum::default();
    let mut len = 0.0;
    for k in 1..t.len() {
        if t[k - 1] >= lo && t[k] <= hi {
            let h = t[k] - t[k - 1];
            s.add(0.5 * h * (v[k - 1] + v[k]));
            len += h;
        }
    }
    (len > 0.0).then(|| s.value() / len)
}

/// Time averages over [lo, hi] of |B - X*|, Z+ - B, B - Z- and Z+ - Z- for one pair.
pub fn pair_window_means(pair: &StationaryPair, beta: f64, window: (f64, f64)) -> Result<Option<[f64; 4]>> {
    let t = pair.driver.times();
    let b = pair.driver.values();
    let up = upper_envelope(&pair.driver, beta)?;
    let lo = lower_envelope(&pair.driver, beta)?;
    let series: [Vec<f64>; 4] = [
        b.iter().zip(pair.xstar.values()).map(|(b, x)| (b - x).abs()).collect(),
        up.values().iter().zip(b).map(|(z, b)| z - b).collect(),
        b.iter().zip(lo.values()).map(|(b, z)| b - z).collect(),
        up.values().iter().zip(lo.values()).map(|(u, l)| u - l).collect(),
    ];
    let mut out = [0.0; 4];
    for (o, s) in out.iter_mut().zip(&series) {
        match window_mean(t, s, window.0, window.1) {
            Some(m) => *o = m,
            None => return Ok(None),
        }
    }
    Ok(Some(out))
}

fn combine(means: &[Option<[f64; 4]>], beta: f64, sigma2: f64, window: (f64, f64), master_seed: u64) -> Result<GapStatistics> {
    let ok: Vec<[f64; 4]> = means.iter().flatten().copied().collect();
    if ok.len() < 2 {
        return Err(Error::Config("inner window is empty: reduce the margin or lengthen T".into()));
    }
    let col = |i: usize| ok.iter().map(|m| m[i]).collect::<Vec<f64>>();
    let g = mean_abs_gap(beta, sigma2);
    let e = mean_envelope_gap(beta, sigma2);
    Ok(GapStatistics {
        abs_gap: McEstimate::from_samples(&col(0), master_seed, Some(g)),
        upper_gap: McEstimate::from_samples(&col(1), master_seed, Some(e)),
        lower_gap: McEstimate::from_samples(&col(2), master_seed, Some(e)),
        envelope_width: McEstimate::from_samples(&col(3), master_seed, Some(2.0 * e)),
        inner_window: window,
        low_statistics: ok.len() < means.len() || window.1 - window.0 < 10.0 * sigma2 / beta,
    })
}

/// Ensemble gap estimates with theory columns over the inner window
/// [t_start + margin, t_end - margin]. Pairs must share one time window.
pub fn gap_statistics(pairs: &[StationaryPair], beta: f64, sigma2: f64, margin: f64, master_seed: u64) -> Result<GapStatistics> {
    check_beta(beta)?;
    if pairs.is_empty() {
        return config("no pairs");
    }
    let window = (pairs[0].driver.t_start() + margin, pairs[0].driver.t_end() - margin);
    let means = pairs.iter().map(|p| pair_window_means(p, beta, window)).collect::<Result<Vec<_>>>()?;
    combine(&means, beta, sigma2, window, master_seed)
}

/// Same as `gap_statistics` on `n` fresh stationary pairs, without keeping them.
pub fn stationary_gap_statistics(
    beta: f64,
    sigma2: f64,
    t_max: f64,
    n_steps: usize,
    margin: f64,
    seed: Seed,
    n: usize,
) -> Result<GapStatistics> {
    check_beta(beta)?;
    let window = (margin, t_max - margin);
    let means = run_trials(n, seed, |_, s| pair_window_means(&sample_stationary_pair(beta, sigma2, t_max, n_steps, s)?, beta, window))?;
    combine(&means, beta, sigma2, window, seed.master)
}

/// Stationary pairs for trials 0..n.
pub fn stationary_ensemble(beta: f64, sigma2: f64, t_max: f64, n_steps: usize, seed: Seed, n: usize) -> Result<Vec<StationaryPair>> {
    run_trials(n, seed, |_, s| sample_stationary_pair(beta, sigma2, t_max, n_steps, s))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthRow {
    pub t_lo: f64,
    pub t_hi: f64,
    /// max over the window of gap / ln t.
    pub window_max: f64,
    /// max of gap / ln t over [t_lo, T].
    pub tail_max: f64,
}

/// gap/ln t over dyadic windows [2^k, 2^{k+1}] intersected with [e, T].
pub fn log_growth_estimate(gap: &SampledPath) -> Vec<GrowthRow> {
    let (t, v) = (gap.times(), gap.values());
    let e = std::f64::consts::E;
    let t_end = gap.t_end();
    let mut rows: Vec<GrowthRow> = Vec::new();
    let mut k = 1i32;
    while 2f64.powi(k) < t_end {
        let lo = 2f64.powi(k).max(e);
        let hi = 2f64.powi(k + 1).min(t_end);
        k += 1;
        if hi <= lo {
            continue;
        }
        let m = t
            .iter()
            .zip(v)
            .filter(|(&s, _)| s >= lo && s <= hi)
            .map(|(&s, &g)| g / s.ln())
            .fold(f64::NEG_INFINITY, f64::max);
        if m.is_finite() {
            rows.push(GrowthRow { t_lo: lo, t_hi: hi, window_max: m, tail_max: m });
        }
    }
    for i in (0..rows.len().saturating_sub(1)).rev() {
        rows[i].tail_max = rows[i].window_max.max(rows[i + 1].tail_max);
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bm(n: usize, seed: u64) -> SampledPath {
        sample_brownian(GridSpec::new(0.0, n as f64 * 0.01, n).unwrap(), 1.0, Seed::new(seed)).unwrap()
    }

    #[test]
    fn envelope_matches_brute_force() {
        for seed in 0..5 {
            let b = bm(1500, seed);
            for beta in [0.3, 1.0, 4.0] {
                let z = upper_envelope(&b, beta).unwrap();
                assert_eq!(z.values(), &upper_envelope_brute(&b, beta)[..]);
                let l = lower_envelope(&b, beta).unwrap();
                let neg = b.map_values(|v| -v, PathKind::Unlabeled);
                let brute: Vec<f64> = upper_envelope_brute(&neg, beta).iter().map(|v| -v).collect();
                assert_eq!(l.values(), &brute[..]);
            }
        }
    }

    #[test]
    fn lipschitz_driver_is_its_own_envelope() {
        let t: Vec<f64> = (0..200).map(|k| k as f64 * 0.05).collect();
        let b: Vec<f64> = t.iter().map(|s| 0.5 * (3.0 * s).sin()).collect();
        let d = SampledPath::new(t, b, PathKind::Unlabeled).unwrap();
        assert_eq!(upper_envelope(&d, 1.5).unwrap().values(), d.values());
        assert_eq!(lower_envelope(&d, 1.5).unwrap().values(), d.values());
    }

    #[test]
    fn hat_envelope() {
        let t: Vec<f64> = (0..=40).map(|k| -2.0 + k as f64 * 0.1).collect();
        let b: Vec<f64> = t.iter().map(|s: &f64| (1.0 - 10.0 * s.abs()).max(0.0)).collect();
        let d = SampledPath::new(t.clone(), b, PathKind::Unlabeled).unwrap();
        let z = upper_envelope(&d, 0.5).unwrap();
        for (s, v) in t.iter().zip(z.values()) {
            assert!((v - (1.0 - 0.5 * s.abs()).max(0.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn flat_driver_has_xstar_zero() {
        let d = SampledPath::new(GridSpec::new(0.0, 10.0, 100).unwrap().times(), vec![0.0; 101], PathKind::Unlabeled)
            .unwrap();
        let xs = find_xstar_bisection(1.0, &d, 1e-10).unwrap();
        assert!(xs.xbar.abs() <= 1e-10);
    }

    #[test]
    fn bisection_halves_and_is_sandwiched() {
        for seed in 0..4 {
            let b = bm(2000, 40 + seed);
            let xs = find_xstar_bisection(1.0, &b, 1e-9).unwrap();
            for w in xs.widths.windows(2) {
                assert!(w[1] == 0.0 || (w[1] - 0.5 * w[0]).abs() <= 1e-12 * w[0] + 1e-13);
            }
            let env = envelopes(&b, 1.0, 0.0).unwrap();
            assert!(env.lower.values()[0] <= xs.xbar && xs.xbar <= env.upper.values()[0]);
            let x = xs.stable_path.values();
            assert!((x[0] - xs.xbar).abs() < 1e-9);
            for k in 0..b.len() {
                assert!(env.lower.values()[k] <= x[k] && x[k] <= env.upper.values()[k]);
            }
        }
    }

    #[test]
    fn short_window_bisection_tracks_the_driver() {
        let b = sample_brownian(GridSpec::new(0.0, 2.0, 2000).unwrap(), 1.0, Seed::new(5)).unwrap();
        let xs = find_xstar_bisection(1.0, &b, 1e-13).unwrap();
        assert!(!xs.horizon_flag);
        let fwd = xs.solution.base.values();
        let back = xs.stable_path.values();
        assert!((0..1000).all(|k| (fwd[k] - back[k]).abs() < 1e-6));
    }

    #[test]
    fn stationary_pair_structure() {
        let p = sample_stationary_pair(1.0, 1.0, 20.0, 2000, Seed::new(3)).unwrap();
        assert_eq!(p.driver.values()[0], 0.0);
        let x = p.xstar.values();
        let h = 0.01;
        assert!(x.windows(2).all(|w| (w[1] - w[0]).abs() <= h * (1.0 + 1e-9)));
        let y: Vec<f64> = p.driver.values().iter().zip(x).map(|(b, x)| b - x).collect();
        let crossings = y.windows(2).filter(|w| w[0] * w[1] <= 0.0).count();
        assert!(crossings > 10);
        assert!((y.last().unwrap() - p.y0).abs() < 1e-12);
    }

    #[test]
    fn constant_gap_growth_vanishes() {
        let t: Vec<f64> = (0..=10_000).map(|k| k as f64 * 0.1).collect();
        let g = SampledPath::new(t, vec![2.0; 10_001], PathKind::Difference).unwrap();
        let rows = log_growth_estimate(&g);
        assert!(rows.windows(2).all(|w| w[1].window_max < w[0].window_max));
        assert!((rows.last().unwrap().window_max - 2.0 / 512f64.ln()).abs() < 1e-12);
    }
}
