//! Excursions of Y = B - X away from 0 and detection of the final one.

use serde::{Deserialize, Serialize};

use crate::analytics::return_probability;
use crate::error::{config, Error, Result};
use crate::localtime::{default_bandwidth, LocalTimeCurve, Occupation};
use crate::paths::{DriverSource, SampledPath};
use crate::solver::engine::{drive, LastZero, Observer, Side, YStepper};
use crate::solver::{stepper_for, ModelParams};

/// Bound on the probability that an escape declared at the barrier is wrong.
pub const MISCLASSIFICATION: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sign {
    Positive,
    Negative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcursionRecord {
    pub t_start: f64,
    /// `None` while the excursion is still open.
    pub t_end: Option<f64>,
    pub sign: Sign,
    pub height: f64,
    pub local_time_at_start: f64,
}

impl ExcursionRecord {
    pub fn lifetime(&self) -> Option<f64> {
        self.t_end.map(|e| e - self.t_start)
    }
}

pub fn write_records_csv<W: std::io::Write>(records: &[ExcursionRecord], mut w: W) -> Result<()> {
    let io = |e: std::io::Error| Error::Format(e.to_string());
    writeln!(w, "t_start,t_end,sign,height,lifetime,L_start").map_err(io)?;
    for r in records {
        let end = r.t_end.map_or("open".to_string(), |t| format!("{t:e}"));
        let life = r.lifetime().map_or("inf".to_string(), |t| format!("{t:e}"));
        let sign = if r.sign == Sign::Positive { "+" } else { "-" };
        writeln!(w, "{:e},{end},{sign},{:e},{life},{:e}", r.t_start, r.height, r.local_time_at_start).map_err(io)?;
    }
    Ok(())
}

/// Builds excursion records from a stream of linear pieces of Y.
#[derive(Debug, Clone)]
pub struct ExcursionTracker {
    pub occupation: Occupation,
    resolution: f64,
    pub records: Vec<ExcursionRecord>,
    open: Option<ExcursionRecord>,
}

impl ExcursionTracker {
    pub fn new(resolution: f64, epsilon: f64, sigma2: f64) -> Self {
        ExcursionTracker { occupation: Occupation::new(epsilon, sigma2), resolution, records: Vec::new(), open: None }
    }

    fn keep(&mut self, r: ExcursionRecord) {
        if r.height >= self.resolution && r.height > 0.0 {
            self.records.push(r);
        }
    }

    /// Close the bookkeeping; an excursion still running is kept as open.
    pub fn finish(mut self) -> (Vec<ExcursionRecord>, f64) {
        if let Some(r) = self.open.take() {
            self.keep(r);
        }
        let l = self.occupation.value();
        (self.records, l)
    }
}

impl Observer for ExcursionTracker {
    fn piece(&mut self, t0: f64, t1: f64, y0: f64, y1: f64) {
        if self.open.is_none() && (y0 != 0.0 || y1 != 0.0) {
            self.open = Some(ExcursionRecord {
                t_start: t0,
                t_end: None,
                sign: if y0 + y1 > 0.0 { Sign::Positive } else { Sign::Negative },
                height: 0.0,
                local_time_at_start: self.occupation.value(),
            });
        }
        self.occupation.piece(t0, t1, y0, y1);
        if let Some(r) = &mut self.open {
            r.height = r.height.max(y0.abs()).max(y1.abs());
            if y1 == 0.0 {
                let mut r = self.open.take().unwrap();
                r.t_end = Some(t1);
                self.keep(r);
            }
        }
    }
}

/// Smallest excursion height kept by default: 4 sigma sqrt(dt).
pub fn default_resolution(sigma2: f64, dt: f64) -> f64 {
    4.0 * (sigma2 * dt).sqrt()
}

/// Excursions of a stored Y path (linear between samples) with height at least
/// `resolution`, annotated with `local_time` at their start.
pub fn decompose(y: &SampledPath, resolution: f64, local_time: &LocalTimeCurve) -> Result<Vec<ExcursionRecord>> {
    if !(resolution >= 0.0) {
        return config("resolution must be nonnegative");
    }
    let mut tr = ExcursionTracker::new(resolution, local_time.epsilon.max(f64::MIN_POSITIVE), local_time.sigma2);
    let (ts, ys) = (y.times(), y.values());
    for i in 1..ts.len() {
        let (t0, t1, y0, y1) = (ts[i - 1], ts[i], ys[i - 1], ys[i]);
        if y0 * y1 < 0.0 {
            let tz = t0 + (t1 - t0) * y0 / (y0 - y1);
            tr.piece(t0, tz, y0, 0.0);
            tr.piece(tz, t1, 0.0, y1);
        } else {
            tr.piece(t0, t1, y0, y1);
        }
    }
    if ts.len() == 1 && ys[0] != 0.0 {
        tr.piece(ts[0], ts[0], ys[0], ys[0]);
    }
    let (mut recs, _) = tr.finish();
    for r in &mut recs {
        r.local_time_at_start = local_time.eval(r.t_start).unwrap_or(0.0);
    }
    Ok(recs)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EscapeCriterion {
    pub barrier: f64,
    pub horizon: f64,
    /// Upper bound on the probability of returning to 0 after reaching the barrier.
    pub misclassification: f64,
}

fn away_sides(params: &ModelParams) -> Vec<(Side, f64, f64)> {
    let mut v = Vec::new();
    if params.beta1 < 0.0 {
        v.push((Side::Under, params.alpha1, -params.beta1));
    }
    if params.beta2 > 0.0 {
        v.push((Side::Over, params.alpha2, params.beta2));
    }
    v
}

impl EscapeCriterion {
    /// Smallest barrier whose return probability is at most `MISCLASSIFICATION`
    /// on every side where the drift points away from the driver.
    pub fn for_params(params: &ModelParams, horizon: f64) -> Result<Self> {
        params.validate()?;
        if !(horizon > 0.0) {
            return config("horizon must be positive");
        }
        let sides = away_sides(params);
        if sides.is_empty() {
            return Err(Error::Semantics(
                "beta1 >= 0 >= beta2: no side drives X away from B, so no bifurcation occurs".into(),
            ));
        }
        let mut barrier = 0.0f64;
        for (_, alpha, beta) in sides {
            let c = if alpha == 0.0 {
                params.sigma2 * (1.0 / MISCLASSIFICATION).ln() / (2.0 * beta)
            } else {
                let mut hi = 1.0;
                while return_probability(hi, alpha, beta, params.sigma2)? > MISCLASSIFICATION {
                    hi *= 2.0;
                }
                let mut lo = 0.0;
                for _ in 0..60 {
                    let mid = 0.5 * (lo + hi);
                    if return_probability(mid, alpha, beta, params.sigma2)? > MISCLASSIFICATION {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                hi
            };
            barrier = barrier.max(c);
        }
        Ok(EscapeCriterion { barrier, horizon, misclassification: MISCLASSIFICATION })
    }

    /// A caller-chosen barrier; the bound is recomputed from the scale function.
    pub fn with_barrier(params: &ModelParams, barrier: f64, horizon: f64) -> Result<Self> {
        let base = Self::for_params(params, horizon)?;
        if !(barrier > 0.0) {
            return config("barrier must be positive");
        }
        let mut worst = 0.0f64;
        for (_, alpha, beta) in away_sides(params) {
            worst = worst.max(return_probability(barrier, alpha, beta, params.sigma2)?);
        }
        Ok(EscapeCriterion { barrier, misclassification: worst, ..base })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    /// X ends above B.
    Positive,
    /// X ends below B.
    Negative,
    NoneInHorizon,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BifurcationReport {
    pub direction: Direction,
    /// Last contact with the driver before the escape.
    pub t_star: Option<f64>,
    /// Local time accumulated until the run stopped.
    pub local_time: f64,
    pub stop_time: f64,
}

/// Run the solution until it escapes past the barrier, feeding pieces of Y to `extra`.
pub fn run_to_escape<D: DriverSource, O: Observer>(
    params: &ModelParams,
    driver: &mut D,
    criterion: &EscapeCriterion,
    epsilon: Option<f64>,
    extra: &mut O,
) -> Result<BifurcationReport> {
    params.validate()?;
    let sides = away_sides(params);
    if sides.is_empty() {
        return Err(Error::Semantics("beta1 >= 0 >= beta2: no bifurcation occurs".into()));
    }
    let away_under = sides.iter().any(|s| s.0 == Side::Under);
    let away_over = sides.iter().any(|s| s.0 == Side::Over);
    let (t0, b0) = driver.current();
    let eps = epsilon.unwrap_or_else(|| default_bandwidth(params.sigma2, driver.step()));
    let mut st = stepper_for(&ModelParams { t0, ..*params }, b0 - params.x0, 1e-9);
    let mut obs = (Occupation::new(eps, params.sigma2), LastZero::default(), extra);
    if st.y() == 0.0 {
        obs.1.last = Some(t0);
    }
    let c = criterion.barrier;
    let horizon = t0 + criterion.horizon;
    let mut stop_time = t0;
    let escaped = drive(&mut st, driver, &mut obs, |s, t, _| {
        stop_time = t;
        let y = s.y();
        (away_under && y >= c) || (away_over && y <= -c) || t >= horizon
    }) && st.y().abs() >= c;
    let direction = if !escaped {
        Direction::NoneInHorizon
    } else if st.y() > 0.0 {
        Direction::Negative
    } else {
        Direction::Positive
    };
    Ok(BifurcationReport { direction, t_star: obs.1.last, local_time: obs.0.value(), stop_time })
}

pub fn detect_bifurcation<D: DriverSource>(
    params: &ModelParams,
    driver: &mut D,
    criterion: &EscapeCriterion,
) -> Result<BifurcationReport> {
    run_to_escape(params, driver, criterion, None, &mut ())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LifetimeStats {
    pub n_closed: usize,
    pub local_time: f64,
    pub total_lifetime: f64,
    /// Total finite-excursion lifetime per unit local time.
    pub lifetime_per_local_time: f64,
    pub low_statistics: bool,
}

pub fn excursion_lifetime_stats(records: &[ExcursionRecord], local_time: f64) -> LifetimeStats {
    let lifetimes: Vec<f64> = records.iter().filter_map(|r| r.lifetime()).collect();
    let total: f64 = lifetimes.iter().sum();
    let low = lifetimes.is_empty() || !(local_time > 0.0);
    LifetimeStats {
        n_closed: lifetimes.len(),
        local_time,
        total_lifetime: total,
        lifetime_per_local_time: if low { 0.0 } else { total / local_time },
        low_statistics: low,
    }
}

/// Counts of closed-excursion lifetimes in the bins given by `edges`.
pub fn lifetime_histogram(records: &[ExcursionRecord], edges: &[f64]) -> Vec<u64> {
    let mut counts = vec![0u64; edges.len().saturating_sub(1)];
    for life in records.iter().filter_map(|r| r.lifetime()) {
        let k = edges.partition_point(|&e| e <= life);
        if k >= 1 && k < edges.len() {
            counts[k - 1] += 1;
        }
    }
    counts
}
