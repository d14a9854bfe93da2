//! Local time at 0 of Y = B - X.
//!
//! Normalization: L is half the semimartingale (Tanaka) local time, the scale on
//! which positive excursions reaching height h arrive at rate 1/h per unit L in
//! the driftless limit. Occupation form: L_t = sigma^2/(4 eps) * Leb{s <= t: |Y_s| <= eps}.

use serde::{Deserialize, Serialize};

use crate::error::{config, Error, Result};
use crate::excursions::{run_to_escape, Direction, EscapeCriterion};
use crate::paths::{DriverSource, SampledPath};
use crate::solver::engine::Observer;
use crate::solver::ModelParams;

/// Mean overshoot of a Gaussian random walk over a level, in units of the step sd:
/// -zeta(1/2)/sqrt(2 pi).
pub const OVERSHOOT: f64 = 0.582_597_157_939_010_7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalTimeCurve {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub x_label: f64,
    pub epsilon: f64,
    pub sigma2: f64,
    pub low_statistics: bool,
}

impl LocalTimeCurve {
    pub fn last(&self) -> f64 {
        *self.values.last().unwrap_or(&0.0)
    }

    /// Linear interpolation; `None` outside the grid.
    pub fn eval(&self, t: f64) -> Option<f64> {
        let (ts, vs) = (&self.times, &self.values);
        if ts.is_empty() || !(t >= ts[0] && t <= ts[ts.len() - 1]) {
            return None;
        }
        let i = ts.partition_point(|&s| s <= t);
        if i == ts.len() {
            return Some(vs[i - 1]);
        }
        let (t0, t1) = (ts[i - 1], ts[i]);
        Some(vs[i - 1] + (vs[i] - vs[i - 1]) * (t - t0) / (t1 - t0))
    }

    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        let io = |e: std::io::Error| Error::Format(e.to_string());
        writeln!(w, "t,L").map_err(io)?;
        for (t, l) in self.times.iter().zip(&self.values) {
            writeln!(w, "{t:e},{l:e}").map_err(io)?;
        }
        Ok(())
    }
}

pub fn default_bandwidth(sigma2: f64, dt: f64) -> f64 {
    (sigma2 * dt).sqrt()
}

/// Time a linear piece from y0 to y1 of duration h spends in [-eps, eps].
#[inline]
pub fn band_time(y0: f64, y1: f64, h: f64, eps: f64) -> f64 {
    if y0 == y1 {
        return if y0.abs() <= eps { h } else { 0.0 };
    }
    let (lo, hi) = if y0 < y1 { (y0, y1) } else { (y1, y0) };
    let overlap = hi.min(eps) - lo.max(-eps);
    if overlap <= 0.0 {
        0.0
    } else {
        h * overlap / (hi - lo)
    }
}

/// Streaming occupation estimator.
#[derive(Debug, Clone)]
pub struct Occupation {
    eps: f64,
    scale: f64,
    occupied: f64,
}

impl Occupation {
    pub fn new(eps: f64, sigma2: f64) -> Self {
        Occupation { eps, scale: sigma2 / (4.0 * eps), occupied: 0.0 }
    }

    pub fn value(&self) -> f64 {
        self.scale * self.occupied
    }
}

impl Observer for Occupation {
    #[inline]
    fn piece(&mut self, t0: f64, t1: f64, y0: f64, y1: f64) {
        self.occupied += band_time(y0, y1, t1 - t0, self.eps);
    }
}

fn check_eps(epsilon: f64, sigma2: f64) -> Result<()> {
    if !(epsilon > 0.0) {
        return config("bandwidth epsilon must be positive");
    }
    if !(sigma2 > 0.0) {
        return config("sigma2 must be positive");
    }
    Ok(())
}

/// Occupation-density estimate with exact per-segment band times.
pub fn occupation_local_time(y: &SampledPath, epsilon: f64, sigma2: f64, x_label: f64) -> Result<LocalTimeCurve> {
    check_eps(epsilon, sigma2)?;
    let mut occ = Occupation::new(epsilon, sigma2);
    let (ts, ys) = (y.times(), y.values());
    let mut values = Vec::with_capacity(ts.len());
    values.push(0.0);
    for i in 1..ts.len() {
        occ.piece(ts[i - 1], ts[i], ys[i - 1], ys[i]);
        values.push(occ.value());
    }
    Ok(LocalTimeCurve { times: ts.to_vec(), values, x_label, epsilon, sigma2, low_statistics: false })
}

/// Downcrossing estimate: completed passages from Y >= eps down to Y <= 0.
///
/// Each count is worth eps + 2 * OVERSHOOT * sigma * sqrt(dt): in this
/// normalization eps * count -> L, and on a sampled path each level is
/// effectively moved outward by the walk's mean overshoot.
pub fn downcrossing_local_time(y: &SampledPath, epsilon: f64, sigma2: f64, x_label: f64) -> Result<LocalTimeCurve> {
    check_eps(epsilon, sigma2)?;
    let (ts, ys) = (y.times(), y.values());
    let dt = if ts.len() > 1 { (ts[ts.len() - 1] - ts[0]) / (ts.len() - 1) as f64 } else { 0.0 };
    let unit = epsilon + 2.0 * OVERSHOOT * (sigma2 * dt).sqrt();
    let mut armed = ys[0] >= epsilon;
    let mut count = 0u64;
    let mut values = Vec::with_capacity(ts.len());
    for &v in ys {
        if armed && v <= 0.0 {
            count += 1;
            armed = false;
        } else if !armed && v >= epsilon {
            armed = true;
        }
        values.push(unit * count as f64);
    }
    Ok(LocalTimeCurve { times: ts.to_vec(), values, x_label, epsilon, sigma2, low_statistics: count == 0 })
}

/// L accumulated up to the bifurcation, for one driver.
pub fn terminal_local_time<D: DriverSource>(
    params: &ModelParams,
    driver: &mut D,
    criterion: &EscapeCriterion,
    epsilon: Option<f64>,
) -> Result<f64> {
    let rep = run_to_escape(params, driver, criterion, epsilon, &mut ())?;
    if rep.direction == Direction::NoneInHorizon {
        return Err(Error::HorizonExceeded { horizon: rep.stop_time, partial: rep.local_time });
    }
    Ok(rep.local_time)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::paths::PathKind;

    #[test]
    fn band_time_cases() {
        assert_eq!(band_time(2.0, 3.0, 1.0, 0.5), 0.0);
        assert_eq!(band_time(0.0, 0.0, 2.0, 0.5), 2.0);
        assert_eq!(band_time(-1.0, 1.0, 1.0, 0.5), 0.5);
        assert_eq!(band_time(0.25, 1.25, 1.0, 0.5), 0.25);
    }

    #[test]
    fn far_constant_has_no_local_time() {
        let y = SampledPath::new(vec![0.0, 1.0, 2.0], vec![0.3; 3], PathKind::Difference).unwrap();
        let l = occupation_local_time(&y, 0.1, 1.0, 0.0).unwrap();
        assert!(l.values.iter().all(|v| *v == 0.0));
        let d = downcrossing_local_time(&y, 0.1, 1.0, 0.0).unwrap();
        assert!(d.low_statistics && d.values.iter().all(|v| *v == 0.0));
        assert!(occupation_local_time(&y, 0.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn occupation_at_zero_rate() {
        let y = SampledPath::new(vec![0.0, 2.0], vec![0.0, 0.0], PathKind::Difference).unwrap();
        let l = occupation_local_time(&y, 0.1, 1.0, 0.0).unwrap();
        assert!((l.last() - 2.0 / 0.4).abs() < 1e-12);
    }
}
