//! The local-time profile x -> L^x_inf across initial conditions and the
//! flow-derivative identity.

use serde::{Deserialize, Serialize};

use crate::analytics::{flow_derivative, rk_drift_neg, rk_drift_pos, rk_variance};
use crate::error::{config, Error, Result};
use crate::excursions::{run_to_escape, Direction, EscapeCriterion};
use crate::localtime::{default_bandwidth, occupation_local_time};
use crate::paths::{BrownianTape, SampledPath};
use crate::rng::Seed;
use crate::solver::{solve, ModelParams, Scheme};

fn check_regime(params: &ModelParams) -> Result<()> {
    params.validate()?;
    if !(params.beta1 > 0.0 && params.beta2 > 0.0 && params.beta1 > params.beta2) {
        return Err(Error::Semantics(format!(
            "the local-time diffusion needs beta1 > beta2 > 0 (got beta1={}, beta2={})",
            params.beta1, params.beta2
        )));
    }
    if !params.is_alpha_zero() {
        return Err(Error::Semantics("the local-time diffusion is stated for alpha1 = alpha2 = 0".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileSample {
    pub x_grid: Vec<f64>,
    pub l_inf: Vec<f64>,
    pub trial_seed: u64,
}

/// Terminal local times of X^x for every x in `x_grid`, all on one Brownian driver
/// with step `dt`.
pub fn local_time_profile(
    params: &ModelParams,
    dt: f64,
    x_grid: &[f64],
    criterion: &EscapeCriterion,
    epsilon: Option<f64>,
    seed: Seed,
) -> Result<ProfileSample> {
    check_regime(params)?;
    if x_grid.is_empty() || x_grid.windows(2).any(|w| w[1] <= w[0]) {
        return config("x grid must be nonempty and strictly increasing");
    }
    let mut tape = BrownianTape::new(dt, params.sigma2, criterion.horizon, seed)?;
    let mut l_inf = Vec::with_capacity(x_grid.len());
    for &x in x_grid {
        let p = params.with_start(0.0, x);
        let rep = run_to_escape(&p, &mut tape.replay(), criterion, epsilon, &mut ())?;
        if rep.direction == Direction::NoneInHorizon {
            return Err(Error::HorizonExceeded { horizon: criterion.horizon, partial: rep.local_time });
        }
        l_inf.push(rep.local_time);
    }
    Ok(ProfileSample { x_grid: x_grid.to_vec(), l_inf, trial_seed: seed.stream })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProfileSide {
    /// x >= 0, stepping up.
    Positive,
    /// x <= 0, stepping down.
    Negative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentRow {
    pub side: ProfileSide,
    pub bin_lo: f64,
    pub bin_hi: f64,
    pub emp_drift: f64,
    pub theory_drift: f64,
    pub emp_var: f64,
    pub theory_var: f64,
    pub se_drift: f64,
    pub se_var: f64,
    pub n: usize,
}

impl MomentRow {
    pub fn drift_rel_err(&self) -> f64 {
        ((self.emp_drift - self.theory_drift) / self.theory_drift).abs()
    }

    pub fn var_rel_err(&self) -> f64 {
        ((self.emp_var - self.theory_var) / self.theory_var).abs()
    }
}

pub fn write_moments_csv<W: std::io::Write>(rows: &[MomentRow], mut w: W) -> Result<()> {
    let io = |e: std::io::Error| Error::Format(e.to_string());
    writeln!(w, "side,bin_lo,bin_hi,emp_drift,theory_drift,emp_var,theory_var,se_drift,se_var,n").map_err(io)?;
    for r in rows {
        let side = if r.side == ProfileSide::Positive { "pos" } else { "neg" };
        writeln!(
            w,
            "{side},{},{},{:e},{:e},{:e},{:e},{:e},{:e},{}",
            r.bin_lo, r.bin_hi, r.emp_drift, r.theory_drift, r.emp_var, r.theory_var, r.se_drift, r.se_var, r.n
        )
        .map_err(io)?;
    }
    Ok(())
}

/// Binned conditional moments of profile increments over x-steps of length `delta`.
/// Theory columns average the formulas over the local times falling in each bin.
/// Empty bins are reported with n = 0.
pub fn rk_moment_check(
    params: &ModelParams,
    profiles: &[ProfileSample],
    delta: f64,
    edges: &[f64],
) -> Result<Vec<MomentRow>> {
    check_regime(params)?;
    if edges.len() < 2 || edges.windows(2).any(|w| w[1] <= w[0]) {
        return config("bin edges must be increasing, at least two");
    }
    let nb = edges.len() - 1;
    // per side, per bin: (a, increment)
    let mut pos: Vec<Vec<(f64, f64)>> = vec![Vec::new(); nb];
    let mut neg: Vec<Vec<(f64, f64)>> = vec![Vec::new(); nb];
    let bin = |a: f64| {
        let k = edges.partition_point(|&e| e <= a);
        (k >= 1 && k <= nb).then(|| k - 1)
    };
    let tol = 1e-9 * delta.max(1.0);
    for p in profiles {
        for i in 1..p.x_grid.len() {
            let (x0, x1) = (p.x_grid[i - 1], p.x_grid[i]);
            if ((x1 - x0) - delta).abs() > tol {
                continue;
            }
            if x0 >= 0.0 {
                if let Some(k) = bin(p.l_inf[i - 1]) {
                    pos[k].push((p.l_inf[i - 1], p.l_inf[i] - p.l_inf[i - 1]));
                }
            }
            if x1 <= 0.0 {
                if let Some(k) = bin(p.l_inf[i]) {
                    neg[k].push((p.l_inf[i], p.l_inf[i - 1] - p.l_inf[i]));
                }
            }
        }
    }
    let mut rows = Vec::new();
    for (side, data) in [(ProfileSide::Positive, pos), (ProfileSide::Negative, neg)] {
        for (k, v) in data.iter().enumerate() {
            let n = v.len();
            let nf = n as f64;
            let (mut td, mut tv) = (0.0, 0.0);
            for &(a, _) in v {
                td += if side == ProfileSide::Positive { rk_drift_pos(a, params)? } else { rk_drift_neg(a, params)? };
                tv += rk_variance(a, params)?;
            }
            let mean = v.iter().map(|x| x.1).sum::<f64>() / nf;
            let m2 = v.iter().map(|x| (x.1 - mean).powi(2)).sum::<f64>() / nf;
            let m4 = v.iter().map(|x| (x.1 - mean).powi(4)).sum::<f64>() / nf;
            let var = if n > 1 { m2 * nf / (nf - 1.0) } else { f64::NAN };
            rows.push(MomentRow {
                side,
                bin_lo: edges[k],
                bin_hi: edges[k + 1],
                emp_drift: mean / delta,
                theory_drift: td / nf,
                emp_var: var / delta,
                theory_var: tv / nf,
                se_drift: (var / nf).sqrt() / delta,
                se_var: ((m4 - m2 * m2) / nf).sqrt() / delta,
                n,
            });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RkDiffusion {
    pub x_grid: Vec<f64>,
    /// One row per path, values on `x_grid`.
    pub paths: Vec<Vec<f64>>,
}

/// Euler-Maruyama paths of the local-time diffusion on [0, x_max], started from
/// its exponential law and absorbed at 0. `noise_scale` multiplies the diffusion
/// coefficient (0 gives the drift ODE).
pub fn simulate_rk_diffusion(
    params: &ModelParams,
    x_max: f64,
    dx: f64,
    seed: Seed,
    n: usize,
    noise_scale: f64,
) -> Result<RkDiffusion> {
    check_regime(params)?;
    if !(x_max > 0.0) || !(dx > 0.0) || dx > x_max {
        return config("need 0 < dx <= x_max");
    }
    let steps = (x_max / dx).round() as usize;
    let h = x_max / steps as f64;
    let x_grid: Vec<f64> = (0..=steps).map(|k| k as f64 * h).collect();
    let mean0 = params.sigma2 / (2.0 * params.beta2);
    let paths = crate::mc::run_trials(n, seed, |_, s| {
        let mut rng = s.rng();
        let mut l = rng.exponential(mean0);
        let mut path = Vec::with_capacity(steps + 1);
        path.push(l);
        for _ in 0..steps {
            if l > 0.0 {
                let sd = noise_scale * (rk_variance(l, params)? * h).sqrt();
                l += rk_drift_pos(l, params)? * h + sd * rng.normal();
                if l <= 0.0 {
                    l = 0.0;
                }
            }
            path.push(l);
        }
        Ok(path)
    })?;
    Ok(RkDiffusion { x_grid, paths })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub rel_err: f64,
    /// Trapezoid on every other subgrid point moves the integral by more than
    /// half a percent of lhs.
    pub refine_needed: bool,
    pub local_times: Vec<f64>,
}

/// Compares X^{x2}_t - X^{x1}_t with the x-integral of the flow derivative
/// evaluated at the local times L^x_t on an `n_sub`-point subgrid.
pub fn verify_flow_derivative(
    params: &ModelParams,
    driver: &SampledPath,
    x1: f64,
    x2: f64,
    t_eval: f64,
    n_sub: usize,
    epsilon: Option<f64>,
) -> Result<FlowCheck> {
    check_regime(params)?;
    if !(x1 <= x2) {
        return config("need x1 <= x2");
    }
    if n_sub < 3 || n_sub % 2 == 0 {
        return config("subgrid needs an odd number of points, at least 3");
    }
    if !(t_eval > driver.t_start() && t_eval <= driver.t_end()) {
        return config("t_eval must lie inside the driver");
    }
    let t0 = driver.t_start();
    let dt = driver.uniform_dt().ok_or_else(|| Error::UnsupportedPath("flow check needs a uniform grid".into()))?;
    let eps = epsilon.unwrap_or_else(|| default_bandwidth(params.sigma2, dt));
    let at = |x: f64| -> Result<(f64, f64)> {
        let sol = solve(&params.with_start(t0, x), driver, Scheme::Maximal)?;
        let y = driver.minus(&sol.base)?;
        let l = occupation_local_time(&y, eps, params.sigma2, 0.0)?;
        Ok((sol.eval(t_eval).unwrap(), l.eval(t_eval).unwrap()))
    };
    let (xa, _) = at(x1)?;
    let (xb, _) = at(x2)?;
    let lhs = xb - xa;
    let h = (x2 - x1) / (n_sub - 1) as f64;
    let mut local_times = Vec::with_capacity(n_sub);
    let mut g = Vec::with_capacity(n_sub);
    for k in 0..n_sub {
        let (_, l) = at(x1 + k as f64 * h)?;
        local_times.push(l);
        g.push(flow_derivative(l, params)?);
    }
    let trap = |step: usize| {
        let idx: Vec<usize> = (0..n_sub).step_by(step).collect();
        let hh = h * step as f64;
        idx.windows(2).map(|w| 0.5 * hh * (g[w[0]] + g[w[1]])).sum::<f64>()
    };
    let rhs = trap(1);
    let coarse = trap(2);
    let rel_err = if lhs == 0.0 && rhs == 0.0 { 0.0 } else { ((lhs - rhs) / lhs).abs() };
    let refine_needed = lhs != 0.0 && ((rhs - coarse) / lhs).abs() > 5e-3;
    Ok(FlowCheck { lhs, rhs, rel_err, refine_needed, local_times })
}
