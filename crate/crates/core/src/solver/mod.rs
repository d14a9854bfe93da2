//! Pathwise solutions of dX/dt = beta1 |X-B|^alpha1 (X <= B), beta2 |X-B|^alpha2 (X > B).

pub mod engine;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{config, Error, Result};
use crate::paths::{DriverSource, PathCursor, PathKind, SampledPath};
use engine::{drive, ContactRecorder, ExactStepper, GeneralStepper, Observer, PushStepper, SideLaw, SmoothedStepper, YStepper};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub beta1: f64,
    pub beta2: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub sigma2: f64,
    pub t0: f64,
    pub x0: f64,
}

impl ModelParams {
    /// alpha = 0, sigma2 = 1, started at (0, 0).
    pub fn new(beta1: f64, beta2: f64) -> Self {
        ModelParams { beta1, beta2, alpha1: 0.0, alpha2: 0.0, sigma2: 1.0, t0: 0.0, x0: 0.0 }
    }

    pub fn with_alpha(mut self, alpha1: f64, alpha2: f64) -> Self {
        self.alpha1 = alpha1;
        self.alpha2 = alpha2;
        self
    }

    pub fn with_sigma2(mut self, sigma2: f64) -> Self {
        self.sigma2 = sigma2;
        self
    }

    pub fn with_start(mut self, t0: f64, x0: f64) -> Self {
        self.t0 = t0;
        self.x0 = x0;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.beta1, self.beta2, self.alpha1, self.alpha2, self.sigma2, self.t0, self.x0];
        if all.iter().any(|v| !v.is_finite()) {
            return config("model parameters must be finite");
        }
        if !(self.alpha1 > -1.0 && self.alpha2 > -1.0) {
            return config(format!("exponents must exceed -1, got {} and {}", self.alpha1, self.alpha2));
        }
        if !(self.sigma2 > 0.0) {
            return config("sigma2 must be positive");
        }
        Ok(())
    }

    pub fn is_alpha_zero(&self) -> bool {
        self.alpha1 == 0.0 && self.alpha2 == 0.0
    }

    pub fn lipschitz_bound(&self) -> f64 {
        self.beta1.abs().max(self.beta2.abs())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Scheme {
    Maximal,
    Minimal,
    Smoothed { epsilon: f64 },
    /// The delta-approximate construction with upward pushes at contact.
    DeltaPush { delta: f64 },
    /// Adaptive integration for general exponents (maximal departures).
    Adaptive { tol: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionPath {
    pub base: SampledPath,
    pub params: ModelParams,
    pub scheme: Scheme,
    pub contact_set: Vec<(f64, f64)>,
    /// Contact episodes where the alpha < 0 drift had to be clamped.
    pub singular_episodes: usize,
}

impl SolutionPath {
    pub fn eval(&self, t: f64) -> Option<f64> {
        self.base.eval(t)
    }

    pub fn write_contacts_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        let io = |e: std::io::Error| Error::Format(e.to_string());
        writeln!(w, "t_enter,t_exit").map_err(io)?;
        for (a, b) in &self.contact_set {
            writeln!(w, "{a:e},{b:e}").map_err(io)?;
        }
        Ok(())
    }
}

fn record<S: YStepper>(
    mut st: S,
    params: &ModelParams,
    driver: &SampledPath,
    scheme: Scheme,
) -> Result<(SolutionPath, S)> {
    let mut cur = PathCursor::new(driver, params.t0)?;
    let (t0, _) = cur.current();
    let mut times = vec![t0];
    let mut xs = vec![params.x0];
    let mut contacts = ContactRecorder::default();
    if st.y() == 0.0 {
        contacts.piece(t0, t0, 0.0, 0.0);
    }
    drive(&mut st, &mut cur, &mut contacts, |s, t, b| {
        times.push(t);
        xs.push(b - s.y());
        false
    });
    if times.len() < 2 {
        return Err(Error::Domain(format!("driver ends at {}, before any step after t0 = {t0}", driver.t_end())));
    }
    let sol = SolutionPath {
        base: SampledPath::new_unchecked(times, xs, PathKind::Solution),
        params: *params,
        scheme,
        contact_set: contacts.finish(),
        singular_episodes: 0,
    };
    Ok((sol, st))
}

fn initial_gap(params: &ModelParams, driver: &SampledPath) -> Result<f64> {
    params.validate()?;
    let b0 = driver.eval(params.t0).ok_or_else(|| {
        Error::Domain(format!("driver [{}, {}] does not cover t0 = {}", driver.t_start(), driver.t_end(), params.t0))
    })?;
    Ok(b0 - params.x0)
}

/// Event-exact solution for alpha1 = alpha2 = 0.
pub fn solve(params: &ModelParams, driver: &SampledPath, scheme: Scheme) -> Result<SolutionPath> {
    match scheme {
        Scheme::Maximal | Scheme::Minimal => {}
        Scheme::Smoothed { epsilon } => return solve_smoothed(params, driver, epsilon),
        Scheme::DeltaPush { delta } => return solve_delta_push(params, driver, delta),
        Scheme::Adaptive { tol } => return solve_general(params, driver, tol),
    }
    if !params.is_alpha_zero() {
        return config("solve needs alpha1 = alpha2 = 0; use solve_general");
    }
    let y0 = initial_gap(params, driver)?;
    let st = ExactStepper::new(params.beta1, params.beta2, scheme == Scheme::Maximal, params.t0, y0);
    Ok(record(st, params, driver, scheme)?.0)
}

/// Adaptive solution for general exponents, with maximal departures at contact.
pub fn solve_general(params: &ModelParams, driver: &SampledPath, tol: f64) -> Result<SolutionPath> {
    if !(tol > 0.0) {
        return config("tolerance must be positive");
    }
    let y0 = initial_gap(params, driver)?;
    let st = general_stepper(params, tol, y0);
    let (mut sol, st) = record(st, params, driver, Scheme::Adaptive { tol })?;
    sol.singular_episodes = st.singular_episodes;
    Ok(sol)
}

pub(crate) fn general_stepper(params: &ModelParams, tol: f64, y0: f64) -> GeneralStepper {
    GeneralStepper::new(
        SideLaw { beta: params.beta1, alpha: params.alpha1 },
        SideLaw { beta: params.beta2, alpha: params.alpha2 },
        true,
        tol,
        params.t0,
        y0,
    )
}

/// Solution of the smoothed equation dX/dt = f_eps(X, B).
pub fn solve_smoothed(params: &ModelParams, driver: &SampledPath, epsilon: f64) -> Result<SolutionPath> {
    if !(epsilon > 0.0) {
        return config("smoothing width must be positive");
    }
    if !params.is_alpha_zero() {
        return config("the smoothed equation is defined for alpha = 0");
    }
    let y0 = initial_gap(params, driver)?;
    let st = SmoothedStepper::new(params.beta1, params.beta2, epsilon, params.t0, y0);
    let (mut sol, _) = record(st, params, driver, Scheme::Smoothed { epsilon })?;
    sol.contact_set.clear();
    Ok(sol)
}

/// The delta-approximate scheme.
pub fn solve_delta_push(params: &ModelParams, driver: &SampledPath, delta: f64) -> Result<SolutionPath> {
    if !(delta > 0.0) {
        return config("push duration must be positive");
    }
    if !params.is_alpha_zero() {
        return config("the push scheme is defined for alpha = 0");
    }
    let y0 = initial_gap(params, driver)?;
    let st = PushStepper::new(params.beta1, params.beta2, delta, params.t0, y0);
    Ok(record(st, params, driver, Scheme::DeltaPush { delta })?.0)
}

pub(crate) fn solve_any(params: &ModelParams, driver: &SampledPath, tol: f64) -> Result<SolutionPath> {
    if params.is_alpha_zero() {
        solve(params, driver, Scheme::Maximal)
    } else {
        solve_general(params, driver, tol)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub epsilon: f64,
    pub sup_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
    /// Whether the gaps happen to decrease monotonically (reported, not required).
    pub monotone: bool,
}

/// Sup-norm distance between smoothed solutions and the exact solution.
pub fn convergence_study(params: &ModelParams, driver: &SampledPath, epsilons: &[f64]) -> Result<ConvergenceTable> {
    if epsilons.is_empty() || epsilons.iter().any(|e| !(*e > 0.0)) {
        return config("epsilons must be positive");
    }
    if epsilons.windows(2).any(|w| !(w[1] < w[0])) {
        return config("epsilons must be decreasing");
    }
    let exact = solve(params, driver, Scheme::Maximal)?;
    let rows = epsilons
        .iter()
        .map(|&epsilon| {
            let sm = solve_smoothed(params, driver, epsilon)?;
            let sup_gap = sm
                .base
                .values()
                .iter()
                .zip(exact.base.values())
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            Ok(ConvergenceRow { epsilon, sup_gap })
        })
        .collect::<Result<Vec<_>>>()?;
    let monotone = rows.windows(2).all(|w| w[1].sup_gap <= w[0].sup_gap);
    Ok(ConvergenceTable { rows, monotone })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Flow {
    pub x_grid: Vec<f64>,
    pub values: Vec<f64>,
    pub paths: Vec<SolutionPath>,
}

/// Solutions from every x in `x_grid` on one driver, evaluated at `t_eval`.
pub fn solve_flow(
    params: &ModelParams,
    driver: &SampledPath,
    x_grid: &[f64],
    t_eval: f64,
    keep_paths: bool,
) -> Result<Flow> {
    if x_grid.windows(2).any(|w| !(w[0] < w[1])) {
        return config("x_grid must be strictly increasing");
    }
    let sols = x_grid
        .par_iter()
        .map(|&x| solve_any(&ModelParams { x0: x, ..*params }, driver, 1e-10))
        .collect::<Result<Vec<_>>>()?;
    let values = sols
        .iter()
        .map(|s| s.eval(t_eval).ok_or_else(|| Error::Domain(format!("t_eval = {t_eval} outside the solution range"))))
        .collect::<Result<Vec<_>>>()?;
    Ok(Flow { x_grid: x_grid.to_vec(), values, paths: if keep_paths { sols } else { Vec::new() } })
}

/// Driver source helper: the exact stepper run on an arbitrary source.
pub(crate) fn stepper_for(params: &ModelParams, y0: f64, tol: f64) -> AnyStepper {
    if params.is_alpha_zero() {
        AnyStepper::Exact(ExactStepper::new(params.beta1, params.beta2, true, params.t0, y0))
    } else {
        AnyStepper::General(general_stepper(params, tol, y0))
    }
}

pub(crate) enum AnyStepper {
    Exact(ExactStepper),
    General(GeneralStepper),
}

impl YStepper for AnyStepper {
    fn t(&self) -> f64 {
        match self {
            AnyStepper::Exact(s) => s.t(),
            AnyStepper::General(s) => s.t(),
        }
    }

    fn y(&self) -> f64 {
        match self {
            AnyStepper::Exact(s) => s.y(),
            AnyStepper::General(s) => s.y(),
        }
    }

    fn side(&self) -> engine::Side {
        match self {
            AnyStepper::Exact(s) => s.side(),
            AnyStepper::General(s) => s.side(),
        }
    }

    fn advance<O: Observer>(&mut self, t1: f64, s: f64, obs: &mut O) {
        match self {
            AnyStepper::Exact(st) => st.advance(t1, s, obs),
            AnyStepper::General(st) => st.advance(t1, s, obs),
        }
    }
}

#[cfg(test)]
mod tests;
