//! The acceptance suite: eleven end-to-end criteria with fixed setups.
//!
//! Criteria 2 and 6 are run as stated and are expected to fail; see
//! `KNOWN_UNATTAINABLE` and the README for the measured numbers.

use bifsim_core::analytics::*;
use bifsim_core::excursions::*;
use bifsim_core::lipschitz::*;
use bifsim_core::localtime::*;
use bifsim_core::mc::*;
use bifsim_core::paths::*;
use bifsim_core::rayknight::*;
use bifsim_core::rng::Seed;
use bifsim_core::solver::*;
use serde::Serialize;
use serde_json::json;

use crate::commands::{moment_edges, moments_check, profile_grid, rel_check, z_check};
use crate::config::RunConfig;
use crate::report::{Check, Report};
use crate::CliError;

type Res<T> = Result<T, CliError>;

/// Criteria whose stated tolerance the implementation does not meet.
/// 2: the stated target disagrees with the scale-function value the simulation reproduces.
/// 6: the moment band is out of reach at the stated delta, dt and trial count.
pub const KNOWN_UNATTAINABLE: &[u8] = &[2, 6];

pub const TITLES: [&str; 11] = [
    "bifurcation probability, alpha = 0",
    "bifurcation probability, general alpha",
    "expected bifurcation time",
    "local-time rate",
    "terminal local-time law",
    "profile moments",
    "flow-derivative identity",
    "smoothed convergence",
    "Lipschitz gaps",
    "exact fixtures and oracles",
    "log-growth brackets",
];

#[derive(Debug, Clone, Serialize)]
pub struct Outcome {
    pub id: u8,
    pub title: &'static str,
    pub passed: bool,
    pub checks: Vec<Check>,
    pub details: serde_json::Value,
}

impl Outcome {
    fn new(id: u8, checks: Vec<Check>, details: serde_json::Value) -> Self {
        let passed = !checks.is_empty() && checks.iter().all(|c| c.passed);
        Outcome { id, title: TITLES[id as usize - 1], passed, checks, details }
    }

    /// One human-readable line, e.g. `criterion  3 PASS  expected bifurcation time: ...`.
    pub fn line(&self) -> String {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        let detail: Vec<String> = self.checks.iter().map(|c| format!("{} ({})", c.name, c.detail)).collect();
        format!("criterion {:>2} {verdict}  {}: {}", self.id, self.title, detail.join("; "))
    }
}

fn seed_for(master: u64, id: u8) -> Seed {
    Seed::new(master).child(u64::from(id))
}

/// Escape runs on streamed drivers; returns the reports of every trial.
fn escapes(p: &ModelParams, dt: f64, n: usize, seed: Seed) -> Res<Vec<BifurcationReport>> {
    let crit = EscapeCriterion::for_params(p, 1e3)?;
    Ok(run_trials(n, seed, |_, s| {
        let mut d = BrownianStream::new(dt, p.sigma2, crit.horizon, s)?;
        detect_bifurcation(p, &mut d, &crit)
    })?)
}

fn all_escaped(reps: &[BifurcationReport]) -> Check {
    let miss = reps.iter().filter(|r| r.direction == Direction::NoneInHorizon).count();
    Check::new("all trials escaped", miss == 0, format!("{miss} of {} did not", reps.len()))
}

fn negative_share(reps: &[BifurcationReport]) -> Vec<f64> {
    reps.iter().map(|r| f64::from(u8::from(r.direction == Direction::Negative))).collect()
}

fn c1(seed: Seed) -> Res<Outcome> {
    let p = ModelParams::new(-2.0, 1.0);
    let reps = escapes(&p, 1e-3, 20_000, seed)?;
    let e = McEstimate::from_samples(&negative_share(&reps), seed.master, Some(p_negative_bifurcation(&p)?));
    let checks = vec![all_escaped(&reps), z_check("P(negative)", &e, 3.0).expect("theory set")];
    Ok(Outcome::new(1, checks, json!({ "p_negative": e })))
}

/// Target for criterion 2 as stated in the acceptance list.
pub const STATED_GENERAL_ALPHA_TARGET: f64 = 0.44379;

fn c2(seed: Seed) -> Res<Outcome> {
    let p = ModelParams::new(-1.0, 1.0).with_alpha(1.0, 0.0);
    let reps = escapes(&p, 1e-3, 20_000, seed)?;
    let xs = negative_share(&reps);
    let stated = McEstimate::from_samples(&xs, seed.master, Some(STATED_GENERAL_ALPHA_TARGET));
    let scale = McEstimate::from_samples(&xs, seed.master, Some(p_negative_bifurcation(&p)?));
    let mut checks = vec![all_escaped(&reps), z_check("P(negative) vs stated 0.44379", &stated, 3.0).expect("theory set")];
    let info = z_check("P(negative) vs scale-function value", &scale, 3.0).expect("theory set");
    checks.push(Check { name: format!("{} [informational]", info.name), passed: true, detail: info.detail });
    Ok(Outcome::new(2, checks, json!({ "vs_stated": stated, "vs_scale_function": scale })))
}

fn c3(seed: Seed) -> Res<Outcome> {
    let p = ModelParams::new(-1.0, 1.0);
    let reps = escapes(&p, 1e-4, 20_000, seed)?;
    let t: Vec<f64> = reps.iter().filter_map(|r| r.t_star).collect();
    let e = McEstimate::from_samples(&t, seed.master, Some(expected_bifurcation_time(&p)?));
    let checks = vec![all_escaped(&reps), z_check("mean T*", &e, 3.0).expect("theory set")];
    Ok(Outcome::new(3, checks, json!({ "t_star": e })))
}

fn c4(seed: Seed) -> Res<Outcome> {
    let p = ModelParams::new(1.0, -1.0);
    let (span, dt) = (200.0, 1e-3);
    let eps = default_bandwidth(p.sigma2, dt);
    let rates = run_trials(100, seed, |_, s| {
        let b = sample_brownian(GridSpec::new(0.0, span, (span / dt).round() as usize)?, p.sigma2, s)?;
        let y = b.minus(&solve(&p, &b, Scheme::Maximal)?.base)?;
        Ok((occupation_local_time(&y, eps, p.sigma2, 0.0)?.last() / span, downcrossing_local_time(&y, eps, p.sigma2, 0.0)?.last() / span))
    })?;
    let theory = local_time_rate(&p)?;
    let occ = McEstimate::from_samples(&rates.iter().map(|r| r.0).collect::<Vec<_>>(), seed.master, Some(theory));
    let down = McEstimate::from_samples(&rates.iter().map(|r| r.1).collect::<Vec<_>>(), seed.master, Some(theory));
    let checks = vec![rel_check("mean L_T/T", &occ, 0.05).expect("theory set")];
    Ok(Outcome::new(4, checks, json!({ "epsilon": eps, "occupation": occ, "downcrossing": down })))
}

fn c5(seed: Seed) -> Res<Outcome> {
    let p = ModelParams::new(2.0, 1.0);
    let crit = EscapeCriterion::for_params(&p, 1e3)?;
    let ls = run_trials(5000, seed, |_, s| {
        let mut d = BrownianStream::new(1e-4, p.sigma2, crit.horizon, s)?;
        terminal_local_time(&p, &mut d, &crit, None)
    })?;
    let m = terminal_local_time_mean(&p)?;
    let e = McEstimate::from_samples(&ls, seed.master, Some(m));
    let ks = ks_one_sample(&ls, |x| 1.0 - (-x.max(0.0) / m).exp())?;
    let checks = vec![
        z_check("mean terminal L", &e, 3.0).expect("theory set"),
        Check::new("KS vs exponential", ks.p_value > 0.01, format!("D = {:.4}, p = {:.4} (level 0.01)", ks.statistic, ks.p_value)),
    ];
    Ok(Outcome::new(5, checks, json!({ "terminal_local_time": e, "ks": ks })))
}

fn c6(seed: Seed) -> Res<Outcome> {
    let p = ModelParams::new(2.0, 1.0);
    let delta = 0.01;
    let grid = profile_grid(0.1, delta);
    let crit = EscapeCriterion::for_params(&p, 1e3)?;
    let profiles = run_trials(10_000, seed, |_, s| local_time_profile(&p, 1e-4, &grid, &crit, None, s))?;
    let edges = moment_edges(&profiles, 0.1);
    let rows = rk_moment_check(&p, &profiles, delta, &edges)?;
    let checks = vec![moments_check(&rows, 300, 0.15)];
    let checked: Vec<&MomentRow> = rows.iter().filter(|r| r.n >= 300).collect();
    Ok(Outcome::new(6, checks, json!({ "delta": delta, "dt": 1e-4, "bins_checked": checked.len(), "moments": rows })))
}

fn c7(seed: Seed) -> Res<Outcome> {
    let p = ModelParams::new(2.0, 1.0);
    let b = sample_brownian(GridSpec::new(0.0, 1.0, 10_000)?, p.sigma2, seed)?;
    let f = verify_flow_derivative(&p, &b, -0.5, 0.5, 1.0, 21, None)?;
    let checks = vec![Check::new(
        "X^x2 - X^x1 vs integrated derivative",
        f.rel_err < 0.02,
        format!("lhs {:.6}, rhs {:.6}, relative error {:.4} (limit 0.02)", f.lhs, f.rhs, f.rel_err),
    )];
    Ok(Outcome::new(7, checks, json!({ "flow": f })))
}

fn c8(seed: Seed) -> Res<Outcome> {
    let p = ModelParams::new(1.0, -1.0).with_start(0.0, 0.2);
    let b = sample_brownian(GridSpec::new(0.0, 2.0, 20_000)?, p.sigma2, seed)?;
    let ladder = [0.2, 0.1, 0.05, 0.025, 0.0125];
    let tab = convergence_study(&p, &b, &ladder)?;
    let (first, last) = (tab.rows[0].sup_gap, tab.rows[4].sup_gap);
    let lim = 0.05 * p.sigma2.sqrt();
    let checks = vec![
        Check::new("gap shrinks", last < first, format!("{first:.5} at eps=0.2, {last:.5} at eps=0.0125")),
        Check::new("last gap small", last < lim, format!("{last:.5} < {lim}")),
    ];
    Ok(Outcome::new(8, checks, json!({ "table": tab })))
}

fn c9(seed: Seed) -> Res<Outcome> {
    let (beta, s2, span, dt) = (1.0, 1.0, 200.0, 1e-3);
    let g = stationary_gap_statistics(beta, s2, span, (span / dt) as usize, default_margin(beta, s2), seed, 1000)?;
    let checks = vec![
        z_check("E|B - X*|", &g.abs_gap, 3.0).expect("theory set"),
        rel_check("E(Z+ - B) on the inner window", &g.upper_gap, 0.05).expect("theory set"),
    ];
    Ok(Outcome::new(9, checks, json!({ "gaps": g })))
}

fn example_fixture() -> Res<Check> {
    let d = SampledPath::new(vec![-1.0, 0.0, 1.0, 3.0], vec![0.0, 0.0, 2.0, 2.0], PathKind::Unlabeled)?;
    let p = ModelParams::new(-1.0, 1.0).with_start(0.0, 1.0);
    let sol = solve(&p, &d, Scheme::Maximal)?;
    let nodes_ok = sol.base.times() == [0.0, 1.0, 3.0] && sol.base.values() == [1.0, 2.0, 4.0];
    let interior_ok = [0.25, 0.5, 1.7, 2.9].iter().all(|&t| sol.eval(t) == Some(1.0 + t));
    Ok(Check::new("non-uniqueness fixture: maximal solution is 1 + t", nodes_ok && interior_ok, "compared exactly at nodes and 4 interior times"))
}

fn envelope_oracle(seed: Seed) -> Res<Check> {
    let mut bad = 0;
    for i in 0..100 {
        let s = seed.trial(i);
        let mut rng = s.child(1).rng();
        let n = 2 + (rng.uniform() * 398.0) as usize;
        let beta = 0.1 + 4.9 * rng.uniform();
        let b = sample_brownian(GridSpec::new(0.0, n as f64 * 1e-2, n)?, 1.0, s)?;
        if upper_envelope(&b, beta)?.values() != &upper_envelope_brute(&b, beta)[..] {
            bad += 1;
        }
    }
    Ok(Check::new("envelopes equal the O(n^2) oracle", bad == 0, format!("{bad} of 100 random fixtures differ")))
}

fn analytic_identities() -> Res<Check> {
    let mut worst_id = 0.0f64;
    for (b1, b2) in [(2.0, 1.0), (3.0, 0.5), (1.5, 1.2)] {
        for s2 in [0.5, 1.0, 2.0] {
            let p = ModelParams::new(b1, b2).with_sigma2(s2);
            for a in [0.0, 0.1, 0.7, 2.5, 10.0] {
                worst_id = worst_id.max((rk_drift_neg(a, &p)? - rk_drift_pos(a, &p)? - 1.0).abs());
            }
        }
    }
    let mut worst_q = 0.0f64;
    for (b, s2) in [(0.5, 1.0), (1.0, 1.0), (2.0, 0.5), (3.0, 2.0)] {
        let closed = lambda_rate(0.0, b, s2)?.value;
        worst_q = worst_q.max((lambda_by_quadrature(0.0, b, s2)? - closed).abs() / closed);
    }
    for (b1, b2) in [(-1.0, 1.0), (-2.0, 0.5), (2.0, 1.0), (-1.0, -2.0)] {
        let p = ModelParams::new(b1, b2);
        let closed = expected_bifurcation_time(&p)?;
        worst_q = worst_q.max((expected_bifurcation_time_quadrature(&p)? - closed).abs() / closed);
    }
    Ok(Check::new(
        "analytic identities",
        worst_id < 1e-12 && worst_q < 1e-8,
        format!("max |mu_hat - mu_tilde - 1| = {worst_id:.1e}, max quadrature vs closed form = {worst_q:.1e}"),
    ))
}

fn flow_fixtures(seed: Seed) -> Res<Check> {
    let mut bad = 0;
    for i in 0..100 {
        let s = seed.trial(i);
        let mut rng = s.child(2).rng();
        let (b1, b2) = (6.0 * rng.uniform() - 3.0, 6.0 * rng.uniform() - 3.0);
        let sigma2 = 0.25 + 3.75 * rng.uniform();
        let mut xs: Vec<f64> = (0..4).map(|_| 3.0 * rng.uniform() - 1.5).collect();
        xs.sort_by(f64::total_cmp);
        xs.dedup_by(|a, b| (*a - *b).abs() < 1e-6);
        let b = sample_brownian(GridSpec::new(0.0, 4.0, 800)?, sigma2, s)?;
        let p = ModelParams::new(b1, b2).with_sigma2(sigma2);
        let flow = solve_flow(&p, &b, &xs, b.t_end(), true)?;
        let ok = (0..xs.len() - 1).all(|w| {
            let (lo, hi) = (flow.paths[w].base.values(), flow.paths[w + 1].base.values());
            let dx = xs[w + 1] - xs[w];
            lo.iter().zip(hi).all(|(l, h)| {
                if b1 <= b2 {
                    l < h
                } else {
                    l <= h && h - l <= dx * (1.0 + 1e-9) + 1e-12
                }
            })
        });
        bad += usize::from(!ok);
    }
    Ok(Check::new("flow ordered and contracting", bad == 0, format!("{bad} of 100 random fixtures violate it")))
}

fn c10(seed: Seed) -> Res<Outcome> {
    let checks = vec![example_fixture()?, envelope_oracle(seed)?, analytic_identities()?, flow_fixtures(seed.child(3))?];
    Ok(Outcome::new(10, checks, json!({})))
}

fn c11(seed: Seed) -> Res<Outcome> {
    let (beta, s2, span, dt) = (1.0, 1.0, 1e4, 1e-2);
    let pair = sample_stationary_pair(beta, s2, span, (span / dt) as usize, seed)?;
    let gap = pair.driver.minus(&pair.xstar)?.map_values(f64::abs, PathKind::Difference);
    let xs_rows = log_growth_estimate(&gap);
    let env = envelopes(&pair.driver, beta, default_margin(beta, s2))?;
    let lower = pair.driver.minus(&env.lower)?;
    let lo_rows = log_growth_estimate(&lower);
    let last_x = xs_rows.last().map_or(f64::NAN, |r| r.window_max);
    let last_lo = lo_rows.last().map_or(f64::NAN, |r| r.tail_max);
    let reference = s2 / (2.0 * beta);
    let checks = vec![
        Check::new(
            "X* gap / ln t, final dyadic window",
            (0.25..=0.9).contains(&last_x),
            format!("{last_x:.3} in [0.25, 0.9] (limit value {reference})"),
        ),
        Check::new("|B - Z-| / ln t, final tail max", last_lo >= 0.125, format!("{last_lo:.3} >= 0.125")),
    ];
    Ok(Outcome::new(11, checks, json!({ "xstar_growth": xs_rows, "lower_envelope_growth": lo_rows })))
}

pub fn run_criterion(id: u8, master: u64) -> Res<Outcome> {
    let s = seed_for(master, id);
    match id {
        1 => c1(s),
        2 => c2(s),
        3 => c3(s),
        4 => c4(s),
        5 => c5(s),
        6 => c6(s),
        7 => c7(s),
        8 => c8(s),
        9 => c9(s),
        10 => c10(s),
        11 => c11(s),
        _ => Err(CliError::Io(format!("no acceptance criterion {id}"))),
    }
}

pub fn command(cfg: &RunConfig) -> Res<Report> {
    let ids = cfg.only.clone().unwrap_or_else(|| (1..=11).collect());
    let mut outcomes = Vec::new();
    for id in ids {
        let o = run_criterion(id, cfg.seed)?;
        eprintln!("{}", o.line());
        outcomes.push(o);
    }
    let checks = outcomes
        .iter()
        .map(|o| {
            let known = if KNOWN_UNATTAINABLE.contains(&o.id) { " [known unattainable]" } else { "" };
            Check::new(format!("criterion {}: {}{known}", o.id, o.title), o.passed, o.line())
        })
        .collect();
    Ok(Report::new("acceptance", cfg, serde_json::to_value(&outcomes).expect("serializable"), checks))
}
