//! One function per subcommand. Each returns a report; artifacts go to the
//! configured output directory.

use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use bifsim_core::analytics::*;
use bifsim_core::excursions::*;
use bifsim_core::lipschitz::*;
use bifsim_core::localtime::*;
use bifsim_core::mc::*;
use bifsim_core::paths::*;
use bifsim_core::rayknight::*;
use bifsim_core::rng::Seed;
use bifsim_core::solver::*;
use serde_json::json;

use crate::config::{Format, RunConfig};
use crate::report::{Artifacts, Check, Report};
use crate::CliError;

type Res<T> = Result<T, CliError>;

pub const COMMANDS: &[&str] =
    &["gen", "solve", "bifurcate", "localtime", "excursions", "rayknight", "lipschitz", "analytics", "converge", "acceptance"];

pub fn run(command: &str, cfg: &RunConfig) -> Res<Report> {
    match command {
        "gen" => gen(cfg),
        "solve" => solve_cmd(cfg),
        "bifurcate" => bifurcate(cfg),
        "localtime" => localtime(cfg),
        "excursions" => excursions(cfg),
        "rayknight" => rayknight(cfg),
        "lipschitz" => lipschitz(cfg),
        "analytics" => analytics(cfg),
        "converge" => converge(cfg),
        "acceptance" => crate::acceptance::command(cfg),
        other => Err(CliError::Io(format!("unknown command `{other}`; expected one of {}", COMMANDS.join(", ")))),
    }
}

pub fn z_check(name: &str, e: &McEstimate, k: f64) -> Option<Check> {
    let (theory, z) = (e.theory?, e.z_score?);
    let ok = z.abs() <= k;
    Some(Check::new(
        name,
        ok,
        format!("estimate {:.6} +- {:.6} vs theory {:.6}: z = {:.2} (limit {k})", e.mean, e.stderr, theory, z),
    ))
}

pub fn rel_check(name: &str, e: &McEstimate, tol: f64) -> Option<Check> {
    let (theory, rel) = (e.theory?, e.rel_error()?);
    Some(Check::new(
        name,
        rel < tol,
        format!("estimate {:.6} +- {:.6} vs theory {:.6}: relative error {:.4} (limit {tol})", e.mean, e.stderr, theory, rel),
    ))
}

fn estimate(xs: &[f64], seed: u64, theory: Option<f64>) -> Option<McEstimate> {
    (xs.len() >= 2).then(|| McEstimate::from_samples(xs, seed, theory))
}

fn to_json<T: serde::Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("serializable")
}

fn read_driver(path: &str, sigma2: f64) -> Res<SampledPath> {
    let file = File::open(path).map_err(|e| CliError::Io(format!("{path}: {e}")))?;
    let kind = PathKind::Driver { sigma2 };
    let p = if Path::new(path).extension().is_some_and(|x| x == "bin") {
        SampledPath::read_binary(BufReader::new(file), kind)?
    } else {
        SampledPath::read_csv(BufReader::new(file), kind)?
    };
    Ok(p)
}

/// The configured driver file, or a fresh Brownian path on [t0, t0 + span].
fn driver(cfg: &RunConfig, span: f64, seed: Seed) -> Res<SampledPath> {
    match &cfg.driver {
        Some(path) => read_driver(path, cfg.params.sigma2),
        None => {
            let t0 = cfg.params.t0;
            Ok(sample_brownian(GridSpec::new(t0, t0 + span, cfg.steps(span))?, cfg.params.sigma2, seed)?)
        }
    }
}

fn write_path(art: &mut Artifacts, stem: &str, p: &SampledPath, format: Format) -> Res<()> {
    match format {
        Format::Csv => art.write(&format!("{stem}.csv"), |w| p.write_csv(w)),
        Format::Bin => art.write(&format!("{stem}.bin"), |w| p.write_binary(w)),
    }
}

fn io(e: std::io::Error) -> bifsim_core::Error {
    bifsim_core::Error::Format(e.to_string())
}

fn gen(cfg: &RunConfig) -> Res<Report> {
    let span = cfg.horizon_or(1.0);
    let b = driver(&RunConfig { driver: None, ..cfg.clone() }, span, Seed::new(cfg.seed))?;
    let z: Vec<f64> = b.values().windows(2).map(|w| (w[1] - w[0]).powi(2) / cfg.dt).collect();
    let var = estimate(&z, cfg.seed, Some(cfg.params.sigma2));
    let mut art = Artifacts::new(cfg);
    write_path(&mut art, "driver", &b, cfg.format)?;
    let results = json!({
        "n_points": b.len(),
        "t_start": b.t_start(),
        "t_end": b.t_end(),
        "final_value": b.values()[b.len() - 1],
        "increment_variance_per_time": var,
        "files": art.written,
    });
    Ok(Report::new("gen", cfg, results, Vec::new()))
}

fn solve_cmd(cfg: &RunConfig) -> Res<Report> {
    let span = cfg.horizon_or(1.0);
    let b = driver(cfg, span, Seed::new(cfg.seed))?;
    let scheme = cfg.scheme()?;
    let sol = solve(&cfg.params, &b, scheme)?;
    let mut checks = Vec::new();
    if cfg.params.is_alpha_zero() {
        let (t, x) = (sol.base.times(), sol.base.values());
        let bound = cfg.params.lipschitz_bound();
        let worst = (1..t.len())
            .filter(|&k| t[k] > t[k - 1])
            .map(|k| (x[k] - x[k - 1]).abs() / (t[k] - t[k - 1]))
            .fold(0.0f64, f64::max);
        checks.push(Check::new(
            "lipschitz",
            worst <= bound * (1.0 + 1e-9) + 1e-12,
            format!("largest slope {worst:.6}, bound {bound}"),
        ));
    }
    let mut art = Artifacts::new(cfg);
    write_path(&mut art, "solution", &sol.base, cfg.format)?;
    art.write("contacts.csv", |w| sol.write_contacts_csv(w))?;
    let x_end = sol.base.values()[sol.base.len() - 1];
    let b_end = b.values()[b.len() - 1];
    let results = json!({
        "scheme": sol.scheme,
        "n_nodes": sol.base.len(),
        "x_final": x_end,
        "y_final": b_end - x_end,
        "contact_intervals": sol.contact_set.len(),
        "singular_episodes": sol.singular_episodes,
        "files": art.written,
    });
    Ok(Report::new("solve", cfg, results, checks))
}

fn criterion(cfg: &RunConfig, horizon: f64) -> Res<EscapeCriterion> {
    let c = EscapeCriterion::for_params(&cfg.params, horizon)?;
    Ok(match cfg.barrier {
        Some(b) => EscapeCriterion { barrier: b, ..c },
        None => c,
    })
}

/// Theory values assume the solution starts on the driver.
fn on_driver(cfg: &RunConfig) -> bool {
    cfg.params.x0 == 0.0 && cfg.driver.is_none()
}

fn bifurcate(cfg: &RunConfig) -> Res<Report> {
    let p = cfg.params;
    let horizon = cfg.horizon_or(1e3);
    let crit = criterion(cfg, horizon)?;
    let reps = run_trials(cfg.trials, Seed::new(cfg.seed), |_, s| {
        let mut d = BrownianStream::new(cfg.dt, p.sigma2, horizon, s)?;
        run_to_escape(&p, &mut d, &crit, cfg.epsilon, &mut ())
    })?;
    let done: Vec<&BifurcationReport> = reps.iter().filter(|r| r.direction != Direction::NoneInHorizon).collect();
    let theory = |r: bifsim_core::Result<f64>| if on_driver(cfg) { r.ok() } else { None };
    let neg: Vec<f64> = done.iter().map(|r| f64::from(u8::from(r.direction == Direction::Negative))).collect();
    let tstar: Vec<f64> = done.iter().filter_map(|r| r.t_star).collect();
    let lt: Vec<f64> = done.iter().map(|r| r.local_time).collect();
    let e_neg = estimate(&neg, cfg.seed, theory(p_negative_bifurcation(&p)));
    let e_t = estimate(&tstar, cfg.seed, theory(expected_bifurcation_time(&p)));
    let e_l = estimate(&lt, cfg.seed, theory(terminal_local_time_mean(&p)));
    let missing = reps.len() - done.len();
    let mut checks = vec![Check::new(
        "every trial escaped",
        missing == 0,
        format!("{missing} of {} trials stayed within the barrier {} up to the horizon {horizon}", reps.len(), crit.barrier),
    )];
    for (name, e) in [("p_negative", &e_neg), ("mean T*", &e_t), ("mean terminal L", &e_l)] {
        checks.extend(e.as_ref().and_then(|e| z_check(name, e, 3.0)));
    }
    let mut art = Artifacts::new(cfg);
    art.write("bifurcations.csv", |w| {
        writeln!(w, "trial,direction,t_star,local_time,stop_time").map_err(io)?;
        for (i, r) in reps.iter().enumerate() {
            let d = match r.direction {
                Direction::Positive => "positive",
                Direction::Negative => "negative",
                Direction::NoneInHorizon => "none",
            };
            let t = r.t_star.map_or(String::new(), |t| format!("{t:e}"));
            writeln!(w, "{i},{d},{t},{:e},{:e}", r.local_time, r.stop_time).map_err(io)?;
        }
        Ok(())
    })?;
    let results = json!({
        "barrier": crit.barrier,
        "horizon": horizon,
        "escaped": done.len(),
        "not_escaped": missing,
        "p_negative": e_neg,
        "bifurcation_time": e_t,
        "terminal_local_time": e_l,
        "files": art.written,
    });
    Ok(Report::new("bifurcate", cfg, results, checks))
}

/// Y = B - X on one trial driver.
fn gap_path(cfg: &RunConfig, span: f64, s: Seed) -> bifsim_core::Result<SampledPath> {
    let t0 = cfg.params.t0;
    let b = sample_brownian(GridSpec::new(t0, t0 + span, cfg.steps(span))?, cfg.params.sigma2, s)?;
    let x = solve(&cfg.params, &b, Scheme::Maximal)?;
    b.minus(&x.base)
}

fn localtime(cfg: &RunConfig) -> Res<Report> {
    let p = cfg.params;
    if let Ok(crit) = criterion(cfg, cfg.horizon_or(1e3)) {
        let ls = run_trials(cfg.trials, Seed::new(cfg.seed), |_, s| {
            let mut d = BrownianStream::new(cfg.dt, p.sigma2, crit.horizon, s)?;
            terminal_local_time(&p, &mut d, &crit, cfg.epsilon)
        })?;
        let theory = if on_driver(cfg) { terminal_local_time_mean(&p).ok() } else { None };
        let e = estimate(&ls, cfg.seed, theory);
        let mut checks: Vec<Check> = e.iter().filter_map(|e| z_check("mean terminal L", e, 3.0)).collect();
        let mut ks = None;
        if let Some(m) = theory {
            let r = ks_one_sample(&ls, |x| 1.0 - (-x.max(0.0) / m).exp())?;
            checks.push(Check::new(
                "terminal L is exponential",
                r.p_value > 0.01,
                format!("KS statistic {:.4}, p = {:.4}", r.statistic, r.p_value),
            ));
            ks = Some(r);
        }
        let mut art = Artifacts::new(cfg);
        art.write("terminal_local_times.csv", |w| {
            writeln!(w, "trial,L").map_err(io)?;
            for (i, l) in ls.iter().enumerate() {
                writeln!(w, "{i},{l:e}").map_err(io)?;
            }
            Ok(())
        })?;
        let results = json!({
            "regime": "terminal",
            "barrier": crit.barrier,
            "terminal_local_time": e,
            "ks_exponential": ks,
            "files": art.written,
        });
        return Ok(Report::new("localtime", cfg, results, checks));
    }
    let span = cfg.horizon_or(200.0);
    let eps = cfg.epsilon.unwrap_or_else(|| default_bandwidth(p.sigma2, cfg.dt));
    let rows = run_trials(cfg.trials, Seed::new(cfg.seed), |i, s| {
        let y = gap_path(cfg, span, s)?;
        let occ = occupation_local_time(&y, eps, p.sigma2, 0.0)?;
        let down = downcrossing_local_time(&y, eps, p.sigma2, 0.0)?;
        Ok((occ.last() / span, down.last() / span, (i == 0).then_some(occ)))
    })?;
    let theory = local_time_rate(&p).ok();
    let occ: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let down: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let e_occ = estimate(&occ, cfg.seed, theory);
    let e_down = estimate(&down, cfg.seed, theory);
    let checks: Vec<Check> = e_occ.iter().filter_map(|e| rel_check("occupation rate L_T/T", e, 0.05)).collect();
    let mut art = Artifacts::new(cfg);
    if let Some(curve) = &rows[0].2 {
        art.write("localtime_trial0.csv", |w| curve.write_csv(w))?;
    }
    let results = json!({
        "regime": "rate",
        "horizon": span,
        "epsilon": eps,
        "occupation_rate": e_occ,
        "downcrossing_rate": e_down,
        "files": art.written,
    });
    Ok(Report::new("localtime", cfg, results, checks))
}

fn excursions(cfg: &RunConfig) -> Res<Report> {
    let p = cfg.params;
    let span = cfg.horizon_or(200.0);
    let eps = cfg.epsilon.unwrap_or_else(|| default_bandwidth(p.sigma2, cfg.dt));
    let res = cfg.resolution.unwrap_or_else(|| (p.sigma2 * cfg.dt).sqrt());
    let heights = [0.5, 1.0];
    let rows = run_trials(cfg.trials, Seed::new(cfg.seed), |i, s| {
        let y = gap_path(cfg, span, s)?;
        let lt = occupation_local_time(&y, eps, p.sigma2, 0.0)?;
        let recs = decompose(&y, res, &lt)?;
        let l = lt.last();
        let stats = excursion_lifetime_stats(&recs, l);
        let rate = |sign: Sign, h: f64| recs.iter().filter(|r| r.sign == sign && r.height > h).count() as f64 / l;
        let rates: Vec<f64> = heights.iter().flat_map(|&h| [rate(Sign::Positive, h), rate(Sign::Negative, h)]).collect();
        Ok((stats, rates, (i == 0).then_some(recs)))
    })?;
    let attracting = p.beta1 > 0.0 && p.beta2 < 0.0;
    let life_theory = if attracting {
        finite_excursion_lifetime(p.alpha1, p.beta1, p.sigma2, true)
            .and_then(|a| finite_excursion_lifetime(p.alpha2, -p.beta2, p.sigma2, true).map(|b| a + b))
            .ok()
    } else {
        None
    };
    let life: Vec<f64> = rows.iter().map(|r| r.0.lifetime_per_local_time).collect();
    let e_life = estimate(&life, cfg.seed, life_theory);
    let mut rate_table = Vec::new();
    for (k, &h) in heights.iter().enumerate() {
        for (j, sign) in ["positive", "negative"].iter().enumerate() {
            let xs: Vec<f64> = rows.iter().map(|r| r.1[2 * k + j]).collect();
            let beta = if j == 0 { p.beta1 } else { -p.beta2 };
            let theory = (attracting && p.is_alpha_zero()).then(|| excursion_height_rate(beta, h, p.sigma2));
            rate_table.push(json!({ "sign": sign, "height": h, "rate": estimate(&xs, cfg.seed, theory) }));
        }
    }
    let checks: Vec<Check> = e_life.iter().filter_map(|e| rel_check("lifetime per unit local time", e, 0.05)).collect();
    let low = rows.iter().filter(|r| r.0.low_statistics).count();
    let mut art = Artifacts::new(cfg);
    if let Some(recs) = &rows[0].2 {
        art.write("excursions_trial0.csv", |w| write_records_csv(recs, w))?;
    }
    let results = json!({
        "horizon": span,
        "epsilon": eps,
        "resolution": res,
        "lifetime_per_local_time": e_life,
        "height_rates": rate_table,
        "low_statistics_trials": low,
        "files": art.written,
    });
    Ok(Report::new("excursions", cfg, results, checks))
}

/// Profile spacing, x grid and bin edges used by `rayknight`.
pub fn profile_grid(x_max: f64, delta: f64) -> Vec<f64> {
    let m = (x_max / delta).round() as usize;
    (0..=m).map(|k| k as f64 * delta).collect()
}

pub fn moment_edges(profiles: &[ProfileSample], width: f64) -> Vec<f64> {
    let top = profiles.iter().flat_map(|p| p.l_inf.iter().copied()).fold(0.0f64, f64::max);
    let nb = ((top / width).ceil() as usize).max(1) + 1;
    (0..=nb).map(|k| k as f64 * width).collect()
}

pub fn moments_check(rows: &[MomentRow], min_bin: usize, tol: f64) -> Check {
    let checked: Vec<&MomentRow> = rows.iter().filter(|r| r.n >= min_bin).collect();
    let bad: Vec<String> = checked
        .iter()
        .filter(|r| !(r.drift_rel_err() < tol && r.var_rel_err() < tol))
        .map(|r| {
            format!(
                "{:?} [{:.2},{:.2}) n={}: drift {:.3} vs {:.3}, var {:.3} vs {:.3}",
                r.side, r.bin_lo, r.bin_hi, r.n, r.emp_drift, r.theory_drift, r.emp_var, r.theory_var
            )
        })
        .collect();
    let detail = if checked.is_empty() {
        format!("no bin has {min_bin} samples")
    } else if bad.is_empty() {
        format!("{} bins within {:.0}%", checked.len(), tol * 100.0)
    } else {
        format!("{} of {} bins outside {:.0}%: {}", bad.len(), checked.len(), tol * 100.0, bad.join("; "))
    };
    Check::new("profile moments", !checked.is_empty() && bad.is_empty(), detail)
}

fn rayknight(cfg: &RunConfig) -> Res<Report> {
    let p = cfg.params;
    let delta = cfg.delta.unwrap_or(0.01);
    let grid = profile_grid(cfg.x_max.unwrap_or(0.1), delta);
    let crit = criterion(cfg, cfg.horizon_or(1e3))?;
    let profiles = run_trials(cfg.trials, Seed::new(cfg.seed), |_, s| local_time_profile(&p, cfg.dt, &grid, &crit, cfg.epsilon, s))?;
    let edges = moment_edges(&profiles, cfg.bin_width.unwrap_or(0.1));
    let rows = rk_moment_check(&p, &profiles, delta, &edges)?;
    let mut checks = vec![moments_check(&rows, cfg.min_bin, 0.15)];
    let fixture = sample_brownian(GridSpec::new(0.0, cfg.t_eval, cfg.steps(cfg.t_eval))?, p.sigma2, Seed::new(cfg.seed).child(9))?;
    let flow = verify_flow_derivative(&p, &fixture, cfg.x1, cfg.x2, cfg.t_eval, cfg.n_sub, cfg.epsilon)?;
    checks.push(Check::new(
        "flow derivative identity",
        flow.rel_err < 0.02,
        format!("lhs {:.6}, rhs {:.6}, relative error {:.4} (limit 0.02)", flow.lhs, flow.rhs, flow.rel_err),
    ));
    let mut art = Artifacts::new(cfg);
    art.write("moments.csv", |w| write_moments_csv(&rows, w))?;
    art.write("profiles.csv", |w| {
        writeln!(w, "trial,x,L").map_err(io)?;
        for pr in &profiles {
            for (x, l) in pr.x_grid.iter().zip(&pr.l_inf) {
                writeln!(w, "{},{x:e},{l:e}", pr.trial_seed).map_err(io)?;
            }
        }
        Ok(())
    })?;
    let results = json!({
        "delta": delta,
        "x_grid": grid,
        "barrier": crit.barrier,
        "moments": rows,
        "flow_derivative": flow,
        "files": art.written,
    });
    Ok(Report::new("rayknight", cfg, results, checks))
}

fn symmetric_beta(cfg: &RunConfig) -> Res<f64> {
    let p = cfg.params;
    if p.beta2 > 0.0 && p.beta1 == -p.beta2 && p.is_alpha_zero() {
        Ok(p.beta2)
    } else {
        Err(bifsim_core::Error::Semantics(format!(
            "the Lipschitz constructions use beta1 = -beta2 < 0 and alpha = 0 (got beta1={}, beta2={})",
            p.beta1, p.beta2
        ))
        .into())
    }
}

fn abs_gap_path(a: &SampledPath, b: &SampledPath) -> bifsim_core::Result<SampledPath> {
    Ok(a.minus(b)?.map_values(f64::abs, PathKind::Difference))
}

fn lipschitz(cfg: &RunConfig) -> Res<Report> {
    let beta = symmetric_beta(cfg)?;
    let s2 = cfg.params.sigma2;
    let span = cfg.horizon_or(200.0);
    let n = cfg.steps(span);
    let margin = cfg.margin.unwrap_or_else(|| default_margin(beta, s2));
    let seed = Seed::new(cfg.seed);
    let g = stationary_gap_statistics(beta, s2, span, n, margin, seed, cfg.trials)?;
    let mut checks: Vec<Check> = z_check("E|B - X*|", &g.abs_gap, 3.0).into_iter().collect();
    checks.extend(rel_check("E(Z+ - B) on the inner window", &g.upper_gap, 0.05));
    let pair = sample_stationary_pair(beta, s2, span, n, seed.trial(0))?;
    let env = envelopes(&pair.driver, beta, margin)?;
    let xs_growth = log_growth_estimate(&abs_gap_path(&pair.driver, &pair.xstar)?);
    let lower_growth = log_growth_estimate(&abs_gap_path(&pair.driver, &env.lower)?);
    let mut art = Artifacts::new(cfg);
    art.write("envelopes_trial0.csv", |w| write_envelopes_csv(&pair.driver, &env, w))?;
    art.write("pair_trial0.csv", |w| pair.write_csv(w))?;
    let results = json!({
        "beta": beta,
        "horizon": span,
        "margin": margin,
        "gaps": g,
        "xstar_growth_trial0": xs_growth,
        "lower_envelope_growth_trial0": lower_growth,
        "growth_reference": s2 / (2.0 * beta),
        "files": art.written,
    });
    Ok(Report::new("lipschitz", cfg, results, checks))
}

fn analytics(cfg: &RunConfig) -> Res<Report> {
    let t = table(&cfg.params)?;
    Ok(Report::new("analytics", cfg, to_json(&t), Vec::new()))
}

/// Smoothing widths for `converge`: five halvings from `epsilon` (default 0.2).
pub fn epsilon_ladder(start: f64) -> Vec<f64> {
    (0..5).map(|k| start / 2f64.powi(k)).collect()
}

fn converge(cfg: &RunConfig) -> Res<Report> {
    let p = cfg.params;
    let b = driver(cfg, cfg.horizon_or(2.0), Seed::new(cfg.seed))?;
    let ladder = epsilon_ladder(cfg.epsilon.unwrap_or(0.2));
    let tab = convergence_study(&p, &b, &ladder)?;
    let (first, last) = (tab.rows[0].sup_gap, tab.rows[tab.rows.len() - 1].sup_gap);
    let sigma = p.sigma2.sqrt();
    let mut checks = vec![
        Check::new("smoothed gap shrinks", last < first, format!("sup gap {first:.5} at eps={} to {last:.5} at eps={}", ladder[0], ladder[4])),
        Check::new("smoothed gap small", last < 0.05 * sigma, format!("last sup gap {last:.5}, limit {:.5}", 0.05 * sigma)),
    ];
    let exact = solve(&p, &b, Scheme::Maximal)?;
    let push_delta = cfg.delta.unwrap_or(1e-3);
    let push = solve_delta_push(&p, &b, push_delta)?;
    let push_gap = push.base.values().iter().zip(exact.base.values()).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    checks.push(Check::new(
        "push scheme close",
        push_gap < 0.05 * sigma,
        format!("sup gap {push_gap:.5} at delta={push_delta}, limit {:.5}", 0.05 * sigma),
    ));
    let mut art = Artifacts::new(cfg);
    art.write("converge.csv", |w| {
        writeln!(w, "epsilon,sup_gap").map_err(io)?;
        for r in &tab.rows {
            writeln!(w, "{:e},{:e}", r.epsilon, r.sup_gap).map_err(io)?;
        }
        Ok(())
    })?;
    let results = json!({
        "smoothed": tab,
        "push": { "delta": push_delta, "sup_gap": push_gap },
        "files": art.written,
    });
    Ok(Report::new("converge", cfg, results, checks))
}
