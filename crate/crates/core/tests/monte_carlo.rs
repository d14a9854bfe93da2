//! Ensemble checks against closed-form values. Seeds are fixed, so every
//! assertion here is deterministic.

use bifsim_core::analytics::*;
use bifsim_core::excursions::*;
use bifsim_core::lipschitz::*;
use bifsim_core::localtime::*;
use bifsim_core::mc::*;
use bifsim_core::paths::*;
use bifsim_core::rayknight::*;
use bifsim_core::rng::Seed;
use bifsim_core::solver::*;
use statrs::distribution::{ContinuousCDF, Normal};

fn negative_fraction(p: &ModelParams, dt: f64, n: usize, seed: u64) -> McEstimate {
    let c = EscapeCriterion::for_params(p, 1e3).unwrap();
    let xs = run_trials(n, Seed::new(seed), |_, s| {
        let mut d = BrownianStream::new(dt, p.sigma2, 1e3, s)?;
        let r = detect_bifurcation(p, &mut d, &c)?;
        assert_ne!(r.direction, Direction::NoneInHorizon);
        Ok(if r.direction == Direction::Negative { 1.0 } else { 0.0 })
    })
    .unwrap();
    McEstimate::from_samples(&xs, seed, Some(p_negative_bifurcation(p).unwrap()))
}

fn within(e: &McEstimate, k: f64) -> bool {
    e.z_score.unwrap().abs() <= k
}

#[test]
fn symmetric_drifts_bifurcate_evenly() {
    let e = negative_fraction(&ModelParams::new(-1.0, 1.0), 1e-3, 4000, 21);
    assert_eq!(e.theory, Some(0.5));
    assert!(within(&e, 3.0), "{e:?}");
}

#[test]
fn direction_frequencies_follow_scale_function() {
    for (p, seed) in [
        (ModelParams::new(-1.0, 1.0).with_alpha(1.0, 0.0), 22),
        (ModelParams::new(-1.0, 2.0).with_alpha(0.5, 0.5), 23),
        (ModelParams::new(-1.5, 1.0).with_sigma2(2.0), 24),
    ] {
        let e = negative_fraction(&p, 1e-3, 3000, seed);
        assert!(within(&e, 3.0), "{p:?}: {e:?}");
    }
    let p = ModelParams::new(-1.0, 1.0).with_alpha(1.0, 0.0);
    let exact = 0.5 / (0.5 + std::f64::consts::PI.sqrt() / 2.0);
    assert!((p_negative_bifurcation(&p).unwrap() - exact).abs() < 1e-9);
}

#[test]
fn mean_bifurcation_time() {
    for (p, seed) in [(ModelParams::new(-1.0, 1.0), 31), (ModelParams::new(2.0, 1.0), 32)] {
        let c = EscapeCriterion::for_params(&p, 1e3).unwrap();
        let xs = run_trials(4000, Seed::new(seed), |_, s| {
            let mut d = BrownianStream::new(1e-3, 1.0, 1e3, s)?;
            Ok(detect_bifurcation(&p, &mut d, &c)?.t_star.unwrap())
        })
        .unwrap();
        let e = McEstimate::from_samples(&xs, seed, Some(expected_bifurcation_time(&p).unwrap()));
        assert!(within(&e, 3.0), "{p:?}: {e:?}");
    }
}

#[test]
fn terminal_local_time_is_exponential() {
    let p = ModelParams::new(2.0, 1.0);
    let c = EscapeCriterion::for_params(&p, 1e3).unwrap();
    let xs = run_trials(1500, Seed::new(41), |_, s| {
        let mut d = BrownianStream::new(1e-4, 1.0, 1e3, s)?;
        terminal_local_time(&p, &mut d, &c, None)
    })
    .unwrap();
    let mean = terminal_local_time_mean(&p).unwrap();
    let e = McEstimate::from_samples(&xs, 41, Some(mean));
    assert!(within(&e, 3.0), "{e:?}");
    let ks = ks_one_sample(&xs, |x| 1.0 - (-x.max(0.0) / mean).exp()).unwrap();
    assert!(ks.p_value > 0.01, "{ks:?}");
}

struct LongRun {
    occupation: f64,
    downcrossing: f64,
    lifetime_per_l: f64,
    rate_half: f64,
    rate_one: f64,
    window_counts: Vec<f64>,
}

fn long_runs(dt: f64, n: usize, seed: u64) -> Vec<LongRun> {
    let p = ModelParams::new(1.0, -1.0);
    let t_max = 200.0;
    run_trials(n, Seed::new(seed), |_, s| {
        let b = sample_brownian(GridSpec::new(0.0, t_max, (t_max / dt).round() as usize)?, 1.0, s)?;
        let x = solve(&p, &b, Scheme::Maximal)?;
        let y = b.minus(&x.base)?;
        let eps = default_bandwidth(1.0, dt);
        let lt = occupation_local_time(&y, eps, 1.0, 0.0)?;
        let down = downcrossing_local_time(&y, eps, 1.0, 0.0)?;
        let fine = decompose(&y, dt.sqrt(), &lt)?;
        let coarse = decompose(&y, default_resolution(1.0, dt), &lt)?;
        let l = lt.last();
        let count = |h: f64| coarse.iter().filter(|r| r.sign == Sign::Positive && r.height > h).count() as f64;
        let mut window_counts = vec![0.0; (l / 5.0) as usize];
        for r in coarse.iter().filter(|r| r.sign == Sign::Positive && r.height > 0.5) {
            if let Some(w) = window_counts.get_mut((r.local_time_at_start / 5.0) as usize) {
                *w += 1.0;
            }
        }
        Ok(LongRun {
            occupation: l / t_max,
            downcrossing: down.last() / t_max,
            lifetime_per_l: excursion_lifetime_stats(&fine, l).lifetime_per_local_time,
            rate_half: count(0.5) / l,
            rate_one: count(1.0) / l,
            window_counts,
        })
    })
    .unwrap()
}

#[test]
fn local_time_rate_and_excursion_law() {
    let p = ModelParams::new(1.0, -1.0);
    let runs = long_runs(1e-3, 40, 51);
    let col = |f: &dyn Fn(&LongRun) -> f64| runs.iter().map(f).collect::<Vec<f64>>();
    let rate = local_time_rate(&p).unwrap();
    let occ = McEstimate::from_samples(&col(&|r| r.occupation), 51, Some(rate));
    let down = McEstimate::from_samples(&col(&|r| r.downcrossing), 51, Some(rate));
    assert!(occ.rel_error().unwrap() < 0.05, "{occ:?}");
    assert!(((occ.mean - down.mean) / occ.mean).abs() < 0.05, "{occ:?} {down:?}");
    let life = McEstimate::from_samples(&col(&|r| r.lifetime_per_l), 51, Some(1.0 / p.beta1 + 1.0 / -p.beta2));
    assert!(life.rel_error().unwrap() < 0.05, "{life:?}");
    // dispersion index of excursion counts in disjoint local-time windows
    let counts: Vec<f64> = runs.iter().flat_map(|r| r.window_counts.iter().copied()).collect();
    let m = counts.iter().sum::<f64>() / counts.len() as f64;
    let v = counts.iter().map(|c| (c - m).powi(2)).sum::<f64>() / (counts.len() - 1) as f64;
    let se = (2.0 / (counts.len() - 1) as f64).sqrt();
    assert!(((v / m) - 1.0).abs() < 3.0 * se, "dispersion {} se {se}", v / m);
}

#[test]
fn excursion_height_rates_at_fine_step() {
    let runs = long_runs(1e-4, 12, 52);
    for (h, f) in [(0.5, &(|r: &LongRun| r.rate_half) as &dyn Fn(&LongRun) -> f64), (1.0, &|r: &LongRun| r.rate_one)] {
        let xs: Vec<f64> = runs.iter().map(f).collect();
        let e = McEstimate::from_samples(&xs, 52, Some(excursion_height_rate(1.0, h, 1.0)));
        assert!(within(&e, 3.0), "h={h}: {e:?}");
    }
}

#[test]
fn lifetime_density_shape() {
    let p = ModelParams::new(1.0, -1.0);
    let edges: Vec<f64> = (0..=12).map(|k| 0.05 * 1.4f64.powi(k)).collect();
    let recs = run_trials(20, Seed::new(53), |_, s| {
        let b = sample_brownian(GridSpec::new(0.0, 200.0, 200_000)?, 1.0, s)?;
        let x = solve(&p, &b, Scheme::Maximal)?;
        let y = b.minus(&x.base)?;
        let lt = occupation_local_time(&y, default_bandwidth(1.0, 1e-3), 1.0, 0.0)?;
        decompose(&y, 1e-3f64.sqrt(), &lt)
    })
    .unwrap();
    let all: Vec<ExcursionRecord> = recs.into_iter().flatten().collect();
    let counts = lifetime_histogram(&all, &edges);
    let mass: Vec<f64> = edges
        .windows(2)
        .map(|w| bifsim_core::quadrature::integrate(|t| lifetime_density(t, 1.0, 1.0), w[0], w[1], 1e-12, 1e-10).unwrap())
        .collect();
    let total: u64 = counts.iter().sum();
    let norm: f64 = mass.iter().sum();
    let expected: Vec<f64> = mass.iter().map(|m| m / norm * total as f64).collect();
    let r = chi_square(&counts, &expected, 0).unwrap();
    assert!(r.p_value > 0.01, "{r:?} {counts:?} {expected:?}");
}

#[test]
fn small_time_smallness() {
    let gamma = 0.1;
    for p in [ModelParams::new(-1.0, 1.0), ModelParams::new(-1.0, 1.0).with_alpha(0.0, 0.5), ModelParams::new(-2.0, 1.0).with_alpha(0.5, 0.0)] {
        let mut fractions = Vec::new();
        for t in [1e-2, 1e-3] {
            let big = run_trials(1000, Seed::new(61), |_, s| {
                let b = sample_brownian(GridSpec::new(0.0, t, 1000)?, 1.0, s)?;
                let x = if p.is_alpha_zero() { solve(&p, &b, Scheme::Maximal)? } else { solve_general(&p, &b, 1e-10)? };
                Ok(x.eval(t).unwrap().abs() > t.powf(0.5 + gamma))
            })
            .unwrap();
            fractions.push(big.iter().filter(|&&b| b).count() as f64 / 1000.0);
        }
        assert!(fractions[0] <= 0.05 && fractions[1] <= fractions[0], "{p:?}: {fractions:?}");
    }
}

#[test]
fn stationary_construction_marginals() {
    let pairs = run_trials(4000, Seed::new(71), |_, s| {
        let p = sample_stationary_pair(1.0, 1.0, 2.0, 200, s)?;
        let inc = p.driver.values()[101] - p.driver.values()[100];
        Ok((p.y_mid, inc, -p.xstar.values()[0]))
    })
    .unwrap();
    let ys: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    assert!(ks_one_sample(&ys, |y| stationary_cdf(y, 1.0, 1.0)).unwrap().p_value > 0.01);
    let n = Normal::new(0.0, 0.01f64.sqrt()).unwrap();
    let incs: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    assert!(ks_one_sample(&incs, |x| n.cdf(x)).unwrap().p_value > 0.01);
    let x0: Vec<f64> = pairs.iter().map(|p| p.2).collect();
    assert!(ks_one_sample(&x0, |y| stationary_cdf(y, 1.0, 1.0)).unwrap().p_value > 0.01);

    // the same law from bisection on plain Brownian drivers
    let xbar = run_trials(600, Seed::new(72), |_, s| {
        let b = sample_brownian(GridSpec::new(0.0, 20.0, 2000)?, 1.0, s)?;
        Ok(find_xstar_bisection(1.0, &b, 1e-10)?.xbar)
    })
    .unwrap();
    let neg: Vec<f64> = x0.iter().map(|v| -v).collect();
    assert!(ks_two_sample(&xbar, &neg).unwrap().p_value > 0.01);
}

#[test]
fn envelope_gaps_and_scaling() {
    let g1 = stationary_gap_statistics(1.0, 1.0, 100.0, 50_000, 10.0, Seed::new(73), 200).unwrap();
    let g2 = stationary_gap_statistics(1.0, 2.0, 100.0, 50_000, 20.0, Seed::new(74), 200).unwrap();
    for g in [&g1, &g2] {
        assert!(within(&g.abs_gap, 3.0), "{:?}", g.abs_gap);
        assert!(g.upper_gap.rel_error().unwrap() < 0.05, "{:?}", g.upper_gap);
        assert!(g.lower_gap.rel_error().unwrap() < 0.05, "{:?}", g.lower_gap);
        assert!(g.envelope_width.rel_error().unwrap() < 0.05, "{:?}", g.envelope_width);
    }
    let ratio = g2.upper_gap.mean / g1.upper_gap.mean;
    let se = 2.0 * ((g2.upper_gap.stderr / g2.upper_gap.mean).powi(2) + (g1.upper_gap.stderr / g1.upper_gap.mean).powi(2)).sqrt();
    assert!((ratio - 2.0).abs() < 3.0 * se + 0.05, "ratio {ratio}");
}

#[test]
fn envelopes_touch_the_driver() {
    let b = sample_brownian(GridSpec::new(0.0, 100.0, 100_000).unwrap(), 1.0, Seed::new(75)).unwrap();
    let env = envelopes(&b, 1.0, 10.0).unwrap();
    let (lo, hi) = env.inner_window;
    let res = 2.0 * 1e-3f64.sqrt();
    let mut touches_up = 0;
    let mut touches_lo = 0;
    let t = b.times();
    for k in 0..b.len() {
        if t[k] >= lo && t[k] <= hi {
            touches_up += (env.upper.values()[k] - b.values()[k] <= res) as usize;
            touches_lo += (b.values()[k] - env.lower.values()[k] <= res) as usize;
        }
    }
    assert!(touches_up > 10 && touches_lo > 10);
}

#[test]
fn ray_knight_marginals() {
    let p = ModelParams::new(2.0, 1.0);
    let d = simulate_rk_diffusion(&p, 0.5, 1e-3, Seed::new(81), 5000, 1.0).unwrap();
    let start: Vec<f64> = d.paths.iter().map(|v| v[0]).collect();
    let mean = 0.5;
    assert!(ks_one_sample(&start, |x| 1.0 - (-x.max(0.0) / mean).exp()).unwrap().p_value > 0.01);
    let end: Vec<f64> = d.paths.iter().map(|v| *v.last().unwrap()).collect();
    let c = EscapeCriterion::for_params(&p, 1e3).unwrap();
    let path = run_trials(5000, Seed::new(82), |_, s| Ok(local_time_profile(&p, 1e-4, &[0.5], &c, None, s)?.l_inf[0])).unwrap();
    let ks = ks_two_sample(&end, &path).unwrap();
    assert!(ks.p_value > 0.01, "{ks:?}");
}

#[test]
fn flow_derivative_identity() {
    let p = ModelParams::new(2.0, 1.0);
    let b = sample_brownian(GridSpec::new(0.0, 1.0, 10_000).unwrap(), 1.0, Seed::new(91)).unwrap();
    let f = verify_flow_derivative(&p, &b, -0.5, 0.5, 1.0, 21, None).unwrap();
    assert!(f.rel_err < 0.02, "{f:?}");
    assert!(f.lhs > 0.0 && f.lhs <= 1.0);
    let flow = solve_flow(&p, &b, &[0.0, 0.01], 1.0, false).unwrap();
    let q = (flow.values[1] - flow.values[0]) / 0.01;
    assert!(q > 0.0 && q <= 1.0 + 1e-9);
}

#[test]
fn refinement_statistics() {
    let b = sample_brownian(GridSpec::new(0.0, 1.0, 2000).unwrap(), 1.5, Seed::new(93)).unwrap();
    let f = refine_bridge(&b, 4, Seed::new(94)).unwrap();
    let v = f.values();
    let dt = 1.0 / 8000.0;
    let incs: Vec<f64> = v.windows(2).map(|w| w[1] - w[0]).collect();
    let var = incs.iter().map(|x| x * x).sum::<f64>() / incs.len() as f64;
    assert!((var / (1.5 * dt) - 1.0).abs() < 0.05, "{var}");
    let n = Normal::new(0.0, 1.0).unwrap();
    let z: Vec<f64> = incs.iter().map(|x| x / (1.5 * dt).sqrt()).collect();
    assert!(ks_one_sample(&z[..], |x| n.cdf(x)).unwrap().p_value > 0.01);

    let mid = |k: usize| -> Vec<f64> {
        run_trials(3000, Seed::new(95), |i, s| {
            let coarse = sample_brownian(GridSpec::new(0.0, 1.0, 4).unwrap(), 1.0, Seed::new(96).trial(i)).unwrap();
            let fine = if k == 4 {
                refine_bridge(&coarse, 4, s)?
            } else {
                refine_bridge(&refine_bridge(&coarse, 2, s)?, 2, s.child(7))?
            };
            Ok(fine.values()[1])
        })
        .unwrap()
    };
    assert!(ks_two_sample(&mid(4), &mid(2)).unwrap().p_value > 0.01);
}

#[test]
fn brownian_increments_are_gaussian() {
    let b = sample_brownian(GridSpec::new(0.0, 10.0, 10_000).unwrap(), 2.0, Seed::new(97)).unwrap();
    let n = Normal::new(0.0, 1.0).unwrap();
    let z: Vec<f64> = b.values().windows(2).map(|w| (w[1] - w[0]) / (2.0f64 * 1e-3).sqrt()).collect();
    assert!(ks_one_sample(&z, |x| n.cdf(x)).unwrap().p_value > 0.01);
}
