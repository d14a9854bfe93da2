use bifsim_core::analytics::{rk_drift_neg, rk_drift_pos, rk_variance};
use bifsim_core::excursions::{decompose, Sign};
use bifsim_core::lipschitz::{lower_envelope, upper_envelope, upper_envelope_brute};
use bifsim_core::localtime::occupation_local_time;
use bifsim_core::paths::{refine_bridge, sample_brownian, time_reverse, GridSpec, PathKind, SampledPath};
use bifsim_core::rng::Seed;
use bifsim_core::solver::{solve, solve_flow, solve_smoothed, ModelParams, Scheme};
use proptest::prelude::*;

fn driver(seed: u64, n: usize, dt: f64, sigma2: f64) -> SampledPath {
    sample_brownian(GridSpec::new(0.0, n as f64 * dt, n).unwrap(), sigma2, Seed::new(seed)).unwrap()
}

fn config() -> ProptestConfig {
    ProptestConfig { cases: 100, ..ProptestConfig::default() }
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn flow_is_ordered_and_contracting(
        seed in any::<u64>(),
        b1 in -3.0f64..3.0,
        b2 in -3.0f64..3.0,
        sigma2 in 0.25f64..4.0,
        mut xs in proptest::collection::vec(-1.5f64..1.5, 2..6),
    ) {
        xs.sort_by(f64::total_cmp);
        xs.dedup_by(|a, b| (*a - *b).abs() < 1e-6);
        prop_assume!(xs.len() >= 2);
        let b = driver(seed, 800, 5e-3, sigma2);
        let p = ModelParams::new(b1, b2).with_sigma2(sigma2);
        let flow = solve_flow(&p, &b, &xs, b.t_end(), true).unwrap();
        for w in 0..xs.len() - 1 {
            let (lo, hi) = (flow.paths[w].base.values(), flow.paths[w + 1].base.values());
            let dx = xs[w + 1] - xs[w];
            for k in 0..lo.len() {
                if b1 <= b2 {
                    prop_assert!(lo[k] < hi[k]);
                } else {
                    prop_assert!(lo[k] <= hi[k]);
                    prop_assert!(hi[k] - lo[k] <= dx * (1.0 + 1e-9) + 1e-12);
                }
            }
        }
    }

    #[test]
    fn solutions_are_lipschitz(seed in any::<u64>(), b1 in -3.0f64..3.0, b2 in -3.0f64..3.0, x0 in -1.0f64..1.0) {
        let b = driver(seed, 500, 1e-2, 1.0);
        let p = ModelParams::new(b1, b2).with_start(0.0, x0);
        let bound = p.lipschitz_bound();
        for sol in [solve(&p, &b, Scheme::Maximal).unwrap(), solve_smoothed(&p, &b, 0.05).unwrap()] {
            let (t, x) = (sol.base.times(), sol.base.values());
            for k in 1..t.len() {
                prop_assert!((x[k] - x[k - 1]).abs() <= bound * (t[k] - t[k - 1]) * (1.0 + 1e-9) + 1e-13);
            }
        }
    }

    #[test]
    fn maximal_dominates_minimal(seed in any::<u64>(), b1 in -3.0f64..3.0, b2 in -3.0f64..3.0, x0 in -0.5f64..0.5) {
        let b = driver(seed, 500, 1e-2, 1.0);
        let p = ModelParams::new(b1, b2).with_start(0.0, x0);
        let hi = solve(&p, &b, Scheme::Maximal).unwrap();
        let lo = solve(&p, &b, Scheme::Minimal).unwrap();
        for (h, l) in hi.base.values().iter().zip(lo.base.values()) {
            prop_assert!(h >= l);
        }
    }

    #[test]
    fn envelopes_match_definition(seed in any::<u64>(), beta in 0.1f64..5.0, n in 2usize..400) {
        let b = driver(seed, n, 1e-2, 1.0);
        let up = upper_envelope(&b, beta).unwrap();
        prop_assert_eq!(up.values(), &upper_envelope_brute(&b, beta)[..]);
        let lo = lower_envelope(&b, beta).unwrap();
        let t = b.times();
        for k in 0..b.len() {
            prop_assert!(lo.values()[k] <= b.values()[k] && b.values()[k] <= up.values()[k]);
            if k > 0 {
                let h = beta * (t[k] - t[k - 1]) * (1.0 + 1e-12);
                prop_assert!((up.values()[k] - up.values()[k - 1]).abs() <= h);
                prop_assert!((lo.values()[k] - lo.values()[k - 1]).abs() <= h);
            }
        }
    }

    #[test]
    fn excursions_partition_time(seed in any::<u64>(), res in 0.0f64..0.3) {
        let b = driver(seed, 2000, 1e-3, 1.0);
        let p = ModelParams::new(1.0, -1.0);
        let x = solve(&p, &b, Scheme::Maximal).unwrap();
        let y = b.minus(&x.base).unwrap();
        let lt = occupation_local_time(&y, 0.03, 1.0, 0.0).unwrap();
        let recs = decompose(&y, res, &lt).unwrap();
        for r in &recs {
            prop_assert!(r.height >= res && r.height > 0.0);
            prop_assert!(r.t_start >= y.t_start());
            if let Some(e) = r.t_end {
                prop_assert!(r.t_start < e && e <= y.t_end());
            }
            let (ts, ys) = (y.times(), y.values());
            for k in 0..ts.len() {
                if ts[k] > r.t_start && r.t_end.is_none_or(|e| ts[k] < e) {
                    let same_sign = if r.sign == Sign::Positive { ys[k] > 0.0 } else { ys[k] < 0.0 };
                    prop_assert!(same_sign);
                }
            }
        }
        for w in recs.windows(2) {
            prop_assert!(w[0].t_end.unwrap() <= w[1].t_start);
        }
    }

    #[test]
    fn local_time_is_monotone_and_flat_away_from_zero(seed in any::<u64>(), eps in 0.005f64..0.2) {
        let b = driver(seed, 1000, 1e-3, 1.0);
        let x = solve(&ModelParams::new(-1.0, 1.0), &b, Scheme::Maximal).unwrap();
        let y = b.minus(&x.base).unwrap();
        let l = occupation_local_time(&y, eps, 1.0, 0.0).unwrap();
        let ys = y.values();
        for k in 1..ys.len() {
            prop_assert!(l.values[k] >= l.values[k - 1]);
            let away = (ys[k - 1] > eps && ys[k] > eps) || (ys[k - 1] < -eps && ys[k] < -eps);
            if away {
                prop_assert_eq!(l.values[k], l.values[k - 1]);
            }
        }
    }

    #[test]
    fn reversal_is_an_involution(seed in any::<u64>(), n in 1usize..300) {
        let b = driver(seed, n, 1e-2, 1.0);
        prop_assert_eq!(time_reverse(&time_reverse(&b)), b);
    }

    #[test]
    fn bridge_keeps_coarse_nodes(seed in any::<u64>(), factor in 2usize..6) {
        let b = driver(seed, 100, 1e-2, 1.0);
        let f = refine_bridge(&b, factor, Seed::new(seed ^ 1)).unwrap();
        prop_assert_eq!(f.len(), 100 * factor + 1);
        for k in 0..b.len() {
            prop_assert_eq!(f.values()[k * factor], b.values()[k]);
        }
    }

    #[test]
    fn ray_knight_identities(a in 0.0f64..20.0, b2 in 0.1f64..3.0, gap in 0.05f64..3.0, sigma2 in 0.25f64..4.0) {
        let p = ModelParams::new(b2 + gap, b2).with_sigma2(sigma2);
        let (mt, v, mh) = (rk_drift_pos(a, &p).unwrap(), rk_variance(a, &p).unwrap(), rk_drift_neg(a, &p).unwrap());
        prop_assert!((mh - mt - 1.0).abs() < 1e-12);
        prop_assert!((mt + p.beta1 * v).abs() < 1e-12);
    }
}

#[test]
fn drivers_are_reproducible() {
    let a = driver(77, 1000, 1e-3, 2.0);
    let b = driver(77, 1000, 1e-3, 2.0);
    assert_eq!(a, b);
    let c = driver(78, 1000, 1e-3, 2.0);
    assert_ne!(a.values(), c.values());
}

#[test]
fn reversed_drifts_reproduce_forward_solution() {
    let b = driver(13, 2000, 1e-3, 1.0);
    let p = ModelParams::new(-1.0, 1.5).with_start(0.0, 0.01);
    let fwd = solve(&p, &b, Scheme::Maximal).unwrap();
    let rb = time_reverse(&b);
    let q = ModelParams::new(1.0, -1.5).with_start(rb.t_start(), *fwd.base.values().last().unwrap());
    let back = time_reverse(&solve(&q, &rb, Scheme::Maximal).unwrap().base);
    let gap = back.values().iter().zip(fwd.base.values()).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    assert!(gap < 1e-9, "gap {gap}");
    assert_eq!(back.kind, PathKind::Solution);
}
