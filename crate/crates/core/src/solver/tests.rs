use super::*;
use crate::paths::{sample_brownian, time_reverse, GridSpec};
use crate::rng::Seed;

fn example_2_8(beta2: f64) -> SampledPath {
    SampledPath::new(vec![-1.0, 0.0, 1.0, 3.0], vec![0.0, 0.0, 1.0 + beta2, 1.0 + beta2], PathKind::Unlabeled).unwrap()
}

fn brownian(t: f64, n: usize, seed: u64) -> SampledPath {
    sample_brownian(GridSpec::new(0.0, t, n).unwrap(), 1.0, Seed::new(seed)).unwrap()
}

#[test]
fn example_2_8_maximal_is_x1() {
    let p = ModelParams::new(-1.0, 1.0).with_start(0.0, 1.0);
    let sol = solve(&p, &example_2_8(1.0), Scheme::Maximal).unwrap();
    assert_eq!(sol.base.times(), &[0.0, 1.0, 3.0]);
    assert_eq!(sol.base.values(), &[1.0, 2.0, 4.0]);
    for t in [0.25, 0.5, 1.7, 2.9] {
        assert_eq!(sol.eval(t).unwrap(), 1.0 + t);
    }
    assert_eq!(sol.contact_set, vec![(1.0, 1.0)]);
}

#[test]
fn example_2_8_minimal() {
    let beta2 = 1.0;
    let p = ModelParams::new(-1.0, beta2).with_start(0.0, 1.0);
    let sol = solve(&p, &example_2_8(beta2), Scheme::Minimal).unwrap();
    let expect = |t: f64| if t <= 1.0 { 1.0 + beta2 * t } else { 1.0 + beta2 - (t - 1.0) };
    for (t, x) in sol.base.times().iter().zip(sol.base.values()) {
        assert_eq!(*x, expect(*t));
    }
}

#[test]
fn equal_drifts_give_a_line() {
    let d = brownian(2.0, 400, 4);
    let p = ModelParams::new(0.7, 0.7).with_start(0.0, 0.05);
    let sol = solve(&p, &d, Scheme::Maximal).unwrap();
    for (t, x) in sol.base.times().iter().zip(sol.base.values()) {
        assert!((x - (0.05 + 0.7 * t)).abs() < 1e-12);
    }
}

#[test]
fn driver_must_cover_t0() {
    let d = brownian(1.0, 10, 1);
    let p = ModelParams::new(-1.0, 1.0).with_start(2.0, 0.0);
    assert!(matches!(solve(&p, &d, Scheme::Maximal), Err(Error::Domain(_))));
    let p = ModelParams::new(-1.0, 1.0).with_alpha(1.0, 0.0);
    assert!(solve(&p, &d, Scheme::Maximal).is_err());
}

#[test]
fn general_reduces_to_exact() {
    let d = brownian(1.0, 1000, 8);
    let p = ModelParams::new(-1.0, 2.0).with_start(0.0, 0.1);
    let a = solve(&p, &d, Scheme::Maximal).unwrap();
    let b = solve_general(&p, &d, 1e-10).unwrap();
    for (x, y) in a.base.values().iter().zip(b.base.values()) {
        assert!((x - y).abs() < 1e-10);
    }
}

#[test]
fn linear_side_decays_exponentially() {
    let d = SampledPath::new(vec![0.0, 5.0], vec![0.0, 0.0], PathKind::Unlabeled).unwrap();
    let grid = GridSpec::new(0.0, 5.0, 50).unwrap();
    let fine = SampledPath::new(grid.times(), vec![0.0; 51], PathKind::Unlabeled).unwrap();
    let p = ModelParams::new(1.0, -1.0).with_alpha(1.0, 1.0).with_start(0.0, 1.0);
    for drv in [&d, &fine] {
        let sol = solve_general(&p, drv, 1e-12).unwrap();
        for (t, x) in sol.base.times().iter().zip(sol.base.values()) {
            assert!((x - (-t).exp()).abs() < 1e-9, "t={t} x={x}");
        }
    }
}

#[test]
fn maximal_departure_from_flat_driver() {
    let d = SampledPath::new(vec![0.0, 1.0, 2.0], vec![0.0; 3], PathKind::Unlabeled).unwrap();
    let p = ModelParams::new(-1.0, 1.0);
    let sol = solve_general(&p, &d, 1e-10).unwrap();
    assert_eq!(sol.base.values(), &[0.0, 1.0, 2.0]);
    let sol = solve_general(&p.with_alpha(0.5, 0.5), &d, 1e-10).unwrap();
    assert!(sol.base.values().iter().all(|v| v.abs() < 1e-12));
}

#[test]
fn smoothed_above_band_is_a_line() {
    let d = SampledPath::new(vec![0.0, 1.0, 2.0], vec![0.0, 0.1, -0.2], PathKind::Unlabeled).unwrap();
    let p = ModelParams::new(-3.0, 1.0).with_start(0.0, 1.0);
    let sol = solve_smoothed(&p, &d, 0.05).unwrap();
    for (t, x) in sol.base.times().iter().zip(sol.base.values()) {
        assert!((x - (1.0 + t)).abs() < 1e-14);
    }
}

#[test]
fn smoothed_initial_slope_is_mean_drift() {
    let dt = 1e-6;
    let d = SampledPath::new(vec![0.0, dt], vec![0.0, 0.0], PathKind::Unlabeled).unwrap();
    for (b1, b2) in [(-1.0, 2.0), (1.5, -0.5), (0.3, 0.9)] {
        let sol = solve_smoothed(&ModelParams::new(b1, b2), &d, 0.1).unwrap();
        let slope = sol.base.values()[1] / dt;
        assert!((slope - 0.5 * (b1 + b2)).abs() < 1e-4, "{slope}");
    }
}

#[test]
fn smoothed_converges_on_brownian_fixture() {
    let d = brownian(2.0, 20_000, 21);
    let p = ModelParams::new(1.0, -1.0).with_start(0.0, 0.2);
    let tab = convergence_study(&p, &d, &[0.2, 0.1, 0.05, 0.025, 0.0125]).unwrap();
    assert!(tab.rows.iter().all(|r| r.sup_gap >= 0.0));
    assert!(tab.rows[4].sup_gap < tab.rows[0].sup_gap);
    assert!(tab.rows[4].sup_gap < 0.05);
    assert!(convergence_study(&p, &d, &[0.1, 0.2]).is_err());
}

#[test]
fn time_reversal_reproduces_forward_solution() {
    let d = brownian(2.0, 2000, 13);
    let p = ModelParams::new(-1.0, 1.0).with_start(0.0, 0.01);
    let fwd = solve(&p, &d, Scheme::Maximal).unwrap();
    assert!(fwd.contact_set.len() > 2, "{}", fwd.contact_set.len());
    let rd = time_reverse(&d);
    let rp = ModelParams::new(1.0, -1.0).with_start(-2.0, *fwd.base.values().last().unwrap());
    let back = solve(&rp, &rd, Scheme::Maximal).unwrap();
    let back = time_reverse(&back.base);
    for (a, b) in back.values().iter().zip(fwd.base.values()) {
        assert!((a - b).abs() < 1e-9, "{a} vs {b}");
    }
}

#[test]
fn push_scheme_matches_maximal() {
    let p = ModelParams::new(-1.0, 1.0).with_start(0.0, 1.0);
    let sol = solve_delta_push(&p, &example_2_8(1.0), 1e-3).unwrap();
    for (t, x) in sol.base.times().iter().zip(sol.base.values()) {
        assert!((x - (1.0 + t)).abs() < 1e-12);
    }
    for (b1, b2) in [(-1.0, 1.0), (1.0, -1.0), (-0.5, 2.0)] {
        let d = brownian(1.0, 10_000, 33);
        let p = ModelParams::new(b1, b2).with_start(0.0, 0.0);
        let max = solve(&p, &d, Scheme::Maximal).unwrap();
        let gap = |delta: f64| {
            let s = solve_delta_push(&p, &d, delta).unwrap();
            s.base.values().iter().zip(max.base.values()).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
        };
        let (g2, g3) = (gap(1e-2), gap(1e-3));
        assert!(g3 < g2 && g3 < 0.05, "({b1},{b2}): {g2} {g3}");
    }
}

#[test]
fn maximal_dominates_minimal_and_agree_on_brownian() {
    let d = brownian(1.0, 5000, 2);
    for (b1, b2) in [(-1.0, 1.0), (2.0, 1.0), (1.0, -1.0)] {
        let p = ModelParams::new(b1, b2);
        let hi = solve(&p, &d, Scheme::Maximal).unwrap();
        let lo = solve(&p, &d, Scheme::Minimal).unwrap();
        for (a, b) in hi.base.values().iter().zip(lo.base.values()) {
            assert!(a >= b);
        }
        let end_gap = hi.base.values().last().unwrap() - lo.base.values().last().unwrap();
        assert!(end_gap >= 0.0);
    }
}

#[test]
fn flow_single_point_matches_solve() {
    let d = brownian(1.0, 1000, 6);
    let p = ModelParams::new(-1.0, 1.0).with_start(0.0, 0.1);
    let f = solve_flow(&p, &d, &[0.1], 0.77, true).unwrap();
    let s = solve(&p, &d, Scheme::Maximal).unwrap();
    assert_eq!(f.values[0], s.eval(0.77).unwrap());
    assert_eq!(f.paths[0], s);
    assert!(solve_flow(&p, &d, &[0.2, 0.1], 0.5, false).is_err());
}
