//! Closed-form values and quadratures used as oracles.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{config, Error, Result};
use crate::quadrature::integrate;
use crate::solver::ModelParams;

/// Value of `c y^p` beyond which exp(-c y^p) tails are dropped.
const TAIL_EXPONENT: f64 = 60.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateLambda {
    pub value: f64,
    pub alpha: f64,
    pub beta: f64,
    pub sigma2: f64,
}

fn check_side(alpha: f64, beta: f64, sigma2: f64) -> Result<()> {
    if !(alpha > -1.0) || !alpha.is_finite() {
        return config(format!("exponent must exceed -1, got {alpha}"));
    }
    if !(beta > 0.0) || !beta.is_finite() {
        return config(format!("drift magnitude must be positive, got {beta}"));
    }
    if !(sigma2 > 0.0) || !sigma2.is_finite() {
        return config(format!("sigma2 must be positive, got {sigma2}"));
    }
    Ok(())
}

/// Mass of excursions that never return, per unit local time, on a side whose
/// drift magnitude beta |y|^alpha points away from 0:
/// 1 / int_0^inf exp(-2 beta y^p / (sigma2 p)) dy with p = alpha + 1.
pub fn lambda_rate(alpha: f64, beta: f64, sigma2: f64) -> Result<RateLambda> {
    check_side(alpha, beta, sigma2)?;
    let p = alpha + 1.0;
    let value = (2.0 * beta / sigma2).powf(1.0 / p) * p.powf(alpha / p) / gamma(1.0 / p);
    Ok(RateLambda { value, alpha, beta, sigma2 })
}

/// Scale density exponent c with s(y) = exp(-c y^p).
fn scale_c(alpha: f64, beta: f64, sigma2: f64) -> f64 {
    2.0 * beta / (sigma2 * (alpha + 1.0))
}

fn tail_end(c: f64, p: f64, from: f64) -> f64 {
    (from.powf(p) + TAIL_EXPONENT / c).powf(1.0 / p)
}

/// int_y^inf exp(-c (z^p - y^p)) dz, i.e. T(y)/s(y).
fn tail_ratio(c: f64, p: f64, y: f64) -> Result<f64> {
    let yp = y.powf(p);
    let end = tail_end(c, p, y) - y;
    integrate(|u| (-c * ((y + u).powf(p) - yp)).exp(), 0.0, end, 1e-13, 1e-12)
}

/// 1 / lambda by direct quadrature of the scale density.
pub fn lambda_by_quadrature(alpha: f64, beta: f64, sigma2: f64) -> Result<f64> {
    check_side(alpha, beta, sigma2)?;
    let p = alpha + 1.0;
    let c = scale_c(alpha, beta, sigma2);
    Ok(1.0 / tail_ratio(c, p, 0.0)?)
}

/// Probability that Y started at height `y` on an away-drift side ever returns to 0.
pub fn return_probability(y: f64, alpha: f64, beta: f64, sigma2: f64) -> Result<f64> {
    check_side(alpha, beta, sigma2)?;
    if y <= 0.0 {
        return Ok(1.0);
    }
    if alpha == 0.0 {
        return Ok((-2.0 * beta * y / sigma2).exp());
    }
    let p = alpha + 1.0;
    let c = scale_c(alpha, beta, sigma2);
    let i0 = tail_ratio(c, p, 0.0)?;
    Ok((-c * y.powf(p)).exp() * tail_ratio(c, p, y)? / i0)
}

/// Expected lifetime of finite excursions per unit local time on one side.
///
/// `toward`: the drift pushes back to 0, every excursion is finite and
/// m = (2/sigma2) int_0^inf exp(-c y^p) dy. Otherwise only returning excursions
/// count and m = (2 / (sigma2 I0^2)) int_0^inf T(y)^2 / s(y) dy.
pub fn finite_excursion_lifetime(alpha: f64, beta: f64, sigma2: f64, toward: bool) -> Result<f64> {
    check_side(alpha, beta, sigma2)?;
    let p = alpha + 1.0;
    let c = scale_c(alpha, beta, sigma2);
    let i0 = tail_ratio(c, p, 0.0)?;
    if toward {
        return Ok(2.0 * i0 / sigma2);
    }
    let end = tail_end(c, p, 0.0);
    let err: std::cell::RefCell<Option<Error>> = Default::default();
    let v = integrate(
        |y| match tail_ratio(c, p, y) {
            Ok(j) => (-c * y.powf(p)).exp() * j * j,
            Err(e) => {
                err.borrow_mut().get_or_insert(e);
                f64::NAN
            }
        },
        0.0,
        end,
        1e-13,
        1e-11,
    );
    if let Some(e) = err.into_inner() {
        return Err(e);
    }
    Ok(2.0 * v? / (sigma2 * i0 * i0))
}

fn regime_error() -> Error {
    Error::Semantics(
        "beta1 >= 0 >= beta2: both drifts point toward the driver, X stays near B and never bifurcates".into(),
    )
}

/// Probability that X ends up below B for beta1 < 0 < beta2.
pub fn p_negative_bifurcation(params: &ModelParams) -> Result<f64> {
    params.validate()?;
    if params.beta1 >= 0.0 && params.beta2 <= 0.0 {
        return Err(regime_error());
    }
    if !(params.beta1 < 0.0 && params.beta2 > 0.0) {
        return Err(Error::Semantics(format!(
            "drifts ({}, {}) have one sign: the bifurcation direction is certain (negative iff both are negative)",
            params.beta1, params.beta2
        )));
    }
    let l1 = lambda_rate(params.alpha1, -params.beta1, params.sigma2)?.value;
    let l2 = lambda_rate(params.alpha2, params.beta2, params.sigma2)?.value;
    Ok(l1 / (l1 + l2))
}

/// Expected bifurcation time from a start on the driver.
pub fn expected_bifurcation_time(params: &ModelParams) -> Result<f64> {
    params.validate()?;
    let (b1, b2, s2) = (params.beta1, params.beta2, params.sigma2);
    if b1 >= 0.0 && b2 <= 0.0 {
        return Err(regime_error());
    }
    if params.is_alpha_zero() {
        return Ok(if b1 < 0.0 && b2 > 0.0 {
            s2 / (2.0 * (b1 * b2).abs())
        } else if b1 > 0.0 {
            s2 * (b1 + b2) / (2.0 * b1 * b2 * b2)
        } else {
            s2 * (b1.abs() + b2.abs()) / (2.0 * b2.abs() * b1 * b1)
        });
    }
    expected_bifurcation_time_quadrature(params)
}

/// The general-exponent branch: (m1 + m2) / (sum of lambdas over away sides).
pub fn expected_bifurcation_time_quadrature(params: &ModelParams) -> Result<f64> {
    params.validate()?;
    let (b1, b2, s2) = (params.beta1, params.beta2, params.sigma2);
    if b1 >= 0.0 && b2 <= 0.0 {
        return Err(regime_error());
    }
    let away1 = b1 < 0.0;
    let away2 = b2 > 0.0;
    let m1 = finite_excursion_lifetime(params.alpha1, b1.abs(), s2, !away1)?;
    let m2 = finite_excursion_lifetime(params.alpha2, b2.abs(), s2, !away2)?;
    let mut lam = 0.0;
    if away1 {
        lam += lambda_by_quadrature(params.alpha1, b1.abs(), s2)?;
    }
    if away2 {
        lam += lambda_by_quadrature(params.alpha2, b2.abs(), s2)?;
    }
    Ok((m1 + m2) / lam)
}

/// Mean of L at the bifurcation when started on the driver (exponential law).
pub fn terminal_local_time_mean(params: &ModelParams) -> Result<f64> {
    params.validate()?;
    let (b1, b2) = (params.beta1, params.beta2);
    if b1 >= 0.0 && b2 <= 0.0 {
        return Err(regime_error());
    }
    let mut lam = 0.0;
    if b1 < 0.0 {
        lam += lambda_rate(params.alpha1, -b1, params.sigma2)?.value;
    }
    if b2 > 0.0 {
        lam += lambda_rate(params.alpha2, b2, params.sigma2)?.value;
    }
    Ok(1.0 / lam)
}

/// Long-run L_T / T for beta1 > 0 > beta2.
pub fn local_time_rate(params: &ModelParams) -> Result<f64> {
    params.validate()?;
    if !(params.beta1 > 0.0 && params.beta2 < 0.0) || !params.is_alpha_zero() {
        return Err(Error::Semantics("the long-run local-time rate needs beta1 > 0 > beta2 and alpha = 0".into()));
    }
    Ok(1.0 / (1.0 / params.beta1 + 1.0 / -params.beta2))
}

/// Excursions per unit local time reaching height h on a side with drift
/// magnitude `beta` toward 0 (negative `beta` for away).
pub fn excursion_height_rate(beta: f64, h: f64, sigma2: f64) -> f64 {
    let k = 2.0 * beta / sigma2;
    if k == 0.0 {
        return 1.0 / h;
    }
    k / (k * h).exp_m1()
}

/// Density of excursion lifetimes per unit local time, one side.
pub fn lifetime_density(t: f64, beta: f64, sigma2: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    (-beta * beta * t / (2.0 * sigma2)).exp() / (sigma2.sqrt() * t.powf(1.5) * (2.0 * std::f64::consts::PI).sqrt())
}

fn check_rk(params: &ModelParams) -> Result<()> {
    params.validate()?;
    if !(params.beta1 > 0.0 && params.beta2 > 0.0 && params.beta1 > params.beta2) {
        return Err(Error::Semantics(format!(
            "the local-time profile diffusion needs beta1 > beta2 > 0, got ({}, {})",
            params.beta1, params.beta2
        )));
    }
    Ok(())
}

fn rk_exp(a: f64, p: &ModelParams) -> f64 {
    (-2.0 * a * (p.beta1 - p.beta2) / p.sigma2).exp()
}

/// Drift of x -> L^x for x >= 0.
pub fn rk_drift_pos(a: f64, params: &ModelParams) -> Result<f64> {
    check_rk(params)?;
    let d = params.beta1 - params.beta2;
    Ok(-(params.beta1 / d) * -(-2.0 * a * d / params.sigma2).exp_m1())
}

/// Variance rate of x -> L^x.
pub fn rk_variance(a: f64, params: &ModelParams) -> Result<f64> {
    check_rk(params)?;
    let d = params.beta1 - params.beta2;
    Ok(-(-2.0 * a * d / params.sigma2).exp_m1() / d)
}

/// Drift of x -> L^{-x} for x >= 0.
pub fn rk_drift_neg(a: f64, params: &ModelParams) -> Result<f64> {
    check_rk(params)?;
    let d = params.beta1 - params.beta2;
    Ok(-params.beta2 / d + params.beta1 / d * rk_exp(a, params))
}

/// d X^y_t / dy as a function of the local time L^y_t.
pub fn flow_derivative(l: f64, params: &ModelParams) -> Result<f64> {
    check_rk(params)?;
    if l < 0.0 {
        return config("local time must be nonnegative");
    }
    Ok(rk_exp(l, params))
}

/// Stationary density of B - X* (double exponential).
pub fn stationary_density(y: f64, beta: f64, sigma2: f64) -> f64 {
    beta / sigma2 * (-2.0 * beta * y.abs() / sigma2).exp()
}

pub fn stationary_cdf(y: f64, beta: f64, sigma2: f64) -> f64 {
    let e = 0.5 * (-2.0 * beta * y.abs() / sigma2).exp();
    if y < 0.0 {
        e
    } else {
        1.0 - e
    }
}

/// P(Z+_0 - B_0 < a).
pub fn zplus_cdf(a: f64, beta: f64, sigma2: f64) -> f64 {
    if a <= 0.0 {
        return 0.0;
    }
    let q = -(-2.0 * a * beta / sigma2).exp_m1();
    q * q
}

/// E|B - X*|.
pub fn mean_abs_gap(beta: f64, sigma2: f64) -> f64 {
    sigma2 / (2.0 * beta)
}

/// E(Z+ - B) = E(B - Z-).
pub fn mean_envelope_gap(beta: f64, sigma2: f64) -> f64 {
    0.75 * sigma2 / beta
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyticsTable {
    pub params: ModelParams,
    pub lambda1: Option<f64>,
    pub lambda2: Option<f64>,
    pub p_negative: Option<f64>,
    pub expected_bifurcation_time: Option<f64>,
    pub terminal_local_time_mean: Option<f64>,
    pub local_time_rate: Option<f64>,
    pub mean_abs_gap: Option<f64>,
    pub mean_envelope_gap: Option<f64>,
    pub rk_drift_pos_at_mean: Option<f64>,
    pub rk_variance_at_mean: Option<f64>,
    pub rk_drift_neg_at_mean: Option<f64>,
}

/// Every formula that applies to `params`.
pub fn table(params: &ModelParams) -> Result<AnalyticsTable> {
    params.validate()?;
    let (b1, b2, s2) = (params.beta1, params.beta2, params.sigma2);
    let lam1 = (b1 < 0.0).then(|| lambda_rate(params.alpha1, -b1, s2).map(|r| r.value)).transpose()?;
    let lam2 = (b2 > 0.0).then(|| lambda_rate(params.alpha2, b2, s2).map(|r| r.value)).transpose()?;
    let sym = (params.is_alpha_zero() && b1 == -b2 && b2 > 0.0).then_some(b2);
    let lmean = terminal_local_time_mean(params).ok();
    Ok(AnalyticsTable {
        params: *params,
        lambda1: lam1,
        lambda2: lam2,
        p_negative: p_negative_bifurcation(params).ok(),
        expected_bifurcation_time: expected_bifurcation_time(params).ok(),
        terminal_local_time_mean: lmean,
        local_time_rate: local_time_rate(params).ok(),
        mean_abs_gap: sym.map(|b| mean_abs_gap(b, s2)),
        mean_envelope_gap: sym.map(|b| mean_envelope_gap(b, s2)),
        rk_drift_pos_at_mean: lmean.and_then(|a| rk_drift_pos(a, params).ok()),
        rk_variance_at_mean: lmean.and_then(|a| rk_variance(a, params).ok()),
        rk_drift_neg_at_mean: lmean.and_then(|a| rk_drift_neg(a, params).ok()),
    })
}
