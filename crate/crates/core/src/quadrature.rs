//! Adaptive Gauss-Kronrod (7/15) quadrature.

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [0.129_484_966_168_869_7, 0.279_705_391_489_276_7, 0.381_830_050_505_118_9, 0.417_959_183_673_469_4];

const MAX_INTERVALS: usize = 4000;

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for j in 0..7 {
        let fx = f(c - h * XGK[j]) + f(c + h * XGK[j]);
        k += WGK[j] * fx;
        if j % 2 == 1 {
            g += WG[j / 2] * fx;
        }
    }
    (k * h, (k - g).abs() * h)
}

struct Piece {
    a: f64,
    b: f64,
    v: f64,
    err: f64,
}

impl PartialEq for Piece {
    fn eq(&self, o: &Self) -> bool {
        self.err == o.err
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Piece {
    fn cmp(&self, o: &Self) -> std::cmp::Ordering {
        self.err.total_cmp(&o.err)
    }
}

/// Integral of `f` over [a, b] to absolute tolerance `abs_tol` or relative `rel_tol`.
/// Globally adaptive: the subinterval with the largest error estimate is bisected.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let (v, err) = gk15(&f, a, b);
    let mut heap = std::collections::BinaryHeap::new();
    heap.push(Piece { a, b, v, err });
    let (mut total, mut total_err) = (v, err);
    loop {
        if !total.is_finite() || !total_err.is_finite() {
            return Err(Error::Numerical(format!("quadrature on [{a}, {b}] produced a non-finite value")));
        }
        if total_err <= abs_tol.max(rel_tol * total.abs()) || total_err <= 1e-15 * total.abs() {
            // re-sum to shed accumulated rounding from the running updates
            return Ok(heap.iter().map(|p| p.v).sum());
        }
        if heap.len() >= MAX_INTERVALS {
            return Err(Error::Numerical(format!(
                "quadrature did not converge on [{a}, {b}]: estimate {total}, error {total_err}"
            )));
        }
        let p = heap.pop().unwrap();
        let m = 0.5 * (p.a + p.b);
        if m <= p.a || m >= p.b {
            // interval cannot be split further; keep what we have
            heap.push(Piece { err: 0.0, ..p });
            total_err -= p.err;
            continue;
        }
        let (lv, le) = gk15(&f, p.a, m);
        let (rv, re) = gk15(&f, m, p.b);
        total += lv + rv - p.v;
        total_err += le + re - p.err;
        heap.push(Piece { a: p.a, b: m, v: lv, err: le });
        heap.push(Piece { a: m, b: p.b, v: rv, err: re });
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomials_and_exponentials() {
        let v = integrate(|x| x * x, 0.0, 3.0, 1e-13, 0.0).unwrap();
        assert!((v - 9.0).abs() < 1e-12);
        let v = integrate(|x: f64| (-x).exp(), 0.0, 50.0, 1e-14, 0.0).unwrap();
        assert!((v - (1.0 - (-50.0f64).exp())).abs() < 1e-13);
        let v = integrate(|x: f64| x.sqrt(), 0.0, 1.0, 1e-12, 0.0).unwrap();
        assert!((v - 2.0 / 3.0).abs() < 1e-11);
    }
}
