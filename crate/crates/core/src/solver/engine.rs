//! Steppers for Y = B - X over one linear driver segment at a time.
//!
//! Within a segment the driver has constant slope `s`, so Y obeys the autonomous
//! scalar ODE dY/dt = s - F(Y). Every stepper reports the motion of Y as a chain of
//! pieces on which Y is (treated as) linear.

use crate::paths::DriverSource;

pub const Y_FLOOR: f64 = 1e-12;

/// Position of X relative to the driver.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// X < B, Y > 0.
    Under,
    /// X > B, Y < 0.
    Over,
    On,
}

impl Side {
    pub fn of(y: f64) -> Side {
        if y > 0.0 {
            Side::Under
        } else if y < 0.0 {
            Side::Over
        } else {
            Side::On
        }
    }
}

pub trait Observer {
    fn piece(&mut self, t0: f64, t1: f64, y0: f64, y1: f64);
}

impl Observer for () {
    fn piece(&mut self, _: f64, _: f64, _: f64, _: f64) {}
}

impl<A: Observer, B: Observer> Observer for (A, B) {
    fn piece(&mut self, t0: f64, t1: f64, y0: f64, y1: f64) {
        self.0.piece(t0, t1, y0, y1);
        self.1.piece(t0, t1, y0, y1);
    }
}

impl<A: Observer, B: Observer, C: Observer> Observer for (A, B, C) {
    fn piece(&mut self, t0: f64, t1: f64, y0: f64, y1: f64) {
        self.0.piece(t0, t1, y0, y1);
        self.1.piece(t0, t1, y0, y1);
        self.2.piece(t0, t1, y0, y1);
    }
}

impl<T: Observer + ?Sized> Observer for &mut T {
    fn piece(&mut self, t0: f64, t1: f64, y0: f64, y1: f64) {
        (**self).piece(t0, t1, y0, y1);
    }
}

pub trait YStepper {
    fn t(&self) -> f64;
    fn y(&self) -> f64;
    /// Advance from the current time to `t1` under driver slope `s`.
    fn advance<O: Observer>(&mut self, t1: f64, s: f64, obs: &mut O);
    /// Side currently occupied, for escape decisions.
    fn side(&self) -> Side {
        Side::of(self.y())
    }
}

/// Feed every driver segment to the stepper. `at_node` runs after each node and
/// may stop the run by returning true. Returns whether the run was stopped.
pub fn drive<S, D, O, F>(st: &mut S, drv: &mut D, obs: &mut O, mut at_node: F) -> bool
where
    S: YStepper,
    D: DriverSource,
    O: Observer,
    F: FnMut(&S, f64, f64) -> bool,
{
    let (mut t0, mut b0) = drv.current();
    while let Some((t1, b1)) = drv.advance() {
        let s = (b1 - b0) / (t1 - t0);
        st.advance(t1, s, obs);
        if at_node(st, t1, b1) {
            return true;
        }
        t0 = t1;
        b0 = b1;
    }
    false
}

/// Contact rule: `None` means the fields point at each other and X slides along B.
fn depart(can_under: bool, can_over: bool, maximal: bool) -> Option<Side> {
    match (can_under, can_over) {
        (true, true) => Some(if maximal { Side::Over } else { Side::Under }),
        (true, false) => Some(Side::Under),
        (false, true) => Some(Side::Over),
        (false, false) => None,
    }
}

/// Linear motion of Y with velocity `v` away from / toward zero on one side.
/// Returns the new (t, y, hit_zero).
#[inline]
fn linear_side<O: Observer>(t: f64, y: f64, v: f64, t1: f64, under: bool, obs: &mut O) -> (f64, f64, bool) {
    let rem = t1 - t;
    let y1 = y + v * rem;
    let toward = if under { v < 0.0 } else { v > 0.0 };
    let reaches = if under { y1 <= 0.0 } else { y1 >= 0.0 };
    if !toward || !reaches {
        obs.piece(t, t1, y, y1);
        return (t1, y1, false);
    }
    let th = if y1 == 0.0 { t1 } else { (t + y / -v).min(t1) };
    obs.piece(t, th, y, 0.0);
    (th, 0.0, true)
}

/// Event-exact stepper for alpha1 = alpha2 = 0.
#[derive(Debug, Clone)]
pub struct ExactStepper {
    beta1: f64,
    beta2: f64,
    maximal: bool,
    t: f64,
    y: f64,
    side: Side,
}

impl ExactStepper {
    pub fn new(beta1: f64, beta2: f64, maximal: bool, t0: f64, y0: f64) -> Self {
        ExactStepper { beta1, beta2, maximal, t: t0, y: y0, side: Side::of(y0) }
    }
}

impl YStepper for ExactStepper {
    fn t(&self) -> f64 {
        self.t
    }

    fn y(&self) -> f64 {
        self.y
    }

    fn side(&self) -> Side {
        self.side
    }

    fn advance<O: Observer>(&mut self, t1: f64, s: f64, obs: &mut O) {
        while self.t < t1 {
            match self.side {
                Side::On => match depart(s > self.beta1, s < self.beta2, self.maximal) {
                    Some(side) => self.side = side,
                    None => {
                        obs.piece(self.t, t1, 0.0, 0.0);
                        self.t = t1;
                    }
                },
                side => {
                    let under = side == Side::Under;
                    let v = s - if under { self.beta1 } else { self.beta2 };
                    let (t, y, hit) = linear_side(self.t, self.y, v, t1, under, obs);
                    self.t = t;
                    self.y = y;
                    if hit {
                        self.side = Side::On;
                    }
                }
            }
        }
    }
}

/// The delta-approximate construction: at every contact X is pushed upward with
/// slope max(|beta1|, |beta2|) for a duration delta, then follows its side.
#[derive(Debug, Clone)]
pub struct PushStepper {
    beta1: f64,
    beta2: f64,
    bmax: f64,
    delta: f64,
    t: f64,
    y: f64,
    side: Side,
    push_until: Option<f64>,
}

impl PushStepper {
    pub fn new(beta1: f64, beta2: f64, delta: f64, t0: f64, y0: f64) -> Self {
        let mut p = PushStepper {
            beta1,
            beta2,
            bmax: beta1.abs().max(beta2.abs()),
            delta,
            t: t0,
            y: y0,
            side: Side::of(y0),
            push_until: None,
        };
        if p.side == Side::On {
            p.push_until = Some(t0 + delta);
        }
        p
    }
}

impl YStepper for PushStepper {
    fn t(&self) -> f64 {
        self.t
    }

    fn y(&self) -> f64 {
        self.y
    }

    fn advance<O: Observer>(&mut self, t1: f64, s: f64, obs: &mut O) {
        while self.t < t1 {
            if let Some(end) = self.push_until {
                let te = end.min(t1);
                let y1 = self.y + (s - self.bmax) * (te - self.t);
                obs.piece(self.t, te, self.y, y1);
                self.t = te;
                self.y = y1;
                if te == end {
                    self.side = Side::of(y1);
                    self.push_until = if self.side == Side::On { Some(end + self.delta) } else { None };
                }
                continue;
            }
            let under = self.side == Side::Under;
            let v = s - if under { self.beta1 } else { self.beta2 };
            let (t, y, hit) = linear_side(self.t, self.y, v, t1, under, obs);
            self.t = t;
            self.y = y;
            if hit {
                self.side = Side::On;
                self.push_until = Some(t + self.delta);
            }
        }
    }
}

/// The continuous blend f_eps: slope beta1 for Y > eps, beta2 for Y < -eps, linear
/// in between. Inside the band Y' = a + kY is solved in closed form.
#[derive(Debug, Clone)]
pub struct SmoothedStepper {
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: f64,
    y: f64,
}

impl SmoothedStepper {
    pub fn new(beta1: f64, beta2: f64, eps: f64, t0: f64, y0: f64) -> Self {
        SmoothedStepper { beta1, beta2, eps, t: t0, y: y0 }
    }
}

impl YStepper for SmoothedStepper {
    fn t(&self) -> f64 {
        self.t
    }

    fn y(&self) -> f64 {
        self.y
    }

    fn advance<O: Observer>(&mut self, t1: f64, s: f64, obs: &mut O) {
        let eps = self.eps;
        let k = (self.beta2 - self.beta1) / (2.0 * eps);
        let a = s - 0.5 * (self.beta1 + self.beta2);
        let (vu, vo) = (s - self.beta1, s - self.beta2);
        while self.t < t1 {
            let (t, y) = (self.t, self.y);
            let rem = t1 - t;
            if y > eps || (y == eps && vu >= 0.0) {
                let y1 = y + vu * rem;
                if vu < 0.0 && y1 < eps {
                    let th = (t + (y - eps) / -vu).min(t1);
                    obs.piece(t, th, y, eps);
                    self.t = th;
                    self.y = eps;
                } else {
                    obs.piece(t, t1, y, y1);
                    self.t = t1;
                    self.y = y1;
                }
            } else if y < -eps || (y == -eps && vo <= 0.0) {
                let y1 = y + vo * rem;
                if vo > 0.0 && y1 > -eps {
                    let th = (t + (-eps - y) / vo).min(t1);
                    obs.piece(t, th, y, -eps);
                    self.t = th;
                    self.y = -eps;
                } else {
                    obs.piece(t, t1, y, y1);
                    self.t = t1;
                    self.y = y1;
                }
            } else {
                let v0 = a + k * y;
                let edge = if v0 > 0.0 { eps } else { -eps };
                let exit = if v0 == 0.0 {
                    f64::INFINITY
                } else if k == 0.0 {
                    (edge - y) / v0
                } else {
                    let c = a / k;
                    let tau = ((edge + c) / (y + c)).ln() / k;
                    if tau.is_finite() && tau >= 0.0 { tau } else { f64::INFINITY }
                };
                if exit <= rem {
                    let th = (t + exit).min(t1);
                    obs.piece(t, th, y, edge);
                    self.t = th;
                    self.y = edge;
                } else {
                    let y1 = if k == 0.0 {
                        y + a * rem
                    } else {
                        let c = a / k;
                        ((y + c) * (k * rem).exp() - c).clamp(-eps, eps)
                    };
                    obs.piece(t, t1, y, y1);
                    self.t = t1;
                    self.y = y1;
                }
            }
        }
    }
}

/// Drift law on one side: F = beta * |Y|^alpha.
#[derive(Debug, Clone, Copy)]
pub struct SideLaw {
    pub beta: f64,
    pub alpha: f64,
}

impl SideLaw {
    /// Returns F(|y|) and whether the floor clamp was used.
    #[inline]
    fn f(&self, ay: f64) -> (f64, bool) {
        if self.alpha == 0.0 {
            (self.beta, false)
        } else if self.alpha > 0.0 {
            (self.beta * ay.max(0.0).powf(self.alpha), false)
        } else if ay < Y_FLOOR {
            (self.beta * Y_FLOOR.powf(self.alpha), true)
        } else {
            (self.beta * ay.powf(self.alpha), false)
        }
    }

    fn at_zero(&self) -> f64 {
        self.f(0.0).0
    }
}

const GL_NODES: [f64; 8] = [
    0.095_012_509_837_637_44,
    0.281_603_550_779_258_9,
    0.458_016_777_657_227_4,
    0.617_876_244_402_643_7,
    0.755_404_408_355_003,
    0.865_631_202_387_831_8,
    0.944_575_023_073_232_6,
    0.989_400_934_991_649_9,
];
const GL_WEIGHTS: [f64; 8] = [
    0.189_450_610_455_068_5,
    0.182_603_415_044_923_6,
    0.169_156_519_395_002_5,
    0.149_595_988_816_576_7,
    0.124_628_971_255_533_9,
    0.095_158_511_682_492_8,
    0.062_253_523_938_647_9,
    0.027_152_459_411_754_1,
];

/// Adaptive Dormand-Prince integration for general exponents.
#[derive(Debug, Clone)]
pub struct GeneralStepper {
    under: SideLaw,
    over: SideLaw,
    maximal: bool,
    tol: f64,
    t: f64,
    y: f64,
    side: Side,
    h: f64,
    clamping: bool,
    pub singular_episodes: usize,
}

impl GeneralStepper {
    pub fn new(under: SideLaw, over: SideLaw, maximal: bool, tol: f64, t0: f64, y0: f64) -> Self {
        GeneralStepper {
            under,
            over,
            maximal,
            tol,
            t: t0,
            y: y0,
            side: Side::of(y0),
            h: f64::INFINITY,
            clamping: false,
            singular_episodes: 0,
        }
    }

    fn note_clamp(&mut self, clamped: bool) {
        if clamped && !self.clamping {
            self.singular_episodes += 1;
        }
        self.clamping = clamped;
    }

    #[inline]
    fn rate(&self, under: bool, y: f64, s: f64) -> (f64, bool) {
        if under {
            let (f, c) = self.under.f(y);
            (s - f, c)
        } else {
            let (f, c) = self.over.f(-y);
            (s - f, c)
        }
    }

    /// One Dormand-Prince 5(4) step; returns (y5, error estimate, clamped).
    fn dp45(&self, under: bool, y: f64, s: f64, h: f64) -> (f64, f64, bool) {
        let mut cl = false;
        let mut r = |y: f64| {
            let (v, c) = self.rate(under, y, s);
            cl |= c;
            v
        };
        let k1 = r(y);
        let k2 = r(y + h * (k1 / 5.0));
        let k3 = r(y + h * (3.0 / 40.0 * k1 + 9.0 / 40.0 * k2));
        let k4 = r(y + h * (44.0 / 45.0 * k1 - 56.0 / 15.0 * k2 + 32.0 / 9.0 * k3));
        let k5 = r(y + h * (19372.0 / 6561.0 * k1 - 25360.0 / 2187.0 * k2 + 64448.0 / 6561.0 * k3 - 212.0 / 729.0 * k4));
        let k6 = r(y + h
            * (9017.0 / 3168.0 * k1 - 355.0 / 33.0 * k2 + 46732.0 / 5247.0 * k3 + 49.0 / 176.0 * k4
                - 5103.0 / 18656.0 * k5));
        let y5 = y + h
            * (35.0 / 384.0 * k1 + 500.0 / 1113.0 * k3 + 125.0 / 192.0 * k4 - 2187.0 / 6784.0 * k5
                + 11.0 / 84.0 * k6);
        let k7 = r(y5);
        let err = h
            * (71.0 / 57600.0 * k1 - 71.0 / 16695.0 * k3 + 71.0 / 1920.0 * k4 - 17253.0 / 339200.0 * k5
                + 22.0 / 525.0 * k6
                - 1.0 / 40.0 * k7);
        (y5, err.abs(), cl)
    }

    /// Time for Y to travel from `y` to 0 on the current side.
    fn time_to_zero(&self, under: bool, y: f64, s: f64) -> f64 {
        let half = 0.5 * y;
        let mut acc = 0.0;
        for (x, w) in GL_NODES.iter().zip(GL_WEIGHTS) {
            for u in [half * (1.0 - x), half * (1.0 + x)] {
                acc += w / self.rate(under, u, s).0;
            }
        }
        -half * acc
    }

    fn step_side<O: Observer>(&mut self, t1: f64, s: f64, obs: &mut O) {
        let under = self.side == Side::Under;
        let law = if under { self.under } else { self.over };
        if law.alpha == 0.0 {
            let (t, y, hit) = linear_side(self.t, self.y, s - law.beta, t1, under, obs);
            self.t = t;
            self.y = y;
            if hit {
                self.side = Side::On;
            }
            return;
        }
        while self.t < t1 {
            let rem = t1 - self.t;
            let h = self.h.min(rem);
            let (y5, err, cl) = self.dp45(under, self.y, s, h);
            let h_min = 1e-14 * (1.0 + self.t.abs());
            if err > self.tol && h > h_min {
                self.h = h * (0.9 * (self.tol / err).powf(0.2)).clamp(0.1, 0.9);
                continue;
            }
            self.note_clamp(cl || err > self.tol);
            let grow = if err == 0.0 { 5.0 } else { (0.9 * (self.tol / err).powf(0.2)).clamp(0.2, 5.0) };
            let crossed = if under { y5 <= 0.0 } else { y5 >= 0.0 };
            if crossed {
                let tau = self.time_to_zero(under, self.y, s).clamp(0.0, h);
                let th = if h == rem && tau >= h { t1 } else { self.t + tau };
                obs.piece(self.t, th, self.y, 0.0);
                self.t = th;
                self.y = 0.0;
                self.side = Side::On;
                return;
            }
            let te = if h == rem { t1 } else { self.t + h };
            obs.piece(self.t, te, self.y, y5);
            self.t = te;
            self.y = y5;
            if h < rem || grow < 1.0 {
                self.h = h * grow;
            }
        }
    }
}

impl YStepper for GeneralStepper {
    fn t(&self) -> f64 {
        self.t
    }

    fn y(&self) -> f64 {
        self.y
    }

    fn side(&self) -> Side {
        self.side
    }

    fn advance<O: Observer>(&mut self, t1: f64, s: f64, obs: &mut O) {
        while self.t < t1 {
            if self.side == Side::On {
                let fu = self.under.at_zero();
                let fo = self.over.at_zero();
                let singular = (self.under.alpha < 0.0) || (self.over.alpha < 0.0);
                match depart(s - fu > 0.0, s - fo < 0.0, self.maximal) {
                    Some(side) => {
                        self.side = side;
                        self.h = self.h.min(t1 - self.t);
                    }
                    None => {
                        self.note_clamp(singular);
                        obs.piece(self.t, t1, 0.0, 0.0);
                        self.t = t1;
                    }
                }
            } else {
                self.step_side(t1, s, obs);
            }
        }
    }
}

/// Records the contact set as closed intervals (degenerate for isolated touches).
#[derive(Debug, Default, Clone)]
pub struct ContactRecorder {
    pub intervals: Vec<(f64, f64)>,
    open: Option<(f64, f64)>,
}

impl ContactRecorder {
    fn touch(&mut self, a: f64, b: f64) {
        match &mut self.open {
            Some(o) if o.1 >= a => o.1 = o.1.max(b),
            _ => {
                if let Some(o) = self.open.take() {
                    self.intervals.push(o);
                }
                self.open = Some((a, b));
            }
        }
    }

    pub fn finish(mut self) -> Vec<(f64, f64)> {
        if let Some(o) = self.open.take() {
            self.intervals.push(o);
        }
        self.intervals
    }
}

impl Observer for ContactRecorder {
    fn piece(&mut self, t0: f64, t1: f64, y0: f64, y1: f64) {
        if y0 == 0.0 {
            self.touch(t0, if y1 == 0.0 { t1 } else { t0 });
        }
        if y1 == 0.0 {
            self.touch(t1, t1);
        }
    }
}

/// Last time at which Y = 0.
#[derive(Debug, Clone, Copy, Default)]
pub struct LastZero {
    pub last: Option<f64>,
}

impl Observer for LastZero {
    fn piece(&mut self, t0: f64, t1: f64, y0: f64, y1: f64) {
        if y1 == 0.0 {
            self.last = Some(t1);
        } else if y0 == 0.0 {
            self.last = Some(self.last.map_or(t0, |l| l.max(t0)));
        }
    }
}
