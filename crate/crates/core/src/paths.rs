//! Brownian driver paths on uniform grids.

use std::io::{BufRead, Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{config, Error, Result};
use crate::rng::{Seed, TrialRng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub t_start: f64,
    pub t_end: f64,
    pub n_steps: usize,
}

impl GridSpec {
    pub fn new(t_start: f64, t_end: f64, n_steps: usize) -> Result<Self> {
        let g = GridSpec { t_start, t_end, n_steps };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_start.is_finite() && self.t_end.is_finite()) || self.t_start >= self.t_end {
            return config(format!("grid needs t_start < t_end, got [{}, {}]", self.t_start, self.t_end));
        }
        if self.n_steps == 0 {
            return config("grid needs n_steps >= 1");
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        (self.t_end - self.t_start) / self.n_steps as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        if k == self.n_steps {
            self.t_end
        } else {
            self.t_start + k as f64 * self.dt()
        }
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.n_steps).map(|k| self.time(k)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PathKind {
    Driver { sigma2: f64 },
    Solution,
    Envelope,
    Difference,
    LocalTime,
    Unlabeled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledPath {
    times: Vec<f64>,
    values: Vec<f64>,
    pub kind: PathKind,
}

impl SampledPath {
    pub fn new(times: Vec<f64>, values: Vec<f64>, kind: PathKind) -> Result<Self> {
        if times.is_empty() {
            return config("path needs at least one point");
        }
        if times.len() != values.len() {
            return config(format!("{} times but {} values", times.len(), values.len()));
        }
        if times.windows(2).any(|w| !(w[0] < w[1])) {
            return config("path times must be strictly increasing");
        }
        Ok(SampledPath { times, values, kind })
    }

    pub(crate) fn new_unchecked(times: Vec<f64>, values: Vec<f64>, kind: PathKind) -> Self {
        debug_assert_eq!(times.len(), values.len());
        SampledPath { times, values, kind }
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn t_start(&self) -> f64 {
        self.times[0]
    }

    pub fn t_end(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn sigma2(&self) -> Option<f64> {
        match self.kind {
            PathKind::Driver { sigma2 } => Some(sigma2),
            _ => None,
        }
    }

    /// Linear interpolation; `None` outside the time range.
    pub fn eval(&self, t: f64) -> Option<f64> {
        let n = self.times.len();
        if t < self.times[0] || t > self.times[n - 1] {
            return None;
        }
        let k = self.times.partition_point(|&s| s <= t);
        if k == 0 {
            return Some(self.values[0]);
        }
        let i = k - 1;
        if i == n - 1 || self.times[i] == t {
            return Some(self.values[i]);
        }
        let (t0, t1) = (self.times[i], self.times[i + 1]);
        let w = (t - t0) / (t1 - t0);
        Some(self.values[i] + w * (self.values[i + 1] - self.values[i]))
    }

    /// Values at the given times (each must lie inside the range).
    pub fn sample_at(&self, ts: &[f64]) -> Result<Vec<f64>> {
        ts.iter()
            .map(|&t| self.eval(t).ok_or_else(|| Error::Domain(format!("time {t} outside path"))))
            .collect()
    }

    /// Pointwise `self - other` on a shared grid.
    pub fn minus(&self, other: &SampledPath) -> Result<SampledPath> {
        if self.times != other.times {
            return Err(Error::Domain("paths are on different grids".into()));
        }
        let v = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        Ok(SampledPath::new_unchecked(self.times.clone(), v, PathKind::Difference))
    }

    pub fn map_values(&self, f: impl Fn(f64) -> f64, kind: PathKind) -> SampledPath {
        SampledPath::new_unchecked(self.times.clone(), self.values.iter().map(|&v| f(v)).collect(), kind)
    }

    /// Uniform step if the grid is uniform to relative precision 1e-9.
    pub fn uniform_dt(&self) -> Option<f64> {
        if self.len() < 2 {
            return None;
        }
        let dt = (self.t_end() - self.t_start()) / (self.len() - 1) as f64;
        let ok = self.times.windows(2).all(|w| ((w[1] - w[0]) - dt).abs() <= 1e-9 * dt.max(1e-300) + 1e-12 * w[1].abs());
        ok.then_some(dt)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let io = |e: std::io::Error| Error::Format(e.to_string());
        writeln!(w, "t,value").map_err(io)?;
        for (t, v) in self.times.iter().zip(&self.values) {
            writeln!(w, "{t:e},{v:e}").map_err(io)?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R, kind: PathKind) -> Result<SampledPath> {
        let mut times = Vec::new();
        let mut values = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line.map_err(|e| Error::Format(e.to_string()))?;
            let line = line.trim();
            if i == 0 {
                if line != "t,value" {
                    return Err(Error::Format(format!("expected header t,value, got {line:?}")));
                }
                continue;
            }
            if line.is_empty() {
                continue;
            }
            let (a, b) = line
                .split_once(',')
                .ok_or_else(|| Error::Format(format!("line {}: expected two columns", i + 1)))?;
            let p = |s: &str| s.trim().parse::<f64>().map_err(|e| Error::Format(format!("line {}: {e}", i + 1)));
            times.push(p(a)?);
            values.push(p(b)?);
        }
        SampledPath::new(times, values, kind)
    }

    /// Binary layout: u64 LE point count n, then n f64 LE times, then n f64 LE values.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        let io = |e: std::io::Error| Error::Format(e.to_string());
        w.write_all(&(self.len() as u64).to_le_bytes()).map_err(io)?;
        for x in self.times.iter().chain(&self.values) {
            w.write_all(&x.to_le_bytes()).map_err(io)?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R, kind: PathKind) -> Result<SampledPath> {
        let io = |e: std::io::Error| Error::Format(e.to_string());
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b8).map_err(io)?;
        let n = u64::from_le_bytes(b8) as usize;
        let mut read_vec = |r: &mut R| -> Result<Vec<f64>> {
            (0..n)
                .map(|_| {
                    r.read_exact(&mut b8).map_err(io)?;
                    Ok(f64::from_le_bytes(b8))
                })
                .collect()
        };
        let times = read_vec(&mut r)?;
        let values = read_vec(&mut r)?;
        SampledPath::new(times, values, kind)
    }
}

fn brownian_walk(n: usize, sd: f64, rng: &mut TrialRng) -> Vec<f64> {
    let mut v = Vec::with_capacity(n + 1);
    let mut b = 0.0;
    v.push(0.0);
    for _ in 0..n {
        b += sd * rng.normal();
        v.push(b);
    }
    v
}

/// Brownian path on `grid`, anchored at 0 at time 0.
///
/// Grids starting after 0 are rejected. Grids starting before 0 must contain 0
/// as a grid node; the two halves are then independent.
pub fn sample_brownian(grid: GridSpec, sigma2: f64, seed: Seed) -> Result<SampledPath> {
    grid.validate()?;
    if !(sigma2 > 0.0) {
        return config("sigma2 must be positive");
    }
    if grid.t_start > 0.0 {
        return config("grids starting after time 0 are not supported; generate from 0 and slice");
    }
    let dt = grid.dt();
    let sd = (sigma2 * dt).sqrt();
    let mut rng = seed.rng();
    if grid.t_start == 0.0 {
        let values = brownian_walk(grid.n_steps, sd, &mut rng);
        return Ok(SampledPath::new_unchecked(grid.times(), values, PathKind::Driver { sigma2 }));
    }
    let k0 = -grid.t_start / dt;
    let k = k0.round();
    if (k0 - k).abs() > 1e-9 || k as usize > grid.n_steps {
        return config("time 0 must be a grid node for paths starting before 0");
    }
    let k = k as usize;
    let fwd = brownian_walk(grid.n_steps - k, sd, &mut rng);
    let bwd = brownian_walk(k, sd, &mut rng);
    let mut values: Vec<f64> = bwd.into_iter().rev().collect();
    values.extend_from_slice(&fwd[1..]);
    let mut times = grid.times();
    times[k] = 0.0;
    Ok(SampledPath::new_unchecked(times, values, PathKind::Driver { sigma2 }))
}

/// Two-sided Brownian path on [-T, T] with `n_steps` steps per side.
pub fn sample_two_sided(t_max: f64, n_steps: usize, sigma2: f64, seed: Seed) -> Result<SampledPath> {
    if !(t_max > 0.0) {
        return config("two-sided horizon T must be positive");
    }
    sample_brownian(GridSpec::new(-t_max, t_max, 2 * n_steps)?, sigma2, seed)
}

/// Insert `factor - 1` Brownian-bridge points into every step.
pub fn refine_bridge(path: &SampledPath, factor: usize, seed: Seed) -> Result<SampledPath> {
    let sigma2 = path
        .sigma2()
        .ok_or_else(|| Error::UnsupportedPath("bridge refinement needs a Brownian driver path".into()))?;
    if factor < 2 {
        return config("refinement factor must be at least 2");
    }
    let mut rng = seed.rng();
    let n = path.len();
    let mut times = Vec::with_capacity((n - 1) * factor + 1);
    let mut values = Vec::with_capacity((n - 1) * factor + 1);
    for i in 0..n - 1 {
        let (ta, tb) = (path.times[i], path.times[i + 1]);
        let (va, vb) = (path.values[i], path.values[i + 1]);
        times.push(ta);
        values.push(va);
        let (mut tl, mut vl) = (ta, va);
        for j in 1..factor {
            let u = ta + (tb - ta) * j as f64 / factor as f64;
            let w = (u - tl) / (tb - tl);
            let mean = vl + w * (vb - vl);
            let var = sigma2 * (u - tl) * (tb - u) / (tb - tl);
            let v = mean + var.sqrt() * rng.normal();
            times.push(u);
            values.push(v);
            tl = u;
            vl = v;
        }
    }
    times.push(path.t_end());
    values.push(*path.values.last().unwrap());
    Ok(SampledPath::new_unchecked(times, values, path.kind))
}

/// `t -> -t`, with the grid re-sorted.
pub fn time_reverse(path: &SampledPath) -> SampledPath {
    let times = path.times.iter().rev().map(|t| -t).collect();
    let values = path.values.iter().rev().copied().collect();
    SampledPath::new_unchecked(times, values, path.kind)
}

/// Sequential access to driver nodes, from a stored path or generated on the fly.
pub trait DriverSource {
    /// Current node (time, value).
    fn current(&self) -> (f64, f64);
    /// Advance to the next node; `None` when the driver is exhausted.
    fn advance(&mut self) -> Option<(f64, f64)>;
    /// Nominal step, used for default bandwidths.
    fn step(&self) -> f64;
    fn sigma2(&self) -> Option<f64>;
}

/// Walks a stored path starting at an arbitrary time inside it.
pub struct PathCursor<'a> {
    path: &'a SampledPath,
    next: usize,
    cur: (f64, f64),
}

impl<'a> PathCursor<'a> {
    pub fn new(path: &'a SampledPath, t0: f64) -> Result<Self> {
        let b0 = path
            .eval(t0)
            .ok_or_else(|| Error::Domain(format!("driver [{}, {}] does not cover t0 = {t0}", path.t_start(), path.t_end())))?;
        let next = path.times.partition_point(|&s| s <= t0);
        Ok(PathCursor { path, next, cur: (t0, b0) })
    }
}

impl DriverSource for PathCursor<'_> {
    fn current(&self) -> (f64, f64) {
        self.cur
    }

    fn advance(&mut self) -> Option<(f64, f64)> {
        if self.next >= self.path.len() {
            return None;
        }
        self.cur = (self.path.times[self.next], self.path.values[self.next]);
        self.next += 1;
        Some(self.cur)
    }

    fn step(&self) -> f64 {
        self.path.uniform_dt().unwrap_or_else(|| (self.path.t_end() - self.path.t_start()) / (self.path.len().max(2) - 1) as f64)
    }

    fn sigma2(&self) -> Option<f64> {
        self.path.sigma2()
    }
}

/// Brownian driver generated step by step from time 0 until `horizon`.
pub struct BrownianStream {
    rng: TrialRng,
    k: u64,
    dt: f64,
    sd: f64,
    sigma2: f64,
    n_max: u64,
    cur: (f64, f64),
}

impl BrownianStream {
    pub fn new(dt: f64, sigma2: f64, horizon: f64, seed: Seed) -> Result<Self> {
        if !(dt > 0.0) || !(sigma2 > 0.0) || !(horizon > 0.0) {
            return config("stream needs dt, sigma2, horizon > 0");
        }
        Ok(Self::from_rng(dt, sigma2, horizon, seed.rng()))
    }

    pub fn from_rng(dt: f64, sigma2: f64, horizon: f64, rng: TrialRng) -> Self {
        BrownianStream {
            rng,
            k: 0,
            dt,
            sd: (sigma2 * dt).sqrt(),
            sigma2,
            n_max: (horizon / dt).ceil() as u64,
            cur: (0.0, 0.0),
        }
    }

    pub fn into_rng(self) -> TrialRng {
        self.rng
    }
}

impl DriverSource for BrownianStream {
    fn current(&self) -> (f64, f64) {
        self.cur
    }

    fn advance(&mut self) -> Option<(f64, f64)> {
        if self.k >= self.n_max {
            return None;
        }
        self.k += 1;
        self.cur = (self.k as f64 * self.dt, self.cur.1 + self.sd * self.rng.normal());
        Some(self.cur)
    }

    fn step(&self) -> f64 {
        self.dt
    }

    fn sigma2(&self) -> Option<f64> {
        Some(self.sigma2)
    }
}

/// Brownian driver generated on demand and kept, so several solutions can be
/// run on the same path one after another.
pub struct BrownianTape {
    stream: BrownianStream,
    values: Vec<f64>,
}

impl BrownianTape {
    pub fn new(dt: f64, sigma2: f64, horizon: f64, seed: Seed) -> Result<Self> {
        Ok(BrownianTape { stream: BrownianStream::new(dt, sigma2, horizon, seed)?, values: vec![0.0] })
    }

    /// A cursor from time 0 that extends the tape as it goes.
    pub fn replay(&mut self) -> TapeCursor<'_> {
        TapeCursor { tape: self, k: 0 }
    }

    /// Nodes generated so far.
    pub fn recorded(&self) -> SampledPath {
        let dt = self.stream.dt;
        let times = (0..self.values.len()).map(|k| k as f64 * dt).collect();
        SampledPath::new_unchecked(times, self.values.clone(), PathKind::Driver { sigma2: self.stream.sigma2 })
    }
}

pub struct TapeCursor<'a> {
    tape: &'a mut BrownianTape,
    k: usize,
}

impl DriverSource for TapeCursor<'_> {
    fn current(&self) -> (f64, f64) {
        (self.k as f64 * self.tape.stream.dt, self.tape.values[self.k])
    }

    fn advance(&mut self) -> Option<(f64, f64)> {
        if self.k + 1 == self.tape.values.len() {
            let (_, b) = self.tape.stream.advance()?;
            self.tape.values.push(b);
        }
        self.k += 1;
        Some(self.current())
    }

    fn step(&self) -> f64 {
        self.tape.stream.dt
    }

    fn sigma2(&self) -> Option<f64> {
        Some(self.tape.stream.sigma2)
    }
}
