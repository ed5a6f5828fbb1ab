//! Adaptive integration of the stationary equation `a(x) f' + H(f, x) = lambda`
//! with dense output, barrier-exit detection and trapped-solution search.

use serde::{Deserialize, Serialize};

use crate::env::Environment;
use crate::error::{Error, Result};

/// Step-size control for the Dormand-Prince pair.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub h_max: f64,
    pub h_min: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self { rtol: 1e-10, atol: 1e-10, h_max: 0.05, h_min: 1e-13, max_steps: 20_000_000 }
    }
}

impl OdeOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self { rtol: tol, atol: tol, ..Self::default() }
    }
}

// Dormand-Prince 5(4) tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
// Dense output weights (Hairer's continuous extension).
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// One accepted step with its quartic continuous extension. The state is
/// `[f, F]` with `F' = f`.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Segment {
    x0: f64,
    h: f64,
    rc: [[f64; 5]; 2],
}

impl Segment {
    fn lo(&self) -> f64 {
        self.x0.min(self.x0 + self.h)
    }
    fn hi(&self) -> f64 {
        self.x0.max(self.x0 + self.h)
    }
    fn end(&self) -> f64 {
        self.x0 + self.h
    }

    fn eval_theta(&self, t: f64) -> [f64; 2] {
        let t1 = 1.0 - t;
        let mut out = [0.0; 2];
        for (i, o) in out.iter_mut().enumerate() {
            let r = &self.rc[i];
            *o = r[0] + t * (r[1] + t1 * (r[2] + t * (r[3] + t1 * r[4])));
        }
        out
    }

    fn deriv_theta(&self, t: f64) -> [f64; 2] {
        let t1 = 1.0 - t;
        let mut out = [0.0; 2];
        for (i, o) in out.iter_mut().enumerate() {
            let r = &self.rc[i];
            let a = r[3] + t1 * r[4];
            let b = r[2] + t * a;
            let c = r[1] + t1 * b;
            let da = -r[4];
            let db = a + t * da;
            let dc = -b + t1 * db;
            *o = (c + t * dc) / self.h;
        }
        out
    }

    fn theta(&self, x: f64) -> f64 {
        (x - self.x0) / self.h
    }

    fn at(&self, t: f64) -> f64 {
        self.x0 + t * self.h
    }
}

/// What a step monitor asks the driver to do.
pub(crate) enum Control<R> {
    Continue,
    Stop { x: f64, reason: R },
}

pub(crate) struct DenseRun<R> {
    pub segments: Vec<Segment>,
    pub x_start: f64,
    pub f_start: f64,
    pub x_stop: f64,
    pub reason: Option<R>,
}

fn add(y: &[f64; 2], terms: &[(f64, &[f64; 2])], h: f64) -> [f64; 2] {
    let mut out = *y;
    for (c, k) in terms {
        out[0] += h * c * k[0];
        out[1] += h * c * k[1];
    }
    out
}

/// Integrates `f' = rhs(x, f)`, `F' = f` from `x0` to `x1` (either direction),
/// calling `monitor` after every accepted step.
pub(crate) fn integrate_dense<R>(
    rhs: &dyn Fn(f64, f64) -> f64,
    x0: f64,
    f0: f64,
    x1: f64,
    opts: &OdeOptions,
    mut monitor: impl FnMut(&Segment) -> Control<R>,
) -> Result<DenseRun<R>> {
    if !f0.is_finite() || !x0.is_finite() || !x1.is_finite() {
        return Err(Error::InvalidArgument(format!("non-finite start ({x0}, {f0}) or end {x1}")));
    }
    let dir = if x1 >= x0 { 1.0 } else { -1.0 };
    let sys = |x: f64, y: &[f64; 2]| -> [f64; 2] { [rhs(x, y[0]), y[0]] };
    let mut x = x0;
    let mut y = [f0, 0.0];
    let mut k1 = sys(x, &y);
    let mut h = dir * opts.h_max.min(1e-3).min((x1 - x0).abs().max(1e-300));
    let mut segments = Vec::new();
    let mut steps = 0usize;
    while dir * (x1 - x) > 0.0 {
        steps += 1;
        if steps > opts.max_steps {
            return Err(Error::StepUnderflow { x, h });
        }
        let remaining = x1 - x;
        let mut last = false;
        if dir * (h - remaining) >= 0.0 {
            h = remaining;
            last = true;
        }
        let k2 = sys(x + C2 * h, &add(&y, &[(A21, &k1)], h));
        let k3 = sys(x + C3 * h, &add(&y, &[(A31, &k1), (A32, &k2)], h));
        let k4 = sys(x + C4 * h, &add(&y, &[(A41, &k1), (A42, &k2), (A43, &k3)], h));
        let k5 = sys(x + C5 * h, &add(&y, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)], h));
        let k6 = sys(
            x + h,
            &add(&y, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)], h),
        );
        let y_new = add(&y, &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)], h);
        let k7 = sys(x + h, &y_new);
        let mut err: f64 = 0.0;
        for i in 0..2 {
            let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sk = opts.atol + opts.rtol * y[i].abs().max(y_new[i].abs());
            err = err.max((e / sk).abs());
        }
        if !err.is_finite() || !y_new[0].is_finite() || !k7[0].is_finite() {
            err = f64::INFINITY;
        }
        if err <= 1.0 {
            let mut rc = [[0.0; 5]; 2];
            for i in 0..2 {
                let ydiff = y_new[i] - y[i];
                let bspl = h * k1[i] - ydiff;
                rc[i][0] = y[i];
                rc[i][1] = ydiff;
                rc[i][2] = bspl;
                rc[i][3] = ydiff - h * k7[i] - bspl;
                rc[i][4] =
                    h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
            }
            let seg = Segment { x0: x, h, rc };
            segments.push(seg);
            x = if last { x1 } else { x + h };
            y = y_new;
            k1 = k7;
            if let Control::Stop { x: xs, reason } = monitor(&seg) {
                return Ok(DenseRun { segments, x_start: x0, f_start: f0, x_stop: xs, reason: Some(reason) });
            }
            let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            h = dir * (h.abs() * fac).min(opts.h_max);
        } else {
            let fac = if err.is_finite() { (0.9 * err.powf(-0.2)).clamp(0.1, 0.9) } else { 0.1 };
            h *= fac;
            if h.abs() < opts.h_min * (1.0 + x.abs()) {
                return Err(Error::StepUnderflow { x, h });
            }
        }
    }
    Ok(DenseRun { segments, x_start: x0, f_start: f0, x_stop: x1, reason: None })
}

/// Sub-sample fractions used for event detection and residual audits.
const PROBES: [f64; 4] = [0.25, 0.5, 0.75, 1.0];

/// First point in the segment where `g(x, f) <= 0`, assuming `g > 0` at its
/// start, located by bisection on the dense output.
pub(crate) fn first_crossing(seg: &Segment, g: &dyn Fn(f64, f64) -> f64) -> Option<f64> {
    let mut t_prev = 0.0;
    for &t in &PROBES {
        let x = seg.at(t);
        if g(x, seg.eval_theta(t)[0]) <= 0.0 {
            let (mut lo, mut hi) = (t_prev, t);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if g(seg.at(mid), seg.eval_theta(mid)[0]) <= 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
                if (hi - lo) * seg.h.abs() < 1e-14 * (1.0 + x.abs()) {
                    break;
                }
            }
            return Some(seg.at(hi));
        }
        t_prev = t;
    }
    None
}

/// How an integration ended.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Terminal {
    Reached,
    EscapedAbove { x: f64 },
    EscapedBelow { x: f64 },
    ExitedLower { x: f64 },
    ExitedUpper { x: f64 },
}

/// Dense solution of `a f' + H(f, x) = lambda` with its running integral.
#[derive(Clone, Debug, Serialize)]
pub struct OdeSolution {
    pub lambda: f64,
    /// Step nodes, increasing.
    pub x_nodes: Vec<f64>,
    pub f_values: Vec<f64>,
    /// `F(x) = integral of f from x_nodes[0] to x`.
    pub antiderivative: Vec<f64>,
    /// `max |a f' + H(f, x) - lambda|` over eight sub-points per step.
    pub max_residual: f64,
    pub terminal: Terminal,
    /// Where the initial value was imposed.
    pub x_initial: f64,
    #[serde(skip)]
    segments: Vec<Segment>,
    #[serde(skip)]
    f_offset: f64,
}

impl OdeSolution {
    fn from_run<R>(run: DenseRun<R>, lambda: f64, terminal: Terminal, env: &dyn Environment) -> Self {
        let DenseRun { mut segments, x_start, f_start, x_stop, .. } = run;
        let backward = x_stop < x_start;
        let mut nodes = vec![x_start];
        let mut fs = vec![f_start];
        let mut big_f = vec![0.0];
        for (k, seg) in segments.iter().enumerate() {
            let end = if k + 1 == segments.len() { x_stop } else { seg.end() };
            let v = seg.eval_theta(seg.theta(end));
            nodes.push(end);
            fs.push(v[0]);
            big_f.push(v[1]);
        }
        if backward {
            nodes.reverse();
            fs.reverse();
            big_f.reverse();
            segments.reverse();
        }
        let f_offset = big_f[0];
        for v in &mut big_f {
            *v -= f_offset;
        }
        let mut sol = Self {
            lambda,
            x_nodes: nodes,
            f_values: fs,
            antiderivative: big_f,
            max_residual: 0.0,
            terminal,
            x_initial: x_start,
            segments,
            f_offset,
        };
        sol.max_residual = sol.residual_on_grid(env, 8);
        sol
    }

    /// `max |a f' + H(f, x) - lambda|` at `per_step` evenly spaced points
    /// inside every step.
    pub fn residual_on_grid(&self, env: &dyn Environment, per_step: usize) -> f64 {
        let mut worst: f64 = 0.0;
        let (lo, hi) = (self.x_start(), self.x_end());
        for seg in &self.segments {
            for j in 0..=per_step {
                let x = seg.lo() + (seg.hi() - seg.lo()) * j as f64 / per_step as f64;
                if x < lo || x > hi {
                    continue;
                }
                let r = env.diffusion(x) * self.slope(x) + env.hamiltonian(self.eval(x), x) - self.lambda;
                worst = worst.max(r.abs());
            }
        }
        worst
    }

    pub fn x_start(&self) -> f64 {
        self.x_nodes[0]
    }

    pub fn x_end(&self) -> f64 {
        self.x_nodes[self.x_nodes.len() - 1]
    }

    fn segment(&self, x: f64) -> Option<&Segment> {
        if self.segments.is_empty() {
            return None;
        }
        let k = self.segments.partition_point(|s| s.hi() < x).min(self.segments.len() - 1);
        Some(&self.segments[k])
    }

    /// `f(x)`; `x` is clamped to the solution's domain.
    pub fn eval(&self, x: f64) -> f64 {
        let x = x.clamp(self.x_start(), self.x_end());
        match self.segment(x) {
            Some(s) => s.eval_theta(s.theta(x))[0],
            None => self.f_values[0],
        }
    }

    /// `f'(x)` from the continuous extension.
    pub fn slope(&self, x: f64) -> f64 {
        let x = x.clamp(self.x_start(), self.x_end());
        match self.segment(x) {
            Some(s) => s.deriv_theta(s.theta(x))[0],
            None => 0.0,
        }
    }

    /// `integral of f from x_start() to x`.
    pub fn antiderivative_at(&self, x: f64) -> f64 {
        let x = x.clamp(self.x_start(), self.x_end());
        match self.segment(x) {
            Some(s) => s.eval_theta(s.theta(x))[1] - self.f_offset,
            None => 0.0,
        }
    }

    /// Average of `f` over the whole domain.
    pub fn mean(&self) -> f64 {
        let len = self.x_end() - self.x_start();
        if len > 0.0 {
            self.antiderivative[self.antiderivative.len() - 1] / len
        } else {
            self.f_values[0]
        }
    }

    /// Smallest and largest nodal values.
    pub fn value_range(&self) -> (f64, f64) {
        self.f_values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }
}

fn auxiliary_rhs<'a>(env: &'a dyn Environment, lambda: f64) -> impl Fn(f64, f64) -> f64 + 'a {
    move |x, f| (lambda - env.hamiltonian(f, x)) / env.diffusion(x)
}

/// Solves `a f' + H(f, x) = lambda`, `f(x0) = f0`, from `x0` to `x1` (either
/// direction), stopping early if `|f|` reaches `escape_radius`.
pub fn integrate_auxiliary(
    env: &dyn Environment,
    lambda: f64,
    x0: f64,
    f0: f64,
    x1: f64,
    opts: &OdeOptions,
    escape_radius: f64,
) -> Result<OdeSolution> {
    if f0.abs() >= escape_radius {
        return Err(Error::InvalidArgument(format!(
            "initial value {f0} is outside the escape radius {escape_radius}"
        )));
    }
    let rhs = auxiliary_rhs(env, lambda);
    let above = |_: f64, f: f64| escape_radius - f;
    let below = |_: f64, f: f64| f + escape_radius;
    let run = integrate_dense(&rhs, x0, f0, x1, opts, |seg| {
        let xa = first_crossing(seg, &above);
        let xb = first_crossing(seg, &below);
        match (xa, xb) {
            (Some(a), Some(b)) => {
                if (a - seg.x0).abs() <= (b - seg.x0).abs() {
                    Control::Stop { x: a, reason: true }
                } else {
                    Control::Stop { x: b, reason: false }
                }
            }
            (Some(a), None) => Control::Stop { x: a, reason: true },
            (None, Some(b)) => Control::Stop { x: b, reason: false },
            (None, None) => Control::Continue,
        }
    })?;
    let terminal = match run.reason {
        None => Terminal::Reached,
        Some(true) => Terminal::EscapedAbove { x: run.x_stop },
        Some(false) => Terminal::EscapedBelow { x: run.x_stop },
    };
    Ok(OdeSolution::from_run(run, lambda, terminal, env))
}

/// A curve bounding trajectories from below or above.
pub trait Barrier: Send + Sync {
    fn value(&self, x: f64) -> f64;

    fn slope(&self, x: f64) -> f64 {
        let h = 1e-6 * (1.0 + x.abs());
        (self.value(x + h) - self.value(x - h)) / (2.0 * h)
    }

    /// Level at which the barrier solves the stationary equation, if it does.
    fn level(&self) -> Option<f64> {
        None
    }
}

/// A constant barrier.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConstantBarrier(pub f64);

impl Barrier for ConstantBarrier {
    fn value(&self, _x: f64) -> f64 {
        self.0
    }
    fn slope(&self, _x: f64) -> f64 {
        0.0
    }
}

impl Barrier for OdeSolution {
    fn value(&self, x: f64) -> f64 {
        self.eval(x)
    }
    fn slope(&self, x: f64) -> f64 {
        OdeSolution::slope(self, x)
    }
    fn level(&self) -> Option<f64> {
        Some(self.lambda)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExitSide {
    HitLower,
    HitUpper,
    Survived,
}

/// Result of shooting inside a strip.
#[derive(Clone, Debug, Serialize)]
pub struct ShootOutcome {
    pub start: f64,
    pub start_value: f64,
    pub exit_x: Option<f64>,
    pub exit_side: ExitSide,
    pub solution: OdeSolution,
}

/// Integrates from `(c, f_c)` towards `x_end` and reports the first exit from
/// the strip between `lower` and `upper`. A start on a barrier counts as
/// inside when the trajectory moves inward: decided by the sign of the level
/// difference when the barrier has one, else by comparing slopes.
#[allow(clippy::too_many_arguments)]
pub fn shoot(
    env: &dyn Environment,
    lambda: f64,
    c: f64,
    f_c: f64,
    lower: &dyn Barrier,
    upper: &dyn Barrier,
    x_end: f64,
    opts: &OdeOptions,
) -> Result<ShootOutcome> {
    let lo_c = lower.value(c);
    let hi_c = upper.value(c);
    let eps = 1e-12 * (1.0 + f_c.abs());
    if f_c < lo_c - eps || f_c > hi_c + eps {
        return Err(Error::InvalidArgument(format!(
            "start value {f_c} outside the strip [{lo_c}, {hi_c}] at x = {c}"
        )));
    }
    let forward = x_end >= c;
    let sgn = if forward { 1.0 } else { -1.0 };
    let fprime = (lambda - env.hamiltonian(f_c, c)) / env.diffusion(c);
    let trivial = |side: ExitSide| -> ShootOutcome {
        let run: DenseRun<()> = DenseRun { segments: Vec::new(), x_start: c, f_start: f_c, x_stop: c, reason: None };
        let terminal = match side {
            ExitSide::HitLower => Terminal::ExitedLower { x: c },
            _ => Terminal::ExitedUpper { x: c },
        };
        ShootOutcome {
            start: c,
            start_value: f_c,
            exit_x: Some(c),
            exit_side: side,
            solution: OdeSolution::from_run(run, lambda, terminal, env),
        }
    };
    if (f_c - lo_c).abs() <= eps {
        let inward = match lower.level() {
            Some(l) if l != lambda => sgn * (lambda - l) > 0.0,
            _ => sgn * (fprime - lower.slope(c)) > 0.0,
        };
        if !inward {
            return Ok(trivial(ExitSide::HitLower));
        }
    }
    if (hi_c - f_c).abs() <= eps {
        let inward = match upper.level() {
            Some(l) if l != lambda => sgn * (lambda - l) < 0.0,
            _ => sgn * (fprime - upper.slope(c)) < 0.0,
        };
        if !inward {
            return Ok(trivial(ExitSide::HitUpper));
        }
    }
    let rhs = auxiliary_rhs(env, lambda);
    let g_lo = |x: f64, f: f64| f - lower.value(x);
    let g_hi = |x: f64, f: f64| upper.value(x) - f;
    let run = integrate_dense(&rhs, c, f_c, x_end, opts, |seg| {
        let a = first_crossing(seg, &g_lo);
        let b = first_crossing(seg, &g_hi);
        match (a, b) {
            (Some(a), Some(b)) => {
                if (a - c).abs() <= (b - c).abs() {
                    Control::Stop { x: a, reason: ExitSide::HitLower }
                } else {
                    Control::Stop { x: b, reason: ExitSide::HitUpper }
                }
            }
            (Some(a), None) => Control::Stop { x: a, reason: ExitSide::HitLower },
            (None, Some(b)) => Control::Stop { x: b, reason: ExitSide::HitUpper },
            (None, None) => Control::Continue,
        }
    })?;
    let side = run.reason.unwrap_or(ExitSide::Survived);
    let exit_x = run.reason.map(|_| run.x_stop);
    let terminal = match side {
        ExitSide::HitLower => Terminal::ExitedLower { x: run.x_stop },
        ExitSide::HitUpper => Terminal::ExitedUpper { x: run.x_stop },
        ExitSide::Survived => Terminal::Reached,
    };
    Ok(ShootOutcome {
        start: c,
        start_value: f_c,
        exit_x,
        exit_side: side,
        solution: OdeSolution::from_run(run, lambda, terminal, env),
    })
}

/// Sign pattern of `a g' + H(g, x) - lambda` for both barriers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StripPattern {
    /// Lower barrier is a strict subsolution, upper a strict supersolution:
    /// the strip is invariant forward.
    ForwardTrapping,
    /// The reverse: invariant backward.
    BackwardTrapping,
    /// Neither pattern holds at every sample.
    Mixed,
}

/// Classifies the barrier inequalities at `n` sampled points of `span`.
pub fn strip_pattern(
    env: &dyn Environment,
    lambda: f64,
    lower: &dyn Barrier,
    upper: &dyn Barrier,
    span: (f64, f64),
    n: usize,
) -> Result<StripPattern> {
    let mut fwd = true;
    let mut bwd = true;
    for j in 0..n {
        let x = span.0 + (span.1 - span.0) * j as f64 / (n - 1).max(1) as f64;
        let (l, u) = (lower.value(x), upper.value(x));
        if !(l < u) {
            return Err(Error::NotOrdered { x, lower: l, upper: u });
        }
        let a = env.diffusion(x);
        let s_lo = a * lower.slope(x) + env.hamiltonian(l, x) - lambda;
        let s_hi = a * upper.slope(x) + env.hamiltonian(u, x) - lambda;
        fwd &= s_lo < 0.0 && s_hi > 0.0;
        bwd &= s_lo > 0.0 && s_hi < 0.0;
    }
    Ok(if fwd {
        StripPattern::ForwardTrapping
    } else if bwd {
        StripPattern::BackwardTrapping
    } else {
        StripPattern::Mixed
    })
}

/// Finds a solution trapped between `lower` and `upper` on the whole span.
///
/// Invariant strips are integrated in their invariant direction from the
/// middle of the strip. Otherwise the initial value is bisected on the exit
/// side, first forward and then backward; if neither certifies a trapped
/// trajectory the barriers are rejected.
pub fn sandwich_solve(
    env: &dyn Environment,
    lambda: f64,
    lower: &dyn Barrier,
    upper: &dyn Barrier,
    span: (f64, f64),
    opts: &OdeOptions,
) -> Result<OdeSolution> {
    let (x0, x1) = span;
    if !(x1 > x0) {
        return Err(Error::InvalidArgument(format!("empty span {span:?}")));
    }
    let pattern = strip_pattern(env, lambda, lower, upper, span, 64)?;
    let middle = |x: f64| 0.5 * (lower.value(x) + upper.value(x));
    let direct = |from: f64, to: f64| -> Result<OdeSolution> {
        let out = shoot(env, lambda, from, middle(from), lower, upper, to, opts)?;
        match out.exit_side {
            ExitSide::Survived => Ok(out.solution),
            side => Err(Error::WrongSigns {
                detail: format!("invariant strip was left through {side:?} at {:?}", out.exit_x),
            }),
        }
    };
    match pattern {
        StripPattern::ForwardTrapping => return direct(x0, x1),
        StripPattern::BackwardTrapping => return direct(x1, x0),
        StripPattern::Mixed => {}
    }
    for (from, to) in [(x0, x1), (x1, x0)] {
        if let Some(sol) = bisect_trapped(env, lambda, lower, upper, from, to, opts)? {
            return Ok(sol);
        }
    }
    Err(Error::WrongSigns {
        detail: format!(
            "barrier inequalities are mixed on [{x0}, {x1}] and no initial value stays trapped at level {lambda}"
        ),
    })
}

fn bisect_trapped(
    env: &dyn Environment,
    lambda: f64,
    lower: &dyn Barrier,
    upper: &dyn Barrier,
    from: f64,
    to: f64,
    opts: &OdeOptions,
) -> Result<Option<OdeSolution>> {
    let classify = |v: f64| shoot(env, lambda, from, v, lower, upper, to, opts);
    let (mut lo, mut hi) = (lower.value(from), upper.value(from));
    let mid = classify(0.5 * (lo + hi))?;
    if mid.exit_side == ExitSide::Survived {
        return Ok(Some(mid.solution));
    }
    let bottom = classify(lo)?;
    let top = classify(hi)?;
    for o in [&bottom, &top] {
        if o.exit_side == ExitSide::Survived {
            return Ok(Some(o.solution.clone()));
        }
    }
    // Exit side is monotone in the initial value: low starts leave below,
    // high starts above.
    match (mid.exit_side, bottom.exit_side, top.exit_side) {
        (ExitSide::HitLower, _, ExitSide::HitUpper) => lo = 0.5 * (lo + hi),
        (ExitSide::HitUpper, ExitSide::HitLower, _) => hi = 0.5 * (lo + hi),
        _ => return Ok(None),
    }
    for _ in 0..80 {
        let m = 0.5 * (lo + hi);
        if m <= lo || m >= hi {
            break;
        }
        let o = classify(m)?;
        match o.exit_side {
            ExitSide::Survived => return Ok(Some(o.solution)),
            ExitSide::HitLower => lo = m,
            ExitSide::HitUpper => hi = m,
        }
    }
    Ok(None)
}
