//! Monotone finite-difference solver for `u_t = a(x/eps) eps u_xx + H(u_x, x/eps)`
//! and the homogenization check `eps u(1/eps, 0) -> H_bar(theta)`.

use serde::{Deserialize, Serialize};

use crate::effective::EffectiveHamiltonian;
use crate::env::{compute_envelopes, radius_bound, symmetric_grid, Environment, GrowthEnvelopes};
use crate::error::{Error, Result};

/// Uniform space-time grid. In tilted-periodic mode the last node is the
/// periodic image of the first.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid1D {
    pub x_lo: f64,
    pub x_hi: f64,
    pub nx: usize,
    pub dx: f64,
    pub dt: f64,
    pub t_final: f64,
}

impl Grid1D {
    pub fn new(x_lo: f64, x_hi: f64, nx: usize, dt: f64, t_final: f64) -> Result<Self> {
        if nx < 3 || !(x_hi > x_lo) || !(dt > 0.0) || !(t_final >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "bad grid: [{x_lo}, {x_hi}] with {nx} nodes, dt = {dt}, T = {t_final}"
            )));
        }
        Ok(Self { x_lo, x_hi, nx, dx: (x_hi - x_lo) / (nx - 1) as f64, dt, t_final })
    }

    pub fn node(&self, i: usize) -> f64 {
        self.x_lo + i as f64 * self.dx
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.nx).map(|i| self.node(i)).collect()
    }

    /// Same grid with every length and time multiplied by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        Self {
            x_lo: self.x_lo * s,
            x_hi: self.x_hi * s,
            nx: self.nx,
            dx: self.dx * s,
            dt: self.dt * s,
            t_final: self.t_final * s,
        }
    }
}

/// `safety * min(dx^2 / (2 a_max), dx / (2 K))`.
pub fn cfl_time_step(dx: f64, a_max: f64, lipschitz: f64, safety: f64) -> f64 {
    let diffusive = if a_max > 0.0 { dx * dx / (2.0 * a_max) } else { f64::INFINITY };
    let advective = if lipschitz > 0.0 { dx / (2.0 * lipschitz) } else { f64::INFINITY };
    safety * diffusive.min(advective)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryMode {
    /// `u = theta x + v` with `v` periodic over the grid span.
    TiltedPeriodic,
    /// Finite window with ghost nodes extrapolated at fixed far-field slopes.
    WideDomain,
}

/// Scheme constants fixed for a whole run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchemeSettings {
    /// Tilt `theta` in periodic mode; ignored otherwise.
    pub tilt: f64,
    /// Ghost slopes at the left and right ends in wide-domain mode.
    pub far_slopes: (f64, f64),
    /// Lax-Friedrichs dissipation; must dominate `|H_p|` on the gradients met.
    pub dissipation: f64,
    /// Largest `a` on the grid (unscaled), for the stability check.
    pub a_max: f64,
    /// Gradients beyond this abort the run.
    pub gradient_limit: f64,
    /// Times at which `u(t, probe_x)` is recorded (the final time always is).
    pub probe_times: Vec<f64>,
    pub probe_x: f64,
    /// Store `u` at every probe time.
    pub keep_profiles: bool,
}

/// Checks performed on the scheme actually run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityCertificate {
    pub dt: f64,
    /// `min(dx^2 / (2 a_max), dx / (2 K))` with `K` the dissipation.
    pub cfl_limit: f64,
    /// `dt (2 a_max / dx^2 + alpha / dx)`, at most 1 for a monotone step.
    pub stencil_weight: f64,
    pub dissipation: f64,
    /// Smallest and largest one-sided gradient seen.
    pub gradient_range: (f64, f64),
    /// `max |H_p|` sampled over the gradient range.
    pub observed_lipschitz: f64,
    /// Whether the dissipation dominated `|H_p|` on the gradients met.
    pub monotone: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeRecord {
    pub t: f64,
    pub u: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PdeRun {
    pub epsilon: f64,
    pub grid: Grid1D,
    pub mode: BoundaryMode,
    pub u_final: Vec<f64>,
    pub probe: Vec<ProbeRecord>,
    /// `u` on the grid at each probe time when requested.
    pub profiles: Vec<(f64, Vec<f64>)>,
    pub max_gradient: f64,
    pub certificate: MonotonicityCertificate,
    pub steps: usize,
}

/// Evolves `u_t = eps a(x/eps) u_xx + H(u_x, x/eps)` with the Lax-Friedrichs
/// flux `H((p- + p+)/2) + alpha (p+ - p-)/2`. `initial` holds `u(0)` at the
/// grid nodes.
pub fn solve_viscous_hj(
    env: &dyn Environment,
    epsilon: f64,
    initial: &[f64],
    grid: &Grid1D,
    mode: BoundaryMode,
    settings: &SchemeSettings,
) -> Result<PdeRun> {
    if initial.len() != grid.nx {
        return Err(Error::InvalidArgument(format!(
            "initial data has {} values for {} nodes",
            initial.len(),
            grid.nx
        )));
    }
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArgument(format!("epsilon must be positive, got {epsilon}")));
    }
    let dx = grid.dx;
    let alpha = settings.dissipation;
    let a_max = settings.a_max * epsilon;
    let cfl_limit = cfl_time_step(dx, a_max, alpha, 1.0);
    let stencil_weight = grid.dt * (2.0 * a_max / (dx * dx) + alpha / dx);
    if grid.dt > cfl_limit * (1.0 + 1e-12) || stencil_weight > 1.0 + 1e-12 {
        return Err(Error::CflViolation { dt: grid.dt, limit: cfl_limit.min(grid.dt / stencil_weight) });
    }
    let xs = grid.nodes();
    let probe_index = ((settings.probe_x - grid.x_lo) / dx).round();
    if probe_index < 0.0 || probe_index >= grid.nx as f64 || (grid.node(probe_index as usize) - settings.probe_x).abs() > 1e-9 * dx.max(1.0) {
        return Err(Error::InvalidArgument(format!("probe x = {} is not a grid node", settings.probe_x)));
    }
    let probe_index = probe_index as usize;
    let theta = settings.tilt;

    // Number of unknowns and the map from unknowns to u.
    let (n, mut v): (usize, Vec<f64>) = match mode {
        BoundaryMode::TiltedPeriodic => {
            if let Some(l) = env.period() {
                let periods = (grid.x_hi - grid.x_lo) / (epsilon * l);
                if (periods - periods.round()).abs() > 1e-9 || periods.round() < 1.0 {
                    return Err(Error::InvalidArgument(format!(
                        "grid span is {periods} scaled periods, not a whole number"
                    )));
                }
            } else {
                return Err(Error::InvalidArgument("tilted-periodic mode needs a periodic medium".into()));
            }
            let v: Vec<f64> = (0..grid.nx - 1).map(|i| initial[i] - theta * xs[i]).collect();
            let closure = initial[grid.nx - 1] - theta * xs[grid.nx - 1] - v[0];
            if closure.abs() > 1e-9 * (1.0 + v[0].abs()) {
                return Err(Error::InvalidArgument(format!("initial data minus tilt is not periodic ({closure})")));
            }
            (grid.nx - 1, v)
        }
        BoundaryMode::WideDomain => (grid.nx, initial.to_vec()),
    };
    let diff: Vec<f64> = xs[..n].iter().map(|&x| epsilon * env.diffusion(x / epsilon)).collect();
    let ham: Vec<_> = xs[..n].iter().map(|&x| env.frozen(x / epsilon)).collect();
    let (s_left, s_right) = settings.far_slopes;

    let to_u = |v: &[f64]| -> Vec<f64> {
        match mode {
            BoundaryMode::TiltedPeriodic => {
                let mut u: Vec<f64> = (0..n).map(|i| v[i] + theta * xs[i]).collect();
                u.push(v[0] + theta * xs[n]);
                u
            }
            BoundaryMode::WideDomain => v.to_vec(),
        }
    };

    let mut times: Vec<f64> = settings.probe_times.iter().copied().filter(|&t| t > 0.0 && t < grid.t_final).collect();
    times.push(grid.t_final);
    times.sort_by(f64::total_cmp);
    times.dedup();

    let mut probe = vec![ProbeRecord { t: 0.0, u: to_u(&v)[probe_index] }];
    let mut profiles = Vec::new();
    let mut next = vec![0.0; n];
    let mut t = 0.0;
    let mut steps = 0usize;
    let (mut g_min, mut g_max) = (f64::INFINITY, f64::NEG_INFINITY);
    let inv_dx = 1.0 / dx;
    let inv_dx2 = inv_dx * inv_dx;
    for &stop in &times {
        while t < stop {
            let dt = grid.dt.min(stop - t);
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for i in 0..n {
                let (left, right) = match mode {
                    BoundaryMode::TiltedPeriodic => {
                        let l = if i == 0 { v[n - 1] } else { v[i - 1] };
                        let r = if i + 1 == n { v[0] } else { v[i + 1] };
                        (l, r)
                    }
                    BoundaryMode::WideDomain => {
                        let l = if i == 0 { v[0] - s_left * dx } else { v[i - 1] };
                        let r = if i + 1 == n { v[n - 1] + s_right * dx } else { v[i + 1] };
                        (l, r)
                    }
                };
                let (pm, pp) = match mode {
                    BoundaryMode::TiltedPeriodic => (theta + (v[i] - left) * inv_dx, theta + (right - v[i]) * inv_dx),
                    BoundaryMode::WideDomain => ((v[i] - left) * inv_dx, (right - v[i]) * inv_dx),
                };
                lo = lo.min(pm).min(pp);
                hi = hi.max(pm).max(pp);
                let lap = (right - 2.0 * v[i] + left) * inv_dx2;
                let flux = ham[i](0.5 * (pm + pp)) + 0.5 * alpha * (pp - pm);
                next[i] = v[i] + dt * (diff[i] * lap + flux);
            }
            std::mem::swap(&mut v, &mut next);
            t = if stop - t <= grid.dt { stop } else { t + dt };
            steps += 1;
            g_min = g_min.min(lo);
            g_max = g_max.max(hi);
            let g = lo.abs().max(hi.abs());
            if !g.is_finite() || g > settings.gradient_limit {
                return Err(Error::GradientBlowup { max_gradient: g, limit: settings.gradient_limit, t });
            }
        }
        let u = to_u(&v);
        probe.push(ProbeRecord { t, u: u[probe_index] });
        if settings.keep_profiles {
            profiles.push((t, u));
        }
    }
    if !g_min.is_finite() {
        g_min = 0.0;
        g_max = 0.0;
    }
    let mut observed: f64 = 0.0;
    let stride = (n / 64).max(1);
    for i in (0..n).step_by(stride) {
        for k in 0..=32 {
            let p = g_min + (g_max - g_min) * k as f64 / 32.0;
            observed = observed.max(env.dh_dp(p, xs[i] / epsilon).abs());
        }
    }
    let certificate = MonotonicityCertificate {
        dt: grid.dt,
        cfl_limit,
        stencil_weight,
        dissipation: alpha,
        gradient_range: (g_min, g_max),
        observed_lipschitz: observed,
        monotone: observed <= alpha && stencil_weight <= 1.0 + 1e-12,
    };
    Ok(PdeRun {
        epsilon,
        grid: *grid,
        mode,
        u_final: to_u(&v),
        probe,
        profiles,
        max_gradient: g_min.abs().max(g_max.abs()),
        certificate,
        steps,
    })
}

/// Discretisation policy for homogenization runs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridPolicy {
    /// Spacing at `eps = 1`.
    pub dx: f64,
    pub cfl_safety: f64,
    /// Extra half-width added to the wide domain beyond the propagation cone.
    pub wide_margin: f64,
    /// Overrides the gradient box used to calibrate the dissipation.
    pub gradient_box: Option<f64>,
}

impl Default for GridPolicy {
    fn default() -> Self {
        Self { dx: 0.005, cfl_safety: 0.45, wide_margin: 4.0, gradient_box: None }
    }
}

/// One entry of an `eps -> eps u(1/eps, 0)` sequence.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleValue {
    pub epsilon: f64,
    pub value: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EffectiveEstimate {
    pub theta: f64,
    /// Value at the smallest `eps`.
    pub estimate: f64,
    pub sequence: Vec<ScaleValue>,
    /// Successive differences shrink (a Cauchy-type trend check).
    pub differences_shrink: bool,
    /// `2 v(eps) - v(2 eps)` from the two smallest scales, valid for `O(eps)`
    /// errors.
    pub extrapolated: Option<f64>,
    pub run: PdeRun,
}

/// Envelopes wide enough to bound the gradients of solutions with slope `theta`.
pub fn envelopes_for_slope(env: &dyn Environment, theta: f64) -> Result<GrowthEnvelopes> {
    let mut p_max = 2.0 * (theta.abs() + 1.0);
    for _ in 0..30 {
        let e = compute_envelopes(env, &symmetric_grid(p_max, 400), 129)?;
        if e.gl(p_max) > e.gu(theta) + 1.0 {
            return Ok(e);
        }
        p_max *= 1.5;
    }
    Err(Error::InvalidArgument(format!("envelopes do not grow past G_U({theta})")))
}

/// Largest `|H_p|` on `[-r, r]` over the medium's sample window.
pub fn max_dh_dp(env: &dyn Environment, r: f64, x_samples: usize) -> f64 {
    let (lo, hi) = env.sample_window();
    let mut k: f64 = 0.0;
    for j in 0..x_samples {
        let x = lo + (hi - lo) * j as f64 / (x_samples - 1).max(1) as f64;
        for i in 0..=200 {
            let p = -r + 2.0 * r * i as f64 / 200.0;
            k = k.max(env.dh_dp(p, x).abs());
        }
    }
    k
}

/// Estimates `H_bar(theta)` from linear initial data `theta x`: the value at
/// scale `eps` is `eps u^eps(1, 0) = u(1/eps, 0) / (1/eps)` of the unscaled
/// problem, so a single run to `1/eps_min` with probes yields every scale.
pub fn estimate_effective_value(
    env: &dyn Environment,
    theta: f64,
    epsilons: &[f64],
    policy: &GridPolicy,
) -> Result<EffectiveEstimate> {
    if epsilons.is_empty() || epsilons.iter().any(|&e| !(e > 0.0)) {
        return Err(Error::InvalidArgument("epsilons must be positive and non-empty".into()));
    }
    let mut eps: Vec<f64> = epsilons.to_vec();
    eps.sort_by(|a, b| b.total_cmp(a));
    let t_final = 1.0 / eps[eps.len() - 1];
    let envelopes = envelopes_for_slope(env, theta)?;
    let r = match policy.gradient_box {
        Some(r) => r,
        None => radius_bound(&envelopes, envelopes.gu(theta))?.max(theta.abs()),
    };
    let alpha = 1.05 * max_dh_dp(env, r, 257);
    let (lo, hi) = env.sample_window();
    let mut a_max: f64 = 0.0;
    for j in 0..=1024 {
        a_max = a_max.max(env.diffusion(lo + (hi - lo) * j as f64 / 1024.0));
    }
    let dt = cfl_time_step(policy.dx, a_max, alpha, policy.cfl_safety);
    let (grid, mode) = match env.period() {
        Some(l) => {
            let nx = (l / policy.dx).round() as usize + 1;
            (Grid1D::new(0.0, l, nx, dt, t_final)?, BoundaryMode::TiltedPeriodic)
        }
        None => {
            let half = alpha * t_final + 6.0 * (a_max * t_final).sqrt() + policy.wide_margin;
            let cells = (half / policy.dx).ceil() as usize;
            let w = cells as f64 * policy.dx;
            (Grid1D::new(-w, w, 2 * cells + 1, dt, t_final)?, BoundaryMode::WideDomain)
        }
    };
    let dt = cfl_time_step(grid.dx, a_max, alpha, policy.cfl_safety);
    let grid = Grid1D { dt, ..grid };
    let initial: Vec<f64> = grid.nodes().iter().map(|&x| theta * x).collect();
    let settings = SchemeSettings {
        tilt: theta,
        far_slopes: (theta, theta),
        dissipation: alpha,
        a_max,
        gradient_limit: 2.0 * (r + 1.0),
        probe_times: eps.iter().map(|e| 1.0 / e).collect(),
        probe_x: 0.0,
        keep_profiles: false,
    };
    let run = solve_viscous_hj(env, 1.0, &initial, &grid, mode, &settings)?;
    let sequence: Vec<ScaleValue> = eps
        .iter()
        .map(|&e| {
            let t = 1.0 / e;
            let rec = run
                .probe
                .iter()
                .min_by(|a, b| (a.t - t).abs().total_cmp(&(b.t - t).abs()))
                .expect("probe history");
            ScaleValue { epsilon: e, value: rec.u / rec.t }
        })
        .collect();
    let diffs: Vec<f64> = sequence.windows(2).map(|w| (w[1].value - w[0].value).abs()).collect();
    let differences_shrink = diffs.windows(2).all(|w| w[1] <= w[0]);
    let extrapolated = if sequence.len() >= 2 {
        let (a, b) = (sequence[sequence.len() - 2], sequence[sequence.len() - 1]);
        ((a.epsilon / b.epsilon - 2.0).abs() < 1e-9).then_some(2.0 * b.value - a.value)
    } else {
        None
    };
    Ok(EffectiveEstimate {
        theta,
        estimate: sequence[sequence.len() - 1].value,
        sequence,
        differences_shrink,
        extrapolated,
        run,
    })
}

/// Result of evolving the homogenized equation.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EffectiveRun {
    pub grid: Grid1D,
    pub u_final: Vec<f64>,
    pub dissipation: f64,
}

/// Solves `u_t = H_bar(u_x)` with a Lax-Friedrichs flux and ghost nodes at
/// the initial edge slopes. `initial` holds `g` at the grid nodes.
pub fn solve_effective(eff: &EffectiveHamiltonian, initial: &[f64], grid: &Grid1D) -> Result<EffectiveRun> {
    if initial.len() != grid.nx {
        return Err(Error::InvalidArgument("initial data length differs from the grid".into()));
    }
    let n = grid.nx;
    let dx = grid.dx;
    let slopes: Vec<f64> = initial.windows(2).map(|w| (w[1] - w[0]) / dx).collect();
    let (s_lo, s_hi) = slopes.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &s| (a.min(s), b.max(s)));
    let (t_lo, t_hi) = eff.theta_range();
    for s in [s_lo, s_hi] {
        if s < t_lo || s > t_hi {
            return Err(Error::OutOfRange { theta: s, lo: t_lo, hi: t_hi });
        }
    }
    let alpha = (1.05 * eff.max_slope_on(s_lo, s_hi)).max(1e-12);
    let limit = dx / (2.0 * alpha);
    if grid.dt * alpha / dx > 1.0 {
        return Err(Error::CflViolation { dt: grid.dt, limit });
    }
    let (left_slope, right_slope) = (slopes[0], slopes[slopes.len() - 1]);
    let mut u = initial.to_vec();
    let mut next = vec![0.0; n];
    let mut t = 0.0;
    while t < grid.t_final {
        let dt = grid.dt.min(grid.t_final - t);
        for i in 0..n {
            let l = if i == 0 { u[0] - left_slope * dx } else { u[i - 1] };
            let r = if i + 1 == n { u[n - 1] + right_slope * dx } else { u[i + 1] };
            let pm = ((u[i] - l) / dx).clamp(t_lo, t_hi);
            let pp = ((r - u[i]) / dx).clamp(t_lo, t_hi);
            next[i] = u[i] + dt * (eff.query(0.5 * (pm + pp))? + 0.5 * alpha * (pp - pm));
        }
        std::mem::swap(&mut u, &mut next);
        t = if grid.t_final - t <= grid.dt { grid.t_final } else { t + dt };
    }
    Ok(EffectiveRun { grid: *grid, u_final: u, dissipation: alpha })
}
