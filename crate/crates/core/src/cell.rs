//! Periodic media: Poincare displacement, periodic stationary solutions and
//! their means.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{compute_envelopes, radius_bound, symmetric_grid, Environment, GrowthEnvelopes, PeriodicEnvironment};
use crate::error::{Error, Result};
use crate::ode::{integrate_auxiliary, Barrier, OdeOptions, OdeSolution, Terminal};

/// `f(L) - f(0)` for the solution started at `f(0) = p0`, or the side through
/// which it escaped.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Displacement {
    Finite(f64),
    EscapedAbove,
    EscapedBelow,
}

impl Displacement {
    /// Finite value, or an infinity carrying the escape side.
    pub fn signed(&self) -> f64 {
        match self {
            Displacement::Finite(d) => *d,
            Displacement::EscapedAbove => f64::INFINITY,
            Displacement::EscapedBelow => f64::NEG_INFINITY,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellOptions {
    pub ode: OdeOptions,
    /// Bisection tolerance on initial values and levels.
    pub root_tol: f64,
    /// Scan nodes on `[-R - 1, R + 1]`.
    pub scan_points: usize,
    /// Largest accepted `|f(L) - f(0)|` for a periodic solution.
    pub closure_tol: f64,
}

impl Default for CellOptions {
    fn default() -> Self {
        Self {
            ode: OdeOptions { rtol: 1e-11, atol: 1e-11, h_max: 0.02, ..OdeOptions::default() },
            root_tol: 1e-12,
            scan_points: 256,
            closure_tol: 1e-6,
        }
    }
}

impl CellOptions {
    /// Scales every tolerance by `factor`.
    pub fn scaled(mut self, factor: f64) -> Self {
        self.ode.rtol *= factor;
        self.ode.atol *= factor;
        self.root_tol *= factor;
        self
    }
}

/// A periodic solution of `a f' + H(f, x) = lambda`.
#[derive(Clone, Debug, Serialize)]
pub struct StationaryBranch {
    pub lambda: f64,
    /// Mean of `f` over one period.
    pub theta: f64,
    pub initial_value: f64,
    /// `+1` if the Poincare displacement increases through the root
    /// (repelling forward), `-1` if it decreases.
    pub stability_index: i8,
    pub period: f64,
    /// `|f(L) - f(0)|` of the computed profile.
    pub closure_mismatch: f64,
    pub profile: OdeSolution,
}

impl StationaryBranch {
    fn reduce(&self, x: f64) -> (f64, f64) {
        let k = (x / self.period).floor();
        let r = x - k * self.period;
        (k, r.clamp(0.0, self.period))
    }

    pub fn value(&self, x: f64) -> f64 {
        self.profile.eval(self.reduce(x).1)
    }

    pub fn slope(&self, x: f64) -> f64 {
        self.profile.slope(self.reduce(x).1)
    }

    /// `integral of f from 0 to x`, extended with `theta` per period.
    pub fn antiderivative(&self, x: f64) -> f64 {
        let (k, r) = self.reduce(x);
        k * self.period * self.theta + self.profile.antiderivative_at(r)
    }

    pub fn max_abs(&self) -> f64 {
        let (lo, hi) = self.profile.value_range();
        lo.abs().max(hi.abs())
    }
}

impl Barrier for StationaryBranch {
    fn value(&self, x: f64) -> f64 {
        StationaryBranch::value(self, x)
    }
    fn slope(&self, x: f64) -> f64 {
        StationaryBranch::slope(self, x)
    }
    fn level(&self) -> Option<f64> {
        Some(self.lambda)
    }
}

/// A periodic medium with its envelopes and solver settings.
#[derive(Clone, Debug)]
pub struct CellProblem {
    env: PeriodicEnvironment,
    envelopes: GrowthEnvelopes,
    opts: CellOptions,
    period: f64,
}

const ENVELOPE_HALF_NODES: usize = 2000;
const ENVELOPE_X_SAMPLES: usize = 257;

impl CellProblem {
    /// Envelopes are sampled on `[-p_max, p_max]`.
    pub fn new(env: PeriodicEnvironment, p_max: f64, opts: CellOptions) -> Result<Self> {
        let envelopes = compute_envelopes(&env, &symmetric_grid(p_max, ENVELOPE_HALF_NODES), ENVELOPE_X_SAMPLES)?;
        let period = env.period().expect("periodic medium");
        Ok(Self { env, envelopes, opts, period })
    }

    /// Picks `p_max` so that levels up to `lambda_max` have a radius bound.
    pub fn for_levels(env: PeriodicEnvironment, lambda_max: f64, opts: CellOptions) -> Result<Self> {
        let mut p_max = 2.0;
        for _ in 0..30 {
            let problem = Self::new(env.clone(), p_max, opts)?;
            if problem.envelopes.gl(p_max) > lambda_max + 1.0 {
                return Ok(problem);
            }
            p_max *= 1.5;
        }
        Err(Error::InvalidArgument(format!("lower envelope never exceeds {lambda_max}")))
    }

    pub fn env(&self) -> &PeriodicEnvironment {
        &self.env
    }

    pub fn envelopes(&self) -> &GrowthEnvelopes {
        &self.envelopes
    }

    pub fn options(&self) -> &CellOptions {
        &self.opts
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn radius_bound(&self, lambda: f64) -> Result<f64> {
        radius_bound(&self.envelopes, lambda)
    }

    /// Integrates one period from `p0` at level `lambda`.
    pub fn poincare_displacement(&self, lambda: f64, p0: f64) -> Result<Displacement> {
        let r = self.radius_bound(lambda)?;
        let escape = (r + 2.0).max(p0.abs() + 1.0);
        let sol = integrate_auxiliary(&self.env, lambda, 0.0, p0, self.period, &self.opts.ode, escape)?;
        Ok(match sol.terminal {
            Terminal::EscapedAbove { .. } => Displacement::EscapedAbove,
            Terminal::EscapedBelow { .. } => Displacement::EscapedBelow,
            _ => Displacement::Finite(sol.f_values[sol.f_values.len() - 1] - p0),
        })
    }

    /// Signed displacement, using that it is negative below the ground and
    /// for starts beyond the radius bound (the solution then decreases).
    fn displacement_sign_value(&self, lambda: f64, p0: f64) -> Result<f64> {
        if lambda < self.envelopes.ground() {
            return Ok(f64::NEG_INFINITY);
        }
        let r = self.radius_bound(lambda)?;
        if p0.abs() > r + 0.5 {
            return Ok(f64::NEG_INFINITY);
        }
        Ok(self.poincare_displacement(lambda, p0)?.signed())
    }

    /// Builds the periodic profile through `p0`. Repelling orbits are
    /// integrated backward, where they attract.
    pub fn periodic_orbit(&self, lambda: f64, p0: f64, stability_index: i8) -> Result<StationaryBranch> {
        let r = self.radius_bound(lambda)?;
        let escape = (r + 2.0).max(p0.abs() + 1.0);
        let (profile, closure) = if stability_index > 0 {
            let s = integrate_auxiliary(&self.env, lambda, self.period, p0, 0.0, &self.opts.ode, escape)?;
            let c = (s.f_values[0] - p0).abs();
            (s, c)
        } else {
            let s = integrate_auxiliary(&self.env, lambda, 0.0, p0, self.period, &self.opts.ode, escape)?;
            let c = (s.f_values[s.f_values.len() - 1] - p0).abs();
            (s, c)
        };
        if profile.terminal != Terminal::Reached {
            return Err(Error::InvalidArgument(format!(
                "orbit through {p0} at level {lambda} escaped: {:?}",
                profile.terminal
            )));
        }
        let theta = profile.mean();
        Ok(StationaryBranch {
            lambda,
            theta,
            initial_value: p0,
            stability_index,
            period: self.period,
            closure_mismatch: closure,
            profile,
        })
    }

    /// Every periodic solution at `lambda`, sorted by mean.
    pub fn find_periodic_solutions(&self, lambda: f64) -> Result<Vec<StationaryBranch>> {
        let r = self.radius_bound(lambda)?;
        let n = self.opts.scan_points.max(8);
        let ps: Vec<f64> = (0..=n).map(|i| -(r + 1.0) + 2.0 * (r + 1.0) * i as f64 / n as f64).collect();
        let ds = ps
            .par_iter()
            .map(|&p| self.displacement_sign_value(lambda, p))
            .collect::<Result<Vec<f64>>>()?;
        let mut brackets = Vec::new();
        for i in 0..n {
            if ds[i] == 0.0 {
                brackets.push((ps[i], ps[i], 0i8));
            } else if ds[i] * ds[i + 1] < 0.0 {
                brackets.push((ps[i], ps[i + 1], if ds[i] < 0.0 { 1 } else { -1 }));
            }
        }
        let roots = brackets
            .par_iter()
            .map(|&(lo, hi, s)| self.refine_root(lambda, lo, hi, s))
            .collect::<Result<Vec<(f64, i8)>>>()?;
        let mut unique: Vec<(f64, i8)> = Vec::new();
        for (p, s) in roots {
            if unique.last().is_none_or(|&(q, _)| (p - q).abs() > 10.0 * self.opts.root_tol) {
                unique.push((p, s));
            }
        }
        let mut branches = unique
            .par_iter()
            .map(|&(p, s)| self.periodic_orbit(lambda, p, s))
            .collect::<Result<Vec<_>>>()?;
        branches.sort_by(|a, b| a.theta.total_cmp(&b.theta));
        Ok(branches)
    }

    fn refine_root(&self, lambda: f64, mut lo: f64, mut hi: f64, sign: i8) -> Result<(f64, i8)> {
        if sign == 0 {
            let h = 1e-7 * (1.0 + lo.abs());
            let a = self.displacement_sign_value(lambda, lo - h)?;
            let b = self.displacement_sign_value(lambda, lo + h)?;
            return Ok((lo, if b >= a { 1 } else { -1 }));
        }
        // sign > 0: negative at lo, positive at hi.
        for _ in 0..200 {
            if hi - lo <= self.opts.root_tol {
                break;
            }
            let mid = 0.5 * (lo + hi);
            let d = self.displacement_sign_value(lambda, mid)?;
            if d == 0.0 {
                return Ok((mid, sign));
            }
            if (d < 0.0) == (sign > 0) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok((0.5 * (lo + hi), sign))
    }

    /// The level at which the solution through `p0` is periodic. The
    /// displacement at fixed `p0` increases with the level, so the level is
    /// found by bisection; `None` if the bisection limit does not close.
    pub fn level_for_initial_value(&self, p0: f64) -> Result<Option<StationaryBranch>> {
        let ground = self.envelopes.ground();
        let top = self.envelopes.gl(self.envelopes.p_max());
        let mut lo = ground;
        let mut hi = self.envelopes.gu(p0) + 1.0;
        if hi >= top {
            return Err(Error::BeyondGrid { lambda: hi, top });
        }
        while self.displacement_sign_value(hi, p0)? <= 0.0 {
            lo = hi;
            hi = ground + 2.0 * (hi - ground) + 1.0;
            if hi >= top {
                return Err(Error::BeyondGrid { lambda: hi, top });
            }
        }
        for _ in 0..200 {
            if hi - lo <= self.opts.root_tol * (1.0 + hi.abs()) {
                break;
            }
            let mid = 0.5 * (lo + hi);
            if self.displacement_sign_value(mid, p0)? > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let lambda = 0.5 * (lo + hi);
        if lambda < ground {
            return Ok(None);
        }
        let h = 1e-7 * (1.0 + p0.abs());
        let a = self.displacement_sign_value(lambda, p0 - h)?;
        let b = self.displacement_sign_value(lambda, p0 + h)?;
        let stability = if b >= a { 1 } else { -1 };
        match self.periodic_orbit(lambda, p0, stability) {
            Ok(branch) if branch.closure_mismatch <= self.opts.closure_tol => Ok(Some(branch)),
            Ok(_) | Err(Error::InvalidArgument(_)) => Ok(None),
            Err(e) => Err(e),
        }
    }

    /// The periodic solution with mean `theta`, found by bisection on the
    /// initial value (means increase with it).
    pub fn lambda_for_theta(&self, theta: f64) -> Result<StationaryBranch> {
        let mean_at = |p: f64| -> Result<StationaryBranch> {
            self.level_for_initial_value(p)?.ok_or_else(|| {
                Error::InvalidArgument(format!("no periodic solution through initial value {p}"))
            })
        };
        let mut width = 0.5;
        let mut lo = mean_at(theta - width)?;
        let mut hi = mean_at(theta + width)?;
        while lo.theta > theta || hi.theta < theta {
            width *= 2.0;
            if lo.theta > theta {
                lo = mean_at(theta - width)?;
            }
            if hi.theta < theta {
                hi = mean_at(theta + width)?;
            }
            if width > self.envelopes.p_max() {
                return Err(Error::OutOfRange { theta, lo: lo.theta, hi: hi.theta });
            }
        }
        for _ in 0..200 {
            if (hi.initial_value - lo.initial_value) <= self.opts.root_tol {
                break;
            }
            let mid = mean_at(0.5 * (lo.initial_value + hi.initial_value))?;
            if (mid.theta - theta).abs() <= 1e-12 * (1.0 + theta.abs()) {
                return Ok(mid);
            }
            if mid.theta < theta {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(if (lo.theta - theta).abs() <= (hi.theta - theta).abs() { lo } else { hi })
    }
}

/// Mean of a periodic branch over one period.
pub fn branch_mean(branch: &StationaryBranch) -> f64 {
    branch.theta
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::benchmarks::*;

    #[test]
    fn x_independent_roots_are_exact() {
        let cell = CellProblem::new(double_well(0.0), 3.0, CellOptions::default()).unwrap();
        let lam: f64 = 0.5;
        let branches = cell.find_periodic_solutions(lam).unwrap();
        let mut expected: Vec<f64> = [-1.0, 1.0]
            .iter()
            .flat_map(|s: &f64| [s * (1.0 + lam.sqrt()).sqrt(), s * (1.0 - lam.sqrt()).sqrt()])
            .collect();
        expected.sort_by(f64::total_cmp);
        assert_eq!(branches.len(), 4);
        for (b, e) in branches.iter().zip(&expected) {
            assert!((b.theta - e).abs() < 1e-9, "{} vs {e}", b.theta);
        }
        // Alternating stability along the ordered family.
        assert!(branches.windows(2).all(|w| w[0].stability_index != w[1].stability_index));
    }

    #[test]
    fn displacement_escapes_far_below_ground() {
        let cell = CellProblem::new(quadratic_cosine(), 4.0, CellOptions::default()).unwrap();
        // At lambda just above the ground every start drifts down over a period.
        let d = cell.poincare_displacement(-0.99, 0.0).unwrap();
        assert!(d.signed() < 0.0);
        let d = cell.poincare_displacement(8.0, 2.0).unwrap();
        assert!(d.signed() > 0.0);
    }

    #[test]
    fn branch_means_are_ordered_with_initial_values() {
        let cell = CellProblem::new(quadratic_cosine(), 4.0, CellOptions::default()).unwrap();
        let branches = cell.find_periodic_solutions(3.0).unwrap();
        assert_eq!(branches.len(), 2);
        assert!(branches[0].initial_value < branches[1].initial_value);
        assert!((branches[0].theta + branches[1].theta).abs() < 1e-8, "symmetric in p");
        assert_eq!(branches[0].stability_index, 1);
        assert_eq!(branches[1].stability_index, -1);
        for b in &branches {
            assert!(b.closure_mismatch < 1e-8);
            assert!(b.max_abs() <= cell.radius_bound(3.0).unwrap() + 1e-6);
        }
    }

    #[test]
    fn level_for_initial_value_inverts_the_sweep() {
        let cell = CellProblem::new(quadratic_cosine(), 4.0, CellOptions::default()).unwrap();
        let branches = cell.find_periodic_solutions(2.0).unwrap();
        for b in &branches {
            let back = cell.level_for_initial_value(b.initial_value).unwrap().unwrap();
            assert!((back.lambda - 2.0).abs() < 1e-8, "{}", back.lambda);
        }
    }

    #[test]
    fn lambda_for_theta_on_constant_medium() {
        let cell = CellProblem::new(pure_quadratic(), 4.0, CellOptions::default()).unwrap();
        let b = cell.lambda_for_theta(0.7).unwrap();
        assert!((b.lambda - 0.49).abs() < 1e-9, "{}", b.lambda);
    }

    #[test]
    fn antiderivative_extends_periodically() {
        let cell = CellProblem::new(quadratic_cosine(), 4.0, CellOptions::default()).unwrap();
        let b = &cell.find_periodic_solutions(3.0).unwrap()[1];
        let f0 = b.antiderivative(0.3);
        let f3 = b.antiderivative(3.3);
        assert!((f3 - f0 - 3.0 * b.theta).abs() < 1e-8);
        assert!((b.antiderivative(-0.7) - (b.antiderivative(0.3) - b.theta)).abs() < 1e-8);
    }
}
