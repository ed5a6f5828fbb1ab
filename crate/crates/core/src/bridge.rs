//! Profiles that cross a gap of the effective Hamiltonian: a solution at a
//! shifted level launched from one stationary branch until it meets the
//! other, glued into a C^1 corrector whose tails follow the two branches.

use std::f64::consts::FRAC_2_PI;
use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cell::{CellProblem, StationaryBranch};
use crate::effective::{EffectiveHamiltonian, Gap};
use crate::env::{Environment, GrowthEnvelopes};
use crate::ergodic::{pullback_regimes, ErgodicOptions, WindowBranch};
use crate::error::{Error, Result};
use crate::ode::{shoot, Barrier, ExitSide, OdeOptions, OdeSolution};

/// A solution of the stationary equation usable as a bridge endpoint.
pub trait BranchCurve: Barrier {
    /// `integral of f from 0 to x`.
    fn antiderivative(&self, x: f64) -> f64;
    /// Interval on which the curve is known.
    fn domain(&self) -> (f64, f64);
}

impl BranchCurve for StationaryBranch {
    fn antiderivative(&self, x: f64) -> f64 {
        StationaryBranch::antiderivative(self, x)
    }
    fn domain(&self) -> (f64, f64) {
        (f64::NEG_INFINITY, f64::INFINITY)
    }
}

impl BranchCurve for WindowBranch {
    fn antiderivative(&self, x: f64) -> f64 {
        WindowBranch::antiderivative(self, x)
    }
    fn domain(&self) -> (f64, f64) {
        WindowBranch::domain(self)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BridgeDirection {
    /// Level raised by `delta`, launched from the lower branch into the upper.
    Up,
    /// Level lowered by `delta`, launched from the upper branch into the lower.
    Down,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Piece {
    LeftBranch,
    Bridge,
    RightBranch,
}

impl Piece {
    pub fn as_str(self) -> &'static str {
        match self {
            Piece::LeftBranch => "left_branch",
            Piece::Bridge => "bridge",
            Piece::RightBranch => "right_branch",
        }
    }
}

/// One sample of the assembled corrector.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileSample {
    pub x: f64,
    /// Derivative of the corrector.
    pub f: f64,
    /// The corrector, zero at `z_start`.
    #[serde(rename = "F")]
    pub big_f: f64,
    pub piece: Piece,
}

/// A corrector made of a left branch, a bridge on `[z_start, z_end]` and a
/// right branch.
#[derive(Clone, Serialize)]
pub struct BridgeProfile {
    pub direction: BridgeDirection,
    pub delta: f64,
    /// Level of the two branches.
    pub lambda_bar: f64,
    pub z_start: f64,
    pub z_end: f64,
    pub f_bridge: OdeSolution,
    /// Corrector samples on a padded interval around the bridge.
    pub samples: Vec<ProfileSample>,
    /// Jumps of the corrector's derivative at `z_start` and `z_end`.
    pub joint_mismatch: (f64, f64),
    /// Launch points tried before the accepted one.
    pub launches_tried: usize,
    #[serde(skip)]
    left: Arc<dyn BranchCurve>,
    #[serde(skip)]
    right: Arc<dyn BranchCurve>,
}

impl fmt::Debug for BridgeProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BridgeProfile")
            .field("direction", &self.direction)
            .field("delta", &self.delta)
            .field("lambda_bar", &self.lambda_bar)
            .field("z_start", &self.z_start)
            .field("z_end", &self.z_end)
            .field("joint_mismatch", &self.joint_mismatch)
            .finish()
    }
}

impl BridgeProfile {
    /// Level of the bridge piece.
    pub fn level(&self) -> f64 {
        match self.direction {
            BridgeDirection::Up => self.lambda_bar + self.delta,
            BridgeDirection::Down => self.lambda_bar - self.delta,
        }
    }

    pub fn length(&self) -> f64 {
        self.z_end - self.z_start
    }

    pub fn piece_at(&self, x: f64) -> Piece {
        if x < self.z_start {
            Piece::LeftBranch
        } else if x <= self.z_end {
            Piece::Bridge
        } else {
            Piece::RightBranch
        }
    }

    /// The branch followed left of `z_start`.
    pub fn left_branch(&self) -> &dyn BranchCurve {
        self.left.as_ref()
    }

    /// The branch followed right of `z_end`.
    pub fn right_branch(&self) -> &dyn BranchCurve {
        self.right.as_ref()
    }

    /// The corrector, normalised to vanish at `z_start`.
    pub fn corrector(&self, x: f64) -> f64 {
        match self.piece_at(x) {
            Piece::LeftBranch => self.left.antiderivative(x) - self.left.antiderivative(self.z_start),
            Piece::Bridge => self.f_bridge.antiderivative_at(x) - self.f_bridge.antiderivative_at(self.z_start),
            Piece::RightBranch => {
                self.f_bridge.antiderivative_at(self.z_end) - self.f_bridge.antiderivative_at(self.z_start)
                    + self.right.antiderivative(x)
                    - self.right.antiderivative(self.z_end)
            }
        }
    }

    /// Average slope of the corrector over `[x - span, x]` (or `[x, x + span]`
    /// when `span` is negative).
    pub fn tail_slope(&self, x: f64, span: f64) -> f64 {
        (self.corrector(x) - self.corrector(x - span)) / span
    }
}

/// A C^1 piecewise function checked against the stationary inequality.
/// Each piece is evaluated by its own formula, also outside its interval,
/// which gives the one-sided derivatives at the joints.
pub trait PiecewiseProfile {
    fn direction(&self) -> BridgeDirection;
    /// Level the profile is a super- (up) or subsolution (down) for.
    fn level(&self) -> f64;
    fn joints(&self) -> (f64, f64);
    /// First derivative of the corrector on `piece`.
    fn derivative_on(&self, piece: Piece, x: f64) -> f64;
    /// Second derivative of the corrector on `piece`.
    fn curvature_on(&self, piece: Piece, x: f64) -> f64;
    /// Where the pieces are known.
    fn extent(&self) -> (f64, f64);
}

impl PiecewiseProfile for BridgeProfile {
    fn direction(&self) -> BridgeDirection {
        self.direction
    }
    fn level(&self) -> f64 {
        BridgeProfile::level(self)
    }
    fn joints(&self) -> (f64, f64) {
        (self.z_start, self.z_end)
    }
    fn derivative_on(&self, piece: Piece, x: f64) -> f64 {
        match piece {
            Piece::LeftBranch => self.left.value(x),
            Piece::Bridge => self.f_bridge.eval(x),
            Piece::RightBranch => self.right.value(x),
        }
    }
    fn curvature_on(&self, piece: Piece, x: f64) -> f64 {
        match piece {
            Piece::LeftBranch => self.left.slope(x),
            Piece::Bridge => self.f_bridge.slope(x),
            Piece::RightBranch => self.right.slope(x),
        }
    }
    fn extent(&self) -> (f64, f64) {
        (self.samples[0].x, self.samples[self.samples.len() - 1].x)
    }
}

/// Worst residual on one piece. `excess` is the largest signed amount by
/// which the required inequality fails (negative when it holds strictly).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PieceResidual {
    pub piece: Piece,
    pub excess: f64,
    pub at: f64,
    pub points: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub direction: BridgeDirection,
    pub level: f64,
    pub pieces: Vec<PieceResidual>,
    pub joint_mismatch: (f64, f64),
}

impl VerificationReport {
    /// Largest positive excess over all pieces (zero if none).
    pub fn worst_violation(&self) -> f64 {
        self.pieces.iter().map(|p| p.excess).fold(0.0, f64::max)
    }

    pub fn worst_joint_mismatch(&self) -> f64 {
        self.joint_mismatch.0.max(self.joint_mismatch.1)
    }

    pub fn holds(&self, tol: f64) -> bool {
        self.worst_violation() <= tol && self.worst_joint_mismatch() <= tol
    }
}

/// Evaluates `a F'' + H(F', x)` against the profile's level at `n_check`
/// interior points of each piece: at most the level for up profiles, at least
/// it for down profiles. Also reports the derivative jumps at the joints.
pub fn verify_piecewise_supersolution(profile: &dyn PiecewiseProfile, env: &dyn Environment, n_check: usize) -> VerificationReport {
    let (z0, z1) = profile.joints();
    let (lo, hi) = profile.extent();
    let level = profile.level();
    let sign = match profile.direction() {
        BridgeDirection::Up => 1.0,
        BridgeDirection::Down => -1.0,
    };
    let n = n_check.max(1);
    let pieces = [(Piece::LeftBranch, lo, z0), (Piece::Bridge, z0, z1), (Piece::RightBranch, z1, hi)]
        .into_iter()
        .map(|(piece, a, b)| {
            let mut worst = PieceResidual { piece, excess: f64::NEG_INFINITY, at: a, points: 0 };
            if b > a {
                for j in 1..=n {
                    let x = a + (b - a) * j as f64 / (n + 1) as f64;
                    let lhs = env.diffusion(x) * profile.curvature_on(piece, x)
                        + env.hamiltonian(profile.derivative_on(piece, x), x);
                    let excess = sign * (lhs - level);
                    if excess > worst.excess {
                        worst.excess = excess;
                        worst.at = x;
                    }
                    worst.points += 1;
                }
            }
            worst
        })
        .collect();
    let joint_mismatch = (
        (profile.derivative_on(Piece::LeftBranch, z0) - profile.derivative_on(Piece::Bridge, z0)).abs(),
        (profile.derivative_on(Piece::Bridge, z1) - profile.derivative_on(Piece::RightBranch, z1)).abs(),
    );
    VerificationReport { direction: profile.direction(), level, pieces, joint_mismatch }
}

/// Launch points spread over one period starting at `x0`.
pub fn default_c_grid(x0: f64, period: f64, n: usize) -> Vec<f64> {
    (0..n.max(1)).map(|j| x0 + period * j as f64 / n.max(1) as f64).collect()
}

/// Settings for [`build_bridge_between`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BridgeOptions {
    pub ode: OdeOptions,
    /// A wrong-side exit further than this from the launch point is an error.
    pub exit_tol: f64,
    /// Samples of the assembled corrector per unit length.
    pub samples_per_unit: usize,
    /// Length of each branch tail in the samples.
    pub pad: f64,
}

impl Default for BridgeOptions {
    fn default() -> Self {
        Self {
            ode: OdeOptions { rtol: 1e-11, atol: 1e-11, h_max: 0.02, ..OdeOptions::default() },
            exit_tol: 1e-9,
            samples_per_unit: 200,
            pad: 2.0,
        }
    }
}

/// Builds a bridge between two ordered branches at `lambda_bar`: `lower`
/// (smaller mean) and `upper`. Launch points are tried in `c_grid` order.
#[allow(clippy::too_many_arguments)]
pub fn build_bridge_between(
    env: &dyn Environment,
    lambda_bar: f64,
    lower: Arc<dyn BranchCurve>,
    upper: Arc<dyn BranchCurve>,
    delta: f64,
    direction: BridgeDirection,
    c_grid: &[f64],
    x_max: f64,
    opts: &BridgeOptions,
) -> Result<BridgeProfile> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidArgument(format!("delta {delta} outside (0, 1)")));
    }
    if c_grid.is_empty() {
        return Err(Error::InvalidArgument("empty launch grid".into()));
    }
    let level = match direction {
        BridgeDirection::Up => lambda_bar + delta,
        BridgeDirection::Down => lambda_bar - delta,
    };
    let (lo_dom, hi_dom) = intersect(lower.domain(), upper.domain());
    let x_stop = x_max.min(hi_dom);
    let outcomes = c_grid
        .par_iter()
        .map(|&c| {
            if c < lo_dom || c >= x_stop {
                return Err(Error::InvalidArgument(format!("launch point {c} outside [{lo_dom}, {x_stop})")));
            }
            let start = match direction {
                BridgeDirection::Up => lower.value(c),
                BridgeDirection::Down => upper.value(c),
            };
            shoot(env, level, c, start, lower.as_ref(), upper.as_ref(), x_stop, &opts.ode)
        })
        .collect::<Result<Vec<_>>>()?;
    let target = match direction {
        BridgeDirection::Up => ExitSide::HitUpper,
        BridgeDirection::Down => ExitSide::HitLower,
    };
    for (k, out) in outcomes.into_iter().enumerate() {
        match (out.exit_side, out.exit_x) {
            (side, Some(x)) if side == target => {
                let (left, right) = match direction {
                    BridgeDirection::Up => (lower.clone(), upper.clone()),
                    BridgeDirection::Down => (upper.clone(), lower.clone()),
                };
                return Ok(assemble(lambda_bar, delta, direction, out.start, x, out.solution, left, right, opts, k));
            }
            (ExitSide::Survived, _) => continue,
            (_, Some(x)) => {
                if x - out.start > opts.exit_tol {
                    return Err(Error::WrongSideExit { start: out.start, exit_x: x });
                }
            }
            (_, None) => continue,
        }
    }
    Err(Error::NoFiniteExit { x_max: x_stop, tried: c_grid.len() })
}

fn intersect(a: (f64, f64), b: (f64, f64)) -> (f64, f64) {
    (a.0.max(b.0), a.1.min(b.1))
}

#[allow(clippy::too_many_arguments)]
fn assemble(
    lambda_bar: f64,
    delta: f64,
    direction: BridgeDirection,
    z_start: f64,
    z_end: f64,
    f_bridge: OdeSolution,
    left: Arc<dyn BranchCurve>,
    right: Arc<dyn BranchCurve>,
    opts: &BridgeOptions,
    tried: usize,
) -> BridgeProfile {
    let joint_mismatch =
        ((left.value(z_start) - f_bridge.eval(z_start)).abs(), (f_bridge.eval(z_end) - right.value(z_end)).abs());
    let (dom_lo, _) = left.domain();
    let (_, dom_hi) = right.domain();
    let lo = (z_start - opts.pad).max(dom_lo);
    let hi = (z_end + opts.pad).min(dom_hi);
    let mut profile = BridgeProfile {
        direction,
        delta,
        lambda_bar,
        z_start,
        z_end,
        f_bridge,
        samples: Vec::new(),
        joint_mismatch,
        launches_tried: tried + 1,
        left,
        right,
    };
    let n = ((hi - lo) * opts.samples_per_unit as f64).ceil().max(2.0) as usize;
    let mut xs: Vec<f64> = (0..=n).map(|j| lo + (hi - lo) * j as f64 / n as f64).collect();
    xs.extend([z_start, z_end]);
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    profile.samples = xs
        .into_iter()
        .map(|x| {
            let piece = profile.piece_at(x);
            ProfileSample { x, f: profile.derivative_on(piece, x), big_f: profile.corrector(x), piece }
        })
        .collect();
    profile
}

fn gap_at(eff: &EffectiveHamiltonian, gap_index: usize) -> Result<&Gap> {
    eff.gaps.get(gap_index).ok_or(Error::NoGap { index: gap_index, count: eff.gaps.len() })
}

fn endpoint_branch(cell: &CellProblem, theta: f64, initial: Option<f64>) -> Result<StationaryBranch> {
    if let Some(p0) = initial {
        if let Some(b) = cell.level_for_initial_value(p0)? {
            return Ok(b);
        }
    }
    cell.lambda_for_theta(theta)
}

/// Bridge across gap `gap_index` of a periodic medium. The endpoint branches
/// are recomputed from the cell problem; `x_max` defaults to 50 periods past
/// the last launch point and `c_grid` to 16 points over one period.
#[allow(clippy::too_many_arguments)]
pub fn build_bridge(
    cell: &CellProblem,
    eff: &EffectiveHamiltonian,
    gap_index: usize,
    delta: f64,
    direction: BridgeDirection,
    c_grid: Option<&[f64]>,
    x_max: Option<f64>,
    opts: &BridgeOptions,
) -> Result<BridgeProfile> {
    let gap = gap_at(eff, gap_index)?;
    let f1 = endpoint_branch(cell, gap.theta_left, gap.initial_left)?;
    let f2 = endpoint_branch(cell, gap.theta_right, gap.initial_right)?;
    let period = cell.period();
    let grid = c_grid.map(<[f64]>::to_vec).unwrap_or_else(|| default_c_grid(0.0, period, 16));
    let last = grid.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let x_max = x_max.unwrap_or(last + 50.0 * period);
    let lambda_bar = 0.5 * (f1.lambda + f2.lambda);
    build_bridge_between(cell.env(), lambda_bar, Arc::new(f1), Arc::new(f2), delta, direction, &grid, x_max, opts)
}

/// The outermost regimes of one realization at a gap's level, on `window`.
pub fn gap_branches_random(
    env: &dyn Environment,
    envelopes: &GrowthEnvelopes,
    gap: &Gap,
    window: (f64, f64),
    burn_in: f64,
    opts: &ErgodicOptions,
) -> Result<(WindowBranch, WindowBranch)> {
    let regimes = pullback_regimes(env, envelopes, gap.lambda_bar, window, burn_in, opts)?;
    if regimes.len() < 2 {
        return Err(Error::NonCoalescent {
            lambda: gap.lambda_bar,
            detail: format!("{} regime(s) at the gap level, need two", regimes.len()),
        });
    }
    let first = regimes[0].clone();
    let last = regimes[regimes.len() - 1].clone();
    Ok((first, last))
}

/// `psi(x) = (2/pi) integral_0^x atan(y) dy`, with `0 <= psi'' <= 1` and
/// `|psi'| < 1`.
pub fn psi(x: f64) -> f64 {
    FRAC_2_PI * (x * x.atan() - 0.5 * x.mul_add(x, 1.0).ln())
}

pub fn psi_prime(x: f64) -> f64 {
    FRAC_2_PI * x.atan()
}

pub fn psi_second(x: f64) -> f64 {
    FRAC_2_PI / (1.0 + x * x)
}

/// A stationary corrector `F` with `a F'' + H(F', x) = lambda` (or an
/// inequality), given through its derivatives.
pub trait Corrector: Send + Sync {
    fn value(&self, x: f64) -> f64;
    fn first(&self, x: f64) -> f64;
    fn second(&self, x: f64) -> f64;
}

impl Corrector for StationaryBranch {
    fn value(&self, x: f64) -> f64 {
        self.antiderivative(x)
    }
    fn first(&self, x: f64) -> f64 {
        StationaryBranch::value(self, x)
    }
    fn second(&self, x: f64) -> f64 {
        self.slope(x)
    }
}

/// `v(t, x) = t lambda - s t (K + 1) delta + F(x) - s delta psi(x) - s C`
/// with `s = sign`: a strict subsolution for `s = +1`, a strict
/// supersolution for `s = -1`, when `a <= 1` and `K` bounds the Lipschitz
/// constant of `H` in `p` on the range of `F' - s delta psi'`.
#[derive(Clone)]
pub struct StrictPerturbation {
    pub base: Arc<dyn Corrector>,
    pub lambda: f64,
    pub delta: f64,
    pub k_r: f64,
    pub sign: i8,
    /// Vertical shift, chosen by the caller.
    pub shift: f64,
}

impl fmt::Debug for StrictPerturbation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("StrictPerturbation")
            .field("lambda", &self.lambda)
            .field("delta", &self.delta)
            .field("k_r", &self.k_r)
            .field("sign", &self.sign)
            .field("shift", &self.shift)
            .finish()
    }
}

pub fn build_strict_perturbation(base: Arc<dyn Corrector>, lambda: f64, delta: f64, k_r: f64, sign: i8) -> Result<StrictPerturbation> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidArgument(format!("delta {delta} outside (0, 1)")));
    }
    if sign != 1 && sign != -1 {
        return Err(Error::InvalidArgument(format!("sign must be +1 or -1, got {sign}")));
    }
    if !(k_r >= 0.0) {
        return Err(Error::InvalidArgument(format!("Lipschitz constant {k_r} must be non-negative")));
    }
    Ok(StrictPerturbation { base, lambda, delta, k_r, sign, shift: 0.0 })
}

impl StrictPerturbation {
    fn s(&self) -> f64 {
        f64::from(self.sign)
    }

    pub fn value(&self, t: f64, x: f64) -> f64 {
        let s = self.s();
        t * self.lambda - s * t * (self.k_r + 1.0) * self.delta + self.base.value(x) - s * self.delta * psi(x) - s * self.shift
    }

    pub fn time_derivative(&self) -> f64 {
        self.lambda - self.s() * (self.k_r + 1.0) * self.delta
    }

    pub fn space_derivative(&self, x: f64) -> f64 {
        self.base.first(x) - self.s() * self.delta * psi_prime(x)
    }

    pub fn space_second(&self, x: f64) -> f64 {
        self.base.second(x) - self.s() * self.delta * psi_second(x)
    }

    /// `s (v_t - a v_xx - H(v_x, x))`, non-positive where the strict
    /// inequality holds classically.
    pub fn residual(&self, env: &dyn Environment, x: f64) -> f64 {
        let rhs = env.diffusion(x) * self.space_second(x) + env.hamiltonian(self.space_derivative(x), x);
        self.s() * (self.time_derivative() - rhs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cell::CellOptions;
    use crate::env::benchmarks::*;
    use crate::env::lipschitz_constant;

    #[test]
    fn psi_closed_form() {
        assert_eq!(psi(0.0), 0.0);
        assert_eq!(psi_prime(0.0), 0.0);
        assert!((psi_second(0.0) - FRAC_2_PI).abs() < 1e-15);
        assert!((psi_prime(10.0) - 0.936_549).abs() < 1e-6);
        assert!((psi_prime(-10.0) + 0.936_549).abs() < 1e-6);
        // psi' is the derivative of psi.
        let h = 1e-5;
        for x in [-3.0, -0.4, 0.7, 5.0] {
            assert!(((psi(x + h) - psi(x - h)) / (2.0 * h) - psi_prime(x)).abs() < 1e-9);
        }
    }

    #[test]
    fn perturbation_of_quadratic_corrector_is_strict() {
        let env = quadratic_cosine();
        let cell = CellProblem::new(env.clone(), 6.0, CellOptions::default()).unwrap();
        let branch = cell.lambda_for_theta(1.0).unwrap();
        let lambda = branch.lambda;
        let r = cell.radius_bound(lambda).unwrap() + 1.0;
        let k = lipschitz_constant(&env, r, 512).unwrap();
        let base: Arc<dyn Corrector> = Arc::new(branch);
        for sign in [1, -1] {
            let v = build_strict_perturbation(base.clone(), lambda, 0.1, k, sign).unwrap();
            let worst = (0..1000).map(|j| v.residual(&env, -5.0 + 10.0 * j as f64 / 999.0)).fold(f64::NEG_INFINITY, f64::max);
            assert!(worst <= 0.0, "sign {sign}: {worst}");
        }
    }

    #[test]
    fn rejects_bad_delta_and_sign() {
        let cell = CellProblem::new(quadratic_cosine(), 4.0, CellOptions::default()).unwrap();
        let base: Arc<dyn Corrector> = Arc::new(cell.lambda_for_theta(1.0).unwrap());
        assert!(build_strict_perturbation(base.clone(), 1.0, 1.5, 1.0, 1).is_err());
        assert!(build_strict_perturbation(base, 1.0, 0.5, 1.0, 0).is_err());
    }

    #[test]
    fn no_gap_index_is_reported() {
        let cell = CellProblem::new(pure_quadratic(), 3.0, CellOptions::default()).unwrap();
        let eff = crate::effective::build_effective(&cell, 0.01, 4.0, 41, &Default::default()).unwrap();
        let r = build_bridge(&cell, &eff, 0, 0.1, BridgeDirection::Up, None, None, &BridgeOptions::default());
        assert!(matches!(r, Err(Error::NoGap { index: 0, count: 0 })));
    }

    #[test]
    fn bridge_between_constant_states() {
        // H = p^2 at level 1: f = -1 (repelling) and f = 1 (attracting)
        // bracket a gap-like strip; raising the level pushes the launched
        // solution from -1 up to 1 in finite distance.
        let env = pure_quadratic();
        let cell = CellProblem::new(env.clone(), 3.0, CellOptions::default()).unwrap();
        let lo = cell.lambda_for_theta(-1.0).unwrap();
        let hi = cell.lambda_for_theta(1.0).unwrap();
        let p = build_bridge_between(
            &env,
            1.0,
            Arc::new(lo),
            Arc::new(hi),
            0.2,
            BridgeDirection::Up,
            &[0.0],
            100.0,
            &BridgeOptions::default(),
        )
        .unwrap();
        // Closed form: dx = df / (1.2 - f^2) integrated from -1 to 1.
        let c = 1.2f64.sqrt();
        let expected = 2.0 * (1.0 / c).atanh() / c;
        assert!((p.length() - expected).abs() < 1e-7, "{} vs {expected}", p.length());
        let report = verify_piecewise_supersolution(&p, &env, 200);
        assert!(report.holds(1e-6), "{report:?}");
        assert!((p.tail_slope(p.z_start, 1.0) + 1.0).abs() < 1e-9);
        assert!((p.tail_slope(p.z_end + 1.0, 1.0) - 1.0).abs() < 1e-9);
    }
}
