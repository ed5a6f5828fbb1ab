//! Media: diffusion coefficient `a(x)` and Hamiltonian `H(p, x)`, growth
//! envelopes and sampled checks of the standing assumptions.

use std::fmt;
use std::sync::Arc;

use exmex::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Scalar closure `x -> a(x)` or `p -> G(p)`.
pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
/// Two-argument closure `(p, x) -> H(p, x)`.
pub type PhaseFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// A one-dimensional medium for `u_t = a(x) u_xx + H(u_x, x)`.
pub trait Environment: Send + Sync {
    fn diffusion(&self, x: f64) -> f64;
    fn hamiltonian(&self, p: f64, x: f64) -> f64;

    /// `dH/dp`; central difference unless the medium supplies it.
    fn dh_dp(&self, p: f64, x: f64) -> f64 {
        let h = 1e-6 * (1.0 + p.abs());
        (self.hamiltonian(p + h, x) - self.hamiltonian(p - h, x)) / (2.0 * h)
    }

    /// `p -> H(p, x)` at a fixed position, letting media hoist the
    /// position-dependent work out of inner loops.
    fn frozen(&self, x: f64) -> Box<dyn Fn(f64) -> f64 + Send + Sync + '_> {
        Box::new(move |p| self.hamiltonian(p, x))
    }

    /// Spatial period, if the medium is periodic.
    fn period(&self) -> Option<f64>;

    /// Interval on which the medium is meaningfully sampled: one period, or the
    /// generated window of a random realization.
    fn sample_window(&self) -> (f64, f64);

    /// Lower bound on `a`, known analytically or from sampling.
    fn a_floor(&self) -> f64;

    fn label(&self) -> String;
}

impl<E: Environment + ?Sized> Environment for Arc<E> {
    fn diffusion(&self, x: f64) -> f64 {
        (**self).diffusion(x)
    }
    fn hamiltonian(&self, p: f64, x: f64) -> f64 {
        (**self).hamiltonian(p, x)
    }
    fn dh_dp(&self, p: f64, x: f64) -> f64 {
        (**self).dh_dp(p, x)
    }
    fn frozen(&self, x: f64) -> Box<dyn Fn(f64) -> f64 + Send + Sync + '_> {
        (**self).frozen(x)
    }
    fn period(&self) -> Option<f64> {
        (**self).period()
    }
    fn sample_window(&self) -> (f64, f64) {
        (**self).sample_window()
    }
    fn a_floor(&self) -> f64 {
        (**self).a_floor()
    }
    fn label(&self) -> String {
        (**self).label()
    }
}

/// A periodic medium given by closures.
#[derive(Clone)]
pub struct PeriodicEnvironment {
    period: f64,
    diffusion: ScalarFn,
    hamiltonian: PhaseFn,
    dh_dp: Option<PhaseFn>,
    a_floor: f64,
    label: String,
}

impl fmt::Debug for PeriodicEnvironment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PeriodicEnvironment")
            .field("label", &self.label)
            .field("period", &self.period)
            .field("a_floor", &self.a_floor)
            .finish()
    }
}

impl PeriodicEnvironment {
    /// Builds a periodic medium. The diffusion coefficient is sampled once to
    /// check positivity and record its floor.
    pub fn new(
        label: impl Into<String>,
        period: f64,
        diffusion: ScalarFn,
        hamiltonian: PhaseFn,
    ) -> Result<Self> {
        if !(period.is_finite() && period > 0.0) {
            return Err(Error::InvalidArgument(format!("period must be positive, got {period}")));
        }
        let mut a_floor = f64::INFINITY;
        for i in 0..512 {
            let x = period * i as f64 / 512.0;
            let a = diffusion(x);
            if !a.is_finite() {
                return Err(Error::NonFinite { what: "diffusion", p: 0.0, x });
            }
            if a <= 0.0 {
                return Err(Error::NonPositiveDiffusion { x, value: a });
            }
            a_floor = a_floor.min(a);
        }
        Ok(Self { period, diffusion, hamiltonian, dh_dp: None, a_floor, label: label.into() })
    }

    /// Supplies an exact `dH/dp`, used by the PDE scheme's dissipation bound.
    pub fn with_dh_dp(mut self, dh_dp: PhaseFn) -> Self {
        self.dh_dp = Some(dh_dp);
        self
    }

    /// Builds a medium from expressions: `diffusion` in `x`, `hamiltonian` in
    /// `p` and `x`. Standard functions and the constant `PI` are available.
    pub fn from_expressions(
        label: impl Into<String>,
        period: f64,
        diffusion: &str,
        hamiltonian: &str,
    ) -> Result<Self> {
        let a = compile_expression(diffusion, &["x"])?;
        let h = compile_expression(hamiltonian, &["p", "x"])?;
        Self::new(label, period, Arc::new(move |x| a.eval1(x)), Arc::new(move |p, x| h.eval2(p, x)))
    }
}

impl Environment for PeriodicEnvironment {
    fn diffusion(&self, x: f64) -> f64 {
        (self.diffusion)(x)
    }
    fn hamiltonian(&self, p: f64, x: f64) -> f64 {
        (self.hamiltonian)(p, x)
    }
    fn dh_dp(&self, p: f64, x: f64) -> f64 {
        match &self.dh_dp {
            Some(d) => d(p, x),
            None => {
                let h = 1e-6 * (1.0 + p.abs());
                (self.hamiltonian(p + h, x) - self.hamiltonian(p - h, x)) / (2.0 * h)
            }
        }
    }
    fn period(&self) -> Option<f64> {
        Some(self.period)
    }
    fn sample_window(&self) -> (f64, f64) {
        (0.0, self.period)
    }
    fn a_floor(&self) -> f64 {
        self.a_floor
    }
    fn label(&self) -> String {
        self.label.clone()
    }
}

/// A parsed expression with its variables bound in a fixed order.
#[derive(Clone)]
pub struct CompiledExpression {
    expr: Arc<FlatEx<f64>>,
    slots: Vec<usize>,
    source: String,
}

impl fmt::Debug for CompiledExpression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CompiledExpression({})", self.source)
    }
}

impl CompiledExpression {
    /// Evaluates with arguments given in the order of the `vars` passed at
    /// compile time.
    pub fn eval(&self, args: &[f64]) -> f64 {
        let mut ordered = [0.0_f64; 4];
        for (k, &slot) in self.slots.iter().enumerate() {
            ordered[k] = args[slot];
        }
        self.expr.eval(&ordered[..self.slots.len()]).unwrap_or(f64::NAN)
    }
    pub fn eval1(&self, a: f64) -> f64 {
        self.eval(&[a])
    }
    pub fn eval2(&self, a: f64, b: f64) -> f64 {
        self.eval(&[a, b])
    }
    pub fn source(&self) -> &str {
        &self.source
    }
}

/// Parses `source`, allowing only the variables in `vars`.
pub fn compile_expression(source: &str, vars: &[&str]) -> Result<CompiledExpression> {
    let expr = exmex::parse::<f64>(source)
        .map_err(|e| Error::Expression(format!("cannot parse `{source}`: {e}")))?;
    let mut slots = Vec::new();
    for name in expr.var_names() {
        match vars.iter().position(|v| v == name) {
            Some(slot) => slots.push(slot),
            None => {
                return Err(Error::Expression(format!(
                    "`{source}` uses unknown variable `{name}` (allowed: {vars:?})"
                )))
            }
        }
    }
    Ok(CompiledExpression { expr: Arc::new(expr), slots, source: source.to_string() })
}

/// Reference media used across tests, benches and the default scenarios.
pub mod benchmarks {
    use super::*;
    use std::f64::consts::PI;

    fn unit_diffusion() -> ScalarFn {
        Arc::new(|_| 1.0)
    }

    /// `H = p^2 + cos(2 pi x)`, `a = 1`.
    pub fn quadratic_cosine() -> PeriodicEnvironment {
        PeriodicEnvironment::new(
            "quadratic-cosine",
            1.0,
            unit_diffusion(),
            Arc::new(|p, x| p * p + (2.0 * PI * x).cos()),
        )
        .expect("valid medium")
        .with_dh_dp(Arc::new(|p, _| 2.0 * p))
    }

    /// `H = p^2 + sin(2 pi x)`, `a = 1`.
    pub fn quadratic_sine() -> PeriodicEnvironment {
        PeriodicEnvironment::new(
            "quadratic-sine",
            1.0,
            unit_diffusion(),
            Arc::new(|p, x| p * p + (2.0 * PI * x).sin()),
        )
        .expect("valid medium")
        .with_dh_dp(Arc::new(|p, _| 2.0 * p))
    }

    /// `H = (p^2 - 1)^2 + amplitude cos(2 pi x)`, `a = 1`.
    pub fn double_well(amplitude: f64) -> PeriodicEnvironment {
        PeriodicEnvironment::new(
            format!("double-well-{amplitude}"),
            1.0,
            unit_diffusion(),
            Arc::new(move |p, x| {
                let q = p * p - 1.0;
                q * q + amplitude * (2.0 * PI * x).cos()
            }),
        )
        .expect("valid medium")
        .with_dh_dp(Arc::new(|p, _| 4.0 * p * (p * p - 1.0)))
    }

    /// `H = p^2`, `a = 1`: the cell problem is solved by constants.
    pub fn pure_quadratic() -> PeriodicEnvironment {
        PeriodicEnvironment::new("pure-quadratic", 1.0, unit_diffusion(), Arc::new(|p, _| p * p))
            .expect("valid medium")
            .with_dh_dp(Arc::new(|p, _| 2.0 * p))
    }

    /// `H = p`: fails coercivity.
    pub fn linear_drift() -> PeriodicEnvironment {
        PeriodicEnvironment::new("linear-drift", 1.0, unit_diffusion(), Arc::new(|p, _| p))
            .expect("valid medium")
    }

    /// `H = p^2 + cos(2 pi x)` with `a = 1 - depth (1 + cos(2 pi x)) / 2`.
    pub fn quadratic_cosine_varying_diffusion(depth: f64) -> PeriodicEnvironment {
        PeriodicEnvironment::new(
            format!("quadratic-cosine-a{depth}"),
            1.0,
            Arc::new(move |x| 1.0 - depth * 0.5 * (1.0 + (2.0 * PI * x).cos())),
            Arc::new(|p, x| p * p + (2.0 * PI * x).cos()),
        )
        .expect("valid medium")
        .with_dh_dp(Arc::new(|p, _| 2.0 * p))
    }
}

/// Generator of a random stationary medium `H = G(p) + V(x)`,
/// `a = 1 - depth * s(x)` with `s` valued in `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "snake_case")]
pub enum GeneratorParams {
    /// `V(x) = sum_k A_k cos(w_k x + phi_k)` with uniform random phases.
    RandomPhaseTrig {
        amplitudes: Vec<f64>,
        frequencies: Vec<f64>,
        #[serde(default)]
        diffusion_depth: f64,
        #[serde(default = "default_diffusion_frequency")]
        diffusion_frequency: f64,
    },
    /// `V(x) = A sum_i exp(-(x - x_i)^2 / (2 w^2))` over a Poisson point set;
    /// a negative `A` gives wells.
    SmoothedBumps {
        amplitude: f64,
        density: f64,
        width: f64,
        #[serde(default)]
        diffusion_depth: f64,
    },
}

fn default_diffusion_frequency() -> f64 {
    1.0
}

/// A random medium family: everything except the seed.
#[derive(Clone)]
pub struct RandomFamily {
    base: CompiledExpression,
    params: GeneratorParams,
    window: (f64, f64),
    label: String,
}

impl fmt::Debug for RandomFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RandomFamily")
            .field("label", &self.label)
            .field("base", &self.base.source())
            .field("params", &self.params)
            .field("window", &self.window)
            .finish()
    }
}

impl RandomFamily {
    /// `base` is an expression in `p`; `window` is where realizations are
    /// generated (evaluation outside it sees only the padded generation zone).
    pub fn new(
        label: impl Into<String>,
        base: &str,
        params: GeneratorParams,
        window: (f64, f64),
    ) -> Result<Self> {
        if !(window.0 < window.1) {
            return Err(Error::InvalidArgument(format!("empty window {window:?}")));
        }
        let depth = match &params {
            GeneratorParams::RandomPhaseTrig { amplitudes, frequencies, diffusion_depth, .. } => {
                if amplitudes.len() != frequencies.len() {
                    return Err(Error::InvalidArgument(
                        "amplitudes and frequencies differ in length".into(),
                    ));
                }
                *diffusion_depth
            }
            GeneratorParams::SmoothedBumps { density, width, diffusion_depth, .. } => {
                if !(*density > 0.0 && *width > 0.0) {
                    return Err(Error::InvalidArgument("density and width must be positive".into()));
                }
                *diffusion_depth
            }
        };
        if !(0.0..1.0).contains(&depth) {
            return Err(Error::InvalidArgument(format!("diffusion depth {depth} outside [0, 1)")));
        }
        Ok(Self { base: compile_expression(base, &["p"])?, params, window, label: label.into() })
    }

    pub fn window(&self) -> (f64, f64) {
        self.window
    }

    pub fn params(&self) -> &GeneratorParams {
        &self.params
    }

    /// Draws the realization for `seed`.
    pub fn realize(&self, seed: u64) -> RandomEnvironment {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let two_pi = 2.0 * std::f64::consts::PI;
        let field = match &self.params {
            GeneratorParams::RandomPhaseTrig { amplitudes, frequencies, diffusion_depth, diffusion_frequency } => {
                let phases = (0..amplitudes.len()).map(|_| rng.gen::<f64>() * two_pi).collect();
                let a_phase = rng.gen::<f64>() * two_pi;
                Field::Trig {
                    amplitudes: amplitudes.clone(),
                    frequencies: frequencies.clone(),
                    phases,
                    depth: *diffusion_depth,
                    a_frequency: *diffusion_frequency,
                    a_phase,
                }
            }
            GeneratorParams::SmoothedBumps { amplitude, density, width, diffusion_depth } => {
                let pad = 8.0 * width;
                let lo = self.window.0 - pad;
                let hi = self.window.1 + pad;
                let centers = poisson_points(&mut rng, *density, lo, hi);
                let a_centers = poisson_points(&mut rng, *density, lo, hi);
                Field::Bumps {
                    amplitude: *amplitude,
                    width: *width,
                    centers,
                    a_centers,
                    depth: *diffusion_depth,
                }
            }
        };
        RandomEnvironment { seed, family: Arc::new(self.clone()), field }
    }
}

fn poisson_points(rng: &mut ChaCha8Rng, density: f64, lo: f64, hi: f64) -> Vec<f64> {
    let mut points = Vec::new();
    let mut x = lo;
    loop {
        let u: f64 = rng.gen::<f64>();
        x += -(1.0 - u).ln() / density;
        if x >= hi {
            break;
        }
        points.push(x);
    }
    points
}

#[derive(Clone, Debug)]
enum Field {
    Trig {
        amplitudes: Vec<f64>,
        frequencies: Vec<f64>,
        phases: Vec<f64>,
        depth: f64,
        a_frequency: f64,
        a_phase: f64,
    },
    Bumps {
        amplitude: f64,
        width: f64,
        centers: Vec<f64>,
        a_centers: Vec<f64>,
        depth: f64,
    },
}

fn bump_sum(centers: &[f64], width: f64, x: f64) -> f64 {
    let reach = 8.0 * width;
    let start = centers.partition_point(|&c| c < x - reach);
    let inv = 1.0 / (2.0 * width * width);
    centers[start..]
        .iter()
        .take_while(|&&c| c <= x + reach)
        .map(|&c| (-(x - c) * (x - c) * inv).exp())
        .sum()
}

/// One realization of a [`RandomFamily`].
#[derive(Clone)]
pub struct RandomEnvironment {
    seed: u64,
    family: Arc<RandomFamily>,
    field: Field,
}

impl fmt::Debug for RandomEnvironment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RandomEnvironment")
            .field("seed", &self.seed)
            .field("family", &self.family.label)
            .finish()
    }
}

impl RandomEnvironment {
    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// The potential part `V(x)` of `H = G(p) + V(x)`.
    pub fn potential(&self, x: f64) -> f64 {
        match &self.field {
            Field::Trig { amplitudes, frequencies, phases, .. } => amplitudes
                .iter()
                .zip(frequencies)
                .zip(phases)
                .map(|((a, w), ph)| a * (w * x + ph).cos())
                .sum(),
            Field::Bumps { amplitude, width, centers, .. } => amplitude * bump_sum(centers, *width, x),
        }
    }

    /// Number of generated bump centres (zero for trigonometric media).
    pub fn bump_count(&self) -> usize {
        match &self.field {
            Field::Bumps { centers, .. } => centers.len(),
            Field::Trig { .. } => 0,
        }
    }
}

impl Environment for RandomEnvironment {
    fn diffusion(&self, x: f64) -> f64 {
        match &self.field {
            Field::Trig { depth, a_frequency, a_phase, .. } => {
                1.0 - depth * 0.5 * (1.0 + (a_frequency * x + a_phase).cos())
            }
            Field::Bumps { width, a_centers, depth, .. } => {
                if *depth == 0.0 {
                    1.0
                } else {
                    1.0 - depth * (1.0 - (-bump_sum(a_centers, *width, x)).exp())
                }
            }
        }
    }
    fn hamiltonian(&self, p: f64, x: f64) -> f64 {
        self.family.base.eval1(p) + self.potential(x)
    }
    fn frozen(&self, x: f64) -> Box<dyn Fn(f64) -> f64 + Send + Sync + '_> {
        let v = self.potential(x);
        let base = &self.family.base;
        Box::new(move |p| base.eval1(p) + v)
    }
    fn period(&self) -> Option<f64> {
        None
    }
    fn sample_window(&self) -> (f64, f64) {
        self.family.window
    }
    fn a_floor(&self) -> f64 {
        let depth = match &self.field {
            Field::Trig { depth, .. } | Field::Bumps { depth, .. } => *depth,
        };
        1.0 - depth
    }
    fn label(&self) -> String {
        format!("{}#{}", self.family.label, self.seed)
    }
}

/// Produces one medium per seed. Periodic media ignore the seed, which lets
/// deterministic media run through the random-media estimators.
pub trait RealizationFamily: Send + Sync {
    fn realize_env(&self, seed: u64) -> Arc<dyn Environment>;
    fn family_label(&self) -> String;
}

impl RealizationFamily for RandomFamily {
    fn realize_env(&self, seed: u64) -> Arc<dyn Environment> {
        Arc::new(self.realize(seed))
    }
    fn family_label(&self) -> String {
        self.label.clone()
    }
}

impl RealizationFamily for PeriodicEnvironment {
    fn realize_env(&self, _seed: u64) -> Arc<dyn Environment> {
        Arc::new(self.clone())
    }
    fn family_label(&self) -> String {
        self.label.clone()
    }
}

/// Even, `|p|`-monotone lower and upper envelopes of `H` over the sampled
/// positions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthEnvelopes {
    pub p_grid: Vec<f64>,
    pub gl_values: Vec<f64>,
    pub gu_values: Vec<f64>,
    /// Largest jump between adjacent grid values of either envelope: the
    /// amount by which sampling may under- or over-state the true envelope
    /// between nodes.
    pub dominance_tolerance: f64,
}

/// Default rise the lower envelope must show over the grid to count as
/// coercive.
pub const COERCIVITY_MARGIN: f64 = 1e-3;

/// Uniform positions covering the medium's sample window, ends included.
pub fn sample_positions(env: &dyn Environment, n: usize) -> Vec<f64> {
    let (lo, hi) = env.sample_window();
    let n = n.max(2);
    (0..n).map(|j| lo + (hi - lo) * j as f64 / (n - 1) as f64).collect()
}

/// Symmetric uniform grid on `[-p_max, p_max]` with `2 * half + 1` nodes.
pub fn symmetric_grid(p_max: f64, half: usize) -> Vec<f64> {
    let half = half.max(1);
    (0..=2 * half).map(|i| p_max * (i as f64 - half as f64) / half as f64).collect()
}

/// Computes growth envelopes on a grid symmetric about zero.
pub fn compute_envelopes(env: &dyn Environment, p_grid: &[f64], x_samples: usize) -> Result<GrowthEnvelopes> {
    compute_envelopes_with_margin(env, p_grid, x_samples, COERCIVITY_MARGIN)
}

pub fn compute_envelopes_with_margin(
    env: &dyn Environment,
    p_grid: &[f64],
    x_samples: usize,
    margin: f64,
) -> Result<GrowthEnvelopes> {
    let n = p_grid.len();
    if n < 3 || n.is_multiple_of(2) {
        return Err(Error::InvalidArgument("envelope grid needs an odd count of at least 3".into()));
    }
    let scale = p_grid[n - 1].abs().max(1.0);
    for i in 0..n {
        if (p_grid[i] + p_grid[n - 1 - i]).abs() > 1e-12 * scale {
            return Err(Error::InvalidArgument("envelope grid must be symmetric about 0".into()));
        }
        if i > 0 && p_grid[i] <= p_grid[i - 1] {
            return Err(Error::InvalidArgument("envelope grid must be increasing".into()));
        }
    }
    let xs = sample_positions(env, x_samples);
    let half = n / 2;
    // Raw extremes over x, folded onto |p|.
    let mut lo_raw = vec![f64::INFINITY; half + 1];
    let mut hi_raw = vec![f64::NEG_INFINITY; half + 1];
    for (i, &p) in p_grid.iter().enumerate() {
        let k = i.abs_diff(half);
        for &x in &xs {
            let h = env.hamiltonian(p, x);
            if !h.is_finite() {
                return Err(Error::NonFinite { what: "hamiltonian", p, x });
            }
            lo_raw[k] = lo_raw[k].min(h);
            hi_raw[k] = hi_raw[k].max(h);
        }
    }
    // Lower envelope: inf over |q| >= |p|; upper envelope: sup over |q| <= |p|.
    let mut gl_half = lo_raw.clone();
    for k in (0..half).rev() {
        gl_half[k] = gl_half[k].min(gl_half[k + 1]);
    }
    let mut gu_half = hi_raw.clone();
    for k in 1..=half {
        gu_half[k] = gu_half[k].max(gu_half[k - 1]);
    }
    // A chord of the tabulated values overshoots a convex lower envelope (and
    // undershoots a concave upper one) between nodes by up to h^2 |G''| / 8.
    // Move those nodes outward by twice that, estimated from nearby second
    // differences, so the linear interpolants bracket H at every p.
    let slack = chord_slack(&gl_half, 1.0).into_iter().zip(chord_slack(&gu_half, -1.0));
    for (k, (sl, su)) in slack.enumerate() {
        gl_half[k] -= sl;
        gu_half[k] += su;
    }
    for k in (0..half).rev() {
        gl_half[k] = gl_half[k].min(gl_half[k + 1]);
    }
    for k in 1..=half {
        gu_half[k] = gu_half[k].max(gu_half[k - 1]);
    }
    let rise = gl_half[half] - gl_half[0];
    if !(rise > margin) {
        return Err(Error::NotCoercive { rise, margin });
    }
    let unfold = |half_vals: &[f64]| -> Vec<f64> {
        (0..n).map(|i| half_vals[i.abs_diff(half)]).collect()
    };
    let mut tol: f64 = 0.0;
    for k in 1..=half {
        tol = tol.max(gl_half[k] - gl_half[k - 1]).max(gu_half[k] - gu_half[k - 1]);
    }
    Ok(GrowthEnvelopes {
        p_grid: p_grid.to_vec(),
        gl_values: unfold(&gl_half),
        gu_values: unfold(&gu_half),
        dominance_tolerance: tol,
    })
}

/// Largest `sign * second difference / 4`, floored at zero, over the two
/// cells on each side of every node of a table on `|p|` (reflected evenly at
/// `p = 0`). `sign = 1` measures convexity, `-1` concavity.
fn chord_slack(vals: &[f64], sign: f64) -> Vec<f64> {
    let m = vals.len();
    let at = |j: isize| vals[j.unsigned_abs().min(m - 1)];
    let second: Vec<f64> = (0..m as isize)
        .map(|j| if j as usize + 1 >= m { 0.0 } else { (sign * (at(j - 1) - 2.0 * at(j) + at(j + 1))).max(0.0) })
        .collect();
    (0..m)
        .map(|k| {
            let lo = k.saturating_sub(2);
            let hi = (k + 2).min(m - 1);
            second[lo..=hi].iter().fold(0.0_f64, |a, &b| a.max(b)) / 4.0
        })
        .collect()
}

impl GrowthEnvelopes {
    fn half(&self) -> usize {
        self.p_grid.len() / 2
    }

    pub fn p_max(&self) -> f64 {
        self.p_grid[self.p_grid.len() - 1]
    }

    fn interpolate(&self, values: &[f64], p: f64) -> f64 {
        let half = self.half();
        let q = p.abs();
        let nodes = &self.p_grid[half..];
        let vals = &values[half..];
        if q >= nodes[nodes.len() - 1] {
            return vals[vals.len() - 1];
        }
        let k = nodes.partition_point(|&v| v <= q).max(1) - 1;
        let t = (q - nodes[k]) / (nodes[k + 1] - nodes[k]);
        vals[k] + t * (vals[k + 1] - vals[k])
    }

    /// Lower envelope, linear between nodes and flat beyond the grid.
    pub fn gl(&self, p: f64) -> f64 {
        self.interpolate(&self.gl_values, p)
    }

    /// Upper envelope, linear between nodes and flat beyond the grid.
    pub fn gu(&self, p: f64) -> f64 {
        self.interpolate(&self.gu_values, p)
    }

    /// `G_L(0)`: no stationary solution exists below this level.
    pub fn ground(&self) -> f64 {
        self.gl_values[self.half()]
    }

    /// Merges envelopes on the same grid (pointwise min of lower, max of upper).
    pub fn merge(&self, other: &GrowthEnvelopes) -> Result<GrowthEnvelopes> {
        if self.p_grid != other.p_grid {
            return Err(Error::InvalidArgument("cannot merge envelopes on different grids".into()));
        }
        let gl_values = self.gl_values.iter().zip(&other.gl_values).map(|(a, b)| a.min(*b)).collect();
        let gu_values = self.gu_values.iter().zip(&other.gu_values).map(|(a, b)| a.max(*b)).collect();
        Ok(GrowthEnvelopes {
            p_grid: self.p_grid.clone(),
            gl_values,
            gu_values,
            dominance_tolerance: self.dominance_tolerance.max(other.dominance_tolerance),
        })
    }
}

/// Largest `p >= 0` with `G_L(p) <= lambda`, located inside its bracketing
/// grid cell by linear interpolation.
pub fn radius_bound(envelopes: &GrowthEnvelopes, lambda: f64) -> Result<f64> {
    let half = envelopes.half();
    let nodes = &envelopes.p_grid[half..];
    let gl = &envelopes.gl_values[half..];
    if lambda < gl[0] {
        return Err(Error::BelowGround { lambda, ground: gl[0] });
    }
    let top = gl[gl.len() - 1];
    if lambda >= top {
        return Err(Error::BeyondGrid { lambda, top });
    }
    // gl is nondecreasing; find the last node with gl <= lambda.
    let k = gl.partition_point(|&v| v <= lambda) - 1;
    let (g0, g1) = (gl[k], gl[k + 1]);
    let t = if g1 > g0 { (lambda - g0) / (g1 - g0) } else { 0.0 };
    Ok(nodes[k] + t * (nodes[k + 1] - nodes[k]))
}

/// Sampled Lipschitz bound of `H` in `p` over `|p| <= r`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LipschitzSample {
    pub radius: f64,
    pub constant: f64,
}

/// Sampled modulus `sup |H(p, x) - H(p, 0)|` over `|p| <= radius`, `|x| <= r`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModulusSample {
    pub radius: f64,
    pub points: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    /// Sampled `sup |sqrt a(x) - sqrt a(x0)| / |x - x0|`.
    pub kappa_hat: f64,
    pub lipschitz_table: Vec<LipschitzSample>,
    pub modulus_table: Vec<ModulusSample>,
    pub violations: Vec<String>,
}

/// Sampled Lipschitz constant of `H(., x)` on `[-r, r]` over `n` nodes: the
/// larger of the secant slopes and `|dH/dp|` at the nodes.
pub fn lipschitz_constant(env: &dyn Environment, r: f64, n: usize) -> Result<f64> {
    let ps = symmetric_grid(r, n.max(2) / 2);
    let xs = sample_positions(env, n.max(2));
    let mut k: f64 = 0.0;
    for &x in &xs {
        let mut prev = env.hamiltonian(ps[0], x);
        for w in ps.windows(2) {
            let h = env.hamiltonian(w[1], x);
            if !h.is_finite() {
                return Err(Error::NonFinite { what: "hamiltonian", p: w[1], x });
            }
            k = k.max((h - prev).abs() / (w[1] - w[0]));
            prev = h;
        }
        for &p in &ps {
            k = k.max(env.dh_dp(p, x).abs());
        }
    }
    Ok(k)
}

/// Samples the standing assumptions. Hard failures (non-positive or
/// non-finite coefficients) are errors; soft failures are listed.
pub fn validate_assumptions(env: &dyn Environment, p_max: f64, n_samples: usize) -> Result<AssumptionReport> {
    if !(p_max > 0.0) {
        return Err(Error::InvalidArgument(format!("p_max must be positive, got {p_max}")));
    }
    let n = n_samples.max(8);
    let (w_lo, w_hi) = env.sample_window();
    let (lo, hi) = match env.period() {
        Some(l) => (-l, l),
        None => (w_lo, w_hi),
    };
    let xs: Vec<f64> = (0..n).map(|j| lo + (hi - lo) * j as f64 / (n - 1) as f64).collect();
    let mut violations = Vec::new();

    let x0 = 0.0_f64.clamp(lo, hi);
    let a0 = env.diffusion(x0);
    let mut kappa_hat: f64 = 0.0;
    let mut a_above_one = false;
    for &x in &xs {
        let a = env.diffusion(x);
        if !a.is_finite() {
            return Err(Error::NonFinite { what: "diffusion", p: 0.0, x });
        }
        if a <= 0.0 {
            return Err(Error::NonPositiveDiffusion { x, value: a });
        }
        if a > 1.0 + 1e-12 {
            a_above_one = true;
        }
        if (x - x0).abs() > 1e-12 {
            kappa_hat = kappa_hat.max((a.sqrt() - a0.sqrt()).abs() / (x - x0).abs());
        }
    }
    if a_above_one {
        violations.push("diffusion exceeds 1 at a sampled point".to_string());
    }
    if !kappa_hat.is_finite() {
        violations.push("square root of diffusion is not Lipschitz on the samples".to_string());
    }

    let mut lipschitz_table = Vec::new();
    for r in [1.0, 0.5 * p_max, p_max] {
        let k = lipschitz_constant(env, r, n)?;
        lipschitz_table.push(LipschitzSample { radius: r, constant: k });
    }

    let half_len = 0.5 * (hi - lo);
    // Halve down to a hundredth of the unit scale so that features narrower
    // than the window still show their modulus decaying.
    let floor = 1e-2 * half_len.min(1.0);
    let radii: Vec<f64> =
        (0..24).map(|k| half_len * 0.5_f64.powi(k)).take_while(|&r| r >= floor).collect();
    let ps = symmetric_grid(p_max, n / 2);
    let p_stride = (ps.len() / 64).max(1);
    let mut points = Vec::new();
    for &r in &radii {
        let mut m: f64 = 0.0;
        for j in 0..n {
            let x = x0 - r + 2.0 * r * j as f64 / (n - 1) as f64;
            for &p in ps.iter().step_by(p_stride) {
                let d = env.hamiltonian(p, x) - env.hamiltonian(p, x0);
                if !d.is_finite() {
                    return Err(Error::NonFinite { what: "hamiltonian", p, x });
                }
                m = m.max(d.abs());
            }
        }
        points.push((r, m));
    }
    let m_big = points[0].1;
    let m_small = points[points.len() - 1].1;
    if m_big > 1e-9 && m_small > 0.5 * m_big {
        violations.push(format!(
            "spatial modulus does not decay near 0: m({:.3e}) = {m_small:.3e} vs m({:.3e}) = {m_big:.3e}",
            radii[radii.len() - 1], radii[0]
        ));
    }
    let modulus_table = vec![ModulusSample { radius: p_max, points }];

    match compute_envelopes(env, &symmetric_grid(p_max, n / 2), n) {
        Ok(_) => {}
        Err(Error::NotCoercive { rise, .. }) => violations.push(format!(
            "lower envelope rises only {rise:.3e} on [-{p_max}, {p_max}]: not coercive"
        )),
        Err(e) => return Err(e),
    }

    if let Some(l) = env.period() {
        let mut worst: f64 = 0.0;
        for &x in &xs {
            worst = worst.max((env.diffusion(x + l) - env.diffusion(x)).abs());
            for &p in ps.iter().step_by((ps.len() / 9).max(1)) {
                worst = worst.max((env.hamiltonian(p, x + l) - env.hamiltonian(p, x)).abs());
            }
        }
        if worst > 1e-9 {
            violations.push(format!("medium is not {l}-periodic: deviation {worst:.3e}"));
        }
    }

    Ok(AssumptionReport { kappa_hat, lipschitz_table, modulus_table, violations })
}
