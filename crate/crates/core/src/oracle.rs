//! Reference values for `H = p^2 + V(x)`, `a = 1`, computed without the
//! shooting solvers.
//!
//! With `f = u'/u` the stationary equation becomes the Hill equation
//! `u'' = (lambda - V) u`. Above the bottom of its spectrum the monodromy
//! trace `D` exceeds 2, the Floquet solutions are positive and their
//! logarithmic derivatives are the periodic solutions, with means
//! `+-acosh(D / 2) / L`.

const RK4_STEPS: usize = 20_000;

/// Trace of the monodromy matrix over one period, by fixed-step RK4.
pub fn hill_trace(potential: &dyn Fn(f64) -> f64, period: f64, lambda: f64) -> f64 {
    let h = period / RK4_STEPS as f64;
    let rhs = |x: f64, s: [f64; 4]| -> [f64; 4] {
        let q = lambda - potential(x);
        [s[1], q * s[0], s[3], q * s[2]]
    };
    let mut s = [1.0, 0.0, 0.0, 1.0];
    for k in 0..RK4_STEPS {
        let x = k as f64 * h;
        let k1 = rhs(x, s);
        let k2 = rhs(x + 0.5 * h, std::array::from_fn(|i| s[i] + 0.5 * h * k1[i]));
        let k3 = rhs(x + 0.5 * h, std::array::from_fn(|i| s[i] + 0.5 * h * k2[i]));
        let k4 = rhs(x + h, std::array::from_fn(|i| s[i] + h * k3[i]));
        for i in 0..4 {
            s[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    s[0] + s[3]
}

/// `|theta|` of the periodic solutions at `lambda`, or `None` when the level
/// lies inside the spectrum (no periodic solution).
pub fn hill_mean(potential: &dyn Fn(f64) -> f64, period: f64, lambda: f64) -> Option<f64> {
    let d = hill_trace(potential, period, lambda);
    (d >= 2.0).then(|| (0.5 * d).acosh() / period)
}

/// The level whose periodic solutions have mean `+-theta`.
pub fn hill_level(potential: &dyn Fn(f64) -> f64, period: f64, theta: f64, v_max: f64) -> f64 {
    let target = 2.0 * (theta.abs() * period).cosh();
    let mut hi = v_max + theta * theta + 1.0;
    while hill_trace(potential, period, hi) < target {
        hi += 1.0 + hi.abs();
    }
    // Walk down in small steps so the first crossing is the one above the
    // spectrum, then bisect.
    let mut lo = hi;
    loop {
        lo -= 0.01;
        if hill_trace(potential, period, lo) < target {
            break;
        }
        hi = lo;
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if hill_trace(potential, period, mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 {
            break;
        }
    }
    0.5 * (lo + hi)
}
