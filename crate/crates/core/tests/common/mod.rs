#![allow(dead_code)]

use hjcell_core::bridge::{BridgeDirection, BridgeProfile, Piece, PiecewiseProfile};
use hjcell_core::env::{symmetric_grid, GeneratorParams, GrowthEnvelopes, RandomFamily};
use hjcell_core::ergodic::family_envelopes;

/// Sparse attractive wells on top of `p^2`. Outside the wells the medium is
/// flat, so the effective Hamiltonian has a plateau at level 0.
pub fn wells_family() -> RandomFamily {
    RandomFamily::new(
        "wells",
        "p^2",
        GeneratorParams::SmoothedBumps { amplitude: -1.0, density: 0.1, width: 0.5, diffusion_depth: 0.0 },
        (-100.0, 300.0),
    )
    .expect("valid family")
}

pub const WELLS_WINDOW: f64 = 200.0;
pub const WELLS_BURN_IN: f64 = 50.0;

pub fn wells_envelopes(seeds: &[u64]) -> GrowthEnvelopes {
    family_envelopes(&wells_family(), seeds, &symmetric_grid(4.0, 400), 4000).expect("envelopes")
}

/// Level grid fine enough to resolve the wells plateau.
pub fn wells_levels() -> Vec<f64> {
    (0..16).map(|k| -0.1 + 0.02 * k as f64).collect()
}

/// A bridge profile with `bump (x - z_start)^2 / 2` added to the corrector on
/// the bridge piece. The derivative stays continuous at the left joint but
/// the curvature term breaks the inequality there.
pub struct Defective<'a> {
    pub inner: &'a BridgeProfile,
    pub bump: f64,
}

impl PiecewiseProfile for Defective<'_> {
    fn direction(&self) -> BridgeDirection {
        self.inner.direction()
    }
    fn level(&self) -> f64 {
        PiecewiseProfile::level(self.inner)
    }
    fn joints(&self) -> (f64, f64) {
        self.inner.joints()
    }
    fn derivative_on(&self, piece: Piece, x: f64) -> f64 {
        let base = self.inner.derivative_on(piece, x);
        match piece {
            Piece::Bridge => base + self.bump * (x - self.inner.z_start),
            _ => base,
        }
    }
    fn curvature_on(&self, piece: Piece, x: f64) -> f64 {
        let base = self.inner.curvature_on(piece, x);
        match piece {
            Piece::Bridge => base + self.bump,
            _ => base,
        }
    }
    fn extent(&self) -> (f64, f64) {
        self.inner.extent()
    }
}

use hjcell_core::pde::{cfl_time_step, max_dh_dp, solve_viscous_hj, BoundaryMode, Grid1D, SchemeSettings};
use hjcell_core::Environment;
use std::f64::consts::PI;

/// `(wavenumber, amplitude, phase)` of one Fourier mode on the unit period.
pub type Mode = (u32, f64, f64);

fn modes_at(modes: &[Mode], x: f64) -> f64 {
    modes.iter().map(|&(k, a, ph)| a * (2.0 * PI * k as f64 * x + ph).sin()).sum()
}

/// Outcome of evolving two ordered data sets side by side.
#[derive(Debug)]
pub struct OrderTrial {
    /// Smallest `upper - lower` over every node and every step.
    pub min_gap: f64,
    pub steps: usize,
    pub monotone: bool,
}

/// Evolves `lower = theta x + modes` and `upper = lower + lift` (with
/// `lift >= 0`) on a unit-period medium, recording both after every step.
pub fn ordered_trial(env: &dyn Environment, theta: f64, modes: &[Mode], lift: &[Mode], lift_floor: f64, steps: usize) -> OrderTrial {
    let nx = 101;
    let r = theta.abs()
        + modes.iter().chain(lift).map(|&(k, a, _)| a.abs() * 2.0 * PI * k as f64).sum::<f64>()
        + 1.0;
    let alpha = 1.05 * max_dh_dp(env, r, 65);
    let dx = 1.0 / (nx - 1) as f64;
    let a_max = (0..=64).map(|j| env.diffusion(j as f64 / 64.0)).fold(0.0, f64::max);
    let dt = cfl_time_step(dx, a_max, alpha, 0.45);
    let grid = Grid1D::new(0.0, 1.0, nx, dt, dt * steps as f64).expect("grid");
    let xs = grid.nodes();
    let lower: Vec<f64> = xs.iter().map(|&x| theta * x + modes_at(modes, x)).collect();
    let lift_min = lift.iter().map(|&(_, a, _)| a.abs()).sum::<f64>();
    let upper: Vec<f64> =
        lower.iter().zip(&xs).map(|(&u, &x)| u + lift_floor + lift_min + modes_at(lift, x)).collect();
    let settings = SchemeSettings {
        tilt: theta,
        far_slopes: (theta, theta),
        dissipation: alpha,
        a_max,
        gradient_limit: 10.0 * r,
        probe_times: (1..steps).map(|k| k as f64 * dt).collect(),
        probe_x: 0.0,
        keep_profiles: true,
    };
    let a = solve_viscous_hj(env, 1.0, &lower, &grid, BoundaryMode::TiltedPeriodic, &settings).expect("lower run");
    let b = solve_viscous_hj(env, 1.0, &upper, &grid, BoundaryMode::TiltedPeriodic, &settings).expect("upper run");
    let mut min_gap = f64::INFINITY;
    for ((_, ua), (_, ub)) in a.profiles.iter().zip(&b.profiles) {
        for (p, q) in ua.iter().zip(ub) {
            min_gap = min_gap.min(q - p);
        }
    }
    OrderTrial { min_gap, steps: a.profiles.len(), monotone: a.certificate.monotone && b.certificate.monotone }
}
