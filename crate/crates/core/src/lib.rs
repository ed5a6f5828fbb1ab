//! Effective Hamiltonians of one-dimensional viscous Hamilton-Jacobi equations
//! `u_t = a(x) u_xx + H(u_x, x)`.
//!
//! The stationary problem reduces to the Riccati-type equation
//! `a f' + H(f, x) = lambda` for `f = F'`. Its bounded solutions give the
//! effective Hamiltonian through their means; levels where the means jump
//! are gaps, bridged by profiles that cross from one branch to the other.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bridge;
pub mod cell;
pub mod effective;
pub mod env;
pub mod ergodic;
pub mod error;
pub mod export;
pub mod ode;
pub mod oracle;
pub mod pde;

pub use bridge::{BridgeDirection, BridgeProfile, VerificationReport};
pub use cell::{CellOptions, CellProblem, StationaryBranch};
pub use effective::{EffectiveHamiltonian, EffectiveOptions, Gap};
pub use env::{Environment, GrowthEnvelopes, PeriodicEnvironment, RandomEnvironment, RandomFamily};
pub use ergodic::{ErgodicOptions, RegimeEstimate, WindowBranch};
pub use error::{Error, Result};
pub use ode::{Barrier, ExitSide, OdeOptions, OdeSolution, ShootOutcome};
pub use pde::{EffectiveEstimate, Grid1D, PdeRun};
