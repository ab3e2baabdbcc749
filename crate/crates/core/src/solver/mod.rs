//! Sparse reconstruction under a hard budget `||x||_0 <= k`, `x >= 0`.
//!
//! The budget is rewritten with an auxiliary `u in [-1, 1]^n`,
//! `||u||_1 <= k`, coupled to `x` by `||x||_1 = <x, u>`. Penalizing the
//! coupling gives the biconvex functional
//!
//! ```text
//! G_rho(x, u) = 1/2 ||Ax - d||^2 + i_{x >= 0}(x) + I(u) + rho (||x||_1 - <x, u>)
//! ```
//!
//! which is minimized by proximal alternating minimization (an accelerated
//! projected-gradient x-step, an exact projection u-step) while `rho` is
//! increased geometrically up to its final value.

mod config;
mod continuation;
mod fista;
mod objective;
mod pam;

pub use config::{RhoFinal, SolverConfig};
pub use continuation::{solve, solve_frame, OuterRecord, SolveOutcome, SolveReport};
pub use fista::{polish_on_support, x_step, XStepOutcome};
pub use objective::{coupling_gap, evaluate_g_rho, l0_norm, l0_reformulation, l0_reformulation_value, rho_bound};
pub use pam::{pam_minimize, u_step, PamOutcome};

use crate::operator::LinearOperator;

/// Operator, observation and the Lipschitz data needed by the x-step.
#[derive(Debug, Clone, Copy)]
pub struct Problem<'a, O: ?Sized> {
    pub op: &'a O,
    pub data: &'a [f64],
    /// Largest singular value of `op` (an upper estimate is fine).
    pub sigma1: f64,
}

impl<'a, O: LinearOperator + ?Sized> Problem<'a, O> {
    pub fn new(op: &'a O, data: &'a [f64], sigma1: f64) -> Self {
        Self { op, data, sigma1 }
    }
}

/// Paired iterates and their diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub rho: f64,
    pub objective: f64,
    pub gap: f64,
    pub inner_iterations: usize,
    pub outer_iterations: usize,
}
