use super::fista::x_step;
use super::objective::{coupling_gap, evaluate_g_rho};
use super::{Problem, SolverConfig, SolverState};
use crate::error::{Error, Result};
use crate::knapsack::{project_signed, BoxSimplexCap};
use crate::operator::{norm, LinearOperator};

/// Relative slack allowed on the per-sweep descent check.
const DESCENT_SLACK: f64 = 1e-10;

/// Exact u-step: projection of `u + rho b x` onto `{|u_i| <= 1, ||u||_1 <= k}`.
pub fn u_step(x: &[f64], u: &[f64], rho: f64, cfg: &SolverConfig) -> Result<Vec<f64>> {
    let z: Vec<f64> = u.iter().zip(x).map(|(ui, xi)| ui + rho * cfg.b * xi).collect();
    project_signed(&z, &BoxSimplexCap::new(cfg.k)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PamOutcome {
    pub state: SolverState,
    /// `G_rho` after every full sweep, preceded by its value at the start.
    pub objective_trace: Vec<f64>,
    pub sweeps: usize,
    pub converged: bool,
}

/// Alternates x- and u-steps at fixed `rho` until the relative change of
/// `x` drops below `pam_tol` or `pam_max_iter` sweeps have run.
pub fn pam_minimize<O: LinearOperator + ?Sized>(
    problem: &Problem<'_, O>,
    cfg: &SolverConfig,
    init_x: &[f64],
    init_u: &[f64],
    rho: f64,
) -> Result<PamOutcome> {
    let op = problem.op;
    let d = problem.data;
    let mut x = init_x.to_vec();
    let mut u = init_u.to_vec();
    let mut objective = evaluate_g_rho(op, &x, &u, d, rho, cfg.k);
    if !objective.is_finite() {
        return Err(Error::invalid("PAM started from an infeasible point"));
    }
    let mut trace = vec![objective];
    let mut inner = 0;
    let mut converged = false;
    let mut sweeps = 0;

    for sweep in 1..=cfg.pam_max_iter {
        sweeps = sweep;
        let step = x_step(problem, &x, &u, rho, cfg)?;
        inner += step.iterations;
        let u_next = u_step(&step.x, &u, rho, cfg)?;
        let next = evaluate_g_rho(op, &step.x, &u_next, d, rho, cfg.k);
        if !next.is_finite() {
            return Err(Error::NonFinite(format!("G_rho is {next} after sweep {sweep}")));
        }
        if next > objective + DESCENT_SLACK * objective.abs().max(1.0) {
            return Err(Error::ObjectiveIncrease {
                sweep,
                before: objective,
                after: next,
            });
        }
        let change = step.x.iter().zip(&x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let scale = norm(&step.x).max(norm(&x));
        x = step.x;
        u = u_next;
        objective = next;
        trace.push(objective);
        if change <= cfg.pam_tol * scale {
            converged = true;
            break;
        }
    }

    let gap = coupling_gap(&x, &u);
    Ok(PamOutcome {
        state: SolverState {
            x,
            u,
            rho,
            objective,
            gap,
            inner_iterations: inner,
            outer_iterations: sweeps,
        },
        objective_trace: trace,
        sweeps,
        converged,
    })
}
