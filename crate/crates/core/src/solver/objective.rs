use crate::error::{Error, Result};
use crate::operator::{dot, norm, LinearOperator, SpectralEstimates};

const FEASIBILITY_TOL: f64 = 1e-9;

/// `||x||_1 - <x, u>`, which is `sum x_i (1 - u_i)` for `x >= 0`.
pub fn coupling_gap(x: &[f64], u: &[f64]) -> f64 {
    x.iter().zip(u).map(|(xi, ui)| xi.abs() - xi * ui).sum()
}

/// Number of nonzero entries.
pub fn l0_norm(x: &[f64]) -> usize {
    x.iter().filter(|v| **v != 0.0).count()
}

/// Value of the penalized functional; `+inf` outside the constraint sets.
pub fn evaluate_g_rho<O: LinearOperator + ?Sized>(
    op: &O,
    x: &[f64],
    u: &[f64],
    d: &[f64],
    rho: f64,
    k: f64,
) -> f64 {
    if x.iter().any(|v| *v < 0.0) {
        return f64::INFINITY;
    }
    if u.iter().any(|v| v.abs() > 1.0 + FEASIBILITY_TOL) {
        return f64::INFINITY;
    }
    if u.iter().map(|v| v.abs()).sum::<f64>() > k + FEASIBILITY_TOL {
        return f64::INFINITY;
    }
    0.5 * residual_sq(op, x, d) + rho * coupling_gap(x, u)
}

pub(crate) fn residual_sq<O: LinearOperator + ?Sized>(op: &O, x: &[f64], d: &[f64]) -> f64 {
    let ax = op.apply_vec(x);
    ax.iter().zip(d).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Smallest penalty above which the penalized and constrained problems share
/// minimizers: `||A^T d||_2 (2 sigma1^2 / sigma2^2 + 1)`.
pub fn rho_bound<O: LinearOperator + ?Sized>(op: &O, d: &[f64], spectral: &SpectralEstimates) -> Result<f64> {
    let atd = norm(&op.adjoint_vec(d));
    if atd == 0.0 {
        return Ok(0.0);
    }
    if !(spectral.sigma2 > 0.0) {
        return Err(Error::DegenerateSpectrum);
    }
    let ratio = spectral.sigma1 / spectral.sigma2;
    Ok(atd * (2.0 * ratio * ratio + 1.0))
}

/// Minimizer of `||u||_1` over `-1 <= u <= 1` subject to `||x||_1 = <u, x>`.
///
/// `u_i x_i <= |x_i|` with equality only at `u_i = sign(x_i)`, so the
/// constraint pins `u` on the support and the objective sends the rest to 0.
pub fn l0_reformulation(x: &[f64]) -> (f64, Vec<f64>) {
    let u: Vec<f64> = x
        .iter()
        .map(|v| if *v == 0.0 { 0.0 } else { v.signum() })
        .collect();
    let value = u.iter().map(|v| v.abs()).sum();
    debug_assert!((dot(&u, x) - x.iter().map(|v| v.abs()).sum::<f64>()).abs() <= 1e-12 * (1.0 + norm(x)));
    (value, u)
}

pub fn l0_reformulation_value(x: &[f64]) -> f64 {
    l0_reformulation(x).0
}
