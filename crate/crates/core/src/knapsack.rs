//! Euclidean projection onto `{0 <= u <= 1, sum(u) <= k}` and its
//! sign-symmetric counterpart `{-1 <= u <= 1, ||u||_1 <= k}`.
//!
//! The projection of `z >= 0` is `u_i = clamp(z_i - lambda, 0, 1)` where
//! `lambda = 0` if that already fits the budget, otherwise a root of the
//! piecewise linear, nonincreasing `phi(lambda) = sum clamp(z_i - lambda, 0, 1)`
//! at level `k`. Roots are found by sorting the breakpoints `{z_i, z_i - 1}`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Budget `k` for the capped box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxSimplexCap {
    k: f64,
}

impl BoxSimplexCap {
    pub fn new(k: f64) -> Result<Self> {
        if !(k.is_finite() && k > 0.0) {
            return Err(Error::invalid(format!("sparsity budget must be positive, got {k}")));
        }
        Ok(Self { k })
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    /// The cap cannot bind in dimension `n` when `k >= n`.
    pub fn is_inactive_for(&self, n: usize) -> bool {
        self.k >= n as f64
    }
}

fn clamp_sum(z_abs: &[f64], lambda: f64) -> f64 {
    z_abs.iter().map(|z| (z - lambda).clamp(0.0, 1.0)).sum()
}

fn check_nonnegative(z_abs: &[f64]) -> Result<()> {
    match z_abs.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
        Some(i) => Err(Error::invalid(format!(
            "projection input entry {i} is {} (must be finite and nonnegative)",
            z_abs[i]
        ))),
        None => Ok(()),
    }
}

/// Threshold `lambda* > 0` with `sum clamp(z_i - lambda*, 0, 1) = k`.
///
/// On a flat stretch of `phi` the smallest root is returned; the projected
/// point does not depend on the choice.
pub fn find_lambda(z_abs: &[f64], k: f64) -> Result<f64> {
    check_nonnegative(z_abs)?;
    if clamp_sum(z_abs, 0.0) <= k {
        return Err(Error::contract("budget is inactive; lambda is zero"));
    }
    let mut breakpoints: Vec<f64> = z_abs
        .iter()
        .flat_map(|&z| [z, z - 1.0])
        .filter(|&b| b > 0.0)
        .collect();
    breakpoints.push(0.0);
    breakpoints.sort_by(f64::total_cmp);
    breakpoints.dedup();

    // phi(breakpoints[0] = 0) > k and phi(max z) = 0 < k; find the first
    // breakpoint where phi drops to k or below.
    let (mut lo, mut hi) = (0usize, breakpoints.len() - 1);
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if clamp_sum(z_abs, breakpoints[mid]) > k {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (b_lo, b_hi) = (breakpoints[lo], breakpoints[hi]);
    let (phi_lo, phi_hi) = (clamp_sum(z_abs, b_lo), clamp_sum(z_abs, b_hi));
    let lambda = b_lo + (phi_lo - k) / (phi_lo - phi_hi) * (b_hi - b_lo);
    Ok(lambda.clamp(b_lo, b_hi))
}

/// Projection of a nonnegative vector onto `{0 <= u <= 1, sum(u) <= k}`.
pub fn project_box_capped(z_abs: &[f64], cap: &BoxSimplexCap) -> Result<Vec<f64>> {
    check_nonnegative(z_abs)?;
    let clipped: Vec<f64> = z_abs.iter().map(|z| z.clamp(0.0, 1.0)).collect();
    if clipped.iter().sum::<f64>() <= cap.k {
        return Ok(clipped);
    }
    let lambda = find_lambda(z_abs, cap.k)?;
    Ok(z_abs.iter().map(|z| (z - lambda).clamp(0.0, 1.0)).collect())
}

/// Projection of any finite vector onto `{-1 <= u <= 1, ||u||_1 <= k}`,
/// obtained as `sign(z) * project_box_capped(|z|)`. Zero maps to zero.
pub fn project_signed(z: &[f64], cap: &BoxSimplexCap) -> Result<Vec<f64>> {
    if let Some(i) = z.iter().position(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("projection input entry {i} is {}", z[i])));
    }
    let magnitudes: Vec<f64> = z.iter().map(|v| v.abs()).collect();
    let projected = project_box_capped(&magnitudes, cap)?;
    Ok(z.iter()
        .zip(projected)
        .map(|(s, p)| if *s < 0.0 { -p } else { p })
        .collect())
}
