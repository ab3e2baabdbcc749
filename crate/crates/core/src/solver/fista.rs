//! Accelerated projected gradient for the x-step.
//!
//! On `x >= 0` the l1 norm is `<x, 1>`, so the x-step objective
//!
//! ```text
//! 1/2 ||Ax - d||^2 + rho <x, 1 - u> + 1/(2c) ||x - x_prev||^2
//! ```
//!
//! is smooth, with gradient Lipschitz constant `sigma1^2 + 1/c`, and the
//! only nonsmooth part is the nonnegativity constraint.

use super::{Problem, SolverConfig};
use crate::error::{Error, Result};
use crate::operator::{norm, LinearOperator};

/// Power iteration approaches `sigma1` from below.
const LIPSCHITZ_MARGIN: f64 = 1.001;

#[derive(Debug, Clone, PartialEq)]
pub struct XStepOutcome {
    pub x: Vec<f64>,
    /// Value of the x-step objective at `x`.
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// `1/2 ||Ax - d||^2 + <linear, x> + inv_c/2 ||x - anchor||^2` over `x >= 0`,
/// optionally restricted to a support mask.
struct Smooth<'a> {
    linear: Option<Vec<f64>>,
    anchor: Option<&'a [f64]>,
    inv_c: f64,
    mask: Option<&'a [bool]>,
}

impl Smooth<'_> {
    fn value(&self, x: &[f64], ax: &[f64], d: &[f64]) -> f64 {
        let mut v = 0.5 * ax.iter().zip(d).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        if let Some(lin) = &self.linear {
            v += lin.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        }
        if let Some(anchor) = self.anchor {
            if self.inv_c > 0.0 {
                v += 0.5 * self.inv_c * x.iter().zip(anchor).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
            }
        }
        v
    }

    fn project(&self, x: &mut [f64]) {
        match self.mask {
            Some(mask) => x
                .iter_mut()
                .zip(mask)
                .for_each(|(v, keep)| *v = if *keep { v.max(0.0) } else { 0.0 }),
            None => x.iter_mut().for_each(|v| *v = v.max(0.0)),
        }
    }
}

fn minimize<O: LinearOperator + ?Sized>(
    problem: &Problem<'_, O>,
    smooth: &Smooth<'_>,
    start: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<XStepOutcome> {
    let op = problem.op;
    let d = problem.data;
    let n = op.input_len();
    let lipschitz = problem.sigma1 * problem.sigma1 * LIPSCHITZ_MARGIN + smooth.inv_c;
    if !(lipschitz > 0.0 && lipschitz.is_finite()) {
        return Err(Error::NonFinite(format!("x-step Lipschitz constant {lipschitz}")));
    }
    let step = 1.0 / lipschitz;
    let mut x = start.to_vec();
    smooth.project(&mut x);
    let mut ax = op.apply_vec(&x);
    let mut fx = smooth.value(&x, &ax, d);
    if !fx.is_finite() {
        return Err(Error::NonFinite(format!("x-step objective {fx} at the starting point")));
    }
    // the best iterate is copied out only when an iteration fails to improve on it
    let mut best = vec![0.0; n];
    let mut best_value = fx;
    let mut best_is_x = true;
    let mut y = x.clone();
    let mut ay = ax.clone();
    let mut theta = 1.0f64;

    let mut residual = vec![0.0; d.len()];
    let mut grad = vec![0.0; n];
    let mut x_new = vec![0.0; n];
    let mut ax_new = vec![0.0; d.len()];
    let mut converged = false;
    let mut iterations = 0;

    let zeros = vec![0.0; n];
    let lin: &[f64] = smooth.linear.as_deref().unwrap_or(&zeros);
    let anchor: &[f64] = smooth.anchor.unwrap_or(&zeros);
    let inv_c = if smooth.anchor.is_some() { smooth.inv_c } else { 0.0 };
    let mut x_norm = norm(&x);

    for iter in 1..=max_iter {
        iterations = iter;
        for ((r, a), b) in residual.iter_mut().zip(&ay).zip(d) {
            *r = a - b;
        }
        op.adjoint(&residual, &mut grad);
        // gradient step, projection and the x-only parts of the objective in one pass
        let (mut change_sq, mut norm_sq, mut lin_term, mut prox_sq) = (0.0, 0.0, 0.0, 0.0);
        {
            // equal-length views let the bounds checks go
            let (grad, lin, anchor, y, x) = (&grad[..n], &lin[..n], &anchor[..n], &y[..n], &x[..n]);
            let x_new = &mut x_new[..n];
            for i in 0..n {
                let g = grad[i] + lin[i] + inv_c * (y[i] - anchor[i]);
                let keep = smooth.mask.is_none_or(|m| m[i]);
                let v = if keep { (y[i] - step * g).max(0.0) } else { 0.0 };
                x_new[i] = v;
                change_sq += (v - x[i]) * (v - x[i]);
                norm_sq += v * v;
                lin_term += lin[i] * v;
                prox_sq += (v - anchor[i]) * (v - anchor[i]);
            }
        }
        op.apply(&x_new, &mut ax_new);
        let resid_sq: f64 = ax_new.iter().zip(d).map(|(a, b)| (a - b) * (a - b)).sum();
        let f_new = 0.5 * resid_sq + lin_term + 0.5 * inv_c * prox_sq;
        if !f_new.is_finite() {
            return Err(Error::NonFinite(format!("x-step objective {f_new} at iteration {iter}")));
        }
        let improved = f_new < best_value;
        if improved {
            best_value = f_new;
        } else if best_is_x {
            best.copy_from_slice(&x);
        }
        best_is_x = improved;

        let change = change_sq.sqrt();
        let new_norm = norm_sq.sqrt();
        let scale = new_norm.max(x_norm);
        x_norm = new_norm;

        let beta = if f_new > fx {
            // function-value restart
            theta = 1.0;
            0.0
        } else {
            let next = 0.5 * (1.0 + (1.0 + 4.0 * theta * theta).sqrt());
            let beta = (theta - 1.0) / next;
            theta = next;
            beta
        };
        for i in 0..n {
            y[i] = x_new[i] + beta * (x_new[i] - x[i]);
        }
        for i in 0..ay.len() {
            ay[i] = ax_new[i] + beta * (ax_new[i] - ax[i]);
        }
        std::mem::swap(&mut x, &mut x_new);
        std::mem::swap(&mut ax, &mut ax_new);
        fx = f_new;

        if change <= tol * scale {
            converged = true;
            break;
        }
    }

    Ok(XStepOutcome {
        x: if best_is_x { x } else { best },
        objective: best_value,
        iterations,
        converged,
    })
}

/// Approximate minimizer of the proximal x-subproblem at `(x_prev, u)`.
///
/// The returned objective never exceeds its value at `x_prev`.
pub fn x_step<O: LinearOperator + ?Sized>(
    problem: &Problem<'_, O>,
    x_prev: &[f64],
    u: &[f64],
    rho: f64,
    cfg: &SolverConfig,
) -> Result<XStepOutcome> {
    let linear: Vec<f64> = u.iter().map(|ui| rho * (1.0 - ui)).collect();
    let smooth = Smooth {
        linear: Some(linear),
        anchor: Some(x_prev),
        inv_c: cfg.inv_c(),
        mask: None,
    };
    minimize(problem, &smooth, x_prev, cfg.fista_tol, cfg.fista_max_iter)
}

/// Nonnegative least squares restricted to `support`, warm-started at `start`.
pub fn polish_on_support<O: LinearOperator + ?Sized>(
    problem: &Problem<'_, O>,
    start: &[f64],
    support: &[bool],
    cfg: &SolverConfig,
) -> Result<XStepOutcome> {
    let smooth = Smooth {
        linear: None,
        anchor: None,
        inv_c: 0.0,
        mask: Some(support),
    };
    minimize(problem, &smooth, start, cfg.fista_tol, cfg.fista_max_iter)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::DenseOperator;

    fn cfg() -> SolverConfig {
        SolverConfig {
            fista_tol: 1e-12,
            fista_max_iter: 5000,
            ..SolverConfig::default()
        }
    }

    #[test]
    fn scalar_without_proximal_term() {
        let op = DenseOperator::identity(1);
        let d = [1.0];
        let problem = Problem::new(&op, &d, 1.0);
        let c = SolverConfig { c: f64::INFINITY, ..cfg() };
        let out = x_step(&problem, &[0.0], &[0.0], 0.3, &c).unwrap();
        assert!((out.x[0] - 0.7).abs() < 1e-8, "{}", out.x[0]);
    }

    #[test]
    fn scalar_with_proximal_term() {
        // x = max((d - rho (1 - u) + x_prev / c) / (1 + 1/c), 0)
        let op = DenseOperator::identity(1);
        for (d, rho, u, x_prev, c) in [
            (1.0, 0.3, 0.0, 0.0, 1.0),
            (2.0, 0.5, 0.4, 1.5, 0.25),
            (0.2, 1.0, -0.5, 0.1, 3.0),
            (-1.0, 0.1, 1.0, 2.0, 0.5),
        ] {
            let data = [d];
            let problem = Problem::new(&op, &data, 1.0);
            let conf = SolverConfig { c, ..cfg() };
            let out = x_step(&problem, &[x_prev], &[u], rho, &conf).unwrap();
            let want = ((d - rho * (1.0 - u) + x_prev / c) / (1.0 + 1.0 / c)).max(0.0);
            assert!((out.x[0] - want).abs() < 1e-8, "{} vs {want}", out.x[0]);
        }
    }

    #[test]
    fn never_worse_than_the_start() {
        let op = DenseOperator::new(2, 4, vec![1.0, 0.8, 0.1, 0.0, 0.0, 0.2, 0.9, 1.0]);
        let d = [1.0, 0.5];
        let problem = Problem::new(&op, &d, 1.6);
        let conf = SolverConfig { fista_max_iter: 1, ..cfg() };
        let start = [0.3, 0.2, 0.0, 0.4];
        let out = x_step(&problem, &start, &[0.0; 4], 0.1, &conf).unwrap();
        let ax = op.apply_vec(&start);
        let f0 = 0.5 * ax.iter().zip(&d).map(|(a, b)| (a - b).powi(2)).sum::<f64>() + 0.1 * start.iter().sum::<f64>();
        assert!(out.objective <= f0);
        assert!(out.x.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn polish_respects_support() {
        let op = DenseOperator::identity(3);
        let d = [1.0, 2.0, 3.0];
        let problem = Problem::new(&op, &d, 1.0);
        let out = polish_on_support(&problem, &[0.0; 3], &[true, false, true], &cfg()).unwrap();
        assert!((out.x[0] - 1.0).abs() < 1e-8);
        assert_eq!(out.x[1], 0.0);
        assert!((out.x[2] - 3.0).abs() < 1e-8);
    }
}
