//! Largest and smallest (row-space) singular values of the forward operator.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{dot, norm, ForwardOperator, LinearOperator};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralEstimates {
    /// Largest singular value of `A`.
    pub sigma1: f64,
    /// Smallest nonzero singular value of `A` on its row space.
    pub sigma2: f64,
    pub iterations_used: usize,
    pub tolerance: f64,
}

impl SpectralEstimates {
    pub fn with_sigma2(mut self, sigma2: f64) -> Self {
        self.sigma2 = sigma2;
        self
    }
}

/// Power iteration on `A^T A`; returns `(sigma1, iterations)`.
///
/// Stops once the Rayleigh quotient changes by less than `tol` relative.
pub fn power_iteration<O: LinearOperator + ?Sized>(op: &O, tol: f64, max_iter: usize) -> Result<(f64, usize)> {
    if !(tol > 0.0) {
        return Err(Error::invalid("power iteration tolerance must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut v: Vec<f64> = (0..op.input_len()).map(|_| rng.random_range(0.5..1.5)).collect();
    let scale = norm(&v);
    v.iter_mut().for_each(|e| *e /= scale);

    let mut av = vec![0.0; op.output_len()];
    let mut w = vec![0.0; op.input_len()];
    let mut lambda = 0.0;
    for iter in 1..=max_iter {
        op.apply(&v, &mut av);
        let next = dot(&av, &av);
        if next == 0.0 {
            return Ok((0.0, iter));
        }
        op.adjoint(&av, &mut w);
        let wn = norm(&w);
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = wi / wn;
        }
        if (next - lambda).abs() <= tol * next {
            return Ok((next.sqrt(), iter));
        }
        lambda = next;
    }
    Err(Error::NonConvergence {
        iterations: max_iter,
        last_estimate: lambda.sqrt(),
    })
}

/// `sigma1` by power iteration on the full operator; `sigma2` from the
/// Kronecker structure `A = B (x) B`: the nonzero singular values of `A` are
/// products of eigenvalues of the `M x M` Gram matrix `B B^T`, so the
/// smallest one on the row space is `lambda_min(B B^T)`.
pub fn estimate_spectral(op: &ForwardOperator, tol: f64, max_iter: usize) -> Result<SpectralEstimates> {
    let (sigma1, iterations_used) = power_iteration(op, tol, max_iter)?;
    let b = op.row_factor();
    let gram = b.dot(&b.t());
    let m = gram.nrows();
    let eig = SymmetricEigen::new(DMatrix::from_fn(m, m, |i, j| gram[[i, j]]));
    let lambda_max = eig.eigenvalues.max();
    let lambda_min = eig.eigenvalues.min();
    // below rounding level the factor is rank deficient
    let sigma2 = if lambda_min <= lambda_max * f64::EPSILON * m as f64 {
        0.0
    } else {
        lambda_min
    };
    Ok(SpectralEstimates {
        sigma1,
        sigma2: sigma2.min(sigma1),
        iterations_used,
        tolerance: tol,
    })
}

impl ForwardOperator {
    pub fn estimate_spectral(&self, tol: f64, max_iter: usize) -> Result<SpectralEstimates> {
        estimate_spectral(self, tol, max_iter)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::GridGeometry;
    use crate::operator::{materialize, DenseOperator, OperatorSpec, PsfSpec};

    fn op(m: usize, l: usize, sigma: f64, radius: usize) -> ForwardOperator {
        let g = GridGeometry::new(m, l, 100.0).unwrap();
        ForwardOperator::new(OperatorSpec::new(g, PsfSpec::new(sigma, radius, true).unwrap()).unwrap())
    }

    fn dense_singular_values(d: &DenseOperator) -> Vec<f64> {
        let mat = DMatrix::from_row_slice(d.rows(), d.cols(), d.data());
        let mut s: Vec<f64> = mat.singular_values().iter().copied().collect();
        s.sort_by(|a, b| b.total_cmp(a));
        s
    }

    #[test]
    fn identity_like_operator() {
        let a = op(5, 1, 0.1, 1);
        let s = a.estimate_spectral(1e-10, 1000).unwrap();
        assert!((s.sigma1 - 1.0).abs() < 1e-9);
        assert!((s.sigma2 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn dense_identity() {
        let (s, _) = power_iteration(&DenseOperator::identity(7), 1e-12, 10).unwrap();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn matches_dense_decomposition() {
        let a = op(4, 2, 1.0, 3);
        let est = a.estimate_spectral(1e-13, 10_000).unwrap();
        let s = dense_singular_values(&materialize(&a));
        assert!((est.sigma1 - s[0]).abs() < 1e-6, "{} vs {}", est.sigma1, s[0]);
        // thin decomposition: the M^2 = 16 singular values of the row space
        assert_eq!(s.len(), 16);
        assert!((est.sigma2 - s[15]).abs() < 1e-6, "{} vs {}", est.sigma2, s[15]);
    }

    #[test]
    fn homogeneous_in_kernel_scale() {
        let a = op(6, 2, 1.0, 3);
        let dense = materialize(&a);
        let scaled = DenseOperator::new(dense.rows(), dense.cols(), dense.data().iter().map(|v| 2.0 * v).collect());
        let (s1, _) = power_iteration(&dense, 1e-13, 10_000).unwrap();
        let (s2, _) = power_iteration(&scaled, 1e-13, 10_000).unwrap();
        assert!((s2 - 2.0 * s1).abs() < 1e-6);
    }

    #[test]
    fn non_convergence_reports_last_estimate() {
        let a = op(16, 4, 4.39, 18);
        match power_iteration(&a, 1e-15, 2) {
            Err(Error::NonConvergence { iterations, last_estimate }) => {
                assert_eq!(iterations, 2);
                assert!(last_estimate > 0.0);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn zero_operator() {
        let z = DenseOperator::new(2, 3, vec![0.0; 6]);
        assert_eq!(power_iteration(&z, 1e-6, 5).unwrap().0, 0.0);
    }
}
