//! The acquisition model `A = R_L o H` and generic linear-operator plumbing.

mod dense;
mod forward;
mod kernel;
mod spectral;

pub use dense::{materialize, DenseOperator};
pub use forward::{block_sum, block_sum_array, convolve, Boundary, ForwardOperator, OperatorSpec};
pub use kernel::{build_kernel, fwhm_to_sigma, gaussian_kernel_1d, PsfSpec, FWHM_PER_SIGMA};
pub use spectral::{estimate_spectral, power_iteration, SpectralEstimates};

/// A real linear map between flat vectors, with its adjoint.
///
/// Implementations must be pure: `apply` and `adjoint` may be called
/// concurrently from several threads on the same value.
pub trait LinearOperator: Sync {
    fn input_len(&self) -> usize;
    fn output_len(&self) -> usize;
    /// `out = A x`; `out` is overwritten.
    fn apply(&self, x: &[f64], out: &mut [f64]);
    /// `out = A^T y`; `out` is overwritten.
    fn adjoint(&self, y: &[f64], out: &mut [f64]);

    fn apply_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.output_len()];
        self.apply(x, &mut out);
        out
    }

    fn adjoint_vec(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.input_len()];
        self.adjoint(y, &mut out);
        out
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
