//! Gaussian point spread function sampled on the fine grid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `2 * sqrt(2 ln 2)`, the FWHM of a unit-variance Gaussian.
pub const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949_3;

pub fn fwhm_to_sigma(fwhm: f64) -> f64 {
    fwhm / FWHM_PER_SIGMA
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsfSpec {
    /// Standard deviation of the Gaussian in fine pixels.
    pub sigma_fine_px: f64,
    /// Truncation radius in fine pixels.
    pub kernel_radius_px: usize,
    /// Unit-sum discrete kernel when set; otherwise the continuous
    /// `1 / (sqrt(2 pi) sigma)` prefactor is used verbatim.
    pub normalize_kernel: bool,
}

impl PsfSpec {
    pub fn new(sigma_fine_px: f64, kernel_radius_px: usize, normalize_kernel: bool) -> Result<Self> {
        if !(sigma_fine_px.is_finite() && sigma_fine_px > 0.0) {
            return Err(Error::invalid(format!("PSF sigma must be positive, got {sigma_fine_px}")));
        }
        let min_radius = (3.0 * sigma_fine_px).ceil() as usize;
        if kernel_radius_px == 0 || kernel_radius_px < min_radius {
            return Err(Error::invalid(format!(
                "kernel radius {kernel_radius_px} is below ceil(3 sigma) = {min_radius}"
            )));
        }
        Ok(Self {
            sigma_fine_px,
            kernel_radius_px,
            normalize_kernel,
        })
    }

    /// Normalized kernel truncated at `ceil(4 sigma)`.
    pub fn from_sigma(sigma_fine_px: f64) -> Result<Self> {
        let radius = (4.0 * sigma_fine_px).ceil().max(1.0) as usize;
        Self::new(sigma_fine_px, radius, true)
    }

    pub fn from_fwhm_nm(fwhm_nm: f64, fine_pixel_nm: f64) -> Result<Self> {
        if !(fine_pixel_nm > 0.0) {
            return Err(Error::invalid("fine pixel size must be positive"));
        }
        Self::from_sigma(fwhm_to_sigma(fwhm_nm) / fine_pixel_nm)
    }

    pub fn kernel_len(&self) -> usize {
        2 * self.kernel_radius_px + 1
    }
}

/// One axis of the separable kernel, indexed `t + radius` for `t` in `[-radius, radius]`.
///
/// No radius check is applied here; [`PsfSpec`] enforces the truncation rule.
pub fn gaussian_kernel_1d(sigma: f64, radius: usize, normalize: bool) -> Vec<f64> {
    let r = radius as isize;
    let mut k: Vec<f64> = (-r..=r)
        .map(|t| {
            let t = t as f64;
            (-t * t / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let scale = if normalize {
        1.0 / k.iter().sum::<f64>()
    } else {
        // outer product of two axes reproduces the 2D prefactor
        (1.0 / ((2.0 * std::f64::consts::PI).sqrt() * sigma)).sqrt()
    };
    k.iter_mut().for_each(|v| *v *= scale);
    k
}

pub fn build_kernel(psf: &PsfSpec) -> Vec<f64> {
    gaussian_kernel_1d(psf.sigma_fine_px, psf.kernel_radius_px, psf.normalize_kernel)
}
