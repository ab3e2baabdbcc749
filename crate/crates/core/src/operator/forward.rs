//! Gaussian blur `H`, block-sum reduction `R_L` and their composition.
//!
//! With zero padding the separable blur is `K X K^T` for the banded
//! symmetric Toeplitz matrix `K` built from the 1D kernel, and the
//! reduction is `R X R^T` with `R` holding `L` ones per row. The composed
//! operator therefore factors as `A x = B X B^T` with `B = R K`
//! (`M x ML`, banded). [`ForwardOperator`] applies `A` and `A^T` through
//! that factor; [`convolve`] and [`block_sum`] are the direct two-stage
//! route and are kept as the reference implementation.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::kernel::{build_kernel, PsfSpec};
use super::LinearOperator;
use crate::error::{Error, Result};
use crate::geometry::{CoarseFrame, FineImage, GridGeometry};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Boundary {
    #[default]
    ZeroPad,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatorSpec {
    pub geometry: GridGeometry,
    pub psf: PsfSpec,
    pub boundary: Boundary,
}

impl OperatorSpec {
    pub fn new(geometry: GridGeometry, psf: PsfSpec) -> Result<Self> {
        if geometry.fine_size() <= 2 * psf.kernel_radius_px {
            return Err(Error::invalid(format!(
                "fine grid of {} pixels is too small for a kernel of radius {}",
                geometry.fine_size(),
                psf.kernel_radius_px
            )));
        }
        Ok(Self {
            geometry,
            psf,
            boundary: Boundary::ZeroPad,
        })
    }
}

/// Separable 2D convolution with zero padding outside the grid.
pub fn convolve(x: &FineImage, psf: &PsfSpec) -> FineImage {
    let k = build_kernel(psf);
    let out = convolve_array(x.values(), &k);
    FineImage::new(*x.geometry(), out).expect("convolution preserves shape")
}

fn convolve_array(x: &Array2<f64>, k: &[f64]) -> Array2<f64> {
    let (rows, cols) = x.dim();
    let r = (k.len() / 2) as isize;
    let mut tmp = Array2::<f64>::zeros((rows, cols));
    for i in 0..rows {
        for j in 0..cols {
            let mut acc = 0.0;
            for (t, kt) in (-r..=r).zip(k) {
                let jj = j as isize - t;
                if jj >= 0 && (jj as usize) < cols {
                    acc += kt * x[[i, jj as usize]];
                }
            }
            tmp[[i, j]] = acc;
        }
    }
    let mut out = Array2::<f64>::zeros((rows, cols));
    for i in 0..rows {
        for j in 0..cols {
            let mut acc = 0.0;
            for (t, kt) in (-r..=r).zip(k) {
                let ii = i as isize - t;
                if ii >= 0 && (ii as usize) < rows {
                    acc += kt * tmp[[ii as usize, j]];
                }
            }
            out[[i, j]] = acc;
        }
    }
    out
}

/// Sums each `L x L` block of a fine image into one coarse pixel.
pub fn block_sum(x: &FineImage) -> CoarseFrame {
    let g = *x.geometry();
    let out = block_sum_array(x.values(), g.upsample()).expect("fine image matches its geometry");
    CoarseFrame::new(g, out, 0).expect("block sum yields the coarse shape")
}

pub fn block_sum_array(x: &Array2<f64>, upsample: usize) -> Result<Array2<f64>> {
    let (rows, cols) = x.dim();
    if upsample == 0 || rows != cols || rows % upsample != 0 {
        return Err(Error::shape(
            format!("square grid divisible by {upsample}"),
            format!("{rows}x{cols}"),
        ));
    }
    let m = rows / upsample;
    let mut out = Array2::zeros((m, m));
    for ((i, j), v) in x.indexed_iter() {
        out[[i / upsample, j / upsample]] += v;
    }
    Ok(out)
}

/// One row of the banded factor `B = R K`: nonzeros start at column `start`.
#[derive(Debug, Clone)]
struct Band {
    start: usize,
    weights: Vec<f64>,
}

/// Dot product with independent partial sums, which lets the compiler vectorize it.
fn unrolled_dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (a4, a_tail) = a.split_at(a.len() / 4 * 4);
    let (b4, b_tail) = b.split_at(a4.len());
    for (ca, cb) in a4.chunks_exact(4).zip(b4.chunks_exact(4)) {
        for t in 0..4 {
            acc[t] += ca[t] * cb[t];
        }
    }
    let tail: f64 = a_tail.iter().zip(b_tail).map(|(x, y)| x * y).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Matrix-free `A` and `A^T` for one [`OperatorSpec`].
#[derive(Debug, Clone)]
pub struct ForwardOperator {
    spec: OperatorSpec,
    kernel: Vec<f64>,
    bands: Vec<Band>,
}

impl ForwardOperator {
    pub fn new(spec: OperatorSpec) -> Self {
        let kernel = build_kernel(&spec.psf);
        let g = spec.geometry;
        let (m, l, n) = (g.coarse_size(), g.upsample(), g.fine_size());
        let r = spec.psf.kernel_radius_px;
        let bands = (0..m)
            .map(|p| {
                let start = (p * l).saturating_sub(r);
                let end = (p * l + l - 1 + r).min(n - 1);
                let weights = (start..=end)
                    .map(|j| {
                        (p * l..p * l + l)
                            .filter(|&i| i.abs_diff(j) <= r)
                            .map(|i| kernel[(i as isize - j as isize + r as isize) as usize])
                            .sum()
                    })
                    .collect();
                Band { start, weights }
            })
            .collect();
        Self { spec, kernel, bands }
    }

    pub fn spec(&self) -> &OperatorSpec {
        &self.spec
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.spec.geometry
    }

    pub fn kernel(&self) -> &[f64] {
        &self.kernel
    }

    /// The factor `B = R K` as a dense `M x ML` array.
    pub fn row_factor(&self) -> Array2<f64> {
        let g = self.spec.geometry;
        let mut b = Array2::zeros((g.coarse_size(), g.fine_size()));
        for (p, band) in self.bands.iter().enumerate() {
            for (t, w) in band.weights.iter().enumerate() {
                b[[p, band.start + t]] = *w;
            }
        }
        b
    }

    pub fn apply_a(&self, x: &FineImage) -> Result<CoarseFrame> {
        self.check_geometry(x.geometry())?;
        let out = self.apply_vec(x.values().as_slice().expect("standard layout").as_ref());
        CoarseFrame::from_flat(*x.geometry(), out, 0)
    }

    pub fn apply_a_adjoint(&self, d: &CoarseFrame) -> Result<FineImage> {
        self.check_geometry(d.geometry())?;
        let out = self.adjoint_vec(&d.to_flat());
        FineImage::from_flat(*d.geometry(), out)
    }

    fn check_geometry(&self, g: &GridGeometry) -> Result<()> {
        if *g != self.spec.geometry {
            return Err(Error::shape(
                format!("{:?}", self.spec.geometry),
                format!("{g:?}"),
            ));
        }
        Ok(())
    }
}

impl LinearOperator for ForwardOperator {
    fn input_len(&self) -> usize {
        self.spec.geometry.fine_len()
    }

    fn output_len(&self) -> usize {
        self.spec.geometry.coarse_len()
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        let n = self.spec.geometry.fine_size();
        let m = self.spec.geometry.coarse_size();
        debug_assert_eq!(x.len(), n * n);
        debug_assert_eq!(out.len(), m * m);
        // s = B X, stored row-major m x n
        let mut s = vec![0.0; m * n];
        for (s_row, band) in s.chunks_exact_mut(n).zip(&self.bands) {
            for (w, x_row) in band.weights.iter().zip(x.chunks_exact(n).skip(band.start)) {
                for (sv, xv) in s_row.iter_mut().zip(x_row) {
                    *sv += w * xv;
                }
            }
        }
        // out = s B^T
        for (s_row, out_row) in s.chunks_exact(n).zip(out.chunks_exact_mut(m)) {
            for (o, band) in out_row.iter_mut().zip(&self.bands) {
                *o = unrolled_dot(&s_row[band.start..band.start + band.weights.len()], &band.weights);
            }
        }
    }

    fn adjoint(&self, y: &[f64], out: &mut [f64]) {
        let n = self.spec.geometry.fine_size();
        let m = self.spec.geometry.coarse_size();
        debug_assert_eq!(y.len(), m * m);
        debug_assert_eq!(out.len(), n * n);
        // s = Y B, stored row-major m x n
        let mut s = vec![0.0; m * n];
        for (y_row, s_row) in y.chunks_exact(m).zip(s.chunks_exact_mut(n)) {
            for (yq, band) in y_row.iter().zip(&self.bands) {
                if *yq == 0.0 {
                    continue;
                }
                let seg = &mut s_row[band.start..band.start + band.weights.len()];
                for (sv, w) in seg.iter_mut().zip(&band.weights) {
                    *sv += yq * w;
                }
            }
        }
        // out = B^T s
        out.iter_mut().for_each(|v| *v = 0.0);
        for (band, s_row) in self.bands.iter().zip(s.chunks_exact(n)) {
            for (w, out_row) in band
                .weights
                .iter()
                .zip(out.chunks_exact_mut(n).skip(band.start))
            {
                for (o, sv) in out_row.iter_mut().zip(s_row) {
                    *o += w * sv;
                }
            }
        }
    }
}
