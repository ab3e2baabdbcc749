//! Synthetic acquisitions: ground-truth molecules, blurred and binned frames
//! with additive Gaussian noise, and frame summation.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{fine_index_to_nm, CoarseFrame, FineImage, GridGeometry, Molecule, MoleculeSet};
use crate::operator::{ForwardOperator, OperatorSpec, PsfSpec};

/// Ordered frames sharing one geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameStack {
    geometry: GridGeometry,
    frames: Vec<CoarseFrame>,
}

impl FrameStack {
    pub fn new(geometry: GridGeometry, frames: Vec<CoarseFrame>) -> Result<Self> {
        if let Some(f) = frames.iter().find(|f| *f.geometry() != geometry) {
            return Err(Error::shape(format!("{geometry:?}"), format!("{:?}", f.geometry())));
        }
        Ok(Self { geometry, frames })
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    pub fn frames(&self) -> &[CoarseFrame] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// Where molecules are drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Phantom {
    /// Uniform over fine pixels at least `margin_px` away from the border.
    RandomUniform { molecules_per_frame: usize, margin_px: usize },
    /// Molecules scattered across `tubes` smooth curves of width `width_nm`.
    Tubes {
        molecules_per_frame: usize,
        tubes: usize,
        width_nm: f64,
    },
}

impl Phantom {
    pub fn molecules_per_frame(&self) -> usize {
        match *self {
            Phantom::RandomUniform { molecules_per_frame, .. } | Phantom::Tubes { molecules_per_frame, .. } => {
                molecules_per_frame
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationSpec {
    pub geometry: GridGeometry,
    pub psf: PsfSpec,
    pub phantom: Phantom,
    pub intensity_range: (f64, f64),
    /// Standard deviation of the additive noise.
    pub noise_sigma: f64,
    pub frames: usize,
    pub rng_seed: u64,
    /// Keep continuous positions instead of snapping to fine pixel centres.
    pub off_grid: bool,
}

impl SimulationSpec {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.intensity_range;
        if !(lo >= 0.0 && lo <= hi && hi.is_finite()) {
            return Err(Error::invalid(format!("bad intensity range [{lo}, {hi}]")));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::invalid(format!("noise sigma must be >= 0, got {}", self.noise_sigma)));
        }
        if let Phantom::Tubes { tubes, width_nm, .. } = self.phantom {
            if tubes == 0 || !(width_nm >= 0.0) {
                return Err(Error::invalid("tube phantom needs at least one tube and a nonnegative width"));
            }
        }
        if let Phantom::RandomUniform { margin_px, .. } = self.phantom {
            if 2 * margin_px >= self.geometry.fine_size() {
                return Err(Error::invalid("margin leaves no room for molecules"));
            }
        }
        OperatorSpec::new(self.geometry, self.psf)?;
        Ok(())
    }
}

/// Noise level at 1% of the brightest single-molecule coarse pixel.
pub fn default_noise_sigma(op: &ForwardOperator, intensity_hi: f64) -> f64 {
    let g = op.geometry();
    let n = g.fine_size();
    let mut x = Array2::zeros((n, n));
    // a block corner puts the most mass into one coarse pixel for even L
    let c = (g.coarse_size() / 2) * g.upsample() + g.upsample() / 2;
    x[[c.min(n - 1), c.min(n - 1)]] = 1.0;
    let frame = op.apply_a(&FineImage::new(*g, x).expect("shape")).expect("geometry");
    let peak = frame.values().iter().cloned().fold(0.0, f64::max);
    0.01 * peak * intensity_hi
}

#[derive(Debug, Clone, Copy)]
struct Tube {
    start: (f64, f64),
    end: (f64, f64),
    amplitude: f64,
    waves: f64,
    phase: f64,
}

impl Tube {
    fn random(rng: &mut ChaCha8Rng, fov: f64) -> Self {
        let along = |rng: &mut ChaCha8Rng| rng.random_range(0.1 * fov..0.9 * fov);
        let (start, end) = if rng.random_bool(0.5) {
            ((0.0, along(rng)), (fov, along(rng)))
        } else {
            ((along(rng), 0.0), (along(rng), fov))
        };
        Self {
            start,
            end,
            amplitude: rng.random_range(0.02..0.12) * fov,
            waves: rng.random_range(0.5..1.5),
            phase: rng.random_range(0.0..std::f64::consts::TAU),
        }
    }

    fn point(&self, t: f64, offset: f64) -> (f64, f64) {
        let (dx, dy) = (self.end.0 - self.start.0, self.end.1 - self.start.1);
        let len = dx.hypot(dy);
        let normal = (-dy / len, dx / len);
        let wiggle = self.amplitude * (std::f64::consts::TAU * self.waves * t + self.phase).sin()
            * (std::f64::consts::PI * t).sin();
        let shift = wiggle + offset;
        (
            self.start.0 + t * dx + shift * normal.0,
            self.start.1 + t * dy + shift * normal.1,
        )
    }
}

fn frame_seed(seed: u64, frame_index: usize) -> u64 {
    seed ^ frame_index as u64
}

fn phantom_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::MAX);
    rng
}

fn snap(x_nm: f64, y_nm: f64, g: &GridGeometry) -> (usize, usize) {
    let px = g.fine_pixel_nm();
    let last = g.fine_size() - 1;
    (
        ((y_nm / px).floor().max(0.0) as usize).min(last),
        ((x_nm / px).floor().max(0.0) as usize).min(last),
    )
}

fn draw_positions(spec: &SimulationSpec, tubes: &[Tube], rng: &mut ChaCha8Rng) -> Vec<(f64, f64)> {
    let g = &spec.geometry;
    let n = g.fine_size();
    let fov = g.field_of_view_nm();
    let wanted = spec.phantom.molecules_per_frame();
    let mut taken = std::collections::HashSet::new();
    let mut out = Vec::with_capacity(wanted);
    let mut attempts = 0usize;
    while out.len() < wanted && attempts < 1000 * (wanted + 1) {
        attempts += 1;
        let (x_nm, y_nm) = match spec.phantom {
            Phantom::RandomUniform { margin_px, .. } => {
                let i = rng.random_range(margin_px..n - margin_px);
                let j = rng.random_range(margin_px..n - margin_px);
                if spec.off_grid {
                    let px = g.fine_pixel_nm();
                    ((j as f64 + rng.random::<f64>()) * px, (i as f64 + rng.random::<f64>()) * px)
                } else {
                    fine_index_to_nm(i, j, g).expect("in range")
                }
            }
            Phantom::Tubes { width_nm, .. } => {
                let tube = &tubes[rng.random_range(0..tubes.len())];
                let offset = (rng.random::<f64>() - 0.5) * width_nm;
                let (x, y) = tube.point(rng.random::<f64>(), offset);
                if !(0.0..fov).contains(&x) || !(0.0..fov).contains(&y) {
                    continue;
                }
                if spec.off_grid {
                    (x, y)
                } else {
                    let (i, j) = snap(x, y, g);
                    fine_index_to_nm(i, j, g).expect("in range")
                }
            }
        };
        // at most one molecule per fine pixel within a frame
        if taken.insert(snap(x_nm, y_nm, g)) {
            out.push((x_nm, y_nm));
        }
    }
    out
}

/// Places molecules on the fine grid. On-grid positions land in one pixel;
/// off-grid positions are split bilinearly over the four nearest centres.
pub fn rasterize(molecules: &[Molecule], g: &GridGeometry) -> Result<FineImage> {
    let n = g.fine_size();
    let px = g.fine_pixel_nm();
    let mut x = Array2::zeros((n, n));
    for m in molecules {
        m.validate(g)?;
        let fx = m.x_nm / px - 0.5;
        let fy = m.y_nm / px - 0.5;
        let (j0, i0) = (fx.floor(), fy.floor());
        let (tx, ty) = (fx - j0, fy - i0);
        for (di, wy) in [(0.0, 1.0 - ty), (1.0, ty)] {
            for (dj, wx) in [(0.0, 1.0 - tx), (1.0, tx)] {
                let w = wx * wy;
                if w == 0.0 {
                    continue;
                }
                let (i, j) = (i0 + di, j0 + dj);
                let (i, j) = (i.clamp(0.0, (n - 1) as f64) as usize, j.clamp(0.0, (n - 1) as f64) as usize);
                x[[i, j]] += w * m.intensity;
            }
        }
    }
    FineImage::new_nonnegative(*g, x)
}

/// Frames `d = A x + noise` and their exact ground truth.
pub fn simulate(spec: &SimulationSpec) -> Result<(FrameStack, MoleculeSet)> {
    spec.validate()?;
    let g = spec.geometry;
    let op = ForwardOperator::new(OperatorSpec::new(g, spec.psf)?);
    let tubes: Vec<Tube> = match spec.phantom {
        Phantom::Tubes { tubes, .. } => {
            let mut rng = phantom_rng(spec.rng_seed);
            (0..tubes).map(|_| Tube::random(&mut rng, g.field_of_view_nm())).collect()
        }
        Phantom::RandomUniform { .. } => Vec::new(),
    };
    let (lo, hi) = spec.intensity_range;
    let noise = (spec.noise_sigma > 0.0)
        .then(|| Normal::new(0.0, spec.noise_sigma).map_err(|e| Error::invalid(e.to_string())))
        .transpose()?;

    let per_frame: Vec<Result<(CoarseFrame, Vec<Molecule>)>> = (0..spec.frames)
        .into_par_iter()
        .map(|f| {
            let mut rng = ChaCha8Rng::seed_from_u64(frame_seed(spec.rng_seed, f));
            let molecules: Vec<Molecule> = draw_positions(spec, &tubes, &mut rng)
                .into_iter()
                .map(|(x_nm, y_nm)| Molecule {
                    x_nm,
                    y_nm,
                    intensity: if hi > lo { rng.random_range(lo..=hi) } else { lo },
                    frame_index: f,
                })
                .collect();
            let x = rasterize(&molecules, &g)?;
            let mut frame = op.apply_a(&x)?.with_frame_index(f);
            if let Some(noise) = &noise {
                frame.values_mut().iter_mut().for_each(|v| *v += noise.sample(&mut rng));
            }
            Ok((frame, molecules))
        })
        .collect();

    let mut frames = Vec::with_capacity(spec.frames);
    let mut truth = MoleculeSet::empty(g);
    for item in per_frame {
        let (frame, molecules) = item?;
        frames.push(frame);
        for m in molecules {
            truth.push(m)?;
        }
    }
    Ok((FrameStack::new(g, frames)?, truth))
}

/// Sums consecutive groups of `group` frames. A trailing partial group is an
/// error unless `keep_partial` is set.
pub fn sum_frames(stack: &FrameStack, group: usize, keep_partial: bool) -> Result<FrameStack> {
    if group == 0 {
        return Err(Error::invalid("group must be at least 1"));
    }
    if stack.len() % group != 0 && !keep_partial {
        return Err(Error::invalid(format!(
            "{} frames cannot be split into groups of {group}",
            stack.len()
        )));
    }
    let g = *stack.geometry();
    let frames = stack
        .frames()
        .chunks(group)
        .enumerate()
        .map(|(i, chunk)| {
            let mut sum = CoarseFrame::zeros(g, i);
            for f in chunk {
                *sum.values_mut() += f.values();
            }
            sum
        })
        .collect();
    FrameStack::new(g, frames)
}
