//! Grid geometry, image containers and the nanometre coordinate convention.
//!
//! Positions are measured from the top-left corner of the field of view:
//! `x_nm` runs along columns, `y_nm` along rows. A fine pixel `(i, j)` is
//! reported at its centre, `((j + 0.5) * fine_pixel_nm, (i + 0.5) * fine_pixel_nm)`.
//! Every module that converts between pixels and nanometres goes through
//! [`fine_index_to_nm`] and [`nm_to_fine_index`].

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Coarse camera grid of `M x M` pixels and the fine reconstruction grid of
/// `ML x ML` pixels covering the same field of view.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridGeometry {
    coarse_size: usize,
    upsample: usize,
    coarse_pixel_nm: f64,
}

impl GridGeometry {
    pub fn new(coarse_size: usize, upsample: usize, coarse_pixel_nm: f64) -> Result<Self> {
        if coarse_size == 0 {
            return Err(Error::invalid("coarse size must be at least 1"));
        }
        if upsample == 0 {
            return Err(Error::invalid("upsample factor must be at least 1"));
        }
        if !(coarse_pixel_nm.is_finite() && coarse_pixel_nm > 0.0) {
            return Err(Error::invalid(format!(
                "coarse pixel size must be positive and finite, got {coarse_pixel_nm}"
            )));
        }
        Ok(Self {
            coarse_size,
            upsample,
            coarse_pixel_nm,
        })
    }

    /// `M`, coarse pixels per side.
    pub fn coarse_size(&self) -> usize {
        self.coarse_size
    }

    /// `L`, fine pixels per coarse pixel along one axis.
    pub fn upsample(&self) -> usize {
        self.upsample
    }

    pub fn coarse_pixel_nm(&self) -> f64 {
        self.coarse_pixel_nm
    }

    /// `M * L`.
    pub fn fine_size(&self) -> usize {
        self.coarse_size * self.upsample
    }

    pub fn fine_pixel_nm(&self) -> f64 {
        self.coarse_pixel_nm / self.upsample as f64
    }

    /// Side length of the square field of view.
    pub fn field_of_view_nm(&self) -> f64 {
        self.coarse_size as f64 * self.coarse_pixel_nm
    }

    pub fn fine_len(&self) -> usize {
        self.fine_size() * self.fine_size()
    }

    pub fn coarse_len(&self) -> usize {
        self.coarse_size * self.coarse_size
    }

    pub fn contains_nm(&self, x_nm: f64, y_nm: f64) -> bool {
        let fov = self.field_of_view_nm();
        (0.0..=fov).contains(&x_nm) && (0.0..=fov).contains(&y_nm)
    }
}

/// Centre of fine pixel `(row, col)` in nanometres, returned as `(x_nm, y_nm)`.
pub fn fine_index_to_nm(row: usize, col: usize, geometry: &GridGeometry) -> Result<(f64, f64)> {
    let n = geometry.fine_size();
    if row >= n || col >= n {
        return Err(Error::contract(format!(
            "fine index ({row}, {col}) outside a {n}x{n} grid"
        )));
    }
    let px = geometry.fine_pixel_nm();
    Ok(((col as f64 + 0.5) * px, (row as f64 + 0.5) * px))
}

/// Fine pixel `(row, col)` containing a nanometre position, clamped to the grid.
pub fn nm_to_fine_index(x_nm: f64, y_nm: f64, geometry: &GridGeometry) -> Result<(usize, usize)> {
    if x_nm.is_nan() || y_nm.is_nan() {
        return Err(Error::invalid("NaN coordinate"));
    }
    let px = geometry.fine_pixel_nm();
    let last = (geometry.fine_size() - 1) as f64;
    let clamp = |v: f64| (v / px).floor().clamp(0.0, last) as usize;
    Ok((clamp(y_nm), clamp(x_nm)))
}

/// High-resolution intensity grid `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct FineImage {
    geometry: GridGeometry,
    values: Array2<f64>,
    nonnegative: bool,
}

impl FineImage {
    pub fn zeros(geometry: GridGeometry) -> Self {
        let n = geometry.fine_size();
        Self {
            geometry,
            values: Array2::zeros((n, n)),
            nonnegative: true,
        }
    }

    pub fn new(geometry: GridGeometry, values: Array2<f64>) -> Result<Self> {
        let n = geometry.fine_size();
        if values.dim() != (n, n) {
            return Err(Error::shape(format!("{n}x{n}"), format!("{:?}", values.dim())));
        }
        Ok(Self {
            geometry,
            values,
            nonnegative: false,
        })
    }

    /// Like [`FineImage::new`], additionally checking that every entry is `>= 0`.
    pub fn new_nonnegative(geometry: GridGeometry, values: Array2<f64>) -> Result<Self> {
        let mut image = Self::new(geometry, values)?;
        if let Some(v) = image.values.iter().find(|v| !(**v >= 0.0)) {
            return Err(Error::invalid(format!("negative or NaN entry {v} in a nonnegative image")));
        }
        image.nonnegative = true;
        Ok(image)
    }

    pub(crate) fn from_flat(geometry: GridGeometry, flat: Vec<f64>) -> Result<Self> {
        let n = geometry.fine_size();
        let values = Array2::from_shape_vec((n, n), flat)
            .map_err(|e| Error::shape(format!("{} values", n * n), e))?;
        Self::new(geometry, values)
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn is_flagged_nonnegative(&self) -> bool {
        self.nonnegative
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }

    /// Row-major copy of the pixel values.
    pub fn to_flat(&self) -> Vec<f64> {
        self.values.iter().copied().collect()
    }
}

/// One observed low-resolution acquisition `d`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoarseFrame {
    geometry: GridGeometry,
    values: Array2<f64>,
    frame_index: usize,
}

impl CoarseFrame {
    pub fn zeros(geometry: GridGeometry, frame_index: usize) -> Self {
        let m = geometry.coarse_size();
        Self {
            geometry,
            values: Array2::zeros((m, m)),
            frame_index,
        }
    }

    pub fn new(geometry: GridGeometry, values: Array2<f64>, frame_index: usize) -> Result<Self> {
        let m = geometry.coarse_size();
        if values.dim() != (m, m) {
            return Err(Error::shape(format!("{m}x{m}"), format!("{:?}", values.dim())));
        }
        Ok(Self {
            geometry,
            values,
            frame_index,
        })
    }

    pub(crate) fn from_flat(geometry: GridGeometry, flat: Vec<f64>, frame_index: usize) -> Result<Self> {
        let m = geometry.coarse_size();
        let values = Array2::from_shape_vec((m, m), flat)
            .map_err(|e| Error::shape(format!("{} values", m * m), e))?;
        Self::new(geometry, values, frame_index)
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut Array2<f64> {
        &mut self.values
    }

    pub fn frame_index(&self) -> usize {
        self.frame_index
    }

    pub fn with_frame_index(mut self, frame_index: usize) -> Self {
        self.frame_index = frame_index;
        self
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.values.iter().copied().collect()
    }
}

/// A point source in physical coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Molecule {
    pub x_nm: f64,
    pub y_nm: f64,
    pub intensity: f64,
    pub frame_index: usize,
}

impl Molecule {
    pub fn validate(&self, geometry: &GridGeometry) -> Result<()> {
        if self.x_nm.is_nan() || self.y_nm.is_nan() {
            return Err(Error::invalid("NaN molecule coordinate"));
        }
        if !geometry.contains_nm(self.x_nm, self.y_nm) {
            return Err(Error::invalid(format!(
                "molecule at ({}, {}) nm lies outside the {} nm field of view",
                self.x_nm,
                self.y_nm,
                geometry.field_of_view_nm()
            )));
        }
        if !(self.intensity >= 0.0) {
            return Err(Error::invalid(format!("negative intensity {}", self.intensity)));
        }
        Ok(())
    }

    pub fn distance_nm(&self, other: &Molecule) -> f64 {
        (self.x_nm - other.x_nm).hypot(self.y_nm - other.y_nm)
    }
}

/// Ordered list of molecules sharing one geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct MoleculeSet {
    geometry: GridGeometry,
    molecules: Vec<Molecule>,
}

impl MoleculeSet {
    pub fn new(geometry: GridGeometry, molecules: Vec<Molecule>) -> Result<Self> {
        for m in &molecules {
            m.validate(&geometry)?;
        }
        Ok(Self { geometry, molecules })
    }

    pub fn empty(geometry: GridGeometry) -> Self {
        Self {
            geometry,
            molecules: Vec::new(),
        }
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    pub fn molecules(&self) -> &[Molecule] {
        &self.molecules
    }

    pub fn len(&self) -> usize {
        self.molecules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.molecules.is_empty()
    }

    pub fn push(&mut self, molecule: Molecule) -> Result<()> {
        molecule.validate(&self.geometry)?;
        self.molecules.push(molecule);
        Ok(())
    }

    pub fn extend(&mut self, other: MoleculeSet) -> Result<()> {
        for m in other.molecules {
            self.push(m)?;
        }
        Ok(())
    }

    /// Molecules belonging to one frame, in list order.
    pub fn frame(&self, frame_index: usize) -> impl Iterator<Item = &Molecule> {
        self.molecules.iter().filter(move |m| m.frame_index == frame_index)
    }

    /// Maps every frame index through `old / group`, as done after frame summation.
    pub fn regroup_frames(&self, group: usize) -> Result<Self> {
        if group == 0 {
            return Err(Error::invalid("group must be at least 1"));
        }
        let molecules = self
            .molecules
            .iter()
            .map(|m| Molecule {
                frame_index: m.frame_index / group,
                ..*m
            })
            .collect();
        Ok(Self {
            geometry: self.geometry,
            molecules,
        })
    }
}

impl IntoIterator for MoleculeSet {
    type Item = Molecule;
    type IntoIter = std::vec::IntoIter<Molecule>;

    fn into_iter(self) -> Self::IntoIter {
        self.molecules.into_iter()
    }
}
