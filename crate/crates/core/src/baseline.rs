//! Reference localizer: local maxima of the back-projection `A^T d`.

use crate::error::{Error, Result};
use crate::geometry::{fine_index_to_nm, CoarseFrame, Molecule, MoleculeSet};
use crate::operator::{ForwardOperator, LinearOperator};

/// Fine pixels that are 8-neighbourhood maxima of `A^T d` and exceed
/// `rel_threshold` times its maximum, strongest first, at most `floor(k)`.
///
/// Plateaus keep their first pixel in row-major order.
pub fn local_maxima(frame: &CoarseFrame, op: &ForwardOperator, k: f64, rel_threshold: f64) -> Result<MoleculeSet> {
    let g = *op.geometry();
    if *frame.geometry() != g {
        return Err(Error::shape(format!("{g:?}"), format!("{:?}", frame.geometry())));
    }
    if !(k.is_finite() && k > 0.0) {
        return Err(Error::invalid(format!("budget must be positive, got {k}")));
    }
    if !(0.0..=1.0).contains(&rel_threshold) {
        return Err(Error::invalid(format!("relative threshold {rel_threshold} outside [0, 1]")));
    }
    let bp = op.adjoint_vec(&frame.to_flat());
    let n = g.fine_size();
    let peak = bp.iter().copied().fold(0.0f64, f64::max);
    let mut peaks = Vec::new();
    if peak > 0.0 {
        let cut = rel_threshold * peak;
        for i in 0..n {
            for j in 0..n {
                let v = bp[i * n + j];
                if v <= 0.0 || v < cut {
                    continue;
                }
                let mut is_max = true;
                'scan: for di in -1isize..=1 {
                    for dj in -1isize..=1 {
                        let (a, b) = (i as isize + di, j as isize + dj);
                        if (di, dj) == (0, 0) || a < 0 || b < 0 || a >= n as isize || b >= n as isize {
                            continue;
                        }
                        let w = bp[a as usize * n + b as usize];
                        let earlier = (a, b) < (i as isize, j as isize);
                        if w > v || (earlier && w == v) {
                            is_max = false;
                            break 'scan;
                        }
                    }
                }
                if is_max {
                    peaks.push((i * n + j, v));
                }
            }
        }
    }
    peaks.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    peaks.truncate(k.floor() as usize);
    let mut out = MoleculeSet::empty(g);
    for (idx, v) in peaks {
        let (x_nm, y_nm) = fine_index_to_nm(idx / n, idx % n, &g)?;
        out.push(Molecule {
            x_nm,
            y_nm,
            intensity: v,
            frame_index: frame.frame_index(),
        })?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{nm_to_fine_index, GridGeometry};
    use crate::operator::{OperatorSpec, PsfSpec};
    use crate::sim::rasterize;

    fn op() -> ForwardOperator {
        let g = GridGeometry::new(16, 4, 100.0).unwrap();
        ForwardOperator::new(OperatorSpec::new(g, PsfSpec::from_sigma(1.5).unwrap()).unwrap())
    }

    fn frame_with(op: &ForwardOperator, pixels: &[(usize, usize, f64)]) -> CoarseFrame {
        let g = *op.geometry();
        let mols: Vec<Molecule> = pixels
            .iter()
            .map(|&(i, j, a)| {
                let (x_nm, y_nm) = fine_index_to_nm(i, j, &g).unwrap();
                Molecule { x_nm, y_nm, intensity: a, frame_index: 3 }
            })
            .collect();
        op.apply_a(&rasterize(&mols, &g).unwrap()).unwrap().with_frame_index(3)
    }

    #[test]
    fn isolated_sources_are_found_strongest_first() {
        let a = op();
        let f = frame_with(&a, &[(10, 10, 500.0), (40, 45, 900.0)]);
        let found = local_maxima(&f, &a, 2.0, 0.1).unwrap();
        assert_eq!(found.len(), 2);
        let g = *a.geometry();
        let first = found.molecules()[0];
        assert_eq!(first.frame_index, 3);
        let (i, j) = nm_to_fine_index(first.x_nm, first.y_nm, &g).unwrap();
        assert!(i.abs_diff(40) <= 2 && j.abs_diff(45) <= 2, "({i}, {j})");
        assert!(found.molecules()[0].intensity >= found.molecules()[1].intensity);
    }

    #[test]
    fn budget_and_threshold_limit_the_output() {
        let a = op();
        let f = frame_with(&a, &[(10, 10, 500.0), (40, 45, 900.0)]);
        assert_eq!(local_maxima(&f, &a, 1.5, 0.0).unwrap().len(), 1);
        assert_eq!(local_maxima(&f, &a, 5.0, 0.9).unwrap().len(), 1);
    }

    #[test]
    fn empty_frame_gives_nothing() {
        let a = op();
        let f = CoarseFrame::zeros(*a.geometry(), 0);
        assert!(local_maxima(&f, &a, 3.0, 0.0).unwrap().is_empty());
        assert!(local_maxima(&f, &a, 0.0, 0.0).is_err());
        assert!(local_maxima(&f, &a, 1.0, 1.5).is_err());
    }
}
