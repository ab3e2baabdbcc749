use super::fista::polish_on_support;
use super::objective::{coupling_gap, evaluate_g_rho, l0_norm, rho_bound};
use super::pam::pam_minimize;
use super::{Problem, RhoFinal, SolverConfig};
use crate::error::{Error, Result};
use crate::geometry::{fine_index_to_nm, CoarseFrame, FineImage, Molecule, MoleculeSet};
use crate::operator::{ForwardOperator, LinearOperator, SpectralEstimates};

/// The bound is strict; the last level sits this far above it.
const BOUND_MARGIN: f64 = 1e-6;

/// One continuation level, or the support refit appended after the last one.
#[derive(Debug, Clone, PartialEq)]
pub struct OuterRecord {
    pub outer_iter: usize,
    pub rho: f64,
    pub objective: f64,
    pub gap: f64,
    pub l0: usize,
    pub sweeps: usize,
    pub inner_iterations: usize,
    pub converged: bool,
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOutcome {
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub rho_final: f64,
    pub trace: Vec<OuterRecord>,
    pub gap: f64,
    pub l0: usize,
    /// Every continuation level met `pam_tol`.
    pub pam_converged: bool,
    pub fallback_applied: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub x: FineImage,
    pub molecules: MoleculeSet,
    pub outcome: SolveOutcome,
}

fn schedule(rho0: f64, growth: f64, rho_final: f64) -> Vec<f64> {
    let mut levels = vec![rho0];
    let mut rho = rho0;
    while rho * growth < rho_final {
        rho *= growth;
        levels.push(rho);
    }
    if rho_final > rho0 {
        levels.push(rho_final);
    }
    levels
}

/// Indices of the `budget` largest positive entries; ties go to the lower index.
fn top_support(x: &[f64], budget: usize) -> Vec<bool> {
    let mut idx: Vec<usize> = (0..x.len()).filter(|&i| x[i] > 0.0).collect();
    idx.sort_by(|&a, &b| x[b].total_cmp(&x[a]).then(a.cmp(&b)));
    idx.truncate(budget);
    let mut support = vec![false; x.len()];
    for i in idx {
        support[i] = true;
    }
    support
}

/// Continuation over `rho` from `x = 0, u = 0`, with the optional
/// support refit when the coupling gap stays open.
pub fn solve<O: LinearOperator + ?Sized>(
    op: &O,
    d: &[f64],
    spectral: &SpectralEstimates,
    cfg: &SolverConfig,
) -> Result<SolveOutcome> {
    cfg.validate()?;
    if d.len() != op.output_len() {
        return Err(Error::shape(op.output_len(), d.len()));
    }
    if let Some(v) = d.iter().find(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("observation contains {v}")));
    }
    let rho_final = match cfg.rho_final {
        RhoFinal::TheoremBound => rho_bound(op, d, spectral)? * (1.0 + BOUND_MARGIN),
        RhoFinal::Value(v) => v,
    };
    let problem = Problem::new(op, d, spectral.sigma1);
    let n = op.input_len();
    let mut x = vec![0.0; n];
    let mut u = vec![0.0; n];
    let mut trace = Vec::new();
    let mut pam_converged = true;

    let levels = schedule(cfg.rho0, cfg.rho_growth, rho_final);
    let last_rho = *levels.last().expect("schedule is nonempty");
    for (outer_iter, rho) in levels.into_iter().enumerate() {
        let run = pam_minimize(&problem, cfg, &x, &u, rho)?;
        pam_converged &= run.converged;
        x = run.state.x;
        u = run.state.u;
        trace.push(OuterRecord {
            outer_iter,
            rho,
            objective: run.state.objective,
            gap: run.state.gap,
            l0: l0_norm(&x),
            sweeps: run.sweeps,
            inner_iterations: run.state.inner_iterations,
            converged: run.converged,
            fallback: false,
        });
    }

    let mut gap = coupling_gap(&x, &u);
    let mut l0 = l0_norm(&x);
    let mut fallback_applied = false;
    if cfg.support_fallback && (gap > cfg.gap_tol || l0 > cfg.budget()) {
        let support = top_support(&x, cfg.budget());
        let start: Vec<f64> = x.iter().zip(&support).map(|(v, s)| if *s { *v } else { 0.0 }).collect();
        let refit = polish_on_support(&problem, &start, &support, cfg)?;
        x = refit.x;
        u = support.iter().map(|s| if *s { 1.0 } else { 0.0 }).collect();
        gap = coupling_gap(&x, &u);
        l0 = l0_norm(&x);
        fallback_applied = true;
        trace.push(OuterRecord {
            outer_iter: trace.len(),
            rho: last_rho,
            objective: evaluate_g_rho(op, &x, &u, d, last_rho, cfg.k),
            gap,
            l0,
            sweeps: 0,
            inner_iterations: refit.iterations,
            converged: refit.converged,
            fallback: true,
        });
    }

    Ok(SolveOutcome {
        x,
        u,
        rho_final: last_rho,
        trace,
        gap,
        l0,
        pam_converged,
        fallback_applied,
    })
}

/// Solves one coarse frame and reports every nonzero fine pixel as a molecule
/// at its pixel centre, with the pixel value as intensity.
pub fn solve_frame(
    frame: &CoarseFrame,
    op: &ForwardOperator,
    spectral: &SpectralEstimates,
    cfg: &SolverConfig,
) -> Result<SolveReport> {
    let g = *op.geometry();
    if *frame.geometry() != g {
        return Err(Error::shape(format!("{g:?}"), format!("{:?}", frame.geometry())));
    }
    let outcome = solve(op, &frame.to_flat(), spectral, cfg)?;
    let n = g.fine_size();
    let mut molecules = MoleculeSet::empty(g);
    for (idx, v) in outcome.x.iter().enumerate() {
        if *v > 0.0 {
            let (x_nm, y_nm) = fine_index_to_nm(idx / n, idx % n, &g)?;
            molecules.push(Molecule {
                x_nm,
                y_nm,
                intensity: *v,
                frame_index: frame.frame_index(),
            })?;
        }
    }
    let x = FineImage::new_nonnegative(g, ndarray::Array2::from_shape_vec((n, n), outcome.x.clone()).expect("fine grid"))?;
    Ok(SolveReport { x, molecules, outcome })
}
