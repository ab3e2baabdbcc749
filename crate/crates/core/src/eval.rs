//! Tolerance-disk matching and Jaccard scores.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Molecule, MoleculeSet};

/// Distances closer than this count as ties.
const TIE_QUANTUM_NM: f64 = 1e-12;

pub const DEFAULT_TOLERANCES_NM: [f64; 5] = [50.0, 100.0, 150.0, 200.0, 250.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Matching {
    /// Shortest remaining pair first.
    #[default]
    Greedy,
    /// Maximum number of pairs within the tolerance.
    Optimal,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EvalOptions {
    pub matching: Matching,
    /// Added to every reconstructed position before matching.
    pub offset_nm: (f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub truth: usize,
    pub recon: usize,
    pub distance_nm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub tolerance_nm: f64,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub jaccard: f64,
    pub pairs: Vec<MatchedPair>,
}

impl MatchResult {
    fn from_pairs(tolerance_nm: f64, n_truth: usize, n_recon: usize, pairs: Vec<MatchedPair>) -> Self {
        let tp = pairs.len();
        let mut out = Self {
            tolerance_nm,
            true_positives: tp,
            false_positives: n_recon - tp,
            false_negatives: n_truth - tp,
            jaccard: 1.0,
            pairs,
        };
        out.jaccard = jaccard(tp, out.false_positives, out.false_negatives);
        out
    }
}

/// `TP / (TP + FP + FN)`, and 1 when all three are zero.
pub fn jaccard(tp: usize, fp: usize, fn_: usize) -> f64 {
    let denom = tp + fp + fn_;
    if denom == 0 {
        1.0
    } else {
        tp as f64 / denom as f64
    }
}

fn check_tolerance(tol_nm: f64) -> Result<()> {
    if tol_nm.is_finite() && tol_nm > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("tolerance must be positive, got {tol_nm}")))
    }
}

fn positions(mols: &[Molecule], what: &str, offset: (f64, f64)) -> Result<Vec<(f64, f64)>> {
    mols.iter()
        .enumerate()
        .map(|(i, m)| {
            if m.x_nm.is_nan() || m.y_nm.is_nan() {
                Err(Error::invalid(format!("{what} molecule {i} has a NaN coordinate")))
            } else {
                Ok((m.x_nm + offset.0, m.y_nm + offset.1))
            }
        })
        .collect()
}

fn candidate_pairs(truth: &[(f64, f64)], recon: &[(f64, f64)], tol_nm: f64) -> Vec<MatchedPair> {
    let mut pairs = Vec::new();
    for (i, t) in truth.iter().enumerate() {
        for (j, r) in recon.iter().enumerate() {
            let d = (t.0 - r.0).hypot(t.1 - r.1);
            if d <= tol_nm {
                pairs.push(MatchedPair {
                    truth: i,
                    recon: j,
                    distance_nm: d,
                });
            }
        }
    }
    pairs
}

fn greedy(candidates: Vec<MatchedPair>, n_truth: usize, n_recon: usize) -> Vec<MatchedPair> {
    let mut keyed: Vec<(u64, MatchedPair)> = candidates
        .into_iter()
        .map(|p| ((p.distance_nm / TIE_QUANTUM_NM).round() as u64, p))
        .collect();
    keyed.sort_by_key(|(q, p)| (*q, p.truth, p.recon));
    let mut truth_used = vec![false; n_truth];
    let mut recon_used = vec![false; n_recon];
    let mut pairs = Vec::new();
    for (_, p) in keyed {
        if !truth_used[p.truth] && !recon_used[p.recon] {
            truth_used[p.truth] = true;
            recon_used[p.recon] = true;
            pairs.push(p);
        }
    }
    pairs
}

/// Maximum-cardinality bipartite matching by augmenting paths.
fn optimal(candidates: Vec<MatchedPair>, n_truth: usize, n_recon: usize) -> Vec<MatchedPair> {
    let mut adj: Vec<Vec<MatchedPair>> = vec![Vec::new(); n_truth];
    for p in candidates {
        adj[p.truth].push(p);
    }
    for edges in &mut adj {
        edges.sort_by(|a, b| a.distance_nm.total_cmp(&b.distance_nm).then(a.recon.cmp(&b.recon)));
    }
    let mut owner: Vec<Option<MatchedPair>> = vec![None; n_recon];

    fn augment(t: usize, adj: &[Vec<MatchedPair>], seen: &mut [bool], owner: &mut [Option<MatchedPair>]) -> bool {
        for p in &adj[t] {
            if seen[p.recon] {
                continue;
            }
            seen[p.recon] = true;
            let free = match owner[p.recon] {
                None => true,
                Some(prev) => augment(prev.truth, adj, seen, owner),
            };
            if free {
                owner[p.recon] = Some(*p);
                return true;
            }
        }
        false
    }

    for t in 0..n_truth {
        let mut seen = vec![false; n_recon];
        augment(t, &adj, &mut seen, &mut owner);
    }
    let mut pairs: Vec<MatchedPair> = owner.into_iter().flatten().collect();
    pairs.sort_by_key(|p| (p.truth, p.recon));
    pairs
}

/// One-to-one greedy matching of a single frame's molecules.
pub fn match_frame(truth: &[Molecule], recon: &[Molecule], tol_nm: f64) -> Result<MatchResult> {
    match_frame_with(truth, recon, tol_nm, &EvalOptions::default())
}

pub fn match_frame_with(truth: &[Molecule], recon: &[Molecule], tol_nm: f64, opts: &EvalOptions) -> Result<MatchResult> {
    check_tolerance(tol_nm)?;
    let t = positions(truth, "truth", (0.0, 0.0))?;
    let r = positions(recon, "reconstructed", opts.offset_nm)?;
    let candidates = candidate_pairs(&t, &r, tol_nm);
    let pairs = match opts.matching {
        Matching::Greedy => greedy(candidates, t.len(), r.len()),
        Matching::Optimal => optimal(candidates, t.len(), r.len()),
    };
    Ok(MatchResult::from_pairs(tol_nm, t.len(), r.len(), pairs))
}

/// Molecules of each frame, keeping their index in the whole set.
fn by_frame(set: &MoleculeSet) -> BTreeMap<usize, (Vec<usize>, Vec<Molecule>)> {
    let mut frames: BTreeMap<usize, (Vec<usize>, Vec<Molecule>)> = BTreeMap::new();
    for (i, m) in set.molecules().iter().enumerate() {
        let entry = frames.entry(m.frame_index).or_default();
        entry.0.push(i);
        entry.1.push(*m);
    }
    frames
}

/// Matches frame by frame and sums the counts over frames before taking
/// the ratio. Pair indices refer to positions in the input sets.
pub fn jaccard_sweep(
    truth: &MoleculeSet,
    recon: &MoleculeSet,
    tolerances_nm: &[f64],
    opts: &EvalOptions,
) -> Result<Vec<MatchResult>> {
    if tolerances_nm.is_empty() {
        return Err(Error::invalid("no tolerances given"));
    }
    for tol in tolerances_nm {
        check_tolerance(*tol)?;
    }
    let t_frames = by_frame(truth);
    let r_frames = by_frame(recon);
    let mut frame_ids: Vec<usize> = t_frames.keys().chain(r_frames.keys()).copied().collect();
    frame_ids.sort_unstable();
    frame_ids.dedup();
    let empty = (Vec::new(), Vec::new());

    tolerances_nm
        .iter()
        .map(|&tol| {
            let mut pairs = Vec::new();
            for f in &frame_ids {
                let (t_idx, t_mols) = t_frames.get(f).unwrap_or(&empty);
                let (r_idx, r_mols) = r_frames.get(f).unwrap_or(&empty);
                let res = match_frame_with(t_mols, r_mols, tol, opts)?;
                pairs.extend(res.pairs.into_iter().map(|p| MatchedPair {
                    truth: t_idx[p.truth],
                    recon: r_idx[p.recon],
                    distance_nm: p.distance_nm,
                }));
            }
            Ok(MatchResult::from_pairs(tol, truth.len(), recon.len(), pairs))
        })
        .collect()
}

/// Jaccard percentages, one row per method or file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JaccardTable {
    pub tolerances_nm: Vec<f64>,
    pub rows: Vec<(String, Vec<f64>)>,
}

impl JaccardTable {
    pub fn new(tolerances_nm: Vec<f64>) -> Self {
        Self {
            tolerances_nm,
            rows: Vec::new(),
        }
    }

    pub fn push_row(&mut self, name: impl Into<String>, results: &[MatchResult]) -> Result<()> {
        if results.len() != self.tolerances_nm.len() {
            return Err(Error::shape(self.tolerances_nm.len(), results.len()));
        }
        self.rows.push((name.into(), results.iter().map(|r| 100.0 * r.jaccard).collect()));
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let width = self.rows.iter().map(|(n, _)| n.len()).max().unwrap_or(0).max(6);
        let mut s = String::new();
        let _ = writeln!(s, "Jaccard index (%)");
        let _ = write!(s, "{:<width$}", "Method");
        for t in &self.tolerances_nm {
            let _ = write!(s, " {:>7}", format!("{t}nm"));
        }
        s.push('\n');
        for (name, vals) in &self.rows {
            let _ = write!(s, "{name:<width$}");
            for v in vals {
                let _ = write!(s, " {v:>7.1}");
            }
            s.push('\n');
        }
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("method");
        for t in &self.tolerances_nm {
            let _ = write!(s, ",{t}");
        }
        s.push('\n');
        for (name, vals) in &self.rows {
            s.push_str(name);
            for v in vals {
                let _ = write!(s, ",{v:.4}");
            }
            s.push('\n');
        }
        s
    }
}
