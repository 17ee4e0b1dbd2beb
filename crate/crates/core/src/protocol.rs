//! k-fold pair-verification accuracy with per-fold threshold selection.
//!
//! Pairs are split into contiguous folds. For each fold the decision
//! threshold is chosen on the remaining folds by scanning a fixed grid over
//! the cosine range, and accuracy is measured on the held-out fold with the
//! rule `score >= threshold => same identity`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_FOLDS: usize = 10;

/// The threshold grid has `2 * GRID_HALF_STEPS + 1` points with step
/// `1 / GRID_HALF_STEPS` (5e-4) covering [-1, 1].
pub const GRID_HALF_STEPS: usize = 2000;
pub const GRID_LEN: usize = 2 * GRID_HALF_STEPS + 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error("{n_pairs} pairs cannot be split into {k} folds")]
    TooFewPairs { n_pairs: usize, k: usize },
    #[error("fold count must be at least 2, got {0}")]
    InvalidFoldCount(usize),
    #[error("no scores to choose a threshold from")]
    EmptyScores,
    #[error("score #{index} = {score} is not a finite value in [-1, 1]")]
    ScoreOutOfRange { index: usize, score: f64 },
    #[error("inputs disagree on pair count: {0}")]
    FoldMismatch(String),
    #[error("runs are not comparable: {0}")]
    ProtocolMismatch(String),
}

/// Grid point `i` in `0..GRID_LEN`.
pub fn grid_threshold(i: usize) -> f64 {
    (i as f64 - GRID_HALF_STEPS as f64) / GRID_HALF_STEPS as f64
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSpec {
    pub k: usize,
    /// Fold id of every pair, in manifest pair order.
    pub assignment: Vec<usize>,
}

impl FoldSpec {
    pub fn n_pairs(&self) -> usize {
        self.assignment.len()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in &self.assignment {
            sizes[f] += 1;
        }
        sizes
    }
}

/// Contiguous blocks; the first `n_pairs % k` folds hold one extra pair.
pub fn assign_folds(n_pairs: usize, k: usize) -> Result<FoldSpec, ProtocolError> {
    if k < 2 {
        return Err(ProtocolError::InvalidFoldCount(k));
    }
    if n_pairs < k {
        return Err(ProtocolError::TooFewPairs { n_pairs, k });
    }
    let base = n_pairs / k;
    let extra = n_pairs % k;
    let mut assignment = Vec::with_capacity(n_pairs);
    for fold in 0..k {
        let size = base + usize::from(fold < extra);
        assignment.extend(std::iter::repeat_n(fold, size));
    }
    Ok(FoldSpec { k, assignment })
}

fn check_scores(scores: impl Iterator<Item = f64>) -> Result<(), ProtocolError> {
    for (index, score) in scores.enumerate() {
        if !(-1.0..=1.0).contains(&score) {
            return Err(ProtocolError::ScoreOutOfRange { index, score });
        }
    }
    Ok(())
}

/// Grid index and number of correct decisions of the best threshold. Ties
/// resolve to the smallest threshold.
fn best_grid_point(scores: &[(f64, bool)]) -> (usize, usize) {
    let mut same: Vec<f64> = scores.iter().filter(|s| s.1).map(|s| s.0).collect();
    let mut diff: Vec<f64> = scores.iter().filter(|s| !s.1).map(|s| s.0).collect();
    same.sort_by(f64::total_cmp);
    diff.sort_by(f64::total_cmp);
    let (mut same_below, mut diff_below) = (0usize, 0usize);
    let mut best = (0usize, 0usize);
    for i in 0..GRID_LEN {
        let t = grid_threshold(i);
        while same_below < same.len() && same[same_below] < t {
            same_below += 1;
        }
        while diff_below < diff.len() && diff[diff_below] < t {
            diff_below += 1;
        }
        let correct = (same.len() - same_below) + diff_below;
        if i == 0 || correct > best.1 {
            best = (i, correct);
        }
    }
    best
}

/// Threshold on the fixed grid maximizing accuracy of `score >= t => same`,
/// with the accuracy it achieves on `scores`.
pub fn best_threshold(scores: &[(f64, bool)]) -> Result<(f64, f64), ProtocolError> {
    if scores.is_empty() {
        return Err(ProtocolError::EmptyScores);
    }
    check_scores(scores.iter().map(|s| s.0))?;
    let (i, correct) = best_grid_point(scores);
    Ok((grid_threshold(i), correct as f64 / scores.len() as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationRun {
    pub n_pairs: usize,
    pub fold_sizes: Vec<usize>,
    pub scores: Vec<f64>,
    pub fold_thresholds: Vec<f64>,
    pub fold_accuracies: Vec<f64>,
    pub mean_accuracy: f64,
    pub fallback_rate: f64,
}

impl VerificationRun {
    pub fn k(&self) -> usize {
        self.fold_sizes.len()
    }

    pub fn mean_accuracy_pct(&self) -> f64 {
        self.mean_accuracy * 100.0
    }
}

/// Scores, ground-truth labels and per-pair fallback flags, aligned by pair index.
#[derive(Debug, Clone, Copy)]
pub struct EvalInput<'a> {
    pub scores: &'a [f64],
    pub labels: &'a [bool],
    pub fallback: Option<&'a [bool]>,
}

pub fn evaluate(input: EvalInput<'_>, folds: &FoldSpec) -> Result<VerificationRun, ProtocolError> {
    let n = folds.n_pairs();
    if input.scores.len() != n || input.labels.len() != n {
        return Err(ProtocolError::FoldMismatch(format!(
            "{} scores, {} labels, {} fold slots",
            input.scores.len(),
            input.labels.len(),
            n
        )));
    }
    if let Some(fb) = input.fallback {
        if fb.len() != n {
            return Err(ProtocolError::FoldMismatch(format!("{} fallback flags for {n} pairs", fb.len())));
        }
    }
    if folds.assignment.iter().any(|&f| f >= folds.k) {
        return Err(ProtocolError::FoldMismatch("fold id out of range".into()));
    }
    check_scores(input.scores.iter().copied())?;
    let sizes = folds.sizes();
    if sizes.iter().any(|&s| s == 0 || s == n) {
        return Err(ProtocolError::FoldMismatch("every fold needs held-out and training pairs".into()));
    }

    let per_fold: Vec<(f64, f64)> = (0..folds.k)
        .into_par_iter()
        .map(|fold| {
            let mut train = Vec::with_capacity(n);
            let mut test = Vec::new();
            for ((&f, &s), &l) in folds.assignment.iter().zip(input.scores).zip(input.labels) {
                if f == fold {
                    test.push((s, l));
                } else {
                    train.push((s, l));
                }
            }
            let (i, _) = best_grid_point(&train);
            let t = grid_threshold(i);
            let correct = test.iter().filter(|(s, l)| (*s >= t) == *l).count();
            (t, correct as f64 / test.len() as f64)
        })
        .collect();

    let fold_thresholds: Vec<f64> = per_fold.iter().map(|p| p.0).collect();
    let fold_accuracies: Vec<f64> = per_fold.iter().map(|p| p.1).collect();
    let mean_accuracy = fold_accuracies.iter().sum::<f64>() / folds.k as f64;
    let fallback_rate = input
        .fallback
        .map(|fb| fb.iter().filter(|&&f| f).count() as f64 / n as f64)
        .unwrap_or(0.0);
    Ok(VerificationRun {
        n_pairs: n,
        fold_sizes: sizes,
        scores: input.scores.to_vec(),
        fold_thresholds,
        fold_accuracies,
        mean_accuracy,
        fallback_rate,
    })
}

/// Accuracy differences in percentage points, `candidate - reference`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaReport {
    pub fold_deltas_pp: Vec<f64>,
    pub mean_delta_pp: f64,
}

pub fn compare_runs(
    candidate: &VerificationRun,
    reference: &VerificationRun,
) -> Result<DeltaReport, ProtocolError> {
    if candidate.n_pairs != reference.n_pairs {
        return Err(ProtocolError::ProtocolMismatch(format!(
            "{} vs {} pairs",
            candidate.n_pairs, reference.n_pairs
        )));
    }
    if candidate.fold_sizes != reference.fold_sizes {
        return Err(ProtocolError::ProtocolMismatch(format!(
            "fold layouts {:?} vs {:?}",
            candidate.fold_sizes, reference.fold_sizes
        )));
    }
    Ok(DeltaReport {
        fold_deltas_pp: candidate
            .fold_accuracies
            .iter()
            .zip(&reference.fold_accuracies)
            .map(|(a, b)| (a - b) * 100.0)
            .collect(),
        mean_delta_pp: (candidate.mean_accuracy - reference.mean_accuracy) * 100.0,
    })
}

/// Renders rows of percentages as an aligned text table with two decimals.
/// `columns` excludes the leading row-label column.
pub fn render_table(columns: &[String], rows: &[(String, Vec<Option<f64>>)], signed: &[bool]) -> String {
    let label_width = rows
        .iter()
        .map(|r| r.0.len())
        .chain(std::iter::once("Method".len()))
        .max()
        .unwrap_or(6);
    let cells: Vec<Vec<String>> = rows
        .iter()
        .enumerate()
        .map(|(ri, (_, vals))| {
            vals.iter()
                .map(|v| match v {
                    Some(x) if signed.get(ri).copied().unwrap_or(false) => format!("{x:+.2}"),
                    Some(x) => format!("{x:.2}"),
                    None => "-".into(),
                })
                .collect()
        })
        .collect();
    let widths: Vec<usize> = columns
        .iter()
        .enumerate()
        .map(|(ci, c)| {
            cells
                .iter()
                .filter_map(|r| r.get(ci).map(String::len))
                .chain(std::iter::once(c.len()))
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut out = format!("{:<label_width$}", "Method");
    for (c, w) in columns.iter().zip(&widths) {
        out.push_str(&format!("  {c:>w$}"));
    }
    out.push('\n');
    let rule = label_width + widths.iter().map(|w| w + 2).sum::<usize>();
    out.push_str(&"-".repeat(rule));
    out.push('\n');
    for ((label, _), row) in rows.iter().zip(&cells) {
        out.push_str(&format!("{label:<label_width$}"));
        for (cell, w) in row.iter().zip(&widths) {
            out.push_str(&format!("  {cell:>w$}"));
        }
        out.push('\n');
    }
    out
}
