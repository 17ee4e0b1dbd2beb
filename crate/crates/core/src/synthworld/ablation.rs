//! Seed sweeps over synthetic worlds: weight ablation, flip ablation and
//! TTA-versus-baseline gains.

use rayon::prelude::*;
use serde::Serialize;

use super::{generate_world_with, opposite_sign_fraction, AnimatorMode, SyntheticWorldConfig, WorldError};
use crate::aggregator::{AggregationWeights, FallbackPolicy};
use crate::model::Manifest;
use crate::pipeline::{plan_pairs, score_pairs, verify_scores, PipelineError, ScoringMode};
use crate::protocol::DEFAULT_FOLDS;

/// Mean accuracy of one scoring mode on an already generated world.
pub fn evaluate_world(m: &Manifest, mode: ScoringMode, workers: usize) -> Result<f64, PipelineError> {
    let plans = plan_pairs(m)?;
    let scores = score_pairs(m, &plans, mode, FallbackPolicy::Strict, workers)?;
    Ok(verify_scores(m, &scores, DEFAULT_FOLDS)?.mean_accuracy)
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn with_seed(cfg: &SyntheticWorldConfig, seed: u64) -> SyntheticWorldConfig {
    SyntheticWorldConfig { seed, ..cfg.clone() }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRow {
    pub w_real: f64,
    pub w_syn: f64,
    pub per_seed: Vec<f64>,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationTable {
    pub seeds: Vec<u64>,
    pub rows: Vec<AblationRow>,
    /// No-TTA accuracy (original + flipped on both sides) per seed.
    pub baseline_per_seed: Vec<f64>,
}

impl AblationTable {
    pub fn row(&self, w_real: f64) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.w_real == w_real)
    }
}

/// For every seed: generate the world once, then score and evaluate it under
/// each weight setting. Seeds run in parallel; results are in input order.
pub fn run_ablation(
    cfg: &SyntheticWorldConfig,
    weight_grid: &[AggregationWeights],
    seeds: &[u64],
    workers: usize,
) -> Result<AblationTable, WorldError> {
    if weight_grid.is_empty() || seeds.is_empty() {
        return Err(WorldError::InvalidConfig("weight grid and seed list must be nonempty".into()));
    }
    cfg.validate()?;
    let per_seed: Vec<Result<(Vec<f64>, f64), WorldError>> = seeds
        .par_iter()
        .map(|&seed| {
            let world = generate_world_with(&with_seed(cfg, seed), AnimatorMode::HonorFlip)?;
            let accs = weight_grid
                .iter()
                .map(|w| evaluate_world(&world, ScoringMode::Tta(*w), workers))
                .collect::<Result<Vec<_>, _>>()?;
            let base = evaluate_world(&world, ScoringMode::Baseline, workers)?;
            Ok((accs, base))
        })
        .collect();
    let per_seed = per_seed.into_iter().collect::<Result<Vec<_>, _>>()?;
    let rows = weight_grid
        .iter()
        .enumerate()
        .map(|(i, w)| {
            let accs: Vec<f64> = per_seed.iter().map(|(a, _)| a[i]).collect();
            let (mean_accuracy, std_accuracy) = mean_std(&accs);
            AblationRow {
                w_real: w.w_real(),
                w_syn: w.w_syn(),
                per_seed: accs,
                mean_accuracy,
                std_accuracy,
            }
        })
        .collect();
    Ok(AblationTable {
        seeds: seeds.to_vec(),
        rows,
        baseline_per_seed: per_seed.iter().map(|(_, b)| *b).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlipAblation {
    pub seeds: Vec<u64>,
    pub with_flip: Vec<f64>,
    pub without_flip: Vec<f64>,
    pub baseline: Vec<f64>,
    pub opposite_sign_fraction: Vec<f64>,
}

impl FlipAblation {
    pub fn mean_with_flip(&self) -> f64 {
        mean_std(&self.with_flip).0
    }

    pub fn mean_without_flip(&self) -> f64 {
        mean_std(&self.without_flip).0
    }

    pub fn mean_baseline(&self) -> f64 {
        mean_std(&self.baseline).0
    }

    /// Fraction of seeds on which honoring the flip is at least as accurate.
    pub fn flip_win_rate(&self) -> f64 {
        let wins = self
            .with_flip
            .iter()
            .zip(&self.without_flip)
            .filter(|(a, b)| a >= b)
            .count();
        wins as f64 / self.with_flip.len() as f64
    }
}

/// Two pipeline runs per seed that differ only in whether the source is
/// mirrored before animation when the faces look in opposite directions.
pub fn run_flip_ablation(
    cfg: &SyntheticWorldConfig,
    weights: AggregationWeights,
    seeds: &[u64],
    workers: usize,
) -> Result<FlipAblation, WorldError> {
    if seeds.is_empty() {
        return Err(WorldError::InvalidConfig("seed list must be nonempty".into()));
    }
    cfg.validate()?;
    let rows: Vec<Result<[f64; 4], WorldError>> = seeds
        .par_iter()
        .map(|&seed| {
            let c = with_seed(cfg, seed);
            let honored = generate_world_with(&c, AnimatorMode::HonorFlip)?;
            let with_flip = evaluate_world(&honored, ScoringMode::Tta(weights), workers)?;
            let baseline = evaluate_world(&honored, ScoringMode::Baseline, workers)?;
            let fraction = opposite_sign_fraction(&honored);
            drop(honored);
            let ignored = generate_world_with(&c, AnimatorMode::IgnoreFlip)?;
            let without_flip = evaluate_world(&ignored, ScoringMode::Tta(weights), workers)?;
            Ok([with_flip, without_flip, baseline, fraction])
        })
        .collect();
    let rows = rows.into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok(FlipAblation {
        seeds: seeds.to_vec(),
        with_flip: rows.iter().map(|r| r[0]).collect(),
        without_flip: rows.iter().map(|r| r[1]).collect(),
        baseline: rows.iter().map(|r| r[2]).collect(),
        opposite_sign_fraction: rows.iter().map(|r| r[3]).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TtaGain {
    pub seeds: Vec<u64>,
    pub tta: Vec<f64>,
    pub baseline: Vec<f64>,
}

impl TtaGain {
    pub fn mean_delta(&self) -> f64 {
        let deltas: Vec<f64> = self.tta.iter().zip(&self.baseline).map(|(t, b)| t - b).collect();
        mean_std(&deltas).0
    }
}

/// TTA and no-TTA accuracy per seed.
pub fn run_tta_gain(
    cfg: &SyntheticWorldConfig,
    weights: AggregationWeights,
    seeds: &[u64],
    workers: usize,
) -> Result<TtaGain, WorldError> {
    let table = run_ablation(cfg, &[weights], seeds, workers)?;
    Ok(TtaGain {
        seeds: table.seeds,
        tta: table.rows[0].per_seed.clone(),
        baseline: table.baseline_per_seed,
    })
}
