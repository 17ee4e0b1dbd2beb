//! Pair-level orchestration: plan every pair, score it, evaluate the run.

use std::collections::BTreeSet;

use rayon::prelude::*;
use thiserror::Error;

use crate::aggregator::{
    aggregate_for_sample, cosine_similarity, AggregateError, AggregationWeights, FallbackPolicy,
};
use crate::model::{Manifest, RepresentationTag, SampleIndex, Transform};
use crate::protocol::{assign_folds, evaluate, EvalInput, ProtocolError, VerificationRun};
use crate::records::{PlanRecord, ScoreRecord};
use crate::selector::{build_plan_indexed, check_plan_coverage_indexed, SelectError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("pair #{pair_index}: {source}")]
    Select {
        pair_index: usize,
        #[source]
        source: SelectError,
    },
    #[error("pair #{pair_index}, sample {sample_id:?}: {source}")]
    Aggregate {
        pair_index: usize,
        sample_id: String,
        #[source]
        source: AggregateError,
    },
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error("plan/score file does not match the manifest: {0}")]
    Mismatch(String),
    #[error("{} required representations are missing, first: pair #{}, sample {:?}, {}", .0.len(), .0[0].pair_index, .0[0].sample_id, .0[0].transform)]
    CoverageGap(Vec<CoverageGap>),
    #[error("cannot start worker pool: {0}")]
    Pool(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoverageGap {
    pub pair_index: usize,
    pub sample_id: String,
    pub transform: Transform,
}

/// How each side of a pair is aggregated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScoringMode {
    /// Plan-driven aggregation with the given weights.
    Tta(AggregationWeights),
    /// Original and flipped views only, on both sides.
    Baseline,
}

/// One plan record per manifest pair. Pairs whose yaw is unknown fall back to
/// a real-views-only record instead of failing the whole run.
pub fn plan_pairs(m: &Manifest) -> Result<Vec<PlanRecord>, PipelineError> {
    let index = m.index();
    m.pairs
        .iter()
        .enumerate()
        .map(|(i, pair)| match build_plan_indexed(pair, &index) {
            Ok(plan) => Ok(PlanRecord::planned(i, &pair.left, &pair.right, &plan)),
            Err(SelectError::NonFiniteYaw { sample_id }) => Ok(PlanRecord::baseline(
                i,
                &pair.left,
                &pair.right,
                format!("yaw unavailable for {sample_id}"),
            )),
            Err(source) => Err(PipelineError::Select { pair_index: i, source }),
        })
        .collect()
}

fn check_alignment(m: &Manifest, plans: &[PlanRecord]) -> Result<(), PipelineError> {
    if plans.len() != m.pairs.len() {
        return Err(PipelineError::Mismatch(format!(
            "{} plan records for {} pairs",
            plans.len(),
            m.pairs.len()
        )));
    }
    for (i, (plan, pair)) in plans.iter().zip(&m.pairs).enumerate() {
        if plan.pair.0 != pair.left || plan.pair.1 != pair.right {
            return Err(PipelineError::Mismatch(format!(
                "pair #{i} is ({}, {}) in the manifest but ({}, {}) in the plan",
                pair.left, pair.right, plan.pair.0, plan.pair.1
            )));
        }
    }
    Ok(())
}

/// Every required representation that the manifest lacks, in pair order.
pub fn coverage_gaps(m: &Manifest, plans: &[PlanRecord]) -> Result<Vec<CoverageGap>, PipelineError> {
    check_alignment(m, plans)?;
    let index = m.index();
    let mut gaps = Vec::new();
    for rec in plans {
        let Some(plan) = rec.to_plan() else { continue };
        for (sample_id, tag) in check_plan_coverage_indexed(&plan, &index).missing {
            gaps.push(CoverageGap {
                pair_index: rec.pair_index,
                sample_id,
                transform: tag.transform(),
            });
        }
    }
    Ok(gaps)
}

fn baseline_tags() -> BTreeSet<RepresentationTag> {
    [RepresentationTag::ORIGINAL, RepresentationTag::FLIPPED].into()
}

fn score_one(
    index: &SampleIndex<'_>,
    rec: &PlanRecord,
    mode: ScoringMode,
    policy: FallbackPolicy,
) -> Result<ScoreRecord, PipelineError> {
    let (left_id, right_id) = (&rec.pair.0, &rec.pair.1);
    let mut features = Vec::with_capacity(2);
    for id in [left_id, right_id] {
        let sample = index
            .get(id)
            .ok_or_else(|| PipelineError::Mismatch(format!("unknown sample {id:?}")))?;
        let (required, weights) = match mode {
            ScoringMode::Baseline => (baseline_tags(), AggregationWeights::default()),
            ScoringMode::Tta(w) => (
                rec.required_tags(id)
                    .ok_or_else(|| PipelineError::Mismatch(format!("plan #{} omits {id:?}", rec.pair_index)))?,
                w,
            ),
        };
        let feature = aggregate_for_sample(sample, &required, &weights, policy).map_err(|source| {
            PipelineError::Aggregate {
                pair_index: rec.pair_index,
                sample_id: id.clone(),
                source,
            }
        })?;
        features.push(feature);
    }
    let score = cosine_similarity(&features[0], &features[1]).map_err(|source| PipelineError::Aggregate {
        pair_index: rec.pair_index,
        sample_id: left_id.clone(),
        source,
    })?;
    // A pair that could not be planned is a fallback on both sides.
    let unplanned = matches!(mode, ScoringMode::Tta(_)) && !rec.is_planned();
    Ok(ScoreRecord {
        pair_index: rec.pair_index,
        left: left_id.clone(),
        right: right_id.clone(),
        score,
        rep_counts: [features[0].rep_count, features[1].rep_count],
        fallback: [
            features[0].fallback_used || unplanned,
            features[1].fallback_used || unplanned,
        ],
    })
}

/// Scores every pair on a pool of `workers` threads (0 = rayon default).
/// Output order, values and the reported error are independent of `workers`.
pub fn score_pairs(
    m: &Manifest,
    plans: &[PlanRecord],
    mode: ScoringMode,
    policy: FallbackPolicy,
    workers: usize,
) -> Result<Vec<ScoreRecord>, PipelineError> {
    check_alignment(m, plans)?;
    let index = m.index();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| PipelineError::Pool(e.to_string()))?;
    let results: Vec<Result<ScoreRecord, PipelineError>> = pool.install(|| {
        plans
            .par_iter()
            .map(|rec| score_one(&index, rec, mode, policy))
            .collect()
    });
    results.into_iter().collect()
}

/// Evaluates a score file against the manifest's labels with `k` contiguous folds.
pub fn verify_scores(m: &Manifest, scores: &[ScoreRecord], k: usize) -> Result<VerificationRun, PipelineError> {
    if scores.len() != m.pairs.len() {
        return Err(PipelineError::Mismatch(format!(
            "{} scores for {} pairs",
            scores.len(),
            m.pairs.len()
        )));
    }
    for (i, (s, p)) in scores.iter().zip(&m.pairs).enumerate() {
        if s.left != p.left || s.right != p.right {
            return Err(PipelineError::Mismatch(format!(
                "score #{i} is for ({}, {}) but the manifest pair is ({}, {})",
                s.left, s.right, p.left, p.right
            )));
        }
    }
    let folds = assign_folds(m.pairs.len(), k)?;
    let values: Vec<f64> = scores.iter().map(|s| s.score).collect();
    let fallback: Vec<bool> = scores.iter().map(ScoreRecord::any_fallback).collect();
    let labels = m.labels();
    Ok(evaluate(
        EvalInput {
            scores: &values,
            labels: &labels,
            fallback: Some(&fallback),
        },
        &folds,
    )?)
}

/// Plan, score and evaluate in one go.
pub fn run_in_memory(
    m: &Manifest,
    mode: ScoringMode,
    policy: FallbackPolicy,
    k: usize,
    workers: usize,
) -> Result<VerificationRun, PipelineError> {
    let plans = plan_pairs(m)?;
    if policy == FallbackPolicy::Strict && matches!(mode, ScoringMode::Tta(_)) {
        let gaps = coverage_gaps(m, &plans)?;
        if !gaps.is_empty() {
            return Err(PipelineError::CoverageGap(gaps));
        }
    }
    let scores = score_pairs(m, &plans, mode, policy, workers)?;
    verify_scores(m, &scores, k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{EmbeddingVector, FaceSample, PairRecord};

    fn ev(v: &[f32]) -> EmbeddingVector {
        EmbeddingVector::from_f64_normalized(&v.iter().map(|&x| f64::from(x)).collect::<Vec<_>>()).unwrap()
    }

    fn toy() -> Manifest {
        let full = |id: &str, yaw: f64, base: [f32; 3]| {
            FaceSample::new(id, id, yaw)
                .with_rep(Transform::Original, ev(&base))
                .with_rep(Transform::Flipped, ev(&[base[0], base[2], base[1]]))
                .with_rep(Transform::Animated, ev(&[base[0], 0.5, 0.5]))
                .with_rep(Transform::AnimatedFlipped, ev(&[base[0], 0.4, 0.6]))
        };
        let samples = vec![
            full("a", 5.0, [1.0, 0.1, 0.0]),
            full("b", -40.0, [1.0, 0.0, 0.3]),
            full("c", 20.0, [0.0, 1.0, 0.2]),
        ];
        let pairs = vec![PairRecord::new("a", "b", true), PairRecord::new("a", "c", false)];
        Manifest::new(3, samples, pairs, Default::default()).unwrap()
    }

    #[test]
    fn plans_follow_pairs() {
        let m = toy();
        let plans = plan_pairs(&m).unwrap();
        assert_eq!(plans.len(), 2);
        assert_eq!(plans[0].source.as_deref(), Some("a"));
        assert!(plans[0].flip_source_before_animation);
        assert!(coverage_gaps(&m, &plans).unwrap().is_empty());
    }

    #[test]
    fn missing_yaw_plans_baseline() {
        let mut m = toy();
        m.samples[2].yaw_deg = None;
        let plans = plan_pairs(&m).unwrap();
        assert!(!plans[1].is_planned());
        let scores = score_pairs(&m, &plans, ScoringMode::Tta(AggregationWeights::default()), FallbackPolicy::RealFallback, 1).unwrap();
        assert_eq!(scores[1].rep_counts, [2, 2]);
        assert_eq!(scores[1].fallback, [true, true]);
        assert_eq!(scores[0].rep_counts, [4, 2]);
    }

    #[test]
    fn strict_policy_reports_gaps() {
        let mut m = toy();
        m.samples[0].representations.remove(&Transform::Animated);
        let plans = plan_pairs(&m).unwrap();
        let gaps = coverage_gaps(&m, &plans).unwrap();
        assert_eq!(gaps.len(), 2);
        assert_eq!(gaps[0].transform, Transform::Animated);
        let w = ScoringMode::Tta(AggregationWeights::default());
        assert!(matches!(
            score_pairs(&m, &plans, w, FallbackPolicy::Strict, 1),
            Err(PipelineError::Aggregate { pair_index: 0, .. })
        ));
        let scores = score_pairs(&m, &plans, w, FallbackPolicy::RealFallback, 1).unwrap();
        assert_eq!(scores[0].fallback, [true, false]);
    }

    #[test]
    fn baseline_ignores_synthetic_views() {
        let m = toy();
        let plans = plan_pairs(&m).unwrap();
        let s = score_pairs(&m, &plans, ScoringMode::Baseline, FallbackPolicy::Strict, 2).unwrap();
        assert!(s.iter().all(|r| r.rep_counts == [2, 2]));
    }

    #[test]
    fn plan_must_match_manifest() {
        let m = toy();
        let mut plans = plan_pairs(&m).unwrap();
        plans.swap(0, 1);
        assert!(matches!(
            score_pairs(&m, &plans, ScoringMode::Baseline, FallbackPolicy::Strict, 1),
            Err(PipelineError::Mismatch(_))
        ));
    }
}
