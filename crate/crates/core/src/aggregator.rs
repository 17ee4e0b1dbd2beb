//! Weighted feature aggregation and cosine scoring.
//!
//! All arithmetic runs in `f64` over the stored `f32` channels.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{EmbeddingVector, FaceSample, Provenance, RepresentationTag, Transform};

/// Pre-normalization aggregates shorter than this are treated as cancelled out.
pub const DEGENERATE_NORM: f64 = 1e-9;

pub const DEFAULT_W_REAL: f64 = 0.75;
pub const DEFAULT_W_SYN: f64 = 0.25;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AggregateError {
    #[error("no representations to aggregate")]
    EmptyRepSet,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("every provided representation has zero weight")]
    AllZeroWeight,
    #[error("aggregate has norm {0:e}; representations cancel out")]
    DegenerateSum(f64),
    #[error("invalid weights (w_real={w_real}, w_syn={w_syn}): both must be finite and >= 0 with a positive sum")]
    InvalidWeights { w_real: f64, w_syn: f64 },
    #[error("sample {sample_id:?} lacks required representations: {missing:?}")]
    MissingRepresentation {
        sample_id: String,
        missing: Vec<Transform>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregationWeights {
    w_real: f64,
    w_syn: f64,
}

impl AggregationWeights {
    pub fn new(w_real: f64, w_syn: f64) -> Result<Self, AggregateError> {
        let ok = w_real.is_finite() && w_syn.is_finite() && w_real >= 0.0 && w_syn >= 0.0;
        if !ok || w_real + w_syn <= 0.0 {
            return Err(AggregateError::InvalidWeights { w_real, w_syn });
        }
        Ok(Self { w_real, w_syn })
    }

    pub fn w_real(&self) -> f64 {
        self.w_real
    }

    pub fn w_syn(&self) -> f64 {
        self.w_syn
    }

    pub fn for_provenance(&self, p: Provenance) -> f64 {
        match p {
            Provenance::Real => self.w_real,
            Provenance::Synthetic => self.w_syn,
        }
    }

    /// The five weight settings swept in the ablation, from synthetic-only to real-only.
    pub fn ablation_grid() -> Vec<Self> {
        [0.0, 0.25, 0.5, 0.75, 1.0]
            .into_iter()
            .map(|r| Self::new(r, 1.0 - r).unwrap())
            .collect()
    }
}

impl Default for AggregationWeights {
    fn default() -> Self {
        Self {
            w_real: DEFAULT_W_REAL,
            w_syn: DEFAULT_W_SYN,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FallbackPolicy {
    Strict,
    #[default]
    RealFallback,
}

impl fmt::Display for FallbackPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FallbackPolicy::Strict => "strict",
            FallbackPolicy::RealFallback => "real-fallback",
        })
    }
}

impl FromStr for FallbackPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "strict" => Ok(Self::Strict),
            "real-fallback" => Ok(Self::RealFallback),
            other => Err(format!("unknown policy {other:?} (expected strict or real-fallback)")),
        }
    }
}

/// Unit-length aggregate of one sample's representations.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregatedFeature {
    pub vector: Vec<f64>,
    pub rep_count: usize,
    pub fallback_used: bool,
}

impl AggregatedFeature {
    pub fn dim(&self) -> usize {
        self.vector.len()
    }
}

fn check_dims<'a, I>(mut vectors: I) -> Result<usize, AggregateError>
where
    I: Iterator<Item = &'a EmbeddingVector>,
{
    let first = vectors.next().ok_or(AggregateError::EmptyRepSet)?;
    let dim = first.dim();
    for v in vectors {
        if v.dim() != dim {
            return Err(AggregateError::DimMismatch {
                expected: dim,
                got: v.dim(),
            });
        }
    }
    Ok(dim)
}

fn finish(mut acc: Vec<f64>, rep_count: usize) -> Result<AggregatedFeature, AggregateError> {
    let norm = acc.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm.is_nan() || norm < DEGENERATE_NORM {
        return Err(AggregateError::DegenerateSum(norm));
    }
    for x in &mut acc {
        *x /= norm;
    }
    Ok(AggregatedFeature {
        vector: acc,
        rep_count,
        fallback_used: false,
    })
}

/// Plain test-time augmentation: mean of the representations, then L2-normalized.
pub fn aggregate_plain(reps: &[&EmbeddingVector]) -> Result<AggregatedFeature, AggregateError> {
    let dim = check_dims(reps.iter().copied())?;
    let scale = 1.0 / reps.len() as f64;
    let mut acc = vec![0.0f64; dim];
    for v in reps {
        for (a, &x) in acc.iter_mut().zip(v.values()) {
            *a += scale * f64::from(x);
        }
    }
    finish(acc, reps.len())
}

/// Weighted aggregation: each representation is scaled by the weight of its
/// provenance, the sum is divided by the number of representations, and the
/// result is L2-normalized.
pub fn aggregate_weighted(
    reps: &[(RepresentationTag, &EmbeddingVector)],
    w: &AggregationWeights,
) -> Result<AggregatedFeature, AggregateError> {
    let dim = check_dims(reps.iter().map(|(_, v)| *v))?;
    if reps.iter().all(|(t, _)| w.for_provenance(t.provenance()) == 0.0) {
        return Err(AggregateError::AllZeroWeight);
    }
    let inv_count = 1.0 / reps.len() as f64;
    let mut acc = vec![0.0f64; dim];
    for (tag, v) in reps {
        let weight = w.for_provenance(tag.provenance()) * inv_count;
        if weight == 0.0 {
            continue;
        }
        for (a, &x) in acc.iter_mut().zip(v.values()) {
            *a += weight * f64::from(x);
        }
    }
    finish(acc, reps.len())
}

/// Aggregates the `required` representations of one sample.
///
/// Under [`FallbackPolicy::RealFallback`] a missing synthetic representation
/// reduces the set to the real views and sets `fallback_used`. When every
/// aggregated view shares one provenance its weight is a common factor that
/// normalization removes, so the plain mean is used; this keeps a real-only
/// side defined when `w_real` is zero.
pub fn aggregate_for_sample(
    sample: &FaceSample,
    required: &BTreeSet<RepresentationTag>,
    w: &AggregationWeights,
    policy: FallbackPolicy,
) -> Result<AggregatedFeature, AggregateError> {
    let missing: Vec<Transform> = required
        .iter()
        .filter(|t| !sample.has(**t))
        .map(|t| t.transform())
        .collect();
    let mut fallback_used = false;
    let selected: Vec<RepresentationTag> = if missing.is_empty() {
        required.iter().copied().collect()
    } else {
        let real_missing = missing.iter().any(|t| t.provenance() == Provenance::Real);
        if policy == FallbackPolicy::Strict || real_missing {
            return Err(AggregateError::MissingRepresentation {
                sample_id: sample.sample_id.clone(),
                missing,
            });
        }
        fallback_used = true;
        required.iter().copied().filter(|t| !t.is_synthetic()).collect()
    };
    if selected.is_empty() {
        return Err(AggregateError::EmptyRepSet);
    }
    let reps: Vec<(RepresentationTag, &EmbeddingVector)> = selected
        .iter()
        .map(|&t| (t, sample.get(t.transform()).expect("presence checked above")))
        .collect();
    let single_provenance = reps.iter().all(|(t, _)| t.provenance() == reps[0].0.provenance());
    let mut feature = if single_provenance {
        let vectors: Vec<&EmbeddingVector> = reps.iter().map(|(_, v)| *v).collect();
        aggregate_plain(&vectors)?
    } else {
        aggregate_weighted(&reps, w)?
    };
    feature.fallback_used = fallback_used;
    Ok(feature)
}

/// Cosine similarity of two unit aggregates, clamped to [-1, 1].
pub fn cosine_similarity(a: &AggregatedFeature, b: &AggregatedFeature) -> Result<f64, AggregateError> {
    if a.dim() != b.dim() {
        return Err(AggregateError::DimMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    let dot: f64 = a.vector.iter().zip(&b.vector).map(|(x, y)| x * y).sum();
    Ok(dot.clamp(-1.0, 1.0))
}
