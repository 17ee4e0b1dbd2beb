//! JSON-lines files exchanged between pipeline stages: augmentation plans
//! (engine -> extractor, engine -> aggregation) and per-pair scores.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{RepresentationTag, Transform};
use crate::selector::{AugmentationPlan, RoleAssignment};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RecordError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: expected pair_index {expected}, found {found}")]
    OutOfOrder {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: {message}")]
    Invalid { line: usize, message: String },
}

/// One line of a plan file. Pairs that could not be planned (no usable yaw)
/// carry no roles, require only real views, and explain why in `note`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanRecord {
    pub pair_index: usize,
    pub pair: (String, String),
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub driving: Option<String>,
    #[serde(default)]
    pub flip_source_before_animation: bool,
    pub required: BTreeMap<String, BTreeSet<Transform>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl PlanRecord {
    pub fn planned(pair_index: usize, left: &str, right: &str, plan: &AugmentationPlan) -> Self {
        Self {
            pair_index,
            pair: (left.to_string(), right.to_string()),
            source: Some(plan.roles.source.clone()),
            driving: Some(plan.roles.driving.clone()),
            flip_source_before_animation: plan.roles.flip_source_before_animation,
            required: plan
                .required_reps
                .iter()
                .map(|(id, tags)| (id.clone(), tags.iter().map(|t| t.transform()).collect()))
                .collect(),
            note: None,
        }
    }

    /// Both sides aggregate their real views only.
    pub fn baseline(pair_index: usize, left: &str, right: &str, note: impl Into<String>) -> Self {
        let real: BTreeSet<Transform> = [Transform::Original, Transform::Flipped].into();
        Self {
            pair_index,
            pair: (left.to_string(), right.to_string()),
            source: None,
            driving: None,
            flip_source_before_animation: false,
            required: [(left.to_string(), real.clone()), (right.to_string(), real)].into(),
            note: Some(note.into()),
        }
    }

    pub fn is_planned(&self) -> bool {
        self.source.is_some()
    }

    pub fn required_tags(&self, sample_id: &str) -> Option<BTreeSet<RepresentationTag>> {
        self.required
            .get(sample_id)
            .map(|ts| ts.iter().map(|t| t.tag()).collect())
    }

    pub fn to_plan(&self) -> Option<AugmentationPlan> {
        Some(AugmentationPlan {
            roles: RoleAssignment {
                source: self.source.clone()?,
                driving: self.driving.clone()?,
                flip_source_before_animation: self.flip_source_before_animation,
            },
            required_reps: self
                .required
                .iter()
                .map(|(id, ts)| (id.clone(), ts.iter().map(|t| t.tag()).collect()))
                .collect(),
        })
    }

    fn check(&self, line: usize) -> Result<(), RecordError> {
        let invalid = |message: String| RecordError::Invalid { line, message };
        let (l, r) = &self.pair;
        if l == r {
            return Err(invalid(format!("pair compares {l:?} with itself")));
        }
        let ids: BTreeSet<&String> = [l, r].into();
        if self.required.keys().collect::<BTreeSet<_>>() != ids {
            return Err(invalid("required representations must name exactly the pair's samples".into()));
        }
        if self.required.values().any(|ts| !ts.contains(&Transform::Original)) {
            return Err(invalid("every side must require its original view".into()));
        }
        match (&self.source, &self.driving) {
            (Some(s), Some(d)) => {
                if [s, d].into_iter().collect::<BTreeSet<_>>() != ids {
                    return Err(invalid("source and driving must be the pair's two samples".into()));
                }
            }
            (None, None) => {
                if self.flip_source_before_animation {
                    return Err(invalid("flip requested without roles".into()));
                }
            }
            _ => return Err(invalid("source and driving must be given together".into())),
        }
        Ok(())
    }
}

/// One line of a score file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreRecord {
    pub pair_index: usize,
    pub left: String,
    pub right: String,
    pub score: f64,
    pub rep_counts: [usize; 2],
    pub fallback: [bool; 2],
}

impl ScoreRecord {
    pub fn any_fallback(&self) -> bool {
        self.fallback[0] || self.fallback[1]
    }
}

fn parse_lines<T, F>(text: &str, mut check: F) -> Result<Vec<T>, RecordError>
where
    T: for<'de> Deserialize<'de>,
    F: FnMut(&T, usize, usize) -> Result<(), RecordError>,
{
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let rec: T = serde_json::from_str(raw).map_err(|e| RecordError::Parse {
            line,
            message: e.to_string(),
        })?;
        check(&rec, line, out.len())?;
        out.push(rec);
    }
    Ok(out)
}

/// Plan records must appear in pair order, starting at 0.
pub fn parse_plan_file(text: &str) -> Result<Vec<PlanRecord>, RecordError> {
    parse_lines(text, |r: &PlanRecord, line, expected| {
        if r.pair_index != expected {
            return Err(RecordError::OutOfOrder {
                line,
                expected,
                found: r.pair_index,
            });
        }
        r.check(line)
    })
}

/// Score records must appear in pair order with finite scores in [-1, 1].
pub fn parse_score_file(text: &str) -> Result<Vec<ScoreRecord>, RecordError> {
    parse_lines(text, |r: &ScoreRecord, line, expected| {
        if r.pair_index != expected {
            return Err(RecordError::OutOfOrder {
                line,
                expected,
                found: r.pair_index,
            });
        }
        if !(-1.0..=1.0).contains(&r.score) {
            return Err(RecordError::Invalid {
                line,
                message: format!("score {} outside [-1, 1]", r.score),
            });
        }
        Ok(())
    })
}

pub fn write_lines<T: Serialize>(records: &[T]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("records always serialize"));
        out.push('\n');
    }
    out
}
