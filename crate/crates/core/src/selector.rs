//! Face selector: picks the source and driving image of a pair by yaw and
//! decides whether the source must be mirrored before animation.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Manifest, PairRecord, RepresentationTag, SampleIndex, Transform};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SelectError {
    #[error("yaw of sample {sample_id:?} is missing or not finite")]
    NonFiniteYaw { sample_id: String },
    #[error("unknown sample {0:?}")]
    UnknownSample(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoleAssignment {
    pub source: String,
    pub driving: String,
    pub flip_source_before_animation: bool,
}

/// Representations each side of a pair must contribute.
pub const SOURCE_TAGS: [Transform; 4] = [
    Transform::Original,
    Transform::Flipped,
    Transform::Animated,
    Transform::AnimatedFlipped,
];
pub const DRIVING_TAGS: [Transform; 2] = [Transform::Original, Transform::Flipped];

pub fn source_tags() -> BTreeSet<RepresentationTag> {
    SOURCE_TAGS.iter().map(|t| t.tag()).collect()
}

pub fn driving_tags() -> BTreeSet<RepresentationTag> {
    DRIVING_TAGS.iter().map(|t| t.tag()).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentationPlan {
    pub roles: RoleAssignment,
    pub required_reps: BTreeMap<String, BTreeSet<RepresentationTag>>,
}

impl AugmentationPlan {
    pub fn required_for(&self, sample_id: &str) -> Option<&BTreeSet<RepresentationTag>> {
        self.required_reps.get(sample_id)
    }
}

/// Mirroring is needed when the two faces look in opposite directions. A zero
/// yaw has no direction, so a zero product never flips.
pub fn needs_flip(yaw_a: f64, yaw_b: f64) -> bool {
    yaw_a * yaw_b < 0.0
}

/// The smaller |yaw| becomes the source; on a tie the first argument wins.
pub fn select_roles(
    id1: &str,
    yaw1: f64,
    id2: &str,
    yaw2: f64,
) -> Result<RoleAssignment, SelectError> {
    for (id, yaw) in [(id1, yaw1), (id2, yaw2)] {
        if !yaw.is_finite() {
            return Err(SelectError::NonFiniteYaw {
                sample_id: id.to_string(),
            });
        }
    }
    let (source, driving) = if yaw2.abs() < yaw1.abs() {
        (id2, id1)
    } else {
        (id1, id2)
    };
    Ok(RoleAssignment {
        source: source.to_string(),
        driving: driving.to_string(),
        flip_source_before_animation: needs_flip(yaw1, yaw2),
    })
}

pub fn build_plan(pair: &PairRecord, m: &Manifest) -> Result<AugmentationPlan, SelectError> {
    build_plan_indexed(pair, &m.index())
}

pub fn build_plan_indexed(
    pair: &PairRecord,
    index: &SampleIndex<'_>,
) -> Result<AugmentationPlan, SelectError> {
    let lookup = |id: &str| {
        index
            .get(id)
            .ok_or_else(|| SelectError::UnknownSample(id.to_string()))
    };
    let left = lookup(&pair.left)?;
    let right = lookup(&pair.right)?;
    let yaw = |s: &crate::model::FaceSample| {
        s.yaw_deg.ok_or_else(|| SelectError::NonFiniteYaw {
            sample_id: s.sample_id.clone(),
        })
    };
    let roles = select_roles(&left.sample_id, yaw(left)?, &right.sample_id, yaw(right)?)?;
    let mut required_reps = BTreeMap::new();
    required_reps.insert(roles.source.clone(), source_tags());
    required_reps.insert(roles.driving.clone(), driving_tags());
    Ok(AugmentationPlan {
        roles,
        required_reps,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct CoverageReport {
    pub missing: Vec<(String, RepresentationTag)>,
}

impl CoverageReport {
    pub fn is_complete(&self) -> bool {
        self.missing.is_empty()
    }
}

/// Lists required representations absent from the manifest. Extra
/// representations are ignored.
pub fn check_plan_coverage(plan: &AugmentationPlan, m: &Manifest) -> CoverageReport {
    check_plan_coverage_indexed(plan, &m.index())
}

pub fn check_plan_coverage_indexed(plan: &AugmentationPlan, index: &SampleIndex<'_>) -> CoverageReport {
    let mut missing = Vec::new();
    for (id, tags) in &plan.required_reps {
        let sample = index.get(id);
        for &tag in tags {
            if !sample.is_some_and(|s| s.has(tag)) {
                missing.push((id.clone(), tag));
            }
        }
    }
    CoverageReport { missing }
}
