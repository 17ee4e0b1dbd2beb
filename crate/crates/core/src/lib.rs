//! Pose-aligned test-time augmentation for pairwise face verification.
//!
//! The engine works on precomputed embeddings stored in a [`manifest`]. For
//! every verification pair the [`selector`] picks the more frontal image as
//! the animation source and the other as the driving pose, the
//! [`aggregator`] fuses each side's real and animated views with
//! provenance-dependent weights, and [`protocol`] measures k-fold verification
//! accuracy. [`synthworld`] generates embedding worlds with known structure so
//! the whole pipeline can be exercised without any neural model.

pub mod aggregator;
pub mod manifest;
pub mod model;
pub mod pipeline;
pub mod protocol;
pub mod records;
pub mod selector;
pub mod synthworld;

pub use aggregator::{
    aggregate_for_sample, aggregate_plain, aggregate_weighted, cosine_similarity, AggregateError,
    AggregatedFeature, AggregationWeights, FallbackPolicy,
};
pub use manifest::{load_manifest, save_manifest, ManifestError};
pub use model::{
    EmbeddingVector, FaceSample, Manifest, ModelError, PairRecord, Provenance, RepresentationTag,
    Transform,
};
pub use protocol::{assign_folds, best_threshold, compare_runs, evaluate, FoldSpec, VerificationRun};
pub use selector::{build_plan, check_plan_coverage, select_roles, AugmentationPlan, RoleAssignment};
