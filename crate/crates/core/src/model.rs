//! Domain types shared by every stage of the engine.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Renormalization is applied only when a stored norm is further than this from 1.
pub const RENORM_TOLERANCE: f64 = 1e-4;
/// Vectors with a smaller norm cannot be normalized and are rejected.
pub const ZERO_NORM: f64 = 1e-12;

/// Metadata key holding the count of vectors rescaled during ingestion.
pub const META_RENORMALIZED: &str = "renormalized_vectors";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("embedding dimension mismatch: expected {expected}, got {got} ({context})")]
    DimMismatch {
        expected: usize,
        got: usize,
        context: String,
    },
    #[error("zero-norm embedding for sample {sample_id} ({transform})")]
    ZeroVector {
        sample_id: String,
        transform: Transform,
    },
    #[error("pair #{index} references unknown sample {sample_id:?}")]
    DanglingPairRef { index: usize, sample_id: String },
    #[error("pair #{index} compares sample {sample_id:?} with itself")]
    SelfPair { index: usize, sample_id: String },
    #[error("duplicate sample id {0:?}")]
    DuplicateSample(String),
    #[error("sample {0:?} has no original representation")]
    MissingOriginal(String),
    #[error("duplicate {transform} representation on sample {sample_id:?}")]
    DuplicateTransform {
        sample_id: String,
        transform: Transform,
    },
    #[error("{transform} cannot carry {provenance} provenance")]
    ProvenanceMismatch {
        transform: Transform,
        provenance: Provenance,
    },
    #[error("unknown representation tag {0:?}")]
    UnknownTag(String),
    #[error("yaw {yaw} of sample {sample_id:?} is outside [-180, 180] degrees")]
    YawOutOfRange { sample_id: String, yaw: f64 },
    #[error("embedding has non-finite component ({0})")]
    NonFinite(String),
    #[error("manifest dimension must be at least 1")]
    ZeroDim,
}

/// Which image transform produced an embedding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    Original,
    Flipped,
    Animated,
    AnimatedFlipped,
}

impl Transform {
    pub const ALL: [Transform; 4] = [
        Transform::Original,
        Transform::Flipped,
        Transform::Animated,
        Transform::AnimatedFlipped,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Transform::Original => "original",
            Transform::Flipped => "flipped",
            Transform::Animated => "animated",
            Transform::AnimatedFlipped => "animated_flipped",
        }
    }

    /// Animated views come from the portrait animator; the rest are camera images.
    pub fn provenance(self) -> Provenance {
        match self {
            Transform::Original | Transform::Flipped => Provenance::Real,
            Transform::Animated | Transform::AnimatedFlipped => Provenance::Synthetic,
        }
    }

    pub fn tag(self) -> RepresentationTag {
        RepresentationTag {
            transform: self,
            provenance: self.provenance(),
        }
    }
}

impl fmt::Display for Transform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Transform {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "original" => Ok(Transform::Original),
            "flipped" => Ok(Transform::Flipped),
            "animated" => Ok(Transform::Animated),
            "animated_flipped" => Ok(Transform::AnimatedFlipped),
            other => Err(ModelError::UnknownTag(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Real,
    Synthetic,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Real => "real",
            Provenance::Synthetic => "synthetic",
        }
    }
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Provenance {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "real" => Ok(Provenance::Real),
            "synthetic" => Ok(Provenance::Synthetic),
            other => Err(ModelError::UnknownTag(other.to_string())),
        }
    }
}

/// Transform plus provenance. Only the four pairings where provenance matches
/// [`Transform::provenance`] can be constructed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RepresentationTag {
    transform: Transform,
    provenance: Provenance,
}

impl RepresentationTag {
    pub const ORIGINAL: Self = Self {
        transform: Transform::Original,
        provenance: Provenance::Real,
    };
    pub const FLIPPED: Self = Self {
        transform: Transform::Flipped,
        provenance: Provenance::Real,
    };
    pub const ANIMATED: Self = Self {
        transform: Transform::Animated,
        provenance: Provenance::Synthetic,
    };
    pub const ANIMATED_FLIPPED: Self = Self {
        transform: Transform::AnimatedFlipped,
        provenance: Provenance::Synthetic,
    };

    pub fn new(transform: Transform, provenance: Provenance) -> Result<Self, ModelError> {
        if transform.provenance() != provenance {
            return Err(ModelError::ProvenanceMismatch {
                transform,
                provenance,
            });
        }
        Ok(Self {
            transform,
            provenance,
        })
    }

    pub fn transform(self) -> Transform {
        self.transform
    }

    pub fn provenance(self) -> Provenance {
        self.provenance
    }

    pub fn is_synthetic(self) -> bool {
        self.provenance == Provenance::Synthetic
    }
}

impl fmt::Display for RepresentationTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.transform, self.provenance)
    }
}

impl Serialize for RepresentationTag {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.transform.as_str())
    }
}

impl<'de> Deserialize<'de> for RepresentationTag {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        let transform: Transform = s.parse().map_err(serde::de::Error::custom)?;
        Ok(transform.tag())
    }
}

/// A single embedding as stored on disk (32-bit channels).
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector(Vec<f32>);

impl EmbeddingVector {
    pub fn new(values: Vec<f32>) -> Result<Self, ModelError> {
        if values.is_empty() {
            return Err(ModelError::ZeroDim);
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite(format!("channel {i}")));
        }
        Ok(Self(values))
    }

    /// Builds a unit vector from `f64` values, rounding each channel to `f32`.
    pub fn from_f64_normalized(values: &[f64]) -> Option<Self> {
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !norm.is_finite() || norm < ZERO_NORM {
            return None;
        }
        Some(Self(values.iter().map(|v| (v / norm) as f32).collect()))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f32] {
        &self.0
    }

    pub fn into_values(self) -> Vec<f32> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        self.0
            .iter()
            .map(|&v| f64::from(v) * f64::from(v))
            .sum::<f64>()
            .sqrt()
    }

    /// Rescales to unit length when the norm is off by more than
    /// [`RENORM_TOLERANCE`]. Returns whether the payload changed; `None` means
    /// the vector is (numerically) zero.
    pub fn normalize_in_place(&mut self) -> Option<bool> {
        let norm = self.norm();
        if norm < ZERO_NORM {
            return None;
        }
        if (norm - 1.0).abs() <= RENORM_TOLERANCE {
            return Some(false);
        }
        for v in &mut self.0 {
            *v = (f64::from(*v) / norm) as f32;
        }
        Some(true)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FaceSample {
    pub sample_id: String,
    pub identity_id: String,
    /// Signed yaw in degrees; `None` when the pose estimator produced nothing.
    pub yaw_deg: Option<f64>,
    pub representations: BTreeMap<Transform, EmbeddingVector>,
}

impl FaceSample {
    pub fn new(sample_id: impl Into<String>, identity_id: impl Into<String>, yaw_deg: f64) -> Self {
        Self {
            sample_id: sample_id.into(),
            identity_id: identity_id.into(),
            yaw_deg: Some(yaw_deg),
            representations: BTreeMap::new(),
        }
    }

    pub fn with_rep(mut self, transform: Transform, vector: EmbeddingVector) -> Self {
        self.representations.insert(transform, vector);
        self
    }

    pub fn get(&self, transform: Transform) -> Option<&EmbeddingVector> {
        self.representations.get(&transform)
    }

    pub fn has(&self, tag: RepresentationTag) -> bool {
        self.representations.contains_key(&tag.transform())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairRecord {
    pub left: String,
    pub right: String,
    pub is_same: bool,
}

impl PairRecord {
    pub fn new(left: impl Into<String>, right: impl Into<String>, is_same: bool) -> Self {
        Self {
            left: left.into(),
            right: right.into(),
            is_same,
        }
    }
}

/// A validated collection of samples and verification pairs.
///
/// Fields are public for construction in tests and adapters; anything that
/// reads or writes a manifest calls [`Manifest::validate`] first.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub dim: usize,
    pub samples: Vec<FaceSample>,
    pub pairs: Vec<PairRecord>,
    pub metadata: BTreeMap<String, String>,
}

impl Manifest {
    pub fn new(
        dim: usize,
        samples: Vec<FaceSample>,
        pairs: Vec<PairRecord>,
        metadata: BTreeMap<String, String>,
    ) -> Result<Self, ModelError> {
        let m = Self {
            dim,
            samples,
            pairs,
            metadata,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.dim == 0 {
            return Err(ModelError::ZeroDim);
        }
        let mut seen: HashMap<&str, ()> = HashMap::with_capacity(self.samples.len());
        for s in &self.samples {
            if seen.insert(s.sample_id.as_str(), ()).is_some() {
                return Err(ModelError::DuplicateSample(s.sample_id.clone()));
            }
            if let Some(yaw) = s.yaw_deg {
                if !(-180.0..=180.0).contains(&yaw) {
                    return Err(ModelError::YawOutOfRange {
                        sample_id: s.sample_id.clone(),
                        yaw,
                    });
                }
            }
            if !s.representations.contains_key(&Transform::Original) {
                return Err(ModelError::MissingOriginal(s.sample_id.clone()));
            }
            for (&transform, v) in &s.representations {
                if v.dim() != self.dim {
                    return Err(ModelError::DimMismatch {
                        expected: self.dim,
                        got: v.dim(),
                        context: format!("sample {} {}", s.sample_id, transform),
                    });
                }
                if v.norm() < ZERO_NORM {
                    return Err(ModelError::ZeroVector {
                        sample_id: s.sample_id.clone(),
                        transform,
                    });
                }
            }
        }
        for (index, p) in self.pairs.iter().enumerate() {
            for id in [&p.left, &p.right] {
                if !seen.contains_key(id.as_str()) {
                    return Err(ModelError::DanglingPairRef {
                        index,
                        sample_id: id.clone(),
                    });
                }
            }
            if p.left == p.right {
                return Err(ModelError::SelfPair {
                    index,
                    sample_id: p.left.clone(),
                });
            }
        }
        Ok(())
    }

    /// Builds an id → position lookup. Callers doing many lookups should keep it.
    pub fn index(&self) -> SampleIndex<'_> {
        SampleIndex {
            manifest: self,
            by_id: self
                .samples
                .iter()
                .enumerate()
                .map(|(i, s)| (s.sample_id.as_str(), i))
                .collect(),
        }
    }

    pub fn labels(&self) -> Vec<bool> {
        self.pairs.iter().map(|p| p.is_same).collect()
    }

    pub fn vector_count(&self) -> usize {
        self.samples.iter().map(|s| s.representations.len()).sum()
    }
}

pub struct SampleIndex<'a> {
    manifest: &'a Manifest,
    by_id: HashMap<&'a str, usize>,
}

impl<'a> SampleIndex<'a> {
    pub fn get(&self, sample_id: &str) -> Option<&'a FaceSample> {
        self.by_id
            .get(sample_id)
            .map(|&i| &self.manifest.samples[i])
    }

    pub fn manifest(&self) -> &'a Manifest {
        self.manifest
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(values: &[f32]) -> EmbeddingVector {
        EmbeddingVector::new(values.to_vec()).unwrap()
    }

    fn two_sample_manifest() -> Manifest {
        let a = FaceSample::new("a", "id0", 10.0).with_rep(Transform::Original, unit(&[1.0, 0.0]));
        let b = FaceSample::new("b", "id0", -45.0).with_rep(Transform::Original, unit(&[0.0, 1.0]));
        Manifest::new(2, vec![a, b], vec![PairRecord::new("a", "b", true)], BTreeMap::new()).unwrap()
    }

    #[test]
    fn tag_provenance_is_fixed_by_transform() {
        for t in Transform::ALL {
            assert!(RepresentationTag::new(t, t.provenance()).is_ok());
        }
        assert!(matches!(
            RepresentationTag::new(Transform::Animated, Provenance::Real),
            Err(ModelError::ProvenanceMismatch { .. })
        ));
        assert!(matches!(
            RepresentationTag::new(Transform::Flipped, Provenance::Synthetic),
            Err(ModelError::ProvenanceMismatch { .. })
        ));
    }

    #[test]
    fn unknown_transform_is_rejected() {
        assert_eq!(
            "rotated".parse::<Transform>(),
            Err(ModelError::UnknownTag("rotated".into()))
        );
        assert_eq!("animated_flipped".parse::<Transform>(), Ok(Transform::AnimatedFlipped));
    }

    #[test]
    fn normalize_halves_norm_two_vector() {
        let mut v = unit(&[2.0, 0.0, 0.0, 0.0]);
        assert_eq!(v.normalize_in_place(), Some(true));
        assert_eq!(v.values(), &[1.0, 0.0, 0.0, 0.0]);
        let mut w = unit(&[1.2, 1.6]);
        w.normalize_in_place();
        assert!((w.values()[0] - 0.6).abs() < 1e-7);
        assert!((w.values()[1] - 0.8).abs() < 1e-7);
    }

    #[test]
    fn normalize_leaves_unit_vector_untouched() {
        let mut v = unit(&[0.6, 0.8]);
        let before = v.clone();
        assert_eq!(v.normalize_in_place(), Some(false));
        assert_eq!(v, before);
        let mut z = unit(&[0.0, 0.0]);
        assert_eq!(z.normalize_in_place(), None);
    }

    #[test]
    fn validation_catches_each_violation() {
        let good = two_sample_manifest();
        assert!(good.validate().is_ok());

        let mut m = good.clone();
        m.pairs.push(PairRecord::new("a", "x9", false));
        assert!(matches!(m.validate(), Err(ModelError::DanglingPairRef { index: 1, .. })));

        let mut m = good.clone();
        m.samples[1]
            .representations
            .insert(Transform::Flipped, unit(&[1.0, 0.0, 0.0]));
        assert!(matches!(m.validate(), Err(ModelError::DimMismatch { expected: 2, got: 3, .. })));

        let mut m = good.clone();
        m.samples[0].representations.remove(&Transform::Original);
        assert!(matches!(m.validate(), Err(ModelError::MissingOriginal(_))));

        let mut m = good.clone();
        m.samples[1].sample_id = "a".into();
        assert!(matches!(m.validate(), Err(ModelError::DuplicateSample(_))));

        let mut m = good.clone();
        m.pairs[0].right = "a".into();
        assert!(matches!(m.validate(), Err(ModelError::SelfPair { .. })));

        let mut m = good;
        m.samples[0].yaw_deg = Some(181.0);
        assert!(matches!(m.validate(), Err(ModelError::YawOutOfRange { .. })));
    }

    #[test]
    fn non_finite_channels_are_rejected() {
        assert!(EmbeddingVector::new(vec![1.0, f32::NAN]).is_err());
        assert!(EmbeddingVector::new(vec![]).is_err());
    }
}
