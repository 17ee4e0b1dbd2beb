//! On-disk manifest format: a JSON-lines index plus a binary vector blob.
//!
//! The index starts with a header line `{"version":1,"dim":D,"metadata":{..}}`,
//! followed by one line per sample and one line per pair. The blob is
//! `b"PTTA"`, a little-endian `u32` version, a little-endian `u32` dim, and
//! then contiguous little-endian `f32` vectors. A representation's `offset` is
//! the 0-based vector index into the blob.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    EmbeddingVector, FaceSample, Manifest, ModelError, PairRecord, Provenance, RepresentationTag,
    Transform, META_RENORMALIZED,
};

pub const BLOB_MAGIC: &[u8; 4] = b"PTTA";
pub const FORMAT_VERSION: u32 = 1;
pub const BLOB_HEADER_LEN: usize = 12;

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("tensor blob {0} does not exist")]
    MissingBlob(PathBuf),
    #[error("index line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("blob does not start with the PTTA magic")]
    BadMagic,
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),
    #[error("malformed blob: {0}")]
    BlobLayout(String),
    #[error("sample {sample_id:?} references vector {offset} but the blob holds {available}")]
    OffsetOutOfRange {
        sample_id: String,
        offset: u64,
        available: usize,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl ManifestError {
    fn parse(line: usize, message: impl Into<String>) -> Self {
        ManifestError::Parse {
            line,
            message: message.into(),
        }
    }

    fn io(path: &Path, source: io::Error) -> Self {
        ManifestError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn is_io(&self) -> bool {
        matches!(self, ManifestError::Io { .. } | ManifestError::MissingBlob(_))
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HeaderLine {
    version: u32,
    dim: usize,
    #[serde(default)]
    metadata: BTreeMap<String, String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RepLine {
    transform: String,
    provenance: String,
    offset: u64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SampleLine {
    sample_id: String,
    identity_id: String,
    yaw_deg: Option<f64>,
    reps: Vec<RepLine>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PairLine {
    pair: (String, String),
    same: bool,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum BodyLine {
    Sample(SampleLine),
    Pair(PairLine),
}

/// Parsed but not yet resolved index file.
#[derive(Debug)]
pub struct Index {
    pub dim: usize,
    pub metadata: BTreeMap<String, String>,
    samples: Vec<SampleLine>,
    pairs: Vec<PairRecord>,
}

impl Index {
    pub fn sample_count(&self) -> usize {
        self.samples.len()
    }

    pub fn pair_count(&self) -> usize {
        self.pairs.len()
    }
}

pub fn parse_index(text: &str) -> Result<Index, ManifestError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty());

    let (hline, header) = lines
        .next()
        .ok_or_else(|| ManifestError::parse(1, "empty index"))?;
    let header: HeaderLine =
        serde_json::from_str(header).map_err(|e| ManifestError::parse(hline, e.to_string()))?;
    if header.version != FORMAT_VERSION {
        return Err(ManifestError::UnsupportedVersion(header.version));
    }
    if header.dim == 0 {
        return Err(ModelError::ZeroDim.into());
    }

    let mut samples = Vec::new();
    let mut pairs = Vec::new();
    for (line, raw) in lines {
        let body: BodyLine = serde_json::from_str(raw).map_err(|_| {
            ManifestError::parse(line, "neither a sample nor a pair record")
        })?;
        match body {
            BodyLine::Sample(s) => samples.push(s),
            BodyLine::Pair(p) => pairs.push(PairRecord::new(p.pair.0, p.pair.1, p.same)),
        }
    }
    Ok(Index {
        dim: header.dim,
        metadata: header.metadata,
        samples,
        pairs,
    })
}

/// Decoded blob payload.
#[derive(Debug)]
pub struct Blob {
    pub dim: usize,
    data: Vec<f32>,
}

impl Blob {
    pub fn vector_count(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn vector(&self, i: usize) -> Option<&[f32]> {
        let start = i.checked_mul(self.dim)?;
        self.data.get(start..start + self.dim)
    }
}

pub fn decode_blob(bytes: &[u8]) -> Result<Blob, ManifestError> {
    if bytes.len() < BLOB_HEADER_LEN {
        return Err(ManifestError::BlobLayout(format!(
            "{} bytes is shorter than the {BLOB_HEADER_LEN}-byte header",
            bytes.len()
        )));
    }
    if &bytes[..4] != BLOB_MAGIC {
        return Err(ManifestError::BadMagic);
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(ManifestError::UnsupportedVersion(version));
    }
    let dim = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    if dim == 0 {
        return Err(ModelError::ZeroDim.into());
    }
    let payload = &bytes[BLOB_HEADER_LEN..];
    let stride = dim
        .checked_mul(4)
        .ok_or_else(|| ManifestError::BlobLayout("dimension overflows".into()))?;
    if !payload.len().is_multiple_of(stride) {
        return Err(ManifestError::BlobLayout(format!(
            "payload of {} bytes is not a whole number of {dim}-channel vectors",
            payload.len()
        )));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(Blob { dim, data })
}

pub fn encode_blob(dim: usize, vectors: &[&EmbeddingVector]) -> Vec<u8> {
    let mut out = Vec::with_capacity(BLOB_HEADER_LEN + vectors.len() * dim * 4);
    out.extend_from_slice(BLOB_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(dim as u32).to_le_bytes());
    for v in vectors {
        for x in v.values() {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

/// Resolves a parsed index against its blob, normalizes every vector and
/// validates the result.
pub fn assemble(index: Index, blob: &Blob) -> Result<Manifest, ManifestError> {
    if blob.dim != index.dim {
        return Err(ModelError::DimMismatch {
            expected: index.dim,
            got: blob.dim,
            context: "blob header".into(),
        }
        .into());
    }
    let available = blob.vector_count();
    let mut renormalized = 0usize;
    let mut samples = Vec::with_capacity(index.samples.len());
    for s in index.samples {
        let mut sample = FaceSample {
            sample_id: s.sample_id,
            identity_id: s.identity_id,
            yaw_deg: s.yaw_deg,
            representations: BTreeMap::new(),
        };
        if let Some(yaw) = sample.yaw_deg {
            if !yaw.is_finite() {
                sample.yaw_deg = None;
            }
        }
        for rep in s.reps {
            let transform: Transform = rep.transform.parse()?;
            let provenance: Provenance = rep.provenance.parse()?;
            RepresentationTag::new(transform, provenance)?;
            let values = usize::try_from(rep.offset)
                .ok()
                .and_then(|i| blob.vector(i))
                .ok_or_else(|| ManifestError::OffsetOutOfRange {
                    sample_id: sample.sample_id.clone(),
                    offset: rep.offset,
                    available,
                })?;
            let mut vector = EmbeddingVector::new(values.to_vec()).map_err(|_| {
                ModelError::NonFinite(format!("sample {} {}", sample.sample_id, transform))
            })?;
            match vector.normalize_in_place() {
                None => {
                    return Err(ModelError::ZeroVector {
                        sample_id: sample.sample_id,
                        transform,
                    }
                    .into())
                }
                Some(true) => renormalized += 1,
                Some(false) => {}
            }
            if sample.representations.insert(transform, vector).is_some() {
                return Err(ModelError::DuplicateTransform {
                    sample_id: sample.sample_id,
                    transform,
                }
                .into());
            }
        }
        samples.push(sample);
    }
    let mut metadata = index.metadata;
    metadata.insert(META_RENORMALIZED.into(), renormalized.to_string());
    Ok(Manifest::new(index.dim, samples, index.pairs, metadata)?)
}

/// Decodes a manifest from in-memory index text and blob bytes.
pub fn decode(index_text: &str, blob_bytes: &[u8]) -> Result<Manifest, ManifestError> {
    let index = parse_index(index_text)?;
    let blob = decode_blob(blob_bytes)?;
    assemble(index, &blob)
}

/// Encodes a manifest into index text and blob bytes. Vectors are laid out
/// sample by sample, in transform order.
pub fn encode(m: &Manifest) -> Result<(String, Vec<u8>), ManifestError> {
    m.validate()?;
    let header = HeaderLine {
        version: FORMAT_VERSION,
        dim: m.dim,
        metadata: m.metadata.clone(),
    };
    let mut text = to_line(&header);
    let mut vectors = Vec::with_capacity(m.vector_count());
    for s in &m.samples {
        let reps = s
            .representations
            .iter()
            .map(|(t, v)| {
                vectors.push(v);
                RepLine {
                    transform: t.as_str().into(),
                    provenance: t.provenance().as_str().into(),
                    offset: (vectors.len() - 1) as u64,
                }
            })
            .collect();
        text.push_str(&to_line(&SampleLine {
            sample_id: s.sample_id.clone(),
            identity_id: s.identity_id.clone(),
            yaw_deg: s.yaw_deg,
            reps,
        }));
    }
    for p in &m.pairs {
        text.push_str(&to_line(&PairLine {
            pair: (p.left.clone(), p.right.clone()),
            same: p.is_same,
        }));
    }
    Ok((text, encode_blob(m.dim, &vectors)))
}

fn to_line<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string(value).expect("index records always serialize");
    s.push('\n');
    s
}

/// Blob file that accompanies an index: same path with a `.bin` extension.
pub fn blob_path(index_path: &Path) -> PathBuf {
    index_path.with_extension("bin")
}

pub fn load_manifest(path: &Path) -> Result<Manifest, ManifestError> {
    let text = fs::read_to_string(path).map_err(|e| ManifestError::io(path, e))?;
    let index = parse_index(&text)?;
    let bpath = blob_path(path);
    if !bpath.exists() {
        return Err(ManifestError::MissingBlob(bpath));
    }
    let bytes = fs::read(&bpath).map_err(|e| ManifestError::io(&bpath, e))?;
    let blob = decode_blob(&bytes)?;
    assemble(index, &blob)
}

/// Writes `path` (index) and its sibling blob. Invalid manifests are rejected
/// before anything touches the filesystem.
pub fn save_manifest(m: &Manifest, path: &Path) -> Result<(), ManifestError> {
    let (text, blob) = encode(m)?;
    fs::write(path, text).map_err(|e| ManifestError::io(path, e))?;
    let bpath = blob_path(path);
    fs::write(&bpath, blob).map_err(|e| ManifestError::io(&bpath, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vec(values: &[f32]) -> EmbeddingVector {
        EmbeddingVector::new(values.to_vec()).unwrap()
    }

    fn small() -> Manifest {
        let a = FaceSample::new("a", "id0", 10.0)
            .with_rep(Transform::Original, vec(&[1.0, 0.0, 0.0, 0.0]))
            .with_rep(Transform::Flipped, vec(&[0.0, 1.0, 0.0, 0.0]));
        let b = FaceSample::new("b", "id1", -45.0).with_rep(Transform::Original, vec(&[0.0, 0.0, 0.6, 0.8]));
        Manifest::new(4, vec![a, b], vec![PairRecord::new("a", "b", false)], BTreeMap::new()).unwrap()
    }

    #[test]
    fn encode_decode_round_trip() {
        let m = small();
        let (text, blob) = encode(&m).unwrap();
        assert_eq!(blob.len(), BLOB_HEADER_LEN + 3 * 4 * 4);
        let back = decode(&text, &blob).unwrap();
        assert_eq!(back.dim, 4);
        assert_eq!(back.samples, m.samples);
        assert_eq!(back.pairs, m.pairs);
        assert_eq!(back.metadata.get(META_RENORMALIZED).map(String::as_str), Some("0"));
    }

    #[test]
    fn header_line_is_first() {
        let (text, _) = encode(&small()).unwrap();
        let first = text.lines().next().unwrap();
        assert!(first.starts_with(r#"{"version":1,"dim":4,"metadata":{"#));
        assert!(text.lines().last().unwrap().starts_with(r#"{"pair":["a","b"],"same":false}"#));
    }

    #[test]
    fn norm_two_vector_is_halved_and_counted() {
        let text = "{\"version\":1,\"dim\":2,\"metadata\":{}}\n\
            {\"sample_id\":\"a\",\"identity_id\":\"i\",\"yaw_deg\":0.0,\"reps\":[{\"transform\":\"original\",\"provenance\":\"real\",\"offset\":0}]}\n";
        let mut blob = encode_blob(2, &[]);
        blob.extend_from_slice(&2.0f32.to_le_bytes());
        blob.extend_from_slice(&0.0f32.to_le_bytes());
        let m = decode(text, &blob).unwrap();
        assert_eq!(m.samples[0].get(Transform::Original).unwrap().values(), &[1.0, 0.0]);
        assert_eq!(m.metadata[META_RENORMALIZED], "1");
    }

    #[test]
    fn dangling_pair_is_reported() {
        let (mut text, blob) = encode(&small()).unwrap();
        text.push_str("{\"pair\":[\"a\",\"x9\"],\"same\":true}\n");
        match decode(&text, &blob) {
            Err(ManifestError::Model(ModelError::DanglingPairRef { sample_id, .. })) => {
                assert_eq!(sample_id, "x9")
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn zero_vector_is_rejected() {
        let text = "{\"version\":1,\"dim\":2}\n\
            {\"sample_id\":\"a\",\"identity_id\":\"i\",\"yaw_deg\":0.0,\"reps\":[{\"transform\":\"original\",\"provenance\":\"real\",\"offset\":0}]}\n";
        let mut blob = encode_blob(2, &[]);
        blob.extend_from_slice(&[0u8; 8]);
        assert!(matches!(
            decode(text, &blob),
            Err(ManifestError::Model(ModelError::ZeroVector { .. }))
        ));
    }

    #[test]
    fn blob_dim_must_match_header() {
        let (text, _) = encode(&small()).unwrap();
        let mut blob = encode_blob(3, &[]);
        blob.extend_from_slice(&[0u8; 36]);
        assert!(matches!(
            decode(&text, &blob),
            Err(ManifestError::Model(ModelError::DimMismatch { expected: 4, got: 3, .. }))
        ));
    }

    #[test]
    fn unknown_transform_and_bad_provenance_fail_hard() {
        let (text, blob) = encode(&small()).unwrap();
        let t = text.replacen("\"flipped\"", "\"rotated\"", 1);
        assert!(matches!(decode(&t, &blob), Err(ManifestError::Model(ModelError::UnknownTag(_)))));
        let t = text.replacen("\"flipped\",\"provenance\":\"real\"", "\"flipped\",\"provenance\":\"synthetic\"", 1);
        assert!(matches!(
            decode(&t, &blob),
            Err(ManifestError::Model(ModelError::ProvenanceMismatch { .. }))
        ));
    }

    #[test]
    fn malformed_blobs() {
        assert!(matches!(decode_blob(b"PTT"), Err(ManifestError::BlobLayout(_))));
        assert!(matches!(decode_blob(b"XXXX\x01\0\0\0\x02\0\0\0"), Err(ManifestError::BadMagic)));
        assert!(matches!(
            decode_blob(b"PTTA\x02\0\0\0\x02\0\0\0"),
            Err(ManifestError::UnsupportedVersion(2))
        ));
        assert!(matches!(
            decode_blob(b"PTTA\x01\0\0\0\x02\0\0\0\0\0\0\0"),
            Err(ManifestError::BlobLayout(_))
        ));
    }

    #[test]
    fn offsets_beyond_blob_are_rejected() {
        let (text, blob) = encode(&small()).unwrap();
        let t = text.replace("\"offset\":2", "\"offset\":99");
        assert!(matches!(decode(&t, &blob), Err(ManifestError::OffsetOutOfRange { offset: 99, .. })));
    }

    #[test]
    fn duplicate_transform_in_index() {
        let (text, blob) = encode(&small()).unwrap();
        let t = text.replace("\"transform\":\"flipped\"", "\"transform\":\"original\"");
        assert!(matches!(
            decode(&t, &blob),
            Err(ManifestError::Model(ModelError::DuplicateTransform { .. }))
        ));
    }

    #[test]
    fn invalid_manifest_is_not_written() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        let mut m = small();
        m.samples[0]
            .representations
            .insert(Transform::Animated, vec(&[1.0, 0.0]));
        assert!(matches!(
            save_manifest(&m, &path),
            Err(ManifestError::Model(ModelError::DimMismatch { .. }))
        ));
        assert!(!path.exists());
        assert!(!blob_path(&path).exists());
    }

    #[test]
    fn missing_blob_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.jsonl");
        save_manifest(&small(), &path).unwrap();
        fs::remove_file(blob_path(&path)).unwrap();
        assert!(matches!(load_manifest(&path), Err(ManifestError::MissingBlob(_))));
    }

    #[test]
    fn null_yaw_survives_round_trip() {
        let mut m = small();
        m.samples[1].yaw_deg = None;
        let (text, blob) = encode(&m).unwrap();
        assert!(text.contains("\"yaw_deg\":null"));
        assert_eq!(decode(&text, &blob).unwrap().samples[1].yaw_deg, None);
    }
}
