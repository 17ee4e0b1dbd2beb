//! Synthetic embedding worlds with known structure.
//!
//! Every identity owns a unit prototype `u` and two pose-distortion
//! directions, `d_left` and `d_right = mirror(d_left)`, both orthogonal to
//! `u`. An image at yaw `y` embeds as
//!
//! ```text
//! original = normalize(u + kp*|y|*d_side(y)  + s*(1 + kp*|y|)*e)
//! flipped  = normalize(u + kp*|y|*d_other(y) + s*(1 + kp*|y|)*mirror(e))
//! ```
//!
//! where `e` is the image's own nuisance. Mirroring an image swaps its side
//! and mirrors its nuisance. The animator renders the source identity at
//! `y_res = (1 - a)*y_src + a*y_drv`, keeps the source nuisance, and adds a
//! fixed world bias `kb*b` plus fresh generation noise. If the source is not
//! mirrored although the two faces look in opposite directions, the animation
//! also picks up a cross-side penalty of length `kp*|y_src - (-y_src)|`.
//!
//! Each verification pair gets its own two manifest samples because animated
//! views depend on the partner image.

mod ablation;
mod config;

pub use ablation::{
    evaluate_world, run_ablation, run_flip_ablation, run_tta_gain, AblationRow, AblationTable,
    FlipAblation, TtaGain,
};
pub use config::{SyntheticWorldConfig, YawSign, CONFIG_KEYS};

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::model::{EmbeddingVector, FaceSample, Manifest, PairRecord, Transform};
use crate::pipeline::PipelineError;
use crate::selector::select_roles;

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("invalid world config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

/// Whether the simulated extractor mirrors the source when the flip rule fires.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnimatorMode {
    HonorFlip,
    IgnoreFlip,
}

// Independent counter-based streams, one per kind of draw, so that changing
// one part of the world never shifts the random numbers of another.
const STREAM_IDENTITIES: u64 = 1;
const STREAM_IMAGES: u64 = 2;
const STREAM_PAIRS: u64 = 3;
const STREAM_ANIMATOR: u64 = 4;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Reverses channel order; an involution standing in for horizontal mirroring.
pub fn mirror(v: &[f64]) -> Vec<f64> {
    v.iter().rev().copied().collect()
}

fn gaussian(rng: &mut ChaCha8Rng, dim: usize, scale: f64) -> Vec<f64> {
    (0..dim)
        .map(|_| rng.sample::<f64, _>(StandardNormal) * scale)
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn unit(mut v: Vec<f64>) -> Vec<f64> {
    let n = dot(&v, &v).sqrt();
    for x in &mut v {
        *x /= n;
    }
    v
}

fn orthogonal_unit(v: Vec<f64>, to: &[f64]) -> Vec<f64> {
    let p = dot(&v, to);
    unit(v.iter().zip(to).map(|(x, t)| x - p * t).collect())
}

struct Identity {
    prototype: Vec<f64>,
    left: Vec<f64>,
    right: Vec<f64>,
}

impl Identity {
    /// Distortion direction on the side the face looks toward; zero yaw counts as right.
    fn side(&self, yaw: f64, mirrored: bool) -> &[f64] {
        if (yaw < 0.0) != mirrored {
            &self.left
        } else {
            &self.right
        }
    }
}

struct Image {
    identity: usize,
    yaw: f64,
    /// Nuisance, already scaled by the yaw-dependent noise gain.
    nuisance: Vec<f64>,
}

/// Sum of `terms`, each a (scale, vector) pair.
fn combine(dim: usize, terms: &[(f64, &[f64])]) -> Vec<f64> {
    let mut out = vec![0.0; dim];
    for (s, v) in terms {
        if *s == 0.0 {
            continue;
        }
        for (o, x) in out.iter_mut().zip(v.iter()) {
            *o += s * x;
        }
    }
    out
}

fn embed(values: &[f64]) -> EmbeddingVector {
    EmbeddingVector::from_f64_normalized(values).expect("world embeddings are never zero")
}

pub fn generate_world(cfg: &SyntheticWorldConfig) -> Result<Manifest, WorldError> {
    generate_world_with(cfg, AnimatorMode::HonorFlip)
}

/// Generates a world. Both animator modes consume identical random draws, so
/// two worlds differing only in `mode` differ only in cross-side animations.
pub fn generate_world_with(cfg: &SyntheticWorldConfig, mode: AnimatorMode) -> Result<Manifest, WorldError> {
    cfg.validate()?;
    let dim = cfg.dim;
    let noise_unit = 1.0 / (dim as f64).sqrt();
    let kp = cfg.pose_noise_scale;

    let mut rng = stream(cfg.seed, STREAM_IDENTITIES);
    let bias = unit(gaussian(&mut rng, dim, 1.0));
    let identities: Vec<Identity> = (0..cfg.n_identities)
        .map(|_| {
            let prototype = unit(gaussian(&mut rng, dim, 1.0));
            let left = orthogonal_unit(gaussian(&mut rng, dim, 1.0), &prototype);
            let right = orthogonal_unit(mirror(&left), &prototype);
            Identity { prototype, left, right }
        })
        .collect();

    let mut rng = stream(cfg.seed, STREAM_IMAGES);
    let mut images = Vec::with_capacity(cfg.n_identities * cfg.samples_per_identity);
    for identity in 0..cfg.n_identities {
        for _ in 0..cfg.samples_per_identity {
            let magnitude = if cfg.pose_range_deg > cfg.min_abs_yaw_deg {
                rng.gen_range(cfg.min_abs_yaw_deg..=cfg.pose_range_deg)
            } else {
                cfg.min_abs_yaw_deg
            };
            let negative = rng.gen_bool(0.5) && cfg.yaw_sign == YawSign::Mixed;
            let yaw = if negative { -magnitude } else { magnitude };
            let gain = 1.0 + kp * yaw.abs();
            let nuisance = gaussian(&mut rng, dim, noise_unit * gain);
            images.push(Image { identity, yaw, nuisance });
        }
    }

    let mut rng = stream(cfg.seed, STREAM_PAIRS);
    let spi = cfg.samples_per_identity;
    let mut pairs: Vec<(usize, usize, bool)> = Vec::with_capacity(cfg.pair_count_same + cfg.pair_count_diff);
    for _ in 0..cfg.pair_count_same {
        let id = rng.gen_range(0..cfg.n_identities);
        let a = rng.gen_range(0..spi);
        let b = (a + rng.gen_range(1..spi)) % spi;
        pairs.push((id * spi + a, id * spi + b, true));
    }
    for _ in 0..cfg.pair_count_diff {
        let i = rng.gen_range(0..cfg.n_identities);
        let j = (i + rng.gen_range(1..cfg.n_identities)) % cfg.n_identities;
        pairs.push((i * spi + rng.gen_range(0..spi), j * spi + rng.gen_range(0..spi), false));
    }
    pairs.shuffle(&mut rng);

    let mut rng = stream(cfg.seed, STREAM_ANIMATOR);
    let sigma = cfg.obs_noise_scale;
    let width = pairs.len().max(1).to_string().len();
    let mut samples = Vec::with_capacity(2 * pairs.len());
    let mut records = Vec::with_capacity(pairs.len());
    for (k, &(li, ri, same)) in pairs.iter().enumerate() {
        let fresh_a = gaussian(&mut rng, dim, noise_unit);
        let fresh_af = gaussian(&mut rng, dim, noise_unit);
        let penalty_dir = unit(gaussian(&mut rng, dim, 1.0));

        let left_id = format!("p{k:0width$}-l");
        let right_id = format!("p{k:0width$}-r");
        let roles = select_roles(&left_id, images[li].yaw, &right_id, images[ri].yaw)
            .expect("generated yaws are finite");
        let drv_idx = if roles.source == left_id { ri } else { li };

        for (sid, idx) in [(&left_id, li), (&right_id, ri)] {
            let img = &images[idx];
            let ident = &identities[img.identity];
            let pose = kp * img.yaw.abs();
            let mirrored = mirror(&img.nuisance);
            let original = combine(dim, &[(1.0, &ident.prototype), (pose, ident.side(img.yaw, false)), (sigma, &img.nuisance)]);
            let flipped = combine(dim, &[(1.0, &ident.prototype), (pose, ident.side(img.yaw, true)), (sigma, &mirrored)]);
            let mut sample = FaceSample::new(sid.clone(), format!("id{:04}", img.identity), img.yaw)
                .with_rep(Transform::Original, embed(&original))
                .with_rep(Transform::Flipped, embed(&flipped));

            if *sid == roles.source {
                let drv = &images[drv_idx];
                let cross = roles.flip_source_before_animation;
                let honored = cross && mode == AnimatorMode::HonorFlip;
                let y_src = if honored { -img.yaw } else { img.yaw };
                let y_res = (1.0 - cfg.animator_fidelity) * y_src + cfg.animator_fidelity * drv.yaw;
                let pose_res = kp * y_res.abs();
                let (carry, carry_mirror) = if honored {
                    (&mirrored, &img.nuisance)
                } else {
                    (&img.nuisance, &mirrored)
                };
                let penalty = if cross && !honored {
                    kp * (img.yaw - (-img.yaw)).abs()
                } else {
                    0.0
                };
                let shared = [
                    (1.0, ident.prototype.as_slice()),
                    (cfg.animator_bias_scale, bias.as_slice()),
                    (penalty, penalty_dir.as_slice()),
                ];
                let mut animated = combine(dim, &shared);
                let mut animated_flipped = animated.clone();
                for (out, terms) in [
                    (&mut animated, [(pose_res, ident.side(y_res, false)), (sigma, carry.as_slice()), (sigma, fresh_a.as_slice())]),
                    (
                        &mut animated_flipped,
                        [(pose_res, ident.side(y_res, true)), (sigma, carry_mirror.as_slice()), (sigma, fresh_af.as_slice())],
                    ),
                ] {
                    let extra = combine(dim, &terms);
                    for (o, e) in out.iter_mut().zip(extra) {
                        *o += e;
                    }
                }
                sample = sample
                    .with_rep(Transform::Animated, embed(&animated))
                    .with_rep(Transform::AnimatedFlipped, embed(&animated_flipped));
            }
            samples.push(sample);
        }
        records.push(PairRecord::new(left_id, right_id, same));
    }

    let mut metadata: BTreeMap<String, String> = cfg
        .entries()
        .into_iter()
        .map(|(k, v)| (format!("world.{k}"), v))
        .collect();
    metadata.insert(
        "world.animator_mode".into(),
        match mode {
            AnimatorMode::HonorFlip => "honor-flip",
            AnimatorMode::IgnoreFlip => "ignore-flip",
        }
        .into(),
    );
    Manifest::new(dim, samples, records, metadata).map_err(|e| WorldError::InvalidConfig(e.to_string()))
}

/// Fraction of pairs whose two images face opposite directions.
pub fn opposite_sign_fraction(m: &Manifest) -> f64 {
    let index = m.index();
    let opposite = m
        .pairs
        .iter()
        .filter(|p| {
            let yaw = |id: &str| index.get(id).and_then(|s| s.yaw_deg).unwrap_or(0.0);
            yaw(&p.left) * yaw(&p.right) < 0.0
        })
        .count();
    opposite as f64 / m.pairs.len().max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aggregator::{aggregate_plain, cosine_similarity, AggregatedFeature};
    use crate::manifest::encode;

    fn small() -> SyntheticWorldConfig {
        SyntheticWorldConfig {
            n_identities: 10,
            samples_per_identity: 3,
            dim: 16,
            pair_count_same: 20,
            pair_count_diff: 20,
            ..Default::default()
        }
    }

    fn feature(v: &EmbeddingVector) -> AggregatedFeature {
        aggregate_plain(&[v]).unwrap()
    }

    #[test]
    fn generation_is_deterministic() {
        let mut cfg = small();
        cfg.seed = 7;
        let a = encode(&generate_world(&cfg).unwrap()).unwrap();
        let b = encode(&generate_world(&cfg).unwrap()).unwrap();
        assert_eq!(a, b);
        cfg.seed = 8;
        assert_ne!(a, encode(&generate_world(&cfg).unwrap()).unwrap());
    }

    #[test]
    fn shape_and_tags() {
        let m = generate_world(&small()).unwrap();
        assert_eq!(m.pairs.len(), 40);
        assert_eq!(m.samples.len(), 80);
        assert_eq!(m.pairs.iter().filter(|p| p.is_same).count(), 20);
        // one source (4 views) and one driving (2 views) per pair
        assert_eq!(m.vector_count(), 40 * 6);
        for s in &m.samples {
            for v in s.representations.values() {
                assert!((v.norm() - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn distortion_free_world_collapses_identities() {
        let mut cfg = small();
        cfg.pose_noise_scale = 0.0;
        cfg.animator_bias_scale = 0.0;
        cfg.obs_noise_scale = 0.0;
        let m = generate_world(&cfg).unwrap();
        let mut by_identity: BTreeMap<&str, &EmbeddingVector> = BTreeMap::new();
        for s in &m.samples {
            for v in s.representations.values() {
                let first = *by_identity.entry(&s.identity_id).or_insert(v);
                assert_eq!(first, v);
            }
        }
    }

    #[test]
    fn perfect_animator_matches_driving_pose() {
        let mut cfg = small();
        cfg.animator_fidelity = 1.0;
        cfg.animator_bias_scale = 0.0;
        cfg.obs_noise_scale = 0.0;
        cfg.pair_count_diff = 0;
        let m = generate_world(&cfg).unwrap();
        let index = m.index();
        for p in &m.pairs {
            let (l, r) = (index.get(&p.left).unwrap(), index.get(&p.right).unwrap());
            let (src, drv) = if l.representations.len() == 4 { (l, r) } else { (r, l) };
            let c = cosine_similarity(
                &feature(src.get(Transform::Animated).unwrap()),
                &feature(drv.get(Transform::Original).unwrap()),
            )
            .unwrap();
            assert!((c - 1.0).abs() < 1e-6, "cosine {c}");
        }
    }

    #[test]
    fn flip_modes_agree_without_opposite_yaws() {
        let mut cfg = small();
        cfg.yaw_sign = YawSign::Positive;
        let a = generate_world_with(&cfg, AnimatorMode::HonorFlip).unwrap();
        let b = generate_world_with(&cfg, AnimatorMode::IgnoreFlip).unwrap();
        assert_eq!(a.samples, b.samples);
        assert_eq!(opposite_sign_fraction(&a), 0.0);
    }

    #[test]
    fn flip_modes_differ_on_cross_side_pairs() {
        let cfg = small();
        let a = generate_world_with(&cfg, AnimatorMode::HonorFlip).unwrap();
        let b = generate_world_with(&cfg, AnimatorMode::IgnoreFlip).unwrap();
        assert!(opposite_sign_fraction(&a) > 0.2);
        assert_ne!(a.samples, b.samples);
        // real views never depend on the animator
        for (x, y) in a.samples.iter().zip(&b.samples) {
            assert_eq!(x.get(Transform::Original), y.get(Transform::Original));
            assert_eq!(x.get(Transform::Flipped), y.get(Transform::Flipped));
        }
    }

    #[test]
    fn mirror_is_an_involution() {
        let v: Vec<f64> = (0..9).map(|i| i as f64 * 0.5 - 1.0).collect();
        assert_eq!(mirror(&mirror(&v)), v);
    }

    #[test]
    fn yaw_band_is_respected() {
        let mut cfg = small();
        cfg.min_abs_yaw_deg = 30.0;
        cfg.pose_range_deg = 80.0;
        let m = generate_world(&cfg).unwrap();
        for s in &m.samples {
            let y = s.yaw_deg.unwrap().abs();
            assert!((30.0..=80.0).contains(&y));
        }
    }

    #[test]
    fn invalid_config_is_rejected() {
        let mut cfg = small();
        cfg.animator_fidelity = 2.0;
        assert!(matches!(generate_world(&cfg), Err(WorldError::InvalidConfig(_))));
    }
}
