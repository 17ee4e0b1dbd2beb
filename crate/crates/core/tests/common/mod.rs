//! Reference implementations written from the definitions alone, sharing no
//! code with the library beyond its public types.

#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use ttaverify::{EmbeddingVector, RepresentationTag, Transform};

/// Weighted mean of provenance-weighted vectors, divided by the rep count and
/// L2-normalized, one component at a time. `None` when every weight is zero
/// or the sum vanishes.
pub fn oracle_aggregate(reps: &[(Transform, Vec<f32>)], w_real: f64, w_syn: f64) -> Option<Vec<f64>> {
    let weight = |t: Transform| match t {
        Transform::Original | Transform::Flipped => w_real,
        Transform::Animated | Transform::AnimatedFlipped => w_syn,
    };
    if reps.iter().all(|(t, _)| weight(*t) == 0.0) {
        return None;
    }
    let dim = reps[0].1.len();
    let mut out = vec![0.0f64; dim];
    for (j, slot) in out.iter_mut().enumerate() {
        let mut s = 0.0f64;
        for (t, v) in reps {
            s += weight(*t) * v[j] as f64;
        }
        *slot = s / reps.len() as f64;
    }
    let mut sq = 0.0;
    for x in &out {
        sq += x * x;
    }
    let norm = sq.sqrt();
    if norm < 1e-9 {
        return None;
    }
    Some(out.into_iter().map(|x| x / norm).collect())
}

pub fn random_transform(rng: &mut ChaCha8Rng) -> Transform {
    Transform::ALL[rng.gen_range(0..4)]
}

pub fn random_unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f32> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-3 {
            return v.iter().map(|x| (x / n) as f32).collect();
        }
    }
}

pub fn tagged(reps: &[(Transform, Vec<f32>)]) -> Vec<(RepresentationTag, EmbeddingVector)> {
    reps.iter()
        .map(|(t, v)| (t.tag(), EmbeddingVector::new(v.clone()).unwrap()))
        .collect()
}

/// Threshold search and k-fold evaluation by exhaustive enumeration.
pub struct OracleRun {
    pub thresholds: Vec<f64>,
    pub fold_accuracies: Vec<f64>,
    pub mean_accuracy: f64,
}

pub fn oracle_fold_sizes(n: usize, k: usize) -> Vec<usize> {
    (0..k).map(|f| n / k + usize::from(f < n % k)).collect()
}

pub fn oracle_best_threshold(pairs: &[(f64, bool)]) -> f64 {
    let mut best_t = f64::NAN;
    let mut best_correct: i64 = -1;
    for i in 0..=4000 {
        let t = (i as f64 - 2000.0) / 2000.0;
        let mut correct = 0i64;
        for &(s, same) in pairs {
            let predicted_same = s >= t;
            if predicted_same == same {
                correct += 1;
            }
        }
        if correct > best_correct {
            best_correct = correct;
            best_t = t;
        }
    }
    best_t
}

pub fn oracle_evaluate(scores: &[f64], labels: &[bool], k: usize) -> OracleRun {
    let sizes = oracle_fold_sizes(scores.len(), k);
    let mut starts = vec![0usize];
    for s in &sizes {
        starts.push(starts.last().unwrap() + s);
    }
    let mut thresholds = Vec::new();
    let mut fold_accuracies = Vec::new();
    for f in 0..k {
        let (lo, hi) = (starts[f], starts[f + 1]);
        let mut train = Vec::new();
        for i in 0..scores.len() {
            if i < lo || i >= hi {
                train.push((scores[i], labels[i]));
            }
        }
        let t = oracle_best_threshold(&train);
        let mut correct = 0usize;
        for i in lo..hi {
            if (scores[i] >= t) == labels[i] {
                correct += 1;
            }
        }
        thresholds.push(t);
        fold_accuracies.push(correct as f64 / (hi - lo) as f64);
    }
    let mut total = 0.0;
    for a in &fold_accuracies {
        total += a;
    }
    OracleRun {
        thresholds,
        mean_accuracy: total / k as f64,
        fold_accuracies,
    }
}

/// A random protocol instance; a quarter of the scores sit exactly on grid
/// points so the `score >= t` boundary and tie rule are exercised.
pub fn random_instance(rng: &mut ChaCha8Rng, max_pairs: usize) -> (Vec<f64>, Vec<bool>, usize) {
    let k = rng.gen_range(2..=10);
    let n = rng.gen_range(k.max(2)..=max_pairs);
    let separation = rng.gen_range(0.0..0.8);
    let mut scores = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let same = rng.gen_bool(0.5);
        let s: f64 = if rng.gen_bool(0.25) {
            (rng.gen_range(0..=4000) as f64 - 2000.0) / 2000.0
        } else {
            let centre = if same { separation / 2.0 } else { -separation / 2.0 };
            (centre + rng.gen_range(-0.6..0.6f64)).clamp(-1.0, 1.0)
        };
        scores.push(s);
        labels.push(same);
    }
    (scores, labels, k)
}
