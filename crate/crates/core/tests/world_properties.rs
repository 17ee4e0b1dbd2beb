use ttaverify::manifest::encode;
use ttaverify::pipeline::ScoringMode;
use ttaverify::synthworld::{evaluate_world, generate_world, SyntheticWorldConfig};

fn small() -> SyntheticWorldConfig {
    SyntheticWorldConfig {
        n_identities: 60,
        pair_count_same: 500,
        pair_count_diff: 500,
        ..Default::default()
    }
}

#[test]
fn same_seed_same_bytes() {
    let cfg = SyntheticWorldConfig { seed: 7, ..small() };
    let a = encode(&generate_world(&cfg).unwrap()).unwrap();
    let b = encode(&generate_world(&cfg).unwrap()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn every_vector_is_unit_norm() {
    let m = generate_world(&small()).unwrap();
    for s in &m.samples {
        for v in s.representations.values() {
            assert!((v.norm() - 1.0).abs() < 1e-5);
        }
    }
}

#[test]
fn baseline_accuracy_degrades_with_pose_distortion() {
    let seeds: Vec<u64> = (0..10).collect();
    let means: Vec<f64> = [0.0, 0.002, 0.004, 0.008]
        .iter()
        .map(|&kp| {
            let accs: Vec<f64> = seeds
                .iter()
                .map(|&seed| {
                    let cfg = SyntheticWorldConfig { seed, pose_noise_scale: kp, ..small() };
                    evaluate_world(&generate_world(&cfg).unwrap(), ScoringMode::Baseline, 0).unwrap()
                })
                .collect();
            accs.iter().sum::<f64>() / accs.len() as f64
        })
        .collect();
    for w in means.windows(2) {
        assert!(w[1] <= w[0], "{means:?}");
    }
}
