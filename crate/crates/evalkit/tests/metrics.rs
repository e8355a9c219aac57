//! Cross-metric properties and the frozen saliency-metric oracle case.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tensor_core::Tensor;

use evalkit::{jaccard, vsod_metrics};

fn rand_mask(h: usize, w: usize, seed: u64) -> Tensor<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(&[h, w], |_| if rng.gen_bool(0.4) { 1.0 } else { 0.0 })
}

#[test]
fn jaccard_symmetry_and_self_identity_many_seeds() {
    for seed in 0..100u64 {
        let a = rand_mask(12, 9, seed * 2);
        let b = rand_mask(12, 9, seed * 2 + 1);
        assert_eq!(jaccard(&a, &b).unwrap(), jaccard(&b, &a).unwrap());
        if a.data().iter().any(|&v| v == 1.0) {
            assert_eq!(jaccard(&a, &a).unwrap(), 1.0);
        }
    }
}

#[test]
fn perfect_prediction_scores_perfectly() {
    let gt = rand_mask(16, 16, 3);
    let scores = vsod_metrics(&gt, &gt).unwrap();
    assert_eq!(scores.mae, 0.0);
    assert!((scores.f_max - 1.0).abs() < 1e-9, "f_max {}", scores.f_max);
    assert!((scores.s_measure - 1.0).abs() < 1e-9, "s {}", scores.s_measure);
    assert!((scores.e_max - 1.0).abs() < 1e-9, "e_max {}", scores.e_max);
}

#[test]
fn inverted_prediction_scores_at_the_floor() {
    let gt = Tensor::from_fn(&[16, 16], |i| {
        let (y, x) = (i / 16, i % 16);
        ((4..10).contains(&y) && (5..11).contains(&x)) as u8 as f32
    });
    let inv = gt.map(|v| 1.0 - v);
    let scores = vsod_metrics(&inv, &gt).unwrap();
    assert_eq!(scores.mae, 1.0);
    assert_eq!(scores.f_max, 0.0);
}

#[test]
fn mae_complement_symmetry() {
    // dyadic probabilities so the complement is exact in f32
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let pred = Tensor::from_fn(&[10, 10], |_| rng.gen_range(0..=256) as f32 / 256.0);
    let gt = rand_mask(10, 10, 12);
    let a = vsod_metrics(&pred, &gt).unwrap().mae;
    let b = vsod_metrics(&pred.map(|v| 1.0 - v), &gt.map(|v| 1.0 - v)).unwrap().mae;
    assert!((a - b).abs() < 1e-12);
}

/// Smoothed 16x16 case, expected values frozen from an independent NumPy
/// implementation of the published metric formulas (run before this crate
/// was written): gt is a 6x6 square at rows 4..10, cols 5..11; the
/// prediction decays by 0.1875 per Chebyshev ring around the same square
/// shifted by (+1, +1). The dyadic decay keeps every value exact in f32.
#[test]
fn smoothed_case_matches_frozen_reference_values() {
    let gt = Tensor::from_fn(&[16, 16], |i| {
        let (y, x) = (i / 16, i % 16);
        ((4..10).contains(&y) && (5..11).contains(&x)) as u8 as f32
    });
    let pred = Tensor::from_fn(&[16, 16], |i| {
        let (y, x) = (i as i64 / 16, i as i64 % 16);
        let dx = (6 - x).max(0).max(x - 11);
        let dy = (5 - y).max(0).max(y - 10);
        let d = dx.max(dy) as f32;
        (1.0 - 0.1875 * d).max(0.0)
    });
    let scores = vsod_metrics(&pred, &gt).unwrap();
    assert!((scores.mae - 0.329589843750000).abs() < 1e-12, "mae {}", scores.mae);
    assert!((scores.f_max - 0.694444444444445).abs() < 1e-12, "f_max {}", scores.f_max);
    assert!((scores.s_measure - 0.568689157118588).abs() < 1e-12, "s {}", scores.s_measure);
    assert!((scores.e_max - 0.924033785428262).abs() < 1e-12, "e_max {}", scores.e_max);
}

#[test]
fn out_of_range_probabilities_rejected() {
    let gt = rand_mask(8, 8, 21);
    let bad = Tensor::full(&[8, 8], 1.5);
    assert!(vsod_metrics(&bad, &gt).is_err());
}
