//! Alignment and adaptation behavior: brute-force oracles for the semantic
//! extraction and attention paths, convexity and normalization properties,
//! saturation fixtures, and finite-difference gradient checks of the
//! composed graphs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hfan::{class_semantics, Fam, Fat, HfanStage, Poc};
use tensor_core::{gradcheck, ParamStore, Scalar, Tape, Tensor, Val, GRADCHECK_STEP, GRADCHECK_TOL};

fn rand_tensor(shape: &[usize], seed: u64) -> Tensor<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(shape, |_| rng.gen_range(-1.0f32..1.0))
}

fn rand_tensor64(shape: &[usize], seed: u64) -> Tensor<f64> {
    rand_tensor(shape, seed).cast()
}

// ----------------------------------------------------------------- oracles --

/// Straight-line Conv1x1 -> BN(train) -> ReLU, reading weights from the
/// store by name. Independent of the tape kernels.
fn conv_bn_relu_oracle<T: Scalar>(
    store: &ParamStore<T>,
    name: &str,
    x: &Tensor<T>,
) -> Tensor<T> {
    let w = store.value(store.find_param(&format!("{name}.conv.weight")).unwrap());
    let b = store.value(store.find_param(&format!("{name}.conv.bias")).unwrap());
    let gamma = store.value(store.find_param(&format!("{name}.bn.gamma")).unwrap());
    let beta = store.value(store.find_param(&format!("{name}.bn.beta")).unwrap());

    let (n, ci, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let co = w.shape()[0];
    let mut conv = Tensor::<T>::zeros(&[n, co, h, wd]);
    for ni in 0..n {
        for o in 0..co {
            for y in 0..h {
                for xx in 0..wd {
                    let mut s = b.data()[o];
                    for c in 0..ci {
                        s = s + w.data()[o * ci + c] * x.at4(ni, c, y, xx);
                    }
                    conv.data_mut()[((ni * co + o) * h + y) * wd + xx] = s;
                }
            }
        }
    }
    // two-pass batch statistics, then normalize + clamp
    let m = T::from_f64((n * h * wd) as f64);
    let mut out = Tensor::<T>::zeros(&[n, co, h, wd]);
    for o in 0..co {
        let mut sum = T::zero();
        for ni in 0..n {
            for p in 0..h * wd {
                sum = sum + conv.data()[(ni * co + o) * h * wd + p];
            }
        }
        let mean = sum / m;
        let mut var = T::zero();
        for ni in 0..n {
            for p in 0..h * wd {
                let d = conv.data()[(ni * co + o) * h * wd + p] - mean;
                var = var + d * d;
            }
        }
        let var = var / m;
        let inv = T::one() / (var + T::from_f64(1e-5)).sqrt();
        for ni in 0..n {
            for p in 0..h * wd {
                let idx = (ni * co + o) * h * wd + p;
                let v = gamma.data()[o] * (conv.data()[idx] - mean) * inv + beta.data()[o];
                out.data_mut()[idx] = if v > T::zero() { v } else { T::zero() };
            }
        }
    }
    out
}

/// Per-class weighted-sum oracle for the semantics extraction.
fn semantics_oracle(features: &Tensor<f32>, probs: &Tensor<f32>) -> Tensor<f32> {
    let (n, c, h, w) = (
        features.shape()[0],
        features.shape()[1],
        features.shape()[2],
        features.shape()[3],
    );
    let k = probs.shape()[1];
    let hw = h * w;
    let mut out = Tensor::zeros(&[n, c, k]);
    for ni in 0..n {
        for cls in 0..k {
            // spatial softmax weights for this class
            let mut logits = Vec::with_capacity(hw);
            for y in 0..h {
                for x in 0..w {
                    logits.push(probs.at4(ni, cls, y, x) as f64);
                }
            }
            let mx = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = logits.iter().map(|&l| (l - mx).exp()).collect();
            let z: f64 = exps.iter().sum();
            for ch in 0..c {
                let mut s = 0.0f64;
                let mut p = 0;
                for y in 0..h {
                    for x in 0..w {
                        s += features.at4(ni, ch, y, x) as f64 * exps[p] / z;
                        p += 1;
                    }
                }
                out.data_mut()[(ni * c + ch) * k + cls] = s as f32;
            }
        }
    }
    out
}

fn run_semantics(features: &Tensor<f32>, probs: &Tensor<f32>) -> Tensor<f32> {
    let mut tape = Tape::<f32>::new();
    let f = tape.constant(features.clone());
    let p = tape.constant(probs.clone());
    let m = class_semantics(&mut tape, f, p).unwrap();
    tape.value(m).clone()
}

// -------------------------------------------------------------- coarse_seg --

#[test]
fn coarse_seg_shape_contract_and_nonnegativity() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut store = ParamStore::<f32>::new();
    let head = hfan::CoarseSeg::new(&mut store, "coarse", 6, &mut rng).unwrap();
    let x = rand_tensor(&[2, 6, 5, 4], 1);
    let mut tape = Tape::new();
    let xv = tape.constant(x);
    let p = head.forward(&mut tape, &mut store, xv, true).unwrap();
    assert_eq!(tape.shape(p), &[2, 2, 5, 4]);
    assert!(tape.value(p).data().iter().all(|&v| v >= 0.0));
}

#[test]
fn coarse_seg_zero_params_give_zero_mask() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut store = ParamStore::<f32>::new();
    let head = hfan::CoarseSeg::new(&mut store, "coarse", 3, &mut rng).unwrap();
    let wid = store.find_param("coarse.conv.weight").unwrap();
    for v in store.value_mut(wid).data_mut() {
        *v = 0.0;
    }
    let x = rand_tensor(&[1, 3, 4, 4], 2);
    let mut tape = Tape::new();
    let xv = tape.constant(x);
    let p = head.forward(&mut tape, &mut store, xv, true).unwrap();
    assert!(tape.value(p).data().iter().all(|&v| v == 0.0));
}

#[test]
fn coarse_seg_matches_composition_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut store = ParamStore::<f32>::new();
    let head = hfan::CoarseSeg::new(&mut store, "coarse", 5, &mut rng).unwrap();
    let x = rand_tensor(&[2, 5, 4, 4], 13);
    let mut tape = Tape::new();
    let xv = tape.constant(x.clone());
    let p = head.forward(&mut tape, &mut store, xv, true).unwrap();
    let expect = conv_bn_relu_oracle(&store, "coarse", &x);
    let diff = tape.value(p).max_abs_diff(&expect).unwrap();
    assert!(diff < 1e-6, "max diff {diff}");
}

// ---------------------------------------------------------------- semantics --

#[test]
fn semantics_uniform_probs_give_spatial_mean() {
    let features = rand_tensor(&[1, 6, 4, 4], 3);
    let probs = Tensor::full(&[1, 2, 4, 4], 0.7);
    let m = run_semantics(&features, &probs);
    for ch in 0..6 {
        let mut mean = 0.0f64;
        for p in 0..16 {
            mean += features.data()[ch * 16 + p] as f64;
        }
        mean /= 16.0;
        for cls in 0..2 {
            let got = m.data()[ch * 2 + cls] as f64;
            assert!((got - mean).abs() < 1e-6, "ch {ch} cls {cls}: {got} vs {mean}");
        }
    }
}

#[test]
fn semantics_dominant_pixel_saturates_to_its_feature() {
    let features = rand_tensor(&[1, 5, 4, 4], 4);
    let mut probs = Tensor::zeros(&[1, 2, 4, 4]);
    let (py, px) = (2usize, 3usize);
    probs.data_mut()[(1 * 4 + py) * 4 + px] = 30.0; // class-1 logit spike
    let m = run_semantics(&features, &probs);
    for ch in 0..5 {
        let got = m.data()[ch * 2 + 1];
        let want = features.at4(0, ch, py, px);
        assert!((got - want).abs() < 1e-6, "ch {ch}: {got} vs {want}");
    }
}

#[test]
fn semantics_matches_weighted_sum_oracle() {
    let features = rand_tensor(&[2, 6, 4, 4], 17);
    let probs = rand_tensor(&[2, 2, 4, 4], 18).map(|v| v.abs() * 3.0);
    let m = run_semantics(&features, &probs);
    let expect = semantics_oracle(&features, &probs);
    let diff = m.max_abs_diff(&expect).unwrap();
    assert!(diff < 1e-6, "max diff {diff}");
}

#[test]
fn semantics_respect_convex_hull_bound() {
    for seed in 0..500u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (h, w) = (rng.gen_range(2..5), rng.gen_range(2..5));
        let c = rng.gen_range(1..5);
        let features = Tensor::from_fn(&[1, c, h, w], |_| rng.gen_range(-2.0f32..2.0));
        let probs = Tensor::from_fn(&[1, 2, h, w], |_| rng.gen_range(-4.0f32..4.0));
        let m = run_semantics(&features, &probs);
        for ch in 0..c {
            let plane = &features.data()[ch * h * w..(ch + 1) * h * w];
            let lo = plane.iter().cloned().fold(f32::INFINITY, f32::min);
            let hi = plane.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
            for cls in 0..2 {
                let v = m.data()[ch * 2 + cls];
                assert!(
                    v >= lo - 1e-5 && v <= hi + 1e-5,
                    "seed {seed} ch {ch} cls {cls}: {v} outside [{lo}, {hi}]"
                );
            }
        }
    }
}

// ---------------------------------------------------------------------- poc --

#[test]
fn poc_identical_class_vectors_give_half_half_attention() {
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    let mut store = ParamStore::<f32>::new();
    let poc = Poc::new(&mut store, "poc", 4, 16, &mut rng).unwrap();
    let x = rand_tensor(&[1, 4, 3, 3], 20);
    let half = rand_tensor(&[1, 4, 1], 21);
    // both class columns identical
    let sem = Tensor::from_fn(&[1, 4, 2], |i| half.data()[i / 2]);
    let mut tape = Tape::new();
    let xv = tape.constant(x);
    let sv = tape.constant(sem);
    let (_, attn) = poc
        .forward_with_attn(&mut tape, &mut store, xv, sv, true)
        .unwrap();
    for &a in tape.value(attn).data() {
        assert_eq!(a, 0.5);
    }
}

#[test]
fn attention_weights_invariant_under_query_doubling_with_halved_scale() {
    // logits = alpha * (q . k): doubling q and halving alpha is exact in
    // floating point, so the softmax inputs are bit-identical
    let q = rand_tensor(&[1, 9, 4], 22);
    let k = rand_tensor(&[1, 4, 2], 23);
    let alpha = 0.5f32;

    let weights = |q: &Tensor<f32>, alpha: f32| -> Vec<f32> {
        let mut tape = Tape::<f32>::new();
        let qv = tape.constant(q.clone());
        let kv = tape.constant(k.clone());
        let logits = tape.bmm(qv, kv).unwrap();
        let scaled = tape.scale(logits, alpha).unwrap();
        let a = tape.softmax(scaled, 2).unwrap();
        tape.value(a).data().to_vec()
    };

    let base = weights(&q, alpha);
    let doubled = weights(&q.map(|v| v * 2.0), alpha / 2.0);
    assert_eq!(base, doubled);
}

#[test]
fn poc_matches_per_pixel_attention_oracle() {
    let channels = 4usize;
    let d = 2usize;
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    let mut store = ParamStore::<f32>::new();
    let poc = Poc::new(&mut store, "poc", channels, d, &mut rng).unwrap();
    let x = rand_tensor(&[1, channels, 2, 2], 19);
    let sem = rand_tensor(&[1, channels, 2], 191);

    let mut tape = Tape::new();
    let xv = tape.constant(x.clone());
    let sv = tape.constant(sem.clone());
    let (out, _) = poc
        .forward_with_attn(&mut tape, &mut store, xv, sv, true)
        .unwrap();

    // independent path: conv-bn-relu oracle for the three transforms, then
    // a per-pixel two-class attention loop, then the projection block
    let q = conv_bn_relu_oracle(&store, "poc.query", &x);
    let sem_img = sem.reshaped(&[1, channels, 2, 1]).unwrap();
    let key = conv_bn_relu_oracle(&store, "poc.key", &sem_img);
    let value = conv_bn_relu_oracle(&store, "poc.value", &sem_img);

    let alpha = 1.0 / (channels as f64).sqrt();
    let mut ctx = Tensor::<f32>::zeros(&[1, d, 2, 2]);
    for y in 0..2 {
        for xx in 0..2 {
            let mut logits = [0.0f64; 2];
            for cls in 0..2 {
                for dd in 0..d {
                    logits[cls] +=
                        q.at4(0, dd, y, xx) as f64 * key.at4(0, dd, cls, 0) as f64;
                }
                logits[cls] *= alpha;
            }
            let mx = logits[0].max(logits[1]);
            let e0 = (logits[0] - mx).exp();
            let e1 = (logits[1] - mx).exp();
            let (w0, w1) = (e0 / (e0 + e1), e1 / (e0 + e1));
            for dd in 0..d {
                let v = w0 * value.at4(0, dd, 0, 0) as f64 + w1 * value.at4(0, dd, 1, 0) as f64;
                ctx.data_mut()[(dd * 2 + y) * 2 + xx] = v as f32;
            }
        }
    }
    let mut cat = Tensor::<f32>::zeros(&[1, channels + d, 2, 2]);
    cat.data_mut()[..channels * 4].copy_from_slice(x.data());
    cat.data_mut()[channels * 4..].copy_from_slice(ctx.data());
    let expect = conv_bn_relu_oracle(&store, "poc.project", &cat);

    let diff = tape.value(out).max_abs_diff(&expect).unwrap();
    assert!(diff < 1e-6, "max diff {diff}");
}

#[test]
fn poc_attention_rows_are_normalized() {
    for seed in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::<f32>::new();
        let poc = Poc::new(&mut store, "poc", 6, 16, &mut rng).unwrap();
        let x = rand_tensor(&[2, 6, 3, 3], seed ^ 0xa5);
        let sem = rand_tensor(&[2, 6, 2], seed ^ 0x5a);
        let mut tape = Tape::new();
        let xv = tape.constant(x);
        let sv = tape.constant(sem);
        let (_, attn) = poc
            .forward_with_attn(&mut tape, &mut store, xv, sv, true)
            .unwrap();
        let a = tape.value(attn);
        for row in 0..a.len() / 2 {
            let (p, q) = (a.data()[row * 2], a.data()[row * 2 + 1]);
            assert!(p >= 0.0 && q >= 0.0);
            assert!((p + q - 1.0).abs() < 1e-6, "seed {seed}: {p} + {q}");
        }
    }
}

#[test]
fn poc_rejects_zero_attention_width() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut store = ParamStore::<f32>::new();
    assert!(Poc::new(&mut store, "poc", 4, 0, &mut rng).is_err());
}

// ---------------------------------------------------------------------- fam --

#[test]
fn fam_identical_streams_align_identically() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut store = ParamStore::<f32>::new();
    let fam = Fam::new(&mut store, "fam", 8, 16, true, &mut rng).unwrap();
    let x = rand_tensor(&[1, 8, 6, 6], 23);
    let mut tape = Tape::new();
    let a = tape.constant(x.clone());
    let b = tape.constant(x);
    let (ia, oa) = fam.forward(&mut tape, &mut store, a, b, true).unwrap();
    assert_eq!(tape.value(ia).data(), tape.value(oa).data());
}

#[test]
fn fam_preserves_shape_for_all_stage_geometries() {
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    for (c, h, w) in [(8, 16, 16), (16, 8, 8), (32, 4, 4), (64, 2, 2)] {
        let mut store = ParamStore::<f32>::new();
        let fam = Fam::new(&mut store, "fam", c, 16, true, &mut rng).unwrap();
        let i = rand_tensor(&[1, c, h, w], c as u64);
        let o = rand_tensor(&[1, c, h, w], c as u64 + 1);
        let mut tape = Tape::new();
        let iv = tape.constant(i);
        let ov = tape.constant(o);
        let (ia, oa) = fam.forward(&mut tape, &mut store, iv, ov, true).unwrap();
        assert_eq!(tape.shape(ia), &[1, c, h, w]);
        assert_eq!(tape.shape(oa), &[1, c, h, w]);
    }
}

#[test]
fn fam_equals_manual_composition_bit_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut store = ParamStore::<f32>::new();
    let fam = Fam::new(&mut store, "fam", 8, 16, true, &mut rng).unwrap();
    let i = rand_tensor(&[1, 8, 6, 6], 230);
    let o = rand_tensor(&[1, 8, 6, 6], 231);

    let mut tape = Tape::new();
    let iv = tape.constant(i.clone());
    let ov = tape.constant(o.clone());
    let (ia, oa) = fam.forward(&mut tape, &mut store, iv, ov, true).unwrap();
    let fused = (tape.value(ia).clone(), tape.value(oa).clone());

    // same params, same op order, spelled out step by step
    let mut tape = Tape::new();
    let iv = tape.constant(i);
    let ov = tape.constant(o);
    let probs = fam.coarse.forward(&mut tape, &mut store, iv, true).unwrap();
    let sem = class_semantics(&mut tape, iv, probs).unwrap();
    let poc = fam.shared_poc();
    let ia2 = poc.forward(&mut tape, &mut store, iv, sem, true).unwrap();
    let oa2 = poc.forward(&mut tape, &mut store, ov, sem, true).unwrap();
    assert_eq!(fused.0.data(), tape.value(ia2).data());
    assert_eq!(fused.1.data(), tape.value(oa2).data());
}

#[test]
fn fam_rejects_mismatched_streams() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut store = ParamStore::<f32>::new();
    let fam = Fam::new(&mut store, "fam", 4, 16, true, &mut rng).unwrap();
    let mut tape = Tape::new();
    let i = tape.constant(Tensor::zeros(&[1, 4, 4, 4]));
    let o = tape.constant(Tensor::zeros(&[1, 4, 2, 2]));
    assert!(fam.forward(&mut tape, &mut store, i, o, true).is_err());
}

// ---------------------------------------------------------------------- fat --

#[test]
fn fuse_sum_basics() {
    let x = rand_tensor(&[1, 3, 2, 2], 41);
    let mut tape = Tape::<f32>::new();
    let xv = tape.constant(x.clone());
    let z = tape.constant(Tensor::zeros(&[1, 3, 2, 2]));
    let s = hfan::fuse_sum(&mut tape, xv, z).unwrap();
    assert_eq!(tape.value(s).data(), x.data());

    let neg = tape.scale(xv, -1.0).unwrap();
    let s = hfan::fuse_sum(&mut tape, xv, neg).unwrap();
    assert!(tape.value(s).data().iter().all(|&v| v == 0.0));

    let y = rand_tensor(&[1, 3, 2, 2], 42);
    let yv = tape.constant(y.clone());
    let s = hfan::fuse_sum(&mut tape, xv, yv).unwrap();
    for (i, &v) in tape.value(s).data().iter().enumerate() {
        assert_eq!(v, x.data()[i] + y.data()[i]);
    }
}

#[test]
fn fat_equal_streams_pass_through() {
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    let mut store = ParamStore::<f32>::new();
    let fat = Fat::new(&mut store, "fat", 8, &mut rng).unwrap();
    let x = rand_tensor(&[1, 8, 5, 5], 43);
    let mut tape = Tape::new();
    let a = tape.constant(x.clone());
    let b = tape.constant(x.clone());
    let u = fat.forward(&mut tape, &mut store, a, b, true).unwrap();
    let diff = tape.value(u).max_abs_diff(&x).unwrap();
    assert!(diff <= 1e-6, "max diff {diff}");
}

fn force_gate_logit(store: &mut ParamStore<f32>, value: f32) {
    // zero both expand weights, drive the spatial bias: gate logits become
    // a constant `value` everywhere
    for name in ["fat.spatial.expand.weight", "fat.pooled.expand.weight"] {
        let id = store.find_param(name).unwrap();
        for v in store.value_mut(id).data_mut() {
            *v = 0.0;
        }
    }
    let id = store.find_param("fat.spatial.expand.bias").unwrap();
    for v in store.value_mut(id).data_mut() {
        *v = value;
    }
    let id = store.find_param("fat.pooled.expand.bias").unwrap();
    for v in store.value_mut(id).data_mut() {
        *v = 0.0;
    }
}

#[test]
fn fat_saturated_gate_selects_one_stream() {
    let mut rng = ChaCha8Rng::seed_from_u64(47);
    let i_hat = rand_tensor(&[1, 8, 4, 4], 47);
    let o_hat = rand_tensor(&[1, 8, 4, 4], 48);

    for (logit, pick_app) in [(20.0f32, true), (-20.0, false)] {
        let mut store = ParamStore::<f32>::new();
        let fat = Fat::new(&mut store, "fat", 8, &mut rng).unwrap();
        force_gate_logit(&mut store, logit);
        let mut tape = Tape::new();
        let a = tape.constant(i_hat.clone());
        let b = tape.constant(o_hat.clone());
        let u = fat.forward(&mut tape, &mut store, a, b, true).unwrap();
        let target = if pick_app { &i_hat } else { &o_hat };
        let diff = tape.value(u).max_abs_diff(target).unwrap();
        assert!(diff <= 1e-6, "logit {logit}: max diff {diff}");
    }
}

#[test]
fn fat_matches_independent_gate_recomputation() {
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    let mut store = ParamStore::<f32>::new();
    let fat = Fat::new(&mut store, "fat", 8, &mut rng).unwrap();
    // perturb the zero-initialized expand convs so the gate is nontrivial
    for name in ["fat.spatial.expand.weight", "fat.pooled.expand.weight"] {
        let id = store.find_param(name).unwrap();
        let mut r = ChaCha8Rng::seed_from_u64(290);
        for v in store.value_mut(id).data_mut() {
            *v = r.gen_range(-0.5..0.5);
        }
    }
    let i_hat = rand_tensor(&[1, 8, 5, 5], 29);
    let o_hat = rand_tensor(&[1, 8, 5, 5], 30);

    let mut tape = Tape::new();
    let a = tape.constant(i_hat.clone());
    let b = tape.constant(o_hat.clone());
    let (u, _) = fat
        .forward_with_gate(&mut tape, &mut store, a, b, true)
        .unwrap();

    // independent branch implementation: conv-bn-relu oracle, plain conv
    // loops, pooled descriptor by accumulation, sigmoid in f64
    let fused = Tensor::from_fn(&[1, 8, 5, 5], |i| i_hat.data()[i] + o_hat.data()[i]);
    let s = conv_bn_relu_oracle(&store, "fat.spatial.reduce", &fused);
    let s = plain_conv_oracle(&store, "fat.spatial.expand", &s);

    let mut pooled = Tensor::<f32>::zeros(&[1, 8, 1, 1]);
    for c in 0..8 {
        let mut acc = 0.0f64;
        for p in 0..25 {
            acc += fused.data()[c * 25 + p] as f64;
        }
        pooled.data_mut()[c] = (acc / 25.0) as f32;
    }
    let p = plain_conv_oracle(&store, "fat.pooled.reduce", &pooled);
    let p = p.map(|v| v.max(0.0));
    let p = plain_conv_oracle(&store, "fat.pooled.expand", &p);

    for c in 0..8 {
        for px in 0..25 {
            let logit = s.data()[c * 25 + px] as f64 + p.data()[c] as f64;
            let lambda = 1.0 / (1.0 + (-logit).exp());
            let expect =
                lambda * i_hat.data()[c * 25 + px] as f64 + (1.0 - lambda) * o_hat.data()[c * 25 + px] as f64;
            let got = tape.value(u).data()[c * 25 + px] as f64;
            assert!((got - expect).abs() < 1e-6, "c{c} p{px}: {got} vs {expect}");
        }
    }
}

fn plain_conv_oracle(store: &ParamStore<f32>, name: &str, x: &Tensor<f32>) -> Tensor<f32> {
    let w = store.value(store.find_param(&format!("{name}.weight")).unwrap());
    let b = store.value(store.find_param(&format!("{name}.bias")).unwrap());
    let (n, ci, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let co = w.shape()[0];
    let mut out = Tensor::zeros(&[n, co, h, wd]);
    for ni in 0..n {
        for o in 0..co {
            for y in 0..h {
                for xx in 0..wd {
                    let mut s = b.data()[o];
                    for c in 0..ci {
                        s += w.data()[o * ci + c] * x.at4(ni, c, y, xx);
                    }
                    out.data_mut()[((ni * co + o) * h + y) * wd + xx] = s;
                }
            }
        }
    }
    out
}

#[test]
fn fat_output_is_convex_combination() {
    let mut rng = ChaCha8Rng::seed_from_u64(53);
    let mut store = ParamStore::<f32>::new();
    let fat = Fat::new(&mut store, "fat", 4, &mut rng).unwrap();
    // non-degenerate gate
    for name in ["fat.spatial.expand.weight", "fat.pooled.expand.weight"] {
        let id = store.find_param(name).unwrap();
        let mut r = ChaCha8Rng::seed_from_u64(530);
        for v in store.value_mut(id).data_mut() {
            *v = r.gen_range(-1.0..1.0);
        }
    }
    for seed in 0..1000u64 {
        let i_hat = rand_tensor(&[1, 4, 3, 3], seed * 2 + 1000);
        let o_hat = rand_tensor(&[1, 4, 3, 3], seed * 2 + 1001);
        let mut tape = Tape::new();
        let a = tape.constant(i_hat.clone());
        let b = tape.constant(o_hat.clone());
        let (u, gate) = fat
            .forward_with_gate(&mut tape, &mut store, a, b, true)
            .unwrap();
        for (i, &v) in tape.value(u).data().iter().enumerate() {
            let lo = i_hat.data()[i].min(o_hat.data()[i]);
            let hi = i_hat.data()[i].max(o_hat.data()[i]);
            assert!(
                v >= lo - 1e-6 && v <= hi + 1e-6,
                "seed {seed} idx {i}: {v} outside [{lo}, {hi}]"
            );
        }
        for &gv in tape.value(gate).data() {
            assert!(gv > 0.0 && gv < 1.0, "gate {gv} left (0,1)");
        }
    }
}

#[test]
fn fat_gradients_reach_both_streams() {
    let mut rng = ChaCha8Rng::seed_from_u64(59);
    let mut store = ParamStore::<f32>::new();
    let fat = Fat::new(&mut store, "fat", 4, &mut rng).unwrap();
    let mut tape = Tape::new();
    let a = tape.constant(rand_tensor(&[1, 4, 3, 3], 59));
    let b = tape.constant(rand_tensor(&[1, 4, 3, 3], 60));
    let u = fat.forward(&mut tape, &mut store, a, b, true).unwrap();
    let loss = tape.sum_all(u).unwrap();
    tape.backward(loss, &mut store).unwrap();
    let norm = |t: &Tensor<f32>| t.data().iter().map(|v| (v * v) as f64).sum::<f64>().sqrt();
    assert!(norm(tape.grad(a).unwrap()) > 1e-6);
    assert!(norm(tape.grad(b).unwrap()) > 1e-6);
}

// -------------------------------------------------------------------- stage --

#[test]
fn stage_composition_identity_and_shape() {
    let mut rng = ChaCha8Rng::seed_from_u64(61);
    let mut store = ParamStore::<f32>::new();
    let stage = HfanStage::new(&mut store, "s1", 8, 16, true, &mut rng).unwrap();
    let i = rand_tensor(&[2, 8, 4, 4], 61);
    let o = rand_tensor(&[2, 8, 4, 4], 62);

    let mut tape = Tape::new();
    let iv = tape.constant(i.clone());
    let ov = tape.constant(o.clone());
    let u = stage.forward(&mut tape, &mut store, iv, ov, true).unwrap();
    assert_eq!(tape.shape(u), &[2, 8, 4, 4]);
    let composed = tape.value(u).clone();

    let mut tape = Tape::new();
    let iv = tape.constant(i);
    let ov = tape.constant(o);
    let (ia, oa) = stage.fam.forward(&mut tape, &mut store, iv, ov, true).unwrap();
    let u2 = stage.fat.forward(&mut tape, &mut store, ia, oa, true).unwrap();
    assert_eq!(composed.data(), tape.value(u2).data());
}

#[test]
fn stage_identical_streams_return_aligned_map() {
    let mut rng = ChaCha8Rng::seed_from_u64(67);
    let mut store = ParamStore::<f32>::new();
    let stage = HfanStage::new(&mut store, "s1", 8, 16, true, &mut rng).unwrap();
    let x = rand_tensor(&[1, 8, 4, 4], 67);
    let mut tape = Tape::new();
    let iv = tape.constant(x.clone());
    let ov = tape.constant(x);
    let (ia, _) = stage.fam.forward(&mut tape, &mut store, iv, ov, true).unwrap();
    let aligned = tape.value(ia).clone();
    let u = stage.fat.forward(&mut tape, &mut store, ia, ia, true).unwrap();
    let diff = tape.value(u).max_abs_diff(&aligned).unwrap();
    assert!(diff <= 1e-6, "max diff {diff}");
}

// ---------------------------------------------------------------- gradcheck --

fn scalarize64(tape: &mut Tape<f64>, v: Val, seed: u64) -> Val {
    let w = tape.constant(rand_tensor64(tape.shape(v), seed ^ 0xbead));
    let p = tape.mul(v, w).unwrap();
    tape.sum_all(p).unwrap()
}

#[test]
fn gradcheck_full_fam_graph() {
    let mut rng = ChaCha8Rng::seed_from_u64(71);
    let mut store = ParamStore::<f64>::new();
    let fam = Fam::new(&mut store, "fam", 8, 16, true, &mut rng).unwrap();
    let i = store.add_param("input.app", rand_tensor64(&[1, 8, 6, 6], 71)).unwrap();
    let o = store.add_param("input.mot", rand_tensor64(&[1, 8, 6, 6], 72)).unwrap();
    let report = gradcheck(
        &mut store,
        |store, tape| {
            let iv = tape.param(store, i);
            let ov = tape.param(store, o);
            let (ia, oa) = fam.forward(tape, store, iv, ov, true)?;
            let a = scalarize64(tape, ia, 73);
            let b = scalarize64(tape, oa, 74);
            tape.add(a, b)
        },
        GRADCHECK_STEP,
        GRADCHECK_TOL,
    )
    .unwrap();
    assert!(report.passed(), "{report}");
}

#[test]
fn gradcheck_fat_graph() {
    let mut rng = ChaCha8Rng::seed_from_u64(79);
    let mut store = ParamStore::<f64>::new();
    let fat = Fat::new(&mut store, "fat", 8, &mut rng).unwrap();
    let i = store.add_param("input.app", rand_tensor64(&[1, 8, 5, 5], 79)).unwrap();
    let o = store.add_param("input.mot", rand_tensor64(&[1, 8, 5, 5], 80)).unwrap();
    let report = gradcheck(
        &mut store,
        |store, tape| {
            let iv = tape.param(store, i);
            let ov = tape.param(store, o);
            let u = fat.forward(tape, store, iv, ov, true)?;
            Ok(scalarize64(tape, u, 81))
        },
        GRADCHECK_STEP,
        GRADCHECK_TOL,
    )
    .unwrap();
    assert!(report.passed(), "{report}");
}

#[test]
fn gradcheck_full_stage_graph() {
    let mut rng = ChaCha8Rng::seed_from_u64(83);
    let mut store = ParamStore::<f64>::new();
    let stage = HfanStage::new(&mut store, "s", 8, 16, true, &mut rng).unwrap();
    let i = store.add_param("input.app", rand_tensor64(&[1, 8, 6, 6], 83)).unwrap();
    let o = store.add_param("input.mot", rand_tensor64(&[1, 8, 6, 6], 84)).unwrap();
    let report = gradcheck(
        &mut store,
        |store, tape| {
            let iv = tape.param(store, i);
            let ov = tape.param(store, o);
            let u = stage.forward(tape, store, iv, ov, true)?;
            Ok(scalarize64(tape, u, 85))
        },
        GRADCHECK_STEP,
        GRADCHECK_TOL,
    )
    .unwrap();
    assert!(report.passed(), "{report}");
}
