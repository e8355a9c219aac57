//! Analytic-vs-finite-difference checks for every differentiable primitive,
//! in f64, over many seeds and several shapes each, plus the exact backward
//! identities that need no finite differences at all.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tensor_core::{gradcheck, ParamStore, Tape, Tensor, Val, GRADCHECK_STEP, GRADCHECK_TOL};

type Store = ParamStore<f64>;
type T64 = Tape<f64>;

fn rand_tensor(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0))
}

/// Values with magnitude in [0.2, 1.2]: keeps relu/argmax-style kinks more
/// than the finite-difference step away from every component.
fn rand_off_kink(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(shape, |_| {
        let mag = rng.gen_range(0.2..1.2);
        if rng.gen_bool(0.5) {
            mag
        } else {
            -mag
        }
    })
}

/// Reduce any tensor to a scalar loss that is sensitive to every component:
/// elementwise product with a fixed random weighting, then a global sum.
fn scalarize(tape: &mut T64, v: Val, seed: u64) -> Val {
    let w = tape.constant(rand_tensor(tape.shape(v), seed ^ 0x5eed));
    let p = tape.mul(v, w).unwrap();
    tape.sum_all(p).unwrap()
}

/// Run gradcheck over `seeds` for one op graph; panics with the report on
/// the first failure.
fn check_all<F>(name: &str, seeds: std::ops::Range<u64>, mut build: F)
where
    F: FnMut(&mut Store, u64) -> Box<dyn FnMut(&mut Store, &mut T64) -> tensor_core::Result<Val>>,
{
    for seed in seeds {
        let mut store = Store::new();
        let mut fwd = build(&mut store, seed);
        let report = gradcheck(&mut store, &mut *fwd, GRADCHECK_STEP, GRADCHECK_TOL)
            .unwrap_or_else(|e| panic!("{name} seed {seed}: {e}"));
        assert!(
            report.passed(),
            "{name} seed {seed} failed:\n{report}"
        );
    }
}

#[test]
fn gradcheck_matmul() {
    for (si, (m, k, n)) in [(2, 3, 4), (1, 5, 2), (4, 4, 3)].into_iter().enumerate() {
        check_all("matmul", 0..20, |store, seed| {
            let s = seed * 100 + si as u64;
            let a = store
                .add_param("a", rand_tensor(&[m, k], s))
                .unwrap();
            let b = store
                .add_param("b", rand_tensor(&[k, n], s + 1))
                .unwrap();
            Box::new(move |store, tape| {
                let av = tape.param(store, a);
                let bv = tape.param(store, b);
                let y = tape.matmul(av, bv)?;
                Ok(scalarize(tape, y, s))
            })
        });
    }
}

#[test]
fn gradcheck_bmm() {
    for (si, (bt, m, k, n)) in [(2, 2, 3, 2), (1, 4, 2, 3), (3, 1, 2, 2)].into_iter().enumerate() {
        check_all("bmm", 0..20, |store, seed| {
            let s = seed * 100 + 7 + si as u64;
            let a = store.add_param("a", rand_tensor(&[bt, m, k], s)).unwrap();
            let b = store.add_param("b", rand_tensor(&[bt, k, n], s + 1)).unwrap();
            Box::new(move |store, tape| {
                let av = tape.param(store, a);
                let bv = tape.param(store, b);
                let y = tape.bmm(av, bv)?;
                Ok(scalarize(tape, y, s))
            })
        });
    }
}

#[test]
fn gradcheck_conv1x1() {
    for (si, (n, ci, h, w, co)) in
        [(1, 2, 3, 3, 4), (2, 3, 2, 2, 2), (1, 1, 4, 5, 3)].into_iter().enumerate()
    {
        check_all("conv1x1", 0..20, |store, seed| {
            let s = seed * 100 + 13 + si as u64;
            let x = store.add_param("x", rand_tensor(&[n, ci, h, w], s)).unwrap();
            let wp = store.add_param("w", rand_tensor(&[co, ci], s + 1)).unwrap();
            let b = store.add_param("b", rand_tensor(&[co], s + 2)).unwrap();
            Box::new(move |store, tape| {
                let xv = tape.param(store, x);
                let wv = tape.param(store, wp);
                let bv = tape.param(store, b);
                let y = tape.conv1x1(xv, wv, bv)?;
                Ok(scalarize(tape, y, s))
            })
        });
    }
}

#[test]
fn gradcheck_batchnorm_train_and_eval() {
    for (si, (n, c, h, w)) in [(2, 3, 2, 2), (1, 2, 3, 3), (3, 1, 2, 4)].into_iter().enumerate() {
        check_all("batchnorm_train", 0..20, |store, seed| {
            let s = seed * 100 + 17 + si as u64;
            let x = store.add_param("x", rand_tensor(&[n, c, h, w], s)).unwrap();
            let g = store.add_param("g", rand_off_kink(&[c], s + 1)).unwrap();
            let b = store.add_param("b", rand_tensor(&[c], s + 2)).unwrap();
            Box::new(move |store, tape| {
                let xv = tape.param(store, x);
                let gv = tape.param(store, g);
                let bv = tape.param(store, b);
                let (y, _, _) = tape.batch_norm_train(xv, gv, bv, 1e-5)?;
                Ok(scalarize(tape, y, s))
            })
        });
        check_all("batchnorm_eval", 0..20, |store, seed| {
            let s = seed * 100 + 19 + si as u64;
            let x = store.add_param("x", rand_tensor(&[n, c, h, w], s)).unwrap();
            let g = store.add_param("g", rand_off_kink(&[c], s + 1)).unwrap();
            let b = store.add_param("b", rand_tensor(&[c], s + 2)).unwrap();
            Box::new(move |store, tape| {
                let xv = tape.param(store, x);
                let gv = tape.param(store, g);
                let bv = tape.param(store, b);
                let rm = rand_tensor(&[c], s + 3);
                let rv = rand_tensor(&[c], s + 4).map(|v| v.abs() + 0.5);
                let y = tape.batch_norm_eval(xv, gv, bv, &rm, &rv, 1e-5)?;
                Ok(scalarize(tape, y, s))
            })
        });
    }
}

#[test]
fn gradcheck_elementwise_and_broadcast() {
    let cases: [(&[usize], &[usize]); 3] = [
        (&[2, 3, 2, 2], &[2, 3, 2, 2]),
        (&[2, 3, 2, 2], &[1, 3, 1, 1]),
        (&[4, 5], &[4, 1]),
    ];
    for (si, (ash, bsh)) in cases.into_iter().enumerate() {
        for op in 0..3 {
            check_all("elementwise", 0..20, |store, seed| {
                let s = seed * 100 + 23 + si as u64 * 10 + op;
                let a = store.add_param("a", rand_tensor(ash, s)).unwrap();
                let b = store.add_param("b", rand_tensor(bsh, s + 1)).unwrap();
                Box::new(move |store, tape| {
                    let av = tape.param(store, a);
                    let bv = tape.param(store, b);
                    let y = match op {
                        0 => tape.add(av, bv)?,
                        1 => tape.sub(av, bv)?,
                        _ => tape.mul(av, bv)?,
                    };
                    Ok(scalarize(tape, y, s))
                })
            });
        }
    }
}

#[test]
fn gradcheck_scale_add_scalar_relu_sigmoid() {
    for (si, shape) in [&[6][..], &[2, 5][..], &[1, 2, 3, 2][..]].into_iter().enumerate() {
        check_all("scale/add_scalar/relu/sigmoid", 0..20, |store, seed| {
            let s = seed * 100 + 29 + si as u64;
            let x = store.add_param("x", rand_off_kink(shape, s)).unwrap();
            Box::new(move |store, tape| {
                let xv = tape.param(store, x);
                let a = tape.scale(xv, -1.5)?;
                let b = tape.add_scalar(a, 0.25)?;
                let r = tape.relu(b)?;
                let sg = tape.sigmoid(r)?;
                Ok(scalarize(tape, sg, s))
            })
        });
    }
}

#[test]
fn gradcheck_softmax_and_log_softmax() {
    let cases: [(&[usize], usize); 3] = [(&[3, 5], 1), (&[2, 3, 4], 1), (&[2, 2, 6], 2)];
    for (si, (shape, axis)) in cases.into_iter().enumerate() {
        check_all("softmax", 0..20, |store, seed| {
            let s = seed * 100 + 31 + si as u64;
            let x = store.add_param("x", rand_tensor(shape, s)).unwrap();
            Box::new(move |store, tape| {
                let xv = tape.param(store, x);
                let sm = tape.softmax(xv, axis)?;
                let lsm = tape.log_softmax(xv, axis)?;
                let a = scalarize(tape, sm, s);
                let b = scalarize(tape, lsm, s + 1);
                tape.add(a, b)
            })
        });
    }
}

#[test]
fn gradcheck_pooling_and_resize() {
    for (si, (n, c, h, w)) in [(1, 2, 4, 4), (2, 1, 2, 6), (1, 3, 6, 2)].into_iter().enumerate() {
        check_all("pool/resize", 0..20, |store, seed| {
            let s = seed * 100 + 37 + si as u64;
            let x = store.add_param("x", rand_tensor(&[n, c, h, w], s)).unwrap();
            Box::new(move |store, tape| {
                let xv = tape.param(store, x);
                let g = tape.global_avg_pool(xv)?;
                let p = tape.avg_pool2(xv)?;
                let up = tape.bilinear_resize(xv, h + 3, w + 2)?;
                let down = tape.bilinear_resize(xv, (h / 2).max(1), (w / 2).max(1))?;
                let a = scalarize(tape, g, s);
                let b = scalarize(tape, p, s + 1);
                let cc = scalarize(tape, up, s + 2);
                let d = scalarize(tape, down, s + 3);
                let ab = tape.add(a, b)?;
                let cd = tape.add(cc, d)?;
                tape.add(ab, cd)
            })
        });
    }
}

#[test]
fn gradcheck_reshape_transpose_concat_reductions() {
    for (si, (r, c)) in [(2, 6), (3, 4), (4, 2)].into_iter().enumerate() {
        check_all("shape ops", 0..20, |store, seed| {
            let s = seed * 100 + 41 + si as u64;
            let x = store.add_param("x", rand_tensor(&[r, c], s)).unwrap();
            let y = store.add_param("y", rand_tensor(&[r, c], s + 1)).unwrap();
            Box::new(move |store, tape| {
                let xv = tape.param(store, x);
                let yv = tape.param(store, y);
                let rs = tape.reshape(xv, &[c, r])?;
                let tr = tape.transpose_last2(yv)?;
                let cat = tape.concat(&[rs, tr], 0)?;
                let a = scalarize(tape, cat, s);
                let m = tape.mean_all(cat)?;
                tape.add(a, m)
            })
        });
    }
}

// ------------------------------------------------ exact backward identities --

#[test]
fn linear_loss_gradient_is_input_exactly() {
    let mut store = Store::new();
    let x = rand_tensor(&[3, 4], 51);
    let w = store.add_param("w", rand_tensor(&[3, 4], 52)).unwrap();
    let mut tape = T64::new();
    let wv = tape.param(&store, w);
    let xv = tape.constant(x.clone());
    let p = tape.mul(wv, xv).unwrap();
    let loss = tape.sum_all(p).unwrap();
    tape.backward(loss, &mut store).unwrap();
    assert_eq!(store.grad(w).data(), x.data());
}

#[test]
fn unused_parameter_gets_zero_gradient() {
    let mut store = Store::new();
    let used = store.add_param("used", rand_tensor(&[4], 53)).unwrap();
    let unused = store.add_param("unused", rand_tensor(&[4], 54)).unwrap();
    let mut tape = T64::new();
    let uv = tape.param(&store, used);
    let _dead = tape.param(&store, unused);
    let loss = tape.sum_all(uv).unwrap();
    tape.backward(loss, &mut store).unwrap();
    assert!(store.grad(unused).data().iter().all(|&g| g == 0.0));
    assert!(store.grad(used).data().iter().all(|&g| g == 1.0));
}

#[test]
fn shared_binding_accumulates_both_uses() {
    let mut store = Store::new();
    let w = store.add_param("w", rand_tensor(&[3], 55)).unwrap();
    let mut tape = T64::new();
    let a = tape.param(&store, w);
    let b = tape.param(&store, w);
    let y = tape.add(a, b).unwrap();
    let loss = tape.sum_all(y).unwrap();
    tape.backward(loss, &mut store).unwrap();
    assert!(store.grad(w).data().iter().all(|&g| g == 2.0));
}

#[test]
fn backward_rejects_non_scalar_loss() {
    let mut store = Store::new();
    let w = store.add_param("w", rand_tensor(&[3], 56)).unwrap();
    let mut tape = T64::new();
    let wv = tape.param(&store, w);
    assert!(tape.backward(wv, &mut store).is_err());
}

#[test]
fn gradcheck_composite_graph() {
    check_all("composite", 0..10, |store, seed| {
        let s = seed * 100 + 61;
        let x = store.add_param("x", rand_tensor(&[1, 3, 4, 4], s)).unwrap();
        let w = store.add_param("w", rand_tensor(&[5, 3], s + 1)).unwrap();
        let b = store.add_param("b", rand_tensor(&[5], s + 2)).unwrap();
        let g = store.add_param("g", rand_off_kink(&[5], s + 3)).unwrap();
        let be = store.add_param("be", rand_tensor(&[5], s + 4)).unwrap();
        Box::new(move |store, tape| {
            let xv = tape.param(store, x);
            let wv = tape.param(store, w);
            let bv = tape.param(store, b);
            let gv = tape.param(store, g);
            let bev = tape.param(store, be);
            let y = tape.conv1x1(xv, wv, bv)?;
            let (y, _, _) = tape.batch_norm_train(y, gv, bev, 1e-5)?;
            let y = tape.sigmoid(y)?;
            let y = tape.bilinear_resize(y, 6, 6)?;
            let y = tape.global_avg_pool(y)?;
            Ok(scalarize(tape, y, s))
        })
    });
}

/// Negative control: a forward that detaches half of the real computation.
/// The analytic gradient is then wrong by construction and the checker must
/// flag it loudly.
#[test]
fn gradcheck_detects_detached_computation() {
    let mut store = Store::new();
    let w = store
        .add_param("w", rand_off_kink(&[6], 71))
        .unwrap();
    let report = gradcheck(
        &mut store,
        |store, tape| {
            let wv = tape.param(store, w);
            // loss(w) = sum(w * w), but one factor enters as a constant:
            // analytic backward sees only d(sum(w*c))/dw = c instead of 2w.
            let frozen = tape.constant(store.value(w).clone());
            let p = tape.mul(wv, frozen)?;
            tape.sum_all(p)
        },
        GRADCHECK_STEP,
        GRADCHECK_TOL,
    )
    .unwrap();
    assert!(!report.passed());
    assert!(
        report.max_rel_err() > 1e-2,
        "expected a loud failure, got {:.3e}",
        report.max_rel_err()
    );
}

#[test]
fn finite_check_names_offending_op() {
    let mut store = Store::new();
    let w = store.add_param("w", Tensor::full(&[2], 1.0)).unwrap();
    let err = gradcheck(
        &mut store,
        |store, tape| {
            let wv = tape.param(store, w);
            let inf = tape.constant(Tensor::full(&[2], f64::INFINITY));
            let y = tape.mul(wv, inf)?;
            tape.sum_all(y)
        },
        GRADCHECK_STEP,
        GRADCHECK_TOL,
    )
    .unwrap_err();
    assert!(err.to_string().contains("mul"), "{err}");
}
