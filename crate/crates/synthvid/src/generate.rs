//! Deterministic renderer: frames with supersampled edges, binary masks,
//! and analytically exact optical flow (background zero, per-object rigid
//! motion, front object winning per pixel).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tensor_core::kernels::bilinear_resize_data;
use tensor_core::rng::derive_seed;
use tensor_core::Tensor;

use crate::error::Result;
use crate::flow::{flow_to_rgb, DEFAULT_VMAX};
use crate::sample::VideoSample;
use crate::scene::{FlowFailure, SceneSpec};

/// Fraction of a pixel covered by the object, from a 2x2 subsample grid.
fn coverage(obj: &crate::scene::ObjectSpec, frame: usize, x: usize, y: usize) -> f32 {
    let mut hits = 0u8;
    for (dx, dy) in [(-0.25f32, -0.25f32), (0.25, -0.25), (-0.25, 0.25), (0.25, 0.25)] {
        if obj.contains(frame, x as f32 + dx, y as f32 + dy) {
            hits += 1;
        }
    }
    hits as f32 / 4.0
}

/// Low-frequency value-noise background: a coarse random control grid
/// bilinearly upsampled to the canvas.
fn background(spec: &SceneSpec) -> Tensor<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.background_seed);
    let grid = Tensor::from_fn(&[1, 3, 6, 6], |_| rng.gen_range(0.15f32..0.85));
    let up = bilinear_resize_data(&grid, spec.height, spec.width);
    up.reshaped(&[3, spec.height, spec.width]).expect("background shape")
}

fn gaussian(rng: &mut ChaCha8Rng, sigma: f32) -> f32 {
    // Box-Muller; both draws strictly inside (0, 1]
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen();
    let z = (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
    z as f32 * sigma
}

/// Produce the full sample for `spec`. Bit-reproducible given (spec, seed):
/// every stochastic stream is derived from the pair, and the flow-failure
/// mode is applied after exact generation so frames and masks are identical
/// across failure conditions.
pub fn generate(spec: &SceneSpec, seed: u64) -> Result<VideoSample> {
    spec.validate()?;
    let (h, w, t) = (spec.height, spec.width, spec.frames);
    let hw = h * w;
    let bg = background(spec);

    let mut frames = Tensor::zeros(&[t, 3, h, w]);
    let mut masks = Tensor::zeros(&[t, 1, h, w]);
    let mut flow_uv = Tensor::zeros(&[t - 1, 2, h, w]);

    for ft in 0..t {
        let mut noise_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 1000 + ft as u64));
        for y in 0..h {
            for x in 0..w {
                let p = y * w + x;
                let mut rgb = [bg.data()[p], bg.data()[hw + p], bg.data()[2 * hw + p]];
                let mut any_solid = false;
                // list order is depth order: later objects composite on top
                for obj in &spec.objects {
                    let cov = coverage(obj, ft, x, y);
                    if cov > 0.0 {
                        for ch in 0..3 {
                            rgb[ch] = rgb[ch] * (1.0 - cov) + obj.color[ch] * cov;
                        }
                    }
                    if cov >= 0.5 {
                        any_solid = true;
                    }
                }
                for (ch, &v) in rgb.iter().enumerate() {
                    let noisy = if spec.noise > 0.0 {
                        (v + noise_rng.gen_range(-spec.noise..=spec.noise)).clamp(0.0, 1.0)
                    } else {
                        v
                    };
                    frames.data_mut()[(ft * 3 + ch) * hw + p] = noisy;
                }
                masks.data_mut()[ft * hw + p] = if any_solid { 1.0 } else { 0.0 };

                if ft + 1 < t {
                    // front-most solid object owns the pixel's flow
                    let owner = spec
                        .objects
                        .iter()
                        .rev()
                        .find(|obj| coverage(obj, ft, x, y) >= 0.5);
                    if let Some(obj) = owner {
                        let (u, v) = obj.flow_at(ft, x as f32, y as f32);
                        flow_uv.data_mut()[(ft * 2) * hw + p] = u;
                        flow_uv.data_mut()[(ft * 2 + 1) * hw + p] = v;
                    }
                }
            }
        }
    }

    match spec.flow_failure {
        FlowFailure::None => {}
        FlowFailure::Zeroed => {
            for v in flow_uv.data_mut() {
                *v = 0.0;
            }
        }
        FlowFailure::Noisy(sigma) => {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0xf10f));
            for v in flow_uv.data_mut() {
                *v += gaussian(&mut rng, sigma);
            }
        }
    }

    let mut flow_rgb = Tensor::zeros(&[t - 1, 3, h, w]);
    for ft in 0..t - 1 {
        let uv = Tensor::new(
            vec![2, h, w],
            flow_uv.data()[ft * 2 * hw..(ft + 1) * 2 * hw].to_vec(),
        )?;
        let rgb = flow_to_rgb(&uv, DEFAULT_VMAX)?;
        flow_rgb.data_mut()[ft * 3 * hw..(ft + 1) * 3 * hw].copy_from_slice(rgb.data());
    }

    Ok(VideoSample {
        frames,
        flow_uv,
        flow_rgb,
        masks,
        seed,
    })
}
