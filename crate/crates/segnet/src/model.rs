//! End-to-end model: hierarchical encoding of frame and flow, per-stage
//! fusion (frame-only / additive / aligned-adaptive), decoding to logits,
//! and single- or multi-scale inference.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use hfan::HfanStage;
use tensor_core::kernels::bilinear_resize_data;
use tensor_core::{ParamStore, Scalar, Tape, Tensor, Val};

use crate::config::{FusionMode, ModelConfig, STAGE_STRIDES};
use crate::decoder::Decoder;
use crate::encoder::Encoder;
use crate::error::{Result, SegError};

pub struct Model {
    pub cfg: ModelConfig,
    encoder: Encoder,
    motion_encoder: Option<Encoder>,
    stages: Vec<HfanStage>,
    decoder: Decoder,
}

/// Class probabilities averaged over test scales, plus the binary decision.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictedMask {
    /// N x 2 x H x W, softmax probabilities.
    pub probs: Tensor<f32>,
    /// N x 1 x H x W, values in {0, 1}; ties go to background.
    pub mask: Tensor<f32>,
}

impl Model {
    /// Register all parameters in `store`. The draw order is fixed by the
    /// config alone, so an f32 and an f64 store built from the same config
    /// hold identical parameter names and initial values.
    pub fn new<T: Scalar>(cfg: &ModelConfig, store: &mut ParamStore<T>) -> Result<Model> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let encoder = Encoder::new(store, "enc", cfg, &mut rng)?;
        let needs_motion = cfg.fusion != FusionMode::FrameOnly;
        let motion_encoder = if needs_motion && !cfg.share_encoder {
            Some(Encoder::new(store, "enc_motion", cfg, &mut rng)?)
        } else {
            None
        };
        let mut stages = Vec::new();
        if cfg.fusion == FusionMode::Hfan {
            for (i, &c) in cfg.stage_channels.iter().enumerate() {
                stages.push(HfanStage::new(
                    store,
                    &format!("stage{}", i + 1),
                    c,
                    cfg.d_attn,
                    cfg.share_poc,
                    &mut rng,
                )?);
            }
        }
        let decoder = Decoder::new(store, "dec", cfg, &mut rng)?;
        Ok(Model {
            cfg: cfg.clone(),
            encoder,
            motion_encoder,
            stages,
            decoder,
        })
    }

    /// frames, flows: N x 3 x H x W. Returns logits at N x 2 x H x W.
    pub fn forward_logits<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        store: &mut ParamStore<T>,
        frames: Val,
        flows: Val,
        train: bool,
    ) -> Result<Val> {
        let shape = tape.shape(frames).to_vec();
        if shape.len() != 4 || shape[1] != 3 {
            return Err(SegError::Contract(format!(
                "expected N x 3 x H x W frames, got {shape:?}"
            )));
        }
        self.cfg.check_input(shape[2], shape[3])?;
        let (h, w) = (shape[2], shape[3]);

        let appearance = self.encoder.forward(tape, store, frames, train)?;
        let fused: Vec<Val> = match self.cfg.fusion {
            FusionMode::FrameOnly => appearance,
            FusionMode::Additive => {
                let motion = self.encode_motion(tape, store, flows, train)?;
                let mut out = Vec::with_capacity(4);
                for (&a, &m) in appearance.iter().zip(&motion) {
                    out.push(tape.add(a, m)?);
                }
                out
            }
            FusionMode::Hfan => {
                let motion = self.encode_motion(tape, store, flows, train)?;
                let mut out = Vec::with_capacity(4);
                for ((stage, &a), &m) in self.stages.iter().zip(&appearance).zip(&motion) {
                    out.push(stage.forward(tape, store, a, m, train)?);
                }
                out
            }
        };
        // sanity on the stride schedule
        debug_assert!(fused
            .iter()
            .zip(STAGE_STRIDES)
            .all(|(&v, s)| tape.shape(v)[2] == h / s && tape.shape(v)[3] == w / s));
        Ok(self.decoder.forward(tape, store, &fused, h, w, train)?)
    }

    fn encode_motion<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        store: &mut ParamStore<T>,
        flows: Val,
        train: bool,
    ) -> Result<Vec<Val>> {
        let enc = self.motion_encoder.as_ref().unwrap_or(&self.encoder);
        Ok(enc.forward(tape, store, flows, train)?)
    }

    /// Multi-scale inference. For each scale the inputs are resized (snapped
    /// to multiples of 32), run in eval mode, and the class probabilities
    /// are resized back and averaged. Ties argmax to background.
    pub fn predict(
        &self,
        store: &mut ParamStore<f32>,
        frame: &Tensor<f32>,
        flow: &Tensor<f32>,
        scales: &[f64],
    ) -> Result<PredictedMask> {
        if scales.is_empty() {
            return Err(SegError::Contract("scales must be non-empty".into()));
        }
        let shape = frame.shape().to_vec();
        if shape.len() != 4 || shape[1] != 3 || flow.shape() != shape {
            return Err(SegError::Contract(format!(
                "predict expects matching N x 3 x H x W inputs, got {:?} and {:?}",
                shape,
                flow.shape()
            )));
        }
        let (n, h, w) = (shape[0], shape[2], shape[3]);
        let mut acc = Tensor::<f32>::zeros(&[n, 2, h, w]);
        for &s in scales {
            let sh = snap32(h, s)?;
            let sw = snap32(w, s)?;
            let rframe = bilinear_resize_data(frame, sh, sw);
            let rflow = bilinear_resize_data(flow, sh, sw);
            let mut tape = Tape::new();
            let fv = tape.constant(rframe);
            let lv = tape.constant(rflow);
            let logits = self.forward_logits(&mut tape, store, fv, lv, false)?;
            let probs = tape.softmax(logits, 1)?;
            let probs = bilinear_resize_data(tape.value(probs), h, w);
            for (a, &p) in acc.data_mut().iter_mut().zip(probs.data()) {
                *a += p;
            }
        }
        let inv = 1.0 / scales.len() as f32;
        for a in acc.data_mut() {
            *a *= inv;
        }
        let hw = h * w;
        let mask = Tensor::from_fn(&[n, 1, h, w], |i| {
            let ni = i / hw;
            let p = i % hw;
            let bg = acc.data()[ni * 2 * hw + p];
            let fg = acc.data()[(ni * 2 + 1) * hw + p];
            if fg > bg {
                1.0
            } else {
                0.0
            }
        });
        Ok(PredictedMask { probs: acc, mask })
    }
}

/// Nearest multiple of 32 to dim*scale; scales that collapse below one
/// stride unit are contract errors.
fn snap32(dim: usize, scale: f64) -> Result<usize> {
    let snapped = ((dim as f64 * scale / 32.0).round() as usize) * 32;
    if snapped < 32 {
        return Err(SegError::Contract(format!(
            "scale {scale} shrinks extent {dim} below 32"
        )));
    }
    Ok(snapped)
}
