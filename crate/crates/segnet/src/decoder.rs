//! All-MLP-style decoder: every fused stage is projected to a common width,
//! upsampled to the stage-1 resolution, concatenated, fused by one
//! Conv1x1 -> BN -> ReLU, mapped to class logits, and upsampled to the
//! input resolution.

use rand::Rng;

use hfan::NUM_CLASSES;
use tensor_core::nn::{Conv1x1, ConvBnRelu};
use tensor_core::{ParamStore, Result, Scalar, Tape, TensorError, Val};

use crate::config::ModelConfig;

pub struct Decoder {
    proj: Vec<Conv1x1>,
    fuse: ConvBnRelu,
    head: Conv1x1,
}

impl Decoder {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        cfg: &ModelConfig,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let dim = cfg.decoder_dim;
        let mut proj = Vec::with_capacity(4);
        for (i, &c) in cfg.stage_channels.iter().enumerate() {
            proj.push(Conv1x1::new(
                store,
                &format!("{name}.proj{}", i + 1),
                c,
                dim,
                rng,
            )?);
        }
        Ok(Decoder {
            proj,
            fuse: ConvBnRelu::new(store, &format!("{name}.fuse"), 4 * dim, dim, rng)?,
            head: Conv1x1::new(store, &format!("{name}.head"), dim, NUM_CLASSES, rng)?,
        })
    }

    /// stages: the four fused maps, finest first. Returns logits at
    /// N x NUM_CLASSES x out_h x out_w.
    pub fn forward<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        store: &mut ParamStore<T>,
        stages: &[Val],
        out_h: usize,
        out_w: usize,
        train: bool,
    ) -> Result<Val> {
        if stages.len() != 4 {
            return Err(TensorError::Contract(format!(
                "decoder expects 4 stages, got {}",
                stages.len()
            ))
            .into());
        }
        let (th, tw) = {
            let s = tape.shape(stages[0]);
            (s[2], s[3])
        };
        let mut planes = Vec::with_capacity(4);
        for (stage, proj) in stages.iter().zip(&self.proj) {
            let p = proj.forward(tape, store, *stage)?;
            let p = tape.bilinear_resize(p, th, tw)?;
            planes.push(p);
        }
        let cat = tape.concat(&planes, 1)?;
        let fused = self.fuse.forward(tape, store, cat, train)?;
        let logits = self.head.forward(tape, store, fused)?;
        let logits = tape.bilinear_resize(logits, out_h, out_w)?;
        Ok(logits)
    }
}
