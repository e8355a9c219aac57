//! Feature alignment: a coarse two-class segmentation head on the appearance
//! stream, category-specific semantics extracted from it, and primary-object
//!-context attention that rewrites both streams against the same semantics.

use rand::Rng;

use tensor_core::nn::ConvBnRelu;
use tensor_core::{ParamStore, Result, Scalar, Tape, TensorError, Val};

/// Foreground / background.
pub const NUM_CLASSES: usize = 2;

/// Conv1x1 -> BN -> ReLU head producing the coarse class map (N x 2 x H x W).
pub struct CoarseSeg {
    pub block: ConvBnRelu,
}

impl CoarseSeg {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        in_ch: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        Ok(CoarseSeg {
            block: ConvBnRelu::new(store, name, in_ch, NUM_CLASSES, rng)?,
        })
    }

    pub fn forward<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        store: &mut ParamStore<T>,
        x: Val,
        train: bool,
    ) -> Result<Val> {
        self.block.forward(tape, store, x, train)
    }
}

/// One semantic vector per class: features are flattened to (HW) x C, the
/// class map to (HW) x K with a softmax over the spatial axis, and the
/// product gives N x C x K. Each class vector is therefore a convex
/// combination of pixel features.
pub fn class_semantics<T: Scalar>(tape: &mut Tape<T>, features: Val, probs: Val) -> Result<Val> {
    let fsh = tape.shape(features).to_vec();
    let psh = tape.shape(probs).to_vec();
    if fsh.len() != 4 || psh.len() != 4 || fsh[0] != psh[0] || fsh[2..] != psh[2..] {
        return Err(TensorError::DimensionMismatch {
            op: "class_semantics",
            lhs: fsh,
            rhs: psh,
        });
    }
    let (n, c, h, w) = (fsh[0], fsh[1], fsh[2], fsh[3]);
    let k = psh[1];
    let f = tape.reshape(features, &[n, c, h * w])?;
    let p = tape.reshape(probs, &[n, k, h * w])?;
    let p = tape.transpose_last2(p)?;
    let weights = tape.softmax(p, 1)?;
    tape.bmm(f, weights)
}

/// Primary-object-context attention. Pixels become queries, the class
/// semantics become keys and values; the attended context is concatenated
/// back onto the input and projected to the input width.
pub struct Poc {
    query: ConvBnRelu,
    key: ConvBnRelu,
    value: ConvBnRelu,
    project: ConvBnRelu,
    pub reduced_dim: usize,
    attn_scale: f64,
}

impl Poc {
    /// `d_cap` bounds the reduced attention width; the effective width is
    /// min(d_cap, channels). The attention logits are scaled by
    /// 1/sqrt(channels).
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        channels: usize,
        d_cap: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if d_cap == 0 {
            return Err(TensorError::Config(format!(
                "{name}: reduced attention width must be positive"
            )));
        }
        let d = d_cap.min(channels);
        Ok(Poc {
            query: ConvBnRelu::new(store, &format!("{name}.query"), channels, d, rng)?,
            key: ConvBnRelu::new(store, &format!("{name}.key"), channels, d, rng)?,
            value: ConvBnRelu::new(store, &format!("{name}.value"), channels, d, rng)?,
            project: ConvBnRelu::new(store, &format!("{name}.project"), channels + d, channels, rng)?,
            reduced_dim: d,
            attn_scale: 1.0 / (channels as f64).sqrt(),
        })
    }

    pub fn forward<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        store: &mut ParamStore<T>,
        x: Val,
        semantics: Val,
        train: bool,
    ) -> Result<Val> {
        Ok(self.forward_with_attn(tape, store, x, semantics, train)?.0)
    }

    /// Also returns the attention map (N x HW x K) for inspection.
    pub fn forward_with_attn<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        store: &mut ParamStore<T>,
        x: Val,
        semantics: Val,
        train: bool,
    ) -> Result<(Val, Val)> {
        let xsh = tape.shape(x).to_vec();
        let msh = tape.shape(semantics).to_vec();
        if xsh.len() != 4 || msh.len() != 3 || xsh[1] != msh[1] {
            return Err(TensorError::DimensionMismatch {
                op: "poc",
                lhs: xsh,
                rhs: msh,
            });
        }
        let (n, _c, h, w) = (xsh[0], xsh[1], xsh[2], xsh[3]);
        let k = msh[2];
        let d = self.reduced_dim;

        let q = self.query.forward(tape, store, x, train)?;
        // class vectors run through the same conv-block machinery as a
        // K x 1 "image"
        let sem_img = tape.reshape(semantics, &[n, msh[1], k, 1])?;
        let key = self.key.forward(tape, store, sem_img, train)?;
        let value = self.value.forward(tape, store, sem_img, train)?;

        let q = tape.reshape(q, &[n, d, h * w])?;
        let q = tape.transpose_last2(q)?; // N x HW x d
        let key = tape.reshape(key, &[n, d, k])?;
        let logits = tape.bmm(q, key)?; // N x HW x K
        let logits = tape.scale(logits, T::from_f64(self.attn_scale))?;
        let attn = tape.softmax(logits, 2)?;

        let value = tape.reshape(value, &[n, d, k])?;
        let value = tape.transpose_last2(value)?; // N x K x d
        let ctx = tape.bmm(attn, value)?; // N x HW x d
        let ctx = tape.transpose_last2(ctx)?;
        let ctx = tape.reshape(ctx, &[n, d, h, w])?;

        let cat = tape.concat(&[x, ctx], 1)?;
        let out = self.project.forward(tape, store, cat, train)?;
        Ok((out, attn))
    }
}

/// Feature alignment over an (appearance, motion) stage pair. Both streams
/// attend to the one set of class semantics derived from the appearance
/// stream; by default they also share the attention parameters.
pub struct Fam {
    pub coarse: CoarseSeg,
    poc: Poc,
    poc_motion: Option<Poc>,
}

impl Fam {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        channels: usize,
        d_cap: usize,
        share_poc: bool,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let coarse = CoarseSeg::new(store, &format!("{name}.coarse"), channels, rng)?;
        let poc = Poc::new(store, &format!("{name}.poc"), channels, d_cap, rng)?;
        let poc_motion = if share_poc {
            None
        } else {
            Some(Poc::new(store, &format!("{name}.poc_motion"), channels, d_cap, rng)?)
        };
        Ok(Fam {
            coarse,
            poc,
            poc_motion,
        })
    }

    /// Attention parameters of the appearance stream; the motion stream
    /// uses the same set unless sharing was disabled at construction.
    pub fn shared_poc(&self) -> &Poc {
        &self.poc
    }

    pub fn forward<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        store: &mut ParamStore<T>,
        appearance: Val,
        motion: Val,
        train: bool,
    ) -> Result<(Val, Val)> {
        if tape.shape(appearance) != tape.shape(motion) {
            return Err(TensorError::DimensionMismatch {
                op: "fam",
                lhs: tape.shape(appearance).to_vec(),
                rhs: tape.shape(motion).to_vec(),
            });
        }
        let probs = self.coarse.forward(tape, store, appearance, train)?;
        let semantics = class_semantics(tape, appearance, probs)?;
        let aligned_app = self.poc.forward(tape, store, appearance, semantics, train)?;
        let motion_poc = self.poc_motion.as_ref().unwrap_or(&self.poc);
        let aligned_mot = motion_poc.forward(tape, store, motion, semantics, train)?;
        Ok((aligned_app, aligned_mot))
    }
}
