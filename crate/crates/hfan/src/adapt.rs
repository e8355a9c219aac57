//! Feature adaptation: the aligned streams are summed, two attention
//! branches (one full-resolution, one pooled descriptor) produce gate
//! logits, and a sigmoid gate convexly blends the two streams. The gate's
//! last convolutions start at zero so fusion begins unbiased at 0.5.

use rand::Rng;

use tensor_core::nn::{Conv1x1, ConvBnRelu};
use tensor_core::{ParamStore, Result, Scalar, Tape, TensorError, Val};

fn require_same_shape<T: Scalar>(
    tape: &Tape<T>,
    op: &'static str,
    a: Val,
    b: Val,
) -> Result<()> {
    if tape.shape(a) != tape.shape(b) {
        return Err(TensorError::DimensionMismatch {
            op,
            lhs: tape.shape(a).to_vec(),
            rhs: tape.shape(b).to_vec(),
        });
    }
    Ok(())
}

/// Skip-connection fusion of two same-shape streams.
pub fn fuse_sum<T: Scalar>(tape: &mut Tape<T>, a: Val, b: Val) -> Result<Val> {
    require_same_shape(tape, "fuse_sum", a, b)?;
    tape.add(a, b)
}

pub struct Fat {
    spatial_reduce: ConvBnRelu,
    spatial_expand: Conv1x1,
    pooled_reduce: Conv1x1,
    pooled_expand: Conv1x1,
}

impl Fat {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        channels: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let hidden = (channels / 4).max(1);
        Ok(Fat {
            spatial_reduce: ConvBnRelu::new(
                store,
                &format!("{name}.spatial.reduce"),
                channels,
                hidden,
                rng,
            )?,
            spatial_expand: Conv1x1::zeroed(
                store,
                &format!("{name}.spatial.expand"),
                hidden,
                channels,
            )?,
            pooled_reduce: Conv1x1::new(
                store,
                &format!("{name}.pooled.reduce"),
                channels,
                hidden,
                rng,
            )?,
            pooled_expand: Conv1x1::zeroed(
                store,
                &format!("{name}.pooled.expand"),
                hidden,
                channels,
            )?,
        })
    }

    pub fn forward<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        store: &mut ParamStore<T>,
        aligned_app: Val,
        aligned_mot: Val,
        train: bool,
    ) -> Result<Val> {
        Ok(self
            .forward_with_gate(tape, store, aligned_app, aligned_mot, train)?
            .0)
    }

    /// Returns (fused output, gate). Gate values are strictly inside (0, 1),
    /// so the output is a componentwise convex combination of the streams.
    pub fn forward_with_gate<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        store: &mut ParamStore<T>,
        aligned_app: Val,
        aligned_mot: Val,
        train: bool,
    ) -> Result<(Val, Val)> {
        require_same_shape(tape, "fat", aligned_app, aligned_mot)?;
        let fused = tape.add(aligned_app, aligned_mot)?;

        // full-resolution branch: N x C x H x W logits
        let s = self.spatial_reduce.forward(tape, store, fused, train)?;
        let s = self.spatial_expand.forward(tape, store, s)?;

        // pooled-descriptor branch: N x C x 1 x 1 logits, broadcast on add
        let p = tape.global_avg_pool(fused)?;
        let p = self.pooled_reduce.forward(tape, store, p)?;
        let p = tape.relu(p)?;
        let p = self.pooled_expand.forward(tape, store, p)?;

        let logits = tape.add(s, p)?;
        let gate = tape.sigmoid(logits)?;
        let anti_gate = {
            let neg = tape.scale(gate, -T::one())?;
            tape.add_scalar(neg, T::one())?
        };
        let from_app = tape.mul(aligned_app, gate)?;
        let from_mot = tape.mul(aligned_mot, anti_gate)?;
        let out = tape.add(from_app, from_mot)?;
        Ok((out, gate))
    }
}
