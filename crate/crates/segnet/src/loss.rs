//! Pixelwise two-class cross entropy: mean over all positions of
//! -log softmax(logits)[target], composed from the log-softmax primitive so
//! gradients flow through the tape.

use hfan::NUM_CLASSES;
use tensor_core::{Result, Scalar, Tape, Tensor, TensorError, Val};

pub fn ce_loss<T: Scalar>(tape: &mut Tape<T>, logits: Val, target: &Tensor<T>) -> Result<Val> {
    let lsh = tape.shape(logits).to_vec();
    let tsh = target.shape();
    if lsh.len() != 4
        || lsh[1] != NUM_CLASSES
        || tsh != [lsh[0], 1, lsh[2], lsh[3]]
    {
        return Err(TensorError::DimensionMismatch {
            op: "ce_loss",
            lhs: lsh,
            rhs: tsh.to_vec(),
        });
    }
    if target.data().iter().any(|&v| v != T::zero() && v != T::one()) {
        return Err(TensorError::Data("cross entropy target must be binary".into()));
    }
    let (n, h, w) = (lsh[0], lsh[2], lsh[3]);
    let hw = h * w;

    // selection weights: channel 0 gets 1-G, channel 1 gets G
    let selector = Tensor::from_fn(&[n, NUM_CLASSES, h, w], |i| {
        let ni = i / (NUM_CLASSES * hw);
        let c = (i / hw) % NUM_CLASSES;
        let p = i % hw;
        let g = target.data()[ni * hw + p];
        if c == 0 {
            T::one() - g
        } else {
            g
        }
    });
    let sel = tape.constant(selector);
    let lsm = tape.log_softmax(logits, 1)?;
    let picked = tape.mul(lsm, sel)?;
    let total = tape.sum_all(picked)?;
    tape.scale(total, -T::one() / T::from_f64((n * hw) as f64))
}
