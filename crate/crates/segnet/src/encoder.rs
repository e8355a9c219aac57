//! Miniature hierarchical encoder: four stages at strides 4/8/16/32, each a
//! strided 2x2-average downsampling followed by two Conv1x1 -> BN -> ReLU
//! blocks. Minimal, but it preserves the (stage channels, stage strides)
//! interface the fusion stages consume.

use rand::Rng;

use tensor_core::nn::ConvBnRelu;
use tensor_core::{ParamStore, Result, Scalar, Tape, Val};

use crate::config::ModelConfig;

struct EncoderStage {
    pools: usize,
    block_in: ConvBnRelu,
    block_mid: ConvBnRelu,
}

pub struct Encoder {
    stages: Vec<EncoderStage>,
}

impl Encoder {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        cfg: &ModelConfig,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let mut stages = Vec::with_capacity(4);
        let mut in_ch = 3;
        for (i, &out_ch) in cfg.stage_channels.iter().enumerate() {
            let pools = if i == 0 { 2 } else { 1 };
            let prefix = format!("{name}.s{}", i + 1);
            stages.push(EncoderStage {
                pools,
                block_in: ConvBnRelu::new(store, &format!("{prefix}.b1"), in_ch, out_ch, rng)?,
                block_mid: ConvBnRelu::new(store, &format!("{prefix}.b2"), out_ch, out_ch, rng)?,
            });
            in_ch = out_ch;
        }
        Ok(Encoder { stages })
    }

    /// image: N x 3 x H x W with H, W divisible by 32. Returns the four
    /// stage features at H/4, H/8, H/16, H/32.
    pub fn forward<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        store: &mut ParamStore<T>,
        image: Val,
        train: bool,
    ) -> Result<Vec<Val>> {
        let mut x = image;
        let mut out = Vec::with_capacity(4);
        for stage in &self.stages {
            for _ in 0..stage.pools {
                x = tape.avg_pool2(x)?;
            }
            x = stage.block_in.forward(tape, store, x, train)?;
            x = stage.block_mid.forward(tape, store, x, train)?;
            out.push(x);
        }
        Ok(out)
    }
}
