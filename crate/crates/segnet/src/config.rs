use crate::error::{Result, SegError};

/// What the per-stage fusion does with the two feature streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FusionMode {
    /// Appearance features only; the flow input is ignored.
    FrameOnly,
    /// Plain additive fusion of the two streams.
    Additive,
    /// Full alignment + adaptive gated fusion.
    Hfan,
}

impl FusionMode {
    pub fn parse(s: &str) -> Option<FusionMode> {
        match s {
            "frame-only" => Some(FusionMode::FrameOnly),
            "additive" => Some(FusionMode::Additive),
            "hfan" => Some(FusionMode::Hfan),
            _ => None,
        }
    }
}

impl std::fmt::Display for FusionMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FusionMode::FrameOnly => write!(f, "frame-only"),
            FusionMode::Additive => write!(f, "additive"),
            FusionMode::Hfan => write!(f, "hfan"),
        }
    }
}

/// Spatial reduction of each stage relative to the input image.
pub const STAGE_STRIDES: [usize; 4] = [4, 8, 16, 32];

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub stage_channels: [usize; 4],
    pub decoder_dim: usize,
    /// Cap on the reduced attention width; each stage uses
    /// min(d_attn, stage channels).
    pub d_attn: usize,
    /// One encoder for both frame and flow (shared weights) or two.
    pub share_encoder: bool,
    /// Appearance and motion streams share the attention parameters.
    pub share_poc: bool,
    pub fusion: FusionMode,
    /// Weight initialization seed.
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            stage_channels: [8, 16, 32, 64],
            decoder_dim: 64,
            d_attn: 16,
            share_encoder: true,
            share_poc: true,
            fusion: FusionMode::Hfan,
            seed: 1,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.stage_channels.windows(2).any(|w| w[0] > w[1]) {
            return Err(SegError::Config(format!(
                "stage channels must be non-decreasing, got {:?}",
                self.stage_channels
            )));
        }
        if self.stage_channels.iter().any(|&c| c == 0) || self.decoder_dim == 0 {
            return Err(SegError::Config("channel widths must be positive".into()));
        }
        if self.d_attn == 0 {
            return Err(SegError::Config(
                "attention width cap must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Input extents must divide by the deepest stride.
    pub fn check_input(&self, h: usize, w: usize) -> Result<()> {
        let s = STAGE_STRIDES[3];
        if h % s != 0 || w % s != 0 || h == 0 || w == 0 {
            return Err(SegError::Contract(format!(
                "input {h}x{w} must be a positive multiple of {s}"
            )));
        }
        Ok(())
    }
}
