//! On-disk layout of one video sample. This directory structure is the
//! canonical dataset interface consumed by the trainer, the inference
//! command, and the evaluator:
//!
//!   <dir>/frames/%05d.ten    3 x H x W, values in [0, 1]
//!   <dir>/flow/uv_%05d.ten   2 x H x W, pixels/frame (T-1 files)
//!   <dir>/flow/rgb_%05d.ten  3 x H x W, encoded flow (T-1 files)
//!   <dir>/masks/%05d.ten     1 x H x W, binary
//!   <dir>/meta               key=value lines: H, W, T, seed

use std::path::Path;

use tensor_core::io::{read_tensor, write_tensor};
use tensor_core::Tensor;

use crate::error::{Result, SynthError};

#[derive(Debug, Clone, PartialEq)]
pub struct VideoSample {
    /// T x 3 x H x W
    pub frames: Tensor<f32>,
    /// (T-1) x 2 x H x W
    pub flow_uv: Tensor<f32>,
    /// (T-1) x 3 x H x W
    pub flow_rgb: Tensor<f32>,
    /// T x 1 x H x W, values in {0, 1}
    pub masks: Tensor<f32>,
    pub seed: u64,
}

impl VideoSample {
    pub fn frame_count(&self) -> usize {
        self.frames.shape()[0]
    }

    pub fn height(&self) -> usize {
        self.frames.shape()[2]
    }

    pub fn width(&self) -> usize {
        self.frames.shape()[3]
    }

    /// Copy one leading-axis slice out of a stacked tensor.
    pub fn slice(stacked: &Tensor<f32>, index: usize) -> Tensor<f32> {
        let per = stacked.len() / stacked.shape()[0];
        let shape: Vec<usize> = stacked.shape()[1..].to_vec();
        Tensor::new(
            shape,
            stacked.data()[index * per..(index + 1) * per].to_vec(),
        )
        .expect("slice shape")
    }

    pub fn frame(&self, t: usize) -> Tensor<f32> {
        Self::slice(&self.frames, t)
    }

    pub fn mask(&self, t: usize) -> Tensor<f32> {
        Self::slice(&self.masks, t)
    }

    /// Flow image paired with frame `t`; the last frame reuses the final
    /// flow field since flow only exists between consecutive frames.
    pub fn flow_rgb_for_frame(&self, t: usize) -> Tensor<f32> {
        let idx = t.min(self.flow_rgb.shape()[0] - 1);
        Self::slice(&self.flow_rgb, idx)
    }

    fn validate(&self) -> Result<()> {
        let t = self.frames.shape()[0];
        let (h, w) = (self.frames.shape()[2], self.frames.shape()[3]);
        if self.frames.shape() != [t, 3, h, w]
            || self.flow_uv.shape() != [t - 1, 2, h, w]
            || self.flow_rgb.shape() != [t - 1, 3, h, w]
            || self.masks.shape() != [t, 1, h, w]
        {
            return Err(SynthError::Layout(format!(
                "inconsistent sample shapes: frames {:?} flow_uv {:?} flow_rgb {:?} masks {:?}",
                self.frames.shape(),
                self.flow_uv.shape(),
                self.flow_rgb.shape(),
                self.masks.shape()
            )));
        }
        if self.masks.data().iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(SynthError::Layout("mask values must be binary".into()));
        }
        Ok(())
    }
}

pub fn write_sample(dir: impl AsRef<Path>, sample: &VideoSample) -> Result<()> {
    sample.validate()?;
    let dir = dir.as_ref();
    let t = sample.frame_count();
    for sub in ["frames", "flow", "masks"] {
        std::fs::create_dir_all(dir.join(sub)).map_err(|e| io_err(dir, e))?;
    }
    for ft in 0..t {
        write_tensor(
            dir.join(format!("frames/{ft:05}.ten")),
            &VideoSample::slice(&sample.frames, ft),
        )?;
        write_tensor(
            dir.join(format!("masks/{ft:05}.ten")),
            &VideoSample::slice(&sample.masks, ft),
        )?;
    }
    for ft in 0..t - 1 {
        write_tensor(
            dir.join(format!("flow/uv_{ft:05}.ten")),
            &VideoSample::slice(&sample.flow_uv, ft),
        )?;
        write_tensor(
            dir.join(format!("flow/rgb_{ft:05}.ten")),
            &VideoSample::slice(&sample.flow_rgb, ft),
        )?;
    }
    let meta = format!(
        "H={}\nW={}\nT={}\nseed={}\n",
        sample.height(),
        sample.width(),
        t,
        sample.seed
    );
    std::fs::write(dir.join("meta"), meta).map_err(|e| io_err(dir, e))?;
    Ok(())
}

pub fn read_sample(dir: impl AsRef<Path>) -> Result<VideoSample> {
    let dir = dir.as_ref();
    let meta = parse_meta(dir)?;
    let (h, w, t, seed) = meta;
    if t < 2 {
        return Err(SynthError::Layout(format!("meta T={t} must be >= 2")));
    }

    let mut frames = Tensor::zeros(&[t, 3, h, w]);
    let mut masks = Tensor::zeros(&[t, 1, h, w]);
    let mut flow_uv = Tensor::zeros(&[t - 1, 2, h, w]);
    let mut flow_rgb = Tensor::zeros(&[t - 1, 3, h, w]);

    let read_into =
        |rel: String, expect: &[usize], dst: &mut [f32]| -> Result<()> {
            let tensor = read_tensor(dir.join(&rel))?;
            if tensor.shape() != expect {
                return Err(SynthError::Layout(format!(
                    "{rel}: expected shape {expect:?}, found {:?}",
                    tensor.shape()
                )));
            }
            dst.copy_from_slice(tensor.data());
            Ok(())
        };

    let hw3 = 3 * h * w;
    let hw1 = h * w;
    let hw2 = 2 * h * w;
    for ft in 0..t {
        read_into(
            format!("frames/{ft:05}.ten"),
            &[3, h, w],
            &mut frames.data_mut()[ft * hw3..(ft + 1) * hw3],
        )?;
        read_into(
            format!("masks/{ft:05}.ten"),
            &[1, h, w],
            &mut masks.data_mut()[ft * hw1..(ft + 1) * hw1],
        )?;
    }
    for ft in 0..t - 1 {
        read_into(
            format!("flow/uv_{ft:05}.ten"),
            &[2, h, w],
            &mut flow_uv.data_mut()[ft * hw2..(ft + 1) * hw2],
        )?;
        read_into(
            format!("flow/rgb_{ft:05}.ten"),
            &[3, h, w],
            &mut flow_rgb.data_mut()[ft * hw3..(ft + 1) * hw3],
        )?;
    }

    let sample = VideoSample {
        frames,
        flow_uv,
        flow_rgb,
        masks,
        seed,
    };
    sample.validate()?;
    Ok(sample)
}

fn parse_meta(dir: &Path) -> Result<(usize, usize, usize, u64)> {
    let path = dir.join("meta");
    let text = std::fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
    let (mut h, mut w, mut t, mut seed) = (None, None, None, None);
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(SynthError::Layout(format!("bad meta line `{line}`")));
        };
        match k {
            "H" => h = v.parse().ok(),
            "W" => w = v.parse().ok(),
            "T" => t = v.parse().ok(),
            "seed" => seed = v.parse().ok(),
            other => {
                return Err(SynthError::Layout(format!("unknown meta key `{other}`")));
            }
        }
    }
    match (h, w, t, seed) {
        (Some(h), Some(w), Some(t), Some(seed)) => Ok((h, w, t, seed)),
        _ => Err(SynthError::Layout(format!(
            "meta at {} must define H, W, T, seed",
            path.display()
        ))),
    }
}

fn io_err(path: &Path, source: std::io::Error) -> SynthError {
    SynthError::Tensor(tensor_core::TensorError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Sequence directories under `root`, sorted by name.
pub fn list_sequences(root: impl AsRef<Path>) -> Result<Vec<std::path::PathBuf>> {
    let root = root.as_ref();
    let mut dirs = Vec::new();
    let entries = std::fs::read_dir(root).map_err(|e| io_err(root, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| io_err(root, e))?;
        if entry.path().is_dir() {
            dirs.push(entry.path());
        }
    }
    dirs.sort();
    Ok(dirs)
}
