//! Batch assembly and the training loop. Every stochastic choice of
//! iteration t is drawn from a generator seeded by (train seed, t), so a
//! resumed run replays the exact batch sequence of an uninterrupted one
//! and checkpointing needs no generator state beyond the iteration index.

use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use synthvid::VideoSample;
use tensor_core::rng::derive_seed;
use tensor_core::{ParamStore, Tape, Tensor};

use crate::augment::augment;
use crate::checkpoint::{load_checkpoint, restore_checkpoint, save_checkpoint};
use crate::config::ModelConfig;
use crate::error::{Result, SegError};
use crate::loss::ce_loss;
use crate::model::Model;
use crate::optim::{poly_lr, AdamW, POLY_POWER};

pub struct Dataset {
    pub names: Vec<String>,
    pub samples: Vec<VideoSample>,
}

impl Dataset {
    pub fn load(root: impl AsRef<Path>) -> Result<Dataset> {
        let dirs = synthvid::list_sequences(&root)?;
        if dirs.is_empty() {
            return Err(SegError::Data(format!(
                "no sequences found under {}",
                root.as_ref().display()
            )));
        }
        let mut names = Vec::with_capacity(dirs.len());
        let mut samples = Vec::with_capacity(dirs.len());
        for dir in dirs {
            names.push(
                dir.file_name()
                    .map(|n| n.to_string_lossy().into_owned())
                    .unwrap_or_default(),
            );
            samples.push(synthvid::read_sample(&dir)?);
        }
        Ok(Dataset { names, samples })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub frames: Tensor<f32>,
    pub flows: Tensor<f32>,
    pub masks: Tensor<f32>,
}

/// Assemble one augmented batch for iteration `iter`.
pub fn sample_batch(
    ds: &Dataset,
    batch: usize,
    crop: usize,
    seed: u64,
    iter: u64,
) -> Result<Batch> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, iter));
    let mut frames = Tensor::zeros(&[batch, 3, crop, crop]);
    let mut flows = Tensor::zeros(&[batch, 3, crop, crop]);
    let mut masks = Tensor::zeros(&[batch, 1, crop, crop]);
    let per3 = 3 * crop * crop;
    let per1 = crop * crop;
    for b in 0..batch {
        let sample = &ds.samples[rng.gen_range(0..ds.samples.len())];
        let t = rng.gen_range(0..sample.frame_count());
        let out = augment(
            &sample.frame(t),
            &sample.flow_rgb_for_frame(t),
            &sample.mask(t),
            crop,
            &mut rng,
        )?;
        frames.data_mut()[b * per3..(b + 1) * per3].copy_from_slice(out.frame.data());
        flows.data_mut()[b * per3..(b + 1) * per3].copy_from_slice(out.flow.data());
        masks.data_mut()[b * per1..(b + 1) * per1].copy_from_slice(out.mask.data());
    }
    Ok(Batch {
        frames,
        flows,
        masks,
    })
}

/// One optimization step: forward, cross entropy, backward, AdamW with the
/// poly learning rate for iteration `t` of `total`. Returns the loss.
pub fn train_step(
    model: &Model,
    store: &mut ParamStore<f32>,
    opt: &mut AdamW,
    batch: &Batch,
    t: u64,
    total: u64,
) -> Result<f32> {
    store.zero_grads();
    let mut tape = Tape::new();
    let frames = tape.constant(batch.frames.clone());
    let flows = tape.constant(batch.flows.clone());
    let logits = model.forward_logits(&mut tape, store, frames, flows, true)?;
    let loss = ce_loss(&mut tape, logits, &batch.masks)?;
    let loss_val = tape.value(loss).item()?;
    if !loss_val.is_finite() {
        return Err(SegError::Numerical(format!(
            "non-finite loss {loss_val} at iteration {t}"
        )));
    }
    tape.backward(loss, store)?;
    let lr = poly_lr(opt.lr0, t, total, POLY_POWER);
    opt.step(store, lr);
    Ok(loss_val)
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub lr0: f32,
    pub weight_decay: f32,
    pub iters: u64,
    pub batch: usize,
    pub crop: usize,
    pub seed: u64,
    pub checkpoint_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr0: 3e-4,
            weight_decay: 0.01,
            iters: 1200,
            batch: 8,
            crop: 64,
            seed: 7,
            checkpoint_every: 500,
        }
    }
}

pub struct TrainOutcome {
    pub model: Model,
    pub store: ParamStore<f32>,
    pub losses: Vec<(u64, f32, f32)>,
    pub final_checkpoint: PathBuf,
}

/// Full training loop. Writes `train_log.csv` (iter,loss,lr lines), interim
/// checkpoints, and `model.ckpt` under `out_dir`. On a non-finite loss the
/// run aborts, keeping the last good checkpoint on disk.
pub fn run_training(
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    dataset: &Dataset,
    out_dir: impl AsRef<Path>,
    resume: Option<&Path>,
) -> Result<TrainOutcome> {
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir).map_err(|e| {
        SegError::Tensor(tensor_core::TensorError::Io {
            path: out_dir.display().to_string(),
            source: e,
        })
    })?;
    let mut store = ParamStore::<f32>::new();
    let model = Model::new(model_cfg, &mut store)?;
    let mut opt = AdamW::new(&store, train_cfg.lr0, train_cfg.weight_decay);
    let mut start = 0u64;
    if let Some(ckpt) = resume {
        start = restore_checkpoint(load_checkpoint(ckpt)?, &mut store, Some(&mut opt))?;
    }

    let log_path = out_dir.join("train_log.csv");
    let mut log = std::io::BufWriter::new(
        std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&log_path)
            .map_err(|e| {
                SegError::Tensor(tensor_core::TensorError::Io {
                    path: log_path.display().to_string(),
                    source: e,
                })
            })?,
    );

    let final_path = out_dir.join("model.ckpt");
    let mut losses = Vec::new();
    for t in start..train_cfg.iters {
        let batch = sample_batch(dataset, train_cfg.batch, train_cfg.crop, train_cfg.seed, t)?;
        let loss = train_step(&model, &mut store, &mut opt, &batch, t, train_cfg.iters)?;
        let lr = poly_lr(train_cfg.lr0, t, train_cfg.iters, POLY_POWER);
        writeln!(log, "{t},{loss:.6e},{lr:.6e}").ok();
        losses.push((t, loss, lr));
        let step_done = t + 1;
        if train_cfg.checkpoint_every > 0
            && step_done % train_cfg.checkpoint_every == 0
            && step_done < train_cfg.iters
        {
            save_checkpoint(
                out_dir.join(format!("checkpoint_{step_done:06}.ckpt")),
                &store,
                Some(&opt),
                step_done,
            )?;
        }
    }
    log.flush().ok();
    save_checkpoint(&final_path, &store, Some(&opt), train_cfg.iters)?;
    Ok(TrainOutcome {
        model,
        store,
        losses,
        final_checkpoint: final_path,
    })
}
