//! Checkpoints: magic "HFC1", u32 little-endian entry count, then per entry
//! a u32 name length, the UTF-8 name, and the tensor serialized exactly as
//! a ".ten" file. Holds parameters, batch-norm state buffers, optimizer
//! moments, and the iteration counter; round trips are bit-exact.

use std::io::{Read, Write};
use std::path::Path;

use tensor_core::io::{read_tensor_from, write_tensor_to};
use tensor_core::{ParamStore, Tensor, TensorError};

use crate::error::{Result, SegError};
use crate::optim::AdamW;

pub const CKPT_MAGIC: &[u8; 4] = b"HFC1";

fn io_err(path: &Path, source: std::io::Error) -> SegError {
    SegError::Tensor(TensorError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn save_checkpoint(
    path: impl AsRef<Path>,
    store: &ParamStore<f32>,
    opt: Option<&AdamW>,
    iter: u64,
) -> Result<()> {
    let path = path.as_ref();
    let mut entries: Vec<(String, &Tensor<f32>)> = Vec::new();
    for p in store.params() {
        entries.push((format!("param.{}", p.name), &p.value));
    }
    for (name, t) in store.buffers() {
        entries.push((format!("buffer.{name}"), t));
    }
    let step_tensor;
    let iter_tensor = Tensor::scalar(iter as f32);
    let mut moment_storage = Vec::new();
    if let Some(opt) = opt {
        for (name, m, v) in opt.moments(store) {
            moment_storage.push((format!("opt.m.{name}"), m.clone()));
            moment_storage.push((format!("opt.v.{name}"), v.clone()));
        }
        step_tensor = Tensor::scalar(opt.step_count as f32);
    } else {
        step_tensor = Tensor::scalar(0.0);
    }
    for (name, t) in &moment_storage {
        entries.push((name.clone(), t));
    }
    if opt.is_some() {
        entries.push(("opt.step".into(), &step_tensor));
    }
    entries.push(("meta.iter".into(), &iter_tensor));

    let tmp = path.with_extension("tmp");
    {
        let mut f = std::io::BufWriter::new(
            std::fs::File::create(&tmp).map_err(|e| io_err(&tmp, e))?,
        );
        f.write_all(CKPT_MAGIC).map_err(|e| io_err(&tmp, e))?;
        f.write_all(&(entries.len() as u32).to_le_bytes())
            .map_err(|e| io_err(&tmp, e))?;
        for (name, tensor) in &entries {
            let bytes = name.as_bytes();
            f.write_all(&(bytes.len() as u32).to_le_bytes())
                .map_err(|e| io_err(&tmp, e))?;
            f.write_all(bytes).map_err(|e| io_err(&tmp, e))?;
            write_tensor_to(&mut f, tensor).map_err(|e| io_err(&tmp, e))?;
        }
        f.flush().map_err(|e| io_err(&tmp, e))?;
    }
    std::fs::rename(&tmp, path).map_err(|e| io_err(path, e))?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Vec<(String, Tensor<f32>)>> {
    let path = path.as_ref();
    let mut f =
        std::io::BufReader::new(std::fs::File::open(path).map_err(|e| io_err(path, e))?);
    let mut magic = [0u8; 4];
    f.read_exact(&mut magic).map_err(|e| io_err(path, e))?;
    if &magic != CKPT_MAGIC {
        return Err(SegError::Data(format!(
            "{}: bad checkpoint magic {:?}",
            path.display(),
            magic
        )));
    }
    let mut u32buf = [0u8; 4];
    f.read_exact(&mut u32buf).map_err(|e| io_err(path, e))?;
    let count = u32::from_le_bytes(u32buf) as usize;
    let mut entries = Vec::with_capacity(count);
    let mut offset = 8u64;
    for _ in 0..count {
        f.read_exact(&mut u32buf).map_err(|e| io_err(path, e))?;
        let name_len = u32::from_le_bytes(u32buf) as usize;
        let mut name = vec![0u8; name_len];
        f.read_exact(&mut name).map_err(|e| io_err(path, e))?;
        let name = String::from_utf8(name)
            .map_err(|_| SegError::Data(format!("{}: non-UTF-8 entry name", path.display())))?;
        offset += 4 + name_len as u64;
        let tensor = read_tensor_from(&mut f, offset)?;
        offset += 8 + 4 * tensor.rank() as u64 + 4 * tensor.len() as u64;
        entries.push((name, tensor));
    }
    Ok(entries)
}

/// Write checkpoint entries back into a model's store (and optimizer).
/// Every parameter and buffer of the store must be present with a matching
/// shape; mismatches name the offending entry. Returns the stored iteration.
pub fn restore_checkpoint(
    entries: Vec<(String, Tensor<f32>)>,
    store: &mut ParamStore<f32>,
    mut opt: Option<&mut AdamW>,
) -> Result<u64> {
    let mut iter = 0u64;
    let mut seen_params = 0usize;
    let mut seen_buffers = 0usize;
    for (name, tensor) in entries {
        if let Some(pname) = name.strip_prefix("param.") {
            let id = store.find_param(pname).ok_or_else(|| {
                SegError::Data(format!(
                    "checkpoint parameter `{pname}` not present in this model config"
                ))
            })?;
            if store.value(id).shape() != tensor.shape() {
                return Err(SegError::Data(format!(
                    "checkpoint parameter `{pname}` has shape {:?}, model expects {:?}",
                    tensor.shape(),
                    store.value(id).shape()
                )));
            }
            *store.value_mut(id) = tensor;
            seen_params += 1;
        } else if let Some(bname) = name.strip_prefix("buffer.") {
            let id = store.find_buffer(bname).ok_or_else(|| {
                SegError::Data(format!(
                    "checkpoint buffer `{bname}` not present in this model config"
                ))
            })?;
            if store.buffer(id).shape() != tensor.shape() {
                return Err(SegError::Data(format!(
                    "checkpoint buffer `{bname}` has shape {:?}, model expects {:?}",
                    tensor.shape(),
                    store.buffer(id).shape()
                )));
            }
            *store.buffer_mut(id) = tensor;
            seen_buffers += 1;
        } else if let Some(mname) = name.strip_prefix("opt.m.") {
            if let Some(opt) = opt.as_deref_mut() {
                opt.restore_moment(store, mname, true, tensor)?;
            }
        } else if let Some(vname) = name.strip_prefix("opt.v.") {
            if let Some(opt) = opt.as_deref_mut() {
                opt.restore_moment(store, vname, false, tensor)?;
            }
        } else if name == "opt.step" {
            if let Some(opt) = opt.as_deref_mut() {
                opt.step_count = tensor.item()? as u64;
            }
        } else if name == "meta.iter" {
            iter = tensor.item()? as u64;
        } else {
            return Err(SegError::Data(format!("unknown checkpoint entry `{name}`")));
        }
    }
    if seen_params != store.param_count() {
        return Err(SegError::Data(format!(
            "checkpoint holds {seen_params} of {} model parameters",
            store.param_count()
        )));
    }
    if seen_buffers != store.buffers().count() {
        return Err(SegError::Data(format!(
            "checkpoint holds {seen_buffers} of {} state buffers",
            store.buffers().count()
        )));
    }
    Ok(iter)
}
