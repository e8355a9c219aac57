//! The ".ten" tensor file format: magic "HFT1", u32 little-endian rank,
//! `rank` u32 extents, then `product(extents)` f32 little-endian values,
//! row-major. No padding, no compression.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Result, TensorError};
use crate::tensor::Tensor;

pub const TEN_MAGIC: &[u8; 4] = b"HFT1";

fn io_err(path: &Path, source: std::io::Error) -> TensorError {
    TensorError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Serialize a tensor into `w`. Returns the number of bytes written.
pub fn write_tensor_to(w: &mut impl Write, t: &Tensor<f32>) -> std::io::Result<u64> {
    w.write_all(TEN_MAGIC)?;
    w.write_all(&(t.rank() as u32).to_le_bytes())?;
    for &e in t.shape() {
        w.write_all(&(e as u32).to_le_bytes())?;
    }
    for &v in t.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(8 + 4 * t.rank() as u64 + 4 * t.len() as u64)
}

/// Deserialize one tensor from `r`. `base` offsets error positions when the
/// stream is embedded in a larger file.
pub fn read_tensor_from(r: &mut impl Read, base: u64) -> Result<Tensor<f32>> {
    let mut pos = base;
    let mut take = |buf: &mut [u8], what: &str| -> Result<()> {
        r.read_exact(buf).map_err(|_| TensorError::Format {
            offset: pos,
            msg: format!("truncated while reading {what}"),
        })?;
        pos += buf.len() as u64;
        Ok(())
    };

    let mut magic = [0u8; 4];
    take(&mut magic, "magic")?;
    if &magic != TEN_MAGIC {
        return Err(TensorError::Format {
            offset: base,
            msg: format!("bad magic {:?}, expected {:?}", magic, TEN_MAGIC),
        });
    }

    let mut u32buf = [0u8; 4];
    take(&mut u32buf, "rank")?;
    let rank = u32::from_le_bytes(u32buf) as usize;
    if rank > 8 {
        return Err(TensorError::Format {
            offset: base + 4,
            msg: format!("implausible rank {rank}"),
        });
    }

    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        take(&mut u32buf, "extent")?;
        let e = u32::from_le_bytes(u32buf) as usize;
        if e == 0 {
            return Err(TensorError::Format {
                offset: pos - 4,
                msg: "zero extent".into(),
            });
        }
        shape.push(e);
    }

    let numel: usize = shape.iter().product();
    let mut data = Vec::with_capacity(numel);
    for _ in 0..numel {
        take(&mut u32buf, "value")?;
        data.push(f32::from_le_bytes(u32buf));
    }
    Tensor::new(shape, data)
}

pub fn write_tensor(path: impl AsRef<Path>, t: &Tensor<f32>) -> Result<()> {
    let path = path.as_ref();
    let mut f =
        std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| io_err(path, e))?);
    write_tensor_to(&mut f, t).map_err(|e| io_err(path, e))?;
    f.flush().map_err(|e| io_err(path, e))
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<Tensor<f32>> {
    let path = path.as_ref();
    let mut f = std::io::BufReader::new(std::fs::File::open(path).map_err(|e| io_err(path, e))?);
    let t = read_tensor_from(&mut f, 0)?;
    // trailing bytes indicate a corrupt or mislabeled file
    let mut extra = [0u8; 1];
    if f.read(&mut extra).map_err(|e| io_err(path, e))? != 0 {
        return Err(TensorError::Format {
            offset: 8 + 4 * t.rank() as u64 + 4 * t.len() as u64,
            msg: "trailing bytes after tensor payload".into(),
        });
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.ten");
        let t = Tensor::<f32>::from_fn(&[2, 3, 4], |i| (i as f32).sin());
        write_tensor(&p, &t).unwrap();
        let r = read_tensor(&p).unwrap();
        assert_eq!(t, r);
    }

    #[test]
    fn truncated_file_reports_offset() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.ten");
        let t = Tensor::<f32>::from_fn(&[4, 4], |i| i as f32);
        write_tensor(&p, &t).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        std::fs::write(&p, &bytes[..bytes.len() - 5]).unwrap();
        match read_tensor(&p) {
            Err(TensorError::Format { offset, .. }) => assert!(offset > 0),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn bad_magic_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.ten");
        std::fs::write(&p, b"NOPE\x01\x00\x00\x00\x01\x00\x00\x00\x00\x00\x80\x3f").unwrap();
        assert!(matches!(
            read_tensor(&p),
            Err(TensorError::Format { offset: 0, .. })
        ));
    }
}
