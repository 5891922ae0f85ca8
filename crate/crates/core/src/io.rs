//! Binary file formats (all little-endian) and CSV emission.
//!
//! * Checkpoints: magic `SDMK`, version u32, tensor count u32, then per
//!   tensor: name length u16 + UTF-8 name, rank u8, dims as u64, raw f32
//!   payload. Round-trips are bit-exact.
//! * Motion files: magic `SDMO`, frame count u32, dim u32, row-major f32.
//! * Audio files: magic `SDAU`, same layout as motion.
//! * Style codes: magic `SDSC`, dim u32, f32 payload.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::params::ParameterStore;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"SDMK";
pub const CHECKPOINT_VERSION: u32 = 1;
pub const MOTION_MAGIC: &[u8; 4] = b"SDMO";
pub const AUDIO_MAGIC: &[u8; 4] = b"SDAU";
pub const STYLE_CODE_MAGIC: &[u8; 4] = b"SDSC";

fn write_u16(w: &mut impl Write, v: u16) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn write_u32(w: &mut impl Write, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn write_u64(w: &mut impl Write, v: u64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn write_f32(w: &mut impl Write, v: f32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn read_exact_array<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

fn read_u16(r: &mut impl Read) -> Result<u16> {
    Ok(u16::from_le_bytes(read_exact_array::<2>(r)?))
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    Ok(u32::from_le_bytes(read_exact_array::<4>(r)?))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    Ok(u64::from_le_bytes(read_exact_array::<8>(r)?))
}

fn read_f32(r: &mut impl Read) -> Result<f32> {
    Ok(f32::from_le_bytes(read_exact_array::<4>(r)?))
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

/// Save every entry of the store (buffers included), sorted by name.
/// Values are narrowed to f32 on disk.
pub fn save_checkpoint<S: Scalar>(store: &ParameterStore<S>, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(CHECKPOINT_MAGIC)?;
    write_u32(&mut w, CHECKPOINT_VERSION)?;
    write_u32(&mut w, store.len() as u32)?;
    for (name, tensor) in store.iter() {
        let bytes = name.as_bytes();
        if bytes.len() > u16::MAX as usize {
            return Err(Error::CheckpointFormat(format!("name too long: {name}")));
        }
        write_u16(&mut w, bytes.len() as u16)?;
        w.write_all(bytes)?;
        let shape = tensor.shape();
        if shape.len() > u8::MAX as usize {
            return Err(Error::CheckpointFormat(format!("rank too large for {name}")));
        }
        w.write_all(&[shape.len() as u8])?;
        for &d in shape {
            write_u64(&mut w, d as u64)?;
        }
        for v in tensor.data() {
            write_f32(&mut w, v.to_f() as f32)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Read the raw named tensors from a checkpoint.
pub fn read_checkpoint(path: &Path) -> Result<Vec<(String, Tensor<f32>)>> {
    let mut r = BufReader::new(File::open(path)?);
    let magic = read_exact_array::<4>(&mut r)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::CheckpointFormat(format!(
            "bad magic {:?} in {}",
            magic,
            path.display()
        )));
    }
    let version = read_u32(&mut r)?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::CheckpointFormat(format!("unsupported version {version}")));
    }
    let count = read_u32(&mut r)? as usize;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = read_u16(&mut r)? as usize;
        let mut name_buf = vec![0u8; name_len];
        r.read_exact(&mut name_buf)?;
        let name = String::from_utf8(name_buf)
            .map_err(|e| Error::CheckpointFormat(format!("non-UTF8 name: {e}")))?;
        let rank = read_exact_array::<1>(&mut r)?[0] as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(read_u64(&mut r)? as usize);
        }
        let n: usize = shape.iter().product();
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            data.push(read_f32(&mut r)?);
        }
        out.push((name, Tensor::from_vec(shape, data)));
    }
    Ok(out)
}

/// Load checkpoint values into an already-initialized store. The name sets
/// must match exactly; shapes are checked entry by entry.
pub fn load_checkpoint_into<S: Scalar>(store: &mut ParameterStore<S>, path: &Path) -> Result<()> {
    let entries = read_checkpoint(path)?;
    if entries.len() != store.len() {
        return Err(Error::CheckpointFormat(format!(
            "checkpoint has {} tensors, model expects {}",
            entries.len(),
            store.len()
        )));
    }
    for (name, tensor) in entries {
        let current = store.get(&name).map_err(|_| {
            Error::CheckpointFormat(format!("checkpoint tensor '{name}' unknown to the model"))
        })?;
        if current.shape() != tensor.shape() {
            return Err(Error::CheckpointFormat(format!(
                "shape mismatch for '{name}': {:?} vs {:?}",
                current.shape(),
                tensor.shape()
            )));
        }
        store.set(&name, tensor.cast::<S>())?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Matrix files (motion / audio) and style codes
// ---------------------------------------------------------------------------

pub fn write_matrix<S: Scalar>(magic: &[u8; 4], matrix: &Tensor<S>, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(magic)?;
    write_u32(&mut w, matrix.rows() as u32)?;
    write_u32(&mut w, matrix.cols() as u32)?;
    for v in matrix.data() {
        write_f32(&mut w, v.to_f() as f32)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_matrix(magic: &[u8; 4], path: &Path) -> Result<Tensor<f32>> {
    let mut r = BufReader::new(File::open(path)?);
    let found = read_exact_array::<4>(&mut r)?;
    if &found != magic {
        return Err(Error::CheckpointFormat(format!(
            "bad magic {:?} (expected {:?}) in {}",
            found,
            magic,
            path.display()
        )));
    }
    let rows = read_u32(&mut r)? as usize;
    let cols = read_u32(&mut r)? as usize;
    let mut data = Vec::with_capacity(rows * cols);
    for _ in 0..rows * cols {
        data.push(read_f32(&mut r)?);
    }
    Ok(Tensor::matrix(rows, cols, data))
}

pub fn write_motion<S: Scalar>(motion: &Tensor<S>, path: &Path) -> Result<()> {
    write_matrix(MOTION_MAGIC, motion, path)
}

pub fn read_motion(path: &Path) -> Result<Tensor<f32>> {
    read_matrix(MOTION_MAGIC, path)
}

pub fn write_audio<S: Scalar>(audio: &Tensor<S>, path: &Path) -> Result<()> {
    write_matrix(AUDIO_MAGIC, audio, path)
}

pub fn read_audio(path: &Path) -> Result<Tensor<f32>> {
    read_matrix(AUDIO_MAGIC, path)
}

pub fn write_style_code<S: Scalar>(code: &Tensor<S>, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(STYLE_CODE_MAGIC)?;
    write_u32(&mut w, code.len() as u32)?;
    for v in code.data() {
        write_f32(&mut w, v.to_f() as f32)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_style_code(path: &Path) -> Result<Tensor<f32>> {
    let mut r = BufReader::new(File::open(path)?);
    let found = read_exact_array::<4>(&mut r)?;
    if &found != STYLE_CODE_MAGIC {
        return Err(Error::CheckpointFormat(format!(
            "bad style code magic in {}",
            path.display()
        )));
    }
    let dim = read_u32(&mut r)? as usize;
    let mut data = Vec::with_capacity(dim);
    for _ in 0..dim {
        data.push(read_f32(&mut r)?);
    }
    Ok(Tensor::row(data))
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

/// Write rows of already-formatted cells with a header. Numbers must be
/// formatted with Rust's default (locale-independent) formatting.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{}", header.join(","))?;
    for row in rows {
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(())
}
