use std::io::{Read, Write};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{parameter_layout, EncoderModel, ModelConfig, Params};
use crate::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"BEAMENC1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    model: ModelConfig,
    input_scale: f64,
    target_scale: f64,
    horizon_ms: u64,
    config_hash: String,
}

/// A trained model with the horizon it predicts and the hash of the
/// experiment configuration it was trained on.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: EncoderModel,
    pub horizon_ms: u64,
    pub config_hash: String,
}

pub fn write_checkpoint<W: Write>(mut w: W, ckpt: &Checkpoint) -> Result<()> {
    let header = Header {
        model: ckpt.model.config.clone(),
        input_scale: ckpt.model.input_scale,
        target_scale: ckpt.model.target_scale,
        horizon_ms: ckpt.horizon_ms,
        config_hash: ckpt.config_hash.clone(),
    };
    let json = serde_json::to_vec(&header)?;
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&(json.len() as u32).to_le_bytes())?;
    w.write_all(&json)?;
    for t in &ckpt.model.params.tensors {
        w.write_all(&2u32.to_le_bytes())?;
        for d in t.shape() {
            w.write_all(&(*d as u32).to_le_bytes())?;
        }
        for v in t.iter() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

struct Reader<R> {
    inner: R,
    offset: u64,
}

impl<R: Read> Reader<R> {
    fn bytes(&mut self, n: usize) -> Result<Vec<u8>> {
        let mut buf = vec![0u8; n];
        self.inner.read_exact(&mut buf).map_err(|e| Error::Format {
            offset: self.offset,
            reason: format!("truncated: {e}"),
        })?;
        self.offset += n as u64;
        Ok(buf)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes(4)?.try_into().expect("4 bytes")))
    }

    fn fail<T>(&self, reason: impl Into<String>) -> Result<T> {
        Err(Error::Format { offset: self.offset, reason: reason.into() })
    }
}

pub fn read_checkpoint<R: Read>(r: R) -> Result<Checkpoint> {
    let mut r = Reader { inner: r, offset: 0 };
    if r.bytes(8)? != CHECKPOINT_MAGIC {
        return r.fail("bad checkpoint magic");
    }
    let len = r.u32()? as usize;
    let header: Header = serde_json::from_slice(&r.bytes(len)?)?;
    header.model.validate()?;
    let mut tensors = Vec::new();
    for (name, (rows, cols)) in parameter_layout(&header.model) {
        let ndim = r.u32()?;
        if ndim != 2 {
            return r.fail(format!("{name}: expected 2 dimensions, found {ndim}"));
        }
        let shape = (r.u32()? as usize, r.u32()? as usize);
        if shape != (rows, cols) {
            return r.fail(format!("{name}: expected shape {rows}x{cols}, found {}x{}", shape.0, shape.1));
        }
        let raw = r.bytes(rows * cols * 8)?;
        let data: Vec<f64> = raw.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes"))).collect();
        if data.iter().any(|v| !v.is_finite()) {
            return r.fail(format!("{name}: non-finite parameter"));
        }
        tensors.push(Array2::from_shape_vec((rows, cols), data).expect("shape checked"));
    }
    let mut trailing = [0u8; 1];
    if r.inner.read(&mut trailing)? != 0 {
        return r.fail("trailing bytes after last tensor");
    }
    Ok(Checkpoint {
        model: EncoderModel {
            config: header.model,
            params: Params { tensors },
            input_scale: header.input_scale,
            target_scale: header.target_scale,
        },
        horizon_ms: header.horizon_ms,
        config_hash: header.config_hash,
    })
}
