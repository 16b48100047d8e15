//! Binary network checkpoints.
//!
//! Layout (little-endian): magic `BVRCKPT1`, version u16, atom count u32,
//! V_min f64, V_max f64, layer count u32, then per layer rows u32, cols u32,
//! kind u8 followed by weights, biases and (noisy layers) σ-weights and
//! σ-biases as f32. A CRC32 of everything before it closes the file.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};

use super::distribution::Support;
use super::network::{Layer, LayerKind, NetworkParams, Scalar};
use crate::error::{BvrError, Result};

pub const MAGIC: &[u8; 8] = b"BVRCKPT1";
pub const VERSION: u16 = 1;

pub fn encode_checkpoint<F: Scalar>(params: &NetworkParams<F>) -> Vec<u8> {
    let mut out = Vec::with_capacity(64 + params.param_count() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(params.atoms() as u32).to_le_bytes());
    out.extend_from_slice(&params.support.v_min().to_le_bytes());
    out.extend_from_slice(&params.support.v_max().to_le_bytes());
    out.extend_from_slice(&(params.layer_count() as u32).to_le_bytes());
    for layer in params.layers() {
        out.extend_from_slice(&(layer.rows() as u32).to_le_bytes());
        out.extend_from_slice(&(layer.cols() as u32).to_le_bytes());
        out.push(layer.kind as u8);
        for tensor in layer.tensors() {
            for v in tensor {
                out.extend_from_slice(&(v.f64() as f32).to_le_bytes());
            }
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| {
            BvrError::Checkpoint(format!("truncated at byte {} (wanted {n} more)", self.pos))
        })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let bytes = self.take(n.checked_mul(4).ok_or_else(|| BvrError::Checkpoint("size overflow".into()))?)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect())
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<NetworkParams<f32>> {
    if bytes.len() < MAGIC.len() + 4 {
        return Err(BvrError::Checkpoint("file too short".into()));
    }
    if &bytes[..8] != MAGIC {
        return Err(BvrError::Checkpoint("bad magic".into()));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(BvrError::CrcMismatch { stored, computed });
    }

    let mut r = Reader { buf: body, pos: 8 };
    let version = r.u16()?;
    if version != VERSION {
        return Err(BvrError::Checkpoint(format!("unsupported version {version}")));
    }
    let atoms = r.u32()? as usize;
    let v_min = r.f64()?;
    let v_max = r.f64()?;
    if atoms == 0 || !(v_min < v_max) {
        return Err(BvrError::Checkpoint(format!(
            "invalid support: {atoms} atoms on [{v_min}, {v_max}]"
        )));
    }
    let count = r.u32()? as usize;
    let mut layers = Vec::with_capacity(count.min(64));
    for i in 0..count {
        let rows = r.u32()? as usize;
        let cols = r.u32()? as usize;
        let kind = LayerKind::from_u8(r.u8()?)
            .ok_or_else(|| BvrError::Checkpoint(format!("layer {i}: unknown kind")))?;
        let n = rows
            .checked_mul(cols)
            .ok_or_else(|| BvrError::Checkpoint(format!("layer {i}: size overflow")))?;
        let weight = Array2::from_shape_vec((rows, cols), r.f32s(n)?).expect("sized");
        let bias = Array1::from_vec(r.f32s(rows)?);
        let layer = match kind {
            LayerKind::Dense => Layer::dense(weight, bias),
            LayerKind::Noisy => {
                let ws = Array2::from_shape_vec((rows, cols), r.f32s(n)?).expect("sized");
                let bs = Array1::from_vec(r.f32s(rows)?);
                Layer::noisy(weight, bias, ws, bs)
            }
        };
        layers.push(layer);
    }
    if r.pos != body.len() {
        return Err(BvrError::Checkpoint(format!(
            "{} trailing bytes after last layer",
            body.len() - r.pos
        )));
    }
    let params = NetworkParams::from_layers(layers, Support::new(atoms, v_min, v_max))
        .map_err(|e| BvrError::Checkpoint(e.to_string()))?;
    if !params.is_finite() {
        return Err(BvrError::Checkpoint("non-finite parameters".into()));
    }
    Ok(params)
}

pub fn save_checkpoint<F: Scalar>(params: &NetworkParams<F>, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| BvrError::path_io(parent, e))?;
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, encode_checkpoint(params)).map_err(|e| BvrError::path_io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| BvrError::path_io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<NetworkParams<f32>> {
    let bytes = fs::read(path).map_err(|e| BvrError::path_io(path, e))?;
    decode_checkpoint(&bytes)
}
