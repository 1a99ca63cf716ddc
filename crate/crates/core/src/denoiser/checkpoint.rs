//! Versioned binary parameter files.
//!
//! Layout (little endian): magic `GPDCKPT\0`, `u32` version, `u64` length of
//! a JSON metadata block followed by the block, `u64` tensor count, one
//! `(u64 rows, u64 cols)` pair per tensor, then every tensor's entries as
//! row-major `f64`.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde_json::{json, Value};

use super::{Denoiser, DenoiserConfig, Linear, Mlp};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"GPDCKPT\0";
const VERSION: u32 = 1;

pub fn save_checkpoint(path: &Path, model: &Denoiser, metadata: &Value) -> Result<()> {
    let header = json!({ "denoiser": model.config, "metadata": metadata });
    let header = serde_json::to_vec(&header).map_err(|e| Error::format("checkpoint", e.to_string()))?;

    let mut tensors: Vec<(usize, usize, Vec<f64>)> = Vec::new();
    for layer in &model.net.layers {
        let w = &layer.w;
        let row_major: Vec<f64> = (0..w.nrows()).flat_map(|r| (0..w.ncols()).map(move |c| w[(r, c)])).collect();
        tensors.push((w.nrows(), w.ncols(), row_major));
        tensors.push((layer.b.len(), 1, layer.b.as_slice().to_vec()));
    }

    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(header.len() as u64).to_le_bytes());
    buf.extend_from_slice(&header);
    buf.extend_from_slice(&(tensors.len() as u64).to_le_bytes());
    for (rows, cols, _) in &tensors {
        buf.extend_from_slice(&(*rows as u64).to_le_bytes());
        buf.extend_from_slice(&(*cols as u64).to_le_bytes());
    }
    for (_, _, values) in &tensors {
        for v in values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<(Denoiser, Value)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut pos = 0usize;
    let mut take = |n: usize| -> Result<&[u8]> {
        let s = bytes
            .get(pos..pos + n)
            .ok_or_else(|| Error::format("checkpoint", "truncated file"))?;
        pos += n;
        Ok(s)
    };
    if take(8)? != MAGIC {
        return Err(Error::format("checkpoint", "bad magic"));
    }
    let version = u32::from_le_bytes(take(4)?.try_into().unwrap());
    if version != VERSION {
        return Err(Error::format("checkpoint", format!("unsupported version {version}")));
    }
    let header_len = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
    let mut header: Value =
        serde_json::from_slice(take(header_len)?).map_err(|e| Error::format("checkpoint", e.to_string()))?;
    let config: DenoiserConfig = serde_json::from_value(header["denoiser"].take())
        .map_err(|e| Error::format("checkpoint", e.to_string()))?;
    let metadata = header["metadata"].take();

    let count = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
    if !count.is_multiple_of(2) {
        return Err(Error::format("checkpoint", "odd tensor count"));
    }
    let mut shapes = Vec::with_capacity(count);
    for _ in 0..count {
        let r = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
        let c = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
        shapes.push((r, c));
    }
    let mut layers = Vec::with_capacity(count / 2);
    for pair in shapes.chunks(2) {
        let (wr, wc) = pair[0];
        let (br, _) = pair[1];
        let w_vals: Vec<f64> = take(wr * wc * 8)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let b_vals: Vec<f64> = take(br * 8)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        layers.push(Linear {
            w: DMatrix::from_row_slice(wr, wc, &w_vals),
            b: DVector::from_vec(b_vals),
        });
    }
    let net = Mlp { layers };
    if net.input_dim() != config.input_dim() || net.output_dim() != config.data_dim {
        return Err(Error::format("checkpoint", "tensor shapes disagree with the stored configuration"));
    }
    Ok((Denoiser { config, net }, metadata))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_preserves_parameters_and_metadata() {
        let mut cfg = DenoiserConfig::new(6, 3);
        cfg.hidden_dim = 5;
        cfg.hidden_layers = 3;
        let model = Denoiser::new(cfg, &mut ChaCha8Rng::seed_from_u64(8));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save_checkpoint(&path, &model, &json!({"variant": "gp_keystates"})).unwrap();
        let (loaded, meta) = load_checkpoint(&path).unwrap();
        assert_eq!(loaded, model);
        assert_eq!(meta["variant"], "gp_keystates");
    }

    #[test]
    fn corrupt_files_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.ckpt");
        fs::write(&path, b"GPDCKPT\0\x02\0\0\0").unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::Format { .. })));
        assert!(matches!(load_checkpoint(&dir.path().join("missing")), Err(Error::Io { .. })));
    }
}
