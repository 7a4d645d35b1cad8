//! Parameter checkpoints.
//!
//! Layout (little-endian): magic `LSPM`, version `u32`, then the model
//! header (`layers`, `in_dim`, `hidden`, `classes`, `h_ls`, `h_alpha` as
//! `u64`, similarity tag `u8`, dropout `f64`, weight-mode tag `u8`,
//! LocalSim-mode tag `u8`) and every tensor in canonical order as a
//! `(rows, cols)` `u64` prefix followed by row-major `f64` values.

use std::fs;
use std::path::Path;

use super::{LocalSimMode, ModelConfig, ModelParameters, WeightMode};
use crate::binio::{Reader, Writer};
use crate::error::{Error, Result};
use crate::localsim::SimilarityKind;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"LSPM";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn encode_checkpoint(cfg: &ModelConfig, params: &ModelParameters) -> Result<Vec<u8>> {
    params.check_shapes(cfg)?;
    let mut w = Writer::new();
    w.bytes(CHECKPOINT_MAGIC);
    w.u32(CHECKPOINT_VERSION);
    for v in [cfg.layers, cfg.in_dim, cfg.hidden, cfg.classes, cfg.h_ls, cfg.h_alpha] {
        w.u64(v as u64);
    }
    w.u8(cfg.sim_kind.tag());
    w.f64(cfg.dropout);
    w.u8(cfg.weight_mode.tag());
    w.u8(cfg.localsim_mode.tag());
    for t in params.tensors() {
        w.matrix(t);
    }
    Ok(w.finish())
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<(ModelConfig, ModelParameters)> {
    let mut r = Reader::new(bytes);
    let magic = r.take(4).map_err(|_| Error::format("file too short for checkpoint magic"))?;
    if magic != CHECKPOINT_MAGIC {
        return Err(Error::format(format!("bad checkpoint magic {magic:?}, expected `LSPM`")));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Version {
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let cfg = ModelConfig {
        layers: r.usize()?,
        in_dim: r.usize()?,
        hidden: r.usize()?,
        classes: r.usize()?,
        h_ls: r.usize()?,
        h_alpha: r.usize()?,
        sim_kind: SimilarityKind::from_tag(r.u8()?)?,
        dropout: r.f64()?,
        weight_mode: WeightMode::from_tag(r.u8()?)?,
        localsim_mode: LocalSimMode::from_tag(r.u8()?)?,
    };
    cfg.validate().map_err(|e| Error::format(format!("bad checkpoint header: {e}")))?;
    let mut params = ModelParameters::zeros(&cfg);
    let names = params.tensor_names();
    for (t, name) in params.tensors_mut().into_iter().zip(names) {
        let m = r.matrix()?;
        if m.shape() != t.shape() {
            return Err(Error::format(format!(
                "tensor {name} has shape {:?}, header implies {:?}",
                m.shape(),
                t.shape()
            )));
        }
        *t = m;
    }
    r.expect_end()?;
    Ok((cfg, params))
}

pub fn save_checkpoint(path: &Path, cfg: &ModelConfig, params: &ModelParameters) -> Result<()> {
    fs::write(path, encode_checkpoint(cfg, params)?).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<(ModelConfig, ModelParameters)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}
