//! On-disk propagation bundles.
//!
//! Layout (all little-endian): magic `LSPB`, format version `u32`, then
//! `n`, `d`, `K` as `u64`, `gamma` and `beta` as `f64`, the variant tag and
//! normalize flag as one byte each, the 32-byte feature digest, and finally
//! the `2K` row-major `f64` matrices, low layers first.

use std::fs;
use std::path::Path;

use crate::binio::{Reader, Writer};
use crate::dense::FeatureMatrix;
use crate::error::{Error, Result};
use crate::propagation::{feature_digest, hex_digest, PropagationConfig, PropagationStack, Variant};

pub const BUNDLE_MAGIC: &[u8; 4] = b"LSPB";
pub const BUNDLE_VERSION: u32 = 1;

pub fn encode_bundle(stack: &PropagationStack) -> Vec<u8> {
    let mut w = Writer::new();
    w.bytes(BUNDLE_MAGIC);
    w.u32(BUNDLE_VERSION);
    w.u64(stack.n() as u64);
    w.u64(stack.d() as u64);
    w.u64(stack.layers() as u64);
    w.f64(stack.config.gamma);
    w.f64(stack.config.beta);
    w.u8(stack.config.variant.tag());
    w.u8(u8::from(stack.config.normalize));
    w.bytes(&stack.feature_digest);
    for m in stack.low_layers.iter().chain(&stack.high_layers) {
        w.f64s(m.as_slice());
    }
    w.finish()
}

pub fn decode_bundle(bytes: &[u8]) -> Result<PropagationStack> {
    let mut r = Reader::new(bytes);
    let magic = r.take(4).map_err(|_| Error::format("file too short for bundle magic"))?;
    if magic != BUNDLE_MAGIC {
        return Err(Error::format(format!("bad bundle magic {magic:?}, expected `LSPB`")));
    }
    let version = r.u32()?;
    if version != BUNDLE_VERSION {
        return Err(Error::Version {
            found: version,
            expected: BUNDLE_VERSION,
        });
    }
    let n = r.usize()?;
    let d = r.usize()?;
    let layers = r.usize()?;
    let gamma = r.f64()?;
    let beta = r.f64()?;
    let variant = Variant::from_tag(r.u8()?)?;
    let normalize = match r.u8()? {
        0 => false,
        1 => true,
        b => return Err(Error::format(format!("bad normalize flag {b}"))),
    };
    let feature_digest = r.array::<32>()?;
    let config = PropagationConfig {
        layers,
        gamma,
        beta,
        variant,
        normalize,
    };
    config.validate()?;
    let mut low_layers = Vec::with_capacity(layers);
    let mut high_layers = Vec::with_capacity(layers);
    for _ in 0..layers {
        low_layers.push(r.raw_matrix(n, d)?);
    }
    for _ in 0..layers {
        high_layers.push(r.raw_matrix(n, d)?);
    }
    r.expect_end()?;
    Ok(PropagationStack {
        config,
        low_layers,
        high_layers,
        feature_digest,
    })
}

pub fn save_bundle(stack: &PropagationStack, path: &Path) -> Result<()> {
    fs::write(path, encode_bundle(stack)).map_err(|e| Error::io(path, e))
}

pub fn load_bundle(path: &Path) -> Result<PropagationStack> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_bundle(&bytes)
}

/// Loads a bundle and checks that it was built from `features`.
pub fn load_bundle_for(path: &Path, features: &FeatureMatrix) -> Result<PropagationStack> {
    let stack = load_bundle(path)?;
    let supplied = feature_digest(features);
    if supplied != stack.feature_digest {
        return Err(Error::DigestMismatch {
            stored: hex_digest(&stack.feature_digest),
            supplied: hex_digest(&supplied),
        });
    }
    Ok(stack)
}
