//! Parameter checkpoints.
//!
//! Layout: the magic `LKCKPT1\n`, one line of compact JSON (the manifest)
//! terminated by `\n`, then the raw little-endian payloads back to back.
//! Manifest offsets are relative to the first payload byte.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ParamStore, Real, Tensor};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"LKCKPT1\n";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub dtype: String,
    pub shape: Vec<usize>,
    pub offset: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    /// Free-form model metadata (architecture config, training provenance).
    pub meta: serde_json::Value,
    pub tensors: Vec<TensorEntry>,
}

pub fn encode<T: Real>(store: &ParamStore<T>, meta: &serde_json::Value) -> Result<Vec<u8>> {
    let mut tensors = Vec::with_capacity(store.len());
    let mut payload = Vec::new();
    for id in store.ids() {
        let value = store.value(id);
        tensors.push(TensorEntry {
            name: store.name(id).to_string(),
            dtype: T::DTYPE.to_string(),
            shape: value.shape().to_vec(),
            offset: payload.len() as u64,
        });
        for &v in value.data() {
            v.write_le(&mut payload);
        }
    }
    let manifest = Manifest {
        meta: meta.clone(),
        tensors,
    };
    let mut out = MAGIC.to_vec();
    serde_json::to_writer(&mut out, &manifest)?;
    out.push(b'\n');
    out.extend_from_slice(&payload);
    Ok(out)
}

/// Parse a checkpoint into its manifest and tensors (in manifest order).
pub fn decode<T: Real>(bytes: &[u8]) -> Result<(Manifest, Vec<(String, Tensor<T>)>)> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(Error::Format("missing LKCKPT1 magic".into()));
    }
    let rest = &bytes[MAGIC.len()..];
    let nl = rest
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Format("unterminated checkpoint manifest".into()))?;
    let manifest: Manifest = serde_json::from_slice(&rest[..nl])?;
    let payload = &rest[nl + 1..];
    let mut tensors = Vec::with_capacity(manifest.tensors.len());
    for e in &manifest.tensors {
        if e.dtype != T::DTYPE {
            return Err(Error::Format(format!(
                "tensor {} has dtype {}, expected {}",
                e.name,
                e.dtype,
                T::DTYPE
            )));
        }
        let n: usize = e.shape.iter().product();
        let start = e.offset as usize;
        let end = start + n * T::BYTES;
        if end > payload.len() {
            return Err(Error::Format(format!(
                "tensor {} runs past end of file",
                e.name
            )));
        }
        let data = payload[start..end]
            .chunks_exact(T::BYTES)
            .map(T::read_le)
            .collect();
        tensors.push((e.name.clone(), Tensor::new(e.shape.clone(), data)?));
    }
    Ok((manifest, tensors))
}

pub fn save<T: Real>(path: &Path, store: &ParamStore<T>, meta: &serde_json::Value) -> Result<()> {
    let bytes = encode(store, meta)?;
    let mut f = std::fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

/// Load values into an already-constructed store, matching tensors by name.
pub fn load_into<T: Real>(bytes: &[u8], store: &mut ParamStore<T>) -> Result<Manifest> {
    let (manifest, tensors) = decode::<T>(bytes)?;
    if tensors.len() != store.len() {
        return Err(Error::Format(format!(
            "checkpoint holds {} tensors, model expects {}",
            tensors.len(),
            store.len()
        )));
    }
    for (name, t) in tensors {
        let id = store
            .find(&name)
            .ok_or_else(|| Error::Format(format!("unexpected tensor {name}")))?;
        store.set(id, t)?;
    }
    Ok(manifest)
}

pub fn read_manifest(bytes: &[u8]) -> Result<Manifest> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(Error::Format("missing LKCKPT1 magic".into()));
    }
    let rest = &bytes[MAGIC.len()..];
    let nl = rest
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Format("unterminated checkpoint manifest".into()))?;
    Ok(serde_json::from_slice(&rest[..nl])?)
}
