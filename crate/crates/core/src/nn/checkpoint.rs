//! Versioned model checkpoint files.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic "SGNM" | version u16 | kind u8 | descriptor_len u32 | descriptor JSON
//! | param_count u64 | params f32[param_count]
//! ```
//!
//! The JSON descriptor embeds the architecture (channel widths, layer
//! sizes), so a loader can rebuild the exact network before installing the
//! parameter blob.

use serde::{de::DeserializeOwned, Serialize};
use std::io::{Read, Write};
use std::path::Path;
use thiserror::Error;

pub const CHECKPOINT_VERSION: u16 = 1;
const MAGIC: &[u8; 4] = b"SGNM";

/// Which stage a checkpoint belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum ModelKind {
    Filter = 1,
    Cleaner = 2,
    Encoder = 3,
}

impl ModelKind {
    fn from_u8(v: u8) -> Option<Self> {
        match v {
            1 => Some(Self::Filter),
            2 => Some(Self::Cleaner),
            3 => Some(Self::Encoder),
            _ => None,
        }
    }
}

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a model checkpoint (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    Version(u16),
    #[error("checkpoint is for a different model kind")]
    WrongKind,
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
}

/// Write a checkpoint: architecture descriptor plus parameter tensors in
/// the model's canonical order.
pub fn save_checkpoint<D: Serialize>(
    path: &Path,
    kind: ModelKind,
    descriptor: &D,
    params: &[&[f32]],
) -> Result<(), CheckpointError> {
    let json = serde_json::to_vec(descriptor)
        .map_err(|e| CheckpointError::Corrupt(format!("descriptor serialize: {e}")))?;
    let total: usize = params.iter().map(|p| p.len()).sum();
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    out.write_all(MAGIC)?;
    out.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    out.write_all(&[kind as u8])?;
    out.write_all(&(json.len() as u32).to_le_bytes())?;
    out.write_all(&json)?;
    out.write_all(&(total as u64).to_le_bytes())?;
    for tensor in params {
        for v in *tensor {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Read a checkpoint of the expected kind, returning the parsed descriptor
/// and the flat parameter blob.
pub fn load_checkpoint<D: DeserializeOwned>(
    path: &Path,
    kind: ModelKind,
) -> Result<(D, Vec<f32>), CheckpointError> {
    let mut file = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 4];
    file.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let mut u16b = [0u8; 2];
    file.read_exact(&mut u16b)?;
    let version = u16::from_le_bytes(u16b);
    if version != CHECKPOINT_VERSION {
        return Err(CheckpointError::Version(version));
    }
    let mut kind_b = [0u8; 1];
    file.read_exact(&mut kind_b)?;
    match ModelKind::from_u8(kind_b[0]) {
        Some(k) if k == kind => {}
        _ => return Err(CheckpointError::WrongKind),
    }
    let mut u32b = [0u8; 4];
    file.read_exact(&mut u32b)?;
    let desc_len = u32::from_le_bytes(u32b) as usize;
    let mut desc = vec![0u8; desc_len];
    file.read_exact(&mut desc)
        .map_err(|_| CheckpointError::Corrupt("truncated descriptor".into()))?;
    let descriptor: D = serde_json::from_slice(&desc)
        .map_err(|e| CheckpointError::Corrupt(format!("descriptor parse: {e}")))?;
    let mut u64b = [0u8; 8];
    file.read_exact(&mut u64b)?;
    let count = u64::from_le_bytes(u64b) as usize;
    let mut blob = vec![0f32; count];
    let mut f32b = [0u8; 4];
    for v in blob.iter_mut() {
        file.read_exact(&mut f32b)
            .map_err(|_| CheckpointError::Corrupt("truncated parameter blob".into()))?;
        *v = f32::from_le_bytes(f32b);
    }
    Ok((descriptor, blob))
}

/// Install a flat blob into parameter tensors in canonical order.
pub fn install_params(
    blob: &[f32],
    tensors: Vec<&mut [f32]>,
) -> Result<(), CheckpointError> {
    let expected: usize = tensors.iter().map(|t| t.len()).sum();
    if blob.len() != expected {
        return Err(CheckpointError::Corrupt(format!(
            "parameter count mismatch: blob {} vs model {expected}",
            blob.len()
        )));
    }
    let mut offset = 0;
    for tensor in tensors {
        tensor.copy_from_slice(&blob[offset..offset + tensor.len()]);
        offset += tensor.len();
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;

    #[derive(Debug, PartialEq, Serialize, Deserialize)]
    struct Desc {
        channels: Vec<usize>,
    }

    #[test]
    fn checkpoint_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.sgnm");
        let desc = Desc {
            channels: vec![16, 32],
        };
        let a = vec![1.0f32, 2.0, 3.0];
        let b = vec![-0.5f32];
        save_checkpoint(&path, ModelKind::Filter, &desc, &[&a, &b]).unwrap();
        let (back, blob): (Desc, Vec<f32>) = load_checkpoint(&path, ModelKind::Filter).unwrap();
        assert_eq!(back, desc);
        assert_eq!(blob, vec![1.0, 2.0, 3.0, -0.5]);
        let mut a2 = vec![0.0f32; 3];
        let mut b2 = vec![0.0f32; 1];
        install_params(&blob, vec![&mut a2, &mut b2]).unwrap();
        assert_eq!(a2, a);
        assert_eq!(b2, b);
    }

    #[test]
    fn wrong_kind_and_magic_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.sgnm");
        let desc = Desc { channels: vec![] };
        save_checkpoint(&path, ModelKind::Filter, &desc, &[]).unwrap();
        assert!(matches!(
            load_checkpoint::<Desc>(&path, ModelKind::Cleaner),
            Err(CheckpointError::WrongKind)
        ));
        std::fs::write(&path, b"XXXXjunk").unwrap();
        assert!(matches!(
            load_checkpoint::<Desc>(&path, ModelKind::Filter),
            Err(CheckpointError::BadMagic)
        ));
    }
}
