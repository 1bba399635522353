//! Model checkpoints.
//!
//! ```text
//! magic        8 bytes  "MCTRCKPT"
//! header_len   u64 LE
//! header       JSON (CheckpointHeader)
//! payload      f64 LE values, parameters back to back in header order
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Architecture, FieldLayout, ModelConfig, ModelInstance};
use crate::autodiff::{L2Group, Parameter, Tensor};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"MCTRCKPT";
const FORMAT: &str = "mutualctr-checkpoint";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub id: String,
    pub shape: Vec<usize>,
    /// Offset into the payload, in values.
    pub offset: usize,
    pub l2_group: L2Group,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format: String,
    pub version: u32,
    pub architecture: Architecture,
    pub config: ModelConfig,
    pub layout: FieldLayout,
    pub schema_hash: String,
    pub parameters: Vec<ParamEntry>,
}

fn encode(model: &ModelInstance) -> Result<Vec<u8>> {
    let mut offset = 0;
    let parameters = model
        .params()
        .iter()
        .map(|p| {
            let entry = ParamEntry {
                id: p.id.clone(),
                shape: p.tensor.shape().to_vec(),
                offset,
                l2_group: p.l2_group,
            };
            offset += p.tensor.len();
            entry
        })
        .collect();
    let header = CheckpointHeader {
        format: FORMAT.into(),
        version: VERSION,
        architecture: model.architecture,
        config: model.config.clone(),
        layout: model.layout.clone(),
        schema_hash: model.layout.schema_hash.clone(),
        parameters,
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(16 + json.len() + offset * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for p in model.params() {
        for v in p.tensor.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn save_checkpoint(model: &ModelInstance, path: &Path) -> Result<()> {
    fs::write(path, encode(model)?)?;
    Ok(())
}

fn corrupt(path: &Path, detail: impl std::fmt::Display) -> Error {
    Error::Checkpoint(format!("{}: {detail}", path.display()))
}

/// Loads a checkpoint; with `expected_schema` set, a different schema hash is
/// refused before any weights are read.
pub fn load_checkpoint(path: &Path, expected_schema: Option<&str>) -> Result<ModelInstance> {
    let bytes = fs::read(path)?;
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(corrupt(path, "not a checkpoint file"));
    }
    let header_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let body = &bytes[16..];
    if body.len() < header_len {
        return Err(corrupt(path, "truncated header"));
    }
    let header: CheckpointHeader =
        serde_json::from_slice(&body[..header_len]).map_err(|e| corrupt(path, format!("bad header: {e}")))?;
    if header.format != FORMAT || header.version != VERSION {
        return Err(corrupt(
            path,
            format!("unsupported format {} version {}", header.format, header.version),
        ));
    }
    if let Some(expected) = expected_schema {
        if expected != header.schema_hash {
            return Err(Error::SchemaMismatch {
                expected: expected.into(),
                found: header.schema_hash,
            });
        }
    }
    let payload = &body[header_len..];
    let total: usize = header.parameters.iter().map(|p| p.shape.iter().product::<usize>()).sum();
    if payload.len() != total * 8 {
        return Err(corrupt(
            path,
            format!("payload holds {} bytes, header describes {}", payload.len(), total * 8),
        ));
    }

    let mut model = ModelInstance::new(header.architecture, &header.config, &header.layout, 0)?;
    if model.params().len() != header.parameters.len() {
        return Err(corrupt(path, "parameter list does not match the architecture"));
    }
    let mut params = Vec::with_capacity(header.parameters.len());
    for (fresh, entry) in model.params().iter().zip(&header.parameters) {
        if fresh.id != entry.id || fresh.tensor.shape() != entry.shape.as_slice() {
            return Err(corrupt(
                path,
                format!("parameter {} {:?} where {} {:?} was expected", entry.id, entry.shape, fresh.id, fresh.tensor.shape()),
            ));
        }
        let n = fresh.tensor.len();
        let data = payload[entry.offset * 8..(entry.offset + n) * 8]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let tensor = Tensor::new(entry.shape.clone(), data).map_err(|e| corrupt(path, format!("{}: {e}", entry.id)))?;
        params.push(Parameter::new(entry.id.clone(), tensor, entry.l2_group));
    }
    model.set_params(params);
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(arch: Architecture) -> ModelInstance {
        let layout = FieldLayout {
            field_names: vec!["a".into(), "b".into(), "c".into()],
            vocab_sizes: vec![4, 6],
            num_numeric: 1,
            schema_hash: "abc123".into(),
        };
        let cfg = ModelConfig {
            embedding_dim: 3,
            tower: vec![5],
            ..ModelConfig::default()
        };
        ModelInstance::new(arch, &cfg, &layout, 9).unwrap()
    }

    #[test]
    fn round_trip_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        for arch in Architecture::ALL {
            let m = model(arch);
            let a = dir.path().join("a.ckpt");
            let b = dir.path().join("b.ckpt");
            save_checkpoint(&m, &a).unwrap();
            let loaded = load_checkpoint(&a, Some("abc123")).unwrap();
            assert_eq!(loaded, m);
            save_checkpoint(&loaded, &b).unwrap();
            assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
        }
    }

    #[test]
    fn schema_mismatch_and_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.ckpt");
        save_checkpoint(&model(Architecture::Dcn), &p).unwrap();
        match load_checkpoint(&p, Some("other")) {
            Err(Error::SchemaMismatch { expected, found }) => {
                assert_eq!(expected, "other");
                assert_eq!(found, "abc123");
            }
            other => panic!("expected schema mismatch, got {other:?}"),
        }
        let bytes = fs::read(&p).unwrap();
        fs::write(&p, &bytes[..bytes.len() - 5]).unwrap();
        assert!(matches!(load_checkpoint(&p, None), Err(Error::Checkpoint(_))));
        fs::write(&p, b"junk").unwrap();
        assert!(matches!(load_checkpoint(&p, None), Err(Error::Checkpoint(_))));
    }
}
