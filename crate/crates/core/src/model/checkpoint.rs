//! Model checkpoint files.
//!
//! Layout, all little-endian:
//!
//! ```text
//! "CSIM" | version u32
//! config_len u32 | model config as key=value lines
//! meta_len u32   | provenance as key=value lines (config hash, seeds, ...)
//! tensor_count u32
//! per tensor, in parameter-store order:
//!   name_len u32 | name utf-8 | ndim u32 | dims u64×ndim | values f64×numel
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use super::config::ModelConfig;
use super::net::CsiMae;
use crate::binio::{put_string, write_file, Reader};
use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"CSIM";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub meta: BTreeMap<String, String>,
    pub tensors: Vec<(String, Tensor)>,
}

impl Checkpoint {
    /// Snapshot of every parameter in the model's store, task heads included.
    pub fn from_model(model: &CsiMae, meta: BTreeMap<String, String>) -> Self {
        Checkpoint {
            config: model.config().clone(),
            meta,
            tensors: model
                .store()
                .iter()
                .map(|(_, p)| (p.name.clone(), p.value.clone()))
                .collect(),
        }
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    /// Rebuilds the backbone. Tensors for parameters the backbone does not
    /// define (task heads) are left for the caller.
    pub fn to_model(&self) -> Result<CsiMae> {
        let mut model = CsiMae::zeroed(self.config.clone())?;
        for id in model.model_param_ids() {
            let name = model.store().get(id).name.clone();
            let t = self
                .tensor(&name)
                .ok_or_else(|| Error::contract(format!("checkpoint lacks parameter {name:?}")))?;
            model.store_mut().assign(id, t)?;
        }
        Ok(model)
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        put_string(&mut out, &self.config.to_text());
        let meta: String = self.meta.iter().map(|(k, v)| format!("{k}={v}\n")).collect();
        put_string(&mut out, &meta);
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, t) in &self.tensors {
            put_string(&mut out, name);
            out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
            for &d in t.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn decode(path: &Path, bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(path, bytes);
        r.header(CHECKPOINT_MAGIC, CHECKPOINT_VERSION)?;
        let config = ModelConfig::from_text(&r.string("model config")?)?;
        let mut meta = BTreeMap::new();
        for line in r.string("provenance")?.lines() {
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                path: path.to_path_buf(),
                location: "provenance".into(),
                message: format!("line {line:?} has no '='"),
            })?;
            meta.insert(k.to_string(), v.to_string());
        }
        let count = r.u32("tensor count")? as usize;
        let mut tensors = Vec::with_capacity(count);
        for _ in 0..count {
            let name = r.string("tensor name")?;
            let ndim = r.u32("tensor rank")? as usize;
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                shape.push(r.u64("tensor dims")? as usize);
            }
            let numel: usize = shape.iter().product();
            if numel > r.remaining() / 8 {
                return Err(Error::Truncated {
                    path: path.to_path_buf(),
                    detail: format!("tensor {name:?} of shape {shape:?} exceeds the remaining bytes"),
                });
            }
            let data = (0..numel).map(|_| r.f64("tensor values")).collect::<Result<Vec<_>>>()?;
            tensors.push((name, Tensor::new(shape, data)?));
        }
        if r.remaining() != 0 {
            return Err(Error::Integrity {
                path: path.to_path_buf(),
                detail: format!("{} trailing bytes after the last tensor", r.remaining()),
            });
        }
        Ok(Checkpoint { config, meta, tensors })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, &self.encode())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(path, &bytes)
    }
}
