use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use candle_core::{DType, Device, Tensor};
use safetensors::SafeTensors;

use super::config::EncoderConfig;
use super::layers::ParamBuilder;
use super::net::SegModel;
use crate::error::{Error, Result};
use crate::fsutil;

pub const CONFIG_KEY: &str = "callosum.config";
pub const FINGERPRINT_KEY: &str = "callosum.fingerprint";

/// A named-parameter archive: tensors plus free-form string metadata.
#[derive(Debug, Clone, Default)]
pub struct Archive {
    pub tensors: BTreeMap<String, Tensor>,
    pub metadata: BTreeMap<String, String>,
}

impl Archive {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let meta: HashMap<String, String> = self.metadata.clone().into_iter().collect();
        let data: Vec<(&str, Tensor)> = self
            .tensors
            .iter()
            .map(|(k, t)| Ok((k.as_str(), t.contiguous()?)))
            .collect::<Result<_>>()?;
        safetensors::serialize(data, Some(meta)).map_err(|e| Error::Checkpoint(e.to_string()))
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (_, meta) = SafeTensors::read_metadata(bytes).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let metadata = meta
            .metadata()
            .clone()
            .unwrap_or_default()
            .into_iter()
            .collect();
        let tensors = candle_core::safetensors::load_buffer(bytes, &Device::Cpu)
            .map_err(|e| Error::Checkpoint(e.to_string()))?
            .into_iter()
            .collect();
        Ok(Self { tensors, metadata })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fsutil::write_atomic(path, &self.to_bytes()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            Error::Checkpoint(m) => Error::Checkpoint(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }
}

impl SegModel {
    /// Archive holding every parameter, the encoder configuration and the fingerprint.
    pub fn to_archive(&self) -> Result<Archive> {
        let mut metadata = BTreeMap::new();
        metadata.insert(
            CONFIG_KEY.to_string(),
            serde_json::to_string(self.config()).map_err(|e| Error::Config(e.to_string()))?,
        );
        metadata.insert(FINGERPRINT_KEY.to_string(), self.fingerprint()?);
        Ok(Archive {
            tensors: self.tensors()?,
            metadata,
        })
    }

    /// Rebuilds a model from a self-describing archive; every parameter must be present.
    pub fn from_archive(archive: &Archive) -> Result<Self> {
        let cfg_text = archive
            .metadata
            .get(CONFIG_KEY)
            .ok_or_else(|| Error::Checkpoint(format!("archive lacks `{CONFIG_KEY}` metadata")))?;
        let cfg: EncoderConfig = serde_json::from_str(cfg_text).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let dtype = archive.tensors.values().next().map_or(DType::F32, |t| t.dtype());
        let mut pb = ParamBuilder::new(0, dtype, archive.tensors.clone());
        let model = SegModel::assemble(&cfg, &mut pb)?;
        if !pb.initialized.is_empty() {
            return Err(Error::Checkpoint(format!(
                "snapshot lacks {} parameters, first {}",
                pb.initialized.len(),
                pb.initialized[0]
            )));
        }
        if let Some(extra) = pb.source.keys().next() {
            return Err(Error::Checkpoint(format!("snapshot has unknown parameter {extra}")));
        }
        Ok(model)
    }

    pub fn save_snapshot(&self, path: &Path) -> Result<()> {
        self.to_archive()?.save(path)
    }

    pub fn load_snapshot(path: &Path) -> Result<Self> {
        Self::from_archive(&Archive::load(path)?)
    }
}
