use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use candle_core::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Archive, SegModel, CONFIG_KEY};

pub const STATE_KEY: &str = "callosum.train_state";
const PARAM: &str = "param.";
const MOMENTUM: &str = "momentum.";
const BEST: &str = "best.";

/// Position of the ChaCha generator driving batch sampling and augmentation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: String,
    pub stream: u64,
    pub word_pos: u128,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        Self {
            seed: hex::encode(rng.get_seed()),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos(),
        }
    }

    pub fn restore(&self) -> Result<ChaCha8Rng> {
        let bytes = hex::decode(&self.seed).map_err(|e| Error::Checkpoint(format!("rng seed: {e}")))?;
        let seed: [u8; 32] = bytes
            .try_into()
            .map_err(|_| Error::Checkpoint("rng seed must be 32 bytes".into()))?;
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        Ok(rng)
    }
}

/// Everything needed to continue a run bit-identically, plus its history.
#[derive(Debug, Clone)]
pub struct TrainState {
    /// Optimizer steps completed.
    pub step: usize,
    pub best_val_miou: Option<f64>,
    pub best_step: Option<usize>,
    pub last_loss: Option<f64>,
    /// `(step, validation mIoU)` for every evaluation.
    pub evaluations: Vec<(usize, f64)>,
    /// Where the best snapshot was last written, if anywhere.
    pub snapshot: Option<PathBuf>,
    pub rng: RngState,
    pub momentum: BTreeMap<String, Tensor>,
    /// Parameters at the best validation score.
    pub best_params: Option<BTreeMap<String, Tensor>>,
}

#[derive(Serialize, Deserialize)]
struct Scalars {
    step: usize,
    best_val_miou: Option<f64>,
    best_step: Option<usize>,
    last_loss: Option<f64>,
    evaluations: Vec<(usize, f64)>,
    snapshot: Option<PathBuf>,
    rng: RngState,
}

impl TrainState {
    pub fn new(seed: u64) -> Self {
        Self {
            step: 0,
            best_val_miou: None,
            best_step: None,
            last_loss: None,
            evaluations: Vec::new(),
            snapshot: None,
            rng: RngState::capture(&ChaCha8Rng::seed_from_u64(seed)),
            momentum: BTreeMap::new(),
            best_params: None,
        }
    }

    /// Model with the best validation parameters (the final ones if no
    /// evaluation ran).
    pub fn best_model(&self, model: &SegModel) -> Result<SegModel> {
        let out = SegModel::from_archive(&model.to_archive()?)?;
        if let Some(best) = &self.best_params {
            out.set_tensors(best)?;
        }
        Ok(out)
    }

    /// One archive holding the model, optimizer buffers, best parameters and
    /// counters.
    pub fn to_archive(&self, model: &SegModel) -> Result<Archive> {
        let mut a = model.to_archive()?;
        a.tensors = a.tensors.into_iter().map(|(k, v)| (format!("{PARAM}{k}"), v)).collect();
        for (k, v) in &self.momentum {
            a.tensors.insert(format!("{MOMENTUM}{k}"), v.clone());
        }
        for (k, v) in self.best_params.iter().flatten() {
            a.tensors.insert(format!("{BEST}{k}"), v.clone());
        }
        let scalars = Scalars {
            step: self.step,
            best_val_miou: self.best_val_miou,
            best_step: self.best_step,
            last_loss: self.last_loss,
            evaluations: self.evaluations.clone(),
            snapshot: self.snapshot.clone(),
            rng: self.rng.clone(),
        };
        a.metadata.insert(
            STATE_KEY.into(),
            serde_json::to_string(&scalars).map_err(|e| Error::Checkpoint(e.to_string()))?,
        );
        Ok(a)
    }

    pub fn from_archive(a: &Archive) -> Result<(SegModel, TrainState)> {
        let text = a
            .metadata
            .get(STATE_KEY)
            .ok_or_else(|| Error::Checkpoint(format!("not a training checkpoint (no `{STATE_KEY}`)")))?;
        let s: Scalars = serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let mut params = Archive {
            tensors: BTreeMap::new(),
            metadata: a.metadata.clone(),
        };
        params.metadata.retain(|k, _| k == CONFIG_KEY);
        let mut momentum = BTreeMap::new();
        let mut best = BTreeMap::new();
        for (k, v) in &a.tensors {
            if let Some(n) = k.strip_prefix(PARAM) {
                params.tensors.insert(n.to_string(), v.clone());
            } else if let Some(n) = k.strip_prefix(MOMENTUM) {
                momentum.insert(n.to_string(), v.clone());
            } else if let Some(n) = k.strip_prefix(BEST) {
                best.insert(n.to_string(), v.clone());
            } else {
                return Err(Error::Checkpoint(format!("unexpected tensor {k} in training checkpoint")));
            }
        }
        let model = SegModel::from_archive(&params)?;
        let state = TrainState {
            step: s.step,
            best_val_miou: s.best_val_miou,
            best_step: s.best_step,
            last_loss: s.last_loss,
            evaluations: s.evaluations,
            snapshot: s.snapshot,
            rng: s.rng,
            momentum,
            best_params: (!best.is_empty()).then_some(best),
        };
        Ok((model, state))
    }

    pub fn save(&self, model: &SegModel, path: &Path) -> Result<()> {
        self.to_archive(model)?.save(path)
    }

    pub fn load(path: &Path) -> Result<(SegModel, TrainState)> {
        Self::from_archive(&Archive::load(path)?)
    }
}
