use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentFlags {
    pub hflip: bool,
    pub vflip: bool,
    pub rot90: bool,
    /// Half-width of the brightness offset and contrast factor jitter.
    pub intensity_jitter: f64,
}

impl Default for AugmentFlags {
    fn default() -> Self {
        Self {
            hflip: true,
            vflip: true,
            rot90: true,
            intensity_jitter: 0.1,
        }
    }
}

impl AugmentFlags {
    pub fn none() -> Self {
        Self {
            hflip: false,
            vflip: false,
            rot90: false,
            intensity_jitter: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub total_steps: usize,
    pub batch_size: usize,
    pub base_lr: f64,
    /// Defaults to 1% of `total_steps` when absent.
    pub warmup_steps: Option<usize>,
    pub min_lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub threshold: f64,
    pub augment: AugmentFlags,
    pub seed: u64,
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            total_steps: 200_000,
            batch_size: 2,
            base_lr: 0.01,
            warmup_steps: None,
            min_lr: 0.0,
            momentum: 0.9,
            weight_decay: 0.0,
            threshold: 0.5,
            augment: AugmentFlags::default(),
            seed: 0,
            checkpoint_every: 1000,
        }
    }
}

impl TrainConfig {
    pub fn warmup(&self) -> usize {
        self.warmup_steps.unwrap_or(self.total_steps / 100)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        let warmup = self.warmup();
        if self.total_steps > 0 && warmup >= self.total_steps {
            return fail(format!("warmup_steps {warmup} must be below total_steps {}", self.total_steps));
        }
        if self.total_steps == 0 && warmup != 0 {
            return fail("warmup_steps must be 0 when total_steps is 0".into());
        }
        if !(self.min_lr >= 0.0 && self.base_lr > self.min_lr) {
            return fail(format!("need base_lr > min_lr >= 0, got {} and {}", self.base_lr, self.min_lr));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return fail(format!("momentum {} outside [0, 1)", self.momentum));
        }
        if !(self.weight_decay >= 0.0) {
            return fail(format!("weight_decay {} is negative", self.weight_decay));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return fail(format!("threshold {} outside (0, 1)", self.threshold));
        }
        if self.batch_size == 0 || self.checkpoint_every == 0 {
            return fail("batch_size and checkpoint_every must be positive".into());
        }
        if !(0.0..1.0).contains(&self.augment.intensity_jitter) {
            return fail(format!("intensity_jitter {} outside [0, 1)", self.augment.intensity_jitter));
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: TrainConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn schedule(&self) -> WarmupCosine {
        WarmupCosine {
            base_lr: self.base_lr,
            min_lr: self.min_lr,
            warmup: self.warmup() as f64,
            total: self.total_steps as f64,
        }
    }
}

/// Linear warmup from 0 to `base_lr`, then cosine decay to `min_lr`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WarmupCosine {
    pub base_lr: f64,
    pub min_lr: f64,
    pub warmup: f64,
    pub total: f64,
}

impl WarmupCosine {
    /// Learning rate at a (possibly fractional) step in `[0, total]`.
    pub fn lr(&self, t: f64) -> f64 {
        if t < self.warmup {
            return self.base_lr * t / self.warmup;
        }
        let span = self.total - self.warmup;
        let progress = if span > 0.0 { ((t - self.warmup) / span).min(1.0) } else { 1.0 };
        self.min_lr + (self.base_lr - self.min_lr) * 0.5 * (1.0 + (PI * progress).cos())
    }
}

pub fn lr_at(cfg: &TrainConfig, step: usize) -> Result<f64> {
    if step > cfg.total_steps {
        return Err(Error::invalid(format!(
            "step {step} outside [0, {}]",
            cfg.total_steps
        )));
    }
    Ok(cfg.schedule().lr(step as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc() -> TrainConfig {
        TrainConfig {
            total_steps: 1000,
            warmup_steps: Some(100),
            base_lr: 0.01,
            min_lr: 0.0,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn documented_points() {
        let c = doc();
        assert_eq!(lr_at(&c, 0).unwrap(), 0.0);
        assert!((lr_at(&c, 100).unwrap() - 0.01).abs() < 1e-15);
        assert!((lr_at(&c, 550).unwrap() - 0.005).abs() < 1e-15);
        assert!(lr_at(&c, 1000).unwrap().abs() < 1e-15);
        assert!(lr_at(&c, 1001).is_err());
    }

    #[test]
    fn default_warmup_is_one_percent() {
        assert_eq!(TrainConfig::default().warmup(), 2000);
    }

    #[test]
    fn invalid_configs() {
        let mut c = doc();
        c.warmup_steps = Some(1000);
        assert!(c.validate().is_err());
        let mut c = doc();
        c.min_lr = 0.02;
        assert!(c.validate().is_err());
        let mut c = doc();
        c.momentum = 1.0;
        assert!(c.validate().is_err());
        let c = TrainConfig {
            total_steps: 0,
            ..doc()
        };
        assert!(c.validate().is_err());
        let c = TrainConfig {
            total_steps: 0,
            warmup_steps: Some(0),
            ..doc()
        };
        c.validate().unwrap();
    }

    #[test]
    fn toml_round_trip() {
        let c = TrainConfig::from_toml_str("total_steps = 50\nbase_lr = 0.02\n[augment]\nrot90 = false\n").unwrap();
        assert_eq!(c.total_steps, 50);
        assert!(!c.augment.rot90);
        assert!(c.augment.hflip);
        assert!(TrainConfig::from_toml_str("bogus = 1").is_err());
    }
}
