use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerKind {
    Sgd,
    #[default]
    Adam,
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(OptimizerKind::Sgd),
            "adam" => Ok(OptimizerKind::Adam),
            _ => Err(Error::Config(format!("unknown optimizer `{s}` (expected sgd or adam)"))),
        }
    }
}

/// Everything that drives a training run, model shape included.
///
/// Read from TOML; unknown keys are rejected. Adam uses
/// `beta1 = 0.9`, `beta2 = 0.98`, `adam_eps = 1e-9` unless overridden; the
/// learning rate ramps up linearly over `lr_warmup_steps` optimizer steps
/// and then stays constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Weight of the generation loss.
    pub alpha1: f64,
    /// Weight of the edit-label loss once warm-up is over.
    pub alpha2: f64,
    /// Leading epochs trained on the generation loss alone.
    pub warmup_epochs: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub lr_warmup_steps: usize,
    pub optimizer: OptimizerKind,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    /// Global gradient-norm clip; 0 disables clipping.
    pub clip_norm: f64,
    pub seed: u64,
    /// Dev decoding every this many epochs (the last epoch always).
    pub eval_every: usize,
    pub eval_batch_size: usize,
    /// Add pronoun-dropping variants of training samples.
    pub augment_coref_to_ellipsis: bool,
    /// Add pronoun-inserting variants of training samples.
    pub augment_ellipsis_to_coref: bool,
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            alpha1: 1.0,
            alpha2: 1.0,
            warmup_epochs: 3,
            epochs: 20,
            batch_size: 32,
            learning_rate: 1e-3,
            lr_warmup_steps: 100,
            optimizer: OptimizerKind::Adam,
            beta1: 0.9,
            beta2: 0.98,
            adam_eps: 1e-9,
            clip_norm: 1.0,
            seed: 0,
            eval_every: 1,
            eval_batch_size: 64,
            augment_coref_to_ellipsis: false,
            augment_ellipsis_to_coref: false,
            model: ModelConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.warmup_epochs > self.epochs {
            return bad(format!(
                "warmup_epochs ({}) exceeds epochs ({})",
                self.warmup_epochs, self.epochs
            ));
        }
        if !(self.alpha1 >= 0.0 && self.alpha2 >= 0.0) {
            return bad("alpha weights must be non-negative".into());
        }
        if self.batch_size == 0 || self.eval_batch_size == 0 {
            return bad("batch sizes must be positive".into());
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("beta1 and beta2 must lie in [0, 1)".into());
        }
        if !(self.clip_norm >= 0.0) {
            return bad("clip_norm must be non-negative".into());
        }
        if self.eval_every == 0 {
            return bad("eval_every must be positive".into());
        }
        self.model.validate()
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: TrainConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Overrides one key, given as `name` or `model.name`, from its textual
    /// value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let mut table: toml::Table = toml::from_str(&self.to_toml()).expect("round trip");
        let (section, name) = match key.split_once('.') {
            Some((s, n)) => (Some(s), n),
            None => (None, key),
        };
        let target = match section {
            None => &mut table,
            Some(s) => table
                .get_mut(s)
                .and_then(toml::Value::as_table_mut)
                .ok_or_else(|| Error::Config(format!("unknown config section `{s}`")))?,
        };
        let old = target
            .get(name)
            .ok_or_else(|| Error::Config(format!("unknown config key `{key}`")))?;
        let parsed = match old {
            toml::Value::String(_) => toml::Value::String(value.to_string()),
            toml::Value::Integer(_) => toml::Value::Integer(
                value
                    .parse()
                    .map_err(|_| Error::Config(format!("`{key}` expects an integer, got `{value}`")))?,
            ),
            toml::Value::Float(_) => toml::Value::Float(
                value
                    .parse()
                    .map_err(|_| Error::Config(format!("`{key}` expects a number, got `{value}`")))?,
            ),
            toml::Value::Boolean(_) => toml::Value::Boolean(
                value
                    .parse()
                    .map_err(|_| Error::Config(format!("`{key}` expects true or false, got `{value}`")))?,
            ),
            _ => return Err(Error::Config(format!("`{key}` cannot be set from the command line"))),
        };
        target.insert(name.to_string(), parsed);
        let text = toml::to_string(&table).expect("table serializes");
        *self = Self::from_toml(&text)?;
        Ok(())
    }
}

/// Effective `(alpha1, alpha2)` for a zero-based epoch: the label loss is
/// switched off during warm-up.
pub fn schedule(epoch: usize, config: &TrainConfig) -> (f64, f64) {
    if epoch < config.warmup_epochs {
        (config.alpha1, 0.0)
    } else {
        (config.alpha1, config.alpha2)
    }
}
