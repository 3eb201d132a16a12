//! Experiment configuration: a TOML file of flat key/value sections. Every
//! referenced path must exist at load time, and the global seed flows into
//! every artifact a command writes.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::HighInflowRule;
use crate::error::{Error, Result};
use crate::model::{LrSchedule, ModelConfig, TrainConfig};
use crate::objectives::ObjectiveSpec;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DataSection {
    pub train: PathBuf,
    #[serde(default)]
    pub valid: Option<PathBuf>,
    #[serde(default)]
    pub test: Option<PathBuf>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TokenizerSection {
    #[serde(default = "default_max_vocab")]
    pub max_vocab: usize,
}

fn default_max_vocab() -> usize {
    50_000
}

impl Default for TokenizerSection {
    fn default() -> Self {
        TokenizerSection { max_vocab: default_max_vocab() }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSection {
    pub layers: usize,
    pub heads: usize,
    pub d_model: usize,
    /// Defaults to 4 * d_model when omitted.
    pub d_ff: Option<usize>,
    pub max_len: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection { layers: 2, heads: 4, d_model: 128, d_ff: None, max_len: 256 }
    }
}

impl ModelSection {
    pub fn to_model_config(&self, vocab: usize) -> ModelConfig {
        ModelConfig {
            layers: self.layers,
            heads: self.heads,
            d_model: self.d_model,
            d_ff: self.d_ff.unwrap_or(4 * self.d_model),
            vocab,
            max_len: self.max_len,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSection {
    pub steps: u64,
    pub lr: f64,
    pub batch: usize,
    pub warmup: u64,
    pub grad_clip: f64,
    pub eval_interval: u64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let d = TrainConfig::default();
        TrainSection {
            steps: d.steps,
            lr: d.lr,
            batch: d.batch,
            warmup: d.warmup,
            grad_clip: d.grad_clip,
            eval_interval: d.eval_interval,
        }
    }
}

impl TrainSection {
    pub fn to_train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            steps: self.steps,
            lr: self.lr,
            batch: self.batch,
            warmup: self.warmup,
            schedule: LrSchedule::LinearDecay,
            grad_clip: self.grad_clip,
            seed,
            eval_interval: self.eval_interval,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct DecodeSection {
    pub prompt_len: usize,
    pub gen_len: usize,
    /// Cap on the number of prompts taken from the test set.
    pub max_prompts: Option<usize>,
}

impl Default for DecodeSection {
    fn default() -> Self {
        DecodeSection {
            prompt_len: crate::corpus::DEFAULT_PROMPT_LEN,
            gen_len: crate::corpus::DEFAULT_GEN_LEN,
            max_prompts: None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricsSection {
    pub ns: Vec<usize>,
    pub window: usize,
}

impl Default for MetricsSection {
    fn default() -> Self {
        MetricsSection { ns: vec![2, 3, 4], window: crate::metrics::DEFAULT_WINDOW }
    }
}

fn default_objective() -> ObjectiveSpec {
    ObjectiveSpec::Mle
}

fn default_inflow() -> HighInflowRule {
    HighInflowRule::default()
}

/// The full experiment description.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    /// Output directory; `--out` on the command line overrides it.
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    pub data: DataSection,
    #[serde(default)]
    pub tokenizer: TokenizerSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default = "default_objective")]
    pub objective: ObjectiveSpec,
    #[serde(default)]
    pub decode: DecodeSection,
    #[serde(default)]
    pub metrics: MetricsSection,
    /// High-inflow selection rule for inflow-based penalization scopes.
    #[serde(default = "default_inflow")]
    pub inflow: HighInflowRule,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Toml(e.to_string()))?;
        cfg.validate_semantics()?;
        Ok(cfg)
    }

    /// Parse the file and verify every referenced path exists.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let mut cfg = Self::from_toml(&text)?;
        cfg.resolve_paths(&base);
        cfg.validate_paths()?;
        Ok(cfg)
    }

    /// Interpret relative data paths against the config file's directory.
    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&p);
            }
        };
        fix(&mut self.data.train);
        if let Some(v) = &mut self.data.valid {
            fix(v);
        }
        if let Some(t) = &mut self.data.test {
            fix(t);
        }
        if let Some(o) = &mut self.out_dir {
            fix(o);
        }
    }

    pub fn validate_paths(&self) -> Result<()> {
        let mut check = |p: &Path| -> Result<()> {
            if !p.exists() {
                return Err(Error::Config(format!("referenced path {} does not exist", p.display())));
            }
            Ok(())
        };
        check(&self.data.train)?;
        if let Some(v) = &self.data.valid {
            check(v)?;
        }
        if let Some(t) = &self.data.test {
            check(t)?;
        }
        Ok(())
    }

    fn validate_semantics(&self) -> Result<()> {
        self.objective.validate()?;
        self.train.to_train_config(self.seed).validate()?;
        if self.tokenizer.max_vocab < 2 {
            return Err(Error::Config("tokenizer.max_vocab must be at least 2".into()));
        }
        if self.metrics.ns.is_empty() {
            return Err(Error::Config("metrics.ns must not be empty".into()));
        }
        Ok(())
    }

    /// Serialize the resolved configuration for provenance echoing.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Toml(e.to_string()))
    }
}
