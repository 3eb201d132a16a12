use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Architecture settings for the decoder-only transformer.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ModelConfig {
    pub layers: usize,
    pub heads: usize,
    /// Hidden size d.
    pub d_model: usize,
    /// Feed-forward inner size (conventionally 4 * d_model).
    pub d_ff: usize,
    /// Vocabulary size; logits have this many columns.
    pub vocab: usize,
    /// Maximum sequence length; position embeddings cover exactly this range.
    pub max_len: usize,
}

impl ModelConfig {
    /// Desk-scale default used throughout the tests and examples.
    pub fn toy(vocab: usize) -> Self {
        ModelConfig { layers: 2, heads: 4, d_model: 128, d_ff: 512, vocab, max_len: 256 }
    }

    /// The 12-layer, 768-wide configuration of the GPT-2 small family.
    /// Documented preset only; far too slow to train in the test suite.
    pub fn gpt2_small(vocab: usize) -> Self {
        ModelConfig { layers: 12, heads: 12, d_model: 768, d_ff: 3072, vocab, max_len: 256 }
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.heads
    }

    /// Attention scale beta = sqrt(d_model / heads); raw scores and the
    /// additive mask are divided by this before the softmax.
    pub fn attn_scale(&self) -> f64 {
        (self.head_dim() as f64).sqrt()
    }

    pub fn validate(&self) -> Result<()> {
        if self.heads == 0 || self.d_model % self.heads != 0 {
            return Err(Error::Config(format!(
                "d_model {} must be divisible by heads {}",
                self.d_model, self.heads
            )));
        }
        if self.max_len < 2 {
            return Err(Error::Config("max_len must be at least 2".into()));
        }
        if self.vocab < 2 {
            return Err(Error::Config("vocab must be at least 2".into()));
        }
        if self.layers == 0 || self.d_ff == 0 {
            return Err(Error::Config("layers and d_ff must be positive".into()));
        }
        Ok(())
    }
}

/// Learning-rate schedule. Linear warmup to the peak rate followed by linear
/// decay to zero is the only shape used here.
#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum LrSchedule {
    #[default]
    LinearDecay,
}

/// Optimization settings. The defaults are the full-scale values
/// (100K steps, batch 128, warmup 10K, clip 1.0); desk-scale runs override
/// them, typically via [`TrainConfig::desk`].
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct TrainConfig {
    pub steps: u64,
    pub lr: f64,
    pub batch: usize,
    pub warmup: u64,
    pub schedule: LrSchedule,
    pub grad_clip: f64,
    pub seed: u64,
    /// Validation perplexity is computed every this many steps.
    pub eval_interval: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps: 100_000,
            lr: 5e-5,
            batch: 128,
            warmup: 10_000,
            schedule: LrSchedule::LinearDecay,
            grad_clip: 1.0,
            seed: 0,
            eval_interval: 10_000,
        }
    }
}

impl TrainConfig {
    /// Scaled-down settings: warmup is 10% of the step budget and evaluation
    /// happens ten times per run.
    pub fn desk(steps: u64, batch: usize, lr: f64, seed: u64) -> Self {
        TrainConfig {
            steps,
            lr,
            batch,
            warmup: steps / 10,
            schedule: LrSchedule::LinearDecay,
            grad_clip: 1.0,
            seed,
            eval_interval: (steps / 10).max(1),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.warmup > self.steps {
            return Err(Error::Config(format!(
                "warmup {} exceeds steps {}",
                self.warmup, self.steps
            )));
        }
        if self.batch == 0 {
            return Err(Error::Config("batch must be positive".into()));
        }
        if !(self.lr > 0.0) || !(self.grad_clip > 0.0) {
            return Err(Error::Config("lr and grad_clip must be positive".into()));
        }
        if self.eval_interval == 0 {
            return Err(Error::Config("eval_interval must be positive".into()));
        }
        Ok(())
    }

    /// Learning rate at `step` (0-based): linear warmup over `warmup` steps,
    /// then linear decay to zero at the end of training.
    pub fn lr_at(&self, step: u64) -> f64 {
        if self.steps == 0 {
            return 0.0;
        }
        if step < self.warmup {
            self.lr * (step + 1) as f64 / self.warmup as f64
        } else {
            let span = (self.steps - self.warmup).max(1);
            self.lr * (self.steps - step) as f64 / span as f64
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn attn_scale_is_sqrt_head_dim() {
        let cfg = ModelConfig { layers: 2, heads: 4, d_model: 64, d_ff: 256, vocab: 10, max_len: 8 };
        assert_eq!(cfg.attn_scale(), 4.0);
    }

    #[test]
    fn validate_rejects_indivisible_heads() {
        let cfg = ModelConfig { layers: 2, heads: 3, d_model: 64, d_ff: 256, vocab: 10, max_len: 8 };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn lr_schedule_warms_up_then_decays() {
        let cfg = TrainConfig::desk(100, 4, 1.0, 0);
        assert!(cfg.lr_at(0) < cfg.lr_at(9));
        assert!((cfg.lr_at(9) - 1.0).abs() < 1e-12);
        assert!(cfg.lr_at(50) > cfg.lr_at(99));
        assert!(cfg.lr_at(99) > 0.0);
    }

    #[test]
    fn default_matches_full_scale_settings() {
        let cfg = TrainConfig::default();
        assert_eq!(cfg.steps, 100_000);
        assert_eq!(cfg.batch, 128);
        assert_eq!(cfg.warmup, 10_000);
        assert_eq!(cfg.grad_clip, 1.0);
        assert_eq!(cfg.lr, 5e-5);
        assert_eq!(cfg.seed, 0);
    }

    #[test]
    fn validate_rejects_warmup_beyond_steps() {
        let mut cfg = TrainConfig::default();
        cfg.warmup = cfg.steps + 1;
        assert!(cfg.validate().is_err());
    }
}
