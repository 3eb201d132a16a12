//! A small decoder-only transformer with additive attention masks, exact
//! hand-written gradients, an optimization loop and greedy decoding.
//!
//! The architecture mirrors the usual pre-norm GPT block layout: learned
//! token + absolute position embeddings, per-layer masked multi-head
//! self-attention and a GELU feed-forward, all with residual connections,
//! a final layer norm, and an output projection tied to the input
//! embeddings. Everything runs in double precision.

mod check;
mod checkpoint;
mod config;
mod decode;
mod net;
mod params;
mod train;

pub use check::{gradient_check, GradCheckReport};
pub use checkpoint::{AdamState, Checkpoint, RngState, CHECKPOINT_VERSION};
pub use config::{LrSchedule, ModelConfig, TrainConfig};
pub use decode::greedy_decode;
pub use net::{backward, forward, forward_cached, loss_and_grads, Cache};
pub use params::{Gradients, Parameters};
pub use train::{train, LogRow, TrainOutcome};

use crate::corpus::TokenSeq;
use crate::error::Result;
use crate::mask::LayerMaskSet;

/// Convenience bundle of a configuration and its parameters.
#[derive(Clone, Debug)]
pub struct Model {
    pub config: ModelConfig,
    pub params: Parameters,
}

impl Model {
    pub fn init(config: ModelConfig, seed: u64) -> Self {
        let params = Parameters::init(&config, seed);
        Model { config, params }
    }

    /// An all-zero model; it outputs the uniform distribution at every
    /// position regardless of context.
    pub fn zeros(config: ModelConfig) -> Self {
        let params = Parameters::zeros(&config);
        Model { config, params }
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Self {
        Model { config: ckpt.config.clone(), params: ckpt.params.clone() }
    }

    pub fn forward(&self, ids: &[u32], masks: Option<&LayerMaskSet>) -> Result<ndarray::Array2<f64>> {
        forward(&self.config, &self.params, ids, masks)
    }

    pub fn greedy_decode(&self, prompt: &[u32], gen_len: usize) -> Result<TokenSeq> {
        greedy_decode(&self.config, &self.params, prompt, gen_len)
    }
}
