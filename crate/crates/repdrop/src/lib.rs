//! Repetition in language-model training data and the text degeneration it
//! induces: metrics, attention-mask machinery, a from-scratch decoder-only
//! transformer, anti-repetition objectives, and analysis tooling.
//!
//! The crate is organized around the pipeline the `repdrop` binary drives:
//!
//! * [`corpus`] — vocabulary, tokenization, repetition-sorted sharding,
//!   prompt extraction;
//! * [`metrics`] — rep-n / rep-w / rep-r and perplexity;
//! * [`mask`] — repeated-n-gram location and repetition-dropout attention
//!   masks;
//! * [`model`] — the transformer: forward, exact gradients, training,
//!   greedy decoding, checkpoints;
//! * [`objectives`] — likelihood, dropout variants, gradient rescaling,
//!   unlikelihood, and penalization scopes;
//! * [`analysis`] — high-inflow word statistics, pair merging, the
//!   self-reinforcement probe, amplification reporting;
//! * [`commands`] — the operations behind the CLI verbs;
//! * [`synth`] — a deterministic synthetic corpus generator used by the
//!   examples and the test suite.
//!
//! Each major capability has a runnable example under `examples/`.

pub mod analysis;
pub mod commands;
pub mod config;
pub mod corpus;
mod error;
pub mod mask;
pub mod metrics;
pub mod model;
pub mod objectives;
pub mod svg;
pub mod synth;

pub use config::ExperimentConfig;
pub use corpus::{
    build_vocab, detokenize, extract_prompts, shard_by_rep2, tokenize, Corpus, PromptSet, Shard,
    TokenSeq, Vocabulary,
};
pub use error::{Error, Result};
pub use mask::{
    assemble_attention_mask, causal_mask, count_repetitive_tokens, derive_seed, find_ngrams,
    gen_mask_rand, gen_mask_rep, LayerMaskSet, NgramIndex, RepetitionMask, MASK_NEG,
};
pub use metrics::{corpus_rep_n, perplexity, rep_n, rep_r, rep_w, MetricConfig, MetricsReport};
pub use model::{
    forward, greedy_decode, loss_and_grads, train, Checkpoint, Model, ModelConfig, Parameters,
    TrainConfig,
};
pub use objectives::{
    scalegrad_rescale, select_scope, unlikelihood_loss, ObjectiveSpec, PenalizationScope, ScopeAux,
};
