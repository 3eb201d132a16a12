//! Greedy decoding.
//!
//! Generation appends the argmax token at every step, breaking exact ties
//! toward the lowest token id. No repetition masks are applied at inference
//! time. Decoding keeps per-layer key/value caches so each step costs one
//! position, not a full re-forward; when the context would outgrow
//! `max_len` the cache is rebuilt on the trailing window (sliding-window
//! truncation).

use ndarray::{Array1, Array2};

use crate::corpus::TokenSeq;
use crate::error::{Error, Result};

use super::config::ModelConfig;
use super::params::Parameters;

/// Greedily extend `prompt` by `gen_len` tokens, returning the full sequence
/// (prompt included, so `gen_len = 0` returns the prompt unchanged).
pub fn greedy_decode(
    cfg: &ModelConfig,
    params: &Parameters,
    prompt: &[u32],
    gen_len: usize,
) -> Result<TokenSeq> {
    if prompt.is_empty() {
        return Err(Error::EmptyPrompt);
    }
    if let Some(&bad) = prompt.iter().find(|&&t| t as usize >= cfg.vocab) {
        return Err(Error::VocabMismatch(format!(
            "prompt token {bad} out of range for vocabulary of {}",
            cfg.vocab
        )));
    }

    let mut seq: Vec<u32> = prompt.to_vec();
    let mut state = DecodeState::new(cfg, params);
    let window_start = seq.len().saturating_sub(cfg.max_len);
    let mut logits = state.prefill(&seq[window_start..]);

    for _ in 0..gen_len {
        let next = argmax_lowest(&logits);
        seq.push(next);
        if state.len() == cfg.max_len {
            // sliding window: drop the oldest token and re-prefill
            let start = seq.len() - cfg.max_len;
            state.reset();
            logits = state.prefill(&seq[start..]);
        } else {
            logits = state.feed(next);
        }
    }
    Ok(TokenSeq::new(seq))
}

fn argmax_lowest(logits: &Array1<f64>) -> u32 {
    let mut best = 0usize;
    for (i, &v) in logits.iter().enumerate() {
        if v > logits[best] {
            best = i;
        }
    }
    best as u32
}

/// Incremental per-layer key/value state.
struct DecodeState<'a> {
    cfg: &'a ModelConfig,
    params: &'a Parameters,
    keys: Vec<Array2<f64>>,
    values: Vec<Array2<f64>>,
    t: usize,
}

impl<'a> DecodeState<'a> {
    fn new(cfg: &'a ModelConfig, params: &'a Parameters) -> Self {
        let keys = (0..cfg.layers).map(|_| Array2::zeros((0, cfg.d_model))).collect();
        let values = (0..cfg.layers).map(|_| Array2::zeros((0, cfg.d_model))).collect();
        DecodeState { cfg, params, keys, values, t: 0 }
    }

    fn len(&self) -> usize {
        self.t
    }

    fn reset(&mut self) {
        for k in &mut self.keys {
            *k = Array2::zeros((0, self.cfg.d_model));
        }
        for v in &mut self.values {
            *v = Array2::zeros((0, self.cfg.d_model));
        }
        self.t = 0;
    }

    fn prefill(&mut self, ids: &[u32]) -> Array1<f64> {
        debug_assert!(!ids.is_empty());
        let mut logits = Array1::zeros(self.cfg.vocab);
        for &id in ids {
            logits = self.feed(id);
        }
        logits
    }

    /// Advance one position and return the next-token logits.
    fn feed(&mut self, id: u32) -> Array1<f64> {
        let cfg = self.cfg;
        let p = self.params;
        let d = cfg.d_model;
        let dh = cfg.head_dim();
        let beta = cfg.attn_scale();
        debug_assert!(self.t < cfg.max_len);

        let mut x: Array1<f64> =
            &p.tok_emb.row(id as usize) + &p.pos_emb.row(self.t);
        for (li, layer) in p.layers.iter().enumerate() {
            let a1 = layer_norm_row(&x, &layer.ln1_g, &layer.ln1_b);
            let q = a1.dot(&layer.w_q) + &layer.b_q;
            let k = a1.dot(&layer.w_k) + &layer.b_k;
            let v = a1.dot(&layer.w_v) + &layer.b_v;
            self.keys[li].push_row(k.view()).expect("standard layout");
            self.values[li].push_row(v.view()).expect("standard layout");

            let kcache = &self.keys[li];
            let vcache = &self.values[li];
            let rows = kcache.nrows();
            let mut ctx = Array1::zeros(d);
            for h in 0..cfg.heads {
                let cols = h * dh..(h + 1) * dh;
                // scores of the new query against every cached key
                let mut scores = Array1::zeros(rows);
                for j in 0..rows {
                    let mut dot = 0.0;
                    for c in cols.clone() {
                        dot += q[c] * kcache[[j, c]];
                    }
                    scores[j] = dot / beta;
                }
                let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let mut sum = 0.0;
                for s in scores.iter_mut() {
                    *s = (*s - max).exp();
                    sum += *s;
                }
                for s in scores.iter_mut() {
                    *s /= sum;
                }
                for j in 0..rows {
                    let w = scores[j];
                    for c in cols.clone() {
                        ctx[c] += w * vcache[[j, c]];
                    }
                }
            }
            let attn_out = ctx.dot(&layer.w_o) + &layer.b_o;
            let x_mid = &x + &attn_out;
            let a2 = layer_norm_row(&x_mid, &layer.ln2_g, &layer.ln2_b);
            let fc = (a2.dot(&layer.w_fc) + &layer.b_fc).mapv(super::net::gelu);
            let ff = fc.dot(&layer.w_proj) + &layer.b_proj;
            x = x_mid + ff;
        }
        let hf = layer_norm_row(&x, &p.lnf_g, &p.lnf_b);
        self.t += 1;
        p.tok_emb.dot(&hf)
    }
}

fn layer_norm_row(x: &Array1<f64>, g: &Array1<f64>, b: &Array1<f64>) -> Array1<f64> {
    let d = x.len();
    let mean = x.sum() / d as f64;
    let var = x.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
    let inv_std = 1.0 / (var + super::net::LN_EPS).sqrt();
    Array1::from_shape_fn(d, |j| (x[j] - mean) * inv_std * g[j] + b[j])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{forward, ModelConfig, Parameters};

    fn tiny_cfg() -> ModelConfig {
        ModelConfig { layers: 2, heads: 2, d_model: 16, d_ff: 32, vocab: 9, max_len: 24 }
    }

    /// Reference decoder: full forward pass at every step.
    fn naive_greedy(cfg: &ModelConfig, p: &Parameters, prompt: &[u32], gen_len: usize) -> Vec<u32> {
        let mut seq = prompt.to_vec();
        for _ in 0..gen_len {
            let start = seq.len().saturating_sub(cfg.max_len);
            let logits = forward(cfg, p, &seq[start..], None).unwrap();
            let row = logits.row(logits.nrows() - 1);
            let mut best = 0usize;
            for (i, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = i;
                }
            }
            seq.push(best as u32);
        }
        seq
    }

    #[test]
    fn zero_weights_decode_to_lowest_id() {
        // all-zero logits tie everywhere; the tie-break picks token 0
        let cfg = tiny_cfg();
        let p = Parameters::zeros(&cfg);
        let out = greedy_decode(&cfg, &p, &[3, 4], 5).unwrap();
        assert_eq!(out.ids, vec![3, 4, 0, 0, 0, 0, 0]);
    }

    #[test]
    fn gen_len_zero_returns_prompt() {
        let cfg = tiny_cfg();
        let p = Parameters::init(&cfg, 0);
        let out = greedy_decode(&cfg, &p, &[1, 2, 3], 0).unwrap();
        assert_eq!(out.ids, vec![1, 2, 3]);
    }

    #[test]
    fn decode_is_deterministic() {
        let cfg = tiny_cfg();
        let p = Parameters::init(&cfg, 5);
        let a = greedy_decode(&cfg, &p, &[1, 2], 12).unwrap();
        let b = greedy_decode(&cfg, &p, &[1, 2], 12).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_prompt_is_rejected() {
        let cfg = tiny_cfg();
        let p = Parameters::init(&cfg, 0);
        assert!(matches!(greedy_decode(&cfg, &p, &[], 4), Err(Error::EmptyPrompt)));
    }

    #[test]
    fn incremental_decode_matches_full_reforward() {
        let cfg = tiny_cfg();
        for seed in 0..4 {
            let p = Parameters::init(&cfg, seed);
            let fast = greedy_decode(&cfg, &p, &[1, 2, 3], 16).unwrap();
            let slow = naive_greedy(&cfg, &p, &[1, 2, 3], 16);
            assert_eq!(fast.ids, slow, "seed {seed}");
        }
    }

    #[test]
    fn sliding_window_handles_contexts_beyond_max_len() {
        let mut cfg = tiny_cfg();
        cfg.max_len = 8;
        let p = Parameters::init(&cfg, 2);
        let fast = greedy_decode(&cfg, &p, &[1, 2, 3, 4], 12).unwrap();
        let slow = naive_greedy(&cfg, &p, &[1, 2, 3, 4], 12);
        assert_eq!(fast.ids.len(), 16);
        assert_eq!(fast.ids, slow);
    }

    #[test]
    fn long_prompt_is_truncated_to_window() {
        let mut cfg = tiny_cfg();
        cfg.max_len = 6;
        let p = Parameters::init(&cfg, 3);
        let prompt: Vec<u32> = (0..9).map(|i| i % 5).collect();
        let fast = greedy_decode(&cfg, &p, &prompt, 4).unwrap();
        let slow = naive_greedy(&cfg, &p, &prompt, 4);
        assert_eq!(fast.ids, slow);
    }
}
