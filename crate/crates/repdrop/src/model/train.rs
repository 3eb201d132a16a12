//! Optimization loop: shuffled-epoch batch sampling, Adam with warmup plus
//! linear decay, global-norm gradient clipping, periodic validation
//! perplexity, and fresh per-layer masks drawn per batch when a dropout
//! objective is active. Fully deterministic given the seed.

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::mask::LayerMaskSet;
use crate::metrics;
use crate::objectives::{ObjectiveSpec, ScopeAux};

use super::checkpoint::{AdamState, Checkpoint, RngState};
use super::config::{ModelConfig, TrainConfig};
use super::net::loss_and_grads;
use super::params::Parameters;

const ADAM_B1: f64 = 0.9;
const ADAM_B2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;
/// Abort when the loss stays above ten times its initial value this long.
const DIVERGENCE_PATIENCE: u64 = 1000;

/// One training-log entry; `val_ppl` is filled at evaluation steps.
#[derive(Clone, Copy, Debug, serde::Serialize, serde::Deserialize)]
pub struct LogRow {
    pub step: u64,
    pub loss: f64,
    pub val_ppl: Option<f64>,
}

pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub history: Vec<LogRow>,
}

/// Train `init` on `corpus` under `objective`. Documents must already fit
/// `config.max_len` (see `Corpus::chunked`); documents shorter than two
/// tokens are excluded from sampling. Mask seeds derive from
/// `(seed, sequence_index, layer_index)` where the sequence index is
/// `step * batch + position_in_batch`, so a zero-rate dropout run is
/// bit-identical to plain likelihood training with the same seed.
pub fn train(
    config: &ModelConfig,
    init: Parameters,
    corpus: &Corpus,
    val: Option<&Corpus>,
    tcfg: &TrainConfig,
    objective: &ObjectiveSpec,
    aux: Option<&ScopeAux>,
) -> Result<TrainOutcome> {
    config.validate()?;
    tcfg.validate()?;
    objective.validate()?;
    if let Some(too_long) = corpus.documents.iter().find(|d| d.len() > config.max_len) {
        return Err(Error::SequenceTooLong { len: too_long.len(), max: config.max_len });
    }
    let pool: Vec<usize> = corpus
        .documents
        .iter()
        .enumerate()
        .filter(|(_, d)| d.len() >= 2)
        .map(|(i, _)| i)
        .collect();
    if pool.is_empty() {
        return Err(Error::NoQualifyingSequences(
            "training corpus has no document with at least two tokens".into(),
        ));
    }

    let mut params = init;
    let mut opt = AdamState::new(params.num_params());
    let mut rng: ChaCha8Rng = RngState::fresh(tcfg.seed).restore();
    let mut order = pool.clone();
    let mut cursor = order.len(); // forces a shuffle before the first batch
    let mut history = Vec::new();
    let mut initial_loss = None;
    let mut high_loss_streak = 0u64;

    for step in 0..tcfg.steps {
        let mut batch: Vec<&[u32]> = Vec::with_capacity(tcfg.batch);
        for _ in 0..tcfg.batch {
            if cursor == order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            batch.push(&corpus.documents[order[cursor]].ids);
            cursor += 1;
        }

        let masks: Option<Vec<LayerMaskSet>> = match objective {
            ObjectiveSpec::RepDropout { p, n } => Some(
                batch
                    .iter()
                    .enumerate()
                    .map(|(i, ids)| {
                        let seq_index = step * tcfg.batch as u64 + i as u64;
                        LayerMaskSet::generate(ids, *p, *n, tcfg.seed, seq_index, config.layers)
                    })
                    .collect(),
            ),
            ObjectiveSpec::RandDropout { p, n } => Some(
                batch
                    .iter()
                    .enumerate()
                    .map(|(i, ids)| {
                        let seq_index = step * tcfg.batch as u64 + i as u64;
                        LayerMaskSet::generate_random(
                            ids,
                            *p,
                            *n,
                            tcfg.seed,
                            seq_index,
                            config.layers,
                        )
                    })
                    .collect(),
            ),
            _ => None,
        };

        let (loss, mut grads) =
            loss_and_grads(config, &params, &batch, objective, masks.as_deref(), aux)
                .map_err(|e| match e {
                    Error::NonFiniteLoss { details, .. } => Error::NonFiniteLoss { step, details },
                    other => other,
                })?;

        let first = *initial_loss.get_or_insert(loss);
        if loss > 10.0 * first {
            high_loss_streak += 1;
            if high_loss_streak >= DIVERGENCE_PATIENCE {
                return Err(Error::Diverged(format!(
                    "loss {loss:.4} above 10x initial {first:.4} for {DIVERGENCE_PATIENCE} steps \
                     (at step {step})"
                )));
            }
        } else {
            high_loss_streak = 0;
        }

        let norm = grads.l2_norm();
        if norm > tcfg.grad_clip {
            grads.scale(tcfg.grad_clip / norm);
        }
        adam_step(&mut params, &grads, &mut opt, tcfg.lr_at(step));

        let val_ppl = match val {
            Some(v) if (step + 1) % tcfg.eval_interval == 0 || step + 1 == tcfg.steps => {
                Some(metrics::perplexity(config, &params, &v.documents)?)
            }
            _ => None,
        };
        history.push(LogRow { step, loss, val_ppl });
    }

    let checkpoint = Checkpoint {
        config: config.clone(),
        params,
        opt: Some(opt),
        step: tcfg.steps,
        rng: RngState::capture(tcfg.seed, &rng),
    };
    Ok(TrainOutcome { checkpoint, history })
}

fn adam_step(params: &mut Parameters, grads: &Parameters, opt: &mut AdamState, lr: f64) {
    opt.t += 1;
    let b1c = 1.0 - ADAM_B1.powi(opt.t as i32);
    let b2c = 1.0 - ADAM_B2.powi(opt.t as i32);
    let mut offset = 0usize;
    let mut ps = params.slices_mut();
    let gs = grads.slices();
    for (p, g) in ps.iter_mut().zip(gs) {
        for i in 0..p.len() {
            let gi = g[i];
            let m = &mut opt.m[offset];
            *m = ADAM_B1 * *m + (1.0 - ADAM_B1) * gi;
            let v = &mut opt.v[offset];
            *v = ADAM_B2 * *v + (1.0 - ADAM_B2) * gi * gi;
            let mhat = *m / b1c;
            let vhat = *v / b2c;
            p[i] -= lr * mhat / (vhat.sqrt() + ADAM_EPS);
            offset += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::TokenSeq;

    fn tiny_cfg(vocab: usize) -> ModelConfig {
        ModelConfig { layers: 2, heads: 2, d_model: 16, d_ff: 32, vocab, max_len: 8 }
    }

    fn tiny_corpus() -> Corpus {
        let docs = (0..16).map(|_| TokenSeq::new(vec![0, 1, 2, 3])).collect();
        Corpus::new("toy", docs)
    }

    #[test]
    fn zero_steps_returns_initialization() {
        let cfg = tiny_cfg(6);
        let init = Parameters::init(&cfg, 3);
        let tcfg = TrainConfig::desk(0, 4, 1e-3, 0);
        let out = train(&cfg, init.clone(), &tiny_corpus(), None, &tcfg, &ObjectiveSpec::Mle, None)
            .unwrap();
        assert_eq!(out.checkpoint.params, init);
        assert!(out.history.is_empty());
        assert_eq!(out.checkpoint.step, 0);
    }

    #[test]
    fn same_seed_gives_identical_checkpoints() {
        let cfg = tiny_cfg(6);
        let tcfg = TrainConfig::desk(25, 4, 1e-3, 7);
        let corpus = tiny_corpus();
        let run = |_| {
            train(
                &cfg,
                Parameters::init(&cfg, 1),
                &corpus,
                None,
                &tcfg,
                &ObjectiveSpec::Mle,
                None,
            )
            .unwrap()
        };
        let a = run(());
        let b = run(());
        assert_eq!(a.checkpoint.params, b.checkpoint.params);
        let la: Vec<f64> = a.history.iter().map(|r| r.loss).collect();
        let lb: Vec<f64> = b.history.iter().map(|r| r.loss).collect();
        assert_eq!(la, lb);
    }

    #[test]
    fn memorizes_a_single_repeated_document() {
        // loss on "a b c d" repeated should collapse well before 2K steps
        let cfg = tiny_cfg(6);
        let tcfg = TrainConfig::desk(600, 8, 3e-3, 0);
        let out = train(
            &cfg,
            Parameters::init(&cfg, 0),
            &tiny_corpus(),
            None,
            &tcfg,
            &ObjectiveSpec::Mle,
            None,
        )
        .unwrap();
        let final_loss = out.history.last().unwrap().loss;
        assert!(final_loss < 0.1, "final loss {final_loss}");
    }

    #[test]
    fn rep_dropout_p0_checkpoint_matches_mle() {
        let cfg = tiny_cfg(6);
        let corpus = tiny_corpus();
        let tcfg = TrainConfig::desk(12, 4, 1e-3, 5);
        let mle = train(
            &cfg,
            Parameters::init(&cfg, 2),
            &corpus,
            None,
            &tcfg,
            &ObjectiveSpec::Mle,
            None,
        )
        .unwrap();
        let rd = train(
            &cfg,
            Parameters::init(&cfg, 2),
            &corpus,
            None,
            &tcfg,
            &ObjectiveSpec::RepDropout { p: 0.0, n: 2 },
            None,
        )
        .unwrap();
        assert_eq!(mle.checkpoint.params, rd.checkpoint.params);
    }

    #[test]
    fn validation_ppl_is_logged_at_eval_interval() {
        let cfg = tiny_cfg(6);
        let corpus = tiny_corpus();
        let mut tcfg = TrainConfig::desk(10, 4, 1e-3, 0);
        tcfg.eval_interval = 5;
        let out = train(
            &cfg,
            Parameters::init(&cfg, 0),
            &corpus,
            Some(&corpus),
            &tcfg,
            &ObjectiveSpec::Mle,
            None,
        )
        .unwrap();
        let evals: Vec<u64> =
            out.history.iter().filter(|r| r.val_ppl.is_some()).map(|r| r.step).collect();
        assert_eq!(evals, vec![4, 9]);
    }

    #[test]
    fn exploding_learning_rate_is_reported() {
        let cfg = tiny_cfg(6);
        let mut tcfg = TrainConfig::desk(200, 4, 1e18, 0);
        tcfg.grad_clip = 1e18;
        let result = train(
            &cfg,
            Parameters::init(&cfg, 0),
            &tiny_corpus(),
            None,
            &tcfg,
            &ObjectiveSpec::Mle,
            None,
        );
        assert!(result.is_err());
    }

    #[test]
    fn overlong_documents_are_rejected() {
        let cfg = tiny_cfg(6);
        let corpus = Corpus::new("t", vec![TokenSeq::new(vec![0; 20])]);
        let tcfg = TrainConfig::desk(1, 1, 1e-3, 0);
        assert!(matches!(
            train(&cfg, Parameters::init(&cfg, 0), &corpus, None, &tcfg, &ObjectiveSpec::Mle, None),
            Err(Error::SequenceTooLong { .. })
        ));
    }
}
