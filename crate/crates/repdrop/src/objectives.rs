//! Training objectives: plain likelihood, the two attention-dropout
//! variants, gradient rescaling of non-novel tokens, and token-level
//! unlikelihood, together with the penalization-scope selectors used for
//! scope ablations.
//!
//! Scopes are sets of token *types*. At a 1-indexed position `t` the prefix
//! is `x_1..x_{t-1}`; the repetitive variants keep only prefix tokens that
//! participate in an n-gram repeated somewhere in the full sequence, and the
//! random-subset variants sample a prefix subset of exactly the same size as
//! their repetitive counterpart.

use std::collections::{BTreeSet, HashSet};

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::{derive_seed, repetitive_coverage};
use crate::metrics::log_sum_exp;

fn default_ngram() -> usize {
    crate::metrics::DEFAULT_NGRAM
}

/// Which loss to train with. Serialized names are the snake_case tags used
/// in experiment config files, e.g. `kind = "rep_dropout", p = 0.6, n = 2`.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ObjectiveSpec {
    Mle,
    RepDropout {
        p: f64,
        #[serde(default = "default_ngram")]
        n: usize,
    },
    RandDropout {
        p: f64,
        #[serde(default = "default_ngram")]
        n: usize,
    },
    ScaleGrad {
        gamma: f64,
        #[serde(default)]
        scope: PenalizationScope,
    },
    Unlikelihood {
        alpha: f64,
        #[serde(default)]
        scope: PenalizationScope,
    },
}

impl ObjectiveSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ObjectiveSpec::Mle => Ok(()),
            ObjectiveSpec::RepDropout { p, n } | ObjectiveSpec::RandDropout { p, n } => {
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::Config(format!("dropout rate p = {p} not in [0, 1]")));
                }
                if n == 0 {
                    return Err(Error::Config("n must be at least 1".into()));
                }
                Ok(())
            }
            ObjectiveSpec::ScaleGrad { gamma, .. } => {
                if !(gamma > 0.0 && gamma <= 1.0) {
                    return Err(Error::Config(format!("gamma = {gamma} not in (0, 1]")));
                }
                Ok(())
            }
            ObjectiveSpec::Unlikelihood { alpha, .. } => {
                if !(alpha >= 0.0) {
                    return Err(Error::Config(format!("alpha = {alpha} must be >= 0")));
                }
                Ok(())
            }
        }
    }

    /// True for the objectives that expect per-sequence attention masks.
    pub fn needs_masks(&self) -> bool {
        matches!(self, ObjectiveSpec::RepDropout { .. } | ObjectiveSpec::RandDropout { .. })
    }

    pub fn scope(&self) -> Option<&PenalizationScope> {
        match self {
            ObjectiveSpec::ScaleGrad { scope, .. } | ObjectiveSpec::Unlikelihood { scope, .. } => {
                Some(scope)
            }
            _ => None,
        }
    }
}

/// Which token set an objective penalizes at each time step.
#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum PenalizationScope {
    /// Every token type in the prefix.
    #[default]
    PrefixAll,
    /// Prefix tokens covered by an n-gram repeated within the sequence.
    PrefixRepetitive {
        #[serde(default = "default_ngram")]
        n: usize,
    },
    /// A random prefix subset, size-matched per position to
    /// [`PenalizationScope::PrefixRepetitive`].
    PrefixRandomSubset {
        #[serde(default = "default_ngram")]
        n: usize,
        #[serde(default)]
        seed: u64,
    },
    /// Prefix tokens that belong to the high-inflow set.
    HighInflowAll,
    /// High-inflow prefix tokens that are also repetitive.
    HighInflowRepetitive {
        #[serde(default = "default_ngram")]
        n: usize,
    },
    /// A random subset of the high-inflow prefix tokens, size-matched to
    /// [`PenalizationScope::HighInflowRepetitive`].
    HighInflowRandomSubset {
        #[serde(default = "default_ngram")]
        n: usize,
        #[serde(default)]
        seed: u64,
    },
}

impl PenalizationScope {
    pub fn needs_high_inflow(&self) -> bool {
        matches!(
            self,
            PenalizationScope::HighInflowAll
                | PenalizationScope::HighInflowRepetitive { .. }
                | PenalizationScope::HighInflowRandomSubset { .. }
        )
    }
}

/// Corpus statistics consumed by the high-inflow scope variants.
#[derive(Clone, Debug, Default)]
pub struct ScopeAux {
    pub high_inflow: HashSet<u32>,
}

/// Token types an objective penalizes when predicting position `t`
/// (1-indexed, `2 <= t <= L`).
pub fn select_scope(
    ids: &[u32],
    t: usize,
    scope: &PenalizationScope,
    aux: Option<&ScopeAux>,
) -> Result<BTreeSet<u32>> {
    if t < 2 || t > ids.len() {
        return Err(Error::InvalidInput(format!(
            "position t = {t} out of range 2..={} for scope selection",
            ids.len()
        )));
    }
    if scope.needs_high_inflow() && aux.is_none() {
        return Err(Error::InvalidInput(
            "high-inflow scope requires corpus statistics".into(),
        ));
    }
    let prefix = &ids[..t - 1];
    let prefix_all: BTreeSet<u32> = prefix.iter().copied().collect();
    let repetitive = |n: usize| -> BTreeSet<u32> {
        let covered = repetitive_coverage(ids, n);
        prefix
            .iter()
            .enumerate()
            .filter(|(i, _)| covered[*i])
            .map(|(_, &id)| id)
            .collect()
    };
    Ok(match scope {
        PenalizationScope::PrefixAll => prefix_all,
        PenalizationScope::PrefixRepetitive { n } => repetitive(*n),
        PenalizationScope::PrefixRandomSubset { n, seed } => {
            let size = repetitive(*n).len();
            sample_subset(&prefix_all, size, derive_seed(*seed, t as u64, 0))
        }
        PenalizationScope::HighInflowAll => {
            let hi = &aux.unwrap().high_inflow;
            prefix_all.into_iter().filter(|id| hi.contains(id)).collect()
        }
        PenalizationScope::HighInflowRepetitive { n } => {
            let hi = &aux.unwrap().high_inflow;
            repetitive(*n).into_iter().filter(|id| hi.contains(id)).collect()
        }
        PenalizationScope::HighInflowRandomSubset { n, seed } => {
            let hi = &aux.unwrap().high_inflow;
            let hi_all: BTreeSet<u32> =
                prefix_all.iter().copied().filter(|id| hi.contains(id)).collect();
            let size = repetitive(*n)
                .into_iter()
                .filter(|id| hi.contains(id))
                .count();
            sample_subset(&hi_all, size, derive_seed(*seed, t as u64, 1))
        }
    })
}

fn sample_subset(pool: &BTreeSet<u32>, size: usize, seed: u64) -> BTreeSet<u32> {
    let items: Vec<u32> = pool.iter().copied().collect();
    let size = size.min(items.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rand::seq::index::sample(&mut rng, items.len(), size)
        .iter()
        .map(|i| items[i])
        .collect()
}

/// Result of [`unlikelihood_loss`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UlLoss {
    /// Likelihood part plus `alpha` times the unlikelihood part.
    pub total: f64,
    pub mle: f64,
    pub unlikelihood: f64,
    /// How many negatives had probability so close to 1 that `1 - p` was
    /// clamped at 1e-12.
    pub clamped: usize,
}

const UL_CLAMP: f64 = 1e-12;

/// Token-level unlikelihood: the likelihood loss plus, per position,
/// `-log(1 - p(c))` for every scope token `c` other than the true target.
/// `logits` row `i` scores `targets[i]`; `scopes[i]` is the penalized set at
/// that position. Sums over positions (no averaging).
pub fn unlikelihood_loss(
    logits: &Array2<f64>,
    targets: &[u32],
    scopes: &[BTreeSet<u32>],
    alpha: f64,
) -> Result<UlLoss> {
    if targets.len() != scopes.len() || logits.nrows() < targets.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} logit rows, {} targets, {} scopes",
            logits.nrows(),
            targets.len(),
            scopes.len()
        )));
    }
    let mut mle = 0.0;
    let mut ul = 0.0;
    let mut clamped = 0usize;
    for (i, (&target, scope)) in targets.iter().zip(scopes).enumerate() {
        let row = logits.row(i);
        let lse = log_sum_exp(row.as_slice().expect("contiguous row"));
        mle += lse - row[target as usize];
        for &c in scope {
            if c == target {
                continue;
            }
            let p = (row[c as usize] - lse).exp();
            let mut one_minus = 1.0 - p;
            if one_minus < UL_CLAMP {
                one_minus = UL_CLAMP;
                clamped += 1;
            }
            ul -= one_minus.ln();
        }
    }
    Ok(UlLoss { total: mle + alpha * ul, mle, unlikelihood: ul, clamped })
}

/// Rescale a distribution so every non-novel token's probability is scaled
/// by `gamma` and the whole thing renormalized:
/// `p~_i = gamma^[i in non_novel] * p_i / Z`. Training on `-log p~[target]`
/// yields the gradient `p~ - onehot`, i.e. exactly the scaled-gradient rule.
pub fn scalegrad_rescale(
    probs: &[f64],
    non_novel: &BTreeSet<u32>,
    gamma: f64,
) -> Result<Vec<f64>> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::Config(format!("gamma = {gamma} not in (0, 1]")));
    }
    let sum: f64 = probs.iter().sum();
    if probs.iter().any(|&p| !(0.0..=1.0 + 1e-9).contains(&p)) || (sum - 1.0).abs() > 1e-6 {
        return Err(Error::InvalidInput(format!(
            "input is not a probability distribution (sum = {sum})"
        )));
    }
    let mut scaled: Vec<f64> = probs.to_vec();
    for &c in non_novel {
        let c = c as usize;
        if c < scaled.len() {
            scaled[c] *= gamma;
        }
    }
    let z: f64 = scaled.iter().sum();
    for v in &mut scaled {
        *v /= z;
    }
    Ok(scaled)
}

/// Loss sum, predicted-token count, and the gradient of the loss *sum* with
/// respect to the logits, for one sequence under the given objective. Row
/// `i` of `logits` predicts `ids[i + 1]`; the final row has no target and a
/// zero gradient. The dropout objectives share the likelihood path — their
/// masks act in the forward pass, not on the loss.
pub(crate) fn loss_and_dlogits(
    logits: &Array2<f64>,
    ids: &[u32],
    spec: &ObjectiveSpec,
    aux: Option<&ScopeAux>,
) -> Result<(f64, usize, Array2<f64>)> {
    let len = ids.len();
    debug_assert!(len >= 2);
    let vocab = logits.ncols();
    let mut d_logits = Array2::zeros(logits.raw_dim());
    let mut loss = 0.0;

    for row_idx in 0..len - 1 {
        let target = ids[row_idx + 1] as usize;
        let row = logits.row(row_idx);
        let lse = log_sum_exp(row.as_slice().expect("contiguous row"));
        let probs: Array1<f64> = row.mapv(|v| (v - lse).exp());

        match spec {
            ObjectiveSpec::Mle
            | ObjectiveSpec::RepDropout { .. }
            | ObjectiveSpec::RandDropout { .. } => {
                loss += lse - row[target];
                let mut d_row = d_logits.row_mut(row_idx);
                for v in 0..vocab {
                    d_row[v] = probs[v];
                }
                d_row[target] -= 1.0;
            }
            ObjectiveSpec::ScaleGrad { gamma, scope } => {
                let t = row_idx + 2; // 1-indexed position of the target
                let non_novel = select_scope(ids, t, scope, aux)?;
                let scaled =
                    scalegrad_rescale(probs.as_slice().expect("contiguous"), &non_novel, *gamma)?;
                loss -= scaled[target].max(f64::MIN_POSITIVE).ln();
                let mut d_row = d_logits.row_mut(row_idx);
                for v in 0..vocab {
                    d_row[v] = scaled[v];
                }
                d_row[target] -= 1.0;
            }
            ObjectiveSpec::Unlikelihood { alpha, scope } => {
                let t = row_idx + 2;
                let negatives = select_scope(ids, t, scope, aux)?;
                loss += lse - row[target];
                let mut d_row = d_logits.row_mut(row_idx);
                for v in 0..vocab {
                    d_row[v] = probs[v];
                }
                d_row[target] -= 1.0;
                let mut coef_sum = 0.0;
                for &c in &negatives {
                    if c as usize == target {
                        continue;
                    }
                    let p = probs[c as usize];
                    let one_minus = (1.0 - p).max(UL_CLAMP);
                    loss -= alpha * one_minus.ln();
                    let coef = p / one_minus;
                    d_row[c as usize] += alpha * coef;
                    coef_sum += coef;
                }
                if coef_sum != 0.0 {
                    for v in 0..vocab {
                        d_row[v] -= alpha * coef_sum * probs[v];
                    }
                }
            }
        }
    }
    Ok((loss, len - 1, d_logits))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn objective_serde_uses_kind_tags() {
        let spec = ObjectiveSpec::RepDropout { p: 0.6, n: 2 };
        let toml = toml::to_string(&spec).unwrap();
        assert!(toml.contains("kind = \"rep_dropout\""));
        let back: ObjectiveSpec = toml::from_str(&toml).unwrap();
        assert_eq!(back, spec);
        let parsed: ObjectiveSpec = toml::from_str("kind = \"mle\"").unwrap();
        assert_eq!(parsed, ObjectiveSpec::Mle);
    }

    #[test]
    fn validate_rejects_bad_parameters() {
        assert!(ObjectiveSpec::RepDropout { p: 1.5, n: 2 }.validate().is_err());
        assert!(ObjectiveSpec::ScaleGrad { gamma: 0.0, scope: Default::default() }
            .validate()
            .is_err());
        assert!(ObjectiveSpec::Unlikelihood { alpha: -1.0, scope: Default::default() }
            .validate()
            .is_err());
        assert!(ObjectiveSpec::RepDropout { p: 0.6, n: 2 }.validate().is_ok());
    }

    #[test]
    fn select_scope_prefix_all() {
        // [a, b, a, b], t = 4: prefix is a b a
        let s = select_scope(&[1, 2, 1, 2], 4, &PenalizationScope::PrefixAll, None).unwrap();
        assert_eq!(s, BTreeSet::from([1, 2]));
    }

    #[test]
    fn select_scope_prefix_repetitive() {
        // [a, b, c, a, b], t = 5: only a and b participate in a repeated bigram
        let s = select_scope(
            &[1, 2, 3, 1, 2],
            5,
            &PenalizationScope::PrefixRepetitive { n: 2 },
            None,
        )
        .unwrap();
        assert_eq!(s, BTreeSet::from([1, 2]));
    }

    #[test]
    fn select_scope_no_repeats_is_empty() {
        let s = select_scope(
            &[1, 2, 3, 4, 5],
            5,
            &PenalizationScope::PrefixRepetitive { n: 2 },
            None,
        )
        .unwrap();
        assert!(s.is_empty());
    }

    #[test]
    fn select_scope_high_inflow_requires_aux() {
        assert!(select_scope(&[1, 2, 3], 3, &PenalizationScope::HighInflowAll, None).is_err());
        let aux = ScopeAux { high_inflow: HashSet::from([2]) };
        let s =
            select_scope(&[1, 2, 3], 3, &PenalizationScope::HighInflowAll, Some(&aux)).unwrap();
        assert_eq!(s, BTreeSet::from([2]));
    }

    #[test]
    fn unlikelihood_empty_scope_reduces_to_mle() {
        let logits = ndarray::array![[0.3, -0.2, 0.9], [0.1, 0.5, -0.4]];
        let targets = [2u32, 1];
        let scopes = vec![BTreeSet::new(), BTreeSet::new()];
        let ul = unlikelihood_loss(&logits, &targets, &scopes, 1.0).unwrap();
        assert_eq!(ul.total, ul.mle);
        assert_eq!(ul.unlikelihood, 0.0);
    }

    #[test]
    fn unlikelihood_alpha_zero_reduces_to_mle() {
        let logits = ndarray::array![[0.3, -0.2, 0.9]];
        let targets = [0u32];
        let scopes = vec![BTreeSet::from([1, 2])];
        let ul = unlikelihood_loss(&logits, &targets, &scopes, 0.0).unwrap();
        assert_eq!(ul.total, ul.mle);
        assert!(ul.unlikelihood > 0.0);
    }

    #[test]
    fn unlikelihood_single_negative_closed_form() {
        // two tokens with equal logits: p = 0.5 each; one negative gives -ln(0.5)
        let logits = ndarray::array![[1.0, 1.0]];
        let targets = [0u32];
        let scopes = vec![BTreeSet::from([1])];
        let ul = unlikelihood_loss(&logits, &targets, &scopes, 1.0).unwrap();
        assert!((ul.unlikelihood - (2.0f64).ln()).abs() < 1e-12);
        assert_eq!(ul.clamped, 0);
    }

    #[test]
    fn unlikelihood_excludes_target_from_negatives() {
        let logits = ndarray::array![[1.0, 1.0]];
        let targets = [0u32];
        let scopes = vec![BTreeSet::from([0])];
        let ul = unlikelihood_loss(&logits, &targets, &scopes, 1.0).unwrap();
        assert_eq!(ul.unlikelihood, 0.0);
    }

    #[test]
    fn unlikelihood_clamps_certain_negatives() {
        let logits = ndarray::array![[100.0, 0.0]];
        let targets = [1u32];
        let scopes = vec![BTreeSet::from([0])];
        let ul = unlikelihood_loss(&logits, &targets, &scopes, 1.0).unwrap();
        assert_eq!(ul.clamped, 1);
        assert!(ul.total.is_finite());
    }

    #[test]
    fn scalegrad_identity_at_gamma_one() {
        let p = vec![0.25, 0.25, 0.5];
        let out = scalegrad_rescale(&p, &BTreeSet::from([1]), 1.0).unwrap();
        assert_eq!(out, p);
    }

    #[test]
    fn scalegrad_closed_form() {
        let out = scalegrad_rescale(&[0.5, 0.5], &BTreeSet::from([1]), 0.2).unwrap();
        assert!((out[0] - 0.5 / 0.6).abs() < 1e-9);
        assert!((out[1] - 0.1 / 0.6).abs() < 1e-9);
    }

    #[test]
    fn scalegrad_empty_set_is_identity() {
        let p = vec![0.3, 0.7];
        let out = scalegrad_rescale(&p, &BTreeSet::new(), 0.2).unwrap();
        assert_eq!(out, p);
    }

    #[test]
    fn scalegrad_rejects_non_distribution() {
        assert!(scalegrad_rescale(&[0.9, 0.9], &BTreeSet::new(), 0.5).is_err());
        assert!(scalegrad_rescale(&[-0.1, 1.1], &BTreeSet::new(), 0.5).is_err());
    }

    #[test]
    fn random_subset_matches_repetitive_cardinality() {
        let ids = [1u32, 2, 3, 1, 2, 4, 1, 2];
        for t in 2..=ids.len() {
            let rep = select_scope(&ids, t, &PenalizationScope::PrefixRepetitive { n: 2 }, None)
                .unwrap();
            let rand = select_scope(
                &ids,
                t,
                &PenalizationScope::PrefixRandomSubset { n: 2, seed: 5 },
                None,
            )
            .unwrap();
            assert_eq!(rand.len(), rep.len(), "at t = {t}");
        }
    }

    proptest! {
        #[test]
        fn scalegrad_output_sums_to_one_and_shrinks_non_novel(
            raw in proptest::collection::vec(0.05f64..1.0, 4..12),
            gamma in 0.05f64..0.95,
        ) {
            let sum: f64 = raw.iter().sum();
            let probs: Vec<f64> = raw.iter().map(|v| v / sum).collect();
            let non_novel = BTreeSet::from([0u32, 2]);
            let out = scalegrad_rescale(&probs, &non_novel, gamma).unwrap();
            let total: f64 = out.iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-9);
            for &c in &non_novel {
                prop_assert!(out[c as usize] < probs[c as usize]);
            }
        }

        #[test]
        fn prefix_repetitive_is_subset_of_prefix_all(
            ids in proptest::collection::vec(0u32..5, 3..24),
            t_frac in 0.0f64..1.0,
        ) {
            let t = 2 + ((ids.len() - 2) as f64 * t_frac) as usize;
            let all = select_scope(&ids, t, &PenalizationScope::PrefixAll, None).unwrap();
            let rep = select_scope(&ids, t, &PenalizationScope::PrefixRepetitive { n: 2 }, None).unwrap();
            prop_assert!(rep.is_subset(&all));
        }

        #[test]
        fn unlikelihood_never_below_mle(
            seed in 0u64..400,
            alpha in 0.0f64..2.0,
        ) {
            use rand::Rng;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let vocab = 6;
            let logits = Array2::from_shape_fn((3, vocab), |_| rng.random::<f64>() * 4.0 - 2.0);
            let targets = [0u32, 3, 5];
            let scopes: Vec<BTreeSet<u32>> = (0..3)
                .map(|i| (0..i as u32 + 1).collect())
                .collect();
            let ul = unlikelihood_loss(&logits, &targets, &scopes, alpha).unwrap();
            prop_assert!(ul.total >= ul.mle - 1e-12);
            if alpha == 0.0 {
                prop_assert!((ul.total - ul.mle).abs() < 1e-15);
            }
        }
    }
}
