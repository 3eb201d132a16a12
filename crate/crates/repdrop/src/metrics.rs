//! Repetition metrics (rep-n, rep-w, rep-r) and perplexity.
//!
//! All metrics operate on token-id slices so they are independent of the
//! tokenization scheme. Corpus-level values are unweighted means over the
//! qualifying sequences; sequences too short for a metric are skipped and
//! counted, never zero-filled.

use std::collections::{BTreeMap, HashMap, HashSet};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{forward, ModelConfig, Parameters};

/// Default n-gram length for repetition measurements.
pub const DEFAULT_NGRAM: usize = 2;
/// Default window length for rep-w.
pub const DEFAULT_WINDOW: usize = 16;

/// Settings for the repetition metrics.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct MetricConfig {
    /// n-gram length used by rep-n.
    pub n: usize,
    /// Window length used by rep-w.
    pub w: usize,
}

impl Default for MetricConfig {
    fn default() -> Self {
        MetricConfig { n: DEFAULT_NGRAM, w: DEFAULT_WINDOW }
    }
}

/// Fraction of n-gram positions whose n-gram is a duplicate:
/// `1 - |unique n-grams| / (L - n + 1)`.
///
/// Errors when the sequence is shorter than `n`.
pub fn rep_n(ids: &[u32], n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidInput("n must be >= 1".into()));
    }
    let len = ids.len();
    if len < n {
        return Err(Error::SequenceTooShort { len, n });
    }
    let total = len - n + 1;
    let unique: HashSet<&[u32]> = ids.windows(n).collect();
    Ok(1.0 - unique.len() as f64 / total as f64)
}

/// Fraction of tokens that already occur among the previous `min(w, t-1)`
/// tokens. The window is clipped at the start of the sequence; the first
/// token can never be a repeat. Returns 0.0 for an empty sequence.
pub fn rep_w(ids: &[u32], w: usize) -> f64 {
    let len = ids.len();
    if len == 0 {
        return 0.0;
    }
    let mut hits = 0usize;
    for t in 0..len {
        let start = t.saturating_sub(w);
        if ids[start..t].contains(&ids[t]) {
            hits += 1;
        }
    }
    hits as f64 / len as f64
}

/// Fraction of positions participating in a repeated bigram, looking either
/// forward (the bigram starting here also starts elsewhere) or backward (the
/// bigram ending here also ends elsewhere). The first position has no
/// backward bigram and the last none forward; only the applicable clause is
/// evaluated there.
pub fn rep_r(ids: &[u32]) -> Result<f64> {
    let len = ids.len();
    if len < 2 {
        return Err(Error::SequenceTooShort { len, n: 2 });
    }
    let mut counts: HashMap<&[u32], u32> = HashMap::new();
    for win in ids.windows(2) {
        *counts.entry(win).or_insert(0) += 1;
    }
    let mut hits = 0usize;
    for i in 0..len {
        let fwd = i + 1 < len && counts[&ids[i..i + 2]] >= 2;
        let bwd = i >= 1 && counts[&ids[i - 1..i + 1]] >= 2;
        if fwd || bwd {
            hits += 1;
        }
    }
    Ok(hits as f64 / len as f64)
}

/// A corpus-level metric value together with how many sequences entered the
/// mean and how many were skipped as too short.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct CorpusMetric {
    pub value: f64,
    pub used: usize,
    pub skipped: usize,
}

/// Unweighted mean of per-sequence rep-n over all sequences of length >= n.
pub fn corpus_rep_n<S: AsRef<[u32]>>(seqs: &[S], n: usize) -> Result<CorpusMetric> {
    corpus_mean(seqs, |ids| rep_n(ids, n).ok())
}

/// Unweighted mean of per-sequence rep-w (every non-empty sequence qualifies).
pub fn corpus_rep_w<S: AsRef<[u32]>>(seqs: &[S], w: usize) -> Result<CorpusMetric> {
    corpus_mean(seqs, |ids| if ids.is_empty() { None } else { Some(rep_w(ids, w)) })
}

/// Unweighted mean of per-sequence rep-r over all sequences of length >= 2.
pub fn corpus_rep_r<S: AsRef<[u32]>>(seqs: &[S]) -> Result<CorpusMetric> {
    corpus_mean(seqs, |ids| rep_r(ids).ok())
}

fn corpus_mean<S: AsRef<[u32]>>(
    seqs: &[S],
    per_seq: impl Fn(&[u32]) -> Option<f64>,
) -> Result<CorpusMetric> {
    let mut sum = 0.0;
    let mut used = 0usize;
    let mut skipped = 0usize;
    for seq in seqs {
        match per_seq(seq.as_ref()) {
            Some(v) => {
                sum += v;
                used += 1;
            }
            None => skipped += 1,
        }
    }
    if used == 0 {
        return Err(Error::NoQualifyingSequences(
            "every sequence is shorter than the metric requires".into(),
        ));
    }
    Ok(CorpusMetric { value: sum / used as f64, used, skipped })
}

/// Perplexity of a model on a set of documents: `exp` of the mean per-token
/// negative log-likelihood under teacher forcing. Tokens are predicted from
/// the second position onward, so documents shorter than two tokens
/// contribute nothing. The mean is token-weighted across the whole corpus,
/// which makes the value independent of document order.
pub fn perplexity<S: AsRef<[u32]>>(
    config: &ModelConfig,
    params: &Parameters,
    docs: &[S],
) -> Result<f64> {
    for d in docs {
        if let Some(&bad) = d.as_ref().iter().find(|&&id| id as usize >= config.vocab) {
            return Err(Error::VocabMismatch(format!(
                "token id {bad} out of range for model vocabulary of {}",
                config.vocab
            )));
        }
    }
    perplexity_with(|ids| forward(config, params, ids, None).expect("forward"), docs)
}

/// Perplexity against an arbitrary logit function. `logits_for` must return
/// one row per position, row `i` scoring the token at position `i + 1`.
pub fn perplexity_with<S, F>(logits_for: F, docs: &[S]) -> Result<f64>
where
    S: AsRef<[u32]>,
    F: Fn(&[u32]) -> Array2<f64>,
{
    let mut total_nll = 0.0;
    let mut total_tokens = 0usize;
    for doc in docs {
        let ids = doc.as_ref();
        if ids.len() < 2 {
            continue;
        }
        let logits = logits_for(ids);
        total_nll += sequence_nll(&logits, ids);
        total_tokens += ids.len() - 1;
    }
    if total_tokens == 0 {
        return Err(Error::NoQualifyingSequences(
            "no document has at least two tokens".into(),
        ));
    }
    Ok((total_nll / total_tokens as f64).exp())
}

/// Sum of `-log P(ids[t] | ids[..t])` for t in 1..L given per-position logits.
pub(crate) fn sequence_nll(logits: &Array2<f64>, ids: &[u32]) -> f64 {
    let mut nll = 0.0;
    for t in 1..ids.len() {
        let row = logits.row(t - 1);
        nll += log_sum_exp(row.as_slice().expect("contiguous row")) - row[ids[t] as usize];
    }
    nll
}

/// Numerically stable log(sum(exp(xs))).
pub(crate) fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let sum: f64 = xs.iter().map(|&x| (x - max).exp()).sum();
    max + sum.ln()
}

/// Aggregated repetition metrics for a corpus or a set of generations,
/// matching the usual report layout: rep-n for several n, rep-w, rep-r and
/// optionally perplexity on real data.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MetricsReport {
    /// n -> corpus rep-n fraction.
    pub rep_n: BTreeMap<usize, f64>,
    pub rep_w: f64,
    pub rep_r: f64,
    /// Perplexity on real data, when a model was evaluated.
    pub ppl: Option<f64>,
    pub num_sequences: usize,
    /// n -> number of sequences skipped as shorter than n.
    pub skipped: BTreeMap<usize, usize>,
}

impl MetricsReport {
    /// Compute rep-n for each requested n plus rep-w and rep-r.
    pub fn compute<S: AsRef<[u32]>>(seqs: &[S], ns: &[usize], w: usize) -> Result<Self> {
        let mut rep = BTreeMap::new();
        let mut skipped = BTreeMap::new();
        for &n in ns {
            let m = corpus_rep_n(seqs, n)?;
            rep.insert(n, m.value);
            skipped.insert(n, m.skipped);
        }
        let rw = corpus_rep_w(seqs, w)?;
        let rr = corpus_rep_r(seqs)?;
        Ok(MetricsReport {
            rep_n: rep,
            rep_w: rw.value,
            rep_r: rr.value,
            ppl: None,
            num_sequences: seqs.len(),
            skipped,
        })
    }

    /// CSV header matching the report column order.
    pub fn csv_header() -> &'static str {
        "Rep-2(%),Rep-3(%),Rep-4(%),Rep-w(%),Rep-r(%),PPL"
    }

    /// One CSV row, percentages with two decimals, `-` for a missing value.
    pub fn csv_row(&self) -> String {
        let pct = |v: Option<&f64>| match v {
            Some(v) => format!("{:.2}", v * 100.0),
            None => "-".to_string(),
        };
        format!(
            "{},{},{},{:.2},{:.2},{}",
            pct(self.rep_n.get(&2)),
            pct(self.rep_n.get(&3)),
            pct(self.rep_n.get(&4)),
            self.rep_w * 100.0,
            self.rep_r * 100.0,
            match self.ppl {
                Some(p) => format!("{p:.2}"),
                None => "-".to_string(),
            }
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rep_n_all_unique_is_zero() {
        assert_eq!(rep_n(&[1, 2, 3, 4], 2).unwrap(), 0.0);
    }

    #[test]
    fn rep_n_alternating_bigrams() {
        // bigrams (a,b), (b,a), (a,b): two unique over three positions
        let v = rep_n(&[1, 2, 1, 2], 2).unwrap();
        assert!((v - (1.0 - 2.0 / 3.0)).abs() < 1e-15);
    }

    #[test]
    fn rep_n_constant_sequence() {
        assert_eq!(rep_n(&[7, 7, 7, 7, 7], 2).unwrap(), 0.75);
    }

    #[test]
    fn rep_n_too_short_errors() {
        assert!(matches!(
            rep_n(&[1], 2),
            Err(Error::SequenceTooShort { len: 1, n: 2 })
        ));
    }

    #[test]
    fn rep_w_all_distinct_is_zero() {
        assert_eq!(rep_w(&[1, 2, 3, 4, 5], 16), 0.0);
    }

    #[test]
    fn rep_w_alternating() {
        assert_eq!(rep_w(&[1, 2, 1, 2], 16), 0.5);
    }

    #[test]
    fn rep_w_constant() {
        assert_eq!(rep_w(&[1, 1, 1, 1], 16), 0.75);
    }

    #[test]
    fn rep_w_window_clipping() {
        // with w = 1 only the immediately preceding token counts
        assert_eq!(rep_w(&[1, 1, 2, 1], 1), 0.25);
    }

    #[test]
    fn rep_r_all_distinct_is_zero() {
        assert_eq!(rep_r(&[1, 2, 3, 4]).unwrap(), 0.0);
    }

    #[test]
    fn rep_r_alternating_is_one() {
        assert_eq!(rep_r(&[1, 2, 1, 2]).unwrap(), 1.0);
    }

    #[test]
    fn rep_r_partial() {
        // positions 0,1,3,4 participate in the repeated bigram (a,b)
        assert_eq!(rep_r(&[1, 2, 3, 1, 2]).unwrap(), 0.8);
    }

    #[test]
    fn rep_r_too_short_errors() {
        assert!(rep_r(&[1]).is_err());
    }

    #[test]
    fn corpus_rep_n_is_unweighted_mean() {
        let seqs = vec![vec![1u32, 2, 3, 4], vec![1, 2, 1, 2]];
        let m = corpus_rep_n(&seqs, 2).unwrap();
        assert!((m.value - (0.0 + (1.0 - 2.0 / 3.0)) / 2.0).abs() < 1e-15);
        assert_eq!(m.used, 2);
        assert_eq!(m.skipped, 0);
    }

    #[test]
    fn corpus_rep_n_single_sequence() {
        let seqs = vec![vec![7u32, 7, 7, 7, 7]];
        assert_eq!(corpus_rep_n(&seqs, 2).unwrap().value, 0.75);
    }

    #[test]
    fn corpus_rep_n_skips_short_sequences() {
        let seqs = vec![vec![1u32], vec![1, 2, 3, 4]];
        let m = corpus_rep_n(&seqs, 2).unwrap();
        assert_eq!(m.used, 1);
        assert_eq!(m.skipped, 1);
    }

    #[test]
    fn corpus_rep_n_errors_when_nothing_qualifies() {
        let seqs = vec![vec![1u32]];
        assert!(corpus_rep_n(&seqs, 2).is_err());
    }

    #[test]
    fn perplexity_uniform_model_equals_vocab_size() {
        let vocab = 37usize;
        let docs = vec![vec![0u32, 5, 9, 12, 3]];
        let ppl = perplexity_with(
            |ids| Array2::zeros((ids.len(), vocab)),
            &docs,
        )
        .unwrap();
        assert!((ppl - vocab as f64).abs() / vocab as f64 < 1e-12);
    }

    #[test]
    fn perplexity_one_hot_model_is_one() {
        let vocab = 5usize;
        let docs = vec![vec![0u32, 3, 1, 4]];
        let ppl = perplexity_with(
            |ids| {
                let mut logits = Array2::from_elem((ids.len(), vocab), f64::NEG_INFINITY);
                for (row, &next) in ids.iter().skip(1).enumerate() {
                    logits[[row, next as usize]] = 0.0;
                }
                logits
            },
            &docs,
        )
        .unwrap();
        assert_eq!(ppl, 1.0);
    }

    #[test]
    fn perplexity_fifty_fifty_is_two() {
        let docs = vec![vec![0u32, 1, 0, 1, 1]];
        let ppl = perplexity_with(|ids| Array2::zeros((ids.len(), 2)), &docs).unwrap();
        assert!((ppl - 2.0).abs() < 1e-12);
    }

    #[test]
    fn perplexity_invariant_under_document_order() {
        let a = vec![0u32, 1, 2, 1, 0];
        let b = vec![2u32, 2, 0];
        let logit_fn = |ids: &[u32]| {
            let mut l = Array2::zeros((ids.len(), 3));
            for (i, &id) in ids.iter().enumerate() {
                l[[i, id as usize]] = 0.5 + 0.1 * i as f64;
            }
            l
        };
        let p1 = perplexity_with(logit_fn, &[a.clone(), b.clone()]).unwrap();
        let p2 = perplexity_with(logit_fn, &[b, a]).unwrap();
        assert!((p1 - p2).abs() / p1 < 1e-12);
    }

    #[test]
    fn report_csv_row_formats_percentages() {
        let seqs = vec![vec![1u32, 2, 1, 2, 3, 4, 5, 6]];
        let report = MetricsReport::compute(&seqs, &[2, 3, 4], 16).unwrap();
        let row = report.csv_row();
        assert_eq!(row.split(',').count(), 6);
        assert!(row.ends_with("-"));
    }

    /// Quadratic reference: a position's n-gram is repetitive if any other
    /// position holds the same n-gram.
    fn rep_n_bruteforce(ids: &[u32], n: usize) -> f64 {
        let total = ids.len() - n + 1;
        let mut unique = 0usize;
        for i in 0..total {
            let mut first = true;
            for j in 0..i {
                if ids[i..i + n] == ids[j..j + n] {
                    first = false;
                    break;
                }
            }
            if first {
                unique += 1;
            }
        }
        1.0 - unique as f64 / total as f64
    }

    proptest! {
        #[test]
        fn rep_n_matches_bruteforce(ids in proptest::collection::vec(0u32..8, 2..64), n in 1usize..4) {
            prop_assume!(ids.len() >= n);
            let fast = rep_n(&ids, n).unwrap();
            let slow = rep_n_bruteforce(&ids, n);
            prop_assert_eq!(fast, slow);
        }

        #[test]
        fn rep_n_invariant_under_relabeling(ids in proptest::collection::vec(0u32..8, 2..64)) {
            // any permutation of token ids leaves rep-n unchanged
            let relabeled: Vec<u32> = ids.iter().map(|&x| 7 - x).collect();
            prop_assert_eq!(rep_n(&ids, 2).unwrap(), rep_n(&relabeled, 2).unwrap());
        }

        #[test]
        fn rep_w_never_seen_token_does_not_increase_hits(ids in proptest::collection::vec(0u32..8, 1..64)) {
            let base = rep_w(&ids, 16) * ids.len() as f64;
            let mut extended = ids.clone();
            extended.push(99); // never seen before
            let after = rep_w(&extended, 16) * extended.len() as f64;
            prop_assert!((after - base).abs() < 1e-9);
        }

        #[test]
        fn rep_n_within_bounds(ids in proptest::collection::vec(0u32..4, 2..64)) {
            let v = rep_n(&ids, 2).unwrap();
            let max = 1.0 - 1.0 / (ids.len() - 1) as f64;
            prop_assert!((0.0..=max + 1e-12).contains(&v));
        }
    }
}
