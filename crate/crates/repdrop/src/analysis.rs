//! Corpus- and model-level analyses: inflow statistics and high-inflow pair
//! merging, set-overlap reporting, the self-reinforcement probe, and
//! repetition-amplification ratios. Also home to the small statistics
//! helpers (Spearman rank correlation, one-sided sign test) used by the
//! reporting command.

use std::collections::{HashMap, HashSet};
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, TokenSeq, Vocabulary};
use crate::error::{Error, Result};
use crate::mask::{find_ngrams, LayerMaskSet, RepetitionMask};
use crate::metrics::log_sum_exp;
use crate::model::{forward, ModelConfig, Parameters};

/// The inflow of a word is the sum of its conditional probabilities over all
/// observed predecessors: `inflow(w) = sum_v P(w | v)` with `P` taken from
/// raw bigram relative frequencies (no smoothing).
#[derive(Clone, Debug)]
pub struct InflowTable {
    pub inflow: HashMap<u32, f64>,
    pub bigram_counts: HashMap<(u32, u32), u64>,
    /// Occurrences of each token as a predecessor.
    pub predecessor_totals: HashMap<u32, u64>,
    pub threshold_rule: HighInflowRule,
}

/// How to decide which words count as high-inflow.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum HighInflowRule {
    /// Words whose inflow exceeds a fixed threshold.
    Threshold { value: f64 },
    /// Calibrate the threshold so the selected pairs cover (as nearly as
    /// possible) this fraction of corpus words.
    TargetCoverage { fraction: f64 },
}

impl Default for HighInflowRule {
    fn default() -> Self {
        HighInflowRule::Threshold { value: 0.03 }
    }
}

/// Accumulate bigram counts over adjacent pairs within each document and
/// derive the inflow table. Deterministic.
pub fn compute_inflow(corpus: &Corpus) -> InflowTable {
    let mut bigram_counts: HashMap<(u32, u32), u64> = HashMap::new();
    let mut predecessor_totals: HashMap<u32, u64> = HashMap::new();
    for doc in &corpus.documents {
        for win in doc.ids.windows(2) {
            *bigram_counts.entry((win[0], win[1])).or_insert(0) += 1;
            *predecessor_totals.entry(win[0]).or_insert(0) += 1;
        }
    }
    let mut inflow: HashMap<u32, f64> = HashMap::new();
    for (&(v, w), &count) in &bigram_counts {
        let p = count as f64 / predecessor_totals[&v] as f64;
        *inflow.entry(w).or_insert(0.0) += p;
    }
    InflowTable {
        inflow,
        bigram_counts,
        predecessor_totals,
        threshold_rule: HighInflowRule::default(),
    }
}

impl InflowTable {
    /// `P(w | v)` from the accumulated counts, 0.0 when `v` was never seen.
    pub fn conditional(&self, v: u32, w: u32) -> f64 {
        match (self.bigram_counts.get(&(v, w)), self.predecessor_totals.get(&v)) {
            (Some(&c), Some(&t)) => c as f64 / t as f64,
            _ => 0.0,
        }
    }

    pub fn inflow_of(&self, w: u32) -> f64 {
        self.inflow.get(&w).copied().unwrap_or(0.0)
    }
}

/// Outcome of high-inflow pair selection.
#[derive(Clone, Debug)]
pub struct HighInflowSelection {
    /// Observed bigrams `(v, w)` whose second word is high-inflow.
    pub pairs: HashSet<(u32, u32)>,
    /// High-inflow words themselves (the second components).
    pub words: HashSet<u32>,
    pub threshold: f64,
    /// Fraction of corpus words covered by occurrences of selected pairs.
    pub coverage: f64,
}

/// Select the observed bigrams whose second word's inflow exceeds the rule's
/// threshold. With [`HighInflowRule::TargetCoverage`] the threshold is swept
/// over the distinct inflow values to land the word coverage nearest the
/// target. Coverage counts every corpus position that is part of at least
/// one selected-pair occurrence.
pub fn select_high_inflow_pairs(
    table: &InflowTable,
    rule: &HighInflowRule,
    corpus: &Corpus,
) -> HighInflowSelection {
    let select = |threshold: f64| -> HighInflowSelection {
        let words: HashSet<u32> = table
            .inflow
            .iter()
            .filter(|(_, &f)| f > threshold)
            .map(|(&w, _)| w)
            .collect();
        let pairs: HashSet<(u32, u32)> = table
            .bigram_counts
            .keys()
            .filter(|(_, w)| words.contains(w))
            .copied()
            .collect();
        let coverage = pair_coverage(corpus, &pairs);
        HighInflowSelection { pairs, words, threshold, coverage }
    };

    match *rule {
        HighInflowRule::Threshold { value } => select(value),
        HighInflowRule::TargetCoverage { fraction } => {
            let mut thresholds: Vec<f64> = table.inflow.values().copied().collect();
            thresholds.push(0.0);
            thresholds.sort_by(|a, b| a.partial_cmp(b).unwrap());
            thresholds.dedup();
            // coverage is monotone nonincreasing in the threshold
            let mut best = select(f64::INFINITY);
            let mut best_gap = (best.coverage - fraction).abs();
            let (mut lo, mut hi) = (0usize, thresholds.len());
            while lo < hi {
                let mid = (lo + hi) / 2;
                let cand = select(thresholds[mid]);
                let gap = (cand.coverage - fraction).abs();
                if gap < best_gap || (gap == best_gap && cand.coverage < best.coverage) {
                    best_gap = gap;
                    best = cand.clone();
                }
                if cand.coverage > fraction {
                    lo = mid + 1;
                } else {
                    hi = mid;
                }
            }
            best
        }
    }
}

/// Fraction of corpus positions that belong to at least one occurrence of a
/// pair in `pairs`.
pub fn pair_coverage(corpus: &Corpus, pairs: &HashSet<(u32, u32)>) -> f64 {
    if corpus.total_words == 0 {
        return 0.0;
    }
    let mut covered = 0usize;
    for doc in &corpus.documents {
        let ids = &doc.ids;
        let mut flags = vec![false; ids.len()];
        for i in 0..ids.len().saturating_sub(1) {
            if pairs.contains(&(ids[i], ids[i + 1])) {
                flags[i] = true;
                flags[i + 1] = true;
            }
        }
        covered += flags.iter().filter(|&&f| f).count();
    }
    covered as f64 / corpus.total_words as f64
}

/// Which pair occurrences a merge pass fuses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MergeFilter {
    /// Every occurrence of a selected pair.
    All,
    /// Only occurrences whose bigram repeats within the same document.
    RepetitiveOnly { n: usize },
    /// A per-document random subset of occurrences, size-matched (before
    /// overlap resolution) to what `RepetitiveOnly` would fuse.
    RandomSubset { n: usize, seed: u64 },
}

/// Result of re-encoding a corpus by pair merging.
#[derive(Clone, Debug)]
pub struct MergeOutcome {
    pub corpus: Corpus,
    pub vocab: Vocabulary,
    /// fused token id -> (left id, right id); inverting this map restores
    /// the original stream exactly.
    pub fused: HashMap<u32, (u32, u32)>,
    /// Number of original words consumed by fusions.
    pub merged_words: usize,
    /// merged_words / total corpus words.
    pub word_percent: f64,
}

/// Merge every occurrence of the selected pairs (greedy non-overlapping
/// left-to-right scan), extending the vocabulary with one fused token per
/// distinct pair actually merged.
pub fn merge_pairs(
    corpus: &Corpus,
    vocab: &Vocabulary,
    pairs: &HashSet<(u32, u32)>,
) -> Result<MergeOutcome> {
    merge_pairs_filtered(corpus, vocab, pairs, MergeFilter::All)
}

/// [`merge_pairs`] with occurrence-level filtering (used by the
/// repetitive-only and random-subset re-encoding ablations).
pub fn merge_pairs_filtered(
    corpus: &Corpus,
    vocab: &Vocabulary,
    pairs: &HashSet<(u32, u32)>,
    filter: MergeFilter,
) -> Result<MergeOutcome> {
    use rand::SeedableRng;
    let mut vocab = vocab.clone();
    let mut fused_ids: HashMap<(u32, u32), u32> = HashMap::new();
    let mut fused: HashMap<u32, (u32, u32)> = HashMap::new();
    let mut merged_words = 0usize;
    let mut documents = Vec::with_capacity(corpus.documents.len());

    for (doc_idx, doc) in corpus.documents.iter().enumerate() {
        let ids = &doc.ids;
        // decide which candidate start positions are allowed to merge
        let allowed: Vec<bool> = match filter {
            MergeFilter::All => vec![true; ids.len().saturating_sub(1)],
            MergeFilter::RepetitiveOnly { .. } | MergeFilter::RandomSubset { .. } => {
                let mut counts: HashMap<(u32, u32), u32> = HashMap::new();
                for win in ids.windows(2) {
                    *counts.entry((win[0], win[1])).or_insert(0) += 1;
                }
                let repetitive: Vec<bool> = (0..ids.len().saturating_sub(1))
                    .map(|i| counts[&(ids[i], ids[i + 1])] >= 2)
                    .collect();
                match filter {
                    MergeFilter::RepetitiveOnly { .. } => repetitive,
                    MergeFilter::RandomSubset { seed, .. } => {
                        let candidates: Vec<usize> = (0..repetitive.len())
                            .filter(|&i| pairs.contains(&(ids[i], ids[i + 1])))
                            .collect();
                        let quota = candidates
                            .iter()
                            .filter(|&&i| repetitive[i])
                            .count()
                            .min(candidates.len());
                        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(
                            crate::mask::derive_seed(seed, doc_idx as u64, 0),
                        );
                        let chosen =
                            rand::seq::index::sample(&mut rng, candidates.len(), quota);
                        let mut allowed = vec![false; repetitive.len()];
                        for c in chosen {
                            allowed[candidates[c]] = true;
                        }
                        allowed
                    }
                    MergeFilter::All => unreachable!(),
                }
            }
        };

        let mut out = Vec::with_capacity(ids.len());
        let mut i = 0usize;
        while i < ids.len() {
            let mergeable = i + 1 < ids.len()
                && pairs.contains(&(ids[i], ids[i + 1]))
                && allowed[i];
            if mergeable {
                let pair = (ids[i], ids[i + 1]);
                let id = match fused_ids.get(&pair) {
                    Some(&id) => id,
                    None => {
                        let left = vocab.token(pair.0).unwrap_or("?").to_string();
                        let right = vocab.token(pair.1).unwrap_or("?").to_string();
                        // the joiner is a space, which whitespace
                        // tokenization can never produce, so fused tokens
                        // cannot collide with ordinary ones
                        let id = vocab.push_token(format!("{left} {right}"))?;
                        fused_ids.insert(pair, id);
                        fused.insert(id, pair);
                        id
                    }
                };
                out.push(id);
                merged_words += 2;
                i += 2;
            } else {
                out.push(ids[i]);
                i += 1;
            }
        }
        documents.push(TokenSeq::new(out));
    }

    let word_percent = if corpus.total_words == 0 {
        0.0
    } else {
        merged_words as f64 / corpus.total_words as f64
    };
    Ok(MergeOutcome {
        corpus: Corpus::new(corpus.name.clone(), documents),
        vocab,
        fused,
        merged_words,
        word_percent,
    })
}

/// Undo [`merge_pairs`]: expand every fused token back into its pair.
pub fn unmerge(corpus: &Corpus, fused: &HashMap<u32, (u32, u32)>) -> Corpus {
    let documents = corpus
        .documents
        .iter()
        .map(|doc| {
            let mut out = Vec::with_capacity(doc.len() * 2);
            for &id in &doc.ids {
                match fused.get(&id) {
                    Some(&(a, b)) => {
                        out.push(a);
                        out.push(b);
                    }
                    None => out.push(id),
                }
            }
            TokenSeq::new(out)
        })
        .collect();
    Corpus::new(corpus.name.clone(), documents)
}

/// Set-overlap summary.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct OverlapReport {
    pub size_a: usize,
    pub size_b: usize,
    pub size_intersection: usize,
    /// |A ∩ B| / |A|.
    pub frac_a_in_b: f64,
}

/// Exact set arithmetic between two sets over the same universe.
/// Errors when `a` is empty (the fraction would be undefined).
pub fn overlap_report<T: Eq + Hash>(a: &HashSet<T>, b: &HashSet<T>) -> Result<OverlapReport> {
    if a.is_empty() {
        return Err(Error::InvalidInput("overlap against an empty set".into()));
    }
    let size_intersection = a.intersection(b).count();
    Ok(OverlapReport {
        size_a: a.len(),
        size_b: b.len(),
        size_intersection,
        frac_a_in_b: size_intersection as f64 / a.len() as f64,
    })
}

/// One probe target: the last occurrence of a repeated n-gram, scored with
/// and without its earlier occurrences visible in the context.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProbeResult {
    pub ngram: Vec<u32>,
    /// Half-open span of the last occurrence.
    pub span: (usize, usize),
    pub p_unmasked: f64,
    pub p_masked: f64,
    /// `p_unmasked - p_masked`.
    pub delta: f64,
}

/// For every n-gram type with at least two occurrences, compute the model's
/// teacher-forced probability of the *last* occurrence (product over its
/// span) twice: once normally and once with the keys of all earlier
/// occurrences masked at every layer. A context-independent model yields
/// delta exactly zero.
pub fn self_reinforcement_probe(
    config: &ModelConfig,
    params: &Parameters,
    ids: &[u32],
    n: usize,
) -> Result<Vec<ProbeResult>> {
    let index = find_ngrams(ids, n);
    let mut results = Vec::new();
    for (gram, spans) in index.repeated() {
        let &(start, end) = spans.last().expect("repeated implies non-empty");
        // hide only context strictly before the target span
        let positions: Vec<usize> = spans[..spans.len() - 1]
            .iter()
            .flat_map(|&(s, e)| s..e)
            .filter(|&p| p < start)
            .collect();
        let p_unmasked = span_probability(config, params, ids, (start, end), None)?;
        let mask = RepetitionMask::from_positions(ids.len(), &positions, 1.0, n, 0);
        let set = LayerMaskSet::uniform(mask, config.layers);
        let p_masked = span_probability(config, params, ids, (start, end), Some(&set))?;
        results.push(ProbeResult {
            ngram: gram.to_vec(),
            span: (start, end),
            p_unmasked,
            p_masked,
            delta: p_unmasked - p_masked,
        });
    }
    Ok(results)
}

/// Teacher-forced probability of the tokens in `span` (product over the
/// span), under an optional attention mask. The span must not start at
/// position 0 — there is nothing to condition the first token on.
pub(crate) fn span_probability(
    config: &ModelConfig,
    params: &Parameters,
    ids: &[u32],
    span: (usize, usize),
    masks: Option<&LayerMaskSet>,
) -> Result<f64> {
    let (start, end) = span;
    if start == 0 || end > ids.len() || start >= end {
        return Err(Error::InvalidInput(format!("span {span:?} not scoreable")));
    }
    let logits = forward(config, params, ids, masks)?;
    let mut log_p = 0.0;
    for t in start..end {
        let row = logits.row(t - 1);
        log_p += row[ids[t] as usize] - log_sum_exp(row.as_slice().expect("contiguous"));
    }
    Ok(log_p.exp())
}

/// Ratio of generated to training rep-2.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct AmplificationReport {
    pub train_rep2: f64,
    pub generated_rep2: f64,
    pub ratio: f64,
}

pub fn amplification_report(train_rep2: f64, generated_rep2: f64) -> Result<AmplificationReport> {
    if !(train_rep2 > 0.0) {
        return Err(Error::UndefinedRatio);
    }
    Ok(AmplificationReport { train_rep2, generated_rep2, ratio: generated_rep2 / train_rep2 })
}

/// Spearman rank correlation with average ranks for ties. Returns NaN for
/// fewer than two points or zero variance.
pub fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let rx = average_ranks(xs);
    let ry = average_ranks(ys);
    pearson(&rx, &ry)
}

fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].partial_cmp(&xs[b]).unwrap().then(a.cmp(&b)));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    if n < 2.0 {
        return f64::NAN;
    }
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    sxy / (sxx * syy).sqrt()
}

/// One-sided sign test: probability of at least `positives` successes out of
/// `positives + negatives` fair coin flips. Zero differences are excluded by
/// the caller.
pub fn sign_test_p_value(positives: usize, negatives: usize) -> f64 {
    let n = positives + negatives;
    if n == 0 {
        return 1.0;
    }
    // P(k) = C(n, k) / 2^n via the multiplicative recurrence
    let mut p_k = 0.5f64.powi(n as i32); // P(0)
    let mut tail = 0.0;
    for k in 0..=n {
        if k >= positives {
            tail += p_k;
        }
        if k < n {
            p_k *= (n - k) as f64 / (k + 1) as f64;
        }
    }
    tail.min(1.0)
}
