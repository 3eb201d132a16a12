//! Repetition-dropout masks: locate repeated n-grams in a sequence and drop
//! attention to them during training.
//!
//! A [`RepetitionMask`] holds one additive value per position, either `0.0`
//! (visible) or [`MASK_NEG`] (hidden). Masking is over attention *keys*:
//! adding the mask to column `j` of the causal attention matrix hides
//! position `j` as an attention target for every query. The diagonal is
//! always forced back to zero so no softmax row is left without a finite
//! entry.
//!
//! Mask generation draws one Bernoulli sample per *n-gram type* that occurs
//! at least twice; on success every occurrence of that type is hidden,
//! including the first. With a dropout rate of 0 nothing is masked, with a
//! rate of 1 exactly the positions covered by repeated n-grams are masked.

use std::io::{Read, Write};

use indexmap::IndexMap;
use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Additive stand-in for minus infinity in attention logits. Kept finite so
/// arithmetic stays NaN-free; after softmax the weight of a masked entry
/// underflows to exactly zero.
pub const MASK_NEG: f64 = -1e30;

/// All n-grams of a sequence with their half-open `(start, end)` spans,
/// `end = start + n`, in first-occurrence order. Overlapping occurrences are
/// all recorded.
#[derive(Clone, Debug, Default)]
pub struct NgramIndex {
    pub spans: IndexMap<Box<[u32]>, Vec<(usize, usize)>>,
}

impl NgramIndex {
    /// Entries whose n-gram occurs at least twice.
    pub fn repeated(&self) -> impl Iterator<Item = (&Box<[u32]>, &Vec<(usize, usize)>)> {
        self.spans.iter().filter(|(_, spans)| spans.len() > 1)
    }

    pub fn total_positions(&self) -> usize {
        self.spans.values().map(Vec::len).sum()
    }
}

/// Record every n-gram of `ids` with its span. A sequence shorter than `n`
/// yields an empty index, mirroring the generation loop's bounds.
pub fn find_ngrams(ids: &[u32], n: usize) -> NgramIndex {
    assert!(n >= 1, "n must be >= 1");
    let mut spans: IndexMap<Box<[u32]>, Vec<(usize, usize)>> = IndexMap::new();
    if ids.len() < n {
        return NgramIndex { spans };
    }
    for start in 0..=ids.len() - n {
        let gram: Box<[u32]> = ids[start..start + n].into();
        spans.entry(gram).or_default().push((start, start + n));
    }
    NgramIndex { spans }
}

/// Positions covered by at least one n-gram type occurring two or more times.
pub fn repetitive_coverage(ids: &[u32], n: usize) -> Vec<bool> {
    let mut covered = vec![false; ids.len()];
    for (_, spans) in find_ngrams(ids, n).repeated() {
        for &(s, e) in spans {
            for flag in &mut covered[s..e] {
                *flag = true;
            }
        }
    }
    covered
}

/// Number of positions covered by repeated n-grams.
pub fn count_repetitive_tokens(ids: &[u32], n: usize) -> usize {
    repetitive_coverage(ids, n).iter().filter(|&&c| c).count()
}

/// Per-position additive mask values in `{0, MASK_NEG}` plus the settings
/// that produced them.
#[derive(Clone, Debug, PartialEq)]
pub struct RepetitionMask {
    pub values: Vec<f64>,
    pub seed: u64,
    pub p: f64,
    pub n: usize,
}

/// Metadata sidecar for a serialized mask.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct MaskMeta {
    pub p: f64,
    pub n: usize,
    pub seed: u64,
}

impl RepetitionMask {
    /// An all-visible mask.
    pub fn zeros(len: usize, p: f64, n: usize, seed: u64) -> Self {
        RepetitionMask { values: vec![0.0; len], seed, p, n }
    }

    /// Mask exactly the given positions (used by probes and tests).
    pub fn from_positions(len: usize, positions: &[usize], p: f64, n: usize, seed: u64) -> Self {
        let mut mask = RepetitionMask::zeros(len, p, n, seed);
        for &i in positions {
            mask.values[i] = MASK_NEG;
        }
        mask
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_masked(&self, i: usize) -> bool {
        self.values[i] == MASK_NEG
    }

    pub fn masked_positions(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.is_masked(i)).collect()
    }

    pub fn masked_count(&self) -> usize {
        self.values.iter().filter(|&&v| v == MASK_NEG).count()
    }

    pub fn meta(&self) -> MaskMeta {
        MaskMeta { p: self.p, n: self.n, seed: self.seed }
    }

    /// Binary form: length as little-endian u32, then one byte per position
    /// (1 = masked). Pair with [`MaskMeta`] JSON for audit and replay.
    pub fn write_binary<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(&(self.len() as u32).to_le_bytes())?;
        let bytes: Vec<u8> = self.values.iter().map(|&v| u8::from(v == MASK_NEG)).collect();
        w.write_all(&bytes)
    }

    /// Inverse of [`RepetitionMask::write_binary`]; settings come from `meta`.
    pub fn read_binary<R: Read>(mut r: R, meta: &MaskMeta) -> Result<Self> {
        let mut len_buf = [0u8; 4];
        r.read_exact(&mut len_buf)
            .map_err(|e| Error::InvalidInput(format!("mask header: {e}")))?;
        let len = u32::from_le_bytes(len_buf) as usize;
        let mut bytes = vec![0u8; len];
        r.read_exact(&mut bytes)
            .map_err(|e| Error::InvalidInput(format!("mask body: {e}")))?;
        let values = bytes
            .iter()
            .map(|&b| match b {
                0 => Ok(0.0),
                1 => Ok(MASK_NEG),
                other => Err(Error::InvalidInput(format!("mask byte {other} not in {{0,1}}"))),
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok(RepetitionMask { values, seed: meta.seed, p: meta.p, n: meta.n })
    }
}

/// Draw a repetition-dropout mask: one uniform sample per repeated n-gram
/// type (in first-occurrence order), masking all of its spans when the
/// sample falls below `p`. Deterministic given `(ids, p, n, seed)`.
pub fn gen_mask_rep(ids: &[u32], p: f64, n: usize, seed: u64) -> RepetitionMask {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mask = RepetitionMask::zeros(ids.len(), p, n, seed);
    for (_, spans) in find_ngrams(ids, n).spans.iter() {
        if spans.len() > 1 && rng.random::<f64>() < p {
            for &(s, e) in spans {
                for v in &mut mask.values[s..e] {
                    *v = MASK_NEG;
                }
            }
        }
    }
    mask
}

/// Control mask for the random-dropout baseline: masks
/// `round(p * count_repetitive_tokens)` uniformly random positions, so the
/// masked budget matches [`gen_mask_rep`] in expectation while the choice of
/// positions carries no information about repetition.
pub fn gen_mask_rand(ids: &[u32], n: usize, p: f64, seed: u64) -> RepetitionMask {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let covered = count_repetitive_tokens(ids, n);
    let k = ((p * covered as f64).round() as usize).min(ids.len());
    let chosen = rand::seq::index::sample(&mut rng, ids.len(), k);
    let mut mask = RepetitionMask::zeros(ids.len(), p, n, seed);
    for i in chosen {
        mask.values[i] = MASK_NEG;
    }
    mask
}

/// `M' = M + M_rep` with the repetition mask broadcast over keys (columns),
/// then the diagonal forced back to zero so every row keeps at least one
/// finite entry (a token may always attend to itself).
pub fn assemble_attention_mask(causal: &Array2<f64>, rep: &RepetitionMask) -> Result<Array2<f64>> {
    let l = rep.len();
    if causal.nrows() != l || causal.ncols() != l {
        return Err(Error::DimensionMismatch(format!(
            "causal mask is {}x{}, repetition mask has length {l}",
            causal.nrows(),
            causal.ncols()
        )));
    }
    let mut out = causal.clone();
    for i in 0..l {
        for j in 0..l {
            out[[i, j]] += rep.values[j];
        }
        out[[i, i]] = 0.0;
    }
    Ok(out)
}

/// Lower-triangular causal mask: 0 where position `j <= i` is visible,
/// [`MASK_NEG`] above the diagonal.
pub fn causal_mask(len: usize) -> Array2<f64> {
    Array2::from_shape_fn((len, len), |(i, j)| if j <= i { 0.0 } else { MASK_NEG })
}

/// Independent per-layer masks for one sequence.
#[derive(Clone, Debug)]
pub struct LayerMaskSet {
    pub per_layer: Vec<RepetitionMask>,
}

impl LayerMaskSet {
    /// Repetition-dropout masks, one independent draw per layer. Seeds come
    /// from [`derive_seed`] so generation is reproducible and parallelizable.
    pub fn generate(
        ids: &[u32],
        p: f64,
        n: usize,
        base_seed: u64,
        sequence_index: u64,
        layers: usize,
    ) -> Self {
        let per_layer = (0..layers)
            .map(|layer| gen_mask_rep(ids, p, n, derive_seed(base_seed, sequence_index, layer as u64)))
            .collect();
        LayerMaskSet { per_layer }
    }

    /// Random-dropout masks with the same per-layer seeding scheme.
    pub fn generate_random(
        ids: &[u32],
        p: f64,
        n: usize,
        base_seed: u64,
        sequence_index: u64,
        layers: usize,
    ) -> Self {
        let per_layer = (0..layers)
            .map(|layer| gen_mask_rand(ids, n, p, derive_seed(base_seed, sequence_index, layer as u64)))
            .collect();
        LayerMaskSet { per_layer }
    }

    /// The same mask at every layer (used by the self-reinforcement probe).
    pub fn uniform(mask: RepetitionMask, layers: usize) -> Self {
        LayerMaskSet { per_layer: vec![mask; layers] }
    }

    pub fn layers(&self) -> usize {
        self.per_layer.len()
    }
}

/// Deterministic seed for `(base_seed, sequence_index, layer_index)`:
/// a SplitMix64 chain over the three values. Distinct inputs yield
/// independent-looking streams, and the derivation is stable across runs
/// and platforms.
pub fn derive_seed(base_seed: u64, sequence_index: u64, layer_index: u64) -> u64 {
    let mut h = splitmix64(base_seed ^ 0x9E37_79B9_7F4A_7C15);
    h = splitmix64(h ^ sequence_index.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    splitmix64(h ^ layer_index.wrapping_mul(0x94D0_49BB_1331_11EB))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
