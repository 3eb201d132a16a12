//! Deterministic synthetic text generation.
//!
//! Produces a corpus of pseudo-natural documents (one per line) from a small
//! template grammar: function words plus topic-clustered invented content
//! words, with a controllable per-document phrase-copy rate. Copied spans
//! create exact n-gram repetitions whose rate varies document by document,
//! which gives the repetition-sorted sharding experiments a real gradient to
//! work with. Everything is a pure function of the configuration, so two
//! calls with the same settings produce byte-identical text.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const DETERMINERS: &[(&str, f64)] = &[("the", 0.6), ("a", 0.25), ("its", 0.1), ("this", 0.05)];
const PREPOSITIONS: &[&str] = &["of", "in", "on", "with", "for", "from", "by", "at"];
const CONJUNCTIONS: &[&str] = &["and", "but", "or", "while"];
const SYLLABLES: &[&str] = &[
    "ka", "to", "mi", "ra", "su", "ne", "lo", "vi", "da", "po", "che", "ri", "mu", "sa", "ten",
    "bor", "gal", "wen", "fo", "zu", "pra", "nim", "tar", "osk",
];

#[derive(Clone, Copy, Debug)]
enum Slot {
    Det,
    Noun,
    Verb,
    Adj,
    Prep,
    Conj,
}

use Slot::*;

const TEMPLATES: &[&[Slot]] = &[
    &[Det, Noun, Verb, Det, Adj, Noun],
    &[Det, Adj, Noun, Verb, Prep, Det, Noun],
    &[Noun, Conj, Noun, Verb, Adj],
    &[Det, Noun, Prep, Det, Noun, Verb],
    &[Noun, Verb, Det, Noun],
    &[Det, Adj, Noun, Verb, Det, Noun, Prep, Noun],
    &[Det, Noun, Verb, Prep, Det, Adj, Noun],
    &[Noun, Verb, Conj, Noun, Verb],
];

/// Settings for [`generate_text`].
#[derive(Clone, Debug)]
pub struct SynthConfig {
    pub docs: usize,
    /// Inclusive bounds on the word count of each document.
    pub words_per_doc: (usize, usize),
    /// Per-document phrase-copy rate, drawn uniformly from this range. At
    /// rate r, each sentence is replaced with probability r by a copy of a
    /// short span from earlier in the same document.
    pub repeat_rate: (f64, f64),
    pub topics: usize,
    pub words_per_topic: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            docs: 2000,
            words_per_doc: (40, 90),
            repeat_rate: (0.0, 0.5),
            topics: 24,
            words_per_topic: 16,
            seed: 0,
        }
    }
}

struct Topic {
    nouns: Vec<String>,
    verbs: Vec<String>,
    adjs: Vec<String>,
}

fn invent_words(count: usize) -> Vec<String> {
    let mut words = Vec::with_capacity(count);
    let mut seen = std::collections::HashSet::new();
    let s = SYLLABLES.len();
    let mut i = 0usize;
    while words.len() < count {
        let mut w = String::new();
        w.push_str(SYLLABLES[i % s]);
        w.push_str(SYLLABLES[(i / s + 3 * i) % s]);
        if i % 3 == 0 {
            w.push_str(SYLLABLES[(i / (s * s) + 7 * i + 1) % s]);
        }
        if seen.insert(w.clone()) {
            words.push(w);
        }
        i += 1;
    }
    words
}

fn build_topics(cfg: &SynthConfig) -> Vec<Topic> {
    let all = invent_words(cfg.topics * cfg.words_per_topic);
    all.chunks(cfg.words_per_topic)
        .map(|chunk| {
            let n = chunk.len();
            let nouns_end = (n * 6) / 10;
            let verbs_end = nouns_end + (n * 25) / 100;
            Topic {
                nouns: chunk[..nouns_end.max(1)].to_vec(),
                verbs: chunk[nouns_end.max(1)..verbs_end.max(nouns_end.max(1) + 1)].to_vec(),
                adjs: chunk[verbs_end.max(nouns_end.max(1) + 1)..].to_vec(),
            }
        })
        .map(|mut t| {
            if t.verbs.is_empty() {
                t.verbs.push(t.nouns[0].clone());
            }
            if t.adjs.is_empty() {
                t.adjs.push(t.nouns[0].clone());
            }
            t
        })
        .collect()
}

fn zipf_pick<'a>(rng: &mut ChaCha8Rng, items: &'a [String]) -> &'a str {
    let total: f64 = (0..items.len()).map(|i| 1.0 / (i + 1) as f64).sum();
    let mut x = rng.random::<f64>() * total;
    for (i, item) in items.iter().enumerate() {
        x -= 1.0 / (i + 1) as f64;
        if x <= 0.0 {
            return item;
        }
    }
    items.last().unwrap()
}

fn weighted_pick<'a>(rng: &mut ChaCha8Rng, items: &'a [(&'a str, f64)]) -> &'a str {
    let total: f64 = items.iter().map(|(_, w)| w).sum();
    let mut x = rng.random::<f64>() * total;
    for (s, w) in items {
        x -= w;
        if x <= 0.0 {
            return s;
        }
    }
    items.last().unwrap().0
}

fn sentence(rng: &mut ChaCha8Rng, topic: &Topic, out: &mut Vec<String>) {
    let template = TEMPLATES[rng.random_range(0..TEMPLATES.len())];
    for slot in template {
        let word = match slot {
            Det => weighted_pick(rng, DETERMINERS).to_string(),
            Noun => zipf_pick(rng, &topic.nouns).to_string(),
            Verb => zipf_pick(rng, &topic.verbs).to_string(),
            Adj => zipf_pick(rng, &topic.adjs).to_string(),
            Prep => PREPOSITIONS[rng.random_range(0..PREPOSITIONS.len())].to_string(),
            Conj => CONJUNCTIONS[rng.random_range(0..CONJUNCTIONS.len())].to_string(),
        };
        out.push(word);
    }
    out.push(".".to_string());
}

/// Generate the whole corpus, one document per line.
pub fn generate_text(cfg: &SynthConfig) -> String {
    let topics = build_topics(cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut text = String::new();
    for _ in 0..cfg.docs {
        let doc = generate_doc(&mut rng, cfg, &topics);
        text.push_str(&doc.join(" "));
        text.push('\n');
    }
    text
}

fn generate_doc(rng: &mut ChaCha8Rng, cfg: &SynthConfig, topics: &[Topic]) -> Vec<String> {
    let (lo, hi) = cfg.words_per_doc;
    let target = rng.random_range(lo..=hi);
    let rate = cfg.repeat_rate.0
        + rng.random::<f64>() * (cfg.repeat_rate.1 - cfg.repeat_rate.0);
    let topic = &topics[rng.random_range(0..topics.len())];

    let mut words: Vec<String> = Vec::with_capacity(target + 8);
    while words.len() < target {
        if words.len() > 8 && rng.random::<f64>() < rate {
            let span_len = rng.random_range(2..=4usize.min(words.len() - 1));
            let start = rng.random_range(0..=words.len() - span_len);
            for k in 0..span_len {
                words.push(words[start + k].clone());
            }
        } else {
            sentence(rng, topic, &mut words);
        }
    }
    words.truncate(target);
    words
}
