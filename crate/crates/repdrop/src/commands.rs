//! The operations behind the CLI verbs. Each command is a deterministic
//! function of its inputs plus the seed; re-running one produces
//! byte-identical JSON/CSV outputs. Wall-clock metadata goes to a separate
//! `run_meta.json` that is excluded from that guarantee.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{
    self, amplification_report, compute_inflow, merge_pairs, select_high_inflow_pairs,
    sign_test_p_value, spearman, HighInflowRule,
};
use crate::config::ExperimentConfig;
use crate::corpus::{
    self, build_vocab, detokenize, extract_prompts, shard_by_rep2, tokenize, Corpus,
    ShardManifest, Vocabulary,
};
use crate::error::{Error, Result};
use crate::metrics::{self, MetricsReport};
use crate::model::{greedy_decode, train, Checkpoint, Parameters};
use crate::objectives::ScopeAux;
use crate::svg;

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

/// Wall-clock metadata, deliberately kept out of the deterministic outputs.
#[derive(Serialize)]
struct RunMeta {
    command: &'static str,
    unix_time_secs: u64,
}

fn write_run_meta(dir: &Path, command: &'static str) -> Result<()> {
    let unix_time_secs = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    write_json(&dir.join("run_meta.json"), &RunMeta { command, unix_time_secs })
}

#[derive(Serialize, Deserialize)]
pub struct AnalyzeOutput {
    pub seed: u64,
    pub input: String,
    pub num_documents: usize,
    pub total_words: usize,
    pub report: MetricsReport,
}

/// `analyze`: tokenize a text file (uncapped vocabulary, so metrics reflect
/// the raw words) and write `metrics.json` + `metrics.csv`.
pub fn cmd_analyze(
    input: &Path,
    ns: &[usize],
    window: usize,
    out_dir: &Path,
    seed: u64,
) -> Result<AnalyzeOutput> {
    let text = read_text(input)?;
    let vocab = build_vocab(&[text.as_str()], usize::MAX)?;
    let corpus = Corpus::from_text(input.display().to_string(), &text, &vocab);
    let report = MetricsReport::compute(&corpus.documents, ns, window)?;
    let out = AnalyzeOutput {
        seed,
        input: input.display().to_string(),
        num_documents: corpus.documents.len(),
        total_words: corpus.total_words,
        report,
    };
    write_json(&out_dir.join("metrics.json"), &out)?;
    write_text(
        &out_dir.join("metrics.csv"),
        &format!("{}\n{}\n", MetricsReport::csv_header(), out.report.csv_row()),
    )?;
    write_run_meta(out_dir, "analyze")?;
    Ok(out)
}

/// `shard`: sort by per-document rep-2, cut into `k` word-balanced shards,
/// write one text file per shard plus the JSON manifest.
pub fn cmd_shard(input: &Path, k: usize, out_dir: &Path, seed: u64) -> Result<ShardManifest> {
    let text = read_text(input)?;
    let vocab = build_vocab(&[text.as_str()], usize::MAX)?;
    let corpus = Corpus::from_text(input.display().to_string(), &text, &vocab);
    let shards = shard_by_rep2(&corpus, k)?;
    let manifest = corpus::write_shards(&shards, &vocab, out_dir)?;
    #[derive(Serialize)]
    struct ShardMetaOut<'a> {
        seed: u64,
        input: String,
        #[serde(flatten)]
        manifest: &'a ShardManifest,
    }
    write_json(
        &out_dir.join("shards_manifest.json"),
        &ShardMetaOut { seed, input: input.display().to_string(), manifest: &manifest },
    )?;
    write_run_meta(out_dir, "shard")?;
    Ok(manifest)
}

#[derive(Serialize)]
pub struct TrainSummary {
    pub seed: u64,
    pub steps: u64,
    pub final_loss: f64,
    pub final_val_ppl: Option<f64>,
    pub vocab_size: usize,
    pub num_params: usize,
}

/// `train`: build the vocabulary from the training text, train under the
/// configured objective, and write `checkpoint.bin`, `vocab.txt`,
/// `train_log.csv` and the echoed `resolved_config.toml`.
pub fn cmd_train(cfg: &ExperimentConfig, out_dir: &Path) -> Result<TrainSummary> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let train_text = read_text(&cfg.data.train)?;
    let vocab = build_vocab(&[train_text.as_str()], cfg.tokenizer.max_vocab)?;
    let model_cfg = cfg.model.to_model_config(vocab.size());
    let train_cfg = cfg.train.to_train_config(cfg.seed);

    let train_corpus =
        Corpus::from_text("train", &train_text, &vocab).chunked(model_cfg.max_len);
    let val_corpus = match &cfg.data.valid {
        Some(path) => {
            Some(Corpus::from_text("valid", &read_text(path)?, &vocab).chunked(model_cfg.max_len))
        }
        None => None,
    };

    let aux = match cfg.objective.scope() {
        Some(scope) if scope.needs_high_inflow() => {
            let table = compute_inflow(&train_corpus);
            let selection = select_high_inflow_pairs(&table, &cfg.inflow, &train_corpus);
            Some(ScopeAux { high_inflow: selection.words })
        }
        _ => None,
    };

    let init = Parameters::init(&model_cfg, cfg.seed);
    let outcome = train(
        &model_cfg,
        init,
        &train_corpus,
        val_corpus.as_ref(),
        &train_cfg,
        &cfg.objective,
        aux.as_ref(),
    )?;

    vocab.save(&out_dir.join("vocab.txt"))?;
    outcome.checkpoint.save(&out_dir.join("checkpoint.bin"))?;

    let mut log = String::from("step,loss,val_ppl\n");
    for row in &outcome.history {
        let ppl = row.val_ppl.map(|p| format!("{p:.6}")).unwrap_or_default();
        log.push_str(&format!("{},{:.6},{}\n", row.step, row.loss, ppl));
    }
    write_text(&out_dir.join("train_log.csv"), &log)?;

    let mut echoed = cfg.clone();
    echoed.out_dir = Some(out_dir.to_path_buf());
    write_text(&out_dir.join("resolved_config.toml"), &echoed.to_toml()?)?;
    write_run_meta(out_dir, "train")?;

    let summary = TrainSummary {
        seed: cfg.seed,
        steps: train_cfg.steps,
        final_loss: outcome.history.last().map(|r| r.loss).unwrap_or(f64::NAN),
        final_val_ppl: outcome.history.iter().rev().find_map(|r| r.val_ppl),
        vocab_size: vocab.size(),
        num_params: outcome.checkpoint.params.num_params(),
    };
    write_json(&out_dir.join("train_summary.json"), &summary)?;
    Ok(summary)
}

/// One generated continuation paired with its prompt.
#[derive(Serialize, Deserialize)]
pub struct GenerationRecord {
    pub prompt: String,
    pub generation: String,
}

#[derive(Serialize)]
pub struct GenerateSummary {
    pub seed: u64,
    pub prompts: usize,
    pub skipped_documents: usize,
}

/// `generate`: greedy-decode continuations for the first `prompt_len` tokens
/// of each test document, writing one JSON record per line.
pub fn cmd_generate(
    run_dir: &Path,
    test_path: &Path,
    prompt_len: usize,
    gen_len: usize,
    max_prompts: Option<usize>,
    out_file: &Path,
    seed: u64,
) -> Result<GenerateSummary> {
    let vocab = Vocabulary::load(&run_dir.join("vocab.txt"))?;
    let ckpt = Checkpoint::load(&run_dir.join("checkpoint.bin"))?;
    if ckpt.config.vocab != vocab.size() {
        return Err(Error::VocabMismatch(format!(
            "checkpoint vocabulary {} != vocab.txt size {}",
            ckpt.config.vocab,
            vocab.size()
        )));
    }
    let test_corpus = Corpus::from_text("test", &read_text(test_path)?, &vocab);
    let mut prompt_set = extract_prompts(&test_corpus, prompt_len, gen_len)?;
    if let Some(cap) = max_prompts {
        prompt_set.prompts.truncate(cap);
        prompt_set.references.truncate(cap);
    }

    let records: Vec<Result<GenerationRecord>> = prompt_set
        .prompts
        .par_iter()
        .map(|prompt| {
            let full = greedy_decode(&ckpt.config, &ckpt.params, &prompt.ids, gen_len)?;
            Ok(GenerationRecord {
                prompt: detokenize(&prompt.ids, &vocab),
                generation: detokenize(&full.ids[prompt.len()..], &vocab),
            })
        })
        .collect();

    let mut out = String::new();
    for record in records {
        out.push_str(&serde_json::to_string(&record?)?);
        out.push('\n');
    }
    write_text(out_file, &out)?;
    let summary = GenerateSummary {
        seed,
        prompts: prompt_set.prompts.len(),
        skipped_documents: prompt_set.skipped,
    };
    let meta_path = out_file.with_extension("meta.json");
    write_json(&meta_path, &summary)?;
    Ok(summary)
}

/// One row of the evaluation table.
#[derive(Clone, Debug, Serialize)]
pub struct EvalRow {
    pub name: String,
    pub report: MetricsReport,
}

pub struct EvalInput {
    pub name: String,
    pub generations: PathBuf,
    /// Checkpoint whose perplexity on the real test data fills the PPL
    /// column; omitted for rows like human references.
    pub run_dir: Option<PathBuf>,
}

/// `eval`: repetition metrics of each generation file plus the perplexity of
/// the corresponding checkpoint on the real test corpus; one CSV row per
/// model, sorted by name.
pub fn cmd_eval(
    inputs: &[EvalInput],
    test_path: &Path,
    vocab_path: &Path,
    ns: &[usize],
    window: usize,
    out_dir: &Path,
    seed: u64,
) -> Result<Vec<EvalRow>> {
    if inputs.is_empty() {
        return Err(Error::InvalidInput("no generation files given".into()));
    }
    let vocab = Vocabulary::load(vocab_path)?;
    let test_corpus = Corpus::from_text("test", &read_text(test_path)?, &vocab);

    let mut rows = Vec::with_capacity(inputs.len());
    for input in inputs {
        let text = read_text(&input.generations)?;
        let mut gens = Vec::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let record: GenerationRecord = serde_json::from_str(line)?;
            gens.push(tokenize(&record.generation, &vocab));
        }
        if gens.is_empty() {
            return Err(Error::InvalidInput(format!(
                "no generations in {}",
                input.generations.display()
            )));
        }
        let mut report = MetricsReport::compute(&gens, ns, window)?;
        if let Some(run_dir) = &input.run_dir {
            let ckpt = Checkpoint::load(&run_dir.join("checkpoint.bin"))?;
            report.ppl =
                Some(metrics::perplexity(&ckpt.config, &ckpt.params, &test_corpus.documents)?);
        }
        rows.push(EvalRow { name: input.name.clone(), report });
    }
    rows.sort_by(|a, b| a.name.cmp(&b.name));

    let mut csv = format!("Model,{}\n", MetricsReport::csv_header());
    for row in &rows {
        csv.push_str(&format!("{},{}\n", row.name, row.report.csv_row()));
    }
    write_text(&out_dir.join("eval.csv"), &csv)?;
    #[derive(Serialize)]
    struct EvalOut<'a> {
        seed: u64,
        rows: &'a [EvalRow],
    }
    write_json(&out_dir.join("eval.json"), &EvalOut { seed, rows: &rows })?;
    write_run_meta(out_dir, "eval")?;
    Ok(rows)
}

#[derive(Serialize)]
pub struct ProbeSummary {
    pub seed: u64,
    pub sequences: usize,
    pub targets: usize,
    pub mean_delta: f64,
    pub positive: usize,
    pub negative: usize,
    /// One-sided sign-test p-value over per-sequence mean deltas.
    pub sign_test_p: f64,
}

/// `probe`: run the self-reinforcement probe over (a sample of) the corpus,
/// writing a per-target CSV table and an aggregate JSON. A corpus without
/// repeated n-grams yields a zero-target report, not an error.
pub fn cmd_probe(
    run_dir: &Path,
    input: &Path,
    n: usize,
    max_sequences: usize,
    out_dir: &Path,
    seed: u64,
) -> Result<ProbeSummary> {
    let vocab = Vocabulary::load(&run_dir.join("vocab.txt"))?;
    let ckpt = Checkpoint::load(&run_dir.join("checkpoint.bin"))?;
    let corpus = Corpus::from_text("probe", &read_text(input)?, &vocab)
        .chunked(ckpt.config.max_len);

    let mut csv = String::from("sequence,ngram,span_start,span_end,p_unmasked,p_masked,delta\n");
    let mut per_seq_means = Vec::new();
    let mut targets = 0usize;
    let mut delta_sum = 0.0;
    let mut sequences = 0usize;
    for (i, doc) in corpus.documents.iter().take(max_sequences).enumerate() {
        if doc.len() < 2 {
            continue;
        }
        sequences += 1;
        let results =
            analysis::self_reinforcement_probe(&ckpt.config, &ckpt.params, &doc.ids, n)?;
        if results.is_empty() {
            continue;
        }
        let mut seq_sum = 0.0;
        for r in &results {
            csv.push_str(&format!(
                "{},{},{},{},{:.6e},{:.6e},{:.6e}\n",
                i,
                detokenize(&r.ngram, &vocab).replace(',', ";"),
                r.span.0,
                r.span.1,
                r.p_unmasked,
                r.p_masked,
                r.delta
            ));
            seq_sum += r.delta;
            delta_sum += r.delta;
        }
        targets += results.len();
        per_seq_means.push(seq_sum / results.len() as f64);
    }

    let positive = per_seq_means.iter().filter(|&&d| d > 0.0).count();
    let negative = per_seq_means.iter().filter(|&&d| d < 0.0).count();
    let summary = ProbeSummary {
        seed,
        sequences,
        targets,
        mean_delta: if targets == 0 { 0.0 } else { delta_sum / targets as f64 },
        positive,
        negative,
        sign_test_p: sign_test_p_value(positive, negative),
    };
    write_text(&out_dir.join("probe.csv"), &csv)?;
    write_json(&out_dir.join("probe.json"), &summary)?;
    write_run_meta(out_dir, "probe")?;
    Ok(summary)
}

#[derive(Serialize)]
pub struct InflowSummary {
    pub seed: u64,
    pub distinct_words: usize,
    pub selected_pairs: usize,
    pub threshold: f64,
    pub coverage_word_percent: f64,
    /// Fraction of selected high-inflow pairs that repeat within a document.
    pub repetitive_pair_fraction: Option<f64>,
    pub merged_word_percent: Option<f64>,
    pub top_inflow: Vec<(String, f64)>,
}

/// `inflow`: bigram inflow statistics, high-inflow pair selection, the
/// overlap between high-inflow and repetitive pairs, and optionally the
/// merged (re-encoded) corpus.
pub fn cmd_inflow(
    input: &Path,
    rule: &HighInflowRule,
    merge: bool,
    out_dir: &Path,
    seed: u64,
) -> Result<InflowSummary> {
    let text = read_text(input)?;
    let vocab = build_vocab(&[text.as_str()], usize::MAX)?;
    let corpus = Corpus::from_text(input.display().to_string(), &text, &vocab);
    let table = compute_inflow(&corpus);
    let selection = select_high_inflow_pairs(&table, rule, &corpus);

    // pairs that occur at least twice within some document
    let mut repetitive_pairs: HashSet<(u32, u32)> = HashSet::new();
    for doc in &corpus.documents {
        let mut counts = std::collections::HashMap::new();
        for win in doc.ids.windows(2) {
            *counts.entry((win[0], win[1])).or_insert(0u32) += 1;
        }
        repetitive_pairs.extend(counts.iter().filter(|(_, &c)| c >= 2).map(|(&p, _)| p));
    }
    let repetitive_pair_fraction = if selection.pairs.is_empty() {
        None
    } else {
        Some(analysis::overlap_report(&selection.pairs, &repetitive_pairs)?.frac_a_in_b)
    };

    let merged_word_percent = if merge {
        let outcome = merge_pairs(&corpus, &vocab, &selection.pairs)?;
        let mut merged_text = String::new();
        for doc in &outcome.corpus.documents {
            merged_text.push_str(&detokenize(&doc.ids, &outcome.vocab));
            merged_text.push('\n');
        }
        write_text(&out_dir.join("merged.txt"), &merged_text)?;
        outcome.vocab.save(&out_dir.join("merged_vocab.txt"))?;
        Some(outcome.word_percent)
    } else {
        None
    };

    let mut ranked: Vec<(String, f64)> = table
        .inflow
        .iter()
        .map(|(&w, &f)| (vocab.token(w).unwrap_or("?").to_string(), f))
        .collect();
    ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    ranked.truncate(50);

    let summary = InflowSummary {
        seed,
        distinct_words: table.inflow.len(),
        selected_pairs: selection.pairs.len(),
        threshold: selection.threshold,
        coverage_word_percent: selection.coverage * 100.0,
        repetitive_pair_fraction,
        merged_word_percent: merged_word_percent.map(|f| f * 100.0),
        top_inflow: ranked,
    };
    write_json(&out_dir.join("inflow.json"), &summary)?;
    write_run_meta(out_dir, "inflow")?;
    if selection.pairs.is_empty() {
        eprintln!("warning: the high-inflow rule selected zero pairs");
    }
    Ok(summary)
}

#[derive(Serialize, Default)]
pub struct ReportSummary {
    pub warnings: Vec<String>,
    pub spearman_shards: Option<f64>,
    pub sweep_points: usize,
}

/// `report`: render run CSVs into figures. Expects (any subset of)
/// `shard_runs.csv` with header `shard,train_rep2,gen_rep2` and `sweep.csv`
/// with header `p,rep2,ppl` inside `dir`; missing files produce warnings,
/// not errors.
pub fn cmd_report(dir: &Path, out_dir: &Path) -> Result<ReportSummary> {
    let mut summary = ReportSummary::default();

    let shard_path = dir.join("shard_runs.csv");
    match read_csv_columns(&shard_path, &["shard", "train_rep2", "gen_rep2"]) {
        Ok(cols) => {
            let points: Vec<(f64, f64)> =
                cols[1].iter().zip(&cols[2]).map(|(&x, &y)| (x, y)).collect();
            let rho = spearman(&cols[1], &cols[2]);
            summary.spearman_shards = Some(rho);
            let svg_text = svg::scatter_svg(
                "Training rep-2 vs generated rep-2 across shards",
                "shard training rep-2",
                "generated rep-2",
                &points,
                Some(&format!("Spearman rho = {rho:.3} over {} shards", points.len())),
            );
            write_text(&out_dir.join("fig_correlation.svg"), &svg_text)?;
        }
        Err(e) => summary.warnings.push(format!("shard_runs.csv: {e}")),
    }

    let sweep_path = dir.join("sweep.csv");
    match read_csv_columns(&sweep_path, &["p", "rep2", "ppl"]) {
        Ok(cols) => {
            summary.sweep_points = cols[0].len();
            let svg_text = svg::dual_axis_svg(
                "Dropout-rate sweep",
                "dropout rate p",
                &cols[0],
                ("generated rep-2", &cols[1]),
                ("validation PPL", &cols[2]),
            );
            write_text(&out_dir.join("fig_sweep.svg"), &svg_text)?;
        }
        Err(e) => summary.warnings.push(format!("sweep.csv: {e}")),
    }

    write_json(&out_dir.join("report_summary.json"), &summary)?;
    Ok(summary)
}

/// Parse a simple comma-separated file written by this crate: a header row
/// naming the expected columns followed by numeric rows.
fn read_csv_columns(path: &Path, expected: &[&str]) -> Result<Vec<Vec<f64>>> {
    let text = read_text(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::InvalidInput(format!("{}: empty file", path.display())))?;
    let names: Vec<&str> = header.split(',').map(str::trim).collect();
    if names != expected {
        return Err(Error::InvalidInput(format!(
            "{}: header {names:?}, expected {expected:?}",
            path.display()
        )));
    }
    let mut cols = vec![Vec::new(); expected.len()];
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != expected.len() {
            return Err(Error::InvalidInput(format!(
                "{}: line {} has {} fields",
                path.display(),
                lineno + 2,
                fields.len()
            )));
        }
        for (c, field) in fields.iter().enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| {
                Error::InvalidInput(format!(
                    "{}: line {} field {c} is not numeric",
                    path.display(),
                    lineno + 2
                ))
            })?;
            cols[c].push(v);
        }
    }
    Ok(cols)
}

/// Convenience used by examples and tests: the amplification ratio between a
/// training corpus and a set of generations.
pub fn amplification_between(
    train_docs: &[impl AsRef<[u32]>],
    generated: &[impl AsRef<[u32]>],
) -> Result<analysis::AmplificationReport> {
    let train = metrics::corpus_rep_n(train_docs, 2)?.value;
    let gen = metrics::corpus_rep_n(generated, 2)?.value;
    amplification_report(train, gen)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn analyze_reports_expected_rep2() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("corpus.txt");
        fs::write(&input, "a b a b\n").unwrap();
        let out = cmd_analyze(&input, &[2], 16, dir.path(), 0).unwrap();
        let rep2 = out.report.rep_n[&2];
        assert!((rep2 - (1.0 - 2.0 / 3.0)).abs() < 1e-12);
        let csv = fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
        assert!(csv.contains("33.33"));
    }

    #[test]
    fn analyze_missing_file_errors() {
        let dir = tempfile::tempdir().unwrap();
        assert!(cmd_analyze(Path::new("/nope/missing.txt"), &[2], 16, dir.path(), 0).is_err());
    }

    #[test]
    fn analyze_all_unique_corpus_is_zero() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("c.txt");
        fs::write(&input, "q w e r t y\n").unwrap();
        let out = cmd_analyze(&input, &[2, 3, 4], 16, dir.path(), 0).unwrap();
        assert_eq!(out.report.rep_n[&2], 0.0);
    }

    #[test]
    fn report_handles_missing_inputs_with_warnings() {
        let dir = tempfile::tempdir().unwrap();
        let summary = cmd_report(dir.path(), dir.path()).unwrap();
        assert_eq!(summary.warnings.len(), 2);
    }

    #[test]
    fn report_renders_figures_from_csvs() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(
            dir.path().join("shard_runs.csv"),
            "shard,train_rep2,gen_rep2\n0,0.02,0.20\n1,0.05,0.35\n2,0.09,0.50\n",
        )
        .unwrap();
        fs::write(
            dir.path().join("sweep.csv"),
            "p,rep2,ppl\n0.0,0.5,10.0\n0.2,0.4,10.5\n0.4,0.35,11.0\n",
        )
        .unwrap();
        let summary = cmd_report(dir.path(), dir.path()).unwrap();
        assert!(summary.warnings.is_empty());
        assert!((summary.spearman_shards.unwrap() - 1.0).abs() < 1e-12);
        assert!(dir.path().join("fig_correlation.svg").exists());
        assert!(dir.path().join("fig_sweep.svg").exists());
    }

    #[test]
    fn csv_reader_rejects_wrong_header() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.csv");
        fs::write(&p, "a,b\n1,2\n").unwrap();
        assert!(read_csv_columns(&p, &["p", "rep2"]).is_err());
    }
}
