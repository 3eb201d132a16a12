//! Thin command-line front end; every verb dispatches straight into
//! [`repdrop::commands`]. Exit codes: 0 success, 1 usage or configuration
//! error, 2 runtime failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use repdrop::analysis::HighInflowRule;
use repdrop::commands::{self, EvalInput};
use repdrop::ExperimentConfig;

#[derive(Parser)]
#[command(name = "repdrop", about = "Repetition metrics, repetition-dropout training and analysis")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GlobalArgs {
    /// Experiment config file (TOML); required by `train`.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed recorded in every output artifact (overrides the config's seed).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Repetition metrics of a text file (one document per line).
    Analyze {
        input: PathBuf,
        /// n-gram lengths for rep-n.
        #[arg(long, value_delimiter = ',', default_values_t = vec![2, 3, 4])]
        ns: Vec<usize>,
        /// rep-w window length.
        #[arg(long, default_value_t = 16)]
        window: usize,
    },
    /// Sort documents by rep-2 and split into word-balanced shards.
    Shard {
        input: PathBuf,
        #[arg(long, default_value_t = 6)]
        k: usize,
    },
    /// Train a model as described by --config.
    Train,
    /// Greedy-decode continuations for test-set prompts.
    Generate {
        /// Run directory holding checkpoint.bin and vocab.txt.
        run_dir: PathBuf,
        test: PathBuf,
        #[arg(long, default_value_t = 32)]
        prompt_len: usize,
        #[arg(long, default_value_t = 128)]
        gen_len: usize,
        #[arg(long)]
        max_prompts: Option<usize>,
        /// Output file (JSON lines); defaults to <out>/generations.jsonl.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Evaluate generation files into a metrics table.
    Eval {
        /// name=generations.jsonl[=run_dir] triples; the run dir supplies the
        /// checkpoint for the PPL column.
        #[arg(required = true)]
        runs: Vec<String>,
        #[arg(long)]
        test: PathBuf,
        /// vocab.txt matching the generations.
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = vec![2, 3, 4])]
        ns: Vec<usize>,
        #[arg(long, default_value_t = 16)]
        window: usize,
    },
    /// Self-reinforcement probe of a trained model.
    Probe {
        run_dir: PathBuf,
        input: PathBuf,
        #[arg(long, default_value_t = 2)]
        n: usize,
        #[arg(long, default_value_t = 100)]
        max_sequences: usize,
    },
    /// High-inflow word statistics and optional pair merging.
    Inflow {
        input: PathBuf,
        /// Fixed inflow threshold.
        #[arg(long, conflicts_with = "coverage")]
        threshold: Option<f64>,
        /// Calibrate the threshold to this word-coverage fraction.
        #[arg(long)]
        coverage: Option<f64>,
        /// Also write the merged (re-encoded) corpus.
        #[arg(long)]
        merge: bool,
    },
    /// Render figures from logged run CSVs.
    Report {
        /// Directory containing shard_runs.csv and/or sweep.csv.
        dir: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap already formats usage errors; keep its message but pin the
            // exit code to 1 for usage problems
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_usage() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}

fn run(cli: Cli) -> repdrop::Result<()> {
    let out = cli.global.out.clone();
    let seed = cli.global.seed.unwrap_or(0);
    match cli.command {
        Command::Analyze { input, ns, window } => {
            let report = commands::cmd_analyze(&input, &ns, window, &out, seed)?;
            println!("{}", repdrop::MetricsReport::csv_header());
            println!("{}", report.report.csv_row());
        }
        Command::Shard { input, k } => {
            let manifest = commands::cmd_shard(&input, k, &out, seed)?;
            for entry in &manifest.shards {
                println!(
                    "shard {} words {} rep2 {:.4} -> {}",
                    entry.index, entry.word_count, entry.rep2_mean, entry.path
                );
            }
        }
        Command::Train => {
            let config_path = cli
                .global
                .config
                .as_ref()
                .ok_or_else(|| repdrop::Error::Config("train requires --config".into()))?;
            let mut cfg = ExperimentConfig::load(config_path)?;
            if let Some(seed) = cli.global.seed {
                cfg.seed = seed;
            }
            let out_dir = cfg.out_dir.clone().unwrap_or(out);
            let summary = commands::cmd_train(&cfg, &out_dir)?;
            println!(
                "trained {} steps, final loss {:.4}, val ppl {}",
                summary.steps,
                summary.final_loss,
                summary.final_val_ppl.map(|p| format!("{p:.2}")).unwrap_or_else(|| "-".into())
            );
        }
        Command::Generate { run_dir, test, prompt_len, gen_len, max_prompts, output } => {
            let out_file = output.unwrap_or_else(|| out.join("generations.jsonl"));
            let summary = commands::cmd_generate(
                &run_dir, &test, prompt_len, gen_len, max_prompts, &out_file, seed,
            )?;
            println!("{} prompts decoded ({} documents too short)", summary.prompts, summary.skipped_documents);
        }
        Command::Eval { runs, test, vocab, ns, window } => {
            let inputs = runs
                .iter()
                .map(|spec| parse_eval_spec(spec))
                .collect::<repdrop::Result<Vec<EvalInput>>>()?;
            let rows = commands::cmd_eval(&inputs, &test, &vocab, &ns, window, &out, seed)?;
            println!("Model,{}", repdrop::MetricsReport::csv_header());
            for row in rows {
                println!("{},{}", row.name, row.report.csv_row());
            }
        }
        Command::Probe { run_dir, input, n, max_sequences } => {
            let summary = commands::cmd_probe(&run_dir, &input, n, max_sequences, &out, seed)?;
            println!(
                "{} targets over {} sequences, mean delta {:.3e}, sign-test p {:.4}",
                summary.targets, summary.sequences, summary.mean_delta, summary.sign_test_p
            );
        }
        Command::Inflow { input, threshold, coverage, merge } => {
            let rule = match (threshold, coverage) {
                (Some(value), None) => HighInflowRule::Threshold { value },
                (None, Some(fraction)) => HighInflowRule::TargetCoverage { fraction },
                (None, None) => HighInflowRule::default(),
                (Some(_), Some(_)) => unreachable!("clap conflicts_with"),
            };
            let summary = commands::cmd_inflow(&input, &rule, merge, &out, seed)?;
            println!(
                "{} pairs above inflow {:.4}, covering {:.1}% of words",
                summary.selected_pairs, summary.threshold, summary.coverage_word_percent
            );
        }
        Command::Report { dir } => {
            let summary = commands::cmd_report(&dir, &out)?;
            for w in &summary.warnings {
                eprintln!("warning: {w}");
            }
            if let Some(rho) = summary.spearman_shards {
                println!("shard correlation: Spearman rho = {rho:.3}");
            }
        }
    }
    Ok(())
}

/// `name=path` or `name=path=run_dir`.
fn parse_eval_spec(spec: &str) -> repdrop::Result<EvalInput> {
    let parts: Vec<&str> = spec.split('=').collect();
    match parts.as_slice() {
        [name, path] => Ok(EvalInput {
            name: name.to_string(),
            generations: PathBuf::from(path),
            run_dir: None,
        }),
        [name, path, run_dir] => Ok(EvalInput {
            name: name.to_string(),
            generations: PathBuf::from(path),
            run_dir: Some(PathBuf::from(run_dir)),
        }),
        _ => Err(repdrop::Error::Config(format!(
            "eval spec {spec:?} is not name=generations.jsonl[=run_dir]"
        ))),
    }
}
