//! `fieldrank`: a pipeline runner for fielded product search. Subcommands
//! cover dataset construction, lexical indexing and scoring, neural model
//! training, batch scoring, evaluation, and the fielded-vs-flat ablation.
//!
//! Exit codes: 0 success, 1 internal failure, 2 usage or input error.

mod commands;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fieldrank_core::Error;

use commands::{
    cmd_ablate, cmd_dump_postings, cmd_evaluate, cmd_index, cmd_ingest, cmd_score,
    cmd_score_lexical, cmd_train, parse_ks, AblateArgs, EvaluateArgs, IngestArgs, ScoreArgs,
    ScoreLexicalArgs, TrainArgs,
};
use settings::Settings;

#[derive(Parser)]
#[command(name = "fieldrank", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand. `--set` entries and dedicated flags
/// override config-file values, which override defaults.
#[derive(Args)]
struct Common {
    /// Flat `key = value` config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override the run seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Cap worker threads; 1 guarantees bitwise-deterministic output.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Directory for output artifacts.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,

    /// Extra `key=value` overrides, highest precedence.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    sets: Vec<String>,
}

impl Common {
    fn resolve(&self) -> fieldrank_core::Result<Settings> {
        let mut settings = Settings::default();
        if let Some(path) = &self.config {
            settings.load_file(path)?;
        }
        for entry in &self.sets {
            let (key, value) = entry.split_once('=').ok_or_else(|| {
                Error::InvalidInput(format!("--set expects key=value, got {entry:?}"))
            })?;
            settings.set(key.trim(), value.trim())?;
        }
        if let Some(seed) = self.seed {
            settings.seed = seed;
        }
        Ok(settings)
    }

    fn prepare(&self) -> fieldrank_core::Result<Settings> {
        if let Some(threads) = self.threads {
            if threads == 0 {
                return Err(Error::InvalidInput("--threads must be >= 1".into()));
            }
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build_global()
                .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;
        }
        std::fs::create_dir_all(&self.out_dir)?;
        self.resolve()
    }
}

#[derive(Subcommand)]
enum Command {
    /// Build the catalog and labeled train/validation/test splits.
    Ingest {
        #[command(flatten)]
        common: Common,
        /// Tab-separated (query, doc_id, clicks) lines.
        #[arg(long)]
        clicks: Option<PathBuf>,
        /// Product catalog (JSON lines), required with --clicks.
        #[arg(long)]
        catalog: Option<PathBuf>,
        /// Relevance CSV with graded (query, product) pairs.
        #[arg(long)]
        psr_train: Option<PathBuf>,
        /// Product description CSV accompanying --psr-train.
        #[arg(long)]
        psr_descriptions: Option<PathBuf>,
        /// Product attribute CSV accompanying --psr-train.
        #[arg(long)]
        psr_attributes: Option<PathBuf>,
    },
    /// Build and persist the inverted field index.
    Index {
        #[command(flatten)]
        common: Common,
        /// Catalog to index (JSON lines).
        #[arg(long)]
        catalog: PathBuf,
    },
    /// Score labeled pairs with BM25 or BM25F.
    ScoreLexical {
        #[command(flatten)]
        common: Common,
        /// Serialized index built by `index`.
        #[arg(long)]
        index: PathBuf,
        /// Labeled pair TSV to score.
        #[arg(long)]
        pairs: PathBuf,
        /// bm25 or bm25f.
        #[arg(long, default_value = "bm25")]
        scorer: String,
        /// BM25 parameter file; defaults apply when absent.
        #[arg(long)]
        params: Option<PathBuf>,
        /// Grid-tune parameters on this validation pair file first.
        #[arg(long, value_name = "VALIDATION")]
        tune: Option<PathBuf>,
        /// Score file path; defaults to <out-dir>/scores.tsv.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the neural scorer and write a checkpoint.
    Train {
        #[command(flatten)]
        common: Common,
        /// Catalog backing the labeled pairs (JSON lines).
        #[arg(long)]
        catalog: PathBuf,
        /// Training pair TSV.
        #[arg(long)]
        train: PathBuf,
        /// Validation pair TSV used for per-epoch checkpoint selection.
        #[arg(long)]
        validation: Option<PathBuf>,
    },
    /// Batch-score (query, doc_id) lines with a trained checkpoint.
    Score {
        #[command(flatten)]
        common: Common,
        /// Model checkpoint written by `train`.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Vocabulary file written by `train`.
        #[arg(long)]
        vocab: PathBuf,
        /// Catalog providing document text (JSON lines).
        #[arg(long)]
        catalog: PathBuf,
        /// Tab-separated lines whose first two columns are query, doc_id.
        #[arg(long)]
        pairs: PathBuf,
        /// Score file path; defaults to <out-dir>/scores.tsv.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compute ranking metrics from a score file against labeled pairs.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Labeled pair TSV with relevance labels.
        #[arg(long)]
        pairs: PathBuf,
        /// Three-column score TSV (query, doc_id, score).
        #[arg(long)]
        scores: PathBuf,
        /// NDCG cutoffs, comma separated.
        #[arg(long, default_value = "1,5,10")]
        ks: String,
        /// Query class annotations for a per-class breakdown.
        #[arg(long)]
        classes: Option<PathBuf>,
    },
    /// Train fielded and flat variants under one seed and compare them.
    Ablate {
        #[command(flatten)]
        common: Common,
        /// Catalog backing the labeled pairs (JSON lines).
        #[arg(long)]
        catalog: PathBuf,
        /// Training pair TSV.
        #[arg(long)]
        train: PathBuf,
        /// Validation pair TSV used for per-epoch checkpoint selection.
        #[arg(long)]
        validation: Option<PathBuf>,
        /// Held-out pair TSV on which the variants are compared.
        #[arg(long)]
        test: PathBuf,
        /// NDCG cutoffs, comma separated.
        #[arg(long, default_value = "1,5,10")]
        ks: String,
    },
    /// Print index postings in a human-readable form.
    DumpPostings {
        #[command(flatten)]
        common: Common,
        /// Serialized index built by `index`.
        #[arg(long)]
        index: PathBuf,
    },
}

fn run(cli: Cli) -> fieldrank_core::Result<()> {
    match cli.command {
        Command::Ingest {
            common,
            clicks,
            catalog,
            psr_train,
            psr_descriptions,
            psr_attributes,
        } => {
            let settings = common.prepare()?;
            cmd_ingest(
                &IngestArgs {
                    clicks,
                    catalog,
                    psr_train,
                    psr_descriptions,
                    psr_attributes,
                },
                &settings,
                &common.out_dir,
            )
        }
        Command::Index { common, catalog } => {
            common.prepare()?;
            cmd_index(&catalog, &common.out_dir)
        }
        Command::ScoreLexical {
            common,
            index,
            pairs,
            scorer,
            params,
            tune,
            out,
        } => {
            common.prepare()?;
            cmd_score_lexical(
                &ScoreLexicalArgs {
                    index,
                    pairs,
                    scorer,
                    params,
                    tune_on: tune,
                    out,
                },
                &common.out_dir,
            )
        }
        Command::Train {
            common,
            catalog,
            train,
            validation,
        } => {
            let settings = common.prepare()?;
            cmd_train(
                &TrainArgs {
                    catalog,
                    train,
                    validation,
                },
                &settings,
                &common.out_dir,
            )
        }
        Command::Score {
            common,
            checkpoint,
            vocab,
            catalog,
            pairs,
            out,
        } => {
            common.prepare()?;
            cmd_score(
                &ScoreArgs {
                    checkpoint,
                    vocab,
                    catalog,
                    pairs,
                    out,
                },
                &common.out_dir,
            )
        }
        Command::Evaluate {
            common,
            pairs,
            scores,
            ks,
            classes,
        } => {
            common.prepare()?;
            cmd_evaluate(
                &EvaluateArgs {
                    pairs,
                    scores,
                    ks: parse_ks(&ks)?,
                    classes,
                },
                &common.out_dir,
            )
        }
        Command::Ablate {
            common,
            catalog,
            train,
            validation,
            test,
            ks,
        } => {
            let settings = common.prepare()?;
            cmd_ablate(
                &AblateArgs {
                    catalog,
                    train,
                    validation,
                    test,
                    ks: parse_ks(&ks)?,
                },
                &settings,
                &common.out_dir,
            )
        }
        Command::DumpPostings { common, index } => {
            common.prepare()?;
            cmd_dump_postings(&index)
        }
    }
}

/// Input and usage problems exit 2; anything else is an internal failure.
fn exit_code_for(error: &Error) -> u8 {
    match error {
        Error::InvalidInput(_)
        | Error::Record { .. }
        | Error::UnknownDoc(_)
        | Error::Format(_)
        | Error::Io(_)
        | Error::Csv(_)
        | Error::Json(_) => 2,
        Error::Shape(_) | Error::NonFiniteGradient { .. } => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        // A downstream pipe closing early (e.g. `| head`) is not a failure.
        Err(Error::Io(e)) if e.kind() == std::io::ErrorKind::BrokenPipe => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
