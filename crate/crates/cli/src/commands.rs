//! One function per subcommand. Every function takes resolved settings and
//! explicit paths, writes artifacts under the output directory, and prints
//! a short summary to stdout.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use fieldrank_core::catalog::{
    apply_search_terms, filter_queries, ingest_psr, label_click_pairs, load_pairs,
    load_query_classes, parse_click_triples, save_pairs, split_by_query, Catalog, LabeledPair,
    PsrPaths, Splits,
};
use fieldrank_core::eval::{
    class_breakdown, evaluate_run, group_pairs, run_ablation, write_class_breakdown,
    write_comparison, QueryGroup,
};
use fieldrank_core::lexindex::{dump_postings, rank_lexical, tune, Bm25Params, FieldedIndex, Scorer};
use fieldrank_core::smm::Model;
use fieldrank_core::text::{tokenize, Vocab};
use fieldrank_core::train::{fit, FitReport, TrainConfig};
use fieldrank_core::{Error, Result};

use crate::settings::{read_bm25_params, write_bm25_params, Settings};

/// Fraction of malformed input records tolerated before ingest aborts.
const MALFORMED_TOLERANCE: f64 = 0.01;

pub struct IngestArgs {
    pub clicks: Option<PathBuf>,
    pub catalog: Option<PathBuf>,
    pub psr_train: Option<PathBuf>,
    pub psr_descriptions: Option<PathBuf>,
    pub psr_attributes: Option<PathBuf>,
}

pub fn cmd_ingest(args: &IngestArgs, settings: &Settings, out_dir: &Path) -> Result<()> {
    let (catalog, pairs, rejected, total_records) = match (&args.clicks, &args.psr_train) {
        (Some(clicks_path), None) => {
            let catalog_path = args.catalog.as_ref().ok_or_else(|| {
                Error::InvalidInput("click ingest needs --catalog with the product file".into())
            })?;
            let catalog = Catalog::load_jsonl(catalog_path)?;
            let reader = BufReader::new(std::fs::File::open(clicks_path)?);
            let parse = parse_click_triples(reader)?;
            let total = parse.triples.len() + parse.rejected.len();
            let pairs = filter_queries(label_click_pairs(
                &parse.triples,
                settings.click_threshold,
            ));
            let mut catalog = catalog;
            apply_search_terms(&mut catalog, &parse.triples, settings.search_terms_top_k)?;
            (catalog, pairs, parse.rejected, total)
        }
        (None, Some(train_csv)) => {
            let ingest = ingest_psr(&PsrPaths {
                train_csv: train_csv.clone(),
                descriptions_csv: args.psr_descriptions.clone(),
                attributes_csv: args.psr_attributes.clone(),
            })?;
            let total = ingest.pairs.len() + ingest.rejected.len();
            (ingest.catalog, ingest.pairs, ingest.rejected, total)
        }
        (Some(_), Some(_)) => {
            return Err(Error::InvalidInput(
                "pass either --clicks or --psr-train, not both".into(),
            ));
        }
        (None, None) => {
            return Err(Error::InvalidInput(
                "pass --clicks <file> or --psr-train <csv>".into(),
            ));
        }
    };

    if pairs.is_empty() {
        return Err(Error::InvalidInput("ingest produced no labeled pairs".into()));
    }
    if total_records > 0 {
        let frac = rejected.len() as f64 / total_records as f64;
        if frac >= MALFORMED_TOLERANCE {
            return Err(Error::InvalidInput(format!(
                "{} of {} records malformed ({:.1}%), first: {}",
                rejected.len(),
                total_records,
                frac * 100.0,
                rejected[0]
            )));
        }
    }

    // Dropping pairs whose document is unknown or invalid keeps every
    // split scoreable by every model.
    let before = pairs.len();
    let pairs: Vec<LabeledPair> = pairs
        .into_iter()
        .filter(|p| catalog.get(&p.doc_id).is_some_and(|d| d.is_valid()))
        .collect();
    let dropped = before - pairs.len();
    if pairs.is_empty() {
        return Err(Error::InvalidInput(
            "no labeled pair references a valid catalog document".into(),
        ));
    }

    let splits = split_by_query(
        pairs,
        settings.validation_frac,
        settings.test_frac,
        settings.seed,
    )?;
    catalog.save_jsonl(&out_dir.join("catalog.jsonl"))?;
    save_pairs(&out_dir.join("train.tsv"), &splits.train)?;
    save_pairs(&out_dir.join("validation.tsv"), &splits.validation)?;
    save_pairs(&out_dir.join("test.tsv"), &splits.test)?;

    let stats = ingest_stats(&splits, catalog.len(), rejected.len(), dropped);
    std::fs::write(out_dir.join("stats.tsv"), &stats)?;
    print!("{stats}");
    Ok(())
}

/// Dataset shape summary: per split, the pair count, unique queries, and
/// positive-label fraction.
fn ingest_stats(splits: &Splits, n_docs: usize, rejected: usize, dropped: usize) -> String {
    let mut out = String::new();
    out.push_str("split\tpairs\tqueries\tpositive_fraction\n");
    for (name, pairs) in [
        ("train", &splits.train),
        ("validation", &splits.validation),
        ("test", &splits.test),
    ] {
        let queries: std::collections::BTreeSet<&str> =
            pairs.iter().map(|p| p.query.as_str()).collect();
        let positives = pairs.iter().filter(|p| p.label == 1).count();
        let frac = if pairs.is_empty() {
            0.0
        } else {
            positives as f64 / pairs.len() as f64
        };
        out.push_str(&format!(
            "{name}\t{}\t{}\t{frac:.4}\n",
            pairs.len(),
            queries.len()
        ));
    }
    out.push_str(&format!("documents\t{n_docs}\t\t\n"));
    out.push_str(&format!("rejected_records\t{rejected}\t\t\n"));
    out.push_str(&format!("dropped_pairs\t{dropped}\t\t\n"));
    out
}

pub fn cmd_index(catalog_path: &Path, out_dir: &Path) -> Result<()> {
    let catalog = Catalog::load_jsonl(catalog_path)?;
    let index = FieldedIndex::build(&catalog)?;
    let path = out_dir.join("index.bin");
    index.save(&path)?;
    println!("indexed\t{}\tdocuments -> {}", index.n_docs(), path.display());
    Ok(())
}

pub struct ScoreLexicalArgs {
    pub index: PathBuf,
    pub pairs: PathBuf,
    pub scorer: String,
    pub params: Option<PathBuf>,
    pub tune_on: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

pub fn cmd_score_lexical(args: &ScoreLexicalArgs, out_dir: &Path) -> Result<()> {
    let scorer = Scorer::parse(&args.scorer)
        .ok_or_else(|| Error::InvalidInput(format!("unknown scorer {:?}", args.scorer)))?;
    let index = FieldedIndex::load(&args.index)?;
    let pairs = load_pairs(&args.pairs)?;
    let mut params = match &args.params {
        Some(path) => read_bm25_params(path)?,
        None => Bm25Params::default(),
    };
    if let Some(validation_path) = &args.tune_on {
        let validation = load_pairs(validation_path)?;
        let (tuned, quality) = tune(&index, &validation, scorer)?;
        params = tuned;
        write_bm25_params(&out_dir.join("bm25_params.conf"), &params)?;
        println!("tuned\t{}\tvalidation NDCG@5 {quality:.6}", scorer.name());
    }
    let out_path = args
        .out
        .clone()
        .unwrap_or_else(|| out_dir.join("scores.tsv"));
    let mut out = std::io::BufWriter::new(std::fs::File::create(&out_path)?);
    for group in group_pairs(&pairs) {
        for (doc_id, score) in rank_lexical(&index, &group.query, &group.docs, &params, scorer)? {
            writeln!(out, "{}\t{}\t{:.6}", group.query, doc_id, score)?;
        }
    }
    out.flush()?;
    println!("scored\t{}\tpairs -> {}", pairs.len(), out_path.display());
    Ok(())
}

pub struct TrainArgs {
    pub catalog: PathBuf,
    pub train: PathBuf,
    pub validation: Option<PathBuf>,
}

pub fn cmd_train(args: &TrainArgs, settings: &Settings, out_dir: &Path) -> Result<()> {
    let catalog = Catalog::load_jsonl(&args.catalog)?;
    let train_pairs = load_pairs(&args.train)?;
    let validation_pairs = match &args.validation {
        Some(path) => load_pairs(path)?,
        None => Vec::new(),
    };

    // Vocabulary comes from training-split queries plus the catalog text,
    // matching what the encoder will see.
    let mut streams: Vec<Vec<String>> = Vec::new();
    for pair in &train_pairs {
        streams.push(tokenize(&pair.query));
    }
    for doc in catalog.docs() {
        streams.push(tokenize(&doc.flatten()));
    }
    let vocab = Vocab::build(
        streams.iter().map(|s| s.iter().map(|t| t.as_str())),
        1,
    );

    let mut model: Model<f32> = Model::init(settings.model_config(vocab.len()), settings.seed)?;
    let cfg: TrainConfig = settings.train_config();
    let report = fit(
        &mut model,
        &train_pairs,
        &validation_pairs,
        &catalog,
        &vocab,
        &cfg,
    )?;
    if report.validation_missing && !validation_pairs.is_empty() {
        eprintln!("warning: no validation query has 2+ candidates; keeping final parameters");
    }

    vocab.save(&out_dir.join("vocab.txt"))?;
    model.save(&out_dir.join("model.ckpt"))?;
    write_train_log(&out_dir.join("train_log.tsv"), &report)?;
    write_history(&out_dir.join("history.jsonl"), &report)?;
    let last_loss = report.steps.last().map_or(f64::NAN, |s| s.loss);
    println!(
        "trained\t{} steps\tfinal loss {last_loss:.6}\tbest epoch {}",
        report.steps.len(),
        report
            .best_epoch
            .map_or("none".to_string(), |e| e.to_string())
    );
    Ok(())
}

fn write_train_log(path: &Path, report: &FitReport) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "step\tlr\tloss")?;
    for s in &report.steps {
        writeln!(out, "{}\t{:.8e}\t{:.6}", s.step, s.lr, s.loss)?;
    }
    out.flush()?;
    Ok(())
}

fn write_history(path: &Path, report: &FitReport) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for e in &report.epochs {
        let line = serde_json::json!({
            "type": "epoch",
            "epoch": e.epoch,
            "val_ndcg5": e.val_ndcg5,
            "best": e.best,
        });
        serde_json::to_writer(&mut out, &line)?;
        out.write_all(b"\n")?;
    }
    let summary = serde_json::json!({
        "type": "summary",
        "best_epoch": report.best_epoch,
        "validation_missing": report.validation_missing,
        "steps": report.steps.len(),
    });
    serde_json::to_writer(&mut out, &summary)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

pub struct ScoreArgs {
    pub checkpoint: PathBuf,
    pub vocab: PathBuf,
    pub catalog: PathBuf,
    pub pairs: PathBuf,
    pub out: Option<PathBuf>,
}

pub fn cmd_score(args: &ScoreArgs, out_dir: &Path) -> Result<()> {
    let model: Model<f32> = Model::load(&args.checkpoint)?;
    let vocab = Vocab::load(&args.vocab)?;
    let catalog = Catalog::load_jsonl(&args.catalog)?;
    let out_path = args
        .out
        .clone()
        .unwrap_or_else(|| out_dir.join("scores.tsv"));
    let reader = BufReader::new(std::fs::File::open(&args.pairs)?);
    let mut out = std::io::BufWriter::new(std::fs::File::create(&out_path)?);
    let mut n = 0usize;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        // The first two columns are query and doc id; labeled pair files
        // carry extra columns, which scoring ignores.
        let mut cols = line.split('\t');
        let (query, doc_id) = match (cols.next(), cols.next()) {
            (Some(q), Some(d)) if !q.is_empty() && !d.is_empty() => (q, d),
            _ => {
                return Err(Error::record(
                    i + 1,
                    format!("expected query<TAB>doc_id, got {line:?}"),
                ))
            }
        };
        let doc = catalog
            .get(doc_id)
            .ok_or_else(|| Error::UnknownDoc(doc_id.to_string()))?;
        let score = model.score(query, doc, &vocab)?;
        writeln!(out, "{query}\t{doc_id}\t{score:.6}")?;
        n += 1;
    }
    out.flush()?;
    println!("scored\t{n}\tpairs -> {}", out_path.display());
    Ok(())
}

pub struct EvaluateArgs {
    pub pairs: PathBuf,
    pub scores: PathBuf,
    pub ks: Vec<usize>,
    pub classes: Option<PathBuf>,
}

pub fn cmd_evaluate(args: &EvaluateArgs, out_dir: &Path) -> Result<()> {
    let pairs = load_pairs(&args.pairs)?;
    let groups = group_pairs(&pairs);
    let scores = load_score_file(&args.scores)?;
    let lookup = |group: &QueryGroup| -> Result<Vec<f64>> {
        group
            .docs
            .iter()
            .map(|doc_id| {
                scores
                    .get(&(group.query.clone(), doc_id.clone()))
                    .copied()
                    .ok_or_else(|| {
                        Error::InvalidInput(format!(
                            "no score for query {:?} doc {doc_id:?}",
                            group.query
                        ))
                    })
            })
            .collect()
    };
    let report = evaluate_run(lookup, &groups, &args.ks)?;
    let mut tsv = std::io::BufWriter::new(std::fs::File::create(out_dir.join("report.tsv"))?);
    report.write_tsv(&mut tsv)?;
    tsv.flush()?;
    let mut jsonl = std::io::BufWriter::new(std::fs::File::create(out_dir.join("report.jsonl"))?);
    report.write_jsonl(&mut jsonl)?;
    jsonl.flush()?;
    if let Some(classes_path) = &args.classes {
        let classes = load_query_classes(classes_path)?;
        let rows = class_breakdown(&report, &classes);
        let mut out =
            std::io::BufWriter::new(std::fs::File::create(out_dir.join("classes.tsv"))?);
        write_class_breakdown(&mut out, &report.metrics, &rows)?;
        out.flush()?;
    }
    let mut summary = String::new();
    for (metric, mean) in report.metrics.iter().zip(&report.means) {
        summary.push_str(&format!("{metric} {mean:.6}  "));
    }
    println!(
        "evaluated\t{} queries ({} skipped)\t{}",
        report.rows.len(),
        report.skipped.len(),
        summary.trim_end()
    );
    Ok(())
}

fn load_score_file(path: &Path) -> Result<HashMap<(String, String), f64>> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut scores = HashMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 3 {
            return Err(Error::record(
                i + 1,
                format!("expected query<TAB>doc_id<TAB>score, got {line:?}"),
            ));
        }
        let score: f64 = cols[2]
            .parse()
            .map_err(|_| Error::record(i + 1, format!("bad score {:?}", cols[2])))?;
        scores.insert((cols[0].to_string(), cols[1].to_string()), score);
    }
    Ok(scores)
}

pub struct AblateArgs {
    pub catalog: PathBuf,
    pub train: PathBuf,
    pub validation: Option<PathBuf>,
    pub test: PathBuf,
    pub ks: Vec<usize>,
}

/// Train fielded and flat variants under the same seed and compare them on
/// the test split with paired t-tests.
pub fn cmd_ablate(args: &AblateArgs, settings: &Settings, out_dir: &Path) -> Result<()> {
    let catalog = Catalog::load_jsonl(&args.catalog)?;
    let train_pairs = load_pairs(&args.train)?;
    let validation_pairs = match &args.validation {
        Some(path) => load_pairs(path)?,
        None => Vec::new(),
    };
    let test_pairs = load_pairs(&args.test)?;
    let test_groups = group_pairs(&test_pairs);

    let mut streams: Vec<Vec<String>> = Vec::new();
    for pair in &train_pairs {
        streams.push(tokenize(&pair.query));
    }
    for doc in catalog.docs() {
        streams.push(tokenize(&doc.flatten()));
    }
    let vocab = Vocab::build(streams.iter().map(|s| s.iter().map(|t| t.as_str())), 1);

    let cfg = settings.train_config();
    let variant = |repr_key: &str| -> Result<Model<f32>> {
        let mut s = settings.clone();
        s.set("repr", repr_key)?;
        let mut model = Model::init(s.model_config(vocab.len()), s.seed)?;
        fit(
            &mut model,
            &train_pairs,
            &validation_pairs,
            &catalog,
            &vocab,
            &cfg,
        )?;
        Ok(model)
    };
    let fielded = variant("fielded")?;
    let flat = variant("flat")?;

    let comparison = run_ablation(
        |group| model_scores(&fielded, &catalog, &vocab, group),
        |group| model_scores(&flat, &catalog, &vocab, group),
        &test_groups,
        &args.ks,
    )?;
    let mut out = std::io::BufWriter::new(std::fs::File::create(out_dir.join("ablation.tsv"))?);
    write_comparison(&mut out, &comparison, "fielded", "flat")?;
    out.flush()?;
    let table = {
        let mut buf = Vec::new();
        write_comparison(&mut buf, &comparison, "fielded", "flat")?;
        String::from_utf8(buf).expect("comparison table is UTF-8")
    };
    print!("{table}");
    Ok(())
}

fn model_scores(
    model: &Model<f32>,
    catalog: &Catalog,
    vocab: &Vocab,
    group: &QueryGroup,
) -> Result<Vec<f64>> {
    group
        .docs
        .iter()
        .map(|doc_id| {
            let doc = catalog
                .get(doc_id)
                .ok_or_else(|| Error::UnknownDoc(doc_id.clone()))?;
            Ok(model.score(&group.query, doc, vocab)? as f64)
        })
        .collect()
}

pub fn cmd_dump_postings(index_path: &Path) -> Result<()> {
    let index = FieldedIndex::load(index_path)?;
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    dump_postings(&index, &mut out)?;
    Ok(())
}

/// Metric cutoffs given as a comma-separated list, e.g. `1,5,10`.
pub fn parse_ks(text: &str) -> Result<Vec<usize>> {
    let mut ks = Vec::new();
    for part in text.split(',') {
        let k: usize = part
            .trim()
            .parse()
            .map_err(|_| Error::InvalidInput(format!("bad cutoff {part:?}")))?;
        if k == 0 {
            return Err(Error::InvalidInput("cutoffs must be >= 1".into()));
        }
        ks.push(k);
    }
    Ok(ks)
}
