//! Whole-pipeline acceptance checks. Each test verifies one release
//! criterion end to end and prints a single `criterion N: PASS/FAIL` line
//! (visible with `--nocapture`, or on failure).

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use fieldrank_core::catalog::{Catalog, Field, FieldedDocument, LabeledPair, RawSignal};
use fieldrank_core::encoder::{EncoderConfig, QueryVector};
use fieldrank_core::eval::{
    average_precision, evaluate_run, group_pairs, mrr, ndcg_at_k, run_ablation, Metric,
    QueryGroup,
};
use fieldrank_core::lexindex::{Bm25Params, FieldedIndex};
use fieldrank_core::matrix::Matrix;
use fieldrank_core::smm::{
    build_match_matrix, smm_features, DocRepr, FeatureAblation, Model, ModelConfig,
};
use fieldrank_core::text::{tokenize, Vocab};
use fieldrank_core::train::{bce_loss, fit, lr_at, TrainConfig};
use fieldrank_core::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn verdict(n: usize, ok: bool, detail: &str) {
    println!("criterion {n}: {} — {detail}", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "criterion {n} failed: {detail}");
}

// --- criterion 1: reverse-mode gradients match finite differences ---

fn model_loss(model: &Model<f64>, query: &str, doc: &FieldedDocument, vocab: &Vocab) -> f64 {
    let trace = model
        .forward_pair(query, doc, vocab, FeatureAblation::None, None)
        .expect("forward");
    bce_loss(trace.prob(), 1)
}

/// Agreement test with a floor for near-zero pairs, where central
/// differences bottom out in rounding noise.
fn gradients_agree(analytic: f64, numeric: f64) -> bool {
    let scale = analytic.abs().max(numeric.abs());
    if scale < 1e-6 {
        return true;
    }
    (analytic - numeric).abs() / scale < 1e-4
}

fn gradcheck_config(config: ModelConfig, seed: u64, query: &str, doc: &FieldedDocument) -> f64 {
    let vocab = Vocab::build(
        [["alpha", "beta", "gamma", "delta", "oak", "door", "red", "lamp", "common"]]
            .iter()
            .map(|w| w.iter().copied()),
        1,
    );
    let model: Model<f64> = Model::init(config, seed).expect("init");
    let trace = model
        .forward_pair(query, doc, &vocab, FeatureAblation::None, None)
        .expect("forward");
    let mut grads = model.zeros_like();
    model.backward_pair(&trace, trace.prob() - 1.0, &mut grads);

    let mut probe = model.clone();
    let eps = 1e-5;
    let n_tensors = probe.tensors().len();
    let mut worst = 0.0f64;
    for t in 0..n_tensors {
        let len = probe.tensors()[t].1.data.len();
        for i in 0..len {
            let original = probe.tensors()[t].1.data[i];
            probe.tensors_mut()[t].1.data[i] = original + eps;
            let up = model_loss(&probe, query, doc, &vocab);
            probe.tensors_mut()[t].1.data[i] = original - eps;
            let down = model_loss(&probe, query, doc, &vocab);
            probe.tensors_mut()[t].1.data[i] = original;
            let numeric = (up - down) / (2.0 * eps);
            let analytic = grads.tensors()[t].1.data[i];
            let name = &grads.tensors()[t].0;
            assert!(
                gradients_agree(analytic, numeric),
                "{name}[{i}]: analytic {analytic:.6e} vs numeric {numeric:.6e}"
            );
            let scale = analytic.abs().max(numeric.abs());
            if scale >= 1e-6 {
                worst = worst.max((analytic - numeric).abs() / scale);
            }
        }
    }
    worst
}

#[test]
fn criterion_1_gradients_match_finite_differences() {
    let start = Instant::now();
    let mut doc = FieldedDocument::new("G1");
    doc.push_instance(Field::Title, "red oak door").unwrap();
    doc.push_instance(Field::Description, "alpha beta common").unwrap();
    doc.push_instance(Field::Brand, "gamma").unwrap();
    doc.push_instance(Field::SearchTerms, "red door").unwrap();
    doc.push_instance(Field::SearchTerms, "oak lamp").unwrap();
    let encoder = |d, l, h, ff, lq, lf| EncoderConfig {
        d_model: d,
        n_layers: l,
        n_heads: h,
        d_ff: ff,
        max_query_len: lq,
        max_field_len: lf,
        vocab_size: 11,
        dropout_p: 0.0,
    };
    let configs = [
        (
            ModelConfig {
                encoder: encoder(8, 1, 2, 12, 4, 6),
                head_hidden: 6,
                head_dropout_p: 0.0,
                repr: DocRepr::Fielded,
            },
            11u64,
        ),
        (
            ModelConfig {
                encoder: encoder(12, 2, 3, 16, 6, 8),
                head_hidden: 8,
                head_dropout_p: 0.0,
                repr: DocRepr::Flat,
            },
            23u64,
        ),
        (
            ModelConfig {
                encoder: encoder(16, 4, 4, 20, 5, 8),
                head_hidden: 10,
                head_dropout_p: 0.0,
                repr: DocRepr::Fielded,
            },
            37u64,
        ),
    ];
    let mut worst = 0.0f64;
    for (config, seed) in configs {
        worst = worst.max(gradcheck_config(config, seed, "red oak lamp", &doc));
    }
    let elapsed = start.elapsed();
    verdict(
        1,
        elapsed.as_secs_f64() < 60.0,
        &format!(
            "3 configurations, every parameter within 1e-4 of central differences \
             (worst rel err {worst:.2e}) in {:.1}s",
            elapsed.as_secs_f64()
        ),
    );
}

// --- criterion 2: ranking metrics match brute-force definitions ---

fn permutations(labels: &[u8]) -> Vec<Vec<u8>> {
    if labels.len() <= 1 {
        return vec![labels.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..labels.len() {
        let mut rest = labels.to_vec();
        let head = rest.remove(i);
        for mut tail in permutations(&rest) {
            tail.insert(0, head);
            out.push(tail);
        }
    }
    out
}

/// Graded-gain DCG straight from the definition; binary labels make the
/// gain (2^l - 1) equal to l.
fn dcg_definition(labels: &[u8], k: usize) -> f64 {
    labels
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, &l)| (f64::from(2u32.pow(u32::from(l))) - 1.0) / ((i + 2) as f64).log2())
        .sum()
}

fn ndcg_oracle(labels: &[u8], k: usize) -> f64 {
    let ideal = permutations(labels)
        .iter()
        .map(|p| dcg_definition(p, k))
        .fold(0.0, f64::max);
    if ideal == 0.0 {
        0.0
    } else {
        dcg_definition(labels, k) / ideal
    }
}

fn ap_oracle(labels: &[u8]) -> f64 {
    let relevant = labels.iter().filter(|&&l| l == 1).count();
    if relevant == 0 {
        return 0.0;
    }
    let mut sum = 0.0;
    for (i, &l) in labels.iter().enumerate() {
        if l == 1 {
            let hits_so_far = labels[..=i].iter().filter(|&&x| x == 1).count();
            sum += hits_so_far as f64 / (i + 1) as f64;
        }
    }
    sum / relevant as f64
}

fn mrr_oracle(labels: &[u8]) -> f64 {
    for (i, &l) in labels.iter().enumerate() {
        if l == 1 {
            return 1.0 / (i + 1) as f64;
        }
    }
    0.0
}

#[test]
fn criterion_2_metrics_match_brute_force_oracles() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let len = rng.gen_range(1..=6);
        let labels: Vec<u8> = (0..len).map(|_| u8::from(rng.gen_bool(0.5))).collect();
        for k in 1..=6 {
            let diff = (ndcg_at_k(&labels, k) - ndcg_oracle(&labels, k)).abs();
            assert!(diff < 1e-12, "NDCG@{k} off by {diff:e} on {labels:?}");
            worst = worst.max(diff);
        }
        let diff = (average_precision(&labels) - ap_oracle(&labels)).abs();
        assert!(diff < 1e-12, "AP off by {diff:e} on {labels:?}");
        worst = worst.max(diff);
        let diff = (mrr(&labels) - mrr_oracle(&labels)).abs();
        assert!(diff < 1e-12, "MRR off by {diff:e} on {labels:?}");
        worst = worst.max(diff);
    }
    // Hand-checked reference values.
    let hand = [1u8, 0, 1];
    let ndcg_hand = ndcg_at_k(&hand, 3);
    let expected_ndcg = 1.5 / (1.0 + 1.0 / 3f64.log2());
    assert_eq!(ndcg_hand, expected_ndcg);
    assert!((ndcg_hand - 0.91972).abs() < 1e-5);
    let ap_hand = average_precision(&hand);
    assert!((ap_hand - 5.0 / 6.0).abs() < 1e-15);
    assert!((ap_hand - 0.83333).abs() < 1e-5);
    let elapsed = start.elapsed();
    verdict(
        2,
        elapsed.as_secs_f64() < 5.0,
        &format!(
            "1000 random lists within 1e-12 of brute force (worst {worst:.1e}), \
             hand examples exact, in {:.2}s",
            elapsed.as_secs_f64()
        ),
    );
}

// --- criterion 3: fielded BM25 collapses to flat BM25 on one field ---

#[test]
fn criterion_3_single_field_scoring_reduction() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let pool = [
        "oak", "door", "red", "drill", "lamp", "steel", "table", "paint", "light", "shade",
        "bit", "glass",
    ];
    let mut worst = 0.0f64;
    for corpus in 0..100 {
        let field = Field::ALL[rng.gen_range(0..Field::ALL.len())];
        let n_docs = rng.gen_range(2..=8);
        let docs: Vec<FieldedDocument> = (0..n_docs)
            .map(|i| {
                let words: Vec<&str> = (0..rng.gen_range(1..=6))
                    .map(|_| pool[rng.gen_range(0..pool.len())])
                    .collect();
                let mut doc = FieldedDocument::new(format!("C{corpus}D{i}"));
                doc.push_instance(field, words.join(" ")).unwrap();
                doc
            })
            .collect();
        let ids: Vec<String> = docs.iter().map(|d| d.doc_id.clone()).collect();
        let index = FieldedIndex::build(&Catalog::new(docs).unwrap()).unwrap();
        let b = rng.gen_range(0.0..1.0);
        let params = Bm25Params {
            k1: rng.gen_range(0.5..2.5),
            b,
            weights: [1.0; 7],
            field_b: [b; 7],
        };
        for _ in 0..5 {
            let terms: Vec<String> = (0..rng.gen_range(1..=3))
                .map(|_| pool[rng.gen_range(0..pool.len())].to_string())
                .collect();
            for doc_id in &ids {
                let flat = index.bm25_score(&terms, doc_id, &params).unwrap();
                let fielded = index.bm25f_score(&terms, doc_id, &params).unwrap();
                let diff = (flat - fielded).abs();
                assert!(diff < 1e-9, "corpus {corpus} doc {doc_id}: {flat} vs {fielded}");
                worst = worst.max(diff);
            }
        }
    }
    verdict(
        3,
        true,
        &format!("100 single-field corpora agree within 1e-9 (worst {worst:.1e})"),
    );
}

// --- criterion 4: the full model overfits a small synthetic corpus ---

fn overfit_corpus() -> (Catalog, Vec<LabeledPair>, Vocab) {
    let adjectives = ["red", "blue", "green", "black", "white", "oak", "steel", "brass"];
    let nouns = ["door", "drill", "lamp", "table", "saw", "hinge", "valve", "panel"];
    let mut docs = Vec::new();
    let mut pairs = Vec::new();
    let mut streams: Vec<Vec<String>> = Vec::new();
    for i in 0..64 {
        let name = format!("{} {}", adjectives[i / 8], nouns[i % 8]);
        let mut doc = FieldedDocument::new(format!("D{i:02}"));
        doc.push_instance(Field::Title, &name).unwrap();
        doc.push_instance(Field::Description, format!("quality {name} for the home"))
            .unwrap();
        docs.push(doc);
        let query = name.clone();
        pairs.push(LabeledPair::new(&query, format!("D{i:02}"), 1, RawSignal::Clicks(9)));
        pairs.push(LabeledPair::new(
            &query,
            format!("D{:02}", (i + 13) % 64),
            0,
            RawSignal::Clicks(0),
        ));
        streams.push(tokenize(&format!("quality {name} for the home")));
    }
    let vocab = Vocab::build(streams.iter().map(|s| s.iter().map(|t| t.as_str())), 1);
    (Catalog::new(docs).unwrap(), pairs, vocab)
}

#[test]
fn criterion_4_overfits_sixty_four_queries() {
    let start = Instant::now();
    let (catalog, pairs, vocab) = overfit_corpus();
    let config = ModelConfig::desk(vocab.len(), DocRepr::Fielded);
    let mut model: Model<f32> = Model::init(config, 7).unwrap();
    let cfg = TrainConfig {
        base_lr: 1e-3,
        epochs: 200,
        ..TrainConfig::default()
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap();
    pool.install(|| fit(&mut model, &pairs, &[], &catalog, &vocab, &cfg))
        .unwrap();

    let train_bce: f64 = pairs
        .iter()
        .map(|p| {
            let doc = catalog.get(&p.doc_id).unwrap();
            bce_loss(model.score(&p.query, doc, &vocab).unwrap() as f64, p.label)
        })
        .sum::<f64>()
        / pairs.len() as f64;
    let groups = group_pairs(&pairs);
    let report = evaluate_run(
        |g| {
            g.docs
                .iter()
                .map(|id| Ok(model.score(&g.query, catalog.get(id).unwrap(), &vocab)? as f64))
                .collect()
        },
        &groups,
        &[1],
    )
    .unwrap();
    let ndcg1 = report.mean(Metric::NdcgAt(1)).unwrap();
    let elapsed = start.elapsed();
    verdict(
        4,
        train_bce < 0.05 && ndcg1 == 1.0 && elapsed.as_secs_f64() < 600.0,
        &format!(
            "64 docs / 64 queries: train BCE {train_bce:.4} (< 0.05), train NDCG@1 \
             {ndcg1:.4} (= 1.0), {:.0}s single-threaded (< 600s)",
            elapsed.as_secs_f64()
        ),
    );
}

// --- criterion 5: field-aware matching beats flattened matching when ---
// --- relevance depends on which field holds the term ---

/// Twin documents that flatten to identical token-id sequences: both carry
/// the query's brand word in the Description, but only the relevant twin
/// carries it in the Brand field. Brand words stay out of the vocabulary so
/// the flattened encodings agree exactly and only the field-wise match
/// matrix can separate the twins.
fn field_sensitivity_task() -> (Catalog, Vec<LabeledPair>, Vec<LabeledPair>, Vocab) {
    let mut docs = Vec::new();
    let mut train = Vec::new();
    let mut test = Vec::new();
    let mut vocab_words: Vec<String> = vec!["common".into()];
    for i in 0..32 {
        let item = format!("item{i}");
        let brand = format!("brand{i}");
        let decoy = format!("decoy{i}");
        vocab_words.push(item.clone());
        // Tie-break order under equal scores is ascending doc id; alternate
        // which twin sorts first so the flat model's per-query AP varies.
        let (rel_id, dis_id) = if i % 2 == 0 {
            (format!("q{i:02}a"), format!("q{i:02}b"))
        } else {
            (format!("q{i:02}b"), format!("q{i:02}a"))
        };
        let mut rel = FieldedDocument::new(&rel_id);
        rel.push_instance(Field::Title, &item).unwrap();
        rel.push_instance(Field::Description, format!("common {brand}")).unwrap();
        rel.push_instance(Field::Brand, &brand).unwrap();
        let mut dis = FieldedDocument::new(&dis_id);
        dis.push_instance(Field::Title, &item).unwrap();
        dis.push_instance(Field::Description, format!("common {brand}")).unwrap();
        dis.push_instance(Field::Brand, &decoy).unwrap();
        assert_eq!(rel.flatten(), format!("{item} common {brand} {brand}"));
        assert_eq!(dis.flatten(), format!("{item} common {brand} {decoy}"));
        docs.push(rel);
        docs.push(dis);
        let query = format!("{item} {brand}");
        let pos = LabeledPair::new(&query, &rel_id, 1, RawSignal::Clicks(9));
        let neg = LabeledPair::new(&query, &dis_id, 0, RawSignal::Clicks(0));
        if i < 24 {
            train.push(pos);
            train.push(neg);
        } else {
            test.push(pos);
            test.push(neg);
        }
    }
    // Brand and decoy words are absent on purpose: they must collapse to
    // the unknown-token id inside the encoder while remaining visible to
    // the string-level match matrix.
    let vocab = Vocab::from_tokens(vocab_words);
    (Catalog::new(docs).unwrap(), train, test, vocab)
}

fn small_config(vocab_size: usize, repr: DocRepr) -> ModelConfig {
    ModelConfig {
        encoder: EncoderConfig {
            d_model: 16,
            n_layers: 1,
            n_heads: 2,
            d_ff: 32,
            max_query_len: 4,
            max_field_len: 8,
            vocab_size,
            dropout_p: 0.1,
        },
        head_hidden: 16,
        head_dropout_p: 0.5,
        repr,
    }
}

fn group_scores(
    model: &Model<f32>,
    catalog: &Catalog,
    vocab: &Vocab,
    g: &QueryGroup,
) -> Result<Vec<f64>> {
    g.docs
        .iter()
        .map(|id| Ok(model.score(&g.query, catalog.get(id).unwrap(), vocab)? as f64))
        .collect()
}

#[test]
fn criterion_5_field_aware_matching_beats_flattening() {
    let start = Instant::now();
    let (catalog, train, test, vocab) = field_sensitivity_task();
    let test_groups = group_pairs(&test);
    let mut wins = 0usize;
    let mut last_p = f64::NAN;
    let mut details = Vec::new();
    for seed in 0..5u64 {
        let cfg = TrainConfig {
            base_lr: 5e-3,
            epochs: 30,
            seed,
            ..TrainConfig::default()
        };
        let run = |repr: DocRepr| -> Result<Model<f32>> {
            let mut model = Model::init(small_config(vocab.len(), repr), seed)?;
            fit(&mut model, &train, &[], &catalog, &vocab, &cfg)?;
            Ok(model)
        };
        let fielded = run(DocRepr::Fielded).unwrap();
        let flat = run(DocRepr::Flat).unwrap();
        let cmp = run_ablation(
            |g| group_scores(&fielded, &catalog, &vocab, g),
            |g| group_scores(&flat, &catalog, &vocab, g),
            &test_groups,
            &[5],
        )
        .unwrap();
        let map_idx = cmp
            .metrics
            .iter()
            .position(|m| *m == Metric::Map)
            .expect("MAP present");
        let map_fielded = cmp.a.means[map_idx];
        let map_flat = cmp.b.means[map_idx];
        let p = cmp.tests[map_idx].p;
        if map_fielded > map_flat {
            wins += 1;
        }
        last_p = p;
        assert!(p.is_finite(), "seed {seed}: non-finite p-value");
        details.push(format!("seed {seed}: {map_fielded:.3} vs {map_flat:.3} (p={p:.3})"));
    }
    let elapsed = start.elapsed();
    verdict(
        5,
        wins >= 4 && last_p.is_finite() && elapsed.as_secs_f64() < 1800.0,
        &format!(
            "held-out MAP fielded > flat in {wins}/5 seeds [{}] in {:.0}s",
            details.join("; "),
            elapsed.as_secs_f64()
        ),
    );
}

// --- criterion 6: interaction-feature layout and the identity case ---

#[test]
fn criterion_6_feature_layout_and_identity_zeroing() {
    for (d, lq) in [(4usize, 3usize), (8, 5), (16, 16), (64, 16)] {
        let config = ModelConfig {
            encoder: EncoderConfig {
                d_model: d,
                n_layers: 1,
                n_heads: 1,
                d_ff: 8,
                max_query_len: lq,
                max_field_len: 8,
                vocab_size: 8,
                dropout_p: 0.0,
            },
            head_hidden: 4,
            head_dropout_p: 0.0,
            repr: DocRepr::Fielded,
        };
        assert_eq!(config.feature_len(), 7 * d + 7 * d + 7 * lq);

        // Identity case: every field row equals the query vector, so the
        // absolute-difference block must vanish exactly.
        let q = QueryVector {
            values: (0..d).map(|i| 0.25 * i as f64 - 1.0).collect::<Vec<f64>>(),
        };
        let mut rows = Matrix::zeros(7, d);
        for r in 0..7 {
            rows.row_mut(r).copy_from_slice(&q.values);
        }
        let field_matrix = fieldrank_core::encoder::FieldMatrix {
            rows,
            present: [true; 7],
        };
        let mut doc = FieldedDocument::new("X");
        doc.push_instance(Field::Title, "oak door").unwrap();
        doc.push_instance(Field::Description, "red lamp").unwrap();
        let m = build_match_matrix(&tokenize("oak lamp"), &doc, lq);
        let features = smm_features(&q, &field_matrix, &m).unwrap();
        assert_eq!(features.len(), config.feature_len());
        assert!(
            features[..7 * d].iter().all(|&v| v == 0.0),
            "identity case left nonzero |diff| entries at d={d}"
        );
        // The product block reproduces the squared query values per field.
        for r in 0..7 {
            for c in 0..d {
                assert_eq!(features[7 * d + r * d + c], q.values[c] * q.values[c]);
            }
        }
    }
    verdict(
        6,
        true,
        "feature length is 14*d_model + 7*max_query_len across configs; identity case \
         zeroes the difference block exactly",
    );
}

// --- criterion 7: training through the binary is bitwise reproducible ---

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fieldrank"))
}

fn run_train(dir: &Path, label: &str) -> (Vec<u8>, Vec<u8>, Vec<u8>) {
    let out_dir = dir.join(label);
    let out = bin()
        .args([
            "train",
            "--catalog",
            dir.join("catalog.jsonl").to_str().unwrap(),
            "--train",
            dir.join("pairs.tsv").to_str().unwrap(),
            "--validation",
            dir.join("pairs.tsv").to_str().unwrap(),
            "--out-dir",
            out_dir.to_str().unwrap(),
            "--threads",
            "1",
            "--seed",
            "42",
            "--set",
            "d_model=8",
            "--set",
            "n_heads=2",
            "--set",
            "d_ff=16",
            "--set",
            "head_hidden=8",
            "--set",
            "max_field_len=16",
            "--set",
            "epochs=3",
        ])
        .output()
        .expect("binary runs");
    assert!(
        out.status.success(),
        "train failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    (
        std::fs::read(out_dir.join("model.ckpt")).unwrap(),
        std::fs::read(out_dir.join("train_log.tsv")).unwrap(),
        std::fs::read(out_dir.join("history.jsonl")).unwrap(),
    )
}

#[test]
fn criterion_7_training_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("catalog.jsonl"),
        concat!(
            r#"{"doc_id":"P1","Title":["red oak door"],"Description":["solid oak door"]}"#,
            "\n",
            r#"{"doc_id":"P2","Title":["steel drill"],"Description":["masonry drill bit"]}"#,
            "\n",
            r#"{"doc_id":"P3","Title":["desk lamp"],"Description":["green glass shade"]}"#,
            "\n",
            r#"{"doc_id":"P4","Title":["oak table"],"Description":["dining table in oak"]}"#,
            "\n",
        ),
    )
    .unwrap();
    std::fs::write(
        dir.path().join("pairs.tsv"),
        "red door\tP1\t1\t9\nred door\tP2\t0\t0\ndesk lamp\tP3\t1\t8\ndesk lamp\tP4\t0\t0\n\
         oak table\tP4\t1\t7\noak table\tP2\t0\t0\n",
    )
    .unwrap();
    let (ckpt_a, log_a, hist_a) = run_train(dir.path(), "a");
    let (ckpt_b, log_b, hist_b) = run_train(dir.path(), "b");
    let ok = ckpt_a == ckpt_b && log_a == log_b && hist_a == hist_b;
    verdict(
        7,
        ok,
        "two train runs with identical config and --threads 1 produced byte-identical \
         checkpoints and reports",
    );
}

// --- criterion 8: relevance-CSV pipeline smoke test ---

fn run_cli(args: &[&str]) -> std::process::Output {
    bin().args(args).output().expect("binary runs")
}

fn pipeline_ndcg5(dir: &Path, train_csv: &Path, descriptions: Option<&Path>, attributes: Option<&Path>) -> f64 {
    let out_dir = dir.join("run");
    let out_s = out_dir.to_str().unwrap();
    let mut args = vec![
        "ingest".to_string(),
        "--psr-train".into(),
        train_csv.to_str().unwrap().into(),
        "--out-dir".into(),
        out_s.into(),
    ];
    if let Some(p) = descriptions {
        args.push("--psr-descriptions".into());
        args.push(p.to_str().unwrap().into());
    }
    if let Some(p) = attributes {
        args.push("--psr-attributes".into());
        args.push(p.to_str().unwrap().into());
    }
    let arg_refs: Vec<&str> = args.iter().map(|s| s.as_str()).collect();
    let out = run_cli(&arg_refs);
    assert!(out.status.success(), "ingest: {}", String::from_utf8_lossy(&out.stderr));

    for step in [
        vec![
            "index",
            "--catalog",
            &format!("{out_s}/catalog.jsonl"),
            "--out-dir",
            out_s,
        ],
        vec![
            "score-lexical",
            "--index",
            &format!("{out_s}/index.bin"),
            "--pairs",
            &format!("{out_s}/test.tsv"),
            "--scorer",
            "bm25",
            "--out-dir",
            out_s,
        ],
        vec![
            "evaluate",
            "--pairs",
            &format!("{out_s}/test.tsv"),
            "--scores",
            &format!("{out_s}/scores.tsv"),
            "--out-dir",
            out_s,
        ],
    ] {
        let owned: Vec<String> = step.iter().map(|s| s.to_string()).collect();
        let refs: Vec<&str> = owned.iter().map(|s| s.as_str()).collect();
        let out = run_cli(&refs);
        assert!(
            out.status.success(),
            "{} failed: {}",
            step[0],
            String::from_utf8_lossy(&out.stderr)
        );
    }
    let report = std::fs::read_to_string(out_dir.join("report.tsv")).unwrap();
    let header: Vec<&str> = report.lines().next().unwrap().split('\t').collect();
    let col = header.iter().position(|h| *h == "NDCG@5").unwrap();
    let mean_line = report.lines().find(|l| l.starts_with("__mean__")).unwrap();
    mean_line.split('\t').nth(col).unwrap().parse().unwrap()
}

#[test]
fn criterion_8_relevance_csv_smoke_test() {
    // Always exercised: a synthetic miniature of the graded-CSV bundle.
    let dir = tempfile::tempdir().unwrap();
    let train = dir.path().join("train.csv");
    let mut rows = String::from("id,product_uid,product_title,search_term,relevance\n");
    let items = [
        "oak door", "steel drill", "desk lamp", "oak table", "red paint", "ceiling light",
        "brass hinge", "glass shade", "wood saw", "steel valve", "wall panel", "door knob",
    ];
    let mut row_id = 1;
    for (i, item) in items.iter().enumerate() {
        let uid = 100000 + i;
        let other = 100000 + (i + 1) % items.len();
        rows.push_str(&format!("{row_id},{uid},{item},{item},3\n"));
        row_id += 1;
        rows.push_str(&format!("{row_id},{other},{},{item},1\n", items[(i + 1) % items.len()]));
        row_id += 1;
    }
    std::fs::write(&train, rows).unwrap();
    let descriptions = dir.path().join("descriptions.csv");
    let mut desc_rows = String::from("product_uid,product_description\n");
    for (i, item) in items.iter().enumerate() {
        desc_rows.push_str(&format!("{},quality {item} for the home\n", 100000 + i));
    }
    std::fs::write(&descriptions, desc_rows).unwrap();
    let synthetic_ndcg = pipeline_ndcg5(dir.path(), &train, Some(&descriptions), None);
    assert!((0.0..=1.0).contains(&synthetic_ndcg));

    // Optional: the real downloadable dataset, when present locally.
    match std::env::var("FIELDRANK_PSR_DIR") {
        Ok(root) => {
            let root = std::path::PathBuf::from(root);
            let real_dir = tempfile::tempdir().unwrap();
            let descriptions = root.join("product_descriptions.csv");
            let attributes = root.join("attributes.csv");
            let ndcg5 = pipeline_ndcg5(
                real_dir.path(),
                &root.join("train.csv"),
                descriptions.exists().then_some(&descriptions).map(|p| p as &Path),
                attributes.exists().then_some(&attributes).map(|p| p as &Path),
            );
            let in_band = (ndcg5 - 0.384).abs() <= 0.06;
            // Advisory band: report honestly either way, fail only on a
            // broken pipeline (asserted above).
            verdict(
                8,
                true,
                &format!(
                    "synthetic bundle NDCG@5 {synthetic_ndcg:.3}; real dataset NDCG@5 \
                     {ndcg5:.3} — {} the advisory band 0.384±0.06",
                    if in_band { "inside" } else { "OUTSIDE" }
                ),
            );
        }
        Err(_) => {
            verdict(
                8,
                true,
                &format!(
                    "synthetic bundle NDCG@5 {synthetic_ndcg:.3}; real dataset SKIPPED \
                     (set FIELDRANK_PSR_DIR to run)"
                ),
            );
        }
    }
}

// --- criterion 9: learning-rate schedule reference points ---

#[test]
fn criterion_9_learning_rate_schedule_reference_points() {
    let cfg = TrainConfig::default();
    let at_50 = lr_at(50, 1000, &cfg).unwrap();
    assert_eq!(at_50, 5e-5);
    let peak = lr_at(100, 1000, &cfg).unwrap();
    assert_eq!(peak, 1e-4);
    let max_over_schedule = (0..=1000)
        .map(|s| lr_at(s, 1000, &cfg).unwrap())
        .fold(0.0, f64::max);
    assert_eq!(max_over_schedule, 1e-4);
    verdict(
        9,
        true,
        "warmup hits 5e-5 at step 50 of 1000 and peaks at exactly 1e-4",
    );
}
