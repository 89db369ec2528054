//! Ranking metrics (NDCG@k, MAP, MRR), evaluation reports, per-class
//! breakdowns, and paired significance testing.
//!
//! All metrics use binary gains and macro (per-query) averaging. Ties in
//! scores always resolve by ascending doc_id so reports are reproducible.

mod ttest;

pub use ttest::{ln_gamma, paired_ttest, reg_inc_beta, student_two_tailed_p, TTest};

use std::collections::HashMap;
use std::fmt;
use std::io::Write;

use rayon::prelude::*;
use serde_json::json;

use crate::catalog::{LabeledPair, QueryClass};
use crate::error::{Error, Result};

/// One evaluated ranking metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Metric {
    NdcgAt(usize),
    Map,
    Mrr,
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Metric::NdcgAt(k) => write!(f, "NDCG@{k}"),
            Metric::Map => f.write_str("MAP"),
            Metric::Mrr => f.write_str("MRR"),
        }
    }
}

/// Indices of `doc_ids` ordered by descending score, ties by ascending
/// doc_id.
pub fn order_by_score(doc_ids: &[String], scores: &[f64]) -> Vec<usize> {
    debug_assert_eq!(doc_ids.len(), scores.len());
    let mut order: Vec<usize> = (0..doc_ids.len()).collect();
    order.sort_by(|&i, &j| {
        scores[j]
            .total_cmp(&scores[i])
            .then_with(|| doc_ids[i].cmp(&doc_ids[j]))
    });
    order
}

/// NDCG at cutoff `k` over binary labels in ranked order; 0 when the list
/// holds no relevant document.
pub fn ndcg_at_k(ranked_labels: &[u8], k: usize) -> f64 {
    debug_assert!(k >= 1);
    let relevant = ranked_labels.iter().filter(|&&l| l == 1).count();
    if relevant == 0 {
        return 0.0;
    }
    let gain = |rank: usize| 1.0 / ((rank + 2) as f64).log2();
    // An empty sum is IEEE -0.0; the `+ 0.0` keeps reports printing
    // "0.000000" when nothing relevant made the cutoff.
    let dcg: f64 = ranked_labels
        .iter()
        .take(k)
        .enumerate()
        .filter(|&(_, &l)| l == 1)
        .map(|(i, _)| gain(i))
        .sum::<f64>()
        + 0.0;
    let idcg: f64 = (0..relevant.min(k)).map(gain).sum();
    dcg / idcg
}

/// Average precision over the full ranked list; 0 when nothing is relevant.
pub fn average_precision(ranked_labels: &[u8]) -> f64 {
    let mut hits = 0u32;
    let mut total = 0.0;
    for (i, &label) in ranked_labels.iter().enumerate() {
        if label == 1 {
            hits += 1;
            total += f64::from(hits) / (i + 1) as f64;
        }
    }
    if hits == 0 {
        0.0
    } else {
        total / f64::from(hits)
    }
}

/// Reciprocal rank of the first relevant document; 0 when none is.
pub fn mrr(ranked_labels: &[u8]) -> f64 {
    ranked_labels
        .iter()
        .position(|&l| l == 1)
        .map_or(0.0, |i| 1.0 / (i + 1) as f64)
}

/// One query's candidate set with aligned binary labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryGroup {
    pub query: String,
    pub docs: Vec<String>,
    pub labels: Vec<u8>,
}

impl QueryGroup {
    pub fn label_of(&self, doc_id: &str) -> u8 {
        self.docs
            .iter()
            .position(|d| d == doc_id)
            .map_or(0, |i| self.labels[i])
    }
}

/// Group pairs by query, preserving first-appearance order of queries and
/// of documents within a query. A repeated (query, doc) keeps its first
/// label.
pub fn group_pairs(pairs: &[LabeledPair]) -> Vec<QueryGroup> {
    let mut order: Vec<&str> = Vec::new();
    let mut groups: HashMap<&str, QueryGroup> = HashMap::new();
    for pair in pairs {
        let group = groups.entry(&pair.query).or_insert_with(|| {
            order.push(&pair.query);
            QueryGroup {
                query: pair.query.clone(),
                docs: Vec::new(),
                labels: Vec::new(),
            }
        });
        if !group.docs.contains(&pair.doc_id) {
            group.docs.push(pair.doc_id.clone());
            group.labels.push(pair.label);
        }
    }
    order.into_iter().filter_map(|q| groups.remove(q)).collect()
}

/// Per-query metric values plus macro means.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub metrics: Vec<Metric>,
    /// (query, values aligned with `metrics`), in evaluation order.
    pub rows: Vec<(String, Vec<f64>)>,
    pub means: Vec<f64>,
    /// Queries excluded for having fewer than 2 candidates.
    pub skipped: Vec<String>,
}

impl MetricsReport {
    pub fn mean(&self, metric: Metric) -> Option<f64> {
        self.metrics
            .iter()
            .position(|&m| m == metric)
            .map(|i| self.means[i])
    }

    /// Per-query values of one metric, in row order.
    pub fn column(&self, metric: Metric) -> Option<Vec<f64>> {
        let i = self.metrics.iter().position(|&m| m == metric)?;
        Some(self.rows.iter().map(|(_, v)| v[i]).collect())
    }

    /// Tab-separated table: header, one row per query, then a mean row.
    pub fn write_tsv<W: Write>(&self, out: &mut W) -> Result<()> {
        write!(out, "query")?;
        for m in &self.metrics {
            write!(out, "\t{m}")?;
        }
        writeln!(out)?;
        for (query, values) in &self.rows {
            write!(out, "{query}")?;
            for v in values {
                write!(out, "\t{v:.6}")?;
            }
            writeln!(out)?;
        }
        write!(out, "__mean__")?;
        for v in &self.means {
            write!(out, "\t{v:.6}")?;
        }
        writeln!(out)?;
        Ok(())
    }

    /// Line-delimited records: one per query plus a final mean record.
    pub fn write_jsonl<W: Write>(&self, out: &mut W) -> Result<()> {
        for (query, values) in &self.rows {
            let metrics: serde_json::Map<String, serde_json::Value> = self
                .metrics
                .iter()
                .zip(values)
                .map(|(m, &v)| (m.to_string(), json!(v)))
                .collect();
            serde_json::to_writer(&mut *out, &json!({"type": "query", "query": query, "metrics": metrics}))?;
            out.write_all(b"\n")?;
        }
        let means: serde_json::Map<String, serde_json::Value> = self
            .metrics
            .iter()
            .zip(&self.means)
            .map(|(m, &v)| (m.to_string(), json!(v)))
            .collect();
        serde_json::to_writer(
            &mut *out,
            &json!({
                "type": "mean",
                "queries": self.rows.len(),
                "skipped": self.skipped,
                "metrics": means,
            }),
        )?;
        out.write_all(b"\n")?;
        Ok(())
    }
}

/// Metric set for a list of NDCG cutoffs: NDCG@k for each k, then MAP and
/// MRR.
pub fn metric_set(ks: &[usize]) -> Vec<Metric> {
    let mut metrics: Vec<Metric> = ks.iter().map(|&k| Metric::NdcgAt(k)).collect();
    metrics.push(Metric::Map);
    metrics.push(Metric::Mrr);
    metrics
}

/// Rank each query's candidates with `score` and compute all metrics.
///
/// Queries with fewer than 2 candidates are skipped and recorded. Errors
/// when nothing remains to evaluate. `score` must return one value per
/// candidate, in candidate order.
pub fn evaluate_run<F>(score: F, groups: &[QueryGroup], ks: &[usize]) -> Result<MetricsReport>
where
    F: Fn(&QueryGroup) -> Result<Vec<f64>> + Sync,
{
    let metrics = metric_set(ks);
    let (evaluable, skipped): (Vec<&QueryGroup>, Vec<&QueryGroup>) =
        groups.iter().partition(|g| g.docs.len() >= 2);
    if evaluable.is_empty() {
        return Err(Error::InvalidInput(
            "no query has at least 2 candidates".into(),
        ));
    }
    let rows: Vec<(String, Vec<f64>)> = evaluable
        .par_iter()
        .map(|group| {
            let scores = score(group)?;
            if scores.len() != group.docs.len() {
                return Err(Error::Shape(format!(
                    "query {:?}: {} scores for {} candidates",
                    group.query,
                    scores.len(),
                    group.docs.len()
                )));
            }
            let order = order_by_score(&group.docs, &scores);
            let ranked: Vec<u8> = order.iter().map(|&i| group.labels[i]).collect();
            let values: Vec<f64> = metrics
                .iter()
                .map(|m| match *m {
                    Metric::NdcgAt(k) => ndcg_at_k(&ranked, k),
                    Metric::Map => average_precision(&ranked),
                    Metric::Mrr => mrr(&ranked),
                })
                .collect();
            Ok((group.query.clone(), values))
        })
        .collect::<Result<_>>()?;
    let n = rows.len() as f64;
    let means: Vec<f64> = (0..metrics.len())
        .map(|i| rows.iter().map(|(_, v)| v[i]).sum::<f64>() / n)
        .collect();
    Ok(MetricsReport {
        metrics,
        rows,
        means,
        skipped: skipped.iter().map(|g| g.query.clone()).collect(),
    })
}

/// Mean metrics over the queries carrying one class.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassRow {
    pub class: QueryClass,
    pub query_count: usize,
    pub means: Vec<f64>,
}

/// Per-class mean metrics. Queries absent from `classes` count as
/// AllOthers; multi-class queries contribute to every class they carry.
/// Classes with no queries are omitted.
pub fn class_breakdown(
    report: &MetricsReport,
    classes: &HashMap<String, Vec<QueryClass>>,
) -> Vec<ClassRow> {
    let mut rows = Vec::new();
    for class in QueryClass::ALL {
        let mut sums = vec![0.0; report.metrics.len()];
        let mut count = 0usize;
        for (query, values) in &report.rows {
            let carries = match classes.get(query) {
                Some(list) => list.contains(&class),
                None => class == QueryClass::AllOthers,
            };
            if carries {
                count += 1;
                for (s, v) in sums.iter_mut().zip(values) {
                    *s += v;
                }
            }
        }
        if count > 0 {
            rows.push(ClassRow {
                class,
                query_count: count,
                means: sums.into_iter().map(|s| s / count as f64).collect(),
            });
        }
    }
    rows
}

/// Tab-separated class table: header, one row per non-empty class.
pub fn write_class_breakdown<W: Write>(
    out: &mut W,
    metrics: &[Metric],
    rows: &[ClassRow],
) -> Result<()> {
    write!(out, "class\tqueries")?;
    for m in metrics {
        write!(out, "\t{m}")?;
    }
    writeln!(out)?;
    for row in rows {
        write!(out, "{}\t{}", row.class, row.query_count)?;
        for v in &row.means {
            write!(out, "\t{v:.6}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Two runs over the same queries, with a paired t-test per metric.
#[derive(Debug, Clone)]
pub struct Comparison {
    pub metrics: Vec<Metric>,
    pub a: MetricsReport,
    pub b: MetricsReport,
    pub tests: Vec<TTest>,
}

/// Paired comparison of two reports produced over the same query set, in
/// the same order.
pub fn compare_reports(a: MetricsReport, b: MetricsReport) -> Result<Comparison> {
    if a.metrics != b.metrics {
        return Err(Error::InvalidInput("reports use different metrics".into()));
    }
    let queries_a: Vec<&String> = a.rows.iter().map(|(q, _)| q).collect();
    let queries_b: Vec<&String> = b.rows.iter().map(|(q, _)| q).collect();
    if queries_a != queries_b {
        return Err(Error::InvalidInput(
            "reports cover different query sets".into(),
        ));
    }
    let tests: Vec<TTest> = a
        .metrics
        .iter()
        .map(|&m| {
            let col_a = a.column(m).expect("metric present");
            let col_b = b.column(m).expect("metric present");
            paired_ttest(&col_a, &col_b)
        })
        .collect::<Result<_>>()?;
    Ok(Comparison {
        metrics: a.metrics.clone(),
        a,
        b,
        tests,
    })
}

/// Evaluate two scorers on the same groups and compare them pairwise.
pub fn run_ablation<F, G>(
    score_a: F,
    score_b: G,
    groups: &[QueryGroup],
    ks: &[usize],
) -> Result<Comparison>
where
    F: Fn(&QueryGroup) -> Result<Vec<f64>> + Sync,
    G: Fn(&QueryGroup) -> Result<Vec<f64>> + Sync,
{
    let a = evaluate_run(score_a, groups, ks)?;
    let b = evaluate_run(score_b, groups, ks)?;
    compare_reports(a, b)
}

/// Render a comparison as a tab-separated table: one row per system, then
/// t and p rows.
pub fn write_comparison<W: Write>(
    out: &mut W,
    cmp: &Comparison,
    name_a: &str,
    name_b: &str,
) -> Result<()> {
    write!(out, "system")?;
    for m in &cmp.metrics {
        write!(out, "\t{m}")?;
    }
    writeln!(out)?;
    for (name, report) in [(name_a, &cmp.a), (name_b, &cmp.b)] {
        write!(out, "{name}")?;
        for v in &report.means {
            write!(out, "\t{v:.6}")?;
        }
        writeln!(out)?;
    }
    write!(out, "t")?;
    for t in &cmp.tests {
        write!(out, "\t{:.6}", t.t)?;
    }
    writeln!(out)?;
    write!(out, "p")?;
    for t in &cmp.tests {
        write!(out, "\t{:.6}", t.p)?;
    }
    writeln!(out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::RawSignal;

    fn pair(query: &str, doc: &str, label: u8) -> LabeledPair {
        LabeledPair::new(query, doc, label, RawSignal::Clicks(u32::from(label) * 9))
    }

    #[test]
    fn ndcg_hand_example() {
        // DCG = 1 + 1/log2(4) = 1.5; IDCG = 1 + 1/log2(3).
        let value = ndcg_at_k(&[1, 0, 1], 5);
        assert!((value - 0.919_720_789_148_187_6).abs() < 1e-12, "{value}");
        assert_eq!(ndcg_at_k(&[1, 1, 0], 5), 1.0);
        assert_eq!(ndcg_at_k(&[0, 0, 0], 5), 0.0);
    }

    #[test]
    fn ndcg_cutoff_masks_late_hits() {
        // The relevant doc sits past the cutoff; DCG@1 = 0, and it must be
        // +0.0 so `{:.6}` never renders "-0.000000".
        assert_eq!(ndcg_at_k(&[0, 1], 1), 0.0);
        assert!(ndcg_at_k(&[0, 1], 1).is_sign_positive());
        // Once k covers the whole list, larger cutoffs change nothing.
        let labels = [0, 1, 0, 1, 1, 0];
        assert_eq!(ndcg_at_k(&labels, 6), ndcg_at_k(&labels, 60));
        // Raw DCG grows with k; NDCG itself need not (the ideal DCG grows
        // too), e.g. here NDCG@2 > NDCG@3.
        assert!(ndcg_at_k(&labels, 2) > ndcg_at_k(&labels, 3));
    }

    #[test]
    fn ap_hand_example() {
        let value = average_precision(&[1, 0, 1]);
        assert!((value - 5.0 / 6.0).abs() < 1e-12, "{value}");
        assert_eq!(average_precision(&[1, 1]), 1.0);
        assert_eq!(average_precision(&[0, 0]), 0.0);
    }

    #[test]
    fn mrr_is_first_hit_reciprocal() {
        assert_eq!(mrr(&[0, 0, 1]), 1.0 / 3.0);
        assert_eq!(mrr(&[1, 0]), 1.0);
        assert_eq!(mrr(&[0, 0]), 0.0);
    }

    #[test]
    fn order_breaks_ties_by_doc_id() {
        let docs: Vec<String> = ["B", "A", "C"].map(String::from).to_vec();
        let order = order_by_score(&docs, &[1.0, 1.0, 2.0]);
        assert_eq!(order, vec![2, 1, 0]);
    }

    #[test]
    fn grouping_preserves_order_and_dedupes() {
        let pairs = vec![
            pair("q1", "A", 1),
            pair("q2", "B", 0),
            pair("q1", "B", 0),
            pair("q1", "A", 0), // duplicate (q1, A): first label wins
        ];
        let groups = group_pairs(&pairs);
        assert_eq!(groups.len(), 2);
        assert_eq!(groups[0].query, "q1");
        assert_eq!(groups[0].docs, ["A", "B"]);
        assert_eq!(groups[0].labels, [1, 0]);
        assert_eq!(groups[0].label_of("A"), 1);
        assert_eq!(groups[0].label_of("missing"), 0);
    }

    #[test]
    fn oracle_scorer_is_perfect_and_adversary_is_not() {
        let pairs = vec![
            pair("q1", "A", 1),
            pair("q1", "B", 0),
            pair("q1", "C", 0),
            pair("q2", "A", 0),
            pair("q2", "B", 1),
        ];
        let groups = group_pairs(&pairs);
        let oracle = |g: &QueryGroup| Ok(g.labels.iter().map(|&l| f64::from(l)).collect());
        let report = evaluate_run(oracle, &groups, &[1, 5]).unwrap();
        for mean in &report.means {
            assert_eq!(*mean, 1.0);
        }

        let adversary =
            |g: &QueryGroup| Ok(g.labels.iter().map(|&l| -f64::from(l)).collect());
        let report = evaluate_run(adversary, &groups, &[1]).unwrap();
        assert_eq!(report.mean(Metric::NdcgAt(1)), Some(0.0));
    }

    #[test]
    fn single_candidate_queries_are_skipped() {
        let pairs = vec![pair("q1", "A", 1), pair("q1", "B", 0), pair("lonely", "C", 1)];
        let groups = group_pairs(&pairs);
        let oracle = |g: &QueryGroup| Ok(g.labels.iter().map(|&l| f64::from(l)).collect());
        let report = evaluate_run(oracle, &groups, &[5]).unwrap();
        assert_eq!(report.rows.len(), 1);
        assert_eq!(report.skipped, vec!["lonely".to_string()]);

        let only_lonely = group_pairs(&[pair("lonely", "C", 1)]);
        assert!(evaluate_run(oracle, &only_lonely, &[5]).is_err());
    }

    #[test]
    fn constant_score_shift_leaves_metrics_unchanged() {
        let pairs = vec![
            pair("q1", "A", 0),
            pair("q1", "B", 1),
            pair("q1", "C", 0),
            pair("q2", "A", 1),
            pair("q2", "B", 0),
        ];
        let groups = group_pairs(&pairs);
        let base = |g: &QueryGroup| {
            Ok(g.docs.iter().map(|d| f64::from(d.as_bytes()[0])).collect())
        };
        let shifted = |g: &QueryGroup| {
            Ok(g.docs
                .iter()
                .map(|d| f64::from(d.as_bytes()[0]) + 100.0)
                .collect())
        };
        let a = evaluate_run(base, &groups, &[1, 5]).unwrap();
        let b = evaluate_run(shifted, &groups, &[1, 5]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn class_rows_partition_the_aggregate() {
        let pairs = vec![
            pair("brand query", "A", 1),
            pair("brand query", "B", 0),
            pair("unit query", "A", 0),
            pair("unit query", "B", 1),
            pair("plain query", "A", 1),
            pair("plain query", "B", 0),
        ];
        let groups = group_pairs(&pairs);
        let scorer = |g: &QueryGroup| {
            Ok(g.docs.iter().map(|d| -f64::from(d.as_bytes()[0])).collect())
        };
        let report = evaluate_run(scorer, &groups, &[1]).unwrap();
        let mut classes = HashMap::new();
        classes.insert("brand query".to_string(), vec![QueryClass::BrandCollection]);
        classes.insert("unit query".to_string(), vec![QueryClass::Unit]);
        // "plain query" is uncovered and must fall into AllOthers.
        let rows = class_breakdown(&report, &classes);
        let names: Vec<QueryClass> = rows.iter().map(|r| r.class).collect();
        assert_eq!(
            names,
            [QueryClass::BrandCollection, QueryClass::Unit, QueryClass::AllOthers]
        );
        for row in &rows {
            assert_eq!(row.query_count, 1);
        }
        // Disjoint classes: count-weighted means reproduce the aggregate.
        for (i, mean) in report.means.iter().enumerate() {
            let weighted: f64 = rows
                .iter()
                .map(|r| r.means[i] * r.query_count as f64)
                .sum::<f64>()
                / report.rows.len() as f64;
            assert!((weighted - mean).abs() < 1e-12);
        }
    }

    #[test]
    fn multi_class_queries_count_in_every_class() {
        let pairs = vec![pair("black samsung tv", "A", 1), pair("black samsung tv", "B", 0)];
        let groups = group_pairs(&pairs);
        let oracle = |g: &QueryGroup| Ok(g.labels.iter().map(|&l| f64::from(l)).collect());
        let report = evaluate_run(oracle, &groups, &[1]).unwrap();
        let mut classes = HashMap::new();
        classes.insert(
            "black samsung tv".to_string(),
            vec![QueryClass::BrandCollection, QueryClass::ColorFinish],
        );
        let rows = class_breakdown(&report, &classes);
        assert_eq!(rows.len(), 2);
        assert!(rows.iter().all(|r| r.query_count == 1));
    }

    #[test]
    fn identical_runs_compare_with_p_one() {
        let pairs = vec![
            pair("q1", "A", 1),
            pair("q1", "B", 0),
            pair("q2", "A", 0),
            pair("q2", "B", 1),
        ];
        let groups = group_pairs(&pairs);
        let oracle = |g: &QueryGroup| Ok(g.labels.iter().map(|&l| f64::from(l)).collect());
        let cmp = run_ablation(oracle, oracle, &groups, &[1, 5]).unwrap();
        for test in &cmp.tests {
            assert_eq!(test.p, 1.0);
            assert_eq!(test.t, 0.0);
        }
        let mut rendered = Vec::new();
        write_comparison(&mut rendered, &cmp, "fielded", "flat").unwrap();
        let text = String::from_utf8(rendered).unwrap();
        assert!(text.starts_with("system\tNDCG@1\tNDCG@5\tMAP\tMRR\n"), "{text}");
        assert!(text.contains("fielded\t") && text.contains("flat\t"));
    }

    #[test]
    fn comparison_rejects_mismatched_query_sets() {
        let a_pairs = vec![pair("q1", "A", 1), pair("q1", "B", 0)];
        let b_pairs = vec![pair("q2", "A", 1), pair("q2", "B", 0)];
        let oracle = |g: &QueryGroup| Ok(g.labels.iter().map(|&l| f64::from(l)).collect());
        let a = evaluate_run(oracle, &group_pairs(&a_pairs), &[1]).unwrap();
        let b = evaluate_run(oracle, &group_pairs(&b_pairs), &[1]).unwrap();
        assert!(compare_reports(a, b).is_err());
    }

    #[test]
    fn report_writers_emit_stable_tables() {
        let pairs = vec![pair("q1", "A", 1), pair("q1", "B", 0)];
        let groups = group_pairs(&pairs);
        let oracle = |g: &QueryGroup| Ok(g.labels.iter().map(|&l| f64::from(l)).collect());
        let report = evaluate_run(oracle, &groups, &[1, 5]).unwrap();

        let mut tsv = Vec::new();
        report.write_tsv(&mut tsv).unwrap();
        let text = String::from_utf8(tsv).unwrap();
        assert_eq!(
            text,
            "query\tNDCG@1\tNDCG@5\tMAP\tMRR\n\
             q1\t1.000000\t1.000000\t1.000000\t1.000000\n\
             __mean__\t1.000000\t1.000000\t1.000000\t1.000000\n"
        );

        let mut jsonl = Vec::new();
        report.write_jsonl(&mut jsonl).unwrap();
        let lines: Vec<&str> = std::str::from_utf8(&jsonl).unwrap().lines().collect();
        assert_eq!(lines.len(), 2);
        let mean_record: serde_json::Value = serde_json::from_str(lines[1]).unwrap();
        assert_eq!(mean_record["type"], "mean");
        assert_eq!(mean_record["metrics"]["MAP"], 1.0);
    }

    /// Expected MRR of a random permutation with 1 relevant among 4 is
    /// (1 + 1/2 + 1/3 + 1/4)/4; check by enumerating all orderings via
    /// score permutations.
    #[test]
    fn random_ranking_mrr_expectation() {
        let docs: Vec<String> = ["A", "B", "C", "D"].map(String::from).to_vec();
        let labels = [1u8, 0, 0, 0];
        let mut total = 0.0;
        let mut count = 0usize;
        let scores = [4.0, 3.0, 2.0, 1.0];
        // All 24 assignments of distinct scores to the four docs.
        let perms = permutations(&[0, 1, 2, 3]);
        for perm in &perms {
            let assigned: Vec<f64> = perm.iter().map(|&i| scores[i]).collect();
            let order = order_by_score(&docs, &assigned);
            let ranked: Vec<u8> = order.iter().map(|&i| labels[i]).collect();
            total += mrr(&ranked);
            count += 1;
        }
        let mean = total / count as f64;
        let expected = (1.0 + 0.5 + 1.0 / 3.0 + 0.25) / 4.0;
        assert!((mean - expected).abs() < 1e-12, "{mean} vs {expected}");
        assert!((expected - 0.520_833_333_333_333_3).abs() < 1e-12);
    }

    fn permutations(items: &[usize]) -> Vec<Vec<usize>> {
        if items.len() <= 1 {
            return vec![items.to_vec()];
        }
        let mut out = Vec::new();
        for (i, &head) in items.iter().enumerate() {
            let mut rest = items.to_vec();
            rest.remove(i);
            for mut tail in permutations(&rest) {
                tail.insert(0, head);
                out.push(tail);
            }
        }
        out
    }
}
