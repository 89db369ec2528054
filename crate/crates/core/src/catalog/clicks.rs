//! Click-log ingestion: triples → binary labels → query filter → splits,
//! plus the SearchTerms field builder.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::BufRead;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Catalog, Field, LabeledPair, RawSignal};
use crate::error::{Error, Result};

/// One aggregated click-log record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClickTriple {
    pub query: String,
    pub doc_id: String,
    pub clicks: u32,
}

/// Parse outcome: well-formed triples plus per-line rejections. Callers
/// decide how many rejections they tolerate.
#[derive(Debug, Default)]
pub struct ClickParse {
    pub triples: Vec<ClickTriple>,
    pub rejected: Vec<Error>,
}

/// Read tab-separated (query, doc_id, clicks) lines, preserving input
/// order. Malformed lines land in `rejected` with their line number.
pub fn parse_click_triples<R: BufRead>(reader: R) -> Result<ClickParse> {
    let mut parse = ClickParse::default();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut cols = line.split('\t');
        let (Some(query), Some(doc_id), Some(clicks)) = (cols.next(), cols.next(), cols.next())
        else {
            parse
                .rejected
                .push(Error::record(i + 1, "expected 3 tab-separated columns"));
            continue;
        };
        if cols.next().is_some() {
            parse
                .rejected
                .push(Error::record(i + 1, "expected 3 tab-separated columns"));
            continue;
        }
        match clicks.parse::<u32>() {
            Ok(clicks) => parse.triples.push(ClickTriple {
                query: query.to_string(),
                doc_id: doc_id.to_string(),
                clicks,
            }),
            Err(_) => parse
                .rejected
                .push(Error::record(i + 1, format!("bad click count {clicks:?}"))),
        }
    }
    Ok(parse)
}

/// Binary label from a click count: relevant iff `clicks >= r`.
pub fn binarize_clicks(clicks: u32, r: u32) -> u8 {
    debug_assert!(r >= 1);
    u8::from(clicks >= r)
}

/// Turn triples into labeled pairs at click threshold `r`.
pub fn label_click_pairs(triples: &[ClickTriple], r: u32) -> Vec<LabeledPair> {
    triples
        .iter()
        .map(|t| {
            LabeledPair::new(
                t.query.clone(),
                t.doc_id.clone(),
                binarize_clicks(t.clicks, r),
                RawSignal::Clicks(t.clicks),
            )
        })
        .collect()
}

/// Keep pairs whose query (a) has at least one relevant document, (b) is
/// at least 3 characters long, and (c) is not numeric-only.
pub fn filter_queries(pairs: Vec<LabeledPair>) -> Vec<LabeledPair> {
    let mut has_positive: HashMap<&str, bool> = HashMap::new();
    for p in &pairs {
        let e = has_positive.entry(p.query.as_str()).or_insert(false);
        *e |= p.label == 1;
    }
    let keep: HashSet<String> = has_positive
        .into_iter()
        .filter(|&(q, positive)| {
            positive
                && q.chars().count() >= 3
                && q.chars().any(|c| !c.is_numeric() && !c.is_whitespace())
        })
        .map(|(q, _)| q.to_string())
        .collect();
    pairs.into_iter().filter(|p| keep.contains(&p.query)).collect()
}

/// Up to `top_k` unique queries that clicked on `doc_id`, by descending
/// total clicks then ascending query text. Feeds the SearchTerms field.
pub fn build_search_terms(triples: &[ClickTriple], doc_id: &str, top_k: usize) -> Vec<String> {
    let mut totals: BTreeMap<&str, u64> = BTreeMap::new();
    for t in triples {
        if t.doc_id == doc_id && t.clicks >= 1 {
            *totals.entry(t.query.as_str()).or_insert(0) += u64::from(t.clicks);
        }
    }
    rank_queries(totals, top_k)
}

fn rank_queries(totals: BTreeMap<&str, u64>, top_k: usize) -> Vec<String> {
    let mut ranked: Vec<(&str, u64)> = totals.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ranked
        .into_iter()
        .take(top_k)
        .map(|(q, _)| q.to_string())
        .collect()
}

/// Fill every document's SearchTerms field from `train_triples`.
///
/// The triples must come from the training split only, otherwise search
/// terms leak evaluation queries into document text.
pub fn apply_search_terms(
    catalog: &mut Catalog,
    train_triples: &[ClickTriple],
    top_k: usize,
) -> Result<()> {
    let mut per_doc: HashMap<&str, BTreeMap<&str, u64>> = HashMap::new();
    for t in train_triples {
        if t.clicks >= 1 && catalog.contains(&t.doc_id) {
            *per_doc
                .entry(t.doc_id.as_str())
                .or_default()
                .entry(t.query.as_str())
                .or_insert(0) += u64::from(t.clicks);
        }
    }
    let assignments: Vec<(String, Vec<String>)> = per_doc
        .into_iter()
        .map(|(doc_id, totals)| (doc_id.to_string(), rank_queries(totals, top_k)))
        .collect();
    for (doc_id, terms) in assignments {
        catalog.set_field(&doc_id, Field::SearchTerms, terms)?;
    }
    Ok(())
}

/// Disjoint train/validation/test pair sets, partitioned by unique query.
#[derive(Debug, Default)]
pub struct Splits {
    pub train: Vec<LabeledPair>,
    pub validation: Vec<LabeledPair>,
    pub test: Vec<LabeledPair>,
}

/// Partition pairs so every query lands in exactly one split. The unique
/// queries are shuffled with a seeded generator, making the partition a
/// function of (query set, fractions, seed) alone.
pub fn split_by_query(
    pairs: Vec<LabeledPair>,
    validation_frac: f64,
    test_frac: f64,
    seed: u64,
) -> Result<Splits> {
    if !(0.0..1.0).contains(&validation_frac)
        || !(0.0..1.0).contains(&test_frac)
        || validation_frac + test_frac >= 1.0
    {
        return Err(Error::InvalidInput(format!(
            "bad split fractions: validation {validation_frac}, test {test_frac}"
        )));
    }
    let unique: BTreeMap<String, ()> = pairs.iter().map(|p| (p.query.clone(), ())).collect();
    let mut queries: Vec<String> = unique.into_keys().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    queries.shuffle(&mut rng);

    let n = queries.len();
    let n_val = (n as f64 * validation_frac).round() as usize;
    let n_test = (n as f64 * test_frac).round() as usize;
    let n_train = n - n_val.min(n) - n_test.min(n - n_val.min(n));

    let mut assignment: HashMap<String, u8> = HashMap::with_capacity(n);
    for (i, q) in queries.into_iter().enumerate() {
        let bucket = if i < n_train {
            0
        } else if i < n_train + n_val {
            1
        } else {
            2
        };
        assignment.insert(q, bucket);
    }

    let mut splits = Splits::default();
    for p in pairs {
        match assignment[p.query.as_str()] {
            0 => splits.train.push(p),
            1 => splits.validation.push(p),
            _ => splits.test.push(p),
        }
    }
    Ok(splits)
}
