//! Fielded inverted index with BM25 and BM25F scoring.
//!
//! Lexical baselines score (query, candidate) pairs directly; there is no
//! top-k retrieval machinery. Index text is stopword-filtered and stemmed.

mod io;

pub use io::dump_postings;

use std::collections::{BTreeMap, HashMap};

use crate::catalog::{Catalog, Field, LabeledPair, FIELD_COUNT};
use crate::error::{Error, Result};
use crate::eval::{group_pairs, ndcg_at_k, order_by_score};
use crate::text::lexical_terms;

/// BM25 family parameters. `weights` and `field_b` only affect BM25F.
#[derive(Debug, Clone, PartialEq)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
    pub weights: [f64; FIELD_COUNT],
    pub field_b: [f64; FIELD_COUNT],
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params {
            k1: 1.2,
            b: 0.75,
            weights: [1.0; FIELD_COUNT],
            field_b: [0.75; FIELD_COUNT],
        }
    }
}

impl Bm25Params {
    pub fn validate(&self) -> Result<()> {
        // The negated form also rejects a NaN k1, which `<= 0.0` would let
        // through.
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !(self.k1 > 0.0) {
            return Err(Error::InvalidInput(format!("k1 must be > 0, got {}", self.k1)));
        }
        if !(0.0..=1.0).contains(&self.b) {
            return Err(Error::InvalidInput(format!("b must be in [0,1], got {}", self.b)));
        }
        for (i, &b_f) in self.field_b.iter().enumerate() {
            if !(0.0..=1.0).contains(&b_f) {
                return Err(Error::InvalidInput(format!(
                    "b_{} must be in [0,1], got {b_f}",
                    Field::ALL[i]
                )));
            }
        }
        if self.weights.iter().any(|&w| w < 0.0) {
            return Err(Error::InvalidInput("field weights must be >= 0".into()));
        }
        if !self.weights.iter().any(|&w| w > 0.0) {
            return Err(Error::InvalidInput("at least one field weight must be > 0".into()));
        }
        Ok(())
    }
}

/// Which lexical scoring function to apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scorer {
    Bm25,
    Bm25f,
}

impl Scorer {
    pub fn parse(name: &str) -> Option<Scorer> {
        match name {
            "bm25" => Some(Scorer::Bm25),
            "bm25f" => Some(Scorer::Bm25f),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Scorer::Bm25 => "bm25",
            Scorer::Bm25f => "bm25f",
        }
    }
}

/// Inverted index over the seven fields of a catalog.
///
/// Postings map a stemmed term to (doc index, term frequency) pairs in
/// ascending doc order; document frequency counts whole documents.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldedIndex {
    doc_ids: Vec<String>,
    by_id: HashMap<String, usize>,
    postings: [BTreeMap<String, Vec<(u32, u32)>>; FIELD_COUNT],
    field_lengths: [Vec<u32>; FIELD_COUNT],
    avg_lengths: [f64; FIELD_COUNT],
    df: BTreeMap<String, u32>,
}

impl FieldedIndex {
    /// Index every document of a non-empty catalog, in catalog (doc_id)
    /// order, so doc indexes ascend with doc_id.
    pub fn build(catalog: &Catalog) -> Result<FieldedIndex> {
        if catalog.is_empty() {
            return Err(Error::InvalidInput("cannot index an empty catalog".into()));
        }
        let n = catalog.len();
        let mut index = FieldedIndex {
            doc_ids: Vec::with_capacity(n),
            by_id: HashMap::with_capacity(n),
            postings: Default::default(),
            field_lengths: std::array::from_fn(|_| Vec::with_capacity(n)),
            avg_lengths: [0.0; FIELD_COUNT],
            df: BTreeMap::new(),
        };
        for (di, doc) in catalog.docs().iter().enumerate() {
            index.doc_ids.push(doc.doc_id.clone());
            index.by_id.insert(doc.doc_id.clone(), di);
            let mut doc_terms: BTreeMap<String, ()> = BTreeMap::new();
            for field in Field::ALL {
                let terms = lexical_terms(&doc.field_text(field));
                index.field_lengths[field.index()].push(terms.len() as u32);
                let mut counts: BTreeMap<String, u32> = BTreeMap::new();
                for term in terms {
                    *counts.entry(term).or_insert(0) += 1;
                }
                for (term, tf) in counts {
                    doc_terms.insert(term.clone(), ());
                    index.postings[field.index()]
                        .entry(term)
                        .or_default()
                        .push((di as u32, tf));
                }
            }
            for (term, ()) in doc_terms {
                *index.df.entry(term).or_insert(0) += 1;
            }
        }
        for f in 0..FIELD_COUNT {
            let total: u64 = index.field_lengths[f].iter().map(|&l| u64::from(l)).sum();
            index.avg_lengths[f] = total as f64 / n as f64;
        }
        Ok(index)
    }

    pub fn n_docs(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn contains(&self, doc_id: &str) -> bool {
        self.by_id.contains_key(doc_id)
    }

    pub fn df(&self, term: &str) -> u32 {
        self.df.get(term).copied().unwrap_or(0)
    }

    /// Smoothed IDF: ln((N - df + 0.5) / (df + 0.5) + 1), non-negative for
    /// every df <= N.
    pub fn idf(&self, term: &str) -> f64 {
        let n = self.n_docs() as f64;
        let df = f64::from(self.df(term));
        ((n - df + 0.5) / (df + 0.5) + 1.0).ln()
    }

    fn doc_index(&self, doc_id: &str) -> Result<usize> {
        self.by_id
            .get(doc_id)
            .copied()
            .ok_or_else(|| Error::UnknownDoc(doc_id.to_string()))
    }

    /// Term frequency of `term` in one field of the doc at `di`.
    fn tf(&self, field: usize, term: &str, di: usize) -> u32 {
        let Some(list) = self.postings[field].get(term) else {
            return 0;
        };
        match list.binary_search_by_key(&(di as u32), |&(d, _)| d) {
            Ok(pos) => list[pos].1,
            Err(_) => 0,
        }
    }

    fn total_len(&self, di: usize) -> u64 {
        (0..FIELD_COUNT)
            .map(|f| u64::from(self.field_lengths[f][di]))
            .sum()
    }

    fn avg_total_len(&self) -> f64 {
        self.avg_lengths.iter().sum()
    }

    /// BM25 over the document as one merged bag of fields.
    pub fn bm25_score(&self, query_terms: &[String], doc_id: &str, params: &Bm25Params) -> Result<f64> {
        params.validate()?;
        let di = self.doc_index(doc_id)?;
        let len = self.total_len(di) as f64;
        let avglen = self.avg_total_len();
        let norm = if avglen > 0.0 { len / avglen } else { 1.0 };
        let mut score = 0.0;
        for term in query_terms {
            let tf: u32 = (0..FIELD_COUNT).map(|f| self.tf(f, term, di)).sum();
            if tf == 0 {
                continue;
            }
            let tf = f64::from(tf);
            let sat = tf * (params.k1 + 1.0) / (tf + params.k1 * (1.0 - params.b + params.b * norm));
            score += self.idf(term) * sat;
        }
        Ok(score)
    }

    /// BM25F: per-field length-normalized, weighted term frequencies are
    /// combined before saturation; IDF stays document-level.
    pub fn bm25f_score(&self, query_terms: &[String], doc_id: &str, params: &Bm25Params) -> Result<f64> {
        params.validate()?;
        let di = self.doc_index(doc_id)?;
        let mut score = 0.0;
        for term in query_terms {
            let mut pseudo_tf = 0.0;
            for f in 0..FIELD_COUNT {
                let tf = self.tf(f, term, di);
                if tf == 0 || params.weights[f] == 0.0 {
                    continue;
                }
                // tf > 0 implies this field and its average are non-empty.
                let norm = self.field_lengths[f][di] as f64 / self.avg_lengths[f];
                let b_f = params.field_b[f];
                pseudo_tf += params.weights[f] * f64::from(tf) / (1.0 - b_f + b_f * norm);
            }
            if pseudo_tf > 0.0 {
                score += self.idf(term) * (params.k1 + 1.0) * pseudo_tf / (params.k1 + pseudo_tf);
            }
        }
        Ok(score)
    }

    pub fn score(&self, scorer: Scorer, query_terms: &[String], doc_id: &str, params: &Bm25Params) -> Result<f64> {
        match scorer {
            Scorer::Bm25 => self.bm25_score(query_terms, doc_id, params),
            Scorer::Bm25f => self.bm25f_score(query_terms, doc_id, params),
        }
    }
}

/// Score `candidates` for `query` and sort by descending score, ties by
/// ascending doc_id.
pub fn rank_lexical(
    index: &FieldedIndex,
    query: &str,
    candidates: &[String],
    params: &Bm25Params,
    scorer: Scorer,
) -> Result<Vec<(String, f64)>> {
    let terms = lexical_terms(query);
    let scores: Vec<f64> = candidates
        .iter()
        .map(|doc_id| index.score(scorer, &terms, doc_id, params))
        .collect::<Result<_>>()?;
    let order = order_by_score(candidates, &scores);
    Ok(order
        .into_iter()
        .map(|i| (candidates[i].clone(), scores[i]))
        .collect())
}

pub const K1_GRID: [f64; 4] = [0.9, 1.2, 1.5, 2.0];
pub const B_GRID: [f64; 3] = [0.3, 0.5, 0.75];
pub const WEIGHT_GRID: [f64; 5] = [0.0, 0.5, 1.0, 2.0, 4.0];

/// Mean NDCG@5 of a parameter setting over validation queries.
fn validation_ndcg5(index: &FieldedIndex, validation: &[LabeledPair], params: &Bm25Params, scorer: Scorer) -> Result<f64> {
    let groups = group_pairs(validation);
    let mut total = 0.0;
    let mut n = 0usize;
    for group in &groups {
        if group.docs.len() < 2 {
            continue;
        }
        let ranked = rank_lexical(index, &group.query, &group.docs, params, scorer)?;
        let labels: Vec<u8> = ranked
            .iter()
            .map(|(doc_id, _)| group.label_of(doc_id))
            .collect();
        total += ndcg_at_k(&labels, 5);
        n += 1;
    }
    if n == 0 {
        return Err(Error::InvalidInput(
            "no validation query has at least 2 candidates".into(),
        ));
    }
    Ok(total / n as f64)
}

/// Grid-search k1 and b (and, for BM25F, per-field weights by coordinate
/// ascent over the weight grid) maximizing validation NDCG@5.
pub fn tune(index: &FieldedIndex, validation: &[LabeledPair], scorer: Scorer) -> Result<(Bm25Params, f64)> {
    let mut best: Option<(Bm25Params, f64)> = None;
    for &k1 in &K1_GRID {
        for &b in &B_GRID {
            let mut params = Bm25Params {
                k1,
                b,
                field_b: [b; FIELD_COUNT],
                ..Bm25Params::default()
            };
            let mut quality = validation_ndcg5(index, validation, &params, scorer)?;
            if scorer == Scorer::Bm25f {
                // Two coordinate-ascent sweeps; a candidate weight must
                // strictly improve NDCG@5 to displace the current value.
                for _ in 0..2 {
                    for f in 0..FIELD_COUNT {
                        for &w in &WEIGHT_GRID {
                            if w == params.weights[f] {
                                continue;
                            }
                            let mut trial = params.clone();
                            trial.weights[f] = w;
                            if trial.validate().is_err() {
                                continue;
                            }
                            let q = validation_ndcg5(index, validation, &trial, scorer)?;
                            if q > quality {
                                quality = q;
                                params = trial;
                            }
                        }
                    }
                }
            }
            let better = match &best {
                None => true,
                Some((_, best_q)) => quality > *best_q,
            };
            if better {
                best = Some((params, quality));
            }
        }
    }
    Ok(best.expect("non-empty grid"))
}
