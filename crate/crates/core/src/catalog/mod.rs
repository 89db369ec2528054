//! Fielded product data model and dataset construction.
//!
//! Documents carry exactly seven ordered fields; each field holds zero or
//! more instance strings. Labeled (query, document) pairs are derived from
//! click logs or graded relevance files by the submodules.

mod clicks;
mod psr;

pub use clicks::{
    apply_search_terms, binarize_clicks, build_search_terms, filter_queries, label_click_pairs,
    parse_click_triples, split_by_query, ClickParse, ClickTriple, Splits,
};
pub use psr::{binarize_psr, ingest_psr, map_attribute, PsrIngest, PsrPaths};

use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The seven document fields, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Field {
    Title,
    Description,
    ProductCategory,
    Metadata,
    Brand,
    Numeric,
    SearchTerms,
}

/// Number of document fields.
pub const FIELD_COUNT: usize = 7;

impl Field {
    pub const ALL: [Field; FIELD_COUNT] = [
        Field::Title,
        Field::Description,
        Field::ProductCategory,
        Field::Metadata,
        Field::Brand,
        Field::Numeric,
        Field::SearchTerms,
    ];

    /// Position in the canonical order; indexes field matrices and arrays.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Field::Title => "Title",
            Field::Description => "Description",
            Field::ProductCategory => "ProductCategory",
            Field::Metadata => "Metadata",
            Field::Brand => "Brand",
            Field::Numeric => "Numeric",
            Field::SearchTerms => "SearchTerms",
        }
    }

    pub fn parse(name: &str) -> Option<Field> {
        Field::ALL.iter().copied().find(|f| f.name() == name)
    }
}

impl fmt::Display for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One product: an opaque id plus seven instance lists.
///
/// Field access goes through methods so the Title arity rule (at most one
/// instance) cannot be bypassed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldedDocument {
    pub doc_id: String,
    fields: [Vec<String>; FIELD_COUNT],
}

impl FieldedDocument {
    pub fn new(doc_id: impl Into<String>) -> Self {
        FieldedDocument {
            doc_id: doc_id.into(),
            fields: Default::default(),
        }
    }

    /// Replace a field's instances. Title accepts at most one instance.
    pub fn set_field(&mut self, field: Field, instances: Vec<String>) -> Result<()> {
        if field == Field::Title && instances.len() > 1 {
            return Err(Error::InvalidInput(format!(
                "doc {}: Title holds {} instances; at most 1 allowed",
                self.doc_id,
                instances.len()
            )));
        }
        self.fields[field.index()] = instances;
        Ok(())
    }

    /// Append one instance to a field, observing the same arity rule.
    pub fn push_instance(&mut self, field: Field, text: impl Into<String>) -> Result<()> {
        if field == Field::Title && !self.fields[field.index()].is_empty() {
            return Err(Error::InvalidInput(format!(
                "doc {}: Title already has an instance",
                self.doc_id
            )));
        }
        self.fields[field.index()].push(text.into());
        Ok(())
    }

    pub fn instances(&self, field: Field) -> &[String] {
        &self.fields[field.index()]
    }

    /// A field counts as non-empty when some instance has visible content.
    pub fn field_is_non_empty(&self, field: Field) -> bool {
        self.instances(field).iter().any(|s| !s.trim().is_empty())
    }

    pub fn non_empty_field_count(&self) -> usize {
        Field::ALL
            .iter()
            .filter(|&&f| self.field_is_non_empty(f))
            .count()
    }

    /// Documents missing Title or Description, or with fewer than two
    /// non-empty fields overall, are excluded from every pipeline.
    pub fn is_valid(&self) -> bool {
        self.field_is_non_empty(Field::Title)
            && self.field_is_non_empty(Field::Description)
            && self.non_empty_field_count() >= 2
    }

    /// Instance strings of one field joined with single spaces.
    pub fn field_text(&self, field: Field) -> String {
        self.instances(field).join(" ")
    }

    /// All field texts in canonical order, empty fields skipped, joined
    /// with single spaces. Feeds the unstructured ablation baseline.
    pub fn flatten(&self) -> String {
        let parts: Vec<String> = Field::ALL
            .iter()
            .filter(|&&f| self.field_is_non_empty(f))
            .map(|&f| self.field_text(f))
            .collect();
        parts.join(" ")
    }
}

/// On-disk line format: doc_id plus the seven named instance arrays.
#[derive(Serialize, Deserialize)]
struct DocRecord {
    doc_id: String,
    #[serde(rename = "Title", default, skip_serializing_if = "Vec::is_empty")]
    title: Vec<String>,
    #[serde(rename = "Description", default, skip_serializing_if = "Vec::is_empty")]
    description: Vec<String>,
    #[serde(rename = "ProductCategory", default, skip_serializing_if = "Vec::is_empty")]
    product_category: Vec<String>,
    #[serde(rename = "Metadata", default, skip_serializing_if = "Vec::is_empty")]
    metadata: Vec<String>,
    #[serde(rename = "Brand", default, skip_serializing_if = "Vec::is_empty")]
    brand: Vec<String>,
    #[serde(rename = "Numeric", default, skip_serializing_if = "Vec::is_empty")]
    numeric: Vec<String>,
    #[serde(rename = "SearchTerms", default, skip_serializing_if = "Vec::is_empty")]
    search_terms: Vec<String>,
}

impl From<&FieldedDocument> for DocRecord {
    fn from(doc: &FieldedDocument) -> Self {
        DocRecord {
            doc_id: doc.doc_id.clone(),
            title: doc.instances(Field::Title).to_vec(),
            description: doc.instances(Field::Description).to_vec(),
            product_category: doc.instances(Field::ProductCategory).to_vec(),
            metadata: doc.instances(Field::Metadata).to_vec(),
            brand: doc.instances(Field::Brand).to_vec(),
            numeric: doc.instances(Field::Numeric).to_vec(),
            search_terms: doc.instances(Field::SearchTerms).to_vec(),
        }
    }
}

impl TryFrom<DocRecord> for FieldedDocument {
    type Error = Error;

    fn try_from(rec: DocRecord) -> Result<FieldedDocument> {
        let mut doc = FieldedDocument::new(rec.doc_id);
        doc.set_field(Field::Title, rec.title)?;
        doc.set_field(Field::Description, rec.description)?;
        doc.set_field(Field::ProductCategory, rec.product_category)?;
        doc.set_field(Field::Metadata, rec.metadata)?;
        doc.set_field(Field::Brand, rec.brand)?;
        doc.set_field(Field::Numeric, rec.numeric)?;
        doc.set_field(Field::SearchTerms, rec.search_terms)?;
        Ok(doc)
    }
}

/// Immutable-after-build document collection, ordered by doc_id.
#[derive(Debug, Clone, Default)]
pub struct Catalog {
    docs: Vec<FieldedDocument>,
    by_id: HashMap<String, usize>,
}

impl Catalog {
    /// Sort by doc_id and index; duplicate ids are rejected.
    pub fn new(mut docs: Vec<FieldedDocument>) -> Result<Catalog> {
        docs.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
        let mut by_id = HashMap::with_capacity(docs.len());
        for (i, doc) in docs.iter().enumerate() {
            if by_id.insert(doc.doc_id.clone(), i).is_some() {
                return Err(Error::InvalidInput(format!(
                    "duplicate doc_id {}",
                    doc.doc_id
                )));
            }
        }
        Ok(Catalog { docs, by_id })
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn get(&self, doc_id: &str) -> Option<&FieldedDocument> {
        self.by_id.get(doc_id).map(|&i| &self.docs[i])
    }

    pub fn contains(&self, doc_id: &str) -> bool {
        self.by_id.contains_key(doc_id)
    }

    /// Documents in ascending doc_id order.
    pub fn docs(&self) -> &[FieldedDocument] {
        &self.docs
    }

    /// Replace one field of one document; the build pipeline uses this to
    /// fill SearchTerms after splitting.
    pub fn set_field(&mut self, doc_id: &str, field: Field, instances: Vec<String>) -> Result<()> {
        let &i = self
            .by_id
            .get(doc_id)
            .ok_or_else(|| Error::UnknownDoc(doc_id.to_string()))?;
        self.docs[i].set_field(field, instances)
    }

    /// Drop invalid documents; returns how many were removed.
    pub fn retain_valid(&mut self) -> usize {
        let before = self.docs.len();
        self.docs.retain(FieldedDocument::is_valid);
        self.by_id = self
            .docs
            .iter()
            .enumerate()
            .map(|(i, d)| (d.doc_id.clone(), i))
            .collect();
        before - self.docs.len()
    }

    /// One JSON record per line, documents in stored order.
    pub fn save_jsonl(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        for doc in &self.docs {
            serde_json::to_writer(&mut out, &DocRecord::from(doc))?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn load_jsonl(path: &Path) -> Result<Catalog> {
        let reader = BufReader::new(std::fs::File::open(path)?);
        let mut docs = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: DocRecord = serde_json::from_str(&line)
                .map_err(|e| Error::record(i + 1, format!("bad document record: {e}")))?;
            docs.push(
                FieldedDocument::try_from(rec)
                    .map_err(|e| Error::record(i + 1, e.to_string()))?,
            );
        }
        Catalog::new(docs)
    }
}

/// The relevance signal a pair's label was derived from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RawSignal {
    /// Aggregated click count from a click log.
    Clicks(u32),
    /// Human-graded score in [1, 3].
    Graded(f64),
}

impl fmt::Display for RawSignal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RawSignal::Clicks(n) => write!(f, "{n}"),
            RawSignal::Graded(g) => write!(f, "{g:?}"),
        }
    }
}

impl std::str::FromStr for RawSignal {
    type Err = Error;

    fn from_str(s: &str) -> Result<RawSignal> {
        if let Ok(n) = s.parse::<u32>() {
            return Ok(RawSignal::Clicks(n));
        }
        match s.parse::<f64>() {
            Ok(g) if g.is_finite() => Ok(RawSignal::Graded(g)),
            _ => Err(Error::InvalidInput(format!("bad raw signal {s:?}"))),
        }
    }
}

/// A labeled (query, document) training or evaluation example.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPair {
    pub query: String,
    pub doc_id: String,
    /// Binary relevance, 0 or 1.
    pub label: u8,
    pub raw: RawSignal,
}

impl LabeledPair {
    pub fn new(query: impl Into<String>, doc_id: impl Into<String>, label: u8, raw: RawSignal) -> Self {
        debug_assert!(label <= 1);
        LabeledPair {
            query: query.into(),
            doc_id: doc_id.into(),
            label,
            raw,
        }
    }
}

/// Tab-separated pair file: query, doc_id, label, raw signal.
pub fn save_pairs(path: &Path, pairs: &[LabeledPair]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for p in pairs {
        writeln!(out, "{}\t{}\t{}\t{}", p.query, p.doc_id, p.label, p.raw)?;
    }
    out.flush()?;
    Ok(())
}

pub fn load_pairs(path: &Path) -> Result<Vec<LabeledPair>> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut pairs = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut cols = line.split('\t');
        let (Some(query), Some(doc_id), Some(label), Some(raw)) =
            (cols.next(), cols.next(), cols.next(), cols.next())
        else {
            return Err(Error::record(i + 1, "expected 4 tab-separated columns"));
        };
        let label: u8 = label
            .parse()
            .map_err(|_| Error::record(i + 1, format!("bad label {label:?}")))?;
        if label > 1 {
            return Err(Error::record(i + 1, format!("label {label} not binary")));
        }
        let raw: RawSignal = raw.parse().map_err(|e| Error::record(i + 1, format!("{e}")))?;
        pairs.push(LabeledPair::new(query, doc_id, label, raw));
    }
    Ok(pairs)
}

/// Manual query annotation classes used by the evaluation breakdown.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum QueryClass {
    BrandCollection,
    ColorFinish,
    Unit,
    Material,
    Model,
    Typo,
    AllOthers,
}

impl QueryClass {
    pub const ALL: [QueryClass; 7] = [
        QueryClass::BrandCollection,
        QueryClass::ColorFinish,
        QueryClass::Unit,
        QueryClass::Material,
        QueryClass::Model,
        QueryClass::Typo,
        QueryClass::AllOthers,
    ];

    pub fn name(self) -> &'static str {
        match self {
            QueryClass::BrandCollection => "BrandCollection",
            QueryClass::ColorFinish => "ColorFinish",
            QueryClass::Unit => "Unit",
            QueryClass::Material => "Material",
            QueryClass::Model => "Model",
            QueryClass::Typo => "Typo",
            QueryClass::AllOthers => "AllOthers",
        }
    }

    pub fn parse(name: &str) -> Option<QueryClass> {
        QueryClass::ALL.iter().copied().find(|c| c.name() == name)
    }
}

impl fmt::Display for QueryClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Side file: query, tab, comma-separated class names. AllOthers may not
/// be combined with another class.
pub fn load_query_classes(path: &Path) -> Result<HashMap<String, Vec<QueryClass>>> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut map = HashMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let (query, names) = line
            .split_once('\t')
            .ok_or_else(|| Error::record(i + 1, "expected query<TAB>classes"))?;
        let mut classes = Vec::new();
        for name in names.split(',') {
            let name = name.trim();
            let class = QueryClass::parse(name)
                .ok_or_else(|| Error::record(i + 1, format!("unknown query class {name:?}")))?;
            if !classes.contains(&class) {
                classes.push(class);
            }
        }
        if classes.contains(&QueryClass::AllOthers) && classes.len() > 1 {
            return Err(Error::record(
                i + 1,
                "AllOthers cannot be combined with another class",
            ));
        }
        map.insert(query.to_string(), classes);
    }
    Ok(map)
}
