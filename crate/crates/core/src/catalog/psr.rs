//! Ingestion of the public product-search-relevance CSV bundle: graded
//! (query, product) pairs plus product descriptions and attributes.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use super::{Catalog, Field, FieldedDocument, LabeledPair, RawSignal};
use crate::error::{Error, Result};

/// Input files. Descriptions and attributes are optional; products missing
/// a Description are invalid and fall out of the catalog downstream.
#[derive(Debug, Clone)]
pub struct PsrPaths {
    pub train_csv: PathBuf,
    pub descriptions_csv: Option<PathBuf>,
    pub attributes_csv: Option<PathBuf>,
}

/// Everything read from the CSV bundle, before validity filtering.
#[derive(Debug)]
pub struct PsrIngest {
    pub catalog: Catalog,
    pub pairs: Vec<LabeledPair>,
    pub rejected: Vec<Error>,
}

/// Binary label from a graded score in [1, 3]: round half up, relevant
/// iff the rounded grade is 3.
pub fn binarize_psr(graded: f64) -> Result<u8> {
    if !graded.is_finite() || !(1.0..=3.0).contains(&graded) {
        return Err(Error::InvalidInput(format!(
            "graded score {graded} outside [1, 3]"
        )));
    }
    let rounded = (graded + 0.5).floor();
    Ok(u8::from(rounded >= 2.5))
}

/// Attribute-name routing:
/// * "MFG Brand Name" → Brand;
/// * names carrying a parenthesized unit suffix, e.g. "Product Width (in.)",
///   → Numeric;
/// * everything else (bullets, materials, colors) → Metadata.
pub fn map_attribute(name: &str) -> Field {
    if name == "MFG Brand Name" {
        Field::Brand
    } else if name.trim_end().ends_with(')') && name.contains('(') {
        Field::Numeric
    } else {
        Field::Metadata
    }
}

/// Read the CSV bundle into a catalog and labeled pairs. Rows that fail to
/// parse are collected, not fatal; the caller enforces a tolerance.
pub fn ingest_psr(paths: &PsrPaths) -> Result<PsrIngest> {
    let mut rejected = Vec::new();

    // doc_id -> (title, description, per-field attribute instances)
    let mut titles: HashMap<String, String> = HashMap::new();
    let mut order: Vec<String> = Vec::new();
    let mut pairs = Vec::new();

    let mut reader = csv_reader(&paths.train_csv)?;
    let headers = reader.headers()?.clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Format(format!("{}: missing column {name:?}", paths.train_csv.display())))
    };
    let (uid_col, title_col, term_col, rel_col) = (
        col("product_uid")?,
        col("product_title")?,
        col("search_term")?,
        col("relevance")?,
    );
    for (i, record) in reader.records().enumerate() {
        let line = i + 2; // header occupies line 1
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                rejected.push(Error::record(line, e.to_string()));
                continue;
            }
        };
        let (Some(uid), Some(title), Some(term), Some(rel)) = (
            record.get(uid_col),
            record.get(title_col),
            record.get(term_col),
            record.get(rel_col),
        ) else {
            rejected.push(Error::record(line, "short record"));
            continue;
        };
        let graded: f64 = match rel.parse() {
            Ok(g) => g,
            Err(_) => {
                rejected.push(Error::record(line, format!("bad relevance {rel:?}")));
                continue;
            }
        };
        let label = match binarize_psr(graded) {
            Ok(l) => l,
            Err(e) => {
                rejected.push(Error::record(line, e.to_string()));
                continue;
            }
        };
        if !titles.contains_key(uid) {
            titles.insert(uid.to_string(), title.to_string());
            order.push(uid.to_string());
        }
        pairs.push(LabeledPair::new(term, uid, label, RawSignal::Graded(graded)));
    }

    let mut descriptions: HashMap<String, String> = HashMap::new();
    if let Some(path) = &paths.descriptions_csv {
        let mut reader = csv_reader(path)?;
        for (i, record) in reader.records().enumerate() {
            match record {
                Ok(r) => {
                    if let (Some(uid), Some(text)) = (r.get(0), r.get(1)) {
                        descriptions.insert(uid.to_string(), text.to_string());
                    } else {
                        rejected.push(Error::record(i + 2, "short description record"));
                    }
                }
                Err(e) => rejected.push(Error::record(i + 2, e.to_string())),
            }
        }
    }

    // doc_id -> per-field attribute instances, in file order
    let mut attributes: HashMap<String, Vec<(Field, String)>> = HashMap::new();
    if let Some(path) = &paths.attributes_csv {
        let mut reader = csv_reader(path)?;
        for (i, record) in reader.records().enumerate() {
            match record {
                Ok(r) => {
                    let (Some(uid), Some(name), Some(value)) = (r.get(0), r.get(1), r.get(2))
                    else {
                        rejected.push(Error::record(i + 2, "short attribute record"));
                        continue;
                    };
                    if uid.is_empty() || name.is_empty() {
                        rejected.push(Error::record(i + 2, "attribute missing uid or name"));
                        continue;
                    }
                    attributes
                        .entry(uid.to_string())
                        .or_default()
                        .push((map_attribute(name), value.to_string()));
                }
                Err(e) => rejected.push(Error::record(i + 2, e.to_string())),
            }
        }
    }

    let mut docs = Vec::with_capacity(order.len());
    for uid in order {
        let mut doc = FieldedDocument::new(uid.clone());
        doc.set_field(Field::Title, vec![titles.remove(&uid).expect("seen uid")])?;
        if let Some(desc) = descriptions.remove(&uid) {
            doc.set_field(Field::Description, vec![desc])?;
        }
        if let Some(attrs) = attributes.remove(&uid) {
            for (field, value) in attrs {
                doc.push_instance(field, value)?;
            }
        }
        docs.push(doc);
    }

    Ok(PsrIngest {
        catalog: Catalog::new(docs)?,
        pairs,
        rejected,
    })
}

fn csv_reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)?)
}
