//! Versioned binary persistence for [`FieldedIndex`] and a human-readable
//! postings dump.
//!
//! Layout (all integers little-endian): magic "FRIX", version u32, doc
//! count u64, doc ids, then per field the length table, average length,
//! and sorted postings, then the document-frequency table.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use super::FieldedIndex;
use crate::catalog::{Field, FIELD_COUNT};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"FRIX";
const VERSION: u32 = 1;

impl FieldedIndex {
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        out.write_all(MAGIC)?;
        write_u32(&mut out, VERSION)?;
        write_u64(&mut out, self.doc_ids.len() as u64)?;
        for doc_id in &self.doc_ids {
            write_str(&mut out, doc_id)?;
        }
        for f in 0..FIELD_COUNT {
            for &len in &self.field_lengths[f] {
                write_u32(&mut out, len)?;
            }
            write_f64(&mut out, self.avg_lengths[f])?;
            write_u64(&mut out, self.postings[f].len() as u64)?;
            for (term, list) in &self.postings[f] {
                write_str(&mut out, term)?;
                write_u64(&mut out, list.len() as u64)?;
                for &(di, tf) in list {
                    write_u32(&mut out, di)?;
                    write_u32(&mut out, tf)?;
                }
            }
        }
        write_u64(&mut out, self.df.len() as u64)?;
        for (term, &df) in &self.df {
            write_str(&mut out, term)?;
            write_u32(&mut out, df)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<FieldedIndex> {
        let mut input = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut magic = [0u8; 4];
        input.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format(format!(
                "{}: not an index file (bad magic)",
                path.display()
            )));
        }
        let version = read_u32(&mut input)?;
        if version != VERSION {
            return Err(Error::Format(format!(
                "{}: unsupported index version {version}",
                path.display()
            )));
        }
        let n = read_u64(&mut input)? as usize;
        let mut doc_ids = Vec::with_capacity(n);
        for _ in 0..n {
            doc_ids.push(read_str(&mut input)?);
        }
        let by_id: HashMap<String, usize> = doc_ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), i))
            .collect();
        let mut index = FieldedIndex {
            doc_ids,
            by_id,
            postings: Default::default(),
            field_lengths: Default::default(),
            avg_lengths: [0.0; FIELD_COUNT],
            df: Default::default(),
        };
        for f in 0..FIELD_COUNT {
            let mut lengths = Vec::with_capacity(n);
            for _ in 0..n {
                lengths.push(read_u32(&mut input)?);
            }
            index.field_lengths[f] = lengths;
            index.avg_lengths[f] = read_f64(&mut input)?;
            let terms = read_u64(&mut input)? as usize;
            for _ in 0..terms {
                let term = read_str(&mut input)?;
                let len = read_u64(&mut input)? as usize;
                let mut list = Vec::with_capacity(len);
                for _ in 0..len {
                    let di = read_u32(&mut input)?;
                    let tf = read_u32(&mut input)?;
                    list.push((di, tf));
                }
                index.postings[f].insert(term, list);
            }
        }
        let df_count = read_u64(&mut input)? as usize;
        for _ in 0..df_count {
            let term = read_str(&mut input)?;
            let df = read_u32(&mut input)?;
            index.df.insert(term, df);
        }
        let mut trailer = [0u8; 1];
        if input.read(&mut trailer)? != 0 {
            return Err(Error::Format(format!(
                "{}: trailing bytes after index payload",
                path.display()
            )));
        }
        Ok(index)
    }
}

/// Write the whole index as tab-separated text: document count, per-field
/// average lengths, sorted postings with doc ids, then document
/// frequencies.
pub fn dump_postings<W: Write>(index: &FieldedIndex, out: &mut W) -> Result<()> {
    writeln!(out, "doc_count\t{}", index.n_docs())?;
    for field in Field::ALL {
        writeln!(out, "avg_len\t{}\t{}", field, index.avg_lengths[field.index()])?;
    }
    for field in Field::ALL {
        for (term, list) in &index.postings[field.index()] {
            let entries: Vec<String> = list
                .iter()
                .map(|&(di, tf)| format!("{}:{}", index.doc_ids[di as usize], tf))
                .collect();
            writeln!(out, "posting\t{}\t{}\t{}", field, term, entries.join(" "))?;
        }
    }
    for (term, df) in &index.df {
        writeln!(out, "df\t{}\t{}", term, df)?;
    }
    Ok(())
}

fn write_u32<W: Write>(out: &mut W, v: u32) -> Result<()> {
    out.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn write_u64<W: Write>(out: &mut W, v: u64) -> Result<()> {
    out.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn write_f64<W: Write>(out: &mut W, v: f64) -> Result<()> {
    out.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn write_str<W: Write>(out: &mut W, s: &str) -> Result<()> {
    write_u32(out, s.len() as u32)?;
    out.write_all(s.as_bytes())?;
    Ok(())
}

fn read_u32<R: Read>(input: &mut R) -> Result<u32> {
    let mut buf = [0u8; 4];
    input.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u64<R: Read>(input: &mut R) -> Result<u64> {
    let mut buf = [0u8; 8];
    input.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn read_f64<R: Read>(input: &mut R) -> Result<f64> {
    let mut buf = [0u8; 8];
    input.read_exact(&mut buf)?;
    Ok(f64::from_le_bytes(buf))
}

fn read_str<R: Read>(input: &mut R) -> Result<String> {
    let len = read_u32(input)? as usize;
    let mut buf = vec![0u8; len];
    input.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|_| Error::Format("non-UTF-8 string in index file".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{Catalog, FieldedDocument};

    fn sample_index() -> FieldedIndex {
        let mut d1 = FieldedDocument::new("P1");
        d1.set_field(Field::Title, vec!["oak door".into()]).unwrap();
        d1.set_field(Field::Description, vec!["solid oak slab".into()]).unwrap();
        d1.set_field(Field::Brand, vec!["acme".into()]).unwrap();
        let mut d2 = FieldedDocument::new("P2");
        d2.set_field(Field::Title, vec!["pine door".into()]).unwrap();
        d2.set_field(Field::Description, vec!["knotty pine".into()]).unwrap();
        FieldedIndex::build(&Catalog::new(vec![d1, d2]).unwrap()).unwrap()
    }

    #[test]
    fn binary_round_trip_is_lossless() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("index.bin");
        let index = sample_index();
        index.save(&path).unwrap();
        assert_eq!(FieldedIndex::load(&path).unwrap(), index);
    }

    #[test]
    fn save_is_byte_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.bin");
        let b = dir.path().join("b.bin");
        let index = sample_index();
        index.save(&a).unwrap();
        index.save(&b).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    }

    #[test]
    fn load_rejects_bad_magic_and_version() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("index.bin");
        std::fs::write(&path, b"NOPE\x01\x00\x00\x00").unwrap();
        assert!(matches!(FieldedIndex::load(&path), Err(Error::Format(_))));

        let index = sample_index();
        index.save(&path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[4] = 99;
        std::fs::write(&path, &bytes).unwrap();
        let err = FieldedIndex::load(&path).unwrap_err().to_string();
        assert!(err.contains("version"), "{err}");
    }

    #[test]
    fn load_rejects_truncation_and_trailing_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("index.bin");
        let index = sample_index();
        index.save(&path).unwrap();
        let bytes = std::fs::read(&path).unwrap();

        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(FieldedIndex::load(&path).is_err());

        let mut padded = bytes.clone();
        padded.push(0);
        std::fs::write(&path, &padded).unwrap();
        assert!(FieldedIndex::load(&path).is_err());
    }

    #[test]
    fn dump_lists_postings_with_doc_ids() {
        let mut buf = Vec::new();
        dump_postings(&sample_index(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("doc_count\t2"), "{text}");
        assert!(text.contains("posting\tTitle\tdoor\tP1:1 P2:1"), "{text}");
        // "acme" reaches the index as its stem.
        assert!(text.contains("posting\tBrand\tacm\tP1:1"), "{text}");
        assert!(text.contains("df\tdoor\t2"), "{text}");
    }
}
