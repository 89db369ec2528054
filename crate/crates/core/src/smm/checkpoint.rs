//! Model persistence: a versioned binary checkpoint holding the config
//! header and every parameter tensor in declaration order as little-endian
//! f32, plus a human-readable sidecar manifest (`<path>.manifest`) listing
//! tensor names and shapes.

use super::{DocRepr, Model, ModelConfig};
use crate::encoder::EncoderConfig;
use crate::matrix::{scalar, Matrix};
use crate::{Error, Result};
use num_traits::Float;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

const MAGIC: &[u8; 4] = b"FRCK";
const VERSION: u32 = 1;

/// Path of the sidecar manifest for a checkpoint path.
pub fn manifest_path(checkpoint: &Path) -> PathBuf {
    let mut name = checkpoint
        .file_name()
        .map(|n| n.to_os_string())
        .unwrap_or_default();
    name.push(".manifest");
    checkpoint.with_file_name(name)
}

fn write_u32<W: Write>(w: &mut W, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn write_f64<W: Write>(w: &mut W, v: f64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn write_str<W: Write>(w: &mut W, s: &str) -> Result<()> {
    write_u32(w, s.len() as u32)?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(f64::from_le_bytes(buf))
}

fn read_str<R: Read>(r: &mut R) -> Result<String> {
    let len = read_u32(r)? as usize;
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|_| Error::Format("tensor name is not UTF-8".into()))
}

impl<T: Float> Model<T> {
    /// Writes the checkpoint and its manifest. Values are stored as f32
    /// regardless of the in-memory float width.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        w.write_all(MAGIC)?;
        write_u32(&mut w, VERSION)?;
        let cfg = &self.config;
        w.write_all(&[match cfg.repr {
            DocRepr::Fielded => 0u8,
            DocRepr::Flat => 1u8,
        }])?;
        for dim in [
            cfg.encoder.d_model,
            cfg.encoder.n_layers,
            cfg.encoder.n_heads,
            cfg.encoder.d_ff,
            cfg.encoder.max_query_len,
            cfg.encoder.max_field_len,
            cfg.encoder.vocab_size,
            cfg.head_hidden,
        ] {
            write_u32(&mut w, dim as u32)?;
        }
        write_f64(&mut w, cfg.encoder.dropout_p)?;
        write_f64(&mut w, cfg.head_dropout_p)?;

        let tensors = self.tensors();
        write_u32(&mut w, tensors.len() as u32)?;
        let mut manifest = String::new();
        for (name, tensor) in &tensors {
            write_str(&mut w, name)?;
            write_u32(&mut w, tensor.rows as u32)?;
            write_u32(&mut w, tensor.cols as u32)?;
            for v in &tensor.data {
                let bits = (v.to_f64().unwrap_or(0.0) as f32).to_le_bytes();
                w.write_all(&bits)?;
            }
            manifest.push_str(&format!("{name}\t{}\t{}\n", tensor.rows, tensor.cols));
        }
        w.flush()?;
        std::fs::write(manifest_path(path), manifest)?;
        Ok(())
    }

    /// Reads a checkpoint written by [`Model::save`], validating magic,
    /// version, tensor names, and shapes against the stored config.
    pub fn load(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(std::fs::File::open(path)?);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format(format!(
                "bad checkpoint magic {magic:?}; expected {MAGIC:?}"
            )));
        }
        let version = read_u32(&mut r)?;
        if version != VERSION {
            return Err(Error::Format(format!(
                "unsupported checkpoint version {version}"
            )));
        }
        let mut repr_byte = [0u8; 1];
        r.read_exact(&mut repr_byte)?;
        let repr = match repr_byte[0] {
            0 => DocRepr::Fielded,
            1 => DocRepr::Flat,
            other => {
                return Err(Error::Format(format!(
                    "unknown document representation tag {other}"
                )))
            }
        };
        let mut dims = [0usize; 8];
        for d in &mut dims {
            *d = read_u32(&mut r)? as usize;
        }
        let dropout_p = read_f64(&mut r)?;
        let head_dropout_p = read_f64(&mut r)?;
        let config = ModelConfig {
            encoder: EncoderConfig {
                d_model: dims[0],
                n_layers: dims[1],
                n_heads: dims[2],
                d_ff: dims[3],
                max_query_len: dims[4],
                max_field_len: dims[5],
                vocab_size: dims[6],
                dropout_p,
            },
            head_hidden: dims[7],
            head_dropout_p,
            repr,
        };
        config.validate()?;

        // Seed value is irrelevant: every tensor is overwritten below.
        let mut model = Model::<T>::init(config, 0)?;
        let expected: Vec<(String, usize, usize)> = model
            .tensors()
            .iter()
            .map(|(n, t)| (n.clone(), t.rows, t.cols))
            .collect();
        let count = read_u32(&mut r)? as usize;
        if count != expected.len() {
            return Err(Error::Format(format!(
                "checkpoint has {count} tensors; config implies {}",
                expected.len()
            )));
        }
        let mut tensors = model.tensors_mut();
        for ((expected_name, rows, cols), (_, tensor)) in expected.iter().zip(tensors.iter_mut()) {
            let name = read_str(&mut r)?;
            if &name != expected_name {
                return Err(Error::Format(format!(
                    "tensor {name} out of order; expected {expected_name}"
                )));
            }
            let got_rows = read_u32(&mut r)? as usize;
            let got_cols = read_u32(&mut r)? as usize;
            if got_rows != *rows || got_cols != *cols {
                return Err(Error::Format(format!(
                    "tensor {name} is {got_rows}x{got_cols}; expected {rows}x{cols}"
                )));
            }
            let mut buf = vec![0u8; rows * cols * 4];
            r.read_exact(&mut buf)?;
            let data: Vec<T> = buf
                .chunks_exact(4)
                .map(|c| scalar::<T>(f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64))
                .collect();
            **tensor = Matrix {
                rows: *rows,
                cols: *cols,
                data,
            };
        }
        drop(tensors);
        let mut trailing = [0u8; 1];
        if r.read(&mut trailing)? != 0 {
            return Err(Error::Format("trailing bytes after checkpoint".into()));
        }
        Ok(model)
    }
}
