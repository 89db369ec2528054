//! Layered run configuration. Precedence: command-line flags beat config
//! file entries, which beat built-in defaults. The file format is flat
//! `key = value` lines; `#` starts a comment.

use std::collections::BTreeMap;
use std::path::Path;

use fieldrank_core::encoder::EncoderConfig;
use fieldrank_core::smm::{DocRepr, ModelConfig};
use fieldrank_core::train::TrainConfig;
use fieldrank_core::{Error, Result};

/// Every tunable the pipeline accepts, fully resolved.
#[derive(Debug, Clone)]
pub struct Settings {
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub max_query_len: usize,
    pub max_field_len: usize,
    pub head_hidden: usize,
    pub dropout: f64,
    pub head_dropout: f64,
    pub repr: DocRepr,
    pub base_lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub warmup_fraction: f64,
    pub weight_decay: f64,
    pub seed: u64,
    pub click_threshold: u32,
    pub validation_frac: f64,
    pub test_frac: f64,
    pub search_terms_top_k: usize,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            d_model: 64,
            n_layers: 2,
            n_heads: 4,
            d_ff: 128,
            max_query_len: 16,
            max_field_len: 64,
            head_hidden: 256,
            dropout: 0.1,
            head_dropout: 0.5,
            repr: DocRepr::Fielded,
            base_lr: 1e-4,
            batch_size: 16,
            epochs: 5,
            warmup_fraction: 0.10,
            weight_decay: 0.01,
            seed: 42,
            click_threshold: 5,
            validation_frac: 0.1,
            test_frac: 0.1,
            search_terms_top_k: 10,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::InvalidInput(format!("config key {key}: bad value {value:?}")))
}

impl Settings {
    /// Apply one key, rejecting unknown names so typos surface immediately.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "d_model" => self.d_model = parse(key, value)?,
            "n_layers" => self.n_layers = parse(key, value)?,
            "n_heads" => self.n_heads = parse(key, value)?,
            "d_ff" => self.d_ff = parse(key, value)?,
            "max_query_len" => self.max_query_len = parse(key, value)?,
            "max_field_len" => self.max_field_len = parse(key, value)?,
            "head_hidden" => self.head_hidden = parse(key, value)?,
            "dropout" => self.dropout = parse(key, value)?,
            "head_dropout" => self.head_dropout = parse(key, value)?,
            "repr" => {
                self.repr = match value {
                    "fielded" => DocRepr::Fielded,
                    "flat" => DocRepr::Flat,
                    other => {
                        return Err(Error::InvalidInput(format!(
                            "config key repr: expected fielded or flat, got {other:?}"
                        )))
                    }
                }
            }
            "base_lr" => self.base_lr = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "warmup_fraction" => self.warmup_fraction = parse(key, value)?,
            "weight_decay" => self.weight_decay = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "click_threshold" => self.click_threshold = parse(key, value)?,
            "validation_frac" => self.validation_frac = parse(key, value)?,
            "test_frac" => self.test_frac = parse(key, value)?,
            "search_terms_top_k" => self.search_terms_top_k = parse(key, value)?,
            other => {
                return Err(Error::InvalidInput(format!("unknown config key {other:?}")));
            }
        }
        Ok(())
    }

    pub fn load_file(&mut self, path: &Path) -> Result<()> {
        for (key, value) in read_kv_file(path)? {
            self.set(&key, &value)?;
        }
        Ok(())
    }

    pub fn model_config(&self, vocab_size: usize) -> ModelConfig {
        ModelConfig {
            encoder: EncoderConfig {
                d_model: self.d_model,
                n_layers: self.n_layers,
                n_heads: self.n_heads,
                d_ff: self.d_ff,
                max_query_len: self.max_query_len,
                max_field_len: self.max_field_len,
                vocab_size,
                dropout_p: self.dropout,
            },
            head_hidden: self.head_hidden,
            head_dropout_p: self.head_dropout,
            repr: self.repr,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            base_lr: self.base_lr,
            batch_size: self.batch_size,
            epochs: self.epochs,
            warmup_fraction: self.warmup_fraction,
            weight_decay: self.weight_decay,
            seed: self.seed,
        }
    }
}

/// Parse a flat `key = value` file, preserving file order.
pub fn read_kv_file(path: &Path) -> Result<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path)?;
    let mut pairs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::record(i + 1, format!("expected key = value, got {line:?}")))?;
        pairs.push((key.trim().to_string(), value.trim().to_string()));
    }
    Ok(pairs)
}

/// Parse a BM25 parameter file: `k1`, `b`, `weight.<Field>`, `b.<Field>`.
pub fn read_bm25_params(path: &Path) -> Result<fieldrank_core::lexindex::Bm25Params> {
    let mut params = fieldrank_core::lexindex::Bm25Params::default();
    for (key, value) in read_kv_file(path)? {
        if key == "k1" {
            params.k1 = parse(&key, &value)?;
        } else if key == "b" {
            params.b = parse(&key, &value)?;
        } else if let Some(field) = key.strip_prefix("weight.") {
            let f = field_by_name(field)?;
            params.weights[f.index()] = parse(&key, &value)?;
        } else if let Some(field) = key.strip_prefix("b.") {
            let f = field_by_name(field)?;
            params.field_b[f.index()] = parse(&key, &value)?;
        } else {
            return Err(Error::InvalidInput(format!(
                "unknown BM25 parameter {key:?}"
            )));
        }
    }
    params.validate()?;
    Ok(params)
}

pub fn write_bm25_params(
    path: &Path,
    params: &fieldrank_core::lexindex::Bm25Params,
) -> Result<()> {
    use fieldrank_core::catalog::Field;
    let mut entries: BTreeMap<String, String> = BTreeMap::new();
    entries.insert("k1".into(), format!("{}", params.k1));
    entries.insert("b".into(), format!("{}", params.b));
    for field in Field::ALL {
        entries.insert(
            format!("weight.{field}"),
            format!("{}", params.weights[field.index()]),
        );
        entries.insert(
            format!("b.{field}"),
            format!("{}", params.field_b[field.index()]),
        );
    }
    let mut text = String::new();
    for (k, v) in entries {
        text.push_str(&format!("{k} = {v}\n"));
    }
    std::fs::write(path, text)?;
    Ok(())
}

fn field_by_name(name: &str) -> Result<fieldrank_core::catalog::Field> {
    use fieldrank_core::catalog::Field;
    Field::ALL
        .into_iter()
        .find(|f| f.to_string() == name)
        .ok_or_else(|| Error::InvalidInput(format!("unknown field {name:?}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_then_flag_precedence() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        std::fs::write(&path, "# comment\nepochs = 9\nseed = 7 # inline\n").unwrap();
        let mut s = Settings::default();
        s.load_file(&path).unwrap();
        assert_eq!(s.epochs, 9);
        assert_eq!(s.seed, 7);
        // A later explicit set models a CLI flag overriding the file.
        s.set("seed", "11").unwrap();
        assert_eq!(s.seed, 11);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        let mut s = Settings::default();
        assert!(s.set("d_modell", "8").is_err());
        assert!(s.set("epochs", "three").is_err());
        assert!(s.set("repr", "both").is_err());
        assert!(s.set("repr", "flat").is_ok());
    }

    #[test]
    fn bm25_params_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("params.conf");
        let mut params = fieldrank_core::lexindex::Bm25Params {
            k1: 0.9,
            b: 0.3,
            ..Default::default()
        };
        params.weights[4] = 2.5;
        params.field_b[2] = 0.5;
        write_bm25_params(&path, &params).unwrap();
        let back = read_bm25_params(&path).unwrap();
        assert_eq!(back, params);
    }
}
