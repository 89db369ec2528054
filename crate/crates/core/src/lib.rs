//! Fielded semantic product search: a structured lexical-plus-neural
//! matching engine for product catalogs.
//!
//! The crate provides the full pipeline: catalog ingestion and labeling
//! ([`catalog`]), text normalization ([`text`]), fielded BM25/BM25F
//! baselines ([`lexindex`]), a trainable Siamese transformer encoder
//! ([`encoder`]), the structured matching scorer ([`smm`]), training
//! ([`train`]), and ranking evaluation with significance tests ([`eval`]).

pub mod catalog;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod fsio;
pub mod lexindex;
pub mod matrix;
pub mod smm;
pub mod text;
pub mod train;

pub use error::{Error, Result};
