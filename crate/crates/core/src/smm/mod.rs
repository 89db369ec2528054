//! Structured matching: combines the pooled query vector, the per-field
//! document matrix, and a binary lexical match matrix into one feature
//! vector, then maps it to a relevance probability with a two-layer head.
//!
//! Feature layout (row-major flattening, fixed order):
//! `[|broadcast(q) - D| ; broadcast(q) .* D ; M]`, giving
//! `7*d + 7*d + 7*L_max(query)` entries. The flat ablation variant uses a
//! single document vector and a single match row: `d + d + L_max(query)`.

mod checkpoint;

use crate::catalog::{Field, FieldedDocument, FIELD_COUNT};
use crate::encoder::{EncodeTrace, EncoderConfig, EncoderParams, FieldMatrix, QueryVector};
use crate::matrix::{axpy, dot, scalar, Matrix};
use crate::text::{tokenize, Vocab};
use crate::{Error, Result};
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::HashSet;

/// Document representation scored by a model: one encoding per field with a
/// 7-row match matrix, or a single flattened-text encoding with one match
/// row (the structure-free baseline).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DocRepr {
    Fielded,
    Flat,
}

/// Full model shape: encoder plus head widths and the document representation.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    pub head_hidden: usize,
    /// Dropout between the two head layers, training mode only.
    pub head_dropout_p: f64,
    pub repr: DocRepr,
}

impl ModelConfig {
    pub fn desk(vocab_size: usize, repr: DocRepr) -> Self {
        Self {
            encoder: EncoderConfig::desk(vocab_size),
            head_hidden: 256,
            head_dropout_p: 0.5,
            repr,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        if self.head_hidden == 0 {
            return Err(Error::InvalidInput("head_hidden must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.head_dropout_p) {
            return Err(Error::InvalidInput(format!(
                "head_dropout_p {} outside [0, 1)",
                self.head_dropout_p
            )));
        }
        Ok(())
    }

    /// Input width of the head for this representation.
    pub fn feature_len(&self) -> usize {
        let d = self.encoder.d_model;
        let lq = self.encoder.max_query_len;
        match self.repr {
            DocRepr::Fielded => 2 * FIELD_COUNT * d + FIELD_COUNT * lq,
            DocRepr::Flat => 2 * d + lq,
        }
    }
}

/// Binary lexical match indicators: entry (i, j) = 1 iff query token j
/// (lowercase, unstemmed) occurs among row i's document tokens. Fielded
/// models use 7 rows (one per field); the flat variant uses a single row
/// over the flattened document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatchMatrix {
    pub rows: usize,
    pub cols: usize,
    data: Vec<u8>,
}

impl MatchMatrix {
    fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0; rows * cols],
        }
    }

    pub fn at(&self, row: usize, col: usize) -> u8 {
        self.data[row * self.cols + col]
    }

    fn set(&mut self, row: usize, col: usize) {
        self.data[row * self.cols + col] = 1;
    }

    pub fn entries(&self) -> &[u8] {
        &self.data
    }
}

/// 7 x L_max(query) match matrix between the query's first `l_max` tokens
/// and each field's token set; columns past the real query length and rows
/// of token-less fields stay zero.
pub fn build_match_matrix(
    query_tokens: &[String],
    doc: &FieldedDocument,
    l_max: usize,
) -> MatchMatrix {
    let mut m = MatchMatrix::zeros(FIELD_COUNT, l_max);
    let real = query_tokens.len().min(l_max);
    for field in Field::ALL {
        let tokens: HashSet<String> = tokenize(&doc.field_text(field)).into_iter().collect();
        if tokens.is_empty() {
            continue;
        }
        for (j, token) in query_tokens.iter().take(real).enumerate() {
            if tokens.contains(token) {
                m.set(field.index(), j);
            }
        }
    }
    m
}

/// Single match row against the flattened document text.
pub fn build_flat_match_row(
    query_tokens: &[String],
    doc: &FieldedDocument,
    l_max: usize,
) -> MatchMatrix {
    let mut m = MatchMatrix::zeros(1, l_max);
    let tokens: HashSet<String> = tokenize(&doc.flatten()).into_iter().collect();
    let real = query_tokens.len().min(l_max);
    for (j, token) in query_tokens.iter().take(real).enumerate() {
        if tokens.contains(token) {
            m.set(0, j);
        }
    }
    m
}

/// The query vector replicated into one row per field, aligning it with the
/// field matrix for element-wise comparison.
pub fn broadcast_query<T: Float>(q: &QueryVector<T>) -> Matrix<T> {
    let d = q.values.len();
    let mut out = Matrix::zeros(FIELD_COUNT, d);
    for r in 0..FIELD_COUNT {
        out.row_mut(r).copy_from_slice(&q.values);
    }
    out
}

/// `[|broadcast(q) - D| ; broadcast(q) .* D ; M]` flattened row-major.
pub fn smm_features<T: Float>(
    q: &QueryVector<T>,
    d_mat: &FieldMatrix<T>,
    m: &MatchMatrix,
) -> Result<Vec<T>> {
    let d = q.values.len();
    if d_mat.rows.rows != FIELD_COUNT || d_mat.rows.cols != d {
        return Err(Error::Shape(format!(
            "field matrix {}x{} does not align with query width {d}",
            d_mat.rows.rows, d_mat.rows.cols
        )));
    }
    if m.rows != FIELD_COUNT {
        return Err(Error::Shape(format!(
            "match matrix has {} rows; expected {FIELD_COUNT}",
            m.rows
        )));
    }
    let mut features = Vec::with_capacity(2 * FIELD_COUNT * d + FIELD_COUNT * m.cols);
    for r in 0..FIELD_COUNT {
        let row = d_mat.rows.row(r);
        for (&qc, &rc) in q.values.iter().zip(row) {
            features.push((qc - rc).abs());
        }
    }
    for r in 0..FIELD_COUNT {
        let row = d_mat.rows.row(r);
        for (&qc, &rc) in q.values.iter().zip(row) {
            features.push(qc * rc);
        }
    }
    features.extend(m.entries().iter().map(|&b| scalar::<T>(b as f64)));
    Ok(features)
}

/// Flat-variant features: `[|q - d| ; q .* d ; m]` with one document vector
/// and one match row.
pub fn flat_features<T: Float>(
    q: &QueryVector<T>,
    d_vec: &QueryVector<T>,
    m: &MatchMatrix,
) -> Result<Vec<T>> {
    let d = q.values.len();
    if d_vec.values.len() != d {
        return Err(Error::Shape(format!(
            "document vector width {} does not align with query width {d}",
            d_vec.values.len()
        )));
    }
    if m.rows != 1 {
        return Err(Error::Shape(format!(
            "flat match row has {} rows; expected 1",
            m.rows
        )));
    }
    let mut features = Vec::with_capacity(2 * d + m.cols);
    for c in 0..d {
        features.push((q.values[c] - d_vec.values[c]).abs());
    }
    for c in 0..d {
        features.push(q.values[c] * d_vec.values[c]);
    }
    features.extend(m.entries().iter().map(|&b| scalar::<T>(b as f64)));
    Ok(features)
}

/// Diagnostic hooks that zero one feature segment before the head runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FeatureAblation {
    #[default]
    None,
    /// Zero the lexical match segment.
    ZeroMatch,
    /// Zero the absolute-difference segment.
    ZeroAbsDiff,
}

/// Two affine layers with ReLU between and a sigmoid output.
#[derive(Debug, Clone)]
pub struct HeadParams<T> {
    /// feature_len x hidden.
    pub w1: Matrix<T>,
    pub b1: Matrix<T>,
    /// hidden x 1.
    pub w2: Matrix<T>,
    pub b2: Matrix<T>,
}

impl<T: Float> HeadParams<T> {
    fn init<R: Rng>(feature_len: usize, hidden: usize, rng: &mut R) -> Self {
        Self {
            w1: Matrix::xavier(feature_len, hidden, rng),
            b1: Matrix::zeros(1, hidden),
            w2: Matrix::xavier(hidden, 1, rng),
            b2: Matrix::zeros(1, 1),
        }
    }

    fn zeros(feature_len: usize, hidden: usize) -> Self {
        Self {
            w1: Matrix::zeros(feature_len, hidden),
            b1: Matrix::zeros(1, hidden),
            w2: Matrix::zeros(hidden, 1),
            b2: Matrix::zeros(1, 1),
        }
    }
}

/// Cached head activations for backward.
#[derive(Debug, Clone)]
pub struct HeadTrace<T> {
    pub hidden_pre: Vec<T>,
    /// Post-ReLU, post-dropout activations feeding the output layer.
    pub dropped: Vec<T>,
    pub drop_mask: Option<Vec<T>>,
    pub logit: T,
    pub prob: T,
}

fn sigmoid<T: Float>(x: T) -> T {
    if x >= T::zero() {
        (T::one() + (-x).exp()).recip()
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// sigmoid(affine2(dropout(relu(affine1(features))))).
pub fn head_forward<T: Float>(
    features: &[T],
    params: &HeadParams<T>,
    dropout_p: f64,
    rng: Option<&mut ChaCha8Rng>,
) -> Result<HeadTrace<T>> {
    if features.len() != params.w1.rows {
        return Err(Error::Shape(format!(
            "feature length {} does not match head input width {}",
            features.len(),
            params.w1.rows
        )));
    }
    let hidden = params.w1.cols;
    let mut hidden_pre = params.b1.row(0).to_vec();
    for (i, &f) in features.iter().enumerate() {
        if f != T::zero() {
            axpy(&mut hidden_pre, f, params.w1.row(i));
        }
    }
    let mut dropped: Vec<T> = hidden_pre.iter().map(|&h| h.max(T::zero())).collect();
    let drop_mask = rng.map(|r| {
        let keep = scalar::<T>(1.0 / (1.0 - dropout_p));
        let mask: Vec<T> = (0..hidden)
            .map(|_| {
                if r.gen::<f64>() < dropout_p {
                    T::zero()
                } else {
                    keep
                }
            })
            .collect();
        for (a, &m) in dropped.iter_mut().zip(&mask) {
            *a = *a * m;
        }
        mask
    });
    let logit = dot(&dropped, &params.w2.data) + params.b2.at(0, 0);
    Ok(HeadTrace {
        hidden_pre,
        dropped,
        drop_mask,
        logit,
        prob: sigmoid(logit),
    })
}

/// Accumulates head gradients and returns d(loss)/d(features).
pub fn head_backward<T: Float>(
    features: &[T],
    params: &HeadParams<T>,
    trace: &HeadTrace<T>,
    d_logit: T,
    grads: &mut HeadParams<T>,
) -> Vec<T> {
    let hidden = params.w1.cols;
    grads.b2.data[0] = grads.b2.data[0] + d_logit;
    axpy(&mut grads.w2.data, d_logit, &trace.dropped);
    let mut d_pre = vec![T::zero(); hidden];
    for j in 0..hidden {
        let mut g = d_logit * params.w2.data[j];
        if let Some(mask) = &trace.drop_mask {
            g = g * mask[j];
        }
        d_pre[j] = if trace.hidden_pre[j] > T::zero() {
            g
        } else {
            T::zero()
        };
    }
    axpy(grads.b1.row_mut(0), T::one(), &d_pre);
    let mut d_features = vec![T::zero(); features.len()];
    for (i, &f) in features.iter().enumerate() {
        if f != T::zero() {
            axpy(grads.w1.row_mut(i), f, &d_pre);
        }
        d_features[i] = dot(params.w1.row(i), &d_pre);
    }
    d_features
}

/// Encoder plus head under one configuration; gradients use a second
/// zero-initialized instance of the same struct.
#[derive(Debug, Clone)]
pub struct Model<T> {
    pub config: ModelConfig,
    pub encoder: EncoderParams<T>,
    pub head: HeadParams<T>,
}

/// One scored (query, document) forward pass with everything backward needs.
#[derive(Debug, Clone)]
pub enum PairTrace<T> {
    Fielded {
        query: EncodeTrace<T>,
        fields: Box<[Option<EncodeTrace<T>>; FIELD_COUNT]>,
        field_matrix: FieldMatrix<T>,
        features: Vec<T>,
        ablation: FeatureAblation,
        head: HeadTrace<T>,
    },
    Flat {
        query: EncodeTrace<T>,
        doc: EncodeTrace<T>,
        features: Vec<T>,
        ablation: FeatureAblation,
        head: HeadTrace<T>,
    },
}

impl<T: Float> PairTrace<T> {
    pub fn prob(&self) -> T {
        match self {
            PairTrace::Fielded { head, .. } | PairTrace::Flat { head, .. } => head.prob,
        }
    }
}

impl<T: Float> Model<T> {
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let encoder = EncoderParams::init(config.encoder.clone(), &mut rng)?;
        let head = HeadParams::init(config.feature_len(), config.head_hidden, &mut rng);
        Ok(Self {
            config,
            encoder,
            head,
        })
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            config: self.config.clone(),
            encoder: self.encoder.zeros_like(),
            head: HeadParams::zeros(self.config.feature_len(), self.config.head_hidden),
        }
    }

    /// All tensors in declaration order: encoder first, then the head.
    pub fn tensors(&self) -> Vec<(String, &Matrix<T>)> {
        let mut out = self.encoder.tensors();
        out.push(("head.w1".to_string(), &self.head.w1));
        out.push(("head.b1".to_string(), &self.head.b1));
        out.push(("head.w2".to_string(), &self.head.w2));
        out.push(("head.b2".to_string(), &self.head.b2));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut Matrix<T>)> {
        let mut out = self.encoder.tensors_mut();
        out.push(("head.w1".to_string(), &mut self.head.w1));
        out.push(("head.b1".to_string(), &mut self.head.b1));
        out.push(("head.w2".to_string(), &mut self.head.w2));
        out.push(("head.b2".to_string(), &mut self.head.b2));
        out
    }

    /// Relevance probability in (0,1); eval mode, ablation off.
    pub fn score(&self, query: &str, doc: &FieldedDocument, vocab: &Vocab) -> Result<T> {
        Ok(self
            .forward_pair(query, doc, vocab, FeatureAblation::None, None)?
            .prob())
    }

    /// Score with one feature segment zeroed (diagnostic wiring hook).
    pub fn score_ablated(
        &self,
        query: &str,
        doc: &FieldedDocument,
        vocab: &Vocab,
        ablation: FeatureAblation,
    ) -> Result<T> {
        Ok(self.forward_pair(query, doc, vocab, ablation, None)?.prob())
    }

    /// Full forward pass for one pair under the configured representation.
    pub fn forward_pair(
        &self,
        query: &str,
        doc: &FieldedDocument,
        vocab: &Vocab,
        ablation: FeatureAblation,
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<PairTrace<T>> {
        if !doc.is_valid() {
            return Err(Error::InvalidInput(format!(
                "document {} is not valid for scoring",
                doc.doc_id
            )));
        }
        let query_tokens = tokenize(query);
        let l_max = self.config.encoder.max_query_len;
        match self.config.repr {
            DocRepr::Fielded => {
                let q_trace = self.encoder.query_trace(query, vocab, rng.as_deref_mut())?;
                let (field_matrix, fields) =
                    self.encoder.field_traces(doc, vocab, rng.as_deref_mut())?;
                let matches = build_match_matrix(&query_tokens, doc, l_max);
                let q = QueryVector {
                    values: q_trace.pooled.clone(),
                };
                let mut features = smm_features(&q, &field_matrix, &matches)?;
                apply_ablation(&mut features, ablation, &self.config);
                let head = head_forward(&features, &self.head, self.config.head_dropout_p, rng)?;
                Ok(PairTrace::Fielded {
                    query: q_trace,
                    fields: Box::new(fields),
                    field_matrix,
                    features,
                    ablation,
                    head,
                })
            }
            DocRepr::Flat => {
                let q_trace = self.encoder.query_trace(query, vocab, rng.as_deref_mut())?;
                let d_trace = self.encoder.flat_trace(doc, vocab, rng.as_deref_mut())?;
                let matches = build_flat_match_row(&query_tokens, doc, l_max);
                let q = QueryVector {
                    values: q_trace.pooled.clone(),
                };
                let d_vec = QueryVector {
                    values: d_trace.pooled.clone(),
                };
                let mut features = flat_features(&q, &d_vec, &matches)?;
                apply_ablation(&mut features, ablation, &self.config);
                let head = head_forward(&features, &self.head, self.config.head_dropout_p, rng)?;
                Ok(PairTrace::Flat {
                    query: q_trace,
                    doc: d_trace,
                    features,
                    ablation,
                    head,
                })
            }
        }
    }

    /// Accumulates d(loss)/d(all parameters) into `grads` given
    /// d(loss)/d(logit) for this pair.
    pub fn backward_pair(&self, trace: &PairTrace<T>, d_logit: T, grads: &mut Model<T>) {
        let d = self.config.encoder.d_model;
        match trace {
            PairTrace::Fielded {
                query,
                fields,
                field_matrix,
                features,
                ablation,
                head,
            } => {
                let mut d_feat =
                    head_backward(features, &self.head, head, d_logit, &mut grads.head);
                zero_ablated(&mut d_feat, *ablation, &self.config);
                let mut d_q = vec![T::zero(); d];
                let mut d_rows = Matrix::zeros(FIELD_COUNT, d);
                let q = &query.pooled;
                for r in 0..FIELD_COUNT {
                    let row = field_matrix.rows.row(r);
                    let d_row = d_rows.row_mut(r);
                    for c in 0..d {
                        let diff = q[c] - row[c];
                        let sign = if diff > T::zero() {
                            T::one()
                        } else if diff < T::zero() {
                            -T::one()
                        } else {
                            T::zero()
                        };
                        let g_abs = d_feat[r * d + c];
                        d_q[c] = d_q[c] + g_abs * sign;
                        d_row[c] = d_row[c] - g_abs * sign;
                        let g_prod = d_feat[FIELD_COUNT * d + r * d + c];
                        d_q[c] = d_q[c] + g_prod * row[c];
                        d_row[c] = d_row[c] + g_prod * q[c];
                    }
                }
                self.encoder.backward(query, &d_q, &mut grads.encoder);
                for r in 0..FIELD_COUNT {
                    if let Some(field_trace) = &fields[r] {
                        self.encoder
                            .backward(field_trace, d_rows.row(r), &mut grads.encoder);
                    }
                }
            }
            PairTrace::Flat {
                query,
                doc,
                features,
                ablation,
                head,
            } => {
                let mut d_feat =
                    head_backward(features, &self.head, head, d_logit, &mut grads.head);
                zero_ablated(&mut d_feat, *ablation, &self.config);
                let mut d_q = vec![T::zero(); d];
                let mut d_d = vec![T::zero(); d];
                let q = &query.pooled;
                let dv = &doc.pooled;
                for c in 0..d {
                    let diff = q[c] - dv[c];
                    let sign = if diff > T::zero() {
                        T::one()
                    } else if diff < T::zero() {
                        -T::one()
                    } else {
                        T::zero()
                    };
                    d_q[c] = d_q[c] + d_feat[c] * sign;
                    d_d[c] = d_d[c] - d_feat[c] * sign;
                    d_q[c] = d_q[c] + d_feat[d + c] * dv[c];
                    d_d[c] = d_d[c] + d_feat[d + c] * q[c];
                }
                self.encoder.backward(query, &d_q, &mut grads.encoder);
                self.encoder.backward(doc, &d_d, &mut grads.encoder);
            }
        }
    }
}

/// Segment bounds of the ablatable features for the given representation.
fn ablation_span(ablation: FeatureAblation, config: &ModelConfig) -> Option<(usize, usize)> {
    let d = config.encoder.d_model;
    let per_row = match config.repr {
        DocRepr::Fielded => FIELD_COUNT,
        DocRepr::Flat => 1,
    };
    match ablation {
        FeatureAblation::None => None,
        FeatureAblation::ZeroAbsDiff => Some((0, per_row * d)),
        FeatureAblation::ZeroMatch => {
            Some((2 * per_row * d, 2 * per_row * d + per_row * config.encoder.max_query_len))
        }
    }
}

fn apply_ablation<T: Float>(features: &mut [T], ablation: FeatureAblation, config: &ModelConfig) {
    if let Some((start, end)) = ablation_span(ablation, config) {
        for f in &mut features[start..end] {
            *f = T::zero();
        }
    }
}

fn zero_ablated<T: Float>(d_feat: &mut [T], ablation: FeatureAblation, config: &ModelConfig) {
    if let Some((start, end)) = ablation_span(ablation, config) {
        for g in &mut d_feat[start..end] {
            *g = T::zero();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::Field;

    fn vocab() -> Vocab {
        Vocab::from_tokens(
            ["red", "door", "panel", "oak", "36in", "drill", "x", "steel"]
                .into_iter()
                .map(String::from),
        )
    }

    fn doc_with(id: &str, fields: &[(Field, &str)]) -> FieldedDocument {
        let mut doc = FieldedDocument::new(id);
        for (field, text) in fields {
            doc.push_instance(*field, text.to_string()).unwrap();
        }
        doc
    }

    fn tiny_model(repr: DocRepr, seed: u64) -> Model<f64> {
        let config = ModelConfig {
            encoder: EncoderConfig {
                d_model: 8,
                n_layers: 1,
                n_heads: 2,
                d_ff: 16,
                max_query_len: 4,
                max_field_len: 8,
                vocab_size: vocab().len(),
                dropout_p: 0.1,
            },
            head_hidden: 8,
            head_dropout_p: 0.5,
            repr,
        };
        Model::init(config, seed).unwrap()
    }

    #[test]
    fn broadcast_replicates_into_seven_rows() {
        let q = QueryVector {
            values: vec![1.0, 2.0],
        };
        let b = broadcast_query(&q);
        assert_eq!((b.rows, b.cols), (7, 2));
        for r in 0..7 {
            assert_eq!(b.row(r), &[1.0, 2.0]);
        }
        let again = broadcast_query(&q);
        assert_eq!(b, again);
    }

    #[test]
    fn match_matrix_marks_field_hits() {
        let doc = doc_with(
            "P1",
            &[(Field::Title, "Red panel"), (Field::Numeric, "36in")],
        );
        let query: Vec<String> = ["red", "door"].iter().map(|s| s.to_string()).collect();
        let m = build_match_matrix(&query, &doc, 4);
        assert_eq!(m.at(Field::Title.index(), 0), 1);
        assert_eq!(m.at(Field::Title.index(), 1), 0);
        assert!(  // empty Brand field row is all zeros
            (0..4).all(|j| m.at(Field::Brand.index(), j) == 0)
        );
        let unit_query: Vec<String> = vec!["36in".to_string()];
        let m2 = build_match_matrix(&unit_query, &doc, 4);
        assert_eq!(m2.at(Field::Numeric.index(), 0), 1);
        assert_eq!(m2.at(Field::Title.index(), 0), 0);
    }

    #[test]
    fn match_columns_beyond_real_query_stay_zero() {
        let doc = doc_with("P1", &[(Field::Title, "red red red red red")]);
        let query: Vec<String> = vec!["red".to_string()];
        let m = build_match_matrix(&query, &doc, 4);
        assert_eq!(m.at(Field::Title.index(), 0), 1);
        for j in 1..4 {
            assert_eq!(m.at(Field::Title.index(), j), 0);
        }
        // Tokens past l_max are truncated, mirroring the encoder input.
        let long: Vec<String> = (0..6).map(|_| "red".to_string()).collect();
        let m2 = build_match_matrix(&long, &doc, 4);
        assert_eq!(m2.cols, 4);
        assert!((0..4).all(|j| m2.at(Field::Title.index(), j) == 1));
    }

    #[test]
    fn feature_layout_and_identity_case() {
        let d = 3;
        let q = QueryVector {
            values: vec![0.5, -1.0, 2.0],
        };
        let mut rows = Matrix::zeros(FIELD_COUNT, d);
        rows.row_mut(2).copy_from_slice(&q.values);
        rows.row_mut(4).copy_from_slice(&[1.0, 1.0, 1.0]);
        let mut present = [false; FIELD_COUNT];
        present[2] = true;
        present[4] = true;
        let d_mat = FieldMatrix { rows, present };
        let m = MatchMatrix::zeros(FIELD_COUNT, 2);
        let f = smm_features(&q, &d_mat, &m).unwrap();
        assert_eq!(f.len(), 7 * d + 7 * d + 7 * 2);
        // Identity row: its |diff| block is exactly zero.
        assert!(f[2 * d..3 * d].iter().all(|&v| v == 0.0));
        // Product block of the identity row is q squared.
        assert_eq!(&f[7 * d + 2 * d..7 * d + 3 * d], &[0.25, 1.0, 4.0]);
        // Absent rows: |diff| = |q|, product = 0.
        assert_eq!(&f[0..d], &[0.5, 1.0, 2.0]);
        assert!(f[7 * d..7 * d + d].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_query_features() {
        let d = 2;
        let q = QueryVector {
            values: vec![0.0, 0.0],
        };
        let mut rows = Matrix::zeros(FIELD_COUNT, d);
        rows.row_mut(0).copy_from_slice(&[3.0, -4.0]);
        let mut present = [false; FIELD_COUNT];
        present[0] = true;
        let d_mat = FieldMatrix { rows, present };
        let m = MatchMatrix::zeros(FIELD_COUNT, 1);
        let f = smm_features(&q, &d_mat, &m).unwrap();
        assert_eq!(&f[0..d], &[3.0, 4.0]);
        assert!(f[7 * d..14 * d].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn desk_config_feature_length_is_1008() {
        let cfg = ModelConfig::desk(100, DocRepr::Fielded);
        assert_eq!(cfg.feature_len(), 7 * 64 + 7 * 64 + 7 * 16);
        assert_eq!(cfg.feature_len(), 1008);
        let flat = ModelConfig::desk(100, DocRepr::Flat);
        assert_eq!(flat.feature_len(), 64 + 64 + 16);
    }

    #[test]
    fn features_reject_mismatched_shapes() {
        let q = QueryVector {
            values: vec![1.0, 2.0],
        };
        let d_mat = FieldMatrix {
            rows: Matrix::zeros(FIELD_COUNT, 3),
            present: [false; FIELD_COUNT],
        };
        let m = MatchMatrix::zeros(FIELD_COUNT, 2);
        assert!(smm_features(&q, &d_mat, &m).is_err());
        let flat_m = MatchMatrix::zeros(1, 2);
        let d_short = QueryVector { values: vec![1.0] };
        assert!(flat_features(&q, &d_short, &flat_m).is_err());
    }

    #[test]
    fn zero_head_scores_one_half() {
        let head: HeadParams<f64> = HeadParams::zeros(5, 3);
        let trace = head_forward(&[1.0, 0.0, 2.0, -1.0, 0.5], &head, 0.5, None).unwrap();
        assert_eq!(trace.prob, 0.5);
        assert_eq!(trace.logit, 0.0);
    }

    #[test]
    fn head_output_stays_in_open_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let head: HeadParams<f64> = HeadParams::init(6, 4, &mut rng);
        for trial in 0..50 {
            let features: Vec<f64> = (0..6).map(|i| ((trial * 7 + i) % 11) as f64 - 5.0).collect();
            let t = head_forward(&features, &head, 0.5, None).unwrap();
            assert!(t.prob > 0.0 && t.prob < 1.0);
        }
    }

    #[test]
    fn head_dropout_is_train_only_and_seeded() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let head: HeadParams<f64> = HeadParams::init(4, 16, &mut rng);
        let features = [1.0, -2.0, 0.5, 3.0];
        let eval_a = head_forward(&features, &head, 0.5, None).unwrap();
        let eval_b = head_forward(&features, &head, 0.5, None).unwrap();
        assert_eq!(eval_a.prob, eval_b.prob);
        let mut r1 = ChaCha8Rng::seed_from_u64(9);
        let mut r2 = ChaCha8Rng::seed_from_u64(9);
        let t1 = head_forward(&features, &head, 0.5, Some(&mut r1)).unwrap();
        let t2 = head_forward(&features, &head, 0.5, Some(&mut r2)).unwrap();
        assert_eq!(t1.prob, t2.prob);
        let mut r3 = ChaCha8Rng::seed_from_u64(10);
        let t3 = head_forward(&features, &head, 0.5, Some(&mut r3)).unwrap();
        assert_ne!(t1.prob, t3.prob);
    }

    #[test]
    fn score_is_deterministic_and_in_range() {
        let model = tiny_model(DocRepr::Fielded, 21);
        let v = vocab();
        let doc = doc_with(
            "P1",
            &[(Field::Title, "red door"), (Field::Description, "oak panel")],
        );
        let a = model.score("red door", &doc, &v).unwrap();
        let b = model.score("red door", &doc, &v).unwrap();
        assert_eq!(a, b);
        assert!(a > 0.0 && a < 1.0);
    }

    #[test]
    fn invalid_document_is_rejected() {
        let model = tiny_model(DocRepr::Fielded, 22);
        let v = vocab();
        let doc = doc_with("P1", &[(Field::Title, "red door")]);
        assert!(model.score("red", &doc, &v).is_err());
    }

    #[test]
    fn field_swap_changes_fielded_features_but_not_flat_score() {
        // Moving "oak" between Title and Description keeps the flattened
        // text identical, so the flat pipeline cannot tell the documents
        // apart while the fielded match matrix can.
        let fielded = tiny_model(DocRepr::Fielded, 23);
        let flat = tiny_model(DocRepr::Flat, 23);
        let v = vocab();
        let a = doc_with(
            "P1",
            &[(Field::Title, "door oak"), (Field::Description, "x")],
        );
        let b = doc_with(
            "P1",
            &[(Field::Title, "door"), (Field::Description, "oak x")],
        );
        assert_eq!(a.flatten(), b.flatten());
        let fa = flat.score("oak", &a, &v).unwrap();
        let fb = flat.score("oak", &b, &v).unwrap();
        assert_eq!(fa, fb);
        let ta = fielded.forward_pair("oak", &a, &v, FeatureAblation::None, None).unwrap();
        let tb = fielded.forward_pair("oak", &b, &v, FeatureAblation::None, None).unwrap();
        let (fa, fb) = match (&ta, &tb) {
            (
                PairTrace::Fielded { features: x, .. },
                PairTrace::Fielded { features: y, .. },
            ) => (x.clone(), y.clone()),
            _ => unreachable!(),
        };
        assert_ne!(fa, fb);
        assert_ne!(ta.prob(), tb.prob());
    }

    #[test]
    fn single_match_cell_wiring_is_monotone() {
        // Head weights: 1.0 on exactly one match cell, zero elsewhere.
        let mut model = tiny_model(DocRepr::Fielded, 24);
        let v = vocab();
        let d = model.config.encoder.d_model;
        let lq = model.config.encoder.max_query_len;
        let cell = 2 * FIELD_COUNT * d + Field::Brand.index() * lq; // Brand row, query token 0
        model.head.w1.fill(0.0);
        model.head.b1.fill(0.0);
        model.head.w2.fill(0.0);
        model.head.b2.fill(0.0);
        model.head.w1.row_mut(cell)[0] = 1.0;
        model.head.w2.data[0] = 1.0;
        let with_match = doc_with(
            "P1",
            &[
                (Field::Title, "door"),
                (Field::Description, "x"),
                (Field::Brand, "steel"),
            ],
        );
        let without = doc_with(
            "P2",
            &[
                (Field::Title, "door steel"),
                (Field::Description, "x"),
                (Field::Brand, "oak"),
            ],
        );
        let s_match = model.score("steel", &with_match, &v).unwrap();
        let s_plain = model.score("steel", &without, &v).unwrap();
        assert!(s_match > s_plain);
        assert_eq!(s_match, sigmoid(1.0));
        assert_eq!(s_plain, 0.5);
    }

    #[test]
    fn ablation_hooks_change_the_score() {
        let model = tiny_model(DocRepr::Fielded, 25);
        let v = vocab();
        let doc = doc_with(
            "P1",
            &[(Field::Title, "red door"), (Field::Description, "oak")],
        );
        let base = model.score("red door", &doc, &v).unwrap();
        let no_match = model
            .score_ablated("red door", &doc, &v, FeatureAblation::ZeroMatch)
            .unwrap();
        let no_diff = model
            .score_ablated("red door", &doc, &v, FeatureAblation::ZeroAbsDiff)
            .unwrap();
        assert_ne!(base, no_match);
        assert_ne!(base, no_diff);
        assert_ne!(no_match, no_diff);
    }

    #[test]
    fn flat_model_scores_and_matches_flat_row() {
        let model = tiny_model(DocRepr::Flat, 26);
        let v = vocab();
        let doc = doc_with(
            "P1",
            &[(Field::Title, "red door"), (Field::Description, "oak")],
        );
        let trace = model
            .forward_pair("red oak", &doc, &v, FeatureAblation::None, None)
            .unwrap();
        match &trace {
            PairTrace::Flat { features, .. } => {
                assert_eq!(features.len(), model.config.feature_len());
                let m_start = 2 * model.config.encoder.d_model;
                assert_eq!(features[m_start], 1.0); // "red" in flattened text
                assert_eq!(features[m_start + 1], 1.0); // "oak" in flattened text
                assert_eq!(features[m_start + 2], 0.0);
            }
            _ => unreachable!(),
        }
        let s = trace.prob();
        assert!(s > 0.0 && s < 1.0);
    }
}
