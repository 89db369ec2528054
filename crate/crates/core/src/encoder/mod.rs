//! Trainable context encoder: token and learned positional embeddings feed a
//! stack of pre-norm transformer blocks whose final hidden states are
//! masked-mean-pooled into a fixed vector. One weight set encodes queries,
//! per-field document texts, and flattened documents (Siamese sharing).
//!
//! Every sequence carries PAD only as a suffix ([`TokenSeq`] invariant), so
//! masking reduces to a real-token prefix length: attention rows and columns
//! are computed only over the prefix, which is arithmetically identical to
//! giving PAD positions -inf logits. PAD rows therefore never influence the
//! pooled vector and receive no gradient.

mod backward;

use crate::catalog::{Field, FieldedDocument, FIELD_COUNT};
use crate::matrix::{axpy, dot, matmul_into, scalar, Matrix};
use crate::text::{encode_ids, tokenize, TokenSeq, Vocab};
use crate::{Error, Result};
use num_traits::Float;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Variance floor inside layer norm, applied before the square root.
pub const LN_EPS: f64 = 1e-5;

/// Structural hyperparameters of the encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderConfig {
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    /// Sequence capacity for queries (and flattened-document encodings).
    pub max_query_len: usize,
    /// Sequence capacity for a single field's text.
    pub max_field_len: usize,
    pub vocab_size: usize,
    /// Dropout probability on both sublayer outputs, training mode only.
    pub dropout_p: f64,
}

impl EncoderConfig {
    /// Default desk-scale configuration for a given vocabulary size.
    pub fn desk(vocab_size: usize) -> Self {
        Self {
            d_model: 64,
            n_layers: 2,
            n_heads: 4,
            d_ff: 128,
            max_query_len: 16,
            max_field_len: 64,
            vocab_size,
            dropout_p: 0.1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("d_model", self.d_model),
            ("n_layers", self.n_layers),
            ("n_heads", self.n_heads),
            ("d_ff", self.d_ff),
            ("max_query_len", self.max_query_len),
            ("max_field_len", self.max_field_len),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(Error::InvalidInput(format!("{name} must be >= 1")));
            }
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return Err(Error::InvalidInput(format!(
                "d_model {} not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if self.vocab_size < 2 {
            return Err(Error::InvalidInput(
                "vocab_size must cover PAD and UNK".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::InvalidInput(format!(
                "dropout_p {} outside [0, 1)",
                self.dropout_p
            )));
        }
        Ok(())
    }

    pub fn d_head(&self) -> usize {
        self.d_model / self.n_heads
    }

    /// Rows in the positional embedding table.
    pub fn max_positions(&self) -> usize {
        self.max_query_len.max(self.max_field_len)
    }
}

/// Pooled encoding of a single text sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryVector<T> {
    pub values: Vec<T>,
}

/// Per-field pooled document encodings: row i encodes field i, rows of empty
/// fields are exactly zero and flagged absent.
///
/// Presence follows the neural tokenizer: a field counts as present iff its
/// joined text yields at least one token.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldMatrix<T> {
    /// 7 x d_model, ordered as [`Field::ALL`].
    pub rows: Matrix<T>,
    pub present: [bool; FIELD_COUNT],
}

/// Parameters of one pre-norm transformer block.
///
/// Projection matrices are stored input-rows x output-cols so a forward
/// application is `x * W + b`; biases and norm scales are 1-row matrices.
#[derive(Debug, Clone)]
pub struct BlockParams<T> {
    pub ln1_gamma: Matrix<T>,
    pub ln1_beta: Matrix<T>,
    pub wq: Matrix<T>,
    pub bq: Matrix<T>,
    pub wk: Matrix<T>,
    pub bk: Matrix<T>,
    pub wv: Matrix<T>,
    pub bv: Matrix<T>,
    pub wo: Matrix<T>,
    pub bo: Matrix<T>,
    pub ln2_gamma: Matrix<T>,
    pub ln2_beta: Matrix<T>,
    pub w1: Matrix<T>,
    pub b1: Matrix<T>,
    pub w2: Matrix<T>,
    pub b2: Matrix<T>,
}

/// Names of the block tensors in declaration (and checkpoint) order.
const BLOCK_TENSORS: [&str; 16] = [
    "ln1.gamma", "ln1.beta", "attn.wq", "attn.bq", "attn.wk", "attn.bk", "attn.wv", "attn.bv",
    "attn.wo", "attn.bo", "ln2.gamma", "ln2.beta", "ff.w1", "ff.b1", "ff.w2", "ff.b2",
];

impl<T: Float> BlockParams<T> {
    fn init<R: Rng>(d: usize, d_ff: usize, rng: &mut R) -> Self {
        let mut ones = Matrix::zeros(1, d);
        ones.fill(T::one());
        Self {
            ln1_gamma: ones.clone(),
            ln1_beta: Matrix::zeros(1, d),
            wq: Matrix::xavier(d, d, rng),
            bq: Matrix::zeros(1, d),
            wk: Matrix::xavier(d, d, rng),
            bk: Matrix::zeros(1, d),
            wv: Matrix::xavier(d, d, rng),
            bv: Matrix::zeros(1, d),
            wo: Matrix::xavier(d, d, rng),
            bo: Matrix::zeros(1, d),
            ln2_gamma: ones,
            ln2_beta: Matrix::zeros(1, d),
            w1: Matrix::xavier(d, d_ff, rng),
            b1: Matrix::zeros(1, d_ff),
            w2: Matrix::xavier(d_ff, d, rng),
            b2: Matrix::zeros(1, d),
        }
    }

    fn zeros(d: usize, d_ff: usize) -> Self {
        Self {
            ln1_gamma: Matrix::zeros(1, d),
            ln1_beta: Matrix::zeros(1, d),
            wq: Matrix::zeros(d, d),
            bq: Matrix::zeros(1, d),
            wk: Matrix::zeros(d, d),
            bk: Matrix::zeros(1, d),
            wv: Matrix::zeros(d, d),
            bv: Matrix::zeros(1, d),
            wo: Matrix::zeros(d, d),
            bo: Matrix::zeros(1, d),
            ln2_gamma: Matrix::zeros(1, d),
            ln2_beta: Matrix::zeros(1, d),
            w1: Matrix::zeros(d, d_ff),
            b1: Matrix::zeros(1, d_ff),
            w2: Matrix::zeros(d_ff, d),
            b2: Matrix::zeros(1, d),
        }
    }

    fn tensors(&self) -> [&Matrix<T>; 16] {
        [
            &self.ln1_gamma, &self.ln1_beta, &self.wq, &self.bq, &self.wk, &self.bk, &self.wv,
            &self.bv, &self.wo, &self.bo, &self.ln2_gamma, &self.ln2_beta, &self.w1, &self.b1,
            &self.w2, &self.b2,
        ]
    }

    fn tensors_mut(&mut self) -> [&mut Matrix<T>; 16] {
        [
            &mut self.ln1_gamma, &mut self.ln1_beta, &mut self.wq, &mut self.bq, &mut self.wk,
            &mut self.bk, &mut self.wv, &mut self.bv, &mut self.wo, &mut self.bo,
            &mut self.ln2_gamma, &mut self.ln2_beta, &mut self.w1, &mut self.b1, &mut self.w2,
            &mut self.b2,
        ]
    }
}

/// Full encoder parameter set. Also serves as its own gradient container:
/// [`EncoderParams::zeros_like`] allocates matching zeroed tensors that
/// [`EncoderParams::backward`] accumulates into.
#[derive(Debug, Clone)]
pub struct EncoderParams<T> {
    pub config: EncoderConfig,
    pub tok_emb: Matrix<T>,
    pub pos_emb: Matrix<T>,
    pub blocks: Vec<BlockParams<T>>,
}

impl<T: Float> EncoderParams<T> {
    /// Random initialization: embeddings uniform in +-1/sqrt(d_model),
    /// projections Xavier-uniform, biases zero, norm scales one.
    pub fn init<R: Rng>(config: EncoderConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let limit = 1.0 / (config.d_model as f64).sqrt();
        let tok_emb = Matrix::uniform(config.vocab_size, config.d_model, limit, rng);
        let pos_emb = Matrix::uniform(config.max_positions(), config.d_model, limit, rng);
        let blocks = (0..config.n_layers)
            .map(|_| BlockParams::init(config.d_model, config.d_ff, rng))
            .collect();
        Ok(Self {
            config,
            tok_emb,
            pos_emb,
            blocks,
        })
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            config: self.config.clone(),
            tok_emb: Matrix::zeros(self.tok_emb.rows, self.tok_emb.cols),
            pos_emb: Matrix::zeros(self.pos_emb.rows, self.pos_emb.cols),
            blocks: (0..self.config.n_layers)
                .map(|_| BlockParams::zeros(self.config.d_model, self.config.d_ff))
                .collect(),
        }
    }

    /// Tensors in declaration order, paired with their checkpoint names.
    pub fn tensors(&self) -> Vec<(String, &Matrix<T>)> {
        let mut out = vec![
            ("tok_emb".to_string(), &self.tok_emb),
            ("pos_emb".to_string(), &self.pos_emb),
        ];
        for (i, block) in self.blocks.iter().enumerate() {
            for (name, tensor) in BLOCK_TENSORS.iter().zip(block.tensors()) {
                out.push((format!("block{i}.{name}"), tensor));
            }
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut Matrix<T>)> {
        let mut out = vec![
            ("tok_emb".to_string(), &mut self.tok_emb),
            ("pos_emb".to_string(), &mut self.pos_emb),
        ];
        for (i, block) in self.blocks.iter_mut().enumerate() {
            for (name, tensor) in BLOCK_TENSORS.iter().zip(block.tensors_mut()) {
                out.push((format!("block{i}.{name}"), tensor));
            }
        }
        out
    }

    /// Token plus positional embedding per position; PAD suffix rows are
    /// filled like any other row and masked by every downstream consumer.
    pub fn embed(&self, seq: &TokenSeq) -> Result<Matrix<T>> {
        let l = seq.ids.len();
        if l > self.pos_emb.rows {
            return Err(Error::Shape(format!(
                "sequence capacity {l} exceeds positional table {}",
                self.pos_emb.rows
            )));
        }
        let mut x = Matrix::zeros(l, self.config.d_model);
        for (i, &id) in seq.ids.iter().enumerate() {
            if id >= self.config.vocab_size {
                return Err(Error::InvalidInput(format!(
                    "token id {id} outside vocabulary of size {}",
                    self.config.vocab_size
                )));
            }
            let row = x.row_mut(i);
            row.copy_from_slice(self.tok_emb.row(id));
            axpy(row, T::one(), self.pos_emb.row(i));
        }
        Ok(x)
    }

    /// Full forward pass with cached activations for [`Self::backward`].
    /// `rng` enables dropout (training mode); `None` is the pure eval path.
    pub fn encode_trace(
        &self,
        seq: &TokenSeq,
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<EncodeTrace<T>> {
        let len = seq.len;
        let x0 = self.embed(seq)?;
        let mut blocks: Vec<BlockTrace<T>> = Vec::with_capacity(self.config.n_layers);
        if len > 0 {
            for params in &self.blocks {
                let trace = {
                    let x_in = blocks.last().map_or(&x0, |b| &b.x_out);
                    self.block_forward(params, x_in, len, rng.as_deref_mut())
                };
                blocks.push(trace);
            }
        }
        let x_final = blocks.last().map_or(&x0, |b| &b.x_out);
        let pooled = mean_pool(x_final, len);
        Ok(EncodeTrace {
            ids: seq.real().to_vec(),
            len,
            x0,
            blocks,
            pooled,
        })
    }

    /// Pooled encoding of raw text at query capacity; eval mode.
    pub fn encode_query(&self, text: &str, vocab: &Vocab) -> Result<QueryVector<T>> {
        let trace = self.query_trace(text, vocab, None)?;
        Ok(QueryVector {
            values: trace.pooled,
        })
    }

    /// Traced variant of [`Self::encode_query`] for training.
    pub fn query_trace(
        &self,
        text: &str,
        vocab: &Vocab,
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<EncodeTrace<T>> {
        let tokens = tokenize(text);
        if tokens.is_empty() {
            return Err(Error::InvalidInput(format!(
                "text {text:?} has no tokens to encode"
            )));
        }
        let seq = encode_ids(&tokens, vocab, self.config.max_query_len);
        self.encode_trace(&seq, rng)
    }

    /// Encodes each of the 7 fields independently through these same
    /// parameters; fields without tokens become zero rows flagged absent.
    pub fn encode_document_fields(
        &self,
        doc: &FieldedDocument,
        vocab: &Vocab,
    ) -> Result<FieldMatrix<T>> {
        let (matrix, _) = self.field_traces(doc, vocab, None)?;
        Ok(matrix)
    }

    /// Traced variant of [`Self::encode_document_fields`]; the trace slot for
    /// an absent field stays `None`.
    #[allow(clippy::type_complexity)]
    pub fn field_traces(
        &self,
        doc: &FieldedDocument,
        vocab: &Vocab,
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(FieldMatrix<T>, [Option<EncodeTrace<T>>; FIELD_COUNT])> {
        let mut rows = Matrix::zeros(FIELD_COUNT, self.config.d_model);
        let mut present = [false; FIELD_COUNT];
        let mut traces: [Option<EncodeTrace<T>>; FIELD_COUNT] = Default::default();
        for field in Field::ALL {
            let tokens = tokenize(&doc.field_text(field));
            if tokens.is_empty() {
                continue;
            }
            let seq = encode_ids(&tokens, vocab, self.config.max_field_len);
            let trace = self.encode_trace(&seq, rng.as_deref_mut())?;
            rows.row_mut(field.index()).copy_from_slice(&trace.pooled);
            present[field.index()] = true;
            traces[field.index()] = Some(trace);
        }
        Ok((FieldMatrix { rows, present }, traces))
    }

    /// Single encoding of the whole document flattened to one text, by
    /// definition identical to [`Self::encode_query`] on that text.
    pub fn encode_document_flat(
        &self,
        doc: &FieldedDocument,
        vocab: &Vocab,
    ) -> Result<QueryVector<T>> {
        self.encode_query(&doc.flatten(), vocab)
    }

    /// Traced variant of [`Self::encode_document_flat`].
    pub fn flat_trace(
        &self,
        doc: &FieldedDocument,
        vocab: &Vocab,
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<EncodeTrace<T>> {
        self.query_trace(&doc.flatten(), vocab, rng)
    }

    fn block_forward(
        &self,
        p: &BlockParams<T>,
        x_in: &Matrix<T>,
        len: usize,
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> BlockTrace<T> {
        let d = self.config.d_model;
        let d_ff = self.config.d_ff;
        let n_heads = self.config.n_heads;
        let d_head = self.config.d_head();
        let l = x_in.rows;
        let drop_p = self.config.dropout_p;

        let (a_norm, ln1_xhat, ln1_inv_std) = layer_norm(x_in, len, &p.ln1_gamma, &p.ln1_beta);

        let mut q = Matrix::zeros(l, d);
        let mut k = Matrix::zeros(l, d);
        let mut v = Matrix::zeros(l, d);
        matmul_into(&mut q, &a_norm, &p.wq, len);
        matmul_into(&mut k, &a_norm, &p.wk, len);
        matmul_into(&mut v, &a_norm, &p.wv, len);
        for i in 0..len {
            axpy(q.row_mut(i), T::one(), p.bq.row(0));
            axpy(k.row_mut(i), T::one(), p.bk.row(0));
            axpy(v.row_mut(i), T::one(), p.bv.row(0));
        }

        // Softmax over real positions only; PAD columns are excluded by
        // construction, equivalent to -inf logits.
        let scale = scalar::<T>(1.0 / (d_head as f64).sqrt());
        let mut attn = Vec::with_capacity(n_heads);
        let mut ctx = Matrix::zeros(l, d);
        for h in 0..n_heads {
            let hs = h * d_head;
            let he = hs + d_head;
            let mut probs = Matrix::zeros(len, len);
            for i in 0..len {
                let qi = &q.row(i)[hs..he];
                let row = probs.row_mut(i);
                let mut max_logit = T::neg_infinity();
                for (j, slot) in row.iter_mut().enumerate() {
                    let logit = dot(qi, &k.row(j)[hs..he]) * scale;
                    *slot = logit;
                    max_logit = max_logit.max(logit);
                }
                let mut denom = T::zero();
                for slot in row.iter_mut() {
                    *slot = (*slot - max_logit).exp();
                    denom = denom + *slot;
                }
                for slot in row.iter_mut() {
                    *slot = *slot / denom;
                }
            }
            for i in 0..len {
                for j in 0..len {
                    let w = probs.at(i, j);
                    axpy(&mut ctx.row_mut(i)[hs..he], w, &v.row(j)[hs..he]);
                }
            }
            attn.push(probs);
        }

        let mut attn_out = Matrix::zeros(l, d);
        matmul_into(&mut attn_out, &ctx, &p.wo, len);
        for i in 0..len {
            axpy(attn_out.row_mut(i), T::one(), p.bo.row(0));
        }
        let attn_drop = rng
            .as_deref_mut()
            .map(|r| dropout_mask(l, d, len, drop_p, r));
        if let Some(mask) = &attn_drop {
            apply_dropout(&mut attn_out, mask, len);
        }

        // Residual: PAD rows pass through x_in untouched.
        let mut x_mid = x_in.clone();
        for i in 0..len {
            axpy(x_mid.row_mut(i), T::one(), attn_out.row(i));
        }

        let (b_norm, ln2_xhat, ln2_inv_std) = layer_norm(&x_mid, len, &p.ln2_gamma, &p.ln2_beta);

        let mut ff_pre = Matrix::zeros(l, d_ff);
        matmul_into(&mut ff_pre, &b_norm, &p.w1, len);
        for i in 0..len {
            axpy(ff_pre.row_mut(i), T::one(), p.b1.row(0));
        }
        let mut ff_act = Matrix::zeros(l, d_ff);
        for i in 0..len {
            for (a, &pre) in ff_act.row_mut(i).iter_mut().zip(ff_pre.row(i)) {
                *a = pre.max(T::zero());
            }
        }
        let mut ff_out = Matrix::zeros(l, d);
        matmul_into(&mut ff_out, &ff_act, &p.w2, len);
        for i in 0..len {
            axpy(ff_out.row_mut(i), T::one(), p.b2.row(0));
        }
        let ff_drop = rng.map(|r| dropout_mask(l, d, len, drop_p, r));
        if let Some(mask) = &ff_drop {
            apply_dropout(&mut ff_out, mask, len);
        }

        let mut x_out = x_mid.clone();
        for i in 0..len {
            axpy(x_out.row_mut(i), T::one(), ff_out.row(i));
        }

        BlockTrace {
            ln1_xhat,
            ln1_inv_std,
            a_norm,
            q,
            k,
            v,
            attn,
            ctx,
            attn_drop,
            x_mid,
            ln2_xhat,
            ln2_inv_std,
            b_norm,
            ff_pre,
            ff_act,
            ff_drop,
            x_out,
        }
    }
}

/// Cached activations of one block forward pass; consumed by backward.
#[derive(Debug, Clone)]
pub struct BlockTrace<T> {
    pub ln1_xhat: Matrix<T>,
    pub ln1_inv_std: Vec<T>,
    pub a_norm: Matrix<T>,
    pub q: Matrix<T>,
    pub k: Matrix<T>,
    pub v: Matrix<T>,
    /// Per-head attention probabilities over the real prefix (len x len).
    pub attn: Vec<Matrix<T>>,
    pub ctx: Matrix<T>,
    pub attn_drop: Option<Matrix<T>>,
    pub x_mid: Matrix<T>,
    pub ln2_xhat: Matrix<T>,
    pub ln2_inv_std: Vec<T>,
    pub b_norm: Matrix<T>,
    pub ff_pre: Matrix<T>,
    pub ff_act: Matrix<T>,
    pub ff_drop: Option<Matrix<T>>,
    pub x_out: Matrix<T>,
}

/// One full forward pass. Holding a trace is the precondition for calling
/// [`EncoderParams::backward`], so a backward without a forward cannot be
/// expressed.
#[derive(Debug, Clone)]
pub struct EncodeTrace<T> {
    /// Ids of the real-token prefix.
    pub ids: Vec<usize>,
    pub len: usize,
    pub x0: Matrix<T>,
    pub blocks: Vec<BlockTrace<T>>,
    pub pooled: Vec<T>,
}

impl<T: Float> EncodeTrace<T> {
    pub fn x_final(&self) -> &Matrix<T> {
        self.blocks.last().map_or(&self.x0, |b| &b.x_out)
    }
}

/// Sum of the first `len` rows divided by `max(1, len)`; all-masked input
/// yields the zero vector.
pub fn mean_pool<T: Float>(x: &Matrix<T>, len: usize) -> Vec<T> {
    let mut pooled = vec![T::zero(); x.cols];
    for i in 0..len {
        axpy(&mut pooled, T::one(), x.row(i));
    }
    let denom = scalar::<T>(len.max(1) as f64);
    for p in &mut pooled {
        *p = *p / denom;
    }
    pooled
}

/// Row-wise layer norm over the real prefix with biased variance and
/// [`LN_EPS`]; returns (output, normalized input, per-row 1/std) so backward
/// can avoid recomputing statistics. PAD rows stay zero.
fn layer_norm<T: Float>(
    x: &Matrix<T>,
    len: usize,
    gamma: &Matrix<T>,
    beta: &Matrix<T>,
) -> (Matrix<T>, Matrix<T>, Vec<T>) {
    let d = x.cols;
    let inv_d = scalar::<T>(1.0 / d as f64);
    let eps = scalar::<T>(LN_EPS);
    let mut y = Matrix::zeros(x.rows, d);
    let mut xhat = Matrix::zeros(x.rows, d);
    let mut inv_std = vec![T::zero(); len];
    for (i, slot) in inv_std.iter_mut().enumerate() {
        let row = x.row(i);
        let mut mean = T::zero();
        for &xi in row {
            mean = mean + xi;
        }
        mean = mean * inv_d;
        let mut var = T::zero();
        for &xi in row {
            let c = xi - mean;
            var = var + c * c;
        }
        var = var * inv_d;
        let inv = (var + eps).sqrt().recip();
        *slot = inv;
        let xhat_row = xhat.row_mut(i);
        let y_row = y.row_mut(i);
        for j in 0..d {
            let n = (row[j] - mean) * inv;
            xhat_row[j] = n;
            y_row[j] = gamma.at(0, j) * n + beta.at(0, j);
        }
    }
    (y, xhat, inv_std)
}

/// Inverted-dropout scale mask: entries are 0 with probability `p`, else
/// 1/(1-p). Only the real prefix is sampled, in fixed row-major order.
fn dropout_mask<T: Float>(
    rows: usize,
    cols: usize,
    len: usize,
    p: f64,
    rng: &mut ChaCha8Rng,
) -> Matrix<T> {
    let keep = scalar::<T>(1.0 / (1.0 - p));
    let mut mask = Matrix::zeros(rows, cols);
    for i in 0..len {
        for slot in mask.row_mut(i) {
            *slot = if rng.gen::<f64>() < p { T::zero() } else { keep };
        }
    }
    mask
}

fn apply_dropout<T: Float>(x: &mut Matrix<T>, mask: &Matrix<T>, len: usize) {
    for i in 0..len {
        for (xi, &m) in x.row_mut(i).iter_mut().zip(mask.row(i)) {
            *xi = *xi * m;
        }
    }
}
