//! Exact reverse-mode gradients for the encoder forward pass.
//!
//! Gradients accumulate (+=) into a caller-owned [`EncoderParams`] shaped by
//! `zeros_like`, so one gradient buffer can absorb several traces (the query
//! and every field of a pair share the same Siamese weights).

use super::{BlockParams, BlockTrace, EncodeTrace, EncoderParams};
use crate::matrix::{axpy, dot, matmul_at_into, matmul_bt_into, scalar, Matrix};
use num_traits::Float;

impl<T: Float> EncoderParams<T> {
    /// Accumulates d(loss)/d(parameters) into `grads` given d(loss)/d(pooled).
    pub fn backward(&self, trace: &EncodeTrace<T>, d_pooled: &[T], grads: &mut EncoderParams<T>) {
        let d = self.config.d_model;
        debug_assert_eq!(d_pooled.len(), d);
        let len = trace.len;
        if len == 0 {
            return;
        }
        let l = trace.x0.rows;

        // pooled = mean of the first `len` rows of the final hidden states.
        let mut dx = Matrix::zeros(l, d);
        let inv_len = scalar::<T>(1.0 / len as f64);
        for i in 0..len {
            axpy(dx.row_mut(i), inv_len, d_pooled);
        }

        for li in (0..self.blocks.len()).rev() {
            dx = block_backward(
                &self.blocks[li],
                &trace.blocks[li],
                &dx,
                len,
                self.config.n_heads,
                &mut grads.blocks[li],
            );
        }

        for i in 0..len {
            axpy(grads.tok_emb.row_mut(trace.ids[i]), T::one(), dx.row(i));
            axpy(grads.pos_emb.row_mut(i), T::one(), dx.row(i));
        }
    }
}

fn block_backward<T: Float>(
    p: &BlockParams<T>,
    t: &BlockTrace<T>,
    dx_out: &Matrix<T>,
    len: usize,
    n_heads: usize,
    g: &mut BlockParams<T>,
) -> Matrix<T> {
    let d = p.wq.rows;
    let d_ff = p.w1.cols;
    let d_head = d / n_heads;
    let l = dx_out.rows;

    // x_out = x_mid + drop2(ff_out)
    let mut d_ff_out = prefix_clone(dx_out, len);
    if let Some(mask) = &t.ff_drop {
        hadamard(&mut d_ff_out, mask, len);
    }

    // ff_out = relu(b_norm*W1 + b1)*W2 + b2
    matmul_at_into(&mut g.w2, &t.ff_act, &d_ff_out, len);
    sum_rows(&mut g.b2, &d_ff_out, len);
    let mut d_ff_act = Matrix::zeros(l, d_ff);
    matmul_bt_into(&mut d_ff_act, &d_ff_out, &p.w2, len);
    let mut d_ff_pre = d_ff_act;
    for i in 0..len {
        for (slot, &pre) in d_ff_pre.row_mut(i).iter_mut().zip(t.ff_pre.row(i)) {
            if pre <= T::zero() {
                *slot = T::zero();
            }
        }
    }
    matmul_at_into(&mut g.w1, &t.b_norm, &d_ff_pre, len);
    sum_rows(&mut g.b1, &d_ff_pre, len);
    let mut d_b_norm = Matrix::zeros(l, d);
    matmul_bt_into(&mut d_b_norm, &d_ff_pre, &p.w1, len);

    // b_norm = LN2(x_mid); x_mid also feeds the residual to x_out.
    let mut dx_mid = prefix_clone(dx_out, len);
    layer_norm_backward(
        &d_b_norm,
        &t.ln2_xhat,
        &t.ln2_inv_std,
        &p.ln2_gamma,
        len,
        &mut g.ln2_gamma,
        &mut g.ln2_beta,
        &mut dx_mid,
    );

    // x_mid = x_in + drop1(attn_out)
    let mut d_attn_out = prefix_clone(&dx_mid, len);
    if let Some(mask) = &t.attn_drop {
        hadamard(&mut d_attn_out, mask, len);
    }

    // attn_out = ctx*Wo + bo
    matmul_at_into(&mut g.wo, &t.ctx, &d_attn_out, len);
    sum_rows(&mut g.bo, &d_attn_out, len);
    let mut d_ctx = Matrix::zeros(l, d);
    matmul_bt_into(&mut d_ctx, &d_attn_out, &p.wo, len);

    // Per head: ctx = softmax(q*k^T/sqrt(d_head)) * v over the real prefix.
    let scale = scalar::<T>(1.0 / (d_head as f64).sqrt());
    let mut d_q = Matrix::zeros(l, d);
    let mut d_k = Matrix::zeros(l, d);
    let mut d_v = Matrix::zeros(l, d);
    let mut dp = vec![T::zero(); len];
    for h in 0..n_heads {
        let hs = h * d_head;
        let he = hs + d_head;
        let probs = &t.attn[h];
        for i in 0..len {
            let d_ctx_i = &d_ctx.row(i)[hs..he];
            let p_row = probs.row(i);
            let mut dot_dp_p = T::zero();
            for j in 0..len {
                let dpj = dot(d_ctx_i, &t.v.row(j)[hs..he]);
                dp[j] = dpj;
                dot_dp_p = dot_dp_p + dpj * p_row[j];
                axpy(&mut d_v.row_mut(j)[hs..he], p_row[j], d_ctx_i);
            }
            for j in 0..len {
                // Softmax Jacobian row followed by the 1/sqrt(d_head) scale.
                let d_logit = p_row[j] * (dp[j] - dot_dp_p) * scale;
                axpy(&mut d_q.row_mut(i)[hs..he], d_logit, &t.k.row(j)[hs..he]);
                axpy(&mut d_k.row_mut(j)[hs..he], d_logit, &t.q.row(i)[hs..he]);
            }
        }
    }

    // q|k|v = a_norm * W + b, all three sharing the LN1 output.
    let mut d_a_norm = Matrix::zeros(l, d);
    matmul_at_into(&mut g.wq, &t.a_norm, &d_q, len);
    sum_rows(&mut g.bq, &d_q, len);
    matmul_bt_into(&mut d_a_norm, &d_q, &p.wq, len);
    matmul_at_into(&mut g.wk, &t.a_norm, &d_k, len);
    sum_rows(&mut g.bk, &d_k, len);
    matmul_bt_into(&mut d_a_norm, &d_k, &p.wk, len);
    matmul_at_into(&mut g.wv, &t.a_norm, &d_v, len);
    sum_rows(&mut g.bv, &d_v, len);
    matmul_bt_into(&mut d_a_norm, &d_v, &p.wv, len);

    // a_norm = LN1(x_in); x_in also feeds the residual to x_mid.
    let mut dx_in = prefix_clone(&dx_mid, len);
    layer_norm_backward(
        &d_a_norm,
        &t.ln1_xhat,
        &t.ln1_inv_std,
        &p.ln1_gamma,
        len,
        &mut g.ln1_gamma,
        &mut g.ln1_beta,
        &mut dx_in,
    );
    dx_in
}

/// dx for y = gamma .* xhat + beta with biased row variance:
/// dx = inv_std * (g - mean(g) - xhat * mean(g .* xhat)), g = dy .* gamma.
/// Accumulates into `dgamma`, `dbeta`, and (+=) into `dx`.
#[allow(clippy::too_many_arguments)]
fn layer_norm_backward<T: Float>(
    dy: &Matrix<T>,
    xhat: &Matrix<T>,
    inv_std: &[T],
    gamma: &Matrix<T>,
    len: usize,
    dgamma: &mut Matrix<T>,
    dbeta: &mut Matrix<T>,
    dx: &mut Matrix<T>,
) {
    let d = dy.cols;
    let inv_d = scalar::<T>(1.0 / d as f64);
    for (i, &istd) in inv_std.iter().enumerate().take(len) {
        let dy_row = dy.row(i);
        let xhat_row = xhat.row(i);
        let mut mean_g = T::zero();
        let mut mean_gx = T::zero();
        for j in 0..d {
            let gj = dy_row[j] * gamma.at(0, j);
            mean_g = mean_g + gj;
            mean_gx = mean_gx + gj * xhat_row[j];
        }
        mean_g = mean_g * inv_d;
        mean_gx = mean_gx * inv_d;
        let dgamma_row = dgamma.row_mut(0);
        let dbeta_row = dbeta.row_mut(0);
        let dx_row = dx.row_mut(i);
        for j in 0..d {
            dgamma_row[j] = dgamma_row[j] + dy_row[j] * xhat_row[j];
            dbeta_row[j] = dbeta_row[j] + dy_row[j];
            let gj = dy_row[j] * gamma.at(0, j);
            dx_row[j] = dx_row[j] + istd * (gj - mean_g - xhat_row[j] * mean_gx);
        }
    }
}

fn prefix_clone<T: Float>(src: &Matrix<T>, len: usize) -> Matrix<T> {
    let mut out = Matrix::zeros(src.rows, src.cols);
    for i in 0..len {
        out.row_mut(i).copy_from_slice(src.row(i));
    }
    out
}

fn hadamard<T: Float>(dst: &mut Matrix<T>, mask: &Matrix<T>, len: usize) {
    for i in 0..len {
        for (slot, &m) in dst.row_mut(i).iter_mut().zip(mask.row(i)) {
            *slot = *slot * m;
        }
    }
}

fn sum_rows<T: Float>(acc: &mut Matrix<T>, src: &Matrix<T>, len: usize) {
    for i in 0..len {
        axpy(acc.row_mut(0), T::one(), src.row(i));
    }
}
