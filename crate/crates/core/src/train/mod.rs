//! Binary cross-entropy training of the full scoring model: Adam with
//! decoupled weight decay, linear learning-rate warmup over the first 10% of
//! steps followed by linear decay to zero, seeded shuffling, mini-batches
//! with fixed-order gradient reduction, and per-epoch validation-NDCG@5
//! checkpoint selection.
//!
//! Determinism: a fixed seed fixes the shuffle order and gives every
//! (step, example) its own dropout stream, and per-example gradients are
//! summed in batch order, so parameter trajectories are bitwise reproducible
//! at any thread count.

use crate::catalog::{Catalog, FieldedDocument, LabeledPair};
use crate::eval::{evaluate_run, group_pairs, Metric};
use crate::matrix::{axpy, scalar, Matrix};
use crate::smm::{FeatureAblation, Model};
use crate::text::Vocab;
use crate::{Error, Result};
use num_traits::Float;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Probabilities are clamped to `[BCE_CLAMP, 1 - BCE_CLAMP]` inside the loss.
pub const BCE_CLAMP: f64 = 1e-7;

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub base_lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Fraction of total steps spent warming up; the remainder decays.
    pub warmup_fraction: f64,
    /// Decoupled weight decay, applied multiplicatively with the current lr.
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            base_lr: 1e-4,
            batch_size: 16,
            epochs: 5,
            warmup_fraction: 0.10,
            weight_decay: 0.01,
            seed: 42,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.base_lr.is_finite() && self.base_lr > 0.0) {
            return Err(Error::InvalidInput(format!(
                "base_lr {} must be positive",
                self.base_lr
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidInput("batch_size must be >= 1".into()));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidInput("epochs must be >= 1".into()));
        }
        if !(self.warmup_fraction > 0.0 && self.warmup_fraction < 1.0) {
            return Err(Error::InvalidInput(format!(
                "warmup_fraction {} outside (0, 1)",
                self.warmup_fraction
            )));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "weight_decay {} must be >= 0",
                self.weight_decay
            )));
        }
        Ok(())
    }
}

/// `-(y ln s + (1-y) ln(1-s))` with `s` clamped away from 0 and 1.
pub fn bce_loss(prob: f64, label: u8) -> f64 {
    let s = prob.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
    if label == 1 {
        -s.ln()
    } else {
        -(1.0 - s).ln()
    }
}

/// Learning rate at `step` of `total_steps`: linear ramp to `base_lr` over
/// the first `ceil(warmup_fraction * total)` steps, then linear decay to 0.
pub fn lr_at(step: usize, total_steps: usize, cfg: &TrainConfig) -> Result<f64> {
    if total_steps == 0 {
        return Err(Error::InvalidInput("total_steps must be >= 1".into()));
    }
    if step > total_steps {
        return Err(Error::InvalidInput(format!(
            "step {step} beyond total_steps {total_steps}"
        )));
    }
    let warmup = (cfg.warmup_fraction * total_steps as f64).ceil() as usize;
    if step <= warmup {
        Ok(cfg.base_lr * step as f64 / warmup as f64)
    } else {
        Ok(cfg.base_lr * (total_steps - step) as f64 / (total_steps - warmup) as f64)
    }
}

/// Adam moment accumulators, one pair per model tensor in declaration order.
#[derive(Debug, Clone)]
pub struct OptimizerState<T> {
    m: Vec<Matrix<T>>,
    v: Vec<Matrix<T>>,
    pub step: usize,
}

impl<T: Float> OptimizerState<T> {
    pub fn new(model: &Model<T>) -> Self {
        let shapes: Vec<(usize, usize)> = model
            .tensors()
            .iter()
            .map(|(_, t)| (t.rows, t.cols))
            .collect();
        Self {
            m: shapes.iter().map(|&(r, c)| Matrix::zeros(r, c)).collect(),
            v: shapes.iter().map(|&(r, c)| Matrix::zeros(r, c)).collect(),
            step: 0,
        }
    }
}

/// One bias-corrected Adam update with decoupled weight decay; rejects
/// non-finite gradients naming the offending tensor.
pub fn adam_step<T: Float>(
    model: &mut Model<T>,
    grads: &Model<T>,
    state: &mut OptimizerState<T>,
    lr: f64,
    weight_decay: f64,
) -> Result<()> {
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - ADAM_BETA1.powi(t);
    let bc2 = 1.0 - ADAM_BETA2.powi(t);
    let mut params = model.tensors_mut();
    let grad_tensors = grads.tensors();
    for (i, ((name, param), (_, grad))) in params.iter_mut().zip(grad_tensors.iter()).enumerate() {
        if !grad.is_finite() {
            return Err(Error::NonFiniteGradient {
                tensor: name.clone(),
            });
        }
        adam_update_tensor(
            param,
            grad,
            &mut state.m[i],
            &mut state.v[i],
            bc1,
            bc2,
            lr,
            weight_decay,
        );
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn adam_update_tensor<T: Float>(
    param: &mut Matrix<T>,
    grad: &Matrix<T>,
    m: &mut Matrix<T>,
    v: &mut Matrix<T>,
    bc1: f64,
    bc2: f64,
    lr: f64,
    weight_decay: f64,
) {
    let b1 = scalar::<T>(ADAM_BETA1);
    let b2 = scalar::<T>(ADAM_BETA2);
    let one_m_b1 = scalar::<T>(1.0 - ADAM_BETA1);
    let one_m_b2 = scalar::<T>(1.0 - ADAM_BETA2);
    let inv_bc1 = scalar::<T>(1.0 / bc1);
    let inv_bc2 = scalar::<T>(1.0 / bc2);
    let eps = scalar::<T>(ADAM_EPS);
    let lr_t = scalar::<T>(lr);
    let decay = scalar::<T>(lr * weight_decay);
    for idx in 0..param.data.len() {
        let g = grad.data[idx];
        let mi = b1 * m.data[idx] + one_m_b1 * g;
        let vi = b2 * v.data[idx] + one_m_b2 * g * g;
        m.data[idx] = mi;
        v.data[idx] = vi;
        let m_hat = mi * inv_bc1;
        let v_hat = vi * inv_bc2;
        let p = param.data[idx];
        param.data[idx] = p - lr_t * m_hat / (v_hat.sqrt() + eps) - decay * p;
    }
}

/// One training-log line: `step \t lr \t loss`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub lr: f64,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean validation NDCG@5, absent when no validation query is evaluable.
    pub val_ndcg5: Option<f64>,
    /// Whether this epoch's parameters became the retained checkpoint.
    pub best: bool,
}

#[derive(Debug, Clone, Default)]
pub struct FitReport {
    pub steps: Vec<StepRecord>,
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
    /// Set when validation was empty or had no query with >= 2 candidates;
    /// the final (last-epoch) parameters are retained in that case.
    pub validation_missing: bool,
}

/// Per-example dropout stream derived from (master seed, global step,
/// example index) so batch parallelism cannot perturb sampling.
fn dropout_rng(seed: u64, step: usize, example: usize) -> ChaCha8Rng {
    let mut bytes = [0u8; 32];
    bytes[0..8].copy_from_slice(&seed.to_le_bytes());
    bytes[8..16].copy_from_slice(&(step as u64).to_le_bytes());
    bytes[16..24].copy_from_slice(&(example as u64).to_le_bytes());
    ChaCha8Rng::from_seed(bytes)
}

/// Trains `model` in place and returns the step/epoch history. The model
/// ends at the parameters of the best-validation epoch (last epoch when no
/// validation is available).
pub fn fit<T: Float + Send + Sync>(
    model: &mut Model<T>,
    train: &[LabeledPair],
    validation: &[LabeledPair],
    catalog: &Catalog,
    vocab: &Vocab,
    cfg: &TrainConfig,
) -> Result<FitReport> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::InvalidInput("training set is empty".into()));
    }
    let docs: Vec<&FieldedDocument> = train
        .iter()
        .map(|p| {
            catalog
                .get(&p.doc_id)
                .ok_or_else(|| Error::UnknownDoc(p.doc_id.clone()))
        })
        .collect::<Result<_>>()?;
    let val_groups = group_pairs(validation);
    let val_evaluable = val_groups.iter().any(|g| g.docs.len() >= 2);

    let steps_per_epoch = train.len().div_ceil(cfg.batch_size);
    let total_steps = cfg.epochs * steps_per_epoch;
    let mut state = OptimizerState::new(model);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut report = FitReport {
        validation_missing: !val_evaluable,
        ..FitReport::default()
    };
    let mut best: Option<(f64, Model<T>)> = None;
    let mut step = 0usize;

    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut shuffle_rng);
        for chunk in order.chunks(cfg.batch_size) {
            step += 1;
            let lr = lr_at(step, total_steps, cfg)?;
            let results: Vec<(Model<T>, f64)> = chunk
                .par_iter()
                .map(|&i| {
                    let pair = &train[i];
                    let mut rng = dropout_rng(cfg.seed, step, i);
                    let trace = model.forward_pair(
                        &pair.query,
                        docs[i],
                        vocab,
                        FeatureAblation::None,
                        Some(&mut rng),
                    )?;
                    let prob = trace.prob();
                    let loss = bce_loss(prob.to_f64().unwrap_or(f64::NAN), pair.label);
                    let d_logit = prob - scalar::<T>(pair.label as f64);
                    let mut grads = model.zeros_like();
                    model.backward_pair(&trace, d_logit, &mut grads);
                    Ok((grads, loss))
                })
                .collect::<Result<_>>()?;

            // Reduce in batch order so summation is schedule-independent.
            let mut grads = model.zeros_like();
            let mut loss_sum = 0.0;
            let inv_batch = scalar::<T>(1.0 / chunk.len() as f64);
            for (g, loss) in &results {
                loss_sum += loss;
                for ((_, acc), (_, src)) in grads.tensors_mut().iter_mut().zip(g.tensors()) {
                    axpy(&mut acc.data, inv_batch, &src.data);
                }
            }
            adam_step(model, &grads, &mut state, lr, cfg.weight_decay)?;
            report.steps.push(StepRecord {
                step,
                lr,
                loss: loss_sum / chunk.len() as f64,
            });
        }

        if val_evaluable {
            let val = validation_ndcg5(model, &val_groups, catalog, vocab)?;
            let improved = best.as_ref().is_none_or(|(b, _)| val > *b);
            if improved {
                best = Some((val, model.clone()));
                report.best_epoch = Some(epoch);
            }
            report.epochs.push(EpochRecord {
                epoch,
                val_ndcg5: Some(val),
                best: improved,
            });
        } else {
            report.epochs.push(EpochRecord {
                epoch,
                val_ndcg5: None,
                best: false,
            });
        }
    }

    if let Some((_, best_model)) = best {
        *model = best_model;
    }
    Ok(report)
}

/// Mean NDCG@5 of eval-mode model scores over the given groups.
pub fn validation_ndcg5<T: Float + Send + Sync>(
    model: &Model<T>,
    groups: &[crate::eval::QueryGroup],
    catalog: &Catalog,
    vocab: &Vocab,
) -> Result<f64> {
    let report = evaluate_run(
        |group| {
            group
                .docs
                .iter()
                .map(|doc_id| {
                    let doc = catalog
                        .get(doc_id)
                        .ok_or_else(|| Error::UnknownDoc(doc_id.clone()))?;
                    let s = model.score(&group.query, doc, vocab)?;
                    Ok(s.to_f64().unwrap_or(f64::NAN))
                })
                .collect()
        },
        groups,
        &[5],
    )?;
    report
        .mean(Metric::NdcgAt(5))
        .ok_or_else(|| Error::InvalidInput("NDCG@5 missing from metric set".into()))
}
