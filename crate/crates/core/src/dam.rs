//! Domain adaptation model: a feature mapper shared by a pseudo-label
//! classifier and a source/target discriminator behind a gradient-reversal
//! gate.
//!
//! Gradient routing is the same for both losses. The classifier and mapper
//! receive the gradient of the returned total loss; the discriminator
//! receives the gradient of its own (positive) domain term, so one descent
//! step on every subnet plays the minmax game.

use ndarray::{Array1, Array2, ArrayView2};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::clustering::{DomainSplit, SOURCE, TARGET};
use crate::data::EmbeddingDataset;
use crate::error::{Error, Result};
use crate::neural::{
    softmax, softmax_ce, Activation, Mlp, MlpGrads, ReversalGate, Sgd, Standardizer,
};
use crate::seeded_rng;

pub const MAPPER_HIDDEN: usize = 64;
pub const FEATURE_DIM: usize = 32;
pub const DISCRIMINATOR_HIDDEN: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DamMode {
    Ordinary,
    Partial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DamTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub momentum: f64,
    pub lambda: f64,
    pub mode: DamMode,
    /// Recompute class weights at the start of every epoch.
    pub weight_refresh: bool,
    /// `false` drops the discriminator entirely (plain supervised training).
    pub adversarial: bool,
    /// Set from the pipeline seed, not read from config files.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for DamTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 32,
            lr: 0.05,
            momentum: 0.9,
            lambda: 1.0,
            mode: DamMode::Partial,
            weight_refresh: true,
            adversarial: true,
            seed: 0,
        }
    }
}

impl DamTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config(
                "DAM epochs and batch_size must be >= 1".into(),
            ));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::Config("DAM learning rate must be > 0".into()));
        }
        if !(self.momentum.is_finite() && (0.0..1.0).contains(&self.momentum)) {
            return Err(Error::Config("DAM momentum must lie in [0, 1)".into()));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::Config("lambda must be finite and >= 0".into()));
        }
        Ok(())
    }
}

/// Class weights averaged from target predictions, raw and max-normalised.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassWeights {
    pub raw: Vec<f64>,
    pub normalized: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DamNetwork {
    /// Fixed transform applied to raw embeddings before the mapper.
    pub input: Standardizer,
    pub mapper: Mlp,
    pub classifier: Mlp,
    pub discriminator: Mlp,
    pub gate: ReversalGate,
    /// Weights last used for the partial loss; `None` in ordinary mode.
    pub class_weights: Option<ClassWeights>,
}

fn relu_output(mut net: Mlp) -> Mlp {
    if let Some(last) = net.layers_mut().last_mut() {
        last.activation = Activation::Relu;
    }
    net
}

impl DamNetwork {
    /// `in_dim → 64 → 32` mapper, `32 → classes` classifier and
    /// `32 → 16 → 2` discriminator, initialised in that order from `seed`.
    pub fn new(in_dim: usize, classes: usize, lambda: f64, seed: u64) -> Self {
        let mut rng = seeded_rng(seed, 5);
        let mapper = relu_output(Mlp::new(&[in_dim, MAPPER_HIDDEN, FEATURE_DIM], &mut rng));
        let classifier = Mlp::new(&[FEATURE_DIM, classes], &mut rng);
        let discriminator = Mlp::new(&[FEATURE_DIM, DISCRIMINATOR_HIDDEN, 2], &mut rng);
        Self {
            input: Standardizer::identity(in_dim),
            mapper,
            classifier,
            discriminator,
            gate: ReversalGate::new(lambda),
            class_weights: None,
        }
    }

    pub fn num_classes(&self) -> usize {
        self.classifier.out_dim()
    }

    /// Softmax of `C(M(x))`.
    pub fn predict_proba(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let features = self.mapper.forward(self.input.apply(x)?.view())?;
        Ok(softmax(self.classifier.forward(features.view())?.view()))
    }

    /// Same function with the input transform absorbed into the mapper.
    pub fn folded(&self) -> Self {
        Self {
            input: Standardizer::identity(self.input.dim()),
            mapper: self.input.fold_into(&self.mapper),
            ..self.clone()
        }
    }
}

/// Samples with per-row class ids (pseudo-labels or domain flags).
#[derive(Debug, Clone, Copy)]
pub struct LabeledBatch<'a> {
    pub x: ArrayView2<'a, f64>,
    pub labels: &'a [usize],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DamLoss {
    /// `cls - lambda * dom`.
    pub total: f64,
    pub classification: f64,
    pub domain: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DamGrads {
    /// d total / d mapper parameters (discriminator path reversed by the gate).
    pub mapper: MlpGrads,
    /// d total / d classifier parameters.
    pub classifier: MlpGrads,
    /// d domain / d discriminator parameters.
    pub discriminator: MlpGrads,
}

struct DomainPass {
    loss: f64,
    grads: MlpGrads,
    /// Gradient reaching the mapper features, already reversed.
    feature_grad: Array2<f64>,
}

fn discriminator_pass(
    net: &DamNetwork,
    features: ArrayView2<'_, f64>,
    flags: &[usize],
    weights: Option<&[f64]>,
) -> Result<DomainPass> {
    let gated = net.gate.forward(features);
    let (logits, tape) = net.discriminator.forward_taped(gated)?;
    let (loss, g) = softmax_ce(logits.view(), flags, weights)?;
    let (grads, feature_grad) = tape.backward(&net.discriminator, g.view());
    Ok(DomainPass {
        loss,
        grads,
        feature_grad: net.gate.backward(feature_grad.view()),
    })
}

fn check_labels(labels: &[usize], classes: usize) -> Result<()> {
    match labels.iter().find(|&&l| l >= classes) {
        Some(&label) => Err(Error::LabelOutOfRange { label, classes }),
        None => Ok(()),
    }
}

fn check_flags(flags: &[usize]) -> Result<()> {
    match flags.iter().find(|&&l| l > TARGET) {
        Some(&label) => Err(Error::LabelOutOfRange { label, classes: 2 }),
        None => Ok(()),
    }
}

/// Classification term alone, optionally weighted per sample; the
/// discriminator receives zero gradients.
fn loss_supervised(
    net: &DamNetwork,
    source: LabeledBatch<'_>,
    weights: Option<&[f64]>,
) -> Result<(DamLoss, DamGrads)> {
    check_labels(source.labels, net.num_classes())?;
    let xs = net.input.apply(source.x)?;
    let (features, mapper_tape) = net.mapper.forward_taped(xs.view())?;
    let (logits, cls_tape) = net.classifier.forward_taped(features.view())?;
    let (cls_loss, g) = softmax_ce(logits.view(), source.labels, weights)?;
    let (classifier, feature_grad) = cls_tape.backward(&net.classifier, g.view());
    let (mapper, _) = mapper_tape.backward(&net.mapper, feature_grad.view());
    Ok((
        DamLoss {
            total: cls_loss,
            classification: cls_loss,
            domain: 0.0,
        },
        DamGrads {
            mapper,
            classifier,
            discriminator: net.discriminator.zero_grads(),
        },
    ))
}

/// Mean source cross-entropy minus `lambda` times the mean domain
/// cross-entropy over `all`.
pub fn loss_ordinary(
    net: &DamNetwork,
    source: LabeledBatch<'_>,
    all: LabeledBatch<'_>,
) -> Result<(DamLoss, DamGrads)> {
    check_labels(source.labels, net.num_classes())?;
    check_flags(all.labels)?;
    let lambda = net.gate.lambda;

    let xs = net.input.apply(source.x)?;
    let (features, mapper_tape) = net.mapper.forward_taped(xs.view())?;
    let (logits, cls_tape) = net.classifier.forward_taped(features.view())?;
    let (cls_loss, g) = softmax_ce(logits.view(), source.labels, None)?;
    let (classifier, feature_grad) = cls_tape.backward(&net.classifier, g.view());
    let (mut mapper, _) = mapper_tape.backward(&net.mapper, feature_grad.view());

    let mut discriminator = net.discriminator.zero_grads();
    let mut dom_loss = 0.0;
    if all.x.nrows() > 0 {
        let xa = net.input.apply(all.x)?;
        let (features, mapper_tape) = net.mapper.forward_taped(xa.view())?;
        let pass = discriminator_pass(net, features.view(), all.labels, None)?;
        let (reversed, _) = mapper_tape.backward(&net.mapper, pass.feature_grad.view());
        mapper.add_assign(&reversed);
        discriminator = pass.grads;
        dom_loss = pass.loss;
    }
    Ok((
        DamLoss {
            total: cls_loss - lambda * dom_loss,
            classification: cls_loss,
            domain: dom_loss,
        },
        DamGrads {
            mapper,
            classifier,
            discriminator,
        },
    ))
}

/// Class-weighted source terms plus the unweighted target domain term:
/// `mean(v_y * Lc) - lambda * mean(v_y * Lg_source) - lambda * mean(Lg_target)`.
/// An empty target batch drops the last term.
pub fn loss_partial(
    net: &DamNetwork,
    source: LabeledBatch<'_>,
    target: ArrayView2<'_, f64>,
    v_norm: &[f64],
) -> Result<(DamLoss, DamGrads)> {
    let classes = net.num_classes();
    if v_norm.len() != classes {
        return Err(Error::Dimension {
            expected: classes,
            actual: v_norm.len(),
        });
    }
    check_labels(source.labels, classes)?;
    let lambda = net.gate.lambda;
    let weights: Vec<f64> = source.labels.iter().map(|&y| v_norm[y]).collect();

    let xs = net.input.apply(source.x)?;
    let (features, mapper_tape) = net.mapper.forward_taped(xs.view())?;
    let (logits, cls_tape) = net.classifier.forward_taped(features.view())?;
    let (cls_loss, g) = softmax_ce(logits.view(), source.labels, Some(&weights))?;
    let (classifier, mut feature_grad) = cls_tape.backward(&net.classifier, g.view());

    let source_flags = vec![SOURCE; source.x.nrows()];
    let src_pass = discriminator_pass(net, features.view(), &source_flags, Some(&weights))?;
    feature_grad += &src_pass.feature_grad;
    let (mut mapper, _) = mapper_tape.backward(&net.mapper, feature_grad.view());
    let mut discriminator = src_pass.grads;
    let mut dom_loss = src_pass.loss;

    if target.nrows() > 0 {
        let xt = net.input.apply(target)?;
        let (features, mapper_tape) = net.mapper.forward_taped(xt.view())?;
        let flags = vec![TARGET; target.nrows()];
        let pass = discriminator_pass(net, features.view(), &flags, None)?;
        let (reversed, _) = mapper_tape.backward(&net.mapper, pass.feature_grad.view());
        mapper.add_assign(&reversed);
        discriminator.add_assign(&pass.grads);
        dom_loss += pass.loss;
    }
    Ok((
        DamLoss {
            total: cls_loss - lambda * dom_loss,
            classification: cls_loss,
            domain: dom_loss,
        },
        DamGrads {
            mapper,
            classifier,
            discriminator,
        },
    ))
}

/// Mean predicted class distribution over the target samples, and the same
/// vector divided by its maximum.
pub fn class_weights(net: &DamNetwork, target: ArrayView2<'_, f64>) -> Result<ClassWeights> {
    if target.nrows() == 0 {
        return Err(Error::Dataset(
            "class weights need at least one target sample".into(),
        ));
    }
    let probs = net.predict_proba(target)?;
    let raw: Array1<f64> = probs.sum_axis(ndarray::Axis(0)) / target.nrows() as f64;
    Ok(weights_from_raw(raw.to_vec()))
}

pub(crate) fn weights_from_raw(raw: Vec<f64>) -> ClassWeights {
    let max = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let normalized = raw.iter().map(|v| v / max).collect();
    ClassWeights { raw, normalized }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochTrace {
    pub epoch: usize,
    pub loss_cls: f64,
    pub loss_dom: f64,
    pub v_min: f64,
    pub v_max: f64,
}

#[derive(Debug, Clone)]
pub struct TrainedDam {
    pub network: DamNetwork,
    pub trace: Vec<EpochTrace>,
}

fn non_finite(epoch: usize, batch: usize) -> Error {
    Error::NonFinite {
        context: format!("DAM loss at epoch {epoch} batch {batch}"),
    }
}

/// Minibatch SGD over the split. Source samples are trained against their
/// cluster ids; every step pairs a source batch with an equally sized target
/// batch drawn cyclically from a per-epoch shuffle.
pub fn train_dam(
    ds: &EmbeddingDataset,
    split: &DomainSplit,
    cfg: &DamTrainConfig,
) -> Result<TrainedDam> {
    cfg.validate()?;
    let classes = split.clusters.len();
    let mut source = split.source();
    let mut target: Vec<usize> = split.target().into_iter().map(|(i, _)| i).collect();
    if source.is_empty() {
        return Err(Error::Dataset("domain split has no source samples".into()));
    }

    let mut net = DamNetwork::new(ds.dim(), classes, cfg.lambda, cfg.seed);
    net.input = Standardizer::fit(ds.features());
    let mut opt_m = Sgd::new(cfg.lr, cfg.momentum);
    let mut opt_c = Sgd::new(cfg.lr, cfg.momentum);
    let mut opt_g = Sgd::new(cfg.lr, cfg.momentum);
    let mut rng = seeded_rng(cfg.seed, 6);
    let target_features = ds.rows(&target);
    let mut trace = Vec::with_capacity(cfg.epochs);
    let ones = vec![1.0; classes];

    for epoch in 0..cfg.epochs {
        let v_norm = match cfg.mode {
            DamMode::Ordinary => ones.clone(),
            DamMode::Partial => {
                if target.is_empty() {
                    net.class_weights = Some(weights_from_raw(vec![1.0 / classes as f64; classes]));
                } else if epoch == 0 || cfg.weight_refresh {
                    net.class_weights = Some(class_weights(&net, target_features.view())?);
                }
                net.class_weights
                    .as_ref()
                    .expect("set above")
                    .normalized
                    .clone()
            }
        };

        source.shuffle(&mut rng);
        target.shuffle(&mut rng);
        let mut target_cursor = 0;
        let (mut sum_cls, mut sum_dom, mut batches) = (0.0, 0.0, 0usize);

        for (b, chunk) in source.chunks(cfg.batch_size).enumerate() {
            let idx: Vec<usize> = chunk.iter().map(|p| p.0).collect();
            let labels: Vec<usize> = chunk.iter().map(|p| p.1).collect();
            let xs = ds.rows(&idx);
            let mut tgt = Vec::with_capacity(chunk.len());
            if !target.is_empty() {
                for _ in 0..chunk.len() {
                    tgt.push(target[target_cursor % target.len()]);
                    target_cursor += 1;
                }
            }
            let src_batch = LabeledBatch {
                x: xs.view(),
                labels: &labels,
            };

            let (loss, grads) = if !cfg.adversarial {
                let weights: Option<Vec<f64>> = (cfg.mode == DamMode::Partial)
                    .then(|| labels.iter().map(|&y| v_norm[y]).collect());
                loss_supervised(&net, src_batch, weights.as_deref())?
            } else {
                match cfg.mode {
                    DamMode::Ordinary => {
                        let mut all_idx = idx.clone();
                        all_idx.extend_from_slice(&tgt);
                        let mut flags = vec![SOURCE; idx.len()];
                        flags.resize(all_idx.len(), TARGET);
                        let xa = ds.rows(&all_idx);
                        loss_ordinary(
                            &net,
                            src_batch,
                            LabeledBatch {
                                x: xa.view(),
                                labels: &flags,
                            },
                        )?
                    }
                    DamMode::Partial => {
                        let xt = ds.rows(&tgt);
                        loss_partial(&net, src_batch, xt.view(), &v_norm)?
                    }
                }
            };
            if !loss.total.is_finite() {
                return Err(non_finite(epoch, b));
            }
            let step = |e: Error| match e {
                Error::NonFinite { context } => Error::NonFinite {
                    context: format!("{context} at epoch {epoch} batch {b}"),
                },
                other => other,
            };
            opt_m
                .step(&mut net.mapper, &grads.mapper, "mapper")
                .map_err(step)?;
            opt_c
                .step(&mut net.classifier, &grads.classifier, "classifier")
                .map_err(step)?;
            if cfg.adversarial {
                opt_g
                    .step(
                        &mut net.discriminator,
                        &grads.discriminator,
                        "discriminator",
                    )
                    .map_err(step)?;
            }
            sum_cls += loss.classification;
            sum_dom += loss.domain;
            batches += 1;
        }
        let (v_min, v_max) = v_norm
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        trace.push(EpochTrace {
            epoch,
            loss_cls: sum_cls / batches as f64,
            loss_dom: sum_dom / batches as f64,
            v_min,
            v_max,
        });
    }
    if cfg.mode == DamMode::Ordinary {
        net.class_weights = None;
    }
    Ok(TrainedDam {
        network: net,
        trace,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfidentPrediction {
    pub index: usize,
    pub label: usize,
    pub probability: f64,
}

/// Predictions whose top softmax probability is at least `1 - alpha`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidentSet {
    pub alpha: f64,
    pub members: Vec<ConfidentPrediction>,
}

impl ConfidentSet {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn indices(&self) -> Vec<usize> {
        self.members.iter().map(|m| m.index).collect()
    }
}

pub fn validate_alpha(alpha: f64) -> Result<()> {
    if alpha.is_finite() && (0.0..1.0).contains(&alpha) {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "confidence threshold must lie in [0, 1), got {alpha}"
        )))
    }
}

/// Filters softmax rows; `indices[r]` names the sample behind row `r`.
/// The argmax takes the lowest class on ties.
pub fn confident_from_probs(
    probs: ArrayView2<'_, f64>,
    indices: &[usize],
    alpha: f64,
) -> Result<ConfidentSet> {
    validate_alpha(alpha)?;
    let threshold = 1.0 - alpha;
    let members = probs
        .rows()
        .into_iter()
        .zip(indices)
        .filter_map(|(row, &index)| {
            let (label, &probability) =
                row.iter()
                    .enumerate()
                    .fold((0, &f64::NEG_INFINITY), |best, cur| {
                        if cur.1 > best.1 {
                            cur
                        } else {
                            best
                        }
                    });
            (probability >= threshold).then_some(ConfidentPrediction {
                index,
                label,
                probability,
            })
        })
        .collect();
    Ok(ConfidentSet { alpha, members })
}

/// Runs `C(M(x))` over the given samples and keeps confident predictions.
pub fn predict_confident(
    net: &DamNetwork,
    ds: &EmbeddingDataset,
    indices: &[usize],
    alpha: f64,
) -> Result<ConfidentSet> {
    validate_alpha(alpha)?;
    let probs = net.predict_proba(ds.rows(indices).view())?;
    confident_from_probs(probs.view(), indices, alpha)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn one_hot_prediction_weights() {
        let w = weights_from_raw(vec![1.0, 0.0, 0.0]);
        assert_eq!(w.normalized, vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn averaged_weights_two_samples() {
        let probs = array![[0.7, 0.3], [0.1, 0.9]];
        let raw = (probs.sum_axis(ndarray::Axis(0)) / 2.0).to_vec();
        let w = weights_from_raw(raw);
        assert!((w.raw[0] - 0.4).abs() < 1e-15 && (w.raw[1] - 0.6).abs() < 1e-15);
        assert!((w.normalized[0] - 0.4 / 0.6).abs() < 1e-15);
        assert_eq!(w.normalized[1], 1.0);
    }

    #[test]
    fn uniform_predictions_give_uniform_weights() {
        let mut net = DamNetwork::new(3, 4, 1.0, 0);
        for l in net.classifier.layers_mut() {
            l.weight.fill(0.0);
            l.bias.fill(0.0);
        }
        let x = Array2::from_elem((5, 3), 0.5);
        let w = class_weights(&net, x.view()).unwrap();
        for v in &w.raw {
            assert!((v - 0.25).abs() < 1e-15);
        }
        assert!(w.normalized.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn confident_boundary_cases() {
        let probs = array![[1.0, 0.0], [0.6, 0.4], [0.4, 0.6], [0.5, 0.5]];
        let s = confident_from_probs(probs.view(), &[10, 11, 12, 13], 1e-12).unwrap();
        assert_eq!(s.indices(), vec![10]);
        let s = confident_from_probs(probs.view(), &[10, 11, 12, 13], 0.5).unwrap();
        assert_eq!(s.indices(), vec![10, 11, 12, 13]);
        assert_eq!(s.members[1].label, 0);
        assert_eq!(s.members[2].label, 1);
        assert_eq!(s.members[3].label, 0);
        assert!(confident_from_probs(probs.view(), &[0; 4], 1.0).is_err());
    }

    #[test]
    fn flags_and_pseudo_labels_are_range_checked() {
        let net = DamNetwork::new(2, 2, 1.0, 0);
        let x = array![[0.0, 1.0]];
        let bad = LabeledBatch {
            x: x.view(),
            labels: &[2],
        };
        let ok = LabeledBatch {
            x: x.view(),
            labels: &[0],
        };
        assert!(loss_ordinary(&net, bad, ok).is_err());
        assert!(loss_ordinary(&net, ok, bad).is_err());
        assert!(loss_partial(&net, bad, x.view(), &[1.0, 1.0]).is_err());
        assert!(loss_partial(&net, ok, x.view(), &[1.0]).is_err());
    }
}
