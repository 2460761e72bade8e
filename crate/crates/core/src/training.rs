//! Local models and training: multinomial logistic regression or a
//! one-hidden-layer tanh MLP, minibatch SGD on cross-entropy, and
//! evaluation with per-class accuracy.
//!
//! Forward and backward passes run batched through ndarray's matrix
//! multiply. Softmax goes through log-sum-exp with max subtraction, so the
//! loss is finite for any finite parameters and every run is
//! bit-reproducible.

use std::collections::BTreeMap;

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::params::ModelParams;
use crate::seeding;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArchKind {
    /// Softmax regression: a single linear layer.
    SoftmaxLinear,
    /// One hidden tanh layer, then a linear readout.
    Mlp1,
}

/// Model architecture; `n_hidden` is ignored for `softmax_linear`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub kind: ArchKind,
    pub n_features: usize,
    pub n_hidden: usize,
    pub n_classes: usize,
}

impl Architecture {
    pub fn softmax_linear(n_features: usize, n_classes: usize) -> Self {
        Self {
            kind: ArchKind::SoftmaxLinear,
            n_features,
            n_hidden: 0,
            n_classes,
        }
    }

    pub fn mlp1(n_features: usize, n_hidden: usize, n_classes: usize) -> Self {
        Self {
            kind: ArchKind::Mlp1,
            n_features,
            n_hidden,
            n_classes,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_features == 0 || self.n_classes == 0 {
            return Err(Error::invalid("architecture: zero features or classes"));
        }
        if self.kind == ArchKind::Mlp1 && self.n_hidden == 0 {
            return Err(Error::invalid("architecture: mlp1 needs n_hidden > 0"));
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        match self.kind {
            ArchKind::SoftmaxLinear => self.n_features * self.n_classes + self.n_classes,
            ArchKind::Mlp1 => {
                self.n_features * self.n_hidden
                    + self.n_hidden
                    + self.n_hidden * self.n_classes
                    + self.n_classes
            }
        }
    }

    pub fn shape_id(&self) -> String {
        match self.kind {
            ArchKind::SoftmaxLinear => {
                format!("softmax_linear-{}x{}", self.n_features, self.n_classes)
            }
            ArchKind::Mlp1 => format!(
                "mlp1-{}x{}x{}",
                self.n_features, self.n_hidden, self.n_classes
            ),
        }
    }
}

/// Hyperparameters for one local training call.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub local_epochs: usize,
    pub seed: u64,
}

/// Accuracy report; classes with no samples are omitted from the map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub overall_accuracy: f64,
    pub per_class_accuracy: BTreeMap<usize, f64>,
    pub n_samples: usize,
}

/// Initialize weights per layer as Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)),
/// biases zero.
pub fn init_model(arch: &Architecture, seed: u64) -> Result<ModelParams> {
    arch.validate()?;
    let mut rng = seeding::rng(seed);
    let mut values = vec![0.0f64; arch.param_count()];
    {
        let mut fill = |range: std::ops::Range<usize>, fan_in: usize| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            for v in &mut values[range] {
                *v = rand::Rng::random_range(&mut rng, -bound..bound);
            }
        };
        match arch.kind {
            ArchKind::SoftmaxLinear => {
                fill(0..arch.n_features * arch.n_classes, arch.n_features);
            }
            ArchKind::Mlp1 => {
                let w1 = arch.n_features * arch.n_hidden;
                fill(0..w1, arch.n_features);
                let w2_start = w1 + arch.n_hidden;
                fill(w2_start..w2_start + arch.n_hidden * arch.n_classes, arch.n_hidden);
            }
        }
    }
    ModelParams::new(values, arch.shape_id())
}

/// Weight/bias slices of a flat parameter vector.
struct Layers<'a> {
    w1: ArrayView2<'a, f64>,
    b1: &'a [f64],
    w2: Option<ArrayView2<'a, f64>>,
    b2: &'a [f64],
}

fn split_layers<'a>(arch: &Architecture, values: &'a [f64]) -> Layers<'a> {
    match arch.kind {
        ArchKind::SoftmaxLinear => {
            let wlen = arch.n_features * arch.n_classes;
            Layers {
                w1: ArrayView2::from_shape((arch.n_features, arch.n_classes), &values[..wlen])
                    .expect("validated shape"),
                b1: &values[wlen..],
                w2: None,
                b2: &[],
            }
        }
        ArchKind::Mlp1 => {
            let w1len = arch.n_features * arch.n_hidden;
            let b1len = arch.n_hidden;
            let w2len = arch.n_hidden * arch.n_classes;
            let w1 = ArrayView2::from_shape((arch.n_features, arch.n_hidden), &values[..w1len])
                .expect("validated shape");
            let b1 = &values[w1len..w1len + b1len];
            let w2 = ArrayView2::from_shape(
                (arch.n_hidden, arch.n_classes),
                &values[w1len + b1len..w1len + b1len + w2len],
            )
            .expect("validated shape");
            let b2 = &values[w1len + b1len + w2len..];
            Layers {
                w1,
                b1,
                w2: Some(w2),
                b2,
            }
        }
    }
}

fn ensure_model_matches(arch: &Architecture, model: &ModelParams) -> Result<()> {
    if model.shape_id() != arch.shape_id() || model.len() != arch.param_count() {
        return Err(Error::ShapeMismatch {
            left: format!("{}[{}]", model.shape_id(), model.len()),
            right: format!("{}[{}]", arch.shape_id(), arch.param_count()),
        });
    }
    Ok(())
}

fn ensure_data_matches(arch: &Architecture, data: &Dataset) -> Result<()> {
    if data.n_features() != arch.n_features {
        return Err(Error::invalid(format!(
            "feature width {} does not match architecture width {}",
            data.n_features(),
            arch.n_features
        )));
    }
    if data.n_classes() != arch.n_classes {
        return Err(Error::invalid(format!(
            "dataset has {} classes, architecture expects {}",
            data.n_classes(),
            arch.n_classes
        )));
    }
    Ok(())
}

/// Forward pass on a batch; returns logits and, for mlp1, the hidden
/// activations needed for backprop.
fn forward(
    arch: &Architecture,
    layers: &Layers<'_>,
    x: &ArrayView2<'_, f64>,
) -> (Array2<f64>, Option<Array2<f64>>) {
    match arch.kind {
        ArchKind::SoftmaxLinear => {
            let mut logits = x.dot(&layers.w1);
            let b = Array1::from_iter(layers.b1.iter().copied());
            logits += &b;
            (logits, None)
        }
        ArchKind::Mlp1 => {
            let mut z1 = x.dot(&layers.w1);
            let b1 = Array1::from_iter(layers.b1.iter().copied());
            z1 += &b1;
            let h = z1.mapv(f64::tanh);
            let mut logits = h.dot(layers.w2.as_ref().expect("mlp1 has w2"));
            let b2 = Array1::from_iter(layers.b2.iter().copied());
            logits += &b2;
            (logits, Some(h))
        }
    }
}

/// Row-wise softmax probabilities via log-sum-exp, plus the mean
/// cross-entropy against the given labels.
fn softmax_and_loss(logits: &Array2<f64>, labels: &[usize]) -> (Array2<f64>, f64) {
    let mut probs = logits.clone();
    let mut loss = 0.0;
    for (mut row, &label) in probs.rows_mut().into_iter().zip(labels) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        loss -= (row[label] / sum).ln();
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    (probs, loss / labels.len() as f64)
}

/// Mean cross-entropy loss and its gradient on one batch.
///
/// Exposed so the finite-difference check and single-step oracles can see
/// the exact quantities SGD uses.
pub fn loss_and_grad(
    model: &ModelParams,
    arch: &Architecture,
    x: &ArrayView2<'_, f64>,
    labels: &[usize],
) -> Result<(f64, Vec<f64>)> {
    ensure_model_matches(arch, model)?;
    if labels.is_empty() {
        return Err(Error::EmptyInput("loss_and_grad: batch"));
    }
    let layers = split_layers(arch, model.values());
    let (logits, hidden) = forward(arch, &layers, x);
    let (mut dz, loss) = softmax_and_loss(&logits, labels);
    let inv_b = 1.0 / labels.len() as f64;
    for (mut row, &label) in dz.rows_mut().into_iter().zip(labels) {
        row[label] -= 1.0;
        row.mapv_inplace(|v| v * inv_b);
    }

    let mut grad = vec![0.0f64; arch.param_count()];
    match arch.kind {
        ArchKind::SoftmaxLinear => {
            let gw = x.t().dot(&dz);
            let wlen = arch.n_features * arch.n_classes;
            grad[..wlen].copy_from_slice(gw.as_slice().expect("contiguous"));
            let gb = dz.sum_axis(Axis(0));
            grad[wlen..].copy_from_slice(gb.as_slice().expect("contiguous"));
        }
        ArchKind::Mlp1 => {
            let h = hidden.expect("mlp1 forward returns hidden");
            let w2 = layers.w2.expect("mlp1 has w2");
            let gw2 = h.t().dot(&dz);
            let gb2 = dz.sum_axis(Axis(0));
            let mut dz1 = dz.dot(&w2.t());
            dz1.zip_mut_with(&h, |d, &hv| *d *= 1.0 - hv * hv);
            let gw1 = x.t().dot(&dz1);
            let gb1 = dz1.sum_axis(Axis(0));

            let w1len = arch.n_features * arch.n_hidden;
            let b1len = arch.n_hidden;
            let w2len = arch.n_hidden * arch.n_classes;
            grad[..w1len].copy_from_slice(gw1.as_slice().expect("contiguous"));
            grad[w1len..w1len + b1len].copy_from_slice(gb1.as_slice().expect("contiguous"));
            grad[w1len + b1len..w1len + b1len + w2len]
                .copy_from_slice(gw2.as_slice().expect("contiguous"));
            grad[w1len + b1len + w2len..].copy_from_slice(gb2.as_slice().expect("contiguous"));
        }
    }
    Ok((loss, grad))
}

/// Mean cross-entropy loss on a batch (no gradient).
pub fn batch_loss(
    model: &ModelParams,
    arch: &Architecture,
    x: &ArrayView2<'_, f64>,
    labels: &[usize],
) -> Result<f64> {
    ensure_model_matches(arch, model)?;
    let layers = split_layers(arch, model.values());
    let (logits, _) = forward(arch, &layers, x);
    let (_, loss) = softmax_and_loss(&logits, labels);
    Ok(loss)
}

/// Minibatch SGD for `cfg.local_epochs` epochs; epoch shuffles are seeded
/// by `(cfg.seed, epoch)`. The input model is untouched.
pub fn local_train(
    start: &ModelParams,
    data: &Dataset,
    arch: &Architecture,
    cfg: &TrainConfig,
) -> Result<ModelParams> {
    ensure_model_matches(arch, start)?;
    ensure_data_matches(arch, data)?;
    if data.is_empty() {
        return Err(Error::EmptyInput("local_train: dataset"));
    }
    if cfg.batch_size == 0 {
        return Err(Error::invalid("local_train: batch_size must be positive"));
    }

    let mut model = start.clone();
    let n = data.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut batch_x = Array2::zeros((cfg.batch_size.min(n), arch.n_features));
    let mut batch_y = Vec::with_capacity(cfg.batch_size.min(n));

    for epoch in 0..cfg.local_epochs {
        order.shuffle(&mut seeding::rng(seeding::mix_u64(cfg.seed, epoch as u64)));
        for chunk in order.chunks(cfg.batch_size) {
            let b = chunk.len();
            batch_y.clear();
            for (row, &idx) in chunk.iter().enumerate() {
                batch_x.row_mut(row).assign(&data.features().row(idx));
                batch_y.push(data.labels()[idx]);
            }
            let x = batch_x.slice(s![..b, ..]);
            let (_, grad) = loss_and_grad(&model, arch, &x, &batch_y)?;
            for (w, g) in model.values_mut().iter_mut().zip(&grad) {
                *w -= cfg.learning_rate * g;
            }
        }
    }
    Ok(model)
}

/// Accuracy of argmax predictions; ties go to the lowest class index.
pub fn evaluate(model: &ModelParams, data: &Dataset, arch: &Architecture) -> Result<EvalReport> {
    ensure_model_matches(arch, model)?;
    ensure_data_matches(arch, data)?;
    if data.is_empty() {
        return Err(Error::EmptyInput("evaluate: dataset"));
    }
    let layers = split_layers(arch, model.values());
    let n = data.len();
    let mut correct_total = 0usize;
    let mut per_class_total = vec![0usize; arch.n_classes];
    let mut per_class_correct = vec![0usize; arch.n_classes];

    const CHUNK: usize = 512;
    let mut start = 0;
    while start < n {
        let end = (start + CHUNK).min(n);
        let x = data.features().slice(s![start..end, ..]);
        let (logits, _) = forward(arch, &layers, &x);
        for (row, &label) in logits.rows().into_iter().zip(&data.labels()[start..end]) {
            let mut best = 0usize;
            let mut best_v = row[0];
            for (c, &v) in row.iter().enumerate().skip(1) {
                if v > best_v {
                    best_v = v;
                    best = c;
                }
            }
            per_class_total[label] += 1;
            if best == label {
                per_class_correct[label] += 1;
                correct_total += 1;
            }
        }
        start = end;
    }

    let mut per_class_accuracy = BTreeMap::new();
    for c in 0..arch.n_classes {
        if per_class_total[c] > 0 {
            per_class_accuracy.insert(c, per_class_correct[c] as f64 / per_class_total[c] as f64);
        }
    }
    Ok(EvalReport {
        overall_accuracy: correct_total as f64 / n as f64,
        per_class_accuracy,
        n_samples: n,
    })
}

/// Compare the analytic gradient to central finite differences on a small
/// batch; returns the maximum relative error across coordinates.
///
/// Meant as a correctness gate on small fixtures (the cost is two loss
/// evaluations per parameter).
pub fn numeric_gradient_check(arch: &Architecture, data: &Dataset, eps: f64) -> Result<f64> {
    ensure_data_matches(arch, data)?;
    if data.is_empty() {
        return Err(Error::EmptyInput("numeric_gradient_check: dataset"));
    }
    let model = init_model(arch, 0x5eed_cafe)?;
    let x = data.features().view();
    let labels = data.labels();
    let (_, analytic) = loss_and_grad(&model, arch, &x, labels)?;

    let mut probe = model.clone();
    let mut max_rel = 0.0f64;
    for d in 0..probe.len() {
        let orig = probe.values()[d];
        probe.values_mut()[d] = orig + eps;
        let up = batch_loss(&probe, arch, &x, labels)?;
        probe.values_mut()[d] = orig - eps;
        let down = batch_loss(&probe, arch, &x, labels)?;
        probe.values_mut()[d] = orig;
        let numeric = (up - down) / (2.0 * eps);
        let denom = analytic[d].abs().max(numeric.abs()).max(1e-4);
        max_rel = max_rel.max((analytic[d] - numeric).abs() / denom);
    }
    Ok(max_rel)
}
