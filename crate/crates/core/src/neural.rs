//! Dense multilayer perceptrons with hand-written backpropagation.
//!
//! Weights are stored `(out_dim, in_dim)`; a batch is one sample per row.
//! Parameters flatten layer by layer, weights row-major followed by bias,
//! which is also the order used by the `LIDN` snapshot container.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    fn code(self) -> u8 {
        match self {
            Activation::Relu => 1,
            Activation::Identity => 0,
        }
    }

    fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Activation::Identity),
            1 => Some(Activation::Relu),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

impl Dense {
    pub fn in_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.nrows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Dense>,
}

/// Activations recorded by [`Mlp::forward_taped`]. Consumed by
/// [`GradientTape::backward`].
#[derive(Debug)]
pub struct GradientTape {
    inputs: Vec<Array2<f64>>,
    outputs: Vec<Array2<f64>>,
}

/// Parameter gradients, shaped like the network's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads {
    pub layers: Vec<(Array2<f64>, Array1<f64>)>,
}

impl Mlp {
    /// Glorot-uniform initialised network: ReLU on hidden layers, identity
    /// on the output layer.
    pub fn new<R: Rng + ?Sized>(dims: &[usize], rng: &mut R) -> Self {
        assert!(
            dims.len() >= 2,
            "an MLP needs at least input and output dims"
        );
        let last = dims.len() - 2;
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let weight =
                    Array2::from_shape_fn((fan_out, fan_in), |_| rng.random_range(-limit..=limit));
                Dense {
                    weight,
                    bias: Array1::zeros(fan_out),
                    activation: if i == last {
                        Activation::Identity
                    } else {
                        Activation::Relu
                    },
                }
            })
            .collect();
        Self { layers }
    }

    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("an MLP needs at least one layer".into()));
        }
        for l in &layers {
            if l.bias.len() != l.out_dim() {
                return Err(Error::Dimension {
                    expected: l.out_dim(),
                    actual: l.bias.len(),
                });
            }
        }
        for pair in layers.windows(2) {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(Error::Dimension {
                    expected: pair[0].out_dim(),
                    actual: pair[1].in_dim(),
                });
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    /// Mutable access for in-place edits. Callers must keep every shape.
    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }

    fn check_input(&self, x: &ArrayView2<'_, f64>) -> Result<()> {
        if x.ncols() != self.in_dim() {
            return Err(Error::Dimension {
                expected: self.in_dim(),
                actual: x.ncols(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check_input(&x)?;
        let mut h = x.to_owned();
        for layer in &self.layers {
            h = apply_layer(layer, h.view());
        }
        Ok(h)
    }

    pub fn forward_taped(&self, x: ArrayView2<'_, f64>) -> Result<(Array2<f64>, GradientTape)> {
        self.check_input(&x)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut outputs = Vec::with_capacity(self.layers.len());
        let mut h = x.to_owned();
        for layer in &self.layers {
            let out = apply_layer(layer, h.view());
            inputs.push(h);
            outputs.push(out.clone());
            h = out;
        }
        Ok((h, GradientTape { inputs, outputs }))
    }

    pub fn zero_grads(&self) -> MlpGrads {
        MlpGrads {
            layers: self
                .layers
                .iter()
                .map(|l| {
                    (
                        Array2::zeros(l.weight.raw_dim()),
                        Array1::zeros(l.bias.len()),
                    )
                })
                .collect(),
        }
    }

    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend(l.weight.iter());
            out.extend(l.bias.iter());
        }
        out
    }

    pub fn set_params_flat(&mut self, params: &[f64]) {
        assert_eq!(params.len(), self.num_params(), "parameter count mismatch");
        let mut it = params.iter();
        for l in &mut self.layers {
            for w in l.weight.iter_mut().chain(l.bias.iter_mut()) {
                *w = *it.next().expect("length checked");
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }

    /// Serialises to the `LIDN` container.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + self.layers.len() * 9 + self.num_params() * 8);
        out.extend_from_slice(SNAPSHOT_MAGIC);
        out.extend_from_slice(&(self.layers.len() as u32).to_le_bytes());
        for l in &self.layers {
            out.extend_from_slice(&(l.in_dim() as u32).to_le_bytes());
            out.extend_from_slice(&(l.out_dim() as u32).to_le_bytes());
            out.push(l.activation.code());
        }
        for v in self.params_flat() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> std::result::Result<Self, String> {
        let mut pos = 0usize;
        let mut take = |n: usize| -> std::result::Result<&[u8], String> {
            let s = bytes
                .get(pos..pos + n)
                .ok_or_else(|| format!("truncated at byte {pos}"))?;
            pos += n;
            Ok(s)
        };
        if take(4)? != SNAPSHOT_MAGIC {
            return Err("missing LIDN magic".into());
        }
        let count = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
        if count == 0 {
            return Err("snapshot has no layers".into());
        }
        let mut shapes = Vec::with_capacity(count);
        for _ in 0..count {
            let i = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
            let o = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
            let act = Activation::from_code(take(1)?[0]).ok_or("unknown activation code")?;
            shapes.push((i, o, act));
        }
        let mut layers = Vec::with_capacity(count);
        for (i, o, activation) in shapes {
            let mut read = |n: usize| -> std::result::Result<Vec<f64>, String> {
                (0..n)
                    .map(|_| Ok(f64::from_le_bytes(take(8)?.try_into().unwrap())))
                    .collect()
            };
            let weight = Array2::from_shape_vec((o, i), read(o * i)?).unwrap();
            let bias = Array1::from_vec(read(o)?);
            layers.push(Dense {
                weight,
                bias,
                activation,
            });
        }
        if pos != bytes.len() {
            return Err(format!("{} trailing bytes", bytes.len() - pos));
        }
        Self::from_layers(layers).map_err(|e| e.to_string())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingArtifact(path.to_path_buf()));
        }
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|message| Error::Format {
            path: path.to_path_buf(),
            message,
        })
    }
}

const SNAPSHOT_MAGIC: &[u8; 4] = b"LIDN";

fn apply_layer(layer: &Dense, x: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut z = x.dot(&layer.weight.t());
    z += &layer.bias;
    if layer.activation == Activation::Relu {
        z.mapv_inplace(|v| v.max(0.0));
    }
    z
}

impl GradientTape {
    /// Backpropagates `grad_out` (dLoss/dOutput). Returns parameter gradients
    /// and dLoss/dInput.
    pub fn backward(self, net: &Mlp, grad_out: ArrayView2<'_, f64>) -> (MlpGrads, Array2<f64>) {
        assert_eq!(
            self.inputs.len(),
            net.layers.len(),
            "tape from another network"
        );
        let mut g = grad_out.to_owned();
        let mut grads = Vec::with_capacity(net.layers.len());
        for ((layer, input), output) in net.layers.iter().zip(&self.inputs).zip(&self.outputs).rev()
        {
            if layer.activation == Activation::Relu {
                Zip::from(&mut g).and(output).for_each(|g, &o| {
                    if o <= 0.0 {
                        *g = 0.0;
                    }
                });
            }
            let dw = g.t().dot(input);
            let db = g.sum_axis(Axis(0));
            g = g.dot(&layer.weight);
            grads.push((dw, db));
        }
        grads.reverse();
        (MlpGrads { layers: grads }, g)
    }
}

impl MlpGrads {
    pub fn add_assign(&mut self, other: &MlpGrads) {
        for ((w, b), (ow, ob)) in self.layers.iter_mut().zip(&other.layers) {
            *w += ow;
            *b += ob;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for (w, b) in &mut self.layers {
            *w *= factor;
            *b *= factor;
        }
    }

    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in &self.layers {
            out.extend(w.iter());
            out.extend(b.iter());
        }
        out
    }
}

/// Row-wise softmax, computed with the max subtracted.
pub fn softmax(logits: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut p = logits.to_owned();
    for mut row in p.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
    p
}

/// Mean over the batch of `weight_i * -log softmax(logits_i)[label_i]`, and
/// its exact gradient with respect to the logits.
pub fn softmax_ce(
    logits: ArrayView2<'_, f64>,
    labels: &[usize],
    weights: Option<&[f64]>,
) -> Result<(f64, Array2<f64>)> {
    let (batch, classes) = logits.dim();
    if labels.len() != batch {
        return Err(Error::Dimension {
            expected: batch,
            actual: labels.len(),
        });
    }
    if let Some(w) = weights {
        if w.len() != batch {
            return Err(Error::Dimension {
                expected: batch,
                actual: w.len(),
            });
        }
    }
    if let Some(&label) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::LabelOutOfRange { label, classes });
    }
    if batch == 0 {
        return Ok((0.0, Array2::zeros((0, classes))));
    }
    let mut grad = Array2::zeros((batch, classes));
    let mut loss = 0.0;
    let inv_batch = 1.0 / batch as f64;
    for (i, row) in logits.rows().into_iter().enumerate() {
        let w = weights.map_or(1.0, |w| w[i]);
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
        let log_norm = max + sum.ln();
        loss += w * (log_norm - row[labels[i]]);
        let mut g = grad.row_mut(i);
        for (j, &v) in row.iter().enumerate() {
            g[j] = w * inv_batch * (v - log_norm).exp();
        }
        g[labels[i]] -= w * inv_batch;
    }
    Ok((loss * inv_batch, grad))
}

/// Fixed per-dimension input transform `(x - shift) * scale`. Not trained.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub shift: Array1<f64>,
    pub scale: Array1<f64>,
}

impl Standardizer {
    pub fn identity(dim: usize) -> Self {
        Self {
            shift: Array1::zeros(dim),
            scale: Array1::ones(dim),
        }
    }

    /// Column means and inverse standard deviations of `x`. Constant
    /// columns keep unit scale.
    pub fn fit(x: ArrayView2<'_, f64>) -> Self {
        let n = x.nrows().max(1) as f64;
        let shift = x.sum_axis(Axis(0)) / n;
        let scale = Array1::from_iter(x.columns().into_iter().zip(&shift).map(|(col, m)| {
            let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
            if var > 0.0 {
                1.0 / var.sqrt()
            } else {
                1.0
            }
        }));
        Self { shift, scale }
    }

    pub fn dim(&self) -> usize {
        self.shift.len()
    }

    pub fn apply(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                actual: x.ncols(),
            });
        }
        Ok((&x - &self.shift) * &self.scale)
    }

    /// `net` with this transform absorbed into its first layer, so that
    /// the result applied to `x` equals `net` applied to `self.apply(x)`.
    pub fn fold_into(&self, net: &Mlp) -> Mlp {
        let mut out = net.clone();
        if let Some(first) = out.layers_mut().first_mut() {
            let bias_shift = first.weight.dot(&(&self.shift * &self.scale));
            first.weight = &first.weight * &self.scale;
            first.bias = &first.bias - &bias_shift;
        }
        out
    }
}

/// Identity on the forward pass; scales gradients by `-lambda` on the way back.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReversalGate {
    pub lambda: f64,
}

impl ReversalGate {
    pub fn new(lambda: f64) -> Self {
        Self { lambda }
    }

    pub fn forward<'a>(&self, x: ArrayView2<'a, f64>) -> ArrayView2<'a, f64> {
        x
    }

    pub fn backward(&self, upstream: ArrayView2<'_, f64>) -> Array2<f64> {
        upstream.mapv(|g| -self.lambda * g)
    }
}

/// SGD with classical momentum: `v <- mu*v + g; theta <- theta - lr*v`.
#[derive(Debug, Clone)]
pub struct Sgd {
    pub lr: f64,
    pub momentum: f64,
    velocity: Option<MlpGrads>,
}

impl Sgd {
    pub fn new(lr: f64, momentum: f64) -> Self {
        Self {
            lr,
            momentum,
            velocity: None,
        }
    }

    /// `name` identifies the network in divergence errors.
    pub fn step(&mut self, net: &mut Mlp, grads: &MlpGrads, name: &str) -> Result<()> {
        for (i, (w, b)) in grads.layers.iter().enumerate() {
            if !w.iter().chain(b.iter()).all(|v| v.is_finite()) {
                return Err(Error::NonFinite {
                    context: format!("{name} layer {i} gradient"),
                });
            }
        }
        let velocity = self.velocity.get_or_insert_with(|| net.zero_grads());
        for (((vw, vb), (gw, gb)), layer) in velocity
            .layers
            .iter_mut()
            .zip(&grads.layers)
            .zip(&mut net.layers)
        {
            Zip::from(&mut *vw)
                .and(gw)
                .for_each(|v, &g| *v = self.momentum * *v + g);
            Zip::from(&mut *vb)
                .and(gb)
                .for_each(|v, &g| *v = self.momentum * *v + g);
            layer.weight.scaled_add(-self.lr, vw);
            layer.bias.scaled_add(-self.lr, vb);
        }
        for (i, l) in net.layers.iter().enumerate() {
            if !l.weight.iter().chain(l.bias.iter()).all(|v| v.is_finite()) {
                return Err(Error::NonFinite {
                    context: format!("{name} layer {i} parameters"),
                });
            }
        }
        Ok(())
    }
}

/// Compares analytic gradients against central finite differences.
///
/// `loss_fn` returns the loss and its analytic gradient at the given
/// parameters. Returns `max_i |analytic_i - numeric_i| / max(1e-12, |numeric_i|)`.
pub fn finite_diff_check<F>(mut loss_fn: F, params: &[f64], step: f64) -> f64
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let (_, analytic) = loss_fn(params);
    assert_eq!(analytic.len(), params.len(), "gradient length mismatch");
    let mut probe = params.to_vec();
    let mut worst = 0.0f64;
    for i in 0..params.len() {
        probe[i] = params[i] + step;
        let (plus, _) = loss_fn(&probe);
        probe[i] = params[i] - step;
        let (minus, _) = loss_fn(&probe);
        probe[i] = params[i];
        let numeric = (plus - minus) / (2.0 * step);
        let err = (analytic[i] - numeric).abs() / numeric.abs().max(1e-12);
        worst = worst.max(err);
    }
    worst
}
