//! Dense feed-forward classifier with a softmax output layer.
//!
//! Layer `k` maps `widths[k]` inputs to `widths[k + 1]` outputs through a
//! weight matrix of shape `(widths[k], widths[k + 1])` and a bias vector.
//! Hidden layers apply the configured [`Activation`]; the last layer feeds a
//! softmax.
//!
//! Parameters flatten in a fixed order: layers input side first, each weight
//! matrix row-major followed by its bias vector. [`DnnModel::to_flat`] and
//! [`DnnModel::set_flat`] use that order, and so does the gradient returned by
//! [`DnnModel::loss_and_grad`].

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Normalizer};
use crate::error::{Error, Result};
use crate::lbfgs::{self, LbfgsConfig};
use crate::search_space::param_count;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    /// `max(0, z)`
    #[default]
    Relu,
    /// `1 / (1 + e^-z)`
    Sigmoid,
}

impl Activation {
    fn apply_inplace(self, z: &mut Array2<f64>) {
        match self {
            Activation::Relu => z.mapv_inplace(|v| v.max(0.0)),
            Activation::Sigmoid => z.mapv_inplace(sigmoid),
        }
    }

    // Multiplies `delta` by the derivative, expressed through the activation output.
    fn backprop_inplace(self, delta: &mut Array2<f64>, out: &Array2<f64>) {
        match self {
            Activation::Relu => Zip::from(delta).and(out).for_each(|d, &a| {
                if a <= 0.0 {
                    *d = 0.0;
                }
            }),
            Activation::Sigmoid => Zip::from(delta).and(out).for_each(|d, &a| *d *= a * (1.0 - a)),
        }
    }
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

#[derive(Debug, Clone, PartialEq)]
pub struct DnnModel {
    pub(crate) widths: Vec<usize>,
    pub(crate) weights: Vec<Array2<f64>>,
    pub(crate) biases: Vec<Array1<f64>>,
    pub(crate) activation: Activation,
}

/// Post-activation outputs of every layer for one batch.
///
/// `activations[0]` is the input; `activations[k]` for `k >= 1` is the output
/// of hidden layer `k`. `probs` holds the softmax output.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub activations: Vec<Array2<f64>>,
    pub log_probs: Array2<f64>,
}

impl DnnModel {
    pub fn from_parts(weights: Vec<Array2<f64>>, biases: Vec<Array1<f64>>, activation: Activation) -> Result<Self> {
        if weights.is_empty() || weights.len() != biases.len() {
            return Err(Error::Shape(format!(
                "{} weight matrices and {} bias vectors",
                weights.len(),
                biases.len()
            )));
        }
        let mut widths = vec![weights[0].nrows()];
        for (k, (w, b)) in weights.iter().zip(&biases).enumerate() {
            if w.nrows() != *widths.last().expect("non-empty") || b.len() != w.ncols() {
                return Err(Error::Shape(format!(
                    "layer {k}: weights {:?} and bias {} do not chain",
                    w.dim(),
                    b.len()
                )));
            }
            widths.push(w.ncols());
        }
        Ok(Self {
            widths,
            weights,
            biases,
            activation,
        })
    }

    /// Zero-initialized model with layer widths `[n_features, hidden.., n_classes]`.
    pub fn zeros(hidden: &[usize], n_features: usize, n_classes: usize, activation: Activation) -> Self {
        let mut widths = Vec::with_capacity(hidden.len() + 2);
        widths.push(n_features);
        widths.extend_from_slice(hidden);
        widths.push(n_classes);
        let weights = widths.windows(2).map(|w| Array2::zeros((w[0], w[1]))).collect();
        let biases = widths[1..].iter().map(|&w| Array1::zeros(w)).collect();
        Self {
            widths,
            weights,
            biases,
            activation,
        }
    }

    /// Glorot-style uniform weights in `±scale·sqrt(6 / (fan_in + fan_out))`,
    /// zero biases.
    pub fn random_init<R: Rng + ?Sized>(
        hidden: &[usize],
        n_features: usize,
        n_classes: usize,
        scale: f64,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let mut m = Self::zeros(hidden, n_features, n_classes, activation);
        for w in &mut m.weights {
            glorot_fill(w, scale, rng);
        }
        m
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn hidden_widths(&self) -> &[usize] {
        &self.widths[1..self.widths.len() - 1]
    }

    pub fn n_features(&self) -> usize {
        self.widths[0]
    }

    pub fn n_classes(&self) -> usize {
        *self.widths.last().expect("non-empty widths")
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn weights(&self) -> &[Array2<f64>] {
        &self.weights
    }

    pub fn biases(&self) -> &[Array1<f64>] {
        &self.biases
    }

    pub fn n_params(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>() + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    /// Checks shapes against `widths` and the closed-form parameter count.
    pub fn validate(&self) -> Result<()> {
        if self.widths.len() < 2 || self.weights.len() != self.widths.len() - 1 || self.biases.len() != self.weights.len()
        {
            return Err(Error::Shape("layer lists do not match widths".into()));
        }
        for (k, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            if w.dim() != (self.widths[k], self.widths[k + 1]) || b.len() != self.widths[k + 1] {
                return Err(Error::Shape(format!("layer {k} shape disagrees with widths")));
            }
        }
        let expected = param_count(self.hidden_widths(), self.n_features(), self.n_classes());
        if self.n_params() as u64 != expected {
            return Err(Error::Shape("parameter count disagrees with widths".into()));
        }
        Ok(())
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.iter().copied());
            out.extend(b.iter().copied());
        }
        out
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.n_params() {
            return Err(Error::Shape(format!(
                "flat vector has {} entries, model has {} parameters",
                flat.len(),
                self.n_params()
            )));
        }
        let mut at = 0;
        for (w, b) in self.weights.iter_mut().zip(&mut self.biases) {
            let (nw, nb) = (w.len(), b.len());
            for (dst, src) in w.iter_mut().zip(&flat[at..at + nw]) {
                *dst = *src;
            }
            at += nw;
            for (dst, src) in b.iter_mut().zip(&flat[at..at + nb]) {
                *dst = *src;
            }
            at += nb;
        }
        Ok(())
    }

    fn check_input(&self, x: &ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.n_features() {
            return Err(Error::Shape(format!(
                "input has {} columns, model expects {}",
                x.ncols(),
                self.n_features()
            )));
        }
        Ok(())
    }

    fn forward_cache(&self, x: ArrayView2<f64>) -> Result<(ForwardCache, Array2<f64>)> {
        self.check_input(&x)?;
        let last = self.weights.len() - 1;
        let mut activations = Vec::with_capacity(self.weights.len());
        activations.push(x.to_owned());
        for k in 0..last {
            let mut z = activations[k].dot(&self.weights[k]) + &self.biases[k];
            self.activation.apply_inplace(&mut z);
            activations.push(z);
        }
        let logits = activations[last].dot(&self.weights[last]) + &self.biases[last];
        let log_probs = log_softmax_rows(&logits);
        Ok((
            ForwardCache {
                activations,
                log_probs,
            },
            logits,
        ))
    }

    /// Pre-softmax outputs, one row per sample.
    pub fn logits(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        Ok(self.forward_cache(x)?.1)
    }

    /// Class probabilities, one row per sample.
    pub fn forward(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        let (cache, _) = self.forward_cache(x)?;
        Ok(cache.log_probs.mapv(f64::exp))
    }

    /// Mean softmax cross-entropy and its gradient in canonical flat order.
    pub fn loss_and_grad(&self, x: ArrayView2<f64>, labels: &[usize]) -> Result<(f64, Vec<f64>)> {
        let n = x.nrows();
        if labels.len() != n {
            return Err(Error::Shape(format!("{n} rows but {} labels", labels.len())));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= self.n_classes()) {
            return Err(Error::Shape(format!("label {bad} outside {} classes", self.n_classes())));
        }
        if n == 0 {
            return Err(Error::EmptyEvaluationSet);
        }
        let (cache, _) = self.forward_cache(x)?;
        let inv_n = 1.0 / n as f64;
        let loss = -labels
            .iter()
            .enumerate()
            .map(|(i, &l)| cache.log_probs[[i, l]])
            .sum::<f64>()
            * inv_n;

        let mut delta = cache.log_probs.mapv(f64::exp);
        for (i, &l) in labels.iter().enumerate() {
            delta[[i, l]] -= 1.0;
        }
        delta *= inv_n;

        let layers = self.weights.len();
        let mut grads: Vec<(Array2<f64>, Array1<f64>)> = Vec::with_capacity(layers);
        for k in (0..layers).rev() {
            let gw = cache.activations[k].t().dot(&delta);
            let gb = delta.sum_axis(Axis(0));
            if k > 0 {
                let mut next = delta.dot(&self.weights[k].t());
                self.activation.backprop_inplace(&mut next, &cache.activations[k]);
                delta = next;
            }
            grads.push((gw, gb));
        }
        let mut flat = Vec::with_capacity(self.n_params());
        for (gw, gb) in grads.iter().rev() {
            flat.extend(gw.iter().copied());
            flat.extend(gb.iter().copied());
        }
        Ok((loss, flat))
    }

    /// Arg-max class per row; ties go to the lowest class index.
    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Vec<usize>> {
        let logits = self.logits(x)?;
        Ok(logits.outer_iter().map(|row| argmax(row.iter().copied())).collect())
    }

    /// Fraction of rows whose predicted class equals the label.
    pub fn accuracy(&self, d: &Dataset) -> Result<f64> {
        if d.is_empty() {
            return Err(Error::EmptyEvaluationSet);
        }
        let pred = self.predict(d.features.view())?;
        let hits = pred.iter().zip(&d.labels).filter(|(p, l)| p == l).count();
        Ok(hits as f64 / d.len() as f64)
    }

    /// Counts indexed `[true class][predicted class]`.
    pub fn confusion_matrix(&self, d: &Dataset) -> Result<Vec<Vec<usize>>> {
        let c = self.n_classes().max(d.n_classes());
        let mut m = vec![vec![0; c]; c];
        for (p, &l) in self.predict(d.features.view())?.into_iter().zip(&d.labels) {
            m[l][p] += 1;
        }
        Ok(m)
    }

    /// Trains the flat parameters with L-BFGS on `(x, labels)`.
    pub fn train(&mut self, x: ArrayView2<f64>, labels: &[usize], cfg: &LbfgsConfig) -> Result<lbfgs::Minimum> {
        let mut work = self.clone();
        let result = lbfgs::minimize(
            |p: &[f64]| {
                work.set_flat(p).expect("length fixed by x0");
                work.loss_and_grad(x, labels).expect("shapes checked before training")
            },
            &self.to_flat(),
            cfg,
        )?;
        self.set_flat(&result.x)?;
        Ok(result)
    }
}

pub(crate) fn glorot_fill<R: Rng + ?Sized>(w: &mut Array2<f64>, scale: f64, rng: &mut R) {
    let (fan_in, fan_out) = w.dim();
    let limit = scale * (6.0 / (fan_in + fan_out) as f64).sqrt();
    if limit > 0.0 {
        w.mapv_inplace(|_| rng.random_range(-limit..limit));
    } else {
        w.fill(0.0);
    }
}

fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (i, v) in values.enumerate() {
        if v > best_v {
            best = i;
            best_v = v;
        }
    }
    best
}

fn log_softmax_rows(z: &Array2<f64>) -> Array2<f64> {
    let mut out = z.clone();
    for mut row in out.outer_iter_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        row.mapv_inplace(|v| v - lse);
    }
    out
}

// Reconstruction loss 1/(2n)·Σ‖H·V + c − A‖² of a one-hidden-layer
// autoencoder with a linear decoder; parameters flat as [W, b, V, c].
fn autoencoder_loss_and_grad(
    params: &[f64],
    input: &Array2<f64>,
    hidden: usize,
    activation: Activation,
) -> (f64, Vec<f64>) {
    let (n, d) = input.dim();
    let (w, rest) = params.split_at(d * hidden);
    let (b, rest) = rest.split_at(hidden);
    let (v, c) = rest.split_at(hidden * d);
    let w = ArrayView2::from_shape((d, hidden), w).expect("encoder shape");
    let v = ArrayView2::from_shape((hidden, d), v).expect("decoder shape");
    let b = ndarray::ArrayView1::from(b);
    let c = ndarray::ArrayView1::from(c);

    let mut h = input.dot(&w) + &b;
    activation.apply_inplace(&mut h);
    let mut r = h.dot(&v) + &c - input;
    let loss = 0.5 * r.iter().map(|e| e * e).sum::<f64>() / n as f64;
    r /= n as f64;

    let gv = h.t().dot(&r);
    let gc = r.sum_axis(Axis(0));
    let mut dh = r.dot(&v.t());
    activation.backprop_inplace(&mut dh, &h);
    let gw = input.t().dot(&dh);
    let gb = dh.sum_axis(Axis(0));

    let mut grad = Vec::with_capacity(params.len());
    grad.extend(gw.iter().copied());
    grad.extend(gb.iter().copied());
    grad.extend(gv.iter().copied());
    grad.extend(gc.iter().copied());
    (loss, grad)
}

/// Greedy layer-wise autoencoder pretraining of every hidden layer.
///
/// Hidden layer `k` is trained as the encoder of an autoencoder that
/// reconstructs the previous layer's activations through a fresh linear
/// decoder, for `iterations` L-BFGS steps; the decoder is discarded. The
/// softmax layer is untouched. Returns the reconstruction-loss trace of each
/// layer alongside the model. Zero iterations return the model unchanged.
pub fn pretrain_sae_traced<R: Rng + ?Sized>(
    model: &DnnModel,
    x: ArrayView2<f64>,
    iterations: usize,
    rng: &mut R,
) -> Result<(DnnModel, Vec<Vec<f64>>)> {
    model.check_input(&x)?;
    let mut out = model.clone();
    if iterations == 0 {
        return Ok((out, Vec::new()));
    }
    let cfg = LbfgsConfig {
        max_iters: iterations,
        ..LbfgsConfig::default()
    };
    let mut traces = Vec::new();
    let mut input = x.to_owned();
    for k in 0..out.weights.len() - 1 {
        let (d, hidden) = out.weights[k].dim();
        let mut decoder = Array2::zeros((hidden, d));
        glorot_fill(&mut decoder, 1.0, rng);
        let mut x0 = out.weights[k].iter().copied().collect::<Vec<_>>();
        x0.extend(out.biases[k].iter().copied());
        x0.extend(decoder.iter().copied());
        x0.extend(std::iter::repeat_n(0.0, d));
        let act = out.activation;
        let res = lbfgs::minimize(|p: &[f64]| autoencoder_loss_and_grad(p, &input, hidden, act), &x0, &cfg)?;
        for (dst, src) in out.weights[k].iter_mut().zip(&res.x[..d * hidden]) {
            *dst = *src;
        }
        for (dst, src) in out.biases[k].iter_mut().zip(&res.x[d * hidden..d * hidden + hidden]) {
            *dst = *src;
        }
        traces.push(res.values());
        let mut next = input.dot(&out.weights[k]) + &out.biases[k];
        act.apply_inplace(&mut next);
        input = next;
    }
    Ok((out, traces))
}

pub fn pretrain_sae<R: Rng + ?Sized>(
    model: &DnnModel,
    x: ArrayView2<f64>,
    iterations: usize,
    rng: &mut R,
) -> Result<DnnModel> {
    Ok(pretrain_sae_traced(model, x, iterations, rng)?.0)
}

const MODEL_FORMAT: &str = "gsevo-model";
const MODEL_VERSION: u32 = 1;

/// On-disk model container (JSON).
///
/// Besides the network it can carry the input normalizer and class names so a
/// saved model can score raw data on its own.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    pub widths: Vec<usize>,
    pub activation: Activation,
    pub params: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalizer: Option<Normalizer>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classes: Option<Vec<String>>,
}

impl ModelFile {
    pub fn new(model: &DnnModel) -> Self {
        Self {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_VERSION,
            widths: model.widths.clone(),
            activation: model.activation,
            params: model.to_flat(),
            normalizer: None,
            classes: None,
        }
    }

    pub fn model(&self) -> Result<DnnModel> {
        if self.format != MODEL_FORMAT {
            return Err(Error::ModelFormat(format!("unknown format tag {:?}", self.format)));
        }
        if self.version != MODEL_VERSION {
            return Err(Error::ModelFormat(format!("unsupported version {}", self.version)));
        }
        if self.widths.len() < 2 || self.widths.contains(&0) {
            return Err(Error::ModelFormat(format!("invalid widths {:?}", self.widths)));
        }
        let hidden = &self.widths[1..self.widths.len() - 1];
        let mut m = DnnModel::zeros(hidden, self.widths[0], *self.widths.last().expect("len >= 2"), self.activation);
        m.set_flat(&self.params)
            .map_err(|e| Error::ModelFormat(e.to_string()))?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self)?;
        fs::write(path, text).map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Ok(serde_json::from_str(&text)?)
    }
}
