use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::LearnError;
use crate::data::Dataset;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelKind {
    SoftmaxRegression,
    /// Fully connected tanh layers followed by a softmax output layer.
    Mlp {
        hidden_dims: Vec<usize>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    #[serde(flatten)]
    pub kind: ModelKind,
    pub input_dim: usize,
    pub num_classes: usize,
}

/// One named tensor inside the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorSlot {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl TensorSlot {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    pub slots: Vec<TensorSlot>,
}

impl Layout {
    pub fn len(&self) -> usize {
        self.slots.last().map_or(0, |s| s.offset + s.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn slot(&self, name: &str) -> Option<&TensorSlot> {
        self.slots.iter().find(|s| s.name == name)
    }
}

/// Flat parameter vector plus the layout describing its tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    values: Vec<f64>,
    layout: Arc<Layout>,
}

impl ModelParams {
    pub fn new(values: Vec<f64>, layout: Arc<Layout>) -> Result<Self, LearnError> {
        if values.len() != layout.len() {
            return Err(LearnError::ShapeMismatch {
                expected: layout.len(),
                found: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(LearnError::NonFinite { index: i });
        }
        Ok(Self { values, layout })
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            values: vec![0.0; self.values.len()],
            layout: Arc::clone(&self.layout),
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn layout(&self) -> &Arc<Layout> {
        &self.layout
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn tensor(&self, name: &str) -> Option<&[f64]> {
        self.layout.slot(name).map(|s| &self.values[s.range()])
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &ModelParams) {
        debug_assert_eq!(self.values.len(), other.values.len());
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += alpha * b;
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        for v in &mut self.values {
            *v *= alpha;
        }
    }

    pub fn max_abs_diff(&self, other: &ModelParams) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Top-1 accuracy and mean cross-entropy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy: f64,
    pub loss: f64,
}

/// Per-call buffers for one forward/backward pass.
struct Scratch {
    /// activations[0] is the input, the last entry holds the logits.
    activations: Vec<Vec<f64>>,
    deltas: Vec<Vec<f64>>,
}

impl ModelSpec {
    pub fn softmax_regression(input_dim: usize, num_classes: usize) -> Self {
        Self {
            kind: ModelKind::SoftmaxRegression,
            input_dim,
            num_classes,
        }
    }

    pub fn mlp(input_dim: usize, hidden_dims: Vec<usize>, num_classes: usize) -> Self {
        Self {
            kind: ModelKind::Mlp { hidden_dims },
            input_dim,
            num_classes,
        }
    }

    pub fn validate(&self) -> Result<(), LearnError> {
        let hidden_ok = match &self.kind {
            ModelKind::SoftmaxRegression => true,
            ModelKind::Mlp { hidden_dims } => {
                !hidden_dims.is_empty() && hidden_dims.iter().all(|&h| h >= 1)
            }
        };
        if self.input_dim == 0 || self.num_classes < 2 || !hidden_ok {
            return Err(LearnError::InvalidSpec(format!("{self:?}")));
        }
        Ok(())
    }

    /// Layer widths from input to output.
    fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_dim];
        if let ModelKind::Mlp { hidden_dims } = &self.kind {
            w.extend_from_slice(hidden_dims);
        }
        w.push(self.num_classes);
        w
    }

    pub fn layout(&self) -> Layout {
        let widths = self.widths();
        let layers = widths.len() - 1;
        let mut slots = Vec::with_capacity(2 * layers);
        let mut offset = 0;
        for l in 0..layers {
            let (fan_in, fan_out) = (widths[l], widths[l + 1]);
            let (w, b) = match (&self.kind, l + 1 == layers) {
                (ModelKind::SoftmaxRegression, _) => ("weight".to_string(), "bias".to_string()),
                (_, true) => ("out.weight".to_string(), "out.bias".to_string()),
                (_, false) => (format!("hidden{l}.weight"), format!("hidden{l}.bias")),
            };
            slots.push(TensorSlot {
                name: w,
                shape: vec![fan_out, fan_in],
                offset,
            });
            offset += fan_out * fan_in;
            slots.push(TensorSlot {
                name: b,
                shape: vec![fan_out],
                offset,
            });
            offset += fan_out;
        }
        Layout { slots }
    }

    pub fn num_params(&self) -> usize {
        self.layout().len()
    }

    pub fn zeros(&self) -> ModelParams {
        let layout = Arc::new(self.layout());
        ModelParams {
            values: vec![0.0; layout.len()],
            layout,
        }
    }

    /// Zero biases, weights uniform in (-0.05, 0.05).
    pub fn init(&self, seed: u64) -> ModelParams {
        let mut params = self.zeros();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layout = Arc::clone(&params.layout);
        for slot in layout.slots.iter().filter(|s| s.shape.len() == 2) {
            for v in &mut params.values[slot.range()] {
                *v = rng.random_range(-0.05..0.05);
            }
        }
        params
    }

    fn scratch(&self) -> Scratch {
        let widths = self.widths();
        Scratch {
            activations: widths.iter().map(|&w| vec![0.0; w]).collect(),
            deltas: widths.iter().map(|&w| vec![0.0; w]).collect(),
        }
    }

    fn forward(&self, params: &[f64], x: &[f32], s: &mut Scratch) {
        let layers = s.activations.len() - 1;
        for (a, &v) in s.activations[0].iter_mut().zip(x) {
            *a = f64::from(v);
        }
        let mut offset = 0;
        for l in 0..layers {
            let (head, tail) = s.activations.split_at_mut(l + 1);
            let input = &head[l];
            let output = &mut tail[0];
            let (fan_in, fan_out) = (input.len(), output.len());
            let weights = &params[offset..offset + fan_in * fan_out];
            let bias = &params[offset + fan_in * fan_out..offset + fan_in * fan_out + fan_out];
            for (o, out) in output.iter_mut().enumerate() {
                let row = &weights[o * fan_in..(o + 1) * fan_in];
                let z = row.iter().zip(input).map(|(w, a)| w * a).sum::<f64>() + bias[o];
                *out = if l + 1 < layers { z.tanh() } else { z };
            }
            offset += fan_in * fan_out + fan_out;
        }
    }

    /// Cross-entropy of the current logits against `label`; leaves the
    /// softmax probabilities in `probs` when given.
    fn cross_entropy(logits: &[f64], label: usize, probs: Option<&mut [f64]>) -> f64 {
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum_exp: f64 = logits.iter().map(|z| (z - max).exp()).sum();
        let log_z = max + sum_exp.ln();
        if let Some(p) = probs {
            for (p, z) in p.iter_mut().zip(logits) {
                *p = (z - log_z).exp();
            }
        }
        log_z - logits[label]
    }

    pub fn logits(&self, params: &ModelParams, x: &[f32]) -> Vec<f64> {
        let mut s = self.scratch();
        self.forward(params.values(), x, &mut s);
        s.activations.pop().unwrap_or_default()
    }

    /// Mean cross-entropy over the given rows. `indices` must be non-empty.
    pub fn loss_on(&self, params: &ModelParams, data: &Dataset, indices: &[usize]) -> f64 {
        let mut s = self.scratch();
        let total: f64 = indices
            .iter()
            .map(|&i| {
                self.forward(params.values(), data.features(i), &mut s);
                Self::cross_entropy(s.activations.last().unwrap(), data.label(i) as usize, None)
            })
            .sum();
        total / indices.len() as f64
    }

    pub fn loss(&self, params: &ModelParams, data: &Dataset) -> Result<f64, LearnError> {
        if data.is_empty() {
            return Err(LearnError::EmptyData);
        }
        let all: Vec<usize> = (0..data.len()).collect();
        Ok(self.loss_on(params, data, &all))
    }

    /// Exact gradient of the mean cross-entropy over `indices`.
    pub fn gradient(&self, params: &ModelParams, data: &Dataset, indices: &[usize]) -> ModelParams {
        let mut grad = params.zeros_like();
        if indices.is_empty() {
            return grad;
        }
        let mut s = self.scratch();
        let layers = s.activations.len() - 1;
        let widths = self.widths();
        let mut offsets = Vec::with_capacity(layers);
        let mut offset = 0;
        for l in 0..layers {
            offsets.push(offset);
            offset += widths[l] * widths[l + 1] + widths[l + 1];
        }
        let w = params.values();
        let g = grad.values_mut();
        for &i in indices {
            self.forward(w, data.features(i), &mut s);
            let label = data.label(i) as usize;
            {
                let logits = s.activations[layers].clone();
                let delta = &mut s.deltas[layers];
                Self::cross_entropy(&logits, label, Some(delta));
                delta[label] -= 1.0;
            }
            for l in (0..layers).rev() {
                let (fan_in, fan_out) = (widths[l], widths[l + 1]);
                let off = offsets[l];
                let (d_head, d_tail) = s.deltas.split_at_mut(l + 1);
                let delta = &d_tail[0];
                let input = &s.activations[l];
                for o in 0..fan_out {
                    let d = delta[o];
                    let row = &mut g[off + o * fan_in..off + (o + 1) * fan_in];
                    for (gw, a) in row.iter_mut().zip(input) {
                        *gw += d * a;
                    }
                    g[off + fan_in * fan_out + o] += d;
                }
                if l > 0 {
                    let prev = &mut d_head[l];
                    for (k, p) in prev.iter_mut().enumerate() {
                        let back: f64 = (0..fan_out)
                            .map(|o| w[off + o * fan_in + k] * delta[o])
                            .sum();
                        let a = input[k];
                        *p = back * (1.0 - a * a);
                    }
                }
            }
        }
        grad.scale(1.0 / indices.len() as f64);
        grad
    }

    pub fn evaluate(&self, params: &ModelParams, data: &Dataset) -> Result<Evaluation, LearnError> {
        if data.is_empty() {
            return Err(LearnError::EmptyData);
        }
        let mut s = self.scratch();
        let mut correct = 0usize;
        let mut loss = 0.0;
        for i in 0..data.len() {
            self.forward(params.values(), data.features(i), &mut s);
            let logits = s.activations.last().unwrap();
            let label = data.label(i) as usize;
            loss += Self::cross_entropy(logits, label, None);
            // first maximum wins ties
            let mut best = 0;
            for (k, &z) in logits.iter().enumerate() {
                if z > logits[best] {
                    best = k;
                }
            }
            if best == label {
                correct += 1;
            }
        }
        let n = data.len() as f64;
        Ok(Evaluation {
            accuracy: correct as f64 / n,
            loss: loss / n,
        })
    }
}
