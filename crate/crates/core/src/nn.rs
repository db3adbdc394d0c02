//! Path-quality predictor: language embeddings, a stacked LSTM, and a linear head.
//!
//! All parameters live in one flat `Vec<f64>`; [`LtrModel::tensors`] names
//! the slices. Gradients use the same layout, so the optimizer and the
//! finite-difference check work on plain slices.
//!
//! Gate order inside every weight matrix is input, forget, candidate, output.
//! Each gate owns `hidden_dim` consecutive rows.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};

use crate::error::{Error, Result};
use crate::features::{Embeddings, EncodedPath, FeatureSequence, Token, EMBED_DIM, FEATURE_DIM};

pub const GATES: usize = 4;
pub const INIT_RANGE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gate {
    Input = 0,
    Forget = 1,
    Candidate = 2,
    Output = 3,
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + libm::exp(-x))
}

/// Name and location of one parameter tensor inside the flat vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorSpec {
    pub name: String,
    pub offset: usize,
    pub shape: Vec<usize>,
}

impl TensorSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> core::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

#[derive(Debug, Clone, Copy)]
struct LayerOffsets {
    input_dim: usize,
    w_input: usize,
    w_hidden: usize,
    bias: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LtrModel {
    num_languages: usize,
    hidden_dim: usize,
    num_layers: usize,
    params: Vec<f64>,
}

impl LtrModel {
    /// All-zero model of the given shape.
    pub fn zeros(num_languages: usize, hidden_dim: usize, num_layers: usize) -> Result<Self> {
        if num_languages < 2 {
            return Err(Error::InvalidDims(format!(
                "num_languages must be at least 2, got {num_languages}"
            )));
        }
        if hidden_dim == 0 || num_layers == 0 {
            return Err(Error::InvalidDims(format!(
                "hidden_dim {hidden_dim} and num_layers {num_layers} must be positive"
            )));
        }
        let mut m = LtrModel {
            num_languages,
            hidden_dim,
            num_layers,
            params: Vec::new(),
        };
        m.params = vec![0.0; m.param_count()];
        Ok(m)
    }

    pub fn num_languages(&self) -> usize {
        self.num_languages
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }

    pub fn num_layers(&self) -> usize {
        self.num_layers
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn layer_input_dim(&self, layer: usize) -> usize {
        if layer == 0 {
            FEATURE_DIM
        } else {
            self.hidden_dim
        }
    }

    fn layer_offsets(&self, layer: usize) -> LayerOffsets {
        let h = self.hidden_dim;
        let mut offset = self.num_languages * EMBED_DIM;
        for k in 0..layer {
            let input_dim = self.layer_input_dim(k);
            offset += GATES * h * (input_dim + h + 1);
        }
        let input_dim = self.layer_input_dim(layer);
        LayerOffsets {
            input_dim,
            w_input: offset,
            w_hidden: offset + GATES * h * input_dim,
            bias: offset + GATES * h * (input_dim + h),
        }
    }

    fn head_offset(&self) -> usize {
        let last = self.layer_offsets(self.num_layers - 1);
        last.bias + GATES * self.hidden_dim
    }

    pub fn param_count(&self) -> usize {
        self.head_offset() + self.hidden_dim + 1
    }

    /// Every parameter tensor, in storage order.
    pub fn tensors(&self) -> Vec<TensorSpec> {
        let h = self.hidden_dim;
        let mut out = vec![TensorSpec {
            name: "embeddings".into(),
            offset: 0,
            shape: vec![self.num_languages, EMBED_DIM],
        }];
        for k in 0..self.num_layers {
            let o = self.layer_offsets(k);
            out.push(TensorSpec {
                name: format!("lstm.{k}.w_input"),
                offset: o.w_input,
                shape: vec![GATES * h, o.input_dim],
            });
            out.push(TensorSpec {
                name: format!("lstm.{k}.w_hidden"),
                offset: o.w_hidden,
                shape: vec![GATES * h, h],
            });
            out.push(TensorSpec {
                name: format!("lstm.{k}.bias"),
                offset: o.bias,
                shape: vec![GATES * h],
            });
        }
        let head = self.head_offset();
        out.push(TensorSpec {
            name: "head.weight".into(),
            offset: head,
            shape: vec![h],
        });
        out.push(TensorSpec {
            name: "head.bias".into(),
            offset: head + h,
            shape: vec![1],
        });
        out
    }

    pub fn embeddings(&self) -> Embeddings<'_> {
        Embeddings::new(&self.params[..self.num_languages * EMBED_DIM])
            .expect("embedding block is a whole number of rows")
    }

    /// Rows of one gate in a layer's input weight matrix, row-major.
    pub fn gate_input_weights(&self, layer: usize, gate: Gate) -> core::ops::Range<usize> {
        let o = self.layer_offsets(layer);
        let rows = self.hidden_dim * o.input_dim;
        let start = o.w_input + gate as usize * rows;
        start..start + rows
    }

    pub fn gate_hidden_weights(&self, layer: usize, gate: Gate) -> core::ops::Range<usize> {
        let o = self.layer_offsets(layer);
        let rows = self.hidden_dim * self.hidden_dim;
        let start = o.w_hidden + gate as usize * rows;
        start..start + rows
    }

    pub fn gate_bias(&self, layer: usize, gate: Gate) -> core::ops::Range<usize> {
        let o = self.layer_offsets(layer);
        let start = o.bias + gate as usize * self.hidden_dim;
        start..start + self.hidden_dim
    }
}

/// Uniform `[-0.1, 0.1]` initialization from a seeded ChaCha stream.
pub fn init_model(
    num_languages: usize,
    hidden_dim: usize,
    num_layers: usize,
    seed: u64,
) -> Result<LtrModel> {
    let mut model = LtrModel::zeros(num_languages, hidden_dim, num_layers)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = Uniform::new_inclusive(-INIT_RANGE, INIT_RANGE).expect("valid range");
    for p in model.params.iter_mut() {
        *p = dist.sample(&mut rng);
    }
    Ok(model)
}

/// Activations of one layer over a whole sequence, kept for backpropagation.
/// Each field is `steps` rows laid out back to back.
#[derive(Debug, Clone)]
pub struct LayerTrace {
    pub input_dim: usize,
    /// Layer inputs, `input_dim` per step.
    pub x: Vec<f64>,
    /// Gate activations in input, forget, candidate, output order, `4H` per step.
    pub gates: Vec<f64>,
    pub cell: Vec<f64>,
    pub cell_tanh: Vec<f64>,
    pub hidden: Vec<f64>,
}

/// Borrowed view of one step of a [`LayerTrace`].
#[derive(Debug, Clone, Copy)]
pub struct StepTrace<'a> {
    pub x: &'a [f64],
    pub input_gate: &'a [f64],
    pub forget_gate: &'a [f64],
    pub candidate: &'a [f64],
    pub output_gate: &'a [f64],
    pub cell: &'a [f64],
    pub cell_tanh: &'a [f64],
    pub hidden: &'a [f64],
}

#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub hidden_dim: usize,
    pub steps: usize,
    pub layers: Vec<LayerTrace>,
    pub prediction: f64,
}

impl ForwardTrace {
    pub fn step(&self, layer: usize, t: usize) -> StepTrace<'_> {
        let h = self.hidden_dim;
        let l = &self.layers[layer];
        let g = &l.gates[t * GATES * h..(t + 1) * GATES * h];
        StepTrace {
            x: &l.x[t * l.input_dim..(t + 1) * l.input_dim],
            input_gate: &g[..h],
            forget_gate: &g[h..2 * h],
            candidate: &g[2 * h..3 * h],
            output_gate: &g[3 * h..],
            cell: &l.cell[t * h..(t + 1) * h],
            cell_tanh: &l.cell_tanh[t * h..(t + 1) * h],
            hidden: &l.hidden[t * h..(t + 1) * h],
        }
    }
}

pub fn forward_trace(model: &LtrModel, features: &FeatureSequence) -> Result<ForwardTrace> {
    if features.is_empty() {
        return Err(Error::EmptyInput);
    }
    let h = model.hidden_dim;
    let p = &model.params;
    let steps = features.len();
    let mut x: Vec<f64> = features
        .vectors
        .iter()
        .flat_map(|v| v.iter().copied())
        .collect();
    let mut input_dim = FEATURE_DIM;
    let mut layers = Vec::with_capacity(model.num_layers);
    for k in 0..model.num_layers {
        let o = model.layer_offsets(k);
        if input_dim != o.input_dim {
            return Err(Error::DimensionMismatch {
                expected: o.input_dim,
                got: input_dim,
            });
        }
        let mut gates = vec![0.0; steps * GATES * h];
        let mut cell = vec![0.0; steps * h];
        let mut cell_tanh = vec![0.0; steps * h];
        let mut hidden = vec![0.0; steps * h];
        for t in 0..steps {
            let xt = &x[t * input_dim..(t + 1) * input_dim];
            let z = &mut gates[t * GATES * h..(t + 1) * GATES * h];
            z.copy_from_slice(&p[o.bias..o.bias + GATES * h]);
            let w_in = &p[o.w_input..o.w_input + GATES * h * input_dim];
            for (zr, wi) in z.iter_mut().zip(w_in.chunks_exact(input_dim)) {
                *zr += wi.iter().zip(xt).map(|(w, v)| w * v).sum::<f64>();
            }
            if t > 0 {
                let h_prev = &hidden[(t - 1) * h..t * h];
                let w_h = &p[o.w_hidden..o.w_hidden + GATES * h * h];
                for (zr, wh) in z.iter_mut().zip(w_h.chunks_exact(h)) {
                    *zr += wh.iter().zip(h_prev).map(|(w, v)| w * v).sum::<f64>();
                }
            }
            for (r, zr) in z.iter_mut().enumerate() {
                *zr = if r / h == Gate::Candidate as usize {
                    libm::tanh(*zr)
                } else {
                    sigmoid(*zr)
                };
            }
            for j in 0..h {
                let c_prev = if t > 0 { cell[(t - 1) * h + j] } else { 0.0 };
                let c = z[h + j] * c_prev + z[j] * z[2 * h + j];
                let ct = libm::tanh(c);
                cell[t * h + j] = c;
                cell_tanh[t * h + j] = ct;
                hidden[t * h + j] = z[3 * h + j] * ct;
            }
        }
        let next = hidden.clone();
        layers.push(LayerTrace {
            input_dim,
            x,
            gates,
            cell,
            cell_tanh,
            hidden,
        });
        x = next;
        input_dim = h;
    }
    let head = model.head_offset();
    let last = &x[(steps - 1) * h..];
    let prediction = p[head + h]
        + p[head..head + h]
            .iter()
            .zip(last)
            .map(|(w, v)| w * v)
            .sum::<f64>();
    Ok(ForwardTrace {
        hidden_dim: h,
        steps,
        layers,
        prediction,
    })
}

/// Predicted normalized BLEU. The head is linear, so values may leave `[0, 1]`.
pub fn forward(model: &LtrModel, features: &FeatureSequence) -> Result<f64> {
    Ok(forward_trace(model, features)?.prediction)
}

fn encoded_features(model: &LtrModel, path: &EncodedPath) -> Result<FeatureSequence> {
    for t in &path.tokens {
        let ids = match *t {
            Token::Lang(l) => [l, l],
            Token::Hop(s, d) => [s, d],
        };
        for id in ids {
            if id.0 >= model.num_languages {
                return Err(Error::UnknownLanguageId(id.0));
            }
        }
    }
    path.features(model.embeddings())
}

/// Forward pass on an encoded path, using the model's own embedding table.
pub fn predict(model: &LtrModel, path: &EncodedPath) -> Result<f64> {
    forward(model, &encoded_features(model, path)?)
}

pub fn loss_mse(pred: f64, label: f64) -> f64 {
    let d = pred - label;
    d * d
}

/// Gradient buffer with the model's flat layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub values: Vec<f64>,
}

impl Gradients {
    pub fn zeros_like(model: &LtrModel) -> Self {
        Gradients {
            values: vec![0.0; model.param_count()],
        }
    }

    pub fn clear(&mut self) {
        self.values.iter_mut().for_each(|g| *g = 0.0);
    }

    pub fn scale(&mut self, factor: f64) {
        self.values.iter_mut().for_each(|g| *g *= factor);
    }
}

/// Adds d(loss)/d(params) for one example into `grads`; returns the loss.
pub fn accumulate_gradients(
    model: &LtrModel,
    path: &EncodedPath,
    label: f64,
    grads: &mut Gradients,
) -> Result<f64> {
    if grads.values.len() != model.param_count() {
        return Err(Error::DimensionMismatch {
            expected: model.param_count(),
            got: grads.values.len(),
        });
    }
    let features = encoded_features(model, path)?;
    let trace = forward_trace(model, &features)?;
    let h = model.hidden_dim;
    let p = &model.params;
    let g = &mut grads.values;
    let steps = features.len();

    let dpred = 2.0 * (trace.prediction - label);
    let head = model.head_offset();
    let top = &trace.layers[model.num_layers - 1].hidden;
    let top_last = &top[(steps - 1) * h..];
    for j in 0..h {
        g[head + j] += dpred * top_last[j];
    }
    g[head + h] += dpred;

    // Gradient flowing into each step's hidden output from the layer above,
    // `h` (or the input width, at the bottom) per step.
    let mut dh_in = vec![0.0; steps * h];
    for j in 0..h {
        dh_in[(steps - 1) * h + j] = dpred * p[head + j];
    }
    let mut dh_carry = vec![0.0; h];
    let mut dc_carry = vec![0.0; h];
    let mut dz = vec![0.0; GATES * h];

    for k in (0..model.num_layers).rev() {
        let o = model.layer_offsets(k);
        let layer = &trace.layers[k];
        let in_dim = o.input_dim;
        let mut dx_out = vec![0.0; steps * in_dim];
        dh_carry.iter_mut().for_each(|v| *v = 0.0);
        dc_carry.iter_mut().for_each(|v| *v = 0.0);
        for t in (0..steps).rev() {
            let s = trace.step(k, t);
            for j in 0..h {
                let dh = dh_in[t * h + j] + dh_carry[j];
                let ct = s.cell_tanh[j];
                let d_out = dh * ct;
                let (i, f, c, og) = (
                    s.input_gate[j],
                    s.forget_gate[j],
                    s.candidate[j],
                    s.output_gate[j],
                );
                let dc = dh * og * (1.0 - ct * ct) + dc_carry[j];
                let c_prev = if t > 0 {
                    layer.cell[(t - 1) * h + j]
                } else {
                    0.0
                };
                dz[j] = dc * c * i * (1.0 - i);
                dz[h + j] = dc * c_prev * f * (1.0 - f);
                dz[2 * h + j] = dc * i * (1.0 - c * c);
                dz[3 * h + j] = d_out * og * (1.0 - og);
                dc_carry[j] = dc * f;
            }
            dh_carry.iter_mut().for_each(|v| *v = 0.0);
            let dx = &mut dx_out[t * in_dim..(t + 1) * in_dim];
            for (gb, &dzr) in g[o.bias..o.bias + GATES * h].iter_mut().zip(&dz) {
                *gb += dzr;
            }
            let rows = GATES * h * in_dim;
            let w_in = p[o.w_input..o.w_input + rows].chunks_exact(in_dim);
            let g_in = g[o.w_input..o.w_input + rows].chunks_exact_mut(in_dim);
            for ((gw, w), &dzr) in g_in.zip(w_in).zip(&dz) {
                for (((gc, &wc), &xv), d) in gw.iter_mut().zip(w).zip(s.x).zip(dx.iter_mut()) {
                    *gc += dzr * xv;
                    *d += dzr * wc;
                }
            }
            if t > 0 {
                let h_prev = &layer.hidden[(t - 1) * h..t * h];
                let rows = GATES * h * h;
                let w_h = p[o.w_hidden..o.w_hidden + rows].chunks_exact(h);
                let g_h = g[o.w_hidden..o.w_hidden + rows].chunks_exact_mut(h);
                for ((gw, w), &dzr) in g_h.zip(w_h).zip(&dz) {
                    for (((gc, &wc), &hv), d) in
                        gw.iter_mut().zip(w).zip(h_prev).zip(dh_carry.iter_mut())
                    {
                        *gc += dzr * hv;
                        *d += dzr * wc;
                    }
                }
            }
        }
        dh_in = dx_out;
    }

    // dh_in now holds d(loss)/d(feature vector) for the bottom layer.
    for (t, token) in path.tokens.iter().enumerate() {
        let d = &dh_in[t * FEATURE_DIM..t * FEATURE_DIM + EMBED_DIM];
        match *token {
            Token::Lang(l) => {
                for (e, dv) in d.iter().enumerate() {
                    g[l.0 * EMBED_DIM + e] += dv;
                }
            }
            Token::Hop(a, b) => {
                for (e, dv) in d.iter().enumerate() {
                    g[a.0 * EMBED_DIM + e] += 0.5 * dv;
                    g[b.0 * EMBED_DIM + e] += 0.5 * dv;
                }
            }
        }
    }
    Ok(loss_mse(trace.prediction, label))
}

/// Exact gradient of the squared error for a single example.
pub fn backward(model: &LtrModel, path: &EncodedPath, label: f64) -> Result<Gradients> {
    let mut grads = Gradients::zeros_like(model);
    accumulate_gradients(model, path, label, &mut grads)?;
    Ok(grads)
}

/// Maximum relative error between `analytic` and central differences over
/// every parameter: `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn grad_check_against(
    model: &LtrModel,
    path: &EncodedPath,
    label: f64,
    epsilon: f64,
    analytic: &Gradients,
) -> Result<f64> {
    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    for i in 0..probe.params.len() {
        let orig = probe.params[i];
        probe.params[i] = orig + epsilon;
        let plus = predict(&probe, path)?;
        probe.params[i] = orig - epsilon;
        let minus = predict(&probe, path)?;
        probe.params[i] = orig;
        // (L(p+) - L(p-)) / 2e, factored as (p+ - p-)(p+ + p- - 2y) / 2e so the
        // squared-loss subtraction does not cancel away tiny gradients.
        let numeric = (plus - minus) * (plus + minus - 2.0 * label) / (2.0 * epsilon);
        let a = analytic.values[i];
        let denom = a.abs().max(numeric.abs()).max(1e-8);
        worst = worst.max((a - numeric).abs() / denom);
    }
    Ok(worst)
}

pub fn grad_check(model: &LtrModel, path: &EncodedPath, label: f64, epsilon: f64) -> Result<f64> {
    let analytic = backward(model, path, label)?;
    grad_check_against(model, path, label, epsilon, &analytic)
}

#[derive(Debug, Clone)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: i32,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(num_params: usize, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        Adam {
            beta1,
            beta2,
            epsilon,
            step: 0,
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64], learning_rate: f64) {
        self.step += 1;
        let bc1 = 1.0 - libm::pow(self.beta1, self.step as f64);
        let bc2 = 1.0 - libm::pow(self.beta2, self.step as f64);
        for (((p, &g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= learning_rate * m_hat / (libm::sqrt(v_hat) + self.epsilon);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            epochs: 30,
            batch_size: 8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "learning rate must be finite and nonnegative, got {}",
                self.learning_rate
            )));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidConfig(
                "epochs and batch_size must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// A labeled development pair: candidates in tie order and the index of the
/// best one under that order.
#[derive(Debug, Clone)]
pub struct DevPair {
    pub candidates: Vec<EncodedPath>,
    pub best: usize,
}

/// Fraction of pairs whose highest-predicted candidate (first on ties) is the best.
pub fn dev_top1(model: &LtrModel, dev: &[DevPair]) -> Result<f64> {
    if dev.is_empty() {
        return Ok(0.0);
    }
    let mut hits = 0usize;
    for pair in dev {
        let mut best_idx = 0;
        let mut best_score = f64::NEG_INFINITY;
        for (i, c) in pair.candidates.iter().enumerate() {
            let s = predict(model, c)?;
            if s > best_score {
                best_score = s;
                best_idx = i;
            }
        }
        if best_idx == pair.best {
            hits += 1;
        }
    }
    Ok(hits as f64 / dev.len() as f64)
}

pub fn mean_loss(model: &LtrModel, data: &[(EncodedPath, f64)]) -> Result<f64> {
    let mut total = 0.0;
    for (path, label) in data {
        total += loss_mse(predict(model, path)?, *label);
    }
    Ok(total / data.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Mean squared error on the training set before the first update.
    pub initial_mse: f64,
    pub train_mse: Vec<f64>,
    pub dev_top1: Vec<f64>,
    /// Zero-based epoch whose parameters were kept.
    pub selected_epoch: usize,
}

/// Mini-batch Adam on squared error; keeps the epoch with the best dev top-1
/// accuracy (earliest on ties), or the last epoch when `dev` is empty.
pub fn train(
    model: &LtrModel,
    data: &[(EncodedPath, f64)],
    dev: &[DevPair],
    config: &TrainConfig,
) -> Result<(LtrModel, TrainReport)> {
    if data.is_empty() {
        return Err(Error::EmptyInput);
    }
    config.validate()?;
    let mut current = model.clone();
    let mut adam = Adam::new(
        current.param_count(),
        config.beta1,
        config.beta2,
        config.epsilon,
    );
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut grads = Gradients::zeros_like(&current);

    let initial_mse = mean_loss(&current, data)?;
    let mut report = TrainReport {
        initial_mse,
        train_mse: Vec::with_capacity(config.epochs),
        dev_top1: Vec::with_capacity(config.epochs),
        selected_epoch: 0,
    };
    let mut best: Option<(f64, LtrModel)> = None;

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            grads.clear();
            for &i in batch {
                let (path, label) = &data[i];
                accumulate_gradients(&current, path, *label, &mut grads)?;
            }
            grads.scale(1.0 / batch.len() as f64);
            adam.step(&mut current.params, &grads.values, config.learning_rate);
        }
        let mse = mean_loss(&current, data)?;
        if !mse.is_finite() {
            return Err(Error::Diverged(epoch));
        }
        let top1 = dev_top1(&current, dev)?;
        report.train_mse.push(mse);
        report.dev_top1.push(top1);
        let improves = match &best {
            None => true,
            Some((b, _)) => top1 > *b || dev.is_empty(),
        };
        if improves {
            best = Some((top1, current.clone()));
            report.selected_epoch = epoch;
        }
    }
    let (_, chosen) = best.expect("at least one epoch");
    Ok((chosen, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::{LangId, QualityMatrix};
    use crate::path::Path;

    fn sample_path(n: usize, langs: &[usize]) -> EncodedPath {
        let m = QualityMatrix::from_fn(n, |s, t| ((s.0 * 7 + t.0 * 13) % 50) as f64 + 3.0).unwrap();
        let p = Path::new(langs.iter().map(|&i| LangId(i)).collect()).unwrap();
        EncodedPath::new(&p, &m).unwrap()
    }

    #[test]
    fn init_is_deterministic_and_shaped() {
        let a = init_model(5, 6, 2, 0).unwrap();
        let b = init_model(5, 6, 2, 0).unwrap();
        let c = init_model(5, 6, 2, 1).unwrap();
        assert_eq!(a.params(), b.params());
        assert_ne!(a.params(), c.params());
        assert!(a.params().iter().all(|p| p.abs() <= INIT_RANGE));
        let shapes: Vec<(String, Vec<usize>)> =
            a.tensors().into_iter().map(|t| (t.name, t.shape)).collect();
        assert_eq!(shapes[1], ("lstm.0.w_input".into(), vec![24, 6]));
        assert_eq!(shapes[2], ("lstm.0.w_hidden".into(), vec![24, 6]));
        assert_eq!(shapes[4], ("lstm.1.w_input".into(), vec![24, 6]));
        assert_eq!(a.gate_input_weights(0, Gate::Forget).len(), 36);
        let total: usize = a.tensors().iter().map(TensorSpec::len).sum();
        assert_eq!(total, a.param_count());
        assert!(init_model(1, 6, 2, 0).is_err());
        assert!(init_model(5, 0, 2, 0).is_err());
        assert!(init_model(5, 6, 0, 0).is_err());
    }

    #[test]
    fn zero_network_predicts_zero() {
        let m = LtrModel::zeros(5, 6, 2).unwrap();
        assert_eq!(predict(&m, &sample_path(5, &[0, 1, 2, 3])).unwrap(), 0.0);
    }

    #[test]
    fn single_step_matches_hand_computation() {
        let mut m = LtrModel::zeros(2, 1, 1).unwrap();
        // Input 6 -> hidden 1: one row per gate.
        let w = [0.3, -0.2, 0.5, 0.1];
        for (g, gate) in [Gate::Input, Gate::Forget, Gate::Candidate, Gate::Output]
            .into_iter()
            .enumerate()
        {
            let r = m.gate_input_weights(0, gate);
            m.params_mut()[r.start + 5] = w[g];
            let b = m.gate_bias(0, gate);
            m.params_mut()[b.start] = 0.05 * g as f64;
        }
        let head = m.param_count() - 2;
        m.params_mut()[head] = 2.0;
        m.params_mut()[head + 1] = 0.25;
        let seq = FeatureSequence {
            vectors: vec![[0.0, 0.0, 0.0, 0.0, 0.0, 0.8]],
        };
        let x: f64 = 0.8;
        let i = 1.0 / (1.0 + (-(0.3 * x)).exp());
        let g = (0.5 * x + 0.1).tanh();
        let o = 1.0 / (1.0 + (-(0.1 * x + 0.15)).exp());
        let c = i * g;
        let expected = 2.0 * o * c.tanh() + 0.25;
        let got = forward(&m, &seq).unwrap();
        assert!((got - expected).abs() < 1e-15, "{got} vs {expected}");
    }

    #[test]
    fn loss_examples() {
        assert_eq!(loss_mse(0.3, 0.3), 0.0);
        assert_eq!(loss_mse(0.0, 1.0), 1.0);
        assert!((loss_mse(0.5, 0.0656) - 0.188_703_36).abs() < 1e-12);
    }

    #[test]
    fn untouched_embeddings_get_zero_gradient() {
        let m = init_model(6, 6, 2, 3).unwrap();
        let path = sample_path(6, &[0, 2, 4]);
        let g = backward(&m, &path, 0.2).unwrap();
        for l in [1usize, 3, 5] {
            assert!(g.values[l * EMBED_DIM..(l + 1) * EMBED_DIM]
                .iter()
                .all(|&v| v == 0.0));
        }
        assert!(g.values[..EMBED_DIM].iter().any(|&v| v != 0.0));
    }

    #[test]
    #[allow(clippy::needless_range_loop)]
    fn hop_token_splits_gradient_evenly() {
        // One-hop path: tokens [Lang 0, Hop 0->1, Lang 1]. d(loss)/d(x_t) comes
        // from finite differences on the feature vectors themselves.
        let m = init_model(3, 4, 1, 9).unwrap();
        let path = sample_path(3, &[0, 1]);
        let features = path.features(m.embeddings()).unwrap();
        let g = backward(&m, &path, 0.5).unwrap();
        let eps = 1e-6;
        let mut dx = [[0.0; EMBED_DIM]; 3];
        for t in 0..3 {
            for e in 0..EMBED_DIM {
                let mut up = features.clone();
                up.vectors[t][e] += eps;
                let mut dn = features.clone();
                dn.vectors[t][e] -= eps;
                let lp = loss_mse(forward(&m, &up).unwrap(), 0.5);
                let lm = loss_mse(forward(&m, &dn).unwrap(), 0.5);
                dx[t][e] = (lp - lm) / (2.0 * eps);
            }
        }
        for e in 0..EMBED_DIM {
            let lang0 = dx[0][e] + 0.5 * dx[1][e];
            let lang1 = dx[2][e] + 0.5 * dx[1][e];
            assert!((g.values[e] - lang0).abs() < 1e-7);
            assert!((g.values[EMBED_DIM + e] - lang1).abs() < 1e-7);
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let m = init_model(6, 6, 2, 0).unwrap();
        let path = sample_path(6, &[0, 3, 1, 5]);
        let err = grad_check(&m, &path, 0.37, 1e-5).unwrap();
        assert!(err < 1e-4, "max relative error {err}");
    }

    #[test]
    fn corrupted_forget_gate_is_detected() {
        let m = init_model(6, 6, 2, 0).unwrap();
        let path = sample_path(6, &[0, 3, 1, 5]);
        let mut g = backward(&m, &path, 0.37).unwrap();
        for i in m.gate_input_weights(0, Gate::Forget) {
            g.values[i] *= 1.5;
        }
        let err = grad_check_against(&m, &path, 0.37, 1e-5, &g).unwrap();
        assert!(err > 1e-2, "mutation not detected: {err}");
    }

    #[test]
    fn gate_activations_stay_in_range() {
        let m = init_model(6, 6, 2, 4).unwrap();
        let path = sample_path(6, &[5, 2, 0, 1]);
        let trace = forward_trace(&m, &path.features(m.embeddings()).unwrap()).unwrap();
        assert_eq!(trace.steps, 7);
        for (k, t) in (0..2).flat_map(|k| (0..7).map(move |t| (k, t))) {
            let step = trace.step(k, t);
            for &v in step
                .input_gate
                .iter()
                .chain(step.forget_gate)
                .chain(step.output_gate)
            {
                assert!(v > 0.0 && v < 1.0);
            }
            for &v in step.candidate.iter().chain(step.cell_tanh) {
                assert!(v > -1.0 && v < 1.0);
            }
        }
    }

    #[test]
    fn forward_has_no_hidden_state() {
        let m = init_model(6, 6, 2, 2).unwrap();
        let a = sample_path(6, &[0, 1, 2]);
        let b = sample_path(6, &[3, 4]);
        let first = predict(&m, &a).unwrap();
        predict(&m, &b).unwrap();
        assert_eq!(predict(&m, &a).unwrap().to_bits(), first.to_bits());
    }

    #[test]
    fn overfits_single_point() {
        let m = init_model(4, 6, 2, 0).unwrap();
        let data = vec![(sample_path(4, &[0, 1, 2, 3]), 0.42)];
        let config = TrainConfig {
            epochs: 300,
            batch_size: 1,
            ..TrainConfig::default()
        };
        let (trained, report) = train(&m, &data, &[], &config).unwrap();
        assert_eq!(report.train_mse.len(), 300);
        assert_eq!(report.selected_epoch, 299);
        assert!(report.train_mse[299] < report.initial_mse);
        assert!(mean_loss(&trained, &data).unwrap() < 1e-4);
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let m = init_model(4, 6, 2, 0).unwrap();
        let data = vec![
            (sample_path(4, &[0, 1, 2, 3]), 0.42),
            (sample_path(4, &[1, 3]), 0.1),
        ];
        let config = TrainConfig {
            learning_rate: 0.0,
            epochs: 3,
            ..TrainConfig::default()
        };
        let (trained, _) = train(&m, &data, &[], &config).unwrap();
        assert_eq!(trained.params(), m.params());
    }

    #[test]
    fn training_is_deterministic() {
        let m = init_model(4, 6, 2, 0).unwrap();
        let data: Vec<_> = [[0usize, 1, 2, 3], [1, 0, 3, 2], [2, 3, 0, 1]]
            .iter()
            .enumerate()
            .map(|(i, p)| (sample_path(4, p), 0.1 * i as f64))
            .collect();
        let dev = vec![DevPair {
            candidates: vec![sample_path(4, &[0, 3]), sample_path(4, &[0, 1, 3])],
            best: 1,
        }];
        let config = TrainConfig {
            epochs: 5,
            batch_size: 2,
            seed: 11,
            ..TrainConfig::default()
        };
        let a = train(&m, &data, &dev, &config).unwrap();
        let b = train(&m, &data, &dev, &config).unwrap();
        assert_eq!(a.1, b.1);
        assert_eq!(a.0, b.0);
        assert!(train(&m, &[], &dev, &config).is_err());
    }
}
