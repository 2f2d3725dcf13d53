//! Residual feed-forward network `x_out = x_in + N(x_in, alpha, delta)`.
//!
//! Each layer is stored as one matrix with the bias appended as the last
//! column, so layer `j` maps `a -> W[:, ..n] a + W[:, n]`. Hidden layers apply
//! the configured activation; the output layer is linear unless
//! `output_tanh` is set, in which case the increment itself passes through
//! `tanh` before the skip connection adds `x_in`.

use std::fs;
use std::path::Path;

use ndarray::{s, Array1, Array2, ArrayView2, Axis, Zip};
use serde::{Deserialize, Serialize};

use crate::domain::{ParamVec, StateVec};
use crate::error::{check_dim, FlowError, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    pub fn as_str(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
        }
    }

    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
        }
    }

    /// Derivative expressed through the activation's output value.
    #[inline]
    fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = FlowError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            other => Err(FlowError::invalid(format!("unknown activation '{other}'"))),
        }
    }
}

/// Architecture `(M, n)` plus the input/output dimensions of the flow map.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetworkSpec {
    pub d: usize,
    pub l: usize,
    pub hidden_layers: usize,
    pub width: usize,
    pub activation: Activation,
    pub output_tanh: bool,
}

impl NetworkSpec {
    pub fn new(d: usize, l: usize, hidden_layers: usize, width: usize) -> Self {
        Self {
            d,
            l,
            hidden_layers,
            width,
            activation: Activation::Tanh,
            output_tanh: false,
        }
    }

    pub fn with_activation(mut self, activation: Activation) -> Self {
        self.activation = activation;
        self
    }

    pub fn with_output_tanh(mut self, output_tanh: bool) -> Self {
        self.output_tanh = output_tanh;
        self
    }

    pub fn input_dim(&self) -> usize {
        self.d + self.l + 1
    }

    /// `(rows, cols)` of every augmented weight matrix, input layer first.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut shapes = Vec::with_capacity(self.hidden_layers + 1);
        let mut fan_in = self.input_dim();
        for _ in 0..self.hidden_layers {
            shapes.push((self.width, fan_in + 1));
            fan_in = self.width;
        }
        shapes.push((self.d, fan_in + 1));
        shapes
    }

    /// Trainable parameter count `m`, biases included.
    pub fn param_count(&self) -> usize {
        self.layer_shapes().iter().map(|(r, c)| r * c).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(FlowError::invalid("state dimension must be >= 1"));
        }
        if self.hidden_layers == 0 || self.width == 0 {
            return Err(FlowError::invalid("network needs M >= 1 hidden layers of width n >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    spec: NetworkSpec,
    weights: Vec<Array2<f64>>,
}

/// Per-layer values of one batched forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// `B x (d + l + 1)` rows `[x_in, alpha, delta]`.
    pub inputs: Array2<f64>,
    /// Hidden activations `a_1 .. a_M`, each `B x n`.
    pub hidden: Vec<Array2<f64>>,
    /// Network increment `N(y_in)`, `B x d`.
    pub increment: Array2<f64>,
    /// `x_in + N(y_in)`, `B x d`.
    pub x_out: Array2<f64>,
}

/// Gradients shaped like the network's augmented weight matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients(pub Vec<Array2<f64>>);

impl Gradients {
    pub fn max_abs(&self) -> f64 {
        self.0
            .iter()
            .flat_map(|g| g.iter())
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Builds the `[x_in, alpha, delta]` input row.
pub fn input_row(x_in: &[f64], alpha: &[f64], delta: f64) -> Vec<f64> {
    let mut row = Vec::with_capacity(x_in.len() + alpha.len() + 1);
    row.extend_from_slice(x_in);
    row.extend_from_slice(alpha);
    row.push(delta);
    row
}

impl Network {
    /// Zero network, whose increment vanishes identically.
    pub fn zeros(spec: NetworkSpec) -> Result<Self> {
        spec.validate()?;
        let weights = spec
            .layer_shapes()
            .into_iter()
            .map(|(r, c)| Array2::zeros((r, c)))
            .collect();
        Ok(Self { spec, weights })
    }

    /// Gaussian weights with variance `1 / fan_in`; bias columns start at zero.
    pub fn init(spec: NetworkSpec, rng: &mut Rng) -> Result<Self> {
        spec.validate()?;
        let weights = spec
            .layer_shapes()
            .into_iter()
            .map(|(rows, cols)| {
                let fan_in = cols - 1;
                let scale = 1.0 / (fan_in as f64).sqrt();
                Array2::from_shape_fn((rows, cols), |(_, c)| {
                    if c == fan_in {
                        0.0
                    } else {
                        scale * rng.normal()
                    }
                })
            })
            .collect();
        Ok(Self { spec, weights })
    }

    pub fn from_weights(spec: NetworkSpec, weights: Vec<Array2<f64>>) -> Result<Self> {
        spec.validate()?;
        let shapes = spec.layer_shapes();
        if weights.len() != shapes.len() {
            return Err(FlowError::Model(format!(
                "expected {} weight matrices, found {}",
                shapes.len(),
                weights.len()
            )));
        }
        for (j, (w, (r, c))) in weights.iter().zip(&shapes).enumerate() {
            if w.nrows() != *r {
                return Err(FlowError::Model(format!(
                    "layer {}: expected {r} rows, found {}",
                    j + 1,
                    w.nrows()
                )));
            }
            if w.ncols() != *c {
                return Err(FlowError::Model(format!(
                    "layer {}: expected {c} columns, found {}",
                    j + 1,
                    w.ncols()
                )));
            }
            if w.iter().any(|v| !v.is_finite()) {
                return Err(FlowError::Model(format!("layer {}: non-finite weight", j + 1)));
            }
        }
        Ok(Self { spec, weights })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn weights(&self) -> &[Array2<f64>] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [Array2<f64>] {
        &mut self.weights
    }

    pub fn param_count(&self) -> usize {
        self.spec.param_count()
    }

    /// Batched forward pass over rows `[x_in, alpha, delta]`.
    pub fn forward_batch(&self, inputs: ArrayView2<'_, f64>) -> Result<ForwardCache> {
        check_dim("network input columns", self.spec.input_dim(), inputs.ncols())?;
        let act = self.spec.activation;
        let last = self.weights.len() - 1;
        let mut hidden = Vec::with_capacity(last);
        let mut prev = inputs.to_owned();
        for w in &self.weights[..last] {
            let mut z = affine(&prev, w);
            z.mapv_inplace(|v| act.apply(v));
            hidden.push(z.clone());
            prev = z;
        }
        let mut increment = affine(&prev, &self.weights[last]);
        if self.spec.output_tanh {
            increment.mapv_inplace(f64::tanh);
        }
        let x_out = &inputs.slice(s![.., ..self.spec.d]) + &increment;
        Ok(ForwardCache {
            inputs: inputs.to_owned(),
            hidden,
            increment,
            x_out,
        })
    }

    /// Single-sample forward pass returning the prediction and its cache.
    pub fn forward(&self, x_in: &StateVec, alpha: &ParamVec, delta: f64) -> Result<(StateVec, ForwardCache)> {
        check_dim("state", self.spec.d, x_in.len())?;
        check_dim("parameters", self.spec.l, alpha.len())?;
        let row = input_row(x_in, alpha, delta);
        let inputs = Array2::from_shape_vec((1, row.len()), row).expect("row shape");
        let cache = self.forward_batch(inputs.view())?;
        let out = StateVec::new(cache.x_out.row(0).to_vec());
        Ok((out, cache))
    }

    /// The learned increment `N(x, alpha, delta)` for one sample, unchecked
    /// dimensions aside from debug assertions.
    pub fn increment(&self, x: &[f64], alpha: &[f64], delta: f64) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.spec.d);
        debug_assert_eq!(alpha.len(), self.spec.l);
        let act = self.spec.activation;
        let mut prev = input_row(x, alpha, delta);
        let last = self.weights.len() - 1;
        for (j, w) in self.weights.iter().enumerate() {
            let n_in = w.ncols() - 1;
            let mut next = Vec::with_capacity(w.nrows());
            for row in w.rows() {
                let row = row.as_slice().expect("standard layout");
                let mut z = row[n_in];
                for (wi, ai) in row[..n_in].iter().zip(&prev) {
                    z += wi * ai;
                }
                next.push(if j < last {
                    act.apply(z)
                } else if self.spec.output_tanh {
                    z.tanh()
                } else {
                    z
                });
            }
            prev = next;
        }
        prev
    }

    /// Gradients of `mean_b ||x_out_b - target_b||^2` given the residuals
    /// `x_out - target` of the cached batch.
    pub fn backward(&self, cache: &ForwardCache, residual: ArrayView2<'_, f64>) -> Result<Gradients> {
        let batch = cache.inputs.nrows();
        check_dim("residual rows", batch, residual.nrows())?;
        check_dim("residual columns", self.spec.d, residual.ncols())?;
        check_dim("cached hidden layers", self.spec.hidden_layers, cache.hidden.len())?;
        if batch == 0 {
            return Err(FlowError::EmptyBatch);
        }
        let act = self.spec.activation;
        let scale = 2.0 / batch as f64;

        // dL/d(pre-activation of the output layer)
        let mut delta = residual.mapv(|r| scale * r);
        if self.spec.output_tanh {
            Zip::from(&mut delta)
                .and(&cache.increment)
                .for_each(|g, &o| *g *= 1.0 - o * o);
        }

        let mut grads: Vec<Array2<f64>> = Vec::with_capacity(self.weights.len());
        for j in (0..self.weights.len()).rev() {
            let w = &self.weights[j];
            let n_in = w.ncols() - 1;
            let prev = if j == 0 { cache.inputs.view() } else { cache.hidden[j - 1].view() };
            let mut g = Array2::<f64>::zeros(w.raw_dim());
            g.slice_mut(s![.., ..n_in]).assign(&delta.t().dot(&prev));
            g.column_mut(n_in).assign(&delta.sum_axis(Axis(0)));
            grads.push(g);
            if j > 0 {
                let mut back = delta.dot(&w.slice(s![.., ..n_in]));
                Zip::from(&mut back)
                    .and(&cache.hidden[j - 1])
                    .for_each(|b, &a| *b *= act.derivative_from_output(a));
                delta = back;
            }
        }
        grads.reverse();
        Ok(Gradients(grads))
    }
}

fn affine(a: &Array2<f64>, w: &Array2<f64>) -> Array2<f64> {
    let n_in = w.ncols() - 1;
    let mut z = a.dot(&w.slice(s![.., ..n_in]).t());
    let bias: Array1<f64> = w.column(n_in).to_owned();
    z += &bias;
    z
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<Array2<f64>>,
    pub v: Vec<Array2<f64>>,
    pub config: AdamConfig,
}

impl AdamState {
    pub fn new(net: &Network, config: AdamConfig) -> Self {
        let zeros = || net.weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect::<Vec<_>>();
        Self {
            step: 0,
            m: zeros(),
            v: zeros(),
            config,
        }
    }
}

/// One bias-corrected Adam step on every weight, incrementing the step counter.
pub fn adam_update(net: &mut Network, state: &mut AdamState, grads: &Gradients) -> Result<()> {
    check_dim("gradient layers", net.weights.len(), grads.0.len())?;
    for (w, g) in net.weights.iter().zip(&grads.0) {
        if w.raw_dim() != g.raw_dim() {
            return Err(FlowError::invalid("gradient shape does not match weights"));
        }
    }
    let AdamConfig { lr, beta1, beta2, eps } = state.config;
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);
    for (((w, g), m), v) in net
        .weights
        .iter_mut()
        .zip(&grads.0)
        .zip(&mut state.m)
        .zip(&mut state.v)
    {
        Zip::from(w).and(g).and(m).and(v).for_each(|w, &g, m, v| {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *w -= lr * m_hat / (v_hat.sqrt() + eps);
        });
    }
    Ok(())
}

pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    version: u32,
    d: usize,
    l: usize,
    hidden_layers: usize,
    width: usize,
    activation: Activation,
    output_tanh: bool,
    weights: Vec<Vec<Vec<f64>>>,
}

pub fn model_to_string(net: &Network) -> String {
    let file = ModelFile {
        version: MODEL_VERSION,
        d: net.spec.d,
        l: net.spec.l,
        hidden_layers: net.spec.hidden_layers,
        width: net.spec.width,
        activation: net.spec.activation,
        output_tanh: net.spec.output_tanh,
        weights: net
            .weights
            .iter()
            .map(|w| w.rows().into_iter().map(|r| r.to_vec()).collect())
            .collect(),
    };
    let mut s = serde_json::to_string(&file).expect("model serializes");
    s.push('\n');
    s
}

pub fn model_from_str(text: &str) -> Result<Network> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| {
        if e.is_eof() {
            FlowError::TruncatedModel
        } else {
            FlowError::Model(e.to_string())
        }
    })?;
    match value.get("version").and_then(serde_json::Value::as_u64) {
        Some(v) if v == u64::from(MODEL_VERSION) => {}
        Some(v) => {
            return Err(FlowError::Model(format!(
                "unsupported model version {v} (expected {MODEL_VERSION})"
            )))
        }
        None => return Err(FlowError::Model("missing 'version' field".into())),
    }
    let file: ModelFile = serde_json::from_value(value).map_err(|e| FlowError::Model(e.to_string()))?;
    let spec = NetworkSpec {
        d: file.d,
        l: file.l,
        hidden_layers: file.hidden_layers,
        width: file.width,
        activation: file.activation,
        output_tanh: file.output_tanh,
    };
    spec.validate()?;
    let shapes = spec.layer_shapes();
    if file.weights.len() != shapes.len() {
        return Err(FlowError::Model(format!(
            "expected {} weight matrices, found {}",
            shapes.len(),
            file.weights.len()
        )));
    }
    let mut weights = Vec::with_capacity(shapes.len());
    for (j, (rows, (r, c))) in file.weights.into_iter().zip(shapes).enumerate() {
        if rows.len() != r {
            return Err(FlowError::Model(format!(
                "layer {}: expected {r} rows, found {}",
                j + 1,
                rows.len()
            )));
        }
        let mut flat = Vec::with_capacity(r * c);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != c {
                return Err(FlowError::Model(format!(
                    "layer {}, row {}: expected {c} columns, found {}",
                    j + 1,
                    i + 1,
                    row.len()
                )));
            }
            flat.extend(row);
        }
        weights.push(Array2::from_shape_vec((r, c), flat).expect("checked shape"));
    }
    Network::from_weights(spec, weights)
}

pub fn save_model(net: &Network, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, model_to_string(net)).map_err(|e| FlowError::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Network> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| FlowError::io(path, e))?;
    model_from_str(&text)
}
