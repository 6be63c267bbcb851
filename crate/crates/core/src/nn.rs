//! Fully connected Tanh network with hand-written backpropagation and Adam.
//!
//! Parameters live in one flat buffer. Layer `l` maps `n_l -> n_{l+1}` and
//! stores its weights as an `n_{l+1} x n_l` row-major block followed by the
//! `n_{l+1}` biases. Hidden layers use `tanh`; the output layer is affine.

use std::path::Path;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::config::TargetKind;
use crate::error::{Error, Result};
use crate::rng::{stream, stream_rng};
use crate::vector::{Batch, Vector};

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    layer_sizes: Vec<usize>,
    params: Vec<f64>,
}

/// Gradient buffer with the same layout as [`MlpModel`] parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients(pub Vec<f64>);

fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

fn validate_sizes(sizes: &[usize]) -> Result<()> {
    if sizes.len() < 3 {
        return Err(Error::invalid(format!(
            "need input, at least one hidden layer and output; got sizes {sizes:?}"
        )));
    }
    if sizes.contains(&0) {
        return Err(Error::invalid(format!("layer sizes must be positive: {sizes:?}")));
    }
    Ok(())
}

/// Uniform `±1/sqrt(fan_in)` weights, zero biases.
pub fn init_mlp(layer_sizes: &[usize], seed: u64) -> Result<MlpModel> {
    validate_sizes(layer_sizes)?;
    let mut rng = stream_rng(seed, stream::INIT);
    let mut params = Vec::with_capacity(param_count(layer_sizes));
    for w in layer_sizes.windows(2) {
        let (fan_in, fan_out) = (w[0], w[1]);
        let bound = 1.0 / (fan_in as f64).sqrt();
        params.extend((0..fan_in * fan_out).map(|_| rng.random_range(-bound..bound)));
        params.extend(std::iter::repeat_n(0.0, fan_out));
    }
    Ok(MlpModel { layer_sizes: layer_sizes.to_vec(), params })
}

/// Reusable activation buffers for forward/backward passes.
#[derive(Debug, Clone)]
pub struct Workspace {
    acts: Vec<Vec<f64>>,
    deltas: Vec<Vec<f64>>,
}

impl Workspace {
    pub fn new(model: &MlpModel) -> Self {
        Workspace {
            acts: model.layer_sizes.iter().map(|&n| vec![0.0; n]).collect(),
            deltas: model.layer_sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }
}

impl MlpModel {
    pub fn from_params(layer_sizes: &[usize], params: Vec<f64>) -> Result<Self> {
        validate_sizes(layer_sizes)?;
        let expected = param_count(layer_sizes);
        if params.len() != expected {
            return Err(Error::ShapeMismatch { expected, got: params.len() });
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("model parameter".into()));
        }
        Ok(MlpModel { layer_sizes: layer_sizes.to_vec(), params })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn layers(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        let mut offset = 0;
        self.layer_sizes.windows(2).map(move |w| {
            let start = offset;
            offset += w[0] * w[1] + w[1];
            (start, w[0], w[1])
        })
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.input_dim() {
            return Err(Error::ShapeMismatch { expected: self.input_dim(), got: input.len() });
        }
        Ok(())
    }

    /// Forward pass leaving every layer's activation in `ws`.
    fn forward_ws(&self, input: &[f64], ws: &mut Workspace) {
        ws.acts[0].copy_from_slice(input);
        let n_layers = self.layer_sizes.len() - 1;
        for (l, (off, n_in, n_out)) in self.layers().enumerate() {
            let (prev, rest) = ws.acts.split_at_mut(l + 1);
            let a_in = &prev[l];
            let a_out = &mut rest[0];
            let w = &self.params[off..off + n_in * n_out];
            let b = &self.params[off + n_in * n_out..off + n_in * n_out + n_out];
            for (o, (row, bias)) in a_out.iter_mut().zip(w.chunks_exact(n_in).zip(b)) {
                let z = bias + row.iter().zip(a_in).map(|(wi, ai)| wi * ai).sum::<f64>();
                *o = if l + 1 < n_layers { z.tanh() } else { z };
            }
        }
    }

    pub fn forward_into(&self, input: &[f64], ws: &mut Workspace, out: &mut [f64]) -> Result<()> {
        self.check_input(input)?;
        self.forward_ws(input, ws);
        out.copy_from_slice(ws.acts.last().unwrap());
        Ok(())
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vector> {
        let mut ws = Workspace::new(self);
        let mut out = vec![0.0; self.output_dim()];
        self.forward_into(input, &mut ws, &mut out)?;
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("network output".into()));
        }
        Ok(Vector::from_unchecked(out))
    }

    /// Weighted mean squared error `mean_i λ_i ‖target_i - model(input_i)‖²`
    /// and its exact gradient.
    pub fn loss_grad(&self, inputs: &Batch, targets: &Batch, weights: &[f64]) -> Result<(f64, Gradients)> {
        let mut grads = Gradients(vec![0.0; self.params.len()]);
        let mut ws = Workspace::new(self);
        let loss = self.loss_grad_into(inputs, targets, weights, &mut ws, &mut grads)?;
        Ok((loss, grads))
    }

    pub fn loss_grad_into(
        &self,
        inputs: &Batch,
        targets: &Batch,
        weights: &[f64],
        ws: &mut Workspace,
        grads: &mut Gradients,
    ) -> Result<f64> {
        let n = inputs.len();
        if n == 0 {
            return Err(Error::invalid("empty batch"));
        }
        if inputs.dim() != self.input_dim() {
            return Err(Error::ShapeMismatch { expected: self.input_dim(), got: inputs.dim() });
        }
        if targets.dim() != self.output_dim() {
            return Err(Error::ShapeMismatch { expected: self.output_dim(), got: targets.dim() });
        }
        if targets.len() != n {
            return Err(Error::ShapeMismatch { expected: n, got: targets.len() });
        }
        if weights.len() != n {
            return Err(Error::ShapeMismatch { expected: n, got: weights.len() });
        }
        if grads.0.len() != self.params.len() {
            return Err(Error::ShapeMismatch { expected: self.params.len(), got: grads.0.len() });
        }
        grads.0.fill(0.0);
        let layers: Vec<_> = self.layers().collect();
        let last = layers.len();
        let scale = 1.0 / n as f64;
        let mut loss = 0.0;
        for ((input, target), &lambda) in inputs.rows().zip(targets.rows()).zip(weights) {
            self.forward_ws(input, ws);
            let out = &ws.acts[last];
            let delta = &mut ws.deltas[last];
            for ((d, o), y) in delta.iter_mut().zip(out).zip(target) {
                let r = o - y;
                loss += lambda * r * r;
                *d = 2.0 * lambda * scale * r;
            }
            for (l, &(off, n_in, n_out)) in layers.iter().enumerate().rev() {
                let (lo, hi) = ws.deltas.split_at_mut(l + 1);
                let delta_out = &hi[0];
                let a_in = &ws.acts[l];
                let w_off = off;
                let b_off = off + n_in * n_out;
                for (j, &d) in delta_out.iter().enumerate() {
                    grads.0[b_off + j] += d;
                    let g_row = &mut grads.0[w_off + j * n_in..w_off + (j + 1) * n_in];
                    for (g, a) in g_row.iter_mut().zip(a_in) {
                        *g += d * a;
                    }
                }
                if l > 0 {
                    // back through W and the tanh of layer l
                    let delta_in = &mut lo[l];
                    delta_in.fill(0.0);
                    let w = &self.params[w_off..b_off];
                    for (&d, row) in delta_out.iter().zip(w.chunks_exact(n_in)) {
                        for (di, wi) in delta_in.iter_mut().zip(row) {
                            *di += d * wi;
                        }
                    }
                    for (di, a) in delta_in.iter_mut().zip(a_in) {
                        *di *= 1.0 - a * a;
                    }
                }
            }
        }
        Ok(loss * scale)
    }

    pub fn to_checkpoint(&self, target_kind: Option<TargetKind>) -> Checkpoint {
        let layers = self
            .layers()
            .map(|(off, n_in, n_out)| LayerParams {
                weights: self.params[off..off + n_in * n_out].to_vec(),
                bias: self.params[off + n_in * n_out..off + n_in * n_out + n_out].to_vec(),
            })
            .collect();
        Checkpoint { layer_sizes: self.layer_sizes.clone(), target_kind, layers }
    }

    pub fn save(&self, path: impl AsRef<Path>, target_kind: Option<TargetKind>) -> Result<()> {
        std::fs::write(path, serde_json::to_string(&self.to_checkpoint(target_kind))?)?;
        Ok(())
    }
}

pub fn mlp_forward(model: &MlpModel, input: &[f64]) -> Result<Vector> {
    model.forward(input)
}

pub fn mlp_loss_grad(
    model: &MlpModel,
    inputs: &Batch,
    targets: &Batch,
    weights: &[f64],
) -> Result<(f64, Gradients)> {
    model.loss_grad(inputs, targets, weights)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerParams {
    /// Row-major `out x in`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// On-disk model: layer sizes plus row-major parameters per layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub layer_sizes: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_kind: Option<TargetKind>,
    pub layers: Vec<LayerParams>,
}

impl Checkpoint {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn into_model(self) -> Result<MlpModel> {
        validate_sizes(&self.layer_sizes)?;
        if self.layers.len() != self.layer_sizes.len() - 1 {
            return Err(Error::ShapeMismatch {
                expected: self.layer_sizes.len() - 1,
                got: self.layers.len(),
            });
        }
        let mut params = Vec::with_capacity(param_count(&self.layer_sizes));
        for (layer, w) in self.layers.into_iter().zip(self.layer_sizes.windows(2)) {
            if layer.weights.len() != w[0] * w[1] {
                return Err(Error::ShapeMismatch { expected: w[0] * w[1], got: layer.weights.len() });
            }
            if layer.bias.len() != w[1] {
                return Err(Error::ShapeMismatch { expected: w[1], got: layer.bias.len() });
            }
            params.extend(layer.weights);
            params.extend(layer.bias);
        }
        MlpModel::from_params(&self.layer_sizes, params)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamState {
    pub fn new(model: &MlpModel, lr: f64) -> Self {
        AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: vec![0.0; model.num_params()],
            v: vec![0.0; model.num_params()],
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected Adam update.
pub fn adam_step(model: &mut MlpModel, grads: &Gradients, state: &mut AdamState) -> Result<()> {
    let n = model.num_params();
    if grads.0.len() != n {
        return Err(Error::ShapeMismatch { expected: n, got: grads.0.len() });
    }
    if state.m.len() != n {
        return Err(Error::ShapeMismatch { expected: n, got: state.m.len() });
    }
    state.step += 1;
    let bc1 = 1.0 - state.beta1.powf(state.step as f64);
    let bc2 = 1.0 - state.beta2.powf(state.step as f64);
    let (b1, b2) = (state.beta1, state.beta2);
    for (((p, g), m), v) in model.params.iter_mut().zip(&grads.0).zip(&mut state.m).zip(&mut state.v) {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *p -= state.lr * m_hat / (v_hat.sqrt() + state.eps);
    }
    Ok(())
}
