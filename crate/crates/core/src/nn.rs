//! Small dense networks with hand-written backpropagation.
//!
//! Parameters live in one flat `Vec<f64>` so that optimizers, target-network
//! averaging, checkpoints and finite-difference checks can all treat a network
//! as a plain vector. Layer views into that vector are built on demand.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const LAYER_NORM_EPS: f64 = 1e-8;
pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the activation output `y`.
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
        }
    }
}

/// Architecture descriptor: everything needed to rebuild a network except its weights.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub layer_sizes: Vec<usize>,
    pub activation: Activation,
    pub layer_norm: bool,
}

impl MlpSpec {
    pub fn new(layer_sizes: Vec<usize>, activation: Activation, layer_norm: bool) -> Self {
        Self {
            layer_sizes,
            activation,
            layer_norm,
        }
    }

    /// `input -> hidden... -> output`, the usual shape for every network here.
    pub fn with_hidden(input: usize, hidden: &[usize], output: usize, layer_norm: bool) -> Self {
        let mut sizes = Vec::with_capacity(hidden.len() + 2);
        sizes.push(input);
        sizes.extend_from_slice(hidden);
        sizes.push(output);
        Self::new(sizes, Activation::Relu, layer_norm)
    }

    fn validate(&self) -> Result<()> {
        if self.layer_sizes.len() < 2 {
            return Err(Error::Shape("an MLP needs at least input and output sizes".into()));
        }
        if self.layer_sizes.contains(&0) {
            return Err(Error::Shape(format!("zero-width layer in {:?}", self.layer_sizes)));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().expect("validated")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct LayerLayout {
    fan_in: usize,
    fan_out: usize,
    weight: usize,
    bias: usize,
    /// Offsets of (gain, shift) when the layer is layer-normalized.
    norm: Option<(usize, usize)>,
}

fn build_layout(spec: &MlpSpec) -> (Vec<LayerLayout>, usize) {
    let n_layers = spec.layer_sizes.len() - 1;
    let mut offset = 0;
    let mut layout = Vec::with_capacity(n_layers);
    for (i, pair) in spec.layer_sizes.windows(2).enumerate() {
        let (fan_in, fan_out) = (pair[0], pair[1]);
        let weight = offset;
        offset += fan_in * fan_out;
        let bias = offset;
        offset += fan_out;
        let hidden = i + 1 < n_layers;
        let norm = if hidden && spec.layer_norm {
            let gain = offset;
            offset += fan_out;
            let shift = offset;
            offset += fan_out;
            Some((gain, shift))
        } else {
            None
        };
        layout.push(LayerLayout {
            fan_in,
            fan_out,
            weight,
            bias,
            norm,
        });
    }
    (layout, offset)
}

/// Multilayer perceptron. Hidden layers run `linear -> [layer norm] -> activation`;
/// the output layer is linear.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    spec: MlpSpec,
    layout: Vec<LayerLayout>,
    params: Vec<f64>,
}

/// Intermediate values of a training forward pass, consumed by [`Mlp::backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    inputs: Vec<Array2<f64>>,
    normalized: Vec<Option<(Array2<f64>, Array1<f64>)>>,
    activations: Vec<Option<Array2<f64>>>,
}

impl Mlp {
    /// Fan-in uniform initialization. `output_scale` multiplies the final
    /// layer's initial weights and bias (0.01 for policy heads).
    pub fn new<R: Rng + ?Sized>(spec: MlpSpec, output_scale: f64, rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(spec)?;
        let n_layers = net.layout.len();
        for (i, layer) in net.layout.clone().into_iter().enumerate() {
            let bound = 1.0 / (layer.fan_in as f64).sqrt();
            let scale = if i + 1 == n_layers { output_scale } else { 1.0 };
            for p in &mut net.params[layer.weight..layer.bias + layer.fan_out] {
                *p = rng.random_range(-bound..bound) * scale;
            }
            if let Some((gain, _)) = layer.norm {
                net.params[gain..gain + layer.fan_out].fill(1.0);
            }
        }
        Ok(net)
    }

    /// All weights and biases zero, layer-norm gains one.
    pub fn zeros(spec: MlpSpec) -> Result<Self> {
        spec.validate()?;
        let (layout, n_params) = build_layout(&spec);
        let mut params = vec![0.0; n_params];
        for layer in &layout {
            if let Some((gain, _)) = layer.norm {
                params[gain..gain + layer.fan_out].fill(1.0);
            }
        }
        Ok(Self {
            spec,
            layout,
            params,
        })
    }

    pub fn from_params(spec: MlpSpec, params: Vec<f64>) -> Result<Self> {
        spec.validate()?;
        let (layout, n_params) = build_layout(&spec);
        if params.len() != n_params {
            return Err(Error::Shape(format!(
                "expected {n_params} parameters, got {}",
                params.len()
            )));
        }
        Ok(Self {
            spec,
            layout,
            params,
        })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn input_dim(&self) -> usize {
        self.spec.input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.spec.output_dim()
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

    pub fn num_layers(&self) -> usize {
        self.layout.len()
    }

    fn weight(&self, layer: &LayerLayout) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape(
            (layer.fan_in, layer.fan_out),
            &self.params[layer.weight..layer.bias],
        )
        .expect("layout is consistent")
    }

    fn slice(&self, offset: usize, len: usize) -> ArrayView1<'_, f64> {
        ArrayView1::from(&self.params[offset..offset + len])
    }

    /// Weight matrix of layer `i`, stored `(fan_in, fan_out)`.
    pub fn layer_weight(&self, i: usize) -> ArrayView2<'_, f64> {
        self.weight(&self.layout[i])
    }

    pub fn layer_bias(&self, i: usize) -> ArrayView1<'_, f64> {
        let layer = &self.layout[i];
        self.slice(layer.bias, layer.fan_out)
    }

    /// Mutable bias of layer `i`.
    pub fn layer_bias_mut(&mut self, i: usize) -> &mut [f64] {
        let layer = self.layout[i];
        &mut self.params[layer.bias..layer.bias + layer.fan_out]
    }

    /// Mutable weights of layer `i`, row-major `(fan_in, fan_out)`.
    pub fn layer_weight_mut(&mut self, i: usize) -> &mut [f64] {
        let layer = self.layout[i];
        &mut self.params[layer.weight..layer.bias]
    }

    /// Single-sample forward pass.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        let x = ArrayView2::from_shape((1, input.len()), input)
            .map_err(|e| Error::Shape(e.to_string()))?;
        Ok(self.forward_batch(x)?.into_raw_vec_and_offset().0)
    }

    /// Batched forward pass over rows of `x`.
    pub fn forward_batch(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check_input(x.ncols())?;
        let mut h = x.to_owned();
        let n_layers = self.layout.len();
        for (i, layer) in self.layout.iter().enumerate() {
            let mut z = h.dot(&self.weight(layer));
            z += &self.slice(layer.bias, layer.fan_out);
            if i + 1 < n_layers {
                if let Some((gain, shift)) = layer.norm {
                    let (zhat, _) = normalize_rows(&z);
                    z = zhat * &self.slice(gain, layer.fan_out) + &self.slice(shift, layer.fan_out);
                }
                let act = self.spec.activation;
                z.mapv_inplace(|v| act.apply(v));
            }
            h = z;
        }
        Ok(h)
    }

    /// Forward pass that keeps what backpropagation needs.
    pub fn forward_train(&self, x: ArrayView2<'_, f64>) -> Result<(Array2<f64>, ForwardCache)> {
        self.check_input(x.ncols())?;
        let n_layers = self.layout.len();
        let mut cache = ForwardCache {
            inputs: Vec::with_capacity(n_layers),
            normalized: Vec::with_capacity(n_layers),
            activations: Vec::with_capacity(n_layers),
        };
        let mut h = x.to_owned();
        for (i, layer) in self.layout.iter().enumerate() {
            let mut z = h.dot(&self.weight(layer));
            z += &self.slice(layer.bias, layer.fan_out);
            cache.inputs.push(h);
            if i + 1 < n_layers {
                if let Some((gain, shift)) = layer.norm {
                    let (zhat, inv_std) = normalize_rows(&z);
                    z = &zhat * &self.slice(gain, layer.fan_out)
                        + &self.slice(shift, layer.fan_out);
                    cache.normalized.push(Some((zhat, inv_std)));
                } else {
                    cache.normalized.push(None);
                }
                let act = self.spec.activation;
                z.mapv_inplace(|v| act.apply(v));
                cache.activations.push(Some(z.clone()));
            } else {
                cache.normalized.push(None);
                cache.activations.push(None);
            }
            h = z;
        }
        Ok((h, cache))
    }

    /// Backpropagates `d_out` (gradient of a scalar loss w.r.t. the outputs of
    /// the cached forward pass). Returns flat parameter gradients and the
    /// gradient w.r.t. the network input.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        d_out: ArrayView2<'_, f64>,
    ) -> Result<(Vec<f64>, Array2<f64>)> {
        let mut grads = vec![0.0; self.params.len()];
        let d_input = self.backward_into(cache, d_out, &mut grads)?;
        Ok((grads, d_input))
    }

    /// Like [`Mlp::backward`] but accumulates into `grads`.
    pub fn backward_into(
        &self,
        cache: &ForwardCache,
        d_out: ArrayView2<'_, f64>,
        grads: &mut [f64],
    ) -> Result<Array2<f64>> {
        if grads.len() != self.params.len() {
            return Err(Error::Shape("gradient buffer does not match parameters".into()));
        }
        if d_out.ncols() != self.output_dim() || cache.inputs.len() != self.layout.len() {
            return Err(Error::Shape("output gradient does not match network".into()));
        }
        let mut delta = d_out.to_owned();
        for (i, layer) in self.layout.iter().enumerate().rev() {
            if let Some(out) = &cache.activations[i] {
                let act = self.spec.activation;
                ndarray::Zip::from(&mut delta)
                    .and(out)
                    .for_each(|d, &y| *d *= act.derivative_from_output(y));
                if let (Some((gain, shift)), Some((zhat, inv_std))) =
                    (layer.norm, &cache.normalized[i])
                {
                    let n = layer.fan_out;
                    let d_gain = (&delta * zhat).sum_axis(Axis(0));
                    let d_shift = delta.sum_axis(Axis(0));
                    accumulate(&mut grads[gain..gain + n], d_gain.view());
                    accumulate(&mut grads[shift..shift + n], d_shift.view());
                    let d_zhat = &delta * &self.slice(gain, n);
                    delta = layer_norm_backward(&d_zhat, zhat, inv_std);
                }
            }
            let input = &cache.inputs[i];
            let d_weight = input.t().dot(&delta);
            for (g, v) in grads[layer.weight..layer.bias].iter_mut().zip(d_weight.iter()) {
                *g += v;
            }
            let d_bias = delta.sum_axis(Axis(0));
            accumulate(&mut grads[layer.bias..layer.bias + layer.fan_out], d_bias.view());
            delta = delta.dot(&self.weight(layer).t());
        }
        Ok(delta)
    }

    /// Mean loss and its parameter gradient over a batch. `loss` maps the
    /// network outputs to `(loss value, d loss / d outputs)`.
    pub fn gradient<F>(&self, inputs: ArrayView2<'_, f64>, loss: F) -> Result<(f64, Vec<f64>)>
    where
        F: FnOnce(&Array2<f64>) -> (f64, Array2<f64>),
    {
        if inputs.nrows() == 0 {
            return Err(Error::Input("empty batch".into()));
        }
        let (out, cache) = self.forward_train(inputs)?;
        let (value, d_out) = loss(&out);
        if !value.is_finite() {
            return Err(Error::Numeric(format!("loss = {value}")));
        }
        let (grads, _) = self.backward(&cache, d_out.view())?;
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::Numeric("non-finite gradient".into()));
        }
        Ok((value, grads))
    }

    fn check_input(&self, cols: usize) -> Result<()> {
        if cols != self.input_dim() {
            return Err(Error::Shape(format!(
                "input has {cols} features, network expects {}",
                self.input_dim()
            )));
        }
        Ok(())
    }

    pub fn same_architecture(&self, other: &Mlp) -> bool {
        self.spec == other.spec
    }

    /// `target <- tau * online + (1 - tau) * target`, parameter by parameter.
    pub fn soft_update_from(&mut self, online: &Mlp, tau: f64) -> Result<()> {
        soft_update(self, online, tau)
    }

    pub fn to_checkpoint(&self) -> MlpCheckpoint {
        let mut params = BTreeMap::new();
        for (i, layer) in self.layout.iter().enumerate() {
            params.insert(
                format!("layer{i}.weight"),
                self.params[layer.weight..layer.bias].to_vec(),
            );
            params.insert(
                format!("layer{i}.bias"),
                self.params[layer.bias..layer.bias + layer.fan_out].to_vec(),
            );
            if let Some((gain, shift)) = layer.norm {
                params.insert(
                    format!("layer{i}.norm_gain"),
                    self.params[gain..gain + layer.fan_out].to_vec(),
                );
                params.insert(
                    format!("layer{i}.norm_shift"),
                    self.params[shift..shift + layer.fan_out].to_vec(),
                );
            }
        }
        MlpCheckpoint {
            format_version: CHECKPOINT_FORMAT_VERSION,
            architecture: self.spec.clone(),
            params,
        }
    }

    pub fn from_checkpoint(ckpt: &MlpCheckpoint) -> Result<Self> {
        if ckpt.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::Input(format!(
                "unsupported checkpoint format version {}",
                ckpt.format_version
            )));
        }
        let mut net = Self::zeros(ckpt.architecture.clone())?;
        let expected = net.to_checkpoint();
        if expected.params.len() != ckpt.params.len() {
            return Err(Error::Shape("checkpoint parameter groups do not match architecture".into()));
        }
        for (i, layer) in net.layout.clone().iter().enumerate() {
            let mut fill = |name: String, offset: usize, len: usize| -> Result<()> {
                let values = ckpt
                    .params
                    .get(&name)
                    .ok_or_else(|| Error::Shape(format!("checkpoint missing {name}")))?;
                if values.len() != len {
                    return Err(Error::Shape(format!(
                        "{name}: expected {len} values, got {}",
                        values.len()
                    )));
                }
                net.params[offset..offset + len].copy_from_slice(values);
                Ok(())
            };
            fill(format!("layer{i}.weight"), layer.weight, layer.fan_in * layer.fan_out)?;
            fill(format!("layer{i}.bias"), layer.bias, layer.fan_out)?;
            if let Some((gain, shift)) = layer.norm {
                fill(format!("layer{i}.norm_gain"), gain, layer.fan_out)?;
                fill(format!("layer{i}.norm_shift"), shift, layer.fan_out)?;
            }
        }
        Ok(net)
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(&self.to_checkpoint())?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_checkpoint(&serde_json::from_str(&text)?)
    }
}

/// On-disk network: architecture plus named flat parameter arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpCheckpoint {
    pub format_version: u32,
    pub architecture: MlpSpec,
    pub params: BTreeMap<String, Vec<f64>>,
}

/// Rescales `grads` in place so its Euclidean norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm(grads: &mut [f64], max_norm: f64) -> f64 {
    let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let scale = max_norm / norm;
        grads.iter_mut().for_each(|g| *g *= scale);
    }
    norm
}

fn accumulate(dst: &mut [f64], src: ArrayView1<'_, f64>) {
    for (d, s) in dst.iter_mut().zip(src.iter()) {
        *d += s;
    }
}

/// Per-row standardization. Returns the normalized rows and `1/sqrt(var + eps)`.
fn normalize_rows(z: &Array2<f64>) -> (Array2<f64>, Array1<f64>) {
    let n = z.ncols() as f64;
    let mut out = z.clone();
    let mut inv_std = Array1::zeros(z.nrows());
    for (mut row, inv) in out.rows_mut().into_iter().zip(inv_std.iter_mut()) {
        let mean = row.sum() / n;
        row.mapv_inplace(|v| v - mean);
        let var = row.iter().map(|v| v * v).sum::<f64>() / n;
        *inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
        let s = *inv;
        row.mapv_inplace(|v| v * s);
    }
    (out, inv_std)
}

fn layer_norm_backward(d_zhat: &Array2<f64>, zhat: &Array2<f64>, inv_std: &Array1<f64>) -> Array2<f64> {
    let n = zhat.ncols() as f64;
    let mut dz = d_zhat.clone();
    for ((mut row, zh), &inv) in dz.rows_mut().into_iter().zip(zhat.rows()).zip(inv_std.iter()) {
        let sum_d = row.sum();
        let sum_dz = row.iter().zip(zh.iter()).map(|(a, b)| a * b).sum::<f64>();
        for (d, &x) in row.iter_mut().zip(zh.iter()) {
            *d = inv / n * (n * *d - sum_d - x * sum_dz);
        }
    }
    dz
}

/// Exponential moving average of parameters.
pub fn soft_update(target: &mut Mlp, online: &Mlp, tau: f64) -> Result<()> {
    if !target.same_architecture(online) {
        return Err(Error::Shape("soft update between different architectures".into()));
    }
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::Input(format!("tau must lie in (0, 1], got {tau}")));
    }
    if tau == 1.0 {
        target.params.copy_from_slice(&online.params);
        return Ok(());
    }
    for (t, &o) in target.params.iter_mut().zip(&online.params) {
        *t = tau * o + (1.0 - tau) * *t;
    }
    Ok(())
}

/// Mean squared error over all outputs, `mean((y - target)^2)`.
pub fn mse_loss(targets: ArrayView2<'_, f64>) -> impl FnOnce(&Array2<f64>) -> (f64, Array2<f64>) + '_ {
    move |out: &Array2<f64>| {
        let diff = out - &targets;
        let n = diff.len() as f64;
        let value = diff.iter().map(|d| d * d).sum::<f64>() / n;
        (value, diff * (2.0 / n))
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step: u64,
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
}

impl Adam {
    pub fn new(num_params: usize, learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            first_moment: vec![0.0; num_params],
            second_moment: vec![0.0; num_params],
        }
    }

    pub fn for_net(net: &Mlp, learning_rate: f64) -> Self {
        Self::new(net.num_params(), learning_rate)
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.first_moment
    }

    pub fn second_moment(&self) -> &[f64] {
        &self.second_moment
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != grads.len() || params.len() != self.first_moment.len() {
            return Err(Error::Shape(format!(
                "optimizer holds {} moments, got {} params and {} grads",
                self.first_moment.len(),
                params.len(),
                grads.len()
            )));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Input("learning rate must be positive".into()));
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for ((p, &g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.first_moment.iter_mut().zip(self.second_moment.iter_mut()))
        {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn zero_weights_output_bias() {
        let mut net = Mlp::zeros(MlpSpec::with_hidden(3, &[4], 2, false)).unwrap();
        net.layer_bias_mut(1).copy_from_slice(&[0.5, -1.5]);
        assert_eq!(net.forward(&[1.0, -2.0, 3.0]).unwrap(), vec![0.5, -1.5]);
        assert_eq!(net.forward(&[9.0, 9.0, 9.0]).unwrap(), vec![0.5, -1.5]);
    }

    #[test]
    fn identity_linear_layer() {
        let mut net = Mlp::zeros(MlpSpec::new(vec![3, 3], Activation::Relu, true)).unwrap();
        let w = net.layer_weight_mut(0);
        for i in 0..3 {
            w[i * 3 + i] = 1.0;
        }
        let x = [0.25, -3.0, 7.5];
        assert_eq!(net.forward(&x).unwrap(), x.to_vec());
    }

    #[test]
    fn forward_matches_straight_line_arithmetic() {
        let spec = MlpSpec::new(vec![3, 4, 2], Activation::Tanh, false);
        let net = Mlp::new(spec, 1.0, &mut rng(3)).unwrap();
        let x = [0.3, -1.2, 0.8];
        let w0 = net.layer_weight(0);
        let b0 = net.layer_bias(0);
        let w1 = net.layer_weight(1);
        let b1 = net.layer_bias(1);
        let mut hidden = [0.0; 4];
        for j in 0..4 {
            let mut acc = b0[j];
            for i in 0..3 {
                acc += x[i] * w0[[i, j]];
            }
            hidden[j] = acc.tanh();
        }
        let mut expected = [0.0; 2];
        for k in 0..2 {
            let mut acc = b1[k];
            for j in 0..4 {
                acc += hidden[j] * w1[[j, k]];
            }
            expected[k] = acc;
        }
        let out = net.forward(&x).unwrap();
        for k in 0..2 {
            assert!((out[k] - expected[k]).abs() < 1e-14);
        }
    }

    #[test]
    fn dimension_mismatch_is_shape_error() {
        let net = Mlp::zeros(MlpSpec::with_hidden(3, &[4], 1, true)).unwrap();
        assert!(matches!(net.forward(&[1.0, 2.0]), Err(Error::Shape(_))));
    }

    #[test]
    fn layer_norm_standardizes_rows() {
        let z = array![[1.0, 2.0, 3.0, 10.0], [-4.0, 0.5, 0.25, 8.0]];
        let (zhat, _) = normalize_rows(&z);
        for row in zhat.rows() {
            let mean = row.sum() / 4.0;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 4.0;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_residual_gives_zero_gradient() {
        let spec = MlpSpec::with_hidden(2, &[5], 1, true);
        let net = Mlp::new(spec, 1.0, &mut rng(1)).unwrap();
        let x = array![[0.1, 0.2], [0.5, -0.3], [1.0, 1.0]];
        let y = net.forward_batch(x.view()).unwrap();
        let (loss, grads) = net.gradient(x.view(), mse_loss(y.view())).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grads.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn duplicated_rows_leave_mean_gradient_unchanged() {
        let spec = MlpSpec::with_hidden(2, &[6, 6], 2, true);
        let net = Mlp::new(spec, 1.0, &mut rng(2)).unwrap();
        let x = array![[0.1, 0.2], [0.5, -0.3], [1.0, 1.0]];
        let t = array![[1.0, 0.0], [0.0, 1.0], [0.5, 0.5]];
        let (_, g1) = net.gradient(x.view(), mse_loss(t.view())).unwrap();
        let x2 = ndarray::concatenate![Axis(0), x, x];
        let t2 = ndarray::concatenate![Axis(0), t, t];
        let (_, g2) = net.gradient(x2.view(), mse_loss(t2.view())).unwrap();
        for (a, b) in g1.iter().zip(&g2) {
            assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn non_finite_loss_is_numeric_error() {
        let net = Mlp::zeros(MlpSpec::with_hidden(1, &[2], 1, false)).unwrap();
        let x = array![[1.0]];
        let t = array![[f64::NAN]];
        assert!(matches!(
            net.gradient(x.view(), mse_loss(t.view())),
            Err(Error::Numeric(_))
        ));
    }

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        let mut params = vec![1.0, -2.0, 0.5];
        let grads = vec![3.0, -0.001, 250.0];
        let mut adam = Adam::new(3, 1e-4);
        adam.step(&mut params, &grads).unwrap();
        let expected = [1.0 - 1e-4, -2.0 + 1e-4, 0.5 - 1e-4];
        for (p, e) in params.iter().zip(expected) {
            assert!((p - e).abs() < 1e-9, "{p} vs {e}");
        }
        assert_eq!(adam.step, 1);
    }

    #[test]
    fn adam_zero_gradient_keeps_params() {
        let mut params = vec![1.0, 2.0];
        let mut adam = Adam::new(2, 1e-3);
        adam.step(&mut params, &[1.0, 1.0]).unwrap();
        let before = params.clone();
        let m_before = adam.first_moment().to_vec();
        adam.step(&mut params, &[0.0, 0.0]).unwrap();
        assert_eq!(adam.step, 2);
        for (m, mb) in adam.first_moment().iter().zip(&m_before) {
            assert!((m - 0.9 * mb).abs() < 1e-15);
        }
        // With zero gradient the bias-corrected first moment is still non-zero,
        // so only a fresh optimizer guarantees exactly unchanged parameters.
        let mut fresh = Adam::new(2, 1e-3);
        let mut p = before.clone();
        fresh.step(&mut p, &[0.0, 0.0]).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn adam_shape_mismatch() {
        let mut adam = Adam::new(2, 1e-3);
        let mut p = vec![0.0; 3];
        assert!(matches!(adam.step(&mut p, &[0.0; 3]), Err(Error::Shape(_))));
    }

    #[test]
    fn adam_descends_quadratic() {
        let mut x = vec![3.0];
        let mut adam = Adam::new(1, 0.05);
        let loss = |x: f64| (x - 1.0) * (x - 1.0);
        let initial = loss(x[0]);
        for _ in 0..100 {
            let g = 2.0 * (x[0] - 1.0);
            adam.step(&mut x, &[g]).unwrap();
        }
        assert!(loss(x[0]) < initial);
    }

    #[test]
    fn soft_update_cases() {
        let spec = MlpSpec::with_hidden(2, &[3], 1, true);
        let online = Mlp::new(spec.clone(), 1.0, &mut rng(5)).unwrap();
        let mut target = Mlp::new(spec.clone(), 1.0, &mut rng(6)).unwrap();
        soft_update(&mut target, &online, 1.0).unwrap();
        assert_eq!(target.params(), online.params());

        let ones = Mlp::from_params(spec.clone(), vec![1.0; online.num_params()]).unwrap();
        let mut zeros = Mlp::from_params(spec.clone(), vec![0.0; online.num_params()]).unwrap();
        soft_update(&mut zeros, &ones, 0.005).unwrap();
        assert!(zeros.params().iter().all(|&p| (p - 0.005).abs() < 1e-15));

        let other = Mlp::zeros(MlpSpec::with_hidden(2, &[4], 1, true)).unwrap();
        assert!(matches!(soft_update(&mut zeros, &other, 0.5), Err(Error::Shape(_))));
    }

    #[test]
    fn soft_update_geometric_decay() {
        let spec = MlpSpec::with_hidden(2, &[3], 1, false);
        let online = Mlp::new(spec.clone(), 1.0, &mut rng(7)).unwrap();
        let start = Mlp::new(spec, 1.0, &mut rng(8)).unwrap();
        let mut target = start.clone();
        let tau = 0.05;
        let k = 40;
        for _ in 0..k {
            soft_update(&mut target, &online, tau).unwrap();
        }
        let factor = (1.0 - tau).powi(k);
        for ((t, s), o) in target.params().iter().zip(start.params()).zip(online.params()) {
            let expected_gap = (s - o) * factor;
            assert!((t - o - expected_gap).abs() < 1e-12);
        }
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let spec = MlpSpec::with_hidden(3, &[7, 5], 2, true);
        let net = Mlp::new(spec, 0.01, &mut rng(9)).unwrap();
        let text = serde_json::to_string(&net.to_checkpoint()).unwrap();
        let back = Mlp::from_checkpoint(&serde_json::from_str(&text).unwrap()).unwrap();
        assert_eq!(
            net.params().iter().map(|p| p.to_bits()).collect::<Vec<_>>(),
            back.params().iter().map(|p| p.to_bits()).collect::<Vec<_>>()
        );
        assert_eq!(net.spec(), back.spec());
    }
}
