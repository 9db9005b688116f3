use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Relu,
    Identity,
}

impl Activation {
    fn apply<T: Scalar>(self, x: T) -> T {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(T::zero()),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the pre-activation `x` and output `y`.
    fn derivative<T: Scalar>(self, x: T, y: T) -> T {
        match self {
            Activation::Tanh => T::one() - y * y,
            Activation::Relu => {
                if x > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Identity => T::one(),
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
            Activation::Identity => "identity",
        })
    }
}

impl FromStr for Activation {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            "identity" => Ok(Activation::Identity),
            other => Err(format!("unknown activation `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadRole {
    ProbeLogits,
    MessageMean,
    Value,
    ClassLogits,
}

impl fmt::Display for HeadRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HeadRole::ProbeLogits => "probe_logits",
            HeadRole::MessageMean => "message_mean",
            HeadRole::Value => "value",
            HeadRole::ClassLogits => "class_logits",
        })
    }
}

impl FromStr for HeadRole {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "probe_logits" => Ok(HeadRole::ProbeLogits),
            "message_mean" => Ok(HeadRole::MessageMean),
            "value" => Ok(HeadRole::Value),
            "class_logits" => Ok(HeadRole::ClassLogits),
            other => Err(format!("unknown head role `{other}`")),
        }
    }
}

/// A named slice `[offset, offset + len)` of the network output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Head {
    pub role: HeadRole,
    pub offset: usize,
    pub len: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub inputs: usize,
    pub outputs: usize,
    pub activation: Activation,
}

impl LayerSpec {
    fn param_count(&self) -> usize {
        self.outputs * (self.inputs + 1)
    }
}

/// Weights of a dense network stored in one flat vector, layer by layer
/// (row-major `outputs x inputs` weights, then biases), followed by `aux`
/// free parameters that are not part of any layer (the policy keeps its
/// message log-std there).
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams<T> {
    layers: Vec<LayerSpec>,
    heads: Vec<Head>,
    aux: usize,
    values: Vec<T>,
}

/// Per-layer inputs and pre-activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    /// `outputs[0]` is the network input, `outputs[l + 1]` the output of layer `l`.
    outputs: Vec<Vec<T>>,
    pre: Vec<Vec<T>>,
}

impl<T: Scalar> ForwardCache<T> {
    pub fn output(&self) -> &[T] {
        self.outputs.last().expect("cache holds the input")
    }
}

impl<T: Scalar> NetworkParams<T> {
    /// Fan-based uniform initialization: each weight of an `in -> out` layer
    /// is drawn from `U[-sqrt(6 / (in + out)), +sqrt(6 / (in + out))]`,
    /// biases start at zero. Hidden layers use `hidden`, the last `output`.
    pub fn init<R: Rng + ?Sized>(
        dims: &[usize],
        hidden: Activation,
        output: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::Config(format!(
                "network needs at least two positive layer widths, got {dims:?}"
            )));
        }
        let n = dims.len() - 1;
        let layers: Vec<LayerSpec> = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| LayerSpec {
                inputs: w[0],
                outputs: w[1],
                activation: if i + 1 == n { output } else { hidden },
            })
            .collect();
        let mut values = Vec::with_capacity(layers.iter().map(LayerSpec::param_count).sum());
        for layer in &layers {
            let bound = (6.0 / (layer.inputs + layer.outputs) as f64).sqrt();
            for _ in 0..layer.inputs * layer.outputs {
                values.push(T::of(rng.random_range(-bound..bound)));
            }
            values.extend(std::iter::repeat_n(T::zero(), layer.outputs));
        }
        Ok(Self {
            layers,
            heads: Vec::new(),
            aux: 0,
            values,
        })
    }

    /// Rebuilds a network from its parts, checking that everything lines up.
    pub fn from_parts(
        layers: Vec<LayerSpec>,
        heads: Vec<Head>,
        aux: usize,
        values: Vec<T>,
    ) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("network has no layers".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].outputs != pair[1].inputs {
                return Err(Error::Config(format!(
                    "layer widths do not chain: {} -> {}",
                    pair[0].outputs, pair[1].inputs
                )));
            }
        }
        let expected = layers.iter().map(LayerSpec::param_count).sum::<usize>() + aux;
        check_len(expected, values.len(), "network parameter count")?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite network parameter".into()));
        }
        let net = Self {
            layers,
            heads: Vec::new(),
            aux,
            values,
        };
        net.with_heads(heads)
    }

    pub fn with_heads(mut self, heads: Vec<Head>) -> Result<Self> {
        let width = self.output_len();
        for h in &heads {
            if h.offset + h.len > width {
                return Err(Error::Config(format!(
                    "head {} [{}, {}) exceeds output width {width}",
                    h.role,
                    h.offset,
                    h.offset + h.len
                )));
            }
        }
        self.heads = heads;
        Ok(self)
    }

    /// Appends free parameters after the layer parameters.
    pub fn with_aux(mut self, aux: &[T]) -> Self {
        self.values.truncate(self.values.len() - self.aux);
        self.values.extend_from_slice(aux);
        self.aux = aux.len();
        self
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn heads(&self) -> &[Head] {
        &self.heads
    }

    pub fn head(&self, role: HeadRole) -> Option<Head> {
        self.heads.iter().copied().find(|h| h.role == role)
    }

    pub fn input_len(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_len(&self) -> usize {
        self.layers.last().expect("non-empty").outputs
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn aux(&self) -> &[T] {
        &self.values[self.values.len() - self.aux..]
    }

    /// Start of the auxiliary block inside the flat parameter vector.
    pub fn aux_offset(&self) -> usize {
        self.values.len() - self.aux
    }

    fn layer_offsets(&self) -> impl Iterator<Item = (usize, &LayerSpec)> {
        self.layers.iter().scan(0usize, |off, l| {
            let start = *off;
            *off += l.param_count();
            Some((start, l))
        })
    }

    /// Multiplies the weights and bias of layer `index` by `factor`.
    pub fn scale_layer(&mut self, index: usize, factor: T) {
        let (start, spec) = self.layer_offsets().nth(index).expect("layer index");
        let end = start + spec.param_count();
        for v in &mut self.values[start..end] {
            *v = *v * factor;
        }
    }

    pub fn forward(&self, input: &[T]) -> Result<ForwardCache<T>> {
        check_len(self.input_len(), input.len(), "network input")?;
        if input.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite network input".into()));
        }
        let mut outputs = Vec::with_capacity(self.layers.len() + 1);
        let mut pre = Vec::with_capacity(self.layers.len());
        outputs.push(input.to_vec());
        for (start, spec) in self.layer_offsets() {
            let x = outputs.last().expect("input pushed");
            let w = &self.values[start..start + spec.inputs * spec.outputs];
            let b = &self.values[start + spec.inputs * spec.outputs..start + spec.param_count()];
            let z: Vec<T> = (0..spec.outputs)
                .map(|o| {
                    let row = &w[o * spec.inputs..(o + 1) * spec.inputs];
                    row.iter()
                        .zip(x)
                        .fold(b[o], |acc, (&wi, &xi)| acc + wi * xi)
                })
                .collect();
            let y: Vec<T> = z.iter().map(|&v| spec.activation.apply(v)).collect();
            pre.push(z);
            outputs.push(y);
        }
        Ok(ForwardCache { outputs, pre })
    }

    /// Accumulates into `grads` the gradient of a scalar loss whose gradient
    /// with respect to the network output is `output_grad`.
    pub fn backward(&self, cache: &ForwardCache<T>, output_grad: &[T], grads: &mut [T]) -> Result<()> {
        check_len(self.output_len(), output_grad.len(), "output gradient")?;
        check_len(self.values.len(), grads.len(), "gradient buffer")?;
        check_len(self.layers.len() + 1, cache.outputs.len(), "forward cache depth")?;
        let offsets: Vec<(usize, LayerSpec)> =
            self.layer_offsets().map(|(o, s)| (o, *s)).collect();
        let mut delta: Vec<T> = output_grad.to_vec();
        for (l, &(start, spec)) in offsets.iter().enumerate().rev() {
            let z = &cache.pre[l];
            let y = &cache.outputs[l + 1];
            let x = &cache.outputs[l];
            for o in 0..spec.outputs {
                delta[o] = delta[o] * spec.activation.derivative(z[o], y[o]);
            }
            let w_end = start + spec.inputs * spec.outputs;
            {
                let (gw, gb) = grads[start..start + spec.param_count()].split_at_mut(w_end - start);
                for o in 0..spec.outputs {
                    let d = delta[o];
                    if d == T::zero() {
                        continue;
                    }
                    gb[o] = gb[o] + d;
                    let row = &mut gw[o * spec.inputs..(o + 1) * spec.inputs];
                    for (g, &xi) in row.iter_mut().zip(x) {
                        *g = *g + d * xi;
                    }
                }
            }
            if l > 0 {
                let w = &self.values[start..w_end];
                let mut next = vec![T::zero(); spec.inputs];
                for o in 0..spec.outputs {
                    let d = delta[o];
                    if d == T::zero() {
                        continue;
                    }
                    let row = &w[o * spec.inputs..(o + 1) * spec.inputs];
                    for (n, &wi) in next.iter_mut().zip(row) {
                        *n = *n + d * wi;
                    }
                }
                delta = next;
            }
        }
        Ok(())
    }

    pub fn zeros_like(&self) -> Vec<T> {
        vec![T::zero(); self.values.len()]
    }
}
