//! Feed-forward Q-network numerics.
//!
//! Parameters live in one flat `f64` vector. Layers are laid out in order; each
//! layer stores its weight matrix row-major with shape `(fan_out, fan_in)`
//! followed by its `fan_out` biases. Hidden layers apply the configured
//! activation, the output layer is linear (one Q-value per action).
//!
//! Backpropagation is hand-derived for this family of networks and checked
//! against [`finite_diff_grad`] in the test suite.

use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the pre-activation `z`.
    #[inline]
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
        }
    }
}

/// Shape of a Q-network.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpArch {
    pub input_dim: usize,
    pub hidden_sizes: Vec<usize>,
    pub output_dim: usize,
    #[serde(default)]
    pub activation: Activation,
}

/// Offsets of one dense layer inside the flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSpan {
    pub fan_in: usize,
    pub fan_out: usize,
    pub weights: usize,
    pub biases: usize,
}

impl LayerSpan {
    pub fn end(&self) -> usize {
        self.biases + self.fan_out
    }
}

impl MlpArch {
    pub fn new(
        input_dim: usize,
        hidden_sizes: Vec<usize>,
        output_dim: usize,
        activation: Activation,
    ) -> Result<Self> {
        let arch = Self {
            input_dim,
            hidden_sizes,
            output_dim,
            activation,
        };
        arch.validate()?;
        Ok(arch)
    }

    /// One hidden layer of 64 relu units.
    pub fn default_for(input_dim: usize, output_dim: usize) -> Self {
        Self {
            input_dim,
            hidden_sizes: vec![64],
            output_dim,
            activation: Activation::Relu,
        }
    }

    /// A single linear layer, `Q = W obs + b`.
    pub fn linear(input_dim: usize, output_dim: usize) -> Self {
        Self {
            input_dim,
            hidden_sizes: Vec::new(),
            output_dim,
            activation: Activation::Relu,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 || self.hidden_sizes.contains(&0) {
            return Err(Error::InvalidInput(format!(
                "network dimensions must be positive, got {self:?}"
            )));
        }
        Ok(())
    }

    pub fn layers(&self) -> impl Iterator<Item = LayerSpan> + '_ {
        let dims = std::iter::once(self.input_dim)
            .chain(self.hidden_sizes.iter().copied())
            .chain(std::iter::once(self.output_dim));
        let mut offset = 0;
        let mut fan_in = None;
        dims.filter_map(move |d| {
            let prev = fan_in.replace(d)?;
            let span = LayerSpan {
                fan_in: prev,
                fan_out: d,
                weights: offset,
                biases: offset + prev * d,
            };
            offset = span.end();
            Some(span)
        })
    }

    pub fn param_count(&self) -> usize {
        self.layers().map(|l| (l.fan_in + 1) * l.fan_out).sum()
    }

    pub fn num_layers(&self) -> usize {
        self.hidden_sizes.len() + 1
    }

    /// For each parameter, the fan-in of its layer and whether it is a bias.
    pub fn param_roles(&self) -> Vec<(usize, bool)> {
        let mut roles = Vec::with_capacity(self.param_count());
        for l in self.layers() {
            roles.extend(std::iter::repeat_n((l.fan_in, false), l.fan_in * l.fan_out));
            roles.extend(std::iter::repeat_n((l.fan_in, true), l.fan_out));
        }
        roles
    }
}

/// Flattened weights and biases of a network.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    arch: MlpArch,
    values: Vec<f64>,
}

impl MlpParams {
    pub fn new(arch: MlpArch, values: Vec<f64>) -> Result<Self> {
        arch.validate()?;
        if values.len() != arch.param_count() {
            return Err(Error::dim("parameter vector", arch.param_count(), values.len()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("parameters must be finite".into()));
        }
        Ok(Self { arch, values })
    }

    pub fn zeros(arch: MlpArch) -> Self {
        let n = arch.param_count();
        Self {
            arch,
            values: vec![0.0; n],
        }
    }

    /// Skips the finiteness scan; callers guarantee the length.
    pub(crate) fn from_parts(arch: MlpArch, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), arch.param_count());
        Self { arch, values }
    }

    pub fn arch(&self) -> &MlpArch {
        &self.arch
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Per-layer `(weights, biases)` views, weights row-major `(fan_out, fan_in)`.
    pub fn unflatten(&self) -> Vec<(Vec<Vec<f64>>, Vec<f64>)> {
        self.arch
            .layers()
            .map(|l| {
                let rows = (0..l.fan_out)
                    .map(|o| {
                        let start = l.weights + o * l.fan_in;
                        self.values[start..start + l.fan_in].to_vec()
                    })
                    .collect();
                (rows, self.values[l.biases..l.end()].to_vec())
            })
            .collect()
    }

    pub fn flatten(arch: MlpArch, layers: &[(Vec<Vec<f64>>, Vec<f64>)]) -> Result<Self> {
        let spans: Vec<_> = arch.layers().collect();
        if spans.len() != layers.len() {
            return Err(Error::dim("layer count", spans.len(), layers.len()));
        }
        let mut values = Vec::with_capacity(arch.param_count());
        for (span, (rows, biases)) in spans.iter().zip(layers) {
            if rows.len() != span.fan_out || biases.len() != span.fan_out {
                return Err(Error::dim("layer fan_out", span.fan_out, rows.len()));
            }
            for row in rows {
                if row.len() != span.fan_in {
                    return Err(Error::dim("layer fan_in", span.fan_in, row.len()));
                }
                values.extend_from_slice(row);
            }
            values.extend_from_slice(biases);
        }
        Self::new(arch, values)
    }

    pub fn forward(&self, obs: &[f64]) -> Result<Vec<f64>> {
        mlp_forward(self, obs)
    }

    pub fn greedy_action(&self, obs: &[f64]) -> Result<usize> {
        Ok(argmax(&self.forward(obs)?))
    }
}

/// A gradient with the same layout as [`MlpParams::values`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub values: Vec<f64>,
}

impl Gradient {
    pub fn zeros(len: usize) -> Self {
        Self {
            values: vec![0.0; len],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Cached activations of one forward pass, reused by the backward pass.
#[derive(Debug, Clone, Default)]
pub struct Trace {
    /// `inputs[l]` is the input of layer `l`.
    inputs: Vec<Vec<f64>>,
    /// `pre[l]` is the pre-activation of layer `l`; the last one holds the Q-values.
    pre: Vec<Vec<f64>>,
    delta: Vec<f64>,
    delta_prev: Vec<f64>,
    /// Nonzero positions of `inputs[l]` when sparse enough to be worth skipping the rest.
    support: Vec<Option<Vec<usize>>>,
}

/// Positions of the nonzero entries of `x`, when at most half of them are nonzero.
///
/// Skipping exact zeros leaves every finite sum bit-for-bit unchanged, and
/// thermometer features and ReLU activations are mostly zeros.
pub(crate) fn sparse_support(x: &[f64], buf: Option<Vec<usize>>) -> Option<Vec<usize>> {
    let mut idx = buf.unwrap_or_default();
    idx.clear();
    idx.extend(x.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(i, _)| i));
    (idx.len() * 2 <= x.len()).then_some(idx)
}

/// `row · x`, visiting only `support` when given.
#[inline]
pub(crate) fn dot(row: &[f64], x: &[f64], support: Option<&[usize]>) -> f64 {
    match support {
        Some(idx) => idx.iter().fold(0.0, |acc, &i| acc + row[i] * x[i]),
        None => row.iter().zip(x).fold(0.0, |acc, (w, v)| acc + w * v),
    }
}

/// `g += d · x`, visiting only `support` when given.
#[inline]
fn axpy(g: &mut [f64], d: f64, x: &[f64], support: Option<&[usize]>) {
    match support {
        Some(idx) => idx.iter().for_each(|&i| g[i] += d * x[i]),
        None => g.iter_mut().zip(x).for_each(|(g, v)| *g += d * v),
    }
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.pre.last().map(Vec::as_slice).unwrap_or(&[])
    }

    /// Runs the network on `obs`, keeping every intermediate for [`Trace::accumulate_grad`].
    ///
    /// Shapes are not re-checked here.
    pub fn forward(&mut self, arch: &MlpArch, values: &[f64], obs: &[f64]) -> &[f64] {
        let n = arch.num_layers();
        self.inputs.resize_with(n, Vec::new);
        self.pre.resize_with(n, Vec::new);
        self.support.resize_with(n, || None);
        self.inputs[0].clear();
        self.inputs[0].extend_from_slice(obs);
        for (l, span) in arch.layers().enumerate() {
            let mut out = std::mem::take(&mut self.pre[l]);
            out.clear();
            let input = &self.inputs[l];
            self.support[l] = sparse_support(input, self.support[l].take());
            let support = self.support[l].as_deref();
            for o in 0..span.fan_out {
                let row = &values[span.weights + o * span.fan_in..][..span.fan_in];
                out.push(values[span.biases + o] + dot(row, input, support));
            }
            if l + 1 < n {
                let act = arch.activation;
                let next = &mut self.inputs[l + 1];
                next.clear();
                next.extend(out.iter().map(|&z| act.apply(z)));
            }
            self.pre[l] = out;
        }
        self.output()
    }

    /// Adds `upstream * dQ[action]/dθ` into `grad`, using the last forward pass.
    pub fn accumulate_grad(
        &mut self,
        arch: &MlpArch,
        values: &[f64],
        action: usize,
        upstream: f64,
        grad: &mut [f64],
    ) {
        if upstream == 0.0 {
            return;
        }
        let spans: Vec<LayerSpan> = arch.layers().collect();
        let last = spans.len() - 1;

        // Output layer: only the chosen action's row receives gradient.
        let span = spans[last];
        let input = &self.inputs[last];
        let row = span.weights + action * span.fan_in;
        axpy(&mut grad[row..row + span.fan_in], upstream, input, self.support[last].as_deref());
        grad[span.biases + action] += upstream;
        if last == 0 {
            return;
        }
        self.delta.clear();
        let prev = spans[last - 1];
        for i in 0..span.fan_in {
            let w = values[row + i];
            self.delta
                .push(upstream * w * arch.activation.derivative(self.pre[last - 1][i]));
        }
        debug_assert_eq!(prev.fan_out, span.fan_in);

        for l in (0..last).rev() {
            let span = spans[l];
            let input = &self.inputs[l];
            for o in 0..span.fan_out {
                let d = self.delta[o];
                if d == 0.0 {
                    continue;
                }
                let start = span.weights + o * span.fan_in;
                axpy(&mut grad[start..start + span.fan_in], d, input, self.support[l].as_deref());
                grad[span.biases + o] += d;
            }
            if l == 0 {
                break;
            }
            self.delta_prev.clear();
            self.delta_prev.resize(span.fan_in, 0.0);
            for o in 0..span.fan_out {
                let d = self.delta[o];
                if d == 0.0 {
                    continue;
                }
                let start = span.weights + o * span.fan_in;
                for (acc, w) in self.delta_prev.iter_mut().zip(&values[start..start + span.fan_in]) {
                    *acc += d * w;
                }
            }
            for (d, &z) in self.delta_prev.iter_mut().zip(&self.pre[l - 1]) {
                *d *= arch.activation.derivative(z);
            }
            std::mem::swap(&mut self.delta, &mut self.delta_prev);
        }
    }
}

fn check_obs(arch: &MlpArch, obs: &[f64]) -> Result<()> {
    if obs.len() != arch.input_dim {
        return Err(Error::dim("observation", arch.input_dim, obs.len()));
    }
    Ok(())
}

/// Q-values of every action at `obs`.
pub fn mlp_forward(params: &MlpParams, obs: &[f64]) -> Result<Vec<f64>> {
    check_obs(&params.arch, obs)?;
    let mut trace = Trace::default();
    Ok(trace.forward(&params.arch, &params.values, obs).to_vec())
}

/// Gradient of `upstream * Q(obs, action)` with respect to every parameter.
pub fn mlp_backward(
    params: &MlpParams,
    obs: &[f64],
    action: usize,
    upstream: f64,
) -> Result<Gradient> {
    check_obs(&params.arch, obs)?;
    if action >= params.arch.output_dim {
        return Err(Error::dim("action index bound", params.arch.output_dim, action));
    }
    let mut trace = Trace::default();
    trace.forward(&params.arch, &params.values, obs);
    let mut grad = Gradient::zeros(params.values.len());
    trace.accumulate_grad(&params.arch, &params.values, action, upstream, &mut grad.values);
    Ok(grad)
}

/// Central differences `(f(θ+h e_i) - f(θ-h e_i)) / 2h` over a plain vector.
pub fn central_differences<F>(mut f: F, point: &[f64], step: f64) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    assert!(step > 0.0, "finite-difference step must be positive");
    let mut probe = point.to_vec();
    (0..point.len())
        .map(|i| {
            probe[i] = point[i] + step;
            let plus = f(&probe);
            probe[i] = point[i] - step;
            let minus = f(&probe);
            probe[i] = point[i];
            (plus - minus) / (2.0 * step)
        })
        .collect()
}

/// Central-difference gradient of a scalar function of the network parameters.
pub fn finite_diff_grad<F>(f: F, params: &MlpParams, step: f64) -> Result<Gradient>
where
    F: Fn(&MlpParams) -> f64,
{
    if step <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "finite-difference step must be positive, got {step}"
        )));
    }
    let mut probe = params.clone();
    let values = central_differences(
        |v| {
            probe.values.copy_from_slice(v);
            f(&probe)
        },
        &params.values,
        step,
    );
    Ok(Gradient { values })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitScheme {
    Zeros,
    /// Weights from `U[-1/sqrt(fan_in), 1/sqrt(fan_in)]`, biases zero.
    UniformFanIn,
}

pub fn init_params<R: Rng + ?Sized>(arch: MlpArch, rng: &mut R, scheme: InitScheme) -> MlpParams {
    let mut values = vec![0.0; arch.param_count()];
    if scheme == InitScheme::UniformFanIn {
        for span in arch.layers() {
            let bound = 1.0 / (span.fan_in as f64).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
            for w in &mut values[span.weights..span.biases] {
                *w = dist.sample(rng);
            }
        }
    }
    MlpParams::from_parts(arch, values)
}
