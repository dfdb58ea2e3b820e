//! A small dense network with hand-written backpropagation through the
//! evidential head, plus a central-difference gradient oracle.

use std::fmt;
use std::str::FromStr;

use crate::error::{EvError, Result};
use crate::head::{ActivationKind, LogitVector};
use crate::losses::{Objective, OneHotLabel};
use crate::rng::Rng;

/// Pre-activations closer to a kink than this are excluded from gradient checks.
pub const KINK_MARGIN: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Nonlinearity {
    Tanh,
    ReLU,
    Identity,
}

impl Nonlinearity {
    fn apply(self, z: f64) -> f64 {
        match self {
            Nonlinearity::Tanh => z.tanh(),
            Nonlinearity::ReLU => z.max(0.0),
            Nonlinearity::Identity => z,
        }
    }

    fn derivative(self, z: f64, out: f64) -> f64 {
        match self {
            Nonlinearity::Tanh => 1.0 - out * out,
            Nonlinearity::ReLU => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Nonlinearity::Identity => 1.0,
        }
    }

    pub fn code(self) -> u8 {
        match self {
            Nonlinearity::Identity => 0,
            Nonlinearity::Tanh => 1,
            Nonlinearity::ReLU => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Nonlinearity::Identity),
            1 => Some(Nonlinearity::Tanh),
            2 => Some(Nonlinearity::ReLU),
            _ => None,
        }
    }
}

impl fmt::Display for Nonlinearity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Nonlinearity::Tanh => "tanh",
            Nonlinearity::ReLU => "relu",
            Nonlinearity::Identity => "identity",
        })
    }
}

impl FromStr for Nonlinearity {
    type Err = EvError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tanh" => Ok(Nonlinearity::Tanh),
            "relu" => Ok(Nonlinearity::ReLU),
            "identity" => Ok(Nonlinearity::Identity),
            other => Err(EvError::invalid(format!("unknown nonlinearity '{other}'"))),
        }
    }
}

/// Weights (row-major `out x in`) and biases of one layer. Also used as the
/// per-layer block of a [`ParamGradient`].
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl LayerParams {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weights: vec![0.0; inputs * outputs],
            biases: vec![0.0; outputs],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    inputs: usize,
    outputs: usize,
    params: LayerParams,
    nonlinearity: Nonlinearity,
}

impl DenseLayer {
    pub fn new(inputs: usize, outputs: usize, params: LayerParams, nonlinearity: Nonlinearity) -> Result<Self> {
        if inputs == 0 || outputs == 0 {
            return Err(EvError::invalid("layer dimensions must be positive"));
        }
        EvError::check_dim("layer weights", inputs * outputs, params.weights.len())?;
        EvError::check_dim("layer biases", outputs, params.biases.len())?;
        if params.weights.iter().chain(&params.biases).any(|v| !v.is_finite()) {
            return Err(EvError::invalid("non-finite layer parameter"));
        }
        Ok(Self {
            inputs,
            outputs,
            params,
            nonlinearity,
        })
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    pub fn params(&self) -> &LayerParams {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut LayerParams {
        &mut self.params
    }

    pub fn nonlinearity(&self) -> Nonlinearity {
        self.nonlinearity
    }

    fn pre_activation(&self, x: &[f64]) -> Vec<f64> {
        self.params
            .weights
            .chunks_exact(self.inputs)
            .zip(&self.params.biases)
            .map(|(row, b)| row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>() + b)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitScheme {
    /// `U(-s, s)` with `s = sqrt(6 / (in + out))`.
    UniformScaled,
    Constant(f64),
    Explicit(Vec<LayerParams>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitSpec {
    pub scheme: InitScheme,
    pub seed: u64,
}

impl InitSpec {
    pub fn uniform(seed: u64) -> Self {
        Self {
            scheme: InitScheme::UniformScaled,
            seed,
        }
    }

    pub fn constant(value: f64) -> Self {
        Self {
            scheme: InitScheme::Constant(value),
            seed: 0,
        }
    }

    pub fn explicit(layers: Vec<LayerParams>) -> Self {
        Self {
            scheme: InitScheme::Explicit(layers),
            seed: 0,
        }
    }
}

/// Gradient with the same block layout as the owning network.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGradient {
    pub layers: Vec<LayerParams>,
}

impl ParamGradient {
    pub fn zeros_like(net: &DenseNet) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| LayerParams::zeros(l.inputs, l.outputs))
                .collect(),
        }
    }

    /// Blocks in the order `W0, b0, W1, b1, ...`.
    pub fn blocks(&self) -> impl Iterator<Item = &[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weights.as_slice(), l.biases.as_slice()])
    }

    pub fn blocks_mut(&mut self) -> impl Iterator<Item = &mut Vec<f64>> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weights, &mut l.biases])
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.blocks().flat_map(|b| b.iter().copied())
    }

    pub fn linf_norm(&self) -> f64 {
        self.values().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn block_l2_norms(&self) -> Vec<f64> {
        self.blocks()
            .map(|b| b.iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect()
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &ParamGradient, scale: f64) {
        for (dst, src) in self.blocks_mut().zip(other.blocks()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += scale * s;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for b in self.blocks_mut() {
            b.iter_mut().for_each(|v| *v *= factor);
        }
    }
}

/// Everything backward needs from a forward pass.
struct Trace {
    // layer inputs: trace.inputs[l] feeds layer l; the last entry is the logits
    inputs: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
}

/// Result of a backward pass that also differentiates with respect to the input.
#[derive(Debug, Clone)]
pub struct Backward {
    pub loss: f64,
    pub grad: ParamGradient,
    pub input_grad: Vec<f64>,
    pub logits: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseNet {
    layers: Vec<DenseLayer>,
}

impl DenseNet {
    /// Build a net with `hidden` after every layer but the last, which emits logits.
    pub fn init(dims: &[usize], hidden: Nonlinearity, spec: &InitSpec) -> Result<Self> {
        if dims.len() < 2 {
            return Err(EvError::invalid("need at least input and output dimensions"));
        }
        if dims.contains(&0) {
            return Err(EvError::invalid("layer dimensions must be positive"));
        }
        let n_layers = dims.len() - 1;
        let mut rng = Rng::new(spec.seed);
        let mut explicit = match &spec.scheme {
            InitScheme::Explicit(layers) => {
                EvError::check_dim("explicit layer count", n_layers, layers.len())?;
                Some(layers.iter())
            }
            _ => None,
        };
        let mut layers = Vec::with_capacity(n_layers);
        for (l, w) in dims.windows(2).enumerate() {
            let (inputs, outputs) = (w[0], w[1]);
            let params = match (&spec.scheme, explicit.as_mut()) {
                (InitScheme::Explicit(_), Some(it)) => it.next().cloned().expect("length checked"),
                (InitScheme::Constant(c), _) => LayerParams {
                    weights: vec![*c; inputs * outputs],
                    biases: vec![*c; outputs],
                },
                _ => {
                    let s = (6.0 / (inputs + outputs) as f64).sqrt();
                    LayerParams {
                        weights: (0..inputs * outputs).map(|_| rng.uniform_range(-s, s)).collect(),
                        biases: (0..outputs).map(|_| rng.uniform_range(-s, s)).collect(),
                    }
                }
            };
            let nl = if l + 1 == n_layers { Nonlinearity::Identity } else { hidden };
            layers.push(DenseLayer::new(inputs, outputs, params, nl)?);
        }
        Ok(Self { layers })
    }

    pub fn from_layers(layers: Vec<DenseLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(EvError::Empty("network layers"));
        }
        for w in layers.windows(2) {
            EvError::check_dim("layer chain", w[0].outputs, w[1].inputs)?;
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").outputs
    }

    pub fn dims(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(|l| l.outputs))
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.inputs * l.outputs + l.outputs).sum()
    }

    pub fn blocks_mut(&mut self) -> impl Iterator<Item = &mut Vec<f64>> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.params.weights, &mut l.params.biases])
    }

    pub fn blocks(&self) -> impl Iterator<Item = &[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.params.weights.as_slice(), l.params.biases.as_slice()])
    }

    /// Raw outputs of the final (identity) layer.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        Ok(self.trace(input)?.inputs.pop().expect("non-empty"))
    }

    pub fn logits(&self, input: &[f64]) -> Result<LogitVector> {
        LogitVector::new(self.forward(input)?)
    }

    fn trace(&self, input: &[f64]) -> Result<Trace> {
        EvError::check_dim("network input", self.input_dim(), input.len())?;
        let mut inputs = Vec::with_capacity(self.layers.len() + 1);
        let mut pre = Vec::with_capacity(self.layers.len());
        inputs.push(input.to_vec());
        for layer in &self.layers {
            let z = layer.pre_activation(inputs.last().expect("non-empty"));
            inputs.push(z.iter().map(|&v| layer.nonlinearity.apply(v)).collect());
            pre.push(z);
        }
        Ok(Trace { inputs, pre })
    }

    /// Loss and exact parameter gradient of the objective for one sample.
    pub fn backward(&self, input: &[f64], label: &OneHotLabel, objective: &Objective, epoch: usize) -> Result<(f64, ParamGradient)> {
        let b = self.backward_full(input, label, objective, epoch)?;
        Ok((b.loss, b.grad))
    }

    /// Backward pass that also returns the input gradient and the logits.
    pub fn backward_full(&self, input: &[f64], label: &OneHotLabel, objective: &Objective, epoch: usize) -> Result<Backward> {
        let trace = self.trace(input)?;
        let logits = LogitVector::new(trace.inputs.last().expect("non-empty").clone())?;
        let (loss, mut delta) = objective.loss_and_grad(&logits, label, epoch)?;

        let mut grad = ParamGradient::zeros_like(self);
        for (l, layer) in self.layers.iter().enumerate().rev() {
            // delta holds dL/d(output of layer l); turn it into dL/d(pre-activation)
            let out = &trace.inputs[l + 1];
            for ((d, &z), &o) in delta.iter_mut().zip(&trace.pre[l]).zip(out) {
                *d *= layer.nonlinearity.derivative(z, o);
            }
            let x = &trace.inputs[l];
            let g = &mut grad.layers[l];
            for (r, &d) in delta.iter().enumerate() {
                g.biases[r] = d;
                if d != 0.0 {
                    for (gw, &xi) in g.weights[r * layer.inputs..(r + 1) * layer.inputs].iter_mut().zip(x) {
                        *gw = d * xi;
                    }
                }
            }
            let mut prev = vec![0.0; layer.inputs];
            for (row, &d) in layer.params.weights.chunks_exact(layer.inputs).zip(&delta) {
                if d != 0.0 {
                    for (p, w) in prev.iter_mut().zip(row) {
                        *p += w * d;
                    }
                }
            }
            delta = prev;
        }
        Ok(Backward {
            loss,
            grad,
            input_grad: delta,
            logits: logits.into_inner(),
        })
    }

    /// Per-sample objective value.
    pub fn loss(&self, input: &[f64], label: &OneHotLabel, objective: &Objective, epoch: usize) -> Result<f64> {
        objective.loss(&self.logits(input)?, label, epoch)
    }

    /// Central-difference gradient `(L(theta + h) - L(theta - h)) / 2h`, one parameter at a time.
    pub fn finite_diff_grad(&self, input: &[f64], label: &OneHotLabel, objective: &Objective, epoch: usize, h: f64) -> Result<ParamGradient> {
        finite_diff_grad_with(self, h, |net| net.loss(input, label, objective, epoch))
    }

    /// L-infinity norm of the full parameter gradient for one sample.
    pub fn per_sample_grad_norm(&self, input: &[f64], label: &OneHotLabel, objective: &Objective, epoch: usize) -> Result<f64> {
        Ok(self.backward(input, label, objective, epoch)?.1.linf_norm())
    }

    /// Smallest distance of any pre-activation from a non-differentiable point,
    /// considering ReLU hidden units, the evidential activation and the
    /// correct-evidence indicator. `f64::INFINITY` when nothing has a kink.
    pub fn kink_distance(&self, input: &[f64], label: &OneHotLabel, objective: &Objective) -> Result<f64> {
        let trace = self.trace(input)?;
        let mut dist = f64::INFINITY;
        for (layer, pre) in self.layers.iter().zip(&trace.pre) {
            if layer.nonlinearity == Nonlinearity::ReLU {
                dist = pre.iter().fold(dist, |m, z| m.min(z.abs()));
            }
        }
        let logits = trace.inputs.last().expect("non-empty");
        if matches!(objective.activation, ActivationKind::ReLU | ActivationKind::SELU) {
            dist = logits.iter().fold(dist, |m, z| m.min(z.abs()));
        }
        if objective.reg.use_correct_reg {
            dist = dist.min(logits[label.gt_index()].abs());
        }
        Ok(dist)
    }
}

/// Central differences of an arbitrary scalar function of the parameters.
pub fn finite_diff_grad_with<F>(net: &DenseNet, h: f64, mut f: F) -> Result<ParamGradient>
where
    F: FnMut(&DenseNet) -> Result<f64>,
{
    if !(h > 0.0 && h.is_finite()) {
        return Err(EvError::invalid(format!("finite-difference step must be positive, got {h}")));
    }
    let mut probe = net.clone();
    let mut grad = ParamGradient::zeros_like(net);
    let n_blocks = grad.blocks().count();
    for b in 0..n_blocks {
        let len = grad.blocks().nth(b).expect("in range").len();
        for i in 0..len {
            let orig = net.blocks().nth(b).expect("in range")[i];
            probe.blocks_mut().nth(b).expect("in range")[i] = orig + h;
            let up = f(&probe)?;
            probe.blocks_mut().nth(b).expect("in range")[i] = orig - h;
            let down = f(&probe)?;
            probe.blocks_mut().nth(b).expect("in range")[i] = orig;
            grad.blocks_mut().nth(b).expect("in range")[i] = (up - down) / (2.0 * h);
        }
    }
    Ok(grad)
}

/// Absolute difference below which a gradient entry always agrees.
pub const GRAD_CHECK_ABS_TOL: f64 = 1e-8;
pub const GRAD_CHECK_REL_TOL: f64 = 1e-5;
pub const GRAD_CHECK_STEP: f64 = 1e-6;

/// Mismatch between an analytic and a numerical gradient entry: 0 when the
/// absolute difference is within [`GRAD_CHECK_ABS_TOL`], else the relative error.
pub fn grad_entry_error(analytic: f64, numeric: f64) -> f64 {
    let d = (analytic - numeric).abs();
    if d <= GRAD_CHECK_ABS_TOL {
        0.0
    } else {
        d / analytic.abs().max(numeric.abs())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub trials: usize,
    /// Random configurations discarded for lying within [`KINK_MARGIN`] of a kink.
    pub skipped: usize,
    pub max_rel_error: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error <= GRAD_CHECK_REL_TOL
    }
}

/// Compare `backward` with central differences on `trials` random
/// (net, input, label, loss, activation, regularizer) tuples.
pub fn random_grad_check(trials: usize, seed: u64) -> Result<GradCheckReport> {
    let mut rng = Rng::new(seed);
    let mut report = GradCheckReport {
        trials: 0,
        skipped: 0,
        max_rel_error: 0.0,
    };
    while report.trials < trials {
        let d_in = 1 + rng.index(4);
        let hidden_width = 2 + rng.index(5);
        let k = 2 + rng.index(4);
        let hidden = if rng.uniform() < 0.5 { Nonlinearity::Tanh } else { Nonlinearity::ReLU };
        let dims: Vec<usize> = if rng.uniform() < 0.5 {
            vec![d_in, hidden_width, k]
        } else {
            vec![d_in, hidden_width, 2 + rng.index(4), k]
        };
        let net = DenseNet::init(&dims, hidden, &InitSpec::uniform(rng.next_u64()))?;
        let x: Vec<f64> = (0..d_in).map(|_| rng.uniform_range(-1.5, 1.5)).collect();
        let y = OneHotLabel::new(k, rng.index(k))?;
        let objective = Objective::new(
            crate::losses::LossKind::ALL[rng.index(3)],
            ActivationKind::ALL[rng.index(4)],
            crate::losses::RegularizationConfig::new(rng.uniform_range(0.0, 2.0), rng.uniform() < 0.5),
        );
        let epoch = rng.index(15);
        if net.kink_distance(&x, &y, &objective)? < KINK_MARGIN {
            report.skipped += 1;
            continue;
        }
        let (_, analytic) = net.backward(&x, &y, &objective, epoch)?;
        let numeric = net.finite_diff_grad(&x, &y, &objective, epoch, GRAD_CHECK_STEP)?;
        for (a, n) in analytic.values().zip(numeric.values()) {
            report.max_rel_error = report.max_rel_error.max(grad_entry_error(a, n));
        }
        report.trials += 1;
    }
    Ok(report)
}
