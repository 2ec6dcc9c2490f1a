//! Trainable per-point vector field.
//!
//! Each point is pushed through a small fully connected network independently.
//! Its input is the (scaled) position, a sinusoidal embedding of the time, and
//! optional conditioning features: the offset to the closest scan point, its
//! length, and a presence flag that is zero for the null condition.
//!
//! Parameters live in one flat vector. Layer `l` stores its weight matrix
//! row-major (`out x in`) followed by its bias.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::coupling::Condition;
use crate::error::{Error, Result};
use crate::geometry::{NearestIndex, Point3, PointCloud};
use crate::objective::LossReport;
use crate::rng::seeded_rng;

const MIN_FREQUENCY: f64 = 1.0;
const MAX_FREQUENCY: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    Tanh,
    Relu,
    Silu,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
            Activation::Silu => z / (1.0 + (-z).exp()),
        }
    }

    #[inline]
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Silu => {
                let s = 1.0 / (1.0 + (-z).exp());
                s * (1.0 + z * (1.0 - s))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CondFeatureMode {
    NearestOffset,
    None,
}

impl CondFeatureMode {
    pub fn width(self) -> usize {
        match self {
            CondFeatureMode::NearestOffset => 5,
            CondFeatureMode::None => 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FieldConfig {
    pub hidden_widths: Vec<usize>,
    pub time_embed_dim: usize,
    pub cond_feature_mode: CondFeatureMode,
    pub activation: Activation,
    pub seed: u64,
    /// Multiplies positions and offsets before they enter the network.
    pub position_scale: f64,
    /// Start from the zero field.
    pub zero_init_output: bool,
}

impl Default for FieldConfig {
    fn default() -> Self {
        Self {
            hidden_widths: vec![64, 64],
            time_embed_dim: 16,
            cond_feature_mode: CondFeatureMode::NearestOffset,
            activation: Activation::Silu,
            seed: 0,
            position_scale: 1.0,
            zero_init_output: true,
        }
    }
}

impl FieldConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_widths.contains(&0) {
            return Err(Error::invalid("hidden widths must be >= 1"));
        }
        if !self.time_embed_dim.is_multiple_of(2) {
            return Err(Error::invalid(format!(
                "time embedding dimension must be even, got {}",
                self.time_embed_dim
            )));
        }
        if !(self.position_scale.is_finite() && self.position_scale > 0.0) {
            return Err(Error::invalid("position scale must be > 0"));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        3 + self.time_embed_dim + self.cond_feature_mode.width()
    }
}

/// Sinusoidal features `[sin(w_j t).., cos(w_j t)..]` over `dim / 2`
/// geometrically spaced frequencies between 1 and 100 rad.
pub fn time_embedding(t: f64, dim: usize) -> Result<Vec<f64>> {
    if !dim.is_multiple_of(2) {
        return Err(Error::invalid(format!(
            "time embedding dimension must be even, got {dim}"
        )));
    }
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::invalid(format!("time {t} outside [0, 1]")));
    }
    let half = dim / 2;
    let mut out = vec![0.0; dim];
    for j in 0..half {
        let frac = if half > 1 { j as f64 / (half - 1) as f64 } else { 0.0 };
        let w = MIN_FREQUENCY * (MAX_FREQUENCY / MIN_FREQUENCY).powf(frac);
        out[j] = (w * t).sin();
        out[half + j] = (w * t).cos();
    }
    Ok(out)
}

/// Conditioning features of a single point. `scan_index` must be built over
/// the scan carried by `condition`.
pub fn condition_features(x: &Point3, condition: Condition<'_>, scan_index: Option<&NearestIndex>) -> [f64; 5] {
    match (condition, scan_index) {
        (Condition::Scan(scan), Some(index)) => {
            let n = index.nearest(x);
            let q = scan[n.index];
            [q[0] - x[0], q[1] - x[1], q[2] - x[2], n.dist2.sqrt(), 1.0]
        }
        (Condition::Scan(scan), None) => match NearestIndex::build(scan) {
            Ok(index) => condition_features(x, condition, Some(&index)),
            // An empty scan carries no information.
            Err(_) => [0.0; 5],
        },
        (Condition::Null, _) => [0.0; 5],
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct LayerShape {
    fan_in: usize,
    fan_out: usize,
    weight: usize,
    bias: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelState {
    pub weights: Vec<f64>,
    pub ema_weights: Vec<f64>,
    pub step_count: u64,
}

impl ModelState {
    pub fn is_finite(&self) -> bool {
        self.weights.iter().chain(&self.ema_weights).all(|w| w.is_finite())
    }
}

/// `ema <- alpha * ema + (1 - alpha) * weights`, parameter by parameter.
pub fn ema_update(state: &mut ModelState, alpha: f64) {
    for (e, w) in state.ema_weights.iter_mut().zip(&state.weights) {
        *e = alpha * *e + (1.0 - alpha) * *w;
    }
}

pub const DEFAULT_EMA_DECAY: f64 = 0.9999;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && self.learning_rate.is_finite()
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid Adam settings {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub config: AdamConfig,
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub steps: u64,
}

impl OptimizerState {
    pub fn new(config: AdamConfig, n_params: usize) -> Self {
        Self {
            config,
            first_moment: vec![0.0; n_params],
            second_moment: vec![0.0; n_params],
            steps: 0,
        }
    }

    /// One bias-corrected Adam update of `weights` along `grad`.
    pub fn step(&mut self, weights: &mut [f64], grad: &[f64]) {
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            eps,
        } = self.config;
        self.steps += 1;
        let c1 = 1.0 - beta1.powi(self.steps as i32);
        let c2 = 1.0 - beta2.powi(self.steps as i32);
        for i in 0..weights.len() {
            let g = grad[i];
            let m = beta1 * self.first_moment[i] + (1.0 - beta1) * g;
            let v = beta2 * self.second_moment[i] + (1.0 - beta2) * g * g;
            self.first_moment[i] = m;
            self.second_moment[i] = v;
            weights[i] -= learning_rate * (m / c1) / ((v / c2).sqrt() + eps);
        }
    }
}

/// One field evaluation request inside a training batch.
#[derive(Debug, Clone, Copy)]
pub struct FieldInput<'a> {
    pub t: f64,
    pub x_t: &'a PointCloud,
    pub condition: Condition<'a>,
}

/// Activations kept from a forward pass for backpropagation.
struct ForwardCache {
    /// Input to each layer, point-major: `inputs[l][p * fan_in + i]`.
    inputs: Vec<Vec<f64>>,
    /// Pre-activations of each hidden layer, point-major.
    pre: Vec<Vec<f64>>,
}

/// Network shape and parameter layout for a [`FieldConfig`].
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    config: FieldConfig,
    layers: Vec<LayerShape>,
    n_params: usize,
}

impl VectorField {
    pub fn new(config: FieldConfig) -> Result<Self> {
        config.validate()?;
        let mut dims = vec![config.input_dim()];
        dims.extend(&config.hidden_widths);
        dims.push(3);
        let mut layers = Vec::with_capacity(dims.len() - 1);
        let mut offset = 0;
        for pair in dims.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            layers.push(LayerShape {
                fan_in,
                fan_out,
                weight: offset,
                bias: offset + fan_in * fan_out,
            });
            offset += fan_in * fan_out + fan_out;
        }
        Ok(Self {
            config,
            layers,
            n_params: offset,
        })
    }

    pub fn config(&self) -> &FieldConfig {
        &self.config
    }

    pub fn n_params(&self) -> usize {
        self.n_params
    }

    /// Glorot-uniform weights, zero biases; the output layer is zero when
    /// `zero_init_output` is set. EMA starts equal to the weights.
    pub fn init_state(&self) -> ModelState {
        let mut rng = seeded_rng(self.config.seed);
        let mut weights = vec![0.0; self.n_params];
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            if l == last && self.config.zero_init_output {
                continue;
            }
            let limit = (6.0 / (layer.fan_in + layer.fan_out) as f64).sqrt();
            for w in &mut weights[layer.weight..layer.bias] {
                *w = rng.random_range(-limit..limit);
            }
        }
        ModelState {
            ema_weights: weights.clone(),
            weights,
            step_count: 0,
        }
    }

    fn check_weights(&self, weights: &[f64]) -> Result<()> {
        if weights.len() != self.n_params {
            return Err(Error::LengthMismatch {
                expected: self.n_params,
                found: weights.len(),
            });
        }
        Ok(())
    }

    fn features(&self, t: f64, x: &PointCloud, condition: Condition<'_>) -> Result<Vec<f64>> {
        let dim = self.config.input_dim();
        let ps = self.config.position_scale;
        let temb = time_embedding(t, self.config.time_embed_dim)?;
        let scan_index = match (self.config.cond_feature_mode, condition) {
            (CondFeatureMode::NearestOffset, Condition::Scan(scan)) if !scan.is_empty() => {
                Some(NearestIndex::build(scan)?)
            }
            _ => None,
        };
        let mut out = vec![0.0; dim * x.len()];
        for (p, row) in x.iter().zip(out.chunks_exact_mut(dim)) {
            row[0] = p[0] * ps;
            row[1] = p[1] * ps;
            row[2] = p[2] * ps;
            row[3..3 + temb.len()].copy_from_slice(&temb);
            if self.config.cond_feature_mode == CondFeatureMode::NearestOffset {
                let c = match (&scan_index, condition) {
                    (Some(index), Condition::Scan(_)) => condition_features(p, condition, Some(index)),
                    _ => [0.0; 5],
                };
                let base = 3 + temb.len();
                for k in 0..4 {
                    row[base + k] = c[k] * ps;
                }
                row[base + 4] = c[4];
            }
        }
        Ok(out)
    }

    fn run(
        &self,
        weights: &[f64],
        features: Vec<f64>,
        n_points: usize,
        keep: bool,
    ) -> Result<(Vec<Point3>, Option<ForwardCache>)> {
        let act = self.config.activation;
        let last = self.layers.len() - 1;
        let mut input = features;
        let mut inputs = Vec::new();
        let mut pre = Vec::new();
        for (l, layer) in self.layers.iter().enumerate() {
            let w = &weights[layer.weight..layer.bias];
            let b = &weights[layer.bias..layer.bias + layer.fan_out];
            let mut z = vec![0.0; n_points * layer.fan_out];
            for (h, zrow) in input.chunks_exact(layer.fan_in).zip(z.chunks_exact_mut(layer.fan_out)) {
                for (o, zo) in zrow.iter_mut().enumerate() {
                    let row = &w[o * layer.fan_in..(o + 1) * layer.fan_in];
                    *zo = b[o] + row.iter().zip(h).map(|(a, c)| a * c).sum::<f64>();
                }
            }
            if l == last {
                if keep {
                    inputs.push(input);
                }
                if z.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NumericOverflow);
                }
                let out = z.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
                let cache = keep.then_some(ForwardCache { inputs, pre });
                return Ok((out, cache));
            }
            let a: Vec<f64> = z.iter().map(|&v| act.apply(v)).collect();
            if keep {
                inputs.push(std::mem::replace(&mut input, a));
                pre.push(z);
            } else {
                input = a;
            }
        }
        unreachable!("network has an output layer")
    }

    /// Per-point output vectors for `x` at time `t`.
    pub fn forward(&self, weights: &[f64], t: f64, x: &PointCloud, condition: Condition<'_>) -> Result<Vec<Point3>> {
        self.check_weights(weights)?;
        let features = self.features(t, x, condition)?;
        Ok(self.run(weights, features, x.len(), false)?.0)
    }

    fn backward(&self, weights: &[f64], cache: &ForwardCache, upstream: &[Point3], grad: &mut [f64]) {
        let act = self.config.activation;
        let last = self.layers.len() - 1;
        let n_points = upstream.len();
        let mut delta: Vec<f64> = upstream.iter().flat_map(|g| g.iter().copied()).collect();
        for l in (0..=last).rev() {
            let layer = self.layers[l];
            let input = &cache.inputs[l];
            {
                let (gw, gb) =
                    grad[layer.weight..layer.bias + layer.fan_out].split_at_mut(layer.fan_in * layer.fan_out);
                for (h, d) in input.chunks_exact(layer.fan_in).zip(delta.chunks_exact(layer.fan_out)) {
                    for (o, &dv) in d.iter().enumerate() {
                        if dv == 0.0 {
                            continue;
                        }
                        gb[o] += dv;
                        let row = &mut gw[o * layer.fan_in..(o + 1) * layer.fan_in];
                        for (g, &hv) in row.iter_mut().zip(h) {
                            *g += dv * hv;
                        }
                    }
                }
            }
            if l == 0 {
                break;
            }
            let w = &weights[layer.weight..layer.bias];
            let z_prev = &cache.pre[l - 1];
            let mut next = vec![0.0; n_points * layer.fan_in];
            for ((d, nrow), zrow) in delta
                .chunks_exact(layer.fan_out)
                .zip(next.chunks_exact_mut(layer.fan_in))
                .zip(z_prev.chunks_exact(layer.fan_in))
            {
                for (o, &dv) in d.iter().enumerate() {
                    if dv == 0.0 {
                        continue;
                    }
                    let row = &w[o * layer.fan_in..(o + 1) * layer.fan_in];
                    for (nv, &wv) in nrow.iter_mut().zip(row) {
                        *nv += dv * wv;
                    }
                }
                for (nv, &zv) in nrow.iter_mut().zip(zrow) {
                    *nv *= act.derivative(zv);
                }
            }
            delta = next;
        }
    }

    /// Batch-averaged loss report and exact gradient of the batch-averaged
    /// loss with respect to `weights`. `loss(i, u)` returns the loss of item
    /// `i` for prediction `u` and its gradient with respect to `u`.
    pub fn loss_and_gradient<F>(
        &self,
        weights: &[f64],
        batch: &[FieldInput<'_>],
        mut loss: F,
    ) -> Result<(LossReport, Vec<f64>)>
    where
        F: FnMut(usize, &[Point3]) -> Result<(LossReport, Vec<Point3>)>,
    {
        self.check_weights(weights)?;
        if batch.is_empty() {
            return Err(Error::invalid("empty batch"));
        }
        let mut grad = vec![0.0; self.n_params];
        let mut report = LossReport::default();
        let scale = 1.0 / batch.len() as f64;
        for (i, item) in batch.iter().enumerate() {
            let features = self.features(item.t, item.x_t, item.condition)?;
            let (u, cache) = self.run(weights, features, item.x_t.len(), true)?;
            let (r, du) = loss(i, &u)?;
            if du.len() != u.len() {
                return Err(Error::LengthMismatch {
                    expected: u.len(),
                    found: du.len(),
                });
            }
            let du: Vec<Point3> = du.iter().map(|g| [g[0] * scale, g[1] * scale, g[2] * scale]).collect();
            self.backward(weights, cache.as_ref().expect("cache kept"), &du, &mut grad);
            report.nfm += r.nfm * scale;
            report.cdm += r.cdm * scale;
            report.total += r.total * scale;
        }
        Ok((report, grad))
    }

    /// Computes the gradient, applies one Adam step and bumps the step count.
    /// On a non-finite loss or gradient both states are left untouched.
    pub fn backward_and_step<F>(
        &self,
        state: &mut ModelState,
        opt: &mut OptimizerState,
        batch: &[FieldInput<'_>],
        loss: F,
    ) -> Result<LossReport>
    where
        F: FnMut(usize, &[Point3]) -> Result<(LossReport, Vec<Point3>)>,
    {
        if opt.first_moment.len() != self.n_params || state.ema_weights.len() != self.n_params {
            return Err(Error::LengthMismatch {
                expected: self.n_params,
                found: opt.first_moment.len().min(state.ema_weights.len()),
            });
        }
        let (report, grad) = self.loss_and_gradient(&state.weights, batch, loss)?;
        if !report.is_finite() {
            return Err(Error::NonFiniteLoss {
                step: state.step_count as usize,
            });
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteGradient);
        }
        let mut next = state.weights.clone();
        let mut next_opt = opt.clone();
        next_opt.step(&mut next, &grad);
        if next.iter().any(|w| !w.is_finite()) {
            return Err(Error::NonFiniteGradient);
        }
        state.weights = next;
        *opt = next_opt;
        state.step_count += 1;
        Ok(report)
    }
}
