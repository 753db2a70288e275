//! A small differentiable network: "same"-padded stride-1 convolutions
//! followed by fully connected layers, ELU or identity activations, one
//! scalar output.
//!
//! All parameters live in one flat vector (per layer: weights, then biases) so
//! the optimizer, the target copy and checkpoints can treat them uniformly.
//! Convolution weights are indexed `[in][ky][kx][out]`, dense weights
//! `[out][in]`. Inputs arrive channel-major (one plane after another) and are
//! transposed once, so convolution activations are stored cell-major with
//! channels innermost; the first dense layer reads them in that order.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{config_err, contract, Result};
use crate::factory::{FEATURE_PLANES, GRID_SIDE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Elu,
    Linear,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Elu if z <= 0.0 => libm::expm1(z),
            _ => z,
        }
    }

    /// Derivative expressed through the pre-activation.
    #[inline]
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Elu if z <= 0.0 => libm::exp(z),
            _ => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    /// Stride-1 convolution with odd kernel and "same" zero padding.
    Conv {
        filters: usize,
        kernel: usize,
        activation: Activation,
    },
    Dense {
        units: usize,
        activation: Activation,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputShape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl InputShape {
    pub fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Named architecture presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetPreset {
    /// 128-filter convolutional value network.
    Paper,
    /// Reduced widths for desktop-scale experiments.
    #[default]
    Desk,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchitectureDescriptor {
    pub input: InputShape,
    pub layers: Vec<LayerSpec>,
}

const FACTORY_INPUT: InputShape = InputShape {
    channels: FEATURE_PLANES,
    height: GRID_SIDE,
    width: GRID_SIDE,
};

impl ArchitectureDescriptor {
    /// conv 128@5×5, 3 × conv 128@3×3, conv 1@1×1, dense 256, linear output.
    pub fn paper() -> Self {
        Self::conv_stack(128, 3, 256)
    }

    /// conv 16@5×5, 2 × conv 16@3×3, conv 1@1×1, dense 32, linear output.
    pub fn desk() -> Self {
        Self::conv_stack(16, 2, 32)
    }

    pub fn preset(preset: NetPreset) -> Self {
        match preset {
            NetPreset::Paper => Self::paper(),
            NetPreset::Desk => Self::desk(),
        }
    }

    fn conv_stack(filters: usize, three_by_three: usize, dense: usize) -> Self {
        let elu = Activation::Elu;
        let mut layers = vec![LayerSpec::Conv {
            filters,
            kernel: 5,
            activation: elu,
        }];
        layers.extend((0..three_by_three).map(|_| LayerSpec::Conv {
            filters,
            kernel: 3,
            activation: elu,
        }));
        layers.push(LayerSpec::Conv {
            filters: 1,
            kernel: 1,
            activation: elu,
        });
        layers.push(LayerSpec::Dense {
            units: dense,
            activation: elu,
        });
        layers.push(LayerSpec::Dense {
            units: 1,
            activation: Activation::Linear,
        });
        Self {
            input: FACTORY_INPUT,
            layers,
        }
    }

    /// A single affine unit over a flat input of `len` features.
    pub fn linear(len: usize) -> Self {
        Self {
            input: InputShape {
                channels: len,
                height: 1,
                width: 1,
            },
            layers: vec![LayerSpec::Dense {
                units: 1,
                activation: Activation::Linear,
            }],
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.plan().map(|_| ())
    }

    fn plan(&self) -> Result<Vec<LayerPlan>> {
        if self.input.is_empty() {
            return Err(config_err!("network input is empty"));
        }
        let mut plans = Vec::with_capacity(self.layers.len());
        let mut channels = self.input.channels;
        let (height, width) = (self.input.height, self.input.width);
        let mut flat = false;
        let mut offset = 0;
        for (index, layer) in self.layers.iter().enumerate() {
            let plan = match *layer {
                LayerSpec::Conv {
                    filters,
                    kernel,
                    activation,
                } => {
                    if flat {
                        return Err(config_err!("layer {index}: convolution after a dense layer"));
                    }
                    if kernel % 2 == 0 || filters == 0 {
                        return Err(config_err!("layer {index}: kernel must be odd and filters positive"));
                    }
                    let weights = filters * channels * kernel * kernel;
                    let plan = LayerPlan {
                        kind: Kind::Conv { kernel },
                        activation,
                        in_channels: channels,
                        out_channels: filters,
                        height,
                        width,
                        weight_offset: offset,
                        bias_offset: offset + weights,
                    };
                    channels = filters;
                    offset += weights + filters;
                    plan
                }
                LayerSpec::Dense { units, activation } => {
                    if units == 0 {
                        return Err(config_err!("layer {index}: dense layer without units"));
                    }
                    let inputs = if flat { channels } else { channels * height * width };
                    flat = true;
                    let weights = units * inputs;
                    let plan = LayerPlan {
                        kind: Kind::Dense,
                        activation,
                        in_channels: inputs,
                        out_channels: units,
                        height: 1,
                        width: 1,
                        weight_offset: offset,
                        bias_offset: offset + weights,
                    };
                    channels = units;
                    offset += weights + units;
                    plan
                }
            };
            plans.push(plan);
        }
        if !flat || channels != 1 {
            return Err(config_err!("network must end in a dense layer with one unit"));
        }
        Ok(plans)
    }

    pub fn parameter_count(&self) -> Result<usize> {
        let plans = self.plan()?;
        Ok(plans.last().map_or(0, |p| p.bias_offset + p.out_channels))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Conv { kernel: usize },
    Dense,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct LayerPlan {
    kind: Kind,
    activation: Activation,
    in_channels: usize,
    out_channels: usize,
    height: usize,
    width: usize,
    weight_offset: usize,
    bias_offset: usize,
}

impl LayerPlan {
    fn in_len(&self) -> usize {
        match self.kind {
            Kind::Conv { .. } => self.in_channels * self.height * self.width,
            Kind::Dense => self.in_channels,
        }
    }

    fn out_len(&self) -> usize {
        self.out_channels * self.height * self.width
    }

    fn weight_len(&self) -> usize {
        self.bias_offset - self.weight_offset
    }

    fn fan_in(&self) -> usize {
        match self.kind {
            Kind::Conv { kernel } => self.in_channels * kernel * kernel,
            Kind::Dense => self.in_channels,
        }
    }

    /// Pre-activations `z = W·x + b`.
    fn forward(&self, params: &[f64], input: &[f64], z: &mut [f64]) {
        let w = &params[self.weight_offset..self.bias_offset];
        let b = &params[self.bias_offset..self.bias_offset + self.out_channels];
        match self.kind {
            Kind::Dense => {
                let n_in = self.in_channels;
                for (o, zo) in z.iter_mut().enumerate() {
                    let row = &w[o * n_in..(o + 1) * n_in];
                    *zo = b[o] + row.iter().zip(input).map(|(a, x)| a * x).sum::<f64>();
                }
            }
            Kind::Conv { kernel } => {
                let outs = self.out_channels;
                for zc in z.chunks_exact_mut(outs) {
                    zc.copy_from_slice(b);
                }
                self.for_each_tap(kernel, |in_cell, out_cell, tap| {
                    let zc = &mut z[out_cell * outs..(out_cell + 1) * outs];
                    for c in 0..self.in_channels {
                        let v = input[in_cell * self.in_channels + c];
                        if v == 0.0 {
                            continue;
                        }
                        let row = &w[(c * kernel * kernel + tap) * outs..][..outs];
                        for (zo, wo) in zc.iter_mut().zip(row) {
                            *zo += v * wo;
                        }
                    }
                });
            }
        }
    }

    /// Visits every (input cell, output cell, kernel tap) triple of a
    /// "same"-padded convolution. Output cell `(y, x)` reads input cell
    /// `(y + ky − pad, x + kx − pad)` through tap `ky · kernel + kx`.
    #[inline]
    fn for_each_tap(&self, kernel: usize, mut visit: impl FnMut(usize, usize, usize)) {
        let (h, wd) = (self.height as isize, self.width as isize);
        let pad = (kernel / 2) as isize;
        for y in 0..h {
            for x in 0..wd {
                let out_cell = (y * wd + x) as usize;
                for ky in 0..kernel as isize {
                    let iy = y + ky - pad;
                    if iy < 0 || iy >= h {
                        continue;
                    }
                    for kx in 0..kernel as isize {
                        let ix = x + kx - pad;
                        if ix < 0 || ix >= wd {
                            continue;
                        }
                        visit((iy * wd + ix) as usize, out_cell, ky as usize * kernel + kx as usize);
                    }
                }
            }
        }
    }

    /// Accumulates parameter gradients from `grad_z` (gradient w.r.t. the
    /// pre-activations) and, when requested, writes the input gradient.
    fn backward(
        &self,
        params: &[f64],
        input: &[f64],
        grad_z: &[f64],
        grads: &mut [f64],
        grad_input: Option<&mut [f64]>,
    ) {
        let w = &params[self.weight_offset..self.bias_offset];
        let (gw, rest) = grads[self.weight_offset..].split_at_mut(self.weight_len());
        let gb = &mut rest[..self.out_channels];
        match self.kind {
            Kind::Dense => {
                let n_in = self.in_channels;
                for (o, &g) in grad_z.iter().enumerate() {
                    gb[o] += g;
                    if g == 0.0 {
                        continue;
                    }
                    for (gwi, x) in gw[o * n_in..(o + 1) * n_in].iter_mut().zip(input) {
                        *gwi += g * x;
                    }
                }
                if let Some(gi) = grad_input {
                    gi.fill(0.0);
                    for (o, &g) in grad_z.iter().enumerate() {
                        if g == 0.0 {
                            continue;
                        }
                        for (gii, wi) in gi.iter_mut().zip(&w[o * n_in..(o + 1) * n_in]) {
                            *gii += g * wi;
                        }
                    }
                }
            }
            Kind::Conv { kernel } => {
                let outs = self.out_channels;
                let ins = self.in_channels;
                let k2 = kernel * kernel;
                for gc in grad_z.chunks_exact(outs) {
                    for (gbo, g) in gb.iter_mut().zip(gc) {
                        *gbo += g;
                    }
                }
                self.for_each_tap(kernel, |in_cell, out_cell, tap| {
                    let gc = &grad_z[out_cell * outs..(out_cell + 1) * outs];
                    for c in 0..ins {
                        let v = input[in_cell * ins + c];
                        if v == 0.0 {
                            continue;
                        }
                        let row = &mut gw[(c * k2 + tap) * outs..][..outs];
                        for (gwo, g) in row.iter_mut().zip(gc) {
                            *gwo += v * g;
                        }
                    }
                });
                if let Some(gi) = grad_input {
                    gi.fill(0.0);
                    self.for_each_tap(kernel, |in_cell, out_cell, tap| {
                        let gc = &grad_z[out_cell * outs..(out_cell + 1) * outs];
                        for c in 0..ins {
                            let row = &w[(c * k2 + tap) * outs..][..outs];
                            gi[in_cell * ins + c] += row.iter().zip(gc).map(|(a, g)| a * g).sum::<f64>();
                        }
                    });
                }
            }
        }
    }
}

/// Per-layer buffers of one forward pass, kept for backpropagation.
#[derive(Debug, Clone, Default)]
pub struct ForwardCache {
    /// `inputs[l]` is the input of layer `l`; the last entry is the output.
    inputs: Vec<Vec<f64>>,
    pre_activations: Vec<Vec<f64>>,
    grad_a: Vec<f64>,
    grad_b: Vec<f64>,
}

/// Value network with online parameters θ and target parameters θ⁻.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueNet {
    descriptor: ArchitectureDescriptor,
    plan: Vec<LayerPlan>,
    params: Vec<f64>,
    target: Vec<f64>,
}

impl ValueNet {
    /// Weights uniform in `±1/√fan_in`, biases zero; target starts equal.
    pub fn new<R: Rng + ?Sized>(descriptor: ArchitectureDescriptor, rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(descriptor)?;
        for layer in &net.plan {
            let bound = 1.0 / libm::sqrt(layer.fan_in() as f64);
            for w in &mut net.params[layer.weight_offset..layer.bias_offset] {
                *w = rng.random_range(-bound..bound);
            }
        }
        net.target.copy_from_slice(&net.params);
        Ok(net)
    }

    pub fn zeros(descriptor: ArchitectureDescriptor) -> Result<Self> {
        let plan = descriptor.plan()?;
        let count = plan.last().map_or(0, |p| p.bias_offset + p.out_channels);
        Ok(Self {
            descriptor,
            plan,
            params: vec![0.0; count],
            target: vec![0.0; count],
        })
    }

    /// Rebuilds a network from stored parameter vectors.
    pub fn from_parts(descriptor: ArchitectureDescriptor, params: Vec<f64>, target: Vec<f64>) -> Result<Self> {
        let mut net = Self::zeros(descriptor)?;
        if params.len() != net.params.len() || target.len() != net.target.len() {
            return Err(contract!(
                "expected {} parameters, got {} and {}",
                net.params.len(),
                params.len(),
                target.len()
            ));
        }
        net.params = params;
        net.target = target;
        Ok(net)
    }

    pub fn descriptor(&self) -> &ArchitectureDescriptor {
        &self.descriptor
    }

    pub fn input_len(&self) -> usize {
        self.descriptor.input.len()
    }

    pub fn parameter_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn target_params(&self) -> &[f64] {
        &self.target
    }

    /// θ⁻ := θ
    pub fn sync_target(&mut self) {
        self.target.copy_from_slice(&self.params);
    }

    pub fn predict(&self, input: &[f64], use_target: bool) -> Result<f64> {
        self.check_input(input)?;
        let params = if use_target { &self.target } else { &self.params };
        Ok(self.forward_with(params, input))
    }

    pub(crate) fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.input_len() {
            return Err(contract!(
                "input has {} values, network expects {}",
                input.len(),
                self.input_len()
            ));
        }
        Ok(())
    }

    /// Copies `input` into `out`, transposed to cell-major when the first layer
    /// is a convolution.
    fn load_input(&self, input: &[f64], out: &mut Vec<f64>) {
        out.clear();
        match self.plan.first().map(|p| p.kind) {
            Some(Kind::Conv { .. }) => {
                let channels = self.descriptor.input.channels;
                let area = self.descriptor.input.height * self.descriptor.input.width;
                out.extend((0..area * channels).map(|i| input[(i % channels) * area + i / channels]));
            }
            _ => out.extend_from_slice(input),
        }
    }

    /// Forward pass without caching, through an arbitrary parameter vector.
    pub(crate) fn forward_with(&self, params: &[f64], input: &[f64]) -> f64 {
        let mut current = Vec::new();
        self.load_input(input, &mut current);
        let mut z = Vec::new();
        for layer in &self.plan {
            z.clear();
            z.resize(layer.out_len(), 0.0);
            layer.forward(params, &current, &mut z);
            for v in z.iter_mut() {
                *v = layer.activation.apply(*v);
            }
            core::mem::swap(&mut current, &mut z);
        }
        current[0]
    }

    /// Forward pass through θ that records what backpropagation needs.
    pub(crate) fn forward_cached(&self, input: &[f64], cache: &mut ForwardCache) -> f64 {
        self.forward_cached_with(&self.params, input, cache)
    }

    pub(crate) fn forward_cached_with(&self, params: &[f64], input: &[f64], cache: &mut ForwardCache) -> f64 {
        let layers = self.plan.len();
        cache.inputs.resize_with(layers + 1, Vec::new);
        cache.pre_activations.resize_with(layers, Vec::new);
        self.load_input(input, &mut cache.inputs[0]);
        for (l, layer) in self.plan.iter().enumerate() {
            let (before, after) = cache.inputs.split_at_mut(l + 1);
            let z = &mut cache.pre_activations[l];
            z.clear();
            z.resize(layer.out_len(), 0.0);
            layer.forward(params, &before[l], z);
            let out = &mut after[0];
            out.clear();
            out.extend(z.iter().map(|&v| layer.activation.apply(v)));
        }
        cache.inputs[layers][0]
    }

    /// Adds `d_output · ∂V/∂θ` to `grads` using a cache from `forward_cached`.
    pub(crate) fn backward(&self, cache: &mut ForwardCache, d_output: f64, grads: &mut [f64]) {
        self.backward_with(&self.params, cache, d_output, grads)
    }

    pub(crate) fn backward_with(&self, params: &[f64], cache: &mut ForwardCache, d_output: f64, grads: &mut [f64]) {
        let ForwardCache {
            inputs,
            pre_activations,
            grad_a,
            grad_b,
        } = cache;
        grad_a.clear();
        grad_a.push(d_output);
        for (l, layer) in self.plan.iter().enumerate().rev() {
            let z = &pre_activations[l];
            for (g, &zv) in grad_a.iter_mut().zip(z) {
                *g *= layer.activation.derivative(zv);
            }
            if l == 0 {
                layer.backward(params, &inputs[l], grad_a, grads, None);
            } else {
                grad_b.clear();
                grad_b.resize(layer.in_len(), 0.0);
                layer.backward(params, &inputs[l], grad_a, grads, Some(grad_b));
                core::mem::swap(grad_a, grad_b);
            }
        }
    }

    /// Pre-activations of every ELU unit for `params`; used to detect kinks.
    pub(crate) fn elu_pre_activations(&self, params: &[f64], input: &[f64], cache: &mut ForwardCache) -> Vec<f64> {
        self.forward_cached_with(params, input, cache);
        self.plan
            .iter()
            .zip(&cache.pre_activations)
            .filter(|(layer, _)| layer.activation == Activation::Elu)
            .flat_map(|(_, z)| z.iter().copied())
            .collect()
    }
}
