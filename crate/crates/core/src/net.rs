//! Network definition, deterministic forward evaluation, and the hand-derived
//! backward pass used by the gradient-based fine-tuning baseline.
//!
//! A network is an ordered list of layers with per-layer weight and bias
//! tensors plus a prune mask. Prunable units are output neurons of dense
//! layers and output channels of conv layers; dropping a unit zeroes its
//! outgoing weights and bias. The final dense (classifier) layer is protected
//! from pruning by default, since dropping output classes would change the
//! label space.
//!
//! A network is immutable during inference and safe to share across threads;
//! training mutates it through explicit step calls from a single owner.

use crate::error::{Error, Result};
use crate::prune::{LayerMask, PruneMask};
use crate::rng::Rng;
use crate::tensor::{add_bias, argmax, conv2d, maxpool2, relu, softmax, Shape, Tensor};
use serde::{Deserialize, Serialize};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

/// One layer of the network.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Dense {
        in_features: usize,
        out_features: usize,
    },
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel_h: usize,
        kernel_w: usize,
        stride: usize,
        padding: usize,
    },
    Relu,
    MaxPool2,
    Flatten,
    Softmax,
}

impl LayerSpec {
    /// Number of prunable units: output neurons or output channels.
    /// Activation, pooling, flatten, and softmax layers have none.
    pub fn unit_count(&self) -> usize {
        match self {
            LayerSpec::Dense { out_features, .. } => *out_features,
            LayerSpec::Conv2d { out_channels, .. } => *out_channels,
            _ => 0,
        }
    }

    /// Weights owned by one prunable unit (bias excluded).
    pub fn weights_per_unit(&self) -> usize {
        match self {
            LayerSpec::Dense { in_features, .. } => *in_features,
            LayerSpec::Conv2d {
                in_channels,
                kernel_h,
                kernel_w,
                ..
            } => in_channels * kernel_h * kernel_w,
            _ => 0,
        }
    }

    pub fn has_params(&self) -> bool {
        matches!(self, LayerSpec::Dense { .. } | LayerSpec::Conv2d { .. })
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Conv2d { .. } => "conv2d",
            LayerSpec::Relu => "relu",
            LayerSpec::MaxPool2 => "maxpool2",
            LayerSpec::Flatten => "flatten",
            LayerSpec::Softmax => "softmax",
        }
    }

    /// Shape this layer produces for the given input shape.
    pub fn output_shape(&self, input: &Shape) -> Result<Shape> {
        match self {
            LayerSpec::Dense {
                in_features,
                out_features,
            } => {
                if input.rank() != 1 || input.dims()[0] != *in_features {
                    return Err(Error::Dimension(format!(
                        "dense layer expects input [{}], got {}",
                        in_features, input
                    )));
                }
                Shape::new(vec![*out_features])
            }
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel_h,
                kernel_w,
                stride,
                padding,
            } => {
                if input.rank() != 3 || input.dims()[0] != *in_channels {
                    return Err(Error::Dimension(format!(
                        "conv2d layer expects input [{}xHxW], got {}",
                        in_channels, input
                    )));
                }
                let (h, w) = (input.dims()[1], input.dims()[2]);
                if *kernel_h > h + 2 * padding || *kernel_w > w + 2 * padding {
                    return Err(Error::Dimension(format!(
                        "conv2d kernel {}x{} larger than padded input {}x{}",
                        kernel_h,
                        kernel_w,
                        h + 2 * padding,
                        w + 2 * padding
                    )));
                }
                let h_out = (h + 2 * padding - kernel_h) / stride + 1;
                let w_out = (w + 2 * padding - kernel_w) / stride + 1;
                Shape::new(vec![*out_channels, h_out, w_out])
            }
            LayerSpec::Relu => Ok(input.clone()),
            LayerSpec::MaxPool2 => {
                if input.rank() != 3 {
                    return Err(Error::Dimension(format!(
                        "maxpool2 expects rank-3 input, got {input}"
                    )));
                }
                Shape::new(vec![
                    input.dims()[0],
                    input.dims()[1].div_ceil(2),
                    input.dims()[2].div_ceil(2),
                ])
            }
            LayerSpec::Flatten => Shape::new(vec![input.elem_count()]),
            LayerSpec::Softmax => {
                if input.rank() != 1 {
                    return Err(Error::Dimension(format!(
                        "softmax expects rank-1 input, got {input}"
                    )));
                }
                Ok(input.clone())
            }
        }
    }
}

/// A prunable layer's position and unit geometry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PrunableLayer {
    pub layer_index: usize,
    pub unit_count: usize,
    pub weights_per_unit: usize,
}

/// Ordered layer graph with weights, biases, and per-unit prune mask.
#[derive(Debug, Clone)]
pub struct Network {
    input_shape: Shape,
    layers: Vec<LayerSpec>,
    weights: Vec<Option<Tensor>>,
    biases: Vec<Option<Tensor>>,
    mask: PruneMask,
    protect_classifier: bool,
    seed: u64,
}

impl Network {
    /// Build a network with He-uniform weights drawn from `seed` and an
    /// all-keep mask. The classifier layer is protected from pruning.
    pub fn new(input_shape: Shape, layers: Vec<LayerSpec>, seed: u64) -> Result<Self> {
        Self::with_options(input_shape, layers, seed, true)
    }

    /// As [`Network::new`], optionally leaving the classifier layer prunable.
    pub fn with_options(
        input_shape: Shape,
        layers: Vec<LayerSpec>,
        seed: u64,
        protect_classifier: bool,
    ) -> Result<Self> {
        validate_topology(&input_shape, &layers)?;
        let mut rng = Rng::new(seed);
        let mut weights = Vec::with_capacity(layers.len());
        let mut biases = Vec::with_capacity(layers.len());
        for spec in &layers {
            match spec {
                LayerSpec::Dense {
                    in_features,
                    out_features,
                } => {
                    let limit = (6.0 / *in_features as f64).sqrt();
                    let w: Vec<f32> = (0..out_features * in_features)
                        .map(|_| rng.uniform(-limit, limit) as f32)
                        .collect();
                    weights.push(Some(Tensor::from_slice(
                        &[*out_features, *in_features],
                        &w,
                    )?));
                    biases.push(Some(Tensor::zeros(Shape::new(vec![*out_features])?)));
                }
                LayerSpec::Conv2d {
                    in_channels,
                    out_channels,
                    kernel_h,
                    kernel_w,
                    ..
                } => {
                    let fan_in = in_channels * kernel_h * kernel_w;
                    let limit = (6.0 / fan_in as f64).sqrt();
                    let n = out_channels * in_channels * kernel_h * kernel_w;
                    let w: Vec<f32> = (0..n).map(|_| rng.uniform(-limit, limit) as f32).collect();
                    weights.push(Some(Tensor::from_slice(
                        &[*out_channels, *in_channels, *kernel_h, *kernel_w],
                        &w,
                    )?));
                    biases.push(Some(Tensor::zeros(Shape::new(vec![*out_channels])?)));
                }
                _ => {
                    weights.push(None);
                    biases.push(None);
                }
            }
        }
        let mask = all_keep_mask(&layers, protect_classifier);
        Ok(Network {
            input_shape,
            layers,
            weights,
            biases,
            mask,
            protect_classifier,
            seed,
        })
    }

    /// Reassemble a network from stored parts (model loading). The mask is
    /// re-applied so the dropped-units-are-zero invariant holds regardless of
    /// what the weight tensors contain.
    pub fn from_parts(
        input_shape: Shape,
        layers: Vec<LayerSpec>,
        weights: Vec<Option<Tensor>>,
        biases: Vec<Option<Tensor>>,
        mask: PruneMask,
        protect_classifier: bool,
        seed: u64,
    ) -> Result<Self> {
        validate_topology(&input_shape, &layers)?;
        if weights.len() != layers.len() || biases.len() != layers.len() {
            return Err(Error::Dimension(format!(
                "expected {} weight/bias slots, got {}/{}",
                layers.len(),
                weights.len(),
                biases.len()
            )));
        }
        for (i, spec) in layers.iter().enumerate() {
            match spec {
                LayerSpec::Dense {
                    in_features,
                    out_features,
                } => {
                    let w = weights[i].as_ref().ok_or_else(|| missing_params(i))?;
                    let b = biases[i].as_ref().ok_or_else(|| missing_params(i))?;
                    if w.shape().dims() != [*out_features, *in_features]
                        || b.shape().dims() != [*out_features]
                    {
                        return Err(Error::Dimension(format!(
                            "layer {i}: stored tensor shapes do not match the dense spec"
                        )));
                    }
                }
                LayerSpec::Conv2d {
                    in_channels,
                    out_channels,
                    kernel_h,
                    kernel_w,
                    ..
                } => {
                    let w = weights[i].as_ref().ok_or_else(|| missing_params(i))?;
                    let b = biases[i].as_ref().ok_or_else(|| missing_params(i))?;
                    if w.shape().dims() != [*out_channels, *in_channels, *kernel_h, *kernel_w]
                        || b.shape().dims() != [*out_channels]
                    {
                        return Err(Error::Dimension(format!(
                            "layer {i}: stored tensor shapes do not match the conv2d spec"
                        )));
                    }
                }
                _ => {
                    if weights[i].is_some() || biases[i].is_some() {
                        return Err(Error::Dimension(format!(
                            "layer {i}: {} layer cannot carry parameters",
                            spec.kind_name()
                        )));
                    }
                }
            }
        }
        let mut net = Network {
            input_shape,
            layers,
            weights,
            biases,
            mask: mask.clone(),
            protect_classifier,
            seed,
        };
        net.check_mask_structure(&mask)?;
        net.zero_dropped_units();
        Ok(net)
    }

    pub fn input_shape(&self) -> &Shape {
        &self.input_shape
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn weight(&self, layer: usize) -> Option<&Tensor> {
        self.weights.get(layer).and_then(|w| w.as_ref())
    }

    pub fn bias(&self, layer: usize) -> Option<&Tensor> {
        self.biases.get(layer).and_then(|b| b.as_ref())
    }

    pub fn mask(&self) -> &PruneMask {
        &self.mask
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn protect_classifier(&self) -> bool {
        self.protect_classifier
    }

    /// Logit vector length.
    pub fn class_count(&self) -> usize {
        self.output_shape().dims()[0]
    }

    /// Shape of the logits (validated at construction to be rank 1).
    pub fn output_shape(&self) -> Shape {
        let mut shape = self.input_shape.clone();
        for spec in &self.layers {
            shape = spec
                .output_shape(&shape)
                .expect("topology validated at construction");
        }
        shape
    }

    /// Prunable layers in order: parameterized layers with units, minus the
    /// protected classifier.
    pub fn prunable_layers(&self) -> Vec<PrunableLayer> {
        let classifier = if self.protect_classifier {
            self.classifier_index()
        } else {
            None
        };
        self.layers
            .iter()
            .enumerate()
            .filter(|(i, spec)| spec.unit_count() > 0 && Some(*i) != classifier)
            .map(|(i, spec)| PrunableLayer {
                layer_index: i,
                unit_count: spec.unit_count(),
                weights_per_unit: spec.weights_per_unit(),
            })
            .collect()
    }

    /// Index of the final parameterized layer when it is dense.
    fn classifier_index(&self) -> Option<usize> {
        self.layers
            .iter()
            .rposition(|spec| spec.has_params())
            .filter(|&i| matches!(self.layers[i], LayerSpec::Dense { .. }))
    }

    /// Forward pass; returns the class logits (the output of the last
    /// non-softmax layer).
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        Ok(self.run(x, false)?.0)
    }

    /// Forward pass that also returns each layer's post-activation output.
    /// Logits are byte-identical to [`Network::forward`]: the same arithmetic
    /// runs either way, tracing only retains the intermediate tensors.
    pub fn forward_traced(&self, x: &Tensor) -> Result<(Tensor, Vec<Tensor>)> {
        let (logits, trace) = self.run(x, true)?;
        Ok((logits, trace.expect("trace requested")))
    }

    fn run(&self, x: &Tensor, want_trace: bool) -> Result<(Tensor, Option<Vec<Tensor>>)> {
        if x.shape() != &self.input_shape {
            return Err(Error::Dimension(format!(
                "input shape {} does not match declared {}",
                x.shape(),
                self.input_shape
            )));
        }
        let mut trace = want_trace.then(|| Vec::with_capacity(self.layers.len()));
        let mut cur = x.clone();
        let mut logits = None;
        for (i, spec) in self.layers.iter().enumerate() {
            let is_final_softmax = matches!(spec, LayerSpec::Softmax) && i == self.layers.len() - 1;
            if is_final_softmax {
                logits = Some(cur.clone());
            }
            cur = self
                .apply_layer(i, &cur)
                .map_err(|e| Error::Dimension(format!("layer {i} ({}): {e}", spec.kind_name())))?;
            if let Some(trace) = trace.as_mut() {
                trace.push(cur.clone());
            }
        }
        Ok((logits.unwrap_or(cur), trace))
    }

    fn apply_layer(&self, idx: usize, x: &Tensor) -> Result<Tensor> {
        match &self.layers[idx] {
            LayerSpec::Dense { .. } => {
                let w = self.weights[idx].as_ref().expect("dense layer has weights");
                let b = self.biases[idx].as_ref().expect("dense layer has bias");
                dense_forward(w, b, x)
            }
            LayerSpec::Conv2d {
                stride, padding, ..
            } => {
                let w = self.weights[idx].as_ref().expect("conv layer has weights");
                let b = self.biases[idx].as_ref().expect("conv layer has bias");
                add_bias(&conv2d(x, w, *stride, *padding)?, b)
            }
            LayerSpec::Relu => Ok(relu(x)),
            LayerSpec::MaxPool2 => maxpool2(x),
            LayerSpec::Flatten => x.reshape(&[x.shape().elem_count()]),
            LayerSpec::Softmax => softmax(x),
        }
    }

    /// Exact cross-entropy gradients for all weights and biases. Gradients of
    /// dropped units are forced to zero so fine-tuning cannot resurrect them.
    pub fn backward(&self, x: &Tensor, label: usize) -> Result<GradientSet> {
        let (logits, trace) = self.forward_traced(x)?;
        let n = logits.shape().dims()[0];
        if label >= n {
            return Err(Error::InvalidArgument(format!(
                "label {label} out of range for {n} classes"
            )));
        }
        // d(cross-entropy)/d(logits) = softmax(logits) - onehot(label)
        let probs = softmax(&logits)?;
        let mut delta_data: Vec<f32> = probs.data().to_vec();
        delta_data[label] -= 1.0;
        let mut delta = Tensor::vector(delta_data)?;

        let mut grads = GradientSet::zeros_like(self);
        for i in (0..self.layers.len()).rev() {
            if matches!(self.layers[i], LayerSpec::Softmax) && i == self.layers.len() - 1 {
                // Folded into the cross-entropy gradient above.
                continue;
            }
            let input = if i == 0 { x } else { &trace[i - 1] };
            delta = match &self.layers[i] {
                LayerSpec::Dense { .. } => self.backward_dense(i, input, &delta, &mut grads)?,
                LayerSpec::Conv2d {
                    stride, padding, ..
                } => self.backward_conv(i, input, &delta, *stride, *padding, &mut grads)?,
                LayerSpec::Relu => {
                    let out = &trace[i];
                    let data = delta
                        .data()
                        .iter()
                        .zip(out.data())
                        .map(|(&d, &o)| if o > 0.0 { d } else { 0.0 })
                        .collect();
                    Tensor::new(input.shape().clone(), data)?
                }
                LayerSpec::MaxPool2 => backward_maxpool2(input, &delta)?,
                LayerSpec::Flatten => delta.reshape(input.shape().dims())?,
                LayerSpec::Softmax => {
                    return Err(Error::Dimension(format!(
                        "layer {i}: softmax is only supported as the final layer"
                    )))
                }
            };
        }
        Ok(grads)
    }

    fn backward_dense(
        &self,
        idx: usize,
        input: &Tensor,
        delta: &Tensor,
        grads: &mut GradientSet,
    ) -> Result<Tensor> {
        let w = self.weights[idx].as_ref().unwrap();
        let (out, inn) = (w.shape().dims()[0], w.shape().dims()[1]);
        let mut delta = delta.data().to_vec();
        self.zero_dropped(idx, &mut delta, 1);
        let dw = grads.weights[idx].as_mut().unwrap().data_mut();
        let db = grads.biases[idx].as_mut().unwrap().data_mut();
        for o in 0..out {
            let d = delta[o];
            db[o] = d;
            for i in 0..inn {
                dw[o * inn + i] = d * input.data()[i];
            }
        }
        let mut dx = vec![0.0f32; inn];
        for i in 0..inn {
            let mut acc = 0.0f64;
            for o in 0..out {
                acc += f64::from(delta[o]) * f64::from(w.data()[o * inn + i]);
            }
            dx[i] = acc as f32;
        }
        Tensor::vector(dx)
    }

    fn backward_conv(
        &self,
        idx: usize,
        input: &Tensor,
        delta: &Tensor,
        stride: usize,
        padding: usize,
        grads: &mut GradientSet,
    ) -> Result<Tensor> {
        let w = self.weights[idx].as_ref().unwrap();
        let [c_out, c_in, kh, kw] = [
            w.shape().dims()[0],
            w.shape().dims()[1],
            w.shape().dims()[2],
            w.shape().dims()[3],
        ];
        let (h, iw) = (input.shape().dims()[1], input.shape().dims()[2]);
        let (h_out, w_out) = (delta.shape().dims()[1], delta.shape().dims()[2]);
        let mut delta = delta.data().to_vec();
        self.zero_dropped(idx, &mut delta, h_out * w_out);

        let mut dw = vec![0.0f64; w.data().len()];
        let mut db = vec![0.0f64; c_out];
        let mut dx = vec![0.0f64; input.data().len()];
        for co in 0..c_out {
            for oy in 0..h_out {
                for ox in 0..w_out {
                    let d = f64::from(delta[(co * h_out + oy) * w_out + ox]);
                    if d == 0.0 {
                        continue;
                    }
                    db[co] += d;
                    for ci in 0..c_in {
                        for ky in 0..kh {
                            let iy = (oy * stride + ky) as isize - padding as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            for kx in 0..kw {
                                let ix = (ox * stride + kx) as isize - padding as isize;
                                if ix < 0 || ix >= iw as isize {
                                    continue;
                                }
                                let in_pos = (ci * h + iy as usize) * iw + ix as usize;
                                let k_pos = ((co * c_in + ci) * kh + ky) * kw + kx;
                                dw[k_pos] += d * f64::from(input.data()[in_pos]);
                                dx[in_pos] += d * f64::from(w.data()[k_pos]);
                            }
                        }
                    }
                }
            }
        }
        let gw = grads.weights[idx].as_mut().unwrap().data_mut();
        for (g, v) in gw.iter_mut().zip(&dw) {
            *g = *v as f32;
        }
        let gb = grads.biases[idx].as_mut().unwrap().data_mut();
        for (g, v) in gb.iter_mut().zip(&db) {
            *g = *v as f32;
        }
        Tensor::new(
            input.shape().clone(),
            dx.iter().map(|&v| v as f32).collect(),
        )
    }

    /// Zero the slice entries belonging to dropped units of layer `idx`;
    /// `span` is the number of contiguous values per unit.
    fn zero_dropped(&self, idx: usize, values: &mut [f32], span: usize) {
        if let Some(layer_mask) = self.mask.layer(idx) {
            for (u, &keep) in layer_mask.keep.iter().enumerate() {
                if !keep {
                    for v in &mut values[u * span..(u + 1) * span] {
                        *v = 0.0;
                    }
                }
            }
        }
    }

    /// Replace the mask and zero all weights and biases of dropped units.
    pub fn apply_mask(&mut self, mask: &PruneMask) -> Result<()> {
        self.check_mask_structure(mask)?;
        self.mask = mask.clone();
        self.zero_dropped_units();
        Ok(())
    }

    fn check_mask_structure(&self, mask: &PruneMask) -> Result<()> {
        let prunable = self.prunable_layers();
        if mask.layers().len() != prunable.len() {
            return Err(Error::Dimension(format!(
                "mask covers {} layers, network has {} prunable layers",
                mask.layers().len(),
                prunable.len()
            )));
        }
        for (lm, pl) in mask.layers().iter().zip(&prunable) {
            if lm.layer_index != pl.layer_index
                || lm.keep.len() != pl.unit_count
                || lm.weights_per_unit != pl.weights_per_unit
            {
                return Err(Error::Dimension(format!(
                    "mask layer {} does not match network layer {} geometry",
                    lm.layer_index, pl.layer_index
                )));
            }
        }
        Ok(())
    }

    fn zero_dropped_units(&mut self) {
        for lm in self.mask.clone().layers() {
            let idx = lm.layer_index;
            let span = self.layers[idx].weights_per_unit();
            if let Some(w) = self.weights[idx].as_mut() {
                let data = w.data_mut();
                for (u, &keep) in lm.keep.iter().enumerate() {
                    if !keep {
                        for v in &mut data[u * span..(u + 1) * span] {
                            *v = 0.0;
                        }
                    }
                }
            }
            if let Some(b) = self.biases[idx].as_mut() {
                let data = b.data_mut();
                for (u, &keep) in lm.keep.iter().enumerate() {
                    if !keep {
                        data[u] = 0.0;
                    }
                }
            }
        }
    }

    /// Predicted class for one input.
    pub fn predict(&self, x: &Tensor) -> Result<usize> {
        argmax(&self.forward(x)?)
    }
}

fn missing_params(i: usize) -> Error {
    Error::Dimension(format!(
        "layer {i}: parameterized layer is missing stored tensors"
    ))
}

fn validate_topology(input_shape: &Shape, layers: &[LayerSpec]) -> Result<()> {
    if layers.is_empty() {
        return Err(Error::Dimension("network needs at least one layer".into()));
    }
    let mut shape = input_shape.clone();
    for (i, spec) in layers.iter().enumerate() {
        if matches!(spec, LayerSpec::Softmax) && i != layers.len() - 1 {
            return Err(Error::Dimension(format!(
                "layer {i}: softmax is only supported as the final layer"
            )));
        }
        shape = spec
            .output_shape(&shape)
            .map_err(|e| Error::Dimension(format!("layer {i} ({}): {e}", spec.kind_name())))?;
    }
    if shape.rank() != 1 {
        return Err(Error::Dimension(format!(
            "network output must be a logit vector, got shape {shape}"
        )));
    }
    Ok(())
}

pub(crate) fn all_keep_mask(layers: &[LayerSpec], protect_classifier: bool) -> PruneMask {
    let classifier = if protect_classifier {
        layers
            .iter()
            .rposition(|spec| spec.has_params())
            .filter(|&i| matches!(layers[i], LayerSpec::Dense { .. }))
    } else {
        None
    };
    let layer_masks = layers
        .iter()
        .enumerate()
        .filter(|(i, spec)| spec.unit_count() > 0 && Some(*i) != classifier)
        .map(|(i, spec)| LayerMask {
            layer_index: i,
            keep: vec![true; spec.unit_count()],
            weights_per_unit: spec.weights_per_unit(),
        })
        .collect();
    PruneMask::new(layer_masks)
}

fn dense_forward(w: &Tensor, b: &Tensor, x: &Tensor) -> Result<Tensor> {
    let (out, inn) = (w.shape().dims()[0], w.shape().dims()[1]);
    if x.shape().rank() != 1 || x.shape().dims()[0] != inn {
        return Err(Error::Dimension(format!(
            "dense expects input [{inn}], got {}",
            x.shape()
        )));
    }
    let mut z = vec![0.0f32; out];
    for o in 0..out {
        let mut acc = 0.0f64;
        for i in 0..inn {
            acc += f64::from(w.data()[o * inn + i]) * f64::from(x.data()[i]);
        }
        z[o] = acc as f32 + b.data()[o];
    }
    Tensor::vector(z)
}

fn backward_maxpool2(input: &Tensor, delta: &Tensor) -> Result<Tensor> {
    let [c, h, w] = [
        input.shape().dims()[0],
        input.shape().dims()[1],
        input.shape().dims()[2],
    ];
    let (h_out, w_out) = (delta.shape().dims()[1], delta.shape().dims()[2]);
    let mut dx = vec![0.0f32; input.data().len()];
    for ch in 0..c {
        for oy in 0..h_out {
            for ox in 0..w_out {
                // Same scan order as the forward pass, so ties resolve identically.
                let mut best_pos = None;
                let mut best = f32::NEG_INFINITY;
                for dy in 0..2 {
                    let iy = oy * 2 + dy;
                    if iy >= h {
                        continue;
                    }
                    for dxi in 0..2 {
                        let ix = ox * 2 + dxi;
                        if ix >= w {
                            continue;
                        }
                        let pos = (ch * h + iy) * w + ix;
                        if input.data()[pos] > best {
                            best = input.data()[pos];
                            best_pos = Some(pos);
                        }
                    }
                }
                if let Some(pos) = best_pos {
                    dx[pos] += delta.data()[(ch * h_out + oy) * w_out + ox];
                }
            }
        }
    }
    Tensor::new(input.shape().clone(), dx)
}

/// Cross-entropy of a logit vector against a class index:
/// `-log(softmax(logits)[label])`, computed in `f64` via log-sum-exp.
pub fn cross_entropy_loss(logits: &Tensor, label: usize) -> Result<f32> {
    if logits.shape().rank() != 1 {
        return Err(Error::Dimension(format!(
            "cross_entropy_loss expects rank-1 logits, got {}",
            logits.shape()
        )));
    }
    let n = logits.shape().dims()[0];
    if label >= n {
        return Err(Error::InvalidArgument(format!(
            "label {label} out of range for {n} classes"
        )));
    }
    let max = logits
        .data()
        .iter()
        .copied()
        .fold(f32::NEG_INFINITY, f32::max);
    let lse: f64 = logits
        .data()
        .iter()
        .map(|&z| f64::from(z - max).exp())
        .sum::<f64>()
        .ln();
    let loss = lse - f64::from(logits.data()[label] - max);
    Ok(loss.max(0.0) as f32)
}

/// Per-layer gradient tensors mirroring a network's weight and bias shapes.
#[derive(Debug, Clone)]
pub struct GradientSet {
    pub weights: Vec<Option<Tensor>>,
    pub biases: Vec<Option<Tensor>>,
}

impl GradientSet {
    pub fn zeros_like(net: &Network) -> Self {
        let weights = net
            .weights
            .iter()
            .map(|w| w.as_ref().map(|t| Tensor::zeros(t.shape().clone())))
            .collect();
        let biases = net
            .biases
            .iter()
            .map(|b| b.as_ref().map(|t| Tensor::zeros(t.shape().clone())))
            .collect();
        GradientSet { weights, biases }
    }

    pub fn add_assign(&mut self, other: &GradientSet) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            if let (Some(a), Some(b)) = (a.as_mut(), b.as_ref()) {
                for (x, y) in a.data_mut().iter_mut().zip(b.data()) {
                    *x += y;
                }
            }
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            if let (Some(a), Some(b)) = (a.as_mut(), b.as_ref()) {
                for (x, y) in a.data_mut().iter_mut().zip(b.data()) {
                    *x += y;
                }
            }
        }
    }

    pub fn scale(&mut self, factor: f32) {
        for t in self
            .weights
            .iter_mut()
            .chain(self.biases.iter_mut())
            .flatten()
        {
            for v in t.data_mut() {
                *v *= factor;
            }
        }
    }
}

/// Adam optimizer state (first/second moments plus the step counter).
#[derive(Debug, Clone)]
pub struct AdamState {
    t: u64,
    m_w: Vec<Option<Tensor>>,
    v_w: Vec<Option<Tensor>>,
    m_b: Vec<Option<Tensor>>,
    v_b: Vec<Option<Tensor>>,
}

impl AdamState {
    pub fn new(net: &Network) -> Self {
        let zeros = |src: &Vec<Option<Tensor>>| -> Vec<Option<Tensor>> {
            src.iter()
                .map(|t| t.as_ref().map(|t| Tensor::zeros(t.shape().clone())))
                .collect()
        };
        AdamState {
            t: 0,
            m_w: zeros(&net.weights),
            v_w: zeros(&net.weights),
            m_b: zeros(&net.biases),
            v_b: zeros(&net.biases),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }
}

/// One Adam update. Dropped units keep exactly-zero weights: their gradients
/// arrive zeroed from [`Network::backward`] and the mask is re-applied after
/// the update.
pub fn adam_step(net: &mut Network, grads: &GradientSet, state: &mut AdamState, lr: f32) {
    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - ADAM_BETA1.powi(t);
    let bc2 = 1.0 - ADAM_BETA2.powi(t);
    let update = |param: &mut Tensor, grad: &Tensor, m: &mut Tensor, v: &mut Tensor| {
        for i in 0..param.data().len() {
            let g = f64::from(grad.data()[i]);
            let mi = ADAM_BETA1 * f64::from(m.data()[i]) + (1.0 - ADAM_BETA1) * g;
            let vi = ADAM_BETA2 * f64::from(v.data()[i]) + (1.0 - ADAM_BETA2) * g * g;
            m.data_mut()[i] = mi as f32;
            v.data_mut()[i] = vi as f32;
            let m_hat = mi / bc1;
            let v_hat = vi / bc2;
            param.data_mut()[i] -= (f64::from(lr) * m_hat / (v_hat.sqrt() + ADAM_EPSILON)) as f32;
        }
    };
    for i in 0..net.layers.len() {
        if let (Some(w), Some(g)) = (net.weights[i].as_mut(), grads.weights[i].as_ref()) {
            update(
                w,
                g,
                state.m_w[i].as_mut().unwrap(),
                state.v_w[i].as_mut().unwrap(),
            );
        }
        if let (Some(b), Some(g)) = (net.biases[i].as_mut(), grads.biases[i].as_ref()) {
            update(
                b,
                g,
                state.m_b[i].as_mut().unwrap(),
                state.v_b[i].as_mut().unwrap(),
            );
        }
    }
    net.zero_dropped_units();
}
