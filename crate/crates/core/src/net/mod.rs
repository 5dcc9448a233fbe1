//! Network definition: an ordered layer sequence with a parameter store and
//! a fixed-sequence forward/backward pass.
//!
//! The same type serves every model role in the pipeline: the original model,
//! the stochastic teacher, the unlearning student, and the retrain baseline.

pub mod kernels;

use std::cell::Cell;
use std::fmt;

use crate::error::{Error, Result};
use crate::seed::RngSeed;
use crate::tensor::Tensor;
use rand::Rng;

/// Layer descriptor. Shapes compose statically; see [`LayerSpec::output_shape`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LayerSpec {
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    Relu,
    MaxPool2d {
        size: usize,
    },
    Flatten,
    Linear {
        in_features: usize,
        out_features: usize,
    },
}

impl fmt::Display for LayerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
            } => write!(
                f,
                "Conv2d({in_channels}->{out_channels}, k{kernel}, s{stride}, p{padding})"
            ),
            LayerSpec::Relu => write!(f, "ReLU"),
            LayerSpec::MaxPool2d { size } => write!(f, "MaxPool2d({size})"),
            LayerSpec::Flatten => write!(f, "Flatten"),
            LayerSpec::Linear {
                in_features,
                out_features,
            } => write!(f, "Linear({in_features}->{out_features})"),
        }
    }
}

/// Shape of a single sample as it flows through the layer stack.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureShape {
    Spatial {
        channels: usize,
        height: usize,
        width: usize,
    },
    Flat {
        features: usize,
    },
}

impl LayerSpec {
    pub fn has_params(&self) -> bool {
        matches!(self, LayerSpec::Conv2d { .. } | LayerSpec::Linear { .. })
    }

    /// Single-sample output shape for a given input shape, or an error when
    /// the layer cannot consume that shape.
    pub fn output_shape(&self, input: &FeatureShape) -> Result<FeatureShape> {
        match (self, input) {
            (
                LayerSpec::Conv2d {
                    in_channels,
                    out_channels,
                    kernel,
                    stride,
                    padding,
                },
                FeatureShape::Spatial {
                    channels,
                    height,
                    width,
                },
            ) => {
                if channels != in_channels {
                    return Err(Error::invalid(format!(
                        "{self} expects {in_channels} input channels, got {channels}"
                    )));
                }
                if height + 2 * padding < *kernel || width + 2 * padding < *kernel {
                    return Err(Error::invalid(format!(
                        "{self} kernel larger than padded input {height}x{width}"
                    )));
                }
                Ok(FeatureShape::Spatial {
                    channels: *out_channels,
                    height: kernels::conv_output_side(*height, *kernel, *stride, *padding),
                    width: kernels::conv_output_side(*width, *kernel, *stride, *padding),
                })
            }
            (LayerSpec::Relu, shape) => Ok(*shape),
            (
                LayerSpec::MaxPool2d { size },
                FeatureShape::Spatial {
                    channels,
                    height,
                    width,
                },
            ) => {
                if height < size || width < size {
                    return Err(Error::invalid(format!(
                        "{self} window larger than input {height}x{width}"
                    )));
                }
                Ok(FeatureShape::Spatial {
                    channels: *channels,
                    height: height / size,
                    width: width / size,
                })
            }
            (
                LayerSpec::Flatten,
                FeatureShape::Spatial {
                    channels,
                    height,
                    width,
                },
            ) => Ok(FeatureShape::Flat {
                features: channels * height * width,
            }),
            (
                LayerSpec::Linear {
                    in_features,
                    out_features,
                },
                FeatureShape::Flat { features },
            ) => {
                if features != in_features {
                    return Err(Error::invalid(format!(
                        "{self} expects {in_features} input features, got {features}"
                    )));
                }
                Ok(FeatureShape::Flat {
                    features: *out_features,
                })
            }
            _ => Err(Error::invalid(format!(
                "layer {self} cannot consume input shape {input:?}"
            ))),
        }
    }
}

/// Weight and bias of one parameterized layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub weight: Tensor,
    pub bias: Tensor,
}

struct ForwardCache {
    /// Input activation of each layer, in layer order.
    layer_inputs: Vec<Tensor>,
    /// Winning input indices for each max-pool layer.
    pool_argmax: Vec<Option<Vec<usize>>>,
}

/// Ordered layer sequence plus its parameter store.
pub struct Network {
    layers: Vec<LayerSpec>,
    params: Vec<Option<LayerParams>>,
    input_shape: (usize, usize, usize),
    num_classes: usize,
    cache: Option<ForwardCache>,
    queries: Cell<u64>,
}

impl Clone for Network {
    fn clone(&self) -> Self {
        Network {
            layers: self.layers.clone(),
            params: self.params.clone(),
            input_shape: self.input_shape,
            num_classes: self.num_classes,
            cache: None,
            queries: Cell::new(0),
        }
    }
}

impl fmt::Debug for Network {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Network")
            .field("layers", &self.layers)
            .field("input_shape", &self.input_shape)
            .field("num_classes", &self.num_classes)
            .field("initialized", &self.is_initialized())
            .finish()
    }
}

/// The fixed experiment architecture: two convolution blocks and one fully
/// connected classifier head.
///
/// Accepts the benchmark image geometries only (1 or 3 channels, 28x28 or
/// 32x32). Use [`build_conv_net`] for other input sizes.
pub fn build_paper_model(
    input_shape: (usize, usize, usize),
    num_classes: usize,
) -> Result<Network> {
    let (c, h, w) = input_shape;
    if !(c == 1 || c == 3) || h != w || !(h == 28 || h == 32) {
        return Err(Error::invalid(format!(
            "unsupported input shape ({c},{h},{w}): expected 1 or 3 channels and 28x28 or 32x32"
        )));
    }
    build_conv_net(input_shape, num_classes)
}

/// Same layer stack as [`build_paper_model`] for arbitrary input sizes with
/// height and width of at least 4 (two halving pools must leave >= 1 pixel).
pub fn build_conv_net(input_shape: (usize, usize, usize), num_classes: usize) -> Result<Network> {
    let (c, h, w) = input_shape;
    if num_classes < 2 {
        return Err(Error::invalid(format!(
            "num_classes must be at least 2, got {num_classes}"
        )));
    }
    if c == 0 || h < 4 || w < 4 {
        return Err(Error::invalid(format!(
            "unsupported input shape ({c},{h},{w}): need at least 1 channel and 4x4 pixels"
        )));
    }
    let flat = 16 * (h / 2 / 2) * (w / 2 / 2);
    let layers = vec![
        LayerSpec::Conv2d {
            in_channels: c,
            out_channels: 8,
            kernel: 3,
            stride: 1,
            padding: 1,
        },
        LayerSpec::Relu,
        LayerSpec::MaxPool2d { size: 2 },
        LayerSpec::Conv2d {
            in_channels: 8,
            out_channels: 16,
            kernel: 3,
            stride: 1,
            padding: 1,
        },
        LayerSpec::Relu,
        LayerSpec::MaxPool2d { size: 2 },
        LayerSpec::Flatten,
        LayerSpec::Linear {
            in_features: flat,
            out_features: num_classes,
        },
    ];
    Network::from_layers(layers, input_shape, num_classes)
}

impl Network {
    /// Build a network from an explicit layer list, validating that shapes
    /// compose and the final output width equals `num_classes`.
    /// Parameters are unallocated until [`Network::init_random`].
    pub fn from_layers(
        layers: Vec<LayerSpec>,
        input_shape: (usize, usize, usize),
        num_classes: usize,
    ) -> Result<Network> {
        if layers.is_empty() {
            return Err(Error::invalid("network needs at least one layer"));
        }
        let mut shape = FeatureShape::Spatial {
            channels: input_shape.0,
            height: input_shape.1,
            width: input_shape.2,
        };
        for layer in &layers {
            shape = layer.output_shape(&shape)?;
        }
        match shape {
            FeatureShape::Flat { features } if features == num_classes => {}
            other => {
                return Err(Error::invalid(format!(
                    "network output shape {other:?} does not match {num_classes} classes"
                )))
            }
        }
        let params = vec![None; layers.len()];
        Ok(Network {
            layers,
            params,
            input_shape,
            num_classes,
            cache: None,
            queries: Cell::new(0),
        })
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn input_shape(&self) -> (usize, usize, usize) {
        self.input_shape
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn is_initialized(&self) -> bool {
        self.layers
            .iter()
            .zip(&self.params)
            .all(|(l, p)| !l.has_params() || p.is_some())
    }

    /// Same layer stack, parameters unallocated.
    pub fn clone_architecture(&self) -> Network {
        Network {
            layers: self.layers.clone(),
            params: vec![None; self.layers.len()],
            input_shape: self.input_shape,
            num_classes: self.num_classes,
            cache: None,
            queries: Cell::new(0),
        }
    }

    pub fn same_architecture(&self, other: &Network) -> bool {
        self.layers == other.layers
            && self.input_shape == other.input_shape
            && self.num_classes == other.num_classes
    }

    /// Draw all weights from uniform(-b, b) with `b = sqrt(1/fan_in)` per
    /// layer; biases are set to zero. Deterministic for a given seed.
    pub fn init_random(&mut self, seed: RngSeed) {
        let mut rng = seed.rng();
        for (layer, slot) in self.layers.iter().zip(self.params.iter_mut()) {
            let (w_shape, b_len, fan_in) = match layer {
                LayerSpec::Conv2d {
                    in_channels,
                    out_channels,
                    kernel,
                    ..
                } => (
                    vec![*out_channels, *in_channels, *kernel, *kernel],
                    *out_channels,
                    in_channels * kernel * kernel,
                ),
                LayerSpec::Linear {
                    in_features,
                    out_features,
                } => (vec![*out_features, *in_features], *out_features, *in_features),
                _ => continue,
            };
            let bound = (1.0 / fan_in as f64).sqrt();
            let n: usize = w_shape.iter().product();
            let mut weights = Vec::with_capacity(n);
            for _ in 0..n {
                let u: f64 = rng.gen();
                weights.push(bound * (2.0 * u - 1.0));
            }
            *slot = Some(LayerParams {
                weight: Tensor::new(w_shape, weights).expect("weight shape consistent"),
                bias: Tensor::zeros(vec![b_len]),
            });
        }
        self.cache = None;
        self.queries.set(0);
    }

    /// Deep copy of the model: the clone's parameters are independent of the
    /// source. Gradient buffers, caches, and query counters are not carried
    /// over.
    pub fn clone_params(&self) -> Result<Network> {
        if !self.is_initialized() {
            return Err(Error::Uninitialized);
        }
        let params = self
            .params
            .iter()
            .map(|slot| {
                slot.as_ref().map(|p| {
                    let mut weight = p.weight.clone();
                    let mut bias = p.bias.clone();
                    weight.drop_grad();
                    bias.drop_grad();
                    LayerParams { weight, bias }
                })
            })
            .collect();
        Ok(Network {
            layers: self.layers.clone(),
            params,
            input_shape: self.input_shape,
            num_classes: self.num_classes,
            cache: None,
            queries: Cell::new(0),
        })
    }

    fn check_batch_shape(&self, batch: &Tensor) -> Result<usize> {
        let (b, c, h, w) = batch.dims4("forward input")?;
        let (ec, eh, ew) = self.input_shape;
        if (c, h, w) != (ec, eh, ew) {
            return Err(Error::ShapeMismatch {
                context: "forward input".into(),
                expected: vec![ec, eh, ew],
                actual: vec![c, h, w],
            });
        }
        if b == 0 {
            return Err(Error::invalid("forward on an empty batch"));
        }
        Ok(b)
    }

    fn layer_params(&self, idx: usize) -> Result<&LayerParams> {
        self.params[idx].as_ref().ok_or(Error::Uninitialized)
    }

    /// Run one layer. Returns the output and, for pool layers, the argmax map.
    fn layer_forward(&self, idx: usize, input: &Tensor) -> Result<(Tensor, Option<Vec<usize>>)> {
        let layer = &self.layers[idx];
        let out = match layer {
            LayerSpec::Conv2d {
                stride, padding, ..
            } => {
                let p = self.layer_params(idx)?;
                (
                    kernels::conv2d_forward(input, &p.weight, &p.bias, *stride, *padding)?,
                    None,
                )
            }
            LayerSpec::Relu => (kernels::relu_forward(input), None),
            LayerSpec::MaxPool2d { size } => {
                let (out, argmax) = kernels::maxpool_forward(input, *size)?;
                (out, Some(argmax))
            }
            LayerSpec::Flatten => {
                let (b, c, h, w) = input.dims4("flatten")?;
                (input.reshaped(vec![b, c * h * w])?, None)
            }
            LayerSpec::Linear { .. } => {
                let p = self.layer_params(idx)?;
                (kernels::linear_forward(input, &p.weight, &p.bias)?, None)
            }
        };
        out.0
            .assert_finite(&format!("layer {idx} ({})", layer))
            .map(|_| out)
    }

    /// Inference-mode forward pass: no activation caching.
    pub fn forward_eval(&self, batch: &Tensor) -> Result<Tensor> {
        let b = self.check_batch_shape(batch)?;
        self.queries.set(self.queries.get() + b as u64);
        let mut current = batch.clone();
        for idx in 0..self.layers.len() {
            let (next, _) = self.layer_forward(idx, &current)?;
            current = next;
        }
        Ok(current)
    }

    /// Training-mode forward pass: caches every layer input so a following
    /// [`Network::backward`] can compute parameter gradients.
    pub fn forward_train(&mut self, batch: &Tensor) -> Result<Tensor> {
        let b = self.check_batch_shape(batch)?;
        self.queries.set(self.queries.get() + b as u64);
        let mut layer_inputs = Vec::with_capacity(self.layers.len());
        let mut pool_argmax = Vec::with_capacity(self.layers.len());
        let mut current = batch.clone();
        for idx in 0..self.layers.len() {
            let (next, argmax) = self.layer_forward(idx, &current)?;
            layer_inputs.push(current);
            pool_argmax.push(argmax);
            current = next;
        }
        self.cache = Some(ForwardCache {
            layer_inputs,
            pool_argmax,
        });
        Ok(current)
    }

    /// Propagate a gradient w.r.t. the logits down to every parameter,
    /// accumulating into the parameters' grad buffers. Consumes the cache of
    /// the preceding training-mode forward pass.
    pub fn backward(&mut self, logit_grad: &Tensor) -> Result<()> {
        let cache = self.cache.take().ok_or(Error::NoForwardCache)?;
        let batch = cache.layer_inputs[0].shape()[0];
        let expected = vec![batch, self.num_classes];
        if logit_grad.shape() != expected.as_slice() {
            return Err(Error::ShapeMismatch {
                context: "backward logit gradient".into(),
                expected,
                actual: logit_grad.shape().to_vec(),
            });
        }

        let mut grad = logit_grad.clone();
        for idx in (0..self.layers.len()).rev() {
            let input = &cache.layer_inputs[idx];
            grad = match &self.layers[idx] {
                LayerSpec::Conv2d {
                    stride, padding, ..
                } => {
                    let p = self.params[idx].as_ref().ok_or(Error::Uninitialized)?;
                    let (dx, dw, db) =
                        kernels::conv2d_backward(input, &p.weight, &grad, *stride, *padding)?;
                    let p = self.params[idx].as_mut().unwrap();
                    p.weight.accumulate_grad(dw.values())?;
                    p.bias.accumulate_grad(db.values())?;
                    dx
                }
                LayerSpec::Relu => kernels::relu_backward(input, &grad),
                LayerSpec::MaxPool2d { .. } => {
                    let argmax = cache.pool_argmax[idx]
                        .as_ref()
                        .expect("pool layer cached argmax");
                    kernels::maxpool_backward(&grad, argmax, input.shape())?
                }
                LayerSpec::Flatten => grad.reshaped(input.shape().to_vec())?,
                LayerSpec::Linear { .. } => {
                    let p = self.params[idx].as_ref().ok_or(Error::Uninitialized)?;
                    let (dx, dw, db) = kernels::linear_backward(input, &p.weight, &grad)?;
                    let p = self.params[idx].as_mut().unwrap();
                    p.weight.accumulate_grad(dw.values())?;
                    p.bias.accumulate_grad(db.values())?;
                    dx
                }
            };
        }
        Ok(())
    }

    /// Number of parameter tensors (weight and bias count separately),
    /// in deterministic layer order.
    pub fn num_param_slots(&self) -> usize {
        2 * self.params.iter().filter(|p| p.is_some()).count()
    }

    fn slot_location(&self, slot: usize) -> Option<(usize, bool)> {
        let mut seen = 0;
        for (idx, p) in self.params.iter().enumerate() {
            if p.is_some() {
                if slot == 2 * seen {
                    return Some((idx, true));
                }
                if slot == 2 * seen + 1 {
                    return Some((idx, false));
                }
                seen += 1;
            }
        }
        None
    }

    pub fn param_slot(&self, slot: usize) -> Option<&Tensor> {
        let (idx, is_weight) = self.slot_location(slot)?;
        let p = self.params[idx].as_ref()?;
        Some(if is_weight { &p.weight } else { &p.bias })
    }

    pub fn param_slot_mut(&mut self, slot: usize) -> Option<&mut Tensor> {
        let (idx, is_weight) = self.slot_location(slot)?;
        let p = self.params[idx].as_mut()?;
        Some(if is_weight { &mut p.weight } else { &mut p.bias })
    }

    pub fn param_slot_name(&self, slot: usize) -> String {
        match self.slot_location(slot) {
            Some((idx, true)) => format!("layer{idx}.weight"),
            Some((idx, false)) => format!("layer{idx}.bias"),
            None => format!("slot{slot}"),
        }
    }

    /// Total number of trainable scalar parameters.
    pub fn num_params(&self) -> usize {
        self.params
            .iter()
            .flatten()
            .map(|p| p.weight.numel() + p.bias.numel())
            .sum()
    }

    pub fn zero_grads(&mut self) {
        for p in self.params.iter_mut().flatten() {
            p.weight.zero_grad();
            p.bias.zero_grad();
        }
    }

    /// Flat copy of all parameter values in slot order.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for p in self.params.iter().flatten() {
            out.extend_from_slice(p.weight.values());
            out.extend_from_slice(p.bias.values());
        }
        out
    }

    /// Samples seen by forward passes since the last reset.
    pub fn query_count(&self) -> u64 {
        self.queries.get()
    }

    pub fn reset_query_count(&self) {
        self.queries.set(0);
    }
}
