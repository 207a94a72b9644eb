//! Layers, staged models and their builders.
//!
//! A [`Model`] is a list of [`Stage`]s. Embedding index `l` (1-based) is the
//! output of stage `l`; for MLPs a stage is one dense layer (plus its ReLU, if
//! any) and for convnets a stage is one downsampling group.
//!
//! Weight initialization is Kaiming uniform: `U(-b, b)` with
//! `b = sqrt(6 / fan_in)`, where `fan_in` is the input width of a dense layer
//! or `in_channels * k * k` for a convolution. Biases start at zero.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::rng::{stream, SeededRng};
use crate::tensor::{dot, Precision, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    /// `y = W x + b` on the flattened input. `weights` is `[out, in]`.
    Dense {
        weights: Tensor,
        bias: Option<Tensor>,
    },
    /// `kernels` is `[out_c, in_c, k, k]`; zero padding on all four sides.
    Conv2d {
        kernels: Tensor,
        bias: Option<Tensor>,
        stride: usize,
        padding: usize,
    },
    MaxPool {
        window: usize,
        stride: usize,
    },
    AvgPool {
        window: usize,
        stride: usize,
    },
    Relu,
    Flatten,
    /// `y = x + inner(x)`.
    Residual {
        inner: Vec<Layer>,
    },
}

fn conv_out(size: usize, k: usize, stride: usize, padding: usize) -> Option<usize> {
    let padded = size + 2 * padding;
    if stride == 0 || padded < k {
        return None;
    }
    Some((padded - k) / stride + 1)
}

fn expect_chw(shape: &[usize], what: &str) -> Result<(usize, usize, usize)> {
    match shape {
        [c, h, w] => Ok((*c, *h, *w)),
        _ => Err(Error::Shape(format!("{what} expects [C, H, W], got {shape:?}"))),
    }
}

impl Layer {
    pub fn dense(weights: Tensor, bias: Option<Tensor>) -> Result<Layer> {
        if weights.rank() != 2 {
            return Err(Error::Shape(format!(
                "dense weights must be [out, in], got {:?}",
                weights.shape()
            )));
        }
        if let Some(b) = &bias {
            if b.shape() != [weights.shape()[0]] {
                return Err(Error::Shape(format!(
                    "dense bias {:?} does not match {} outputs",
                    b.shape(),
                    weights.shape()[0]
                )));
            }
        }
        Ok(Layer::Dense { weights, bias })
    }

    pub fn conv2d(kernels: Tensor, bias: Option<Tensor>, stride: usize, padding: usize) -> Result<Layer> {
        if kernels.rank() != 4 || kernels.shape()[2] != kernels.shape()[3] || stride == 0 {
            return Err(Error::Shape(format!(
                "conv kernels must be square [out_c, in_c, k, k] with stride > 0, got {:?} stride {stride}",
                kernels.shape()
            )));
        }
        if let Some(b) = &bias {
            if b.shape() != [kernels.shape()[0]] {
                return Err(Error::Shape(format!(
                    "conv bias {:?} does not match {} channels",
                    b.shape(),
                    kernels.shape()[0]
                )));
            }
        }
        Ok(Layer::Conv2d {
            kernels,
            bias,
            stride,
            padding,
        })
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Layer::Dense { .. } => "dense",
            Layer::Conv2d { .. } => "conv2d",
            Layer::MaxPool { .. } => "maxpool",
            Layer::AvgPool { .. } => "avgpool",
            Layer::Relu => "relu",
            Layer::Flatten => "flatten",
            Layer::Residual { .. } => "residual",
        }
    }

    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let elems: usize = input.iter().product();
        match self {
            Layer::Dense { weights, .. } => {
                if weights.shape()[1] != elems {
                    return Err(Error::Shape(format!(
                        "dense layer expects {} inputs, got {input:?}",
                        weights.shape()[1]
                    )));
                }
                Ok(vec![weights.shape()[0]])
            }
            Layer::Conv2d {
                kernels,
                stride,
                padding,
                ..
            } => {
                let (c, h, w) = expect_chw(input, "conv2d")?;
                let ks = kernels.shape();
                if ks[1] != c {
                    return Err(Error::Shape(format!(
                        "conv expects {} input channels, got {c}",
                        ks[1]
                    )));
                }
                match (conv_out(h, ks[2], *stride, *padding), conv_out(w, ks[3], *stride, *padding)) {
                    (Some(ho), Some(wo)) => Ok(vec![ks[0], ho, wo]),
                    _ => Err(Error::Shape(format!(
                        "conv kernel {} does not fit input {input:?} with padding {padding}",
                        ks[2]
                    ))),
                }
            }
            Layer::MaxPool { window, stride } | Layer::AvgPool { window, stride } => {
                let (c, h, w) = expect_chw(input, self.kind())?;
                match (conv_out(h, *window, *stride, 0), conv_out(w, *window, *stride, 0)) {
                    (Some(ho), Some(wo)) if *window > 0 => Ok(vec![c, ho, wo]),
                    _ => Err(Error::Shape(format!(
                        "pool window {window} does not fit input {input:?}"
                    ))),
                }
            }
            Layer::Relu => Ok(input.to_vec()),
            Layer::Flatten => Ok(vec![elems]),
            Layer::Residual { inner } => {
                let mut shape = input.to_vec();
                for layer in inner {
                    shape = layer.output_shape(&shape)?;
                }
                if shape != input {
                    return Err(Error::Shape(format!(
                        "residual inner output {shape:?} differs from input {input:?}"
                    )));
                }
                Ok(shape)
            }
        }
    }

    /// Output of this layer for `x`, which must already have a valid shape.
    pub(crate) fn forward(&self, x: &Tensor) -> Tensor {
        match self {
            Layer::Dense { weights, bias } => dense_forward(weights, bias.as_ref(), x),
            Layer::Conv2d {
                kernels,
                bias,
                stride,
                padding,
            } => conv_forward(kernels, bias.as_ref(), *stride, *padding, x),
            Layer::MaxPool { window, stride } => max_pool_forward(*window, *stride, x).0,
            Layer::AvgPool { window, stride } => avg_pool_forward(*window, *stride, x),
            Layer::Relu => x.map(|v| v.max(0.0)),
            Layer::Flatten => x.flatten(),
            Layer::Residual { inner } => {
                let mut h = x.clone();
                for layer in inner {
                    h = layer.forward(&h);
                }
                h.add(x).expect("residual shapes checked at construction")
            }
        }
    }

    pub(crate) fn visit_params<'a>(&'a self, out: &mut Vec<&'a Tensor>) {
        match self {
            Layer::Dense { weights, bias } => {
                out.push(weights);
                out.extend(bias.iter());
            }
            Layer::Conv2d { kernels, bias, .. } => {
                out.push(kernels);
                out.extend(bias.iter());
            }
            Layer::Residual { inner } => inner.iter().for_each(|l| l.visit_params(out)),
            _ => {}
        }
    }

    pub(crate) fn visit_params_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Tensor>) {
        match self {
            Layer::Dense { weights, bias } => {
                out.push(weights);
                out.extend(bias.iter_mut());
            }
            Layer::Conv2d { kernels, bias, .. } => {
                out.push(kernels);
                out.extend(bias.iter_mut());
            }
            Layer::Residual { inner } => inner.iter_mut().for_each(|l| l.visit_params_mut(out)),
            _ => {}
        }
    }

    fn contains_relu(&self) -> bool {
        match self {
            Layer::Relu => true,
            Layer::Residual { inner } => inner.iter().any(Layer::contains_relu),
            _ => false,
        }
    }
}

pub(crate) fn dense_forward(weights: &Tensor, bias: Option<&Tensor>, x: &Tensor) -> Tensor {
    let mut y = weights.matvec(x).expect("dense shapes checked at construction");
    if let Some(b) = bias {
        y.axpy(1.0, b).expect("bias shape checked at construction");
    }
    y
}

pub(crate) fn conv_forward(
    kernels: &Tensor,
    bias: Option<&Tensor>,
    stride: usize,
    padding: usize,
    x: &Tensor,
) -> Tensor {
    let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let ks = kernels.shape();
    let (oc, k) = (ks[0], ks[2]);
    let ho = conv_out(h, k, stride, padding).unwrap();
    let wo = conv_out(w, k, stride, padding).unwrap();
    let p = kernels.precision().join(x.precision());
    let kd = kernels.data();
    let xd = x.data();
    let mut out = vec![0.0; oc * ho * wo];
    let mut patch = vec![0.0; c * k * k];
    for oy in 0..ho {
        for ox in 0..wo {
            // Gather the zero-padded receptive field once, then dot with each filter.
            for ci in 0..c {
                for ky in 0..k {
                    let iy = (oy * stride + ky) as isize - padding as isize;
                    for kx in 0..k {
                        let ix = (ox * stride + kx) as isize - padding as isize;
                        let v = if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < w {
                            xd[ci * h * w + iy as usize * w + ix as usize]
                        } else {
                            0.0
                        };
                        patch[(ci * k + ky) * k + kx] = v;
                    }
                }
            }
            for o in 0..oc {
                let filt = &kd[o * c * k * k..(o + 1) * c * k * k];
                let mut v = dot(p, filt, &patch);
                if let Some(b) = bias {
                    v += b.data()[o];
                }
                out[(o * ho + oy) * wo + ox] = p.round(v);
            }
        }
    }
    Tensor::from_raw(vec![oc, ho, wo], p, out)
}

/// Max pooling; also returns the flat input index that won each window.
/// Ties go to the lowest flat index.
pub(crate) fn max_pool_forward(window: usize, stride: usize, x: &Tensor) -> (Tensor, Vec<usize>) {
    let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let ho = conv_out(h, window, stride, 0).unwrap();
    let wo = conv_out(w, window, stride, 0).unwrap();
    let xd = x.data();
    let mut out = Vec::with_capacity(c * ho * wo);
    let mut arg = Vec::with_capacity(c * ho * wo);
    for ci in 0..c {
        for oy in 0..ho {
            for ox in 0..wo {
                let mut best = usize::MAX;
                for ky in 0..window {
                    for kx in 0..window {
                        let idx = ci * h * w + (oy * stride + ky) * w + ox * stride + kx;
                        if best == usize::MAX || xd[idx] > xd[best] || (xd[idx] == xd[best] && idx < best) {
                            best = idx;
                        }
                    }
                }
                out.push(xd[best]);
                arg.push(best);
            }
        }
    }
    (Tensor::from_raw(vec![c, ho, wo], x.precision(), out), arg)
}

pub(crate) fn avg_pool_forward(window: usize, stride: usize, x: &Tensor) -> Tensor {
    let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let ho = conv_out(h, window, stride, 0).unwrap();
    let wo = conv_out(w, window, stride, 0).unwrap();
    let p = x.precision();
    let xd = x.data();
    let norm = 1.0 / (window * window) as f64;
    let mut out = Vec::with_capacity(c * ho * wo);
    for ci in 0..c {
        for oy in 0..ho {
            for ox in 0..wo {
                let mut acc = 0.0;
                for ky in 0..window {
                    for kx in 0..window {
                        acc += xd[ci * h * w + (oy * stride + ky) * w + ox * stride + kx];
                    }
                }
                out.push(p.round(acc * norm));
            }
        }
    }
    Tensor::from_raw(vec![c, ho, wo], p, out)
}

/// An embedding boundary: the layers between two addressable outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Stage {
    pub layers: Vec<Layer>,
}

impl Stage {
    pub fn new(layers: Vec<Layer>) -> Self {
        Self { layers }
    }

    pub(crate) fn forward(&self, x: &Tensor) -> Tensor {
        self.layers.iter().fold(x.clone(), |h, l| l.forward(&h))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    input_shape: Vec<usize>,
    precision: Precision,
    stages: Vec<Stage>,
    stage_shapes: Vec<Vec<usize>>,
    non_invertible: bool,
    seed: u64,
}

impl Model {
    /// Validates that successive shapes compose and records per-stage shapes.
    pub fn new(input_shape: &[usize], stages: Vec<Stage>, precision: Precision, seed: u64) -> Result<Model> {
        if input_shape.is_empty() || input_shape.iter().any(|&d| d == 0) {
            return Err(Error::Shape(format!("bad input shape {input_shape:?}")));
        }
        if stages.is_empty() || stages.iter().any(|s| s.layers.is_empty()) {
            return Err(Error::InvalidArgument("model needs non-empty stages".into()));
        }
        let mut shape = input_shape.to_vec();
        let mut stage_shapes = Vec::with_capacity(stages.len());
        for stage in &stages {
            for layer in &stage.layers {
                shape = layer.output_shape(&shape)?;
            }
            stage_shapes.push(shape.clone());
        }
        let mut model = Model {
            input_shape: input_shape.to_vec(),
            precision,
            stages,
            stage_shapes,
            non_invertible: false,
            seed,
        };
        let shrinks = model.shrinking_stages().next().is_some();
        model.non_invertible = shrinks;
        model.set_precision(precision);
        Ok(model)
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn input_len(&self) -> usize {
        self.input_shape.iter().product()
    }

    pub fn precision(&self) -> Precision {
        self.precision
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn depth(&self) -> usize {
        self.stages.len()
    }

    pub fn stages(&self) -> &[Stage] {
        &self.stages
    }

    pub fn stages_mut(&mut self) -> &mut [Stage] {
        &mut self.stages
    }

    /// True when some stage has fewer elements than the stage before it
    /// (or than the input, for stage 1).
    pub fn is_non_invertible(&self) -> bool {
        self.non_invertible
    }

    /// 1-based indices of stages with fewer elements than their predecessor.
    pub fn shrinking_stages(&self) -> impl Iterator<Item = usize> + '_ {
        (1..=self.depth()).filter(move |&l| {
            let prev = if l == 1 {
                self.input_len()
            } else {
                self.stage_shapes[l - 2].iter().product()
            };
            self.stage_shapes[l - 1].iter().product::<usize>() < prev
        })
    }

    pub fn has_relu(&self) -> bool {
        self.stages.iter().flat_map(|s| &s.layers).any(Layer::contains_relu)
    }

    pub fn set_precision(&mut self, precision: Precision) {
        self.precision = precision;
        for p in self.params_mut() {
            *p = p.cast(precision);
        }
    }

    pub fn with_precision(&self, precision: Precision) -> Model {
        let mut m = self.clone();
        m.set_precision(precision);
        m
    }

    pub fn check_layer(&self, l: usize) -> Result<()> {
        if l == 0 || l > self.depth() {
            return Err(Error::LayerIndex {
                index: l,
                depth: self.depth(),
            });
        }
        Ok(())
    }

    pub fn embedding_shape(&self, l: usize) -> Result<&[usize]> {
        self.check_layer(l)?;
        Ok(&self.stage_shapes[l - 1])
    }

    /// Number of elements in the embedding at stage `l`.
    pub fn count_layer_elements(&self, l: usize) -> Result<usize> {
        Ok(self.embedding_shape(l)?.iter().product())
    }

    pub fn check_input(&self, a: &Tensor) -> Result<()> {
        if a.shape() != self.input_shape.as_slice() {
            return Err(Error::Shape(format!(
                "model input is {:?}, got {:?}",
                self.input_shape,
                a.shape()
            )));
        }
        Ok(())
    }

    /// The embedding `O_l(a)`: the output of stage `l`. Stages after `l` are
    /// not evaluated.
    pub fn forward_to_layer(&self, a: &Tensor, l: usize) -> Result<Tensor> {
        self.check_layer(l)?;
        self.check_input(a)?;
        let x = a.cast(self.precision);
        Ok(self.stages[..l].iter().fold(x, |h, s| s.forward(&h)))
    }

    pub fn forward(&self, a: &Tensor) -> Result<Tensor> {
        self.forward_to_layer(a, self.depth())
    }

    /// Runs stages `from+1..=to` on an embedding taken at stage `from`.
    pub fn forward_from(&self, embedding: &Tensor, from: usize, to: usize) -> Result<Tensor> {
        self.check_layer(to)?;
        if from >= to {
            return Err(Error::InvalidArgument(format!("need from < to, got {from} >= {to}")));
        }
        let expected = if from == 0 {
            &self.input_shape
        } else {
            &self.stage_shapes[from - 1]
        };
        if embedding.shape() != expected.as_slice() {
            return Err(Error::Shape(format!(
                "stage {from} output is {expected:?}, got {:?}",
                embedding.shape()
            )));
        }
        let x = embedding.cast(self.precision);
        Ok(self.stages[from..to].iter().fold(x, |h, s| s.forward(&h)))
    }

    /// All parameter tensors in a fixed order: stage by stage, layer by layer,
    /// residual inner layers in place, weights before bias.
    pub fn params(&self) -> Vec<&Tensor> {
        let mut out = Vec::new();
        for layer in self.stages.iter().flat_map(|s| &s.layers) {
            layer.visit_params(&mut out);
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for layer in self.stages.iter_mut().flat_map(|s| &mut s.layers) {
            layer.visit_params_mut(&mut out);
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|t| t.len()).sum()
    }

    /// Parameters as little-endian `f64` values, in [`Model::params`] order.
    pub fn to_param_blob(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.param_count() * 8);
        for t in self.params() {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn load_param_blob(&mut self, blob: &[u8]) -> Result<()> {
        let expected = self.param_count() * 8;
        if blob.len() != expected {
            return Err(Error::InvalidArgument(format!(
                "parameter blob has {} bytes, model needs {expected}",
                blob.len()
            )));
        }
        let precision = self.precision;
        let mut values = blob
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")));
        for t in self.params_mut() {
            for v in t.data_mut() {
                let x = values.next().expect("length checked");
                if !x.is_finite() {
                    return Err(Error::InvalidArgument("non-finite parameter in blob".into()));
                }
                *v = precision.round(x);
            }
        }
        Ok(())
    }
}

fn kaiming_uniform(rng: &mut SeededRng, shape: &[usize], fan_in: usize) -> Tensor {
    let bound = (6.0 / fan_in as f64).sqrt();
    let len = shape.iter().product();
    let data = (0..len).map(|_| rng.uniform_range(-bound, bound)).collect();
    Tensor::from_vec(shape, data).expect("valid shape")
}

/// Parameter-free description of a layer, used by builders and manifests.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerSpec {
    Dense { out: usize, bias: bool },
    Conv2d { out_channels: usize, kernel: usize, stride: usize, padding: usize, bias: bool },
    MaxPool { window: usize, stride: usize },
    AvgPool { window: usize, stride: usize },
    Relu,
    Flatten,
    Residual(Vec<LayerSpec>),
}

impl LayerSpec {
    fn instantiate(&self, input: &[usize], rng: &mut SeededRng) -> Result<Layer> {
        Ok(match self {
            LayerSpec::Dense { out, bias } => {
                let fan_in: usize = input.iter().product();
                let w = kaiming_uniform(rng, &[*out, fan_in], fan_in);
                Layer::dense(w, bias.then(|| Tensor::zeros(&[*out])))?
            }
            LayerSpec::Conv2d {
                out_channels,
                kernel,
                stride,
                padding,
                bias,
            } => {
                let (c, _, _) = expect_chw(input, "conv2d")?;
                let fan_in = c * kernel * kernel;
                let k = kaiming_uniform(rng, &[*out_channels, c, *kernel, *kernel], fan_in);
                Layer::conv2d(k, bias.then(|| Tensor::zeros(&[*out_channels])), *stride, *padding)?
            }
            LayerSpec::MaxPool { window, stride } => Layer::MaxPool {
                window: *window,
                stride: *stride,
            },
            LayerSpec::AvgPool { window, stride } => Layer::AvgPool {
                window: *window,
                stride: *stride,
            },
            LayerSpec::Relu => Layer::Relu,
            LayerSpec::Flatten => Layer::Flatten,
            LayerSpec::Residual(inner) => {
                let mut shape = input.to_vec();
                let mut layers = Vec::with_capacity(inner.len());
                for spec in inner {
                    let layer = spec.instantiate(&shape, rng)?;
                    shape = layer.output_shape(&shape)?;
                    layers.push(layer);
                }
                Layer::Residual { inner: layers }
            }
        })
    }

    fn of(layer: &Layer) -> LayerSpec {
        match layer {
            Layer::Dense { weights, bias } => LayerSpec::Dense {
                out: weights.shape()[0],
                bias: bias.is_some(),
            },
            Layer::Conv2d {
                kernels,
                bias,
                stride,
                padding,
            } => LayerSpec::Conv2d {
                out_channels: kernels.shape()[0],
                kernel: kernels.shape()[2],
                stride: *stride,
                padding: *padding,
                bias: bias.is_some(),
            },
            Layer::MaxPool { window, stride } => LayerSpec::MaxPool {
                window: *window,
                stride: *stride,
            },
            Layer::AvgPool { window, stride } => LayerSpec::AvgPool {
                window: *window,
                stride: *stride,
            },
            Layer::Relu => LayerSpec::Relu,
            Layer::Flatten => LayerSpec::Flatten,
            Layer::Residual { inner } => LayerSpec::Residual(inner.iter().map(LayerSpec::of).collect()),
        }
    }
}

/// Builds a model from a parameter-free architecture, drawing Kaiming uniform
/// weights from the `PARAMS` sub-stream of `seed` in parameter order.
pub fn build_from_specs(
    input_shape: &[usize],
    stages: &[Vec<LayerSpec>],
    precision: Precision,
    seed: u64,
) -> Result<Model> {
    let mut rng = SeededRng::new(seed).substream(stream::PARAMS);
    let mut shape = input_shape.to_vec();
    let mut built = Vec::with_capacity(stages.len());
    for specs in stages {
        let mut layers = Vec::with_capacity(specs.len());
        for spec in specs {
            let layer = spec.instantiate(&shape, &mut rng)?;
            shape = layer.output_shape(&shape)?;
            layers.push(layer);
        }
        built.push(Stage::new(layers));
    }
    Model::new(input_shape, built, precision, seed)
}

/// Dense stack with one stage per hidden width.
pub fn mlp_specs(hidden_widths: &[usize], use_bias: bool, use_relu: bool) -> Vec<Vec<LayerSpec>> {
    hidden_widths
        .iter()
        .map(|&w| {
            let mut stage = vec![LayerSpec::Dense { out: w, bias: use_bias }];
            if use_relu {
                stage.push(LayerSpec::Relu);
            }
            stage
        })
        .collect()
}

/// Dense MLP on an input of `input_elems` values, one stage per hidden width.
pub fn build_mlp(
    input_elems: usize,
    hidden_widths: &[usize],
    use_bias: bool,
    use_relu: bool,
    precision: Precision,
    seed: u64,
) -> Result<Model> {
    build_mlp_on(&[input_elems], hidden_widths, use_bias, use_relu, precision, seed)
}

/// Like [`build_mlp`] for a structured input shape (flattened by the first layer).
pub fn build_mlp_on(
    input_shape: &[usize],
    hidden_widths: &[usize],
    use_bias: bool,
    use_relu: bool,
    precision: Precision,
    seed: u64,
) -> Result<Model> {
    if hidden_widths.is_empty() || hidden_widths.contains(&0) {
        return Err(Error::InvalidArgument(format!(
            "hidden widths must be positive and non-empty, got {hidden_widths:?}"
        )));
    }
    build_from_specs(
        input_shape,
        &mlp_specs(hidden_widths, use_bias, use_relu),
        precision,
        seed,
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvNetSpec {
    pub channels: Vec<usize>,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub residual: bool,
    /// Appends a `[flatten, dense(classes)]` stage.
    pub head_classes: Option<usize>,
}

impl ConvNetSpec {
    /// 3x3 stride-2 convolutions with padding 1.
    pub fn small(channels: &[usize], residual: bool) -> Self {
        Self {
            channels: channels.to_vec(),
            kernel: 3,
            stride: 2,
            padding: 1,
            residual,
            head_classes: None,
        }
    }

    pub fn stage_specs(&self) -> Vec<Vec<LayerSpec>> {
        let mut stages: Vec<Vec<LayerSpec>> = self
            .channels
            .iter()
            .map(|&c| {
                let mut stage = vec![
                    LayerSpec::Conv2d {
                        out_channels: c,
                        kernel: self.kernel,
                        stride: self.stride,
                        padding: self.padding,
                        bias: true,
                    },
                    LayerSpec::Relu,
                ];
                if self.residual {
                    let same = LayerSpec::Conv2d {
                        out_channels: c,
                        kernel: 3,
                        stride: 1,
                        padding: 1,
                        bias: true,
                    };
                    stage.push(LayerSpec::Residual(vec![same.clone(), LayerSpec::Relu, same]));
                }
                stage
            })
            .collect();
        if let Some(classes) = self.head_classes {
            stages.push(vec![LayerSpec::Flatten, LayerSpec::Dense { out: classes, bias: true }]);
        }
        stages
    }
}

/// Stack of `[conv(stride 2) -> relu -> optional residual]` groups, one stage
/// per group.
pub fn build_small_convnet(
    input_shape: &[usize],
    blocks: usize,
    channels: &[usize],
    with_residual: bool,
    precision: Precision,
    seed: u64,
) -> Result<Model> {
    if blocks == 0 || channels.len() != blocks {
        return Err(Error::InvalidArgument(format!(
            "need blocks >= 1 and one channel count per block, got {blocks} blocks and {channels:?}"
        )));
    }
    build_convnet(input_shape, &ConvNetSpec::small(channels, with_residual), precision, seed)
}

pub fn build_convnet(input_shape: &[usize], spec: &ConvNetSpec, precision: Precision, seed: u64) -> Result<Model> {
    if spec.channels.is_empty() {
        return Err(Error::InvalidArgument("convnet needs at least one block".into()));
    }
    build_from_specs(input_shape, &spec.stage_specs(), precision, seed)
}

// Manifest format, one directive per line, `#` starts a comment:
//
//   reprobe-model 1
//   input <d1> <d2> ...
//   precision <32|64>
//   seed <u64>
//   stage
//   dense <out> <bias|nobias>
//   conv2d <out_channels> <kernel> <stride> <padding> <bias|nobias>
//   maxpool <window> <stride>
//   avgpool <window> <stride>
//   relu
//   flatten
//   residual
//   end
//
// Layers after `residual` up to the matching `end` form the residual body.
// Parameters are re-drawn from `seed`; trained weights travel in the
// separate parameter blob.

impl Model {
    pub fn to_manifest(&self) -> String {
        fn write_layer(out: &mut String, spec: &LayerSpec, indent: usize) {
            let pad = "  ".repeat(indent);
            let flag = |b: bool| if b { "bias" } else { "nobias" };
            match spec {
                LayerSpec::Dense { out: o, bias } => writeln!(out, "{pad}dense {o} {}", flag(*bias)),
                LayerSpec::Conv2d {
                    out_channels,
                    kernel,
                    stride,
                    padding,
                    bias,
                } => writeln!(
                    out,
                    "{pad}conv2d {out_channels} {kernel} {stride} {padding} {}",
                    flag(*bias)
                ),
                LayerSpec::MaxPool { window, stride } => writeln!(out, "{pad}maxpool {window} {stride}"),
                LayerSpec::AvgPool { window, stride } => writeln!(out, "{pad}avgpool {window} {stride}"),
                LayerSpec::Relu => writeln!(out, "{pad}relu"),
                LayerSpec::Flatten => writeln!(out, "{pad}flatten"),
                LayerSpec::Residual(inner) => {
                    writeln!(out, "{pad}residual").unwrap();
                    for s in inner {
                        write_layer(out, s, indent + 1);
                    }
                    writeln!(out, "{pad}end")
                }
            }
            .unwrap();
        }

        let mut out = String::from("reprobe-model 1\n");
        let dims: Vec<String> = self.input_shape.iter().map(|d| d.to_string()).collect();
        writeln!(out, "input {}", dims.join(" ")).unwrap();
        writeln!(out, "precision {}", self.precision.bits()).unwrap();
        writeln!(out, "seed {}", self.seed).unwrap();
        for stage in &self.stages {
            out.push_str("stage\n");
            for layer in &stage.layers {
                write_layer(&mut out, &LayerSpec::of(layer), 1);
            }
        }
        out
    }

    pub fn from_manifest(text: &str) -> Result<Model> {
        let err = |line: usize, msg: &str| Error::Manifest {
            line,
            msg: msg.to_string(),
        };
        let mut input: Option<Vec<usize>> = None;
        let mut precision = Precision::F64;
        let mut seed = 0u64;
        let mut stages: Vec<Vec<LayerSpec>> = Vec::new();
        // Open residual bodies, innermost last.
        let mut open: Vec<Vec<LayerSpec>> = Vec::new();
        let mut saw_header = false;

        for (i, raw) in text.lines().enumerate() {
            let lineno = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut words = line.split_whitespace();
            let head = words.next().unwrap();
            let args: Vec<&str> = words.collect();
            let nums = |n: usize| -> Result<Vec<usize>> {
                if args.len() < n {
                    return Err(err(lineno, &format!("`{head}` needs {n} numeric arguments")));
                }
                args[..n]
                    .iter()
                    .map(|a| a.parse::<usize>().map_err(|_| err(lineno, &format!("bad number `{a}`"))))
                    .collect()
            };
            let bias_flag = |idx: usize| -> Result<bool> {
                match args.get(idx).copied() {
                    Some("bias") => Ok(true),
                    Some("nobias") => Ok(false),
                    _ => Err(err(lineno, "expected `bias` or `nobias`")),
                }
            };
            if !saw_header {
                if head != "reprobe-model" || args != ["1"] {
                    return Err(err(lineno, "expected header `reprobe-model 1`"));
                }
                saw_header = true;
                continue;
            }
            let spec = match head {
                "input" => {
                    let dims = nums(args.len())?;
                    if dims.is_empty() {
                        return Err(err(lineno, "input needs dimensions"));
                    }
                    input = Some(dims);
                    continue;
                }
                "precision" => {
                    let bits = nums(1)?[0] as u32;
                    precision = Precision::from_bits(bits).map_err(|e| err(lineno, &e.to_string()))?;
                    continue;
                }
                "seed" => {
                    seed = args
                        .first()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| err(lineno, "seed needs a u64"))?;
                    continue;
                }
                "stage" => {
                    if !open.is_empty() {
                        return Err(err(lineno, "`stage` inside an open residual"));
                    }
                    stages.push(Vec::new());
                    continue;
                }
                "residual" => {
                    open.push(Vec::new());
                    continue;
                }
                "end" => {
                    let body = open.pop().ok_or_else(|| err(lineno, "`end` without `residual`"))?;
                    LayerSpec::Residual(body)
                }
                "dense" => LayerSpec::Dense {
                    out: nums(1)?[0],
                    bias: bias_flag(1)?,
                },
                "conv2d" => {
                    let v = nums(4)?;
                    LayerSpec::Conv2d {
                        out_channels: v[0],
                        kernel: v[1],
                        stride: v[2],
                        padding: v[3],
                        bias: bias_flag(4)?,
                    }
                }
                "maxpool" => {
                    let v = nums(2)?;
                    LayerSpec::MaxPool { window: v[0], stride: v[1] }
                }
                "avgpool" => {
                    let v = nums(2)?;
                    LayerSpec::AvgPool { window: v[0], stride: v[1] }
                }
                "relu" => LayerSpec::Relu,
                "flatten" => LayerSpec::Flatten,
                other => return Err(err(lineno, &format!("unknown directive `{other}`"))),
            };
            if let Some(body) = open.last_mut() {
                body.push(spec);
            } else {
                stages
                    .last_mut()
                    .ok_or_else(|| err(lineno, "layer before the first `stage`"))?
                    .push(spec);
            }
        }
        if !open.is_empty() {
            return Err(err(text.lines().count(), "unterminated residual"));
        }
        let input = input.ok_or_else(|| err(0, "missing `input`"))?;
        build_from_specs(&input, &stages, precision, seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::gaussian_draw;
    use proptest::prelude::*;

    fn identity_dense(n: usize) -> Model {
        let layer = Layer::dense(Tensor::eye(n), Some(Tensor::zeros(&[n]))).unwrap();
        Model::new(&[n], vec![Stage::new(vec![layer])], Precision::F64, 0).unwrap()
    }

    #[test]
    fn overcomplete_mlp_shape() {
        let m = build_mlp(2523, &[2523, 2523, 2523], true, false, Precision::F32, 1).unwrap();
        assert_eq!(m.depth(), 3);
        for l in 1..=3 {
            assert_eq!(m.count_layer_elements(l).unwrap(), 2523);
        }
        assert!(!m.is_non_invertible());
        assert!(!m.has_relu());
    }

    #[test]
    fn undercomplete_mlp_is_flagged() {
        let m = build_mlp(192, &[96], true, false, Precision::F64, 1).unwrap();
        assert_eq!(m.count_layer_elements(1).unwrap(), 96);
        assert!(m.is_non_invertible());
        assert_eq!(m.shrinking_stages().collect::<Vec<_>>(), vec![1]);
    }

    #[test]
    fn identity_model_computes_identity() {
        let m = identity_dense(4);
        let a = Tensor::from_vec(&[4], vec![0.1, -2.0, 3.5, 0.0]).unwrap();
        assert_eq!(m.forward_to_layer(&a, 1).unwrap(), a);
        assert_eq!(m.count_layer_elements(1).unwrap(), 4);
    }

    #[test]
    fn dense_flattens_structured_input() {
        let layer = Layer::dense(Tensor::eye(12), None).unwrap();
        let m = Model::new(&[3, 2, 2], vec![Stage::new(vec![layer])], Precision::F64, 0).unwrap();
        let a = gaussian_draw(&mut SeededRng::new(2), &[3, 2, 2], 0.0, 1.0);
        assert_eq!(m.forward_to_layer(&a, 1).unwrap(), a.flatten());
    }

    #[test]
    fn two_layer_hand_case() {
        // W1 = [[1,2,0],[0,1,-1],[1,0,1]], b1 = [0,1,0]
        // W2 = [[1,1,1],[2,0,-1],[0,0,3]], b2 = [1,0,-1]
        // x = [1,2,3]: W1 x + b1 = [5,0,4]; W2 h + b2 = [10,6,11]
        let w1 = Tensor::from_vec(&[3, 3], vec![1., 2., 0., 0., 1., -1., 1., 0., 1.]).unwrap();
        let w2 = Tensor::from_vec(&[3, 3], vec![1., 1., 1., 2., 0., -1., 0., 0., 3.]).unwrap();
        let b1 = Tensor::from_vec(&[3], vec![0., 1., 0.]).unwrap();
        let b2 = Tensor::from_vec(&[3], vec![1., 0., -1.]).unwrap();
        let m = Model::new(
            &[3],
            vec![
                Stage::new(vec![Layer::dense(w1, Some(b1)).unwrap()]),
                Stage::new(vec![Layer::dense(w2, Some(b2)).unwrap()]),
            ],
            Precision::F64,
            0,
        )
        .unwrap();
        let x = Tensor::from_vec(&[3], vec![1., 2., 3.]).unwrap();
        assert_eq!(m.forward_to_layer(&x, 1).unwrap().data(), &[5., 0., 4.]);
        assert_eq!(m.forward_to_layer(&x, 2).unwrap().data(), &[10., 6., 11.]);
        assert_eq!(m.forward(&x).unwrap(), m.forward_to_layer(&x, 2).unwrap());
    }

    #[test]
    fn bad_index_and_shape_rejected() {
        let m = identity_dense(4);
        let a = Tensor::zeros(&[4]);
        assert!(matches!(m.forward_to_layer(&a, 0), Err(Error::LayerIndex { .. })));
        assert!(matches!(m.forward_to_layer(&a, 2), Err(Error::LayerIndex { .. })));
        assert!(m.forward_to_layer(&Tensor::zeros(&[5]), 1).is_err());
        assert!(m.count_layer_elements(3).is_err());
    }

    #[test]
    fn convnet_group_shapes() {
        let m = build_small_convnet(&[3, 32, 32], 3, &[8, 16, 32], false, Precision::F64, 5).unwrap();
        assert_eq!(m.embedding_shape(1).unwrap(), &[8, 16, 16]);
        assert_eq!(m.embedding_shape(2).unwrap(), &[16, 8, 8]);
        assert_eq!(m.embedding_shape(3).unwrap(), &[32, 4, 4]);
        assert_eq!(m.count_layer_elements(2).unwrap(), 1024);
        let a = gaussian_draw(&mut SeededRng::new(1), &[3, 32, 32], 0.5, 0.2);
        for l in 1..=3 {
            assert_eq!(m.forward_to_layer(&a, l).unwrap().shape(), m.embedding_shape(l).unwrap());
        }
        assert!(build_small_convnet(&[3, 32, 32], 2, &[8], false, Precision::F64, 5).is_err());
    }

    #[test]
    fn resnet_scale_element_count() {
        let layer = Layer::Relu;
        let m = Model::new(&[3, 299, 299], vec![Stage::new(vec![layer])], Precision::F32, 0).unwrap();
        assert_eq!(m.count_layer_elements(1).unwrap(), 268_203);
    }

    #[test]
    fn identity_kernel_conv_is_identity() {
        let spec = ConvNetSpec {
            channels: vec![3],
            kernel: 3,
            stride: 1,
            padding: 1,
            residual: false,
            head_classes: None,
        };
        let mut m = build_convnet(&[3, 6, 6], &spec, Precision::F64, 3).unwrap();
        {
            let mut params = m.params_mut();
            let k = &mut params[0];
            let kd = k.data_mut();
            kd.iter_mut().for_each(|v| *v = 0.0);
            for c in 0..3 {
                kd[((c * 3 + c) * 3 + 1) * 3 + 1] = 1.0;
            }
        }
        let a = gaussian_draw(&mut SeededRng::new(4), &[3, 6, 6], 0.5, 0.2);
        // ReLU follows the conv, so compare against the rectified input.
        assert_eq!(m.forward(&a).unwrap(), a.map(|v| v.max(0.0)));
    }

    #[test]
    fn zero_residual_body_is_identity() {
        let mut m = build_small_convnet(&[3, 8, 8], 1, &[4], true, Precision::F64, 3).unwrap();
        let Layer::Residual { inner } = &mut m.stages_mut()[0].layers[2] else {
            panic!("expected residual");
        };
        for layer in inner.iter_mut() {
            let mut ps = Vec::new();
            layer.visit_params_mut(&mut ps);
            for p in ps {
                p.data_mut().iter_mut().for_each(|v| *v = 0.0);
            }
        }
        let a = gaussian_draw(&mut SeededRng::new(8), &[3, 8, 8], 0.5, 0.3);
        let block_in = m.stages()[0].layers[..2].iter().fold(a.clone(), |h, l| l.forward(&h));
        assert_eq!(m.forward(&a).unwrap(), block_in);
    }

    #[test]
    fn residual_shape_mismatch_rejected() {
        let k = Tensor::zeros(&[5, 3, 3, 3]);
        let bad = Layer::Residual {
            inner: vec![Layer::conv2d(k, None, 1, 1).unwrap()],
        };
        assert!(Model::new(&[3, 4, 4], vec![Stage::new(vec![bad])], Precision::F64, 0).is_err());
        let dense = Layer::dense(Tensor::zeros(&[2, 3]), Some(Tensor::zeros(&[3])));
        assert!(dense.is_err());
    }

    #[test]
    fn kaiming_bound_and_reproducible() {
        let a = build_mlp(50, &[40], true, false, Precision::F64, 11).unwrap();
        let b = build_mlp(50, &[40], true, false, Precision::F64, 11).unwrap();
        assert_eq!(a.to_param_blob(), b.to_param_blob());
        let bound = (6.0f64 / 50.0).sqrt();
        let w = a.params()[0];
        assert!(w.max_abs() <= bound);
        assert!(w.max_abs() > 0.9 * bound);
        assert!(a.params()[1].data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn manifest_round_trip() {
        let mut spec = ConvNetSpec::small(&[4, 8], true);
        spec.head_classes = Some(5);
        let m = build_convnet(&[3, 16, 16], &spec, Precision::F32, 77).unwrap();
        let text = m.to_manifest();
        let back = Model::from_manifest(&text).unwrap();
        assert_eq!(back, m);
        let mlp = build_mlp(12, &[7, 3], false, true, Precision::F64, 9).unwrap();
        assert_eq!(Model::from_manifest(&mlp.to_manifest()).unwrap(), mlp);
    }

    #[test]
    fn manifest_errors_name_the_line() {
        let bad = "reprobe-model 1\ninput 4\nstage\ndense x bias\n";
        match Model::from_manifest(bad) {
            Err(Error::Manifest { line, .. }) => assert_eq!(line, 4),
            other => panic!("unexpected {other:?}"),
        }
        assert!(Model::from_manifest("nonsense").is_err());
        assert!(Model::from_manifest("reprobe-model 1\ninput 4\nstage\nresidual\nrelu\n").is_err());
    }

    #[test]
    fn blob_round_trip() {
        let m = build_mlp(6, &[5, 4], true, true, Precision::F64, 2).unwrap();
        let mut z = build_mlp(6, &[5, 4], true, true, Precision::F64, 3).unwrap();
        assert_ne!(z, m);
        z.load_param_blob(&m.to_param_blob()).unwrap();
        assert_eq!(z.params(), m.params());
        assert!(z.load_param_blob(&[0u8; 7]).is_err());
    }

    #[test]
    fn max_pool_ties_lowest_index() {
        let x = Tensor::from_vec(&[1, 2, 2], vec![1.0, 1.0, 1.0, 0.0]).unwrap();
        let (y, arg) = max_pool_forward(2, 2, &x);
        assert_eq!(y.data(), &[1.0]);
        assert_eq!(arg, vec![0]);
        let avg = avg_pool_forward(2, 2, &x);
        assert_eq!(avg.data(), &[0.75]);
    }

    proptest! {
        #[test]
        fn splicing_reproduces_full_forward(seed in 0u64..500, split in 1usize..4) {
            let m = build_mlp(10, &[9, 12, 7, 5], true, true, Precision::F64, seed).unwrap();
            let a = gaussian_draw(&mut SeededRng::new(seed + 1), &[10], 0.0, 1.0);
            let mid = m.forward_to_layer(&a, split).unwrap();
            let tail = m.forward_from(&mid, split, 4).unwrap();
            prop_assert_eq!(tail, m.forward(&a).unwrap());
        }

        #[test]
        fn non_invertible_flag_matches_scan(widths in prop::collection::vec(1usize..20, 1..5), input in 1usize..20) {
            let m = build_mlp(input, &widths, true, false, Precision::F64, 0).unwrap();
            let mut prev = input;
            let mut shrinks = false;
            for l in 1..=m.depth() {
                let n = m.count_layer_elements(l).unwrap();
                shrinks |= n < prev;
                prev = n;
            }
            prop_assert_eq!(m.is_non_invertible(), shrinks);
        }
    }
}
