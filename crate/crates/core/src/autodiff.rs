//! Reverse-mode differentiation through a model's stages.
//!
//! A [`Tape`] records, for every primitive layer evaluated on the way to
//! stage `l`, what its backward rule needs (the layer input, the ReLU mask or
//! the max-pool winners). Stages after `l` are never evaluated. The backward
//! pass then walks the records in reverse, producing the input gradient and,
//! optionally, gradients for every parameter in [`Model::params`] order.
//!
//! Conventions: `sign(0) = 0` for the L1 subgradient, ReLU has derivative 0 at
//! 0, and a max-pool window routes its whole gradient to the lowest flat index
//! among tied maxima.

use crate::error::{Error, Result};
use crate::model::{avg_pool_forward, conv_forward, dense_forward, max_pool_forward, Layer, Model};
use crate::tensor::{Precision, Tensor};

#[derive(Debug, Clone)]
enum Record {
    Dense { input: Tensor, param: usize },
    Conv { input: Tensor, param: usize },
    MaxPool { argmax: Vec<usize>, in_shape: Vec<usize> },
    AvgPool { in_shape: Vec<usize>, window: usize, stride: usize },
    Relu { mask: Vec<bool> },
    Flatten { in_shape: Vec<usize> },
    Residual { inner: Vec<Record> },
}

fn param_slots(layer: &Layer) -> usize {
    match layer {
        Layer::Dense { bias, .. } | Layer::Conv2d { bias, .. } => 1 + bias.is_some() as usize,
        Layer::Residual { inner } => inner.iter().map(param_slots).sum(),
        _ => 0,
    }
}

fn record_layer(layer: &Layer, x: &Tensor, param: &mut usize, records: &mut Vec<Record>) -> Tensor {
    match layer {
        Layer::Dense { weights, bias } => {
            records.push(Record::Dense {
                input: x.clone(),
                param: *param,
            });
            *param += param_slots(layer);
            dense_forward(weights, bias.as_ref(), x)
        }
        Layer::Conv2d {
            kernels,
            bias,
            stride,
            padding,
        } => {
            records.push(Record::Conv {
                input: x.clone(),
                param: *param,
            });
            *param += param_slots(layer);
            conv_forward(kernels, bias.as_ref(), *stride, *padding, x)
        }
        Layer::MaxPool { window, stride } => {
            let (y, argmax) = max_pool_forward(*window, *stride, x);
            records.push(Record::MaxPool {
                argmax,
                in_shape: x.shape().to_vec(),
            });
            y
        }
        Layer::AvgPool { window, stride } => {
            records.push(Record::AvgPool {
                in_shape: x.shape().to_vec(),
                window: *window,
                stride: *stride,
            });
            avg_pool_forward(*window, *stride, x)
        }
        Layer::Relu => {
            records.push(Record::Relu {
                mask: x.data().iter().map(|&v| v > 0.0).collect(),
            });
            layer.forward(x)
        }
        Layer::Flatten => {
            records.push(Record::Flatten {
                in_shape: x.shape().to_vec(),
            });
            x.flatten()
        }
        Layer::Residual { inner } => {
            let mut sub = Vec::with_capacity(inner.len());
            let mut h = x.clone();
            for l in inner {
                h = record_layer(l, &h, param, &mut sub);
            }
            records.push(Record::Residual { inner: sub });
            h.add(x).expect("residual shapes checked at construction")
        }
    }
}

/// Forward evaluation up to a stage, with everything needed to run backward.
#[derive(Debug, Clone)]
pub struct Tape<'m> {
    model: &'m Model,
    records: Vec<(usize, Vec<Record>)>,
    output: Tensor,
}

impl<'m> Tape<'m> {
    pub fn record(model: &'m Model, a: &Tensor, l: usize) -> Result<Tape<'m>> {
        model.check_layer(l)?;
        model.check_input(a)?;
        let mut x = a.cast(model.precision());
        let mut param = 0;
        let mut records = Vec::with_capacity(l);
        for (si, stage) in model.stages()[..l].iter().enumerate() {
            let mut recs = Vec::with_capacity(stage.layers.len());
            for layer in &stage.layers {
                x = record_layer(layer, &x, &mut param, &mut recs);
            }
            records.push((si, recs));
        }
        Ok(Tape {
            model,
            records,
            output: x,
        })
    }

    pub fn output(&self) -> &Tensor {
        &self.output
    }

    /// Pattern of discrete choices made during the forward pass (ReLU masks
    /// and max-pool winners). Two inputs with equal patterns lie in the same
    /// linear piece of the network.
    pub fn activation_pattern(&self) -> Vec<u64> {
        fn walk(recs: &[Record], out: &mut Vec<u64>) {
            for r in recs {
                match r {
                    Record::Relu { mask } => out.extend(mask.iter().map(|&b| b as u64)),
                    Record::MaxPool { argmax, .. } => out.extend(argmax.iter().map(|&i| i as u64)),
                    Record::Residual { inner } => walk(inner, out),
                    _ => {}
                }
            }
        }
        let mut out = Vec::new();
        for (_, recs) in &self.records {
            walk(recs, &mut out);
        }
        out
    }

    /// Back-propagates `grad_out` (shaped like the output). Returns the input
    /// gradient and, when `want_params`, one gradient per model parameter
    /// (zeros for stages beyond the recorded one).
    pub fn backward(&self, grad_out: &Tensor, want_params: bool) -> Result<(Tensor, Option<Vec<Tensor>>)> {
        if grad_out.shape() != self.output.shape() {
            return Err(Error::Shape(format!(
                "output gradient {:?} vs output {:?}",
                grad_out.shape(),
                self.output.shape()
            )));
        }
        let mut pgrads: Option<Vec<Tensor>> =
            want_params.then(|| self.model.params().iter().map(|p| p.zeros_like().cast(Precision::F64)).collect());
        let mut g = grad_out.cast(Precision::F64);
        for (si, recs) in self.records.iter().rev() {
            let layers = &self.model.stages()[*si].layers;
            g = backward_layers(layers, recs, g, pgrads.as_mut());
        }
        let p = self.model.precision();
        let g = g.cast(p).reshape(self.model.input_shape())?;
        let pgrads = pgrads.map(|v| v.into_iter().map(|t| t.cast(p)).collect());
        Ok((g, pgrads))
    }
}

fn backward_layers(
    layers: &[Layer],
    records: &[Record],
    mut g: Tensor,
    mut pgrads: Option<&mut Vec<Tensor>>,
) -> Tensor {
    debug_assert_eq!(layers.len(), records.len());
    for (layer, rec) in layers.iter().zip(records).rev() {
        g = backward_one(layer, rec, g, pgrads.as_deref_mut());
    }
    g
}

fn backward_one(
    layer: &Layer,
    record: &Record,
    g: Tensor,
    pgrads: Option<&mut Vec<Tensor>>,
) -> Tensor {
    match (layer, record) {
        (Layer::Dense { weights, bias }, Record::Dense { input, param }) => {
            let (out, inp) = (weights.shape()[0], weights.shape()[1]);
            let w = weights.data();
            let gd = g.data();
            let mut gin = vec![0.0; inp];
            for (o, &go) in gd.iter().enumerate() {
                if go == 0.0 {
                    continue;
                }
                let row = &w[o * inp..(o + 1) * inp];
                for (gi, &wv) in gin.iter_mut().zip(row) {
                    *gi += wv * go;
                }
            }
            if let Some(pg) = pgrads {
                let x = input.data();
                let dw = pg[*param].data_mut();
                for o in 0..out {
                    let go = gd[o];
                    for (d, &xv) in dw[o * inp..(o + 1) * inp].iter_mut().zip(x) {
                        *d += go * xv;
                    }
                }
                if bias.is_some() {
                    for (d, &go) in pg[*param + 1].data_mut().iter_mut().zip(gd) {
                        *d += go;
                    }
                }
            }
            Tensor::from_raw(input.shape().to_vec(), Precision::F64, gin)
        }
        (
            Layer::Conv2d {
                kernels,
                bias,
                stride,
                padding,
            },
            Record::Conv { input, param },
        ) => {
            let (c, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
            let ks = kernels.shape();
            let (oc, k) = (ks[0], ks[2]);
            let (ho, wo) = (g.shape()[1], g.shape()[2]);
            let kd = kernels.data();
            let xd = input.data();
            let gd = g.data();
            let mut gin = vec![0.0; c * h * w];
            let mut dk = pgrads.is_some().then(|| vec![0.0; kd.len()]);
            let mut db = pgrads.is_some().then(|| vec![0.0; oc]);
            for o in 0..oc {
                for oy in 0..ho {
                    for ox in 0..wo {
                        let go = gd[(o * ho + oy) * wo + ox];
                        if go == 0.0 {
                            continue;
                        }
                        if let Some(db) = db.as_mut() {
                            db[o] += go;
                        }
                        for ci in 0..c {
                            for ky in 0..k {
                                let iy = (oy * stride + ky) as isize - *padding as isize;
                                if iy < 0 || iy as usize >= h {
                                    continue;
                                }
                                for kx in 0..k {
                                    let ix = (ox * stride + kx) as isize - *padding as isize;
                                    if ix < 0 || ix as usize >= w {
                                        continue;
                                    }
                                    let xi = ci * h * w + iy as usize * w + ix as usize;
                                    let ki = ((o * c + ci) * k + ky) * k + kx;
                                    gin[xi] += kd[ki] * go;
                                    if let Some(dk) = dk.as_mut() {
                                        dk[ki] += xd[xi] * go;
                                    }
                                }
                            }
                        }
                    }
                }
            }
            if let Some(pg) = pgrads {
                for (d, v) in pg[*param].data_mut().iter_mut().zip(dk.unwrap()) {
                    *d += v;
                }
                if bias.is_some() {
                    for (d, v) in pg[*param + 1].data_mut().iter_mut().zip(db.unwrap()) {
                        *d += v;
                    }
                }
            }
            Tensor::from_raw(vec![c, h, w], Precision::F64, gin)
        }
        (Layer::MaxPool { .. }, Record::MaxPool { argmax, in_shape }) => {
            let mut gin = vec![0.0; in_shape.iter().product()];
            for (&src, &go) in argmax.iter().zip(g.data()) {
                gin[src] += go;
            }
            Tensor::from_raw(in_shape.clone(), Precision::F64, gin)
        }
        (Layer::AvgPool { .. }, Record::AvgPool { in_shape, window, stride }) => {
            let (c, h, w) = (in_shape[0], in_shape[1], in_shape[2]);
            let (ho, wo) = (g.shape()[1], g.shape()[2]);
            let norm = 1.0 / (window * window) as f64;
            let gd = g.data();
            let mut gin = vec![0.0; c * h * w];
            for ci in 0..c {
                for oy in 0..ho {
                    for ox in 0..wo {
                        let go = gd[(ci * ho + oy) * wo + ox] * norm;
                        for ky in 0..*window {
                            for kx in 0..*window {
                                gin[ci * h * w + (oy * stride + ky) * w + ox * stride + kx] += go;
                            }
                        }
                    }
                }
            }
            Tensor::from_raw(in_shape.clone(), Precision::F64, gin)
        }
        (Layer::Relu, Record::Relu { mask }) => {
            let data = g
                .data()
                .iter()
                .zip(mask)
                .map(|(&v, &m)| if m { v } else { 0.0 })
                .collect();
            Tensor::from_raw(g.shape().to_vec(), Precision::F64, data)
        }
        (Layer::Flatten, Record::Flatten { in_shape }) => g.reshape(in_shape).expect("same element count"),
        (Layer::Residual { inner }, Record::Residual { inner: recs }) => {
            let through = backward_layers(inner, recs, g.clone(), pgrads);
            through.add(&g).expect("residual shapes agree")
        }
        _ => unreachable!("record does not match layer"),
    }
}

#[inline]
pub fn sign0(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Objective value, embedding and input gradient of `sum_i |y_hat_i - y_i|`
/// with `y = O_l(a_n)`.
#[derive(Debug, Clone)]
pub struct L1Step {
    pub objective: f64,
    pub embedding: Tensor,
    pub gradient: Tensor,
}

pub fn l1_step(model: &Model, l: usize, a_n: &Tensor, y_hat: &Tensor) -> Result<L1Step> {
    let tape = Tape::record(model, a_n, l)?;
    let y = tape.output();
    if y.shape() != y_hat.shape() {
        return Err(Error::Shape(format!(
            "target embedding {:?} vs layer {l} output {:?}",
            y_hat.shape(),
            y.shape()
        )));
    }
    let residual = y.cast(Precision::F64).sub(&y_hat.cast(Precision::F64))?;
    let objective = residual.l1_sum();
    let seed = residual.map(sign0);
    let (gradient, _) = tape.backward(&seed, false)?;
    Ok(L1Step {
        objective,
        embedding: tape.output,
        gradient,
    })
}

/// Gradient of the L1 embedding objective with respect to the input.
pub fn input_gradient(model: &Model, l: usize, a_n: &Tensor, y_hat: &Tensor) -> Result<Tensor> {
    Ok(l1_step(model, l, a_n, y_hat)?.gradient)
}

/// Mean softmax cross-entropy over a batch of logits and its gradient with
/// respect to those logits.
pub fn cross_entropy(logits: &Tensor, label: usize) -> Result<(f64, Tensor)> {
    let z = logits.data();
    if label >= z.len() {
        return Err(Error::Label {
            label,
            classes: z.len(),
        });
    }
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = z.iter().map(|v| (v - max).exp()).sum();
    let log_z = max + sum.ln();
    let loss = log_z - z[label];
    let grad = z
        .iter()
        .enumerate()
        .map(|(i, &v)| (v - log_z).exp() - if i == label { 1.0 } else { 0.0 })
        .collect();
    Ok((loss, Tensor::from_raw(logits.shape().to_vec(), Precision::F64, grad)))
}

/// Mean cross-entropy over a batch and its gradient for every parameter, in
/// [`Model::params`] order.
pub fn param_gradients(model: &Model, inputs: &[Tensor], labels: &[usize]) -> Result<(f64, Vec<Tensor>)> {
    if inputs.len() != labels.len() || inputs.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "batch has {} inputs and {} labels",
            inputs.len(),
            labels.len()
        )));
    }
    let depth = model.depth();
    let out_shape = model.embedding_shape(depth)?;
    if out_shape.len() != 1 {
        return Err(Error::Shape(format!("model must end in logits, got {out_shape:?}")));
    }
    let scale = 1.0 / inputs.len() as f64;
    let mut total: Option<Vec<Tensor>> = None;
    let mut loss = 0.0;
    for (x, &label) in inputs.iter().zip(labels) {
        let tape = Tape::record(model, x, depth)?;
        let (l, g) = cross_entropy(&tape.output().cast(Precision::F64), label)?;
        loss += l * scale;
        let (_, grads) = tape.backward(&g.scale(scale), true)?;
        let grads = grads.expect("requested");
        match total.as_mut() {
            None => total = Some(grads.into_iter().map(|t| t.cast(Precision::F64)).collect()),
            Some(acc) => {
                for (a, g) in acc.iter_mut().zip(&grads) {
                    a.axpy(1.0, g)?;
                }
            }
        }
    }
    Ok((loss, total.expect("non-empty batch")))
}

/// Mean cross-entropy without gradients.
pub fn mean_cross_entropy(model: &Model, inputs: &[Tensor], labels: &[usize]) -> Result<f64> {
    let mut loss = 0.0;
    for (x, &label) in inputs.iter().zip(labels) {
        let logits = model.forward(x)?.cast(Precision::F64);
        loss += cross_entropy(&logits, label)?.0;
    }
    Ok(loss / inputs.len() as f64)
}
