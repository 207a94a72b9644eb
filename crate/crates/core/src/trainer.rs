//! Small classification datasets and plain minibatch SGD.

use crate::autodiff::param_gradients;
use crate::error::{Error, Result};
use crate::model::{Layer, Model};
use crate::pattern::{render, Family};
use crate::rng::{derive_seed, gaussian_draw, stream, SeededRng};
use crate::tensor::{Precision, Tensor};

pub const NOISE_MU: f64 = 0.5;
pub const NOISE_SIGMA: f64 = 1.0 / 3.0;
/// Per-pixel noise added to structured patterns.
pub const PATTERN_NOISE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub inputs: Vec<Tensor>,
    pub labels: Vec<usize>,
    pub num_classes: usize,
}

impl Dataset {
    pub fn new(inputs: Vec<Tensor>, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if inputs.len() != labels.len() {
            return Err(Error::InvalidArgument(format!(
                "{} inputs but {} labels",
                inputs.len(),
                labels.len()
            )));
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::Label {
                label,
                classes: num_classes,
            });
        }
        Ok(Self {
            inputs,
            labels,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

/// I.i.d. Gaussian images with uniformly random labels.
pub fn make_noise_dataset(
    count: usize,
    classes: usize,
    mu: f64,
    sigma: f64,
    shape: &[usize],
    seed: u64,
) -> Result<Dataset> {
    if classes == 0 || count < classes {
        return Err(Error::InvalidArgument(format!(
            "need count >= classes >= 1, got {count} items for {classes} classes"
        )));
    }
    let mut data = SeededRng::new(derive_seed(seed, stream::DATA));
    let mut labels_rng = SeededRng::new(derive_seed(seed, stream::LABELS));
    let inputs = (0..count).map(|_| gaussian_draw(&mut data, shape, mu, sigma)).collect();
    let labels = (0..count).map(|_| labels_rng.below(classes)).collect();
    Dataset::new(inputs, labels, classes)
}

/// Class `k` is rendered from pattern family `k` with a random phase, centre
/// offset and colour per item, plus small pixel noise. With `stratified` the
/// labels cycle `0, 1, .., classes - 1`; otherwise they are uniform random.
pub fn make_structured_dataset(
    count: usize,
    classes: usize,
    shape: &[usize],
    stratified: bool,
    seed: u64,
) -> Result<Dataset> {
    if classes == 0 || classes > Family::ALL.len() {
        return Err(Error::InvalidArgument(format!(
            "structured data supports 1..={} classes, got {classes}",
            Family::ALL.len()
        )));
    }
    if shape.len() != 3 {
        return Err(Error::Shape(format!("structured data needs [C, H, W], got {shape:?}")));
    }
    let mut data = SeededRng::new(derive_seed(seed, stream::DATA));
    let mut labels_rng = SeededRng::new(derive_seed(seed, stream::LABELS));
    let labels: Vec<usize> = (0..count)
        .map(|i| if stratified { i % classes } else { labels_rng.below(classes) })
        .collect();
    let inputs = labels
        .iter()
        .map(|&k| render(Family::ALL[k], shape, PATTERN_NOISE, &mut data))
        .collect();
    Dataset::new(inputs, labels, classes)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    /// 1-based.
    pub epoch: usize,
    /// Mean cross-entropy over the whole set after the epoch's updates.
    pub loss: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Training {
    pub model: Model,
    pub history: Vec<EpochStats>,
}

/// Index of the largest logit; ties go to the lowest index.
pub fn predict(model: &Model, x: &Tensor) -> Result<usize> {
    let logits = model.forward(x)?;
    let mut best = 0;
    for (i, &v) in logits.data().iter().enumerate() {
        if v > logits.data()[best] {
            best = i;
        }
    }
    Ok(best)
}

/// Mean loss and accuracy over a dataset.
pub fn evaluate(model: &Model, data: &Dataset) -> Result<(f64, f64)> {
    let mut loss = 0.0;
    let mut correct = 0usize;
    for (x, &y) in data.inputs.iter().zip(&data.labels) {
        let logits = model.forward(x)?.cast(Precision::F64);
        loss += crate::autodiff::cross_entropy(&logits, y)?.0;
        if predict(model, x)? == y {
            correct += 1;
        }
    }
    let n = data.len() as f64;
    Ok((loss / n, correct as f64 / n))
}

/// Minibatch SGD on mean cross-entropy. The item order is reshuffled every
/// epoch from the run seed; batches run sequentially, so the result is a pure
/// function of the inputs.
pub fn train(model: &Model, data: &Dataset, cfg: &TrainConfig) -> Result<Training> {
    let out = model.embedding_shape(model.depth())?;
    if out != [data.num_classes] {
        return Err(Error::Shape(format!(
            "model emits {out:?} but the dataset has {} classes",
            data.num_classes
        )));
    }
    if cfg.batch == 0 || data.is_empty() || !(cfg.lr >= 0.0) || !cfg.lr.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "need batch >= 1, lr >= 0 and data, got batch {} lr {} with {} items",
            cfg.batch,
            cfg.lr,
            data.len()
        )));
    }
    let mut model = model.clone();
    let mut rng = SeededRng::new(derive_seed(cfg.seed, stream::SHUFFLE));
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        rng.shuffle(&mut order);
        for (batch, idx) in order.chunks(cfg.batch).enumerate() {
            let xs: Vec<Tensor> = idx.iter().map(|&i| data.inputs[i].clone()).collect();
            let ys: Vec<usize> = idx.iter().map(|&i| data.labels[i]).collect();
            let (loss, grads) = param_gradients(&model, &xs, &ys)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch });
            }
            for (p, g) in model.params_mut().into_iter().zip(&grads) {
                p.axpy(-cfg.lr, g)?;
            }
            if model.params().iter().any(|p| !p.is_finite()) {
                return Err(Error::NonFiniteLoss { epoch, batch });
            }
        }
        let (loss, accuracy) = evaluate(&model, data)?;
        history.push(EpochStats { epoch, loss, accuracy });
    }
    Ok(Training { model, history })
}

/// First-layer weights for visual inspection: conv kernels as
/// `[out_c, in_c, k, k]`, dense rows reshaped to `[out, input shape..]`.
pub fn first_layer_filters(model: &Model) -> Option<Tensor> {
    let layer = model.stages().first()?.layers.first()?;
    match layer {
        Layer::Conv2d { kernels, .. } => Some(kernels.clone()),
        Layer::Dense { weights, .. } => {
            let mut shape = vec![weights.shape()[0]];
            shape.extend_from_slice(model.input_shape());
            weights.reshape(&shape).ok()
        }
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_convnet, build_from_specs, build_mlp_on, ConvNetSpec, LayerSpec};

    #[test]
    fn noise_dataset_shape_labels_and_mean() {
        let d = make_noise_dataset(200, 10, NOISE_MU, NOISE_SIGMA, &[3, 16, 16], 4).unwrap();
        assert_eq!(d.len(), 200);
        assert!(d.labels.iter().all(|&l| l < 10));
        assert!(d.inputs.iter().all(|x| x.shape() == [3, 16, 16]));
        let mean = d.inputs.iter().map(|x| x.mean()).sum::<f64>() / 200.0;
        assert!((mean - 0.5).abs() < 0.01, "{mean}");
        assert!(make_noise_dataset(5, 10, 0.5, 0.3, &[4], 0).is_err());
        assert_eq!(d, make_noise_dataset(200, 10, NOISE_MU, NOISE_SIGMA, &[3, 16, 16], 4).unwrap());
    }

    #[test]
    fn structured_dataset_rules() {
        let a = make_structured_dataset(16, 4, &[3, 8, 8], false, 2).unwrap();
        assert_eq!(a, make_structured_dataset(16, 4, &[3, 8, 8], false, 2).unwrap());
        let s = make_structured_dataset(4, 4, &[3, 8, 8], true, 2).unwrap();
        assert_eq!(s.labels, vec![0, 1, 2, 3]);
        assert!(make_structured_dataset(10, 9, &[3, 8, 8], true, 0).is_err());
        assert!(make_structured_dataset(10, 2, &[64], true, 0).is_err());
    }

    #[test]
    fn linear_probe_separates_patterns() {
        let d = make_structured_dataset(200, 4, &[3, 16, 16], false, 11).unwrap();
        let specs = vec![vec![LayerSpec::Dense { out: 4, bias: true }]];
        let probe = build_from_specs(&[3, 16, 16], &specs, Precision::F64, 0).unwrap();
        let cfg = TrainConfig { epochs: 30, lr: 0.05, batch: 10, seed: 1 };
        let t = train(&probe, &d, &cfg).unwrap();
        assert!(t.history.last().unwrap().accuracy > 0.9, "{:?}", t.history.last());
    }

    #[test]
    fn zero_learning_rate_changes_nothing() {
        let d = make_noise_dataset(20, 4, 0.5, 0.3, &[12], 1).unwrap();
        let m = build_mlp_on(&[12], &[8, 4], true, true, Precision::F64, 2).unwrap();
        let t = train(&m, &d, &TrainConfig { epochs: 3, lr: 0.0, batch: 5, seed: 0 }).unwrap();
        assert_eq!(t.model, m);
        assert!(t.history.windows(2).all(|w| w[0].loss == w[1].loss));
    }

    #[test]
    fn training_is_deterministic_and_leaves_input_model() {
        let d = make_noise_dataset(30, 3, 0.5, 0.3, &[10], 9).unwrap();
        let m = build_mlp_on(&[10], &[16, 3], true, true, Precision::F64, 3).unwrap();
        let cfg = TrainConfig { epochs: 4, lr: 0.1, batch: 7, seed: 5 };
        let a = train(&m, &d, &cfg).unwrap();
        let b = train(&m, &d, &cfg).unwrap();
        assert_eq!(a.model.to_param_blob(), b.model.to_param_blob());
        assert_eq!(a.history, b.history);
        assert_ne!(a.model, m);
        assert!(a.history.last().unwrap().loss < a.history[0].loss);
    }

    #[test]
    fn divergent_training_reports_position() {
        let d = make_noise_dataset(20, 2, 0.5, 0.3, &[6], 0).unwrap();
        let m = build_mlp_on(&[6], &[32, 32, 2], true, true, Precision::F64, 0).unwrap();
        match train(&m, &d, &TrainConfig { epochs: 5, lr: 1e150, batch: 4, seed: 0 }) {
            Err(Error::NonFiniteLoss { epoch, batch }) => assert!(epoch >= 1 && batch < 5),
            other => panic!("expected non-finite loss, got {other:?}"),
        }
    }

    #[test]
    fn rejects_mismatched_head() {
        let d = make_noise_dataset(10, 5, 0.5, 0.3, &[4], 0).unwrap();
        let m = build_mlp_on(&[4], &[3], true, false, Precision::F64, 0).unwrap();
        assert!(train(&m, &d, &TrainConfig { epochs: 1, lr: 0.1, batch: 2, seed: 0 }).is_err());
    }

    #[test]
    fn filter_dump_shapes() {
        let spec = ConvNetSpec { head_classes: Some(4), ..ConvNetSpec::small(&[4, 8], true) };
        let conv = build_convnet(&[3, 16, 16], &spec, Precision::F64, 0).unwrap();
        assert_eq!(first_layer_filters(&conv).unwrap().shape(), &[4, 3, 3, 3]);
        let mlp = build_mlp_on(&[3, 4, 4], &[5], true, false, Precision::F64, 0).unwrap();
        assert_eq!(first_layer_filters(&mlp).unwrap().shape(), &[5, 3, 4, 4]);
    }
}
