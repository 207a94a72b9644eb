//! Exact inversion of square affine stacks, the output-perturbation
//! conditioning probe, and ReLU capacity arithmetic.

use num_traits::Float;

use crate::error::{Error, Result};
use crate::inversion::shifted_input;
use crate::model::{build_mlp, Layer, Model, Stage};
use crate::rng::{derive_seed, gaussian_draw, stream, SeededRng};
use crate::tensor::{Precision, Tensor};

/// Relative pivot threshold below which a 64-bit factorization is declared singular.
pub const PIVOT_THRESHOLD_F64: f64 = 1e-12;
/// The same threshold for 32-bit factorizations (about 100 single-precision ulps).
pub const PIVOT_THRESHOLD_F32: f64 = 1e-5;

/// One `y = W x + b` layer with square `W`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineLayer {
    pub weights: Tensor,
    pub bias: Tensor,
}

/// A stack of square affine layers of a common width, no nonlinearity.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    layers: Vec<AffineLayer>,
    precision: Precision,
}

impl LinearModel {
    pub fn new(layers: Vec<AffineLayer>, precision: Precision) -> Result<Self> {
        let Some(first) = layers.first() else {
            return Err(Error::InvalidArgument("linear model needs at least one layer".into()));
        };
        let width = first.weights.shape().first().copied().unwrap_or(0);
        for (i, l) in layers.iter().enumerate() {
            if l.weights.shape() != [width, width] || l.bias.shape() != [width] {
                return Err(Error::Shape(format!(
                    "layer {}: expected [{width}, {width}] weights and [{width}] bias, got {:?} and {:?}",
                    i + 1,
                    l.weights.shape(),
                    l.bias.shape()
                )));
            }
        }
        let layers = layers
            .into_iter()
            .map(|l| AffineLayer {
                weights: l.weights.cast(precision),
                bias: l.bias.cast(precision),
            })
            .collect();
        Ok(Self { layers, precision })
    }

    /// Kaiming uniform weights; biases `U(-1/sqrt(width), 1/sqrt(width))` when
    /// `use_bias`, zero otherwise.
    pub fn random(width: usize, depth: usize, use_bias: bool, precision: Precision, seed: u64) -> Result<Self> {
        if depth == 0 {
            return Err(Error::InvalidArgument("depth must be >= 1".into()));
        }
        let mlp = build_mlp(width, &vec![width; depth], true, false, precision, seed)?;
        let mut lm = Self::from_model(&mlp)?;
        if use_bias {
            let mut rng = SeededRng::new(derive_seed(seed, stream::PARAMS)).substream(1);
            let bound = 1.0 / (width as f64).sqrt();
            for l in &mut lm.layers {
                let b: Vec<f64> = (0..width).map(|_| rng.uniform_range(-bound, bound)).collect();
                l.bias = Tensor::from_vec(&[width], b)?.cast(precision);
            }
        }
        Ok(lm)
    }

    /// Accepts models whose every stage is a single square dense layer.
    pub fn from_model(model: &Model) -> Result<Self> {
        let mut layers = Vec::with_capacity(model.depth());
        for (i, stage) in model.stages().iter().enumerate() {
            match stage.layers.as_slice() {
                [Layer::Dense { weights, bias }] => {
                    let out = weights.shape()[0];
                    layers.push(AffineLayer {
                        weights: weights.clone(),
                        bias: bias.clone().unwrap_or_else(|| Tensor::zeros(&[out])),
                    });
                }
                _ => {
                    return Err(Error::InvalidArgument(format!(
                        "stage {} is not a single dense layer",
                        i + 1
                    )))
                }
            }
        }
        if model.input_shape().len() != 1 {
            return Err(Error::Shape(format!(
                "linear model input must be a vector, got {:?}",
                model.input_shape()
            )));
        }
        Self::new(layers, model.precision())
    }

    pub fn to_model(&self) -> Model {
        let stages = self
            .layers
            .iter()
            .map(|l| Stage::new(vec![Layer::dense(l.weights.clone(), Some(l.bias.clone())).expect("square")]))
            .collect();
        Model::new(&[self.width()], stages, self.precision, 0).expect("consistent shapes")
    }

    pub fn width(&self) -> usize {
        self.layers[0].bias.len()
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn precision(&self) -> Precision {
        self.precision
    }

    pub fn layers(&self) -> &[AffineLayer] {
        &self.layers
    }

    pub fn with_precision(&self, precision: Precision) -> Self {
        Self::new(self.layers.clone(), precision).expect("already validated")
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.check_vector(x)?;
        let mut h = x.cast(self.precision);
        for l in &self.layers {
            h = crate::model::dense_forward(&l.weights, Some(&l.bias), &h);
        }
        Ok(h)
    }

    fn check_vector(&self, x: &Tensor) -> Result<()> {
        if x.len() != self.width() {
            return Err(Error::Shape(format!(
                "expected {} elements, got {:?}",
                self.width(),
                x.shape()
            )));
        }
        Ok(())
    }

    /// LU-factorizes every layer once so repeated solves are cheap.
    pub fn factorize(&self) -> Result<FactoredLinear> {
        let n = self.width();
        let mut lus = Vec::with_capacity(self.depth());
        for (i, l) in self.layers.iter().enumerate() {
            let singular = |pivot| Error::Singular { layer: i + 1, pivot };
            let lu = match self.precision {
                Precision::F64 => Lu::F64(lu_factor(l.weights.data().to_vec(), n, PIVOT_THRESHOLD_F64).map_err(singular)?),
                Precision::F32 => {
                    let w = l.weights.data().iter().map(|&v| v as f32).collect();
                    Lu::F32(lu_factor(w, n, PIVOT_THRESHOLD_F32).map_err(singular)?)
                }
            };
            lus.push(lu);
        }
        Ok(FactoredLinear { model: self.clone(), lus })
    }
}

/// Result of an exact inversion; `warning` is set when the working precision
/// is too low for the round trip to be trusted.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearInverse {
    pub input: Tensor,
    pub warning: Option<String>,
}

pub const LOW_PRECISION_WARNING: &str =
    "32-bit exact inversion: round-off is amplified by the model's conditioning; use 64-bit";

/// Solves `forward(x) = o` layer by layer from the last layer to the first.
pub fn invert_linear(model: &LinearModel, o: &Tensor) -> Result<LinearInverse> {
    model.factorize()?.solve(o)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundTrip {
    /// `||x - invert(forward(x))|| / ||x||`, measured in 64-bit.
    pub error: f64,
    pub warning: Option<String>,
}

pub fn roundtrip_error(model: &LinearModel, x: &Tensor) -> Result<RoundTrip> {
    let x = x.cast(model.precision());
    let back = invert_linear(model, &model.forward(&x)?)?;
    let diff = x.cast(Precision::F64).sub(&back.input.cast(Precision::F64))?;
    Ok(RoundTrip {
        error: diff.l2_norm() / x.cast(Precision::F64).l2_norm(),
        warning: back.warning,
    })
}

/// Uniform `[0, 1)` vector, like a flattened normalised image.
pub fn unit_input(n: usize, seed: u64) -> Tensor {
    let mut rng = SeededRng::new(derive_seed(seed, stream::TARGET));
    Tensor::from_vec(&[n], (0..n).map(|_| rng.uniform()).collect()).expect("length matches")
}

#[derive(Debug, Clone)]
pub struct FactoredLinear {
    model: LinearModel,
    lus: Vec<Lu>,
}

impl FactoredLinear {
    pub fn solve(&self, o: &Tensor) -> Result<LinearInverse> {
        self.model.check_vector(o)?;
        let n = self.model.width();
        let p = self.model.precision;
        let mut x: Vec<f64> = o.cast(p).into_data();
        for (l, lu) in self.model.layers.iter().zip(&self.lus).rev() {
            x = match lu {
                Lu::F64(lu) => {
                    let rhs: Vec<f64> = x.iter().zip(l.bias.data()).map(|(v, b)| v - b).collect();
                    lu.solve(&rhs)
                }
                Lu::F32(lu) => {
                    let rhs: Vec<f32> = x.iter().zip(l.bias.data()).map(|(&v, &b)| v as f32 - b as f32).collect();
                    lu.solve(&rhs).into_iter().map(f64::from).collect()
                }
            };
        }
        let input = Tensor::from_vec(&[n], x)
            .map_err(|_| Error::Singular { layer: 0, pivot: f64::NAN })?
            .cast(p);
        let warning = (p == Precision::F32).then(|| LOW_PRECISION_WARNING.to_string());
        Ok(LinearInverse { input, warning })
    }
}

#[derive(Debug, Clone)]
enum Lu {
    F64(LuFactors<f64>),
    F32(LuFactors<f32>),
}

/// Packed `PA = LU` (unit-diagonal `L` below the diagonal, `U` on and above).
#[derive(Debug, Clone)]
struct LuFactors<T> {
    n: usize,
    lu: Vec<T>,
    perm: Vec<usize>,
}

/// Partial pivoting; fails with the offending pivot magnitude (relative to the
/// largest entry of the matrix) when it falls to `threshold` or below.
fn lu_factor<T: Float>(mut a: Vec<T>, n: usize, threshold: f64) -> std::result::Result<LuFactors<T>, f64> {
    let scale = a.iter().fold(T::zero(), |m, &v| m.max(v.abs()));
    if scale == T::zero() {
        return Err(0.0);
    }
    let mut perm: Vec<usize> = (0..n).collect();
    for k in 0..n {
        let (piv, mag) = (k..n)
            .map(|r| (r, a[r * n + k].abs()))
            .fold((k, T::neg_infinity()), |best, cur| if cur.1 > best.1 { cur } else { best });
        let rel = (mag / scale).to_f64().unwrap_or(0.0);
        if !(rel > threshold) {
            return Err(rel);
        }
        if piv != k {
            for c in 0..n {
                a.swap(k * n + c, piv * n + c);
            }
            perm.swap(k, piv);
        }
        let d = a[k * n + k];
        for r in k + 1..n {
            let f = a[r * n + k] / d;
            a[r * n + k] = f;
            if f != T::zero() {
                for c in k + 1..n {
                    let u = a[k * n + c];
                    a[r * n + c] = a[r * n + c] - f * u;
                }
            }
        }
    }
    Ok(LuFactors { n, lu: a, perm })
}

impl<T: Float> LuFactors<T> {
    fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.n;
        let mut y: Vec<T> = self.perm.iter().map(|&p| b[p]).collect();
        for r in 0..n {
            let mut s = y[r];
            for c in 0..r {
                s = s - self.lu[r * n + c] * y[c];
            }
            y[r] = s;
        }
        for r in (0..n).rev() {
            let mut s = y[r];
            for c in r + 1..n {
                s = s - self.lu[r * n + c] * y[c];
            }
            y[r] = s / self.lu[r * n + r];
        }
        y
    }
}

/// Per-seed distances of the conditioning probe.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeRow {
    pub seed: u64,
    /// `||a - a''||`, where `a''` is the exact preimage of a perturbed output.
    pub dist_a_app: f64,
    /// `||a - a'||`, where `a'` is a perturbed input.
    pub dist_a_ap: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeReport {
    pub rows: Vec<ProbeRow>,
}

impl ProbeReport {
    pub fn median_ratio(&self) -> f64 {
        median(self.rows.iter().map(|r| r.ratio).collect())
    }
}

pub fn median(mut xs: Vec<f64>) -> f64 {
    assert!(!xs.is_empty(), "median of nothing");
    xs.sort_by(f64::total_cmp);
    let m = xs.len() / 2;
    if xs.len() % 2 == 1 {
        xs[m]
    } else {
        (xs[m - 1] + xs[m]) / 2.0
    }
}

/// Compares how far the exact preimage of a slightly perturbed output moves
/// (`sigma_out`) against a direct input perturbation (`sigma_in`), per seed.
pub fn conditioning_probe(
    model: &LinearModel,
    a: &Tensor,
    sigma_out: f64,
    sigma_in: f64,
    seeds: &[u64],
) -> Result<ProbeReport> {
    if !(sigma_out > 0.0 && sigma_in > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "probe sigmas must be positive, got {sigma_out} and {sigma_in}"
        )));
    }
    let factored = model.factorize()?;
    let a = a.cast(model.precision());
    let o = model.forward(&a)?;
    let mut rows = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let mut rng = SeededRng::new(derive_seed(seed, stream::OUTPUT_NOISE));
        let noisy = o.add(&gaussian_draw(&mut rng, o.shape(), 0.0, sigma_out))?;
        let a_app = factored.solve(&noisy)?.input;
        let a_ap = shifted_input(&a, sigma_in, derive_seed(seed, stream::SHIFT));
        let dist_a_app = a.sub(&a_app)?.cast(Precision::F64).l2_norm();
        let dist_a_ap = a.sub(&a_ap)?.cast(Precision::F64).l2_norm();
        rows.push(ProbeRow {
            seed,
            dist_a_app,
            dist_a_ap,
            ratio: dist_a_app / dist_a_ap,
        });
    }
    Ok(ProbeReport { rows })
}

/// `m`: input element count, `p`: fraction of units zeroed per layer, `n`: depth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CapacityQuery {
    pub m: u64,
    pub p: f64,
    pub n: u32,
}

/// Smallest integer width `>= m * (1/p)^n`.
pub fn relu_capacity(q: CapacityQuery) -> Result<u64> {
    if q.m == 0 {
        return Err(Error::InvalidArgument("m must be >= 1".into()));
    }
    if !(q.p > 0.0 && q.p <= 1.0) {
        return Err(Error::InvalidArgument(format!("p must lie in (0, 1], got {}", q.p)));
    }
    let v = q.m as f64 * (1.0 / q.p).powi(q.n as i32);
    // Snap values within floating round-off of an integer before rounding up.
    let r = v.round();
    let w = if (v - r).abs() <= 1e-9 * v { r } else { v.ceil() };
    if !w.is_finite() || w >= u64::MAX as f64 {
        return Err(Error::InvalidArgument(format!("capacity {v} overflows")));
    }
    Ok(w as u64)
}

/// Pre-activation statistics of one ReLU layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ZeroFraction {
    /// 1-based stage containing the ReLU.
    pub stage: usize,
    pub zeros: usize,
    pub total: usize,
}

impl ZeroFraction {
    pub fn fraction(&self) -> f64 {
        self.zeros as f64 / self.total as f64
    }
}

/// Fraction of pre-activations `<= 0` at every ReLU (in forward order,
/// including those inside residual blocks) over `inputs`.
pub fn estimate_zero_fraction(model: &Model, inputs: &[Tensor]) -> Result<Vec<ZeroFraction>> {
    let mut acc: Vec<ZeroFraction> = Vec::new();
    for a in inputs {
        model.check_input(a)?;
        let mut h = a.cast(model.precision());
        let mut slot = 0;
        for (s, stage) in model.stages().iter().enumerate() {
            h = count_layers(&stage.layers, h, s + 1, &mut slot, &mut acc);
        }
    }
    Ok(acc)
}

fn count_layers(layers: &[Layer], mut h: Tensor, stage: usize, slot: &mut usize, acc: &mut Vec<ZeroFraction>) -> Tensor {
    for layer in layers {
        match layer {
            Layer::Relu => {
                if acc.len() == *slot {
                    acc.push(ZeroFraction { stage, zeros: 0, total: 0 });
                }
                let z = &mut acc[*slot];
                z.zeros += h.data().iter().filter(|&&v| v <= 0.0).count();
                z.total += h.len();
                *slot += 1;
                h = layer.forward(&h);
            }
            Layer::Residual { inner } => {
                let branch = count_layers(inner, h.clone(), stage, slot, acc);
                h = h.add(&branch).expect("residual keeps shape");
            }
            _ => h = layer.forward(&h),
        }
    }
    h
}
