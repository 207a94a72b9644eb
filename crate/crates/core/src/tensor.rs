//! Dense row-major tensors with an explicit working precision.
//!
//! Values are stored as `f64`. A tensor tagged [`Precision::F32`] keeps every
//! stored value representable in single precision: results are rounded to
//! `f32` after each operation and reductions accumulate in `f32`.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Precision {
    F32,
    F64,
}

impl Precision {
    #[inline]
    pub fn round(self, x: f64) -> f64 {
        match self {
            Precision::F32 => x as f32 as f64,
            Precision::F64 => x,
        }
    }

    pub fn bits(self) -> u32 {
        match self {
            Precision::F32 => 32,
            Precision::F64 => 64,
        }
    }

    pub fn from_bits(bits: u32) -> Result<Self> {
        match bits {
            32 => Ok(Precision::F32),
            64 => Ok(Precision::F64),
            other => Err(Error::InvalidArgument(format!(
                "precision must be 32 or 64, got {other}"
            ))),
        }
    }

    /// The lower of two precisions; binary operations produce this.
    pub fn join(self, other: Precision) -> Precision {
        self.min(other)
    }

    /// Unit roundoff of the precision.
    pub fn epsilon(self) -> f64 {
        match self {
            Precision::F32 => f32::EPSILON as f64,
            Precision::F64 => f64::EPSILON,
        }
    }
}

impl std::str::FromStr for Precision {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bits = s
            .parse::<u32>()
            .map_err(|_| Error::InvalidArgument(format!("precision must be 32 or 64, got `{s}`")))?;
        Precision::from_bits(bits)
    }
}

impl fmt::Display for Precision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.bits())
    }
}

/// Dot product accumulated at the given precision.
#[inline]
pub(crate) fn dot(p: Precision, a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    match p {
        Precision::F64 => a.iter().zip(b).map(|(x, y)| x * y).sum(),
        Precision::F32 => a
            .iter()
            .zip(b)
            .fold(0f32, |acc, (x, y)| acc + (*x as f32) * (*y as f32)) as f64,
    }
}

#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    precision: Precision,
    data: Vec<f64>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let preview: Vec<f64> = self.data.iter().take(8).copied().collect();
        f.debug_struct("Tensor")
            .field("shape", &self.shape)
            .field("precision", &self.precision)
            .field("data", &preview)
            .finish()
    }
}

fn check_shape(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() || shape.iter().any(|&d| d == 0) {
        return Err(Error::Shape(format!(
            "dimensions must be positive and non-empty, got {shape:?}"
        )));
    }
    Ok(shape.iter().product())
}

impl Tensor {
    /// 64-bit tensor from row-major data. Rejects non-finite values.
    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let len = check_shape(shape)?;
        if data.len() != len {
            return Err(Error::Shape(format!(
                "shape {shape:?} needs {len} values, got {}",
                data.len()
            )));
        }
        if let Some(bad) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite value at flat index {bad}"
            )));
        }
        Ok(Self {
            shape: shape.to_vec(),
            precision: Precision::F64,
            data,
        })
    }

    pub(crate) fn from_raw(shape: Vec<usize>, precision: Precision, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self {
            shape,
            precision,
            data,
        }
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        let len = check_shape(shape).expect("valid shape");
        Self::from_raw(shape.to_vec(), Precision::F64, vec![value; len])
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn eye(n: usize) -> Self {
        let mut t = Self::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn zeros_like(&self) -> Self {
        Self::from_raw(self.shape.clone(), self.precision, vec![0.0; self.len()])
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn precision(&self) -> Precision {
        self.precision
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Mutable access to the raw values. The caller is responsible for keeping
    /// them representable at the tensor's precision.
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Converts to `precision`. Narrowing rounds every value to `f32`.
    pub fn cast(&self, precision: Precision) -> Tensor {
        let data = self.data.iter().map(|&v| precision.round(v)).collect();
        Self::from_raw(self.shape.clone(), precision, data)
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        let len = check_shape(shape)?;
        if len != self.len() {
            return Err(Error::Shape(format!(
                "cannot reshape {:?} into {shape:?}",
                self.shape
            )));
        }
        Ok(Self::from_raw(shape.to_vec(), self.precision, self.data.clone()))
    }

    pub fn flatten(&self) -> Tensor {
        Self::from_raw(vec![self.len()], self.precision, self.data.clone())
    }

    fn zip_with(&self, other: &Tensor, what: &str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        if self.shape != other.shape {
            return Err(Error::Shape(format!(
                "{what}: {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        let p = self.precision.join(other.precision);
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| p.round(f(a, b)))
            .collect();
        Ok(Self::from_raw(self.shape.clone(), p, data))
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, "mul", |a, b| a * b)
    }

    pub fn scale(&self, alpha: f64) -> Tensor {
        self.map(|v| v * alpha)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        let p = self.precision;
        let data = self.data.iter().map(|&v| p.round(f(v))).collect();
        Self::from_raw(self.shape.clone(), p, data)
    }

    /// `self += alpha * x`, in place.
    pub fn axpy(&mut self, alpha: f64, x: &Tensor) -> Result<()> {
        if self.shape != x.shape {
            return Err(Error::Shape(format!(
                "axpy: {:?} vs {:?}",
                self.shape, x.shape
            )));
        }
        let p = self.precision;
        for (a, &b) in self.data.iter_mut().zip(&x.data) {
            *a = p.round(*a + alpha * b);
        }
        Ok(())
    }

    pub fn clamp(&self, lo: f64, hi: f64) -> Tensor {
        self.map(|v| v.clamp(lo, hi))
    }

    pub fn l1_sum(&self) -> f64 {
        match self.precision {
            Precision::F64 => self.data.iter().map(|v| v.abs()).sum(),
            Precision::F32 => self.data.iter().fold(0f32, |a, v| a + v.abs() as f32) as f64,
        }
    }

    pub fn l2_norm(&self) -> f64 {
        dot(self.precision, &self.data, &self.data).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.len() as f64
    }

    /// `[m, k] x [k, n] -> [m, n]`.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        if self.rank() != 2 || other.rank() != 2 || self.shape[1] != other.shape[0] {
            return Err(Error::Shape(format!(
                "matmul: {:?} x {:?}",
                self.shape, other.shape
            )));
        }
        let (m, k, n) = (self.shape[0], self.shape[1], other.shape[1]);
        let p = self.precision.join(other.precision);
        let other_t = other.transpose()?;
        let mut data = Vec::with_capacity(m * n);
        for i in 0..m {
            let row = &self.data[i * k..(i + 1) * k];
            for j in 0..n {
                data.push(p.round(dot(p, row, &other_t.data[j * k..(j + 1) * k])));
            }
        }
        Ok(Self::from_raw(vec![m, n], p, data))
    }

    pub fn transpose(&self) -> Result<Tensor> {
        if self.rank() != 2 {
            return Err(Error::Shape(format!("transpose of rank {}", self.rank())));
        }
        let (m, n) = (self.shape[0], self.shape[1]);
        let mut data = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                data[j * m + i] = self.data[i * n + j];
            }
        }
        Ok(Self::from_raw(vec![n, m], self.precision, data))
    }

    /// Matrix-vector product of a `[m, k]` matrix with any tensor of `k` elements.
    pub fn matvec(&self, x: &Tensor) -> Result<Tensor> {
        if self.rank() != 2 || self.shape[1] != x.len() {
            return Err(Error::Shape(format!(
                "matvec: {:?} x {} elements",
                self.shape,
                x.len()
            )));
        }
        let k = self.shape[1];
        let p = self.precision.join(x.precision);
        let data = self
            .data
            .chunks_exact(k)
            .map(|row| p.round(dot(p, row, &x.data)))
            .collect();
        Ok(Self::from_raw(vec![self.shape[0]], p, data))
    }

    /// Convolves each channel of a `[C, H, W]` image with [`gaussian_kernel_3x3`],
    /// replicating edge pixels.
    pub fn blur(&self, sigma: f64) -> Result<Tensor> {
        if self.rank() != 3 {
            return Err(Error::Shape(format!(
                "blur expects [C, H, W], got {:?}",
                self.shape
            )));
        }
        let kernel = gaussian_kernel_3x3(sigma)?;
        let k = kernel.data();
        let (c, h, w) = (self.shape[0], self.shape[1], self.shape[2]);
        let p = self.precision;
        let mut out = vec![0.0; self.len()];
        for ch in 0..c {
            let plane = &self.data[ch * h * w..(ch + 1) * h * w];
            for y in 0..h {
                for x in 0..w {
                    let mut acc = 0.0;
                    for dy in 0..3 {
                        let sy = (y + dy).saturating_sub(1).min(h - 1);
                        for dx in 0..3 {
                            let sx = (x + dx).saturating_sub(1).min(w - 1);
                            acc += k[dy * 3 + dx] * plane[sy * w + sx];
                        }
                    }
                    out[ch * h * w + y * w + x] = p.round(acc);
                }
            }
        }
        Ok(Self::from_raw(self.shape.clone(), p, out))
    }

    /// Bilinear resampling of a `[C, H, W]` image to `[C, out_h, out_w]` using
    /// half-pixel centres (source coordinate `(i + 0.5) * H / out_h - 0.5`,
    /// clamped to the image).
    pub fn bilinear_downsample(&self, out_h: usize, out_w: usize) -> Result<Tensor> {
        if self.rank() != 3 || out_h == 0 || out_w == 0 {
            return Err(Error::Shape(format!(
                "bilinear_downsample expects [C, H, W] and a positive target, got {:?} -> {out_h}x{out_w}",
                self.shape
            )));
        }
        let (c, h, w) = (self.shape[0], self.shape[1], self.shape[2]);
        let coords = |i: usize, src: usize, dst: usize| -> (usize, usize, f64) {
            let s = ((i as f64 + 0.5) * src as f64 / dst as f64 - 0.5).clamp(0.0, (src - 1) as f64);
            let lo = s.floor() as usize;
            let hi = (lo + 1).min(src - 1);
            (lo, hi, s - lo as f64)
        };
        let p = self.precision;
        let mut out = Vec::with_capacity(c * out_h * out_w);
        for ch in 0..c {
            let plane = &self.data[ch * h * w..(ch + 1) * h * w];
            for i in 0..out_h {
                let (y0, y1, fy) = coords(i, h, out_h);
                for j in 0..out_w {
                    let (x0, x1, fx) = coords(j, w, out_w);
                    let top = plane[y0 * w + x0] * (1.0 - fx) + plane[y0 * w + x1] * fx;
                    let bottom = plane[y1 * w + x0] * (1.0 - fx) + plane[y1 * w + x1] * fx;
                    out.push(p.round(top * (1.0 - fy) + bottom * fy));
                }
            }
        }
        Ok(Self::from_raw(vec![c, out_h, out_w], p, out))
    }
}

/// 3x3 Gaussian kernel on offsets `{-1, 0, 1}^2`, normalized to sum to one.
pub fn gaussian_kernel_3x3(sigma: f64) -> Result<Tensor> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "kernel sigma must be positive, got {sigma}"
        )));
    }
    let mut w = Vec::with_capacity(9);
    for dy in -1i32..=1 {
        for dx in -1i32..=1 {
            w.push((-((dx * dx + dy * dy) as f64) / (2.0 * sigma * sigma)).exp());
        }
    }
    let total: f64 = w.iter().sum();
    for v in &mut w {
        *v /= total;
    }
    Tensor::from_vec(&[3, 3], w)
}
