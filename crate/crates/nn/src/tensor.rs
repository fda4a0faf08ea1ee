//! Dense row-major tensors. Activations use NCHW order. A tensor tagged
//! `Fp16` stores values widened to `f32`, but every element is exactly
//! representable in IEEE-754 binary16; operations that produce `Fp16`
//! tensors accumulate in `f32` and round each output element once.

use half::f16;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::{shape_err, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Precision {
    Fp32,
    Fp16,
}

impl Precision {
    /// Round a value onto the representable grid of this precision.
    #[inline]
    pub fn quantize(self, v: f32) -> f32 {
        match self {
            Precision::Fp32 => v,
            Precision::Fp16 => f16::from_f32(v).to_f32(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Tensor {
    dims: Vec<usize>,
    data: Vec<f32>,
    precision: Precision,
}

impl Tensor {
    pub fn new(dims: &[usize], data: Vec<f32>) -> Result<Self> {
        let n: usize = dims.iter().product();
        if n != data.len() {
            return shape_err(format!(
                "dims {:?} imply {} elements, got {}",
                dims,
                n,
                data.len()
            ));
        }
        Ok(Tensor {
            dims: dims.to_vec(),
            data,
            precision: Precision::Fp32,
        })
    }

    pub fn zeros(dims: &[usize]) -> Self {
        let n: usize = dims.iter().product();
        Tensor {
            dims: dims.to_vec(),
            data: vec![0.0; n],
            precision: Precision::Fp32,
        }
    }

    pub fn zeros_like(other: &Tensor) -> Self {
        let mut t = Tensor::zeros(other.dims());
        t.precision = other.precision;
        t
    }

    pub fn filled(dims: &[usize], v: f32) -> Self {
        let n: usize = dims.iter().product();
        Tensor {
            dims: dims.to_vec(),
            data: vec![v; n],
            precision: Precision::Fp32,
        }
    }

    /// Gaussian init with the given standard deviation (Box-Muller over the
    /// seeded stream, so draws are reproducible across platforms).
    pub fn randn(dims: &[usize], std: f32, rng: &mut ChaCha8Rng) -> Self {
        let n: usize = dims.iter().product();
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            data.push(sample_normal(rng) as f32 * std);
        }
        Tensor {
            dims: dims.to_vec(),
            data,
            precision: Precision::Fp32,
        }
    }

    #[inline]
    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    #[inline]
    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    #[inline]
    pub fn precision(&self) -> Precision {
        self.precision
    }

    pub fn with_precision(mut self, p: Precision) -> Self {
        self.precision = p;
        self
    }

    /// Reinterpret the element buffer under new extents with the same count.
    pub fn reshape(&self, dims: &[usize]) -> Result<Tensor> {
        let n: usize = dims.iter().product();
        if n != self.data.len() {
            return shape_err(format!("cannot reshape {:?} to {:?}", self.dims, dims));
        }
        Ok(Tensor {
            dims: dims.to_vec(),
            data: self.data.clone(),
            precision: self.precision,
        })
    }

    pub fn rank4(&self) -> Result<(usize, usize, usize, usize)> {
        if self.dims.len() != 4 {
            return shape_err(format!("expected rank-4 tensor, got {:?}", self.dims));
        }
        Ok((self.dims[0], self.dims[1], self.dims[2], self.dims[3]))
    }

    pub fn rank2(&self) -> Result<(usize, usize)> {
        if self.dims.len() != 2 {
            return shape_err(format!("expected rank-2 tensor, got {:?}", self.dims));
        }
        Ok((self.dims[0], self.dims[1]))
    }

    #[inline]
    pub fn offset4(&self, n: usize, c: usize, y: usize, x: usize) -> usize {
        ((n * self.dims[1] + c) * self.dims[2] + y) * self.dims[3] + x
    }

    #[inline]
    pub fn at4(&self, n: usize, c: usize, y: usize, x: usize) -> f32 {
        self.data[self.offset4(n, c, y, x)]
    }

    #[inline]
    pub fn set4(&mut self, n: usize, c: usize, y: usize, x: usize, v: f32) {
        let i = self.offset4(n, c, y, x);
        self.data[i] = v;
    }

    /// Cast between precisions. Downcasting rounds every element to the
    /// nearest binary16 value (ties to even); upcasting is exact.
    pub fn cast(&self, target: Precision) -> Tensor {
        let data = match target {
            Precision::Fp32 => self.data.clone(),
            Precision::Fp16 => self.data.iter().map(|&v| target.quantize(v)).collect(),
        };
        Tensor {
            dims: self.dims.clone(),
            data,
            precision: target,
        }
    }

    pub fn is_all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f32 {
        debug_assert_eq!(self.dims, other.dims);
        self.data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f32::max)
    }

    pub fn bitwise_eq(&self, other: &Tensor) -> bool {
        self.dims == other.dims
            && self
                .data
                .iter()
                .zip(other.data.iter())
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }

    pub fn scale_in_place(&mut self, s: f32) {
        for v in &mut self.data {
            *v *= s;
        }
    }

    pub fn add_assign(&mut self, other: &Tensor) -> Result<()> {
        if self.dims != other.dims {
            return shape_err(format!("add_assign {:?} vs {:?}", self.dims, other.dims));
        }
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += b;
        }
        Ok(())
    }
}

pub(crate) fn sample_normal(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller; u1 shifted into (0, 1] so the log never sees zero.
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Precision cast as a free function mirroring `Tensor::cast`.
pub fn precision_cast(t: &Tensor, target: Precision) -> Tensor {
    t.cast(target)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn element_count_must_match_dims() {
        assert!(Tensor::new(&[2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::new(&[2, 3], vec![0.0; 6]).is_ok());
    }

    #[test]
    fn fp16_cast_dyadic_value_is_exact() {
        let t = Tensor::new(&[1], vec![1.0]).unwrap();
        let c = t.cast(Precision::Fp16);
        assert_eq!(c.data()[0], 1.0);
    }

    #[test]
    fn fp16_cast_flushes_below_subnormal_range() {
        let t = Tensor::new(&[1], vec![1e-8]).unwrap();
        let c = t.cast(Precision::Fp16);
        assert_eq!(c.data()[0], 0.0);
    }

    #[test]
    fn fp16_cast_overflows_to_infinity() {
        let t = Tensor::new(&[2], vec![65536.0, -65536.0]).unwrap();
        let c = t.cast(Precision::Fp16);
        assert_eq!(c.data()[0], f32::INFINITY);
        assert_eq!(c.data()[1], f32::NEG_INFINITY);
        assert!(!c.is_all_finite());
    }

    #[test]
    fn fp16_max_finite_round_trips() {
        let t = Tensor::new(&[1], vec![65504.0]).unwrap();
        let c = t.cast(Precision::Fp16);
        assert_eq!(c.data()[0], 65504.0);
    }

    #[test]
    fn randn_is_reproducible() {
        let mut a = ChaCha8Rng::seed_from_u64(7);
        let mut b = ChaCha8Rng::seed_from_u64(7);
        let ta = Tensor::randn(&[3, 3], 0.5, &mut a);
        let tb = Tensor::randn(&[3, 3], 0.5, &mut b);
        assert!(ta.bitwise_eq(&tb));
    }

    #[test]
    fn randn_moments_are_sane() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let t = Tensor::randn(&[10_000], 1.0, &mut rng);
        let mean: f32 = t.data().iter().sum::<f32>() / t.len() as f32;
        let var: f32 = t.data().iter().map(|v| (v - mean) * (v - mean)).sum::<f32>() / t.len() as f32;
        assert!(mean.abs() < 0.05, "mean {mean}");
        assert!((var - 1.0).abs() < 0.05, "var {var}");
    }
}
