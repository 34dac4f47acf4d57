use num_complex::{Complex, Complex64};

use super::scalar::Real;
use crate::error::{Error, Result};

/// Split real/imaginary activations of shape `channels x batch x len`.
///
/// Storage is one buffer holding the real plane followed by the imaginary
/// plane; inside a plane the index of `(c, b, n)` is `(c * batch + b) * len + n`.
/// A row of a plane (one channel across the whole batch) is therefore
/// contiguous, which is what the GEMM-based convolution consumes.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexTensor<T> {
    channels: usize,
    batch: usize,
    len: usize,
    data: Vec<T>,
}

impl<T: Real> ComplexTensor<T> {
    pub fn zeros(channels: usize, batch: usize, len: usize) -> Self {
        Self {
            channels,
            batch,
            len,
            data: vec![T::zero(); 2 * channels * batch * len],
        }
    }

    pub fn from_planes(channels: usize, batch: usize, len: usize, re: &[T], im: &[T]) -> Result<Self> {
        let plane = channels * batch * len;
        if re.len() != plane || im.len() != plane {
            return Err(Error::Shape(format!(
                "planes of length {} and {} do not match {channels}x{batch}x{len}",
                re.len(),
                im.len()
            )));
        }
        let mut data = Vec::with_capacity(2 * plane);
        data.extend_from_slice(re);
        data.extend_from_slice(im);
        Ok(Self {
            channels,
            batch,
            len,
            data,
        })
    }

    /// Single-channel batch built from equally long complex vectors.
    pub fn from_signals<S: AsRef<[Complex64]>>(signals: &[S]) -> Result<Self> {
        let batch = signals.len();
        let len = signals.first().map(|s| s.as_ref().len()).unwrap_or(0);
        let mut t = Self::zeros(1, batch, len);
        for (b, s) in signals.iter().enumerate() {
            let s = s.as_ref();
            if s.len() != len {
                return Err(Error::Shape("signals in a batch must share one length".into()));
            }
            for (n, z) in s.iter().enumerate() {
                t.set(0, b, n, Complex::new(T::lit(z.re), T::lit(z.im)));
            }
        }
        Ok(t)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.batch, self.len)
    }

    pub(crate) fn plane_len(&self) -> usize {
        self.channels * self.batch * self.len
    }

    pub fn re(&self) -> &[T] {
        &self.data[..self.plane_len()]
    }

    pub fn im(&self) -> &[T] {
        &self.data[self.plane_len()..]
    }

    pub fn planes_mut(&mut self) -> (&mut [T], &mut [T]) {
        let p = self.plane_len();
        self.data.split_at_mut(p)
    }

    /// Both planes stacked: a `2 * channels` by `batch * len` row-major matrix.
    pub(crate) fn raw(&self) -> &[T] {
        &self.data
    }

    pub(crate) fn raw_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    fn offset(&self, c: usize, b: usize, n: usize) -> usize {
        (c * self.batch + b) * self.len + n
    }

    pub fn get(&self, c: usize, b: usize, n: usize) -> Complex<T> {
        let i = self.offset(c, b, n);
        Complex::new(self.data[i], self.data[self.plane_len() + i])
    }

    pub fn set(&mut self, c: usize, b: usize, n: usize, v: Complex<T>) {
        let i = self.offset(c, b, n);
        let p = self.plane_len();
        self.data[i] = v.re;
        self.data[p + i] = v.im;
    }

    /// One channel of one batch item as a complex vector.
    pub fn signal(&self, c: usize, b: usize) -> Vec<Complex64> {
        (0..self.len)
            .map(|n| {
                let z = self.get(c, b, n);
                Complex64::new(z.re.as_f64(), z.im.as_f64())
            })
            .collect()
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.shape() == other.shape()
    }

    pub fn add_assign(&mut self, other: &Self) {
        debug_assert!(self.same_shape(other));
        self.data
            .iter_mut()
            .zip(&other.data)
            .for_each(|(a, &b)| *a = *a + b);
    }

    pub fn scale(&mut self, s: T) {
        self.data.iter_mut().for_each(|a| *a = *a * s);
    }

    pub fn sum_sq(&self) -> T {
        self.data.iter().map(|&a| a * a).sum()
    }

    pub fn cast<U: Real>(&self) -> ComplexTensor<U> {
        ComplexTensor {
            channels: self.channels,
            batch: self.batch,
            len: self.len,
            data: self.data.iter().map(|&v| U::lit(v.as_f64())).collect(),
        }
    }

    /// Rows `b0..b0 + count` of the batch, all channels.
    pub fn batch_slice(&self, b0: usize, count: usize) -> Self {
        let mut out = Self::zeros(self.channels, count, self.len);
        let (ore, oim) = out.planes_mut();
        for c in 0..self.channels {
            let src = self.offset(c, b0, 0);
            let dst = c * count * self.len;
            let n = count * self.len;
            ore[dst..dst + n].copy_from_slice(&self.re()[src..src + n]);
            oim[dst..dst + n].copy_from_slice(&self.im()[src..src + n]);
        }
        out
    }
}
