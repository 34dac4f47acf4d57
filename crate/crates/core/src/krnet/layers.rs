//! Layer kernels: complex convolution, CPReLU and the unitary domain
//! transforms, each with its reverse-mode counterpart.

use std::sync::Arc;

use num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::scalar::{gemm, gemm_new, Layout, Real};
use super::tensor::ComplexTensor;
use crate::error::{Error, Result};
use crate::signal::Domain;

/// Parameters of one complex convolution layer.
///
/// Kernels are `out_ch x in_ch x kernel` row-major. The layer computes the
/// zero-padded, length-preserving cross-correlation
/// `y[o][n] = b[o] + sum_{i,t} M[o][i][t] * x[i][n + t - (K - 1) / 2]`
/// with complex `M`, realised as four real products.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayerParams<T> {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub kernel_re: Vec<T>,
    pub kernel_im: Vec<T>,
    pub bias_re: Vec<T>,
    pub bias_im: Vec<T>,
}

impl<T: Real> ConvLayerParams<T> {
    pub fn zeros(in_ch: usize, out_ch: usize, kernel: usize) -> Self {
        let w = in_ch * out_ch * kernel;
        Self {
            in_ch,
            out_ch,
            kernel,
            kernel_re: vec![T::zero(); w],
            kernel_im: vec![T::zero(); w],
            bias_re: vec![T::zero(); out_ch],
            bias_im: vec![T::zero(); out_ch],
        }
    }

    pub fn view(&self) -> ConvRef<'_, T> {
        ConvRef {
            in_ch: self.in_ch,
            out_ch: self.out_ch,
            kernel: self.kernel,
            kr: &self.kernel_re,
            ki: &self.kernel_im,
            br: &self.bias_re,
            bi: &self.bias_im,
        }
    }

    /// Number of real learnable values.
    pub fn param_count(&self) -> usize {
        conv_param_count(self.in_ch, self.out_ch, self.kernel)
    }
}

pub fn conv_param_count(in_ch: usize, out_ch: usize, kernel: usize) -> usize {
    2 * in_ch * out_ch * kernel + 2 * out_ch
}

/// Borrowed convolution parameters, laid out in a flat parameter vector as
/// `kernel_re | kernel_im | bias_re | bias_im`.
#[derive(Debug, Clone, Copy)]
pub struct ConvRef<'a, T> {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub kr: &'a [T],
    pub ki: &'a [T],
    pub br: &'a [T],
    pub bi: &'a [T],
}

impl<'a, T: Real> ConvRef<'a, T> {
    pub fn from_flat(in_ch: usize, out_ch: usize, kernel: usize, flat: &'a [T]) -> Self {
        let w = in_ch * out_ch * kernel;
        assert_eq!(flat.len(), conv_param_count(in_ch, out_ch, kernel));
        let (kr, rest) = flat.split_at(w);
        let (ki, rest) = rest.split_at(w);
        let (br, bi) = rest.split_at(out_ch);
        Self {
            in_ch,
            out_ch,
            kernel,
            kr,
            ki,
            br,
            bi,
        }
    }

    fn check_input(&self, x: &ComplexTensor<T>) -> Result<()> {
        if x.channels() != self.in_ch {
            return Err(Error::Shape(format!(
                "convolution expects {} input channels, got {}",
                self.in_ch,
                x.channels()
            )));
        }
        if self.kernel % 2 == 0 {
            return Err(Error::Shape(format!("kernel size {} must be odd", self.kernel)));
        }
        Ok(())
    }

    /// Real block matrix `[[Mr, -Mi], [Mi, Mr]]` of shape
    /// `2 out_ch x 2 in_ch K`.
    fn block_weights(&self) -> Vec<T> {
        let (ci, co, k) = (self.in_ch, self.out_ch, self.kernel);
        let cols = 2 * ci * k;
        let mut w = vec![T::zero(); 2 * co * cols];
        for o in 0..co {
            for i in 0..ci {
                for t in 0..k {
                    let src = (o * ci + i) * k + t;
                    let (mr, mi) = (self.kr[src], self.ki[src]);
                    let c_re = i * k + t;
                    let c_im = ci * k + c_re;
                    w[o * cols + c_re] = mr;
                    w[o * cols + c_im] = -mi;
                    w[(co + o) * cols + c_re] = mi;
                    w[(co + o) * cols + c_im] = mr;
                }
            }
        }
        w
    }
}

/// Gradient slots for one convolution layer inside a flat gradient vector.
pub struct ConvGrad<'a, T> {
    pub kr: &'a mut [T],
    pub ki: &'a mut [T],
    pub br: &'a mut [T],
    pub bi: &'a mut [T],
}

impl<'a, T: Real> ConvGrad<'a, T> {
    pub fn from_flat(in_ch: usize, out_ch: usize, kernel: usize, flat: &'a mut [T]) -> Self {
        let w = in_ch * out_ch * kernel;
        let (kr, rest) = flat.split_at_mut(w);
        let (ki, rest) = rest.split_at_mut(w);
        let (br, bi) = rest.split_at_mut(out_ch);
        Self { kr, ki, br, bi }
    }
}

/// Patch matrix with rows `(part, in_ch, tap)` and columns `(batch, n)`.
fn im2col<T: Real>(x: &ComplexTensor<T>, kernel: usize) -> Vec<T> {
    let (ci, b, n) = x.shape();
    let pad = (kernel / 2) as isize;
    let mut out = Vec::with_capacity(2 * ci * kernel * b * n);
    for plane in [x.re(), x.im()] {
        for i in 0..ci {
            for t in 0..kernel {
                let shift = t as isize - pad;
                let lo = (-shift).clamp(0, n as isize) as usize;
                let hi = (n as isize - shift).clamp(lo as isize, n as isize) as usize;
                for bb in 0..b {
                    let src = (i * b + bb) * n;
                    out.resize(out.len() + lo, T::zero());
                    if hi > lo {
                        let s0 = (src as isize + lo as isize + shift) as usize;
                        out.extend_from_slice(&plane[s0..s0 + (hi - lo)]);
                    }
                    out.resize(out.len() + (n - hi), T::zero());
                }
            }
        }
    }
    out
}

/// Scatter-add of a patch-matrix gradient back onto the input layout.
fn col2im<T: Real>(cols_grad: &[T], gx: &mut ComplexTensor<T>, kernel: usize) {
    let (ci, b, n) = gx.shape();
    let pad = (kernel / 2) as isize;
    let cols = b * n;
    let (gre, gim) = gx.planes_mut();
    for (part, plane) in [gre, gim].into_iter().enumerate() {
        for i in 0..ci {
            for t in 0..kernel {
                let row = (part * ci + i) * kernel + t;
                let shift = t as isize - pad;
                let lo = (-shift).max(0) as usize;
                let hi = (n as isize - shift).min(n as isize).max(0) as usize;
                for bb in 0..b {
                    let src = row * cols + bb * n;
                    let dst0 = ((i * b + bb) * n) as isize + shift;
                    for m in lo..hi {
                        let d = (dst0 + m as isize) as usize;
                        plane[d] = plane[d] + cols_grad[src + m];
                    }
                }
            }
        }
    }
}

pub(crate) fn conv_forward_ref<T: Real>(x: &ComplexTensor<T>, p: ConvRef<'_, T>) -> Result<ComplexTensor<T>> {
    p.check_input(x)?;
    let (_, b, n) = x.shape();
    let cols = b * n;
    let patches = im2col(x, p.kernel);
    let weights = p.block_weights();
    let mut y = ComplexTensor::zeros(p.out_ch, b, n);
    {
        let raw = y.raw_mut();
        for o in 0..p.out_ch {
            raw[o * cols..(o + 1) * cols].iter_mut().for_each(|v| *v = p.br[o]);
            let im_row = (p.out_ch + o) * cols;
            raw[im_row..im_row + cols].iter_mut().for_each(|v| *v = p.bi[o]);
        }
        gemm(
            2 * p.out_ch,
            2 * p.in_ch * p.kernel,
            cols,
            T::one(),
            &weights,
            Layout::Normal,
            &patches,
            Layout::Normal,
            T::one(),
            raw,
        );
    }
    Ok(y)
}

/// Reverse of [`conv_forward_ref`]: accumulates parameter gradients into
/// `grad` and returns the input cotangent.
pub(crate) fn conv_backward_ref<T: Real>(
    x: &ComplexTensor<T>,
    p: ConvRef<'_, T>,
    gy: &ComplexTensor<T>,
    grad: ConvGrad<'_, T>,
) -> ComplexTensor<T> {
    let (ci, b, n) = x.shape();
    let (co, k) = (p.out_ch, p.kernel);
    let cols = b * n;
    let wcols = 2 * ci * k;
    let patches = im2col(x, k);
    let g = gy.raw();

    let gw = gemm_new(2 * co, cols, wcols, g, Layout::Normal, &patches, Layout::Transposed);
    for o in 0..co {
        for i in 0..ci {
            for t in 0..k {
                let dst = (o * ci + i) * k + t;
                let c_re = i * k + t;
                let c_im = ci * k + c_re;
                let rr = gw[o * wcols + c_re];
                let ri = gw[o * wcols + c_im];
                let ir = gw[(co + o) * wcols + c_re];
                let ii = gw[(co + o) * wcols + c_im];
                grad.kr[dst] = grad.kr[dst] + rr + ii;
                grad.ki[dst] = grad.ki[dst] + ir - ri;
            }
        }
        let sr: T = g[o * cols..(o + 1) * cols].iter().copied().sum();
        let si: T = g[(co + o) * cols..(co + o + 1) * cols].iter().copied().sum();
        grad.br[o] = grad.br[o] + sr;
        grad.bi[o] = grad.bi[o] + si;
    }

    let weights = p.block_weights();
    drop(patches);
    let gpatch = gemm_new(wcols, 2 * co, cols, &weights, Layout::Transposed, g, Layout::Normal);
    let mut gx = ComplexTensor::zeros(ci, b, n);
    col2im(&gpatch, &mut gx, k);
    gx
}

/// Complex-valued convolution of `x` with `p`.
pub fn cv_conv<T: Real>(x: &ComplexTensor<T>, p: &ConvLayerParams<T>) -> Result<ComplexTensor<T>> {
    conv_forward_ref(x, p.view())
}

/// Learned negative-side slopes of a CPReLU.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CPReLUParams<T> {
    pub eta_r: T,
    pub eta_i: T,
}

fn prelu_plane<T: Real>(v: &mut [T], eta: T) {
    for a in v {
        if *a < T::zero() {
            *a = *a * eta;
        }
    }
}

/// `max(0, x_R) + eta_R min(0, x_R) + j (max(0, x_I) + eta_I min(0, x_I))`.
pub fn cprelu<T: Real>(x: &ComplexTensor<T>, p: CPReLUParams<T>) -> ComplexTensor<T> {
    let mut y = x.clone();
    let (re, im) = y.planes_mut();
    prelu_plane(re, p.eta_r);
    prelu_plane(im, p.eta_i);
    y
}

/// Reverse of [`cprelu`]. Slope 1 is used on `x >= 0`, `eta` below.
/// Returns `(input cotangent, d eta_R, d eta_I)`.
pub(crate) fn cprelu_backward<T: Real>(
    x: &ComplexTensor<T>,
    p: CPReLUParams<T>,
    gy: &ComplexTensor<T>,
) -> (ComplexTensor<T>, T, T) {
    let mut gx = gy.clone();
    let mut deta = [T::zero(); 2];
    let (gre, gim) = gx.planes_mut();
    for (k, (gplane, xplane, eta)) in [(gre, x.re(), p.eta_r), (gim, x.im(), p.eta_i)]
        .into_iter()
        .enumerate()
    {
        let mut acc = T::zero();
        for (g, &xv) in gplane.iter_mut().zip(xplane) {
            if xv < T::zero() {
                acc = acc + *g * xv;
                *g = *g * eta;
            }
        }
        deta[k] = acc;
    }
    (gx, deta[0], deta[1])
}

/// Unitary FFT / IFFT along the length axis of every channel, with the
/// same sign convention as [`crate::signal::OrthoFft`].
#[derive(Clone)]
pub struct SpectralPlans<T: Real> {
    forward: Arc<dyn Fft<T>>,
    inverse: Arc<dyn Fft<T>>,
    scale: T,
}

impl<T: Real> SpectralPlans<T> {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            forward: planner.plan_fft_inverse(n),
            inverse: planner.plan_fft_forward(n),
            scale: T::one() / T::lit(n as f64).sqrt(),
        }
    }

    pub fn len(&self) -> usize {
        self.forward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Move every row into `target`: FFT for `R`, IFFT for `K`.
    pub fn transform(&self, x: &mut ComplexTensor<T>, target: Domain) {
        let plan = match target {
            Domain::R => &self.forward,
            Domain::K => &self.inverse,
        };
        let n = x.len();
        debug_assert_eq!(n, self.len());
        let rows = x.channels() * x.batch();
        let mut buf = vec![Complex::new(T::zero(), T::zero()); n];
        let mut scratch = vec![Complex::new(T::zero(), T::zero()); plan.get_inplace_scratch_len()];
        let (re, im) = x.planes_mut();
        for r in 0..rows {
            let s = r * n;
            for (m, z) in buf.iter_mut().enumerate() {
                *z = Complex::new(re[s + m], im[s + m]);
            }
            plan.process_with_scratch(&mut buf, &mut scratch);
            for (m, z) in buf.iter().enumerate() {
                re[s + m] = z.re * self.scale;
                im[s + m] = z.im * self.scale;
            }
        }
    }

    /// Adjoint of [`Self::transform`] toward `target`, which for a unitary
    /// map is the transform toward the other domain.
    pub fn transform_adjoint(&self, g: &mut ComplexTensor<T>, target: Domain) {
        let back = match target {
            Domain::R => Domain::K,
            Domain::K => Domain::R,
        };
        self.transform(g, back);
    }
}

impl<T: Real> std::fmt::Debug for SpectralPlans<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectralPlans").field("len", &self.len()).finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_tensor(rng: &mut impl Rng, c: usize, b: usize, n: usize) -> ComplexTensor<f64> {
        let re: Vec<f64> = (0..c * b * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let im: Vec<f64> = (0..c * b * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        ComplexTensor::from_planes(c, b, n, &re, &im).unwrap()
    }

    fn random_conv(rng: &mut impl Rng, ci: usize, co: usize, k: usize) -> ConvLayerParams<f64> {
        let mut p = ConvLayerParams::zeros(ci, co, k);
        for v in p
            .kernel_re
            .iter_mut()
            .chain(p.kernel_im.iter_mut())
            .chain(p.bias_re.iter_mut())
            .chain(p.bias_im.iter_mut())
        {
            *v = rng.gen_range(-1.0..1.0);
        }
        p
    }

    /// Triple-loop complex cross-correlation with zero padding.
    fn naive_conv(x: &ComplexTensor<f64>, p: &ConvLayerParams<f64>) -> Vec<Complex64> {
        let (ci, b, n) = x.shape();
        let pad = (p.kernel / 2) as isize;
        let mut out = vec![Complex64::new(0.0, 0.0); p.out_ch * b * n];
        for o in 0..p.out_ch {
            for bb in 0..b {
                for m in 0..n {
                    let mut acc = Complex64::new(p.bias_re[o], p.bias_im[o]);
                    for i in 0..ci {
                        for t in 0..p.kernel {
                            let src = m as isize + t as isize - pad;
                            if src < 0 || src >= n as isize {
                                continue;
                            }
                            let w = (o * ci + i) * p.kernel + t;
                            let kern = Complex64::new(p.kernel_re[w], p.kernel_im[w]);
                            let xv = x.get(i, bb, src as usize);
                            acc += kern * Complex64::new(xv.re, xv.im);
                        }
                    }
                    out[(o * b + bb) * n + m] = acc;
                }
            }
        }
        out
    }

    #[test]
    fn delta_kernel_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_tensor(&mut rng, 1, 2, 9);
        let mut p = ConvLayerParams::zeros(1, 1, 5);
        p.kernel_re[2] = 1.0;
        assert_eq!(cv_conv(&x, &p).unwrap(), x);
        let mut pj = ConvLayerParams::zeros(1, 1, 5);
        pj.kernel_im[2] = 1.0;
        let y = cv_conv(&x, &pj).unwrap();
        for (a, b) in y.re().iter().zip(x.im()) {
            assert_eq!(*a, -b);
        }
        assert_eq!(y.im(), x.re());
    }

    #[test]
    fn matches_naive_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random_tensor(&mut rng, 2, 1, 16);
        let p = random_conv(&mut rng, 2, 3, 5);
        let y = cv_conv(&x, &p).unwrap();
        let expect = naive_conv(&x, &p);
        for o in 0..3 {
            for m in 0..16 {
                let z = y.get(o, 0, m);
                assert!((Complex64::new(z.re, z.im) - expect[o * 16 + m]).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn kernel_longer_than_signal() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in 1..4 {
            let x = random_tensor(&mut rng, 2, 2, n);
            let p = random_conv(&mut rng, 2, 1, 7);
            let y = cv_conv(&x, &p).unwrap();
            for bb in 0..2 {
                let expect = naive_conv(&x.batch_slice(bb, 1), &p);
                for m in 0..n {
                    let z = y.get(0, bb, m);
                    assert!((Complex64::new(z.re, z.im) - expect[m]).norm() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn shape_mismatch() {
        let x = ComplexTensor::<f64>::zeros(2, 1, 8);
        let p = ConvLayerParams::<f64>::zeros(3, 1, 3);
        assert!(matches!(cv_conv(&x, &p), Err(Error::Shape(_))));
    }

    #[test]
    fn conv_is_linear_in_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut p = random_conv(&mut rng, 2, 2, 3);
        p.bias_re.iter_mut().for_each(|v| *v = 0.0);
        p.bias_im.iter_mut().for_each(|v| *v = 0.0);
        let a = random_tensor(&mut rng, 2, 3, 11);
        let b = random_tensor(&mut rng, 2, 3, 11);
        let mut ab = a.clone();
        ab.add_assign(&b);
        let mut sum = cv_conv(&a, &p).unwrap();
        sum.add_assign(&cv_conv(&b, &p).unwrap());
        let joint = cv_conv(&ab, &p).unwrap();
        for (u, v) in sum.raw().iter().zip(joint.raw()) {
            assert!((u - v).abs() < 1e-10);
        }
    }

    #[test]
    fn cprelu_cases() {
        let x = ComplexTensor::<f64>::from_planes(1, 1, 3, &[-1.0, 2.0, 0.0], &[-2.0, 3.0, -0.5]).unwrap();
        let y = cprelu(&x, CPReLUParams { eta_r: 0.1, eta_i: 0.2 });
        assert!((y.get(0, 0, 0).re + 0.1).abs() < 1e-15);
        assert!((y.get(0, 0, 0).im + 0.4).abs() < 1e-15);
        assert_eq!(y.get(0, 0, 1), x.get(0, 0, 1));
        assert_eq!(cprelu(&x, CPReLUParams { eta_r: 1.0, eta_i: 1.0 }), x);
    }

    #[test]
    fn transform_round_trip_and_adjoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = random_tensor(&mut rng, 3, 2, 12);
        let plans = SpectralPlans::<f64>::new(12);
        let mut y = x.clone();
        plans.transform(&mut y, Domain::R);
        assert!((y.sum_sq() - x.sum_sq()).abs() < 1e-10);
        plans.transform(&mut y, Domain::K);
        for (a, b) in y.raw().iter().zip(x.raw()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
