use std::fmt::Debug;
use std::iter::Sum;

use num_traits::Float;
use rustfft::FftNum;

/// Floating-point element type of network parameters and activations.
///
/// Training runs in `f32`; gradient checks run in `f64`.
pub trait Real: Float + FftNum + Default + Sum + Debug + Send + Sync + 'static {
    /// `c = alpha * a * b + beta * c` on strided row/column-major views.
    ///
    /// # Safety
    /// The strides must describe views that lie inside the given slices.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );

    fn lit(v: f64) -> Self {
        Self::from(v).expect("literal representable in the float type")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("float converts to f64")
    }
}

macro_rules! impl_real {
    ($t:ty, $gemm:path) => {
        impl Real for $t {
            unsafe fn gemm_raw(
                m: usize,
                k: usize,
                n: usize,
                alpha: Self,
                a: *const Self,
                rsa: isize,
                csa: isize,
                b: *const Self,
                rsb: isize,
                csb: isize,
                beta: Self,
                c: *mut Self,
                rsc: isize,
                csc: isize,
            ) {
                $gemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
            }
        }
    };
}

impl_real!(f32, matrixmultiply::sgemm);
impl_real!(f64, matrixmultiply::dgemm);

/// Matrix operand layout for [`gemm`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Layout {
    /// Row-major `rows x cols` buffer used as is.
    Normal,
    /// Row-major `cols x rows` buffer used transposed.
    Transposed,
}

fn strides(rows: usize, cols: usize, layout: Layout) -> (isize, isize) {
    match layout {
        Layout::Normal => (cols as isize, 1),
        Layout::Transposed => (1, rows as isize),
    }
}

/// `c (m x n) = alpha * op(a) (m x k) * op(b) (k x n) + beta * c`, all
/// buffers row-major and densely packed.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm<T: Real>(
    m: usize,
    k: usize,
    n: usize,
    alpha: T,
    a: &[T],
    a_layout: Layout,
    b: &[T],
    b_layout: Layout,
    beta: T,
    c: &mut [T],
) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    let (rsa, csa) = strides(m, k, a_layout);
    let (rsb, csb) = strides(k, n, b_layout);
    // SAFETY: the asserted lengths cover every element addressed by the
    // dense strides above.
    unsafe {
        T::gemm_raw(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        )
    }
}

/// `op(a) * op(b)` into a new buffer, skipping the zero fill.
pub(crate) fn gemm_new<T: Real>(
    m: usize,
    k: usize,
    n: usize,
    a: &[T],
    a_layout: Layout,
    b: &[T],
    b_layout: Layout,
) -> Vec<T> {
    assert!(a.len() >= m * k && b.len() >= k * n);
    let (rsa, csa) = strides(m, k, a_layout);
    let (rsb, csb) = strides(k, n, b_layout);
    let mut c: Vec<T> = Vec::with_capacity(m * n);
    // SAFETY: with beta = 0 the kernel never reads `c` and writes every one
    // of its m * n elements, after which the length can be set.
    unsafe {
        T::gemm_raw(
            m,
            k,
            n,
            T::one(),
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            T::zero(),
            c.as_mut_ptr(),
            n as isize,
            1,
        );
        c.set_len(m * n);
    }
    c
}
