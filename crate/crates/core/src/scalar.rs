//! Scalar abstraction shared by the network engine and the numeric kernels.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating point type usable for training and inference.
///
/// `f64` is the reference precision (gradient checks, oracles); `f32` is the
/// fast path for large training runs and the on-disk weight precision.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Default + Debug + Display + Sum + Send + Sync + 'static
{
    /// Human readable name, used in reports.
    const NAME: &'static str;

    /// `c = alpha * a * b + beta * c` with arbitrary row/column strides.
    ///
    /// `a` is `m x k`, `b` is `k x n`, `c` is `m x n`.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: &[Self],
        rsa: usize,
        csa: usize,
        b: &[Self],
        rsb: usize,
        csb: usize,
        beta: Self,
        c: &mut [Self],
        rsc: usize,
        csc: usize,
    );

    #[inline]
    fn from_f64_lossy(v: f64) -> Self {
        Self::from_f64(v).expect("finite f64 converts to every Scalar")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

fn extent(rows: usize, cols: usize, rs: usize, cs: usize) -> usize {
    if rows == 0 || cols == 0 {
        0
    } else {
        (rows - 1) * rs + (cols - 1) * cs + 1
    }
}

/// Row-by-row product for very short left operands, where packing the
/// right operand would dominate.
#[allow(clippy::too_many_arguments)]
fn row_gemm<T: Float>(
    m: usize,
    k: usize,
    n: usize,
    alpha: T,
    a: &[T],
    rsa: usize,
    csa: usize,
    b: &[T],
    rsb: usize,
    beta: T,
    c: &mut [T],
    rsc: usize,
) {
    let mut acc = vec![T::zero(); n];
    for i in 0..m {
        acc.iter_mut().for_each(|v| *v = T::zero());
        for p in 0..k {
            let av = a[i * rsa + p * csa];
            let row = &b[p * rsb..p * rsb + n];
            for (v, &bv) in acc.iter_mut().zip(row) {
                *v = *v + av * bv;
            }
        }
        let out = &mut c[i * rsc..i * rsc + n];
        for (o, &v) in out.iter_mut().zip(&acc) {
            *o = if beta == T::zero() {
                alpha * v
            } else {
                beta * *o + alpha * v
            };
        }
    }
}

macro_rules! impl_scalar {
    ($t:ty, $name:literal, $kernel:path) => {
        impl Scalar for $t {
            const NAME: &'static str = $name;

            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                alpha: Self,
                a: &[Self],
                rsa: usize,
                csa: usize,
                b: &[Self],
                rsb: usize,
                csb: usize,
                beta: Self,
                c: &mut [Self],
                rsc: usize,
                csc: usize,
            ) {
                assert!(a.len() >= extent(m, k, rsa, csa), "gemm: lhs too short");
                assert!(b.len() >= extent(k, n, rsb, csb), "gemm: rhs too short");
                assert!(c.len() >= extent(m, n, rsc, csc), "gemm: output too short");
                if m == 0 || n == 0 {
                    return;
                }
                if m <= 2 && csb == 1 && csc == 1 {
                    row_gemm(m, k, n, alpha, a, rsa, csa, b, rsb, beta, c, rsc);
                    return;
                }
                // SAFETY: the three extents were checked above, so every index the
                // kernel touches lies inside the borrowed slices.
                unsafe {
                    $kernel(
                        m,
                        k,
                        n,
                        alpha,
                        a.as_ptr(),
                        rsa as isize,
                        csa as isize,
                        b.as_ptr(),
                        rsb as isize,
                        csb as isize,
                        beta,
                        c.as_mut_ptr(),
                        rsc as isize,
                        csc as isize,
                    );
                }
            }
        }
    };
}

impl_scalar!(f32, "f32", matrixmultiply::sgemm);
impl_scalar!(f64, "f64", matrixmultiply::dgemm);
