//! Orthonormal separable DCT-II.

use std::sync::OnceLock;

/// Orthonormal DCT-II basis, row `k` is the k-th cosine: `n x n` row-major.
pub fn dct_matrix(n: usize) -> Vec<f64> {
    let mut m = vec![0.0; n * n];
    let nf = n as f64;
    for k in 0..n {
        let a = if k == 0 { (1.0 / nf).sqrt() } else { (2.0 / nf).sqrt() };
        for i in 0..n {
            m[k * n + i] = a * (std::f64::consts::PI * (2 * i + 1) as f64 * k as f64 / (2.0 * nf)).cos();
        }
    }
    m
}

const SIZES: [usize; 5] = [4, 8, 16, 32, 64];

fn cached(n: usize) -> &'static [f64] {
    static CACHE: OnceLock<Vec<Vec<f64>>> = OnceLock::new();
    let all = CACHE.get_or_init(|| SIZES.iter().map(|&s| dct_matrix(s)).collect());
    let idx = SIZES
        .iter()
        .position(|&s| s == n)
        .unwrap_or_else(|| panic!("no DCT of size {n}"));
    &all[idx]
}

/// `out = a * b` for row-major `a: m x k`, `b: k x n`, with optional
/// transposes expressed through strides.
fn matmul(m: usize, k: usize, n: usize, a: (&[f64], usize, usize), b: (&[f64], usize, usize)) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for p in 0..k {
            let av = a.0[i * a.1 + p * a.2];
            if av == 0.0 {
                continue;
            }
            for j in 0..n {
                out[i * n + j] += av * b.0[p * b.1 + j * b.2];
            }
        }
    }
    out
}

/// `C_h * X * C_w^T` for an `h x w` block.
pub fn dct2_forward(block: &[f64], h: usize, w: usize) -> Vec<f64> {
    assert_eq!(block.len(), h * w);
    let (ch, cw) = (cached(h), cached(w));
    let tmp = matmul(h, w, w, (block, w, 1), (cw, 1, w));
    matmul(h, h, w, (ch, h, 1), (&tmp, w, 1))
}

/// `C_h^T * Y * C_w`.
pub fn dct2_inverse(coeffs: &[f64], h: usize, w: usize) -> Vec<f64> {
    assert_eq!(coeffs.len(), h * w);
    let (ch, cw) = (cached(h), cached(w));
    let tmp = matmul(h, w, w, (coeffs, w, 1), (cw, w, 1));
    matmul(h, h, w, (ch, 1, h), (&tmp, w, 1))
}
