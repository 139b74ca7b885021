//! Non-separable secondary transform over the low-frequency primary
//! coefficients: region gathering, the matrix bank and its file format.

use std::io::{Read, Write};
use std::sync::OnceLock;

use sha2::{Digest, Sha256};

use crate::entropy::diagonal_scan;

use super::TransformError;

/// Number of secondary coefficients produced by every matrix.
pub const SECONDARY_OUTPUTS: usize = 16;
pub const SET_COUNT: usize = 4;
pub const MATRICES_PER_SET: usize = 2;

/// One (transform set, transposition) combination.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PairSpec {
    pub set: u8,
    pub transpose: bool,
}

impl PairSpec {
    pub const fn new(set: u8, transpose: bool) -> Self {
        Self { set, transpose }
    }
}

/// Matrix shape family, chosen by the smaller block side.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum KernelFamily {
    /// 16 inputs: the top-left 4x4 coefficients.
    Small,
    /// 48 inputs: the top-left 8x8 coefficients without their bottom-right 4x4.
    Large,
}

impl KernelFamily {
    pub const ALL: [KernelFamily; 2] = [KernelFamily::Small, KernelFamily::Large];

    pub fn for_block(h: usize, w: usize) -> Self {
        if h.min(w) >= 8 {
            KernelFamily::Large
        } else {
            KernelFamily::Small
        }
    }

    pub fn region_len(self) -> usize {
        match self {
            KernelFamily::Small => 16,
            KernelFamily::Large => 48,
        }
    }

    fn index(self) -> usize {
        match self {
            KernelFamily::Small => 0,
            KernelFamily::Large => 1,
        }
    }

    /// Region positions as (row, col), in gathering order.
    pub fn region(self) -> &'static [(usize, usize)] {
        static REGIONS: OnceLock<[Vec<(usize, usize)>; 2]> = OnceLock::new();
        let r = REGIONS.get_or_init(|| {
            let small = diagonal_scan(4, 4).into_iter().map(|i| (i / 4, i % 4)).collect();
            let large = diagonal_scan(8, 8)
                .into_iter()
                .map(|i| (i / 8, i % 8))
                .filter(|&(r, c)| r < 4 || c < 4)
                .collect();
            [small, large]
        });
        &r[self.index()]
    }
}

/// Gathers the low-frequency region of an `h x w` coefficient block. With
/// `transpose`, coefficient (c, r) is read in place of (r, c).
pub fn gather_region(coeffs: &[f64], h: usize, w: usize, transpose: bool) -> Vec<f64> {
    debug_assert_eq!(coeffs.len(), h * w);
    KernelFamily::for_block(h, w)
        .region()
        .iter()
        .map(|&(r, c)| {
            if transpose {
                coeffs[c * w + r]
            } else {
                coeffs[r * w + c]
            }
        })
        .collect()
}

/// Writes `values` back into a zeroed `h x w` block; inverse of [`gather_region`].
pub fn scatter_region(values: &[f64], h: usize, w: usize, transpose: bool) -> Vec<f64> {
    let mut out = vec![0.0; h * w];
    for (&(r, c), &v) in KernelFamily::for_block(h, w).region().iter().zip(values) {
        if transpose {
            out[c * w + r] = v;
        } else {
            out[r * w + c] = v;
        }
    }
    out
}

/// Raster positions receiving the 16 secondary coefficients: the first 16
/// entries of the block's diagonal scan.
pub fn output_positions(h: usize, w: usize) -> Vec<usize> {
    diagonal_scan(h, w).into_iter().take(SECONDARY_OUTPUTS).collect()
}

/// A `16 x R` matrix with orthonormal rows, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct SecondaryMatrix {
    pub cols: usize,
    pub data: Vec<f64>,
}

impl SecondaryMatrix {
    pub fn new(cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), SECONDARY_OUTPUTS * cols);
        Self { cols, data }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        (0..SECONDARY_OUTPUTS)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn apply_transpose(&self, y: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.cols];
        for (i, &yi) in y.iter().enumerate() {
            for (xv, a) in x.iter_mut().zip(self.row(i)) {
                *xv += a * yi;
            }
        }
        x
    }

    /// Largest deviation of `M M^T` from the identity.
    pub fn orthonormality_error(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..SECONDARY_OUTPUTS {
            for j in 0..SECONDARY_OUTPUTS {
                let d: f64 = self.row(i).iter().zip(self.row(j)).map(|(a, b)| a * b).sum();
                let e = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((d - e).abs());
            }
        }
        worst
    }
}

/// 2 families x 4 sets x 2 matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct TransformBank {
    matrices: Vec<SecondaryMatrix>,
}

fn slot(family: KernelFamily, set: u8, matrix: u8) -> usize {
    assert!((set as usize) < SET_COUNT, "set {set}");
    assert!((1..=2).contains(&matrix), "matrix index {matrix}");
    (family.index() * SET_COUNT + set as usize) * MATRICES_PER_SET + (matrix as usize - 1)
}

pub const BANK_MAGIC: &[u8; 4] = b"LFB1";

impl TransformBank {
    /// `matrices[family][set][matrix - 1]`.
    pub fn from_matrices(build: impl Fn(KernelFamily, u8, u8) -> SecondaryMatrix) -> Self {
        let mut matrices = Vec::with_capacity(16);
        for family in KernelFamily::ALL {
            for set in 0..SET_COUNT as u8 {
                for m in 1..=MATRICES_PER_SET as u8 {
                    let mat = build(family, set, m);
                    assert_eq!(mat.cols, family.region_len());
                    matrices.push(mat);
                }
            }
        }
        Self { matrices }
    }

    /// Each matrix is the leading 16 rows of a distinct signed permutation;
    /// useful for tests and as an untrained placeholder.
    pub fn identity_like() -> Self {
        Self::from_matrices(|family, set, m| {
            let cols = family.region_len();
            let mut data = vec![0.0; SECONDARY_OUTPUTS * cols];
            let shift = (set as usize * 2 + m as usize - 1) % cols;
            for i in 0..SECONDARY_OUTPUTS {
                data[i * cols + (i + shift) % cols] = if m == 2 { -1.0 } else { 1.0 };
            }
            SecondaryMatrix::new(cols, data)
        })
    }

    /// Leading rows of seeded random orthogonal matrices (QR of a Gaussian
    /// matrix). Deterministic in `seed`.
    pub fn random(seed: u64) -> Self {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut gauss = move || {
            let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
            let u2: f64 = rng.gen();
            (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
        };
        let mut mats = Vec::new();
        for family in KernelFamily::ALL {
            for _ in 0..SET_COUNT * MATRICES_PER_SET {
                let n = family.region_len();
                let a = nalgebra::DMatrix::from_fn(n, n, |_, _| gauss());
                let q = a.qr().q();
                let mut data = Vec::with_capacity(SECONDARY_OUTPUTS * n);
                for i in 0..SECONDARY_OUTPUTS {
                    data.extend(q.column(i).iter().copied());
                }
                mats.push(SecondaryMatrix::new(n, data));
            }
        }
        Self::from_matrices(|family, set, m| mats[slot(family, set, m)].clone())
    }

    pub fn matrix(&self, family: KernelFamily, set: u8, matrix: u8) -> &SecondaryMatrix {
        &self.matrices[slot(family, set, matrix)]
    }

    pub fn matrices(&self) -> impl Iterator<Item = (KernelFamily, u8, u8, &SecondaryMatrix)> {
        KernelFamily::ALL.into_iter().flat_map(move |f| {
            (0..SET_COUNT as u8).flat_map(move |s| (1..=2u8).map(move |m| (f, s, m, self.matrix(f, s, m))))
        })
    }

    /// Applies matrix `matrix` of `pair.set` to an `h x w` primary
    /// coefficient block. Everything outside the 16 output positions is zero.
    pub fn forward(&self, coeffs: &[f64], h: usize, w: usize, pair: PairSpec, matrix: u8) -> Vec<f64> {
        let family = KernelFamily::for_block(h, w);
        let x = gather_region(coeffs, h, w, pair.transpose);
        let y = self.matrix(family, pair.set, matrix).apply(&x);
        let mut out = vec![0.0; h * w];
        for (pos, v) in output_positions(h, w).into_iter().zip(y) {
            out[pos] = v;
        }
        out
    }

    /// Maps secondary coefficients back to primary coefficients; only the
    /// 16 output positions of `coeffs` are read.
    pub fn inverse(&self, coeffs: &[f64], h: usize, w: usize, pair: PairSpec, matrix: u8) -> Vec<f64> {
        let family = KernelFamily::for_block(h, w);
        let y: Vec<f64> = output_positions(h, w).into_iter().map(|p| coeffs[p]).collect();
        let x = self.matrix(family, pair.set, matrix).apply_transpose(&y);
        scatter_region(&x, h, w, pair.transpose)
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> Result<(), TransformError> {
        let mut buf = Vec::new();
        buf.extend_from_slice(BANK_MAGIC);
        buf.extend_from_slice(&(KernelFamily::ALL.len() as u16).to_le_bytes());
        buf.extend_from_slice(&(SET_COUNT as u16).to_le_bytes());
        buf.extend_from_slice(&(MATRICES_PER_SET as u16).to_le_bytes());
        for (family, set, m, mat) in self.matrices() {
            buf.push(family.region_len() as u8);
            buf.push(set);
            buf.push(m);
            buf.extend_from_slice(&(SECONDARY_OUTPUTS as u16).to_le_bytes());
            buf.extend_from_slice(&(mat.cols as u16).to_le_bytes());
            for v in &mat.data {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        out.write_all(&buf)?;
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut v = Vec::new();
        self.write_to(&mut v).expect("writing to a Vec cannot fail");
        v
    }

    pub fn read_from<R: Read>(mut input: R) -> Result<Self, TransformError> {
        let mut bytes = Vec::new();
        input.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, TransformError> {
        let bad = |m: &str| TransformError::BadFile(m.to_owned());
        let mut pos = 0usize;
        let mut take = |n: usize| -> Result<&[u8], TransformError> {
            let s = bytes.get(pos..pos + n).ok_or_else(|| bad("truncated"))?;
            pos += n;
            Ok(s)
        };
        if take(4)? != BANK_MAGIC {
            return Err(bad("bad magic"));
        }
        let u16_at = |s: &[u8]| u16::from_le_bytes([s[0], s[1]]) as usize;
        let counts = (u16_at(take(2)?), u16_at(take(2)?), u16_at(take(2)?));
        if counts != (KernelFamily::ALL.len(), SET_COUNT, MATRICES_PER_SET) {
            return Err(bad("unexpected matrix counts"));
        }
        let mut matrices = Vec::with_capacity(16);
        for family in KernelFamily::ALL {
            for set in 0..SET_COUNT as u8 {
                for m in 1..=MATRICES_PER_SET as u8 {
                    let head = take(3)?.to_vec();
                    let rows = u16_at(take(2)?);
                    let cols = u16_at(take(2)?);
                    if head != [family.region_len() as u8, set, m]
                        || rows != SECONDARY_OUTPUTS
                        || cols != family.region_len()
                    {
                        return Err(bad("matrix header mismatch"));
                    }
                    let raw = take(rows * cols * 8)?;
                    let data: Vec<f64> = raw
                        .chunks_exact(8)
                        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                        .collect();
                    if data.iter().any(|v| !v.is_finite()) {
                        return Err(bad("non-finite matrix entry"));
                    }
                    matrices.push(SecondaryMatrix::new(cols, data));
                }
            }
        }
        if pos != bytes.len() {
            return Err(bad("trailing bytes"));
        }
        Ok(Self { matrices })
    }

    /// First 8 bytes of the SHA-256 of the serialized bank, little-endian.
    pub fn hash(&self) -> u64 {
        hash_bytes(&self.to_bytes())
    }
}

pub(crate) fn hash_bytes(bytes: &[u8]) -> u64 {
    let digest = Sha256::digest(bytes);
    u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
}
