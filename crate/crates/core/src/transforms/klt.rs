//! Karhunen-Loeve training of the secondary matrix bank.

use nalgebra::{DMatrix, SymmetricEigen};

use super::secondary::{KernelFamily, SecondaryMatrix, TransformBank, SECONDARY_OUTPUTS, SET_COUNT};
use super::TransformError;

/// Minimum samples per group, as a multiple of the region length.
pub const MIN_SAMPLES_PER_DIM: usize = 10;

/// Second-moment matrix `(1/N) sum x x^T`, row-major `n x n`.
pub fn second_moment(samples: &[Vec<f64>], n: usize) -> Vec<f64> {
    let mut m = vec![0.0; n * n];
    for x in samples {
        debug_assert_eq!(x.len(), n);
        for i in 0..n {
            let xi = x[i];
            if xi == 0.0 {
                continue;
            }
            for j in i..n {
                m[i * n + j] += xi * x[j];
            }
        }
    }
    let scale = 1.0 / samples.len().max(1) as f64;
    for i in 0..n {
        for j in i..n {
            let v = m[i * n + j] * scale;
            m[i * n + j] = v;
            m[j * n + i] = v;
        }
    }
    m
}

/// Eigen-decomposition of a symmetric matrix: eigenvalues in descending
/// order and matching unit eigenvectors (as rows), each signed so that its
/// largest-magnitude component is positive.
pub fn symmetric_eigen(m: &[f64], n: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let mat = DMatrix::from_row_slice(n, n, m);
    let eig = SymmetricEigen::new(mat);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = order
        .iter()
        .map(|&i| {
            let mut v: Vec<f64> = eig.eigenvectors.column(i).iter().copied().collect();
            fix_sign(&mut v);
            v
        })
        .collect();
    (values, vectors)
}

/// Makes the largest-magnitude component positive (first one on ties).
pub fn fix_sign(v: &mut [f64]) {
    let mut best = 0usize;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Leading 16 eigenvectors of the samples' second-moment matrix.
pub fn klt(samples: &[Vec<f64>], n: usize) -> SecondaryMatrix {
    let (_, vectors) = symmetric_eigen(&second_moment(samples, n), n);
    SecondaryMatrix::new(n, vectors.into_iter().take(SECONDARY_OUTPUTS).flatten().collect())
}

/// Energy of `x` not captured by the `k` largest-magnitude outputs of `m`.
pub fn top_k_loss(m: &SecondaryMatrix, x: &[f64], k: usize) -> f64 {
    let total: f64 = x.iter().map(|v| v * v).sum();
    let mut e: Vec<f64> = m.apply(x).into_iter().map(|v| v * v).collect();
    e.sort_by(|a, b| b.total_cmp(a));
    total - e.iter().take(k).sum::<f64>()
}

/// Number of retained outputs used to score specialization when splitting
/// a group for its second matrix.
pub fn split_k(family: KernelFamily) -> usize {
    match family {
        KernelFamily::Small => 4,
        KernelFamily::Large => SECONDARY_OUTPUTS,
    }
}

/// Trains the two matrices of one group. The first is the group KLT; the
/// second is the KLT of the samples worst served by the first (above the
/// median loss), refined by one reassignment between the two.
pub fn train_pair(samples: &[Vec<f64>], family: KernelFamily) -> (SecondaryMatrix, SecondaryMatrix) {
    let n = family.region_len();
    let k = split_k(family);
    let first = klt(samples, n);
    let losses: Vec<f64> = samples.iter().map(|x| top_k_loss(&first, x, k)).collect();
    let mut sorted = losses.clone();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    let hard: Vec<Vec<f64>> = samples
        .iter()
        .zip(&losses)
        .filter(|(_, &l)| l > median)
        .map(|(x, _)| x.clone())
        .collect();
    if hard.len() < n {
        return (first.clone(), first);
    }
    let second = klt(&hard, n);
    let won: Vec<Vec<f64>> = samples
        .iter()
        .zip(&losses)
        .filter(|(x, &l)| top_k_loss(&second, x, k) < l)
        .map(|(x, _)| x.clone())
        .collect();
    let second = if won.len() >= n { klt(&won, n) } else { second };
    (first, second)
}

/// Region samples per transform set, per kernel family.
#[derive(Clone, Debug, Default)]
pub struct BankSamples {
    pub groups: [[Vec<Vec<f64>>; SET_COUNT]; 2],
}

impl BankSamples {
    pub fn push(&mut self, family: KernelFamily, set: u8, region: Vec<f64>) {
        debug_assert_eq!(region.len(), family.region_len());
        let f = match family {
            KernelFamily::Small => 0,
            KernelFamily::Large => 1,
        };
        self.groups[f][set as usize].push(region);
    }

    pub fn group(&self, family: KernelFamily, set: u8) -> &[Vec<f64>] {
        let f = match family {
            KernelFamily::Small => 0,
            KernelFamily::Large => 1,
        };
        &self.groups[f][set as usize]
    }
}

pub fn train_bank(samples: &BankSamples) -> Result<TransformBank, TransformError> {
    let mut pairs = Vec::new();
    for family in KernelFamily::ALL {
        for set in 0..SET_COUNT as u8 {
            let group = samples.group(family, set);
            let need = MIN_SAMPLES_PER_DIM * family.region_len();
            if group.len() < need {
                return Err(TransformError::InsufficientSamples {
                    family: family.region_len(),
                    set,
                    have: group.len(),
                    need,
                });
            }
            pairs.push(train_pair(group, family));
        }
    }
    Ok(TransformBank::from_matrices(|family, set, m| {
        let f = KernelFamily::ALL
            .iter()
            .position(|&x| x == family)
            .expect("known family");
        let (a, b) = &pairs[f * SET_COUNT + set as usize];
        if m == 1 {
            a.clone()
        } else {
            b.clone()
        }
    }))
}
