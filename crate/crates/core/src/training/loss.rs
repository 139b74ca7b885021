//! Training objectives: two-head pair classification and block prediction.

use crate::nn::arch::LOGIT_COUNT;
use crate::nn::log_softmax;
use crate::scalar::Scalar;
use crate::signaling::PAIR_COUNT;

/// Cross-entropy of both 7-way heads of one logit vector, natural log.
/// Writes `softmax - onehot` per head into `grad`.
pub fn classification_loss<T: Scalar>(logits: &[T], i1: u8, i2: u8, grad: &mut [T]) -> T {
    assert_eq!(logits.len(), LOGIT_COUNT);
    assert_eq!(grad.len(), LOGIT_COUNT);
    let mut loss = T::zero();
    for (head, label) in [(0usize, i1), (1, i2)] {
        let range = head * PAIR_COUNT..(head + 1) * PAIR_COUNT;
        let ls = log_softmax(&logits[range.clone()]);
        loss = loss - ls[label as usize];
        for (k, (g, l)) in grad[range].iter_mut().zip(&ls).enumerate() {
            *g = l.exp() - if k == label as usize { T::one() } else { T::zero() };
        }
    }
    loss
}

/// Mean absolute error over one block; `grad` gets `sign(pred - target) / n`,
/// zero at exact ties.
pub fn prediction_loss<T: Scalar>(pred: &[T], target: &[T], grad: &mut [T]) -> T {
    assert_eq!(pred.len(), target.len());
    let n = T::from_usize(pred.len()).expect("block size fits");
    let mut sum = T::zero();
    for ((g, &p), &t) in grad.iter_mut().zip(pred).zip(target) {
        let d = p - t;
        sum = sum + d.abs();
        *g = if d > T::zero() {
            T::one() / n
        } else if d < T::zero() {
            -T::one() / n
        } else {
            T::zero()
        };
    }
    sum / n
}
