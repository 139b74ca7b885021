use crate::scalar::Scalar;

/// Numerically stable softmax (max subtraction).
///
/// # Panics
/// On an empty slice.
pub fn softmax<T: Scalar>(v: &[T]) -> Vec<T> {
    assert!(!v.is_empty(), "softmax of an empty vector");
    let max = v.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = v.iter().map(|&x| (x - max).exp()).collect();
    let sum: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// `log(softmax(v))` evaluated without forming the probabilities.
pub fn log_softmax<T: Scalar>(v: &[T]) -> Vec<T> {
    assert!(!v.is_empty(), "softmax of an empty vector");
    let max = v.iter().copied().fold(T::neg_infinity(), T::max);
    let lse = v.iter().map(|&x| (x - max).exp()).sum::<T>().ln() + max;
    v.iter().map(|&x| x - lse).collect()
}
