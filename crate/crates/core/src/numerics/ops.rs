use super::{RngStream, Scalar};
use crate::error::{Error, Result};

pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Numerically stable softmax (max-subtracted).
pub fn softmax<T: Scalar>(logits: &[T]) -> Result<Vec<T>> {
    if logits.is_empty() {
        return Err(Error::Shape("softmax of an empty vector".into()));
    }
    let mut out = logits.to_vec();
    softmax_in_place(&mut out);
    Ok(out)
}

/// In-place softmax; `-inf` entries receive probability zero.
/// The slice must be nonempty and contain at least one finite entry.
pub fn softmax_in_place<T: Scalar>(v: &mut [T]) {
    let max = v.iter().fold(T::neg_infinity(), |m, &x| m.max(x));
    let mut total = T::zero();
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        total = total + *x;
    }
    for x in v.iter_mut() {
        *x = *x / total;
    }
}

/// `ln sum exp(v)`.
pub fn log_sum_exp<T: Scalar>(v: &[T]) -> T {
    let max = v.iter().fold(T::neg_infinity(), |m, &x| m.max(x));
    if max == T::neg_infinity() {
        return max;
    }
    let s: T = v.iter().map(|&x| (x - max).exp()).sum();
    max + s.ln()
}

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax<T: Scalar>(v: &[T]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Central-difference gradient estimate of `f` at `x`.
pub fn finite_diff_grad<T: Scalar>(mut f: impl FnMut(&[T]) -> T, x: &[T], h: T) -> Vec<T> {
    let mut probe = x.to_vec();
    let two_h = h + h;
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + h;
            let up = f(&probe);
            probe[i] = orig - h;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / two_h
        })
        .collect()
}

/// Draws an index with probability `probs[i]`.
pub fn sample_categorical<T: Scalar>(probs: &[T], rng: &mut RngStream) -> Result<usize> {
    if probs.is_empty() {
        return Err(Error::Validation("empty probability vector".into()));
    }
    let mut total = 0.0;
    for (i, p) in probs.iter().enumerate() {
        let p = p.as_f64();
        if !(p >= 0.0 && p.is_finite()) {
            return Err(Error::Validation(format!("probability {p} at index {i}")));
        }
        total += p;
    }
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::Validation(format!(
            "probabilities sum to {total}, not 1"
        )));
    }
    let u = rng.uniform() * total;
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, p) in probs.iter().enumerate() {
        let p = p.as_f64();
        if p > 0.0 {
            last_positive = i;
            acc += p;
            if u < acc {
                return Ok(i);
            }
        }
    }
    Ok(last_positive)
}
