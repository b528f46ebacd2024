//! Exactly rounded summation and an order-independent mean.

use crate::scalar::{c, Scalar};

/// Correctly rounded sum of `values` (Shewchuk's partials algorithm).
///
/// The result does not depend on the order of the inputs.
pub fn exact_sum<T: Scalar>(values: impl IntoIterator<Item = T>) -> T {
    let mut partials: Vec<T> = Vec::new();
    for mut x in values {
        let mut i = 0;
        for j in 0..partials.len() {
            let mut y = partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != T::zero() {
                partials[i] = lo;
                i += 1;
            }
            x = hi;
        }
        partials.truncate(i);
        partials.push(x);
    }

    let mut n = partials.len();
    if n == 0 {
        return T::zero();
    }
    n -= 1;
    let mut hi = partials[n];
    let mut lo = T::zero();
    while n > 0 {
        let x = hi;
        n -= 1;
        let y = partials[n];
        hi = x + y;
        let yr = hi - x;
        lo = y - yr;
        if lo != T::zero() {
            break;
        }
    }
    // Round half-even across the remaining partials.
    if n > 0 {
        let next = partials[n - 1];
        if (lo < T::zero() && next < T::zero()) || (lo > T::zero() && next > T::zero()) {
            let y = lo * c(2.0);
            let x = hi + y;
            let yr = x - hi;
            if y == yr {
                hi = x;
            }
        }
    }
    hi
}

/// Arithmetic mean that is invariant under permutation and under repeating
/// the whole input, and returns `x` exactly when every value equals `x`.
///
/// Returns `None` for an empty input.
pub fn stable_mean<T: Scalar>(values: &[T]) -> Option<T> {
    let reference = values.iter().copied().reduce(T::min)?;
    let n = T::from_usize(values.len()).unwrap();
    Some(reference + exact_sum(values.iter().map(|&x| x - reference)) / n)
}
