//! Scalar abstraction shared by the numeric parts of the crate.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive};

/// floating point: f32 or f64
pub trait Scalar:
    Float + FromPrimitive + Debug + Display + Default + Send + Sync + 'static
{
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Order-independent floating point sum.
///
/// Keeps the running total as a list of non-overlapping partials (Shewchuk's
/// algorithm), so the value returned by [`ExactSum::value`] is the correctly
/// rounded sum of every input no matter how the inputs were grouped or in
/// which order accumulators were merged. Partitioned aggregation relies on
/// this to reproduce single-pass results bit for bit.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExactSum<T: Scalar> {
    partials: Vec<T>,
    special: Option<T>,
    count: u64,
}

impl<T: Scalar> ExactSum<T> {
    pub fn new() -> Self {
        Self {
            partials: Vec::new(),
            special: None,
            count: 0,
        }
    }

    /// Number of values added (including values merged from other accumulators).
    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn add(&mut self, value: T) {
        self.count += 1;
        self.add_partial(value);
    }

    fn add_partial(&mut self, value: T) {
        if !value.is_finite() {
            self.special = Some(match self.special {
                Some(s) => s + value,
                None => value,
            });
            return;
        }
        let mut x = value;
        let mut kept = 0;
        for j in 0..self.partials.len() {
            let mut y = self.partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != T::zero() {
                self.partials[kept] = lo;
                kept += 1;
            }
            x = hi;
        }
        self.partials.truncate(kept);
        self.partials.push(x);
    }

    pub fn merge(&mut self, other: &ExactSum<T>) {
        for &p in &other.partials {
            self.add_partial(p);
        }
        if let Some(s) = other.special {
            self.add_partial(s);
        }
        self.count += other.count;
    }

    /// Correctly rounded value of the exact sum. An empty sum is `+0`.
    pub fn value(&self) -> T {
        if let Some(s) = self.special {
            return s;
        }
        let p = &self.partials;
        let mut n = p.len();
        if n == 0 {
            return T::zero();
        }
        n -= 1;
        let mut hi = p[n];
        let mut lo = T::zero();
        while n > 0 {
            let x = hi;
            n -= 1;
            let y = p[n];
            hi = x + y;
            let yr = hi - x;
            lo = y - yr;
            if lo != T::zero() {
                break;
            }
        }
        // Round-half-even correction when the tail sits exactly on a midpoint.
        if n > 0
            && ((lo < T::zero() && p[n - 1] < T::zero())
                || (lo > T::zero() && p[n - 1] > T::zero()))
        {
            let y = lo + lo;
            let x = hi + y;
            let yr = x - hi;
            if y == yr {
                hi = x;
            }
        }
        if hi == T::zero() {
            T::zero()
        } else {
            hi
        }
    }
}

impl<T: Scalar> FromIterator<T> for ExactSum<T> {
    fn from_iter<I: IntoIterator<Item = T>>(iter: I) -> Self {
        let mut acc = ExactSum::new();
        for v in iter {
            acc.add(v);
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cancels_catastrophically_ordered_input() {
        let s: ExactSum<f64> = [1e100, 1.0, -1e100, 1e-3].into_iter().collect();
        assert_eq!(s.value(), 1.001);
        assert_eq!(s.count(), 4);
    }

    #[test]
    fn merge_is_grouping_independent() {
        let xs = [0.1, 0.2, 0.3, 1e16, -1e16, 0.7, 3.3];
        let whole: ExactSum<f64> = xs.iter().copied().collect();
        let mut left: ExactSum<f64> = xs[..3].iter().copied().collect();
        let right: ExactSum<f64> = xs[3..].iter().copied().collect();
        left.merge(&right);
        assert_eq!(left.value(), whole.value());
        assert_eq!(left.count(), 7);
    }

    #[test]
    fn empty_is_positive_zero() {
        let s = ExactSum::<f32>::new();
        assert_eq!(s.value(), 0.0);
        assert!(s.value().is_sign_positive());
    }

    #[test]
    fn works_for_f32() {
        let s: ExactSum<f32> = [1e8f32, 1.0, -1e8].into_iter().collect();
        assert_eq!(s.value(), 1.0);
    }
}
