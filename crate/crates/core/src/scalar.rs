//! Scalar abstraction shared by every numerical routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating-point type the game machinery is generic over (`f32` or `f64`).
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Converts an `f64` literal. Panics only if the target cannot represent
    /// the magnitude at all, which never happens for `f32`/`f64`.
    #[inline]
    fn c(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal representable in scalar type")
    }

    #[inline]
    fn f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Tolerance used when snapping real times onto a discrete time grid.
    #[inline]
    fn snap_tol(scale: Self) -> Self {
        Self::epsilon() * Self::c(64.0) * scale.abs().max(Self::one())
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Euclidean norm of a vector.
pub fn norm<S: Scalar>(x: &[S]) -> S {
    x.iter().map(|&v| v * v).sum::<S>().sqrt()
}

/// Euclidean distance between two vectors of equal length.
pub fn dist<S: Scalar>(a: &[S], b: &[S]) -> S {
    a.iter()
        .zip(b)
        .map(|(&p, &q)| (p - q) * (p - q))
        .sum::<S>()
        .sqrt()
}

/// `n` evenly spaced points from `lo` to `hi` inclusive, with exact endpoints.
pub fn linspace<S: Scalar>(lo: S, hi: S, n: usize) -> Vec<S> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let last = n - 1;
            (0..n)
                .map(|i| {
                    if i == last {
                        hi
                    } else {
                        lo + (hi - lo) * S::c(i as f64) / S::c(last as f64)
                    }
                })
                .collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linspace_endpoints_exact() {
        let p: Vec<f64> = linspace(-1.0, 1.0, 21);
        assert_eq!(p[0], -1.0);
        assert_eq!(p[20], 1.0);
        assert_eq!(p[10], 0.0);
        let q: Vec<f32> = linspace(-0.5, 0.5, 11);
        assert_eq!(q.len(), 11);
        assert_eq!(q[10], 0.5);
    }

    #[test]
    fn norms() {
        assert_eq!(norm(&[3.0f64, 4.0]), 5.0);
        assert_eq!(dist(&[1.0f64, 1.0], &[4.0, 5.0]), 5.0);
    }
}
