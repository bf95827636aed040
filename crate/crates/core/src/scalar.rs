//! Scalar abstraction shared by the kernel, Hessian and determinant code.

use std::fmt::Debug;

use num_traits::{Float, FloatConst, FromPrimitive};

/// Floating point scalar: `f32` or `f64`.
pub trait Real: Float + FloatConst + FromPrimitive + Debug + Send + Sync + 'static {
    /// Lossy conversion from an `f64` literal or parameter.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable in scalar type")
    }

    /// Full turn, 2π.
    #[inline]
    fn two_pi() -> Self {
        Self::TAU()
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Reduce an angle to `[0, 2π)`.
#[inline]
pub fn reduce_angle<T: Real>(theta: T) -> T {
    let tau = T::two_pi();
    let r = theta - tau * (theta / tau).floor();
    // floor can leave r == tau after rounding (e.g. theta = -1e-20)
    if r >= tau || r < T::zero() {
        T::zero()
    } else {
        r
    }
}
