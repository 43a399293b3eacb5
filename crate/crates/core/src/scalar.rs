//! Floating-point scalar abstraction shared by every geometric routine.

use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, Signed};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Real scalar: `f32` or `f64`.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + NumAssign
    + Signed
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Converts an `f64` literal into this scalar type.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Wraps an angle into `[-π, π)`.
pub fn normalize_angle<T: Real>(angle: T) -> T {
    if angle >= -T::PI() && angle < T::PI() {
        return angle;
    }
    let two_pi = T::TAU();
    let mut a = (angle + T::PI()) % two_pi;
    if a < T::zero() {
        a += two_pi;
    }
    // `%` can return exactly 2π after the correction above when `a` was -0.0 or tiny
    if a >= two_pi {
        a -= two_pi;
    }
    a - T::PI()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn angle_wraps_into_half_open_range() {
        assert_eq!(normalize_angle(0.0_f64), 0.0);
        assert_eq!(normalize_angle(PI), -PI);
        assert!((normalize_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
        assert!((normalize_angle(-3.0 * PI / 2.0) - PI / 2.0).abs() < 1e-12);
        for k in -20..20 {
            let a = normalize_angle(0.3 + k as f64 * 2.0 * PI);
            assert!((a - 0.3).abs() < 1e-9, "{k}: {a}");
        }
        let a = normalize_angle(-PI);
        assert!((-PI..PI).contains(&a));
    }

    #[test]
    fn works_for_f32() {
        let a = normalize_angle(7.0_f32);
        assert!((a - (7.0 - 2.0 * std::f32::consts::PI)).abs() < 1e-5);
    }
}
