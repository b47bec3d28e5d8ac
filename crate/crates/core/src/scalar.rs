//! Scalar abstraction: all field math is generic over `Real`, instantiated
//! as `f32` for training and `f64` for gradient verification.

use std::fmt::Debug;
use std::iter::Sum;

/// Floating point scalar: f32 or f64.
pub trait Real:
    num_traits::Float
    + num_traits::FromPrimitive
    + num_traits::NumCast
    + num_traits::NumAssign
    + Sum
    + Default
    + Debug
    + Send
    + Sync
    + 'static
{
    fn from_f64_(x: f64) -> Self;
    fn to_f64_(self) -> f64;
    fn from_f32_(x: f32) -> Self;
    fn to_f32_(self) -> f32;
    fn from_usize_(x: usize) -> Self {
        Self::from_f64_(x as f64)
    }
    /// Little-endian byte encoding as an f32 (checkpoint storage format).
    fn to_le_f32_bytes(self) -> [u8; 4] {
        self.to_f32_().to_le_bytes()
    }
    fn from_le_f32_bytes(b: [u8; 4]) -> Self {
        Self::from_f32_(f32::from_le_bytes(b))
    }
    fn half() -> Self {
        Self::from_f64_(0.5)
    }
    fn two() -> Self {
        Self::from_f64_(2.0)
    }
}

impl Real for f32 {
    #[inline]
    fn from_f64_(x: f64) -> Self {
        x as f32
    }
    #[inline]
    fn to_f64_(self) -> f64 {
        self as f64
    }
    #[inline]
    fn from_f32_(x: f32) -> Self {
        x
    }
    #[inline]
    fn to_f32_(self) -> f32 {
        self
    }
}

impl Real for f64 {
    #[inline]
    fn from_f64_(x: f64) -> Self {
        x
    }
    #[inline]
    fn to_f64_(self) -> f64 {
        self
    }
    #[inline]
    fn from_f32_(x: f32) -> Self {
        x as f64
    }
    #[inline]
    fn to_f32_(self) -> f32 {
        self as f32
    }
}
