//! Scalar trait for payload lanes.
//!
//! Every payload cell in the engine is a fixed number of lanes of one scalar
//! type. The engine and the signal toolkit are generic over that type; `f32`
//! matches the device data (64-bit timestamp, 32-bit value) and `f64` is
//! available when extra headroom is wanted.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating point lane type: `f32` or `f64`.
pub trait Scalar: Float + FromPrimitive + ToPrimitive + Default + Debug + Display + Send + Sync + 'static {
    /// Raw IEEE bits widened to 64 bits, used for checksums and bit-exact comparisons.
    fn bits(self) -> u64;

    /// Lossy conversion from `f64`.
    fn of(v: f64) -> Self {
        Self::from_f64(v).unwrap_or_else(Self::nan)
    }

    /// Widening conversion to `f64`.
    fn widen(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {
    fn bits(self) -> u64 {
        u64::from(self.to_bits())
    }
}

impl Scalar for f64 {
    fn bits(self) -> u64 {
        self.to_bits()
    }
}
