use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating point scalar the kernels are generic over: `f32` or `f64`.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + NumAssign + Sum + Default + Debug + Display + LowerExp + Send + Sync + 'static
{
    /// Storage width in bytes, used for ledger accounting and the binary series format.
    const BYTES: usize;

    /// Converts an `f64` literal. Values outside the range of `Self` saturate to ±∞.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal is representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("float converts to f64")
    }
}

impl Real for f32 {
    const BYTES: usize = 4;
}

impl Real for f64 {
    const BYTES: usize = 8;
}

/// Relative difference `|a - b| / max(1, |a|, |b|)`.
///
/// Equal infinities compare as zero; any NaN compares as +∞.
pub fn rel_diff<T: Real>(a: T, b: T) -> T {
    if a == b {
        return T::zero();
    }
    let diff = (a - b).abs();
    if diff.is_nan() {
        return T::infinity();
    }
    diff / T::one().max(a.abs()).max(b.abs())
}
