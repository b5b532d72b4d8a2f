//! Floating point scalar abstraction shared by the log-domain BCJR engine and
//! the branch-metric network.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Real scalar type: `f32` or `f64`.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + NumAssign + Sum + Debug + Display + Send + Sync + 'static
{
    /// Finite stand-in for `ln 0`.
    const LOG_ZERO: Self;

    /// Lossy conversion from an `f64` constant.
    fn cst(v: f64) -> Self {
        Self::from_f64(v).expect("constant representable in scalar type")
    }

    /// True when the value sits at (or below) half the log-zero sentinel.
    fn is_log_zero(self) -> bool {
        self <= Self::LOG_ZERO / (Self::one() + Self::one())
    }
}

impl Real for f32 {
    const LOG_ZERO: Self = -1.0e30;
}

impl Real for f64 {
    const LOG_ZERO: Self = -1.0e30;
}
