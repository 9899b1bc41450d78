//! Scalar abstractions.
//!
//! Matrix construction only needs ring arithmetic, so it is generic over
//! [`Scalar`], which admits exact rationals as well as floats. Anything
//! that takes square roots or compares against tolerances needs [`Real`].

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, Num, NumAssign, ToPrimitive};

/// Ring-like scalar usable as a matrix entry: `f32`, `f64`, `Ratio<i64>`, ...
pub trait Scalar: nalgebra::Scalar + Copy + Num + NumAssign + PartialOrd + Display {}

impl<T> Scalar for T where T: nalgebra::Scalar + Copy + Num + NumAssign + PartialOrd + Display {}

/// Floating point scalar for the solver and estimators.
pub trait Real: Scalar + Float + FromPrimitive + ToPrimitive + Debug + Send + Sync {
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("literal representable")
    }
}

impl Real for f32 {}
impl Real for f64 {}
