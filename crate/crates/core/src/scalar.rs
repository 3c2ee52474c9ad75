//! Scalar fields the solver runs over: `f64` for real activations and
//! `Complex64` for the complex exponential.

use nalgebra::ComplexField;
use num_complex::Complex64;

pub trait Scalar: ComplexField<RealField = f64> + Copy + Send + Sync {
    /// True for the complex field.
    const IS_COMPLEX: bool;
}

impl Scalar for f64 {
    const IS_COMPLEX: bool = false;
}

impl Scalar for Complex64 {
    const IS_COMPLEX: bool = true;
}
