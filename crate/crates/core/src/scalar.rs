//! Scalar abstraction and small 2x2 tensor helpers.

use nalgebra::{Matrix2, RealField, Vector2};

/// Floating-point type the discretization is generic over (`f32` or `f64`).
pub trait Scalar: RealField + Copy + num_traits::ToPrimitive {}

impl Scalar for f32 {}
impl Scalar for f64 {}

pub type Point<T> = Vector2<T>;
pub type Tensor<T> = Matrix2<T>;

/// Converts an `f64` literal into `T`.
#[inline]
pub fn lit<T: Scalar>(x: f64) -> T {
    nalgebra::convert(x)
}

#[inline]
pub fn to_f64<T: Scalar>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

/// The unit skew tensor `[[0, 1], [-1, 0]]`.
pub fn unit_skew<T: Scalar>() -> Tensor<T> {
    Matrix2::new(T::zero(), T::one(), -T::one(), T::zero())
}

/// Tensor `E_c` of the component basis, `c = 2 * row + col`.
pub fn tensor_unit<T: Scalar>(c: usize) -> Tensor<T> {
    let mut m = Matrix2::zeros();
    m[(c / 2, c % 2)] = T::one();
    m
}

/// Frobenius inner product `a : b`.
#[inline]
pub fn ddot<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> T {
    a[(0, 0)] * b[(0, 0)] + a[(0, 1)] * b[(0, 1)] + a[(1, 0)] * b[(1, 0)] + a[(1, 1)] * b[(1, 1)]
}

pub fn sym<T: Scalar>(a: &Tensor<T>) -> Tensor<T> {
    (a + a.transpose()) * lit::<T>(0.5)
}

/// Scalar `c` with `skew(a) = c * [[0, 1], [-1, 0]]`.
pub fn skew_coefficient<T: Scalar>(a: &Tensor<T>) -> T {
    (a[(0, 1)] - a[(1, 0)]) * lit::<T>(0.5)
}

pub fn max_abs<T: Scalar>(values: impl IntoIterator<Item = T>) -> T {
    values
        .into_iter()
        .fold(T::zero(), |acc, v| acc.max(v.abs()))
}
