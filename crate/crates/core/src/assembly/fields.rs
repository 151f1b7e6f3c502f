use crate::scalar::{Point, Scalar, Tensor};

/// A continuous stress pair `p = (γ, ζ)` evaluated per subdomain.
pub trait PairField<T: Scalar>: Sync {
    fn gamma(&self, x: &Point<T>, subdomain: usize) -> Tensor<T>;
    /// Only queried on viscoelastic subdomains.
    fn zeta(&self, x: &Point<T>, subdomain: usize) -> Tensor<T>;
    /// `div(γ + ωζ)`.
    fn div_stress(&self, x: &Point<T>, subdomain: usize) -> Point<T>;
}

pub struct ZeroPair;

impl<T: Scalar> PairField<T> for ZeroPair {
    fn gamma(&self, _: &Point<T>, _: usize) -> Tensor<T> {
        Tensor::zeros()
    }

    fn zeta(&self, _: &Point<T>, _: usize) -> Tensor<T> {
        Tensor::zeros()
    }

    fn div_stress(&self, _: &Point<T>, _: usize) -> Point<T> {
        Point::zeros()
    }
}
