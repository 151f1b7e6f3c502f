//! Polynomial bases and quadrature on the reference triangle, the tensor BDM
//! interpolation and local L² projections.

mod basis;
mod bdm;
mod projection;
mod quadrature;

use nalgebra::DVector;

use crate::mesh::ElementGeometry;
use crate::scalar::{Point, Scalar, Tensor};

pub use basis::{dim_p, FacetBasis, ScalarBasis};
pub use bdm::BdmInterpolator;
pub use projection::{l2_project_skew, l2_project_vector};
pub use quadrature::{gauss_legendre, make_line_quadrature, make_quadrature, LineRule, QuadratureRule, MAX_DEGREE};

pub(crate) use quadrature::make_quadrature_unchecked;

/// Evaluates a tensor with coefficients in the layout `(2a + b) * n + i`.
pub fn eval_tensor<T: Scalar>(basis: &ScalarBasis<T>, coeffs: &DVector<T>, xi: &Point<T>) -> Tensor<T> {
    let n = basis.dim();
    let phi = basis.eval(xi);
    let mut t = Tensor::zeros();
    for c in 0..4 {
        t[(c / 2, c % 2)] = (0..n).fold(T::zero(), |s, i| s + coeffs[c * n + i] * phi[i]);
    }
    t
}

/// Row-wise divergence of a tensor in the same layout.
pub fn eval_tensor_div<T: Scalar>(
    basis: &ScalarBasis<T>,
    coeffs: &DVector<T>,
    geom: &ElementGeometry<T>,
    xi: &Point<T>,
) -> Point<T> {
    let n = basis.dim();
    let grads: Vec<Point<T>> = basis.eval_grad(xi).iter().map(|g| geom.grad_to_physical(g)).collect();
    let mut d = Point::zeros();
    for a in 0..2 {
        for b in 0..2 {
            d[a] += (0..n).fold(T::zero(), |s, i| s + coeffs[(2 * a + b) * n + i] * grads[i][b]);
        }
    }
    d
}
