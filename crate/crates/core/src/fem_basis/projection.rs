use nalgebra::DVector;

use super::basis::{dim_p, ScalarBasis};
use super::quadrature::QuadratureRule;
use crate::error::{Error, Result};
use crate::mesh::ElementGeometry;
use crate::scalar::{lit, Point, Scalar, Tensor};

/// U_K: L²(K) projection of a vector field onto `[P_order(K)]²`.
/// Coefficients are component-major, `c * dim_p(order) + i`.
pub fn l2_project_vector<T: Scalar>(
    basis: &ScalarBasis<T>,
    order: usize,
    geom: &ElementGeometry<T>,
    rule: &QuadratureRule<T>,
    g: impl Fn(&Point<T>) -> Point<T>,
) -> DVector<T> {
    let n = dim_p(order);
    let mut out = DVector::zeros(2 * n);
    for q in 0..rule.len() {
        let xi = rule.xi(q);
        let v = g(&geom.map(&xi)) * rule.weights[q];
        let phi = basis.eval(&xi);
        for i in 0..n {
            out[i] += v.x * phi[i];
            out[n + i] += v.y * phi[i];
        }
    }
    out
}

/// Q_K: L²(K) projection of a skew tensor field onto skew tensors with P_order
/// entries. Returns coefficients `c_i` of `Σ c_i φ_i [[0, 1], [-1, 0]]`.
pub fn l2_project_skew<T: Scalar>(
    basis: &ScalarBasis<T>,
    order: usize,
    geom: &ElementGeometry<T>,
    rule: &QuadratureRule<T>,
    s: impl Fn(&Point<T>) -> Tensor<T>,
) -> Result<DVector<T>> {
    let n = dim_p(order);
    let mut out = DVector::zeros(n);
    for q in 0..rule.len() {
        let xi = rule.xi(q);
        let t = s(&geom.map(&xi));
        let asym = (t + t.transpose()).amax();
        if asym > lit::<T>(1e-10) * t.amax().max(T::one()) {
            return Err(Error::NotSkew(crate::scalar::to_f64(asym)));
        }
        let c = (t[(0, 1)] - t[(1, 0)]) * lit::<T>(0.5);
        let phi = basis.eval(&xi);
        for i in 0..n {
            out[i] += rule.weights[q] * c * phi[i];
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem_basis::make_quadrature;

    fn geom() -> ElementGeometry<f64> {
        ElementGeometry::new([Point::new(0.1, 0.0), Point::new(0.9, 0.2), Point::new(0.3, 0.7)])
    }

    #[test]
    fn vector_projection_orthogonality() {
        let b = ScalarBasis::<f64>::new(2);
        let g = geom();
        let rule = make_quadrature::<f64>(8).unwrap();
        let f = |x: &Point<f64>| Point::new(x.x * x.x, 0.0);
        for order in 0..=1 {
            let u = l2_project_vector(&b, order, &g, &rule, f);
            let n = dim_p(order);
            for j in 0..n {
                let mut m = Point::zeros();
                for q in 0..rule.len() {
                    let xi = rule.xi(q);
                    let phi = b.eval(&xi);
                    let uh = (0..n).fold(Point::zeros(), |s, i| s + Point::new(u[i], u[n + i]) * phi[i]);
                    m += (f(&g.map(&xi)) - uh) * (rule.weights[q] * g.det * phi[j]);
                }
                assert!(m.norm() < 1e-12);
            }
        }
        // Constants are reproduced.
        let u = l2_project_vector(&b, 0, &g, &rule, |_| Point::new(2.0, -1.0));
        let phi0 = b.eval(&Point::new(0.2, 0.2))[0];
        assert!((u[0] * phi0 - 2.0).abs() < 1e-13 && (u[1] * phi0 + 1.0).abs() < 1e-13);
    }

    #[test]
    fn skew_projection() {
        let b = ScalarBasis::<f64>::new(2);
        let g = geom();
        let rule = make_quadrature::<f64>(8).unwrap();
        let c = l2_project_skew(&b, 1, &g, &rule, |_| Tensor::new(0.0, 3.0, -3.0, 0.0)).unwrap();
        let phi = b.eval(&Point::new(0.3, 0.3));
        assert!(((0..3).map(|i| c[i] * phi[i]).sum::<f64>() - 3.0).abs() < 1e-13);

        let s = |x: &Point<f64>| Tensor::new(0.0, x.x.sin(), -x.x.sin(), 0.0);
        let c = l2_project_skew(&b, 1, &g, &rule, s).unwrap();
        for j in 0..3 {
            let m: f64 = (0..rule.len())
                .map(|q| {
                    let xi = rule.xi(q);
                    let phi = b.eval(&xi);
                    let ch: f64 = (0..3).map(|i| c[i] * phi[i]).sum();
                    rule.weights[q] * (g.map(&xi).x.sin() - ch) * phi[j]
                })
                .sum();
            assert!(m.abs() < 1e-12);
        }
        assert!(matches!(
            l2_project_skew(&b, 1, &g, &rule, |_| Tensor::identity()),
            Err(Error::NotSkew(_))
        ));
    }
}
