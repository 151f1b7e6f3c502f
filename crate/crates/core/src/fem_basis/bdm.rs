use nalgebra::{DMatrix, DVector};

use super::basis::{dim_p, FacetBasis, ScalarBasis};
use super::quadrature::{make_line_quadrature, make_quadrature_unchecked, LineRule, QuadratureRule};
use crate::error::{Error, Result};
use crate::mesh::ElementGeometry;
use crate::scalar::{Point, Scalar, Tensor};

/// Row-wise tensor BDM_k interpolation Π_K through moment functionals:
/// edge moments of `τ_a · n` against P_k(e) and interior moments against
/// `[P_{k-2}]² ⊕ x^⊥ P̃_{k-2}`.
///
/// Coefficients use the tensor layout `(2a + b) * n + i` with `n = dim P_k`.
#[derive(Clone, Debug)]
pub struct BdmInterpolator<T: Scalar> {
    k: usize,
    basis: ScalarBasis<T>,
    facet_basis: FacetBasis,
    vol: QuadratureRule<T>,
    line: LineRule<T>,
}

impl<T: Scalar> BdmInterpolator<T> {
    pub fn new(k: usize) -> Self {
        Self::with_degrees(k, 2 * k + 2, 2 * k + 1)
    }

    /// Interpolator whose moments of the target field use the given quadrature degrees.
    pub fn with_degrees(k: usize, volume_degree: usize, facet_degree: usize) -> Self {
        assert!(k >= 1, "BDM order must be at least 1");
        Self {
            k,
            basis: ScalarBasis::new(k),
            facet_basis: FacetBasis::new(k),
            vol: make_quadrature_unchecked(volume_degree.max(2 * k)).expect("volume rule"),
            line: make_line_quadrature(facet_degree.max(2 * k)),
        }
    }

    pub fn basis(&self) -> &ScalarBasis<T> {
        &self.basis
    }

    fn interior_tests(&self, geom: &ElementGeometry<T>, x: &Point<T>) -> Vec<Point<T>> {
        if self.k < 2 {
            return Vec::new();
        }
        let h = geom.diameter();
        let y = (x - geom.centroid()) / h;
        let m = self.k as i32 - 2;
        let mut out = Vec::with_capacity(self.k * self.k - 1);
        for d in 0..=m {
            for j in 0..=d {
                let v = y.x.powi(d - j) * y.y.powi(j);
                out.push(Point::new(v, T::zero()));
                out.push(Point::new(T::zero(), v));
            }
        }
        for j in 0..=m {
            let v = y.x.powi(m - j) * y.y.powi(j);
            out.push(Point::new(-y.y * v, y.x * v));
        }
        out
    }

    /// Applies every moment functional to the vector fields `f(x)`, one per output column.
    fn moments<const C: usize>(
        &self,
        geom: &ElementGeometry<T>,
        f: impl Fn(&Point<T>) -> [Point<T>; C],
    ) -> DMatrix<T> {
        let n = dim_p(self.k);
        let mut out = DMatrix::zeros(2 * n, C);
        let mut row = 0;
        for e in 0..3 {
            let (a, b) = geom.edge_vertices(e);
            let len = (b - a).norm();
            let normal = geom.outward_normal(e);
            for (s, w) in self.line.points.iter().zip(&self.line.weights) {
                let x = a + (b - a) * *s;
                let theta = self.facet_basis.eval(*s);
                let vals = f(&x);
                for m in 0..=self.k {
                    for c in 0..C {
                        out[(row + m, c)] += *w * len * theta[m] * vals[c].dot(&normal);
                    }
                }
            }
            row += self.k + 1;
        }
        for q in 0..self.vol.len() {
            let x = geom.map(&self.vol.xi(q));
            let w = self.vol.weights[q] * geom.det;
            let vals = f(&x);
            for (t, psi) in self.interior_tests(geom, &x).iter().enumerate() {
                for c in 0..C {
                    out[(row + t, c)] += w * psi.dot(&vals[c]);
                }
            }
        }
        out
    }

    /// Square moment matrix of the vector basis `[(φ_i, 0)] ++ [(0, φ_i)]`.
    fn system(&self, geom: &ElementGeometry<T>) -> DMatrix<T> {
        let n = dim_p(self.k);
        let mut d = DMatrix::zeros(2 * n, 2 * n);
        for i in 0..n {
            let col = self.moments(geom, |x| {
                let phi = self.basis.eval(&geom.to_reference(x))[i];
                [Point::new(phi, T::zero()), Point::new(T::zero(), phi)]
            });
            d.set_column(i, &col.column(0));
            d.set_column(n + i, &col.column(1));
        }
        d
    }

    /// Π_K f on element `element` (the index is only used in error reports).
    pub fn interpolate(
        &self,
        element: usize,
        geom: &ElementGeometry<T>,
        f: impl Fn(&Point<T>) -> Tensor<T>,
    ) -> Result<DVector<T>> {
        let n = dim_p(self.k);
        let lu = self.system(geom).lu();
        let rhs = self.moments(geom, |x| {
            let t = f(x);
            [Point::new(t[(0, 0)], t[(0, 1)]), Point::new(t[(1, 0)], t[(1, 1)])]
        });
        let sol = lu.solve(&rhs).ok_or(Error::SingularInterpolation(element))?;
        let mut out = DVector::zeros(4 * n);
        for a in 0..2 {
            for b in 0..2 {
                for i in 0..n {
                    out[(2 * a + b) * n + i] = sol[(b * n + i, a)];
                }
            }
        }
        Ok(out)
    }
}
