use nalgebra::DMatrix;

use super::quadrature::make_quadrature_unchecked;
use crate::scalar::{lit, Point, Scalar};

/// Dimension of P_k on a triangle.
pub const fn dim_p(k: usize) -> usize {
    (k + 1) * (k + 2) / 2
}

/// Graded monomial exponents `(d - j, j)`, `d = 0..=k`.
fn exponents(k: usize) -> Vec<(i32, i32)> {
    (0..=k as i32).flat_map(|d| (0..=d).map(move |j| (d - j, j))).collect()
}

const CENTER_SCALE: f64 = 3.0;

/// Monomial coordinates centered at the reference centroid.
fn centered<T: Scalar>(xi: &Point<T>) -> Point<T> {
    let c = lit::<T>(1.0 / 3.0);
    (xi - Point::new(c, c)) * lit::<T>(CENTER_SCALE)
}

/// Hierarchical L²-orthonormal basis of P_k on the reference triangle.
///
/// The first `dim_p(m)` functions span P_m for every `m <= k`, and
/// `∫_ref φ_i φ_j = δ_ij`, so the physical mass matrix is `det(J) I`.
#[derive(Clone, Debug)]
pub struct ScalarBasis<T: Scalar> {
    k: usize,
    exps: Vec<(i32, i32)>,
    /// Row i holds the monomial coefficients of φ_i.
    coeffs: DMatrix<T>,
}

impl<T: Scalar> ScalarBasis<T> {
    pub fn new(k: usize) -> Self {
        let exps = exponents(k);
        let n = exps.len();
        let rule = make_quadrature_unchecked::<f64>(2 * k).expect("basis quadrature");
        let mono = |p: &Point<f64>| -> Vec<f64> {
            let u = centered(p);
            exps.iter().map(|&(a, b)| u.x.powi(a) * u.y.powi(b)).collect()
        };
        let gram = {
            let mut g = DMatrix::<f64>::zeros(n, n);
            for q in 0..rule.len() {
                let m = mono(&rule.xi(q));
                for i in 0..n {
                    for j in 0..n {
                        g[(i, j)] += rule.weights[q] * m[i] * m[j];
                    }
                }
            }
            g
        };
        // Modified Gram-Schmidt in the monomial coordinates, applied twice.
        let mut c = DMatrix::<f64>::identity(n, n);
        for i in 0..n {
            for _ in 0..2 {
                for j in 0..i {
                    let proj = (c.row(i) * &gram * c.row(j).transpose())[(0, 0)];
                    let rj = c.row(j).into_owned();
                    let mut ri = c.row_mut(i);
                    ri -= rj * proj;
                }
            }
            let norm = (c.row(i) * &gram * c.row(i).transpose())[(0, 0)].sqrt();
            let mut ri = c.row_mut(i);
            ri /= norm;
        }
        Self { k, exps, coeffs: c.map(lit) }
    }

    pub fn order(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.exps.len()
    }

    /// Values of all basis functions at reference point `xi`.
    pub fn eval(&self, xi: &Point<T>) -> Vec<T> {
        let u = centered(xi);
        let m: Vec<T> = self.exps.iter().map(|&(a, b)| u.x.powi(a) * u.y.powi(b)).collect();
        (0..self.dim())
            .map(|i| (0..m.len()).fold(T::zero(), |s, j| s + self.coeffs[(i, j)] * m[j]))
            .collect()
    }

    /// Reference gradients of all basis functions at `xi`.
    pub fn eval_grad(&self, xi: &Point<T>) -> Vec<Point<T>> {
        let u = centered(xi);
        let d = |e: i32, x: T| if e == 0 { T::zero() } else { lit::<T>(CENTER_SCALE * e as f64) * x.powi(e - 1) };
        let dm: Vec<Point<T>> = self
            .exps
            .iter()
            .map(|&(a, b)| Point::new(d(a, u.x) * u.y.powi(b), u.x.powi(a) * d(b, u.y)))
            .collect();
        (0..self.dim())
            .map(|i| (0..dm.len()).fold(Point::zeros(), |s, j| s + dm[j] * self.coeffs[(i, j)]))
            .collect()
    }
}

/// L²([0,1])-orthonormal Legendre basis of P_k on a facet parameter `s`.
#[derive(Clone, Debug)]
pub struct FacetBasis {
    k: usize,
}

impl FacetBasis {
    pub fn new(k: usize) -> Self {
        Self { k }
    }

    pub fn dim(&self) -> usize {
        self.k + 1
    }

    pub fn eval<T: Scalar>(&self, s: T) -> Vec<T> {
        let x = s * lit::<T>(2.0) - T::one();
        let mut p = Vec::with_capacity(self.k + 1);
        p.push(T::one());
        if self.k >= 1 {
            p.push(x);
        }
        for j in 2..=self.k {
            let jf = j as f64;
            let next = (x * p[j - 1] * lit::<T>(2.0 * jf - 1.0) - p[j - 2] * lit::<T>(jf - 1.0)) / lit::<T>(jf);
            p.push(next);
        }
        p.iter().enumerate().map(|(j, &v)| v * lit::<T>((2.0 * j as f64 + 1.0).sqrt())).collect()
    }
}
