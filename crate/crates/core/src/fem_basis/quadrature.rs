use crate::error::{Error, Result};
use crate::scalar::{lit, Point, Scalar};

/// Gauss-Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for j in 2..=n {
                let p2 = ((2 * j - 1) as f64 * x * p1 - (j - 1) as f64 * p0) / j as f64;
                p0 = p1;
                p1 = p2;
            }
            if n == 0 {
                break;
            }
            let pn_minus = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * p1 - pn_minus) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

/// Rule on the reference triangle (0,0), (1,0), (0,1).
#[derive(Clone, Debug)]
pub struct QuadratureRule<T: Scalar> {
    /// Barycentric coordinates `(l0, l1, l2)`; the reference point is `(l1, l2)`.
    pub points: Vec<[T; 3]>,
    /// Positive weights summing to 1/2.
    pub weights: Vec<T>,
    pub degree: usize,
}

impl<T: Scalar> QuadratureRule<T> {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn xi(&self, q: usize) -> Point<T> {
        Point::new(self.points[q][1], self.points[q][2])
    }
}

pub const MAX_DEGREE: usize = 10;

/// Collapsed (Duffy) tensor Gauss rule exact for total degree `degree`.
/// Degree 0 is treated as 1.
pub fn make_quadrature<T: Scalar>(degree: usize) -> Result<QuadratureRule<T>> {
    if degree > MAX_DEGREE {
        return Err(Error::UnsupportedDegree(degree));
    }
    make_quadrature_unchecked(degree.max(1))
}

/// Same construction without the degree cap, for error norms and oracles.
pub(crate) fn make_quadrature_unchecked<T: Scalar>(degree: usize) -> Result<QuadratureRule<T>> {
    let n = (degree + 3) / 2;
    let (x, w) = gauss_legendre(n);
    let mut points = Vec::with_capacity(n * n);
    let mut weights = Vec::with_capacity(n * n);
    for i in 0..n {
        let u = 0.5 * (x[i] + 1.0);
        for j in 0..n {
            let v = 0.5 * (x[j] + 1.0);
            let xi = u;
            let eta = (1.0 - u) * v;
            points.push([lit(1.0 - xi - eta), lit(xi), lit(eta)]);
            weights.push(lit(0.25 * w[i] * w[j] * (1.0 - u)));
        }
    }
    Ok(QuadratureRule { points, weights, degree })
}

/// Gauss rule on [0, 1] (weights sum to 1), exact for `degree`.
#[derive(Clone, Debug)]
pub struct LineRule<T: Scalar> {
    pub points: Vec<T>,
    pub weights: Vec<T>,
    pub degree: usize,
}

pub fn make_line_quadrature<T: Scalar>(degree: usize) -> LineRule<T> {
    let n = degree / 2 + 1;
    let (x, w) = gauss_legendre(n);
    LineRule {
        points: x.iter().map(|&s| lit(0.5 * (s + 1.0))).collect(),
        weights: w.iter().map(|&v| lit(0.5 * v)).collect(),
        degree,
    }
}
