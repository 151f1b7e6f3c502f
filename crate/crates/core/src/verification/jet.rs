use std::ops::{Add, Mul, Neg, Sub};

use crate::materials::Lame;
use crate::scalar::{lit, Point, Scalar, Tensor};

/// Second-order forward jet in two variables: value, gradient and Hessian.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet2<T: Scalar> {
    pub v: T,
    pub g: [T; 2],
    pub h: [[T; 2]; 2],
}

impl<T: Scalar> Jet2<T> {
    pub fn constant(v: T) -> Self {
        Self { v, g: [T::zero(); 2], h: [[T::zero(); 2]; 2] }
    }

    /// The coordinate `x_i` evaluated at `value`.
    pub fn variable(value: T, i: usize) -> Self {
        let mut j = Self::constant(value);
        j.g[i] = T::one();
        j
    }

    /// `f(self)` given `f`, `f'`, `f''` at the value.
    fn chain(self, f: T, df: T, ddf: T) -> Self {
        let mut h = [[T::zero(); 2]; 2];
        for a in 0..2 {
            for b in 0..2 {
                h[a][b] = df * self.h[a][b] + ddf * self.g[a] * self.g[b];
            }
        }
        Self { v: f, g: [df * self.g[0], df * self.g[1]], h }
    }

    pub fn sin(self) -> Self {
        let (s, c) = (self.v.sin(), self.v.cos());
        self.chain(s, c, -s)
    }

    pub fn cos(self) -> Self {
        let (s, c) = (self.v.sin(), self.v.cos());
        self.chain(c, -s, -c)
    }

    pub fn exp(self) -> Self {
        let e = self.v.exp();
        self.chain(e, e, e)
    }

    pub fn powi(self, n: i32) -> Self {
        if n == 0 {
            return Self::constant(T::one());
        }
        let nf = lit::<T>(n as f64);
        let ddf = if n == 1 { T::zero() } else { nf * lit::<T>((n - 1) as f64) * self.v.powi(n - 2) };
        self.chain(self.v.powi(n), nf * self.v.powi(n - 1), ddf)
    }

    pub fn scale(self, c: T) -> Self {
        Self {
            v: self.v * c,
            g: self.g.map(|x| x * c),
            h: self.h.map(|r| r.map(|x| x * c)),
        }
    }
}

impl<T: Scalar> Add for Jet2<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        let mut h = self.h;
        for a in 0..2 {
            for b in 0..2 {
                h[a][b] += o.h[a][b];
            }
        }
        Self { v: self.v + o.v, g: [self.g[0] + o.g[0], self.g[1] + o.g[1]], h }
    }
}

impl<T: Scalar> Neg for Jet2<T> {
    type Output = Self;
    fn neg(self) -> Self {
        self.scale(-T::one())
    }
}

impl<T: Scalar> Sub for Jet2<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        self + (-o)
    }
}

impl<T: Scalar> Mul for Jet2<T> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        let mut h = [[T::zero(); 2]; 2];
        for a in 0..2 {
            for b in 0..2 {
                h[a][b] = self.h[a][b] * o.v + self.g[a] * o.g[b] + o.g[a] * self.g[b] + self.v * o.h[a][b];
            }
        }
        Self {
            v: self.v * o.v,
            g: [self.g[0] * o.v + self.v * o.g[0], self.g[1] * o.v + self.v * o.g[1]],
            h,
        }
    }
}

impl<T: Scalar> Add<T> for Jet2<T> {
    type Output = Self;
    fn add(mut self, c: T) -> Self {
        self.v += c;
        self
    }
}

impl<T: Scalar> Mul<T> for Jet2<T> {
    type Output = Self;
    fn mul(self, c: T) -> Self {
        self.scale(c)
    }
}

/// A smooth vector field written once over jets so that its first and second
/// derivatives come for free.
pub trait SmoothVectorField<T: Scalar>: Sync {
    fn eval(&self, x: [Jet2<T>; 2]) -> [Jet2<T>; 2];
}

/// Jets of `u` at the point `p`.
pub fn jets_at<T: Scalar>(u: &dyn SmoothVectorField<T>, p: &Point<T>) -> [Jet2<T>; 2] {
    u.eval([Jet2::variable(p.x, 0), Jet2::variable(p.y, 1)])
}

pub fn value<T: Scalar>(u: &[Jet2<T>; 2]) -> Point<T> {
    Point::new(u[0].v, u[1].v)
}

/// `(∇u)_{ij} = ∂_j u_i`.
pub fn gradient<T: Scalar>(u: &[Jet2<T>; 2]) -> Tensor<T> {
    Tensor::new(u[0].g[0], u[0].g[1], u[1].g[0], u[1].g[1])
}

pub fn strain<T: Scalar>(u: &[Jet2<T>; 2]) -> Tensor<T> {
    let g = gradient(u);
    (g + g.transpose()) * lit::<T>(0.5)
}

/// `div(λ tr ε(u) I + 2μ ε(u))` from second derivatives.
pub fn div_lame<T: Scalar>(lame: &Lame<T>, u: &[Jet2<T>; 2]) -> Point<T> {
    let h = |i: usize, a: usize, b: usize| u[i].h[a][b];
    let mut out = Point::zeros();
    for i in 0..2 {
        let grad_div = h(0, i, 0) + h(1, i, 1);
        let lap = h(i, 0, 0) + h(i, 1, 1);
        out[i] = lame.lambda * grad_div + lame.mu * (lap + grad_div);
    }
    out
}
