//! Shared fixtures for unit tests.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::assembly::{FeSpace, PairField, StressPair};
use crate::materials::MaterialTable;
use crate::mesh::{rectangle, Mesh};
use crate::scalar::{Point, Tensor};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Unit square split by the diagonal, subdomains as given.
pub fn two_triangles(subs: [usize; 2]) -> Mesh<f64> {
    let v = vec![Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(1.0, 1.0), Point::new(0.0, 1.0)];
    Mesh::new(v, vec![[0, 1, 2], [0, 2, 3]], subs.to_vec(), BTreeMap::new()).unwrap()
}

pub fn square(n: usize) -> Mesh<f64> {
    rectangle(n, n, [0.0, 1.0], [0.0, 1.0], Some(0.5))
}

/// Square mesh with interior vertices jittered by up to `amount * h`.
pub fn jittered_square(n: usize, amount: f64, seed: u64) -> Mesh<f64> {
    let m = square(n);
    let mut r = rng(seed);
    let h = 1.0 / n as f64;
    let vertices = m
        .vertices()
        .iter()
        .map(|p| {
            let inner = p.x > 1e-12 && p.x < 1.0 - 1e-12 && p.y > 1e-12 && p.y < 1.0 - 1e-12;
            let on_split = (p.x - 0.5).abs() < 1e-12;
            if inner && !on_split {
                p + Point::new(r.random_range(-amount..amount), r.random_range(-amount..amount)) * h
            } else {
                *p
            }
        })
        .collect();
    Mesh::new(vertices, m.elements().to_vec(), m.subdomains().to_vec(), BTreeMap::new()).unwrap()
}

pub fn composite_space(mesh: Mesh<f64>, k: usize) -> FeSpace<f64> {
    FeSpace::new(mesh, MaterialTable::reference_composite(), k).unwrap()
}

/// Quadratic polynomial in two variables.
#[derive(Clone, Copy, Debug)]
pub struct Quadratic([f64; 6]);

impl Quadratic {
    pub fn random(r: &mut ChaCha8Rng) -> Self {
        Self(std::array::from_fn(|_| r.random_range(-1.0..1.0)))
    }

    pub fn eval(&self, x: &Point<f64>) -> f64 {
        let c = &self.0;
        c[0] + c[1] * x.x + c[2] * x.y + c[3] * x.x * x.x + c[4] * x.x * x.y + c[5] * x.y * x.y
    }

    pub fn grad(&self, x: &Point<f64>) -> Point<f64> {
        let c = &self.0;
        Point::new(c[1] + 2.0 * c[3] * x.x + c[4] * x.y, c[2] + c[4] * x.x + 2.0 * c[5] * x.y)
    }
}

/// Pair with quadratic entries; `div_stress` uses the subdomain's ω.
pub struct RandomPair {
    pub gamma: [Quadratic; 4],
    pub zeta: [Quadratic; 4],
    pub omega: BTreeMap<usize, f64>,
}

impl RandomPair {
    pub fn new(r: &mut ChaCha8Rng, materials: &MaterialTable<f64>) -> Self {
        Self {
            gamma: std::array::from_fn(|_| Quadratic::random(r)),
            zeta: std::array::from_fn(|_| Quadratic::random(r)),
            omega: materials.iter().map(|(j, m)| (j, m.omega)).collect(),
        }
    }

    /// Same with symmetric γ and ζ.
    pub fn symmetric(r: &mut ChaCha8Rng, materials: &MaterialTable<f64>) -> Self {
        let mut p = Self::new(r, materials);
        p.gamma[2] = p.gamma[1];
        p.zeta[2] = p.zeta[1];
        p
    }

    fn tensor(q: &[Quadratic; 4], x: &Point<f64>) -> Tensor<f64> {
        Tensor::new(q[0].eval(x), q[1].eval(x), q[2].eval(x), q[3].eval(x))
    }

    fn div(q: &[Quadratic; 4], x: &Point<f64>) -> Point<f64> {
        Point::new(q[0].grad(x).x + q[1].grad(x).y, q[2].grad(x).x + q[3].grad(x).y)
    }
}

impl PairField<f64> for RandomPair {
    fn gamma(&self, x: &Point<f64>, _: usize) -> Tensor<f64> {
        Self::tensor(&self.gamma, x)
    }

    fn zeta(&self, x: &Point<f64>, _: usize) -> Tensor<f64> {
        Self::tensor(&self.zeta, x)
    }

    fn div_stress(&self, x: &Point<f64>, sub: usize) -> Point<f64> {
        Self::div(&self.gamma, x) + Self::div(&self.zeta, x) * self.omega[&sub]
    }
}

/// Element containing `x` (strictly inside up to `tol`) and its reference point.
pub fn locate(mesh: &Mesh<f64>, x: &Point<f64>, tol: f64) -> Option<(usize, Point<f64>)> {
    (0..mesh.num_elements()).find_map(|e| {
        let xi = mesh.geometry(e).to_reference(x);
        (xi.x >= -tol && xi.y >= -tol && xi.x + xi.y <= 1.0 + tol).then_some((e, xi))
    })
}

/// A discrete pair viewed as a field (evaluated by point location).
pub struct DiscretePair<'a> {
    pub space: &'a FeSpace<f64>,
    pub coeffs: &'a StressPair<f64>,
}

impl PairField<f64> for DiscretePair<'_> {
    fn gamma(&self, x: &Point<f64>, _: usize) -> Tensor<f64> {
        let (e, xi) = locate(self.space.mesh(), x, 1e-12).unwrap();
        self.space.eval_gamma(self.coeffs, e, &xi)
    }

    fn zeta(&self, x: &Point<f64>, _: usize) -> Tensor<f64> {
        let (e, xi) = locate(self.space.mesh(), x, 1e-12).unwrap();
        self.space.eval_zeta(self.coeffs, e, &xi)
    }

    fn div_stress(&self, x: &Point<f64>, _: usize) -> Point<f64> {
        let (e, xi) = locate(self.space.mesh(), x, 1e-12).unwrap();
        self.space.eval_div_stress(self.coeffs, e, &xi)
    }
}
