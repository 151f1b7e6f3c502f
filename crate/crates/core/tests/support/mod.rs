//! Shared helpers for the integration suites: smooth random fields, dense
//! oracles and result lines.

#![allow(dead_code)]

use std::io::Write;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use zener_core::assembly::sparse::to_dense;
use zener_core::assembly::PairField;
use zener_core::materials::MaterialTable;
use zener_core::mesh::{rectangle, Mesh};
use zener_core::scalar::{Point, Tensor};

pub fn rng(seed: u64) -> ChaCha8Rng {
    rand::SeedableRng::seed_from_u64(seed)
}

/// Unit square with `n × n` cells, split into subdomains 1 (x < ½) and 2.
pub fn square(n: usize) -> Mesh<f64> {
    rectangle(n, n, [0.0, 1.0], [0.0, 1.0], Some(0.5))
}

/// Writes one result line straight to stderr so it shows without `--nocapture`.
pub fn verdict(id: usize, name: &str, pass: bool, detail: &str) {
    let line = format!("criterion {id:>2} [{}] {name}: {detail}\n", if pass { "PASS" } else { "FAIL" });
    let _ = std::io::stderr().write_all(line.as_bytes());
}

/// `a sin(k·x + φ)`.
#[derive(Clone, Copy, Debug)]
pub struct Wave {
    amp: f64,
    k: [f64; 2],
    phase: f64,
}

impl Wave {
    pub fn random(r: &mut ChaCha8Rng) -> Self {
        Self {
            amp: r.random_range(-1.0..1.0),
            k: [r.random_range(-3.0..3.0), r.random_range(-3.0..3.0)],
            phase: r.random_range(0.0..6.3),
        }
    }

    pub fn eval(&self, x: &Point<f64>) -> f64 {
        self.amp * (self.k[0] * x.x + self.k[1] * x.y + self.phase).sin()
    }

    pub fn d(&self, x: &Point<f64>, i: usize) -> f64 {
        self.amp * self.k[i] * (self.k[0] * x.x + self.k[1] * x.y + self.phase).cos()
    }
}

/// Smooth tensor field with two waves per entry.
#[derive(Clone, Debug)]
pub struct WaveTensor([[Wave; 2]; 4]);

impl WaveTensor {
    pub fn random(r: &mut ChaCha8Rng) -> Self {
        Self(std::array::from_fn(|_| [Wave::random(r), Wave::random(r)]))
    }

    pub fn random_symmetric(r: &mut ChaCha8Rng) -> Self {
        let mut t = Self::random(r);
        t.0[2] = t.0[1];
        t
    }

    pub fn eval(&self, x: &Point<f64>) -> Tensor<f64> {
        Tensor::from_fn(|a, b| self.0[2 * a + b].iter().map(|w| w.eval(x)).sum())
    }

    pub fn div(&self, x: &Point<f64>) -> Point<f64> {
        Point::from_fn(|a, _| (0..2).map(|b| self.0[2 * a + b].iter().map(|w| w.d(x, b)).sum::<f64>()).sum())
    }
}

/// Smooth random pair `(γ, ζ)` for a material table.
pub struct SmoothPair {
    pub gamma: WaveTensor,
    pub zeta: WaveTensor,
    pub materials: MaterialTable<f64>,
}

impl SmoothPair {
    pub fn random(r: &mut ChaCha8Rng, materials: &MaterialTable<f64>) -> Self {
        Self { gamma: WaveTensor::random(r), zeta: WaveTensor::random(r), materials: materials.clone() }
    }

    /// Both components symmetric, so `j_ω⁺p` is symmetric too.
    pub fn symmetric(r: &mut ChaCha8Rng, materials: &MaterialTable<f64>) -> Self {
        Self { gamma: WaveTensor::random_symmetric(r), zeta: WaveTensor::random_symmetric(r), materials: materials.clone() }
    }

    fn omega(&self, sub: usize) -> f64 {
        let m = self.materials.get(sub).unwrap();
        if m.is_viscoelastic() {
            m.omega
        } else {
            0.0
        }
    }
}

impl PairField<f64> for SmoothPair {
    fn gamma(&self, x: &Point<f64>, _: usize) -> Tensor<f64> {
        self.gamma.eval(x)
    }

    fn zeta(&self, x: &Point<f64>, _: usize) -> Tensor<f64> {
        self.zeta.eval(x)
    }

    fn div_stress(&self, x: &Point<f64>, sub: usize) -> Point<f64> {
        self.gamma.div(x) + self.zeta.div(x) * self.omega(sub)
    }
}

/// Orthonormal basis of the null space of a dense matrix.
pub fn null_space(b: &DMatrix<f64>) -> DMatrix<f64> {
    let n = b.ncols();
    let eig = SymmetricEigen::new(b.transpose() * b);
    let top = eig.eigenvalues.amax().max(1e-300);
    let kept: Vec<usize> = (0..n).filter(|&i| eig.eigenvalues[i] <= 1e-11 * top).collect();
    DMatrix::from_fn(n, kept.len(), |i, j| eig.eigenvectors[(i, kept[j])])
}

pub fn dense(a: &nalgebra_sparse::CsrMatrix<f64>) -> DMatrix<f64> {
    to_dense(a)
}

/// Solves `[[Zᵀ L Z, Zᵀ Bᵀ], [B Z, 0]] (y, μ) = (Zᵀ b, 0)` and returns
/// `(Z y, μ)`: the constrained solve on the conforming subspace spanned by `Z`.
pub fn constrained_solve(l: &DMatrix<f64>, z: &DMatrix<f64>, b_mat: &DMatrix<f64>, rhs: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
    let lz = z.transpose() * l * z;
    let bz = b_mat * z;
    let (m, c) = (lz.nrows(), bz.nrows());
    let mut kkt = DMatrix::zeros(m + c, m + c);
    kkt.view_mut((0, 0), (m, m)).copy_from(&lz);
    kkt.view_mut((0, m), (m, c)).copy_from(&bz.transpose());
    kkt.view_mut((m, 0), (c, m)).copy_from(&bz);
    let mut f = DVector::zeros(m + c);
    f.rows_mut(0, m).copy_from(&(z.transpose() * rhs));
    let x = kkt.full_piv_lu().solve(&f).expect("constrained system is nonsingular");
    (z * x.rows(0, m), x.rows(m, c).into_owned())
}

/// A discrete pair viewed as a field, evaluated by point location.
pub struct DiscretePair<'a> {
    pub space: &'a zener_core::assembly::FeSpace<f64>,
    pub coeffs: &'a DVector<f64>,
}

impl DiscretePair<'_> {
    fn locate(&self, x: &Point<f64>) -> (usize, Point<f64>) {
        let mesh = self.space.mesh();
        (0..mesh.num_elements())
            .find_map(|e| {
                let xi = mesh.geometry(e).to_reference(x);
                (xi.x >= -1e-12 && xi.y >= -1e-12 && xi.x + xi.y <= 1.0 + 1e-12).then_some((e, xi))
            })
            .expect("point inside the mesh")
    }
}

impl PairField<f64> for DiscretePair<'_> {
    fn gamma(&self, x: &Point<f64>, _: usize) -> Tensor<f64> {
        let (e, xi) = self.locate(x);
        self.space.eval_gamma(self.coeffs, e, &xi)
    }

    fn zeta(&self, x: &Point<f64>, _: usize) -> Tensor<f64> {
        let (e, xi) = self.locate(x);
        self.space.eval_zeta(self.coeffs, e, &xi)
    }

    fn div_stress(&self, x: &Point<f64>, _: usize) -> Point<f64> {
        let (e, xi) = self.locate(x);
        self.space.eval_div_stress(self.coeffs, e, &xi)
    }
}
