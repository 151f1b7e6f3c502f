use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::assembly::sparse::to_dense;
use crate::assembly::{assemble_trace_coupling, AssembledForms, FeSpace, StressPair};
use crate::cg::discrete_energy;
use crate::error::{Error, Result};
use crate::scalar::{lit, to_f64, Scalar};

/// Series `E^{k+1/2}` of the discrete energy.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EnergyTrace {
    pub values: Vec<f64>,
}

/// Relative tolerance for flagging an energy increase.
pub const ENERGY_TOLERANCE: f64 = 1e-9;

impl EnergyTrace {
    /// Energies of consecutive pairs of a stored trajectory.
    pub fn from_trajectory<T: Scalar>(forms: &AssembledForms<T>, trajectory: &[StressPair<T>], dt: T) -> Self {
        let values = trajectory.windows(2).map(|w| to_f64(discrete_energy(forms, &w[0], &w[1], dt))).collect();
        Self { values }
    }

    pub fn push(&mut self, e: f64) {
        self.values.push(e);
    }

    fn relative_step(&self, i: usize) -> f64 {
        let (a, b) = (self.values[i], self.values[i + 1]);
        if b <= a {
            return 0.0;
        }
        (b - a) / a.abs().max(f64::MIN_POSITIVE)
    }

    /// Largest `(E_{i+1} − E_i)/E_i` over increasing steps (0 if none).
    pub fn max_relative_increase(&self) -> f64 {
        (0..self.values.len().saturating_sub(1)).map(|i| self.relative_step(i)).fold(0.0, f64::max)
    }

    /// Steps whose relative increase exceeds `tol`.
    pub fn increases(&self, tol: f64) -> Vec<usize> {
        (0..self.values.len().saturating_sub(1)).filter(|&i| self.relative_step(i) > tol).collect()
    }

    /// `max_i |E_i − E_0| / E_0`.
    pub fn max_relative_drift(&self) -> f64 {
        let Some(&e0) = self.values.first() else { return 0.0 };
        let d = self.values.iter().map(|e| (e - e0).abs()).fold(0.0, f64::max);
        if d == 0.0 {
            0.0
        } else {
            d / e0.abs().max(f64::MIN_POSITIVE)
        }
    }
}

/// Discrete inf-sup constant of the divergence and skew constraints on the
/// conforming stress space: the smallest singular value of
/// `q ↦ ((div j_ω⁺q, ·), (j_ω⁺q, ·))` measured with the 𝔖 norm on the
/// stress side and the L² norms of rotations and displacements.
/// Dense; meant for small meshes.
pub fn inf_sup_constant<T: Scalar>(space: &FeSpace<T>) -> Result<T> {
    let dm = space.dofmap();
    let (ns, nr) = (dm.n_stress(), dm.n_rotation());
    let ne = space.mesh().num_elements();
    let nl = dm.n_lower;
    let nu = 2 * nl * ne;
    let mut norm = DMatrix::zeros(ns, ns);
    let mut b = DMatrix::zeros(nr + nu, ns);
    let mut w = DVector::zeros(nr + nu);
    for e in 0..ne {
        let ops = space.element(e);
        let sr = dm.stress_range(e);
        let m = sr.len();
        let local = ops.gram() + ops.pullback_sym(&ops.tensor_div_div());
        norm.view_mut((sr.start, sr.start), (m, m)).copy_from(&local);
        let rr = dm.rotation_range(e);
        b.view_mut((rr.start, sr.start), (nl, m)).copy_from(&ops.skew());
        let u0 = nr + 2 * nl * e;
        b.view_mut((u0, sr.start), (2 * nl, m)).copy_from(&ops.div_coupling(false));
        let det = ops.geom.det.abs();
        w.rows_mut(rr.start, nl).fill(det + det);
        w.rows_mut(u0, 2 * nl).fill(det);
    }
    let bt = to_dense(&assemble_trace_coupling(space));
    let gram = bt.transpose() * &bt;
    let eig = SymmetricEigen::new(gram);
    let top = eig.eigenvalues.iter().fold(T::zero(), |a, &v| a.max(v.abs()));
    let cut = top * (T::default_epsilon() * lit::<T>(1e4)).max(lit::<T>(1e-10));
    let kept: Vec<usize> = (0..ns).filter(|&i| eig.eigenvalues[i] <= cut).collect();
    let z = DMatrix::from_fn(ns, kept.len(), |i, j| eig.eigenvectors[(i, kept[j])]);
    let nz = z.transpose() * &norm * &z;
    let chol = nz
        .cholesky()
        .ok_or_else(|| Error::Factorization("inf-sup norm matrix is not positive definite".into()))?;
    let mut bz = b * &z;
    for i in 0..nr + nu {
        let s = T::one() / w[i].sqrt();
        bz.row_mut(i).scale_mut(s);
    }
    let s = &bz * chol.solve(&bz.transpose());
    let lmin = SymmetricEigen::new(s).eigenvalues.iter().fold(T::max_value().unwrap_or(T::one()), |a, &v| a.min(v));
    Ok(lmin.max(T::zero()).sqrt())
}
