use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::{CondensedSystem, FeSpace, LocalProblem, PairField, StressPair};
use crate::error::Result;
use crate::scalar::{Scalar, Tensor};

/// Result of Ξ_h with its auxiliary rotation and displacement.
#[derive(Clone, Debug)]
pub struct Projection<T: Scalar> {
    pub pair: StressPair<T>,
    pub rotation: DVector<T>,
    pub displacement: DVector<T>,
}

/// The elliptic projector Ξ_h: a mixed problem over 𝔖_h × ℚ_h × 𝐔_h with the
/// pair inner product `(j_ω p, j_ω q)`, solved by hybridization. Factored once.
pub struct EllipticProjector<'a, T: Scalar> {
    space: &'a FeSpace<T>,
    system: CondensedSystem<T>,
}

impl<'a, T: Scalar> EllipticProjector<'a, T> {
    pub fn new(space: &'a FeSpace<T>) -> Result<Self> {
        let dm = space.dofmap();
        let problems = (0..dm.num_elements())
            .into_par_iter()
            .map(|e| {
                let ops = space.element(e);
                let ns = ops.n_local();
                let br = ops.skew();
                let bu = ops.div_coupling(true);
                let (nr, nu) = (br.nrows(), bu.nrows());
                let size = ns + nr + nu;
                let mut m = DMatrix::zeros(size, size);
                m.view_mut((0, 0), (ns, ns)).copy_from(&ops.gram());
                m.view_mut((ns, 0), (nr, ns)).copy_from(&br);
                m.view_mut((0, ns), (ns, nr)).copy_from(&br.transpose());
                m.view_mut((ns + nr, 0), (nu, ns)).copy_from(&bu);
                m.view_mut((0, ns + nr), (ns, nu)).copy_from(&bu.transpose());
                let (bpsi, trace_dofs) = ops.trace_block();
                let mut coupling = DMatrix::zeros(size, trace_dofs.len());
                coupling.view_mut((0, 0), (ns, trace_dofs.len())).copy_from(&(-bpsi.transpose()));
                LocalProblem { matrix: m, coupling, trace_dofs }
            })
            .collect();
        Ok(Self { space, system: CondensedSystem::new(problems, dm.n_trace())? })
    }

    pub fn space(&self) -> &FeSpace<T> {
        self.space
    }

    /// Local right-hand sides `((j_ω p, j_ω q), (s, j_ω⁺p), (v, div j_ω⁺p)_ρ)`.
    fn local_rhs(&self, p: &dyn PairField<T>) -> Vec<DVector<T>> {
        let space = self.space;
        let dm = space.dofmap();
        let rule = space.volume_rule();
        (0..dm.num_elements())
            .into_par_iter()
            .map(|e| {
                let ops = space.element(e);
                let (n, nl) = (dm.n, dm.n_lower);
                let ns = ops.n_local();
                let sub = space.mesh().subdomain(e);
                let w_omega = ops.omega();
                let mut b = DVector::zeros(ns + 3 * nl);
                for q in 0..rule.len() {
                    let xi = rule.xi(q);
                    let x = ops.geom.map(&xi);
                    let w = rule.weights[q] * ops.geom.det;
                    let phi = space.basis().eval(&xi);
                    let gamma = p.gamma(&x, sub);
                    let zeta = if ops.viscoelastic { p.zeta(&x, sub) } else { Tensor::zeros() };
                    let sigma = gamma + zeta * w_omega;
                    let div = p.div_stress(&x, sub) / ops.material.rho;
                    for c in 0..4 {
                        let (gc, zc) = (gamma[(c / 2, c % 2)], zeta[(c / 2, c % 2)]);
                        for i in 0..n {
                            b[c * n + i] += w * gc * phi[i];
                            if ops.viscoelastic {
                                b[4 * n + c * n + i] += w * w_omega * w_omega * zc * phi[i];
                            }
                        }
                    }
                    for l in 0..nl {
                        b[ns + l] += w * (sigma[(0, 1)] - sigma[(1, 0)]) * phi[l];
                        b[ns + nl + l] += w * div.x * phi[l];
                        b[ns + 2 * nl + l] += w * div.y * phi[l];
                    }
                }
                b
            })
            .collect()
    }

    pub fn project(&self, p: &dyn PairField<T>) -> Projection<T> {
        let dm = self.space.dofmap();
        let (x, _) = self.system.solve(&self.local_rhs(p));
        let mut pair = DVector::zeros(dm.n_stress());
        let mut rotation = DVector::zeros(dm.n_rotation());
        let mut displacement = DVector::zeros(2 * dm.n_lower * dm.num_elements());
        for (e, xe) in x.iter().enumerate() {
            let sr = dm.stress_range(e);
            let ns = sr.len();
            pair.rows_mut(sr.start, ns).copy_from(&xe.rows(0, ns));
            rotation.rows_mut(dm.rotation_range(e).start, dm.n_lower).copy_from(&xe.rows(ns, dm.n_lower));
            displacement.rows_mut(2 * dm.n_lower * e, 2 * dm.n_lower).copy_from(&xe.rows(ns + dm.n_lower, 2 * dm.n_lower));
        }
        Projection { pair, rotation, displacement }
    }
}
