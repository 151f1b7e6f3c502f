//! Degrees of freedom, element matrices, global forms, right-hand sides, the
//! static-condensation engine and the elliptic projector Ξ_h.

mod dofmap;
mod fields;
mod forms;
mod hybrid;
mod local;
mod projector;
mod rhs;
pub mod sparse;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem_basis::{make_line_quadrature, make_quadrature, FacetBasis, LineRule, QuadratureRule, ScalarBasis};
use crate::materials::{Material, MaterialTable};
use crate::mesh::{FacetTopology, Mesh};
use crate::scalar::{unit_skew, Point, Scalar, Tensor};

pub use dofmap::{DofMap, ElementDofs};
pub use fields::{PairField, ZeroPair};
pub use forms::{
    assemble_damping, assemble_dg_facet, assemble_div_div, assemble_mass_a, assemble_skew_coupling,
    assemble_trace_coupling, AssembledForms,
};
pub use hybrid::{CondensedSystem, LocalProblem};
pub use local::ElementOps;
pub use projector::{EllipticProjector, Projection};
pub use rhs::{assemble_rhs, Loads, NoLoads};

/// Coefficients of a discrete stress pair over the stress unknowns of a [`DofMap`].
pub type StressPair<T> = DVector<T>;

/// Which space discretization a quantity belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Cg,
    Dg,
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Scheme::Cg => "cg",
            Scheme::Dg => "dg",
        })
    }
}

/// Highest supported polynomial order.
pub const MAX_ORDER: usize = 4;

/// Mesh, materials, dof numbering, bases and quadrature for one order `k`.
#[derive(Clone, Debug)]
pub struct FeSpace<T: Scalar> {
    mesh: Mesh<T>,
    facets: FacetTopology<T>,
    materials: MaterialTable<T>,
    dofmap: DofMap,
    basis: ScalarBasis<T>,
    facet_basis: FacetBasis,
    volume_rule: QuadratureRule<T>,
    line_rule: LineRule<T>,
}

impl<T: Scalar> FeSpace<T> {
    pub fn new(mesh: Mesh<T>, materials: MaterialTable<T>, k: usize) -> Result<Self> {
        if k == 0 || k > MAX_ORDER {
            return Err(Error::Config(format!("polynomial order {k} not in 1..={MAX_ORDER}")));
        }
        materials.validate()?;
        mesh.check_subdomains(|j| materials.contains(j))?;
        let facets = FacetTopology::new(&mesh);
        let dofmap = DofMap::build(&mesh, &facets, &materials, k)?;
        Ok(Self {
            basis: ScalarBasis::new(k),
            facet_basis: FacetBasis::new(k),
            volume_rule: make_quadrature(2 * k + 2)?,
            line_rule: make_line_quadrature(2 * k + 1),
            mesh,
            facets,
            materials,
            dofmap,
        })
    }

    pub fn order(&self) -> usize {
        self.dofmap.k
    }

    pub fn mesh(&self) -> &Mesh<T> {
        &self.mesh
    }

    pub fn facets(&self) -> &FacetTopology<T> {
        &self.facets
    }

    pub fn materials(&self) -> &MaterialTable<T> {
        &self.materials
    }

    pub fn dofmap(&self) -> &DofMap {
        &self.dofmap
    }

    pub fn basis(&self) -> &ScalarBasis<T> {
        &self.basis
    }

    pub fn facet_basis(&self) -> &FacetBasis {
        &self.facet_basis
    }

    pub fn volume_rule(&self) -> &QuadratureRule<T> {
        &self.volume_rule
    }

    pub fn line_rule(&self) -> &LineRule<T> {
        &self.line_rule
    }

    pub fn material(&self, e: usize) -> &Material<T> {
        self.materials.get(self.mesh.subdomain(e)).expect("subdomains checked at construction")
    }

    pub fn element(&self, e: usize) -> ElementOps<'_, T> {
        ElementOps {
            space: self,
            e,
            geom: self.mesh.geometry(e),
            material: *self.material(e),
            viscoelastic: self.dofmap.element(e).viscoelastic,
        }
    }

    /// Same mesh and order with different materials. The ζ layout may change.
    pub fn with_materials(&self, materials: MaterialTable<T>) -> Result<Self> {
        Self::new(self.mesh.clone(), materials, self.order())
    }

    fn tensor_at(&self, coeffs: &[T], phi: &[T]) -> Tensor<T> {
        let n = self.dofmap.n;
        let mut t = Tensor::zeros();
        for c in 0..4 {
            t[(c / 2, c % 2)] = (0..n).fold(T::zero(), |s, i| s + coeffs[c * n + i] * phi[i]);
        }
        t
    }

    /// γ of a discrete pair on element `e` at reference point `xi`.
    pub fn eval_gamma(&self, p: &StressPair<T>, e: usize, xi: &Point<T>) -> Tensor<T> {
        let r = self.dofmap.stress_range(e);
        self.tensor_at(&p.as_slice()[r.start..r.start + 4 * self.dofmap.n], &self.basis.eval(xi))
    }

    /// ζ (zero on elastic elements).
    pub fn eval_zeta(&self, p: &StressPair<T>, e: usize, xi: &Point<T>) -> Tensor<T> {
        if !self.dofmap.element(e).viscoelastic {
            return Tensor::zeros();
        }
        let n = self.dofmap.n;
        let r = self.dofmap.stress_range(e);
        self.tensor_at(&p.as_slice()[r.start + 4 * n..r.end], &self.basis.eval(xi))
    }

    /// The physical stress `j_ω⁺ p = γ + ωζ`.
    pub fn eval_stress(&self, p: &StressPair<T>, e: usize, xi: &Point<T>) -> Tensor<T> {
        let w = self.material(e).omega;
        self.eval_gamma(p, e, xi) + self.eval_zeta(p, e, xi) * w
    }

    /// `div j_ω⁺ p` on element `e`.
    pub fn eval_div_stress(&self, p: &StressPair<T>, e: usize, xi: &Point<T>) -> Point<T> {
        let ops = self.element(e);
        let d = ops.pullback(&ops.div_at(xi));
        let v = d * p.rows_range(self.dofmap.stress_range(e));
        Point::new(v[0], v[1])
    }

    /// Rotation tensor `r_h` on element `e`.
    pub fn eval_rotation(&self, r: &DVector<T>, e: usize, xi: &Point<T>) -> Tensor<T> {
        let nl = self.dofmap.n_lower;
        let phi = self.basis.eval(xi);
        let o = self.dofmap.rotation_range(e).start;
        unit_skew::<T>() * (0..nl).fold(T::zero(), |s, l| s + r[o + l] * phi[l])
    }
}
