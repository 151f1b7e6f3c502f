use std::ops::Range;

use crate::error::Result;
use crate::fem_basis::dim_p;
use crate::materials::MaterialTable;
use crate::mesh::{FacetTopology, Mesh};
use crate::scalar::Scalar;

/// Offsets of one element's unknowns.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ElementDofs {
    pub stress_offset: usize,
    pub viscoelastic: bool,
    pub rotation_offset: usize,
}

/// Element-major numbering of the stress pair (γ always, ζ on viscoelastic
/// elements), the rotation and the facet trace unknowns.
///
/// Local stress layout: `γ` at `(2a + b) * n + i`, `ζ` at `4n + (2a + b) * n + i`,
/// with `n = dim P_k`. Trace unknowns of interior facet `f` sit at
/// `f * 2(k+1) + comp * (k+1) + j`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DofMap {
    pub k: usize,
    /// dim P_k.
    pub n: usize,
    /// dim P_{k-1}.
    pub n_lower: usize,
    elements: Vec<ElementDofs>,
    n_stress: usize,
    n_rotation: usize,
    n_interior_facets: usize,
}

impl DofMap {
    pub fn build<T: Scalar>(
        mesh: &Mesh<T>,
        facets: &FacetTopology<T>,
        materials: &MaterialTable<T>,
        k: usize,
    ) -> Result<Self> {
        assert!(k >= 1, "polynomial order must be at least 1");
        let n = dim_p(k);
        let n_lower = dim_p(k - 1);
        let mut elements = Vec::with_capacity(mesh.num_elements());
        let (mut s, mut r) = (0, 0);
        for e in 0..mesh.num_elements() {
            let viscoelastic = materials.is_viscoelastic(mesh.subdomain(e))?;
            elements.push(ElementDofs { stress_offset: s, viscoelastic, rotation_offset: r });
            s += if viscoelastic { 8 * n } else { 4 * n };
            r += n_lower;
        }
        Ok(Self {
            k,
            n,
            n_lower,
            elements,
            n_stress: s,
            n_rotation: r,
            n_interior_facets: facets.interior.len(),
        })
    }

    pub fn num_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn element(&self, e: usize) -> ElementDofs {
        self.elements[e]
    }

    pub fn n_stress(&self) -> usize {
        self.n_stress
    }

    pub fn n_rotation(&self) -> usize {
        self.n_rotation
    }

    pub fn n_trace(&self) -> usize {
        self.n_interior_facets * self.facet_dim()
    }

    /// Trace unknowns per interior facet.
    pub fn facet_dim(&self) -> usize {
        2 * (self.k + 1)
    }

    /// Local stress dimension of element `e` (4n or 8n).
    pub fn local_stress_dim(&self, e: usize) -> usize {
        if self.elements[e].viscoelastic {
            8 * self.n
        } else {
            4 * self.n
        }
    }

    pub fn stress_range(&self, e: usize) -> Range<usize> {
        let o = self.elements[e].stress_offset;
        o..o + self.local_stress_dim(e)
    }

    pub fn rotation_range(&self, e: usize) -> Range<usize> {
        let o = self.elements[e].rotation_offset;
        o..o + self.n_lower
    }

    pub fn trace_range(&self, f: usize) -> Range<usize> {
        let d = self.facet_dim();
        f * d..(f + 1) * d
    }

    pub fn gamma_index(&self, e: usize, c: usize, i: usize) -> usize {
        self.elements[e].stress_offset + c * self.n + i
    }

    pub fn zeta_index(&self, e: usize, c: usize, i: usize) -> Option<usize> {
        let d = self.elements[e];
        d.viscoelastic.then(|| d.stress_offset + 4 * self.n + c * self.n + i)
    }

    /// Total number of ζ unknowns.
    pub fn n_zeta(&self) -> usize {
        self.elements.iter().filter(|d| d.viscoelastic).count() * 4 * self.n
    }
}
