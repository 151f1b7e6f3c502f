use nalgebra::{DMatrix, Matrix4};

use super::FeSpace;
use crate::materials::Material;
use crate::mesh::{ElementGeometry, FacetTopology};
use crate::scalar::{Point, Scalar};

/// Element-level view used to build local matrices.
///
/// "Tensor space" quantities act on the 4n coefficients of a single tensor
/// field; they are pulled back to the local stress pair through `j_ω⁺`.
pub struct ElementOps<'a, T: Scalar> {
    pub space: &'a FeSpace<T>,
    pub e: usize,
    pub geom: ElementGeometry<T>,
    pub material: Material<T>,
    pub viscoelastic: bool,
}

fn kron_identity<T: Scalar>(op: &Matrix4<T>, n: usize, scale: T) -> DMatrix<T> {
    let mut m = DMatrix::zeros(4 * n, 4 * n);
    for d in 0..4 {
        for c in 0..4 {
            let v = op[(d, c)] * scale;
            if v != T::zero() {
                for i in 0..n {
                    m[(d * n + i, c * n + i)] = v;
                }
            }
        }
    }
    m
}

impl<'a, T: Scalar> ElementOps<'a, T> {
    pub fn n(&self) -> usize {
        self.space.dofmap().n
    }

    pub fn n_local(&self) -> usize {
        if self.viscoelastic {
            8 * self.n()
        } else {
            4 * self.n()
        }
    }

    /// ω on viscoelastic elements, 0 otherwise.
    pub fn omega(&self) -> T {
        if self.viscoelastic {
            self.material.omega
        } else {
            T::zero()
        }
    }

    /// Right-multiplies a tensor-space row block by `j_ω⁺ = [I, ω I]`.
    pub fn pullback(&self, m: &DMatrix<T>) -> DMatrix<T> {
        if !self.viscoelastic {
            return m.clone();
        }
        let c = m.ncols();
        let mut out = DMatrix::zeros(m.nrows(), 2 * c);
        out.columns_mut(0, c).copy_from(m);
        out.columns_mut(c, c).copy_from(&(m * self.material.omega));
        out
    }

    /// `j_ω⁺ᵀ K j_ω⁺` for a symmetric tensor-space matrix.
    pub fn pullback_sym(&self, k: &DMatrix<T>) -> DMatrix<T> {
        let right = self.pullback(k);
        if !self.viscoelastic {
            return right;
        }
        let c = k.nrows();
        let mut out = DMatrix::zeros(2 * c, right.ncols());
        out.rows_mut(0, c).copy_from(&right);
        out.rows_mut(c, c).copy_from(&(&right * self.material.omega));
        out
    }

    fn block_diag(&self, gamma: DMatrix<T>, zeta: Option<DMatrix<T>>) -> DMatrix<T> {
        let c = gamma.nrows();
        match zeta {
            Some(z) if self.viscoelastic => {
                let mut out = DMatrix::zeros(2 * c, 2 * c);
                out.view_mut((0, 0), (c, c)).copy_from(&gamma);
                out.view_mut((c, c), (c, c)).copy_from(&z);
                out
            }
            _ => gamma,
        }
    }

    /// `A(j_ω p, j_ω q) = (Aγ, η) + ω² (Vζ, τ)`.
    pub fn mass_a(&self) -> DMatrix<T> {
        let n = self.n();
        let g = kron_identity(&self.material.c.inverse_matrix(), n, self.geom.det);
        let z = self.viscoelastic.then(|| {
            let w = self.material.omega;
            kron_identity(&self.material.relaxed().inverse_matrix(), n, self.geom.det * w * w)
        });
        self.block_diag(g, z)
    }

    /// `(ω V ζ, τ)`, zero on the γ block.
    pub fn damping(&self) -> DMatrix<T> {
        let n = self.n();
        let g = DMatrix::zeros(4 * n, 4 * n);
        let z = self.viscoelastic.then(|| {
            kron_identity(&self.material.relaxed().inverse_matrix(), n, self.geom.det * self.material.omega)
        });
        self.block_diag(g, z)
    }

    /// `(j_ω p, j_ω q) = (γ, η) + ω² (ζ, τ)` (the basis is orthonormal).
    pub fn gram(&self) -> DMatrix<T> {
        let c = 4 * self.n();
        let g = DMatrix::identity(c, c) * self.geom.det;
        let w = self.material.omega;
        let z = self.viscoelastic.then(|| DMatrix::identity(c, c) * (self.geom.det * w * w));
        self.block_diag(g, z)
    }

    /// Row-wise divergence of the tensor basis at reference point `xi` (2 x 4n).
    pub fn div_at(&self, xi: &Point<T>) -> DMatrix<T> {
        let n = self.n();
        let grads = self.space.basis().eval_grad(xi);
        let mut d = DMatrix::zeros(2, 4 * n);
        for (i, g) in grads.iter().enumerate() {
            let g = self.geom.grad_to_physical(g);
            for a in 0..2 {
                for b in 0..2 {
                    d[(a, (2 * a + b) * n + i)] = g[b];
                }
            }
        }
        d
    }

    /// `τ n` of the tensor basis at `xi` (2 x 4n).
    pub fn normal_trace_at(&self, xi: &Point<T>, normal: &Point<T>) -> DMatrix<T> {
        let n = self.n();
        let phi = self.space.basis().eval(xi);
        let mut t = DMatrix::zeros(2, 4 * n);
        for (i, &v) in phi.iter().enumerate() {
            for a in 0..2 {
                for b in 0..2 {
                    t[(a, (2 * a + b) * n + i)] = v * normal[b];
                }
            }
        }
        t
    }

    /// Tensor-space `(div τ, div η)`, unweighted.
    pub fn tensor_div_div(&self) -> DMatrix<T> {
        let rule = self.space.volume_rule();
        let n = self.n();
        let mut k = DMatrix::zeros(4 * n, 4 * n);
        for q in 0..rule.len() {
            let d = self.div_at(&rule.xi(q));
            k += d.transpose() * d * (rule.weights[q] * self.geom.det);
        }
        k
    }

    /// `(div j_ω⁺p, div j_ω⁺q)_ρ`.
    pub fn div_div(&self) -> DMatrix<T> {
        self.pullback_sym(&(self.tensor_div_div() / self.material.rho))
    }

    /// `(s, j_ω⁺q)` for skew `s = φ_l [[0,1],[-1,0]]`, `l < dim P_{k-1}` (rows).
    pub fn skew(&self) -> DMatrix<T> {
        let n = self.n();
        let nl = self.space.dofmap().n_lower;
        let mut b = DMatrix::zeros(nl, 4 * n);
        for l in 0..nl {
            b[(l, n + l)] = self.geom.det;
            b[(l, 2 * n + l)] = -self.geom.det;
        }
        self.pullback(&b)
    }

    /// `(v, div j_ω⁺q)` for `v = φ_l e_a` in `[P_{k-1}]²`, optionally ρ-weighted.
    /// Rows are component-major `a * dim P_{k-1} + l`.
    pub fn div_coupling(&self, weighted: bool) -> DMatrix<T> {
        let rule = self.space.volume_rule();
        let n = self.n();
        let nl = self.space.dofmap().n_lower;
        let scale = if weighted { T::one() / self.material.rho } else { T::one() };
        let mut b = DMatrix::zeros(2 * nl, 4 * n);
        for q in 0..rule.len() {
            let xi = rule.xi(q);
            let d = self.div_at(&xi);
            let phi = self.space.basis().eval(&xi);
            let w = rule.weights[q] * self.geom.det * scale;
            for a in 0..2 {
                for l in 0..nl {
                    for c in 0..4 * n {
                        b[(a * nl + l, c)] += w * phi[l] * d[(a, c)];
                    }
                }
            }
        }
        self.pullback(&b)
    }

    /// Facet quadrature on the segment `vertices` as `(s, weight * length, xi)`.
    pub fn facet_points(&self, vertices: [usize; 2]) -> Vec<(T, T, Point<T>)> {
        let mesh = self.space.mesh();
        let rule = self.space.line_rule();
        let a = mesh.vertices()[vertices[0]];
        let b = mesh.vertices()[vertices[1]];
        let len = (b - a).norm();
        rule.points
            .iter()
            .zip(&rule.weights)
            .map(|(&s, &w)| (s, w * len, self.geom.to_reference(&FacetTopology::point(mesh, vertices, s))))
            .collect()
    }

    /// `(φ, j_ω⁺q n_K)_F` for the facet trace basis (rows `comp * (k+1) + j`),
    /// with `n_K` the outward normal of this element on its local edge.
    pub fn facet_coupling(&self, local_edge: usize, vertices: [usize; 2]) -> DMatrix<T> {
        let k = self.space.dofmap().k;
        let n = self.n();
        let normal = self.geom.outward_normal(local_edge);
        let mut b = DMatrix::zeros(2 * (k + 1), 4 * n);
        for (s, w, xi) in self.facet_points(vertices) {
            let t = self.normal_trace_at(&xi, &normal);
            let theta = self.space.facet_basis().eval(s);
            for a in 0..2 {
                for (j, th) in theta.iter().enumerate() {
                    for c in 0..4 * n {
                        b[(a * (k + 1) + j, c)] += w * *th * t[(a, c)];
                    }
                }
            }
        }
        self.pullback(&b)
    }
}

impl<'a, T: Scalar> ElementOps<'a, T> {
    /// Rows of `B_ψ` owned by this element (its interior facets, in local edge
    /// order) and their global trace indices.
    pub fn trace_block(&self) -> (DMatrix<T>, Vec<usize>) {
        let space = self.space;
        let dm = space.dofmap();
        let fd = dm.facet_dim();
        let facets: Vec<(usize, usize)> = space.facets().element_facets[self.e]
            .iter()
            .enumerate()
            .filter_map(|(l, r)| match *r {
                crate::mesh::FacetRef::Interior(f) => Some((l, f)),
                crate::mesh::FacetRef::Boundary(_) => None,
            })
            .collect();
        let mut b = DMatrix::zeros(fd * facets.len(), self.n_local());
        let mut dofs = Vec::with_capacity(fd * facets.len());
        for (slot, &(l, f)) in facets.iter().enumerate() {
            let block = self.facet_coupling(l, space.facets().interior[f].vertices);
            b.rows_mut(slot * fd, fd).copy_from(&block);
            dofs.extend(dm.trace_range(f));
        }
        (b, dofs)
    }
}
