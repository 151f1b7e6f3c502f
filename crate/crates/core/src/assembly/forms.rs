use nalgebra::DMatrix;
use nalgebra_sparse::CsrMatrix;
use rayon::prelude::*;

use super::sparse::Triplets;
use super::{ElementOps, FeSpace};
use crate::scalar::Scalar;

fn element_blocks<T: Scalar>(
    space: &FeSpace<T>,
    rows: usize,
    row_range: impl Fn(usize) -> std::ops::Range<usize> + Sync,
    block: impl Fn(&ElementOps<'_, T>) -> DMatrix<T> + Sync,
) -> CsrMatrix<T> {
    let dm = space.dofmap();
    let blocks: Vec<DMatrix<T>> =
        (0..dm.num_elements()).into_par_iter().map(|e| block(&space.element(e))).collect();
    let mut t = Triplets::new(rows, dm.n_stress());
    for (e, b) in blocks.iter().enumerate() {
        let r: Vec<usize> = row_range(e).collect();
        let c: Vec<usize> = dm.stress_range(e).collect();
        t.add_block(&r, &c, b);
    }
    t.to_csr()
}

/// `M_A`: `A(j_ω p, j_ω q)`, block diagonal per element.
pub fn assemble_mass_a<T: Scalar>(space: &FeSpace<T>) -> CsrMatrix<T> {
    let dm = space.dofmap();
    element_blocks(space, dm.n_stress(), |e| dm.stress_range(e), |el| el.mass_a())
}

/// `G`: `(ωVζ, τ)`.
pub fn assemble_damping<T: Scalar>(space: &FeSpace<T>) -> CsrMatrix<T> {
    let dm = space.dofmap();
    element_blocks(space, dm.n_stress(), |e| dm.stress_range(e), |el| el.damping())
}

/// `K_div`: `(div_h j_ω⁺p, div_h j_ω⁺q)_ρ`.
pub fn assemble_div_div<T: Scalar>(space: &FeSpace<T>) -> CsrMatrix<T> {
    let dm = space.dofmap();
    element_blocks(space, dm.n_stress(), |e| dm.stress_range(e), |el| el.div_div())
}

/// `B_r`: rows are rotation unknowns.
pub fn assemble_skew_coupling<T: Scalar>(space: &FeSpace<T>) -> CsrMatrix<T> {
    let dm = space.dofmap();
    element_blocks(space, dm.n_rotation(), |e| dm.rotation_range(e), |el| el.skew())
}

/// `B_ψ`: `(φ, [[j_ω⁺q]])` on interior facets; rows are trace unknowns.
pub fn assemble_trace_coupling<T: Scalar>(space: &FeSpace<T>) -> CsrMatrix<T> {
    let dm = space.dofmap();
    let facets = &space.facets().interior;
    let blocks: Vec<[DMatrix<T>; 2]> = facets
        .par_iter()
        .map(|f| {
            [0, 1].map(|s| space.element(f.elements[s]).facet_coupling(f.local_edges[s], f.vertices))
        })
        .collect();
    let mut t = Triplets::new(dm.n_trace(), dm.n_stress());
    for (fi, (f, b)) in facets.iter().zip(&blocks).enumerate() {
        let rows: Vec<usize> = dm.trace_range(fi).collect();
        for s in 0..2 {
            let cols: Vec<usize> = dm.stress_range(f.elements[s]).collect();
            t.add_block(&rows, &cols, &b[s]);
        }
    }
    t.to_csr()
}

/// DG facet matrices `(J_c, J_pen)` with
/// `qᵀ J_c p = ({ρ⁻¹ div_h j_ω⁺p}, [[j_ω⁺q]])` and
/// `qᵀ J_pen p = (a h_F⁻¹ [[j_ω⁺p]], [[j_ω⁺q]])` over interior facets.
pub fn assemble_dg_facet<T: Scalar>(space: &FeSpace<T>, penalty: T) -> (CsrMatrix<T>, CsrMatrix<T>) {
    let dm = space.dofmap();
    let facets = &space.facets().interior;
    let half = T::one() / (T::one() + T::one());
    let blocks: Vec<[[(DMatrix<T>, DMatrix<T>); 2]; 2]> = facets
        .par_iter()
        .map(|f| {
            let ops = [space.element(f.elements[0]), space.element(f.elements[1])];
            let points = ops[0].facet_points(f.vertices);
            let mut out: [[(DMatrix<T>, DMatrix<T>); 2]; 2] = Default::default();
            for s1 in 0..2 {
                for s2 in 0..2 {
                    let n1 = ops[s1].n_local();
                    let n2 = ops[s2].n_local();
                    out[s1][s2] = (DMatrix::zeros(n1, n2), DMatrix::zeros(n1, n2));
                }
            }
            for (_, w, x0) in points {
                let x = ops[0].geom.map(&x0);
                let mut traces = Vec::with_capacity(2);
                let mut divs = Vec::with_capacity(2);
                for s in 0..2 {
                    let xi = ops[s].geom.to_reference(&x);
                    let normal = ops[s].geom.outward_normal(f.local_edges[s]);
                    traces.push(ops[s].pullback(&ops[s].normal_trace_at(&xi, &normal)));
                    divs.push(ops[s].pullback(&ops[s].div_at(&xi)) / ops[s].material.rho);
                }
                for s1 in 0..2 {
                    for s2 in 0..2 {
                        let tt = traces[s1].transpose();
                        out[s1][s2].0 += &tt * &divs[s2] * (w * half);
                        out[s1][s2].1 += &tt * &traces[s2] * (w * penalty / f.length);
                    }
                }
            }
            out
        })
        .collect();
    let mut jc = Triplets::new(dm.n_stress(), dm.n_stress());
    let mut jp = Triplets::new(dm.n_stress(), dm.n_stress());
    for (f, b) in facets.iter().zip(&blocks) {
        for s1 in 0..2 {
            let rows: Vec<usize> = dm.stress_range(f.elements[s1]).collect();
            for s2 in 0..2 {
                let cols: Vec<usize> = dm.stress_range(f.elements[s2]).collect();
                jc.add_block(&rows, &cols, &b[s1][s2].0);
                jp.add_block(&rows, &cols, &b[s1][s2].1);
            }
        }
    }
    (jc.to_csr(), jp.to_csr())
}

/// The global sparse forms of both schemes.
pub struct AssembledForms<T: Scalar> {
    pub mass_a: CsrMatrix<T>,
    pub damping: CsrMatrix<T>,
    pub div_div: CsrMatrix<T>,
    pub skew: CsrMatrix<T>,
    pub trace: CsrMatrix<T>,
    /// `(J_c, J_pen, a)` when assembled for DG.
    pub dg: Option<(CsrMatrix<T>, CsrMatrix<T>, T)>,
}

impl<T: Scalar> AssembledForms<T> {
    pub fn new(space: &FeSpace<T>) -> Self {
        Self {
            mass_a: assemble_mass_a(space),
            damping: assemble_damping(space),
            div_div: assemble_div_div(space),
            skew: assemble_skew_coupling(space),
            trace: assemble_trace_coupling(space),
            dg: None,
        }
    }

    pub fn with_dg(space: &FeSpace<T>, penalty: T) -> Self {
        let mut f = Self::new(space);
        let (jc, jp) = assemble_dg_facet(space, penalty);
        f.dg = Some((jc, jp, penalty));
        f
    }

    /// `K_div − J_c − J_cᵀ + J_pen` (falls back to `K_div` without DG terms).
    pub fn dg_operator(&self) -> CsrMatrix<T> {
        match &self.dg {
            Some((jc, jp, _)) => {
                let jct = jc.transpose();
                let sum = &(&self.div_div - jc) - &jct;
                &sum + jp
            }
            None => self.div_div.clone(),
        }
    }
}
