use nalgebra::DVector;
use rayon::prelude::*;

use super::{FeSpace, Scheme};
use crate::scalar::{lit, Point, Scalar};

/// Body force `F` (per subdomain, so it may jump across interfaces) and the
/// second time derivative `g̈` of the boundary displacement.
pub trait Loads<T: Scalar>: Sync {
    fn body_force(&self, x: &Point<T>, subdomain: usize, t: T) -> Point<T>;
    fn boundary_acceleration(&self, x: &Point<T>, marker: i32, t: T) -> Point<T>;
}

pub struct NoLoads;

impl<T: Scalar> Loads<T> for NoLoads {
    fn body_force(&self, _: &Point<T>, _: usize, _: T) -> Point<T> {
        Point::zeros()
    }

    fn boundary_acceleration(&self, _: &Point<T>, _: i32, _: T) -> Point<T> {
        Point::zeros()
    }
}

/// Load vector over the stress unknowns at time `t`:
/// `−(F, div_h j_ω⁺q)_ρ + (g̈, j_ω⁺q n)_∂`, plus `({ρ⁻¹F}, [[j_ω⁺q]])` for DG.
pub fn assemble_rhs<T: Scalar>(
    space: &FeSpace<T>,
    loads: &dyn Loads<T>,
    t: T,
    scheme: Scheme,
) -> DVector<T> {
    let dm = space.dofmap();
    let mesh = space.mesh();
    let rule = space.volume_rule();
    let locals: Vec<DVector<T>> = (0..mesh.num_elements())
        .into_par_iter()
        .map(|e| {
            let ops = space.element(e);
            let sub = mesh.subdomain(e);
            let mut b = DVector::zeros(ops.n_local());
            for q in 0..rule.len() {
                let xi = rule.xi(q);
                let f = loads.body_force(&ops.geom.map(&xi), sub, t);
                let d = ops.pullback(&ops.div_at(&xi));
                let w = rule.weights[q] * ops.geom.det / ops.material.rho;
                b -= d.transpose() * f * w;
            }
            b
        })
        .collect();
    let mut out = DVector::zeros(dm.n_stress());
    for (e, b) in locals.iter().enumerate() {
        out.rows_mut(dm.stress_range(e).start, b.len()).copy_from(b);
    }
    for f in &space.facets().boundary {
        let ops = space.element(f.element);
        let normal = ops.geom.outward_normal(f.local_edge);
        let mut b = DVector::zeros(ops.n_local());
        for (_, w, xi) in ops.facet_points(f.vertices) {
            let g = loads.boundary_acceleration(&ops.geom.map(&xi), f.marker, t);
            b += ops.pullback(&ops.normal_trace_at(&xi, &normal)).transpose() * g * w;
        }
        add_at(&mut out, dm.stress_range(f.element).start, &b);
    }
    if scheme == Scheme::Dg {
        let half = lit::<T>(0.5);
        for f in &space.facets().interior {
            let ops = [space.element(f.elements[0]), space.element(f.elements[1])];
            let mut b = [DVector::zeros(ops[0].n_local()), DVector::zeros(ops[1].n_local())];
            for (_, w, xi0) in ops[0].facet_points(f.vertices) {
                let x = ops[0].geom.map(&xi0);
                let mean = (0..2).fold(Point::zeros(), |acc, s| {
                    acc + loads.body_force(&x, mesh.subdomain(f.elements[s]), t) / ops[s].material.rho
                }) * half;
                for s in 0..2 {
                    let xi = ops[s].geom.to_reference(&x);
                    let normal = ops[s].geom.outward_normal(f.local_edges[s]);
                    b[s] += ops[s].pullback(&ops[s].normal_trace_at(&xi, &normal)).transpose() * mean * w;
                }
            }
            for s in 0..2 {
                add_at(&mut out, dm.stress_range(f.elements[s]).start, &b[s]);
            }
        }
    }
    out
}

fn add_at<T: Scalar>(out: &mut DVector<T>, start: usize, b: &DVector<T>) {
    let mut v = out.rows_mut(start, b.len());
    v += b;
}
