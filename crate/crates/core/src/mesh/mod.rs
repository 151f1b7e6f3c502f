//! Conforming triangular meshes with subdomain tags, facet skeleton,
//! uniform refinement and a structured generator.

mod facets;
mod io;
mod refine;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use nalgebra::Matrix2;

use crate::error::{Error, Result};
use crate::scalar::{lit, Point, Scalar};

pub use facets::{BoundaryFacet, FacetRef, FacetTopology, InteriorFacet};
pub use io::{load_mesh, parse_gmsh, parse_native, write_native};
pub use refine::{rectangle, refine_uniform};

/// Affine map `x = v0 + J xi` from the reference triangle (0,0), (1,0), (0,1).
#[derive(Clone, Debug)]
pub struct ElementGeometry<T: Scalar> {
    pub vertices: [Point<T>; 3],
    pub jac: Matrix2<T>,
    pub jac_inv: Matrix2<T>,
    pub det: T,
}

impl<T: Scalar> ElementGeometry<T> {
    pub fn new(vertices: [Point<T>; 3]) -> Self {
        let e1 = vertices[1] - vertices[0];
        let e2 = vertices[2] - vertices[0];
        let jac = Matrix2::new(e1.x, e2.x, e1.y, e2.y);
        let det = jac.determinant();
        let jac_inv = Matrix2::new(jac[(1, 1)], -jac[(0, 1)], -jac[(1, 0)], jac[(0, 0)]) / det;
        Self { vertices, jac, jac_inv, det }
    }

    pub fn map(&self, xi: &Point<T>) -> Point<T> {
        self.vertices[0] + self.jac * xi
    }

    pub fn to_reference(&self, x: &Point<T>) -> Point<T> {
        self.jac_inv * (x - self.vertices[0])
    }

    /// Physical gradient from a reference gradient.
    pub fn grad_to_physical(&self, g: &Point<T>) -> Point<T> {
        self.jac_inv.transpose() * g
    }

    pub fn area(&self) -> T {
        self.det * lit::<T>(0.5)
    }

    pub fn centroid(&self) -> Point<T> {
        (self.vertices[0] + self.vertices[1] + self.vertices[2]) / lit::<T>(3.0)
    }

    /// Local edge `e` runs from vertex `(e+1)%3` to `(e+2)%3` (opposite vertex `e`).
    pub fn edge_vertices(&self, e: usize) -> (Point<T>, Point<T>) {
        (self.vertices[(e + 1) % 3], self.vertices[(e + 2) % 3])
    }

    pub fn edge_length(&self, e: usize) -> T {
        let (a, b) = self.edge_vertices(e);
        (b - a).norm()
    }

    pub fn outward_normal(&self, e: usize) -> Point<T> {
        let (a, b) = self.edge_vertices(e);
        let t = b - a;
        Point::new(t.y, -t.x) / t.norm()
    }

    /// Longest edge.
    pub fn diameter(&self) -> T {
        (0..3).map(|e| self.edge_length(e)).fold(T::zero(), |a, b| a.max(b))
    }
}

/// Conforming triangulation. Elements are counter-clockwise; subdomain ids start at 1.
#[derive(Clone, Debug)]
pub struct Mesh<T: Scalar> {
    vertices: Vec<Point<T>>,
    elements: Vec<[usize; 3]>,
    subdomains: Vec<usize>,
    boundary_markers: BTreeMap<[usize; 2], i32>,
}

pub(crate) fn edge_key(a: usize, b: usize) -> [usize; 2] {
    if a < b {
        [a, b]
    } else {
        [b, a]
    }
}

impl<T: Scalar> Mesh<T> {
    /// Builds and validates a mesh. `boundary_markers` maps boundary edges to integer tags.
    pub fn new(
        vertices: Vec<Point<T>>,
        elements: Vec<[usize; 3]>,
        subdomains: Vec<usize>,
        boundary_markers: BTreeMap<[usize; 2], i32>,
    ) -> Result<Self> {
        if elements.len() != subdomains.len() {
            return Err(Error::Topology(format!(
                "{} elements but {} subdomain tags",
                elements.len(),
                subdomains.len()
            )));
        }
        if elements.is_empty() {
            return Err(Error::Topology("mesh has no elements".into()));
        }
        if let Some(&s) = subdomains.iter().find(|&&s| s == 0) {
            return Err(Error::UnknownSubdomain(s));
        }
        let mesh = Self { vertices, elements, subdomains, boundary_markers };
        mesh.validate()?;
        Ok(mesh)
    }

    fn validate(&self) -> Result<()> {
        let nv = self.vertices.len();
        let mut scale = T::zero();
        for (e, el) in self.elements.iter().enumerate() {
            if el.iter().any(|&v| v >= nv) {
                return Err(Error::Topology(format!("element {e} references a missing vertex")));
            }
            if el[0] == el[1] || el[1] == el[2] || el[0] == el[2] {
                return Err(Error::Topology(format!("element {e} repeats a vertex")));
            }
            scale = scale.max(self.geometry(e).diameter());
        }
        for e in 0..self.elements.len() {
            let det = self.geometry(e).det;
            if det < T::zero() {
                return Err(Error::Topology(format!("element {e} is inverted")));
            }
            if det <= scale * scale * lit::<T>(1e-12) {
                return Err(Error::Topology(format!("element {e} is degenerate")));
            }
        }

        // Directed edge usage: a shared edge must appear once in each direction.
        let mut uses: HashMap<[usize; 2], Vec<(usize, bool)>> = HashMap::new();
        for (e, el) in self.elements.iter().enumerate() {
            for l in 0..3 {
                let (a, b) = (el[(l + 1) % 3], el[(l + 2) % 3]);
                uses.entry(edge_key(a, b)).or_default().push((e, a < b));
            }
        }
        let mut boundary: Vec<[usize; 2]> = Vec::new();
        for (key, u) in &uses {
            match u.len() {
                1 => boundary.push(*key),
                2 if u[0].1 != u[1].1 => {}
                2 => {
                    return Err(Error::Topology(format!(
                        "elements {} and {} overlap along edge {:?}",
                        u[0].0, u[1].0, key
                    )))
                }
                _ => {
                    return Err(Error::Topology(format!(
                        "edge {key:?} is shared by {} elements",
                        u.len()
                    )))
                }
            }
        }
        boundary.sort_unstable();

        // A hanging node sits strictly inside an edge used by a single element.
        let candidates: BTreeSet<usize> = boundary.iter().flat_map(|k| k.iter().copied()).collect();
        let tol = lit::<T>(1e-10);
        for key in &boundary {
            let a = self.vertices[key[0]];
            let b = self.vertices[key[1]];
            let t = b - a;
            let len2 = t.norm_squared();
            for &v in &candidates {
                if v == key[0] || v == key[1] {
                    continue;
                }
                let d = self.vertices[v] - a;
                let along = t.dot(&d);
                let cross = t.x * d.y - t.y * d.x;
                if cross.abs() <= tol * len2 && along > tol * len2 && along < (T::one() - tol) * len2 {
                    return Err(Error::Topology(format!(
                        "hanging node {v} on edge {key:?}"
                    )));
                }
            }
        }
        for key in self.boundary_markers.keys() {
            if uses.get(key).map(|u| u.len()) != Some(1) {
                return Err(Error::Topology(format!("marked edge {key:?} is not a boundary edge")));
            }
        }
        Ok(())
    }

    pub fn vertices(&self) -> &[Point<T>] {
        &self.vertices
    }

    pub fn elements(&self) -> &[[usize; 3]] {
        &self.elements
    }

    pub fn num_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn subdomain(&self, e: usize) -> usize {
        self.subdomains[e]
    }

    pub fn subdomains(&self) -> &[usize] {
        &self.subdomains
    }

    pub fn subdomain_ids(&self) -> BTreeSet<usize> {
        self.subdomains.iter().copied().collect()
    }

    /// Fails with the first subdomain id for which `known` is false.
    pub fn check_subdomains(&self, known: impl Fn(usize) -> bool) -> Result<()> {
        match self.subdomain_ids().into_iter().find(|&s| !known(s)) {
            Some(s) => Err(Error::UnknownSubdomain(s)),
            None => Ok(()),
        }
    }

    pub fn boundary_markers(&self) -> &BTreeMap<[usize; 2], i32> {
        &self.boundary_markers
    }

    /// Marker of boundary edge `(a, b)`; unmarked edges report 0.
    pub fn boundary_marker(&self, a: usize, b: usize) -> i32 {
        self.boundary_markers.get(&edge_key(a, b)).copied().unwrap_or(0)
    }

    pub fn geometry(&self, e: usize) -> ElementGeometry<T> {
        let el = self.elements[e];
        ElementGeometry::new([self.vertices[el[0]], self.vertices[el[1]], self.vertices[el[2]]])
    }

    /// Largest element diameter.
    pub fn meshsize(&self) -> T {
        (0..self.num_elements())
            .map(|e| self.geometry(e).diameter())
            .fold(T::zero(), |a, b| a.max(b))
    }

    pub fn area(&self) -> T {
        (0..self.num_elements())
            .map(|e| self.geometry(e).area())
            .fold(T::zero(), |a, b| a + b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square() -> Mesh<f64> {
        let v = vec![
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(1.0, 1.0),
            Point::new(0.0, 1.0),
        ];
        Mesh::new(v, vec![[0, 1, 2], [0, 2, 3]], vec![1, 2], BTreeMap::new()).unwrap()
    }

    #[test]
    fn geometry_maps_reference_vertices() {
        let g = square().geometry(0);
        assert!((g.map(&Point::new(1.0, 0.0)) - Point::new(1.0, 0.0)).norm() < 1e-15);
        assert!((g.map(&Point::new(0.0, 1.0)) - Point::new(1.0, 1.0)).norm() < 1e-15);
        let x = Point::new(0.7, 0.2);
        assert!((g.map(&g.to_reference(&x)) - x).norm() < 1e-15);
        assert!((g.area() - 0.5).abs() < 1e-15);
        let n = g.outward_normal(0);
        assert!((n - Point::new(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn rejects_inverted_element() {
        let v = vec![Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(0.0, 1.0)];
        let err = Mesh::new(v, vec![[0, 2, 1]], vec![1], BTreeMap::new()).unwrap_err();
        assert!(matches!(err, Error::Topology(ref m) if m.contains("inverted")));
    }

    #[test]
    fn rejects_hanging_node() {
        // The lower triangle shares only half of the upper triangle's bottom edge.
        let v = vec![
            Point::new(0.0, 0.0),
            Point::new(2.0, 0.0),
            Point::new(1.0, 1.0),
            Point::new(1.0, 0.0),
            Point::new(0.5, -1.0),
        ];
        let err = Mesh::new(v, vec![[0, 1, 2], [0, 4, 3]], vec![1, 1], BTreeMap::new()).unwrap_err();
        assert!(matches!(err, Error::Topology(ref m) if m.contains("hanging")));
    }

    #[test]
    fn rejects_zero_subdomain_and_overused_edges() {
        let v = vec![Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(0.0, 1.0)];
        assert!(matches!(
            Mesh::new(v.clone(), vec![[0, 1, 2]], vec![0], BTreeMap::new()),
            Err(Error::UnknownSubdomain(0))
        ));
        let m = Mesh::new(v, vec![[0, 1, 2]], vec![3], BTreeMap::new()).unwrap();
        assert!(matches!(m.check_subdomains(|s| s < 3), Err(Error::UnknownSubdomain(3))));
    }

    #[test]
    fn meshsize_and_area() {
        let m = square();
        assert!((m.meshsize() - 2f64.sqrt()).abs() < 1e-15);
        assert!((m.area() - 1.0).abs() < 1e-15);
        assert_eq!(m.subdomain_ids().into_iter().collect::<Vec<_>>(), vec![1, 2]);
    }
}
