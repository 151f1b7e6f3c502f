use std::collections::HashMap;

use super::{edge_key, Mesh};
use crate::scalar::{Point, Scalar};

/// Facet shared by two elements. `normal` points out of `elements[0]`.
/// The facet is parametrised by `s` in [0, 1] from `vertices[0]` to `vertices[1]`,
/// with `vertices[0] < vertices[1]`.
#[derive(Clone, Debug)]
pub struct InteriorFacet<T: Scalar> {
    pub elements: [usize; 2],
    pub local_edges: [usize; 2],
    pub vertices: [usize; 2],
    pub normal: Point<T>,
    pub length: T,
}

#[derive(Clone, Debug)]
pub struct BoundaryFacet<T: Scalar> {
    pub element: usize,
    pub local_edge: usize,
    pub vertices: [usize; 2],
    pub normal: Point<T>,
    pub length: T,
    pub marker: i32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FacetRef {
    Interior(usize),
    Boundary(usize),
}

/// Interior/boundary facet skeleton of a mesh.
#[derive(Clone, Debug)]
pub struct FacetTopology<T: Scalar> {
    pub interior: Vec<InteriorFacet<T>>,
    pub boundary: Vec<BoundaryFacet<T>>,
    /// Facet attached to each local edge of each element.
    pub element_facets: Vec<[FacetRef; 3]>,
}

impl<T: Scalar> FacetTopology<T> {
    pub fn new(mesh: &Mesh<T>) -> Self {
        let mut order: Vec<[usize; 2]> = Vec::new();
        let mut owners: HashMap<[usize; 2], Vec<(usize, usize)>> = HashMap::new();
        for (e, el) in mesh.elements().iter().enumerate() {
            for l in 0..3 {
                let key = edge_key(el[(l + 1) % 3], el[(l + 2) % 3]);
                let entry = owners.entry(key).or_default();
                if entry.is_empty() {
                    order.push(key);
                }
                entry.push((e, l));
            }
        }
        let placeholder = FacetRef::Boundary(usize::MAX);
        let mut element_facets = vec![[placeholder; 3]; mesh.num_elements()];
        let mut interior = Vec::new();
        let mut boundary = Vec::new();
        for key in order {
            let o = &owners[&key];
            let (e0, l0) = o[0];
            let g = mesh.geometry(e0);
            let normal = g.outward_normal(l0);
            let length = g.edge_length(l0);
            if o.len() == 2 {
                let (e1, l1) = o[1];
                element_facets[e0][l0] = FacetRef::Interior(interior.len());
                element_facets[e1][l1] = FacetRef::Interior(interior.len());
                interior.push(InteriorFacet {
                    elements: [e0, e1],
                    local_edges: [l0, l1],
                    vertices: key,
                    normal,
                    length,
                });
            } else {
                element_facets[e0][l0] = FacetRef::Boundary(boundary.len());
                boundary.push(BoundaryFacet {
                    element: e0,
                    local_edge: l0,
                    vertices: key,
                    normal,
                    length,
                    marker: mesh.boundary_marker(key[0], key[1]),
                });
            }
        }
        Self { interior, boundary, element_facets }
    }

    /// Point at parameter `s` on the segment between two mesh vertices.
    pub fn point(mesh: &Mesh<T>, vertices: [usize; 2], s: T) -> Point<T> {
        let a = mesh.vertices()[vertices[0]];
        let b = mesh.vertices()[vertices[1]];
        a + (b - a) * s
    }

    /// True when the two sides of an interior facet carry different subdomain tags.
    pub fn is_interface(&self, mesh: &Mesh<T>, f: usize) -> bool {
        let [a, b] = self.interior[f].elements;
        mesh.subdomain(a) != mesh.subdomain(b)
    }
}
