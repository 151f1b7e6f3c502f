use std::collections::{BTreeMap, HashMap};

use super::{edge_key, Mesh};
use crate::scalar::{lit, Point, Scalar};

/// Splits every triangle into four through its edge midpoints.
/// Subdomain tags and boundary markers are inherited; the mesh size halves.
pub fn refine_uniform<T: Scalar>(mesh: &Mesh<T>) -> Mesh<T> {
    let mut vertices = mesh.vertices().to_vec();
    let mut midpoint: HashMap<[usize; 2], usize> = HashMap::new();
    let mut mid = |a: usize, b: usize, vertices: &mut Vec<Point<T>>| -> usize {
        *midpoint.entry(edge_key(a, b)).or_insert_with(|| {
            vertices.push((vertices[a] + vertices[b]) * lit::<T>(0.5));
            vertices.len() - 1
        })
    };
    let mut elements = Vec::with_capacity(4 * mesh.num_elements());
    let mut subdomains = Vec::with_capacity(4 * mesh.num_elements());
    let mut new_markers = BTreeMap::new();
    for (e, &[a, b, c]) in mesh.elements().iter().enumerate() {
        let ab = mid(a, b, &mut vertices);
        let bc = mid(b, c, &mut vertices);
        let ca = mid(c, a, &mut vertices);
        elements.extend_from_slice(&[[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]]);
        subdomains.extend_from_slice(&[mesh.subdomain(e); 4]);
    }
    for (&[a, b], &m) in mesh.boundary_markers() {
        let c = mid(a, b, &mut vertices);
        new_markers.insert(edge_key(a, c), m);
        new_markers.insert(edge_key(c, b), m);
    }
    Mesh::new(vertices, elements, subdomains, new_markers)
        .expect("refinement of a valid mesh is valid")
}

/// Structured `nx` x `ny` mesh of a rectangle, each cell split along its
/// (x0,y0)-(x1,y1) diagonal. With `split_x`, elements whose centroid lies left of
/// the line get subdomain 1 and the rest subdomain 2; otherwise all are 1.
/// Boundary edges carry marker 0 (Dirichlet).
pub fn rectangle<T: Scalar>(
    nx: usize,
    ny: usize,
    x_range: [T; 2],
    y_range: [T; 2],
    split_x: Option<T>,
) -> Mesh<T> {
    assert!(nx > 0 && ny > 0, "rectangle needs at least one cell per direction");
    let idx = |i: usize, j: usize| j * (nx + 1) + i;
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            let x = x_range[0] + (x_range[1] - x_range[0]) * lit::<T>(i as f64 / nx as f64);
            let y = y_range[0] + (y_range[1] - y_range[0]) * lit::<T>(j as f64 / ny as f64);
            vertices.push(Point::new(x, y));
        }
    }
    let mut elements = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let (v00, v10, v11, v01) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
            elements.push([v00, v10, v11]);
            elements.push([v00, v11, v01]);
        }
    }
    let subdomains = elements
        .iter()
        .map(|el| {
            let cx = (vertices[el[0]].x + vertices[el[1]].x + vertices[el[2]].x) / lit::<T>(3.0);
            match split_x {
                Some(s) if cx > s => 2,
                _ => 1,
            }
        })
        .collect();
    Mesh::new(vertices, elements, subdomains, BTreeMap::new()).expect("structured mesh is valid")
}
