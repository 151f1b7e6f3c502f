use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use super::{edge_key, Mesh};
use crate::error::{Error, Result};
use crate::scalar::{lit, to_f64, Point, Scalar};

/// Loads a mesh, choosing the Gmsh reader for `.msh` files and the native
/// format otherwise.
pub fn load_mesh<T: Scalar>(path: &Path) -> Result<Mesh<T>> {
    let text = std::fs::read_to_string(path)?;
    match path.extension().and_then(|e| e.to_str()) {
        Some("msh") => parse_gmsh(&text),
        _ => parse_native(&text),
    }
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    last: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        Self { inner: text.lines().enumerate(), last: 0 }
    }

    /// Next non-empty line with `#` comments stripped.
    fn next_tokens(&mut self) -> Option<Vec<&'a str>> {
        for (i, line) in self.inner.by_ref() {
            self.last = i + 1;
            let content = line.split('#').next().unwrap_or("");
            let tokens: Vec<&str> = content.split_whitespace().collect();
            if !tokens.is_empty() {
                return Some(tokens);
            }
        }
        None
    }

    fn expect(&mut self, n: usize, what: &str) -> Result<Vec<&'a str>> {
        let tokens = self.next_tokens().ok_or_else(|| self.error(format!("missing {what}")))?;
        if tokens.len() != n {
            return Err(self.error(format!("expected {n} fields for {what}, found {}", tokens.len())));
        }
        Ok(tokens)
    }

    fn error(&self, msg: String) -> Error {
        Error::Parse { line: self.last, msg }
    }

    fn parse<F: std::str::FromStr>(&self, token: &str) -> Result<F> {
        token.parse().map_err(|_| self.error(format!("cannot parse '{token}'")))
    }
}

/// Native ASCII format (0-based indices, `#` starts a comment):
///
/// ```text
/// nv ne
/// x y                 (nv lines)
/// v0 v1 v2 subdomain  (ne lines, counter-clockwise)
/// a b marker          (optional trailing lines tagging boundary edges)
/// ```
///
/// Untagged boundary edges get marker 0 (Dirichlet).
pub fn parse_native<T: Scalar>(text: &str) -> Result<Mesh<T>> {
    let mut lines = Lines::new(text);
    let header = lines.expect(2, "header 'nv ne'")?;
    let nv: usize = lines.parse(header[0])?;
    let ne: usize = lines.parse(header[1])?;
    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let t = lines.expect(2, "vertex")?;
        let x: f64 = lines.parse(t[0])?;
        let y: f64 = lines.parse(t[1])?;
        vertices.push(Point::new(lit(x), lit(y)));
    }
    let mut elements = Vec::with_capacity(ne);
    let mut subdomains = Vec::with_capacity(ne);
    for _ in 0..ne {
        let t = lines.expect(4, "element")?;
        let v = [lines.parse(t[0])?, lines.parse(t[1])?, lines.parse(t[2])?];
        if v.iter().any(|&i: &usize| i >= nv) {
            return Err(lines.error("vertex index out of range".into()));
        }
        elements.push(v);
        subdomains.push(lines.parse(t[3])?);
    }
    let mut markers = BTreeMap::new();
    while let Some(t) = lines.next_tokens() {
        if t.len() != 3 {
            return Err(lines.error("expected 'a b marker'".into()));
        }
        let a: usize = lines.parse(t[0])?;
        let b: usize = lines.parse(t[1])?;
        markers.insert(edge_key(a, b), lines.parse(t[2])?);
    }
    Mesh::new(vertices, elements, subdomains, markers)
}

pub fn write_native<T: Scalar>(mesh: &Mesh<T>) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{} {}", mesh.num_vertices(), mesh.num_elements());
    for v in mesh.vertices() {
        let _ = writeln!(out, "{:.17e} {:.17e}", to_f64(v.x), to_f64(v.y));
    }
    for (e, el) in mesh.elements().iter().enumerate() {
        let _ = writeln!(out, "{} {} {} {}", el[0], el[1], el[2], mesh.subdomain(e));
    }
    for (k, m) in mesh.boundary_markers() {
        let _ = writeln!(out, "{} {} {}", k[0], k[1], m);
    }
    out
}

/// Minimal Gmsh 2.2 ASCII reader. Triangles take their physical tag as subdomain
/// id (untagged triangles go to subdomain 1), line elements provide boundary
/// markers, clockwise triangles are reoriented.
pub fn parse_gmsh<T: Scalar>(text: &str) -> Result<Mesh<T>> {
    let mut lines = Lines::new(text);
    let mut node_index: HashMap<usize, usize> = HashMap::new();
    let mut vertices: Vec<Point<T>> = Vec::new();
    let mut elements = Vec::new();
    let mut subdomains = Vec::new();
    let mut lines_tagged = Vec::new();
    while let Some(t) = lines.next_tokens() {
        match t[0] {
            "$MeshFormat" => {
                let f = lines.expect(3, "mesh format")?;
                if !f[0].starts_with('2') {
                    return Err(lines.error(format!("unsupported Gmsh version {}", f[0])));
                }
                if f[1] != "0" {
                    return Err(lines.error("binary Gmsh files are not supported".into()));
                }
                lines.expect(1, "$EndMeshFormat")?;
            }
            "$Nodes" => {
                let c = lines.expect(1, "node count")?[0];
                let n: usize = lines.parse(c)?;
                for _ in 0..n {
                    let f = lines.expect(4, "node")?;
                    let id: usize = lines.parse(f[0])?;
                    let x: f64 = lines.parse(f[1])?;
                    let y: f64 = lines.parse(f[2])?;
                    node_index.insert(id, vertices.len());
                    vertices.push(Point::new(lit(x), lit(y)));
                }
                lines.expect(1, "$EndNodes")?;
            }
            "$Elements" => {
                let c = lines.expect(1, "element count")?[0];
                let n: usize = lines.parse(c)?;
                for _ in 0..n {
                    let f = lines.next_tokens().ok_or_else(|| lines.error("missing element".into()))?;
                    if f.len() < 3 {
                        return Err(lines.error("short element record".into()));
                    }
                    let kind: usize = lines.parse(f[1])?;
                    let ntags: usize = lines.parse(f[2])?;
                    let physical: usize = if ntags > 0 { lines.parse(f[3])? } else { 0 };
                    let nodes = &f[3 + ntags..];
                    let lookup = |s: &str| -> Result<usize> {
                        let id: usize = lines.parse(s)?;
                        node_index.get(&id).copied().ok_or_else(|| lines.error(format!("unknown node {id}")))
                    };
                    match kind {
                        1 if nodes.len() == 2 => {
                            lines_tagged.push((lookup(nodes[0])?, lookup(nodes[1])?, physical as i32));
                        }
                        2 if nodes.len() == 3 => {
                            elements.push([lookup(nodes[0])?, lookup(nodes[1])?, lookup(nodes[2])?]);
                            subdomains.push(physical.max(1));
                        }
                        1 | 2 => return Err(lines.error("wrong node count".into())),
                        _ => {}
                    }
                }
                lines.expect(1, "$EndElements")?;
            }
            _ => {
                // Skip unknown sections.
                let end = format!("$End{}", &t[0][1..]);
                while let Some(s) = lines.next_tokens() {
                    if s[0] == end {
                        break;
                    }
                }
            }
        }
    }
    for el in &mut elements {
        let [a, b, c] = *el;
        let d1 = vertices[b] - vertices[a];
        let d2 = vertices[c] - vertices[a];
        if d1.x * d2.y - d1.y * d2.x < T::zero() {
            *el = [a, c, b];
        }
    }
    let markers = lines_tagged.into_iter().map(|(a, b, m)| (edge_key(a, b), m)).collect();
    Mesh::new(vertices, elements, subdomains, markers)
}
