//! Triangulations of the unit square, uniform refinement, nested-mesh
//! prolongation, and a small text import format.
//!
//! Built-in meshes split every grid square along the lower-left to
//! upper-right diagonal; this keeps refinements exactly nested and the
//! spectrum of the assembled pencil deterministic across runs.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

const BOUNDARY_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct Mesh {
    pub vertices: Vec<[f64; 2]>,
    pub triangles: Vec<[usize; 3]>,
    /// Non-boundary vertices in ascending vertex order; these carry the
    /// unknowns of the Dirichlet-reduced system.
    pub interior_nodes: Vec<usize>,
    /// Grid spacing 2^-level for built-in meshes, max triangle diameter for
    /// imported ones.
    pub h: f64,
    pub level: u32,
    boundary: Vec<bool>,
    interior_index: Vec<Option<usize>>,
    uniform_family: bool,
}

impl Mesh {
    fn assemble(
        vertices: Vec<[f64; 2]>,
        mut triangles: Vec<[usize; 3]>,
        boundary: Vec<bool>,
        h: f64,
        level: u32,
        uniform_family: bool,
    ) -> Result<Mesh> {
        let nv = vertices.len();
        let mut referenced = vec![false; nv];
        let mut seen = std::collections::BTreeSet::new();
        for tri in triangles.iter_mut() {
            for &v in tri.iter() {
                if v >= nv {
                    return Err(Error::Mesh(format!("triangle references vertex {v} >= {nv}")));
                }
                referenced[v] = true;
            }
            let area2 = signed_area2(&vertices, tri);
            if area2 < 0.0 {
                tri.swap(1, 2); // reorient clockwise triangles
            } else if area2 == 0.0 {
                return Err(Error::Mesh(format!("degenerate triangle {tri:?}")));
            }
            let mut key = *tri;
            key.sort_unstable();
            if !seen.insert(key) {
                return Err(Error::Mesh(format!("repeated triangle {key:?}")));
            }
        }
        if let Some(v) = referenced.iter().position(|r| !r) {
            return Err(Error::Mesh(format!("vertex {v} is not used by any triangle")));
        }
        let interior_nodes: Vec<usize> = (0..nv).filter(|&v| !boundary[v]).collect();
        let mut interior_index = vec![None; nv];
        for (k, &v) in interior_nodes.iter().enumerate() {
            interior_index[v] = Some(k);
        }
        Ok(Mesh { vertices, triangles, interior_nodes, h, level, boundary, interior_index, uniform_family })
    }

    pub fn n_interior(&self) -> usize {
        self.interior_nodes.len()
    }

    pub fn is_boundary(&self, v: usize) -> bool {
        self.boundary[v]
    }

    /// Position of vertex `v` in the interior ordering, if interior.
    pub fn interior_index(&self, v: usize) -> Option<usize> {
        self.interior_index[v]
    }

    pub fn triangle_corners(&self, t: usize) -> [[f64; 2]; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        signed_area2(&self.vertices, &self.triangles[t]) / 2.0
    }

    pub fn total_area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.triangle_area(t)).sum()
    }

    pub fn is_uniform_family(&self) -> bool {
        self.uniform_family
    }
}

fn signed_area2(vertices: &[[f64; 2]], tri: &[usize; 3]) -> f64 {
    let [a, b, c] = *tri;
    let (pa, pb, pc) = (vertices[a], vertices[b], vertices[c]);
    (pb[0] - pa[0]) * (pc[1] - pa[1]) - (pc[0] - pa[0]) * (pb[1] - pa[1])
}

fn on_unit_square_boundary(p: [f64; 2]) -> bool {
    p[0].abs() < BOUNDARY_TOL
        || (p[0] - 1.0).abs() < BOUNDARY_TOL
        || p[1].abs() < BOUNDARY_TOL
        || (p[1] - 1.0).abs() < BOUNDARY_TOL
}

/// Uniform triangulation of (0,1)^2 with 2^level squares per side, each
/// split along the lower-left to upper-right diagonal.
pub fn build_unit_square_mesh(level: u32) -> Result<Mesh> {
    if level == 0 {
        return Err(Error::Mesh("level 0 has no interior nodes".into()));
    }
    let n = 1usize << level;
    let h = 1.0 / n as f64;
    let vid = |i: usize, j: usize| j * (n + 1) + i;
    let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            vertices.push([i as f64 * h, j as f64 * h]);
        }
    }
    let mut triangles = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            let (a, b, c, d) = (vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1));
            triangles.push([a, b, c]);
            triangles.push([a, c, d]);
        }
    }
    let boundary: Vec<bool> = vertices.iter().map(|&p| on_unit_square_boundary(p)).collect();
    Mesh::assemble(vertices, triangles, boundary, h, level, true)
}

/// Split every triangle into four congruent children via edge midpoints.
/// Coarse vertices keep their indices and exact coordinates, so the result
/// is nested in the input.
pub fn refine_uniform(mesh: &Mesh) -> Mesh {
    let mut vertices = mesh.vertices.clone();
    let mut boundary = mesh.boundary.clone();

    // count edge incidence to classify boundary edges
    let mut edge_count: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for tri in &mesh.triangles {
        for (a, b) in tri_edges(tri) {
            *edge_count.entry(ekey(a, b)).or_insert(0) += 1;
        }
    }

    let mut midpoint: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut triangles = Vec::with_capacity(4 * mesh.triangles.len());
    for tri in &mesh.triangles {
        let mut mid = [0usize; 3];
        for (e, (a, b)) in tri_edges(tri).into_iter().enumerate() {
            let key = ekey(a, b);
            mid[e] = *midpoint.entry(key).or_insert_with(|| {
                let pa = vertices[a];
                let pb = vertices[b];
                vertices.push([(pa[0] + pb[0]) / 2.0, (pa[1] + pb[1]) / 2.0]);
                boundary.push(edge_count[&key] == 1);
                vertices.len() - 1
            });
        }
        let [a, b, c] = *tri;
        let [mab, mbc, mca] = mid;
        triangles.push([a, mab, mca]);
        triangles.push([mab, b, mbc]);
        triangles.push([mca, mbc, c]);
        triangles.push([mab, mbc, mca]);
    }
    let h = if mesh.uniform_family {
        mesh.h / 2.0
    } else {
        max_diameter(&vertices, &triangles)
    };
    Mesh::assemble(vertices, triangles, boundary, h, mesh.level + 1, mesh.uniform_family)
        .expect("refinement of a valid mesh is valid")
}

fn tri_edges(tri: &[usize; 3]) -> [(usize, usize); 3] {
    [(tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])]
}

fn ekey(a: usize, b: usize) -> (usize, usize) {
    (a.min(b), a.max(b))
}

fn max_diameter(vertices: &[[f64; 2]], triangles: &[[usize; 3]]) -> f64 {
    let mut d: f64 = 0.0;
    for tri in triangles {
        for (a, b) in tri_edges(tri) {
            let (pa, pb) = (vertices[a], vertices[b]);
            d = d.max(((pa[0] - pb[0]).powi(2) + (pa[1] - pb[1]).powi(2)).sqrt());
        }
    }
    d
}

/// P1 interpolation from coarse interior coefficients to fine interior
/// coefficients; requires `fine` to be `refine_uniform(coarse)`.
pub fn prolongation(coarse: &Mesh, fine: &Mesh) -> Result<CsrMatrix> {
    let key = |p: [f64; 2]| (p[0].to_bits(), p[1].to_bits());
    let mut coarse_vertex: BTreeMap<(u64, u64), usize> = BTreeMap::new();
    for (v, &p) in coarse.vertices.iter().enumerate() {
        coarse_vertex.insert(key(p), v);
    }
    let mut coarse_midpoint: BTreeMap<(u64, u64), (usize, usize)> = BTreeMap::new();
    for tri in &coarse.triangles {
        for (a, b) in tri_edges(tri) {
            let (pa, pb) = (coarse.vertices[a], coarse.vertices[b]);
            let m = [(pa[0] + pb[0]) / 2.0, (pa[1] + pb[1]) / 2.0];
            coarse_midpoint.insert(key(m), (a, b));
        }
    }

    let mut triplets = Vec::new();
    for (fk, &fv) in fine.interior_nodes.iter().enumerate() {
        let p = fine.vertices[fv];
        if let Some(&cv) = coarse_vertex.get(&key(p)) {
            if let Some(ck) = coarse.interior_index(cv) {
                triplets.push((fk, ck, 1.0));
            } else {
                return Err(Error::Mesh(
                    "fine interior node coincides with a coarse boundary node; meshes not nested"
                        .into(),
                ));
            }
        } else if let Some(&(a, b)) = coarse_midpoint.get(&key(p)) {
            for parent in [a, b] {
                if let Some(ck) = coarse.interior_index(parent) {
                    triplets.push((fk, ck, 0.5));
                }
            }
        } else {
            return Err(Error::Mesh(format!(
                "fine node at ({}, {}) is neither a coarse vertex nor an edge midpoint; meshes not nested",
                p[0], p[1]
            )));
        }
    }
    Ok(CsrMatrix::from_triplets(fine.n_interior(), coarse.n_interior(), &triplets))
}

/// Mesh file format: `nv nt`, then nv lines `x y boundary_flag`, then nt
/// lines `i j k` with 0-based vertex indices.
pub fn load_mesh(path: &Path) -> Result<Mesh> {
    let text = std::fs::read_to_string(path)?;
    let mut tokens = text.split_whitespace();
    let mut next = |what: &str| -> Result<&str> {
        tokens.next().ok_or_else(|| Error::Mesh(format!("unexpected end of file reading {what}")))
    };
    let nv: usize = parse(next("vertex count")?, "vertex count")?;
    let nt: usize = parse(next("triangle count")?, "triangle count")?;
    let mut vertices = Vec::with_capacity(nv);
    let mut boundary = Vec::with_capacity(nv);
    for k in 0..nv {
        let x: f64 = parse(next("x")?, &format!("vertex {k} x"))?;
        let y: f64 = parse(next("y")?, &format!("vertex {k} y"))?;
        let flag: u8 = parse(next("flag")?, &format!("vertex {k} boundary flag"))?;
        if flag > 1 {
            return Err(Error::Mesh(format!("vertex {k}: boundary flag must be 0 or 1")));
        }
        vertices.push([x, y]);
        boundary.push(flag == 1);
    }
    let mut triangles = Vec::with_capacity(nt);
    for k in 0..nt {
        let tri = [
            parse(next("i")?, &format!("triangle {k} index"))?,
            parse(next("j")?, &format!("triangle {k} index"))?,
            parse(next("k")?, &format!("triangle {k} index"))?,
        ];
        triangles.push(tri);
    }
    if tokens.next().is_some() {
        return Err(Error::Mesh("trailing data after triangle list".into()));
    }
    let h = max_diameter(&vertices, &triangles);
    Mesh::assemble(vertices, triangles, boundary, h, 0, false)
}

fn parse<T: std::str::FromStr>(s: &str, what: &str) -> Result<T> {
    s.parse().map_err(|_| Error::Mesh(format!("cannot parse {what}: {s:?}")))
}

/// Open control set realized as a union of elements.
#[derive(Debug, Clone)]
pub struct ControlRegion {
    pub element_ids: Vec<usize>,
    pub is_full_domain: bool,
}

impl ControlRegion {
    pub fn full_domain(mesh: &Mesh) -> ControlRegion {
        ControlRegion { element_ids: (0..mesh.triangles.len()).collect(), is_full_domain: true }
    }

    /// Elements whose barycenter lies inside the rectangle.
    pub fn from_rect(mesh: &Mesh, x0: f64, y0: f64, x1: f64, y1: f64) -> Result<ControlRegion> {
        let mut ids = Vec::new();
        for (t, tri) in mesh.triangles.iter().enumerate() {
            let [a, b, c] = *tri;
            let bx = (mesh.vertices[a][0] + mesh.vertices[b][0] + mesh.vertices[c][0]) / 3.0;
            let by = (mesh.vertices[a][1] + mesh.vertices[b][1] + mesh.vertices[c][1]) / 3.0;
            if bx > x0 && bx < x1 && by > y0 && by < y1 {
                ids.push(t);
            }
        }
        if ids.is_empty() {
            return Err(Error::Mesh("control region contains no elements".into()));
        }
        let full = ids.len() == mesh.triangles.len();
        Ok(ControlRegion { element_ids: ids, is_full_domain: full })
    }
}
