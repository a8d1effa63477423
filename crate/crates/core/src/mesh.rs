//! Triangulation storage, adjacency, and geometric and metric-geometric queries.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::linalg::{is_spd, Mat2, Vec2};

pub type Point = Vec2;

/// Sentinel for "no triangle" in [`Adjacency::edge_triangles`].
pub const NONE: usize = usize::MAX;

/// Parametric descriptor of a boundary curve. New boundary vertices are
/// snapped onto the curve of their edge's tag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Curve {
    Segment { start: Point, end: Point },
    Arc { center: Point, radius: f64 },
}

impl Curve {
    pub fn project(&self, p: Point) -> Point {
        match *self {
            Curve::Segment { start, end } => {
                let d = end - start;
                let len2 = d.norm_squared();
                if len2 == 0.0 {
                    return start;
                }
                let t = ((p - start).dot(&d) / len2).clamp(0.0, 1.0);
                start + d * t
            }
            Curve::Arc { center, radius } => {
                let r = p - center;
                let n = r.norm();
                if n == 0.0 {
                    center + Vec2::new(radius, 0.0)
                } else {
                    center + r * (radius / n)
                }
            }
        }
    }

    pub fn distance(&self, p: Point) -> f64 {
        (self.project(p) - p).norm()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BoundaryEdge {
    pub v: [usize; 2],
    pub tag: u32,
}

/// Conforming triangulation with tagged boundary edges.
///
/// Meshes are immutable values; element indices identify simplices. The
/// adjacency tables are built lazily on first use.
#[derive(Debug, Clone)]
pub struct Mesh {
    vertices: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    boundary_edges: Vec<BoundaryEdge>,
    curves: BTreeMap<u32, Curve>,
    adjacency: OnceLock<Adjacency>,
}

impl PartialEq for Mesh {
    fn eq(&self, other: &Self) -> bool {
        self.vertices == other.vertices
            && self.triangles == other.triangles
            && self.boundary_edges == other.boundary_edges
            && self.curves == other.curves
    }
}

/// Per-element geometric data of a P1 triangle.
#[derive(Debug, Clone, Copy)]
pub struct ElementGeometry {
    pub area: f64,
    /// `edge_vectors[i]` runs between the two vertices other than `i`,
    /// from `i+1` to `i+2`.
    pub edge_vectors: [Vec2; 3],
    /// Gradients of the three linear nodal basis functions.
    pub p1_gradients: [Vec2; 3],
    pub centroid: Point,
}

impl ElementGeometry {
    pub fn new(p: &[Point; 3]) -> Self {
        let e = [p[2] - p[1], p[0] - p[2], p[1] - p[0]];
        let twice = cross(p[1] - p[0], p[2] - p[0]);
        // ∇φ_i is the inward normal of the opposite edge scaled by 1/(2|K|).
        let g = e.map(|ei| Vec2::new(-ei.y, ei.x) / twice);
        ElementGeometry {
            area: 0.5 * twice,
            edge_vectors: e,
            p1_gradients: g,
            centroid: (p[0] + p[1] + p[2]) / 3.0,
        }
    }

    pub fn gradient(&self, values: [f64; 3]) -> Vec2 {
        self.p1_gradients[0] * values[0]
            + self.p1_gradients[1] * values[1]
            + self.p1_gradients[2] * values[2]
    }
}

pub fn cross(a: Vec2, b: Vec2) -> f64 {
    a.x * b.y - a.y * b.x
}

pub fn signed_area(p: &[Point; 3]) -> f64 {
    0.5 * cross(p[1] - p[0], p[2] - p[0])
}

impl Mesh {
    /// Builds a mesh and rejects it if [`validate`] reports any violation.
    pub fn new(
        vertices: Vec<Point>,
        triangles: Vec<[usize; 3]>,
        boundary_edges: Vec<BoundaryEdge>,
        curves: BTreeMap<u32, Curve>,
    ) -> Result<Self> {
        let mesh = Self::from_parts(vertices, triangles, boundary_edges, curves);
        let report = validate(&mesh);
        if report.is_valid() {
            Ok(mesh)
        } else {
            Err(Error::InvalidMesh(report.summary()))
        }
    }

    /// Builds a mesh without validation.
    pub fn from_parts(
        vertices: Vec<Point>,
        triangles: Vec<[usize; 3]>,
        boundary_edges: Vec<BoundaryEdge>,
        curves: BTreeMap<u32, Curve>,
    ) -> Self {
        Mesh {
            vertices,
            triangles,
            boundary_edges,
            curves,
            adjacency: OnceLock::new(),
        }
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary_edges(&self) -> &[BoundaryEdge] {
        &self.boundary_edges
    }

    pub fn curves(&self) -> &BTreeMap<u32, Curve> {
        &self.curves
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn corners(&self, k: usize) -> [Point; 3] {
        self.triangles[k].map(|v| self.vertices[v])
    }

    pub fn geometry(&self, k: usize) -> ElementGeometry {
        ElementGeometry::new(&self.corners(k))
    }

    pub fn area(&self, k: usize) -> f64 {
        signed_area(&self.corners(k))
    }

    pub fn total_area(&self) -> f64 {
        (0..self.num_triangles()).map(|k| self.area(k)).sum()
    }

    pub fn bounding_box(&self) -> (Point, Point) {
        let mut lo = Vec2::repeat(f64::INFINITY);
        let mut hi = Vec2::repeat(f64::NEG_INFINITY);
        for p in &self.vertices {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        (lo, hi)
    }

    /// Adjacency tables; panics if the mesh is not conforming. Use
    /// [`build_adjacency`] for a fallible variant.
    pub fn adjacency(&self) -> &Adjacency {
        self.adjacency
            .get_or_init(|| build_adjacency(self).expect("adjacency of a non-conforming mesh"))
    }

    /// Per-vertex flag: true for vertices on a boundary edge.
    pub fn boundary_vertices(&self) -> Vec<bool> {
        let mut on = vec![false; self.num_vertices()];
        for e in &self.boundary_edges {
            on[e.v[0]] = true;
            on[e.v[1]] = true;
        }
        on
    }

    pub fn max_aspect_ratio(&self) -> f64 {
        (0..self.num_triangles())
            .map(|k| aspect_ratio(&self.corners(k)).unwrap_or(f64::INFINITY))
            .fold(0.0, f64::max)
    }
}

/// Edge and star tables of a conforming mesh.
#[derive(Debug, Clone)]
pub struct Adjacency {
    /// Sorted list of edges `(a, b)` with `a < b`.
    pub edges: Vec<[usize; 2]>,
    /// Triangles on either side of each edge; the second entry is [`NONE`]
    /// for boundary edges.
    pub edge_triangles: Vec<[usize; 2]>,
    /// `triangle_edges[k][i]` is the edge opposite local vertex `i`.
    pub triangle_edges: Vec<[usize; 3]>,
    pub vertex_triangles: Vec<Vec<usize>>,
    pub vertex_neighbors: Vec<Vec<usize>>,
    /// Tag of each edge that is a declared boundary edge.
    pub edge_tags: Vec<Option<u32>>,
}

impl Adjacency {
    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edge_index(&self, a: usize, b: usize) -> Option<usize> {
        let key = if a < b { [a, b] } else { [b, a] };
        self.edges.binary_search(&key).ok()
    }

    pub fn is_boundary_edge(&self, e: usize) -> bool {
        self.edge_triangles[e][1] == NONE
    }
}

/// Local vertex pairs of the three edges; edge `i` is opposite vertex `i`.
pub const LOCAL_EDGES: [[usize; 2]; 3] = [[1, 2], [2, 0], [0, 1]];

pub fn build_adjacency(mesh: &Mesh) -> Result<Adjacency> {
    let nt = mesh.num_triangles();
    let nv = mesh.num_vertices();
    let mut half: Vec<([usize; 2], usize, usize)> = Vec::with_capacity(3 * nt);
    for (k, t) in mesh.triangles.iter().enumerate() {
        for (i, &[a, b]) in LOCAL_EDGES.iter().enumerate() {
            let (va, vb) = (t[a], t[b]);
            if va >= nv || vb >= nv {
                return Err(Error::InvalidMesh(format!(
                    "triangle {k} references vertex beyond {nv}"
                )));
            }
            half.push(([va.min(vb), va.max(vb)], k, i));
        }
    }
    half.sort_unstable();
    let mut edges = Vec::with_capacity(half.len() / 2 + 1);
    let mut edge_triangles = Vec::with_capacity(half.len() / 2 + 1);
    let mut triangle_edges = vec![[NONE; 3]; nt];
    let mut i = 0;
    while i < half.len() {
        let key = half[i].0;
        let mut j = i;
        while j < half.len() && half[j].0 == key {
            j += 1;
        }
        if j - i > 2 {
            return Err(Error::InvalidMesh(format!(
                "edge {key:?} shared by {} triangles (first: {})",
                j - i,
                half[i].1
            )));
        }
        let e = edges.len();
        edges.push(key);
        let second = if j - i == 2 { half[i + 1].1 } else { NONE };
        edge_triangles.push([half[i].1, second]);
        for h in &half[i..j] {
            triangle_edges[h.1][h.2] = e;
        }
        i = j;
    }
    let mut edge_tags = vec![None; edges.len()];
    for be in &mesh.boundary_edges {
        let key = [be.v[0].min(be.v[1]), be.v[0].max(be.v[1])];
        let e = edges.binary_search(&key).map_err(|_| {
            Error::InvalidMesh(format!("boundary edge {:?} is not a mesh edge", be.v))
        })?;
        if edge_triangles[e][1] != NONE {
            return Err(Error::InvalidMesh(format!(
                "boundary edge {:?} is shared by two triangles",
                be.v
            )));
        }
        edge_tags[e] = Some(be.tag);
    }
    for (e, tris) in edge_triangles.iter().enumerate() {
        if tris[1] == NONE && edge_tags[e].is_none() {
            return Err(Error::InvalidMesh(format!(
                "edge {:?} of triangle {} has no neighbour and no boundary tag",
                edges[e], tris[0]
            )));
        }
    }
    let mut vertex_triangles = vec![Vec::new(); nv];
    for (k, t) in mesh.triangles.iter().enumerate() {
        for &v in t {
            vertex_triangles[v].push(k);
        }
    }
    let mut vertex_neighbors = vec![Vec::new(); nv];
    for &[a, b] in &edges {
        vertex_neighbors[a].push(b);
        vertex_neighbors[b].push(a);
    }
    for n in &mut vertex_neighbors {
        n.sort_unstable();
    }
    Ok(Adjacency {
        edges,
        edge_triangles,
        triangle_edges,
        vertex_triangles,
        vertex_neighbors,
        edge_tags,
    })
}

/// Longest edge divided by the shortest altitude.
pub fn aspect_ratio(p: &[Point; 3]) -> Result<f64> {
    let area = signed_area(p).abs();
    let longest = [(p[1] - p[0]).norm(), (p[2] - p[1]).norm(), (p[0] - p[2]).norm()]
        .into_iter()
        .fold(0.0, f64::max);
    if !(area > 1e-300) || area <= 1e-14 * longest * longest {
        return Err(Error::DegenerateTriangle { area });
    }
    let shortest_altitude = 2.0 * area / longest;
    Ok(longest / shortest_altitude)
}

/// Length of the segment `p → q` in the metric obtained by averaging the
/// two endpoint tensors.
pub fn metric_edge_length(p: Point, q: Point, mp: &Mat2, mq: &Mat2) -> Result<f64> {
    if !is_spd(mp) || !is_spd(mq) {
        return Err(Error::NotSpd(format!("endpoint metrics {mp:?}, {mq:?}")));
    }
    Ok(metric_length_unchecked(q - p, mp, mq))
}

#[inline]
pub(crate) fn metric_length_unchecked(e: Vec2, mp: &Mat2, mq: &Mat2) -> f64 {
    let m = (mp + mq) * 0.5;
    (e.dot(&(m * e))).max(0.0).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConformityViolation {
    /// An edge used by more than two triangles.
    OverSharedEdge { edge: [usize; 2], triangles: Vec<usize> },
    /// A vertex lying in the interior of an edge of a neighbouring triangle.
    HangingNode { edge: [usize; 2], vertex: usize, triangle: usize },
    /// An edge with a single triangle that is not declared on the boundary.
    OpenEdge { edge: [usize; 2], triangle: usize },
    /// A declared boundary edge that is not used by exactly one triangle.
    BadBoundaryEdge { edge: [usize; 2], triangles: usize },
    /// A boundary tag without a curve descriptor, in a mesh that has some.
    UndeclaredTag { edge: [usize; 2], tag: u32 },
    /// A triangle referencing a vertex index that does not exist.
    BadIndex { triangle: usize },
}

#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub orientation: Vec<usize>,
    pub conformity: Vec<ConformityViolation>,
    pub duplicate_vertices: Vec<(usize, usize)>,
    pub min_area: f64,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.orientation.is_empty() && self.conformity.is_empty() && self.duplicate_vertices.is_empty()
    }

    pub fn summary(&self) -> String {
        let mut parts = Vec::new();
        if let Some(k) = self.orientation.first() {
            parts.push(format!(
                "{} non-positive triangles (first {k})",
                self.orientation.len()
            ));
        }
        if let Some(c) = self.conformity.first() {
            parts.push(format!(
                "{} conformity violations (first {c:?})",
                self.conformity.len()
            ));
        }
        if let Some(d) = self.duplicate_vertices.first() {
            parts.push(format!(
                "{} duplicate vertices (first {d:?})",
                self.duplicate_vertices.len()
            ));
        }
        parts.join("; ")
    }
}

/// Reports orientation, conformity and duplicate-vertex problems. Never fails.
pub fn validate(mesh: &Mesh) -> ValidationReport {
    let mut report = ValidationReport {
        min_area: f64::INFINITY,
        ..Default::default()
    };
    let nv = mesh.num_vertices();
    let mut half: Vec<([usize; 2], usize)> = Vec::new();
    for (k, t) in mesh.triangles.iter().enumerate() {
        if t.iter().any(|&v| v >= nv) {
            report.conformity.push(ConformityViolation::BadIndex { triangle: k });
            continue;
        }
        let a = mesh.area(k);
        report.min_area = report.min_area.min(a);
        if !(a > 0.0) {
            report.orientation.push(k);
        }
        for [i, j] in LOCAL_EDGES {
            let (a, b) = (t[i], t[j]);
            half.push(([a.min(b), a.max(b)], k));
        }
    }
    half.sort_unstable();

    let mut declared: BTreeMap<[usize; 2], u32> = BTreeMap::new();
    for be in &mesh.boundary_edges {
        let key = [be.v[0].min(be.v[1]), be.v[0].max(be.v[1])];
        declared.insert(key, be.tag);
        if !mesh.curves.is_empty() && !mesh.curves.contains_key(&be.tag) {
            report
                .conformity
                .push(ConformityViolation::UndeclaredTag { edge: key, tag: be.tag });
        }
    }

    let mut counts: BTreeMap<[usize; 2], Vec<usize>> = BTreeMap::new();
    for (key, k) in &half {
        counts.entry(*key).or_default().push(*k);
    }
    let mut open: Vec<([usize; 2], usize)> = Vec::new();
    for (key, tris) in &counts {
        if tris.len() > 2 {
            report.conformity.push(ConformityViolation::OverSharedEdge {
                edge: *key,
                triangles: tris.clone(),
            });
        } else if tris.len() == 1 && !declared.contains_key(key) {
            open.push((*key, tris[0]));
        } else if tris.len() == 2 && declared.contains_key(key) {
            report.conformity.push(ConformityViolation::BadBoundaryEdge {
                edge: *key,
                triangles: 2,
            });
        }
    }
    for key in declared.keys() {
        if !counts.contains_key(key) {
            report.conformity.push(ConformityViolation::BadBoundaryEdge {
                edge: *key,
                triangles: 0,
            });
        }
    }
    // Open edges: name hanging nodes where another open edge's endpoint lies
    // on the segment.
    let open_vertices: Vec<usize> = {
        let mut v: Vec<usize> = open.iter().flat_map(|(e, _)| *e).collect();
        v.sort_unstable();
        v.dedup();
        v
    };
    for &(edge, triangle) in &open {
        let p = mesh.vertices[edge[0]];
        let q = mesh.vertices[edge[1]];
        let len = (q - p).norm();
        let hanging = open_vertices.iter().copied().find(|&c| {
            if c == edge[0] || c == edge[1] {
                return false;
            }
            let x = mesh.vertices[c];
            let t = (x - p).dot(&(q - p)) / (len * len);
            t > 1e-9 && t < 1.0 - 1e-9 && cross(q - p, x - p).abs() <= 1e-9 * len * len
        });
        report.conformity.push(match hanging {
            Some(vertex) => ConformityViolation::HangingNode {
                edge,
                vertex,
                triangle,
            },
            None => ConformityViolation::OpenEdge { edge, triangle },
        });
    }

    let (lo, hi) = mesh.bounding_box();
    let tol = 1e-12 * (hi - lo).norm();
    let mut order: Vec<usize> = (0..nv).collect();
    order.sort_by(|&a, &b| mesh.vertices[a].x.total_cmp(&mesh.vertices[b].x));
    for (i, &a) in order.iter().enumerate() {
        for &b in &order[i + 1..] {
            if mesh.vertices[b].x - mesh.vertices[a].x > tol {
                break;
            }
            if (mesh.vertices[b] - mesh.vertices[a]).norm() <= tol {
                report.duplicate_vertices.push((a.min(b), a.max(b)));
            }
        }
    }
    if mesh.triangles.is_empty() {
        report.min_area = 0.0;
    }
    report
}

/// Structured mesh of the unit square with one diagonal per cell; boundary
/// sides are tagged 1 (y = 0), 2 (x = 1), 3 (y = 1), 4 (x = 0).
pub fn unit_square(n: usize) -> Mesh {
    rectangle(n, n, Point::new(0.0, 0.0), Point::new(1.0, 1.0))
}

pub fn rectangle(nx: usize, ny: usize, lo: Point, hi: Point) -> Mesh {
    let idx = |i: usize, j: usize| j * (nx + 1) + i;
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            vertices.push(Point::new(
                lo.x + (hi.x - lo.x) * i as f64 / nx as f64,
                lo.y + (hi.y - lo.y) * j as f64 / ny as f64,
            ));
        }
    }
    let mut triangles = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let (a, b, c, d) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
            triangles.push([a, b, c]);
            triangles.push([a, c, d]);
        }
    }
    let mut boundary_edges = Vec::new();
    for i in 0..nx {
        boundary_edges.push(BoundaryEdge { v: [idx(i, 0), idx(i + 1, 0)], tag: 1 });
        boundary_edges.push(BoundaryEdge { v: [idx(i + 1, ny), idx(i, ny)], tag: 3 });
    }
    for j in 0..ny {
        boundary_edges.push(BoundaryEdge { v: [idx(nx, j), idx(nx, j + 1)], tag: 2 });
        boundary_edges.push(BoundaryEdge { v: [idx(0, j + 1), idx(0, j)], tag: 4 });
    }
    let c = |a: Point, b: Point| Curve::Segment { start: a, end: b };
    let curves = BTreeMap::from([
        (1, c(lo, Point::new(hi.x, lo.y))),
        (2, c(Point::new(hi.x, lo.y), hi)),
        (3, c(hi, Point::new(lo.x, hi.y))),
        (4, c(Point::new(lo.x, hi.y), lo)),
    ]);
    Mesh::from_parts(vertices, triangles, boundary_edges, curves)
}
