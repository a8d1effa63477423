//! Benchmark problems: a reentrant-corner singularity, a non-quadratic
//! variational problem and anisotropic diffusion around a square hole.

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fem::{ExactSolution, Integrand, LinearElliptic, ProblemKind, ProblemSpec};
use crate::linalg::{Mat2, Vec2};
use crate::mesh::{BoundaryEdge, Curve, Mesh, Point};

/// `−Δu = 0` on the sector `r < 1, 0 < θ < π/λ` with `u = r^λ sin(λθ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CornerProblem {
    pub lambda: f64,
}

impl Default for CornerProblem {
    fn default() -> Self {
        CornerProblem { lambda: 4.0 / 7.0 }
    }
}

impl CornerProblem {
    pub fn new(lambda: f64) -> Result<Self> {
        if lambda > 0.5 && lambda < 1.0 {
            Ok(CornerProblem { lambda })
        } else {
            Err(Error::InvalidParameter(format!("lambda = {lambda} must lie in (1/2, 1)")))
        }
    }

    pub fn opening_angle(&self) -> f64 {
        PI / self.lambda
    }

    /// Polar angle in `[0, π/λ]`, robust for points on either straight side.
    pub fn angle(&self, p: Point) -> f64 {
        let theta = p.y.atan2(p.x);
        let gap_mid = 0.5 * (self.opening_angle() - 2.0 * PI);
        if theta < gap_mid { theta + 2.0 * PI } else { theta.max(0.0) }
    }

    pub fn exact_value(&self, p: Point) -> f64 {
        let r = p.norm();
        if r == 0.0 {
            return 0.0;
        }
        r.powf(self.lambda) * (self.lambda * self.angle(p)).sin()
    }

    pub fn exact_gradient(&self, p: Point) -> Vec2 {
        let r = p.norm();
        if r == 0.0 {
            return Vec2::zeros();
        }
        let l = self.lambda;
        let t = (l - 1.0) * self.angle(p);
        Vec2::new(t.sin(), t.cos()) * (l * r.powf(l - 1.0))
    }

    pub fn spec(&self) -> ProblemSpec {
        let c = *self;
        let value: Arc<dyn Fn(Point) -> f64 + Send + Sync> = Arc::new(move |p| c.exact_value(p));
        ProblemSpec {
            name: "corner".into(),
            kind: ProblemKind::LinearElliptic(LinearElliptic {
                diffusion: None,
                source: Arc::new(|_| 0.0),
            }),
            dirichlet: value.clone(),
            exact: Some(ExactSolution {
                value,
                gradient: Arc::new(move |p| c.exact_gradient(p)),
            }),
        }
    }

    /// Fan of concentric rings around the corner with about `target`
    /// triangles. Tags: 1 on `θ = 0`, 2 on the arc, 3 on `θ = π/λ`.
    pub fn mesh(&self, target: usize) -> Mesh {
        let per_ring = 6;
        let rings = ((target as f64 / per_ring as f64).sqrt().round() as usize).max(1);
        sector_fan(self.opening_angle(), rings, per_ring)
    }
}

fn sector_fan(opening: f64, rings: usize, per_ring: usize) -> Mesh {
    let mut vertices = vec![Point::zeros()];
    let mut ring_start = vec![0];
    let mut ring_len = vec![1];
    for i in 1..=rings {
        let r = i as f64 / rings as f64;
        let m = per_ring * i;
        ring_start.push(vertices.len());
        ring_len.push(m + 1);
        for j in 0..=m {
            let t = opening * j as f64 / m as f64;
            vertices.push(Point::new(r * t.cos(), r * t.sin()));
        }
    }
    let angle = |i: usize, j: usize| if i == 0 { 0.0 } else { j as f64 / (ring_len[i] - 1) as f64 };
    let mut triangles = Vec::new();
    for i in 1..=rings {
        let (a0, b0) = (ring_start[i - 1], ring_start[i]);
        let (na, nb) = (ring_len[i - 1], ring_len[i]);
        let (mut ia, mut ib) = (0, 0);
        while ia + 1 < na || ib + 1 < nb {
            let advance_outer = ia + 1 >= na || (ib + 1 < nb && angle(i, ib + 1) <= angle(i - 1, ia + 1));
            if advance_outer {
                triangles.push([a0 + ia, b0 + ib, b0 + ib + 1]);
                ib += 1;
            } else {
                triangles.push([a0 + ia, b0 + ib, a0 + ia + 1]);
                ia += 1;
            }
        }
    }
    let mut boundary_edges = Vec::new();
    for i in 1..=rings {
        let prev_first = ring_start[i - 1];
        let prev_last = ring_start[i - 1] + ring_len[i - 1] - 1;
        boundary_edges.push(BoundaryEdge { v: [prev_first, ring_start[i]], tag: 1 });
        boundary_edges.push(BoundaryEdge { v: [ring_start[i] + ring_len[i] - 1, prev_last], tag: 3 });
    }
    let outer = ring_start[rings];
    for j in 0..ring_len[rings] - 1 {
        boundary_edges.push(BoundaryEdge { v: [outer + j, outer + j + 1], tag: 2 });
    }
    let far = Point::new(opening.cos(), opening.sin());
    let curves = BTreeMap::from([
        (1, Curve::Segment { start: Point::zeros(), end: Point::new(1.0, 0.0) }),
        (2, Curve::Arc { center: Point::zeros(), radius: 1.0 }),
        (3, Curve::Segment { start: far, end: Point::zeros() }),
    ]);
    Mesh::from_parts(vertices, triangles, boundary_edges, curves)
}

/// Structured grid of `nx × ny` cells on `[lo, hi]`, each split into four
/// triangles through its centre; cells with `keep(i, j) == false` are
/// omitted. Open edges are tagged by `tag(a, b)`.
pub fn crossed_grid(
    nx: usize,
    ny: usize,
    lo: Point,
    hi: Point,
    keep: impl Fn(usize, usize) -> bool,
    tag: impl Fn(Point, Point) -> u32,
    curves: BTreeMap<u32, Curve>,
) -> Mesh {
    let mut vertices = Vec::new();
    let mut corner_index: HashMap<(usize, usize), usize> = HashMap::new();
    let pt = |i: f64, j: f64| {
        Point::new(
            lo.x + (hi.x - lo.x) * i / nx as f64,
            lo.y + (hi.y - lo.y) * j / ny as f64,
        )
    };
    let mut triangles = Vec::new();
    for j in 0..ny {
        for i in 0..nx {
            if !keep(i, j) {
                continue;
            }
            let mut id = |a: usize, b: usize, vertices: &mut Vec<Point>| {
                *corner_index.entry((a, b)).or_insert_with(|| {
                    vertices.push(pt(a as f64, b as f64));
                    vertices.len() - 1
                })
            };
            let c00 = id(i, j, &mut vertices);
            let c10 = id(i + 1, j, &mut vertices);
            let c11 = id(i + 1, j + 1, &mut vertices);
            let c01 = id(i, j + 1, &mut vertices);
            let m = vertices.len();
            vertices.push(pt(i as f64 + 0.5, j as f64 + 0.5));
            triangles.push([c00, c10, m]);
            triangles.push([c10, c11, m]);
            triangles.push([c11, c01, m]);
            triangles.push([c01, c00, m]);
        }
    }
    let mut count: HashMap<[usize; 2], usize> = HashMap::new();
    for t in &triangles {
        for i in 0..3 {
            let (a, b) = (t[i], t[(i + 1) % 3]);
            *count.entry([a.min(b), a.max(b)]).or_default() += 1;
        }
    }
    let mut boundary_edges = Vec::new();
    for t in &triangles {
        for i in 0..3 {
            let (a, b) = (t[i], t[(i + 1) % 3]);
            if count[&[a.min(b), a.max(b)]] == 1 {
                boundary_edges.push(BoundaryEdge { v: [a, b], tag: tag(vertices[a], vertices[b]) });
            }
        }
    }
    boundary_edges.sort();
    Mesh::from_parts(vertices, triangles, boundary_edges, curves)
}

fn square_sides(lo: Point, hi: Point, first_tag: u32) -> [(u32, Curve); 4] {
    let c = |a: Point, b: Point| Curve::Segment { start: a, end: b };
    let (p10, p01) = (Point::new(hi.x, lo.y), Point::new(lo.x, hi.y));
    [
        (first_tag, c(lo, p10)),
        (first_tag + 1, c(p10, hi)),
        (first_tag + 2, c(hi, p01)),
        (first_tag + 3, c(p01, lo)),
    ]
}

/// Tag of an edge on the sides of the box `[lo, hi]`, numbered
/// counter-clockwise from the bottom side.
fn side_tag(a: Point, b: Point, lo: Point, hi: Point, first_tag: u32) -> Option<u32> {
    let tol = 1e-9 * (hi - lo).norm();
    let on = |f: &dyn Fn(Point) -> f64| f(a).abs() <= tol && f(b).abs() <= tol;
    if on(&|p| p.y - lo.y) {
        Some(first_tag)
    } else if on(&|p| p.x - hi.x) {
        Some(first_tag + 1)
    } else if on(&|p| p.y - hi.y) {
        Some(first_tag + 2)
    } else if on(&|p| p.x - lo.x) {
        Some(first_tag + 3)
    } else {
        None
    }
}

/// Unit square of `n × n` crossed cells, sides tagged 1–4 counter-clockwise from `y = 0`.
pub fn crossed_unit_square(n: usize) -> Mesh {
    let (lo, hi) = (Point::new(0.0, 0.0), Point::new(1.0, 1.0));
    crossed_grid(
        n,
        n,
        lo,
        hi,
        |_, _| true,
        |a, b| side_tag(a, b, lo, hi, 1).expect("open edge off the square boundary"),
        BTreeMap::from(square_sides(lo, hi, 1)),
    )
}

/// Integrand `(1 + |p|²)^{3/4} + 1000 p_y²`.
#[derive(Debug, Clone, Copy, Default)]
pub struct VariationalIntegrand;

impl Integrand for VariationalIntegrand {
    fn value(&self, _x: Point, _u: f64, p: Vec2) -> f64 {
        (1.0 + p.norm_squared()).powf(0.75) + 1000.0 * p.y * p.y
    }

    fn d_u(&self, _x: Point, _u: f64, _p: Vec2) -> f64 {
        0.0
    }

    fn d_p(&self, _x: Point, _u: f64, p: Vec2) -> Vec2 {
        p * (1.5 * (1.0 + p.norm_squared()).powf(-0.25)) + Vec2::new(0.0, 2000.0 * p.y)
    }

    fn d_pp(&self, _x: Point, _u: f64, p: Vec2) -> Mat2 {
        let s = 1.0 + p.norm_squared();
        Mat2::identity() * (1.5 * s.powf(-0.25)) - p * p.transpose() * (0.75 * s.powf(-1.25))
            + Mat2::new(0.0, 0.0, 0.0, 2000.0)
    }
}

/// Minimizes `∫ (1 + |∇u|²)^{3/4} + 1000 u_y²` on the unit square with
/// `u = 1` on `x ∈ {0, 1}` and `u = 2` on `y ∈ {0, 1}`.
#[derive(Debug, Clone, Copy, Default)]
pub struct VariationalProblem;

impl VariationalProblem {
    pub fn boundary_value(p: Point) -> f64 {
        let tol = 1e-9;
        if p.x.abs() <= tol || (p.x - 1.0).abs() <= tol {
            1.0
        } else {
            2.0
        }
    }

    pub fn spec(&self) -> ProblemSpec {
        ProblemSpec {
            name: "varprob".into(),
            kind: ProblemKind::Variational(Arc::new(VariationalIntegrand)),
            dirichlet: Arc::new(Self::boundary_value),
            exact: None,
        }
    }

    pub fn mesh(&self, target: usize) -> Mesh {
        crossed_unit_square(((target as f64 / 4.0).sqrt().round() as usize).max(2))
    }
}

/// `−∇·(D∇u) = 0` on `[0,1]² \ [4/9,5/9]²`, `u = 0` outside and `u = 2` on
/// the hole, `D = R(θ) diag(1000, 1) R(θ)ᵀ` with `θ = π sin x cos y`.
#[derive(Debug, Clone, Copy, Default)]
pub struct AnisoDiffusionProblem;

impl AnisoDiffusionProblem {
    pub const HOLE: (f64, f64) = (4.0 / 9.0, 5.0 / 9.0);
    /// Tags of the outer square sides; the hole sides are `5..=8`.
    pub const OUTER_TAGS: [u32; 4] = [1, 2, 3, 4];
    pub const INNER_TAGS: [u32; 4] = [5, 6, 7, 8];

    pub fn diffusion(p: Point) -> Mat2 {
        let theta = PI * p.x.sin() * p.y.cos();
        let (s, c) = theta.sin_cos();
        let r = Mat2::new(c, -s, s, c);
        r * Mat2::new(1000.0, 0.0, 0.0, 1.0) * r.transpose()
    }

    pub fn on_hole(p: Point) -> bool {
        let (a, b) = Self::HOLE;
        let tol = 1e-9;
        p.x >= a - tol && p.x <= b + tol && p.y >= a - tol && p.y <= b + tol
    }

    pub fn boundary_value(p: Point) -> f64 {
        if Self::on_hole(p) { 2.0 } else { 0.0 }
    }

    pub fn spec(&self) -> ProblemSpec {
        ProblemSpec {
            name: "anisodiff".into(),
            kind: ProblemKind::LinearElliptic(LinearElliptic {
                diffusion: Some(Arc::new(Self::diffusion)),
                source: Arc::new(|_| 0.0),
            }),
            dirichlet: Arc::new(Self::boundary_value),
            exact: None,
        }
    }

    /// Crossed-cell frame around the hole with about `target` triangles.
    pub fn mesh(&self, target: usize) -> Mesh {
        // 80 of the 81 ninths are meshed, 4 triangles per cell.
        let m = ((target as f64 / (4.0 * 80.0)).sqrt().round() as usize).max(1);
        let n = 9 * m;
        let (lo, hi) = (Point::new(0.0, 0.0), Point::new(1.0, 1.0));
        let (hlo, hhi) = (Point::new(Self::HOLE.0, Self::HOLE.0), Point::new(Self::HOLE.1, Self::HOLE.1));
        let mut curves = BTreeMap::from(square_sides(lo, hi, 1));
        curves.extend(square_sides(hlo, hhi, 5));
        crossed_grid(
            n,
            n,
            lo,
            hi,
            |i, j| !((4 * m..5 * m).contains(&i) && (4 * m..5 * m).contains(&j)),
            |a, b| {
                side_tag(a, b, lo, hi, 1)
                    .or_else(|| side_tag(a, b, hlo, hhi, 5))
                    .expect("open edge off the frame boundary")
            },
            curves,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::sym_eigen;
    use crate::mesh::validate;

    #[test]
    fn corner_mesh_is_valid() {
        let p = CornerProblem::default();
        let mesh = p.mesh(600);
        let r = validate(&mesh);
        assert!(r.is_valid(), "{}", r.summary());
        assert_eq!(mesh.num_triangles(), 6 * 10 * 10);
        let area_exact = 0.5 * p.opening_angle();
        assert!((mesh.total_area() - area_exact).abs() < 0.02 * area_exact);
    }

    #[test]
    fn corner_data_matches_exact_on_boundary() {
        let p = CornerProblem::default();
        let mesh = p.mesh(216);
        for e in mesh.boundary_edges() {
            for &v in &e.v {
                let x = mesh.vertices()[v];
                let expected = if e.tag == 2 { (p.lambda * p.angle(x)).sin() } else { 0.0 };
                assert!((p.exact_value(x) - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn corner_solution_is_harmonic() {
        let p = CornerProblem::default();
        let h = 1e-3;
        for &(r, t) in &[(0.3, 0.5), (0.7, 2.0), (0.5, 4.0), (0.9, 5.2)] {
            let x = Point::new(r * f64::cos(t), r * f64::sin(t));
            let u = |dx: f64, dy: f64| p.exact_value(x + Vec2::new(dx, dy));
            let lap = (u(h, 0.0) + u(-h, 0.0) + u(0.0, h) + u(0.0, -h) - 4.0 * u(0.0, 0.0)) / (h * h);
            assert!(lap.abs() < 1e-4, "Δu = {lap} at {x:?}");
            let g = p.exact_gradient(x);
            let fd = Vec2::new((u(h, 0.0) - u(-h, 0.0)) / (2.0 * h), (u(0.0, h) - u(0.0, -h)) / (2.0 * h));
            assert!((g - fd).norm() < 1e-5);
        }
    }

    #[test]
    fn frame_mesh_tags() {
        let mesh = AnisoDiffusionProblem.mesh(1300);
        let r = validate(&mesh);
        assert!(r.is_valid(), "{}", r.summary());
        assert!((mesh.total_area() - (1.0 - 1.0 / 81.0)).abs() < 1e-12);
        for e in mesh.boundary_edges() {
            let p = mesh.vertices()[e.v[0]];
            let inner = AnisoDiffusionProblem::INNER_TAGS.contains(&e.tag);
            assert_eq!(inner, AnisoDiffusionProblem::on_hole(p));
        }
    }

    #[test]
    fn diffusion_eigenvalues() {
        for &(x, y) in &[(0.1, 0.2), (0.5, 0.9), (0.33, 0.77)] {
            let (l, _) = sym_eigen(&AnisoDiffusionProblem::diffusion(Point::new(x, y)));
            assert!((l[0] / 1000.0 - 1.0).abs() < 1e-9 && (l[1] - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn crossed_square_is_valid() {
        let mesh = crossed_unit_square(3);
        assert!(validate(&mesh).is_valid());
        assert_eq!(mesh.num_triangles(), 36);
        assert_eq!(mesh.boundary_edges().len(), 12);
    }
}
