//! Metric-conforming remeshing by local operations: edge split, edge
//! collapse, edge flip and vertex smoothing, on a private working copy.
//!
//! Edges outside the band `[collapse_length, split_length]` are always
//! split or collapsed when the operation is valid. Every other operation is
//! applied only if it lowers the total cost `Σ_K (q_K² − 1)`, where `q_K` is
//! the worse of the element's shape quality and its size ratio to the unit
//! equilateral triangle, both measured in the metric.

use std::collections::{BTreeMap, HashMap};

use log::debug;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::linalg::{sym_eigen, Mat2};
use crate::locate::Locator;
use crate::mesh::{signed_area, BoundaryEdge, Curve, Mesh, Point};

/// Area of the unit equilateral triangle.
pub const UNIT_TRIANGLE_AREA: f64 = 0.433_012_701_892_219_3;

/// Metric evaluated anywhere in the domain.
pub trait MetricSource {
    fn at(&self, p: Point) -> Mat2;
}

/// Linear interpolation of vertex tensors on a background mesh.
pub struct BackgroundMetric<'a> {
    mesh: &'a Mesh,
    tensors: &'a [Mat2],
    locator: Locator,
}

impl<'a> BackgroundMetric<'a> {
    pub fn new(mesh: &'a Mesh, tensors: &'a [Mat2]) -> Self {
        assert_eq!(mesh.num_vertices(), tensors.len());
        BackgroundMetric {
            mesh,
            tensors,
            locator: Locator::new(mesh),
        }
    }
}

impl MetricSource for BackgroundMetric<'_> {
    fn at(&self, p: Point) -> Mat2 {
        let loc = self.locator.locate(p).expect("background mesh is empty");
        let t = self.mesh.triangles()[loc.element];
        self.tensors[t[0]] * loc.bary[0] + self.tensors[t[1]] * loc.bary[1] + self.tensors[t[2]] * loc.bary[2]
    }
}

pub struct ConstantMetric(pub Mat2);

impl MetricSource for ConstantMetric {
    fn at(&self, _p: Point) -> Mat2 {
        self.0
    }
}

impl<F: Fn(Point) -> Mat2> MetricSource for F {
    fn at(&self, p: Point) -> Mat2 {
        self(p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RemeshParams {
    /// Edges longer than this (in the metric) are always split.
    pub split_length: f64,
    /// Edges shorter than this are always collapsed when topology permits.
    pub collapse_length: f64,
    pub max_passes: usize,
    pub smoothing_sweeps: usize,
    pub flip_sweeps: usize,
    /// Steepest-descent steps per vertex relocation.
    pub descent_steps: usize,
    /// Amplitude, in metric units, of the initial random perturbation of
    /// interior vertices whose star is worse than `jitter_threshold`.
    pub jitter: f64,
    pub jitter_threshold: f64,
    pub seed: u64,
}

impl Default for RemeshParams {
    fn default() -> Self {
        RemeshParams {
            split_length: std::f64::consts::SQRT_2,
            collapse_length: std::f64::consts::FRAC_1_SQRT_2,
            max_passes: 20,
            smoothing_sweeps: 2,
            flip_sweeps: 4,
            descent_steps: 3,
            jitter: 0.2,
            jitter_threshold: 1.1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RemeshStats {
    pub passes: usize,
    pub splits: usize,
    pub collapses: usize,
    pub flips: usize,
    pub moves: usize,
}

impl RemeshStats {
    pub fn operations(&self) -> usize {
        self.splits + self.collapses + self.flips + self.moves
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum VertexClass {
    Interior,
    Boundary(u32),
    Corner,
}

/// Shape quality `trace(S)/(2 det(S)^{1/2})` of a triangle in the metric `m`,
/// where `S = Fᵀ m F` and `F` maps the unit equilateral triangle onto it.
/// Equals one exactly for triangles equilateral in the metric.
pub fn shape_quality(p: &[Point; 3], m: &Mat2) -> f64 {
    let area = signed_area(p);
    let det = m.determinant();
    if !(area > 0.0 && det > 0.0) {
        return f64::INFINITY;
    }
    let e = [p[2] - p[1], p[0] - p[2], p[1] - p[0]];
    let sum: f64 = e.iter().map(|v| v.dot(&(m * v))).sum();
    sum * 3f64.sqrt() / (12.0 * area * det.sqrt())
}

/// `q² − 1` with `q = max(shape quality, σ/σ₀, σ₀/σ)` and `σ` the metric area.
fn element_cost(p: &[Point; 3], m: &Mat2, sigma0: f64) -> f64 {
    let sigma = signed_area(p) * m.determinant().max(0.0).sqrt();
    if !(sigma > 0.0) {
        return f64::INFINITY;
    }
    let r = sigma / sigma0;
    let q = shape_quality(p, m).max(r).max(1.0 / r);
    q * q - 1.0
}

fn key(a: usize, b: usize) -> [usize; 2] {
    if a < b { [a, b] } else { [b, a] }
}

/// Relative improvement an optional operation has to achieve.
const GAIN: f64 = 1e-9;

fn improves(after: f64, before: f64) -> bool {
    after < before * (1.0 - GAIN) - 1e-12
}

struct Work<'a> {
    pts: Vec<Point>,
    met: Vec<Mat2>,
    class: Vec<VertexClass>,
    vdead: Vec<bool>,
    tris: Vec<[usize; 3]>,
    tdead: Vec<bool>,
    vtri: Vec<Vec<usize>>,
    bedges: HashMap<[usize; 2], u32>,
    curves: &'a BTreeMap<u32, Curve>,
    metric: &'a dyn MetricSource,
    params: RemeshParams,
    sigma_ref: f64,
}

impl<'a> Work<'a> {
    fn new(mesh: &Mesh, metric: &'a dyn MetricSource, curves: &'a BTreeMap<u32, Curve>, params: RemeshParams) -> Self {
        let nv = mesh.num_vertices();
        let mut vtri = vec![Vec::new(); nv];
        for (k, t) in mesh.triangles().iter().enumerate() {
            for &v in t {
                vtri[v].push(k);
            }
        }
        let mut bedges = HashMap::new();
        let mut tags_at: Vec<Vec<u32>> = vec![Vec::new(); nv];
        for be in mesh.boundary_edges() {
            bedges.insert(key(be.v[0], be.v[1]), be.tag);
            tags_at[be.v[0]].push(be.tag);
            tags_at[be.v[1]].push(be.tag);
        }
        let class = tags_at
            .iter()
            .map(|t| match t.as_slice() {
                [] => VertexClass::Interior,
                // Without a curve the boundary is only known as a polygon.
                [a, b] if a == b && mesh.curves().contains_key(a) => VertexClass::Boundary(*a),
                _ => VertexClass::Corner,
            })
            .collect();
        let pts = mesh.vertices().to_vec();
        let met = pts.iter().map(|&p| metric.at(p)).collect();
        Work {
            pts,
            met,
            class,
            vdead: vec![false; nv],
            tris: mesh.triangles().to_vec(),
            tdead: vec![false; mesh.num_triangles()],
            vtri,
            bedges,
            curves,
            metric,
            params,
            sigma_ref: UNIT_TRIANGLE_AREA,
        }
    }

    fn length(&self, a: usize, b: usize) -> f64 {
        let e = self.pts[b] - self.pts[a];
        let m = (self.met[a] + self.met[b]) * 0.5;
        e.dot(&(m * e)).max(0.0).sqrt()
    }

    /// Distance of a metric length outside the `[collapse, split]` band.
    fn excess(&self, l: f64) -> f64 {
        (l - self.params.split_length).max(self.params.collapse_length - l).max(0.0)
    }

    fn corners(&self, t: &[usize; 3]) -> [Point; 3] {
        t.map(|v| self.pts[v])
    }

    fn tri_metric(&self, t: &[usize; 3]) -> Mat2 {
        (self.met[t[0]] + self.met[t[1]] + self.met[t[2]]) / 3.0
    }

    fn quality(&self, t: &[usize; 3]) -> f64 {
        shape_quality(&self.corners(t), &self.tri_metric(t))
    }

    fn cost(&self, t: &[usize; 3]) -> f64 {
        element_cost(&self.corners(t), &self.tri_metric(t), self.sigma_ref)
    }

    /// Cost of a triangle given by explicit corners and vertex metrics.
    fn cost_of(&self, p: [Point; 3], m: [&Mat2; 3]) -> f64 {
        element_cost(&p, &((m[0] + m[1] + m[2]) / 3.0), self.sigma_ref)
    }

    fn star_cost(&self, v: usize) -> f64 {
        self.vtri[v].iter().map(|&k| self.cost(&self.tris[k])).sum()
    }

    fn edge_tris(&self, a: usize, b: usize) -> Vec<usize> {
        self.vtri[a]
            .iter()
            .copied()
            .filter(|&k| self.tris[k].contains(&b))
            .collect()
    }

    fn neighbors(&self, v: usize) -> Vec<usize> {
        let mut n: Vec<usize> = self.vtri[v]
            .iter()
            .flat_map(|&k| self.tris[k])
            .filter(|&w| w != v)
            .collect();
        n.sort_unstable();
        n.dedup();
        n
    }

    fn edges(&self) -> Vec<[usize; 2]> {
        let mut e: Vec<[usize; 2]> = Vec::with_capacity(3 * self.tris.len() / 2 + 4);
        for (k, t) in self.tris.iter().enumerate() {
            if self.tdead[k] {
                continue;
            }
            for i in 0..3 {
                e.push(key(t[i], t[(i + 1) % 3]));
            }
        }
        e.sort_unstable();
        e.dedup();
        e
    }

    fn add_triangle(&mut self, t: [usize; 3]) {
        let k = self.tris.len();
        self.tris.push(t);
        self.tdead.push(false);
        for &v in &t {
            self.vtri[v].push(k);
        }
    }

    fn kill_triangle(&mut self, k: usize) {
        self.tdead[k] = true;
        let t = self.tris[k];
        for &v in &t {
            self.vtri[v].retain(|&x| x != k);
        }
    }

    fn add_vertex(&mut self, p: Point, m: Mat2, class: VertexClass) -> usize {
        let v = self.pts.len();
        self.pts.push(p);
        self.met.push(m);
        self.class.push(class);
        self.vdead.push(false);
        self.vtri.push(Vec::new());
        v
    }

    /// Parameter along `a → b` that halves the metric length when the
    /// length density varies linearly between the endpoints.
    fn metric_midpoint(&self, a: usize, b: usize) -> f64 {
        let e = self.pts[b] - self.pts[a];
        let la = e.dot(&(self.met[a] * e)).sqrt();
        let lb = e.dot(&(self.met[b] * e)).sqrt();
        if (lb - la).abs() <= 1e-12 * (la + lb) {
            return 0.5;
        }
        let t = (-la + (0.5 * (la * la + lb * lb)).sqrt()) / (lb - la);
        t.clamp(0.25, 0.75)
    }

    /// Splits edge `a–b`; an optional split must lower the cost.
    fn split(&mut self, a: usize, b: usize, mandatory: bool) -> bool {
        let tris = self.edge_tris(a, b);
        if tris.is_empty() {
            return false;
        }
        let tag = self.bedges.get(&key(a, b)).copied();
        let t = self.metric_midpoint(a, b);
        let mut p = self.pts[a] + (self.pts[b] - self.pts[a]) * t;
        let class = match tag {
            Some(tag) => {
                match self.curves.get(&tag) {
                    Some(c) => {
                        p = c.project(p);
                        VertexClass::Boundary(tag)
                    }
                    None => VertexClass::Corner,
                }
            }
            None => VertexClass::Interior,
        };
        let mp = self.metric.at(p);
        let mut planned = Vec::with_capacity(tris.len());
        let (mut before, mut after) = (0.0, 0.0);
        for &k in &tris {
            let tri = self.tris[k];
            let Some(i) = (0..3).find(|&i| key(tri[i], tri[(i + 1) % 3]) == key(a, b)) else {
                return false;
            };
            let (x, y, z) = (tri[i], tri[(i + 1) % 3], tri[(i + 2) % 3]);
            let scale = signed_area(&self.corners(&tri));
            for (q0, q1) in [(self.pts[x], p), (p, self.pts[y])] {
                if !(signed_area(&[q0, q1, self.pts[z]]) > 1e-10 * scale) {
                    return false;
                }
            }
            before += self.cost(&tri);
            after += self.cost_of([self.pts[x], p, self.pts[z]], [&self.met[x], &mp, &self.met[z]])
                + self.cost_of([p, self.pts[y], self.pts[z]], [&mp, &self.met[y], &self.met[z]]);
            planned.push((k, x, y, z));
        }
        if !mandatory && !improves(after, before) {
            return false;
        }
        let m = self.add_vertex(p, mp, class);
        for (k, x, y, z) in planned {
            self.kill_triangle(k);
            self.add_triangle([x, m, z]);
            self.add_triangle([m, y, z]);
        }
        if let Some(tag) = tag {
            self.bedges.remove(&key(a, b));
            self.bedges.insert(key(a, m), tag);
            self.bedges.insert(key(m, b), tag);
        }
        true
    }

    /// Removes vertex `a` by merging it into `b`; an optional collapse must
    /// lower the cost.
    fn collapse(&mut self, a: usize, b: usize, mandatory: bool) -> bool {
        let edge_tag = self.bedges.get(&key(a, b)).copied();
        match self.class[a] {
            VertexClass::Corner => return false,
            VertexClass::Boundary(t) if edge_tag != Some(t) => return false,
            _ => {}
        }
        let shared = self.edge_tris(a, b);
        if shared.len() != if edge_tag.is_some() { 1 } else { 2 } {
            return false;
        }
        // Link condition: the common neighbours of a and b are exactly the
        // apices of the triangles on the edge.
        let mut apices: Vec<usize> = shared
            .iter()
            .map(|&k| *self.tris[k].iter().find(|&&v| v != a && v != b).unwrap())
            .collect();
        apices.sort_unstable();
        let na = self.neighbors(a);
        let nb = self.neighbors(b);
        let common: Vec<usize> = na.iter().copied().filter(|v| nb.binary_search(v).is_ok()).collect();
        if common != apices {
            return false;
        }
        let before = self.star_cost(a);
        let worst_before = self.vtri[a].iter().map(|&k| self.quality(&self.tris[k])).fold(1.0, f64::max);
        let mut after = 0.0;
        let mut worst_after = 1.0f64;
        let mut changed = Vec::new();
        for &k in &self.vtri[a] {
            if shared.contains(&k) {
                continue;
            }
            let t = self.tris[k].map(|v| if v == a { b } else { v });
            let p = self.corners(&t);
            let old_area = signed_area(&self.corners(&self.tris[k]));
            if !(signed_area(&p) > 1e-3 * old_area.max(0.0)) {
                return false;
            }
            if t.iter().any(|&w| w != b && self.length(b, w) > self.params.split_length) {
                return false;
            }
            worst_after = worst_after.max(self.quality(&t));
            after += self.cost(&t);
            changed.push((k, t));
        }
        let acceptable = if mandatory {
            worst_after <= worst_before.max(3.0)
        } else {
            improves(after, before)
        };
        if !acceptable {
            return false;
        }
        for &k in &shared {
            self.kill_triangle(k);
        }
        for (k, t) in changed {
            self.kill_triangle(k);
            self.add_triangle(t);
        }
        self.vdead[a] = true;
        if edge_tag.is_some() {
            self.bedges.remove(&key(a, b));
            let moved: Vec<([usize; 2], u32)> = self
                .bedges
                .iter()
                .filter(|(e, _)| e.contains(&a))
                .map(|(e, t)| (*e, *t))
                .collect();
            for (e, t) in moved {
                self.bedges.remove(&e);
                let c = if e[0] == a { e[1] } else { e[0] };
                self.bedges.insert(key(c, b), t);
            }
        }
        true
    }

    /// Replaces the diagonal `a–b` of the quadrilateral formed by its two
    /// triangles if that lowers the cost.
    fn flip(&mut self, a: usize, b: usize) -> bool {
        if self.bedges.contains_key(&key(a, b)) {
            return false;
        }
        let shared = self.edge_tris(a, b);
        if shared.len() != 2 {
            return false;
        }
        let (k1, k2) = (shared[0], shared[1]);
        let t1 = self.tris[k1];
        let i = (0..3).find(|&i| t1[i] == a).unwrap();
        // Orient so that (a, b, c) is the counter-clockwise first triangle.
        let (a, b) = if t1[(i + 1) % 3] == b { (a, b) } else { (b, a) };
        let c = *t1.iter().find(|&&v| v != a && v != b).unwrap();
        let d = *self.tris[k2].iter().find(|&&v| v != a && v != b).unwrap();
        if self.neighbors(c).binary_search(&d).is_ok() {
            return false;
        }
        let n1 = [a, d, c];
        let n2 = [d, b, c];
        let scale = signed_area(&self.corners(&self.tris[k1])) + signed_area(&self.corners(&self.tris[k2]));
        if !(signed_area(&self.corners(&n1)) > 1e-10 * scale && signed_area(&self.corners(&n2)) > 1e-10 * scale) {
            return false;
        }
        if self.excess(self.length(c, d)) > self.excess(self.length(a, b)) {
            return false;
        }
        let before = self.cost(&self.tris[k1]) + self.cost(&self.tris[k2]);
        let after = self.cost(&n1) + self.cost(&n2);
        if !improves(after, before) {
            return false;
        }
        self.kill_triangle(k1);
        self.kill_triangle(k2);
        self.add_triangle(n1);
        self.add_triangle(n2);
        true
    }

    /// Moves `v` to the best of a few candidate positions if that lowers the
    /// cost of its star. Boundary vertices slide along their curve and
    /// corners never move.
    fn smooth(&mut self, v: usize) -> bool {
        let class = self.class[v];
        if class == VertexClass::Corner || self.vdead[v] || self.vtri[v].is_empty() {
            return false;
        }
        let nbrs: Vec<usize> = match class {
            VertexClass::Boundary(_) => self
                .neighbors(v)
                .into_iter()
                .filter(|&w| self.bedges.contains_key(&key(v, w)))
                .collect(),
            _ => self.neighbors(v),
        };
        if nbrs.is_empty() {
            return false;
        }
        let x = self.pts[v];
        let mut candidates = Vec::with_capacity(6);
        // Average of the points at unit metric distance from each neighbour.
        let mut spring = Point::zeros();
        for &w in &nbrs {
            let l = self.length(v, w).max(1e-300);
            spring += self.pts[w] + (x - self.pts[w]) / l;
        }
        candidates.push(spring / nbrs.len() as f64);
        // Centroid of the star weighted by metric area.
        let (mut centroid, mut weight) = (Point::zeros(), 0.0);
        for &k in &self.vtri[v] {
            let t = self.tris[k];
            let c = self.corners(&t);
            let s = signed_area(&c) * self.tri_metric(&t).determinant().max(0.0).sqrt();
            centroid += (c[0] + c[1] + c[2]) * (s / 3.0);
            weight += s;
        }
        if weight > 0.0 {
            candidates.push(centroid / weight);
        }
        // Short probes along the principal directions of the metric.
        let (l, q) = sym_eigen(&self.met[v]);
        for i in 0..2 {
            let d: Point = q.column(i).into_owned() * (0.1 / l[i].max(1e-300).sqrt());
            candidates.push(x + d);
            candidates.push(x - d);
        }
        let before = self.star_cost(v);
        let old_m = self.met[v];
        let star = self.neighbors(v);
        let old_excess: Vec<f64> = star.iter().map(|&w| self.excess(self.length(v, w))).collect();
        // Star cost at `p`, or `None` if the move inverts an element or
        // pushes an edge further out of the length band.
        let eval = |w: &mut Self, p: Point| -> Option<(f64, Point, Mat2)> {
            let mut p = p;
            if let VertexClass::Boundary(tag) = class {
                if let Some(c) = w.curves.get(&tag) {
                    p = c.project(p);
                }
            }
            w.pts[v] = p;
            w.met[v] = w.metric.at(p);
            let ok = star.iter().zip(&old_excess).all(|(&u, &e)| w.excess(w.length(v, u)) <= e)
                && w.vtri[v].iter().all(|&k| signed_area(&w.corners(&w.tris[k])) > 0.0);
            ok.then(|| (w.star_cost(v), p, w.met[v]))
        };
        let mut best: Option<(f64, Point, Mat2)> = None;
        let consider = |w: &mut Self, best: &mut Option<(f64, Point, Mat2)>, target: Point| {
            let shift = target - x;
            if shift.dot(&(old_m * shift)).sqrt() < 1e-3 {
                return;
            }
            if let Some(c) = eval(w, target) {
                if improves(c.0, before) && best.as_ref().is_none_or(|b| c.0 < b.0) {
                    *best = Some(c);
                }
            }
        };
        for target in candidates {
            for step in [1.0, 0.5] {
                consider(self, &mut best, x + (target - x) * step);
            }
        }
        // Steepest descent in coordinates where the metric at `v` is the identity.
        let (l, q) = sym_eigen(&old_m);
        let axes: [Point; 2] = [0, 1].map(|i| q.column(i).into_owned() / l[i].max(1e-300).sqrt());
        let mut y = best.as_ref().map_or(x, |b| b.1);
        let mut fy = best.as_ref().map_or(before, |b| b.0);
        for _ in 0..self.params.descent_steps {
            let h = 1e-3;
            let mut g = [0.0; 2];
            for i in 0..2 {
                let (Some(fp), Some(fm)) = (eval(self, y + axes[i] * h), eval(self, y - axes[i] * h)) else {
                    break;
                };
                g[i] = (fp.0 - fm.0) / (2.0 * h);
            }
            let gn = (g[0] * g[0] + g[1] * g[1]).sqrt();
            if !(gn > 1e-12) {
                break;
            }
            let dir = (axes[0] * g[0] + axes[1] * g[1]) / -gn;
            let mut step = 0.2;
            let mut moved = false;
            while step > 1e-3 {
                if let Some(c) = eval(self, y + dir * step) {
                    if c.0 < fy {
                        y = c.1;
                        fy = c.0;
                        moved = true;
                        break;
                    }
                }
                step *= 0.5;
            }
            if !moved {
                break;
            }
        }
        consider(self, &mut best, y);
        let (p, m) = best.map_or((x, old_m), |(_, p, m)| (p, m));
        self.pts[v] = p;
        self.met[v] = m;
        best.is_some()
    }

    /// Randomly displaces interior vertices of poor stars, which lets the
    /// optimisation leave structured configurations such as right-angled
    /// lattices.
    fn jitter(&mut self) {
        let amp = self.params.jitter;
        if !(amp > 0.0) {
            return;
        }
        let mut rng = StdRng::seed_from_u64(self.params.seed);
        for v in 0..self.pts.len() {
            let (s0, s1): (f64, f64) = (rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5));
            if self.class[v] != VertexClass::Interior {
                continue;
            }
            let worst = self.vtri[v].iter().map(|&k| self.quality(&self.tris[k])).fold(1.0, f64::max);
            if worst < self.params.jitter_threshold {
                continue;
            }
            let (l, q) = sym_eigen(&self.met[v]);
            let x = self.pts[v];
            let d: Point = q.column(0).into_owned() * (amp * s0 / l[0].max(1e-300).sqrt())
                + q.column(1).into_owned() * (amp * s1 / l[1].max(1e-300).sqrt());
            self.pts[v] = x + d;
            if self.vtri[v].iter().all(|&k| signed_area(&self.corners(&self.tris[k])) > 0.0) {
                self.met[v] = self.metric.at(self.pts[v]);
            } else {
                self.pts[v] = x;
            }
        }
    }

    /// Sets the size reference to the current mean metric area.
    fn refresh_reference(&mut self) {
        let (mut vol, mut n) = (0.0, 0usize);
        for (k, t) in self.tris.iter().enumerate() {
            if !self.tdead[k] {
                vol += signed_area(&self.corners(t)) * self.tri_metric(t).determinant().max(0.0).sqrt();
                n += 1;
            }
        }
        if n > 0 && vol > 0.0 {
            self.sigma_ref = vol / n as f64;
        }
    }

    fn split_pass(&mut self) -> usize {
        let mut cand: Vec<(f64, [usize; 2])> = self
            .edges()
            .into_iter()
            .map(|[a, b]| (self.length(a, b), [a, b]))
            .filter(|(l, _)| *l > 1.0)
            .collect();
        cand.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)));
        let mut n = 0;
        for (_, [a, b]) in cand {
            let l = self.length(a, b);
            if l > 1.0 && self.split(a, b, l > self.params.split_length) {
                n += 1;
            }
        }
        n
    }

    fn collapse_pass(&mut self) -> usize {
        let mut cand: Vec<(f64, [usize; 2])> = self
            .edges()
            .into_iter()
            .map(|[a, b]| (self.length(a, b), [a, b]))
            .filter(|(l, _)| *l < 1.0)
            .collect();
        cand.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
        let mut n = 0;
        for (_, [a, b]) in cand {
            if self.vdead[a] || self.vdead[b] || self.edge_tris(a, b).is_empty() {
                continue;
            }
            let l = self.length(a, b);
            if l >= 1.0 {
                continue;
            }
            let mandatory = l < self.params.collapse_length;
            if self.collapse(a, b, mandatory) || self.collapse(b, a, mandatory) {
                n += 1;
            }
        }
        n
    }

    fn flip_pass(&mut self) -> usize {
        let mut total = 0;
        for _ in 0..self.params.flip_sweeps {
            let n = self.edges().into_iter().filter(|&[a, b]| self.flip(a, b)).count();
            total += n;
            if n == 0 {
                break;
            }
        }
        total
    }

    fn smooth_pass(&mut self) -> usize {
        let mut n = 0;
        for _ in 0..self.params.smoothing_sweeps {
            for v in 0..self.pts.len() {
                if self.smooth(v) {
                    n += 1;
                }
            }
        }
        n
    }

    fn into_mesh(self) -> Mesh {
        let mut map = vec![usize::MAX; self.pts.len()];
        let mut vertices = Vec::new();
        for (v, p) in self.pts.iter().enumerate() {
            if !self.vdead[v] && !self.vtri[v].is_empty() {
                map[v] = vertices.len();
                vertices.push(*p);
            }
        }
        let triangles: Vec<[usize; 3]> = self
            .tris
            .iter()
            .zip(&self.tdead)
            .filter(|(_, d)| !**d)
            .map(|(t, _)| t.map(|v| map[v]))
            .collect();
        let mut boundary_edges: Vec<BoundaryEdge> = self
            .bedges
            .iter()
            .map(|(e, &tag)| BoundaryEdge { v: [map[e[0]], map[e[1]]], tag })
            .collect();
        boundary_edges.sort();
        Mesh::from_parts(vertices, triangles, boundary_edges, self.curves.clone())
    }
}

/// Remeshes `mesh` towards unit edge lengths in `metric`. The input mesh is
/// left untouched; every local operation that would invert an element or
/// break conformity is skipped.
pub fn remesh_with(mesh: &Mesh, metric: &dyn MetricSource, params: RemeshParams) -> (Mesh, RemeshStats) {
    let curves = mesh.curves().clone();
    let mut w = Work::new(mesh, metric, &curves, params);
    let mut stats = RemeshStats::default();
    w.jitter();
    for pass in 0..params.max_passes {
        w.refresh_reference();
        let s = w.split_pass();
        let c = w.collapse_pass();
        w.refresh_reference();
        let f = w.flip_pass();
        let m = w.smooth_pass();
        let f2 = w.flip_pass();
        stats.passes = pass + 1;
        stats.splits += s;
        stats.collapses += c;
        stats.flips += f + f2;
        stats.moves += m;
        debug!("remesh pass {pass}: {s} splits, {c} collapses, {} flips, {m} moves", f + f2);
        if s + c + f + m + f2 == 0 {
            break;
        }
    }
    (w.into_mesh(), stats)
}
