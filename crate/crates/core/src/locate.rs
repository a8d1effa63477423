//! Point location in a triangulation through a uniform bucket grid.

use crate::mesh::{cross, Mesh, Point};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Location {
    pub element: usize,
    /// Barycentric coordinates; clamped onto the element for points that
    /// fall outside the mesh.
    pub bary: [f64; 3],
    /// Distance from the query point to the element (zero when inside).
    pub distance: f64,
}

#[derive(Debug, Clone)]
pub struct Locator {
    lo: Point,
    cell: f64,
    nx: usize,
    ny: usize,
    buckets: Vec<Vec<u32>>,
    tris: Vec<[Point; 3]>,
}

impl Locator {
    pub fn new(mesh: &Mesh) -> Self {
        let (lo, hi) = mesh.bounding_box();
        let span = hi - lo;
        let nt = mesh.num_triangles().max(1);
        let target = (nt as f64).sqrt().max(1.0);
        let cell = (span.x.max(span.y) / target).max(1e-300);
        let nx = ((span.x / cell).ceil() as usize).max(1);
        let ny = ((span.y / cell).ceil() as usize).max(1);
        let mut buckets = vec![Vec::new(); nx * ny];
        let tris: Vec<[Point; 3]> = (0..mesh.num_triangles()).map(|k| mesh.corners(k)).collect();
        let mut loc = Locator { lo, cell, nx, ny, buckets: Vec::new(), tris };
        for (k, p) in loc.tris.iter().enumerate() {
            let bl = p[0].inf(&p[1]).inf(&p[2]);
            let bh = p[0].sup(&p[1]).sup(&p[2]);
            let (i0, j0) = loc.cell_of(bl);
            let (i1, j1) = loc.cell_of(bh);
            for j in j0..=j1 {
                for i in i0..=i1 {
                    buckets[j * nx + i].push(k as u32);
                }
            }
        }
        loc.buckets = buckets;
        loc
    }

    fn cell_of(&self, p: Point) -> (usize, usize) {
        let i = ((p.x - self.lo.x) / self.cell).floor().clamp(0.0, (self.nx - 1) as f64) as usize;
        let j = ((p.y - self.lo.y) / self.cell).floor().clamp(0.0, (self.ny - 1) as f64) as usize;
        (i, j)
    }

    /// Locates `p`; points outside the mesh are projected onto the nearest
    /// element. Returns `None` only for an empty mesh.
    pub fn locate(&self, p: Point) -> Option<Location> {
        let (ci, cj) = self.cell_of(p);
        let mut best: Option<Location> = None;
        for &k in &self.buckets[cj * self.nx + ci] {
            let b = barycentric(&self.tris[k as usize], p);
            if b.iter().all(|&x| x >= -1e-12) {
                return Some(Location { element: k as usize, bary: b, distance: 0.0 });
            }
        }
        // Nearest-element search over growing rings of cells.
        let max_ring = self.nx.max(self.ny);
        for ring in 0..=max_ring {
            if let Some(b) = &best {
                if b.distance < (ring as f64 - 1.0).max(0.0) * self.cell {
                    break;
                }
            }
            let (i0, i1) = (ci as isize - ring as isize, ci as isize + ring as isize);
            let (j0, j1) = (cj as isize - ring as isize, cj as isize + ring as isize);
            for j in j0..=j1 {
                for i in i0..=i1 {
                    let on_ring = i == i0 || i == i1 || j == j0 || j == j1;
                    if !on_ring || i < 0 || j < 0 || i >= self.nx as isize || j >= self.ny as isize {
                        continue;
                    }
                    for &k in &self.buckets[j as usize * self.nx + i as usize] {
                        let (bary, d) = closest_point(&self.tris[k as usize], p);
                        if best.is_none_or(|b| d < b.distance) {
                            best = Some(Location { element: k as usize, bary, distance: d });
                        }
                    }
                }
            }
        }
        best
    }
}

pub fn barycentric(t: &[Point; 3], p: Point) -> [f64; 3] {
    let area2 = cross(t[1] - t[0], t[2] - t[0]);
    let b1 = cross(t[2] - t[1], p - t[1]) / area2;
    let b2 = cross(t[0] - t[2], p - t[2]) / area2;
    [b1, b2, 1.0 - b1 - b2]
}

/// Barycentric coordinates of the point of `t` closest to `p`, and the distance.
fn closest_point(t: &[Point; 3], p: Point) -> ([f64; 3], f64) {
    let b = barycentric(t, p);
    if b.iter().all(|&x| x >= 0.0) {
        return (b, 0.0);
    }
    let mut best = ([0.0; 3], f64::INFINITY);
    for i in 0..3 {
        let (a, c) = ((i + 1) % 3, (i + 2) % 3);
        let e = t[c] - t[a];
        let s = ((p - t[a]).dot(&e) / e.norm_squared()).clamp(0.0, 1.0);
        let q = t[a] + e * s;
        let d = (p - q).norm();
        if d < best.1 {
            let mut bb = [0.0; 3];
            bb[a] = 1.0 - s;
            bb[c] = s;
            best = (bb, d);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::unit_square;

    #[test]
    fn locates_interior_points() {
        let mesh = unit_square(7);
        let loc = Locator::new(&mesh);
        for &(x, y) in &[(0.1, 0.2), (0.5, 0.5), (0.99, 0.01), (0.0, 0.0), (1.0, 1.0)] {
            let p = Point::new(x, y);
            let l = loc.locate(p).unwrap();
            assert_eq!(l.distance, 0.0);
            let t = mesh.corners(l.element);
            let back = t[0] * l.bary[0] + t[1] * l.bary[1] + t[2] * l.bary[2];
            assert!((back - p).norm() < 1e-12);
        }
    }

    #[test]
    fn projects_outside_points() {
        let mesh = unit_square(4);
        let loc = Locator::new(&mesh);
        let l = loc.locate(Point::new(1.2, 0.5)).unwrap();
        assert!((l.distance - 0.2).abs() < 1e-12);
        let t = mesh.corners(l.element);
        let back = t[0] * l.bary[0] + t[1] * l.bary[1] + t[2] * l.bary[2];
        assert!((back - Point::new(1.0, 0.5)).norm() < 1e-12);
    }
}
