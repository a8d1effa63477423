//! MEDIT meshes, `.mtr` metric files, CSV tables and SVG renderings.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::adapt::AdaptTrace;
use crate::bench::ConvergenceTable;
use crate::error::{Error, Result};
use crate::fem::SolutionField;
use crate::linalg::Mat2;
use crate::mesh::{BoundaryEdge, Mesh, Point};
use crate::metric::{Basis, MetricField};

/// Column names shared by trace and convergence tables.
pub const CSV_HEADER: [&str; 7] = ["realized_N", "L2_err", "H1_err", "Q_mesh", "min_u", "max_aspect_ratio", "sweeps"];

/// Shortest text that parses back to exactly `x`.
fn num(x: f64) -> String {
    let a = x.abs();
    if a == 0.0 || (1e-5..1e16).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

/// Renders `mesh` in the MEDIT ASCII format. Vertex references carry the
/// smallest boundary tag touching the vertex (0 for interior vertices).
pub fn format_medit(mesh: &Mesh) -> String {
    let mut vref = vec![0u32; mesh.num_vertices()];
    for be in mesh.boundary_edges() {
        for &v in &be.v {
            if vref[v] == 0 || be.tag < vref[v] {
                vref[v] = be.tag;
            }
        }
    }
    let mut s = String::new();
    s.push_str("MeshVersionFormatted 2\n\nDimension 2\n\n");
    let _ = writeln!(s, "Vertices\n{}", mesh.num_vertices());
    for (p, r) in mesh.vertices().iter().zip(&vref) {
        let _ = writeln!(s, "{} {} {r}", num(p.x), num(p.y));
    }
    let _ = writeln!(s, "\nTriangles\n{}", mesh.num_triangles());
    for t in mesh.triangles() {
        let _ = writeln!(s, "{} {} {} 0", t[0] + 1, t[1] + 1, t[2] + 1);
    }
    let _ = writeln!(s, "\nEdges\n{}", mesh.boundary_edges().len());
    for be in mesh.boundary_edges() {
        let _ = writeln!(s, "{} {} {}", be.v[0] + 1, be.v[1] + 1, be.tag);
    }
    s.push_str("\nEnd\n");
    s
}

pub fn write_medit(mesh: &Mesh, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_medit(mesh)).map_err(|e| Error::io(path, e))
}

/// Whitespace tokens tagged with their 1-based line number.
struct Tokens<'a> {
    items: Vec<(usize, &'a str)>,
    pos: usize,
    path: &'a Path,
}

impl<'a> Tokens<'a> {
    fn new(text: &'a str, path: &'a Path) -> Self {
        let items = text
            .lines()
            .enumerate()
            .flat_map(|(i, l)| {
                let l = l.split('#').next().unwrap_or("");
                l.split_whitespace().map(move |t| (i + 1, t))
            })
            .collect();
        Tokens { items, pos: 0, path }
    }

    fn line(&self) -> usize {
        self.items
            .get(self.pos)
            .or_else(|| self.items.last())
            .map_or(1, |t| t.0)
    }

    fn error(&self, line: usize, message: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.to_path_buf(),
            line,
            message: message.into(),
        }
    }

    fn next(&mut self, what: &str) -> Result<(usize, &'a str)> {
        let t = self
            .items
            .get(self.pos)
            .copied()
            .ok_or_else(|| self.error(self.line(), format!("unexpected end of file, expected {what}")))?;
        self.pos += 1;
        Ok(t)
    }

    fn parse<T: std::str::FromStr>(&mut self, what: &str) -> Result<(usize, T)> {
        let (line, tok) = self.next(what)?;
        tok.parse()
            .map(|v| (line, v))
            .map_err(|_| self.error(line, format!("expected {what}, found `{tok}`")))
    }

    fn index(&mut self, n: usize) -> Result<usize> {
        let (line, i): (usize, usize) = self.parse("vertex index")?;
        if i == 0 || i > n {
            return Err(self.error(line, format!("vertex index {i} outside 1..={n}")));
        }
        Ok(i - 1)
    }
}

/// Parses a MEDIT ASCII mesh. `path` is only used in error messages.
/// The result has no curve descriptors attached, so boundary vertices stay
/// on the polygonal boundary when it is remeshed.
pub fn parse_medit(text: &str, path: &Path) -> Result<Mesh> {
    let mut tok = Tokens::new(text, path);
    let mut vertices: Vec<Point> = Vec::new();
    let mut triangles = Vec::new();
    let mut edges = Vec::new();
    let mut seen_vertices = false;
    loop {
        let (line, key) = tok.next("a section keyword or End")?;
        match key {
            "MeshVersionFormatted" => {
                tok.parse::<u32>("format version")?;
            }
            "Dimension" => {
                let (l, d): (usize, u32) = tok.parse("dimension")?;
                if d != 2 {
                    return Err(tok.error(l, format!("only 2D meshes are supported, found dimension {d}")));
                }
            }
            "Vertices" => {
                let (_, n): (usize, usize) = tok.parse("vertex count")?;
                vertices.reserve(n);
                for _ in 0..n {
                    let (_, x) = tok.parse::<f64>("x coordinate")?;
                    let (_, y) = tok.parse::<f64>("y coordinate")?;
                    tok.parse::<i64>("vertex reference")?;
                    vertices.push(Point::new(x, y));
                }
                seen_vertices = true;
            }
            "Triangles" | "Edges" if !seen_vertices => {
                return Err(tok.error(line, format!("section {key} precedes Vertices")));
            }
            "Triangles" => {
                let (_, n): (usize, usize) = tok.parse("triangle count")?;
                for _ in 0..n {
                    let t = [
                        tok.index(vertices.len())?,
                        tok.index(vertices.len())?,
                        tok.index(vertices.len())?,
                    ];
                    tok.parse::<i64>("triangle reference")?;
                    triangles.push(t);
                }
            }
            "Edges" => {
                let (_, n): (usize, usize) = tok.parse("edge count")?;
                for _ in 0..n {
                    let v = [tok.index(vertices.len())?, tok.index(vertices.len())?];
                    let (l, tag): (usize, i64) = tok.parse("edge reference")?;
                    let tag = u32::try_from(tag).map_err(|_| tok.error(l, format!("negative edge reference {tag}")))?;
                    edges.push(BoundaryEdge { v, tag });
                }
            }
            "End" => break,
            other => return Err(tok.error(line, format!("unknown section `{other}`"))),
        }
    }
    edges.sort();
    Mesh::new(vertices, triangles, edges, BTreeMap::new())
}

pub fn read_medit(path: impl AsRef<Path>) -> Result<Mesh> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_medit(&text, path)
}

/// `<n> 3` followed by `m11 m12 m22` per vertex.
pub fn format_mtr(metric: &MetricField) -> Result<String> {
    if metric.basis != Basis::Vertex {
        return Err(Error::MetricBasis { expected: "vertex" });
    }
    let mut s = format!("{} 3\n", metric.tensors.len());
    for m in &metric.tensors {
        let _ = writeln!(s, "{} {} {}", num(m[(0, 0)]), num(m[(0, 1)]), num(m[(1, 1)]));
    }
    Ok(s)
}

pub fn write_mtr(metric: &MetricField, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_mtr(metric)?).map_err(|e| Error::io(path, e))
}

pub fn parse_mtr(text: &str, path: &Path) -> Result<MetricField> {
    let mut tok = Tokens::new(text, path);
    let (_, n): (usize, usize) = tok.parse("tensor count")?;
    let (l, k): (usize, usize) = tok.parse("component count")?;
    if k != 3 {
        return Err(tok.error(l, format!("expected 3 components per tensor, found {k}")));
    }
    let mut tensors = Vec::with_capacity(n);
    for _ in 0..n {
        let (_, a) = tok.parse::<f64>("m11")?;
        let (_, b) = tok.parse::<f64>("m12")?;
        let (_, c) = tok.parse::<f64>("m22")?;
        tensors.push(Mat2::new(a, b, b, c));
    }
    if tok.pos < tok.items.len() {
        return Err(tok.error(tok.line(), "trailing data after the last tensor"));
    }
    Ok(MetricField { tensors, basis: Basis::Vertex })
}

pub fn read_mtr(path: impl AsRef<Path>) -> Result<MetricField> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_mtr(&text, path)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let source = match e.into_kind() {
        csv::ErrorKind::Io(io) => io,
        other => std::io::Error::other(format!("{other:?}")),
    };
    Error::io(path, source)
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

fn write_rows(path: &Path, rows: impl IntoIterator<Item = [String; 7]>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(CSV_HEADER).map_err(|e| csv_error(path, e))?;
    for r in rows {
        w.write_record(&r).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// One row per adaptation iteration; error columns are empty when the
/// exact solution is unknown.
pub fn write_trace_csv(trace: &AdaptTrace, path: impl AsRef<Path>) -> Result<()> {
    write_rows(
        path.as_ref(),
        trace.records.iter().map(|r| {
            [
                r.elements.to_string(),
                opt(r.l2_error),
                opt(r.h1_error),
                num(r.q_mesh),
                num(r.min_u),
                num(r.max_aspect_ratio),
                r.sweeps.to_string(),
            ]
        }),
    )
}

pub fn write_convergence_csv(table: &ConvergenceTable, path: impl AsRef<Path>) -> Result<()> {
    write_rows(
        path.as_ref(),
        table.rows.iter().map(|r| {
            [
                r.realized_n.to_string(),
                num(r.l2_error),
                num(r.h1_error),
                num(r.q_mesh),
                num(r.min_u),
                num(r.max_aspect_ratio),
                r.sweeps.to_string(),
            ]
        }),
    )
}

/// Rectangular window `(x, y, width, height)` in domain coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window {
    pub x: f64,
    pub y: f64,
    pub width: f64,
    pub height: f64,
}

impl Window {
    pub fn of_mesh(mesh: &Mesh) -> Self {
        let (lo, hi) = mesh.bounding_box();
        Window { x: lo.x, y: lo.y, width: hi.x - lo.x, height: hi.y - lo.y }
    }

    fn overlaps(&self, a: Point, b: Point) -> bool {
        a.x.max(b.x) >= self.x
            && a.x.min(b.x) <= self.x + self.width
            && a.y.max(b.y) >= self.y
            && a.y.min(b.y) <= self.y + self.height
    }
}

impl std::str::FromStr for Window {
    type Err = Error;

    /// Parses `x,y,w,h`.
    fn from_str(s: &str) -> Result<Self> {
        let v: Vec<f64> = s
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::InvalidParameter(format!("window `{s}` is not x,y,w,h")))?;
        match v.as_slice() {
            &[x, y, width, height] if width > 0.0 && height > 0.0 => Ok(Window { x, y, width, height }),
            _ => Err(Error::InvalidParameter(format!("window `{s}` needs four numbers with positive size"))),
        }
    }
}

/// Number of iso-contour levels drawn by [`render_svg`].
pub const CONTOUR_LEVELS: usize = 10;

/// Contour segments of the P1 field `u` at `level`, by marching triangles.
pub fn contour_segments(mesh: &Mesh, u: &SolutionField, level: f64) -> Vec<[Point; 2]> {
    let mut out = Vec::new();
    for (k, t) in mesh.triangles().iter().enumerate() {
        let p = mesh.corners(k);
        let f = t.map(|v| u.values[v] - level);
        let mut cut = Vec::with_capacity(2);
        for i in 0..3 {
            let j = (i + 1) % 3;
            // Half-open rule so that a vertex exactly on the level is counted once.
            if (f[i] < 0.0) != (f[j] < 0.0) {
                let s = f[i] / (f[i] - f[j]);
                cut.push(p[i] + (p[j] - p[i]) * s);
            }
        }
        if let [a, b] = cut[..] {
            out.push([a, b]);
        }
    }
    out
}

/// SVG drawing of the mesh edges, optionally with iso-contours of `u`.
pub fn render_svg(mesh: &Mesh, u: Option<&SolutionField>, window: Option<Window>) -> String {
    let w = window.unwrap_or_else(|| Window::of_mesh(mesh));
    let width = 800.0;
    let height = width * w.height / w.width;
    let map = |p: Point| ((p.x - w.x) / w.width * width, (1.0 - (p.y - w.y) / w.height) * height);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.3} {height:.3}">"#
    );
    let stroke = (0.6 * width / 800.0).max(0.1);
    let _ = writeln!(s, r#"<g class="mesh" stroke="black" stroke-width="{stroke:.2}" fill="none">"#);
    let adj = mesh.adjacency();
    for &[a, b] in &adj.edges {
        let (pa, pb) = (mesh.vertices()[a], mesh.vertices()[b]);
        if !w.overlaps(pa, pb) {
            continue;
        }
        let ((x1, y1), (x2, y2)) = (map(pa), map(pb));
        let _ = writeln!(s, r#"<line x1="{x1:.3}" y1="{y1:.3}" x2="{x2:.3}" y2="{y2:.3}"/>"#);
    }
    s.push_str("</g>\n");
    if let Some(u) = u {
        let (lo, hi) = (u.min(), u.max());
        if hi > lo {
            let _ = writeln!(s, r#"<g class="contours" stroke="red" stroke-width="{:.2}" fill="none">"#, 2.0 * stroke);
            for i in 1..=CONTOUR_LEVELS {
                let level = lo + (hi - lo) * i as f64 / (CONTOUR_LEVELS + 1) as f64;
                let mut d = String::new();
                for [a, b] in contour_segments(mesh, u, level) {
                    if !w.overlaps(a, b) {
                        continue;
                    }
                    let ((x1, y1), (x2, y2)) = (map(a), map(b));
                    let _ = write!(d, "M{x1:.3} {y1:.3}L{x2:.3} {y2:.3}");
                }
                if !d.is_empty() {
                    let _ = writeln!(s, r#"<path data-level="{level:.6}" d="{d}"/>"#);
                }
            }
            s.push_str("</g>\n");
        }
    }
    s.push_str("</svg>\n");
    s
}

pub fn write_svg(mesh: &Mesh, u: Option<&SolutionField>, window: Option<Window>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, render_svg(mesh, u, window)).map_err(|e| Error::io(path, e))
}
