use std::path::Path;

use anisomesh::adapt::AdaptTrace;
use anisomesh::fem::SolutionField;
use anisomesh::io::*;
use anisomesh::linalg::Mat2;
use anisomesh::mesh::{unit_square, BoundaryEdge, Mesh, Point};
use anisomesh::metric::{Basis, MetricField};
use anisomesh::problems::CornerProblem;
use anisomesh::Error;
use rand::{rngs::StdRng, Rng, SeedableRng};

fn sorted_edges(m: &Mesh) -> Vec<BoundaryEdge> {
    let mut e = m.boundary_edges().to_vec();
    e.sort();
    e
}

fn assert_same_mesh(a: &Mesh, b: &Mesh) {
    assert_eq!(a.vertices(), b.vertices());
    assert_eq!(a.triangles(), b.triangles());
    assert_eq!(sorted_edges(a), sorted_edges(b));
}

#[test]
fn two_triangle_square_round_trip() {
    let mesh = unit_square(1);
    let text = format_medit(&mesh);
    let count = |key: &str| {
        let mut lines = text.lines();
        lines.find(|l| l.trim() == key).unwrap();
        lines.next().unwrap().trim().parse::<usize>().unwrap()
    };
    assert_eq!((count("Vertices"), count("Triangles"), count("Edges")), (4, 2, 4));
    assert!(text.starts_with("MeshVersionFormatted 2"));
    assert!(text.trim_end().ends_with("End"));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("square.mesh");
    write_medit(&mesh, &path).unwrap();
    assert_same_mesh(&mesh, &read_medit(&path).unwrap());
}

#[test]
fn zero_vertex_index_names_the_line() {
    let text = "MeshVersionFormatted 2\nDimension 2\nVertices\n3\n0 0 1\n1 0 1\n0 1 1\nTriangles\n1\n0 2 3 0\nEnd\n";
    match parse_medit(text, Path::new("bad.mesh")) {
        Err(e @ Error::Parse { line: 10, .. }) => assert!(e.to_string().starts_with("bad.mesh:10:")),
        other => panic!("unexpected result {other:?}"),
    }
}

#[test]
fn malformed_sections_are_rejected() {
    let cases = [
        ("Dimension 3\nEnd\n", 1),
        ("Dimension 2\nTriangles\n0\nEnd\n", 2),
        ("Dimension 2\nVertices\n1\n0 0 0\nQuads\n0\nEnd\n", 5),
        ("Dimension 2\nVertices\n2\n0 0 0\n", 4),
        ("Dimension 2\nVertices\n1\n0 x 0\nEnd\n", 4),
    ];
    for (text, line) in cases {
        match parse_medit(text, Path::new("f.mesh")) {
            Err(Error::Parse { line: l, .. }) => assert_eq!(l, line, "{text:?}"),
            other => panic!("{text:?}: unexpected result {other:?}"),
        }
    }
}

#[test]
fn corner_mesh_keeps_boundary_tags() {
    let mesh = CornerProblem::default().mesh(400);
    let back = parse_medit(&format_medit(&mesh), Path::new("corner.mesh")).unwrap();
    assert_same_mesh(&mesh, &back);
    let tags: std::collections::BTreeSet<u32> = back.boundary_edges().iter().map(|e| e.tag).collect();
    assert_eq!(tags.into_iter().collect::<Vec<_>>(), vec![1, 2, 3]);
}

#[test]
fn medit_coordinates_round_trip_exactly() {
    let mut rng = StdRng::seed_from_u64(7);
    let mesh = unit_square(3);
    let pts: Vec<Point> = mesh
        .vertices()
        .iter()
        .map(|p| p + Point::new(rng.gen_range(-1e-3..1e-3), rng.gen_range(-1e-3..1e-3)) * (1.0 / 3.0))
        .collect();
    let moved = Mesh::from_parts(pts, mesh.triangles().to_vec(), mesh.boundary_edges().to_vec(), Default::default());
    let back = parse_medit(&format_medit(&moved), Path::new("m")).unwrap();
    assert_same_mesh(&moved, &back);
}

#[test]
fn identity_metric_lines() {
    let m = MetricField::constant(4, Mat2::identity(), Basis::Vertex);
    assert_eq!(format_mtr(&m).unwrap(), "4 3\n1 0 1\n1 0 1\n1 0 1\n1 0 1\n");
    let d = MetricField::constant(2, Mat2::new(4.0, 0.0, 0.0, 1.0), Basis::Vertex);
    assert_eq!(format_mtr(&d).unwrap(), "2 3\n4 0 1\n4 0 1\n");
}

#[test]
fn element_metric_is_refused() {
    let m = MetricField::constant(2, Mat2::identity(), Basis::Element);
    assert!(matches!(format_mtr(&m), Err(Error::MetricBasis { .. })));
}

#[test]
fn random_metric_round_trip() {
    let mut rng = StdRng::seed_from_u64(11);
    let tensors: Vec<Mat2> = (0..200)
        .map(|_| {
            let a = Mat2::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let s = 10f64.powf(rng.gen_range(-8.0..8.0));
            (a * a.transpose() + Mat2::identity() * 1e-3) * s
        })
        .collect();
    let m = MetricField { tensors, basis: Basis::Vertex };
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.mtr");
    write_mtr(&m, &path).unwrap();
    let back = read_mtr(&path).unwrap();
    assert_eq!(back.basis, Basis::Vertex);
    assert_eq!(back.tensors, m.tensors);
}

#[test]
fn mtr_header_mismatch() {
    assert!(matches!(parse_mtr("1 2\n1 0\n", Path::new("x")), Err(Error::Parse { line: 1, .. })));
    assert!(matches!(parse_mtr("1 3\n1 0\n", Path::new("x")), Err(Error::Parse { .. })));
    assert!(matches!(parse_mtr("1 3\n1 0 1\n2\n", Path::new("x")), Err(Error::Parse { line: 3, .. })));
}

#[test]
fn empty_trace_gives_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trace.csv");
    write_trace_csv(&AdaptTrace::default(), &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text, format!("{}\n", CSV_HEADER.join(",")));
}

#[test]
fn csv_write_failure_reports_path() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("missing").join("trace.csv");
    let err = write_trace_csv(&AdaptTrace::default(), &path).unwrap_err();
    assert!(matches!(err, Error::Io { .. }));
    assert!(err.to_string().contains("missing"));
}

#[test]
fn two_triangle_svg_has_five_segments() {
    let svg = render_svg(&unit_square(1), None, None);
    assert_eq!(svg.matches("<line ").count(), 5);
    assert!(!svg.contains("contours"));
}

#[test]
fn contours_of_linear_field() {
    let mesh = unit_square(4);
    let u = SolutionField::interpolate(&mesh, |p| p.x);
    let svg = render_svg(&mesh, Some(&u), None);
    assert_eq!(svg.matches("<path ").count(), CONTOUR_LEVELS);
    for seg in contour_segments(&mesh, &u, 0.3) {
        assert!((seg[0].x - 0.3).abs() < 1e-14 && (seg[1].x - 0.3).abs() < 1e-14);
    }
    let total: f64 = contour_segments(&mesh, &u, 0.3).iter().map(|s| (s[1] - s[0]).norm()).sum();
    assert!((total - 1.0).abs() < 1e-12);
}

#[test]
fn zoom_window_clips_edges() {
    let mesh = unit_square(8);
    let all = render_svg(&mesh, None, None).matches("<line ").count();
    let w: Window = "0,0,0.2,0.2".parse().unwrap();
    let some = render_svg(&mesh, None, Some(w)).matches("<line ").count();
    assert!(some > 0 && some < all / 4);
    assert!("0,0,0".parse::<Window>().is_err());
    assert!("0,0,-1,1".parse::<Window>().is_err());
}
