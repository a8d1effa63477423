use anisomesh::adapt::*;
use anisomesh::fem::{ProblemSpec, SolutionField};
use anisomesh::linalg::Mat2;
use anisomesh::mesh::{aspect_ratio, metric_edge_length, rectangle, unit_square, validate, Mesh, Point};
use anisomesh::metric::{Basis, MetricField};
use anisomesh::problems::CornerProblem;
use anisomesh::remesh::RemeshParams;
use proptest::prelude::*;
use rand::{rngs::StdRng, Rng, SeedableRng};

fn vertex_metric(mesh: &Mesh, f: impl Fn(Point) -> Mat2) -> MetricField {
    MetricField { tensors: mesh.vertices().iter().map(|&p| f(p)).collect(), basis: Basis::Vertex }
}

fn metric_lengths(mesh: &Mesh, f: impl Fn(Point) -> Mat2) -> Vec<f64> {
    let v = mesh.vertices();
    mesh.adjacency()
        .edges
        .iter()
        .map(|&[a, b]| metric_edge_length(v[a], v[b], &f(v[a]), &f(v[b])).unwrap())
        .collect()
}

fn median(mut x: Vec<f64>) -> f64 {
    x.sort_by(f64::total_cmp);
    x[x.len() / 2]
}

#[test]
fn isotropic_refinement_of_two_triangles() {
    let h = 1.0 / 8.0;
    let m = |_| Mat2::identity() / (h * h);
    let mesh = unit_square(1);
    let (out, _) = remesh(&mesh, &vertex_metric(&mesh, m), &RemeshParams::default()).unwrap();
    assert!(validate(&out).is_valid());
    let expected = 1.0 / (h * h * UNIT_TRIANGLE_AREA);
    let n = out.num_triangles() as f64;
    assert!((n / expected - 1.0).abs() <= 0.3, "{n} triangles, expected about {expected}");
    let lengths = metric_lengths(&out, m);
    let (lo, hi) = lengths.iter().fold((f64::MAX, 0.0f64), |(a, b), &l| (a.min(l), b.max(l)));
    assert!(lo >= 0.5 && hi <= 1.6, "metric lengths in [{lo}, {hi}]");
}

#[test]
fn anisotropic_metric_stretches_elements() {
    let m = |_| Mat2::new(400.0, 0.0, 0.0, 4.0);
    let mesh = unit_square(4);
    let (out, _) = remesh(&mesh, &vertex_metric(&mesh, m), &RemeshParams::default()).unwrap();
    assert!(validate(&out).is_valid());
    let ar = median((0..out.num_triangles()).map(|k| aspect_ratio(&out.corners(k)).unwrap()).collect());
    assert!((6.0..=14.0).contains(&ar), "median aspect ratio {ar}");
}

#[test]
fn point_metric_keeps_output_valid() {
    let mesh = CornerProblem::default().mesh(300);
    let m = vertex_metric(&mesh, |p| {
        let r = p.norm().max(1e-3);
        Mat2::identity() * (40.0 / r)
    });
    let (out, stats) = remesh(&mesh, &m, &RemeshParams::default()).unwrap();
    let report = validate(&out);
    assert!(report.is_valid(), "{}", report.summary());
    assert!(stats.splits > 0);
    for &p in out.vertices() {
        assert!(p.norm() <= 1.0 + 1e-9);
    }
}

#[test]
fn element_metric_is_refused() {
    let mesh = unit_square(2);
    let m = MetricField::constant(mesh.num_triangles(), Mat2::identity(), Basis::Element);
    assert!(remesh(&mesh, &m, &RemeshParams::default()).is_err());
}

#[test]
fn refinement_round_trip() {
    let coarse = unit_square(4);
    let fine = unit_square(8);
    let mut rng = StdRng::seed_from_u64(9);
    let u = SolutionField::new((0..coarse.num_vertices()).map(|_| rng.gen_range(-1.0..1.0)).collect());
    let up = interpolate_solution(&coarse, &u, &fine).unwrap();
    let back = interpolate_solution(&fine, &up, &coarse).unwrap();
    for (a, b) in u.values.iter().zip(&back.values) {
        assert!((a - b).abs() <= 1e-12);
    }
    let same = interpolate_solution(&coarse, &u, &coarse).unwrap();
    assert_eq!(same.values, u.values);
}

#[test]
fn normalization_volume_and_scaling() {
    let mesh = rectangle(5, 3, Point::new(0.0, 0.0), Point::new(2.0, 1.0));
    let mut rng = StdRng::seed_from_u64(3);
    let tensors: Vec<Mat2> = (0..mesh.num_triangles())
        .map(|_| {
            let a = rng.gen_range(0.1..10.0);
            let b = rng.gen_range(-0.5..0.5) * a;
            Mat2::new(a, b, b, rng.gen_range(1.0..5.0) * a)
        })
        .collect();
    let m = MetricField { tensors, basis: Basis::Element };
    let volume = |f: &MetricField| -> f64 { (0..mesh.num_triangles()).map(|k| mesh.area(k) * f.tensors[k].determinant().sqrt()).sum() };
    let a = normalize_metric(&mesh, &m, 500.0).unwrap();
    assert!((volume(&a) / (500.0 * UNIT_TRIANGLE_AREA) - 1.0).abs() <= 1e-10);
    let b = normalize_metric(&mesh, &m, 1000.0).unwrap();
    for (x, y) in a.tensors.iter().zip(&b.tensors) {
        assert!((y - x * 2.0).norm() <= 1e-12 * y.norm());
    }
}

#[test]
fn uniform_adaptation_is_stable() {
    let problem = ProblemSpec::poisson(std::sync::Arc::new(|_| 1.0), std::sync::Arc::new(|_| 0.0));
    let params = AdaptParams::new(400);
    let out = adapt_drive(&problem, MetricKind::Uniform, &unit_square(14), &params).unwrap();
    assert!(out.trace.converged);
    let records = &out.trace.records;
    assert!(records.len() <= 3, "{} iterations", records.len());
    for r in &records[1..] {
        assert!(r.q_mesh <= 1.1, "{r:?}");
        assert!((r.elements as f64 / 400.0 - 1.0).abs() <= 0.2, "{r:?}");
    }
}

#[test]
fn corner_adaptation_hits_the_count() {
    let c = CornerProblem::default();
    let out = adapt_drive(&c.spec(), MetricKind::Hb, &c.mesh(1225), &AdaptParams::new(1225)).unwrap();
    let last = out.trace.last().unwrap();
    assert!(out.trace.converged && last.q_mesh <= 1.1, "{last:?}");
    assert!((last.elements as f64 / 1225.0 - 1.0).abs() <= 0.2, "{last:?}");
    assert!(validate(&out.mesh).is_valid());
}

#[test]
fn mismatched_pairings_are_refused() {
    let c = CornerProblem::default();
    let mesh = c.mesh(200);
    for kind in [MetricKind::Vp, MetricKind::DmpH, MetricKind::DmpHb] {
        assert!(adapt_drive(&c.spec(), kind, &mesh, &AdaptParams::new(200)).is_err());
    }
    let mut p = AdaptParams::new(200);
    p.eps = 0.0;
    assert!(p.validate().is_err());
    assert!(AdaptParams::new(5).validate().is_err());
}

fn spd_field(n: usize, seed: u64, scale: f64) -> Vec<Mat2> {
    let mut rng = StdRng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let t: f64 = rng.gen_range(0.0..std::f64::consts::PI);
            let (s, c) = t.sin_cos();
            let q = Mat2::new(c, -s, s, c);
            let d = Mat2::new(rng.gen_range(1.0..30.0), 0.0, 0.0, rng.gen_range(1.0..30.0));
            q * d * q.transpose() * scale
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn remesh_output_is_always_valid(seed in any::<u64>(), n in 2usize..6, scale in 1.0..8.0f64) {
        let mesh = unit_square(n);
        let m = MetricField { tensors: spd_field(mesh.num_vertices(), seed, scale), basis: Basis::Vertex };
        let params = RemeshParams { seed, ..Default::default() };
        let (out, _) = remesh(&mesh, &m, &params).unwrap();
        let report = validate(&out);
        prop_assert!(report.is_valid(), "{}", report.summary());
        prop_assert!((out.total_area() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn corner_remesh_output_is_always_valid(seed in any::<u64>(), scale in 5.0..60.0f64) {
        let mesh = CornerProblem::default().mesh(150);
        let m = vertex_metric(&mesh, |p| Mat2::new(scale * (1.0 + 4.0 * p.x * p.x), 0.0, 0.0, scale));
        let params = RemeshParams { seed, ..Default::default() };
        let (out, _) = remesh(&mesh, &m, &params).unwrap();
        let report = validate(&out);
        prop_assert!(report.is_valid(), "{}", report.summary());
    }
}
