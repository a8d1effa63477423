use std::sync::Arc;

use anisomesh::adapt::{element_qualities, q_mesh};
use anisomesh::fem::{Integrand, ProblemKind, ProblemSpec, SolutionField};
use anisomesh::linalg::{sym_eigen, Mat2, Vec2};
use anisomesh::mesh::{aspect_ratio, unit_square, Point};
use anisomesh::metric::*;
use anisomesh::problems::{CornerProblem, VariationalIntegrand, VariationalProblem};
use anisomesh::recovery::HessianField;
use approx::assert_relative_eq;
use proptest::prelude::*;
use rand::{rngs::StdRng, Rng, SeedableRng};

/// `½|p|²`.
struct Dirichlet;

impl Integrand for Dirichlet {
    fn value(&self, _x: Point, _u: f64, p: Vec2) -> f64 {
        0.5 * p.norm_squared()
    }
    fn d_u(&self, _x: Point, _u: f64, _p: Vec2) -> f64 {
        0.0
    }
    fn d_p(&self, _x: Point, _u: f64, p: Vec2) -> Vec2 {
        p
    }
    fn d_pp(&self, _x: Point, _u: f64, _p: Vec2) -> Mat2 {
        Mat2::identity()
    }
}

fn variational(f: impl Integrand + 'static) -> ProblemSpec {
    ProblemSpec {
        name: "test".into(),
        kind: ProblemKind::Variational(Arc::new(f)),
        dirichlet: Arc::new(|_| 0.0),
        exact: None,
    }
}

fn sym(a: f64, b: f64, c: f64) -> Mat2 {
    Mat2::new(a, b, b, c)
}

fn spd() -> impl Strategy<Value = Mat2> {
    (0.0..std::f64::consts::PI, -6.0..6.0f64, -6.0..6.0f64).prop_map(|(t, a, b)| {
        let (s, c) = t.sin_cos();
        let q = Mat2::new(c, -s, s, c);
        q * Mat2::new(10f64.powf(a / 2.0), 0.0, 0.0, 10f64.powf(b / 2.0)) * q.transpose()
    })
}

fn symmetric() -> impl Strategy<Value = Mat2> {
    (-1e3..1e3f64, -1e3..1e3f64, -1e3..1e3f64).prop_map(|(a, b, c)| sym(a, b, c))
}

fn is_spd(m: &Mat2) -> bool {
    (m[(0, 1)] - m[(1, 0)]).abs() <= 1e-12 * m.norm() && sym_eigen(m).0[1] > 0.0 && m.iter().all(|x| x.is_finite())
}

#[test]
fn sym_abs_of_swap() {
    assert_relative_eq!(sym_abs(&sym(0.0, 1.0, 0.0)), Mat2::identity(), epsilon = 1e-15);
    assert_eq!(sym_abs(&Mat2::zeros()), Mat2::zeros());
    assert_relative_eq!(sym_abs(&sym(3.0, 0.0, -2.0)), sym(3.0, 0.0, 2.0), epsilon = 1e-15);
}

#[test]
fn m_vp_examples() {
    let mesh = unit_square(1);
    let zero = ResidualData { element: vec![0.0; 2], edge: vec![0.0; mesh.adjacency().num_edges()] };
    let h0 = HessianField { values: vec![Mat2::zeros(); 2] };
    let m = m_vp(&mesh, &zero, &h0, 1.0).unwrap();
    assert!(m.tensors.iter().all(|t| (t - Mat2::identity()).norm() < 1e-15));
    let hi = HessianField { values: vec![Mat2::identity() * 3.0; 2] };
    let m = m_vp(&mesh, &zero, &hi, 3.0).unwrap();
    assert!(m.tensors.iter().all(|t| (t - Mat2::identity() * 2f64.sqrt()).norm() < 1e-14));
}

#[test]
fn variational_prefactor_from_residual() {
    // |K| = 1, ‖r_h‖ = 3, no jumps, α = 1: prefactor (1 + 3)^{1/2}.
    let recipe = MetricRecipe::Variational { abs_hessian: vec![Mat2::zeros()], indicator: vec![3.0] };
    assert_relative_eq!(recipe.tensor(0, 1.0), Mat2::identity() * 2.0, epsilon = 1e-15);
    // The indicator is (|K|^{1/2}‖r‖ + Σ|γ|^{1/2}‖R‖)/|K|.
    let mesh = unit_square(1);
    let mut res = ResidualData { element: vec![3.0, 0.0], edge: vec![0.0; mesh.adjacency().num_edges()] };
    let t = residual_indicator(&mesh, &res);
    assert_relative_eq!(t[0], 0.5f64.sqrt() * 3.0 / 0.5, epsilon = 1e-14);
    assert_eq!(t[1], 0.0);
    let diag = (0..mesh.adjacency().num_edges()).find(|&e| !mesh.adjacency().is_boundary_edge(e)).unwrap();
    res.edge[diag] = 1.0;
    let t = residual_indicator(&mesh, &res);
    assert_relative_eq!(t[1], 2f64.sqrt().sqrt() / 0.5, epsilon = 1e-14);
}

#[test]
fn dirichlet_integrand_has_no_element_residual() {
    let mesh = unit_square(4);
    let mut rng = StdRng::seed_from_u64(2);
    let u = SolutionField::new((0..mesh.num_vertices()).map(|_| rng.gen_range(-1.0..1.0)).collect());
    let r = residual_and_jumps(&variational(Dirichlet), &mesh, &u).unwrap();
    assert!(r.element.iter().all(|&x| x == 0.0));
    let adj = mesh.adjacency();
    for e in 0..adj.num_edges() {
        if adj.is_boundary_edge(e) {
            assert_eq!(r.edge[e], 0.0);
        }
    }
}

#[test]
fn flux_jump_across_a_kink() {
    // u = max(x − 1/2, 0) on a mesh with a vertical line at x = 1/2.
    let mesh = unit_square(2);
    let u = SolutionField::interpolate(&mesh, |p| (p.x - 0.5).max(0.0));
    let r = residual_and_jumps(&variational(Dirichlet), &mesh, &u).unwrap();
    let adj = mesh.adjacency();
    for (e, &[a, b]) in adj.edges.iter().enumerate() {
        let (pa, pb) = (mesh.vertices()[a], mesh.vertices()[b]);
        let len = (pb - pa).norm();
        let on_kink = (pa.x - 0.5).abs() < 1e-12 && (pb.x - 0.5).abs() < 1e-12;
        if on_kink {
            // |R_h| = 1 along the edge, so its L2 norm is |γ|^{1/2}.
            assert_relative_eq!(r.edge[e], len.sqrt(), epsilon = 1e-14);
        } else if pa.x.max(pb.x) <= 0.5 + 1e-12 || pa.x.min(pb.x) >= 0.5 - 1e-12 {
            assert!(r.edge[e].abs() < 1e-14, "edge {e}: {}", r.edge[e]);
        }
    }
}

#[test]
fn model_functional_at_constant_state() {
    let mesh = unit_square(4);
    let u = SolutionField::new(vec![1.5; mesh.num_vertices()]);
    let r = residual_and_jumps(&VariationalProblem.spec(), &mesh, &u).unwrap();
    assert!(r.element.iter().all(|&x| x == 0.0));
    assert!(r.edge.iter().all(|&x| x == 0.0));
}

#[test]
fn variational_partials_match_finite_differences() {
    let f = VariationalIntegrand;
    let mut rng = StdRng::seed_from_u64(4);
    let x = Point::new(0.3, 0.7);
    for _ in 0..1000 {
        let p = Vec2::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0));
        let u = rng.gen_range(-2.0..2.0);
        let h = 1e-5;
        let e = [Vec2::new(h, 0.0), Vec2::new(0.0, h)];
        let fd_p = Vec2::new(
            (f.value(x, u, p + e[0]) - f.value(x, u, p - e[0])) / (2.0 * h),
            (f.value(x, u, p + e[1]) - f.value(x, u, p - e[1])) / (2.0 * h),
        );
        let dp = f.d_p(x, u, p);
        assert!((dp - fd_p).norm() <= 1e-6 * (1.0 + dp.norm()), "F_p {dp} vs {fd_p}");
        let cols: Vec<Vec2> = e.iter().map(|&d| (f.d_p(x, u, p + d) - f.d_p(x, u, p - d)) / (2.0 * h)).collect();
        let fd_pp = Mat2::from_columns(&cols);
        let dpp = f.d_pp(x, u, p);
        assert!((dpp - fd_pp).norm() <= 1e-6 * (1.0 + dpp.norm()), "F_pp {dpp} vs {fd_pp}");
        let fd_u = (f.value(x, u + h, p) - f.value(x, u - h, p)) / (2.0 * h);
        assert!((f.d_u(x, u, p) - fd_u).abs() <= 1e-6);
    }
}

#[test]
fn alpha_closed_form() {
    let mesh = unit_square(6);
    for c in [1e-3, 1.0, 250.0] {
        let recipe = MetricRecipe::Hierarchical { abs_hessian: vec![Mat2::identity() * c; mesh.num_triangles()] };
        let a = choose_alpha(&mesh, &recipe);
        assert!(!a.uniform && !a.clamped);
        assert_relative_eq!(a.alpha, c / (2f64.powf(1.5) - 1.0), max_relative = 1e-3);
    }
    let zero = MetricRecipe::Hierarchical { abs_hessian: vec![Mat2::zeros(); mesh.num_triangles()] };
    let a = choose_alpha(&mesh, &zero);
    assert!(a.uniform && a.alpha == 1.0);
}

#[test]
fn alpha_is_self_consistent_on_the_corner_estimate() {
    use anisomesh::hb::{bubble_hessians, estimate, DEFAULT_MAX_SWEEPS, DEFAULT_SWEEP_TOL};
    let c = CornerProblem::default();
    let p = c.spec();
    let mesh = c.mesh(1200);
    let u = anisomesh::fem::solve_linear(&p, &mesh).unwrap();
    let (z, _) = estimate(&p, &mesh, &u, DEFAULT_SWEEP_TOL, DEFAULT_MAX_SWEEPS).unwrap();
    let recipe = MetricRecipe::hierarchical(&HessianField { values: bubble_hessians(&mesh, &z) });
    let a = choose_alpha(&mesh, &recipe);
    let areas: Vec<f64> = (0..mesh.num_triangles()).map(|k| mesh.area(k)).collect();
    let ratio = metric_volume(&areas, &recipe, a.alpha) / (2.0 * areas.iter().sum::<f64>());
    assert!((0.999..=1.001).contains(&ratio), "{ratio}");
    assert!(metric_volume(&areas, &recipe, a.alpha / 2.0) > metric_volume(&areas, &recipe, a.alpha * 2.0));
}

#[test]
fn vertexize_examples() {
    let mesh = unit_square(3);
    let m = sym(2.0, 0.5, 1.0);
    let v = vertexize(&mesh, &MetricField::constant(mesh.num_triangles(), m, Basis::Element)).unwrap();
    assert_eq!(v.basis, Basis::Vertex);
    assert!(v.tensors.iter().all(|t| (t - m).norm() < 1e-14));
    // The centre vertex of a 2×2 square mesh sees equal areas on either side of x = 1/2.
    let mesh = unit_square(2);
    let t: Vec<Mat2> = (0..mesh.num_triangles())
        .map(|k| if mesh.geometry(k).centroid.x < 0.5 { Mat2::identity() } else { sym(3.0, 0.0, 1.0) })
        .collect();
    let v = vertexize(&mesh, &MetricField { tensors: t, basis: Basis::Element }).unwrap();
    let centre = mesh.vertices().iter().position(|p| (p - Point::new(0.5, 0.5)).norm() < 1e-12).unwrap();
    assert_relative_eq!(v.tensors[centre], sym(2.0, 0.0, 1.0), epsilon = 1e-14);
}

#[test]
fn quality_examples() {
    let mesh = unit_square(4);
    assert!(q_mesh(&mesh, &MetricField::constant(mesh.num_triangles(), Mat2::identity(), Basis::Element)).unwrap() >= 1.0);
    let q = element_qualities(&mesh, &MetricField::constant(mesh.num_triangles(), Mat2::identity() * 7.0, Basis::Element)).unwrap();
    for e in q {
        assert_relative_eq!(e.worst(), 2.0 / 3f64.sqrt(), epsilon = 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn sym_abs_is_psd_and_commutes(h in symmetric()) {
        let a = sym_abs(&h);
        prop_assert!(sym_eigen(&a).0[1] >= -1e-12 * h.norm());
        prop_assert!((a * h - h * a).norm() <= 1e-9 * (1.0 + h.norm_squared()));
        prop_assert!((a * a - h * h).norm() <= 1e-9 * (1.0 + h.norm_squared()));
    }

    #[test]
    fn hb_metric_is_spd_with_determinant_identity(h in symmetric(), alpha in 1e-3..1e3f64) {
        let m = m_hb(&HessianField { values: vec![h] }, alpha).unwrap();
        let t = m.tensors[0];
        prop_assert!(is_spd(&t));
        let d = (Mat2::identity() + sym_abs(&h) / alpha).determinant();
        prop_assert!((t.determinant() - d.powf(2.0 / 3.0)).abs() <= 1e-10 * d.powf(2.0 / 3.0));
    }

    #[test]
    fn vp_metric_bracket_identity(h in symmetric(), alpha in 1e-3..1e3f64, t in 0.0..1e3f64) {
        let r = MetricRecipe::Variational { abs_hessian: vec![sym_abs(&h)], indicator: vec![t] };
        let m = r.tensor(0, alpha);
        prop_assert!(is_spd(&m));
        let bracket = m / (1.0 + t / alpha).sqrt();
        let d = (Mat2::identity() + sym_abs(&h) / alpha).determinant();
        prop_assert!((bracket.determinant() - d.sqrt()).abs() <= 1e-10 * d.sqrt());
    }

    #[test]
    fn dmp_metric_aligns_with_diffusion(d in spd(), b in 0.0..1e6f64, alpha in 1e-3..1e3f64) {
        let m = m_dmp(&[d], &[b], alpha).unwrap().tensors[0];
        prop_assert!(is_spd(&m));
        // M·D is a multiple of the identity.
        let md = m * d;
        let s = 0.5 * md.trace();
        prop_assert!((md - Mat2::identity() * s).norm() <= 1e-8 * s);
        prop_assert!((s - (1.0 + b / alpha).sqrt() * d.determinant().sqrt()).abs() <= 1e-8 * s);
        let (l, q) = sym_eigen(&d);
        if (l[0] - l[1]).abs() > 1e-6 * l[0] {
            let (_, qm) = sym_eigen(&m);
            // The largest eigenvector of D is the smallest of M.
            let cos = qm.column(1).dot(&q.column(0)).abs();
            prop_assert!((1.0 - cos).abs() <= 1e-8);
        }
    }

    #[test]
    fn alpha_solves_its_equation(c in proptest::collection::vec(0.0..1e4f64, 18)) {
        let mesh = unit_square(3);
        prop_assume!(c.iter().any(|&x| x > 1e-6));
        let recipe = MetricRecipe::Hierarchical { abs_hessian: c.iter().map(|&x| sym(x, 0.3 * x, 0.5 * x)).collect() };
        let a = choose_alpha(&mesh, &recipe);
        prop_assume!(!a.clamped);
        let areas: Vec<f64> = (0..mesh.num_triangles()).map(|k| mesh.area(k)).collect();
        let ratio = metric_volume(&areas, &recipe, a.alpha) / 2.0;
        prop_assert!((ratio - 1.0).abs() <= 1e-3);
    }

    #[test]
    fn vertexize_preserves_spd(t in proptest::collection::vec(spd(), 32)) {
        let mesh = unit_square(4);
        let v = vertexize(&mesh, &MetricField { tensors: t, basis: Basis::Element }).unwrap();
        prop_assert!(v.tensors.iter().all(is_spd));
    }

    #[test]
    fn quality_is_at_least_one(t in proptest::collection::vec(spd(), 32), jitter in proptest::collection::vec(-0.05..0.05f64, 50)) {
        let base = unit_square(4);
        let pts: Vec<Point> = base
            .vertices()
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let interior = p.x > 1e-9 && p.x < 1.0 - 1e-9 && p.y > 1e-9 && p.y < 1.0 - 1e-9;
                if interior { p + Vec2::new(jitter[2 * i % 50], jitter[(2 * i + 1) % 50]) } else { *p }
            })
            .collect();
        let mesh = anisomesh::mesh::Mesh::new(pts, base.triangles().to_vec(), base.boundary_edges().to_vec(), base.curves().clone()).unwrap();
        let q = q_mesh(&mesh, &MetricField { tensors: t, basis: Basis::Element }).unwrap();
        prop_assert!(q >= 1.0 - 1e-12);
    }

    #[test]
    fn aspect_ratio_is_similarity_invariant(
        p in proptest::array::uniform3((-1.0..1.0f64, -1.0..1.0f64)),
        theta in 0.0..6.3f64,
        scale in 1e-3..1e3f64,
        shift in (-10.0..10.0f64, -10.0..10.0f64),
    ) {
        let p = p.map(|(x, y)| Point::new(x, y));
        let area = (p[1] - p[0]).perp(&(p[2] - p[0]));
        prop_assume!(area.abs() > 1e-3);
        let (s, c) = theta.sin_cos();
        let rot = Mat2::new(c, -s, s, c);
        let q = p.map(|x| rot * x * scale + Vec2::new(shift.0, shift.1));
        let a = aspect_ratio(&p).unwrap();
        let b = aspect_ratio(&q).unwrap();
        prop_assert!(a >= 1.0 - 1e-12);
        prop_assert!((a - b).abs() <= 1e-10 * a);
    }
}
