//! P1 finite element assembly and solution for linear elliptic and
//! variational problems, plus error norms.

use std::fmt;
use std::sync::Arc;

use log::{debug, warn};

use crate::error::{Error, Result};
use crate::linalg::{default_cg_cap, is_spd, pcg, CsrMatrix, Mat2, Vec2};
use crate::mesh::{Mesh, Point};
use crate::quadrature::TriangleRule;

pub type ScalarFn = Arc<dyn Fn(Point) -> f64 + Send + Sync>;
pub type VectorFn = Arc<dyn Fn(Point) -> Vec2 + Send + Sync>;
pub type TensorFn = Arc<dyn Fn(Point) -> Mat2 + Send + Sync>;

/// Integrand `F(x, u, p)` of a functional `I[v] = ∫ F(x, v, ∇v)` together
/// with the partial derivatives needed for Newton's method, residuals and
/// edge jumps.
pub trait Integrand: Send + Sync {
    fn value(&self, x: Point, u: f64, p: Vec2) -> f64;
    fn d_u(&self, x: Point, u: f64, p: Vec2) -> f64;
    fn d_p(&self, x: Point, u: f64, p: Vec2) -> Vec2;
    fn d_pp(&self, x: Point, u: f64, p: Vec2) -> Mat2;
    /// ∂F_p/∂u.
    fn d_pu(&self, _x: Point, _u: f64, _p: Vec2) -> Vec2 {
        Vec2::zeros()
    }
    /// Explicit x-derivative of F_p: entry (i, j) is ∂(F_p)_i/∂x_j.
    fn d_px(&self, _x: Point, _u: f64, _p: Vec2) -> Mat2 {
        Mat2::zeros()
    }
    fn d_uu(&self, _x: Point, _u: f64, _p: Vec2) -> f64 {
        0.0
    }
}

/// `-∇·(D∇u) = f` with D defaulting to the identity.
#[derive(Clone)]
pub struct LinearElliptic {
    pub diffusion: Option<TensorFn>,
    pub source: ScalarFn,
}

impl LinearElliptic {
    pub fn diffusion_at(&self, x: Point) -> Mat2 {
        self.diffusion.as_ref().map_or_else(Mat2::identity, |d| d(x))
    }
}

#[derive(Clone)]
pub enum ProblemKind {
    LinearElliptic(LinearElliptic),
    Variational(Arc<dyn Integrand>),
}

#[derive(Clone)]
pub struct ExactSolution {
    pub value: ScalarFn,
    pub gradient: VectorFn,
}

/// Declarative description of a Dirichlet problem.
#[derive(Clone)]
pub struct ProblemSpec {
    pub name: String,
    pub kind: ProblemKind,
    pub dirichlet: ScalarFn,
    pub exact: Option<ExactSolution>,
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            ProblemKind::LinearElliptic(_) => "linear-elliptic",
            ProblemKind::Variational(_) => "variational",
        };
        f.debug_struct("ProblemSpec")
            .field("name", &self.name)
            .field("kind", &kind)
            .field("exact", &self.exact.is_some())
            .finish()
    }
}

impl ProblemSpec {
    pub fn poisson(source: ScalarFn, dirichlet: ScalarFn) -> Self {
        ProblemSpec {
            name: "poisson".into(),
            kind: ProblemKind::LinearElliptic(LinearElliptic {
                diffusion: None,
                source,
            }),
            dirichlet,
            exact: None,
        }
    }

    pub fn with_exact(mut self, exact: ExactSolution) -> Self {
        self.exact = Some(exact);
        self
    }

    pub fn is_variational(&self) -> bool {
        matches!(self.kind, ProblemKind::Variational(_))
    }

    pub fn has_diffusion_tensor(&self) -> bool {
        matches!(&self.kind, ProblemKind::LinearElliptic(l) if l.diffusion.is_some())
    }

    pub fn linear(&self) -> Result<&LinearElliptic> {
        match &self.kind {
            ProblemKind::LinearElliptic(l) => Ok(l),
            ProblemKind::Variational(_) => Err(Error::ProblemKind("expected a linear-elliptic problem".into())),
        }
    }

    pub fn integrand(&self) -> Result<&Arc<dyn Integrand>> {
        match &self.kind {
            ProblemKind::Variational(f) => Ok(f),
            ProblemKind::LinearElliptic(_) => Err(Error::ProblemKind("expected a variational problem".into())),
        }
    }
}

/// P1 nodal coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionField {
    pub values: Vec<f64>,
}

impl SolutionField {
    pub fn new(values: Vec<f64>) -> Self {
        SolutionField { values }
    }

    pub fn interpolate(mesh: &Mesh, f: impl Fn(Point) -> f64) -> Self {
        SolutionField {
            values: mesh.vertices().iter().map(|&p| f(p)).collect(),
        }
    }

    pub fn element_values(&self, mesh: &Mesh, k: usize) -> [f64; 3] {
        mesh.triangles()[k].map(|v| self.values[v])
    }

    pub fn element_gradient(&self, mesh: &Mesh, k: usize) -> Vec2 {
        mesh.geometry(k).gradient(self.element_values(mesh, k))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    fn check(&self, mesh: &Mesh) -> Result<()> {
        if self.values.len() != mesh.num_vertices() {
            return Err(Error::SizeMismatch(format!(
                "solution has {} values for {} vertices",
                self.values.len(),
                mesh.num_vertices()
            )));
        }
        Ok(())
    }
}

/// Sparse symmetric system over the free unknowns with the map back to
/// mesh entities (vertices for P1 problems, edges for bubble problems).
#[derive(Debug, Clone)]
pub struct LinearSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    /// Mesh entity of each unknown.
    pub unknowns: Vec<usize>,
    /// Unknown index of each mesh entity, `None` for constrained entities.
    pub entity_to_unknown: Vec<Option<usize>>,
    /// Prescribed value of each constrained entity (0 for free ones).
    pub fixed: Vec<f64>,
}

impl LinearSystem {
    pub fn dim(&self) -> usize {
        self.unknowns.len()
    }

    /// Scatters a solution vector onto the entities, filling constrained
    /// ones with their prescribed values.
    pub fn scatter(&self, x: &[f64]) -> Vec<f64> {
        let mut out = self.fixed.clone();
        for (i, &e) in self.unknowns.iter().enumerate() {
            out[e] = x[i];
        }
        out
    }
}

pub(crate) struct DofMap {
    pub unknowns: Vec<usize>,
    pub vertex_to_unknown: Vec<Option<usize>>,
    pub fixed: Vec<f64>,
}

pub(crate) fn dirichlet_dofs(mesh: &Mesh, g: &ScalarFn) -> DofMap {
    let on_boundary = mesh.boundary_vertices();
    let mut unknowns = Vec::new();
    let mut vertex_to_unknown = vec![None; mesh.num_vertices()];
    let mut fixed = vec![0.0; mesh.num_vertices()];
    for (v, &b) in on_boundary.iter().enumerate() {
        if b {
            fixed[v] = g(mesh.vertices()[v]);
        } else {
            vertex_to_unknown[v] = Some(unknowns.len());
            unknowns.push(v);
        }
    }
    DofMap {
        unknowns,
        vertex_to_unknown,
        fixed,
    }
}

/// Element stiffness `|K| ∇φ_iᵀ D ∇φ_j`.
pub fn local_stiffness(mesh: &Mesh, k: usize, d: &Mat2) -> [[f64; 3]; 3] {
    let g = mesh.geometry(k);
    let mut a = [[0.0; 3]; 3];
    for i in 0..3 {
        let dg = d * g.p1_gradients[i];
        for j in 0..3 {
            a[i][j] = g.area * g.p1_gradients[j].dot(&dg);
        }
    }
    a
}

fn scatter_local(
    dofs: &DofMap,
    tri: &[usize; 3],
    local: &[[f64; 3]; 3],
    load: &[f64; 3],
    triplets: &mut Vec<(usize, usize, f64)>,
    rhs: &mut [f64],
) {
    for i in 0..3 {
        let Some(r) = dofs.vertex_to_unknown[tri[i]] else { continue };
        rhs[r] += load[i];
        for j in 0..3 {
            match dofs.vertex_to_unknown[tri[j]] {
                Some(c) => triplets.push((r, c, local[i][j])),
                None => rhs[r] -= local[i][j] * dofs.fixed[tri[j]],
            }
        }
    }
}

pub fn assemble_linear(problem: &ProblemSpec, mesh: &Mesh) -> Result<LinearSystem> {
    let lin = problem.linear()?;
    let dofs = dirichlet_dofs(mesh, &problem.dirichlet);
    let rule = TriangleRule::degree2();
    let n = dofs.unknowns.len();
    let mut triplets = Vec::with_capacity(9 * mesh.num_triangles());
    let mut rhs = vec![0.0; n];
    for k in 0..mesh.num_triangles() {
        let geo = mesh.geometry(k);
        let d = lin.diffusion_at(geo.centroid);
        if !is_spd(&d) {
            return Err(Error::DiffusionNotSpd { element: k });
        }
        let local = local_stiffness(mesh, k, &d);
        let p = mesh.corners(k);
        let mut load = [0.0; 3];
        for (b, w) in rule.iter() {
            let x = p[0] * b[0] + p[1] * b[1] + p[2] * b[2];
            let fx = (lin.source)(x);
            for i in 0..3 {
                load[i] += geo.area * w * fx * b[i];
            }
        }
        scatter_local(&dofs, &mesh.triangles()[k], &local, &load, &mut triplets, &mut rhs);
    }
    Ok(LinearSystem {
        matrix: CsrMatrix::from_triplets(n, triplets),
        rhs,
        unknowns: dofs.unknowns,
        entity_to_unknown: dofs.vertex_to_unknown,
        fixed: dofs.fixed,
    })
}

pub const DEFAULT_CG_TOL: f64 = 1e-13;

/// Preconditioned conjugate gradient solve of an SPD system.
pub fn solve_spd(system: &LinearSystem, rel_tol: f64) -> Result<Vec<f64>> {
    let n = system.dim();
    if n == 0 {
        return Ok(Vec::new());
    }
    let (x, report) = pcg(&system.matrix, &system.rhs, rel_tol, default_cg_cap(n))?;
    debug!("cg: {n} unknowns, {} iterations", report.iterations);
    Ok(x)
}

pub fn solve_linear(problem: &ProblemSpec, mesh: &Mesh) -> Result<SolutionField> {
    let sys = assemble_linear(problem, mesh)?;
    let x = solve_spd(&sys, DEFAULT_CG_TOL)?;
    Ok(SolutionField::new(sys.scatter(&x)))
}

/// Galerkin residual `δI[u_h, φ_i]` over all vertices.
pub fn galerkin_residual(f: &dyn Integrand, mesh: &Mesh, u: &SolutionField) -> Vec<f64> {
    let rule = TriangleRule::degree2();
    let mut r = vec![0.0; mesh.num_vertices()];
    for k in 0..mesh.num_triangles() {
        let geo = mesh.geometry(k);
        let tri = mesh.triangles()[k];
        let vals = u.element_values(mesh, k);
        let p = mesh.corners(k);
        let grad = geo.gradient(vals);
        for (b, w) in rule.iter() {
            let x = p[0] * b[0] + p[1] * b[1] + p[2] * b[2];
            let uq = vals[0] * b[0] + vals[1] * b[1] + vals[2] * b[2];
            let fu = f.d_u(x, uq, grad);
            let fp = f.d_p(x, uq, grad);
            for i in 0..3 {
                r[tri[i]] += geo.area * w * (fu * b[i] + fp.dot(&geo.p1_gradients[i]));
            }
        }
    }
    r
}

fn free_norm(r: &[f64], dofs: &DofMap) -> f64 {
    dofs.unknowns.iter().map(|&v| r[v] * r[v]).sum::<f64>().sqrt()
}

/// Jacobian of the Galerkin residual with respect to the free nodal values.
fn newton_jacobian(f: &dyn Integrand, mesh: &Mesh, u: &SolutionField, dofs: &DofMap) -> CsrMatrix {
    let rule = TriangleRule::degree2();
    let mut triplets = Vec::with_capacity(9 * mesh.num_triangles());
    for k in 0..mesh.num_triangles() {
        let geo = mesh.geometry(k);
        let tri = mesh.triangles()[k];
        let vals = u.element_values(mesh, k);
        let p = mesh.corners(k);
        let grad = geo.gradient(vals);
        let mut local = [[0.0; 3]; 3];
        for (b, w) in rule.iter() {
            let x = p[0] * b[0] + p[1] * b[1] + p[2] * b[2];
            let uq = vals[0] * b[0] + vals[1] * b[1] + vals[2] * b[2];
            let fpp = f.d_pp(x, uq, grad);
            let fpu = f.d_pu(x, uq, grad);
            let fuu = f.d_uu(x, uq, grad);
            for i in 0..3 {
                let gi = geo.p1_gradients[i];
                for j in 0..3 {
                    let gj = geo.p1_gradients[j];
                    local[i][j] += geo.area
                        * w
                        * (gi.dot(&(fpp * gj)) + fpu.dot(&gi) * b[j] + fpu.dot(&gj) * b[i] + fuu * b[i] * b[j]);
                }
            }
        }
        for i in 0..3 {
            let Some(r) = dofs.vertex_to_unknown[tri[i]] else { continue };
            for j in 0..3 {
                if let Some(c) = dofs.vertex_to_unknown[tri[j]] {
                    triplets.push((r, c, local[i][j]));
                }
            }
        }
    }
    CsrMatrix::from_triplets(dofs.unknowns.len(), triplets)
}

#[derive(Debug, Clone, Default)]
pub struct NewtonReport {
    pub iterations: usize,
    pub residual_history: Vec<f64>,
}

pub const NEWTON_MAX_ITERATIONS: usize = 60;
pub const LINE_SEARCH_HALVINGS: usize = 30;

/// Damped Newton iteration for the Galerkin equations of a variational problem.
pub fn newton_solve(problem: &ProblemSpec, mesh: &Mesh, initial: &SolutionField) -> Result<(SolutionField, NewtonReport)> {
    let f = problem.integrand()?.clone();
    initial.check(mesh)?;
    let dofs = dirichlet_dofs(mesh, &problem.dirichlet);
    let mut u = initial.clone();
    for (v, fixed) in dofs.fixed.iter().enumerate() {
        if dofs.vertex_to_unknown[v].is_none() {
            u.values[v] = *fixed;
        }
    }
    let mut r = galerkin_residual(f.as_ref(), mesh, &u);
    let r0 = free_norm(&r, &dofs);
    let mut rnorm = r0;
    let mut report = NewtonReport {
        iterations: 0,
        residual_history: vec![r0],
    };
    let converged = |rn: f64| rn <= 1e-9 * r0 || rn <= 1e-12;
    while !converged(rnorm) {
        if report.iterations >= NEWTON_MAX_ITERATIONS {
            return Err(Error::NewtonMaxIterations {
                iterations: report.iterations,
                residual: rnorm,
            });
        }
        let jac = newton_jacobian(f.as_ref(), mesh, &u, &dofs);
        let rhs: Vec<f64> = dofs.unknowns.iter().map(|&v| -r[v]).collect();
        let (step, _) = pcg(&jac, &rhs, 1e-12, default_cg_cap(rhs.len())).map_err(|e| match e {
            Error::Singular(s) => Error::Singular(format!("Newton Jacobian: {s}")),
            other => other,
        })?;
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..=LINE_SEARCH_HALVINGS {
            let mut trial = u.clone();
            for (i, &v) in dofs.unknowns.iter().enumerate() {
                trial.values[v] += t * step[i];
            }
            let rt = galerkin_residual(f.as_ref(), mesh, &trial);
            let nt = free_norm(&rt, &dofs);
            if nt < rnorm {
                u = trial;
                r = rt;
                rnorm = nt;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        report.iterations += 1;
        report.residual_history.push(rnorm);
        if !accepted {
            // Round-off floor: the residual cannot decrease any further.
            if rnorm <= 1e-8 * r0 {
                warn!("newton: stalled at relative residual {:e}", rnorm / r0);
                break;
            }
            return Err(Error::NewtonDivergence {
                halvings: LINE_SEARCH_HALVINGS,
                residual: rnorm,
            });
        }
        debug!("newton step {}: |R| = {rnorm:e} (t = {t})", report.iterations);
    }
    Ok((u, report))
}

/// Newton initial guess: the Poisson solution with the same boundary data.
pub fn poisson_extension(problem: &ProblemSpec, mesh: &Mesh) -> Result<SolutionField> {
    let p = ProblemSpec::poisson(Arc::new(|_| 0.0), problem.dirichlet.clone());
    solve_linear(&p, mesh)
}

/// Solves the primal problem: a linear solve, or Newton from `initial`
/// (the Poisson extension of the boundary data when absent).
pub fn solve_primal(problem: &ProblemSpec, mesh: &Mesh, initial: Option<&SolutionField>) -> Result<(SolutionField, Option<NewtonReport>)> {
    match &problem.kind {
        ProblemKind::LinearElliptic(_) => Ok((solve_linear(problem, mesh)?, None)),
        ProblemKind::Variational(_) => {
            let init = match initial {
                Some(u) => u.clone(),
                None => poisson_extension(problem, mesh)?,
            };
            let (u, rep) = newton_solve(problem, mesh, &init)?;
            Ok((u, Some(rep)))
        }
    }
}

/// `(‖u − u_h‖_{L2}, |u − u_h|_{H1})` by the 7-point rule.
pub fn error_norms(mesh: &Mesh, u_h: &SolutionField, exact: &ExactSolution) -> Result<(f64, f64)> {
    u_h.check(mesh)?;
    let rule = TriangleRule::degree5();
    let (mut l2, mut h1) = (0.0, 0.0);
    for k in 0..mesh.num_triangles() {
        let geo = mesh.geometry(k);
        let vals = u_h.element_values(mesh, k);
        let grad = geo.gradient(vals);
        let p = mesh.corners(k);
        for (b, w) in rule.iter() {
            let x = p[0] * b[0] + p[1] * b[1] + p[2] * b[2];
            let uh = vals[0] * b[0] + vals[1] * b[1] + vals[2] * b[2];
            let e = (exact.value)(x) - uh;
            let ge = (exact.gradient)(x) - grad;
            l2 += geo.area * w * e * e;
            h1 += geo.area * w * ge.norm_squared();
        }
    }
    Ok((l2.sqrt(), h1.sqrt()))
}

/// Norm of the Galerkin residual over free vertices, for diagnostics.
pub fn residual_norm(problem: &ProblemSpec, mesh: &Mesh, u: &SolutionField) -> Result<f64> {
    let f = problem.integrand()?;
    let dofs = dirichlet_dofs(mesh, &problem.dirichlet);
    let r = galerkin_residual(f.as_ref(), mesh, u);
    Ok(free_norm(&r, &dofs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{norm2, solve_dense_spd};
    use crate::mesh::{unit_square, BoundaryEdge, Curve};
    use approx::assert_relative_eq;
    use std::collections::BTreeMap;
    use std::f64::consts::PI;

    fn reference_triangle() -> Mesh {
        let v = vec![Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(0.0, 1.0)];
        let be = vec![
            BoundaryEdge { v: [0, 1], tag: 1 },
            BoundaryEdge { v: [1, 2], tag: 1 },
            BoundaryEdge { v: [2, 0], tag: 1 },
        ];
        Mesh::new(v.clone(), vec![[0, 1, 2]], be, BTreeMap::from([(1, Curve::Segment { start: v[0], end: v[1] })])).unwrap()
    }

    #[test]
    fn poisson_reference_stiffness() {
        let a = local_stiffness(&reference_triangle(), 0, &Mat2::identity());
        let expect = [[1.0, -0.5, -0.5], [-0.5, 0.5, 0.0], [-0.5, 0.0, 0.5]];
        for i in 0..3 {
            for j in 0..3 {
                assert_relative_eq!(a[i][j], expect[i][j], epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn anisotropic_stiffness_scales_x_terms() {
        let mesh = reference_triangle();
        let iso = local_stiffness(&mesh, 0, &Mat2::identity());
        let aniso = local_stiffness(&mesh, 0, &Mat2::new(1000.0, 0.0, 0.0, 1.0));
        let g = mesh.geometry(0).p1_gradients;
        for i in 0..3 {
            for j in 0..3 {
                let x = 0.5 * g[i].x * g[j].x;
                let y = 0.5 * g[i].y * g[j].y;
                assert_relative_eq!(iso[i][j], x + y, epsilon = 1e-15);
                assert_relative_eq!(aniso[i][j], 1000.0 * x + y, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn linear_solution_is_reproduced() {
        let mesh = unit_square(8);
        let p = ProblemSpec::poisson(Arc::new(|_| 0.0), Arc::new(|x: Point| x.x));
        let u = solve_linear(&p, &mesh).unwrap();
        for (v, x) in mesh.vertices().iter().enumerate() {
            assert!((u.values[v] - x.x).abs() < 1e-10);
        }
    }

    #[test]
    fn non_spd_diffusion_is_rejected() {
        let mesh = unit_square(2);
        let mut p = ProblemSpec::poisson(Arc::new(|_| 0.0), Arc::new(|_| 0.0));
        p.kind = ProblemKind::LinearElliptic(LinearElliptic {
            diffusion: Some(Arc::new(|x: Point| if x.x > 0.5 { Mat2::new(1.0, 0.0, 0.0, -1.0) } else { Mat2::identity() })),
            source: Arc::new(|_| 0.0),
        });
        assert!(matches!(assemble_linear(&p, &mesh), Err(Error::DiffusionNotSpd { .. })));
    }

    fn sine_problem() -> ProblemSpec {
        ProblemSpec::poisson(
            Arc::new(|x: Point| 2.0 * PI * PI * (PI * x.x).sin() * (PI * x.y).sin()),
            Arc::new(|_| 0.0),
        )
        .with_exact(ExactSolution {
            value: Arc::new(|x: Point| (PI * x.x).sin() * (PI * x.y).sin()),
            gradient: Arc::new(|x: Point| {
                Vec2::new(PI * (PI * x.x).cos() * (PI * x.y).sin(), PI * (PI * x.x).sin() * (PI * x.y).cos())
            }),
        })
    }

    #[test]
    fn assembled_matrix_is_symmetric_and_matches_dense() {
        let mesh = unit_square(6);
        let sys = assemble_linear(&sine_problem(), &mesh).unwrap();
        let (asym, max) = sys.matrix.asymmetry();
        assert!(asym <= 1e-12 * max);
        assert!(sys.matrix.to_dense().cholesky().is_some());
        let x = solve_spd(&sys, 1e-12).unwrap();
        let xd = solve_dense_spd(&sys.matrix, &sys.rhs).unwrap();
        for (a, b) in x.iter().zip(&xd) {
            assert!((a - b).abs() <= 1e-8 * b.abs().max(1.0));
        }
    }

    #[test]
    fn galerkin_orthogonality() {
        let mesh = unit_square(6);
        let p = sine_problem();
        let sys = assemble_linear(&p, &mesh).unwrap();
        let x = solve_spd(&sys, 1e-13).unwrap();
        let r: Vec<f64> = sys.matrix.apply(&x).iter().zip(&sys.rhs).map(|(a, b)| a - b).collect();
        assert!(norm2(&r) <= 1e-9 * norm2(&sys.rhs));
    }

    #[test]
    fn smooth_l2_refinement_ratio() {
        let p = sine_problem();
        let exact = p.exact.clone().unwrap();
        let e = |n| {
            let mesh = unit_square(n);
            error_norms(&mesh, &solve_linear(&p, &mesh).unwrap(), &exact).unwrap()
        };
        let (l2a, _) = e(16);
        let (l2b, _) = e(32);
        let ratio = l2a / l2b;
        assert!((3.7..=4.3).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn norms_vanish_for_linear_exact() {
        let mesh = unit_square(3);
        let u = SolutionField::interpolate(&mesh, |x| 2.0 * x.x - x.y + 0.5);
        let exact = ExactSolution {
            value: Arc::new(|x: Point| 2.0 * x.x - x.y + 0.5),
            gradient: Arc::new(|_| Vec2::new(2.0, -1.0)),
        };
        let (l2, h1) = error_norms(&mesh, &u, &exact).unwrap();
        assert!(l2 < 1e-12 && h1 < 1e-12);
    }

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

    #[test]
    fn newton_on_quadratic_takes_one_step() {
        let mesh = unit_square(6);
        let g: ScalarFn = Arc::new(|x: Point| (x.x * 3.0).sin() + x.y);
        let prob = ProblemSpec {
            name: "dirichlet-energy".into(),
            kind: ProblemKind::Variational(Arc::new(Dirichlet)),
            dirichlet: g.clone(),
            exact: None,
        };
        let init = SolutionField::interpolate(&mesh, |x| 10.0 * x.x * x.y);
        let (u, rep) = newton_solve(&prob, &mesh, &init).unwrap();
        assert_eq!(rep.iterations, 1);
        let lin = solve_linear(&ProblemSpec::poisson(Arc::new(|_| 0.0), g), &mesh).unwrap();
        for (a, b) in u.values.iter().zip(&lin.values) {
            assert!((a - b).abs() < 1e-9);
        }
    }
}
