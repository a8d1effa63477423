//! Hierarchical basis error estimate in the space of quadratic edge bubbles.
//!
//! The estimate `z_h` solves `a(z_h, w) = f(w) − a(u_h, w)` for every edge
//! bubble `w` (or the linearized form about `u_h` for variational problems).
//! The system is only solved approximately by a few symmetric Gauss–Seidel
//! sweeps.

use log::warn;

use crate::error::{Error, Result};
use crate::fem::{LinearSystem, ProblemKind, ProblemSpec, SolutionField};
use crate::linalg::{is_spd, norm2, CsrMatrix, Mat2, Vec2};
use crate::mesh::{Mesh, LOCAL_EDGES};
use crate::quadrature::TriangleRule;

/// One coefficient per mesh edge; the coefficient multiplies `φ_a φ_b` for
/// the edge endpoints `a`, `b`.
#[derive(Debug, Clone, PartialEq)]
pub struct BubbleField {
    pub coeffs: Vec<f64>,
}

impl BubbleField {
    pub fn zeros(mesh: &Mesh) -> Self {
        BubbleField {
            coeffs: vec![0.0; mesh.adjacency().num_edges()],
        }
    }

    /// Value on element `k` at barycentric coordinates `b`. Vanishes at the
    /// vertices, where two of the three coordinates are zero.
    pub fn evaluate(&self, mesh: &Mesh, k: usize, b: [f64; 3]) -> f64 {
        let edges = mesh.adjacency().triangle_edges[k];
        (0..3)
            .map(|e| {
                let [i, j] = LOCAL_EDGES[e];
                self.coeffs[edges[e]] * b[i] * b[j]
            })
            .sum()
    }

    pub fn gradient(&self, mesh: &Mesh, k: usize, b: [f64; 3]) -> Vec2 {
        let g = mesh.geometry(k).p1_gradients;
        let edges = mesh.adjacency().triangle_edges[k];
        let mut out = Vec2::zeros();
        for e in 0..3 {
            let [i, j] = LOCAL_EDGES[e];
            out += (g[j] * b[i] + g[i] * b[j]) * self.coeffs[edges[e]];
        }
        out
    }
}

/// Values and gradients of the three local bubbles at a barycentric point.
fn local_bubbles(g: &[Vec2; 3], b: &[f64; 3]) -> ([f64; 3], [Vec2; 3]) {
    let mut val = [0.0; 3];
    let mut grad = [Vec2::zeros(); 3];
    for (e, [i, j]) in LOCAL_EDGES.iter().copied().enumerate() {
        val[e] = b[i] * b[j];
        grad[e] = g[j] * b[i] + g[i] * b[j];
    }
    (val, grad)
}

/// Coefficients of the (linearized) bilinear form at a point:
/// `a(z, w) = ∫ ∇wᵀ A ∇z + c·∇w z + c·∇z w + s z w`.
struct FormCoefficients {
    a: Mat2,
    c: Vec2,
    s: f64,
}

/// Right-hand-side data at a point: `ℓ(w) = ∫ q w − p·∇w`.
struct ResidualData {
    q: f64,
    p: Vec2,
}

pub const DEFAULT_SWEEP_TOL: f64 = 0.01;
pub const DEFAULT_MAX_SWEEPS: usize = 30;

/// Treatment of the bubbles of boundary edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BoundaryBubbles {
    /// Fixed to the interpolation error `g − u_h` of the Dirichlet data.
    #[default]
    Data,
    /// Unknowns like the interior bubbles.
    Free,
    /// Fixed to zero.
    Zero,
}

/// The error problem with boundary bubbles fixed by the Dirichlet data.
pub fn assemble_error_problem(problem: &ProblemSpec, mesh: &Mesh, u_h: &SolutionField) -> Result<LinearSystem> {
    assemble_error_problem_with(problem, mesh, u_h, BoundaryBubbles::Data)
}

pub fn assemble_error_problem_with(
    problem: &ProblemSpec,
    mesh: &Mesh,
    u_h: &SolutionField,
    boundary: BoundaryBubbles,
) -> Result<LinearSystem> {
    if u_h.values.len() != mesh.num_vertices() {
        return Err(Error::SizeMismatch(format!(
            "solution has {} values for a mesh with {} vertices",
            u_h.values.len(),
            mesh.num_vertices()
        )));
    }
    let adj = mesh.adjacency();
    let ne = adj.num_edges();
    let mut unknowns = Vec::with_capacity(ne);
    let mut entity_to_unknown = vec![None; ne];
    let mut fixed = vec![0.0; ne];
    for e in 0..ne {
        if boundary == BoundaryBubbles::Free || !adj.is_boundary_edge(e) {
            entity_to_unknown[e] = Some(unknowns.len());
            unknowns.push(e);
        } else if boundary == BoundaryBubbles::Data {
            // The bubble is 1/4 at the edge midpoint.
            let [a, b] = adj.edges[e];
            let (pa, pb) = (mesh.vertices()[a], mesh.vertices()[b]);
            let mid = (problem.dirichlet)((pa + pb) * 0.5);
            fixed[e] = 4.0 * (mid - 0.5 * (u_h.values[a] + u_h.values[b]));
        }
    }
    let n = unknowns.len();
    let rule = TriangleRule::degree4();
    let mut triplets = Vec::with_capacity(9 * mesh.num_triangles());
    let mut rhs = vec![0.0; n];
    for k in 0..mesh.num_triangles() {
        let geo = mesh.geometry(k);
        let p = mesh.corners(k);
        let vals = u_h.element_values(mesh, k);
        let grad_u = geo.gradient(vals);
        let d_k = match &problem.kind {
            ProblemKind::LinearElliptic(lin) => {
                let d = lin.diffusion_at(geo.centroid);
                if !is_spd(&d) {
                    return Err(Error::DiffusionNotSpd { element: k });
                }
                Some(d)
            }
            ProblemKind::Variational(_) => None,
        };
        let mut local = [[0.0; 3]; 3];
        let mut load = [0.0; 3];
        for (b, w) in rule.iter() {
            let x = p[0] * b[0] + p[1] * b[1] + p[2] * b[2];
            let uq = vals[0] * b[0] + vals[1] * b[1] + vals[2] * b[2];
            let (form, res) = match (&problem.kind, d_k) {
                (ProblemKind::LinearElliptic(lin), Some(d)) => (
                    FormCoefficients { a: d, c: Vec2::zeros(), s: 0.0 },
                    ResidualData { q: (lin.source)(x), p: d * grad_u },
                ),
                (ProblemKind::Variational(f), _) => (
                    FormCoefficients {
                        a: f.d_pp(x, uq, grad_u),
                        c: f.d_pu(x, uq, grad_u),
                        s: f.d_uu(x, uq, grad_u),
                    },
                    ResidualData {
                        q: -f.d_u(x, uq, grad_u),
                        p: f.d_p(x, uq, grad_u),
                    },
                ),
                _ => unreachable!(),
            };
            let (bv, bg) = local_bubbles(&geo.p1_gradients, b);
            let wa = geo.area * w;
            for i in 0..3 {
                load[i] += wa * (res.q * bv[i] - res.p.dot(&bg[i]));
                for j in 0..3 {
                    local[i][j] += wa
                        * (bg[i].dot(&(form.a * bg[j]))
                            + form.c.dot(&bg[i]) * bv[j]
                            + form.c.dot(&bg[j]) * bv[i]
                            + form.s * bv[i] * bv[j]);
                }
            }
        }
        let edges = adj.triangle_edges[k];
        for i in 0..3 {
            let Some(r) = entity_to_unknown[edges[i]] else { continue };
            rhs[r] += load[i];
            for j in 0..3 {
                match entity_to_unknown[edges[j]] {
                    Some(c) => triplets.push((r, c, local[i][j])),
                    None => rhs[r] -= local[i][j] * fixed[edges[j]],
                }
            }
        }
    }
    Ok(LinearSystem {
        matrix: CsrMatrix::from_triplets(n, triplets),
        rhs,
        unknowns,
        entity_to_unknown,
        fixed,
    })
}

#[derive(Debug, Clone)]
pub struct SgsReport {
    pub sweeps: usize,
    pub relative_change: f64,
    pub converged: bool,
}

/// Symmetric Gauss–Seidel (forward then backward sweep) from the zero
/// iterate, stopping when the Euclidean relative change between consecutive
/// sweeps drops to `rel_change_tol`.
pub fn sgs_solve(system: &LinearSystem, num_edges: usize, rel_change_tol: f64, max_sweeps: usize) -> Result<(BubbleField, SgsReport)> {
    let a = &system.matrix;
    let n = a.dim();
    let diag = a.diagonal();
    if let Some(row) = diag.iter().position(|&d| d == 0.0) {
        return Err(Error::ZeroDiagonal { row });
    }
    let mut x = vec![0.0; n];
    let mut prev = x.clone();
    let mut report = SgsReport {
        sweeps: 0,
        relative_change: f64::INFINITY,
        converged: false,
    };
    let relax = |x: &mut [f64], i: usize| {
        let mut s = system.rhs[i];
        for (j, v) in a.row(i) {
            if j != i {
                s -= v * x[j];
            }
        }
        x[i] = s / diag[i];
    };
    while report.sweeps < max_sweeps {
        for i in 0..n {
            relax(&mut x, i);
        }
        for i in (0..n).rev() {
            relax(&mut x, i);
        }
        report.sweeps += 1;
        let change: f64 = x.iter().zip(&prev).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let size = norm2(&x);
        report.relative_change = if size == 0.0 {
            if change == 0.0 { 0.0 } else { f64::INFINITY }
        } else {
            change / size
        };
        if report.relative_change <= rel_change_tol {
            report.converged = true;
            break;
        }
        prev.copy_from_slice(&x);
    }
    if !report.converged {
        warn!(
            "sgs: relative change {:.3e} after {} sweeps exceeds {rel_change_tol}",
            report.relative_change, report.sweeps
        );
    }
    if system.fixed.len() != num_edges {
        return Err(Error::SizeMismatch(format!("system for {} edges, mesh has {num_edges}", system.fixed.len())));
    }
    Ok((BubbleField { coeffs: system.scatter(&x) }, report))
}

/// Assembles and approximately solves the error problem.
pub fn estimate(problem: &ProblemSpec, mesh: &Mesh, u_h: &SolutionField, rel_change_tol: f64, max_sweeps: usize) -> Result<(BubbleField, SgsReport)> {
    let sys = assemble_error_problem(problem, mesh, u_h)?;
    sgs_solve(&sys, mesh.adjacency().num_edges(), rel_change_tol, max_sweeps)
}

/// Constant Hessian of the piecewise quadratic `z_h` on element `k`.
pub fn bubble_hessian(mesh: &Mesh, z: &BubbleField, k: usize) -> Mat2 {
    let g = mesh.geometry(k).p1_gradients;
    let edges = mesh.adjacency().triangle_edges[k];
    let mut h = Mat2::zeros();
    for e in 0..3 {
        let [i, j] = LOCAL_EDGES[e];
        let outer = g[i] * g[j].transpose();
        h += (outer + outer.transpose()) * z.coeffs[edges[e]];
    }
    h
}

pub fn bubble_hessians(mesh: &Mesh, z: &BubbleField) -> Vec<Mat2> {
    (0..mesh.num_triangles()).map(|k| bubble_hessian(mesh, z, k)).collect()
}

/// `a(z_h, z_h)^{1/2}` for linear problems (with D at element centroids),
/// the H1-seminorm for variational ones.
pub fn estimate_norm(problem: &ProblemSpec, mesh: &Mesh, z: &BubbleField) -> f64 {
    let rule = TriangleRule::degree4();
    let mut sum = 0.0;
    for k in 0..mesh.num_triangles() {
        let geo = mesh.geometry(k);
        let d = match &problem.kind {
            ProblemKind::LinearElliptic(lin) => lin.diffusion_at(geo.centroid),
            ProblemKind::Variational(_) => Mat2::identity(),
        };
        for (b, w) in rule.iter() {
            let g = z.gradient(mesh, k, *b);
            sum += geo.area * w * g.dot(&(d * g));
        }
    }
    sum.sqrt()
}

/// H1-seminorm of `z_h`.
pub fn h1_seminorm(mesh: &Mesh, z: &BubbleField) -> f64 {
    let rule = TriangleRule::degree4();
    let mut sum = 0.0;
    for k in 0..mesh.num_triangles() {
        let area = mesh.area(k);
        for (b, w) in rule.iter() {
            sum += area * w * z.gradient(mesh, k, *b).norm_squared();
        }
    }
    sum.sqrt()
}
