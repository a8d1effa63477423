//! Metric tensor constructions, the choice of the regularization parameter
//! α and element-to-vertex transfer.

use log::warn;

use crate::error::{Error, Result};
use crate::fem::{ProblemSpec, SolutionField};
use crate::linalg::{is_spd, spectral_norm, sym_eigen, Mat2, Vec2};
use crate::mesh::{Mesh, NONE};
use crate::quadrature::{TriangleRule, GAUSS2};
use crate::recovery::HessianField;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Basis {
    Element,
    Vertex,
}

/// SPD tensors per element or per vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricField {
    pub tensors: Vec<Mat2>,
    pub basis: Basis,
}

impl MetricField {
    pub fn constant(n: usize, m: Mat2, basis: Basis) -> Self {
        MetricField {
            tensors: vec![m; n],
            basis,
        }
    }

    pub fn all_spd(&self) -> bool {
        self.tensors.iter().all(|m| is_spd(m) && sym_eigen(m).0[1] > 0.0)
    }

    pub fn scaled(&self, c: f64) -> Self {
        MetricField {
            tensors: self.tensors.iter().map(|m| m * c).collect(),
            basis: self.basis,
        }
    }
}

/// Matrix absolute value `Q|Λ|Qᵀ`.
pub fn sym_abs(h: &Mat2) -> Mat2 {
    let (l, q) = sym_eigen(h);
    q * Mat2::from_diagonal(&Vec2::new(l[0].abs(), l[1].abs())) * q.transpose()
}

/// Per-element L2 residual norms and per-edge L2 jump norms.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualData {
    pub element: Vec<f64>,
    /// Indexed by adjacency edge; zero on boundary edges.
    pub edge: Vec<f64>,
}

/// Residual `F_u − ∇·F_p` on each element and flux jumps of `F_p·n` across
/// interior edges. For P1 functions the divergence reduces to
/// `trace(∂F_p/∂x) + ∂F_p/∂u · ∇u_h`.
pub fn residual_and_jumps(problem: &ProblemSpec, mesh: &Mesh, u_h: &SolutionField) -> Result<ResidualData> {
    let f = problem.integrand()?;
    let adj = mesh.adjacency();
    let rule = TriangleRule::degree2();
    let mut element = Vec::with_capacity(mesh.num_triangles());
    let grads: Vec<Vec2> = (0..mesh.num_triangles()).map(|k| u_h.element_gradient(mesh, k)).collect();
    for k in 0..mesh.num_triangles() {
        let p = mesh.corners(k);
        let vals = u_h.element_values(mesh, k);
        let area = mesh.area(k);
        let mut sq = 0.0;
        for (b, w) in rule.iter() {
            let x = p[0] * b[0] + p[1] * b[1] + p[2] * b[2];
            let u = vals[0] * b[0] + vals[1] * b[1] + vals[2] * b[2];
            let g = grads[k];
            let div = f.d_px(x, u, g).trace() + f.d_pu(x, u, g).dot(&g);
            let r = f.d_u(x, u, g) - div;
            sq += w * r * r;
        }
        element.push((area * sq).sqrt());
    }
    let mut edge = vec![0.0; adj.num_edges()];
    for (e, &[a, b]) in adj.edges.iter().enumerate() {
        let [k1, k2] = adj.edge_triangles[e];
        if k2 == NONE {
            continue;
        }
        let (pa, pb) = (mesh.vertices()[a], mesh.vertices()[b]);
        let t = pb - pa;
        let len = t.norm();
        let mut n = Vec2::new(t.y, -t.x) / len;
        // Orient n outward from k1.
        let c1 = mesh.geometry(k1).centroid;
        if n.dot(&(c1 - pa)) > 0.0 {
            n = -n;
        }
        let mut sq = 0.0;
        for (s, w) in GAUSS2 {
            let x = pa + t * s;
            let u = u_h.values[a] * (1.0 - s) + u_h.values[b] * s;
            let jump = (f.d_p(x, u, grads[k1]) - f.d_p(x, u, grads[k2])).dot(&n);
            sq += w * jump * jump;
        }
        edge[e] = (len * sq).sqrt();
    }
    Ok(ResidualData { element, edge })
}

/// Per-element scalar `(|K|^{1/2}‖r_h‖_K + Σ_γ |γ|^{1/2}‖R_h‖_γ) / |K|`.
pub fn residual_indicator(mesh: &Mesh, residuals: &ResidualData) -> Vec<f64> {
    let adj = mesh.adjacency();
    (0..mesh.num_triangles())
        .map(|k| {
            let area = mesh.area(k);
            let edges: f64 = adj.triangle_edges[k]
                .iter()
                .map(|&e| {
                    let [a, b] = adj.edges[e];
                    (mesh.vertices()[b] - mesh.vertices()[a]).norm().sqrt() * residuals.edge[e]
                })
                .sum();
            (area.sqrt() * residuals.element[k] + edges) / area
        })
        .collect()
}

/// Element-wise ingredients of a metric formula, evaluated for any α.
#[derive(Debug, Clone)]
pub enum MetricRecipe {
    /// `M = I`.
    Isotropic { elements: usize },
    /// `det(I + |H|/α)^{-1/6} (I + |H|/α)`, for the L2 error.
    Hierarchical { abs_hessian: Vec<Mat2> },
    /// `(1 + t/α)^{1/2} det(I + |H|/α)^{-1/4} (I + |H|/α)`, with `t` the
    /// residual indicator; for the H1-seminorm error of variational problems.
    Variational { abs_hessian: Vec<Mat2>, indicator: Vec<f64> },
    /// `(1 + B/α)^{1/2} det(D)^{1/2} D^{-1}`.
    Dmp { diffusion: Vec<Mat2>, b: Vec<f64> },
}

impl MetricRecipe {
    pub fn hierarchical(h: &HessianField) -> Self {
        MetricRecipe::Hierarchical {
            abs_hessian: h.values.iter().map(sym_abs).collect(),
        }
    }

    pub fn variational(mesh: &Mesh, residuals: &ResidualData, h: &HessianField) -> Self {
        MetricRecipe::Variational {
            abs_hessian: h.values.iter().map(sym_abs).collect(),
            indicator: residual_indicator(mesh, residuals),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            MetricRecipe::Isotropic { elements } => *elements,
            MetricRecipe::Hierarchical { abs_hessian } => abs_hessian.len(),
            MetricRecipe::Variational { abs_hessian, .. } => abs_hessian.len(),
            MetricRecipe::Dmp { b, .. } => b.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// True when the adaptive part vanishes everywhere.
    pub fn is_trivial(&self) -> bool {
        match self {
            MetricRecipe::Isotropic { .. } => true,
            MetricRecipe::Hierarchical { abs_hessian } => abs_hessian.iter().all(|h| h.abs().max() == 0.0),
            MetricRecipe::Variational { abs_hessian, indicator } => {
                abs_hessian.iter().all(|h| h.abs().max() == 0.0) && indicator.iter().all(|&t| t == 0.0)
            }
            MetricRecipe::Dmp { b, .. } => b.iter().all(|&b| b == 0.0),
        }
    }

    pub fn tensor(&self, k: usize, alpha: f64) -> Mat2 {
        match self {
            MetricRecipe::Isotropic { .. } => Mat2::identity(),
            MetricRecipe::Hierarchical { abs_hessian } => {
                let a = Mat2::identity() + abs_hessian[k] / alpha;
                a * a.determinant().powf(-1.0 / 6.0)
            }
            MetricRecipe::Variational { abs_hessian, indicator } => {
                let a = Mat2::identity() + abs_hessian[k] / alpha;
                a * ((1.0 + indicator[k] / alpha).sqrt() * a.determinant().powf(-0.25))
            }
            MetricRecipe::Dmp { diffusion, b } => {
                let d = diffusion[k];
                let inv = d.try_inverse().unwrap_or_else(Mat2::zeros);
                inv * ((1.0 + b[k] / alpha).sqrt() * d.determinant().sqrt())
            }
        }
    }

    /// `det(M_K(α))^{1/2}`.
    pub fn density(&self, k: usize, alpha: f64) -> f64 {
        match self {
            MetricRecipe::Isotropic { .. } => 1.0,
            MetricRecipe::Hierarchical { abs_hessian } => {
                (Mat2::identity() + abs_hessian[k] / alpha).determinant().powf(1.0 / 3.0)
            }
            MetricRecipe::Variational { abs_hessian, indicator } => {
                (1.0 + indicator[k] / alpha).sqrt()
                    * (Mat2::identity() + abs_hessian[k] / alpha).determinant().powf(0.25)
            }
            MetricRecipe::Dmp { b, .. } => (1.0 + b[k] / alpha).sqrt(),
        }
    }

    pub fn field(&self, alpha: f64) -> MetricField {
        MetricField {
            tensors: (0..self.len()).map(|k| self.tensor(k, alpha)).collect(),
            basis: Basis::Element,
        }
    }
}

pub fn m_hb(h: &HessianField, alpha: f64) -> Result<MetricField> {
    check_alpha(alpha)?;
    Ok(MetricRecipe::hierarchical(h).field(alpha))
}

pub fn m_vp(mesh: &Mesh, residuals: &ResidualData, h: &HessianField, alpha: f64) -> Result<MetricField> {
    check_alpha(alpha)?;
    Ok(MetricRecipe::variational(mesh, residuals, h).field(alpha))
}

pub fn m_dmp(diffusion: &[Mat2], b: &[f64], alpha: f64) -> Result<MetricField> {
    check_alpha(alpha)?;
    if diffusion.len() != b.len() {
        return Err(Error::SizeMismatch(format!("{} tensors, {} B values", diffusion.len(), b.len())));
    }
    if let Some(k) = b.iter().position(|&x| !(x >= 0.0)) {
        return Err(Error::InvalidParameter(format!("B[{k}] = {} is negative", b[k])));
    }
    for (k, d) in diffusion.iter().enumerate() {
        if !is_spd(d) {
            return Err(Error::DiffusionNotSpd { element: k });
        }
    }
    Ok(MetricRecipe::Dmp {
        diffusion: diffusion.to_vec(),
        b: b.to_vec(),
    }
    .field(alpha))
}

/// `B_K = det(D_K)^{-1/2} ‖D_K^{-1}‖ ‖D_K |H_K|‖²` with spectral norms.
pub fn b_term(diffusion: &[Mat2], h: &HessianField) -> Result<Vec<f64>> {
    if diffusion.len() != h.values.len() {
        return Err(Error::SizeMismatch(format!(
            "{} diffusion tensors, {} Hessians",
            diffusion.len(),
            h.values.len()
        )));
    }
    diffusion
        .iter()
        .zip(&h.values)
        .enumerate()
        .map(|(k, (d, hk))| {
            let det = d.determinant();
            let inv = d
                .try_inverse()
                .filter(|_| det > 0.0)
                .ok_or_else(|| Error::Singular(format!("diffusion tensor of element {k}")))?;
            let dh = spectral_norm(&(d * sym_abs(hk)));
            Ok(det.powf(-0.5) * spectral_norm(&inv) * dh * dh)
        })
        .collect()
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("alpha must be positive, got {alpha}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaChoice {
    pub alpha: f64,
    /// The adaptive ingredient vanished; the metric is uniform.
    pub uniform: bool,
    /// The root was not bracketed and a bracket endpoint was returned.
    pub clamped: bool,
}

pub const ALPHA_BRACKET: (f64, f64) = (1e-12, 1e12);

/// `Σ_K |K| det(M_K(α))^{1/2}`.
pub fn metric_volume(areas: &[f64], recipe: &MetricRecipe, alpha: f64) -> f64 {
    areas.iter().enumerate().map(|(k, a)| a * recipe.density(k, alpha)).sum()
}

/// Bisection (in log α) for `Σ_K |K| ρ_K(α) = 2|Ω|`, so that the adaptive
/// part of the metric carries as much volume as the uniform part.
pub fn choose_alpha(mesh: &Mesh, recipe: &MetricRecipe) -> AlphaChoice {
    if recipe.is_trivial() {
        return AlphaChoice {
            alpha: 1.0,
            uniform: true,
            clamped: false,
        };
    }
    let areas: Vec<f64> = (0..mesh.num_triangles()).map(|k| mesh.area(k)).collect();
    let target = 2.0 * areas.iter().sum::<f64>();
    let g = |alpha: f64| metric_volume(&areas, recipe, alpha) - target;
    let (mut lo, mut hi) = (ALPHA_BRACKET.0.ln(), ALPHA_BRACKET.1.ln());
    if g(lo.exp()) < 0.0 {
        warn!("choose_alpha: adaptive ingredient too weak, clamping alpha to {:e}", ALPHA_BRACKET.0);
        return AlphaChoice { alpha: ALPHA_BRACKET.0, uniform: false, clamped: true };
    }
    if g(hi.exp()) > 0.0 {
        warn!("choose_alpha: adaptive ingredient too strong, clamping alpha to {:e}", ALPHA_BRACKET.1);
        return AlphaChoice { alpha: ALPHA_BRACKET.1, uniform: false, clamped: true };
    }
    // Volume is decreasing in α: g(lo) ≥ 0 ≥ g(hi).
    while hi - lo > 1e-10 {
        let mid = 0.5 * (lo + hi);
        if g(mid.exp()) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    AlphaChoice {
        alpha: (0.5 * (lo + hi)).exp(),
        uniform: false,
        clamped: false,
    }
}

/// Area-weighted mean of the element tensors around each vertex.
pub fn vertexize(mesh: &Mesh, metric: &MetricField) -> Result<MetricField> {
    if metric.basis != Basis::Element {
        return Err(Error::MetricBasis { expected: "element" });
    }
    if metric.tensors.len() != mesh.num_triangles() {
        return Err(Error::SizeMismatch(format!(
            "{} tensors for {} elements",
            metric.tensors.len(),
            mesh.num_triangles()
        )));
    }
    let mut sum = vec![Mat2::zeros(); mesh.num_vertices()];
    let mut weight = vec![0.0; mesh.num_vertices()];
    for (k, t) in mesh.triangles().iter().enumerate() {
        let a = mesh.area(k);
        let tk = metric.tensors[k];
        for &v in t {
            sum[v] += tk * a;
            weight[v] += a;
        }
    }
    Ok(MetricField {
        tensors: sum.iter().zip(&weight).map(|(m, w)| m / *w).collect(),
        basis: Basis::Vertex,
    })
}

/// Element tensors as the mean of the vertex tensors.
pub fn elementize(mesh: &Mesh, metric: &MetricField) -> Result<MetricField> {
    if metric.basis != Basis::Vertex {
        return Err(Error::MetricBasis { expected: "vertex" });
    }
    Ok(MetricField {
        tensors: mesh
            .triangles()
            .iter()
            .map(|t| (metric.tensors[t[0]] + metric.tensors[t[1]] + metric.tensors[t[2]]) / 3.0)
            .collect(),
        basis: Basis::Element,
    })
}
