//! The solve → estimate → metric → remesh iteration and the measures it
//! relies on.

use log::{info, warn};

use crate::error::{Error, Result};
use crate::fem::{error_norms, solve_primal, ProblemKind, ProblemSpec, SolutionField};
use crate::hb::{bubble_hessians, estimate, estimate_norm, BubbleField, DEFAULT_MAX_SWEEPS, DEFAULT_SWEEP_TOL};
use crate::linalg::{is_spd, Mat2};
use crate::locate::Locator;
use crate::mesh::Mesh;
use crate::metric::{
    b_term, choose_alpha, elementize, residual_and_jumps, vertexize, Basis, MetricField, MetricRecipe,
};
use crate::recovery::{element_hessian_field, HessianField};
pub use crate::remesh::UNIT_TRIANGLE_AREA;
use crate::remesh::{remesh_with, shape_quality, BackgroundMetric, RemeshParams, RemeshStats};


#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElementQuality {
    /// Alignment: `trace(S)/(2 det(S)^{1/2})`.
    pub alignment: f64,
    /// Equidistribution: `max(σ/σ̄, σ̄/σ)` with `σ = |K| det(M)^{1/2}`.
    pub equidistribution: f64,
}

impl ElementQuality {
    pub fn worst(&self) -> f64 {
        self.alignment.max(self.equidistribution)
    }
}

pub fn element_qualities(mesh: &Mesh, metric: &MetricField) -> Result<Vec<ElementQuality>> {
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
    if let Some(k) = metric.tensors.iter().position(|m| !is_spd(m)) {
        return Err(Error::NotSpd(format!("metric tensor of element {k}")));
    }
    let sigma: Vec<f64> = (0..mesh.num_triangles())
        .map(|k| mesh.area(k) * metric.tensors[k].determinant().sqrt())
        .collect();
    let mean = sigma.iter().sum::<f64>() / sigma.len().max(1) as f64;
    Ok((0..mesh.num_triangles())
        .map(|k| {
            let alignment = shape_quality(&mesh.corners(k), &metric.tensors[k]);
            if !alignment.is_finite() {
                warn!("q_mesh: element {k} is degenerate");
            }
            let s = sigma[k];
            let equidistribution = if s > 0.0 { (s / mean).max(mean / s) } else { f64::INFINITY };
            ElementQuality { alignment, equidistribution }
        })
        .collect())
}

/// Summary of how far a mesh is from being uniform in a metric.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeshQuality {
    /// Root mean square of the per-element worst quality.
    pub rms: f64,
    /// Largest per-element quality.
    pub max: f64,
}

pub fn mesh_quality(mesh: &Mesh, metric: &MetricField) -> Result<MeshQuality> {
    let q = element_qualities(mesh, metric)?;
    let n = q.len().max(1) as f64;
    let rms = (q.iter().map(|e| e.worst() * e.worst()).sum::<f64>() / n).sqrt();
    let max = q.iter().map(ElementQuality::worst).fold(1.0, f64::max);
    Ok(MeshQuality { rms, max })
}

/// Conformity of `mesh` to an element metric; at least one, and one exactly
/// when every element is equilateral and of equal size in the metric.
pub fn q_mesh(mesh: &Mesh, metric: &MetricField) -> Result<f64> {
    Ok(mesh_quality(mesh, metric)?.rms)
}

/// Scales `metric` so that its volume `Σ_K |K| det(M_K)^{1/2}` equals the
/// area of `n` unit equilateral triangles.
pub fn normalize_metric(mesh: &Mesh, metric: &MetricField, n: f64) -> Result<MetricField> {
    if !(n >= 1.0) {
        return Err(Error::InvalidParameter(format!("target element count {n} < 1")));
    }
    let volume = match metric.basis {
        Basis::Element => (0..mesh.num_triangles())
            .map(|k| mesh.area(k) * metric.tensors[k].determinant().max(0.0).sqrt())
            .sum::<f64>(),
        Basis::Vertex => {
            let e = elementize(mesh, metric)?;
            (0..mesh.num_triangles())
                .map(|k| mesh.area(k) * e.tensors[k].determinant().max(0.0).sqrt())
                .sum::<f64>()
        }
    };
    if !(volume > 0.0) || !volume.is_finite() {
        return Err(Error::ZeroMetricVolume);
    }
    Ok(metric.scaled(n * UNIT_TRIANGLE_AREA / volume))
}

/// Remeshes towards the vertex metric `metric` given on `mesh`.
pub fn remesh(mesh: &Mesh, metric: &MetricField, params: &RemeshParams) -> Result<(Mesh, RemeshStats)> {
    if metric.basis != Basis::Vertex {
        return Err(Error::MetricBasis { expected: "vertex" });
    }
    if metric.tensors.len() != mesh.num_vertices() {
        return Err(Error::SizeMismatch(format!(
            "{} tensors for {} vertices",
            metric.tensors.len(),
            mesh.num_vertices()
        )));
    }
    if !metric.all_spd() {
        return Err(Error::NotSpd("vertex metric".into()));
    }
    let background = BackgroundMetric::new(mesh, &metric.tensors);
    let (out, stats) = remesh_with(mesh, &background, *params);
    let report = crate::mesh::validate(&out);
    if !report.is_valid() {
        return Err(Error::InvalidMesh(report.summary()));
    }
    Ok((out, stats))
}

/// Transfers nodal values by linear interpolation; vertices outside the old
/// mesh take the value at the nearest point of the old mesh.
pub fn interpolate_solution(old: &Mesh, u: &SolutionField, new: &Mesh) -> Result<SolutionField> {
    if u.values.len() != old.num_vertices() {
        return Err(Error::SizeMismatch(format!(
            "solution has {} values for {} vertices",
            u.values.len(),
            old.num_vertices()
        )));
    }
    let locator = Locator::new(old);
    let values = new
        .vertices()
        .iter()
        .map(|&p| {
            let loc = locator.locate(p).ok_or(Error::PointLocation { x: p.x, y: p.y })?;
            let t = old.triangles()[loc.element];
            Ok((0..3).map(|i| loc.bary[i] * u.values[t[i]]).sum())
        })
        .collect::<Result<_>>()?;
    Ok(SolutionField::new(values))
}

/// Replaces each vertex tensor by the mean of itself and its neighbours,
/// `passes` times.
pub fn smooth_vertex_metric(mesh: &Mesh, metric: &MetricField, passes: usize) -> MetricField {
    let adj = mesh.adjacency();
    let mut t: Vec<Mat2> = metric.tensors.clone();
    for _ in 0..passes {
        t = (0..t.len())
            .map(|v| {
                let n = &adj.vertex_neighbors[v];
                (n.iter().fold(t[v], |s, &w| s + t[w])) / (n.len() + 1) as f64
            })
            .collect();
    }
    MetricField { tensors: t, basis: metric.basis }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MetricKind {
    Uniform,
    /// Hessian of the hierarchical basis estimate.
    Hb,
    /// Hessian recovered from `u_h` by quadratic least squares.
    Hessian,
    /// Variational-problem metric with the estimate's Hessian.
    Vp,
    /// DMP-compliant metric with the recovered Hessian.
    DmpH,
    /// DMP-compliant metric with the estimate's Hessian.
    DmpHb,
}

impl MetricKind {
    pub const ALL: [MetricKind; 6] = [
        MetricKind::Uniform,
        MetricKind::Hb,
        MetricKind::Hessian,
        MetricKind::Vp,
        MetricKind::DmpH,
        MetricKind::DmpHb,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MetricKind::Uniform => "uniform",
            MetricKind::Hb => "hb",
            MetricKind::Hessian => "hessian",
            MetricKind::Vp => "vp",
            MetricKind::DmpH => "dmp-h",
            MetricKind::DmpHb => "dmp-hb",
        }
    }
}

impl std::fmt::Display for MetricKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for MetricKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MetricKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown metric kind `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptParams {
    pub eps: f64,
    pub max_iterations: usize,
    pub target_elements: usize,
    pub sweep_tol: f64,
    pub max_sweeps: usize,
    /// Neighbour-averaging passes applied to the vertex metric before remeshing.
    pub metric_smoothing: usize,
    pub remesh: RemeshParams,
}

impl AdaptParams {
    pub fn new(target_elements: usize) -> Self {
        AdaptParams {
            eps: 0.1,
            max_iterations: 25,
            target_elements,
            sweep_tol: DEFAULT_SWEEP_TOL,
            max_sweeps: DEFAULT_MAX_SWEEPS,
            metric_smoothing: 2,
            remesh: RemeshParams::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let r = &self.remesh;
        if !(self.eps > 0.0) {
            return Err(Error::InvalidParameter(format!("eps = {} must be positive", self.eps)));
        }
        if self.target_elements < 10 {
            return Err(Error::InvalidParameter(format!(
                "target element count {} is below 10",
                self.target_elements
            )));
        }
        if !(r.collapse_length < 1.0 && 1.0 < r.split_length) {
            return Err(Error::InvalidParameter(format!(
                "thresholds must satisfy collapse < 1 < split, got {} and {}",
                r.collapse_length, r.split_length
            )));
        }
        if !(self.sweep_tol > 0.0) || self.max_sweeps == 0 {
            return Err(Error::InvalidParameter("Gauss-Seidel stopping rule".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub elements: usize,
    pub vertices: usize,
    /// Quality of this mesh in the metric computed on it.
    pub q_mesh: f64,
    pub q_max: f64,
    pub l2_error: Option<f64>,
    pub h1_error: Option<f64>,
    pub estimate: f64,
    pub min_u: f64,
    pub max_u: f64,
    pub max_aspect_ratio: f64,
    pub sweeps: usize,
    pub sweeps_converged: bool,
    pub newton_iterations: Option<usize>,
    pub alpha: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AdaptTrace {
    pub records: Vec<IterationRecord>,
    /// The stopping tolerance was met before the iteration cap.
    pub converged: bool,
}

impl AdaptTrace {
    pub fn last(&self) -> Option<&IterationRecord> {
        self.records.last()
    }
}

#[derive(Debug, Clone)]
pub struct AdaptOutcome {
    pub trace: AdaptTrace,
    pub mesh: Mesh,
    pub solution: SolutionField,
    pub estimate: BubbleField,
}

/// A failed run together with the iterations completed before the failure.
#[derive(Debug, thiserror::Error)]
#[error("adaptation failed after {} iterations: {error}", trace.records.len())]
pub struct AdaptFailure {
    pub trace: AdaptTrace,
    #[source]
    pub error: Error,
}

fn check_pairing(problem: &ProblemSpec, kind: MetricKind) -> Result<()> {
    match kind {
        MetricKind::Vp if !problem.is_variational() => Err(Error::ProblemKind(
            "the vp metric needs a variational problem".into(),
        )),
        MetricKind::DmpH | MetricKind::DmpHb if !problem.has_diffusion_tensor() => Err(Error::ProblemKind(
            "DMP metrics need a problem with a diffusion tensor".into(),
        )),
        _ => Ok(()),
    }
}

/// Element metric for `kind`, scaled to `target` elements.
pub fn compute_metric(
    problem: &ProblemSpec,
    kind: MetricKind,
    mesh: &Mesh,
    u_h: &SolutionField,
    z_h: &BubbleField,
    target: usize,
) -> Result<(MetricField, f64)> {
    check_pairing(problem, kind)?;
    let bubble = || HessianField { values: bubble_hessians(mesh, z_h) };
    let recipe = match kind {
        MetricKind::Uniform => MetricRecipe::Isotropic { elements: mesh.num_triangles() },
        MetricKind::Hb => MetricRecipe::hierarchical(&bubble()),
        MetricKind::Hessian => {
            let h = element_hessian_field(mesh, u_h)?;
            if problem.is_variational() {
                MetricRecipe::variational(mesh, &residual_and_jumps(problem, mesh, u_h)?, &h)
            } else {
                MetricRecipe::hierarchical(&h)
            }
        }
        MetricKind::Vp => MetricRecipe::variational(mesh, &residual_and_jumps(problem, mesh, u_h)?, &bubble()),
        MetricKind::DmpH | MetricKind::DmpHb => {
            let lin = problem.linear()?;
            let diffusion: Vec<Mat2> = (0..mesh.num_triangles())
                .map(|k| lin.diffusion_at(mesh.geometry(k).centroid))
                .collect();
            let h = if kind == MetricKind::DmpH { element_hessian_field(mesh, u_h)? } else { bubble() };
            let b = b_term(&diffusion, &h)?;
            MetricRecipe::Dmp { diffusion, b }
        }
    };
    let alpha = choose_alpha(mesh, &recipe);
    let field = normalize_metric(mesh, &recipe.field(alpha.alpha), target as f64)?;
    Ok((field, alpha.alpha))
}

/// Vertex metric handed to the remesher: [`compute_metric`], averaged to
/// the vertices, smoothed and scaled to `elements`.
pub fn remesh_metric(
    problem: &ProblemSpec,
    kind: MetricKind,
    mesh: &Mesh,
    u_h: &SolutionField,
    z_h: &BubbleField,
    params: &AdaptParams,
    elements: f64,
) -> Result<(MetricField, f64)> {
    let (metric, alpha) = compute_metric(problem, kind, mesh, u_h, z_h, params.target_elements)?;
    let vertex_metric = smooth_vertex_metric(mesh, &vertexize(mesh, &metric)?, params.metric_smoothing);
    Ok((normalize_metric(mesh, &vertex_metric, elements)?, alpha))
}

/// Runs the adaptation loop from `initial`.
///
/// Iteration `i` solves on `T⁽ⁱ⁾`, builds the metric `M⁽ⁱ⁾` on it and stops
/// once `T⁽ⁱ⁾` is within `1 + eps` of `M⁽ⁱ⁾`-uniform (for `i ≥ 1`);
/// otherwise `T⁽ⁱ⁺¹⁾` is generated from `M⁽ⁱ⁾`. The normalisation target is
/// corrected by the ratio of requested to realized element counts after
/// every remesh.
pub fn adapt_drive(
    problem: &ProblemSpec,
    kind: MetricKind,
    initial: &Mesh,
    params: &AdaptParams,
) -> std::result::Result<AdaptOutcome, AdaptFailure> {
    let mut trace = AdaptTrace::default();
    macro_rules! tryf {
        ($e:expr) => {
            match $e {
                Ok(v) => v,
                Err(error) => return Err(AdaptFailure { trace, error: error.into() }),
            }
        };
    }
    tryf!(params.validate());
    tryf!(check_pairing(problem, kind));
    let mut mesh = initial.clone();
    let mut guess: Option<SolutionField> = None;
    let mut count_scale = 1.0;
    for iteration in 0..=params.max_iterations {
        let (u_h, newton) = tryf!(solve_primal(problem, &mesh, guess.as_ref()));
        let (z_h, sgs) = tryf!(estimate(problem, &mesh, &u_h, params.sweep_tol, params.max_sweeps));
        let (vertex_metric, alpha) = tryf!(remesh_metric(
            problem,
            kind,
            &mesh,
            &u_h,
            &z_h,
            params,
            count_scale * params.target_elements as f64
        ));
        let quality = tryf!(mesh_quality(&mesh, &tryf!(elementize(&mesh, &vertex_metric))));
        let (l2_error, h1_error) = match &problem.exact {
            Some(exact) => {
                let (l2, h1) = tryf!(error_norms(&mesh, &u_h, exact));
                (Some(l2), Some(h1))
            }
            None => (None, None),
        };
        let record = IterationRecord {
            iteration,
            elements: mesh.num_triangles(),
            vertices: mesh.num_vertices(),
            q_mesh: quality.rms,
            q_max: quality.max,
            l2_error,
            h1_error,
            estimate: estimate_norm(problem, &mesh, &z_h),
            min_u: u_h.min(),
            max_u: u_h.max(),
            max_aspect_ratio: mesh.max_aspect_ratio(),
            sweeps: sgs.sweeps,
            sweeps_converged: sgs.converged,
            newton_iterations: newton.map(|r| r.iterations),
            alpha,
        };
        info!(
            "{} [{kind}] iteration {iteration}: {} elements, Q_mesh {:.4} (max {:.3}), {} sweeps",
            problem.name, record.elements, record.q_mesh, record.q_max, record.sweeps
        );
        trace.records.push(record);
        let done = iteration >= 1 && quality.rms <= 1.0 + params.eps;
        if done || iteration == params.max_iterations {
            trace.converged = done;
            return Ok(AdaptOutcome { trace, mesh, solution: u_h, estimate: z_h });
        }
        let (next, stats) = tryf!(remesh(&mesh, &vertex_metric, &params.remesh));
        log::debug!("remesh: {stats:?}");
        count_scale = (count_scale * params.target_elements as f64 / next.num_triangles() as f64).clamp(0.25, 4.0);
        if matches!(problem.kind, ProblemKind::Variational(_)) {
            guess = Some(tryf!(interpolate_solution(&mesh, &u_h, &next)));
        }
        mesh = next;
    }
    unreachable!("the loop returns on its last iteration")
}

impl From<AdaptFailure> for Error {
    fn from(f: AdaptFailure) -> Self {
        f.error
    }
}
