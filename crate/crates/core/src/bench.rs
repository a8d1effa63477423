//! Convergence studies and mesh/solution diagnostics.

use crate::adapt::{adapt_drive, AdaptOutcome, AdaptParams, MetricKind};
use crate::error::{Error, Result};
use crate::fem::{error_norms, ProblemSpec, SolutionField};
use crate::hb::{h1_seminorm, BubbleField};
use crate::mesh::{Mesh, Point};

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub target: usize,
    pub realized_n: usize,
    pub l2_error: f64,
    pub h1_error: f64,
    pub q_mesh: f64,
    pub min_u: f64,
    pub max_aspect_ratio: f64,
    pub sweeps: usize,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
    pub l2_slope: f64,
    pub h1_slope: f64,
}

/// Least-squares slope of `y` against `x`.
pub fn fit_slope(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::DegenerateFit(format!("{} points", x.len())));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    if !(sxx > 0.0) || !sxy.is_finite() {
        return Err(Error::DegenerateFit("abscissae do not vary".into()));
    }
    Ok(sxy / sxx)
}

/// Slope of `log y` against `log x`.
pub fn fit_log_slope(x: &[f64], y: &[f64]) -> Result<f64> {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    fit_slope(&lx, &ly)
}

/// Adapts once per ladder rung and fits error slopes against the realized
/// element counts.
pub fn convergence_study(
    problem: &ProblemSpec,
    kind: MetricKind,
    initial_mesh: impl Fn(usize) -> Mesh,
    ladder: &[usize],
    params: &AdaptParams,
) -> Result<(ConvergenceTable, Vec<AdaptOutcome>)> {
    if ladder.len() < 3 {
        return Err(Error::InvalidParameter(format!(
            "a convergence study needs at least 3 ladder points, got {}",
            ladder.len()
        )));
    }
    let exact = problem
        .exact
        .as_ref()
        .ok_or_else(|| Error::ProblemKind("convergence study needs an exact solution".into()))?;
    let mut rows = Vec::new();
    let mut outcomes = Vec::new();
    for &n in ladder {
        let p = AdaptParams { target_elements: n, ..*params };
        let out = adapt_drive(problem, kind, &initial_mesh(n), &p)?;
        let (l2, h1) = error_norms(&out.mesh, &out.solution, exact)?;
        let last = out.trace.last().expect("trace is never empty");
        rows.push(ConvergenceRow {
            target: n,
            realized_n: out.mesh.num_triangles(),
            l2_error: l2,
            h1_error: h1,
            q_mesh: last.q_mesh,
            min_u: last.min_u,
            max_aspect_ratio: last.max_aspect_ratio,
            sweeps: last.sweeps,
            iterations: out.trace.records.len() - 1,
            converged: out.trace.converged,
        });
        outcomes.push(out);
    }
    let n: Vec<f64> = rows.iter().map(|r| r.realized_n as f64).collect();
    let l2: Vec<f64> = rows.iter().map(|r| r.l2_error).collect();
    let h1: Vec<f64> = rows.iter().map(|r| r.h1_error).collect();
    Ok((
        ConvergenceTable {
            l2_slope: fit_log_slope(&n, &l2)?,
            h1_slope: fit_log_slope(&n, &h1)?,
            rows,
        },
        outcomes,
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DmpReport {
    pub min: f64,
    pub max: f64,
    /// `max(low − min, 0)`.
    pub undershoot: f64,
    /// `max(max − high, 0)`.
    pub overshoot: f64,
    pub below: Vec<usize>,
    pub above: Vec<usize>,
}

impl DmpReport {
    pub fn satisfied(&self) -> bool {
        self.below.is_empty() && self.above.is_empty()
    }
}

pub fn dmp_check(u: &SolutionField, bounds: (f64, f64)) -> DmpReport {
    let (lo, hi) = bounds;
    let (min, max) = (u.min(), u.max());
    DmpReport {
        min,
        max,
        undershoot: (lo - min).max(0.0),
        overshoot: (max - hi).max(0.0),
        below: (0..u.values.len()).filter(|&i| u.values[i] < lo).collect(),
        above: (0..u.values.len()).filter(|&i| u.values[i] > hi).collect(),
    }
}

/// Fitted exponent `s` in `h_K ∝ r_K^s`, with `h_K` the longest edge and
/// `r_K` the centroid distance to `corner`, over elements with
/// `r_K ∈ [1e-6, 0.5]`.
pub fn grading_diagnostic(mesh: &Mesh, corner: Point) -> Result<f64> {
    let mut lr = Vec::new();
    let mut lh = Vec::new();
    for k in 0..mesh.num_triangles() {
        let p = mesh.corners(k);
        let r = (mesh.geometry(k).centroid - corner).norm();
        if !(1e-6..=0.5).contains(&r) {
            continue;
        }
        let h = (0..3).map(|i| (p[(i + 1) % 3] - p[i]).norm()).fold(0.0, f64::max);
        lr.push(r.ln());
        lh.push(h.ln());
    }
    if lr.len() < 50 {
        return Err(Error::DegenerateFit(format!("only {} elements in the fitting range", lr.len())));
    }
    fit_slope(&lr, &lh)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Effectivity {
    /// `‖∇z_h‖ / ‖∇(u − u_h)‖`; `None` when the true error vanishes.
    pub index: Option<f64>,
    pub estimate: f64,
    pub error: f64,
}

impl Effectivity {
    pub fn exact(&self) -> bool {
        self.index.is_none()
    }
}

pub fn effectivity(problem: &ProblemSpec, mesh: &Mesh, u_h: &SolutionField, z_h: &BubbleField) -> Result<Effectivity> {
    let exact = problem
        .exact
        .as_ref()
        .ok_or_else(|| Error::ProblemKind("effectivity needs an exact solution".into()))?;
    let (_, error) = error_norms(mesh, u_h, exact)?;
    let estimate = h1_seminorm(mesh, z_h);
    let index = if error <= 1e-12 * (1.0 + estimate) { None } else { Some(estimate / error) };
    Ok(Effectivity { index, estimate, error })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::unit_square;

    #[test]
    fn slope_of_power_law() {
        let x = [1e3, 4e3, 1.6e4];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(-0.75)).collect();
        assert!((fit_log_slope(&x, &y).unwrap() + 0.75).abs() < 1e-12);
        assert!(fit_slope(&[1.0], &[2.0]).is_err());
    }

    #[test]
    fn dmp_constant_field() {
        let r = dmp_check(&SolutionField::new(vec![1.0; 5]), (0.0, 2.0));
        assert!(r.satisfied() && r.undershoot == 0.0 && r.overshoot == 0.0);
        let r = dmp_check(&SolutionField::new(vec![-0.5, 1.0, 2.5]), (0.0, 2.0));
        assert_eq!((r.below.as_slice(), r.above.as_slice()), (&[0][..], &[2][..]));
        assert_eq!((r.undershoot, r.overshoot), (0.5, 0.5));
    }

    #[test]
    fn uniform_mesh_is_not_graded() {
        let s = grading_diagnostic(&unit_square(20), Point::zeros()).unwrap();
        assert!(s.abs() <= 0.1, "slope {s}");
    }
}
