//! Quadratic least-squares Hessian recovery from nodal values.

use nalgebra::{DMatrix, DVector, Matrix6, SymmetricEigen};

use crate::error::{Error, Result};
use crate::fem::SolutionField;
use crate::linalg::Mat2;
use crate::mesh::Mesh;

/// One constant symmetric 2×2 per element.
#[derive(Debug, Clone, PartialEq)]
pub struct HessianField {
    pub values: Vec<Mat2>,
}

const MAX_CONDITION: f64 = 1e8;

/// Fits a full quadratic to the nodal values around `vertex`, growing the
/// patch ring by ring until it holds at least six points and the normal
/// equations are well conditioned.
pub fn qls_vertex_hessian(mesh: &Mesh, u_h: &SolutionField, vertex: usize) -> Result<Mat2> {
    let adj = mesh.adjacency();
    let center = mesh.vertices()[vertex];
    let mut patch = vec![vertex];
    let mut in_patch = std::collections::HashSet::from([vertex]);
    let mut frontier = vec![vertex];
    loop {
        let mut next = Vec::new();
        for &v in &frontier {
            for &w in &adj.vertex_neighbors[v] {
                if in_patch.insert(w) {
                    next.push(w);
                }
            }
        }
        if next.is_empty() {
            return Err(Error::PatchTooSmall {
                vertex,
                points: patch.len(),
            });
        }
        patch.extend_from_slice(&next);
        frontier = next;
        if patch.len() < 6 {
            continue;
        }
        let radius = patch
            .iter()
            .map(|&w| (mesh.vertices()[w] - center).norm())
            .fold(0.0, f64::max);
        let rows: Vec<[f64; 6]> = patch
            .iter()
            .map(|&w| {
                let d = (mesh.vertices()[w] - center) / radius;
                [1.0, d.x, d.y, d.x * d.x, d.x * d.y, d.y * d.y]
            })
            .collect();
        let mut normal = Matrix6::<f64>::zeros();
        for r in &rows {
            for i in 0..6 {
                for j in 0..6 {
                    normal[(i, j)] += r[i] * r[j];
                }
            }
        }
        let eig = SymmetricEigen::new(normal).eigenvalues;
        let (lo, hi) = eig.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &l| (lo.min(l), hi.max(l)));
        if !(lo > 0.0 && hi / lo <= MAX_CONDITION) {
            continue;
        }
        let v = DMatrix::from_fn(rows.len(), 6, |i, j| rows[i][j]);
        let b = DVector::from_iterator(rows.len(), patch.iter().map(|&w| u_h.values[w]));
        let c = v
            .svd(true, true)
            .solve(&b, 1e-14)
            .map_err(|e| Error::Singular(format!("least-squares fit at vertex {vertex}: {e}")))?;
        let s = 1.0 / (radius * radius);
        return Ok(Mat2::new(2.0 * c[3] * s, c[4] * s, c[4] * s, 2.0 * c[5] * s));
    }
}

/// Element Hessians as the mean of the three vertex recoveries.
pub fn element_hessian_field(mesh: &Mesh, u_h: &SolutionField) -> Result<HessianField> {
    let vertex: Vec<Mat2> = (0..mesh.num_vertices())
        .map(|v| qls_vertex_hessian(mesh, u_h, v))
        .collect::<Result<_>>()?;
    Ok(HessianField {
        values: mesh
            .triangles()
            .iter()
            .map(|t| (vertex[t[0]] + vertex[t[1]] + vertex[t[2]]) / 3.0)
            .collect(),
    })
}
