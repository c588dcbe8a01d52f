use alloc::format;

use serde::Serialize;

use crate::error::{shape, Result};
use crate::linalg::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PairViolation {
    pub x: usize,
    pub y: usize,
    /// How far the axiom is missed.
    pub magnitude: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TripleViolation {
    pub x: usize,
    pub y: usize,
    pub z: usize,
    pub magnitude: f64,
}

/// Worst violation of each axiom, `None` when it holds within `tol`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AxiomReport {
    pub n: usize,
    pub tol: f64,
    pub negative: Option<PairViolation>,
    pub asymmetric: Option<PairViolation>,
    /// `d(x, y) > d(x, z) + d(z, y)`.
    pub triangle: Option<TripleViolation>,
    /// `d(x, x) ≠ 0`; allowed for diffuse metrics.
    pub nonzero_self_distance: Option<PairViolation>,
    /// Partial-metric `d(x, x) ≤ d(x, y)`.
    pub large_self_distance: Option<PairViolation>,
    /// Partial-metric `d(x, y) ≤ d(x, z) + d(z, y) - d(z, z)`.
    pub partial_triangle: Option<TripleViolation>,
}

impl AxiomReport {
    /// Non-negativity, symmetry and the triangle inequality.
    pub fn is_diffuse_metric(&self) -> bool {
        self.negative.is_none() && self.asymmetric.is_none() && self.triangle.is_none()
    }

    /// Diffuse-metric axioms plus zero self-distance.
    pub fn is_pseudometric(&self) -> bool {
        self.is_diffuse_metric() && self.nonzero_self_distance.is_none()
    }

    pub fn satisfies_partial_metric_inequalities(&self) -> bool {
        self.negative.is_none()
            && self.asymmetric.is_none()
            && self.large_self_distance.is_none()
            && self.partial_triangle.is_none()
    }
}

fn worse_pair(slot: &mut Option<PairViolation>, x: usize, y: usize, magnitude: f64, tol: f64) {
    if magnitude > tol && slot.is_none_or(|v| magnitude > v.magnitude) {
        *slot = Some(PairViolation { x, y, magnitude });
    }
}

fn worse_triple(slot: &mut Option<TripleViolation>, (x, y, z): (usize, usize, usize), magnitude: f64, tol: f64) {
    if magnitude > tol && slot.is_none_or(|v| magnitude > v.magnitude) {
        *slot = Some(TripleViolation { x, y, z, magnitude });
    }
}

/// Checks the diffuse-metric axioms and, separately, the stronger
/// partial-metric inequalities. `O(n³)`.
pub fn check_diffuse_axioms(d: &Matrix, tol: f64) -> Result<AxiomReport> {
    if !d.is_square() {
        return Err(shape(format!("{}x{} table is not square", d.rows(), d.cols())));
    }
    let n = d.rows();
    let mut report = AxiomReport {
        n,
        tol,
        negative: None,
        asymmetric: None,
        triangle: None,
        nonzero_self_distance: None,
        large_self_distance: None,
        partial_triangle: None,
    };
    for x in 0..n {
        worse_pair(&mut report.nonzero_self_distance, x, x, libm::fabs(d[(x, x)]), 0.0);
        for y in 0..n {
            let dxy = d[(x, y)];
            worse_pair(&mut report.negative, x, y, -dxy, tol);
            worse_pair(&mut report.asymmetric, x, y, libm::fabs(dxy - d[(y, x)]), tol);
            worse_pair(&mut report.large_self_distance, x, y, d[(x, x)] - dxy, tol);
            for z in 0..n {
                let via = d[(x, z)] + d[(z, y)];
                worse_triple(&mut report.triangle, (x, y, z), dxy - via, tol);
                worse_triple(&mut report.partial_triangle, (x, y, z), dxy - (via - d[(z, z)]), tol);
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn zero_table_passes_everything() {
        let r = check_diffuse_axioms(&Matrix::zeros(4, 4), 1e-12).unwrap();
        assert!(r.is_pseudometric());
        assert!(r.satisfies_partial_metric_inequalities());
    }

    #[test]
    fn lk_counterexample_breaks_partial_triangle() {
        // Points 0 and 1 at distance 1; μ = δ₀, ν = δ₁, η = ½(δ₀ + δ₁).
        let lk = Matrix::from_rows(&[vec![0.0, 1.0, 0.5], vec![1.0, 0.0, 0.5], vec![0.5, 0.5, 0.5]]).unwrap();
        let r = check_diffuse_axioms(&lk, 1e-12).unwrap();
        assert!(r.is_diffuse_metric());
        let v = r.partial_triangle.unwrap();
        assert_eq!((v.x.min(v.y), v.x.max(v.y), v.z), (0, 1, 2));
        assert!((v.magnitude - 0.5).abs() < 1e-15);
    }

    #[test]
    fn detects_asymmetry_and_triangle() {
        let m = Matrix::from_rows(&[vec![0.0, 5.0, 1.0], vec![4.0, 0.0, 1.0], vec![1.0, 1.0, 0.0]]).unwrap();
        let r = check_diffuse_axioms(&m, 1e-9).unwrap();
        assert_eq!(r.asymmetric.unwrap().magnitude, 1.0);
        assert_eq!(r.triangle.unwrap().magnitude, 3.0);
        assert!(!r.is_diffuse_metric());
    }
}
