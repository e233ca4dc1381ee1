//! Distance-to-intersection oracles.
//!
//! These are verification aids, not part of the methods under test. For
//! affine families the projection onto the intersection is the least-norm
//! solution of the stacked equality system, computed by conjugate gradients
//! on the normal equations. For general families of metric projections we
//! use Dykstra's alternating scheme, which (unlike plain alternating
//! projections) converges to the metric projection itself.

use crate::error::{Error, Result};
use crate::operators::{Cutter, Hyperplane};
use crate::problem::FeasibilityProblem;
use crate::vector::Vector;

/// Relative residual target for the conjugate-gradient solve.
const CG_TOL: f64 = 1e-14;

/// Convergence tolerance for Dykstra sweeps.
const DYKSTRA_TOL: f64 = 1e-13;

/// Projects `x` onto the intersection of the hyperplanes `<a_i, z> = b_i`
/// by solving `A A^T y = A x - b` and returning `x - A^T y`. The system must
/// be consistent; dependent rows are fine because any solution `y` yields
/// the same `A^T y`.
pub fn project_affine(hyperplanes: &[&Hyperplane], x: &Vector) -> Result<Vector> {
    assert!(!hyperplanes.is_empty());
    let m = hyperplanes.len();
    let dim = x.dim();

    let matvec = |v: &[f64]| -> Vec<f64> {
        let mut w = Vector::zeros(dim);
        for (h, &vi) in hyperplanes.iter().zip(v) {
            if vi != 0.0 {
                w = w.add_scaled(vi, h.normal());
            }
        }
        hyperplanes.iter().map(|h| h.normal().dot(&w)).collect()
    };

    let rhs: Vec<f64> = hyperplanes
        .iter()
        .map(|h| h.normal().dot(x) - h.offset())
        .collect();
    let rhs_norm = rhs.iter().map(|r| r * r).sum::<f64>().sqrt();
    if rhs_norm == 0.0 {
        return Ok(x.clone());
    }

    let mut y = vec![0.0; m];
    let mut r = rhs.clone();
    let mut p = r.clone();
    let mut r_sq: f64 = r.iter().map(|v| v * v).sum();
    let max_iter = 10 * m + 100;
    let mut converged = false;
    for _ in 0..max_iter {
        if r_sq.sqrt() <= CG_TOL * rhs_norm {
            converged = true;
            break;
        }
        let gp = matvec(&p);
        let p_gp: f64 = p.iter().zip(&gp).map(|(a, b)| a * b).sum();
        if p_gp <= 0.0 {
            // Search direction fell into the null space; the remaining
            // residual is numerically unreachable.
            break;
        }
        let alpha = r_sq / p_gp;
        for i in 0..m {
            y[i] += alpha * p[i];
            r[i] -= alpha * gp[i];
        }
        let r_sq_new: f64 = r.iter().map(|v| v * v).sum();
        let beta = r_sq_new / r_sq;
        for i in 0..m {
            p[i] = r[i] + beta * p[i];
        }
        r_sq = r_sq_new;
    }
    if !converged && r_sq.sqrt() > 1e-8 * rhs_norm {
        return Err(Error::OracleDidNotConverge(max_iter));
    }

    let mut z = x.clone();
    for (h, &yi) in hyperplanes.iter().zip(&y) {
        if yi != 0.0 {
            z = z.add_scaled(-yi, h.normal());
        }
    }
    Ok(z)
}

fn is_metric_projection(c: &Cutter) -> bool {
    matches!(
        c,
        Cutter::Hyperplane(_) | Cutter::Halfspace(_) | Cutter::Ball(_)
    )
}

/// Dykstra's algorithm for the intersection of metric-projection cutters.
pub fn project_dykstra(cutters: &[Cutter], x: &Vector, max_sweeps: usize) -> Result<Vector> {
    for (i, c) in cutters.iter().enumerate() {
        if !is_metric_projection(c) {
            return Err(Error::NoDistanceOracle(i));
        }
    }
    let scale = 1.0 + x.norm();
    let mut current = x.clone();
    let mut corrections: Vec<Vector> = vec![Vector::zeros(x.dim()); cutters.len()];
    for _ in 0..max_sweeps {
        let sweep_start = current.clone();
        for (c, p) in cutters.iter().zip(corrections.iter_mut()) {
            let shifted = &current + p;
            let projected = c.apply(&shifted);
            *p = &shifted - &projected;
            current = projected;
        }
        let moved = current.dist(&sweep_start);
        let residual = cutters
            .iter()
            .map(|c| c.residual(&current))
            .fold(0.0, f64::max);
        if moved <= DYKSTRA_TOL * scale && residual <= DYKSTRA_TOL * scale {
            return Ok(current);
        }
    }
    Err(Error::OracleDidNotConverge(max_sweeps))
}

/// Metric projection of `x` onto the intersection: least-norm solve for
/// affine families, Dykstra otherwise.
pub fn project_intersection(problem: &FeasibilityProblem, x: &Vector) -> Result<Vector> {
    if let Some(planes) = problem.hyperplanes() {
        project_affine(&planes, x)
    } else {
        project_dykstra(problem.cutters(), x, 100_000)
    }
}

/// `d(x, C)` via [`project_intersection`].
pub fn distance_to_intersection(problem: &FeasibilityProblem, x: &Vector) -> Result<f64> {
    Ok(project_intersection(problem, x)?.dist(x))
}
