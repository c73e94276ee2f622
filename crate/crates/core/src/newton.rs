//! Gauss-Newton projection onto the constraint variety.

use nalgebra::{DMatrix, DVector};

use crate::analysis::jacobian;
use crate::constraints::ConstraintSystem;
use crate::linalg::{pinv_solve, RANK_REL_TOL};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    pub max_iter: usize,
    /// Converged once the residual max-norm is at or below this.
    pub tol: f64,
    pub rank_tol: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            max_iter: 25,
            tol: 1e-11,
            rank_tol: RANK_REL_TOL,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonResult {
    pub rho: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

/// Least-norm Gauss-Newton from `start`, moving only the variables where
/// `free` is true (all of them when `free` is `None`). Steps that increase
/// the residual are halved up to ten times.
pub fn project(system: &ConstraintSystem, start: &[f64], free: Option<&[bool]>, opts: &NewtonOptions) -> NewtonResult {
    let n = system.num_vars;
    let cols: Vec<usize> = (0..n).filter(|&c| free.map_or(true, |f| f[c])).collect();
    let mut x = start.to_vec();
    let mut r = system.residual_vector(&x);
    let mut norm = system.max_norm(&x);
    let mut it = 0;
    while norm > opts.tol && it < opts.max_iter {
        it += 1;
        let j = jacobian(system, &x);
        let sub = DMatrix::from_fn(j.nrows(), cols.len(), |i, k| j[(i, cols[k])]);
        let dx = pinv_solve(&sub, &(-&r), opts.rank_tol);
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..10 {
            let mut y = x.clone();
            for (k, &c) in cols.iter().enumerate() {
                y[c] += scale * dx[k];
            }
            let ry = system.residual_vector(&y);
            if ry.norm() < r.norm() || system.max_norm(&y) <= opts.tol {
                x = y;
                r = ry;
                norm = system.max_norm(&x);
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    NewtonResult {
        converged: norm <= opts.tol,
        rho: x,
        iterations: it,
        residual: norm,
    }
}

pub fn max_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

pub fn to_vector(x: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn projects_onto_branch() {
        let s = ConstraintSystem::build(&fixtures::fig2_vertex());
        let r = project(&s, &[0.5, 0.01, 0.48, -0.01], None, &NewtonOptions::default());
        assert!(r.converged);
        assert!(max_dist(&r.rho, &[0.5, 0.0, 0.48, 0.0]) < 0.05);
    }

    #[test]
    fn fixed_variables_stay() {
        let s = ConstraintSystem::build(&fixtures::cube_corner());
        let free = [false, true, true];
        let r = project(&s, &[1.5707963267948966, 1.5, 1.6], Some(&free), &NewtonOptions::default());
        assert!(r.converged);
        assert_eq!(r.rho[0], 1.5707963267948966);
    }
}
