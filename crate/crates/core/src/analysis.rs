//! Tangent-space rigidity: Jacobian, degrees of freedom, flexes and
//! self-stresses.

use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::constraints::ConstraintSystem;
use crate::kinematics::{build_spanning_tree, planar, transfer_derivatives, transfer_matrix, Mat4};
use crate::linalg::{full_svd, numerical_rank, RANK_REL_TOL};
use crate::model::{CreasePattern, FLAT_EPS};

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("state is not on the constraint variety (residual {0:e})")]
    NotOnVariety(f64),
    #[error("velocity is not a first-order flex (|J v| = {0:e})")]
    NotAFlex(f64),
    #[error("pattern is not developable")]
    NotDevelopable,
    #[error("pattern has holes")]
    HasHoles,
    #[error("j - 2i = {formula} but the numeric flat-state DOF is {numeric}")]
    FormulaMismatch { formula: i64, numeric: usize },
}

fn rows<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
    let v: Vec<Vec<f64>> = m.row_iter().map(|r| r.iter().copied().collect()).collect();
    v.serialize(s)
}

fn columns<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
    let v: Vec<Vec<f64>> = m.column_iter().map(|c| c.iter().copied().collect()).collect();
    v.serialize(s)
}

/// Analytic Jacobian of the residual with respect to the folding angles.
pub fn jacobian(system: &ConstraintSystem, rho: &[f64]) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(system.dim(), system.num_vars);
    let mut row = 0;
    for l in &system.loops {
        for (var, d) in l.product_derivatives(rho) {
            for (k, x) in l.extract(&d).into_iter().enumerate() {
                j[(row + k, var)] += x;
            }
        }
        row += l.dim();
    }
    j
}

/// Jacobian with respect to the half-angle tangents `t = tan(rho / 2)`.
pub fn jacobian_normalized(system: &ConstraintSystem, rho: &[f64]) -> DMatrix<f64> {
    let mut j = jacobian(system, rho);
    for (c, r) in rho.iter().enumerate() {
        let t = (r / 2.0).tan();
        let scale = 2.0 / (1.0 + t * t);
        j.column_mut(c).scale_mut(scale);
    }
    j
}

/// Central-difference Jacobian, for checking the analytic one.
pub fn jacobian_fd(system: &ConstraintSystem, rho: &[f64], h: f64) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(system.dim(), system.num_vars);
    let mut x = rho.to_vec();
    for c in 0..system.num_vars {
        x[c] = rho[c] + h;
        let plus = system.residual_vector(&x);
        x[c] = rho[c] - h;
        let minus = system.residual_vector(&x);
        x[c] = rho[c];
        j.set_column(c, &((plus - minus) / (2.0 * h)));
    }
    j
}

#[derive(Debug, Clone, Serialize)]
pub struct RigidityReport {
    pub residual: f64,
    #[serde(serialize_with = "rows")]
    pub jacobian: DMatrix<f64>,
    pub singular_values: Vec<f64>,
    pub rank: usize,
    pub deg: usize,
    /// Columns span the first-order flexes.
    #[serde(serialize_with = "columns")]
    pub flex_basis: DMatrix<f64>,
    /// Columns span the self-stresses (left nullspace of the Jacobian).
    #[serde(serialize_with = "columns")]
    pub stress_basis: DMatrix<f64>,
    pub first_order_rigid: bool,
    pub regular: bool,
    /// First-order rigidity implies rigidity.
    pub rigid_by_first_order: bool,
}

pub fn classify(system: &ConstraintSystem, rho: &[f64]) -> Result<RigidityReport, AnalysisError> {
    classify_with(system, rho, RANK_REL_TOL)
}

pub fn classify_with(system: &ConstraintSystem, rho: &[f64], rank_tol: f64) -> Result<RigidityReport, AnalysisError> {
    let residual = system.max_norm(rho);
    if residual > system.tol {
        return Err(AnalysisError::NotOnVariety(residual));
    }
    Ok(tangent_report(system, rho, rank_tol, residual))
}

/// Rank data without the on-variety precondition.
pub fn tangent_report(system: &ConstraintSystem, rho: &[f64], rank_tol: f64, residual: f64) -> RigidityReport {
    let j = jacobian(system, rho);
    let (m, n) = j.shape();
    let svd = full_svd(&j);
    let rank = numerical_rank(&svd.singular_values, rank_tol);
    let flex_basis = svd.v.columns(rank, n - rank).into_owned();
    let stress_basis = if m == 0 {
        DMatrix::zeros(0, 0)
    } else {
        let st = full_svd(&j.transpose());
        st.v.columns(rank, m - rank).into_owned()
    };
    let deg = n - rank;
    RigidityReport {
        residual,
        jacobian: j,
        singular_values: svd.singular_values,
        rank,
        deg,
        flex_basis,
        stress_basis,
        first_order_rigid: deg == 0,
        regular: rank == m.min(n),
        rigid_by_first_order: deg == 0,
    }
}

/// `j - 2i` for a developable pattern without holes, checked against the
/// numeric degree of freedom at the flat state.
pub fn deg_formula_developable(pattern: &CreasePattern) -> Result<usize, AnalysisError> {
    if !pattern.holes().is_empty() {
        return Err(AnalysisError::HasHoles);
    }
    if !pattern.is_developable(1e-9) {
        return Err(AnalysisError::NotDevelopable);
    }
    let inner = pattern.inner_vertices();
    let formula = pattern.num_inner_creases() as i64 - 2 * inner.len() as i64;
    let min_degree = inner.iter().map(|&v| pattern.incident_creases(v).len()).min().unwrap_or(usize::MAX);
    let system = ConstraintSystem::build(pattern);
    let numeric = classify(&system, &vec![0.0; system.num_vars])?.deg;
    if formula < 0 || formula as usize != numeric || (min_degree >= 4 && formula <= 0) {
        return Err(AnalysisError::FormulaMismatch { formula, numeric });
    }
    Ok(numeric)
}

#[derive(Debug, Clone, Serialize)]
pub struct AngularVelocities {
    /// Angular velocity of every panel in global coordinates.
    pub omega: Vec<[f64; 3]>,
    /// Largest violation of `rho_dot_k c_k = omega_k - omega_{k-1}` along the
    /// panel tree.
    pub chain_error: f64,
}

fn skew_axis(s: &Mat4) -> Vector3<f64> {
    Vector3::new(
        0.5 * (s[(2, 1)] - s[(1, 2)]),
        0.5 * (s[(0, 2)] - s[(2, 0)]),
        0.5 * (s[(1, 0)] - s[(0, 1)]),
    )
}

pub fn angular_velocities(pattern: &CreasePattern, rho: &[f64], rho_dot: &[f64]) -> Result<AngularVelocities, AnalysisError> {
    let system = ConstraintSystem::build(pattern);
    let v = DVector::from_column_slice(rho_dot);
    let violation = (jacobian(&system, rho) * &v).amax();
    if violation > 1e-8 * v.amax().max(1.0) {
        return Err(AnalysisError::NotAFlex(violation));
    }
    let chains = build_spanning_tree(pattern);
    let mut omega = vec![Vector3::zeros(); chains.len()];
    for (k, chain) in chains.iter().enumerate() {
        let t = transfer_matrix(chain, rho);
        let mut dt = Mat4::zeros();
        for (var, d) in transfer_derivatives(chain, rho) {
            dt += d * rho_dot[var];
        }
        let mut r = Mat4::zeros();
        r.fixed_view_mut::<3, 3>(0, 0).copy_from(&t.fixed_view::<3, 3>(0, 0).transpose());
        omega[k] = skew_axis(&(dt * r));
    }
    let mut chain_error = 0.0f64;
    for chain in &chains {
        let mut t = Mat4::identity();
        let mut prev = pattern.base_panel();
        for s in &chain.steps {
            let frame = t * planar(s.beta, s.a, s.b);
            let axis = frame.fixed_view::<3, 1>(0, 0).into_owned();
            let err = (axis * rho_dot[s.var] - (omega[s.panel] - omega[prev])).amax();
            chain_error = chain_error.max(err);
            t = frame * crate::kinematics::rotx(rho[s.var]);
            prev = s.panel;
        }
    }
    Ok(AngularVelocities {
        omega: omega.iter().map(|w| [w.x, w.y, w.z]).collect(),
        chain_error,
    })
}

/// Heuristic: apparent order of residual growth along `direction` from
/// `rho`, estimated from two step sizes. First-order flexes give at least 2;
/// directions that extend to actual motions show growth close to the order
/// at which the motion's curvature enters. Not a certificate of anything.
pub fn residual_growth_order(system: &ConstraintSystem, rho: &[f64], direction: &[f64]) -> f64 {
    let at = |eps: f64| {
        let x: Vec<f64> = rho.iter().zip(direction).map(|(r, d)| r + eps * d).collect();
        system.residual_vector(&x).norm()
    };
    let (e1, e2) = (1e-2, 1e-3);
    let (r1, r2) = (at(e1), at(e2));
    if r2 <= f64::MIN_POSITIVE || r1 <= f64::MIN_POSITIVE {
        return f64::INFINITY;
    }
    (r1 / r2).ln() / (e1 / e2).ln()
}

/// True when some angle is within the flat tolerance of ±pi, where the
/// half-angle parameterization is singular.
pub fn touches_flat_limit(rho: &[f64]) -> bool {
    rho.iter().any(|r| (r.abs() - std::f64::consts::PI).abs() <= FLAT_EPS)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn fig2_flat_state_is_special() {
        let s = ConstraintSystem::build(&fixtures::fig2_vertex());
        let r = classify(&s, &[0.0; 4]).unwrap();
        assert_eq!(r.rank, 2);
        assert_eq!(r.deg, 2);
        assert!(!r.regular);
    }

    #[test]
    fn fig2_branch_is_regular() {
        let s = ConstraintSystem::build(&fixtures::fig2_vertex());
        let r = classify(&s, &[0.7, 0.0, 0.7, 0.0]).unwrap();
        assert_eq!(r.deg, 1);
        assert!(r.regular);
    }

    #[test]
    fn cube_corner_first_order_rigid() {
        let s = ConstraintSystem::build(&fixtures::cube_corner());
        let r = classify(&s, &[FRAC_PI_2; 3]).unwrap();
        assert_eq!(r.deg, 0);
        assert!(r.first_order_rigid);
    }

    #[test]
    fn off_variety_rejected() {
        let s = ConstraintSystem::build(&fixtures::cube_corner());
        assert!(matches!(classify(&s, &[0.1; 3]), Err(AnalysisError::NotOnVariety(_))));
    }

    #[test]
    fn free_crease_column_is_zero() {
        let s = ConstraintSystem::build(&fixtures::three_squares());
        let j = jacobian(&s, &[0.3, 0.2]);
        assert_eq!(j.nrows(), 0);
        let p = fixtures::fan6();
        let s = ConstraintSystem::build(&p);
        assert_eq!(jacobian(&s, &[0.1; 5]).ncols(), 5);
    }

    #[test]
    fn developable_formula() {
        assert_eq!(deg_formula_developable(&fixtures::miura(3, 3)), Ok(4));
        assert_eq!(deg_formula_developable(&fixtures::fig2_vertex()), Ok(2));
        assert_eq!(deg_formula_developable(&fixtures::degree6_vertex()), Ok(4));
        assert_eq!(deg_formula_developable(&fixtures::cube_corner()), Err(AnalysisError::NotDevelopable));
    }

    #[test]
    fn angular_velocity_on_branch() {
        let p = fixtures::fig2_vertex();
        let w = angular_velocities(&p, &[0.0; 4], &[0.0; 4]).unwrap();
        assert!(w.omega.iter().all(|o| o.iter().all(|x| *x == 0.0)));
        let w = angular_velocities(&p, &[0.0; 4], &[1.0, 0.0, 1.0, 0.0]).unwrap();
        assert!(w.chain_error < 1e-8);
        assert_eq!(w.omega[p.base_panel()], [0.0; 3]);
        let moving: Vec<_> = w.omega.iter().filter(|o| o.iter().any(|x| x.abs() > 1e-12)).collect();
        assert_eq!(moving.len(), 2);
        assert_eq!(moving[0], moving[1]);
        assert!(moving[0][1].abs() < 1e-12 && moving[0][2].abs() < 1e-12);
    }

    #[test]
    fn non_flex_velocity_rejected() {
        let p = fixtures::fig2_vertex();
        assert!(matches!(
            angular_velocities(&p, &[0.0; 4], &[1.0, 0.0, 0.0, 0.0]),
            Err(AnalysisError::NotAFlex(_))
        ));
    }
}
