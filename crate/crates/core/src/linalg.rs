//! Dense SVD helpers: numerical rank, nullspaces and least-norm solves.

use nalgebra::{DMatrix, DVector};

/// Default relative singular-value cutoff for numerical rank.
pub const RANK_REL_TOL: f64 = 1e-8;

pub struct FullSvd {
    /// Singular values, descending, length `min(rows, cols)`.
    pub singular_values: Vec<f64>,
    /// Right singular vectors as columns, `cols x cols`, ordered to match
    /// `singular_values` followed by the remaining basis of the domain.
    pub v: DMatrix<f64>,
}

/// SVD returning a complete set of right singular vectors. Wide matrices are
/// padded with zero rows so the decomposition spans the whole domain.
pub fn full_svd(a: &DMatrix<f64>) -> FullSvd {
    let (m, n) = a.shape();
    if n == 0 {
        return FullSvd {
            singular_values: Vec::new(),
            v: DMatrix::zeros(0, 0),
        };
    }
    let padded = if m < n {
        let mut p = DMatrix::zeros(n, n);
        p.view_mut((0, 0), (m, n)).copy_from(a);
        p
    } else {
        a.clone()
    };
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("requested right singular vectors");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let mut v = DMatrix::zeros(n, n);
    for (col, &i) in order.iter().enumerate() {
        v.set_column(col, &v_t.row(i).transpose());
    }
    let singular_values = order.iter().take(m.min(n)).map(|&i| svd.singular_values[i]).collect();
    FullSvd { singular_values, v }
}

pub fn numerical_rank(singular_values: &[f64], rel_tol: f64) -> usize {
    let Some(&top) = singular_values.first() else {
        return 0;
    };
    if top <= f64::MIN_POSITIVE {
        return 0;
    }
    singular_values.iter().filter(|&&s| s > rel_tol * top).count()
}

pub fn rank(a: &DMatrix<f64>, rel_tol: f64) -> usize {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0;
    }
    numerical_rank(&a.singular_values().as_slice().to_vec(), rel_tol)
}

/// Orthonormal basis of the right nullspace as columns.
pub fn nullspace(a: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let n = a.ncols();
    if a.nrows() == 0 {
        return DMatrix::identity(n, n);
    }
    let svd = full_svd(a);
    let r = numerical_rank(&svd.singular_values, rel_tol);
    svd.v.columns(r, n - r).into_owned()
}

/// Least-norm least-squares solution of `a x = b`.
pub fn pinv_solve(a: &DMatrix<f64>, b: &DVector<f64>, rel_tol: f64) -> DVector<f64> {
    let n = a.ncols();
    if a.nrows() == 0 || n == 0 {
        return DVector::zeros(n);
    }
    let svd = a.clone().svd(true, true);
    let top = svd.singular_values.max();
    let eps = if top > 0.0 { rel_tol * top } else { f64::MIN_POSITIVE };
    svd.solve(b, eps).unwrap_or_else(|_| DVector::zeros(n))
}

/// Orthogonal projection of `x` onto the column space of the orthonormal
/// basis `basis`.
pub fn project(basis: &DMatrix<f64>, x: &DVector<f64>) -> DVector<f64> {
    basis * (basis.transpose() * x)
}

pub fn max_abs(x: &DVector<f64>) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wide_nullspace_is_complete() {
        let a = DMatrix::from_row_slice(1, 3, &[1.0, 1.0, 0.0]);
        let ns = nullspace(&a, RANK_REL_TOL);
        assert_eq!(ns.ncols(), 2);
        assert!((&a * &ns).norm() < 1e-14);
    }

    #[test]
    fn rank_of_zero_matrix() {
        assert_eq!(rank(&DMatrix::zeros(3, 4), RANK_REL_TOL), 0);
    }

    #[test]
    fn least_norm_solution() {
        let a = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let x = pinv_solve(&a, &DVector::from_vec(vec![2.0]), RANK_REL_TOL);
        assert!((x[0] - 1.0).abs() < 1e-14 && (x[1] - 1.0).abs() < 1e-14);
    }
}
