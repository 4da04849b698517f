//! Small dense linear-algebra helpers shared by the solvers.

use nalgebra::{DMatrix, DVector};

/// Relative eigenvalue floor below which a Gram matrix is treated as
/// rank deficient.
const RANK_TOL: f64 = 1e-12;
/// Ridge added to a rank-deficient Gram matrix, relative to its trace.
const RIDGE_SCALE: f64 = 1e-10;

/// Solution of a least-squares system with a Gram-matrix factorization.
pub(crate) struct GramSolver {
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    pub ridged: bool,
}

impl GramSolver {
    /// Factors `gram`, falling back to a tiny ridge when it is numerically
    /// singular. Returns `None` only for an empty or non-finite matrix.
    pub fn new(gram: &DMatrix<f64>) -> Option<Self> {
        let k = gram.nrows();
        if k == 0 || gram.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let trace = gram.trace();
        if trace <= 0.0 {
            return None;
        }
        let max_diag = gram.diagonal().max();
        let chol = nalgebra::Cholesky::new(gram.clone());
        let well_posed = match &chol {
            Some(c) => {
                let l = c.l_dirty();
                let min_pivot = (0..k).map(|i| l[(i, i)] * l[(i, i)]).fold(f64::INFINITY, f64::min);
                min_pivot > RANK_TOL * max_diag
            }
            None => false,
        };
        if well_posed {
            return Some(GramSolver { chol: chol.unwrap(), ridged: false });
        }
        let mut reg = gram.clone();
        let ridge = RIDGE_SCALE * trace;
        for i in 0..k {
            reg[(i, i)] += ridge;
        }
        nalgebra::Cholesky::new(reg).map(|chol| GramSolver { chol, ridged: true })
    }

    pub fn solve_vec(&self, rhs: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(rhs)
    }

    pub fn solve_mat(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(rhs)
    }
}

/// Residual sum of squares of the least-squares fit of `y` on the columns of
/// `design`, computed through an SVD so collinear designs are handled.
pub fn lstsq_rss(design: &DMatrix<f64>, y: &DVector<f64>) -> f64 {
    if design.ncols() == 0 {
        return y.norm_squared();
    }
    let svd = design.clone().svd(true, true);
    let u = svd.u.as_ref().expect("svd u");
    let smax = svd.singular_values.max();
    let tol = smax * 1e-10 * (design.nrows().max(design.ncols()) as f64);
    let mut fitted = DVector::zeros(y.len());
    for (k, s) in svd.singular_values.iter().enumerate() {
        if *s > tol {
            let col = u.column(k);
            let c = col.dot(y);
            fitted.axpy(c, &col, 1.0);
        }
    }
    (y - fitted).norm_squared()
}

/// Minimum-norm least-squares solution.
pub fn lstsq(design: &DMatrix<f64>, y: &DVector<f64>) -> DVector<f64> {
    if design.ncols() == 0 {
        return DVector::zeros(0);
    }
    let svd = design.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let eps = smax * 1e-12 * (design.nrows().max(design.ncols()) as f64);
    svd.solve(y, eps).expect("svd solve")
}

/// Sample quantile with linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    quantile(&v, 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gram_solver_falls_back_to_ridge_on_collinear_columns() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0]);
        let g = x.transpose() * &x;
        let s = GramSolver::new(&g).unwrap();
        assert!(s.ridged);
        let full = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let s = GramSolver::new(&(full.transpose() * &full)).unwrap();
        assert!(!s.ridged);
    }

    #[test]
    fn lstsq_rss_ignores_duplicate_columns() {
        let x = DMatrix::from_row_slice(4, 1, &[1.0, -1.0, 2.0, 0.5]);
        let y = DVector::from_vec(vec![1.0, 0.0, 3.0, 2.0]);
        let mut dup = DMatrix::zeros(4, 2);
        dup.set_column(0, &x.column(0));
        dup.set_column(1, &x.column(0));
        assert!((lstsq_rss(&x, &y) - lstsq_rss(&dup, &y)).abs() < 1e-12);
    }

    #[test]
    fn quantile_interpolates() {
        let v = [0.0, 1.0, 2.0, 3.0];
        assert_eq!(quantile(&v, 0.5), 1.5);
        assert_eq!(quantile(&v, 0.0), 0.0);
        assert_eq!(quantile(&v, 1.0), 3.0);
    }
}
