//! Dense solves used by the LP solver and the identification updates.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Numerical tolerances threaded through the solver stack.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Tolerances {
    /// Feasibility tolerance for constraint satisfaction.
    pub tol_feas: f64,
    /// Threshold on |a·x − b| below which an inequality row counts as binding.
    pub tol_bind: f64,
    /// Rank threshold, relative to the matrix scale.
    pub tol_rank: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            tol_feas: 1e-8,
            tol_bind: 1e-7,
            tol_rank: 1e-10,
        }
    }
}

impl Tolerances {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("tol_feas", self.tol_feas),
            ("tol_bind", self.tol_bind),
            ("tol_rank", self.tol_rank),
        ] {
            if !(v > 0.0) {
                return Err(Error::NotPositive {
                    context: name.into(),
                    value: v,
                });
            }
        }
        Ok(())
    }
}

/// Solution of a linear system together with a rank-deficiency flag.
#[derive(Clone, Debug)]
pub struct SolveOutcome {
    pub x: DMatrix<f64>,
    pub rank_deficient: bool,
}

/// Solves `M · X = rhs` for square `M`.
///
/// Uses LU with partial pivoting when `M` is invertible within `tol_rank`
/// (relative to the largest entry magnitude); otherwise falls back to the
/// minimum-norm least-squares solution and sets the rank flag.
pub fn solve_square(m: &DMatrix<f64>, rhs: &DMatrix<f64>, tol_rank: f64) -> SolveOutcome {
    assert_eq!(m.nrows(), m.ncols(), "solve_square needs a square matrix");
    assert_eq!(m.nrows(), rhs.nrows(), "rhs row count must match");
    let scale = m.amax().max(1e-300);
    let lu = m.clone().lu();
    let u = lu.u();
    let invertible = (0..u.nrows().min(u.ncols()))
        .all(|i| u[(i, i)].abs() > tol_rank * scale);
    if invertible {
        if let Some(x) = lu.solve(rhs) {
            return SolveOutcome {
                x,
                rank_deficient: false,
            };
        }
    }
    SolveOutcome {
        x: min_norm_solve(m, rhs, tol_rank),
        rank_deficient: true,
    }
}

/// Minimum-norm least-squares solution via SVD.
fn min_norm_solve(m: &DMatrix<f64>, rhs: &DMatrix<f64>, tol_rank: f64) -> DMatrix<f64> {
    let svd = m.clone().svd(true, true);
    let smax = svd.singular_values.max().max(1e-300);
    svd.solve(rhs, tol_rank * smax)
        .unwrap_or_else(|_| DMatrix::zeros(m.ncols(), rhs.ncols()))
}

/// `argmin_x ‖F·x − r‖₂`, minimum-norm when `FᵀF` is rank-deficient.
pub fn least_squares(f: &DMatrix<f64>, r: &DVector<f64>, tol_rank: f64) -> SolveOutcome {
    assert_eq!(f.nrows(), r.len(), "rhs length must match row count");
    let svd = f.clone().svd(true, true);
    let smax = svd.singular_values.max().max(1e-300);
    let eps = tol_rank * smax;
    let rank = svd.singular_values.iter().filter(|&&s| s > eps).count();
    let x = svd
        .solve(&DMatrix::from_column_slice(r.len(), 1, r.as_slice()), eps)
        .unwrap_or_else(|_| DMatrix::zeros(f.ncols(), 1));
    SolveOutcome {
        x,
        rank_deficient: rank < f.ncols(),
    }
}

/// Greedy selection of a maximal linearly independent subset of rows.
///
/// The first `forced` rows are orthogonalized first, in order; remaining rows
/// are added by largest residual norm until the span is exhausted. Returns the
/// selected row indices (forced rows that are themselves dependent are kept
/// out of the result).
pub fn select_independent_rows(rows: &DMatrix<f64>, forced: usize, tol_rank: f64) -> Vec<usize> {
    let n = rows.ncols();
    let total = rows.nrows();
    let scale = rows.amax().max(1e-300);
    let thresh = tol_rank * scale * (n as f64).sqrt().max(1.0);

    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut selected = Vec::new();
    // Residuals are kept orthogonal to the basis incrementally: each accepted
    // vector is subtracted from every live candidate exactly once.
    let mut residual: Vec<DVector<f64>> = (0..total).map(|i| rows.row(i).transpose()).collect();
    let mut alive: Vec<bool> = vec![true; total];

    let mut accept = |i: usize,
                      basis: &mut Vec<DVector<f64>>,
                      residual: &mut Vec<DVector<f64>>,
                      alive: &mut Vec<bool>|
     -> bool {
        // Re-orthogonalize the winner once against the full basis before
        // accepting it, to limit drift.
        let mut v = residual[i].clone();
        for q in basis.iter() {
            let c = q.dot(&v);
            v.axpy(-c, q, 1.0);
        }
        let norm = v.norm();
        alive[i] = false;
        if norm <= thresh {
            return false;
        }
        let q = v / norm;
        for (j, r) in residual.iter_mut().enumerate() {
            if alive[j] {
                let c = q.dot(r);
                r.axpy(-c, &q, 1.0);
            }
        }
        basis.push(q);
        true
    };

    // Forced rows first, in order.
    for i in 0..forced.min(total) {
        if accept(i, &mut basis, &mut residual, &mut alive) {
            selected.push(i);
        }
        if basis.len() == n {
            return selected;
        }
    }

    // Remaining rows by largest residual norm.
    loop {
        let mut best: Option<(usize, f64)> = None;
        for i in 0..total {
            if !alive[i] {
                continue;
            }
            let norm = residual[i].norm();
            if norm <= thresh {
                alive[i] = false;
                continue;
            }
            if best.map_or(true, |(_, bn)| norm > bn) {
                best = Some((i, norm));
            }
        }
        match best {
            Some((i, _)) => {
                if accept(i, &mut basis, &mut residual, &mut alive) {
                    selected.push(i);
                }
                if basis.len() == n {
                    break;
                }
            }
            None => break,
        }
    }
    selected.sort_unstable();
    selected
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    #[test]
    fn square_identity() {
        let m = DMatrix::<f64>::identity(3, 3);
        let rhs = DMatrix::from_column_slice(3, 1, &[1.0, -2.0, 5.0]);
        let out = solve_square(&m, &rhs, 1e-10);
        assert!(!out.rank_deficient);
        assert_eq!(out.x.as_slice(), rhs.as_slice());
    }

    #[test]
    fn square_diagonal() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 4.0]);
        let rhs = DMatrix::from_column_slice(2, 1, &[2.0, 8.0]);
        let out = solve_square(&m, &rhs, 1e-10);
        assert!((out.x[(0, 0)] - 1.0).abs() < 1e-14);
        assert!((out.x[(1, 0)] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn square_random_residual() {
        let mut rng = StdRng::seed_from_u64(42);
        let n = 20;
        // Diagonal dominance keeps the instance well-conditioned.
        let mut m = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        for i in 0..n {
            m[(i, i)] += 10.0;
        }
        let rhs = DMatrix::from_fn(n, 1, |_, _| rng.gen_range(-1.0..1.0));
        let out = solve_square(&m, &rhs, 1e-10);
        assert!(!out.rank_deficient);
        let resid = (&m * &out.x - &rhs).norm() / rhs.norm();
        assert!(resid <= 1e-10, "relative residual {resid}");
    }

    #[test]
    fn square_singular_falls_back_min_norm() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let rhs = DMatrix::from_column_slice(2, 1, &[2.0, 2.0]);
        let out = solve_square(&m, &rhs, 1e-10);
        assert!(out.rank_deficient);
        // Minimum-norm solution of x1 + x2 = 2 is (1, 1).
        assert!((out.x[(0, 0)] - 1.0).abs() < 1e-10);
        assert!((out.x[(1, 0)] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn lsq_orthonormal_columns() {
        // Q has orthonormal columns, so the solution is Qᵀ r.
        let q = DMatrix::from_column_slice(
            3,
            2,
            &[1.0, 0.0, 0.0, 0.0, 3.0_f64.sqrt().recip(), (2.0 / 3.0_f64).sqrt()],
        );
        let r = DVector::from_column_slice(&[1.0, 2.0, 3.0]);
        let out = least_squares(&q, &r, 1e-10);
        let expect = q.transpose() * &r;
        assert!((out.x.column(0) - expect).norm() < 1e-12);
    }

    #[test]
    fn lsq_exact_when_in_column_space() {
        let f = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 2.0, 1.0, 0.0, 3.0, 1.0, 1.0]);
        let x_true = DVector::from_column_slice(&[2.0, -1.0]);
        let r = &f * &x_true;
        let out = least_squares(&f, &r, 1e-10);
        assert!(!out.rank_deficient);
        let resid = (&f * out.x.column(0) - &r).norm();
        assert!(resid < 1e-12);
    }

    #[test]
    fn lsq_matches_normal_equations() {
        let mut rng = StdRng::seed_from_u64(7);
        let f = DMatrix::from_fn(50, 3, |_, _| rng.gen_range(-2.0..2.0));
        let r = DVector::from_fn(50, |_, _| rng.gen_range(-2.0..2.0));
        let out = least_squares(&f, &r, 1e-10);
        // Normal-equations oracle.
        let ftf = f.transpose() * &f;
        let ftr = f.transpose() * &r;
        let oracle = ftf.lu().solve(&ftr).unwrap();
        assert!((out.x.column(0) - oracle).norm() < 1e-8);
    }

    #[test]
    fn lsq_residual_orthogonal_to_column_space() {
        let mut rng = StdRng::seed_from_u64(11);
        for _ in 0..20 {
            let rows = rng.gen_range(5..40);
            let cols = rng.gen_range(1..5);
            let f = DMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-3.0..3.0));
            let r = DVector::from_fn(rows, |_, _| rng.gen_range(-3.0..3.0));
            let out = least_squares(&f, &r, 1e-10);
            let resid = &f * out.x.column(0) - &r;
            let lhs = (f.transpose() * resid).norm();
            assert!(lhs <= 1e-8 * f.transpose().norm() * r.norm().max(1.0));
        }
    }

    #[test]
    fn independent_rows_basic() {
        let rows = DMatrix::from_row_slice(
            4,
            2,
            &[
                1.0, 0.0, //
                2.0, 0.0, // dependent on row 0
                0.0, 1.0, //
                1.0, 1.0, // dependent on rows 0 and 2
            ],
        );
        let sel = select_independent_rows(&rows, 0, 1e-10);
        assert_eq!(sel.len(), 2);
    }

    #[test]
    fn independent_rows_respects_forced_prefix() {
        let rows = DMatrix::from_row_slice(3, 2, &[0.0, 1.0, 1.0, 0.0, 1.0, 1.0]);
        let sel = select_independent_rows(&rows, 2, 1e-10);
        assert_eq!(sel, vec![0, 1]);
    }
}
