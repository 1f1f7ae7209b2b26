//! Dense linear programs solved to an optimal vertex with its binding set.
//!
//! The solver presolves the instance (substituting free columns that appear
//! in a single equality row, splitting independent blocks), runs a two-phase
//! primal simplex per block, and reports binding inequality rows measured on
//! the original data.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Tolerances;
use crate::simplex::{solve_block, Block, BlockStatus};

/// `min cost·x  s.t.  ineq_lhs·x ≤ ineq_rhs,  eq_lhs·x = eq_rhs` with free x.
#[derive(Clone, Debug)]
pub struct LinearProgram {
    pub cost: DVector<f64>,
    pub ineq_lhs: DMatrix<f64>,
    pub ineq_rhs: DVector<f64>,
    pub eq_lhs: DMatrix<f64>,
    pub eq_rhs: DVector<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    /// Optimal, but more than n rows are binding at the returned vertex.
    Degenerate,
}

impl LpStatus {
    pub fn is_solved(self) -> bool {
        matches!(self, LpStatus::Optimal | LpStatus::Degenerate)
    }
}

/// Optimal vertex of a [`LinearProgram`] with the set of binding rows.
#[derive(Clone, Debug)]
pub struct LpSolution {
    pub x_opt: DVector<f64>,
    pub objective: f64,
    /// Indices of inequality rows with |a·x − b| ≤ tol_bind.
    pub binding_ineq: Vec<usize>,
    pub status: LpStatus,
}

impl LinearProgram {
    pub fn new(
        cost: DVector<f64>,
        ineq_lhs: DMatrix<f64>,
        ineq_rhs: DVector<f64>,
        eq_lhs: DMatrix<f64>,
        eq_rhs: DVector<f64>,
    ) -> Result<Self> {
        let lp = LinearProgram {
            cost,
            ineq_lhs,
            ineq_rhs,
            eq_lhs,
            eq_rhs,
        };
        lp.validate()?;
        Ok(lp)
    }

    pub fn n_vars(&self) -> usize {
        self.cost.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_vars();
        for (ctx, cols) in [
            ("ineq_lhs columns", self.ineq_lhs.ncols()),
            ("eq_lhs columns", self.eq_lhs.ncols()),
        ] {
            if cols != n {
                return Err(Error::DimensionMismatch {
                    context: ctx.into(),
                    expected: n,
                    got: cols,
                });
            }
        }
        if self.ineq_lhs.nrows() != self.ineq_rhs.len() {
            return Err(Error::DimensionMismatch {
                context: "ineq_rhs length".into(),
                expected: self.ineq_lhs.nrows(),
                got: self.ineq_rhs.len(),
            });
        }
        if self.eq_lhs.nrows() != self.eq_rhs.len() {
            return Err(Error::DimensionMismatch {
                context: "eq_rhs length".into(),
                expected: self.eq_lhs.nrows(),
                got: self.eq_rhs.len(),
            });
        }
        for (idx, v) in self
            .cost
            .iter()
            .chain(self.ineq_lhs.iter())
            .chain(self.ineq_rhs.iter())
            .chain(self.eq_lhs.iter())
            .chain(self.eq_rhs.iter())
            .enumerate()
        {
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    index: idx,
                    value: *v,
                });
            }
        }
        Ok(())
    }
}

/// One recorded substitution: column `col` was solved out of equality row `row`.
struct Subst {
    col: usize,
    row: usize,
}

struct DisjointSet {
    parent: Vec<usize>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        DisjointSet {
            parent: (0..n).collect(),
        }
    }
    fn find(&mut self, mut a: usize) -> usize {
        while self.parent[a] != a {
            self.parent[a] = self.parent[self.parent[a]];
            a = self.parent[a];
        }
        a
    }
    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra] = rb;
        }
    }
}

pub fn solve_lp(lp: &LinearProgram, tol: &Tolerances) -> Result<LpSolution> {
    lp.validate()?;
    tol.validate()?;
    let n = lp.n_vars();
    let mi = lp.ineq_rhs.len();
    let me = lp.eq_rhs.len();
    let rhs_scale = lp
        .ineq_rhs
        .iter()
        .chain(lp.eq_rhs.iter())
        .fold(0.0f64, |a, &v| a.max(v.abs()));
    let feas_tol = tol.tol_feas * (1.0 + rhs_scale);

    let mut cost: Vec<f64> = lp.cost.iter().copied().collect();
    let mut col_active = vec![true; n];
    let mut eq_active = vec![true; me];
    let mut substitutions: Vec<Subst> = Vec::new();

    // Count inequality nonzeros per column once; they never change.
    let ineq_nnz: Vec<usize> = (0..n)
        .map(|j| (0..mi).filter(|&i| lp.ineq_lhs[(i, j)] != 0.0).count())
        .collect();

    // Substitute free columns appearing in exactly one equality row and
    // nowhere else. Repeats until no more columns qualify, so chains resolve.
    loop {
        let mut changed = false;
        for j in 0..n {
            if !col_active[j] || ineq_nnz[j] != 0 {
                continue;
            }
            let mut hit: Option<usize> = None;
            let mut count = 0;
            for r in 0..me {
                if eq_active[r] && lp.eq_lhs[(r, j)] != 0.0 {
                    count += 1;
                    hit = Some(r);
                    if count > 1 {
                        break;
                    }
                }
            }
            if count != 1 {
                continue;
            }
            let r = hit.unwrap();
            let pivot = lp.eq_lhs[(r, j)];
            let cj = cost[j];
            if cj != 0.0 {
                for k in 0..n {
                    if k != j && col_active[k] {
                        let a = lp.eq_lhs[(r, k)];
                        if a != 0.0 {
                            cost[k] -= cj * a / pivot;
                        }
                    }
                }
            }
            col_active[j] = false;
            eq_active[r] = false;
            substitutions.push(Subst { col: j, row: r });
            changed = true;
        }
        if !changed {
            break;
        }
    }

    // Columns with no remaining constraints: unconstrained free variables.
    let mut unbounded_if_feasible = false;
    let cost_eps = 1e-12 * (1.0 + lp.cost.amax());
    for j in 0..n {
        if !col_active[j] {
            continue;
        }
        let in_eq = (0..me).any(|r| eq_active[r] && lp.eq_lhs[(r, j)] != 0.0);
        if ineq_nnz[j] == 0 && !in_eq {
            if cost[j].abs() > cost_eps {
                unbounded_if_feasible = true;
            }
            col_active[j] = false;
        }
    }

    // Rows with no active columns must hold on their own.
    let mut ineq_used = vec![false; mi];
    for i in 0..mi {
        ineq_used[i] = (0..n).any(|j| col_active[j] && lp.ineq_lhs[(i, j)] != 0.0);
        if !ineq_used[i] && lp.ineq_rhs[i] < -feas_tol {
            return Ok(not_solved(n, LpStatus::Infeasible));
        }
    }
    for r in 0..me {
        if !eq_active[r] {
            continue;
        }
        let used = (0..n).any(|j| col_active[j] && lp.eq_lhs[(r, j)] != 0.0);
        if !used {
            if lp.eq_rhs[r].abs() > feas_tol {
                return Ok(not_solved(n, LpStatus::Infeasible));
            }
            eq_active[r] = false;
        }
    }

    // Split the reduced problem into independent blocks.
    let mut dsu = DisjointSet::new(n);
    for i in 0..mi {
        if !ineq_used[i] {
            continue;
        }
        let mut first: Option<usize> = None;
        for j in 0..n {
            if col_active[j] && lp.ineq_lhs[(i, j)] != 0.0 {
                match first {
                    None => first = Some(j),
                    Some(f) => dsu.union(f, j),
                }
            }
        }
    }
    for r in 0..me {
        if !eq_active[r] {
            continue;
        }
        let mut first: Option<usize> = None;
        for j in 0..n {
            if col_active[j] && lp.eq_lhs[(r, j)] != 0.0 {
                match first {
                    None => first = Some(j),
                    Some(f) => dsu.union(f, j),
                }
            }
        }
    }
    let mut comp_of_root: std::collections::HashMap<usize, usize> = std::collections::HashMap::new();
    let mut comp_cols: Vec<Vec<usize>> = Vec::new();
    for j in 0..n {
        if !col_active[j] {
            continue;
        }
        let root = dsu.find(j);
        let c = *comp_of_root.entry(root).or_insert_with(|| {
            comp_cols.push(Vec::new());
            comp_cols.len() - 1
        });
        comp_cols[c].push(j);
    }

    struct Comp {
        cols: Vec<usize>,
        cost: Vec<f64>,
        ineq: Vec<f64>,
        ineq_rhs: Vec<f64>,
        eq: Vec<f64>,
        eq_rhs: Vec<f64>,
    }
    let mut comps = Vec::with_capacity(comp_cols.len());
    for cols in comp_cols {
        let mut in_comp = vec![false; n];
        for &j in &cols {
            in_comp[j] = true;
        }
        let nc = cols.len();
        let mut ineq = Vec::new();
        let mut ineq_rhs = Vec::new();
        for i in 0..mi {
            if !ineq_used[i] {
                continue;
            }
            if (0..n).any(|j| in_comp[j] && lp.ineq_lhs[(i, j)] != 0.0) {
                for &j in &cols {
                    ineq.push(lp.ineq_lhs[(i, j)]);
                }
                ineq_rhs.push(lp.ineq_rhs[i]);
            }
        }
        let mut eq = Vec::new();
        let mut eq_rhs = Vec::new();
        for r in 0..me {
            if !eq_active[r] {
                continue;
            }
            if (0..n).any(|j| in_comp[j] && lp.eq_lhs[(r, j)] != 0.0) {
                for &j in &cols {
                    eq.push(lp.eq_lhs[(r, j)]);
                }
                eq_rhs.push(lp.eq_rhs[r]);
            }
        }
        let comp_cost: Vec<f64> = cols.iter().map(|&j| cost[j]).collect();
        comps.push(Comp {
            cols,
            cost: comp_cost,
            ineq,
            ineq_rhs,
            eq,
            eq_rhs,
        });
        let _ = nc;
    }

    let results: Vec<_> = comps
        .par_iter()
        .map(|c| {
            let block = Block {
                cost: &c.cost,
                ineq: &c.ineq,
                ineq_rhs: &c.ineq_rhs,
                eq: &c.eq,
                eq_rhs: &c.eq_rhs,
                n: c.cols.len(),
            };
            solve_block(&block, tol)
        })
        .collect();

    if results.iter().any(|r| r.status == BlockStatus::Infeasible) {
        return Ok(not_solved(n, LpStatus::Infeasible));
    }
    if unbounded_if_feasible || results.iter().any(|r| r.status == BlockStatus::Unbounded) {
        return Ok(not_solved(n, LpStatus::Unbounded));
    }

    // Postsolve: scatter block solutions, then undo substitutions in reverse.
    let mut x = vec![0.0; n];
    for (c, r) in comps.iter().zip(&results) {
        for (&j, &v) in c.cols.iter().zip(&r.x) {
            x[j] = v;
        }
    }
    for s in substitutions.iter().rev() {
        let pivot = lp.eq_lhs[(s.row, s.col)];
        let mut acc = lp.eq_rhs[s.row];
        for k in 0..n {
            if k != s.col {
                let a = lp.eq_lhs[(s.row, k)];
                if a != 0.0 {
                    acc -= a * x[k];
                }
            }
        }
        x[s.col] = acc / pivot;
    }

    let x = DVector::from_vec(x);
    let objective = lp.cost.dot(&x);
    let mut binding = Vec::new();
    for i in 0..mi {
        let ax = lp.ineq_lhs.row(i).transpose().dot(&x);
        if (ax - lp.ineq_rhs[i]).abs() <= tol.tol_bind {
            binding.push(i);
        }
    }
    let status = if binding.len() + me > n {
        LpStatus::Degenerate
    } else {
        LpStatus::Optimal
    };
    Ok(LpSolution {
        x_opt: x,
        objective,
        binding_ineq: binding,
        status,
    })
}

fn not_solved(n: usize, status: LpStatus) -> LpSolution {
    LpSolution {
        x_opt: DVector::zeros(n),
        objective: match status {
            LpStatus::Infeasible => f64::INFINITY,
            LpStatus::Unbounded => f64::NEG_INFINITY,
            _ => f64::NAN,
        },
        binding_ineq: Vec::new(),
        status,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    fn dm(rows: usize, cols: usize, data: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(rows, cols, data)
    }

    fn dv(data: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(data)
    }

    #[test]
    fn min_x_on_unit_interval() {
        // min x s.t. 0 <= x <= 1, written as -x <= 0 and x <= 1.
        let lp = LinearProgram::new(
            dv(&[1.0]),
            dm(2, 1, &[-1.0, 1.0]),
            dv(&[0.0, 1.0]),
            dm(0, 1, &[]),
            dv(&[]),
        )
        .unwrap();
        let sol = solve_lp(&lp, &tol()).unwrap();
        assert!(sol.status.is_solved());
        assert!(sol.x_opt[0].abs() < 1e-10);
        assert!(sol.objective.abs() < 1e-10);
        assert_eq!(sol.binding_ineq, vec![0]);
    }

    #[test]
    fn unique_vertex_optimum() {
        // min -2x1 - x2 s.t. x1 + x2 <= 1, x >= 0.
        let lp = LinearProgram::new(
            dv(&[-2.0, -1.0]),
            dm(3, 2, &[1.0, 1.0, -1.0, 0.0, 0.0, -1.0]),
            dv(&[1.0, 0.0, 0.0]),
            dm(0, 2, &[]),
            dv(&[]),
        )
        .unwrap();
        let sol = solve_lp(&lp, &tol()).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.x_opt[0] - 1.0).abs() < 1e-10);
        assert!(sol.x_opt[1].abs() < 1e-10);
        assert!((sol.objective + 2.0).abs() < 1e-10);
        assert_eq!(sol.binding_ineq, vec![0, 2]);
    }

    #[test]
    fn detects_infeasible() {
        // x <= -1 and x >= 2.
        let lp = LinearProgram::new(
            dv(&[1.0]),
            dm(2, 1, &[1.0, -1.0]),
            dv(&[-1.0, -2.0]),
            dm(0, 1, &[]),
            dv(&[]),
        )
        .unwrap();
        let sol = solve_lp(&lp, &tol()).unwrap();
        assert_eq!(sol.status, LpStatus::Infeasible);
    }

    #[test]
    fn detects_unbounded() {
        // min x s.t. x <= 5 with x free below.
        let lp = LinearProgram::new(
            dv(&[1.0]),
            dm(1, 1, &[1.0]),
            dv(&[5.0]),
            dm(0, 1, &[]),
            dv(&[]),
        )
        .unwrap();
        let sol = solve_lp(&lp, &tol()).unwrap();
        assert_eq!(sol.status, LpStatus::Unbounded);
    }

    #[test]
    fn unconstrained_column_with_cost_is_unbounded() {
        let lp = LinearProgram::new(dv(&[1.0]), dm(0, 1, &[]), dv(&[]), dm(0, 1, &[]), dv(&[]))
            .unwrap();
        let sol = solve_lp(&lp, &tol()).unwrap();
        assert_eq!(sol.status, LpStatus::Unbounded);
    }

    #[test]
    fn equality_constrained() {
        // min x1 + 2 x2 s.t. x1 + x2 = 1, x >= 0 → (1, 0).
        let lp = LinearProgram::new(
            dv(&[1.0, 2.0]),
            dm(2, 2, &[-1.0, 0.0, 0.0, -1.0]),
            dv(&[0.0, 0.0]),
            dm(1, 2, &[1.0, 1.0]),
            dv(&[1.0]),
        )
        .unwrap();
        let sol = solve_lp(&lp, &tol()).unwrap();
        assert!(sol.status.is_solved());
        assert!((sol.x_opt[0] - 1.0).abs() < 1e-9);
        assert!(sol.x_opt[1].abs() < 1e-9);
        assert!((sol.objective - 1.0).abs() < 1e-9);
    }

    #[test]
    fn degenerate_vertex_flagged() {
        // Three rows binding at the origin in 2 variables.
        let lp = LinearProgram::new(
            dv(&[1.0, 1.0]),
            dm(3, 2, &[-1.0, 0.0, 0.0, -1.0, -1.0, -1.0]),
            dv(&[0.0, 0.0, 0.0]),
            dm(0, 2, &[]),
            dv(&[]),
        )
        .unwrap();
        let sol = solve_lp(&lp, &tol()).unwrap();
        assert_eq!(sol.status, LpStatus::Degenerate);
        assert_eq!(sol.binding_ineq, vec![0, 1, 2]);
        assert!(sol.x_opt.norm() < 1e-10);
    }

    #[test]
    fn free_singleton_column_is_substituted() {
        // min z s.t. z = x + y, 0 <= x <= 1, 0 <= y <= 2.
        let lp = LinearProgram::new(
            dv(&[0.0, 0.0, 1.0]),
            dm(
                4,
                3,
                &[
                    -1.0, 0.0, 0.0, //
                    1.0, 0.0, 0.0, //
                    0.0, -1.0, 0.0, //
                    0.0, 1.0, 0.0,
                ],
            ),
            dv(&[0.0, 1.0, 0.0, 2.0]),
            dm(1, 3, &[-1.0, -1.0, 1.0]),
            dv(&[0.0]),
        )
        .unwrap();
        let sol = solve_lp(&lp, &tol()).unwrap();
        assert!(sol.status.is_solved());
        assert!(sol.x_opt[2].abs() < 1e-10);
        assert!((sol.objective).abs() < 1e-10);
    }

    #[test]
    fn negative_rhs_needs_phase_one() {
        // min x1 + x2 s.t. x1 + x2 >= 1 (as -x1 - x2 <= -1), x >= 0.
        let lp = LinearProgram::new(
            dv(&[1.0, 1.0]),
            dm(3, 2, &[-1.0, -1.0, -1.0, 0.0, 0.0, -1.0]),
            dv(&[-1.0, 0.0, 0.0]),
            dm(0, 2, &[]),
            dv(&[]),
        )
        .unwrap();
        let sol = solve_lp(&lp, &tol()).unwrap();
        assert!(sol.status.is_solved());
        assert!((sol.objective - 1.0).abs() < 1e-9);
        let s: f64 = sol.x_opt.iter().sum();
        assert!((s - 1.0).abs() < 1e-9);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let lp = LinearProgram {
            cost: dv(&[1.0, 2.0]),
            ineq_lhs: dm(1, 1, &[1.0]),
            ineq_rhs: dv(&[1.0]),
            eq_lhs: dm(0, 2, &[]),
            eq_rhs: dv(&[]),
        };
        assert!(solve_lp(&lp, &tol()).is_err());
    }
}
