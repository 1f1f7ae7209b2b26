//! Dense two-phase primal simplex working on one connected block of an LP.
//!
//! Structural variables are free and start at zero; every inequality row gets
//! a slack bounded below by zero; rows violated at the zero start get a
//! phase-1 artificial. Pricing is Dantzig with a Bland fallback once a pivot
//! budget is exceeded. After optimality, nonbasic structural columns are
//! pivoted into the basis along the optimal face so the returned point is a
//! vertex whenever the feasible set is pointed.

use nalgebra::{DMatrix, DVector};

use crate::linalg::Tolerances;

/// One block in the solver's internal row-major layout.
pub(crate) struct Block<'a> {
    pub cost: &'a [f64],
    /// Inequality rows, row-major, `mi x n`.
    pub ineq: &'a [f64],
    pub ineq_rhs: &'a [f64],
    /// Equality rows, row-major, `me x n`.
    pub eq: &'a [f64],
    pub eq_rhs: &'a [f64],
    pub n: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum BlockStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

pub(crate) struct BlockSolution {
    pub status: BlockStatus,
    pub x: Vec<f64>,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Kind {
    Structural,
    Slack,
    /// Phase-1 column; fixed at zero once phase 1 ends.
    Artificial,
}

const RATIO_EPS: f64 = 1e-10;
const REFRESH_INTERVAL: usize = 1024;
const PIVOT_HARD_CAP: usize = 10_000_000;

struct Engine {
    m: usize,
    n: usize,
    k_total: usize,
    /// Active column count (artificials are dropped from updates in phase 2).
    k_active: usize,
    kind: Vec<Kind>,
    /// Row index a column is basic in, or `usize::MAX`.
    basic_in: Vec<usize>,
    basic_col: Vec<usize>,
    /// Row-major `m x k_total` tableau.
    tab: Vec<f64>,
    /// Basic-variable values.
    bcol: Vec<f64>,
    /// Reduced costs of the current phase.
    red: Vec<f64>,
    /// Original augmented columns, row-major `m x k_total`.
    a_full: Vec<f64>,
    b: Vec<f64>,
    pivots: usize,
    bland_after: usize,
}

impl Engine {
    fn recompute_reduced(&mut self, cost: &[f64]) {
        self.red[..self.k_active].copy_from_slice(&cost[..self.k_active]);
        for i in 0..self.m {
            let cb = cost[self.basic_col[i]];
            if cb != 0.0 {
                let row = &self.tab[i * self.k_total..i * self.k_total + self.k_active];
                for (r, &t) in self.red[..self.k_active].iter_mut().zip(row) {
                    *r -= cb * t;
                }
            }
        }
    }

    /// Rebuilds the tableau and basic values from the original data.
    fn refresh(&mut self) -> bool {
        let m = self.m;
        let mut bmat = DMatrix::<f64>::zeros(m, m);
        for (i, &c) in self.basic_col.iter().enumerate() {
            for r in 0..m {
                bmat[(r, i)] = self.a_full[r * self.k_total + c];
            }
        }
        let lu = bmat.lu();
        let mut rhs = DMatrix::<f64>::zeros(m, self.k_active + 1);
        for r in 0..m {
            for c in 0..self.k_active {
                rhs[(r, c)] = self.a_full[r * self.k_total + c];
            }
            rhs[(r, self.k_active)] = self.b[r];
        }
        let Some(sol) = lu.solve(&rhs) else {
            return false;
        };
        // Basis maps column j of the basis matrix to basic row j, so `sol`
        // rows are indexed by basis position, which equals the tableau row.
        for r in 0..m {
            for c in 0..self.k_active {
                self.tab[r * self.k_total + c] = sol[(r, c)];
            }
            self.bcol[r] = sol[(r, self.k_active)];
        }
        true
    }

    fn pivot(&mut self, pr: usize, pc: usize) {
        let kt = self.k_total;
        let ka = self.k_active;
        let piv = self.tab[pr * kt + pc];
        debug_assert!(piv.abs() > 0.0);
        let inv = 1.0 / piv;
        {
            let row = &mut self.tab[pr * kt..pr * kt + ka];
            for v in row.iter_mut() {
                *v *= inv;
            }
        }
        self.bcol[pr] *= inv;
        let (pivot_row, bpr) = {
            let r = self.tab[pr * kt..pr * kt + ka].to_vec();
            (r, self.bcol[pr])
        };
        for i in 0..self.m {
            if i == pr {
                continue;
            }
            let factor = self.tab[i * kt + pc];
            if factor == 0.0 {
                continue;
            }
            let row = &mut self.tab[i * kt..i * kt + ka];
            for (v, &p) in row.iter_mut().zip(&pivot_row) {
                *v -= factor * p;
            }
            row[pc] = 0.0;
            self.bcol[i] -= factor * bpr;
        }
        let rfac = self.red[pc];
        if rfac != 0.0 {
            for (v, &p) in self.red[..ka].iter_mut().zip(&pivot_row) {
                *v -= rfac * p;
            }
            self.red[pc] = 0.0;
        }
        let leaving = self.basic_col[pr];
        self.basic_in[leaving] = usize::MAX;
        self.basic_col[pr] = pc;
        self.basic_in[pc] = pr;
        self.pivots += 1;
        if self.pivots % REFRESH_INTERVAL == 0 {
            self.refresh();
        }
    }

    /// Ratio test for column `pc` moved in direction `dir`. Returns the
    /// blocking row, or `None` when the step is unbounded.
    fn ratio_test(&self, pc: usize, dir: f64, phase1: bool, bland: bool) -> Option<usize> {
        let mut best_row: Option<usize> = None;
        let mut best_t = f64::INFINITY;
        for i in 0..self.m {
            let w = self.tab[i * self.k_total + pc];
            if w.abs() <= RATIO_EPS {
                continue;
            }
            let bc = self.basic_col[i];
            let t = match self.kind[bc] {
                Kind::Structural => continue, // free, never blocks
                Kind::Artificial if !phase1 => 0.0, // fixed at zero
                _ => {
                    let dw = dir * w;
                    if dw <= RATIO_EPS {
                        continue; // value increases, no upper bound
                    }
                    self.bcol[i].max(0.0) / dw
                }
            };
            let better = match best_row {
                None => true,
                Some(br) => {
                    if bland {
                        t < best_t - 1e-12
                            || (t < best_t + 1e-12 && bc < self.basic_col[br])
                    } else {
                        let tie = (t - best_t).abs() <= 1e-12 * (1.0 + best_t.abs());
                        if !tie {
                            t < best_t
                        } else {
                            // Prefer kicking artificials out, then the largest pivot.
                            let cand_art = self.kind[bc] == Kind::Artificial;
                            let best_art = self.kind[self.basic_col[br]] == Kind::Artificial;
                            let bw = self.tab[br * self.k_total + pc];
                            (cand_art && !best_art)
                                || (cand_art == best_art && w.abs() > bw.abs())
                        }
                    }
                }
            };
            if better {
                best_t = t.min(best_t);
                best_row = Some(i);
            }
        }
        best_row
    }

    /// Runs one phase to optimality. Returns false on unboundedness.
    fn optimize(&mut self, cost: &[f64], phase1: bool) -> bool {
        self.recompute_reduced(cost);
        let cscale = cost.iter().fold(0.0f64, |a, &c| a.max(c.abs()));
        let eps = 1e-9 * (1.0 + cscale);
        loop {
            assert!(
                self.pivots < PIVOT_HARD_CAP,
                "simplex exceeded hard pivot cap"
            );
            let bland = self.pivots > self.bland_after;
            let mut entering: Option<(usize, f64, f64)> = None; // (col, dir, score)
            for j in 0..self.k_active {
                if self.basic_in[j] != usize::MAX {
                    continue;
                }
                let r = self.red[j];
                let (eligible, dir) = match self.kind[j] {
                    Kind::Structural => {
                        if r < -eps {
                            (true, 1.0)
                        } else if r > eps {
                            (true, -1.0)
                        } else {
                            (false, 0.0)
                        }
                    }
                    Kind::Slack => (r < -eps, 1.0),
                    Kind::Artificial => (false, 0.0),
                };
                if !eligible {
                    continue;
                }
                if bland {
                    entering = Some((j, dir, r.abs()));
                    break;
                }
                if entering.map_or(true, |(_, _, s)| r.abs() > s) {
                    entering = Some((j, dir, r.abs()));
                }
            }
            let Some((pc, dir, _)) = entering else {
                return true; // phase optimal
            };
            match self.ratio_test(pc, dir, phase1, bland) {
                Some(pr) => self.pivot(pr, pc),
                None => {
                    if phase1 {
                        // The phase-1 objective is bounded below by zero, so a
                        // missing blocking row is numerical noise; give up on
                        // improving further.
                        return true;
                    }
                    return false;
                }
            }
        }
    }

    /// Pivots zero-reduced-cost structural columns into the basis so the
    /// final point is a vertex of the original polyhedron.
    fn purify(&mut self) {
        for j in 0..self.n {
            if self.basic_in[j] != usize::MAX {
                continue;
            }
            let col_zero = (0..self.m).all(|i| self.tab[i * self.k_total + j].abs() <= RATIO_EPS);
            if col_zero {
                continue;
            }
            let pr = self
                .ratio_test(j, 1.0, false, false)
                .or_else(|| self.ratio_test(j, -1.0, false, false));
            if let Some(pr) = pr {
                self.pivot(pr, j);
            }
        }
    }

    /// Recomputes basic values from a fresh factorization of the basis and
    /// extracts the structural solution.
    fn extract(&mut self) -> Vec<f64> {
        let m = self.m;
        let mut bmat = DMatrix::<f64>::zeros(m, m);
        for (i, &c) in self.basic_col.iter().enumerate() {
            for r in 0..m {
                bmat[(r, i)] = self.a_full[r * self.k_total + c];
            }
        }
        let rhs = DVector::from_column_slice(&self.b);
        if let Some(vals) = bmat.lu().solve(&rhs) {
            for i in 0..m {
                self.bcol[i] = vals[i];
            }
        }
        let mut x = vec![0.0; self.n];
        for i in 0..m {
            let c = self.basic_col[i];
            if c < self.n {
                x[c] = self.bcol[i];
            }
        }
        x
    }
}

pub(crate) fn solve_block(block: &Block<'_>, tol: &Tolerances) -> BlockSolution {
    let n = block.n;
    let mi = block.ineq_rhs.len();
    let me = block.eq_rhs.len();
    let m = mi + me;
    debug_assert_eq!(block.ineq.len(), mi * n);
    debug_assert_eq!(block.eq.len(), me * n);

    // Column layout: structural | slacks (one per ineq row) | artificials.
    let mut art_rows: Vec<usize> = Vec::new();
    for (i, &bi) in block.ineq_rhs.iter().enumerate() {
        if bi < 0.0 {
            art_rows.push(i);
        }
    }
    for e in 0..me {
        art_rows.push(mi + e);
    }
    let n_art = art_rows.len();
    let k_total = n + mi + n_art;

    let mut kind = Vec::with_capacity(k_total);
    kind.extend(std::iter::repeat(Kind::Structural).take(n));
    kind.extend(std::iter::repeat(Kind::Slack).take(mi));
    kind.extend(std::iter::repeat(Kind::Artificial).take(n_art));

    // Assemble the augmented matrix row-major.
    let mut a_full = vec![0.0; m * k_total];
    let mut b = vec![0.0; m];
    for i in 0..mi {
        a_full[i * k_total..i * k_total + n].copy_from_slice(&block.ineq[i * n..(i + 1) * n]);
        a_full[i * k_total + n + i] = 1.0;
        b[i] = block.ineq_rhs[i];
    }
    for e in 0..me {
        let i = mi + e;
        a_full[i * k_total..i * k_total + n].copy_from_slice(&block.eq[e * n..(e + 1) * n]);
        b[i] = block.eq_rhs[e];
    }
    for (a, &row) in art_rows.iter().enumerate() {
        let sign = if b[row] >= 0.0 { 1.0 } else { -1.0 };
        a_full[row * k_total + n + mi + a] = sign;
    }

    // Initial basis: slack where the zero start is feasible, artificial
    // elsewhere. The basis matrix is diagonal ±1, so the initial tableau is
    // the (sign-flipped) augmented matrix itself.
    let mut basic_col = vec![usize::MAX; m];
    for i in 0..mi {
        basic_col[i] = if block.ineq_rhs[i] >= 0.0 {
            n + i
        } else {
            usize::MAX
        };
    }
    for (a, &row) in art_rows.iter().enumerate() {
        basic_col[row] = n + mi + a;
    }
    let mut basic_in = vec![usize::MAX; k_total];
    let mut tab = a_full.clone();
    let mut bcol = b.clone();
    for i in 0..m {
        let c = basic_col[i];
        debug_assert_ne!(c, usize::MAX);
        basic_in[c] = i;
        if bcol[i] < 0.0 {
            // Row held by a negative-signed artificial.
            for v in tab[i * k_total..(i + 1) * k_total].iter_mut() {
                *v = -*v;
            }
            bcol[i] = -bcol[i];
        }
    }

    let mut eng = Engine {
        m,
        n,
        k_total,
        k_active: k_total,
        kind,
        basic_in,
        basic_col,
        tab,
        bcol,
        red: vec![0.0; k_total],
        a_full,
        b,
        pivots: 0,
        bland_after: 50 * (m + k_total) + 1000,
    };

    let bscale = eng.b.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    let feas_tol = tol.tol_feas * (1.0 + bscale);

    // Phase 1 only when some artificial starts at a nonzero value.
    let needs_phase1 = (0..m).any(|i| {
        eng.kind[eng.basic_col[i]] == Kind::Artificial && eng.bcol[i] > feas_tol
    });
    if needs_phase1 {
        let mut phase1_cost = vec![0.0; k_total];
        for j in n + mi..k_total {
            phase1_cost[j] = 1.0;
        }
        if !eng.optimize(&phase1_cost, true) {
            return BlockSolution {
                status: BlockStatus::Infeasible,
                x: vec![0.0; n],
            };
        }
        let infeasibility: f64 = (0..m)
            .filter(|&i| eng.kind[eng.basic_col[i]] == Kind::Artificial)
            .map(|i| eng.bcol[i].max(0.0))
            .sum();
        if infeasibility > feas_tol {
            return BlockSolution {
                status: BlockStatus::Infeasible,
                x: vec![0.0; n],
            };
        }
    }

    // Phase 2: artificial columns are dead weight from here on.
    eng.k_active = n + mi;
    let mut cost2 = vec![0.0; k_total];
    cost2[..n].copy_from_slice(block.cost);
    if !eng.optimize(&cost2, false) {
        return BlockSolution {
            status: BlockStatus::Unbounded,
            x: vec![0.0; n],
        };
    }
    eng.purify();
    let x = eng.extract();
    BlockSolution {
        status: BlockStatus::Optimal,
        x,
    }
}
