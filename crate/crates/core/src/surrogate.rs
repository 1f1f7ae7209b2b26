//! Virtual-battery fleet surrogate: parameter vector, LP assembly, and the
//! optimal response to a price series.
//!
//! Variables are ordered `(P_esl ∈ R^T, P_vb ∈ R^(N·T))` with the per-battery
//! trajectories flattened battery-major. Inequality rows come in four blocks
//! of `T` per battery: power upper, power lower, energy upper, energy lower.
//! The right-hand side is linear in θ (`rhs = −C·θ`), which is what the
//! inverse-optimization sensitivity step differentiates.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Tolerances;
use crate::lp::{solve_lp, LinearProgram, LpStatus};
use crate::series::{TimeSeries, Unit};

/// Surrogate parameters: `(p_bar, e_bar, e_lower)` per battery, flattened.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VbTheta {
    values: Vec<f64>,
}

impl VbTheta {
    /// Validates `p_bar ≥ 0` and `e_lower ≤ 0 ≤ e_bar` per battery.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() || values.len() % 3 != 0 {
            return Err(Error::DimensionMismatch {
                context: "theta length must be a positive multiple of 3".into(),
                expected: 3,
                got: values.len(),
            });
        }
        if let Some((i, &v)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite { index: i, value: v });
        }
        for (n, chunk) in values.chunks_exact(3).enumerate() {
            let (p, eu, el) = (chunk[0], chunk[1], chunk[2]);
            if p < 0.0 {
                return Err(Error::NotPositive {
                    context: format!("p_bar of battery {n}"),
                    value: p,
                });
            }
            if eu < 0.0 {
                return Err(Error::NotPositive {
                    context: format!("e_bar of battery {n}"),
                    value: eu,
                });
            }
            if el > 0.0 {
                return Err(Error::NotPositive {
                    context: format!("-e_lower of battery {n}"),
                    value: -el,
                });
            }
        }
        Ok(VbTheta { values })
    }

    /// Clamps a raw parameter vector onto the feasible set, then validates.
    pub fn projected(mut raw: Vec<f64>) -> Result<Self> {
        for chunk in raw.chunks_exact_mut(3) {
            chunk[0] = chunk[0].max(0.0);
            chunk[1] = chunk[1].max(0.0);
            chunk[2] = chunk[2].min(0.0);
        }
        VbTheta::new(raw)
    }

    pub fn from_batteries(batteries: &[(f64, f64, f64)]) -> Result<Self> {
        let mut v = Vec::with_capacity(batteries.len() * 3);
        for &(p, eu, el) in batteries {
            v.extend_from_slice(&[p, eu, el]);
        }
        VbTheta::new(v)
    }

    pub fn n_batteries(&self) -> usize {
        self.values.len() / 3
    }

    pub fn p_bar(&self, n: usize) -> f64 {
        self.values[3 * n]
    }

    pub fn e_bar(&self, n: usize) -> f64 {
        self.values[3 * n + 1]
    }

    pub fn e_lower(&self, n: usize) -> f64 {
        self.values[3 * n + 2]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn to_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.values)
    }
}

/// Fixed LP structure for a given battery count and horizon.
///
/// Only the inequality right-hand side depends on θ and only the cost depends
/// on the price, so one assembly serves every solve in an identification run.
#[derive(Clone, Debug)]
pub struct VbAssembly {
    pub n_batteries: usize,
    pub horizon: usize,
    /// Full inequality matrix over `(P_esl, P_vb)`; the `P_esl` block is zero.
    pub ineq_lhs: DMatrix<f64>,
    /// θ coefficients; inequality rows read `…·x + C·θ ≤ 0`, so `rhs = −C·θ`.
    pub c_theta: DMatrix<f64>,
    /// Coupling rows `P_esl − Σ_n P_vb_n = 0`.
    pub eq_lhs: DMatrix<f64>,
}

impl VbAssembly {
    pub fn new(n_batteries: usize, horizon: usize) -> Self {
        let (nb, t) = (n_batteries, horizon);
        let n_vars = t + nb * t;
        let mi = 4 * nb * t;
        let mut ineq = DMatrix::zeros(mi, n_vars);
        let mut c = DMatrix::zeros(mi, 3 * nb);
        for n in 0..nb {
            let base = 4 * n * t;
            let col0 = t + n * t;
            for k in 0..t {
                // Power upper / lower: ±P ≤ p_bar.
                ineq[(base + k, col0 + k)] = 1.0;
                c[(base + k, 3 * n)] = -1.0;
                ineq[(base + t + k, col0 + k)] = -1.0;
                c[(base + t + k, 3 * n)] = -1.0;
                // Energy: cumulative sums against e_bar and e_lower.
                for s in 0..=k {
                    ineq[(base + 2 * t + k, col0 + s)] = 1.0;
                    ineq[(base + 3 * t + k, col0 + s)] = -1.0;
                }
                c[(base + 2 * t + k, 3 * n + 1)] = -1.0;
                c[(base + 3 * t + k, 3 * n + 2)] = 1.0;
            }
        }
        let mut eq = DMatrix::zeros(t, n_vars);
        for k in 0..t {
            eq[(k, k)] = 1.0;
            for n in 0..nb {
                eq[(k, t + n * t + k)] = -1.0;
            }
        }
        VbAssembly {
            n_batteries: nb,
            horizon: t,
            ineq_lhs: ineq,
            c_theta: c,
            eq_lhs: eq,
        }
    }

    pub fn n_vars(&self) -> usize {
        self.horizon + self.n_batteries * self.horizon
    }

    /// Coefficients of `P_esl` in the inequality rows (the zero block).
    pub fn a_esl(&self) -> nalgebra::DMatrixView<'_, f64> {
        self.ineq_lhs.columns(0, self.horizon)
    }

    /// Coefficients of `P_vb` in the inequality rows.
    pub fn b_vb(&self) -> nalgebra::DMatrixView<'_, f64> {
        self.ineq_lhs
            .columns(self.horizon, self.n_batteries * self.horizon)
    }

    /// The θ-to-rhs map.
    pub fn ineq_rhs(&self, theta: &VbTheta) -> DVector<f64> {
        -(&self.c_theta * theta.to_vector())
    }

    pub fn linear_program(&self, theta: &VbTheta, price: &TimeSeries) -> Result<LinearProgram> {
        if theta.n_batteries() != self.n_batteries {
            return Err(Error::DimensionMismatch {
                context: "theta batteries vs assembly".into(),
                expected: self.n_batteries,
                got: theta.n_batteries(),
            });
        }
        if price.len() != self.horizon {
            return Err(Error::DimensionMismatch {
                context: "price length vs assembly horizon".into(),
                expected: self.horizon,
                got: price.len(),
            });
        }
        let mut cost = DVector::zeros(self.n_vars());
        for (k, &pi) in price.values().iter().enumerate() {
            cost[k] = pi;
        }
        LinearProgram::new(
            cost,
            self.ineq_lhs.clone(),
            self.ineq_rhs(theta),
            self.eq_lhs.clone(),
            DVector::zeros(self.horizon),
        )
    }
}

/// Builds the parametric LP for `theta` at `price`.
pub fn assemble_lp(theta: &VbTheta, price: &TimeSeries) -> Result<(LinearProgram, VbAssembly)> {
    let asm = VbAssembly::new(theta.n_batteries(), price.len());
    let lp = asm.linear_program(theta, price)?;
    Ok((lp, asm))
}

/// Optimal fleet response to a price series.
#[derive(Clone, Debug)]
pub struct VbResponse {
    pub esl_total: TimeSeries,
    /// Per-battery trajectories, `N x T`.
    pub per_battery: DMatrix<f64>,
    pub binding_ineq: Vec<usize>,
    pub degenerate: bool,
    /// Optimal value `π·P_esl`; never positive since zero is feasible.
    pub objective: f64,
}

pub fn vb_response(theta: &VbTheta, price: &TimeSeries, tol: &Tolerances) -> Result<VbResponse> {
    let asm = VbAssembly::new(theta.n_batteries(), price.len());
    vb_response_with(&asm, theta, price, tol)
}

/// Same as [`vb_response`] but reuses a prebuilt assembly.
pub fn vb_response_with(
    asm: &VbAssembly,
    theta: &VbTheta,
    price: &TimeSeries,
    tol: &Tolerances,
) -> Result<VbResponse> {
    let lp = asm.linear_program(theta, price)?;
    let sol = solve_lp(&lp, tol)?;
    match sol.status {
        LpStatus::Infeasible => return Err(Error::Infeasible),
        LpStatus::Unbounded => return Err(Error::Unbounded),
        _ => {}
    }
    let t = asm.horizon;
    let nb = asm.n_batteries;
    let per_battery = DMatrix::from_fn(nb, t, |n, k| sol.x_opt[t + n * t + k]);
    // Publish the coupling equality exactly: the total is the column sum.
    let totals: Vec<f64> = (0..t).map(|k| per_battery.column(k).sum()).collect();
    let esl_total = TimeSeries::new(totals, Unit::MegaWatt, price.period())?;
    let objective = price
        .values()
        .iter()
        .zip(esl_total.values())
        .map(|(pi, p)| pi * p)
        .sum();
    Ok(VbResponse {
        esl_total,
        per_battery,
        binding_ineq: sol.binding_ineq,
        degenerate: sol.status == LpStatus::Degenerate,
        objective,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn price(values: &[f64]) -> TimeSeries {
        TimeSeries::new(values.to_vec(), Unit::DollarPerMwh, values.len()).unwrap()
    }

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    #[test]
    fn counting_structure() {
        let theta = VbTheta::new(vec![1.0, 1.0, -1.0]).unwrap();
        let p = price(&[1.0, -1.0]);
        let (lp, asm) = assemble_lp(&theta, &p).unwrap();
        assert_eq!(lp.eq_lhs.nrows(), 2);
        assert_eq!(lp.ineq_lhs.nrows(), 8);
        assert_eq!(lp.n_vars(), 4);
        assert!(asm.a_esl().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn c_rows_have_one_nonzero_each() {
        let asm = VbAssembly::new(2, 3);
        for i in 0..asm.c_theta.nrows() {
            let nnz = asm.c_theta.row(i).iter().filter(|&&v| v != 0.0).count();
            assert_eq!(nnz, 1, "row {i}");
        }
    }

    #[test]
    fn rhs_scales_with_theta() {
        let asm = VbAssembly::new(1, 2);
        let theta = VbTheta::new(vec![1.0, 2.0, -0.5]).unwrap();
        let scaled = VbTheta::new(vec![3.0, 6.0, -1.5]).unwrap();
        let r1 = asm.ineq_rhs(&theta);
        let r3 = asm.ineq_rhs(&scaled);
        for (a, b) in r1.iter().zip(r3.iter()) {
            assert!((3.0 * a - b).abs() < 1e-12);
        }
    }

    fn c_triplets(asm: &VbAssembly) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for i in 0..asm.c_theta.nrows() {
            for j in 0..asm.c_theta.ncols() {
                if asm.c_theta[(i, j)] != 0.0 {
                    out.push((i, j, asm.c_theta[(i, j)]));
                }
            }
        }
        out
    }

    #[test]
    fn structure_round_trips_through_serialization() {
        let asm = VbAssembly::new(2, 4);
        let encoded = serde_json::to_string(&(
            asm.n_batteries,
            asm.horizon,
            asm.ineq_lhs.nrows(),
            asm.n_vars(),
            c_triplets(&asm),
        ))
        .unwrap();
        let (nb, t, mi, nv, trips): (usize, usize, usize, usize, Vec<(usize, usize, f64)>) =
            serde_json::from_str(&encoded).unwrap();
        let rebuilt = VbAssembly::new(nb, t);
        assert_eq!(rebuilt.ineq_lhs.nrows(), mi);
        assert_eq!(rebuilt.n_vars(), nv);
        assert_eq!(trips, c_triplets(&rebuilt));
    }

    #[test]
    fn zero_capacity_means_zero_response() {
        let theta = VbTheta::new(vec![0.0, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        let p = price(&[5.0, -3.0, 2.0, 7.0]);
        let r = vb_response(&theta, &p, &tol()).unwrap();
        assert!(r.esl_total.values().iter().all(|&v| v.abs() < 1e-10));
    }

    #[test]
    fn two_period_arbitrage_vertex() {
        let theta = VbTheta::new(vec![1.0, 1.0, -1.0]).unwrap();
        let p = price(&[1.0, -1.0]);
        let r = vb_response(&theta, &p, &tol()).unwrap();
        assert!((r.esl_total.values()[0] + 1.0).abs() < 1e-9);
        assert!((r.esl_total.values()[1] - 1.0).abs() < 1e-9);
        assert!((r.objective + 2.0).abs() < 1e-9);
    }

    #[test]
    fn nonnegative_energy_with_flat_price_stays_idle() {
        // e_lower = 0 forbids net discharge at any prefix; with a flat positive
        // price any charging only adds cost, so the optimum is zero.
        let theta = VbTheta::new(vec![2.0, 3.0, 0.0]).unwrap();
        let p = price(&[4.0, 4.0, 4.0]);
        let r = vb_response(&theta, &p, &tol()).unwrap();
        assert!(r.esl_total.values().iter().all(|&v| v.abs() < 1e-9));
        assert!(r.objective.abs() < 1e-9);
    }

    #[test]
    fn objective_never_positive() {
        let mut rng = StdRng::seed_from_u64(99);
        for _ in 0..25 {
            let nb = rng.gen_range(1..3usize);
            let t = rng.gen_range(2..6usize);
            let mut thetav = Vec::new();
            for _ in 0..nb {
                let pb: f64 = rng.gen_range(0.0..3.0);
                let eu: f64 = rng.gen_range(0.0..4.0);
                let el: f64 = -rng.gen_range(0.0..4.0);
                thetav.extend_from_slice(&[pb, eu, el]);
            }
            let theta = VbTheta::new(thetav).unwrap();
            let vals: Vec<f64> = (0..t).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let p = price(&vals);
            let r = vb_response(&theta, &p, &tol()).unwrap();
            assert!(r.objective <= 1e-9, "objective {}", r.objective);
        }
    }

    #[test]
    fn monotone_capacity() {
        let mut rng = StdRng::seed_from_u64(13);
        for _ in 0..15 {
            let t = rng.gen_range(2..6usize);
            let vals: Vec<f64> = (0..t).map(|_| rng.gen_range(-4.0..4.0)).collect();
            let p = price(&vals);
            let small = VbTheta::new(vec![1.0, 1.5, -0.5]).unwrap();
            let big = VbTheta::new(vec![2.0, 3.0, -2.0]).unwrap();
            let rs = vb_response(&small, &p, &tol()).unwrap();
            let rb = vb_response(&big, &p, &tol()).unwrap();
            assert!(rb.objective <= rs.objective + 1e-9);
        }
    }

    #[test]
    fn binding_set_stable_inside_critical_region() {
        let theta = VbTheta::new(vec![1.3, 2.1, -1.7]).unwrap();
        let p = price(&[3.0, 1.0, 4.0, 2.0]);
        let base = vb_response(&theta, &p, &tol()).unwrap();
        for k in 0..3 {
            for sign in [-1.0, 1.0] {
                let mut v = theta.as_slice().to_vec();
                v[k] += sign * 1e-9;
                let pert = VbTheta::new(v).unwrap();
                let r = vb_response(&pert, &p, &tol()).unwrap();
                assert_eq!(r.binding_ineq, base.binding_ineq, "component {k}");
            }
        }
    }

    #[test]
    fn totals_equal_column_sums() {
        let theta = VbTheta::new(vec![1.0, 2.0, -1.0, 0.5, 1.0, -0.25]).unwrap();
        let p = price(&[2.0, -1.0, 3.0, 0.5, 1.5]);
        let r = vb_response(&theta, &p, &tol()).unwrap();
        for (k, &v) in r.esl_total.values().iter().enumerate() {
            let s: f64 = r.per_battery.column(k).sum();
            assert_eq!(v, s);
        }
    }

    #[test]
    fn theta_projection_clamps() {
        let t = VbTheta::projected(vec![-1.0, -2.0, 3.0]).unwrap();
        assert_eq!(t.as_slice(), &[0.0, 0.0, 0.0]);
    }
}
