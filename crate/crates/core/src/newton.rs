//! Identification of the virtual-battery parameters from a residual target:
//! grid initialization, then Newton iterations that linearize the response
//! through the binding rows of the fleet LP and refit by least squares.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{least_squares, select_independent_rows, solve_square, Tolerances};
use crate::physics::{tcl_g_series, TclParams};
use crate::series::{ScenarioData, TimeSeries};
use crate::surrogate::{vb_response_with, VbAssembly, VbResponse, VbTheta};

/// Settings of the inner identification loop.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct InverseConfig {
    /// Iteration cap K.
    pub max_iter: usize,
    /// Loss-stagnation tolerance ε, relative to ‖target‖₂.
    pub loss_tol: f64,
    pub grid_points_per_dim: usize,
    pub damping_enabled: bool,
    pub tol: Tolerances,
}

impl Default for InverseConfig {
    fn default() -> Self {
        InverseConfig {
            max_iter: 30,
            loss_tol: 1e-6,
            grid_points_per_dim: 4,
            damping_enabled: true,
            tol: Tolerances::default(),
        }
    }
}

impl InverseConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iter == 0 {
            return Err(Error::NotPositive {
                context: "max_iter".into(),
                value: 0.0,
            });
        }
        if !(self.loss_tol > 0.0) {
            return Err(Error::NotPositive {
                context: "loss_tol".into(),
                value: self.loss_tol,
            });
        }
        if self.grid_points_per_dim == 0 {
            return Err(Error::NotPositive {
                context: "grid_points_per_dim".into(),
                value: 0.0,
            });
        }
        self.tol.validate()
    }
}

/// One recorded iterate of the inner loop.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NewtonIteration {
    pub theta: VbTheta,
    pub loss: f64,
    pub binding_count: usize,
    pub degenerate: bool,
    /// Step accepted only after backtracking.
    pub damped: bool,
    /// Rejected steps are recorded but do not advance the iterate.
    pub accepted: bool,
}

/// Iteration history of one identification run.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct NewtonTrace {
    pub iterations: Vec<NewtonIteration>,
}

impl NewtonTrace {
    /// Losses of accepted iterates, in order.
    pub fn accepted_losses(&self) -> Vec<f64> {
        self.iterations
            .iter()
            .filter(|it| it.accepted)
            .map(|it| it.loss)
            .collect()
    }
}

/// Residual the storage-like component must explain:
/// total load minus the PV, TCL, and periodic estimates.
pub fn esl_target(
    scenario: &ScenarioData,
    lambda_pv: f64,
    lambda_tcl: f64,
    pl: &TimeSeries,
    tcl_params: &TclParams,
) -> Result<TimeSeries> {
    let t = scenario.len();
    if pl.len() != t {
        return Err(Error::DimensionMismatch {
            context: "periodic-load length vs scenario".into(),
            expected: t,
            got: pl.len(),
        });
    }
    let g = tcl_g_series(tcl_params, &scenario.temperature)?;
    let mut out = Vec::with_capacity(t);
    for k in 0..t {
        out.push(
            scenario.total_load.values()[k]
                - lambda_pv * scenario.irradiance.values()[k]
                - lambda_tcl * g.values()[k]
                - pl.values()[k],
        );
    }
    TimeSeries::new(out, crate::series::Unit::MegaWatt, scenario.period())
}

fn loss(response: &VbResponse, target: &TimeSeries) -> f64 {
    response
        .esl_total
        .values()
        .iter()
        .zip(target.values())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

/// Coarse lattice search for a starting parameter vector.
///
/// Candidate magnitudes are tied to the target: power fractions of
/// `max |target|` and energy fractions of `max |target| · D / 4`, with the
/// batteries spread ±10% from each other so they do not start identical.
/// Each energy level is tried both with a symmetric lower bound and with a
/// floor at zero; the latter matches fleets that charge before discharging
/// within each day and keeps the search away from net sell-off schedules.
pub fn grid_init(
    target: &TimeSeries,
    price: &TimeSeries,
    n_batteries: usize,
    cfg: &InverseConfig,
) -> Result<VbTheta> {
    cfg.validate()?;
    if n_batteries == 0 {
        return Err(Error::NotPositive {
            context: "battery count".into(),
            value: 0.0,
        });
    }
    let g = cfg.grid_points_per_dim;
    let p_scale = target.values().iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    let e_scale = p_scale * target.period() as f64 / 4.0;
    let p_fracs: Vec<f64> = if g == 1 {
        vec![1.0]
    } else {
        (0..g).map(|i| i as f64 / (g - 1) as f64).collect()
    };
    let e_fracs: Vec<f64> = (0..g).map(|i| 0.5f64.powi((g - 1 - i) as i32)).collect();
    let spread = |n: usize| -> f64 {
        if n_batteries == 1 {
            1.0
        } else {
            1.0 + 0.1 * (2.0 * n as f64 / (n_batteries - 1) as f64 - 1.0)
        }
    };
    let lower_fracs: &[f64] = if g == 1 { &[-1.0] } else { &[-1.0, 0.0] };
    let mut candidates = Vec::with_capacity(2 * p_fracs.len() * e_fracs.len());
    for &pf in &p_fracs {
        for &ef in &e_fracs {
            for &lower_frac in lower_fracs {
                let mut v = Vec::with_capacity(3 * n_batteries);
                for n in 0..n_batteries {
                    let f = spread(n);
                    let e = ef * e_scale * f;
                    v.extend_from_slice(&[pf * p_scale * f, e, lower_frac * e]);
                }
                candidates.push(VbTheta::new(v)?);
                if pf == 0.0 {
                    break; // zero power ignores the energy sign
                }
            }
        }
    }
    let asm = VbAssembly::new(n_batteries, price.len());
    let losses: Result<Vec<f64>> = candidates
        .par_iter()
        .map(|theta| {
            let resp = vb_response_with(&asm, theta, price, &cfg.tol)?;
            Ok(loss(&resp, target))
        })
        .collect();
    let losses = losses?;
    let mut best = 0;
    for (i, &l) in losses.iter().enumerate() {
        if l < losses[best] {
            best = i;
        }
    }
    Ok(candidates.swap_remove(best))
}

/// Output of one Newton update.
#[derive(Clone, Debug)]
pub struct NewtonStep {
    pub theta_next: VbTheta,
    /// Sensitivity of the total response to θ inside the current critical
    /// region, `T x 3N`.
    pub sensitivity: DMatrix<f64>,
    /// Binding system was not a clean square invertible system.
    pub degenerate: bool,
    /// The least-squares normal matrix was rank-deficient.
    pub rank_deficient: bool,
}

/// One Newton update from `theta_k`: solve the LP, linearize through the
/// binding rows, refit θ by least squares, and project onto the feasible set.
pub fn newton_step(
    theta_k: &VbTheta,
    target: &TimeSeries,
    price: &TimeSeries,
    tol: &Tolerances,
) -> Result<NewtonStep> {
    let asm = VbAssembly::new(theta_k.n_batteries(), price.len());
    let resp = vb_response_with(&asm, theta_k, price, tol)?;
    newton_step_with(&asm, theta_k, &resp, target, tol)
}

fn newton_step_with(
    asm: &VbAssembly,
    theta_k: &VbTheta,
    resp: &VbResponse,
    target: &TimeSeries,
    tol: &Tolerances,
) -> Result<NewtonStep> {
    let t = asm.horizon;
    let nv = asm.n_vars();
    let n_theta = 3 * asm.n_batteries;
    let q = t + resp.binding_ineq.len();

    // Stack the coupling equalities on top of the binding inequality rows;
    // the right-hand side is linear in θ (zero for the equalities).
    let mut m = DMatrix::zeros(q, nv);
    let mut rhs = DMatrix::zeros(q, n_theta);
    m.view_mut((0, 0), (t, nv)).copy_from(&asm.eq_lhs);
    for (row, &i) in resp.binding_ineq.iter().enumerate() {
        m.row_mut(t + row).copy_from(&asm.ineq_lhs.row(i));
        for j in 0..n_theta {
            rhs[(t + row, j)] = -asm.c_theta[(i, j)];
        }
    }

    let mut degenerate = resp.degenerate || q != nv;
    let solution = if q == nv {
        let out = solve_square(&m, &rhs, tol.tol_rank);
        degenerate |= out.rank_deficient;
        out.x
    } else {
        let keep = select_independent_rows(&m, t, tol.tol_rank);
        let ms = DMatrix::from_fn(keep.len(), nv, |r, c| m[(keep[r], c)]);
        let rs = DMatrix::from_fn(keep.len(), n_theta, |r, c| rhs[(keep[r], c)]);
        if keep.len() == nv {
            let out = solve_square(&ms, &rs, tol.tol_rank);
            degenerate |= out.rank_deficient;
            out.x
        } else {
            degenerate = true;
            let svd = ms.clone().svd(true, true);
            let smax = svd.singular_values.max().max(1e-300);
            svd.solve(&rs, tol.tol_rank * smax)
                .unwrap_or_else(|_| DMatrix::zeros(nv, n_theta))
        }
    };

    let sensitivity = solution.rows(0, t).into_owned();
    let target_vec = DVector::from_column_slice(target.values());
    let ls = least_squares(&sensitivity, &target_vec, tol.tol_rank);
    let raw: Vec<f64> = if !ls.rank_deficient {
        ls.x.column(0).iter().copied().collect()
    } else {
        // Under rank deficiency the direct minimum-norm fit collapses every
        // unidentified component to zero. Refit in increment form instead so
        // components the binding set does not constrain keep their values;
        // the two forms coincide at full column rank.
        let residual = &target_vec - &sensitivity * theta_k.to_vector();
        let inc = least_squares(&sensitivity, &residual, tol.tol_rank);
        theta_k
            .as_slice()
            .iter()
            .zip(inc.x.column(0).iter())
            .map(|(tk, dx)| tk + dx)
            .collect()
    };
    Ok(NewtonStep {
        theta_next: VbTheta::projected(raw)?,
        sensitivity,
        degenerate,
        rank_deficient: ls.rank_deficient,
    })
}

/// Full inner loop: grid initialization followed by damped Newton iterations.
/// Returns the best-loss iterate, its response, and the iteration trace.
pub fn identify_esl(
    target: &TimeSeries,
    price: &TimeSeries,
    n_batteries: usize,
    cfg: &InverseConfig,
) -> Result<(VbTheta, VbResponse, NewtonTrace)> {
    cfg.validate()?;
    let t = price.len();
    if target.len() != t {
        return Err(Error::DimensionMismatch {
            context: "target length vs price".into(),
            expected: t,
            got: target.len(),
        });
    }
    if t < 3 * n_batteries {
        return Err(Error::DimensionMismatch {
            context: "horizon must cover 3N parameters".into(),
            expected: 3 * n_batteries,
            got: t,
        });
    }

    let asm = VbAssembly::new(n_batteries, t);
    let target_norm = target.values().iter().map(|v| v * v).sum::<f64>().sqrt();
    let eps = cfg.loss_tol * target_norm;

    let theta0 = grid_init(target, price, n_batteries, cfg)?;
    let resp0 = vb_response_with(&asm, &theta0, price, &cfg.tol)?;
    let loss0 = loss(&resp0, target);
    let mut trace = NewtonTrace::default();
    trace.iterations.push(NewtonIteration {
        theta: theta0.clone(),
        loss: loss0,
        binding_count: resp0.binding_ineq.len(),
        degenerate: resp0.degenerate,
        damped: false,
        accepted: true,
    });

    let mut cur_theta = theta0.clone();
    let mut cur_resp = resp0.clone();
    let mut cur_loss = loss0;
    let mut best = (theta0, resp0, loss0);

    for _ in 0..cfg.max_iter {
        let step = newton_step_with(&asm, &cur_theta, &cur_resp, target, &cfg.tol)?;
        let mut cand_theta = step.theta_next;
        let mut cand_resp = vb_response_with(&asm, &cand_theta, price, &cfg.tol)?;
        let mut cand_loss = loss(&cand_resp, target);
        let mut damped = false;
        let mut accepted = cand_loss <= cur_loss;

        if !accepted && cfg.damping_enabled {
            let full: Vec<f64> = cand_theta.as_slice().to_vec();
            let base: Vec<f64> = cur_theta.as_slice().to_vec();
            let mut eta = 0.5;
            for _ in 0..10 {
                let blended: Vec<f64> = base
                    .iter()
                    .zip(&full)
                    .map(|(b, f)| b + eta * (f - b))
                    .collect();
                let theta_eta = VbTheta::projected(blended)?;
                let resp_eta = vb_response_with(&asm, &theta_eta, price, &cfg.tol)?;
                let loss_eta = loss(&resp_eta, target);
                if loss_eta <= cur_loss {
                    cand_theta = theta_eta;
                    cand_resp = resp_eta;
                    cand_loss = loss_eta;
                    damped = true;
                    accepted = true;
                    break;
                }
                eta *= 0.5;
            }
        }

        trace.iterations.push(NewtonIteration {
            theta: cand_theta.clone(),
            loss: cand_loss,
            binding_count: cand_resp.binding_ineq.len(),
            degenerate: cand_resp.degenerate || step.degenerate,
            damped,
            accepted,
        });

        if !accepted {
            break;
        }
        let delta = (cand_loss - cur_loss).abs();
        cur_theta = cand_theta;
        cur_resp = cand_resp;
        cur_loss = cand_loss;
        if cur_loss < best.2 {
            best = (cur_theta.clone(), cur_resp.clone(), cur_loss);
        }
        if delta <= eps {
            break;
        }
    }

    let (theta, resp, _) = best;
    Ok((theta, resp, trace))
}
