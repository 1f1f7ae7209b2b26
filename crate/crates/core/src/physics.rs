//! Forward models for the PV, TCL, and price-responsive storage components.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Tolerances;
use crate::lp::{solve_lp, LinearProgram};
use crate::series::{TimeSeries, Unit};

/// Coefficients of the temperature-to-power map for thermostatic load.
///
/// Electric power is affine in compressor frequency while thermal output is
/// quadratic in it; under a constant indoor setpoint this collapses to a
/// closed-form function of the outdoor temperature (the negative root branch
/// is the physical one). `c_th` is kept for completeness but unused in the
/// steady-state reduction.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct TclParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub e: f64,
    /// Thermal resistance, °C/MW.
    pub r: f64,
    /// Thermal capacitance; unused under the steady-state assumption.
    pub c_th: f64,
    /// Indoor setpoint, °C.
    pub tau_in: f64,
}

impl Default for TclParams {
    /// Benchmark defaults: g rises smoothly from 0 at the setpoint to 5 MW at
    /// a 25 °C gap, valid over τ ∈ [−3 °C, 47 °C].
    fn default() -> Self {
        TclParams {
            a: 1.0,
            b: 5.0,
            c: -1.0,
            d: 0.0,
            e: 25.0,
            r: 1.0,
            c_th: 2.0,
            tau_in: 22.0,
        }
    }
}

impl TclParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.c < 0.0) {
            return Err(Error::NotPositive {
                context: "-c (TCL quadratic coefficient must be negative)".into(),
                value: -self.c,
            });
        }
        if !(self.r > 0.0) {
            return Err(Error::NotPositive {
                context: "thermal resistance R".into(),
                value: self.r,
            });
        }
        if self.disc_at_setpoint() < 0.0 {
            return Err(Error::NotPositive {
                context: "TCL discriminant at the setpoint (d² − 4ce)".into(),
                value: self.disc_at_setpoint(),
            });
        }
        Ok(())
    }

    fn disc_at_setpoint(&self) -> f64 {
        self.d * self.d - 4.0 * self.c * self.e
    }

    /// Largest temperature gap with a nonnegative discriminant.
    pub fn max_gap(&self) -> f64 {
        self.r * self.disc_at_setpoint() / (-4.0 * self.c)
    }

    /// Valid outdoor-temperature interval, computed once from the discriminant.
    pub fn valid_range(&self) -> (f64, f64) {
        let gap = self.max_gap();
        (self.tau_in - gap, self.tau_in + gap)
    }

    fn g_unchecked(&self, tau_out: f64) -> f64 {
        let gap = (tau_out - self.tau_in).abs();
        let disc = self.disc_at_setpoint() + 4.0 * self.c * gap / self.r;
        self.a * (self.d - disc.max(0.0).sqrt()) / (-2.0 * self.c) + self.b
    }
}

/// Steady-state TCL electric power at one outdoor temperature.
///
/// Errors when the discriminant is negative, i.e. the temperature is outside
/// the valid range; evaluation never clamps.
pub fn tcl_g(params: &TclParams, tau_out: f64) -> Result<f64> {
    tcl_g_at(params, tau_out, 0)
}

fn tcl_g_at(params: &TclParams, tau_out: f64, index: usize) -> Result<f64> {
    let (lo, hi) = params.valid_range();
    // Exact discriminant test; the range is just for the error message.
    let gap = (tau_out - params.tau_in).abs();
    let disc = params.disc_at_setpoint() + 4.0 * params.c * gap / params.r;
    if disc < 0.0 {
        return Err(Error::TemperatureOutOfRange {
            tau_out,
            index,
            lo,
            hi,
        });
    }
    Ok(params.g_unchecked(tau_out))
}

/// Applies `tcl_g` samplewise: `g(τ)` as a series (MW, before scaling).
pub fn tcl_g_series(params: &TclParams, temperature: &TimeSeries) -> Result<TimeSeries> {
    let mut out = Vec::with_capacity(temperature.len());
    for (i, &tau) in temperature.values().iter().enumerate() {
        out.push(tcl_g_at(params, tau, i)?);
    }
    TimeSeries::new(out, Unit::MegaWatt, temperature.period())
}

/// TCL component: capacity factor times `g(τ)`.
pub fn tcl_response(
    lambda_tcl: f64,
    params: &TclParams,
    temperature: &TimeSeries,
) -> Result<TimeSeries> {
    let g = tcl_g_series(params, temperature)?;
    g.map(|v| lambda_tcl * v)
}

/// PV component: capacity factor times irradiance, elementwise.
pub fn pv_response(lambda_pv: f64, irradiance: &TimeSeries) -> Result<TimeSeries> {
    let mut out = Vec::with_capacity(irradiance.len());
    for &g in irradiance.values() {
        out.push(lambda_pv * g);
    }
    TimeSeries::new(out, Unit::MegaWatt, irradiance.period())
}

/// One price-responsive storage device.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct EslDevice {
    /// Charge/discharge power limit, MW.
    pub p_max: f64,
    /// Upper energy bound relative to the start-of-horizon datum, MWh.
    pub e_max: f64,
    /// Lower energy bound, MWh (≤ 0).
    pub e_min: f64,
    /// Whether the net energy over each day must be zero.
    pub daily_cyclic: bool,
}

impl EslDevice {
    pub fn validate(&self) -> Result<()> {
        if self.p_max < 0.0 {
            return Err(Error::NotPositive {
                context: "device p_max".into(),
                value: self.p_max,
            });
        }
        if self.e_min > 0.0 || self.e_max < 0.0 {
            return Err(Error::InfeasibleDevice(format!(
                "energy bounds must straddle the zero datum, got [{}, {}]",
                self.e_min, self.e_max
            )));
        }
        Ok(())
    }
}

/// Cost-minimal net consumption schedule of one device against a price series.
///
/// Charging and discharging are separate nonnegative variables; the returned
/// series is their difference. Daily-cyclic devices decompose exactly by day
/// (the per-day zero-net constraint pins the state of charge to the datum at
/// every day boundary), so each day is dispatched as its own LP.
pub fn esl_device_dispatch(dev: &EslDevice, price: &TimeSeries) -> Result<TimeSeries> {
    dev.validate()?;
    let tol = Tolerances::default();
    if !dev.daily_cyclic {
        let net = dispatch_slice(dev, price.values(), false, &tol)?;
        return TimeSeries::new(net, Unit::MegaWatt, price.period());
    }
    let days = price.days()?;
    let d = price.period();
    let mut net = Vec::with_capacity(price.len());
    for m in 0..days {
        let day_prices = &price.values()[m * d..(m + 1) * d];
        net.extend(dispatch_slice(dev, day_prices, true, &tol)?);
    }
    TimeSeries::new(net, Unit::MegaWatt, price.period())
}

fn dispatch_slice(
    dev: &EslDevice,
    price: &[f64],
    cyclic: bool,
    tol: &Tolerances,
) -> Result<Vec<f64>> {
    let t = price.len();
    let n = 2 * t; // charge then discharge variables
    let mut cost = DVector::zeros(n);
    for k in 0..t {
        cost[k] = price[k];
        cost[t + k] = -price[k];
    }
    // Rows: ±P_c ≤ {p_max, 0}, ±P_d ≤ {p_max, 0}, then ±cumulative energy.
    let mi = 6 * t;
    let mut ineq = DMatrix::zeros(mi, n);
    let mut rhs = DVector::zeros(mi);
    for k in 0..t {
        ineq[(k, k)] = 1.0;
        rhs[k] = dev.p_max;
        ineq[(t + k, k)] = -1.0;
        ineq[(2 * t + k, t + k)] = 1.0;
        rhs[2 * t + k] = dev.p_max;
        ineq[(3 * t + k, t + k)] = -1.0;
        for s in 0..=k {
            ineq[(4 * t + k, s)] = 1.0;
            ineq[(4 * t + k, t + s)] = -1.0;
            ineq[(5 * t + k, s)] = -1.0;
            ineq[(5 * t + k, t + s)] = 1.0;
        }
        rhs[4 * t + k] = dev.e_max;
        rhs[5 * t + k] = -dev.e_min;
    }
    let (eq, eq_rhs) = if cyclic {
        let mut eq = DMatrix::zeros(1, n);
        for s in 0..t {
            eq[(0, s)] = 1.0;
            eq[(0, t + s)] = -1.0;
        }
        (eq, DVector::zeros(1))
    } else {
        (DMatrix::zeros(0, n), DVector::zeros(0))
    };
    let lp = LinearProgram::new(cost, ineq, rhs, eq, eq_rhs)?;
    let sol = solve_lp(&lp, tol)?;
    if !sol.status.is_solved() {
        return Err(Error::InfeasibleDevice(format!(
            "dispatch LP ended with status {:?}",
            sol.status
        )));
    }
    Ok((0..t).map(|k| sol.x_opt[k] - sol.x_opt[t + k]).collect())
}
