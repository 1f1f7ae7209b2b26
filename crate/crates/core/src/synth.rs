//! Ground-truth scenario generation and the sliding-window train/test split.
//!
//! Generated total load is the exact sum of a price-responsive device fleet,
//! PV and TCL components with known coefficients, and a daily profile with
//! optional Gaussian errors, so identification runs can be scored against
//! known components.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::edci::Exogenous;
use crate::error::{Error, Result};
use crate::physics::{esl_device_dispatch, pv_response, tcl_g_series, EslDevice, TclParams};
use crate::series::{periodic_extend, Decomposition, ScenarioData, TimeSeries, Unit};
use crate::surrogate::VbTheta;

/// Specification of one synthetic benchmark.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BenchSpec {
    pub n_devices: usize,
    /// Per-device charge/discharge limit, MW.
    pub device_p_max: f64,
    /// Per-device energy capacity range, MWh (treated as an energy unit).
    pub device_e_range: (f64, f64),
    pub lambda_pv_true: f64,
    pub lambda_tcl_true: f64,
    pub tcl_params: TclParams,
    /// One day of the periodic component, length D.
    pub pl_day_profile: Vec<f64>,
    /// Standard deviation of the Gaussian errors added to the periodic load.
    pub pl_noise_std: f64,
    pub seed: u64,
}

/// Work-hours double-hump profile around a base level (MW).
fn default_pl_profile(d: usize, base: f64) -> Vec<f64> {
    (0..d)
        .map(|h| {
            let x = h as f64 / d as f64 * 24.0;
            let morning = 0.22 * base * (-((x - 10.0) * (x - 10.0)) / 18.0).exp();
            let evening = 0.30 * base * (-((x - 19.0) * (x - 19.0)) / 10.0).exp();
            let night_dip = -0.12 * base * (-((x - 3.5) * (x - 3.5)) / 14.0).exp();
            base + morning + evening + night_dip
        })
        .collect()
}

impl BenchSpec {
    /// The 50-device heterogeneous fleet: 4 MW each, energy capacities drawn
    /// uniformly from 8–24 MWh, noisy periodic load.
    pub fn paper_mirror(d: usize, seed: u64) -> Self {
        BenchSpec {
            n_devices: 50,
            device_p_max: 4.0,
            device_e_range: (8.0, 24.0),
            lambda_pv_true: -0.10,
            lambda_tcl_true: 25.0,
            tcl_params: TclParams::default(),
            pl_day_profile: default_pl_profile(d, 330.0),
            pl_noise_std: 5.0,
            seed,
        }
    }

    /// A fleet the surrogate can represent exactly: `n` devices, no errors.
    pub fn representable(n: usize, d: usize, seed: u64) -> Self {
        BenchSpec {
            n_devices: n,
            device_p_max: 40.0,
            device_e_range: (120.0, 220.0),
            lambda_pv_true: -0.10,
            lambda_tcl_true: 25.0,
            tcl_params: TclParams::default(),
            pl_day_profile: default_pl_profile(d, 330.0),
            pl_noise_std: 0.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_devices == 0 {
            return Err(Error::NotPositive {
                context: "n_devices".into(),
                value: 0.0,
            });
        }
        if self.device_e_range.0 > self.device_e_range.1 {
            return Err(Error::config(
                "bench.energy_range",
                "lower bound exceeds upper bound",
            ));
        }
        if self.pl_noise_std < 0.0 {
            return Err(Error::NotPositive {
                context: "pl_noise_std".into(),
                value: self.pl_noise_std,
            });
        }
        if self.pl_day_profile.is_empty() {
            return Err(Error::config("bench.pl_day_profile", "must not be empty"));
        }
        self.tcl_params.validate()
    }
}

/// A generated scenario together with its true components and device fleet.
#[derive(Clone, Debug)]
pub struct GroundTruth {
    pub scenario: ScenarioData,
    pub components: Decomposition,
    pub devices: Vec<EslDevice>,
}

impl GroundTruth {
    /// Train/test views over whole days, with components sliced to match.
    pub fn slice_days(&self, start_day: usize, end_day: usize) -> Result<(ScenarioData, Decomposition)> {
        Ok((
            self.scenario.slice_days(start_day, end_day)?,
            self.components.slice_days(start_day, end_day)?,
        ))
    }
}

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller on open-interval uniforms.
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Builds the ground truth on the given exogenous series.
pub fn generate(spec: &BenchSpec, exo: &Exogenous) -> Result<GroundTruth> {
    spec.validate()?;
    let t = exo.price.len();
    let d = exo.price.period();
    if exo.irradiance.len() != t || exo.temperature.len() != t {
        return Err(Error::DimensionMismatch {
            context: "exogenous alignment".into(),
            expected: t,
            got: exo.irradiance.len().min(exo.temperature.len()),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let devices: Vec<EslDevice> = (0..spec.n_devices)
        .map(|_| {
            let e = if spec.device_e_range.0 == spec.device_e_range.1 {
                spec.device_e_range.0
            } else {
                rng.gen_range(spec.device_e_range.0..spec.device_e_range.1)
            };
            EslDevice {
                p_max: spec.device_p_max,
                e_max: e / 2.0,
                e_min: -e / 2.0,
                daily_cyclic: true,
            }
        })
        .collect();

    let dispatches: Result<Vec<TimeSeries>> = devices
        .par_iter()
        .map(|dev| esl_device_dispatch(dev, &exo.price))
        .collect();
    let dispatches = dispatches?;
    let mut esl_vals = vec![0.0; t];
    for series in &dispatches {
        for (acc, v) in esl_vals.iter_mut().zip(series.values()) {
            *acc += v;
        }
    }
    let esl = TimeSeries::new(esl_vals, Unit::MegaWatt, d)?;

    let pv = pv_response(spec.lambda_pv_true, &exo.irradiance)?;
    let tcl = tcl_g_series(&spec.tcl_params, &exo.temperature)?.map(|v| spec.lambda_tcl_true * v)?;

    if spec.pl_day_profile.len() != d {
        return Err(Error::DimensionMismatch {
            context: "pl_day_profile length vs period".into(),
            expected: d,
            got: spec.pl_day_profile.len(),
        });
    }
    let mut pl_vals = periodic_extend(&spec.pl_day_profile, t, Unit::MegaWatt)?
        .values()
        .to_vec();
    if spec.pl_noise_std > 0.0 {
        for v in pl_vals.iter_mut() {
            *v += spec.pl_noise_std * gauss(&mut rng);
        }
    }
    let pl = TimeSeries::new(pl_vals, Unit::MegaWatt, d)?;

    let total: Vec<f64> = (0..t)
        .map(|k| esl.values()[k] + pv.values()[k] + tcl.values()[k] + pl.values()[k])
        .collect();
    let scenario = ScenarioData::new(
        exo.price.clone(),
        exo.irradiance.clone(),
        exo.temperature.clone(),
        TimeSeries::new(total, Unit::MegaWatt, d)?,
    )?;

    let theta = VbTheta::from_batteries(
        &devices
            .iter()
            .map(|dv| (dv.p_max, dv.e_max, dv.e_min))
            .collect::<Vec<_>>(),
    )?;
    let components = Decomposition {
        esl,
        pv,
        tcl,
        pl,
        lambda_pv: spec.lambda_pv_true,
        lambda_tcl: spec.lambda_tcl_true,
        theta,
    };
    Ok(GroundTruth {
        scenario,
        components,
        devices,
    })
}

/// Deterministic exogenous series with realistic shapes: cheap nights with an
/// evening price peak, a midday irradiance bell with day-to-day cloudiness,
/// and a summer temperature swing.
pub fn synthetic_exogenous(days: usize, d: usize, seed: u64) -> Result<Exogenous> {
    let t = days * d;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let day_price_level: Vec<f64> = (0..days).map(|_| 3.0 * gauss(&mut rng)).collect();
    let day_cloud: Vec<f64> = (0..days).map(|_| rng.gen_range(0.55..1.0)).collect();
    let day_temp_off: Vec<f64> = (0..days).map(|_| (3.0 * gauss(&mut rng)).clamp(-8.0, 8.0)).collect();

    let mut price = Vec::with_capacity(t);
    let mut irr = Vec::with_capacity(t);
    let mut temp = Vec::with_capacity(t);
    for k in 0..t {
        let day = k / d;
        let hour = (k % d) as f64 / d as f64 * 24.0;
        // Day-ahead prices ramp from a cheap overnight trough at hour 0 to a
        // late-evening peak, then reset. Keeping each day monotone means
        // optimal storage cycles close within calendar days, and the noise is
        // kept small against the hour-to-hour ramp so the ordering survives.
        let ramp = (hour * std::f64::consts::PI / 47.0).sin();
        let p = 22.0 + 28.0 * ramp + day_price_level[day] + 0.6 * gauss(&mut rng);
        price.push(p.max(2.0));
        let sun = if (6.0..20.0).contains(&hour) {
            let s = ((hour - 6.0) * std::f64::consts::PI / 14.0).sin();
            850.0 * s * s * day_cloud[day]
        } else {
            0.0
        };
        irr.push(sun);
        temp.push(
            26.0 + 6.0 * ((hour - 15.0) * std::f64::consts::PI / 12.0).cos() + day_temp_off[day],
        );
    }
    Exogenous::new(
        TimeSeries::new(price, Unit::DollarPerMwh, d)?,
        TimeSeries::new(irr, Unit::WattPerSquareMeter, d)?,
        TimeSeries::new(temp, Unit::Celsius, d)?,
    )
}

/// Sliding windows with a one-day stride: window `i` trains on days
/// `i..i+train_days` and tests on the following `test_days`.
pub fn windows(
    scenario: &ScenarioData,
    train_days: usize,
    test_days: usize,
) -> Result<Vec<(ScenarioData, ScenarioData)>> {
    let days = scenario.days()?;
    let span = train_days + test_days;
    if span > days || train_days == 0 || test_days == 0 {
        return Err(Error::InsufficientDays {
            train: train_days,
            test: test_days,
            available: days,
        });
    }
    let mut out = Vec::with_capacity(days - span + 1);
    for start in 0..=(days - span) {
        let train = scenario.slice_days(start, start + train_days)?;
        let test = scenario.slice_days(start + train_days, start + span)?;
        out.push((train, test));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::daily_cumulant;

    fn small_spec(d: usize) -> BenchSpec {
        BenchSpec {
            n_devices: 3,
            device_p_max: 2.0,
            device_e_range: (4.0, 8.0),
            lambda_pv_true: -0.05,
            lambda_tcl_true: 10.0,
            tcl_params: TclParams::default(),
            pl_day_profile: default_pl_profile(d, 100.0),
            pl_noise_std: 1.0,
            seed: 11,
        }
    }

    #[test]
    fn accounting_identity_is_exact() {
        let d = 24;
        let exo = synthetic_exogenous(3, d, 5).unwrap();
        let truth = generate(&small_spec(d), &exo).unwrap();
        let sum = truth.components.total().unwrap();
        for (a, b) in sum.values().iter().zip(truth.scenario.total_load.values()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn true_esl_has_zero_daily_cumulant() {
        let d = 24;
        let exo = synthetic_exogenous(4, d, 6).unwrap();
        let truth = generate(&small_spec(d), &exo).unwrap();
        let daily = daily_cumulant(&truth.components.esl).unwrap();
        for v in daily {
            assert!(v.abs() < 1e-7, "daily net {v}");
        }
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let d = 24;
        let exo = synthetic_exogenous(2, d, 9).unwrap();
        let a = generate(&small_spec(d), &exo).unwrap();
        let b = generate(&small_spec(d), &exo).unwrap();
        for (x, y) in a
            .scenario
            .total_load
            .values()
            .iter()
            .zip(b.scenario.total_load.values())
        {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn paper_mirror_shape() {
        let spec = BenchSpec::paper_mirror(24, 1);
        assert_eq!(spec.n_devices, 50);
        assert!((spec.device_p_max - 4.0).abs() < 1e-12);
        assert_eq!(spec.device_e_range, (8.0, 24.0));
        spec.validate().unwrap();
    }

    #[test]
    fn window_counts() {
        let d = 4;
        let mk = |days: usize| {
            let t = days * d;
            ScenarioData::new(
                TimeSeries::new(vec![1.0; t], Unit::DollarPerMwh, d).unwrap(),
                TimeSeries::new(vec![0.0; t], Unit::WattPerSquareMeter, d).unwrap(),
                TimeSeries::new(vec![22.0; t], Unit::Celsius, d).unwrap(),
                TimeSeries::new(vec![5.0; t], Unit::MegaWatt, d).unwrap(),
            )
            .unwrap()
        };
        assert_eq!(windows(&mk(31), 6, 3).unwrap().len(), 23);
        assert_eq!(windows(&mk(9), 6, 3).unwrap().len(), 1);
        assert!(matches!(
            windows(&mk(8), 6, 3),
            Err(Error::InsufficientDays { .. })
        ));
    }

    #[test]
    fn window_split_boundaries() {
        let d = 2;
        let total: Vec<f64> = (0..20).map(|k| k as f64).collect();
        let sc = ScenarioData::new(
            TimeSeries::new(vec![1.0; 20], Unit::DollarPerMwh, d).unwrap(),
            TimeSeries::new(vec![0.0; 20], Unit::WattPerSquareMeter, d).unwrap(),
            TimeSeries::new(vec![22.0; 20], Unit::Celsius, d).unwrap(),
            TimeSeries::new(total, Unit::MegaWatt, d).unwrap(),
        )
        .unwrap();
        let w = windows(&sc, 2, 1).unwrap();
        assert_eq!(w.len(), 8);
        let (train0, test0) = &w[0];
        assert_eq!(train0.total_load.values(), &[0.0, 1.0, 2.0, 3.0]);
        assert_eq!(test0.total_load.values(), &[4.0, 5.0]);
        let (train1, _) = &w[1];
        assert_eq!(train1.total_load.values(), &[2.0, 3.0, 4.0, 5.0]);
    }

    #[test]
    fn exogenous_determinism_and_ranges() {
        let a = synthetic_exogenous(5, 24, 42).unwrap();
        let b = synthetic_exogenous(5, 24, 42).unwrap();
        assert_eq!(a.price.values(), b.price.values());
        let params = TclParams::default();
        let (lo, hi) = params.valid_range();
        for &tau in a.temperature.values() {
            assert!(tau > lo && tau < hi);
        }
        assert!(a.irradiance.values().iter().all(|&v| v >= 0.0));
        assert!(a.price.values().iter().all(|&v| v > 0.0));
    }
}
