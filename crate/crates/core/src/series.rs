//! Time-series and scenario data model shared by every other module.
//!
//! All component series are expressed in net-consumption MW: photovoltaic
//! generation shows up as negative consumption, so its capacity coefficient
//! is expected to be ≤ 0 under the default sign convention.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Physical unit tag carried by a [`TimeSeries`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Unit {
    /// Power in MW (net consumption).
    MegaWatt,
    /// Electricity price in $/MWh.
    DollarPerMwh,
    /// Solar irradiance in W/m².
    WattPerSquareMeter,
    /// Temperature in °C.
    Celsius,
}

impl std::fmt::Display for Unit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Unit::MegaWatt => "MW",
            Unit::DollarPerMwh => "$/MWh",
            Unit::WattPerSquareMeter => "W/m2",
            Unit::Celsius => "degC",
        };
        f.write_str(s)
    }
}

/// Sign convention for the PV component.
///
/// The default treats PV generation as negative consumption, which keeps the
/// four components summing to the metered total load with plus signs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PvSign {
    #[default]
    ConsumptionNegative,
    GenerationPositive,
}

/// Uniformly sampled signal with a daily period of `period` samples.
///
/// Values are immutable after construction and finite by construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    values: Vec<f64>,
    unit: Unit,
    period: usize,
}

impl TimeSeries {
    /// Builds a series, rejecting empty data, non-finite samples, and a zero period.
    pub fn new(values: Vec<f64>, unit: Unit, period: usize) -> Result<Self> {
        if period == 0 {
            return Err(Error::NotPositive {
                context: "samples per day".into(),
                value: 0.0,
            });
        }
        if values.is_empty() {
            return Err(Error::DimensionMismatch {
                context: "time series length".into(),
                expected: 1,
                got: 0,
            });
        }
        if let Some((i, &v)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite { index: i, value: v });
        }
        Ok(TimeSeries {
            values,
            unit,
            period,
        })
    }

    pub fn zeros(len: usize, unit: Unit, period: usize) -> Result<Self> {
        Self::new(vec![0.0; len], unit, period)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn unit(&self) -> Unit {
        self.unit
    }

    /// Samples per day (D).
    pub fn period(&self) -> usize {
        self.period
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Number of whole days; errors when the length is not a multiple of the period.
    pub fn days(&self) -> Result<usize> {
        if self.len() % self.period != 0 {
            return Err(Error::NotDivisible {
                len: self.len(),
                period: self.period,
            });
        }
        Ok(self.len() / self.period)
    }

    /// Returns a new series with the same unit/period and values mapped by `f`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.values.iter().map(|&v| f(v)).collect(), self.unit, self.period)
    }

    /// Sub-series covering sample range `[start, end)`; unit and period carry over.
    pub fn slice(&self, start: usize, end: usize) -> Result<Self> {
        if end > self.len() || start >= end {
            return Err(Error::DimensionMismatch {
                context: format!("slice {start}..{end} of series"),
                expected: self.len(),
                got: end,
            });
        }
        Self::new(self.values[start..end].to_vec(), self.unit, self.period)
    }
}

/// Per-day sums of a series: element `m` is the sum of samples
/// `mD .. (m+1)D` (0-based). Requires the length to be a multiple of D.
pub fn daily_cumulant(series: &TimeSeries) -> Result<Vec<f64>> {
    let days = series.days()?;
    let d = series.period();
    let mut out = Vec::with_capacity(days);
    for m in 0..days {
        out.push(series.values()[m * d..(m + 1) * d].iter().sum());
    }
    Ok(out)
}

/// Tiles a one-day profile of length D out to `t_len` samples.
pub fn periodic_extend(day_profile: &[f64], t_len: usize, unit: Unit) -> Result<TimeSeries> {
    let d = day_profile.len();
    if d == 0 || t_len % d != 0 {
        return Err(Error::NotDivisible {
            len: t_len,
            period: d.max(1),
        });
    }
    let values: Vec<f64> = day_profile.iter().cycle().take(t_len).copied().collect();
    TimeSeries::new(values, unit, d)
}

/// Bundled exogenous inputs plus the measured total load.
///
/// All four series share the same length T and daily period D.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScenarioData {
    pub price: TimeSeries,
    pub irradiance: TimeSeries,
    pub temperature: TimeSeries,
    pub total_load: TimeSeries,
}

impl ScenarioData {
    pub fn new(
        price: TimeSeries,
        irradiance: TimeSeries,
        temperature: TimeSeries,
        total_load: TimeSeries,
    ) -> Result<Self> {
        let t = price.len();
        let d = price.period();
        for (name, s) in [
            ("irradiance", &irradiance),
            ("temperature", &temperature),
            ("total_load", &total_load),
        ] {
            if s.len() != t {
                return Err(Error::DimensionMismatch {
                    context: format!("{name} length vs price"),
                    expected: t,
                    got: s.len(),
                });
            }
            if s.period() != d {
                return Err(Error::DimensionMismatch {
                    context: format!("{name} period vs price"),
                    expected: d,
                    got: s.period(),
                });
            }
        }
        Ok(ScenarioData {
            price,
            irradiance,
            temperature,
            total_load,
        })
    }

    pub fn len(&self) -> usize {
        self.price.len()
    }

    pub fn is_empty(&self) -> bool {
        self.price.is_empty()
    }

    pub fn period(&self) -> usize {
        self.price.period()
    }

    pub fn days(&self) -> Result<usize> {
        self.price.days()
    }

    /// Sub-scenario covering whole days `[start_day, end_day)`.
    pub fn slice_days(&self, start_day: usize, end_day: usize) -> Result<ScenarioData> {
        let d = self.period();
        let (a, b) = (start_day * d, end_day * d);
        ScenarioData::new(
            self.price.slice(a, b)?,
            self.irradiance.slice(a, b)?,
            self.temperature.slice(a, b)?,
            self.total_load.slice(a, b)?,
        )
    }
}

/// The four identified component trajectories plus their capacity coefficients.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Decomposition {
    pub esl: TimeSeries,
    pub pv: TimeSeries,
    pub tcl: TimeSeries,
    pub pl: TimeSeries,
    pub lambda_pv: f64,
    pub lambda_tcl: f64,
    pub theta: crate::surrogate::VbTheta,
}

impl Decomposition {
    /// View over whole days `[start_day, end_day)`; coefficients carry over.
    pub fn slice_days(&self, start_day: usize, end_day: usize) -> Result<Decomposition> {
        let d = self.pl.period();
        let (a, b) = (start_day * d, end_day * d);
        Ok(Decomposition {
            esl: self.esl.slice(a, b)?,
            pv: self.pv.slice(a, b)?,
            tcl: self.tcl.slice(a, b)?,
            pl: self.pl.slice(a, b)?,
            lambda_pv: self.lambda_pv,
            lambda_tcl: self.lambda_tcl,
            theta: self.theta.clone(),
        })
    }

    /// Sum of the four component series (the modeled total load).
    pub fn total(&self) -> Result<TimeSeries> {
        let t = self.esl.len();
        let mut v = vec![0.0; t];
        for s in [&self.esl, &self.pv, &self.tcl, &self.pl] {
            if s.len() != t {
                return Err(Error::DimensionMismatch {
                    context: "component length".into(),
                    expected: t,
                    got: s.len(),
                });
            }
            for (acc, x) in v.iter_mut().zip(s.values()) {
                *acc += x;
            }
        }
        TimeSeries::new(v, Unit::MegaWatt, self.esl.period())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ts(values: &[f64], period: usize) -> TimeSeries {
        TimeSeries::new(values.to_vec(), Unit::MegaWatt, period).unwrap()
    }

    #[test]
    fn cumulant_direct() {
        let s = ts(&[1.0, 2.0, 3.0, 4.0], 2);
        assert_eq!(daily_cumulant(&s).unwrap(), vec![3.0, 7.0]);
    }

    #[test]
    fn cumulant_zero_series() {
        let s = ts(&vec![0.0; 48], 24);
        assert_eq!(daily_cumulant(&s).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn cumulant_rejects_partial_day() {
        let s = ts(&[1.0, 2.0, 3.0], 2);
        assert!(matches!(
            daily_cumulant(&s),
            Err(Error::NotDivisible { len: 3, period: 2 })
        ));
    }

    #[test]
    fn extend_tiles_profile() {
        let e = periodic_extend(&[1.0, 2.0], 4, Unit::MegaWatt).unwrap();
        assert_eq!(e.values(), &[1.0, 2.0, 1.0, 2.0]);
    }

    #[test]
    fn extend_ones() {
        let e = periodic_extend(&[1.0; 24], 144, Unit::MegaWatt).unwrap();
        assert_eq!(e.len(), 144);
        assert!(e.values().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn extend_identity_when_t_equals_d() {
        let p = [3.0, 1.0, 4.0];
        let e = periodic_extend(&p, 3, Unit::MegaWatt).unwrap();
        assert_eq!(e.values(), &p);
    }

    #[test]
    fn extend_rejects_non_multiple() {
        assert!(periodic_extend(&[1.0, 2.0], 5, Unit::MegaWatt).is_err());
    }

    #[test]
    fn rejects_non_finite() {
        let r = TimeSeries::new(vec![1.0, f64::NAN], Unit::MegaWatt, 2);
        assert!(matches!(r, Err(Error::NonFinite { index: 1, .. })));
    }

    #[test]
    fn scenario_requires_alignment() {
        let a = ts(&[1.0, 2.0], 2);
        let b = ts(&[1.0, 2.0, 3.0, 4.0], 2);
        assert!(ScenarioData::new(a.clone(), b, a.clone(), a.clone()).is_err());
    }

    #[test]
    fn period_invariance_of_extend_then_cumulant() {
        let profile = [2.0, -1.0, 0.5, 3.0];
        let e = periodic_extend(&profile, 16, Unit::MegaWatt).unwrap();
        let c = daily_cumulant(&e).unwrap();
        let day_sum: f64 = profile.iter().sum();
        assert!(c.iter().all(|&v| (v - day_sum).abs() < 1e-12));
    }
}
