//! File ingestion: hourly CSV signals, the TOML run configuration, and the
//! export side used by the generator so round-trips are lossless.
//!
//! Timestamps are validated (ISO-8601, strictly increasing, uniform one-hour
//! spacing, aligned across signals) but the algorithms operate on index
//! positions only.

use std::path::{Path, PathBuf};

use chrono::{Duration, NaiveDateTime};
use serde::{Deserialize, Serialize};

use crate::edci::EdciConfig;
use crate::error::{Error, Result};
use crate::linalg::Tolerances;
use crate::newton::InverseConfig;
use crate::physics::TclParams;
use crate::series::{Decomposition, PvSign, ScenarioData, TimeSeries, Unit};
use crate::surrogate::VbTheta;
use crate::synth::{BenchSpec, GroundTruth};

const TS_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";
pub const DEFAULT_START: &str = "2022-07-01T00:00:00";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TemperatureUnit {
    #[serde(rename = "C")]
    Celsius,
    #[serde(rename = "F")]
    Fahrenheit,
}

/// Where the four signals live: one file per signal or one combined file.
#[derive(Clone, Debug)]
pub enum DataFiles {
    PerSignal {
        price: String,
        irradiance: String,
        temperature: String,
        total_load: String,
    },
    Combined(String),
}

#[derive(Clone, Debug)]
pub struct DataConfig {
    pub dir: Option<PathBuf>,
    pub files: DataFiles,
    pub temperature_unit: TemperatureUnit,
    pub period: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct WindowConfig {
    pub train_days: usize,
    pub test_days: usize,
}

#[derive(Clone, Debug)]
pub struct BenchConfig {
    pub spec: BenchSpec,
    pub days: usize,
}

/// Fully resolved run configuration (defaults applied).
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub data: DataConfig,
    pub edci: EdciConfig,
    pub windows: WindowConfig,
    pub bench: Option<BenchConfig>,
}

// Raw TOML shape; everything optional so a minimal config works.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    data: Option<RawData>,
    model: Option<RawModel>,
    solve: Option<RawSolve>,
    windows: Option<RawWindows>,
    bench: Option<RawBench>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawData {
    dir: Option<String>,
    price: Option<String>,
    irradiance: Option<String>,
    temperature: Option<String>,
    total_load: Option<String>,
    combined: Option<String>,
    temperature_unit: Option<TemperatureUnit>,
    period: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    n_batteries: Option<usize>,
    pv_sign: Option<PvSign>,
    tcl: Option<TclParams>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSolve {
    outer_max: Option<usize>,
    conv_tol: Option<f64>,
    inner_max: Option<usize>,
    loss_tol: Option<f64>,
    grid_points_per_dim: Option<usize>,
    damping: Option<bool>,
    tol_feas: Option<f64>,
    tol_bind: Option<f64>,
    tol_rank: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawWindows {
    train_days: Option<usize>,
    test_days: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBench {
    days: Option<usize>,
    n_devices: Option<usize>,
    device_p_max: Option<f64>,
    energy_range: Option<(f64, f64)>,
    lambda_pv: Option<f64>,
    lambda_tcl: Option<f64>,
    pl_noise_std: Option<f64>,
    pl_day_profile: Option<Vec<f64>>,
    seed: Option<u64>,
}

/// Parses and resolves a TOML run configuration, applying defaults.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let raw: RawConfig =
        toml::from_str(&text).map_err(|e| Error::config("<root>", e.to_string()))?;
    resolve_config(raw)
}

fn resolve_config(raw: RawConfig) -> Result<RunConfig> {
    let d = raw.data.unwrap_or_default();
    let period = d.period.unwrap_or(24);
    if period == 0 {
        return Err(Error::config("data.period", "must be positive"));
    }
    let files = match (&d.combined, &d.price) {
        (Some(c), _) => DataFiles::Combined(c.clone()),
        _ => DataFiles::PerSignal {
            price: d.price.unwrap_or_else(|| "price.csv".into()),
            irradiance: d.irradiance.unwrap_or_else(|| "irradiance.csv".into()),
            temperature: d.temperature.unwrap_or_else(|| "temperature.csv".into()),
            total_load: d.total_load.unwrap_or_else(|| "total_load.csv".into()),
        },
    };
    let data = DataConfig {
        dir: d.dir.map(PathBuf::from),
        files,
        temperature_unit: d.temperature_unit.unwrap_or(TemperatureUnit::Celsius),
        period,
    };

    let m = raw.model.unwrap_or_default();
    let s = raw.solve.unwrap_or_default();
    let tcl_params = m.tcl.unwrap_or_default();
    tcl_params
        .validate()
        .map_err(|e| Error::config("model.tcl", e.to_string()))?;
    let tol = Tolerances {
        tol_feas: s.tol_feas.unwrap_or(1e-8),
        tol_bind: s.tol_bind.unwrap_or(1e-7),
        tol_rank: s.tol_rank.unwrap_or(1e-10),
    };
    tol.validate()
        .map_err(|e| Error::config("solve.tol", e.to_string()))?;
    let edci = EdciConfig {
        outer_max: s.outer_max.unwrap_or(20),
        conv_tol: s.conv_tol.unwrap_or(1e-3),
        inverse: InverseConfig {
            max_iter: s.inner_max.unwrap_or(30),
            loss_tol: s.loss_tol.unwrap_or(1e-6),
            grid_points_per_dim: s.grid_points_per_dim.unwrap_or(4),
            damping_enabled: s.damping.unwrap_or(true),
            tol,
        },
        n_batteries: m.n_batteries.unwrap_or(3),
        tcl_params,
        pv_sign: m.pv_sign.unwrap_or_default(),
    };
    edci.validate()
        .map_err(|e| Error::config("solve", e.to_string()))?;

    let w = raw.windows.unwrap_or_default();
    let windows = WindowConfig {
        train_days: w.train_days.unwrap_or(6),
        test_days: w.test_days.unwrap_or(3),
    };
    if windows.train_days == 0 || windows.test_days == 0 {
        return Err(Error::config("windows", "train_days and test_days must be positive"));
    }

    let bench = match raw.bench {
        None => None,
        Some(b) => {
            let mut spec = BenchSpec::paper_mirror(period, b.seed.unwrap_or(7));
            if let Some(n) = b.n_devices {
                spec.n_devices = n;
            }
            if let Some(p) = b.device_p_max {
                spec.device_p_max = p;
            }
            if let Some(r) = b.energy_range {
                spec.device_e_range = r;
            }
            if let Some(l) = b.lambda_pv {
                spec.lambda_pv_true = l;
            }
            if let Some(l) = b.lambda_tcl {
                spec.lambda_tcl_true = l;
            }
            if let Some(n) = b.pl_noise_std {
                spec.pl_noise_std = n;
            }
            if let Some(p) = b.pl_day_profile {
                spec.pl_day_profile = p;
            }
            spec.tcl_params = edci.tcl_params;
            spec.validate()
                .map_err(|e| Error::config("bench", e.to_string()))?;
            Some(BenchConfig {
                spec,
                days: b.days.unwrap_or(31),
            })
        }
    };

    Ok(RunConfig {
        data,
        edci,
        windows,
        bench,
    })
}

fn parse_ts(path: &Path, row: usize, s: &str) -> Result<NaiveDateTime> {
    NaiveDateTime::parse_from_str(s.trim(), TS_FORMAT).map_err(|e| Error::CsvParse {
        path: path.to_path_buf(),
        row,
        column: "timestamp".into(),
        message: e.to_string(),
    })
}

/// One `timestamp,value` CSV with a header row; hourly spacing enforced.
pub fn read_signal_csv(path: &Path) -> Result<(Vec<NaiveDateTime>, Vec<f64>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::CsvParse {
            path: path.to_path_buf(),
            row: 0,
            column: "<open>".into(),
            message: e.to_string(),
        })?;
    let mut stamps = Vec::new();
    let mut values = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2; // 1-based, after the header
        let rec = rec.map_err(|e| Error::CsvParse {
            path: path.to_path_buf(),
            row,
            column: "<record>".into(),
            message: e.to_string(),
        })?;
        if rec.len() < 2 {
            return Err(Error::CsvParse {
                path: path.to_path_buf(),
                row,
                column: "value".into(),
                message: "expected timestamp,value".into(),
            });
        }
        stamps.push(parse_ts(path, row, &rec[0])?);
        values.push(rec[1].trim().parse::<f64>().map_err(|e| Error::CsvParse {
            path: path.to_path_buf(),
            row,
            column: "value".into(),
            message: e.to_string(),
        })?);
    }
    validate_hourly(path, &stamps)?;
    Ok((stamps, values))
}

fn validate_hourly(path: &Path, stamps: &[NaiveDateTime]) -> Result<()> {
    for pair in stamps.windows(2) {
        let expected = pair[0] + Duration::hours(1);
        if pair[1] != expected {
            return Err(Error::TimestampGap {
                path: path.to_path_buf(),
                expected: expected.format(TS_FORMAT).to_string(),
                previous: pair[0].format(TS_FORMAT).to_string(),
            });
        }
    }
    Ok(())
}

fn fahrenheit_to_celsius(f: f64) -> f64 {
    (f - 32.0) * 5.0 / 9.0
}

/// Loads and validates the four signals named by the configuration.
pub fn load_scenario(config: &RunConfig, data_dir: Option<&Path>) -> Result<ScenarioData> {
    let base: PathBuf = data_dir
        .map(Path::to_path_buf)
        .or_else(|| config.data.dir.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    let d = config.data.period;

    let (stamps, price, irr, temp, load) = match &config.data.files {
        DataFiles::PerSignal {
            price,
            irradiance,
            temperature,
            total_load,
        } => {
            let (ts_p, v_p) = read_signal_csv(&base.join(price))?;
            let (ts_i, v_i) = read_signal_csv(&base.join(irradiance))?;
            let (ts_t, v_t) = read_signal_csv(&base.join(temperature))?;
            let (ts_l, v_l) = read_signal_csv(&base.join(total_load))?;
            for (name, ts) in [
                (irradiance, &ts_i),
                (temperature, &ts_t),
                (total_load, &ts_l),
            ] {
                if ts.len() != ts_p.len() || ts.first() != ts_p.first() {
                    let offending = ts
                        .iter()
                        .zip(&ts_p)
                        .find(|(a, b)| a != b)
                        .map(|(a, _)| a.format(TS_FORMAT).to_string())
                        .unwrap_or_else(|| {
                            ts.first()
                                .or(ts_p.first())
                                .map(|t| t.format(TS_FORMAT).to_string())
                                .unwrap_or_default()
                        });
                    return Err(Error::Misaligned {
                        path: base.join(name),
                        timestamp: offending,
                    });
                }
            }
            (ts_p, v_p, v_i, v_t, v_l)
        }
        DataFiles::Combined(name) => read_combined_csv(&base.join(name))?,
    };
    if stamps.is_empty() {
        return Err(Error::DimensionMismatch {
            context: "empty scenario data".into(),
            expected: 1,
            got: 0,
        });
    }

    let temp = match config.data.temperature_unit {
        TemperatureUnit::Celsius => temp,
        TemperatureUnit::Fahrenheit => temp.into_iter().map(fahrenheit_to_celsius).collect(),
    };
    ScenarioData::new(
        TimeSeries::new(price, Unit::DollarPerMwh, d)?,
        TimeSeries::new(irr, Unit::WattPerSquareMeter, d)?,
        TimeSeries::new(temp, Unit::Celsius, d)?,
        TimeSeries::new(load, Unit::MegaWatt, d)?,
    )
}

type Combined = (Vec<NaiveDateTime>, Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>);

fn read_combined_csv(path: &Path) -> Result<Combined> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::CsvParse {
            path: path.to_path_buf(),
            row: 0,
            column: "<open>".into(),
            message: e.to_string(),
        })?;
    let mut out: Combined = Default::default();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| Error::CsvParse {
            path: path.to_path_buf(),
            row,
            column: "<record>".into(),
            message: e.to_string(),
        })?;
        if rec.len() < 5 {
            return Err(Error::CsvParse {
                path: path.to_path_buf(),
                row,
                column: "total_load".into(),
                message: "expected timestamp,price,irradiance,temperature,total_load".into(),
            });
        }
        out.0.push(parse_ts(path, row, &rec[0])?);
        for (slot, col) in [
            (1usize, "price"),
            (2, "irradiance"),
            (3, "temperature"),
            (4, "total_load"),
        ] {
            let v = rec[slot].trim().parse::<f64>().map_err(|e| Error::CsvParse {
                path: path.to_path_buf(),
                row,
                column: col.into(),
                message: e.to_string(),
            })?;
            match slot {
                1 => out.1.push(v),
                2 => out.2.push(v),
                3 => out.3.push(v),
                _ => out.4.push(v),
            }
        }
    }
    validate_hourly(path, &out.0)?;
    Ok(out)
}

fn hourly_stamps(start: NaiveDateTime, len: usize) -> Vec<NaiveDateTime> {
    (0..len).map(|k| start + Duration::hours(k as i64)).collect()
}

fn write_signal_csv(path: &Path, stamps: &[NaiveDateTime], values: &[f64]) -> Result<()> {
    use std::io::Write;
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    writeln!(f, "timestamp,value").map_err(|e| Error::io(path, e))?;
    for (ts, v) in stamps.iter().zip(values) {
        // Default float formatting round-trips exactly.
        writeln!(f, "{},{}", ts.format(TS_FORMAT), v).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

/// Writes the four per-signal CSVs for a scenario.
pub fn export_scenario(scenario: &ScenarioData, dir: &Path, start: &str) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let start = NaiveDateTime::parse_from_str(start, TS_FORMAT)
        .map_err(|e| Error::config("start timestamp", e.to_string()))?;
    let stamps = hourly_stamps(start, scenario.len());
    let files = [
        ("price.csv", scenario.price.values()),
        ("irradiance.csv", scenario.irradiance.values()),
        ("temperature.csv", scenario.temperature.values()),
        ("total_load.csv", scenario.total_load.values()),
    ];
    let mut written = Vec::new();
    for (name, values) in files {
        let p = dir.join(name);
        write_signal_csv(&p, &stamps, values)?;
        written.push(p);
    }
    Ok(written)
}

#[derive(Serialize, Deserialize)]
struct TruthMeta {
    lambda_pv: f64,
    lambda_tcl: f64,
    theta: Vec<(f64, f64, f64)>,
}

/// Writes the true component trajectories (plus coefficients) for scoring.
pub fn export_truth(truth: &GroundTruth, dir: &Path, start: &str) -> Result<Vec<PathBuf>> {
    use std::io::Write;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let start = NaiveDateTime::parse_from_str(start, TS_FORMAT)
        .map_err(|e| Error::config("start timestamp", e.to_string()))?;
    let stamps = hourly_stamps(start, truth.scenario.len());
    let p = dir.join("truth_components.csv");
    {
        let mut f = std::fs::File::create(&p).map_err(|e| Error::io(&p, e))?;
        writeln!(f, "timestamp,esl,pv,tcl,pl").map_err(|e| Error::io(&p, e))?;
        let c = &truth.components;
        for k in 0..truth.scenario.len() {
            writeln!(
                f,
                "{},{},{},{},{}",
                stamps[k].format(TS_FORMAT),
                c.esl.values()[k],
                c.pv.values()[k],
                c.tcl.values()[k],
                c.pl.values()[k]
            )
            .map_err(|e| Error::io(&p, e))?;
        }
    }
    let meta_path = dir.join("truth_params.json");
    let theta = &truth.components.theta;
    let meta = TruthMeta {
        lambda_pv: truth.components.lambda_pv,
        lambda_tcl: truth.components.lambda_tcl,
        theta: (0..theta.n_batteries())
            .map(|n| (theta.p_bar(n), theta.e_bar(n), theta.e_lower(n)))
            .collect(),
    };
    std::fs::write(
        &meta_path,
        serde_json::to_string_pretty(&meta).map_err(|e| Error::config("truth", e.to_string()))?,
    )
    .map_err(|e| Error::io(&meta_path, e))?;
    Ok(vec![p, meta_path])
}

/// Reads true components back; coefficients come from the sidecar when present.
pub fn read_truth(dir: &Path, period: usize) -> Result<Decomposition> {
    let path = dir.join("truth_components.csv");
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(&path)
        .map_err(|e| Error::CsvParse {
            path: path.clone(),
            row: 0,
            column: "<open>".into(),
            message: e.to_string(),
        })?;
    let mut cols: [Vec<f64>; 4] = Default::default();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| Error::CsvParse {
            path: path.clone(),
            row,
            column: "<record>".into(),
            message: e.to_string(),
        })?;
        for (slot, col) in ["esl", "pv", "tcl", "pl"].iter().enumerate() {
            cols[slot].push(rec[slot + 1].trim().parse::<f64>().map_err(|e| {
                Error::CsvParse {
                    path: path.clone(),
                    row,
                    column: (*col).into(),
                    message: e.to_string(),
                }
            })?);
        }
    }
    let meta: Option<TruthMeta> = std::fs::read_to_string(dir.join("truth_params.json"))
        .ok()
        .and_then(|text| serde_json::from_str(&text).ok());
    let (lambda_pv, lambda_tcl, theta) = match meta {
        Some(m) => (
            m.lambda_pv,
            m.lambda_tcl,
            VbTheta::from_batteries(&m.theta)?,
        ),
        None => (0.0, 0.0, VbTheta::new(vec![0.0, 0.0, 0.0])?),
    };
    let [esl, pv, tcl, pl] = cols;
    Ok(Decomposition {
        esl: TimeSeries::new(esl, Unit::MegaWatt, period)?,
        pv: TimeSeries::new(pv, Unit::MegaWatt, period)?,
        tcl: TimeSeries::new(tcl, Unit::MegaWatt, period)?,
        pl: TimeSeries::new(pl, Unit::MegaWatt, period)?,
        lambda_pv,
        lambda_tcl,
        theta,
    })
}
