//! Scoring against ground truth or held-out data, and emission of result
//! bundles (per-iteration convergence, component trajectories, score tables,
//! identified parameters, and simple SVG plots).

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::edci::{predict, EdciResult, Exogenous};
use crate::error::{Error, Result};
use crate::physics::TclParams;
use crate::series::{Decomposition, ScenarioData};
use crate::surrogate::VbTheta;

/// Root-mean-square error normalized by the peak magnitude of the actual
/// signal, as a percentage.
pub fn nrmse(actual: &[f64], estimated: &[f64]) -> Result<f64> {
    if actual.is_empty() || actual.len() != estimated.len() {
        return Err(Error::DimensionMismatch {
            context: "nrmse input lengths".into(),
            expected: actual.len().max(1),
            got: estimated.len(),
        });
    }
    let peak = actual.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    if peak == 0.0 {
        return Err(Error::ZeroDenominator);
    }
    let mse = actual
        .iter()
        .zip(estimated)
        .map(|(y, yh)| (yh - y) * (yh - y))
        .sum::<f64>()
        / actual.len() as f64;
    Ok(100.0 * mse.sqrt() / peak)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Split::Train => f.write_str("train"),
            Split::Test => f.write_str("test"),
        }
    }
}

/// Per-window NRMSE scores; component entries need ground truth and stay
/// empty on real data where only the total load is measured.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ComponentScores {
    pub window_id: usize,
    pub split: Split,
    pub tl: f64,
    pub pl: Option<f64>,
    pub esl: Option<f64>,
    pub pv: Option<f64>,
    pub tcl: Option<f64>,
}

/// What a run is scored against.
pub struct ScoreInput<'a> {
    /// Measured data of the split (exogenous plus total load).
    pub scenario: &'a ScenarioData,
    /// True components aligned with `scenario`, when available.
    pub truth: Option<&'a Decomposition>,
    pub split: Split,
    pub window_id: usize,
}

/// Scores one identification run on a train or test split. The test split is
/// scored through prediction on its exogenous data, never by re-fitting.
pub fn score_run(result: &EdciResult, input: &ScoreInput) -> Result<ComponentScores> {
    let estimated = match input.split {
        Split::Train => result.decomposition.clone(),
        Split::Test => predict(result, &Exogenous::from_scenario(input.scenario))?,
    };
    let tl = nrmse(
        input.scenario.total_load.values(),
        estimated.total()?.values(),
    )?;
    let mut scores = ComponentScores {
        window_id: input.window_id,
        split: input.split,
        tl,
        pl: None,
        esl: None,
        pv: None,
        tcl: None,
    };
    if let Some(truth) = input.truth {
        scores.pl = Some(nrmse(truth.pl.values(), estimated.pl.values())?);
        scores.esl = Some(nrmse(truth.esl.values(), estimated.esl.values())?);
        scores.pv = Some(nrmse(truth.pv.values(), estimated.pv.values())?);
        scores.tcl = Some(nrmse(truth.tcl.values(), estimated.tcl.values())?);
    }
    Ok(scores)
}

/// Mean scores across windows (the reported aggregate is the mean over
/// windows, not a pooled-sample figure).
pub fn mean_scores(scores: &[ComponentScores], split: Split) -> Option<ComponentScores> {
    let rows: Vec<&ComponentScores> = scores.iter().filter(|s| s.split == split).collect();
    if rows.is_empty() {
        return None;
    }
    let mean_opt = |pick: fn(&ComponentScores) -> Option<f64>| -> Option<f64> {
        let vals: Vec<f64> = rows.iter().filter_map(|s| pick(s)).collect();
        if vals.len() == rows.len() {
            Some(vals.iter().sum::<f64>() / vals.len() as f64)
        } else {
            None
        }
    };
    Some(ComponentScores {
        window_id: usize::MAX,
        split,
        tl: rows.iter().map(|s| s.tl).sum::<f64>() / rows.len() as f64,
        pl: mean_opt(|s| s.pl),
        esl: mean_opt(|s| s.esl),
        pv: mean_opt(|s| s.pv),
        tcl: mean_opt(|s| s.tcl),
    })
}

/// Identified model parameters in their serialized form.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IdentifiedParams {
    /// One `(p_bar, e_bar, e_lower)` row per battery.
    pub theta: Vec<(f64, f64, f64)>,
    pub lambda_pv: f64,
    pub lambda_tcl: f64,
    /// One day of the periodic component.
    pub pl_profile: Vec<f64>,
    pub tcl_params: TclParams,
    pub period: usize,
}

impl IdentifiedParams {
    pub fn from_result(result: &EdciResult) -> Self {
        let theta = &result.decomposition.theta;
        let rows = (0..theta.n_batteries())
            .map(|n| (theta.p_bar(n), theta.e_bar(n), theta.e_lower(n)))
            .collect();
        let d = result.decomposition.pl.period();
        IdentifiedParams {
            theta: rows,
            lambda_pv: result.decomposition.lambda_pv,
            lambda_tcl: result.decomposition.lambda_tcl,
            pl_profile: result.decomposition.pl.values()[..d].to_vec(),
            tcl_params: result.config.tcl_params,
            period: d,
        }
    }

    pub fn theta_vector(&self) -> Result<VbTheta> {
        VbTheta::from_batteries(&self.theta)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| Error::config("params", e.to_string()))?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::config("params", e.to_string()))
    }
}

/// Everything produced for one window.
pub struct WindowArtifacts {
    pub window_id: usize,
    pub result: EdciResult,
    pub scores: Vec<ComponentScores>,
    /// Measured training load for the trajectory file.
    pub train_scenario: ScenarioData,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes the full results bundle and returns the paths written.
pub fn emit_bundle(windows: &[WindowArtifacts], out_dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut written = Vec::new();

    // Score table over all windows, plus per-split means.
    let scores_path = out_dir.join("scores.csv");
    {
        let mut f = std::fs::File::create(&scores_path).map_err(|e| Error::io(&scores_path, e))?;
        writeln!(f, "window,split,tl,pl,esl,pv,tcl").map_err(|e| Error::io(&scores_path, e))?;
        let all: Vec<&ComponentScores> = windows.iter().flat_map(|w| w.scores.iter()).collect();
        for s in &all {
            writeln!(
                f,
                "{},{},{},{},{},{},{}",
                s.window_id,
                s.split,
                s.tl,
                fmt_opt(s.pl),
                fmt_opt(s.esl),
                fmt_opt(s.pv),
                fmt_opt(s.tcl)
            )
            .map_err(|e| Error::io(&scores_path, e))?;
        }
        let owned: Vec<ComponentScores> = all.into_iter().cloned().collect();
        for split in [Split::Train, Split::Test] {
            if let Some(m) = mean_scores(&owned, split) {
                writeln!(
                    f,
                    "mean,{},{},{},{},{},{}",
                    split,
                    m.tl,
                    fmt_opt(m.pl),
                    fmt_opt(m.esl),
                    fmt_opt(m.pv),
                    fmt_opt(m.tcl)
                )
                .map_err(|e| Error::io(&scores_path, e))?;
            }
        }
    }
    written.push(scores_path.clone());
    if !windows.is_empty() {
        let series: Vec<(String, Vec<f64>)> = vec![
            (
                "train_tl".into(),
                windows
                    .iter()
                    .flat_map(|w| w.scores.iter())
                    .filter(|s| s.split == Split::Train)
                    .map(|s| s.tl)
                    .collect(),
            ),
            (
                "test_tl".into(),
                windows
                    .iter()
                    .flat_map(|w| w.scores.iter())
                    .filter(|s| s.split == Split::Test)
                    .map(|s| s.tl)
                    .collect(),
            ),
        ];
        let p = out_dir.join("scores.svg");
        write_svg(&p, "TL NRMSE per window (%)", &series)?;
        written.push(p);
    }

    for w in windows {
        let tag = format!("w{:03}", w.window_id);

        // Inner-loop convergence.
        let conv_path = out_dir.join(format!("convergence_{tag}.csv"));
        {
            let mut f = std::fs::File::create(&conv_path).map_err(|e| Error::io(&conv_path, e))?;
            writeln!(f, "outer_iter,inner_iter,loss,binding_count,degenerate,damped,accepted")
                .map_err(|e| Error::io(&conv_path, e))?;
            for (oi, trace) in w.result.newton_traces.iter().enumerate() {
                for (ii, it) in trace.iterations.iter().enumerate() {
                    writeln!(
                        f,
                        "{},{},{},{},{},{},{}",
                        oi, ii, it.loss, it.binding_count, it.degenerate, it.damped, it.accepted
                    )
                    .map_err(|e| Error::io(&conv_path, e))?;
                }
            }
        }
        let losses: Vec<f64> = w
            .result
            .newton_traces
            .iter()
            .flat_map(|t| t.iterations.iter())
            .filter(|it| it.accepted)
            .map(|it| it.loss)
            .collect();
        let svg = out_dir.join(format!("convergence_{tag}.svg"));
        write_svg(&svg, "Inner-loop loss over iterations", &[("loss".into(), losses)])?;
        written.push(conv_path);
        written.push(svg);

        // Outer-loop diagnostics.
        let outer_path = out_dir.join(format!("outer_{tag}.csv"));
        {
            let mut f =
                std::fs::File::create(&outer_path).map_err(|e| Error::io(&outer_path, e))?;
            writeln!(
                f,
                "iter,lambda_pv,lambda_tcl,loss_outer,pl_change_ratio,train_tl_nrmse,accepted"
            )
            .map_err(|e| Error::io(&outer_path, e))?;
            for (i, it) in w.result.outer_trace.iter().enumerate() {
                writeln!(
                    f,
                    "{},{},{},{},{},{},{}",
                    i,
                    it.lambda_pv,
                    it.lambda_tcl,
                    it.loss_outer,
                    it.pl_change_ratio,
                    it.train_tl_nrmse,
                    it.accepted
                )
                .map_err(|e| Error::io(&outer_path, e))?;
            }
        }
        let svg = out_dir.join(format!("outer_{tag}.svg"));
        write_svg(
            &svg,
            "Training TL NRMSE over outer iterations (%)",
            &[(
                "train_tl_nrmse".into(),
                w.result.outer_trace.iter().map(|o| o.train_tl_nrmse).collect(),
            )],
        )?;
        written.push(outer_path);
        written.push(svg);

        // Component trajectories on the training window.
        let traj_path = out_dir.join(format!("trajectories_{tag}.csv"));
        {
            let dec = &w.result.decomposition;
            let modeled = dec.total()?;
            let mut f = std::fs::File::create(&traj_path).map_err(|e| Error::io(&traj_path, e))?;
            writeln!(f, "step,esl,pv,tcl,pl,total_modeled,total_measured")
                .map_err(|e| Error::io(&traj_path, e))?;
            for k in 0..dec.esl.len() {
                writeln!(
                    f,
                    "{},{},{},{},{},{},{}",
                    k,
                    dec.esl.values()[k],
                    dec.pv.values()[k],
                    dec.tcl.values()[k],
                    dec.pl.values()[k],
                    modeled.values()[k],
                    w.train_scenario.total_load.values()[k]
                )
                .map_err(|e| Error::io(&traj_path, e))?;
            }
        }
        let dec = &w.result.decomposition;
        let svg = out_dir.join(format!("trajectories_{tag}.svg"));
        write_svg(
            &svg,
            "Identified components (MW)",
            &[
                ("esl".into(), dec.esl.values().to_vec()),
                ("pv".into(), dec.pv.values().to_vec()),
                ("tcl".into(), dec.tcl.values().to_vec()),
                ("pl".into(), dec.pl.values().to_vec()),
                (
                    "total_measured".into(),
                    w.train_scenario.total_load.values().to_vec(),
                ),
            ],
        )?;
        written.push(traj_path);
        written.push(svg);

        // Identified parameters.
        let params_path = out_dir.join(format!("params_{tag}.json"));
        IdentifiedParams::from_result(&w.result).write(&params_path)?;
        written.push(params_path);
    }
    Ok(written)
}

/// Runs the sliding-window protocol: identify on each training window, score
/// train by fit and test by prediction, against truth components when given.
/// Windows are independent and run in parallel.
pub fn evaluate_windows(
    scenario: &ScenarioData,
    truth: Option<&Decomposition>,
    cfg: &crate::edci::EdciConfig,
    train_days: usize,
    test_days: usize,
) -> Result<Vec<WindowArtifacts>> {
    use rayon::prelude::*;
    let splits = crate::synth::windows(scenario, train_days, test_days)?;
    splits
        .into_par_iter()
        .enumerate()
        .map(|(i, (train, test))| {
            let result = crate::edci::run_edci(&train, cfg)?;
            let truth_train = truth
                .map(|t| t.slice_days(i, i + train_days))
                .transpose()?;
            let truth_test = truth
                .map(|t| t.slice_days(i + train_days, i + train_days + test_days))
                .transpose()?;
            let s_train = score_run(
                &result,
                &ScoreInput {
                    scenario: &train,
                    truth: truth_train.as_ref(),
                    split: Split::Train,
                    window_id: i,
                },
            )?;
            let s_test = score_run(
                &result,
                &ScoreInput {
                    scenario: &test,
                    truth: truth_test.as_ref(),
                    split: Split::Test,
                    window_id: i,
                },
            )?;
            Ok(WindowArtifacts {
                window_id: i,
                result,
                scores: vec![s_train, s_test],
                train_scenario: train,
            })
        })
        .collect()
}

/// Reads a score table back (mean rows are skipped).
pub fn read_scores(path: &Path) -> Result<Vec<ComponentScores>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(Error::CsvParse {
                path: path.to_path_buf(),
                row: lineno + 1,
                column: "field count".into(),
                message: format!("expected 7 fields, got {}", fields.len()),
            });
        }
        if fields[0] == "mean" {
            continue;
        }
        let parse = |s: &str, col: &str| -> Result<f64> {
            s.parse::<f64>().map_err(|e| Error::CsvParse {
                path: path.to_path_buf(),
                row: lineno + 1,
                column: col.into(),
                message: e.to_string(),
            })
        };
        let parse_opt = |s: &str, col: &str| -> Result<Option<f64>> {
            if s.is_empty() {
                Ok(None)
            } else {
                parse(s, col).map(Some)
            }
        };
        out.push(ComponentScores {
            window_id: fields[0].parse().map_err(|_| Error::CsvParse {
                path: path.to_path_buf(),
                row: lineno + 1,
                column: "window".into(),
                message: "bad window id".into(),
            })?,
            split: match fields[1] {
                "train" => Split::Train,
                "test" => Split::Test,
                other => {
                    return Err(Error::CsvParse {
                        path: path.to_path_buf(),
                        row: lineno + 1,
                        column: "split".into(),
                        message: format!("unknown split {other}"),
                    })
                }
            },
            tl: parse(fields[2], "tl")?,
            pl: parse_opt(fields[3], "pl")?,
            esl: parse_opt(fields[4], "esl")?,
            pv: parse_opt(fields[5], "pv")?,
            tcl: parse_opt(fields[6], "tcl")?,
        });
    }
    Ok(out)
}

/// Minimal multi-series line plot.
pub fn write_svg(path: &Path, title: &str, series: &[(String, Vec<f64>)]) -> Result<()> {
    const W: f64 = 860.0;
    const H: f64 = 420.0;
    const ML: f64 = 60.0;
    const MR: f64 = 160.0;
    const MT: f64 = 40.0;
    const MB: f64 = 40.0;
    const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut max_len = 0usize;
    for (_, v) in series {
        for &x in v {
            lo = lo.min(x);
            hi = hi.max(x);
        }
        max_len = max_len.max(v.len());
    }
    if !lo.is_finite() || !hi.is_finite() {
        lo = 0.0;
        hi = 1.0;
    }
    if (hi - lo).abs() < 1e-12 {
        lo -= 1.0;
        hi += 1.0;
    }
    let px = |i: usize, len: usize| -> f64 {
        if len <= 1 {
            ML
        } else {
            ML + (W - ML - MR) * i as f64 / (len - 1) as f64
        }
    };
    let py = |v: f64| -> f64 { MT + (H - MT - MB) * (1.0 - (v - lo) / (hi - lo)) };

    let mut s = String::new();
    s.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {W} {H}\" font-family=\"sans-serif\" font-size=\"12\">\n"
    ));
    s.push_str(&format!(
        "<text x=\"{ML}\" y=\"20\" font-size=\"14\">{title}</text>\n"
    ));
    s.push_str(&format!(
        "<line x1=\"{ML}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#444\"/>\n",
        H - MB,
        W - MR,
        H - MB
    ));
    s.push_str(&format!(
        "<line x1=\"{ML}\" y1=\"{MT}\" x2=\"{ML}\" y2=\"{}\" stroke=\"#444\"/>\n",
        H - MB
    ));
    s.push_str(&format!(
        "<text x=\"8\" y=\"{}\">{:.3}</text>\n<text x=\"8\" y=\"{}\">{:.3}</text>\n",
        H - MB,
        lo,
        MT + 10.0,
        hi
    ));
    for (si, (name, vals)) in series.iter().enumerate() {
        if vals.is_empty() {
            continue;
        }
        let color = COLORS[si % COLORS.len()];
        let pts: Vec<String> = vals
            .iter()
            .enumerate()
            .map(|(i, &v)| format!("{:.2},{:.2}", px(i, vals.len()), py(v)))
            .collect();
        s.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
            pts.join(" ")
        ));
        s.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" fill=\"{color}\">{name}</text>\n",
            W - MR + 10.0,
            MT + 16.0 * si as f64 + 10.0
        ));
    }
    s.push_str("</svg>\n");
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}
