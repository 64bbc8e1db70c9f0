//! CSV logs of an experiment and the report built from them.
//!
//! A run directory holds `truth.csv`, one `estimate_<filter>.csv` per filter,
//! `metrics.csv` and `timings.csv`. Every file except `timings.csv` is a pure
//! function of the scenario and seed.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::metrics::STATE_NAMES;
use super::run::{score, ExperimentOutput, FilterFailure, FilterMetrics, FilterRun};
use super::scenario::FilterKind;
use crate::cell::{CellState, STATE_DIM};
use crate::error::{Error, Result};
use crate::sim::{read_truth_csv, write_truth_csv};

/// One row of an estimate log; cells are numbered from 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateRow {
    pub k: usize,
    pub t: f64,
    pub cell: usize,
    pub soc_hat: f64,
    pub csc_hat: f64,
    pub ce1_hat: f64,
    pub ce2_hat: f64,
    pub tc_hat: f64,
    pub ts_hat: f64,
    pub p_trace: f64,
    pub consistency_margin: f64,
}

/// One row of `metrics.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub filter: String,
    pub status: String,
    pub state: String,
    pub rmse: f64,
    pub normalized: f64,
}

/// One row of `timings.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub filter: String,
    pub median_step_seconds: f64,
}

fn writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out)
}

pub fn estimate_file_name(kind: FilterKind) -> String {
    format!("estimate_{}.csv", kind.name())
}

pub fn write_estimate_csv<W: Write>(run: &FilterRun, times: &[f64], out: W) -> Result<()> {
    let mut w = writer(out);
    for (k, ((est, tr), margin)) in run.estimates.iter().zip(&run.p_trace).zip(&run.margins).enumerate() {
        for (c, (x, p)) in est.iter().zip(tr).enumerate() {
            w.serialize(EstimateRow {
                k,
                t: times[k],
                cell: c + 1,
                soc_hat: x.soc,
                csc_hat: x.csc,
                ce1_hat: x.ce1,
                ce2_hat: x.ce2,
                tc_hat: x.tc,
                ts_hat: x.ts,
                p_trace: *p,
                consistency_margin: *margin,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_estimate_csv<R: std::io::Read>(input: R) -> Result<Vec<EstimateRow>> {
    let mut r = csv::Reader::from_reader(input);
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

fn status(failure: &Option<FilterFailure>) -> String {
    match failure {
        None => "ok".into(),
        Some(f) => format!("diverged at step {}", f.step),
    }
}

pub fn write_metrics_csv<W: Write>(runs: &[FilterRun], metrics: &[FilterMetrics], out: W) -> Result<()> {
    let mut w = writer(out);
    for (run, m) in runs.iter().zip(metrics) {
        for s in 0..STATE_DIM {
            w.serialize(MetricRow {
                filter: run.kind.name().into(),
                status: status(&run.failure),
                state: STATE_NAMES[s].into(),
                rmse: m.rmse.map_or(f64::NAN, |e| e[s]),
                normalized: m.normalized.map_or(f64::NAN, |e| e[s]),
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Write every log of an experiment into `dir`, creating it if needed.
pub fn write_outputs(output: &ExperimentOutput, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_truth_csv(&output.trajectory, BufWriter::new(File::create(dir.join("truth.csv"))?))?;
    let times: Vec<f64> = output.trajectory.records.iter().map(|r| r.t).collect();
    for run in &output.runs {
        write_estimate_csv(run, &times, BufWriter::new(File::create(dir.join(estimate_file_name(run.kind)))?))?;
    }
    write_metrics_csv(&output.runs, &output.metrics, BufWriter::new(File::create(dir.join("metrics.csv"))?))?;
    let mut w = writer(BufWriter::new(File::create(dir.join("timings.csv"))?));
    for run in &output.runs {
        w.serialize(TimingRow {
            filter: run.kind.name().into(),
            median_step_seconds: run.median_step_time().map_or(f64::NAN, |d| d.as_secs_f64()),
        })?;
    }
    w.flush()?;
    Ok(())
}

/// Scores rebuilt from a run directory.
#[derive(Clone, Debug, PartialEq)]
pub struct Report {
    pub steps: usize,
    pub cells: usize,
    pub metrics: Vec<FilterMetrics>,
    pub timings: Vec<TimingRow>,
}

fn group_by_step<T>(rows: Vec<T>, key: impl Fn(&T) -> (usize, usize), what: &str) -> Result<Vec<Vec<T>>> {
    let mut steps: Vec<Vec<T>> = Vec::new();
    for row in rows {
        let (k, cell) = key(&row);
        if k == steps.len() {
            steps.push(Vec::new());
        }
        let step = steps
            .get_mut(k)
            .filter(|s| s.len() + 1 == cell)
            .ok_or_else(|| Error::Validation(format!("{what}: unexpected row for step {k}, cell {cell}")))?;
        step.push(row);
    }
    Ok(steps)
}

/// Recompute the metrics from the CSV logs in `dir`.
pub fn read_report(dir: &Path) -> Result<Report> {
    let truth_rows = read_truth_csv(File::open(dir.join("truth.csv"))?)?;
    let truth: Vec<Vec<CellState>> = group_by_step(truth_rows, |r| (r.k, r.cell), "truth.csv")?
        .into_iter()
        .map(|s| {
            s.into_iter()
                .map(|r| CellState::from_slice(&[r.soc, r.csc, r.ce1, r.ce2, r.tc, r.Ts]))
                .collect()
        })
        .collect();
    let cells = truth.first().map_or(0, Vec::len);
    let mut runs = Vec::new();
    for kind in FilterKind::ALL {
        let path = dir.join(estimate_file_name(kind));
        if !path.exists() {
            continue;
        }
        let steps = group_by_step(read_estimate_csv(File::open(&path)?)?, |r| (r.k, r.cell), &estimate_file_name(kind))?;
        let estimates: Vec<Vec<CellState>> = steps
            .iter()
            .map(|s| {
                s.iter()
                    .map(|r| CellState::from_slice(&[r.soc_hat, r.csc_hat, r.ce1_hat, r.ce2_hat, r.tc_hat, r.ts_hat]))
                    .collect()
            })
            .collect();
        let failure = (estimates.len() < truth.len()).then(|| FilterFailure {
            step: estimates.len(),
            message: "log ends before the horizon".into(),
        });
        runs.push(FilterRun {
            kind,
            p_trace: steps.iter().map(|s| s.iter().map(|r| r.p_trace).collect()).collect(),
            margins: steps.iter().map(|s| s[0].consistency_margin).collect(),
            estimates,
            timings: Vec::new(),
            failure,
        });
    }
    let metrics = score(&truth, &runs)?;
    let timing_path = dir.join("timings.csv");
    let timings = if timing_path.exists() {
        let mut r = csv::Reader::from_reader(File::open(timing_path)?);
        r.deserialize().collect::<std::result::Result<_, _>>()?
    } else {
        Vec::new()
    };
    Ok(Report {
        steps: truth.len(),
        cells,
        metrics,
        timings,
    })
}

fn cell(v: Option<f64>) -> String {
    match v {
        Some(x) if x.is_finite() => format!("{x:>10.4}"),
        _ => format!("{:>10}", "-"),
    }
}

impl Report {
    /// Human-readable table of normalized errors and timings.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{} steps, {} cells", self.steps, self.cells);
        let _ = write!(s, "{:<22}", "normalized rmse");
        for n in STATE_NAMES {
            let _ = write!(s, "{n:>10}");
        }
        let _ = writeln!(s, "{:>14}", "median step s");
        for m in &self.metrics {
            let _ = write!(s, "{:<22}", m.kind.name());
            for i in 0..STATE_DIM {
                let _ = write!(s, "{}", cell(m.normalized.map(|e| e[i])));
            }
            let t = self
                .timings
                .iter()
                .find(|t| t.filter == m.kind.name())
                .map(|t| t.median_step_seconds)
                .filter(|t| t.is_finite());
            let _ = match t {
                Some(t) => writeln!(s, "{t:>14.3e}"),
                None => writeln!(s, "{:>14}", "-"),
            };
        }
        s
    }
}
