//! End-to-end experiment: simulate the plant once, replay the measurements
//! through every selected filter and score the estimates.

use std::time::{Duration, Instant};

use nalgebra::DMatrix;

use super::metrics::{median_after_warmup, normalize_metrics, rmse};
use super::scenario::{FilterKind, Scenario};
use crate::cell::{CellState, STATE_DIM};
use crate::error::{Error, Result};
use crate::filters::{calibrate_alpha, consistency_margin, Calibration, CentralizedUkf, FilterModel, FilterTuning, Pukf};
use crate::sim::{MeasurementRecord, PackSimulator, PackState, Trajectory};

/// Why a filter stopped before the end of the horizon.
#[derive(Clone, Debug, PartialEq)]
pub struct FilterFailure {
    pub step: usize,
    pub message: String,
}

/// Estimates of one filter over the horizon.
#[derive(Clone, Debug)]
pub struct FilterRun {
    pub kind: FilterKind,
    /// Estimate of every cell at every completed step, starting at the initial guess.
    pub estimates: Vec<Vec<CellState>>,
    /// Trace of each cell's covariance block at every completed step.
    pub p_trace: Vec<Vec<f64>>,
    /// Consistency margin against the centralized covariance; NaN when unavailable.
    pub margins: Vec<f64>,
    /// Per-step timing samples: one per step for the centralized filter, one per node otherwise.
    pub timings: Vec<Vec<Duration>>,
    pub failure: Option<FilterFailure>,
}

impl FilterRun {
    fn new(kind: FilterKind, steps: usize) -> Self {
        Self {
            kind,
            estimates: Vec::with_capacity(steps),
            p_trace: Vec::with_capacity(steps),
            margins: Vec::with_capacity(steps),
            timings: Vec::with_capacity(steps),
            failure: None,
        }
    }

    pub fn completed(&self) -> bool {
        self.failure.is_none()
    }

    pub fn median_step_time(&self) -> Option<Duration> {
        median_after_warmup(&self.timings)
    }
}

/// Scores of one filter.
#[derive(Clone, Debug, PartialEq)]
pub struct FilterMetrics {
    pub kind: FilterKind,
    /// RMS relative error per state; `None` if the filter did not finish.
    pub rmse: Option<[f64; STATE_DIM]>,
    /// `rmse` divided by the centralized filter's; `None` without a reference.
    pub normalized: Option<[f64; STATE_DIM]>,
}

#[derive(Clone, Debug)]
pub struct ExperimentOutput {
    pub trajectory: Trajectory,
    pub runs: Vec<FilterRun>,
    pub metrics: Vec<FilterMetrics>,
    pub clamp_events: u64,
}

impl ExperimentOutput {
    pub fn run(&self, kind: FilterKind) -> Option<&FilterRun> {
        self.runs.iter().find(|r| r.kind == kind)
    }

    pub fn metrics_of(&self, kind: FilterKind) -> Option<&FilterMetrics> {
        self.metrics.iter().find(|m| m.kind == kind)
    }
}

/// Simulate the plant described by a scenario.
pub fn simulate(scenario: &Scenario) -> Result<(Trajectory, u64)> {
    scenario.validate()?;
    let nominal = scenario.cell_model()?;
    let mut plant = PackSimulator::new(&nominal, scenario.pack.clone(), scenario.seed)?;
    let initial = PackState::uniform(scenario.pack.cells, scenario.initial.truth());
    let traj = plant.run(
        &initial,
        &scenario.drive_profile()?,
        &scenario.switching_signal()?,
        scenario.steps()?,
    )?;
    Ok((traj, plant.clamp_events()))
}

fn filter_model(scenario: &Scenario, kind: FilterKind) -> Result<FilterModel> {
    FilterModel::new(scenario.cell_model()?, &scenario.pack, kind.variant())
}

fn tuning_for(scenario: &Scenario, kind: FilterKind) -> &FilterTuning {
    match kind {
        FilterKind::Cukf => &scenario.cukf,
        _ => &scenario.pukf,
    }
}

fn trace(p: &DMatrix<f64>) -> f64 {
    p.diagonal().sum()
}

/// Record a step failure, or propagate it when it is an input problem.
fn absorb(run: &mut FilterRun, k: usize, e: Error) -> Result<()> {
    if e.is_validation() {
        return Err(e.at_step(k));
    }
    run.failure = Some(FilterFailure { step: k, message: e.to_string() });
    Ok(())
}

fn run_centralized(
    scenario: &Scenario,
    records: &[MeasurementRecord],
    keep_cov: bool,
) -> Result<(FilterRun, Vec<DMatrix<f64>>)> {
    let m = scenario.pack.cells;
    let initial = vec![scenario.initial.estimate(); m];
    let mut f = CentralizedUkf::new(filter_model(scenario, FilterKind::Cukf)?, &scenario.cukf, &initial)?;
    let mut run = FilterRun::new(FilterKind::Cukf, records.len());
    let mut covs = Vec::new();
    for k in 0..records.len() {
        if k > 0 {
            let start = Instant::now();
            let r = f.step(&records[k - 1], &records[k]);
            let elapsed = start.elapsed();
            if let Err(e) = r {
                absorb(&mut run, k, e)?;
                break;
            }
            run.timings.push(vec![elapsed]);
        }
        run.estimates.push(f.estimates());
        run.p_trace.push((0..m).map(|i| trace(&f.cell_cov(i))).collect());
        run.margins.push(f64::NAN);
        if keep_cov {
            covs.push(f.belief().cov.clone());
        }
    }
    Ok((run, covs))
}

fn run_partitioned(
    scenario: &Scenario,
    kind: FilterKind,
    records: &[MeasurementRecord],
    reference: &[DMatrix<f64>],
) -> Result<FilterRun> {
    let m = scenario.pack.cells;
    let initial = vec![scenario.initial.estimate(); m];
    let mut f = Pukf::new(filter_model(scenario, kind)?, tuning_for(scenario, kind), &initial)?;
    let mut run = FilterRun::new(kind, records.len());
    for k in 0..records.len() {
        if k > 0 {
            if let Err(e) = f.step(&records[k - 1], &records[k]) {
                absorb(&mut run, k, e)?;
                break;
            }
            run.timings.push(f.node_times().to_vec());
        }
        let covs = f.covariances();
        run.estimates.push(f.estimates());
        run.p_trace.push(covs.iter().map(trace).collect());
        run.margins.push(match reference.get(k) {
            Some(p_c) => consistency_margin(&covs, p_c)?,
            None => f64::NAN,
        });
    }
    Ok(run)
}

/// Score every run against the truth; normalization uses the centralized run.
pub fn score(truth: &[Vec<CellState>], runs: &[FilterRun]) -> Result<Vec<FilterMetrics>> {
    let raw: Vec<Option<[f64; STATE_DIM]>> = runs
        .iter()
        .map(|r| if r.completed() { rmse(truth, &r.estimates).map(Some) } else { Ok(None) })
        .collect::<Result<_>>()?;
    let reference = runs
        .iter()
        .zip(&raw)
        .find(|(r, _)| r.kind == FilterKind::Cukf)
        .and_then(|(_, e)| *e);
    runs.iter()
        .zip(raw)
        .map(|(r, eps)| {
            let normalized = match (eps, reference) {
                (Some(e), Some(c)) => normalize_metrics(&e, &c).ok(),
                _ => None,
            };
            Ok(FilterMetrics { kind: r.kind, rmse: eps, normalized })
        })
        .collect()
}

/// Replay recorded measurements through the selected filters.
pub fn replay(scenario: &Scenario, records: &[MeasurementRecord], filters: &[FilterKind]) -> Result<Vec<FilterRun>> {
    let mut kinds = filters.to_vec();
    kinds.sort();
    kinds.dedup();
    let want_margin = kinds.contains(&FilterKind::Pukf) && kinds.contains(&FilterKind::Cukf);
    let mut runs = Vec::with_capacity(kinds.len());
    let mut reference = Vec::new();
    if kinds.contains(&FilterKind::Cukf) {
        let (run, covs) = run_centralized(scenario, records, want_margin)?;
        runs.push(run);
        reference = covs;
    }
    for &kind in kinds.iter().filter(|k| **k != FilterKind::Cukf) {
        let refs: &[DMatrix<f64>] = if kind == FilterKind::Pukf { &reference } else { &[] };
        runs.push(run_partitioned(scenario, kind, records, refs)?);
    }
    Ok(runs)
}

/// Simulate, estimate and score a scenario.
pub fn run_experiment(scenario: &Scenario) -> Result<ExperimentOutput> {
    let (trajectory, clamp_events) = simulate(scenario)?;
    let runs = replay(scenario, &trajectory.records, &scenario.filters)?;
    let metrics = score(&trajectory.truth, &runs)?;
    Ok(ExperimentOutput { trajectory, runs, metrics, clamp_events })
}

/// Simulate the calibration horizon and search the alpha grid.
pub fn calibrate(scenario: &Scenario) -> Result<Calibration> {
    let (traj, _) = simulate(scenario)?;
    let ts = scenario.cell_params()?.sample_time;
    let horizon = scenario.calibration.horizon.unwrap_or(scenario.horizon);
    let steps = ((horizon / ts).round() as usize).min(traj.records.len());
    let model = filter_model(scenario, FilterKind::Pukf)?;
    let initial = vec![scenario.initial.estimate(); scenario.pack.cells];
    calibrate_alpha(
        &model,
        &scenario.pukf,
        scenario.calibration.centralized_alpha,
        &initial,
        &traj.records[..steps],
        &scenario.calibration.grid(),
    )
}
