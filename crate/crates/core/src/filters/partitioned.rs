use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;

use super::{check_finite, CentralizedUkf, FilterModel, FilterTuning};
use crate::cell::{CellState, Neighbor, STATE_DIM, TS};
use crate::error::{Error, Result};
use crate::sim::MeasurementRecord;
use crate::ukf::{sigma_points, unscented_step, GaussianBelief, UkfSettings};

/// Consistency bound on the smallest eigenvalue of `blockdiag(P_i) - P_c`.
pub const CONSISTENCY_TOLERANCE: f64 = -1e-8;

/// Belief broadcast by one node to its neighbours.
#[derive(Clone, Debug, PartialEq)]
pub struct NeighborMessage {
    pub sender: usize,
    pub step: usize,
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    /// Sigma-point spread of the sender.
    pub gamma: f64,
}

/// Local filter of one sensor node.
#[derive(Clone, Debug)]
pub struct NodeFilter {
    pub cell: usize,
    pub belief: GaussianBelief,
    pub settings: UkfSettings,
    /// Predicted `[V, Ts]` of the last update.
    pub last_output: Option<DVector<f64>>,
}

/// Neighbour states regenerated as sigma points; column `l` pairs with own point `l`.
fn regenerate(msg: &NeighborMessage) -> Result<DMatrix<f64>> {
    let b = GaussianBelief::new(msg.mean.clone(), msg.cov.clone())?;
    Ok(sigma_points(&b, msg.gamma)?.0)
}

/// Surface temperature of a regenerated neighbour paired with own point `l`.
/// Own points beyond the neighbour's count are paired with its mean.
fn paired_ts(points: &DMatrix<f64>, l: usize) -> f64 {
    let col = if l < points.ncols() { l } else { 0 };
    points[(TS, col)]
}

/// Additive Ts contribution `sum_j k_ij Ts_j` for each of `own_count` sigma points.
pub fn neighbor_coupling_term(own_count: usize, neighbors: &[(f64, DMatrix<f64>)]) -> Vec<f64> {
    (0..own_count)
        .map(|l| neighbors.iter().map(|(k, pts)| k * paired_ts(pts, l)).sum())
        .collect()
}

impl NodeFilter {
    fn message(&self, step: usize) -> NeighborMessage {
        NeighborMessage {
            sender: self.cell,
            step,
            mean: self.belief.mean.clone(),
            cov: self.belief.cov.clone(),
            gamma: self.settings.weights.gamma,
        }
    }

    fn update(
        &mut self,
        model: &FilterModel,
        neighbors: &[(f64, DMatrix<f64>)],
        prev: &MeasurementRecord,
        now: &MeasurementRecord,
    ) -> Result<()> {
        let i = self.cell;
        let process = |l: usize, x: &DVector<f64>| -> Result<DVector<f64>> {
            let nbrs: Vec<Neighbor> = neighbors
                .iter()
                .map(|(k, pts)| Neighbor { ts: paired_ts(pts, l), coupling: *k })
                .collect();
            model.cell_transition(x.as_slice(), &nbrs, prev.current[i], prev.voltage[i])
        };
        let measure = |x: &DVector<f64>| -> Result<DVector<f64>> {
            Ok(DVector::from_row_slice(&model.cell_output(x.as_slice(), now.current[i])?))
        };
        let y = DVector::from_row_slice(&[now.voltage[i], now.surface_temp[i]]);
        let out = unscented_step(&self.belief, &self.settings, process, measure, &y)?;
        check_finite(&out.posterior, &format!("node {}", i + 1))?;
        self.belief = out.posterior;
        self.last_output = Some(out.predicted_output);
        Ok(())
    }
}

/// Partition-based UKF: one local filter per cell exchanging beliefs with its neighbours.
#[derive(Clone, Debug)]
pub struct Pukf {
    model: FilterModel,
    nodes: Vec<NodeFilter>,
    step: usize,
    node_times: Vec<Duration>,
}

impl Pukf {
    pub fn new(model: FilterModel, tuning: &FilterTuning, initial: &[CellState]) -> Result<Self> {
        tuning.validate()?;
        let m = model.cell_count();
        if initial.len() != m {
            return Err(Error::Validation(format!("{} initial states for {m} cells", initial.len())));
        }
        let settings = tuning.settings(1)?;
        let nodes = initial
            .iter()
            .enumerate()
            .map(|(i, x)| NodeFilter {
                cell: i,
                belief: model.cell_belief(x, tuning),
                settings: settings.clone(),
                last_output: None,
            })
            .collect();
        Ok(Self {
            model,
            nodes,
            step: 0,
            node_times: vec![Duration::ZERO; m],
        })
    }

    pub fn nodes(&self) -> &[NodeFilter] {
        &self.nodes
    }

    pub fn step_index(&self) -> usize {
        self.step
    }

    pub fn estimates(&self) -> Vec<CellState> {
        self.nodes.iter().map(|n| CellState::from_slice(n.belief.mean.as_slice())).collect()
    }

    pub fn covariances(&self) -> Vec<DMatrix<f64>> {
        self.nodes.iter().map(|n| n.belief.cov.clone()).collect()
    }

    /// Wall time of each node's last local update.
    pub fn node_times(&self) -> &[Duration] {
        &self.node_times
    }

    /// Beliefs every node sends at the current step.
    pub fn broadcast(&self) -> Vec<NeighborMessage> {
        self.nodes.iter().map(|n| n.message(self.step)).collect()
    }

    /// One synchronous round: every node gathers its neighbours' messages,
    /// then all nodes update concurrently.
    pub fn round(&mut self, messages: &[NeighborMessage], prev: &MeasurementRecord, now: &MeasurementRecord) -> Result<()> {
        let step = self.step;
        let model = &self.model;
        let gathered: Vec<Vec<(f64, &NeighborMessage)>> = (0..self.nodes.len())
            .map(|i| {
                model
                    .couplings(i)
                    .iter()
                    .map(|&(j, k)| {
                        let msg = messages.iter().find(|m| m.sender == j && m.step == step).ok_or_else(|| {
                            Error::Protocol(format!("node {} is missing the step-{step} message from node {}", i + 1, j + 1))
                        })?;
                        if msg.mean.len() != STATE_DIM || msg.cov.shape() != (STATE_DIM, STATE_DIM) {
                            return Err(Error::Protocol(format!("malformed message from node {}", j + 1)));
                        }
                        Ok((k, msg))
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<_>>()?;
        let results: Vec<(NodeFilter, Duration)> = self
            .nodes
            .par_iter()
            .zip(gathered.par_iter())
            .map(|(node, nbrs)| {
                let start = Instant::now();
                let nbrs = nbrs
                    .iter()
                    .map(|&(k, msg)| Ok((k, regenerate(msg)?)))
                    .collect::<Result<Vec<_>>>()?;
                let mut next = node.clone();
                next.update(model, &nbrs, prev, now)?;
                Ok((next, start.elapsed()))
            })
            .collect::<Result<_>>()?;
        for (i, (node, t)) in results.into_iter().enumerate() {
            self.nodes[i] = node;
            self.node_times[i] = t;
        }
        self.step += 1;
        Ok(())
    }

    /// Broadcast and update in one call.
    pub fn step(&mut self, prev: &MeasurementRecord, now: &MeasurementRecord) -> Result<()> {
        let msgs = self.broadcast();
        self.round(&msgs, prev, now)
    }
}

/// Smallest eigenvalue of `blockdiag(blocks) - p_c`.
pub fn consistency_margin(blocks: &[DMatrix<f64>], p_c: &DMatrix<f64>) -> Result<f64> {
    let n: usize = blocks.iter().map(|b| b.nrows()).sum();
    if p_c.shape() != (n, n) {
        return Err(Error::Validation(format!("block sizes sum to {n}, centralized covariance is {:?}", p_c.shape())));
    }
    let mut d = -p_c.clone();
    let mut off = 0;
    for b in blocks {
        let s = b.nrows();
        let mut view = d.view_mut((off, off), (s, s));
        view += b;
        off += s;
    }
    let t = d.transpose();
    d = (d + t) * 0.5;
    Ok(SymmetricEigen::new(d).eigenvalues.min())
}

/// Consistency margins of one candidate alpha over a recorded run.
#[derive(Clone, Debug, PartialEq)]
pub struct CandidateTrace {
    pub alpha: f64,
    /// Margin at every step reached; shorter than the record if the filter stopped.
    pub margins: Vec<f64>,
    /// Smallest margin and the step where it occurred.
    pub worst_margin: f64,
    pub worst_step: usize,
    /// Step at which the filter failed numerically, if it did.
    pub failed_at: Option<usize>,
}

impl CandidateTrace {
    pub fn satisfied(&self) -> bool {
        self.failed_at.is_none() && self.worst_margin >= CONSISTENCY_TOLERANCE
    }
}

/// Outcome of the alpha search: the full margin trace of every candidate,
/// in ascending alpha order, and the index of the first that satisfies the bound.
#[derive(Clone, Debug, PartialEq)]
pub struct Calibration {
    pub candidates: Vec<CandidateTrace>,
    pub chosen: Option<usize>,
}

impl Calibration {
    /// The selected candidate, or a calibration error naming the best one.
    pub fn selected(&self) -> Result<&CandidateTrace> {
        match self.chosen {
            Some(i) => Ok(&self.candidates[i]),
            None => {
                let best = self.candidates.iter().max_by(|a, b| a.worst_margin.total_cmp(&b.worst_margin));
                Err(Error::Calibration {
                    best_alpha: best.map_or(f64::NAN, |c| c.alpha),
                    best_margin: best.map_or(f64::NEG_INFINITY, |c| c.worst_margin),
                })
            }
        }
    }
}

/// Grid of candidate alphas `multiplier * base * sqrt(dimension)`.
pub fn alpha_grid(multipliers: &[f64], base: f64, dimension: usize) -> Vec<f64> {
    multipliers.iter().map(|m| m * base * (dimension as f64).sqrt()).collect()
}

/// Evaluate every grid value of alpha against the centralized covariance of a
/// recorded run and pick the smallest one for which the partitioned covariance
/// dominates the centralized one at every step.
pub fn calibrate_alpha(
    model: &FilterModel,
    tuning: &FilterTuning,
    centralized_alpha: f64,
    initial: &[CellState],
    records: &[MeasurementRecord],
    grid: &[f64],
) -> Result<Calibration> {
    if grid.is_empty() {
        return Err(Error::Validation("empty alpha grid".into()));
    }
    let mut cukf = CentralizedUkf::new(model.clone(), &tuning.with_alpha(centralized_alpha), initial)?;
    let mut reference = Vec::with_capacity(records.len());
    reference.push(cukf.belief().cov.clone());
    for k in 1..records.len() {
        cukf.step(&records[k - 1], &records[k]).map_err(|e| e.at_step(k))?;
        reference.push(cukf.belief().cov.clone());
    }
    let mut candidates = grid.to_vec();
    candidates.sort_by(f64::total_cmp);
    let traces = candidates
        .par_iter()
        .map(|&alpha| {
            let mut pukf = Pukf::new(model.clone(), &tuning.with_alpha(alpha), initial)?;
            let mut trace = CandidateTrace {
                alpha,
                margins: Vec::with_capacity(records.len()),
                worst_margin: f64::INFINITY,
                worst_step: 0,
                failed_at: None,
            };
            for (k, p_c) in reference.iter().enumerate() {
                if k > 0 {
                    if let Err(e) = pukf.step(&records[k - 1], &records[k]) {
                        if e.is_validation() {
                            return Err(e.at_step(k));
                        }
                        trace.failed_at = Some(k);
                        trace.worst_margin = f64::NEG_INFINITY;
                        break;
                    }
                }
                let margin = consistency_margin(&pukf.covariances(), p_c)?;
                if margin < trace.worst_margin {
                    trace.worst_margin = margin;
                    trace.worst_step = k;
                }
                trace.margins.push(margin);
            }
            Ok(trace)
        })
        .collect::<Result<Vec<_>>>()?;
    let chosen = traces.iter().position(CandidateTrace::satisfied);
    Ok(Calibration { candidates: traces, chosen })
}
