//! Pack plant: coupled cells under a drive profile and switching schedule.

use std::io::{Read, Write};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cell::{CellModel, CellState, Neighbor, Perturbation};
use crate::consts::DEFAULT_AMBIENT;
use crate::error::{Error, Result};
use crate::rng::substream;
use crate::topology::{assemble_interconnection, solve_cell_currents, Adjacency, Configuration, Layout, SwitchingSignal};

/// Constant-current interval; positive `c_rate` discharges.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pulse {
    pub start: f64,
    pub end: f64,
    pub c_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriveProfile {
    pub pulses: Vec<Pulse>,
    /// Nominal capacity used to convert C-rates to amperes, A h.
    pub capacity_ah: f64,
}

impl DriveProfile {
    pub fn new(mut pulses: Vec<Pulse>, capacity_ah: f64) -> Result<Self> {
        pulses.sort_by(|a, b| a.start.total_cmp(&b.start));
        let p = Self { pulses, capacity_ah };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.capacity_ah > 0.0) {
            return Err(Error::Validation(format!("capacity {} A h must be positive", self.capacity_ah)));
        }
        for p in &self.pulses {
            if !(p.end > p.start && p.c_rate.is_finite()) {
                return Err(Error::Validation(format!("invalid pulse {p:?}")));
            }
        }
        for w in self.pulses.windows(2) {
            if w[1].start < w[0].end {
                return Err(Error::Validation(format!("pulses {:?} and {:?} overlap", w[0], w[1])));
            }
        }
        Ok(())
    }

    /// Pack current at time `t`, A.
    pub fn current_at(&self, t: f64) -> f64 {
        let idx = self.pulses.partition_point(|p| p.start <= t);
        match idx.checked_sub(1).map(|i| &self.pulses[i]) {
            Some(p) if t < p.end => p.c_rate * self.capacity_ah,
            _ => 0.0,
        }
    }
}

/// Alternating discharge/charge pulses of `c_rate`.
///
/// Each period starts with a discharge pulse and continues with a charge
/// pulse half a period later; `duty` is the on-fraction of each half period.
pub fn make_pulse_profile(c_rate: f64, period: f64, duty: f64, horizon: f64, capacity_ah: f64) -> Result<DriveProfile> {
    if !(period > 0.0) || !(0.0..=1.0).contains(&duty) {
        return Err(Error::Validation(format!("invalid pulse period {period} or duty {duty}")));
    }
    let mut pulses = Vec::new();
    let on = 0.5 * period * duty;
    if on > 0.0 && c_rate != 0.0 {
        let mut start = 0.0;
        while start < horizon {
            pulses.push(Pulse { start, end: start + on, c_rate });
            let half = start + 0.5 * period;
            if half < horizon {
                pulses.push(Pulse { start: half, end: half + on, c_rate: -c_rate });
            }
            start += period;
        }
    }
    DriveProfile::new(pulses, capacity_ah)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PackState {
    pub cells: Vec<CellState>,
    pub time: f64,
    pub sigma: u64,
}

impl PackState {
    pub fn uniform(m: usize, cell: CellState) -> Self {
        Self {
            cells: vec![cell; m],
            time: 0.0,
            sigma: 0,
        }
    }
}

/// Sensor readings of one step. Per-cell vectors are indexed by cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasurementRecord {
    pub k: usize,
    pub t: f64,
    pub sigma: u64,
    pub pack_current: f64,
    pub pack_voltage: f64,
    /// Local cell currents, A (noise free).
    pub current: Vec<f64>,
    /// Noisy terminal voltages, V.
    pub voltage: Vec<f64>,
    /// Noisy surface temperatures, K.
    pub surface_temp: Vec<f64>,
}

/// Full plant log: truth at every step alongside the measurements.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trajectory {
    pub truth: Vec<Vec<CellState>>,
    pub true_voltage: Vec<Vec<f64>>,
    pub records: Vec<MeasurementRecord>,
    pub max_kirchhoff_residual: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Plant settings beyond the cell parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PackConfig {
    pub cells: usize,
    #[serde(default)]
    pub layout: Layout,
    /// Conductance of each thermal edge, W/K.
    #[serde(default = "default_edge_conductance")]
    pub edge_conductance: f64,
    #[serde(default = "default_ambient")]
    pub ambient: f64,
    /// Voltage measurement variance, V^2.
    #[serde(default = "default_voltage_var")]
    pub voltage_noise_var: f64,
    /// Surface temperature measurement variance, K^2.
    #[serde(default = "default_temperature_var")]
    pub temperature_noise_var: f64,
    /// Half-width of the uniform multiplicative spread on Ds, De, kn and R_IC.
    #[serde(default = "default_perturbation")]
    pub perturbation: f64,
    /// Optional diagonal process noise variance added to every cell state.
    #[serde(default)]
    pub process_noise: Option<[f64; 6]>,
}

fn default_edge_conductance() -> f64 {
    0.1
}
fn default_ambient() -> f64 {
    DEFAULT_AMBIENT
}
fn default_voltage_var() -> f64 {
    1e-5
}
fn default_temperature_var() -> f64 {
    1e-4
}
fn default_perturbation() -> f64 {
    0.02
}

impl PackConfig {
    pub fn new(cells: usize) -> Self {
        Self {
            cells,
            layout: Layout::default(),
            edge_conductance: default_edge_conductance(),
            ambient: default_ambient(),
            voltage_noise_var: default_voltage_var(),
            temperature_noise_var: default_temperature_var(),
            perturbation: default_perturbation(),
            process_noise: None,
        }
    }

    pub fn noise_free(mut self) -> Self {
        self.voltage_noise_var = 0.0;
        self.temperature_noise_var = 0.0;
        self.process_noise = None;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.cells == 0 {
            return Err(Error::Validation("pack needs at least one cell".into()));
        }
        let nonneg = [
            self.edge_conductance,
            self.voltage_noise_var,
            self.temperature_noise_var,
            self.perturbation,
        ];
        if nonneg.iter().any(|v| !(*v >= 0.0)) || !(self.ambient > 0.0) || self.perturbation >= 1.0 {
            return Err(Error::Validation(format!("invalid pack settings {self:?}")));
        }
        if let Some(q) = self.process_noise {
            if q.iter().any(|v| !(*v >= 0.0)) {
                return Err(Error::Validation("process noise variances must be non-negative".into()));
            }
        }
        Ok(())
    }
}

/// Draw the per-cell plant perturbations for a seed.
pub fn draw_perturbations(seed: u64, m: usize, spread: f64) -> Vec<Perturbation> {
    (0..m)
        .map(|i| {
            let mut rng = substream(seed, "perturbation", i);
            let mut f = || 1.0 + spread * (2.0 * rng.random::<f64>() - 1.0);
            Perturbation {
                solid_diffusivity: f(),
                electrolyte_diffusivity: f(),
                rate_constant: f(),
                interconnect_resistance: f(),
            }
        })
        .collect()
}

pub struct PackSimulator {
    config: PackConfig,
    models: Vec<CellModel>,
    adjacency: Adjacency,
    couplings: Vec<Vec<(usize, f64)>>,
    r_ic: Vec<f64>,
    measurement_rngs: Vec<ChaCha8Rng>,
    process_rngs: Vec<ChaCha8Rng>,
    last_split: Option<Vec<f64>>,
}

impl PackSimulator {
    /// Plant with per-cell perturbed copies of `nominal`.
    pub fn new(nominal: &CellModel, config: PackConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let m = config.cells;
        let models = draw_perturbations(seed, m, config.perturbation)
            .iter()
            .map(|p| nominal.with_params(nominal.params().perturbed(p)))
            .collect::<Result<Vec<_>>>()?;
        Self::with_models(models, config, seed)
    }

    /// Plant with explicitly given cell models.
    pub fn with_models(models: Vec<CellModel>, config: PackConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let m = config.cells;
        if models.len() != m {
            return Err(Error::Validation(format!("{} cell models for {m} cells", models.len())));
        }
        let adjacency = Adjacency::new(&config.layout, m)?;
        let couplings = (0..m)
            .map(|i| {
                adjacency
                    .neighbors(i)
                    .iter()
                    .map(|&j| (j, models[i].coupling_coefficient(config.edge_conductance)))
                    .collect()
            })
            .collect::<Vec<Vec<_>>>();
        for (i, c) in couplings.iter().enumerate() {
            let th = models[i].thermal();
            let total = th.surface_coupling + th.convection_coupling + c.iter().map(|x| x.1).sum::<f64>();
            if total >= 1.0 {
                return Err(Error::Parameter(format!(
                    "cell {} surface thermal coefficients sum to {total}, must stay below 1",
                    i + 1
                )));
            }
        }
        let r_ic = models.iter().map(|c| c.thermal().interconnect_resistance).collect();
        Ok(Self {
            measurement_rngs: (0..m).map(|i| substream(seed, "measurement", i)).collect(),
            process_rngs: (0..m).map(|i| substream(seed, "process", i)).collect(),
            config,
            models,
            adjacency,
            couplings,
            r_ic,
            last_split: None,
        })
    }

    pub fn config(&self) -> &PackConfig {
        &self.config
    }

    pub fn models(&self) -> &[CellModel] {
        &self.models
    }

    pub fn adjacency(&self) -> &Adjacency {
        &self.adjacency
    }

    pub fn sample_time(&self) -> f64 {
        self.models[0].sample_time()
    }

    pub fn clamp_events(&self) -> u64 {
        self.models.iter().map(|m| m.clamp_events()).sum()
    }

    /// Advance one sampling period.
    ///
    /// Returns the next state, the measurement record of the current step and
    /// the true (noise-free) voltages.
    pub fn step(&mut self, state: &PackState, k: usize, i_pack: f64, sigma: u64) -> Result<(PackState, MeasurementRecord, Vec<f64>, f64)> {
        let m = self.config.cells;
        if state.cells.len() != m {
            return Err(Error::Validation(format!("state has {} cells, pack has {m}", state.cells.len())));
        }
        let cfg = Configuration::from_id(m, sigma)?;
        let ic = assemble_interconnection(&cfg, &self.r_ic)?;
        let models = &self.models;
        let sol = solve_cell_currents(
            &cfg,
            &ic,
            i_pack,
            |c, j| models[c].output_voltage(&state.cells[c], j),
            self.last_split.as_deref(),
        )?;
        self.last_split = Some(sol.j.iter().copied().collect());

        let v_std = self.config.voltage_noise_var.sqrt();
        let t_std = self.config.temperature_noise_var.sqrt();
        let mut voltage = Vec::with_capacity(m);
        let mut surface_temp = Vec::with_capacity(m);
        for c in 0..m {
            let rng = &mut self.measurement_rngs[c];
            let nv: f64 = Normal::new(0.0, 1.0).expect("unit normal").sample(rng);
            let nt: f64 = Normal::new(0.0, 1.0).expect("unit normal").sample(rng);
            voltage.push(sol.v[c] + v_std * nv);
            surface_temp.push(state.cells[c].ts + t_std * nt);
        }
        let pack_voltage = cfg.groups().iter().map(|g| sol.v[g.start]).sum();

        let ambient = self.config.ambient;
        let couplings = &self.couplings;
        let mut next: Vec<CellState> = (0..m)
            .into_par_iter()
            .map(|c| {
                let nbrs: Vec<Neighbor> = couplings[c]
                    .iter()
                    .map(|&(j, k)| Neighbor { ts: state.cells[j].ts, coupling: k })
                    .collect();
                models[c].state_transition(&state.cells[c], &nbrs, sol.j[c], sol.v[c], ambient)
            })
            .collect::<Result<_>>()?;
        if let Some(q) = self.config.process_noise {
            for (c, x) in next.iter_mut().enumerate() {
                let mut arr = x.to_array();
                for (v, var) in arr.iter_mut().zip(q) {
                    let n: f64 = Normal::new(0.0, 1.0).expect("unit normal").sample(&mut self.process_rngs[c]);
                    *v += var.sqrt() * n;
                }
                *x = CellState::from_slice(&arr);
            }
        }

        let record = MeasurementRecord {
            k,
            t: state.time,
            sigma,
            pack_current: i_pack,
            pack_voltage,
            current: sol.j.iter().copied().collect(),
            voltage,
            surface_temp,
        };
        let out = PackState {
            cells: next,
            time: state.time + self.sample_time(),
            sigma,
        };
        Ok((out, record, sol.v.iter().copied().collect(), sol.residual))
    }

    /// Simulate `steps` sampling periods from `initial`.
    pub fn run(&mut self, initial: &PackState, drive: &DriveProfile, switching: &SwitchingSignal, steps: usize) -> Result<Trajectory> {
        drive.validate()?;
        switching.validate()?;
        let m = self.config.cells;
        for (_, id) in &switching.schedule {
            Configuration::from_id(m, *id)?;
        }
        let ts = self.sample_time();
        let mut traj = Trajectory::default();
        let mut state = initial.clone();
        for k in 0..steps {
            let t = k as f64 * ts;
            state.time = t;
            let sigma = switching.at(t);
            let (next, record, v_true, residual) = self
                .step(&state, k, drive.current_at(t), sigma)
                .map_err(|e| e.at_step(k))?;
            traj.truth.push(state.cells.clone());
            traj.true_voltage.push(v_true);
            traj.records.push(record);
            traj.max_kirchhoff_residual = traj.max_kirchhoff_residual.max(residual);
            state = next;
        }
        Ok(traj)
    }
}

/// One row of the plant log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct TruthRow {
    pub k: usize,
    pub t: f64,
    pub cell: usize,
    pub sigma: u64,
    pub J: f64,
    pub V: f64,
    pub V_noisy: f64,
    pub Ts: f64,
    pub Ts_noisy: f64,
    pub soc: f64,
    pub csc: f64,
    pub ce1: f64,
    pub ce2: f64,
    pub tc: f64,
}

/// Write the plant log as CSV; cells are numbered from 1.
pub fn write_truth_csv<W: Write>(traj: &Trajectory, out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    for ((rec, truth), v) in traj.records.iter().zip(&traj.truth).zip(&traj.true_voltage) {
        for (c, x) in truth.iter().enumerate() {
            w.serialize(TruthRow {
                k: rec.k,
                t: rec.t,
                cell: c + 1,
                sigma: rec.sigma,
                J: rec.current[c],
                V: v[c],
                V_noisy: rec.voltage[c],
                Ts: x.ts,
                Ts_noisy: rec.surface_temp[c],
                soc: x.soc,
                csc: x.csc,
                ce1: x.ce1,
                ce2: x.ce2,
                tc: x.tc,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_truth_csv<R: Read>(input: R) -> Result<Vec<TruthRow>> {
    let mut r = csv::Reader::from_reader(input);
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}
