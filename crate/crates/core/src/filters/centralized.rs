use nalgebra::{DMatrix, DVector};

use super::{check_finite, FilterModel, FilterTuning, OUTPUT_DIM};
use crate::cell::{CellState, Neighbor, STATE_DIM, TS};
use crate::error::{Error, Result};
use crate::sim::MeasurementRecord;
use crate::ukf::{unscented_step, GaussianBelief, StepOutput, UkfSettings};

/// Unscented Kalman filter over the stacked state of all cells.
#[derive(Clone, Debug)]
pub struct CentralizedUkf {
    model: FilterModel,
    settings: UkfSettings,
    belief: GaussianBelief,
    last: Option<StepOutput>,
}

impl CentralizedUkf {
    pub fn new(model: FilterModel, tuning: &FilterTuning, initial: &[CellState]) -> Result<Self> {
        tuning.validate()?;
        let m = model.cell_count();
        if initial.len() != m {
            return Err(Error::Validation(format!("{} initial states for {m} cells", initial.len())));
        }
        let settings = tuning.settings(m)?;
        let n = m * STATE_DIM;
        let mut mean = DVector::zeros(n);
        let mut cov = DMatrix::zeros(n, n);
        for (i, x) in initial.iter().enumerate() {
            let b = model.cell_belief(x, tuning);
            mean.rows_mut(i * STATE_DIM, STATE_DIM).copy_from(&b.mean);
            cov.view_mut((i * STATE_DIM, i * STATE_DIM), (STATE_DIM, STATE_DIM)).copy_from(&b.cov);
        }
        Ok(Self {
            model,
            settings,
            belief: GaussianBelief { mean, cov },
            last: None,
        })
    }

    pub fn belief(&self) -> &GaussianBelief {
        &self.belief
    }

    pub fn settings(&self) -> &UkfSettings {
        &self.settings
    }

    pub fn last_step(&self) -> Option<&StepOutput> {
        self.last.as_ref()
    }

    pub fn estimates(&self) -> Vec<CellState> {
        (0..self.model.cell_count())
            .map(|i| CellState::from_slice(self.belief.mean.rows(i * STATE_DIM, STATE_DIM).as_slice()))
            .collect()
    }

    /// Covariance block of cell `i`.
    pub fn cell_cov(&self, i: usize) -> DMatrix<f64> {
        self.belief.cov.view((i * STATE_DIM, i * STATE_DIM), (STATE_DIM, STATE_DIM)).into_owned()
    }

    /// Propagate with the inputs of `prev` and correct with the measurements of `now`.
    pub fn step(&mut self, prev: &MeasurementRecord, now: &MeasurementRecord) -> Result<()> {
        let m = self.model.cell_count();
        let model = &self.model;
        let process = |_: usize, x: &DVector<f64>| -> Result<DVector<f64>> {
            let mut out = DVector::zeros(m * STATE_DIM);
            for i in 0..m {
                let nbrs: Vec<Neighbor> = model
                    .couplings(i)
                    .iter()
                    .map(|&(j, k)| Neighbor { ts: x[j * STATE_DIM + TS], coupling: k })
                    .collect();
                let xi = x.rows(i * STATE_DIM, STATE_DIM);
                let next = model.cell_transition(xi.as_slice(), &nbrs, prev.current[i], prev.voltage[i])?;
                out.rows_mut(i * STATE_DIM, STATE_DIM).copy_from(&next);
            }
            Ok(out)
        };
        let measure = |x: &DVector<f64>| -> Result<DVector<f64>> {
            let mut y = DVector::zeros(m * OUTPUT_DIM);
            for i in 0..m {
                let o = model.cell_output(x.rows(i * STATE_DIM, STATE_DIM).as_slice(), now.current[i])?;
                y[i * OUTPUT_DIM] = o[0];
                y[i * OUTPUT_DIM + 1] = o[1];
            }
            Ok(y)
        };
        let y = DVector::from_iterator(
            m * OUTPUT_DIM,
            (0..m).flat_map(|i| [now.voltage[i], now.surface_temp[i]]),
        );
        let out = unscented_step(&self.belief, &self.settings, process, measure, &y)?;
        check_finite(&out.posterior, "centralized filter")?;
        self.belief = out.posterior.clone();
        self.last = Some(out);
        Ok(())
    }
}
