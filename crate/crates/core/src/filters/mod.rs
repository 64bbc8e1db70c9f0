//! Pack-level filter model and the two estimators built on it.
//!
//! [`FilterModel`] is the nominal (unperturbed) pack model seen by the
//! estimators, optionally simplified by a [`ModelVariant`]. The plant is never
//! affected by the variant.

mod centralized;
mod partitioned;

pub use centralized::CentralizedUkf;
pub use partitioned::{
    alpha_grid, calibrate_alpha, consistency_margin, neighbor_coupling_term, Calibration, CandidateTrace, NeighborMessage, NodeFilter,
    Pukf, CONSISTENCY_TOLERANCE,
};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::cell::{CellModel, CellState, Neighbor, STATE_DIM};
use crate::error::{Error, Result};
use crate::sim::PackConfig;
use crate::topology::Adjacency;
use crate::ukf::{GaussianBelief, SigmaSpace, UkfSettings};

/// Measurements per cell: terminal voltage and surface temperature.
pub const OUTPUT_DIM: usize = 2;

/// Model simplifications used by the ablation filters.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelVariant {
    #[default]
    Full,
    /// Electrolyte concentrations held at their initial value.
    FrozenElectrolyte,
    /// No inter-cell heat conduction.
    NoCoupling,
    /// Core and surface temperatures held at ambient.
    FrozenThermal,
}

/// Filter tuning shared by every node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterTuning {
    pub p0: [f64; STATE_DIM],
    pub q: [f64; STATE_DIM],
    pub r: [f64; OUTPUT_DIM],
    pub alpha: f64,
    pub beta: f64,
    #[serde(default)]
    pub space: SigmaSpace,
}

impl FilterTuning {
    /// Tuning used for the partitioned filter in the reference scenario.
    pub fn partitioned_default() -> Self {
        Self {
            p0: [1e-8; STATE_DIM],
            q: [1e-10, 1e-9, 1e-9, 1e-9, 1e-9, 1e-9],
            r: [1e-5, 1e-4],
            alpha: 0.0245,
            beta: 2.0,
            space: SigmaSpace::Augmented,
        }
    }

    /// Tuning used for the centralized filter in the reference scenario.
    pub fn centralized_default() -> Self {
        Self {
            alpha: 1e-2,
            ..Self::partitioned_default()
        }
    }

    pub fn with_alpha(&self, alpha: f64) -> Self {
        Self { alpha, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.p0.iter().chain(&self.q).chain(&self.r).all(|v| *v >= 0.0 && v.is_finite())
            && self.r.iter().all(|v| *v > 0.0)
            && self.alpha > 0.0
            && self.beta.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::Validation(format!("invalid filter tuning {self:?}")))
        }
    }

    /// Settings for a filter over `cells` stacked cells.
    pub(crate) fn settings(&self, cells: usize) -> Result<UkfSettings> {
        let q = DVector::from_iterator(cells * STATE_DIM, (0..cells).flat_map(|_| self.q));
        let r = DVector::from_iterator(cells * OUTPUT_DIM, (0..cells).flat_map(|_| self.r));
        UkfSettings::new(self.space, self.alpha, self.beta, DMatrix::from_diagonal(&q), DMatrix::from_diagonal(&r))
    }
}

/// Nominal pack model used inside the estimators.
#[derive(Clone, Debug)]
pub struct FilterModel {
    cell: CellModel,
    cells: usize,
    couplings: Vec<Vec<(usize, f64)>>,
    ambient: f64,
    variant: ModelVariant,
}

impl FilterModel {
    pub fn new(cell: CellModel, pack: &PackConfig, variant: ModelVariant) -> Result<Self> {
        pack.validate()?;
        let adjacency = Adjacency::new(&pack.layout, pack.cells)?;
        Ok(Self::from_adjacency(cell, &adjacency, pack.edge_conductance, pack.ambient, variant))
    }

    pub fn from_adjacency(cell: CellModel, adjacency: &Adjacency, conductance: f64, ambient: f64, variant: ModelVariant) -> Self {
        let cells = adjacency.cell_count();
        let k = cell.coupling_coefficient(conductance);
        let couplings = (0..cells)
            .map(|i| match variant {
                ModelVariant::NoCoupling => Vec::new(),
                _ => adjacency.neighbors(i).iter().map(|&j| (j, k)).collect(),
            })
            .collect();
        Self {
            cell,
            cells,
            couplings,
            ambient,
            variant,
        }
    }

    pub fn cell_count(&self) -> usize {
        self.cells
    }

    pub fn variant(&self) -> ModelVariant {
        self.variant
    }

    pub fn ambient(&self) -> f64 {
        self.ambient
    }

    pub fn cell(&self) -> &CellModel {
        &self.cell
    }

    /// Thermal neighbours of cell `i` with their per-step coupling coefficients.
    pub fn couplings(&self, i: usize) -> &[(usize, f64)] {
        &self.couplings[i]
    }

    /// Initial filter mean for one cell, honouring the variant.
    pub fn initial_estimate(&self, x: &CellState) -> CellState {
        let mut x = *x;
        match self.variant {
            ModelVariant::FrozenElectrolyte => {
                let ce0 = self.cell.params().electrolyte.initial_concentration;
                x.ce1 = ce0;
                x.ce2 = ce0;
            }
            ModelVariant::FrozenThermal => {
                x.tc = self.ambient;
                x.ts = self.ambient;
            }
            _ => {}
        }
        x
    }

    /// Deterministic part of the state update of one cell.
    pub fn cell_transition(&self, x: &[f64], neighbors: &[Neighbor], j: f64, v_meas: f64) -> Result<DVector<f64>> {
        let s = CellState::from_slice(x);
        let mut n = self.cell.state_transition(&s, neighbors, j, v_meas, self.ambient)?;
        match self.variant {
            ModelVariant::FrozenElectrolyte => {
                let ce0 = self.cell.params().electrolyte.initial_concentration;
                n.ce1 = ce0;
                n.ce2 = ce0;
            }
            ModelVariant::FrozenThermal => {
                n.tc = self.ambient;
                n.ts = self.ambient;
            }
            _ => {}
        }
        Ok(DVector::from_row_slice(&n.to_array()))
    }

    /// Predicted `[V, Ts]` of one cell at current `j`.
    pub fn cell_output(&self, x: &[f64], j: f64) -> Result<[f64; OUTPUT_DIM]> {
        let mut s = CellState::from_slice(x);
        if self.variant == ModelVariant::FrozenThermal {
            s.tc = self.ambient;
        }
        Ok([self.cell.output_voltage(&s, j)?, s.ts])
    }

    /// Belief over one cell built from the tuning.
    pub(crate) fn cell_belief(&self, x0: &CellState, tuning: &FilterTuning) -> GaussianBelief {
        let x0 = self.initial_estimate(x0);
        GaussianBelief {
            mean: DVector::from_row_slice(&x0.to_array()),
            cov: DMatrix::from_diagonal(&DVector::from_row_slice(&tuning.p0)),
        }
    }
}

/// Reject non-finite estimates as divergence.
pub(crate) fn check_finite(b: &GaussianBelief, who: &str) -> Result<()> {
    if b.mean.iter().chain(b.cov.iter()).all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Divergence(format!("{who} produced a non-finite estimate")))
    }
}
