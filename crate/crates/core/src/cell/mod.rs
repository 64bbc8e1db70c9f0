//! Single-cell reduced-order model.
//!
//! Solid diffusion and electrolyte diffusion are each represented by a
//! two-tank equivalent hydraulic model, the temperature by a core/surface
//! lumped pair. [`CellModel`] bundles a validated parameter set with its OCV
//! tables and derived constants and exposes the output and state maps.

mod functions;
mod model;
mod ocv;
mod params;

pub use functions::{
    arrhenius, effective_transport, electrolyte_diffusivity_ref, electrolyte_positive_boundary,
    electrolyte_potential_difference, exchange_current_density, kinetic_overpotential,
    positive_stoichiometry, AffineMap, Electrode,
};
pub use model::{CellModel, CellState, Neighbor, VoltageTerms, CE1, CE2, CSC, SOC, STATE_DIM, TC, TS};
pub use ocv::{OcvPoint, OcvTable};
pub use params::{
    ArrheniusParams, CellParams, ElectrodeParams, ElectrolyteParams, Perturbation, SolidParams,
    ThermalCoefficients, ThermalParams,
};
