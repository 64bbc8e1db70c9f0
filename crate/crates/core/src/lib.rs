//! Reduced-order electrochemical modelling and distributed state estimation
//! for electrically reconfigurable lithium-ion battery packs.
//!
//! The crate is organised bottom-up:
//!
//! - [`cell`]: single-cell reduced-order model (solid diffusion, electrolyte
//!   diffusion, two-state thermal model) and its function catalog.
//! - [`electrolyte`]: Padé reduction of the electrolyte diffusion transfer
//!   function to the two-tank form used by the cell model.
//! - [`topology`]: series/parallel configurations, Kirchhoff interconnection
//!   matrices, sensor-network adjacency and the per-group current solver.
//! - [`sim`]: the pack plant, producing truth and noisy measurement logs.
//! - [`ukf`]: augmented unscented transform and Kalman update.
//! - [`filters`]: pack-level filter model, centralized UKF and the
//!   partition-based UKF with neighbour message exchange.
//! - [`experiment`]: scenario files, end-to-end runs, metrics and CSV output.

// Negated comparisons are used on purpose so that NaN inputs are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cell;
pub mod consts;
pub mod electrolyte;
pub mod error;
pub mod experiment;
pub mod filters;
pub mod rng;
pub mod sim;
pub mod topology;
pub mod ukf;

pub use cell::{CellModel, CellParams, CellState, Electrode, OcvTable};
pub use electrolyte::{EhmParams, ElectrolyteTf};
pub use error::{Error, Result};
pub use filters::{CentralizedUkf, FilterModel, ModelVariant, Pukf};
pub use sim::{DriveProfile, MeasurementRecord, PackSimulator, PackState, Trajectory};
pub use topology::{Adjacency, Configuration, Interconnection, Layout, SwitchingSignal};
pub use ukf::{GaussianBelief, SigmaSpace, UtWeights};
