//! Shared fixtures for the packest benchmarks.

use std::path::PathBuf;

use packest_core::experiment::{self, Scenario};
use packest_core::filters::{FilterModel, ModelVariant};
use packest_core::{CellState, Trajectory};

/// Reference six-cell scenario shipped with the repository.
pub fn reference_scenario() -> Scenario {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/reference_m6.cfg");
    Scenario::load(&path).expect("reference scenario loads")
}

/// Reference scenario simulated for `horizon` seconds, with its full filter model.
pub fn recorded(horizon: f64) -> (Scenario, Trajectory, FilterModel, Vec<CellState>) {
    let mut s = reference_scenario();
    s.horizon = horizon;
    s.switching.retain(|e| e.start <= horizon);
    let (traj, _) = experiment::simulate(&s).expect("plant runs");
    let model = FilterModel::new(s.cell_model().expect("cell model"), &s.pack, ModelVariant::Full).expect("filter model");
    let initial = vec![s.initial.estimate(); s.pack.cells];
    (s, traj, model, initial)
}
