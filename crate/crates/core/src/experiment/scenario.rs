//! Scenario files.
//!
//! A scenario is a TOML document whose first non-comment line must be the
//! schema tag `schema = "packest-scenario/1"`. Data references are file paths
//! relative to the scenario file, or `builtin:` names for the shipped data
//! (`builtin:reference`, `builtin:graphite`, `builtin:lco`).

use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::cell::{CellModel, CellParams, CellState, Electrode, OcvTable, STATE_DIM};
use crate::consts::DEFAULT_AMBIENT;
use crate::error::{Error, Result};
use crate::filters::{alpha_grid, FilterTuning, ModelVariant};
use crate::sim::{make_pulse_profile, DriveProfile, PackConfig, Pulse};
use crate::topology::{Configuration, SwitchingSignal};

pub const SCHEMA: &str = "packest-scenario/1";

/// Estimators that can be selected in a scenario.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterKind {
    Cukf,
    Pukf,
    PukfNoElectrolyte,
    PukfNoCoupling,
    PukfNoThermal,
}

impl FilterKind {
    pub const ALL: [FilterKind; 5] = [
        FilterKind::Cukf,
        FilterKind::Pukf,
        FilterKind::PukfNoElectrolyte,
        FilterKind::PukfNoCoupling,
        FilterKind::PukfNoThermal,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            FilterKind::Cukf => "cukf",
            FilterKind::Pukf => "pukf",
            FilterKind::PukfNoElectrolyte => "pukf_no_electrolyte",
            FilterKind::PukfNoCoupling => "pukf_no_coupling",
            FilterKind::PukfNoThermal => "pukf_no_thermal",
        }
    }

    pub fn variant(&self) -> ModelVariant {
        match self {
            FilterKind::Cukf | FilterKind::Pukf => ModelVariant::Full,
            FilterKind::PukfNoElectrolyte => ModelVariant::FrozenElectrolyte,
            FilterKind::PukfNoCoupling => ModelVariant::NoCoupling,
            FilterKind::PukfNoThermal => ModelVariant::FrozenThermal,
        }
    }
}

impl FromStr for FilterKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FilterKind::ALL
            .into_iter()
            .find(|k| k.name() == s.trim())
            .ok_or_else(|| Error::Validation(format!("unknown filter '{s}'")))
    }
}

impl std::fmt::Display for FilterKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellSection {
    #[serde(default = "builtin_reference")]
    pub params: String,
    #[serde(default = "builtin_graphite")]
    pub negative_ocv: String,
    #[serde(default = "builtin_lco")]
    pub positive_ocv: String,
}

fn builtin_reference() -> String {
    "builtin:reference".into()
}
fn builtin_graphite() -> String {
    "builtin:graphite".into()
}
fn builtin_lco() -> String {
    "builtin:lco".into()
}

impl Default for CellSection {
    fn default() -> Self {
        Self {
            params: builtin_reference(),
            negative_ocv: builtin_graphite(),
            positive_ocv: builtin_lco(),
        }
    }
}

/// True initial state and the multiplicative offset of the filters' initial guess.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    pub soc: f64,
    pub ce: f64,
    pub temperature: f64,
    /// Factors applied to `[soc, csc, ce1, ce2, tc, ts]` for the initial estimate.
    pub estimate_scale: [f64; 6],
}

impl Default for InitialSection {
    fn default() -> Self {
        Self {
            soc: 0.64,
            ce: 1000.0,
            temperature: DEFAULT_AMBIENT,
            estimate_scale: [1.05, 1.05, 1.05, 1.05, 0.99, 0.99],
        }
    }
}

impl InitialSection {
    pub fn truth(&self) -> CellState {
        CellState::relaxed(self.soc, self.ce, self.temperature)
    }

    pub fn estimate(&self) -> CellState {
        let t = self.truth().to_array();
        let mut e = [0.0; 6];
        for i in 0..6 {
            e[i] = t[i] * self.estimate_scale[i];
        }
        CellState::from_slice(&e)
    }
}

/// Either a periodic pulse train or explicit pulses.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DriveSection {
    Periodic {
        c_rate: f64,
        period: f64,
        duty: f64,
        capacity_ah: f64,
    },
    Explicit {
        pulses: Vec<Pulse>,
        capacity_ah: f64,
    },
}

/// One switching event; give either an id or explicit 1-based groups.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwitchEvent {
    pub start: f64,
    #[serde(default)]
    pub id: Option<u64>,
    #[serde(default)]
    pub groups: Option<Vec<Vec<usize>>>,
}

/// Alpha search: candidates are `multiplier * base_alpha * sqrt(state_dimension)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationSection {
    /// Alpha of the centralized reference run.
    pub centralized_alpha: f64,
    pub base_alpha: f64,
    pub state_dimension: usize,
    pub multipliers: Vec<f64>,
    /// Calibration horizon, s; defaults to the scenario horizon.
    #[serde(default)]
    pub horizon: Option<f64>,
}

impl Default for CalibrationSection {
    fn default() -> Self {
        Self {
            centralized_alpha: 1e-2,
            base_alpha: 1e-2,
            state_dimension: STATE_DIM,
            multipliers: vec![1.0, 1.5, 2.0, 2.45, 3.0, 4.0],
            horizon: None,
        }
    }
}

impl CalibrationSection {
    pub fn grid(&self) -> Vec<f64> {
        alpha_grid(&self.multipliers, self.base_alpha, self.state_dimension)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema: String,
    #[serde(default)]
    pub name: String,
    /// Simulated time, s.
    pub horizon: f64,
    #[serde(default)]
    pub seed: u64,
    /// Output directory, relative to the scenario file.
    #[serde(default)]
    pub output: Option<String>,
    #[serde(default = "all_filters")]
    pub filters: Vec<FilterKind>,
    /// Sampling period override, s.
    #[serde(default)]
    pub sample_time: Option<f64>,
    #[serde(default)]
    pub cell: CellSection,
    pub pack: PackConfig,
    #[serde(default)]
    pub initial: InitialSection,
    pub drive: DriveSection,
    pub switching: Vec<SwitchEvent>,
    #[serde(default = "FilterTuning::partitioned_default")]
    pub pukf: FilterTuning,
    #[serde(default = "FilterTuning::centralized_default")]
    pub cukf: FilterTuning,
    #[serde(default)]
    pub calibration: CalibrationSection,
    /// Directory that relative references resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn all_filters() -> Vec<FilterKind> {
    FilterKind::ALL.to_vec()
}

impl Scenario {
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let header = text
            .lines()
            .map(str::trim)
            .find(|l| !l.is_empty() && !l.starts_with('#'))
            .unwrap_or("");
        let expected = format!("schema = \"{SCHEMA}\"");
        if header.replace(' ', "") != expected.replace(' ', "") {
            return Err(Error::Parse {
                path: origin.into(),
                msg: format!("first line must be `{expected}`, found `{header}`"),
            });
        }
        let s: Scenario = toml::from_str(text).map_err(|e| Error::Parse {
            path: origin.into(),
            msg: e.to_string(),
        })?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut s = Self::parse(&text, &path.display().to_string())?;
        s.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        s.validate()?;
        Ok(s)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    fn resolve(&self, reference: &str) -> PathBuf {
        self.base_dir.join(reference)
    }

    pub fn cell_params(&self) -> Result<CellParams> {
        let mut p = match self.cell.params.strip_prefix("builtin:") {
            Some("reference") => CellParams::reference(),
            Some(other) => return Err(Error::Validation(format!("unknown builtin parameter set '{other}'"))),
            None => CellParams::load(&self.resolve(&self.cell.params))?,
        };
        if let Some(ts) = self.sample_time {
            p.sample_time = ts;
        }
        Ok(p)
    }

    fn ocv(&self, electrode: Electrode, reference: &str) -> Result<OcvTable> {
        match reference.strip_prefix("builtin:") {
            Some("graphite") if electrode == Electrode::Negative => Ok(OcvTable::builtin_graphite()),
            Some("lco") if electrode == Electrode::Positive => Ok(OcvTable::builtin_lco()),
            Some(other) => Err(Error::Validation(format!("builtin table '{other}' does not fit the {electrode:?} electrode"))),
            None => OcvTable::load(electrode, &self.resolve(reference)),
        }
    }

    /// Nominal cell model.
    pub fn cell_model(&self) -> Result<CellModel> {
        CellModel::new(
            self.cell_params()?,
            Arc::new(self.ocv(Electrode::Negative, &self.cell.negative_ocv)?),
            Arc::new(self.ocv(Electrode::Positive, &self.cell.positive_ocv)?),
        )
    }

    pub fn drive_profile(&self) -> Result<DriveProfile> {
        match &self.drive {
            DriveSection::Periodic { c_rate, period, duty, capacity_ah } => {
                make_pulse_profile(*c_rate, *period, *duty, self.horizon, *capacity_ah)
            }
            DriveSection::Explicit { pulses, capacity_ah } => DriveProfile::new(pulses.clone(), *capacity_ah),
        }
    }

    pub fn switching_signal(&self) -> Result<SwitchingSignal> {
        let m = self.pack.cells;
        let schedule = self
            .switching
            .iter()
            .map(|e| {
                let id = match (&e.id, &e.groups) {
                    (Some(id), None) => *id,
                    (None, Some(g)) => Configuration::from_groups(g)?.id(),
                    _ => {
                        return Err(Error::Validation(format!(
                            "switching event at t={} needs exactly one of `id` or `groups`",
                            e.start
                        )))
                    }
                };
                let cfg = Configuration::from_id(m, id)?;
                if cfg.cell_count() != m {
                    return Err(Error::Validation(format!("configuration at t={} does not cover {m} cells", e.start)));
                }
                if let Some(g) = &e.groups {
                    if g.iter().map(Vec::len).sum::<usize>() != m {
                        return Err(Error::Validation(format!("groups at t={} do not cover {m} cells", e.start)));
                    }
                }
                Ok((e.start, id))
            })
            .collect::<Result<Vec<_>>>()?;
        SwitchingSignal::new(schedule)
    }

    /// Number of sampling steps in the horizon.
    pub fn steps(&self) -> Result<usize> {
        let ts = self.cell_params()?.sample_time;
        Ok((self.horizon / ts).round() as usize)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema != SCHEMA {
            return Err(Error::Validation(format!("unsupported schema '{}'", self.schema)));
        }
        if !(self.horizon >= 0.0) {
            return Err(Error::Validation(format!("horizon {} must be non-negative", self.horizon)));
        }
        self.pack.validate()?;
        self.pukf.validate()?;
        self.cukf.validate()?;
        self.cell_model()?;
        self.drive_profile()?;
        let sw = self.switching_signal()?;
        if let Some((last, _)) = sw.schedule.last() {
            if *last > self.horizon {
                return Err(Error::Validation(format!(
                    "switching event at t={last} lies beyond the horizon {}",
                    self.horizon
                )));
            }
        }
        let init = &self.initial;
        init.truth().validate()?;
        init.estimate().validate()?;
        let grid = self.calibration.grid();
        if grid.is_empty() || grid.iter().any(|a| !(*a > 0.0 && a.is_finite())) || !(self.calibration.centralized_alpha > 0.0) {
            return Err(Error::Validation("calibration alphas must be positive".into()));
        }
        Ok(())
    }

    /// Output directory, resolved against the scenario location.
    pub fn output_dir(&self) -> PathBuf {
        match &self.output {
            Some(o) => self.resolve(o),
            None => self.resolve(&format!("out/{}", if self.name.is_empty() { "run" } else { &self.name })),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"schema = "packest-scenario/1"
name = "mini"
horizon = 20.0
seed = 3
filters = ["pukf", "cukf"]

[pack]
cells = 2

[drive]
c_rate = 1.0
period = 10.0
duty = 1.0
capacity_ah = 2.3

[[switching]]
start = 0.0
groups = [[1, 2]]
"#;

    #[test]
    fn parses_minimal_scenario() {
        let s = Scenario::parse(MINIMAL, "mini").unwrap();
        s.validate().unwrap();
        assert_eq!(s.filters, vec![FilterKind::Pukf, FilterKind::Cukf]);
        assert_eq!(s.switching_signal().unwrap().schedule, vec![(0.0, 1)]);
        assert_eq!(s.steps().unwrap(), 20);
        assert_eq!(s.pukf, FilterTuning::partitioned_default());
        let est = s.initial.estimate();
        assert!((est.soc - 0.672).abs() < 1e-12 && (est.ts - 295.1685).abs() < 1e-9);
    }

    #[test]
    fn round_trips_through_toml() {
        let s = Scenario::parse(MINIMAL, "mini").unwrap();
        let back = Scenario::parse(&s.to_toml(), "again").unwrap();
        assert_eq!(s, back);
    }

    #[test]
    fn rejects_missing_or_wrong_header() {
        let body = MINIMAL.replacen("schema = \"packest-scenario/1\"\n", "", 1);
        assert!(matches!(Scenario::parse(&body, "x"), Err(Error::Parse { .. })));
        let wrong = MINIMAL.replace("packest-scenario/1", "packest-scenario/9");
        assert!(Scenario::parse(&wrong, "x").is_err());
    }

    #[test]
    fn rejects_inconsistent_switching() {
        let bad = MINIMAL.replace("groups = [[1, 2]]", "groups = [[1], [3]]");
        let s = Scenario::parse(&bad, "x").unwrap();
        assert!(s.validate().is_err());
        let both = MINIMAL.replace("groups = [[1, 2]]", "groups = [[1, 2]]\nid = 1");
        assert!(Scenario::parse(&both, "x").unwrap().validate().is_err());
    }

    #[test]
    fn filter_names_round_trip() {
        for k in FilterKind::ALL {
            assert_eq!(k.name().parse::<FilterKind>().unwrap(), k);
        }
        assert!("ekf".parse::<FilterKind>().is_err());
    }
}
