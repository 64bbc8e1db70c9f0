//! Cell parameter sets.
//!
//! Parameter files are TOML documents with the sections below (SI units
//! throughout). `[thermal]` accepts either physical lumped values or the
//! already-discretised per-step coefficients; see [`ThermalParams`].
//!
//! ```toml
//! area = 0.0716                 # m^2, electrode cross-section
//! film_resistance = 0.004       # ohm
//! transfer_coefficient = 0.5
//! sample_time = 1.0             # s
//!
//! [negative]                    # same keys for [positive]
//! particle_radius = 1e-5        # m
//! max_concentration = 24983.0   # mol/m^3
//! specific_area = 1.8e5         # 1/m
//! thickness = 1e-4              # m
//! eps_e = 0.3
//! rate_constant = 1e-5          # A m^2.5 / mol^1.5
//!
//! [solid]
//! diffusivity_ref = 3.9e-14     # m^2/s, negative electrode
//! beta = 0.2581988897471611
//! lithium_moles = 0.16007
//!
//! [electrolyte]
//! separator_thickness = 2.5e-5
//! separator_eps_e = 1.0
//! t_plus = 0.4
//! bruggeman = 1.5
//! initial_concentration = 1000.0
//! conductivity_ref = 1.0        # S/m
//!
//! [arrhenius]                   # activation energies, J/mol
//! t_ref = 298.15
//! solid_diffusivity = 35000.0
//! electrolyte_diffusivity = 26600.0
//! rate_constant = 30000.0
//! conductivity = 11000.0
//!
//! [thermal]
//! core_heat_capacity = 62.7     # J/K
//! surface_heat_capacity = 4.5   # J/K
//! core_surface_conductance = 0.515  # W/K
//! convection = 0.325            # W/K
//! interconnect_resistance = 1e-3    # ohm
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::electrolyte::EhmParams;
use crate::error::{Error, Result};

const REFERENCE: &str = include_str!("../../data/cell_reference.toml");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ElectrodeParams {
    pub particle_radius: f64,
    pub max_concentration: f64,
    pub specific_area: f64,
    pub thickness: f64,
    pub eps_e: f64,
    pub rate_constant: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolidParams {
    pub diffusivity_ref: f64,
    pub beta: f64,
    pub lithium_moles: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ElectrolyteParams {
    pub separator_thickness: f64,
    pub separator_eps_e: f64,
    pub t_plus: f64,
    pub bruggeman: f64,
    pub initial_concentration: f64,
    pub conductivity_ref: f64,
    /// Multiplier on every regional diffusivity (plant perturbation hook).
    #[serde(default = "one")]
    pub diffusivity_scale: f64,
    /// Total electrolyte lithium; defaults to a uniform `initial_concentration` fill.
    #[serde(default)]
    pub lithium_moles: Option<f64>,
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrheniusParams {
    pub t_ref: f64,
    pub solid_diffusivity: f64,
    pub electrolyte_diffusivity: f64,
    pub rate_constant: f64,
    pub conductivity: f64,
}

/// Two-state (core/surface) lumped thermal parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum ThermalParams {
    /// Lumped heat capacities (J/K) and conductances (W/K).
    Physical {
        core_heat_capacity: f64,
        surface_heat_capacity: f64,
        core_surface_conductance: f64,
        convection: f64,
        interconnect_resistance: f64,
    },
    /// Dimensionless per-step coefficients for a fixed sampling period.
    /// `*_heat_gain` are `sample_time / heat_capacity` in K/J.
    PerStep {
        sample_time: f64,
        core_coupling: f64,
        surface_coupling: f64,
        convection_coupling: f64,
        core_heat_gain: f64,
        surface_heat_gain: f64,
        interconnect_resistance: f64,
    },
}

/// Discrete thermal coefficients used by the state transition.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ThermalCoefficients {
    /// Core-surface exchange on the core row.
    pub core_coupling: f64,
    /// Core-surface exchange on the surface row.
    pub surface_coupling: f64,
    /// Convection on the surface row.
    pub convection_coupling: f64,
    /// K per J of heat deposited in the core during one step.
    pub core_heat_gain: f64,
    /// K per J of heat deposited at the surface during one step.
    pub surface_heat_gain: f64,
    pub interconnect_resistance: f64,
}

impl ThermalParams {
    pub fn coefficients(&self, ts: f64) -> Result<ThermalCoefficients> {
        match *self {
            ThermalParams::Physical {
                core_heat_capacity,
                surface_heat_capacity,
                core_surface_conductance,
                convection,
                interconnect_resistance,
            } => {
                let core_heat_gain = ts / core_heat_capacity;
                let surface_heat_gain = ts / surface_heat_capacity;
                Ok(ThermalCoefficients {
                    core_coupling: core_heat_gain * core_surface_conductance,
                    surface_coupling: surface_heat_gain * core_surface_conductance,
                    convection_coupling: surface_heat_gain * convection,
                    core_heat_gain,
                    surface_heat_gain,
                    interconnect_resistance,
                })
            }
            ThermalParams::PerStep {
                sample_time,
                core_coupling,
                surface_coupling,
                convection_coupling,
                core_heat_gain,
                surface_heat_gain,
                interconnect_resistance,
            } => {
                if (sample_time - ts).abs() > 1e-12 * ts.abs().max(1.0) {
                    return Err(Error::Parameter(format!(
                        "per-step thermal coefficients were given for ts={sample_time} s but the model runs at ts={ts} s"
                    )));
                }
                Ok(ThermalCoefficients {
                    core_coupling,
                    surface_coupling,
                    convection_coupling,
                    core_heat_gain,
                    surface_heat_gain,
                    interconnect_resistance,
                })
            }
        }
    }

    pub fn interconnect_resistance(&self) -> f64 {
        match *self {
            ThermalParams::Physical { interconnect_resistance, .. }
            | ThermalParams::PerStep { interconnect_resistance, .. } => interconnect_resistance,
        }
    }

    fn set_interconnect_resistance(&mut self, r: f64) {
        match self {
            ThermalParams::Physical { interconnect_resistance, .. }
            | ThermalParams::PerStep { interconnect_resistance, .. } => *interconnect_resistance = r,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellParams {
    pub area: f64,
    pub film_resistance: f64,
    pub transfer_coefficient: f64,
    #[serde(default = "one")]
    pub sample_time: f64,
    pub negative: ElectrodeParams,
    pub positive: ElectrodeParams,
    pub solid: SolidParams,
    pub electrolyte: ElectrolyteParams,
    pub arrhenius: ArrheniusParams,
    pub thermal: ThermalParams,
    /// Precomputed electrolyte reduction; derived from the geometry when absent.
    #[serde(default)]
    pub reduced: Option<EhmParams>,
}

/// Multiplicative perturbation applied to one plant cell.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Perturbation {
    pub solid_diffusivity: f64,
    pub electrolyte_diffusivity: f64,
    pub rate_constant: f64,
    pub interconnect_resistance: f64,
}

impl Default for Perturbation {
    fn default() -> Self {
        Self {
            solid_diffusivity: 1.0,
            electrolyte_diffusivity: 1.0,
            rate_constant: 1.0,
            interconnect_resistance: 1.0,
        }
    }
}

impl CellParams {
    /// Graphite/LiCoO2 reference cell (about 2.3 Ah usable).
    pub fn reference() -> Self {
        Self::parse(REFERENCE, "builtin:reference").expect("shipped parameter set is valid")
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let p: CellParams = toml::from_str(text).map_err(|e| Error::Parse {
            path: origin.to_string(),
            msg: e.to_string(),
        })?;
        p.validate()?;
        Ok(p)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("parameters serialize")
    }

    /// Charge moved per unit of negative-electrode stoichiometry, C.
    pub fn charge_per_stoichiometry(&self) -> f64 {
        let n = &self.negative;
        crate::consts::FARADAY * n.max_concentration * n.particle_radius * n.specific_area / 3.0
            * n.thickness
            * self.area
    }

    pub fn perturbed(&self, p: &Perturbation) -> Self {
        let mut out = self.clone();
        out.solid.diffusivity_ref *= p.solid_diffusivity;
        out.electrolyte.diffusivity_scale *= p.electrolyte_diffusivity;
        out.negative.rate_constant *= p.rate_constant;
        out.positive.rate_constant *= p.rate_constant;
        let r = out.thermal.interconnect_resistance() * p.interconnect_resistance;
        out.thermal.set_interconnect_resistance(r);
        if p.electrolyte_diffusivity != 1.0 {
            if let Some(ehm) = out.reduced.as_mut() {
                // Uniform diffusivity scaling only rescales time.
                ehm.g *= p.electrolyte_diffusivity;
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Parameter(format!("{name} must be positive and finite, got {v}")))
            }
        };
        let fraction = |name: &str, v: f64| {
            if v > 0.0 && v < 1.0 {
                Ok(())
            } else {
                Err(Error::Parameter(format!("{name} must lie in (0, 1), got {v}")))
            }
        };
        let volume = |name: &str, v: f64| {
            if v > 0.0 && v <= 1.0 {
                Ok(())
            } else {
                Err(Error::Parameter(format!("{name} must lie in (0, 1], got {v}")))
            }
        };
        positive("area", self.area)?;
        positive("film_resistance", self.film_resistance)?;
        positive("transfer_coefficient", self.transfer_coefficient)?;
        positive("sample_time", self.sample_time)?;
        for (tag, e) in [("negative", &self.negative), ("positive", &self.positive)] {
            positive(&format!("{tag}.particle_radius"), e.particle_radius)?;
            positive(&format!("{tag}.max_concentration"), e.max_concentration)?;
            positive(&format!("{tag}.specific_area"), e.specific_area)?;
            positive(&format!("{tag}.thickness"), e.thickness)?;
            positive(&format!("{tag}.rate_constant"), e.rate_constant)?;
            volume(&format!("{tag}.eps_e"), e.eps_e)?;
        }
        positive("solid.diffusivity_ref", self.solid.diffusivity_ref)?;
        fraction("solid.beta", self.solid.beta)?;
        positive("solid.lithium_moles", self.solid.lithium_moles)?;
        let el = &self.electrolyte;
        positive("electrolyte.separator_thickness", el.separator_thickness)?;
        volume("electrolyte.separator_eps_e", el.separator_eps_e)?;
        fraction("electrolyte.t_plus", el.t_plus)?;
        positive("electrolyte.bruggeman", el.bruggeman)?;
        positive("electrolyte.initial_concentration", el.initial_concentration)?;
        positive("electrolyte.conductivity_ref", el.conductivity_ref)?;
        positive("electrolyte.diffusivity_scale", el.diffusivity_scale)?;
        if let Some(n) = el.lithium_moles {
            positive("electrolyte.lithium_moles", n)?;
        }
        positive("arrhenius.t_ref", self.arrhenius.t_ref)?;
        match self.thermal {
            ThermalParams::Physical {
                core_heat_capacity,
                surface_heat_capacity,
                core_surface_conductance,
                convection,
                interconnect_resistance,
            } => {
                positive("thermal.core_heat_capacity", core_heat_capacity)?;
                positive("thermal.surface_heat_capacity", surface_heat_capacity)?;
                positive("thermal.core_surface_conductance", core_surface_conductance)?;
                if !(convection >= 0.0) || !(interconnect_resistance >= 0.0) {
                    return Err(Error::Parameter("thermal convection and resistance must be non-negative".into()));
                }
            }
            ThermalParams::PerStep {
                sample_time,
                core_heat_gain,
                surface_heat_gain,
                ..
            } => {
                positive("thermal.sample_time", sample_time)?;
                positive("thermal.core_heat_gain", core_heat_gain)?;
                positive("thermal.surface_heat_gain", surface_heat_gain)?;
            }
        }
        if let Some(r) = &self.reduced {
            r.validate()?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_round_trips_through_toml() {
        let p = CellParams::reference();
        let back = CellParams::parse(&p.to_toml(), "roundtrip").unwrap();
        assert_eq!(p, back);
    }

    #[test]
    fn reference_capacity_is_about_2_3_ah() {
        let p = CellParams::reference();
        // Usable window of 0.8 in negative stoichiometry.
        let ah = p.charge_per_stoichiometry() * 0.8 / 3600.0;
        assert!((ah - 2.3).abs() < 0.01, "{ah}");
    }

    #[test]
    fn rejects_out_of_range_values() {
        let mut p = CellParams::reference();
        p.solid.beta = 1.0;
        assert!(p.validate().is_err());
        let mut p = CellParams::reference();
        p.negative.eps_e = 0.0;
        assert!(p.validate().is_err());
        let mut p = CellParams::reference();
        p.area = -1.0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn per_step_thermal_must_match_sample_time() {
        let t = ThermalParams::PerStep {
            sample_time: 1.0,
            core_coupling: 0.01,
            surface_coupling: 0.1,
            convection_coupling: 0.07,
            core_heat_gain: 0.016,
            surface_heat_gain: 0.22,
            interconnect_resistance: 1e-3,
        };
        assert!(t.coefficients(1.0).is_ok());
        assert!(t.coefficients(0.5).is_err());
    }

    #[test]
    fn physical_thermal_converts_to_per_step() {
        let p = CellParams::reference();
        let c = p.thermal.coefficients(1.0).unwrap();
        assert!((c.core_coupling - 0.515 / 62.7).abs() < 1e-15);
        assert!((c.surface_coupling - 0.515 / 4.5).abs() < 1e-15);
        assert!((c.convection_coupling - 0.325 / 4.5).abs() < 1e-15);
    }
}
