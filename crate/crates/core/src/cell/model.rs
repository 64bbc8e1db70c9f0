use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::functions::{
    arrhenius, electrolyte_positive_boundary, electrolyte_potential_difference,
    exchange_current_density, kinetic_overpotential, positive_stoichiometry, AffineMap, Electrode,
};
use super::ocv::OcvTable;
use super::params::{CellParams, ThermalCoefficients};
use crate::consts::STOICH_CLAMP;
use crate::electrolyte::{self, EhmParams};
use crate::error::{Error, Result};

pub const SOC: usize = 0;
pub const CSC: usize = 1;
pub const CE1: usize = 2;
pub const CE2: usize = 3;
pub const TC: usize = 4;
pub const TS: usize = 5;
pub const STATE_DIM: usize = 6;

/// State of one cell: bulk and surface stoichiometry of the negative
/// electrode, the two electrolyte tanks (mol/m^3) and core/surface
/// temperatures (K).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellState {
    pub soc: f64,
    pub csc: f64,
    pub ce1: f64,
    pub ce2: f64,
    pub tc: f64,
    pub ts: f64,
}

impl CellState {
    /// Equilibrium state: surface equals bulk, uniform electrolyte, uniform temperature.
    pub fn relaxed(soc: f64, ce: f64, temperature: f64) -> Self {
        Self {
            soc,
            csc: soc,
            ce1: ce,
            ce2: ce,
            tc: temperature,
            ts: temperature,
        }
    }

    pub fn to_array(&self) -> [f64; STATE_DIM] {
        [self.soc, self.csc, self.ce1, self.ce2, self.tc, self.ts]
    }

    pub fn from_slice(x: &[f64]) -> Self {
        assert_eq!(x.len(), STATE_DIM, "cell state has {STATE_DIM} entries");
        Self {
            soc: x[SOC],
            csc: x[CSC],
            ce1: x[CE1],
            ce2: x[CE2],
            tc: x[TC],
            ts: x[TS],
        }
    }

    pub fn to_vector(&self) -> DVector<f64> {
        DVector::from_row_slice(&self.to_array())
    }

    pub fn validate(&self) -> Result<()> {
        let ok = (0.0..=1.0).contains(&self.soc)
            && (0.0..=1.0).contains(&self.csc)
            && self.ce1 > 0.0
            && self.ce2 > 0.0
            && self.tc > 0.0
            && self.ts > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!("cell state out of range: {self:?}")))
        }
    }
}

/// Thermal neighbour seen from one cell: its surface temperature and the
/// per-step conduction coefficient of the shared edge.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Neighbor {
    pub ts: f64,
    pub coupling: f64,
}

/// Additive contributions to the terminal voltage.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VoltageTerms {
    /// Open-circuit voltage at the surface stoichiometries.
    pub ocv: f64,
    /// Positive minus negative surface overpotential.
    pub overpotential: f64,
    /// Electrolyte potential difference between the terminals.
    pub electrolyte: f64,
    /// Film resistance drop, `-Rc J`.
    pub film: f64,
}

impl VoltageTerms {
    pub fn total(&self) -> f64 {
        self.ocv + self.overpotential + self.electrolyte + self.film
    }
}

/// A validated cell parameter set with its OCV tables and derived constants.
#[derive(Clone, Debug)]
pub struct CellModel {
    params: CellParams,
    negative_ocv: Arc<OcvTable>,
    positive_ocv: Arc<OcvTable>,
    solid_map: AffineMap,
    electrolyte_map: AffineMap,
    ehm: EhmParams,
    thermal: ThermalCoefficients,
    solid_gain: f64,
    ohmic_geometry: f64,
    clamp_events: Arc<AtomicU64>,
}

impl CellModel {
    pub fn new(params: CellParams, negative_ocv: Arc<OcvTable>, positive_ocv: Arc<OcvTable>) -> Result<Self> {
        params.validate()?;
        if negative_ocv.electrode() != Electrode::Negative || positive_ocv.electrode() != Electrode::Positive {
            return Err(Error::Parameter("OCV tables are assigned to the wrong electrodes".into()));
        }
        let n = &params.negative;
        let p = &params.positive;
        let el = &params.electrolyte;
        let area = params.area;

        let pos_capacity = p.max_concentration * p.particle_radius * p.thickness * p.specific_area;
        let solid_map = AffineMap {
            rho: -(n.particle_radius * n.thickness * n.specific_area * n.max_concentration) / pos_capacity,
            sigma: 3.0 * params.solid.lithium_moles / (pos_capacity * area),
        };

        let pos_volume = p.eps_e * p.thickness;
        let sep_volume = el.separator_eps_e * el.separator_thickness;
        let neg_volume = n.eps_e * n.thickness;
        let electrolyte_moles = el
            .lithium_moles
            .unwrap_or(el.initial_concentration * area * (neg_volume + sep_volume + pos_volume));
        let electrolyte_map = AffineMap {
            rho: -neg_volume / pos_volume,
            sigma: -sep_volume / pos_volume * el.initial_concentration + electrolyte_moles / (pos_volume * area),
        };

        let ehm = match &params.reduced {
            Some(r) => r.clone(),
            None => electrolyte::reduce(&params)?,
        };
        let ts = params.sample_time;
        let thermal = params.thermal.coefficients(ts)?;

        let solid_gain = 3.0
            / (n.particle_radius * n.max_concentration * crate::consts::FARADAY * n.specific_area * n.thickness * area);
        let b = el.bruggeman;
        let ohmic_geometry = p.thickness / (2.0 * p.eps_e.powf(b))
            + el.separator_thickness / el.separator_eps_e.powf(b)
            + n.thickness / (2.0 * n.eps_e.powf(b));

        let model = Self {
            params,
            negative_ocv,
            positive_ocv,
            solid_map,
            electrolyte_map,
            ehm,
            thermal,
            solid_gain,
            ohmic_geometry,
            clamp_events: Arc::new(AtomicU64::new(0)),
        };
        model.check_stability()?;
        Ok(model)
    }

    /// Reference parameters with the shipped graphite/LCO tables.
    pub fn reference() -> Result<Self> {
        Self::new(
            CellParams::reference(),
            Arc::new(OcvTable::builtin_graphite()),
            Arc::new(OcvTable::builtin_lco()),
        )
    }

    /// Same OCV tables, different parameters.
    pub fn with_params(&self, params: CellParams) -> Result<Self> {
        Self::new(params, self.negative_ocv.clone(), self.positive_ocv.clone())
    }

    fn check_stability(&self) -> Result<()> {
        let ts = self.params.sample_time;
        let t_ref = self.params.arrhenius.t_ref;
        let solid = self.solid_rate(t_ref)? * ts;
        let elec = self.electrolyte_rate(t_ref)? * ts;
        let th = &self.thermal;
        let checks = [
            ("solid relaxation g_s/b_s*ts", solid),
            ("electrolyte relaxation g_e/b_e*ts", elec),
            ("core thermal coefficient", th.core_coupling),
            ("surface thermal coefficient", th.surface_coupling + th.convection_coupling),
        ];
        for (name, v) in checks {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::Parameter(format!("{name} = {v} must lie in (0, 1) for a stable discretisation")));
            }
        }
        Ok(())
    }

    pub fn params(&self) -> &CellParams {
        &self.params
    }

    pub fn ehm(&self) -> &EhmParams {
        &self.ehm
    }

    pub fn thermal(&self) -> &ThermalCoefficients {
        &self.thermal
    }

    pub fn solid_map(&self) -> AffineMap {
        self.solid_map
    }

    pub fn electrolyte_map(&self) -> AffineMap {
        self.electrolyte_map
    }

    pub fn sample_time(&self) -> f64 {
        self.params.sample_time
    }

    /// Stoichiometry change per ampere-second of discharge.
    pub fn solid_gain(&self) -> f64 {
        self.solid_gain
    }

    /// Per-step conduction coefficient for an edge of the given conductance (W/K).
    pub fn coupling_coefficient(&self, conductance: f64) -> f64 {
        self.thermal.surface_heat_gain * conductance
    }

    /// Number of times a stoichiometry was clamped before evaluating kinetics.
    pub fn clamp_events(&self) -> u64 {
        self.clamp_events.load(Ordering::Relaxed)
    }

    fn clamp(&self, theta: f64) -> f64 {
        let c = theta.clamp(STOICH_CLAMP, 1.0 - STOICH_CLAMP);
        if c != theta {
            self.clamp_events.fetch_add(1, Ordering::Relaxed);
        }
        c
    }

    /// `g_s / b_s` at core temperature `tc`, 1/s.
    pub fn solid_rate(&self, tc: f64) -> Result<f64> {
        let s = &self.params.solid;
        let ds = arrhenius(s.diffusivity_ref, self.params.arrhenius.solid_diffusivity, tc, self.params.arrhenius.t_ref)?;
        let rs = self.params.negative.particle_radius;
        Ok(ds / (rs * rs) / (s.beta * (1.0 - s.beta)))
    }

    /// `g_e / b_e` at core temperature `tc`, 1/s.
    pub fn electrolyte_rate(&self, tc: f64) -> Result<f64> {
        let g = arrhenius(self.ehm.g, self.params.arrhenius.electrolyte_diffusivity, tc, self.params.arrhenius.t_ref)?;
        Ok(g / (self.ehm.beta * (1.0 - self.ehm.beta)))
    }

    /// Open-circuit voltage and its temperature derivative at negative stoichiometry `theta`.
    pub fn open_circuit(&self, theta: f64) -> Result<(f64, f64)> {
        let theta = self.clamp(theta);
        let theta_pos = positive_stoichiometry(theta, &self.solid_map)?;
        let up = self.positive_ocv.eval(theta_pos)?;
        let un = self.negative_ocv.eval(theta)?;
        Ok((up.ocv - un.ocv, up.docv_dt - un.docv_dt))
    }

    pub fn voltage_terms(&self, x: &CellState, j: f64) -> Result<VoltageTerms> {
        let pr = &self.params;
        let arr = &pr.arrhenius;
        let i = j / pr.area;
        let csc = self.clamp(x.csc);
        let csc_pos = positive_stoichiometry(csc, &self.solid_map)?;
        let ocv = self.positive_ocv.eval(csc_pos)?.ocv - self.negative_ocv.eval(csc)?.ocv;

        let ce = x.ce2;
        let ce_pos = electrolyte_positive_boundary(ce, &self.electrolyte_map)?;
        if !(ce_pos > 0.0) {
            return Err(Error::SingularKinetics(format!(
                "positive-terminal electrolyte concentration {ce_pos} is not positive"
            )));
        }
        let kn_neg = arrhenius(pr.negative.rate_constant, arr.rate_constant, x.tc, arr.t_ref)?;
        let kn_pos = arrhenius(pr.positive.rate_constant, arr.rate_constant, x.tc, arr.t_ref)?;
        let j0_neg = exchange_current_density(kn_neg, pr.negative.max_concentration, ce, csc)?;
        let j0_pos = exchange_current_density(kn_pos, pr.positive.max_concentration, ce_pos, csc_pos)?;
        let alpha0 = pr.transfer_coefficient;
        let eta_neg = kinetic_overpotential(
            Electrode::Negative,
            i,
            x.tc,
            alpha0,
            pr.negative.specific_area * pr.negative.thickness,
            j0_neg,
        );
        let eta_pos = kinetic_overpotential(
            Electrode::Positive,
            i,
            x.tc,
            alpha0,
            pr.positive.specific_area * pr.positive.thickness,
            j0_pos,
        );

        let kappa = arrhenius(pr.electrolyte.conductivity_ref, arr.conductivity, x.tc, arr.t_ref)?;
        let electrolyte = electrolyte_potential_difference(
            x.tc,
            ce,
            ce_pos,
            pr.electrolyte.initial_concentration,
            pr.electrolyte.t_plus,
            kappa,
            self.ohmic_geometry,
            i,
        );
        Ok(VoltageTerms {
            ocv,
            overpotential: eta_pos - eta_neg,
            electrolyte,
            film: -pr.film_resistance * j,
        })
    }

    pub fn output_voltage(&self, x: &CellState, j: f64) -> Result<f64> {
        Ok(self.voltage_terms(x, j)?.total())
    }

    /// One sampling step of the cell dynamics.
    ///
    /// `v_meas` is the terminal voltage used in the reversible heat term;
    /// `neighbors` lists the thermally adjacent cells.
    pub fn state_transition(
        &self,
        x: &CellState,
        neighbors: &[Neighbor],
        j: f64,
        v_meas: f64,
        t_amb: f64,
    ) -> Result<CellState> {
        let ts = self.params.sample_time;
        let th = &self.thermal;

        let solid_rate = self.solid_rate(x.tc)? * ts;
        let solid_in = -ts * self.solid_gain * j;
        let beta_s = self.params.solid.beta;
        let soc = x.soc + solid_in;
        let csc = solid_rate * x.soc + (1.0 - solid_rate) * x.csc + solid_in / (1.0 - beta_s);

        let elec_rate = self.electrolyte_rate(x.tc)? * ts;
        let elec_in = ts * self.ehm.gamma * j;
        let ce1 = x.ce1 + elec_in;
        let ce2 = elec_rate * x.ce1 + (1.0 - elec_rate) * x.ce2 + elec_in / (1.0 - self.ehm.beta);

        let (du, ddu_dt) = self.open_circuit(x.soc)?;
        let core_heat = (du - v_meas) * j - x.tc * ddu_dt * j;
        let tc = (1.0 - th.core_coupling) * x.tc + th.core_coupling * x.ts + th.core_heat_gain * core_heat;

        let mut exchange = 0.0;
        let mut incoming = 0.0;
        for nb in neighbors {
            exchange += nb.coupling;
            incoming += nb.coupling * nb.ts;
        }
        let surface_heat = th.interconnect_resistance * j * j;
        let tsurf = th.surface_coupling * x.tc
            + (1.0 - (th.surface_coupling + th.convection_coupling + exchange)) * x.ts
            + th.surface_heat_gain * surface_heat
            + th.convection_coupling * t_amb
            + incoming;

        Ok(CellState {
            soc,
            csc,
            ce1,
            ce2,
            tc,
            ts: tsurf,
        })
    }
}
