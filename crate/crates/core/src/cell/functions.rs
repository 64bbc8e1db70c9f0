//! Scalar closed-form functions of the reduced-order cell model.
//!
//! Everything here is a pure function of its numeric arguments; the
//! [`CellModel`](super::CellModel) composes them with the parameter set.

use crate::consts::{FARADAY, GAS_CONSTANT};
use crate::error::{Error, Result};

/// Which electrode a kinetic quantity refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Electrode {
    Positive,
    Negative,
}

/// Arrhenius temperature correction `phi_ref * exp(E/R_g * (1/T_ref - 1/T))`.
pub fn arrhenius(phi_ref: f64, activation_energy: f64, tc: f64, t_ref: f64) -> Result<f64> {
    if !(tc > 0.0) || !(t_ref > 0.0) {
        return Err(Error::Domain(format!(
            "arrhenius needs positive temperatures, got tc={tc}, t_ref={t_ref}"
        )));
    }
    Ok(phi_ref * ((activation_energy / GAS_CONSTANT) * (1.0 / t_ref - 1.0 / tc)).exp())
}

/// Concentration-dependent electrolyte diffusivity at the reference temperature, m^2/s.
pub fn electrolyte_diffusivity_ref(ce: f64) -> Result<f64> {
    if !(ce >= 0.0) {
        return Err(Error::Domain(format!(
            "electrolyte concentration must be non-negative, got {ce}"
        )));
    }
    Ok(5.34e-10 * (-0.65 * ce / 1e3).exp())
}

/// Bruggeman correction `psi * eps^brug`.
pub fn effective_transport(psi: f64, eps_e: f64, brug: f64) -> Result<f64> {
    if !(eps_e > 0.0 && eps_e <= 1.0) {
        return Err(Error::Domain(format!(
            "volume fraction must lie in (0, 1], got {eps_e}"
        )));
    }
    Ok(psi * eps_e.powf(brug))
}

/// Affine map `rho * x + sigma` from a negative-electrode quantity to the
/// positive-electrode one, with the range check that goes with it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AffineMap {
    pub rho: f64,
    pub sigma: f64,
}

impl AffineMap {
    pub fn apply(&self, x: f64) -> f64 {
        self.rho * x + self.sigma
    }
}

/// Positive-electrode stoichiometry from the negative one via solid lithium balance.
pub fn positive_stoichiometry(theta_neg: f64, map: &AffineMap) -> Result<f64> {
    let theta_pos = map.apply(theta_neg);
    if !(0.0..=1.0).contains(&theta_pos) {
        return Err(Error::Domain(format!(
            "positive stoichiometry {theta_pos} (from negative {theta_neg}) is outside the OCV table domain [0, 1]"
        )));
    }
    Ok(theta_pos)
}

/// Electrolyte concentration at the positive terminal from the one at the negative terminal.
pub fn electrolyte_positive_boundary(ce_neg: f64, map: &AffineMap) -> Result<f64> {
    if !(ce_neg > 0.0) {
        return Err(Error::Domain(format!(
            "electrolyte concentration must be positive, got {ce_neg}"
        )));
    }
    Ok(map.apply(ce_neg))
}

/// Exchange current density `kn * cs_max * sqrt(ce * csc * (1 - csc))`, A/m^2.
pub fn exchange_current_density(rate_constant: f64, cs_max: f64, ce: f64, csc: f64) -> Result<f64> {
    if !(csc > 0.0 && csc < 1.0) {
        return Err(Error::SingularKinetics(format!(
            "surface stoichiometry {csc} must lie strictly inside (0, 1)"
        )));
    }
    if !(ce > 0.0) {
        return Err(Error::SingularKinetics(format!(
            "electrolyte concentration {ce} must be positive"
        )));
    }
    Ok(rate_constant * cs_max * (ce * csc * (1.0 - csc)).sqrt())
}

/// Butler-Volmer surface overpotential for a symmetric transfer coefficient.
///
/// `current_density` is the cell current over the cross-section (A/m^2,
/// positive on discharge) and `a_s_l` the product of specific interfacial
/// area and electrode thickness.
pub fn kinetic_overpotential(
    electrode: Electrode,
    current_density: f64,
    tc: f64,
    alpha0: f64,
    a_s_l: f64,
    j_n0: f64,
) -> f64 {
    let sign = match electrode {
        Electrode::Positive => -1.0,
        Electrode::Negative => 1.0,
    };
    GAS_CONSTANT * tc / (alpha0 * FARADAY) * (sign * current_density / (2.0 * a_s_l * j_n0)).asinh()
}

/// Electrolyte potential difference between the positive and negative terminals.
///
/// `ohmic_geometry` is `L+/(2 eps+^b) + Ls/eps_s^b + L-/(2 eps-^b)` and
/// `current_density` the cell current over the cross-section.
#[allow(clippy::too_many_arguments)]
pub fn electrolyte_potential_difference(
    tc: f64,
    ce: f64,
    ce_pos: f64,
    ce0: f64,
    t_plus: f64,
    kappa: f64,
    ohmic_geometry: f64,
    current_density: f64,
) -> f64 {
    2.0 * GAS_CONSTANT * tc / (FARADAY * ce0) * (1.0 - t_plus) * (ce_pos - ce)
        - ohmic_geometry / kappa * current_density
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn arrhenius_cases() {
        assert_eq!(arrhenius(5.0, 0.0, 310.0, 298.0).unwrap(), 5.0);
        assert_eq!(arrhenius(1.0, 42_000.0, 298.0, 298.0).unwrap(), 1.0);
        // E = R_g makes the exponent the bare reciprocal difference.
        let v = arrhenius(1.0, 8.31, 596.0, 298.0).unwrap();
        assert_relative_eq!(v, (1.0f64 / 298.0 - 1.0 / 596.0).exp(), max_relative = 1e-15);
        assert_relative_eq!(v, 1.001679, epsilon = 1e-6);
        assert!(matches!(arrhenius(1.0, 1.0, 0.0, 298.0), Err(Error::Domain(_))));
        assert!(matches!(arrhenius(1.0, 1.0, 300.0, -1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn diffusivity_table_row() {
        assert_eq!(electrolyte_diffusivity_ref(0.0).unwrap(), 5.34e-10);
        assert_relative_eq!(electrolyte_diffusivity_ref(1000.0).unwrap(), 2.787e-10, max_relative = 1e-3);
        assert_relative_eq!(
            electrolyte_diffusivity_ref(2000.0).unwrap(),
            5.34e-10 * (-1.3f64).exp(),
            max_relative = 1e-15
        );
        assert!(electrolyte_diffusivity_ref(-1.0).is_err());
    }

    #[test]
    fn bruggeman() {
        assert_eq!(effective_transport(3.0, 1.0, 2.7).unwrap(), 3.0);
        assert_relative_eq!(effective_transport(1.0, 0.5, 1.5).unwrap(), 0.353_553_390_6, epsilon = 1e-10);
        assert_eq!(effective_transport(0.0, 0.3, 1.5).unwrap(), 0.0);
        assert!(effective_transport(1.0, 0.0, 1.5).is_err());
        assert!(effective_transport(1.0, 1.2, 1.5).is_err());
    }

    #[test]
    fn stoichiometry_maps() {
        let sym = AffineMap { rho: -1.0, sigma: 1.0 };
        assert_relative_eq!(positive_stoichiometry(0.3, &sym).unwrap(), 0.7);
        let m = AffineMap { rho: -0.8, sigma: 0.9 };
        assert_eq!(positive_stoichiometry(0.0, &m).unwrap(), 0.9);
        let bad = AffineMap { rho: -0.8, sigma: 1.5 };
        let err = positive_stoichiometry(0.1, &bad).unwrap_err().to_string();
        assert!(err.contains("1.42"), "{err}");

        let e = AffineMap { rho: -1.0, sigma: 2000.0 };
        assert_eq!(electrolyte_positive_boundary(800.0, &e).unwrap(), 1200.0);
        assert!(electrolyte_positive_boundary(0.0, &e).is_err());
    }

    #[test]
    fn overpotential_cases() {
        for el in [Electrode::Positive, Electrode::Negative] {
            assert_eq!(kinetic_overpotential(el, 0.0, 298.0, 0.5, 1.0, 1.0), 0.0);
            let a = kinetic_overpotential(el, 3.0, 310.0, 0.5, 2.0, 0.7);
            let b = kinetic_overpotential(el, -3.0, 310.0, 0.5, 2.0, 0.7);
            assert_eq!(a, -b);
        }
        let expected = 8.31 * 298.0 / (0.5 * 96487.0) * 0.5f64.asinh();
        assert_relative_eq!(
            kinetic_overpotential(Electrode::Negative, 1.0, 298.0, 0.5, 1.0, 1.0),
            expected,
            max_relative = 1e-15
        );
        assert_relative_eq!(
            kinetic_overpotential(Electrode::Positive, 1.0, 298.0, 0.5, 1.0, 1.0),
            -expected,
            max_relative = 1e-15
        );
    }

    #[test]
    fn exchange_current_singularities() {
        assert!(matches!(exchange_current_density(1.0, 1.0, 1000.0, 0.0), Err(Error::SingularKinetics(_))));
        assert!(matches!(exchange_current_density(1.0, 1.0, 1000.0, 1.0), Err(Error::SingularKinetics(_))));
        assert!(matches!(exchange_current_density(1.0, 1.0, 0.0, 0.5), Err(Error::SingularKinetics(_))));
        assert_relative_eq!(exchange_current_density(2.0, 3.0, 4.0, 0.5).unwrap(), 6.0);
    }

    #[test]
    fn potential_difference_cases() {
        assert_eq!(electrolyte_potential_difference(300.0, 1000.0, 1000.0, 1000.0, 0.4, 1.0, 1e-3, 0.0), 0.0);
        assert_eq!(electrolyte_potential_difference(300.0, 800.0, 1300.0, 1000.0, 1.0, 1.0, 1e-3, 0.0), 0.0);
        let got = electrolyte_potential_difference(310.0, 1100.0, 900.0, 1000.0, 0.4, 0.8, 6e-4, 50.0);
        let expected = 2.0 * 8.31 * 310.0 / (96487.0 * 1000.0) * 0.6 * (-200.0) - 6e-4 / 0.8 * 50.0;
        assert_relative_eq!(got, expected, max_relative = 1e-14);
    }
}
