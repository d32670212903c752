//! Trap parameters and the dimensionless unit system.
//!
//! Everything downstream works in trap units: lengths in l0, energies in
//! e0 = m omega_z^2 l0^2, frequencies as ratios to omega_z. One dimensionless
//! parameter eta = hbar/(m omega_z l0^2) carries all quantum scaling, so no
//! raw SI constant appears outside this module.

use std::fmt;

use serde::Serialize;

use crate::constants;
use crate::error::{Error, Result};

/// How user-supplied frequencies are read: `Angular` treats the number as
/// rad/s, `Ordinary` as cycles/s (multiplied by 2 pi internally).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FrequencyConvention {
    Angular,
    Ordinary,
}

impl FrequencyConvention {
    pub fn parse(text: &str) -> Result<Self> {
        match text.trim() {
            "angular" => Ok(Self::Angular),
            "ordinary" => Ok(Self::Ordinary),
            other => Err(Error::InvalidConfig(format!(
                "frequency_convention must be 'angular' or 'ordinary', got '{other}'"
            ))),
        }
    }
}

impl fmt::Display for FrequencyConvention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Angular => write!(f, "angular"),
            Self::Ordinary => write!(f, "ordinary"),
        }
    }
}

/// Physical trap parameters for a single-species chain.
#[derive(Debug, Clone, Serialize)]
pub struct TrapConfig {
    /// Ion mass in atomic mass units.
    pub ion_mass_u: f64,
    /// Charge number Z.
    pub charge_number: u32,
    /// Longitudinal trap frequency in rad/s (conversion already applied).
    pub omega_z: f64,
    /// Transverse-to-longitudinal frequency ratio omega_x/omega_z.
    pub beta_x: f64,
    /// Transverse-to-longitudinal frequency ratio omega_y/omega_z.
    pub beta_y: f64,
    /// Number of ions.
    pub n_ions: usize,
    /// Records how `omega_z` was supplied.
    pub convention: FrequencyConvention,
}

impl TrapConfig {
    /// Builds a config from raw inputs, applying the frequency convention to
    /// `omega_z_input` and validating the physical invariants.
    pub fn new(
        ion_mass_u: f64,
        charge_number: u32,
        omega_z_input: f64,
        convention: FrequencyConvention,
        beta_x: f64,
        beta_y: f64,
        n_ions: usize,
    ) -> Result<Self> {
        let omega_z = match convention {
            FrequencyConvention::Angular => omega_z_input,
            FrequencyConvention::Ordinary => 2.0 * std::f64::consts::PI * omega_z_input,
        };
        let config = Self {
            ion_mass_u,
            charge_number,
            omega_z,
            beta_x,
            beta_y,
            n_ions,
            convention,
        };
        config.validate()?;
        Ok(config)
    }

    /// Reference configuration: a chain of 171Yb+ ions with omega_z = 5e5
    /// (angular convention) and beta_x = beta_y = 10.
    pub fn yb171(n_ions: usize) -> Self {
        Self::new(
            constants::YB171_MASS_U,
            1,
            5.0e5,
            FrequencyConvention::Angular,
            10.0,
            10.0,
            n_ions,
        )
        .expect("reference configuration is valid")
    }

    // the negated comparisons also reject NaN inputs
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<()> {
        if !(self.ion_mass_u > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "ion_mass_u must be positive, got {}",
                self.ion_mass_u
            )));
        }
        if self.charge_number == 0 {
            return Err(Error::InvalidConfig(
                "charge_number must be at least 1".into(),
            ));
        }
        if !(self.omega_z > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "omega_z must be positive, got {}",
                self.omega_z
            )));
        }
        if !(self.beta_x >= 1.0) || !(self.beta_y >= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "beta_x and beta_y must be >= 1 (beta_z = 1 by normalization), got {} and {}",
                self.beta_x, self.beta_y
            )));
        }
        if self.n_ions == 0 {
            return Err(Error::InvalidConfig("n_ions must be at least 1".into()));
        }
        Ok(())
    }

    /// Ion mass in kg.
    pub fn mass_kg(&self) -> f64 {
        self.ion_mass_u * constants::ATOMIC_MASS_KG
    }

    /// Parses a `key = value` config file body. Unknown keys are rejected;
    /// missing keys fall back to the reference 171Yb+ values.
    ///
    /// Recognized keys: `ion_mass_u`, `charge_number`, `omega_z_hz`,
    /// `frequency_convention`, `beta_x`, `beta_y`, `n_ions`.
    /// Lines starting with `#` (and blank lines) are ignored.
    pub fn from_config_str(text: &str) -> Result<Self> {
        let mut ion_mass_u = constants::YB171_MASS_U;
        let mut charge_number: u32 = 1;
        let mut omega_z_input = 5.0e5;
        let mut convention = FrequencyConvention::Angular;
        let mut beta_x = 10.0;
        let mut beta_y = 10.0;
        let mut n_ions: usize = 24;

        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::InvalidConfig(format!("line {}: expected 'key = value'", lineno + 1))
            })?;
            let key = key.trim();
            let value = value.trim();
            let bad_number = |k: &str| {
                Error::InvalidConfig(format!(
                    "line {}: cannot parse number for '{k}'",
                    lineno + 1
                ))
            };
            match key {
                "ion_mass_u" => ion_mass_u = value.parse().map_err(|_| bad_number(key))?,
                "charge_number" => charge_number = value.parse().map_err(|_| bad_number(key))?,
                "omega_z_hz" => omega_z_input = value.parse().map_err(|_| bad_number(key))?,
                "frequency_convention" => convention = FrequencyConvention::parse(value)?,
                "beta_x" => beta_x = value.parse().map_err(|_| bad_number(key))?,
                "beta_y" => beta_y = value.parse().map_err(|_| bad_number(key))?,
                "n_ions" => n_ions = value.parse().map_err(|_| bad_number(key))?,
                other => {
                    return Err(Error::InvalidConfig(format!(
                        "line {}: unknown key '{other}'",
                        lineno + 1
                    )))
                }
            }
        }
        Self::new(
            ion_mass_u,
            charge_number,
            omega_z_input,
            convention,
            beta_x,
            beta_y,
            n_ions,
        )
    }
}

/// Derived dimensionless scalings for a trap configuration.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ScaleSet {
    /// Characteristic length l0 = [k Z^2 e^2 / (m omega_z^2)]^(1/3), in m.
    pub l0: f64,
    /// Characteristic energy e0 = m omega_z^2 l0^2, in J.
    pub e0: f64,
    /// Quantumness parameter eta = hbar/(m omega_z l0^2) = hbar omega_z/e0.
    pub eta: f64,
    /// k_B/e0 in K^-1, so k_B T/e0 = kb_over_e0 * T.
    pub kb_over_e0: f64,
}

impl ScaleSet {
    /// Scaled energy of the transverse center-of-mass phonon, eta * beta_x.
    pub fn epsilon_cm(&self, beta_x: f64) -> f64 {
        self.eta * beta_x
    }

    /// A unit-scale set (eta = 1) for tests that probe formula structure
    /// rather than physical magnitudes.
    pub fn synthetic(eta: f64) -> Self {
        Self {
            l0: 1.0,
            e0: 1.0,
            eta,
            kb_over_e0: 1.0,
        }
    }
}

/// Computes l0, e0, eta, and the temperature conversion for a configuration.
pub fn derive_scales(config: &TrapConfig) -> Result<ScaleSet> {
    config.validate()?;
    let m = config.mass_kg();
    let z = f64::from(config.charge_number);
    let q2 =
        constants::COULOMB_K * z * z * constants::ELEMENTARY_CHARGE * constants::ELEMENTARY_CHARGE;
    let l0 = (q2 / (m * config.omega_z * config.omega_z)).cbrt();
    let e0 = m * config.omega_z * config.omega_z * l0 * l0;
    let eta = constants::HBAR / (m * config.omega_z * l0 * l0);
    Ok(ScaleSet {
        l0,
        e0,
        eta,
        kb_over_e0: constants::BOLTZMANN / e0,
    })
}

/// Converts a temperature in kelvin to the dimensionless energy k_B T / e0.
pub fn temperature_to_dimensionless(t_kelvin: f64, scales: &ScaleSet) -> Result<f64> {
    if t_kelvin < 0.0 {
        return Err(Error::NegativeTemperature(t_kelvin));
    }
    Ok(scales.kb_over_e0 * t_kelvin)
}

/// Converts the sweep parameter t = k_B T/(hbar omega_cm) to kelvin, where
/// omega_cm = beta_x * omega_z is the transverse center-of-mass frequency.
pub fn t_parameter_to_kelvin(t: f64, beta_x: f64, scales: &ScaleSet) -> f64 {
    t * scales.eta * beta_x / scales.kb_over_e0
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    // Frozen regression constants for the reference 171Yb+ configuration,
    // evaluated once by direct SI arithmetic of the defining formulas.
    const L0_ANGULAR: f64 = 1.481425616338e-5;
    const E0_ANGULAR: f64 = 1.557336072524e-23;
    const ETA_ANGULAR: f64 = 3.385819655774e-6;
    const KT_1MK_ANGULAR: f64 = 8.865453156568e-4;
    const L0_ORDINARY: f64 = 4.350708014520e-6;
    const E0_ORDINARY: f64 = 5.302763466052e-23;
    const ETA_ORDINARY: f64 = 6.247751939493e-6;
    const KT_1MK_ORDINARY: f64 = 2.603640552400e-4;

    #[test]
    fn reference_scales_match_frozen_values() {
        let scales = derive_scales(&TrapConfig::yb171(24)).unwrap();
        assert_relative_eq!(scales.l0, L0_ANGULAR, max_relative = 1e-11);
        assert_relative_eq!(scales.e0, E0_ANGULAR, max_relative = 1e-11);
        assert_relative_eq!(scales.eta, ETA_ANGULAR, max_relative = 1e-11);
        let kt = temperature_to_dimensionless(1e-3, &scales).unwrap();
        assert_relative_eq!(kt, KT_1MK_ANGULAR, max_relative = 1e-11);
    }

    #[test]
    fn ordinary_convention_scales_match_frozen_values() {
        let config = TrapConfig::new(
            constants::YB171_MASS_U,
            1,
            5.0e5,
            FrequencyConvention::Ordinary,
            10.0,
            10.0,
            24,
        )
        .unwrap();
        let scales = derive_scales(&config).unwrap();
        assert_relative_eq!(scales.l0, L0_ORDINARY, max_relative = 1e-11);
        assert_relative_eq!(scales.e0, E0_ORDINARY, max_relative = 1e-11);
        assert_relative_eq!(scales.eta, ETA_ORDINARY, max_relative = 1e-11);
        let kt = temperature_to_dimensionless(1e-3, &scales).unwrap();
        assert_relative_eq!(kt, KT_1MK_ORDINARY, max_relative = 1e-11);
    }

    #[test]
    fn l0_definition_is_self_consistent() {
        let config = TrapConfig::yb171(5);
        let scales = derive_scales(&config).unwrap();
        let m = config.mass_kg();
        let lhs = scales.l0.powi(3) * m * config.omega_z * config.omega_z;
        let z = f64::from(config.charge_number);
        let rhs = constants::COULOMB_K
            * z
            * z
            * constants::ELEMENTARY_CHARGE
            * constants::ELEMENTARY_CHARGE;
        assert_relative_eq!(lhs, rhs, max_relative = 1e-12);
    }

    #[test]
    fn eta_two_ways_agree() {
        let config = TrapConfig::yb171(3);
        let scales = derive_scales(&config).unwrap();
        let eta_alt = constants::HBAR * config.omega_z / scales.e0;
        assert_relative_eq!(scales.eta, eta_alt, max_relative = 1e-12);
    }

    #[test]
    fn doubling_charge_scales_l0_by_two_to_two_thirds() {
        let base = TrapConfig::yb171(4);
        let doubled = TrapConfig::new(
            base.ion_mass_u,
            2,
            base.omega_z,
            FrequencyConvention::Angular,
            base.beta_x,
            base.beta_y,
            base.n_ions,
        )
        .unwrap();
        let s1 = derive_scales(&base).unwrap();
        let s2 = derive_scales(&doubled).unwrap();
        assert_relative_eq!(s2.l0 / s1.l0, 2f64.powf(2.0 / 3.0), max_relative = 1e-12);
    }

    #[test]
    fn temperature_conversion_edges() {
        let scales = derive_scales(&TrapConfig::yb171(2)).unwrap();
        assert_eq!(temperature_to_dimensionless(0.0, &scales).unwrap(), 0.0);
        assert!(temperature_to_dimensionless(-1e-6, &scales).is_err());
        // k_B T = hbar omega_cm maps to eta * beta_x.
        let t = t_parameter_to_kelvin(1.0, 10.0, &scales);
        let kt = temperature_to_dimensionless(t, &scales).unwrap();
        assert_relative_eq!(kt, scales.epsilon_cm(10.0), max_relative = 1e-12);
    }

    #[test]
    fn round_trip_dimensionless_si() {
        let scales = derive_scales(&TrapConfig::yb171(7)).unwrap();
        // length: dimensionless -> m -> dimensionless
        let z = 1.37;
        assert_relative_eq!(z * scales.l0 / scales.l0, z, max_relative = 1e-12);
        // temperature: t-parameter -> K -> dimensionless energy -> t-parameter
        let t = 0.83;
        let kelvin = t_parameter_to_kelvin(t, 10.0, &scales);
        let back = temperature_to_dimensionless(kelvin, &scales).unwrap() / scales.epsilon_cm(10.0);
        assert_relative_eq!(back, t, max_relative = 1e-12);
    }

    #[test]
    fn config_parsing_and_validation() {
        let text = "\
# reference chain, shrunk
n_ions = 6
beta_x = 8.5
beta_y = 8.5
omega_z_hz = 6.0e5
frequency_convention = ordinary
";
        let config = TrapConfig::from_config_str(text).unwrap();
        assert_eq!(config.n_ions, 6);
        assert_eq!(config.convention, FrequencyConvention::Ordinary);
        assert_relative_eq!(
            config.omega_z,
            2.0 * std::f64::consts::PI * 6.0e5,
            max_relative = 1e-15
        );
        assert_relative_eq!(
            config.ion_mass_u,
            constants::YB171_MASS_U,
            max_relative = 1e-15
        );

        assert!(TrapConfig::from_config_str("bogus_key = 1").is_err());
        assert!(TrapConfig::from_config_str("beta_x = 0.5").is_err());
        assert!(TrapConfig::from_config_str("n_ions = 0").is_err());
        assert!(TrapConfig::from_config_str("frequency_convention = radians").is_err());
    }
}
