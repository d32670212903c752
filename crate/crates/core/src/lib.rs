//! Numerical engine for chains of ions in a linear trap: equilibrium
//! geometry, harmonic normal modes, cubic and quartic Coulomb mode
//! couplings, thermally averaged anharmonic frequency shifts, and the
//! effective spin-spin couplings produced by an off-resonant transverse
//! drive.
//!
//! All chain-level quantities are dimensionless: lengths in units of
//! `l0 = (k Z^2 e^2 / (m omega_z^2))^(1/3)`, energies in `m omega_z^2 l0^2`,
//! frequencies in `omega_z`. [`derive_scales`] converts a physical
//! [`TrapConfig`] into those scales together with the quantumness parameter
//! `eta = hbar / (m omega_z l0^2)` that controls the anharmonic expansion.

pub mod constants;
pub mod equilibrium;
pub mod error;
pub mod linalg;
pub mod modes;
pub mod perturbation;
pub mod spin;
pub mod tensors;
pub mod units;

pub use equilibrium::{solve_equilibrium, IonChain};
pub use error::{Error, Result};
pub use linalg::Mat;
pub use modes::{check_stability, modes_from_chain, Branch, NormalModes, StabilityReport};
pub use perturbation::oracle::delta_e_oracle;
pub use perturbation::{
    mean_occupation, thermal_shift_sweep, Cooling, ResonanceFlag, ShiftContext, ShiftFormula,
    ShiftReport,
};
pub use spin::{
    j_distance_profile, j_matrix, j_vs_temperature, shift_statistics, Anchor, DistanceProfile,
    DriveSpec, JMatrix, ProportionalShifts,
};
pub use tensors::{
    mode_tensors, mode_tensors_full, position_tensors, ModeTensors, PositionTensors, Site,
};
pub use units::{
    derive_scales, t_parameter_to_kelvin, temperature_to_dimensionless, FrequencyConvention,
    ScaleSet, TrapConfig,
};
