//! Physical constants, frozen in one table so every regression value in the
//! test suite traces back to a single source.
//!
//! Values are the 2019 SI exact definitions where available and CODATA 2018
//! otherwise.

/// Coulomb constant k = 1/(4 pi eps_0) in N m^2 C^-2.
pub const COULOMB_K: f64 = 8.987_551_787_368_176e9;

/// Elementary charge in C (exact).
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;

/// Reduced Planck constant in J s (exact via h = 6.62607015e-34 J s).
pub const HBAR: f64 = 1.054_571_817e-34;

/// Boltzmann constant in J K^-1 (exact).
pub const BOLTZMANN: f64 = 1.380_649e-23;

/// Atomic mass unit in kg (CODATA 2018).
pub const ATOMIC_MASS_KG: f64 = 1.660_539_066_60e-27;

/// Mass of 171Yb+ in atomic mass units.
pub const YB171_MASS_U: f64 = 170.936;

/// Identifier recorded in run manifests so outputs can be traced to the
/// constants table that produced them.
pub const CONSTANTS_VERSION: &str = "si2019-codata2018-r1";
