//! Command-line surface: global flags shared by every subcommand plus the
//! per-subcommand sweep parameters.

use std::path::PathBuf;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "ionchain",
    version,
    about = "Equilibria, phonon modes, anharmonic shifts, and spin-spin couplings of trapped-ion chains"
)]
pub struct Cli {
    /// Key=value config file; defaults to the 24-ion Yb-171 reference chain.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Output directory for CSV files and the run manifest.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,

    /// Also write a JSON mirror next to every CSV.
    #[arg(long, global = true)]
    pub json: bool,

    /// Treat near-resonant perturbation denominators as errors.
    #[arg(long, global = true)]
    pub strict: bool,

    /// Worker threads for inner sweeps (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub cmd: Cmd,
}

#[derive(Subcommand)]
pub enum Cmd {
    /// Solve the chain equilibrium and write ion positions.
    Equilibrium,
    /// Diagonalize the Hessian; write mode frequencies and eigenvectors.
    Modes,
    /// Write nonzero coupling-tensor entries in both bases.
    Tensors,
    /// Thermally averaged frequency shifts over a temperature grid.
    Shifts {
        /// Grid as start:stop:count or a comma-separated list.
        #[arg(long, default_value = "0:2:41")]
        t_grid: String,
        /// doppler or sideband; default writes both.
        #[arg(long)]
        cooling: Option<String>,
        /// consistent (oracle-validated) or tabulated.
        #[arg(long, default_value = "consistent")]
        shift_formula: String,
    },
    /// Harmonic and quasi-harmonic coupling matrices at one temperature.
    Jmatrix {
        /// Comma-separated fractional detunings.
        #[arg(long, default_value = "1e-1")]
        delta: String,
        /// cm or a 0-based transverse mode index.
        #[arg(long, default_value = "cm")]
        anchor: String,
        /// Dimensionless temperature k_B T over the transverse CM quantum.
        #[arg(long, default_value_t = 1.0)]
        t: f64,
        #[arg(long, default_value = "doppler")]
        cooling: String,
        #[arg(long, default_value = "consistent")]
        shift_formula: String,
    },
    /// Proportional coupling-shift statistics across detunings.
    Jshift {
        #[arg(long, default_value = "1e-1,1e-2,1e-3,1e-4,1e-5,1e-6")]
        delta: String,
        #[arg(long, default_value = "cm")]
        anchor: String,
        #[arg(long, default_value_t = 1.0)]
        t: f64,
        #[arg(long, default_value = "doppler")]
        cooling: String,
        #[arg(long, default_value = "consistent")]
        shift_formula: String,
    },
    /// Coupling versus ion separation: power law and monotonicity.
    Jdistance {
        #[arg(long, default_value = "1e-1,1e-2,1e-3")]
        delta: String,
        #[arg(long, default_value = "cm")]
        anchor: String,
    },
    /// Frequency-shift traces versus temperature, both cooling schemes.
    Fig1,
    /// Proportional coupling-shift statistics, CM and fifth-mode anchors.
    Fig2,
    /// First-ion coupling traces versus temperature.
    Fig3 {
        #[arg(long, default_value = "1e-1")]
        delta: String,
    },
    /// Harmonic couplings versus separation across detunings.
    Fig4,
    /// Run the built-in oracle and finite-difference audits.
    Validate,
}
