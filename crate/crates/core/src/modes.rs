//! Harmonic normal modes: per-branch diagonalization of the equilibrium
//! Hessian with deterministic ordering and sign conventions, plus zigzag
//! (linear-chain instability) detection.
//!
//! Global mode indexing is branch-major: x modes occupy 0..N, y modes
//! N..2N, z modes 2N..3N, each branch sorted by ascending frequency.

use std::fmt;

use serde::Serialize;

use crate::equilibrium::{hessian_blocks, solve_equilibrium, IonChain};
use crate::error::Result;
use crate::linalg::{jacobi_eigh, Mat};
use crate::units::TrapConfig;

/// Spatial direction, which is also the branch label of every mode: at a
/// linear-chain equilibrium the Hessian is block diagonal per direction, so
/// each eigenvector lives in exactly one of x, y, z.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Branch {
    X,
    Y,
    Z,
}

impl Branch {
    pub const ALL: [Branch; 3] = [Branch::X, Branch::Y, Branch::Z];

    pub fn index(self) -> usize {
        match self {
            Branch::X => 0,
            Branch::Y => 1,
            Branch::Z => 2,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Branch::X => "x",
            Branch::Y => "y",
            Branch::Z => "z",
        }
    }
}

impl fmt::Display for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Phonon spectrum and eigenvectors of a chain.
#[derive(Debug, Clone)]
pub struct NormalModes {
    pub n_ions: usize,
    pub beta_x: f64,
    pub beta_y: f64,
    /// Raw Hessian eigenvalues (omega/omega_z)^2, branch-major; negative
    /// entries mean the linear chain is unstable.
    pub squared_frequencies: Vec<f64>,
    /// omega/omega_z; NaN where the squared frequency is negative.
    pub frequencies: Vec<f64>,
    /// Per-branch eigenvectors; row k of `vectors[b]` is the ion-amplitude
    /// vector of the k-th mode of branch b.
    vectors: [Mat; 3],
    /// Sign alternations along the chain per mode (0 = center of mass).
    pub sign_changes: Vec<usize>,
    pub stable: bool,
    pub min_squared_frequency: f64,
    pub soft_branch: Branch,
}

/// Outcome of a zigzag-boundary check.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct StabilityReport {
    pub stable: bool,
    /// Global minimum over all 3N squared frequencies; for a stable chain
    /// this is the longitudinal center of mass at exactly 1.
    pub min_squared_frequency: f64,
    pub soft_branch: Branch,
    /// Minimum over the transverse branches only — the margin that shrinks
    /// to zero at the zigzag transition.
    pub min_transverse_squared_frequency: f64,
}

impl NormalModes {
    pub fn n_modes(&self) -> usize {
        3 * self.n_ions
    }

    pub fn branch_of(&self, mode: usize) -> Branch {
        Branch::ALL[mode / self.n_ions]
    }

    /// Index of the mode within its branch (0-based, ascending frequency).
    pub fn index_in_branch(&self, mode: usize) -> usize {
        mode % self.n_ions
    }

    pub fn global_index(&self, branch: Branch, k: usize) -> usize {
        branch.index() * self.n_ions + k
    }

    /// Ion-amplitude vector of a mode (support is confined to its branch).
    pub fn mode_vector(&self, mode: usize) -> &[f64] {
        self.vectors[mode / self.n_ions].row(mode % self.n_ions)
    }

    /// Eigenvector component b_a^{alpha i}; zero when `direction` is not the
    /// mode's branch.
    pub fn amplitude(&self, mode: usize, direction: Branch, ion: usize) -> f64 {
        if direction == self.branch_of(mode) {
            self.mode_vector(mode)[ion]
        } else {
            0.0
        }
    }

    /// Global index of the center-of-mass mode of a branch: the transverse
    /// CM is the stiffest mode of its branch, the longitudinal CM the
    /// softest.
    pub fn cm_index(&self, branch: Branch) -> usize {
        match branch {
            Branch::X => self.n_ions - 1,
            Branch::Y => 2 * self.n_ions - 1,
            Branch::Z => 2 * self.n_ions,
        }
    }

    /// Minimum squared frequency over the x and y branches.
    pub fn min_transverse_squared_frequency(&self) -> f64 {
        self.squared_frequencies[..2 * self.n_ions]
            .iter()
            .fold(f64::INFINITY, |m, &l| m.min(l))
    }

    /// Conventional name for the sign-alternation pattern, when it has one.
    pub fn mode_name(&self, mode: usize) -> Option<&'static str> {
        let changes = self.sign_changes[mode];
        if changes == 0 {
            Some("center-of-mass")
        } else if changes == 1 {
            Some("tilt")
        } else if changes == self.n_ions - 1 {
            Some("zigzag")
        } else {
            None
        }
    }
}

/// Fixes the sign of an eigenvector so its largest-magnitude entry is
/// positive; ties resolve to the lowest ion index, making the convention
/// bit-reproducible.
fn fix_sign(v: &mut [f64]) {
    let mut arg = 0;
    let mut best = -1.0f64;
    for (i, value) in v.iter().enumerate() {
        if value.abs() > best {
            best = value.abs();
            arg = i;
        }
    }
    if v[arg] < 0.0 {
        for value in v.iter_mut() {
            *value = -*value;
        }
    }
}

fn count_sign_changes(v: &[f64]) -> usize {
    let scale = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let mut changes = 0;
    let mut last = 0.0f64;
    for &value in v {
        if value.abs() <= 1e-9 * scale {
            continue;
        }
        if last != 0.0 && value * last < 0.0 {
            changes += 1;
        }
        last = value;
    }
    changes
}

/// Diagonalizes the three direction blocks of the Hessian at the chain
/// equilibrium. Instability (a nonpositive squared frequency) is reported
/// through the `stable` flag, never as an error.
pub fn modes_from_chain(chain: &IonChain, config: &TrapConfig) -> NormalModes {
    let n = chain.n_ions();
    let (axx, ayy, azz) = hessian_blocks(&chain.z, config.beta_x, config.beta_y);

    let mut squared = Vec::with_capacity(3 * n);
    let mut vectors: [Mat; 3] = [Mat::zeros(n, n), Mat::zeros(n, n), Mat::zeros(n, n)];
    for (b, block) in [axx, ayy, azz].into_iter().enumerate() {
        let (vals, vecs) = jacobi_eigh(&block);
        squared.extend_from_slice(&vals);
        for k in 0..n {
            let row = vectors[b].row_mut(k);
            for i in 0..n {
                row[i] = vecs[(i, k)];
            }
            fix_sign(row);
        }
    }

    let frequencies: Vec<f64> = squared
        .iter()
        .map(|&l| if l >= 0.0 { l.sqrt() } else { f64::NAN })
        .collect();
    let sign_changes: Vec<usize> = (0..3 * n)
        .map(|a| count_sign_changes(vectors[a / n].row(a % n)))
        .collect();

    let mut min_sq = f64::INFINITY;
    let mut soft = Branch::X;
    for (a, &l) in squared.iter().enumerate() {
        if l < min_sq {
            min_sq = l;
            soft = Branch::ALL[a / n];
        }
    }

    NormalModes {
        n_ions: n,
        beta_x: config.beta_x,
        beta_y: config.beta_y,
        stable: min_sq > 0.0,
        min_squared_frequency: min_sq,
        soft_branch: soft,
        squared_frequencies: squared,
        frequencies,
        vectors,
        sign_changes,
    }
}

/// Solves the equilibrium for `config` and reports whether the linear chain
/// is stable (all squared frequencies positive).
pub fn check_stability(config: &TrapConfig) -> Result<StabilityReport> {
    let chain = solve_equilibrium(config, None)?;
    let modes = modes_from_chain(&chain, config);
    Ok(StabilityReport {
        stable: modes.stable,
        min_squared_frequency: modes.min_squared_frequency,
        soft_branch: modes.soft_branch,
        min_transverse_squared_frequency: modes.min_transverse_squared_frequency(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn reference_modes(n: usize) -> (IonChain, NormalModes, TrapConfig) {
        let config = TrapConfig::yb171(n);
        let chain = solve_equilibrium(&config, None).unwrap();
        let modes = modes_from_chain(&chain, &config);
        (chain, modes, config)
    }

    #[test]
    fn single_ion_frequencies_are_trap_frequencies() {
        let (_, modes, _) = reference_modes(1);
        assert_eq!(modes.frequencies.len(), 3);
        assert_abs_diff_eq!(modes.frequencies[0], 10.0, epsilon = 1e-12);
        assert_abs_diff_eq!(modes.frequencies[1], 10.0, epsilon = 1e-12);
        assert_abs_diff_eq!(modes.frequencies[2], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn two_ion_closed_form_spectra() {
        let (_, modes, _) = reference_modes(2);
        // transverse: rocking sqrt(99), CM 10; longitudinal: CM 1, stretch sqrt(3)
        assert_relative_eq!(modes.frequencies[0], 99f64.sqrt(), max_relative = 1e-10);
        assert_relative_eq!(modes.frequencies[1], 10.0, max_relative = 1e-10);
        assert_relative_eq!(modes.frequencies[4], 1.0, max_relative = 1e-10);
        assert_relative_eq!(modes.frequencies[5], 3f64.sqrt(), max_relative = 1e-10);
        // rocking mode is (1,-1)/sqrt(2) with the sign fixed on ion 0
        let rock = modes.mode_vector(0);
        assert_abs_diff_eq!(rock[0], std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-12);
        assert_abs_diff_eq!(rock[1], -std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-12);
    }

    #[test]
    fn cm_modes_are_uniform_and_exact() {
        for n in [2usize, 3, 7, 24] {
            let (_, modes, _) = reference_modes(n);
            let uniform = 1.0 / (n as f64).sqrt();
            for branch in Branch::ALL {
                let cm = modes.cm_index(branch);
                let expected = match branch {
                    Branch::X | Branch::Y => 10.0,
                    Branch::Z => 1.0,
                };
                assert_abs_diff_eq!(modes.frequencies[cm], expected, epsilon = 1e-10);
                for i in 0..n {
                    assert_abs_diff_eq!(modes.mode_vector(cm)[i], uniform, epsilon = 1e-10);
                }
                assert_eq!(modes.mode_name(cm), Some("center-of-mass"));
            }
        }
    }

    #[test]
    fn eigenvectors_orthonormal_and_reconstruct_hessian() {
        let (chain, modes, config) = reference_modes(8);
        let n = 8;
        for branch in Branch::ALL {
            for a in 0..n {
                for b in 0..n {
                    let va = modes.mode_vector(modes.global_index(branch, a));
                    let vb = modes.mode_vector(modes.global_index(branch, b));
                    let dot: f64 = va.iter().zip(vb).map(|(p, q)| p * q).sum();
                    let expected = if a == b { 1.0 } else { 0.0 };
                    assert_abs_diff_eq!(dot, expected, epsilon = 1e-10);
                }
            }
        }
        let (axx, _, azz) = hessian_blocks(&chain.z, config.beta_x, config.beta_y);
        for (branch, block) in [(Branch::X, axx), (Branch::Z, azz)] {
            for i in 0..n {
                for j in 0..n {
                    let rebuilt: f64 = (0..n)
                        .map(|k| {
                            let g = modes.global_index(branch, k);
                            modes.squared_frequencies[g]
                                * modes.mode_vector(g)[i]
                                * modes.mode_vector(g)[j]
                        })
                        .sum();
                    assert_abs_diff_eq!(rebuilt, block[(i, j)], epsilon = 1e-9);
                }
            }
        }
    }

    #[test]
    fn x_and_y_branches_coincide_for_equal_betas() {
        let (_, modes, _) = reference_modes(9);
        for k in 0..9 {
            let x = modes.global_index(Branch::X, k);
            let y = modes.global_index(Branch::Y, k);
            assert_abs_diff_eq!(modes.frequencies[x], modes.frequencies[y], epsilon = 1e-10);
            for i in 0..9 {
                assert_abs_diff_eq!(
                    modes.mode_vector(x)[i],
                    modes.mode_vector(y)[i],
                    epsilon = 1e-10
                );
            }
        }
    }

    #[test]
    fn branch_frequency_bounds_with_cm_extremal() {
        let (_, modes, _) = reference_modes(10);
        for k in 0..10 {
            let wx = modes.frequencies[modes.global_index(Branch::X, k)];
            assert!(wx <= 10.0 + 1e-12);
            if k < 9 {
                assert!(wx < 10.0 - 1e-6, "only the CM mode sits at beta");
            }
            let wz = modes.frequencies[modes.global_index(Branch::Z, k)];
            assert!(wz >= 1.0 - 1e-12);
            if k > 0 {
                assert!(wz > 1.0 + 1e-6, "only the CM mode sits at omega_z");
            }
        }
    }

    #[test]
    fn mode_naming_by_sign_alternation() {
        let (_, modes, _) = reference_modes(6);
        // transverse branch: ascending frequency runs zigzag ... tilt, CM
        assert_eq!(
            modes.mode_name(modes.global_index(Branch::X, 0)),
            Some("zigzag")
        );
        assert_eq!(
            modes.mode_name(modes.global_index(Branch::X, 4)),
            Some("tilt")
        );
        // longitudinal branch: CM, stretch(=tilt pattern), ...
        assert_eq!(
            modes.mode_name(modes.global_index(Branch::Z, 1)),
            Some("tilt")
        );
        assert_eq!(
            modes.sign_changes[modes.global_index(Branch::Z, 5)],
            5,
            "stiffest longitudinal mode alternates maximally"
        );
    }

    #[test]
    fn zigzag_boundary_at_reference_parameters() {
        let stable = check_stability(&TrapConfig::yb171(24)).unwrap();
        assert!(stable.stable);
        // global minimum is the longitudinal center of mass, exactly omega_z
        assert_abs_diff_eq!(stable.min_squared_frequency, 1.0, epsilon = 1e-10);
        assert_eq!(stable.soft_branch.label(), "z");
        // frozen: softest transverse frequency of the 24-ion chain
        assert_relative_eq!(
            stable.min_transverse_squared_frequency.sqrt(),
            1.6758,
            max_relative = 1e-4
        );

        let unstable = check_stability(&TrapConfig::yb171(25)).unwrap();
        assert!(!unstable.stable);
        assert_eq!(unstable.soft_branch.label(), "x");
        // frozen: most negative transverse eigenvalue of the 25-ion chain
        assert_relative_eq!(unstable.min_squared_frequency, -4.404, max_relative = 1e-3);

        let tiny = check_stability(&TrapConfig::yb171(2)).unwrap();
        assert!(tiny.stable);
    }
}
