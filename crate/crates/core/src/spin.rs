//! Effective spin-spin couplings from an off-resonant drive on the
//! transverse-x branch.
//!
//! A beat note at `mu = omega_anchor (1 + delta)` produces the coupling
//! matrix `J_ij = (F^2/4m) sum_a b_i^a b_j^a / (mu^2 - omega_a^2)` over the
//! driven branch. The quasi-harmonic variant replaces each harmonic
//! frequency with its thermally shifted value, which also moves `mu`
//! because the anchor frequency shifts with it. Couplings are reported
//! with the force prefactor normalized to one; every published statistic
//! is a ratio, so the prefactor cancels.

use serde::Serialize;

use crate::equilibrium::IonChain;
use crate::error::{Error, Result};
use crate::linalg::{linear_fit, Mat};
use crate::modes::NormalModes;
use crate::perturbation::ShiftReport;

/// Entries with harmonic coupling below this magnitude are excluded from
/// proportional-shift statistics instead of being divided.
pub const J_FLOOR: f64 = 1e-300;

/// Which transverse-x mode the drive is referenced to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Anchor {
    /// The center-of-mass mode (stiffest of the ascending branch).
    Cm,
    /// Mode by 0-based index within the ascending transverse-x branch.
    Index(usize),
}

impl Anchor {
    pub fn parse(s: &str) -> Result<Self> {
        if s == "cm" {
            return Ok(Anchor::Cm);
        }
        s.parse::<usize>().map(Anchor::Index).map_err(|_| {
            Error::InvalidConfig(format!(
                "unknown anchor '{s}' (expected cm or a 0-based mode index)"
            ))
        })
    }

    pub fn label(self) -> String {
        match self {
            Anchor::Cm => "cm".into(),
            Anchor::Index(k) => k.to_string(),
        }
    }

    /// Resolves to an index within the transverse-x branch.
    pub fn mode_in_branch(self, n_ions: usize) -> Result<usize> {
        match self {
            Anchor::Cm => Ok(n_ions - 1),
            Anchor::Index(k) if k < n_ions => Ok(k),
            Anchor::Index(k) => Err(Error::InvalidConfig(format!(
                "anchor index {k} out of range for {n_ions} transverse modes"
            ))),
        }
    }
}

/// Off-resonant drive parameters.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct DriveSpec {
    pub anchor: Anchor,
    /// Fractional detuning: `mu = omega_anchor (1 + delta)`.
    pub delta: f64,
    /// `F^2/4m` in reporting units; J is exactly linear in it.
    pub force_prefactor: f64,
}

impl DriveSpec {
    pub fn new(anchor: Anchor, delta: f64) -> Self {
        DriveSpec {
            anchor,
            delta,
            force_prefactor: 1.0,
        }
    }
}

/// Symmetric spin-spin coupling matrix with zero diagonal.
#[derive(Debug, Clone)]
pub struct JMatrix {
    pub n_ions: usize,
    pub values: Mat,
    /// Beat-note frequency in units of omega_z.
    pub mu: f64,
    pub quasi_harmonic: bool,
    pub drive: DriveSpec,
}

/// Builds the coupling matrix from the transverse-x branch. With `shifts`
/// present every branch frequency (the anchor included) is moved by its
/// thermal shift before the sum is taken.
pub fn j_matrix(
    modes: &NormalModes,
    drive: &DriveSpec,
    shifts: Option<&ShiftReport>,
) -> Result<JMatrix> {
    let n = modes.n_ions;
    // x branch occupies global modes 0..n in ascending order
    let wx: Vec<f64> = (0..n)
        .map(|k| {
            let w = modes.frequencies[k];
            match shifts {
                Some(report) => w + report.shift_over_cm[k] * modes.beta_x,
                None => w,
            }
        })
        .collect();
    let anchor = drive.anchor.mode_in_branch(n)?;
    let mu = wx[anchor] * (1.0 + drive.delta);
    for (k, &w) in wx.iter().enumerate() {
        if mu == w {
            return Err(Error::ResonantDrive {
                mode: k,
                mu,
                frequency: w,
            });
        }
    }

    let mu2 = mu * mu;
    let mut values = Mat::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            let sum: f64 = (0..n)
                .map(|k| {
                    let v = modes.mode_vector(k);
                    v[i] * v[j] / (mu2 - wx[k] * wx[k])
                })
                .sum();
            let coupling = drive.force_prefactor * sum;
            values[(i, j)] = coupling;
            values[(j, i)] = coupling;
        }
    }
    Ok(JMatrix {
        n_ions: n,
        values,
        mu,
        quasi_harmonic: shifts.is_some(),
        drive: *drive,
    })
}

/// Distribution of proportional changes between a harmonic and a
/// quasi-harmonic coupling matrix.
#[derive(Debug, Clone, Serialize)]
pub struct ProportionalShifts {
    pub delta: f64,
    /// `(i, j, |J_q - J_h| / |J_h|)` for every pair above the floor.
    pub shifts: Vec<(usize, usize, f64)>,
    /// Pairs whose harmonic coupling sat below [`J_FLOOR`].
    pub floored: Vec<(usize, usize)>,
    pub mean: f64,
    pub max: f64,
}

pub fn shift_statistics(harmonic: &JMatrix, quasi: &JMatrix) -> ProportionalShifts {
    let n = harmonic.n_ions;
    let mut shifts = Vec::new();
    let mut floored = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let h = harmonic.values[(i, j)];
            if h.abs() < J_FLOOR {
                floored.push((i, j));
                continue;
            }
            shifts.push((i, j, ((quasi.values[(i, j)] - h) / h).abs()));
        }
    }
    let mean = shifts.iter().map(|s| s.2).sum::<f64>() / shifts.len().max(1) as f64;
    let max = shifts.iter().map(|s| s.2).fold(0.0, f64::max);
    ProportionalShifts {
        delta: harmonic.drive.delta,
        shifts,
        floored,
        mean,
        max,
    }
}

/// Couplings between the first ion and every other ion at one temperature.
#[derive(Debug, Clone, Serialize)]
pub struct TemperatureTrace {
    pub t: f64,
    /// `J_0j` for `j = 1..N`, harmonic.
    pub harmonic: Vec<f64>,
    /// Same pairs from thermally shifted frequencies.
    pub quasi: Vec<f64>,
}

/// Traces of `J_{1j}` versus temperature, one row per shift report.
pub fn j_vs_temperature(
    modes: &NormalModes,
    drive: &DriveSpec,
    reports: &[ShiftReport],
) -> Result<Vec<TemperatureTrace>> {
    let harmonic = j_matrix(modes, drive, None)?;
    let first_row = |jm: &JMatrix| {
        (1..jm.n_ions)
            .map(|j| jm.values[(0, j)])
            .collect::<Vec<_>>()
    };
    reports
        .iter()
        .map(|report| {
            let quasi = j_matrix(modes, drive, Some(report))?;
            Ok(TemperatureTrace {
                t: report.t,
                harmonic: first_row(&harmonic),
                quasi: first_row(&quasi),
            })
        })
        .collect()
}

/// One coupling tagged with its pair and equilibrium separation.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ProfilePoint {
    pub i: usize,
    pub j: usize,
    pub separation: f64,
    pub coupling: f64,
}

/// Couplings versus equilibrium distance, with the far-field power law and
/// the near-field monotonicity violations made explicit.
#[derive(Debug, Clone, Serialize)]
pub struct DistanceProfile {
    /// All pairs, sorted by ascending separation.
    pub points: Vec<ProfilePoint>,
    /// Least-squares slope of `ln |J|` against `ln r` over the
    /// larger-separation half of the points; NaN when underdetermined.
    pub exponent: f64,
    /// Pairs of nearest-neighbor bonds `(i, j)` — meaning bonds
    /// `(i, i+1)` and `(j, j+1)` — where the bond with the larger
    /// separation carries the larger |coupling|.
    pub certificate: Vec<(usize, usize)>,
}

pub fn j_distance_profile(jm: &JMatrix, chain: &IonChain) -> DistanceProfile {
    let n = jm.n_ions;
    let mut points = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            points.push(ProfilePoint {
                i,
                j,
                separation: (chain.z[j] - chain.z[i]).abs(),
                coupling: jm.values[(i, j)],
            });
        }
    }
    points.sort_by(|a, b| a.separation.total_cmp(&b.separation));

    let far = &points[points.len() / 2..];
    let (lr, lj): (Vec<f64>, Vec<f64>) = far
        .iter()
        .filter(|p| p.coupling.abs() > J_FLOOR)
        .map(|p| (p.separation.ln(), p.coupling.abs().ln()))
        .unzip();
    let exponent = if lr.len() >= 2 {
        linear_fit(&lr, &lj).0
    } else {
        f64::NAN
    };

    // nearest-neighbor bonds: separation and coupling of (i, i+1)
    let bonds: Vec<(f64, f64)> = (0..n - 1)
        .map(|i| {
            (
                (chain.z[i + 1] - chain.z[i]).abs(),
                jm.values[(i, i + 1)].abs(),
            )
        })
        .collect();
    let mut certificate = Vec::new();
    for a in 0..bonds.len() {
        for b in 0..bonds.len() {
            if bonds[a].0 > bonds[b].0 && bonds[a].1 > bonds[b].1 {
                certificate.push((a, b));
            }
        }
    }
    DistanceProfile {
        points,
        exponent,
        certificate,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibrium::solve_equilibrium;
    use crate::modes::modes_from_chain;
    use crate::perturbation::{Cooling, ShiftContext, ShiftFormula};
    use crate::tensors::{mode_tensors, position_tensors};
    use crate::units::{derive_scales, TrapConfig};
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn pipeline(n: usize) -> (IonChain, NormalModes, ShiftContext) {
        let config = TrapConfig::yb171(n);
        let chain = solve_equilibrium(&config, None).unwrap();
        let modes = modes_from_chain(&chain, &config);
        let pos = position_tensors(&chain);
        let scales = derive_scales(&config).unwrap();
        let tensors = mode_tensors(&pos, &modes, &scales).unwrap();
        let ctx = ShiftContext::new(&tensors, &modes, &scales, ShiftFormula::Consistent).unwrap();
        (chain, modes, ctx)
    }

    #[test]
    fn two_ion_closed_form() {
        let (_, modes, _) = pipeline(2);
        let drive = DriveSpec::new(Anchor::Cm, 0.1);
        let jm = j_matrix(&modes, &drive, None).unwrap();
        assert_abs_diff_eq!(jm.mu, 11.0, epsilon = 1e-12);
        // eigenvectors are (1,1)/sqrt2 and (1,-1)/sqrt2
        let expect = 0.5 / (121.0 - 100.0) - 0.5 / (121.0 - 99.0);
        assert_relative_eq!(jm.values[(0, 1)], expect, max_relative = 1e-12);
        assert_eq!(jm.values[(0, 0)], 0.0);
        assert_eq!(jm.values[(1, 0)], jm.values[(0, 1)]);
    }

    #[test]
    fn mirror_symmetry_of_couplings() {
        let (_, modes, _) = pipeline(7);
        let jm = j_matrix(&modes, &DriveSpec::new(Anchor::Cm, 1e-2), None).unwrap();
        for i in 0..7 {
            for j in 0..7 {
                assert_abs_diff_eq!(
                    jm.values[(i, j)],
                    jm.values[(6 - i, 6 - j)],
                    epsilon = 1e-9 * jm.values[(i, j)].abs().max(1e-6)
                );
            }
        }
    }

    #[test]
    fn zero_shift_quasi_harmonic_is_bitwise_harmonic() {
        let (_, modes, ctx) = pipeline(4);
        let zero_report = ctx
            .shift_report(0.0, Cooling::SidebandTransverse)
            .map(|mut r| {
                for s in r.shift_over_cm.iter_mut() {
                    *s = 0.0;
                }
                r
            });
        let drive = DriveSpec::new(Anchor::Cm, 1e-2);
        let harmonic = j_matrix(&modes, &drive, None).unwrap();
        let quasi = j_matrix(&modes, &drive, Some(&zero_report.unwrap())).unwrap();
        assert!(quasi.quasi_harmonic);
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(harmonic.values[(i, j)], quasi.values[(i, j)]);
            }
        }
    }

    #[test]
    fn coupling_is_linear_in_force_prefactor() {
        let (_, modes, _) = pipeline(3);
        let unit = j_matrix(&modes, &DriveSpec::new(Anchor::Cm, 1e-2), None).unwrap();
        let scaled = j_matrix(
            &modes,
            &DriveSpec {
                force_prefactor: 2.5,
                ..DriveSpec::new(Anchor::Cm, 1e-2)
            },
            None,
        )
        .unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(scaled.values[(i, j)], 2.5 * unit.values[(i, j)]);
            }
        }
    }

    #[test]
    fn far_detuned_asymptotics() {
        let (_, modes, _) = pipeline(5);
        // mu = 1e4 and 1e5 omega_z: off-diagonal couplings decay as mu^-4
        // (orthogonality cancels the mu^-2 term), the trace sums as mu^-2
        let near = j_matrix(&modes, &DriveSpec::new(Anchor::Cm, 999.0), None).unwrap();
        let far = j_matrix(&modes, &DriveSpec::new(Anchor::Cm, 9999.0), None).unwrap();
        let max_abs = |jm: &JMatrix| {
            (0..5)
                .flat_map(|i| (0..5).map(move |j| (i, j)))
                .map(|(i, j)| jm.values[(i, j)].abs())
                .fold(0.0, f64::max)
        };
        let max_near = max_abs(&near);
        let max_far = max_abs(&far);
        assert_relative_eq!(max_near / max_far, 1e4, max_relative = 1e-2);
        let trace = |mu: f64| -> f64 {
            (0..5)
                .map(|k| 1.0 / (mu * mu - modes.frequencies[k].powi(2)))
                .sum()
        };
        assert_relative_eq!(trace(1e4) / trace(1e5), 1e2, max_relative = 1e-2);
    }

    #[test]
    fn tiny_detuning_makes_couplings_uniform() {
        let (_, modes, _) = pipeline(5);
        let jm = j_matrix(&modes, &DriveSpec::new(Anchor::Cm, 1e-6), None).unwrap();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..5 {
            for j in i + 1..5 {
                lo = lo.min(jm.values[(i, j)]);
                hi = hi.max(jm.values[(i, j)]);
            }
        }
        assert!(
            (hi - lo).abs() < 1e-3 * hi.abs(),
            "CM-dominated couplings should be uniform: {lo} vs {hi}"
        );
    }

    #[test]
    fn exact_resonance_is_an_error() {
        let (_, modes, _) = pipeline(3);
        let err = j_matrix(&modes, &DriveSpec::new(Anchor::Cm, 0.0), None).unwrap_err();
        assert!(matches!(err, Error::ResonantDrive { mode: 2, .. }));
        let bad_anchor = j_matrix(&modes, &DriveSpec::new(Anchor::Index(3), 0.1), None);
        assert!(matches!(bad_anchor, Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn two_ion_profile_is_trivial() {
        let (chain, modes, _) = pipeline(2);
        let jm = j_matrix(&modes, &DriveSpec::new(Anchor::Cm, 0.1), None).unwrap();
        let profile = j_distance_profile(&jm, &chain);
        assert_eq!(profile.points.len(), 1);
        assert!(profile.certificate.is_empty());
        assert!(profile.exponent.is_nan());
    }

    #[test]
    fn temperature_traces_and_zero_point_identity() {
        let (_, modes, ctx) = pipeline(3);
        let reports = [
            ctx.shift_report(0.0, Cooling::SidebandTransverse).unwrap(),
            ctx.shift_report(1.0, Cooling::SidebandTransverse).unwrap(),
        ];
        let drive = DriveSpec::new(Anchor::Cm, 1e-1);
        let traces = j_vs_temperature(&modes, &drive, &reports).unwrap();
        assert_eq!(traces.len(), 2);
        // harmonic part is temperature independent
        assert_eq!(traces[0].harmonic, traces[1].harmonic);
        // the t=0 row equals a J built directly from zero-point shifts
        let direct = j_matrix(&modes, &drive, Some(&reports[0])).unwrap();
        for (j, &value) in traces[0].quasi.iter().enumerate() {
            assert_eq!(value, direct.values[(0, j + 1)]);
        }
    }

    #[test]
    fn statistics_separate_floored_pairs() {
        let (_, modes, ctx) = pipeline(4);
        let drive = DriveSpec::new(Anchor::Cm, 1e-1);
        let harmonic = j_matrix(&modes, &drive, None).unwrap();
        let report = ctx.shift_report(1.0, Cooling::DopplerAll).unwrap();
        let quasi = j_matrix(&modes, &drive, Some(&report)).unwrap();
        let stats = shift_statistics(&harmonic, &quasi);
        assert_eq!(stats.shifts.len() + stats.floored.len(), 6);
        assert!(stats.floored.is_empty());
        assert!(stats.max >= stats.mean && stats.mean > 0.0);
    }
}
