//! Anharmonic energy corrections and thermally averaged frequency shifts.
//!
//! The leading correction to a phonon state |n> combines the quartic
//! coupling at first order with the cubic coupling at second order of
//! Rayleigh-Schroedinger perturbation theory. Both contributions are
//! quadratic polynomials in the occupation numbers, so thermal averaging
//! reduces to substituting mean occupations, and a mode frequency shift is
//! the energy cost of one extra phonon.
//!
//! Two variants of the closed form are provided. They differ in a single
//! numerator of the second-order like-mode term: [`ShiftFormula::Consistent`]
//! carries a frequency factor there and matches the brute-force oracle to
//! machine precision; [`ShiftFormula::Tabulated`] omits that factor and is
//! kept selectable for comparison because it circulates in tabulated form.

pub mod oracle;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::modes::NormalModes;
use crate::tensors::ModeTensors;
use crate::units::{t_parameter_to_kelvin, ScaleSet};

/// Denominators smaller than this (in units of omega_z^2) are flagged as
/// near-resonant; they are never regularized.
pub const RESONANCE_TOL: f64 = 1e-6;

/// Which closed form to evaluate; see the module docs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum ShiftFormula {
    #[default]
    Consistent,
    Tabulated,
}

impl ShiftFormula {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "consistent" => Ok(ShiftFormula::Consistent),
            "tabulated" => Ok(ShiftFormula::Tabulated),
            other => Err(Error::InvalidConfig(format!(
                "unknown shift formula '{other}' (expected consistent|tabulated)"
            ))),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ShiftFormula::Consistent => "consistent",
            ShiftFormula::Tabulated => "tabulated",
        }
    }
}

/// Occupation pattern imposed by the cooling scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Cooling {
    /// Every mode holds its thermal occupation.
    DopplerAll,
    /// Transverse modes frozen to the ground state, longitudinal thermal.
    SidebandTransverse,
}

impl Cooling {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "doppler" => Ok(Cooling::DopplerAll),
            "sideband" => Ok(Cooling::SidebandTransverse),
            other => Err(Error::InvalidConfig(format!(
                "unknown cooling scheme '{other}' (expected doppler|sideband)"
            ))),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Cooling::DopplerAll => "doppler",
            Cooling::SidebandTransverse => "sideband",
        }
    }
}

/// A perturbation-theory denominator that came close to zero.
#[derive(Debug, Clone, Serialize)]
pub struct ResonanceFlag {
    /// Which family of denominators: "4wb2-wa2", "sum", or "diff".
    pub kind: &'static str,
    pub modes: Vec<usize>,
    pub denominator: f64,
}

/// Mean thermal occupation of a mode with dimensionless frequency `w` at a
/// physical temperature.
pub fn mean_occupation(w: f64, temperature_kelvin: f64, scales: &ScaleSet) -> Result<f64> {
    if temperature_kelvin < 0.0 {
        return Err(Error::NegativeTemperature(temperature_kelvin));
    }
    if temperature_kelvin == 0.0 {
        return Ok(0.0);
    }
    let x = scales.eta * w / (scales.kb_over_e0 * temperature_kelvin);
    Ok(1.0 / (x.exp() - 1.0))
}

// One distinct-mode cubic triple a<b<c with its squared coupling and the
// six second-order denominators, precomputed per role assignment of the
// spectator mode: [sum_c, diff_c, sum_b, diff_b, sum_a, diff_a].
struct Triple {
    a: usize,
    b: usize,
    c: usize,
    b2: f64,
    den: [f64; 6],
}

/// Everything needed to evaluate the energy correction at arbitrary
/// occupations: frequencies plus the tensor slices the closed form
/// consumes, with denominators of distinct-mode triples precomputed.
pub struct ShiftContext {
    pub n_ions: usize,
    pub eta: f64,
    pub beta_x: f64,
    pub formula: ShiftFormula,
    scales: ScaleSet,
    w: Vec<f64>,
    /// `C_aaaa`.
    cd: Vec<f64>,
    /// `C_aabb`.
    cp: Mat,
    /// `B_aaa`.
    bd: Vec<f64>,
    /// `bp[(b, a)] = B_bba`.
    bp: Mat,
    triples: Vec<Triple>,
    flags: Vec<ResonanceFlag>,
}

impl ShiftContext {
    pub fn new(
        tensors: &ModeTensors,
        modes: &NormalModes,
        scales: &ScaleSet,
        formula: ShiftFormula,
    ) -> Result<Self> {
        if !modes.stable {
            return Err(Error::UnstableModes {
                branch: modes.soft_branch.label(),
                min_squared_frequency: modes.min_squared_frequency,
            });
        }
        let m = tensors.n_modes;
        let w = tensors.frequencies.clone();
        let bd: Vec<f64> = (0..m).map(|a| tensors.b(a, a, a)).collect();
        let mut bp = Mat::zeros(m, m);
        for b in 0..m {
            for a in 0..m {
                bp[(b, a)] = tensors.b(b, b, a);
            }
        }

        let mut flags = Vec::new();
        for a in 0..m {
            for b in 0..m {
                if b == a || bp[(b, a)] == 0.0 {
                    continue;
                }
                let den = 4.0 * w[b] * w[b] - w[a] * w[a];
                if den.abs() < RESONANCE_TOL {
                    flags.push(ResonanceFlag {
                        kind: "4wb2-wa2",
                        modes: vec![b, a],
                        denominator: den,
                    });
                }
            }
        }

        let mut triples = Vec::new();
        for a in 0..m {
            for b in a + 1..m {
                for c in b + 1..m {
                    let value = tensors.b(a, b, c);
                    if value == 0.0 {
                        continue;
                    }
                    let den = [
                        (w[a] + w[b]).powi(2) - w[c] * w[c],
                        (w[a] - w[b]).powi(2) - w[c] * w[c],
                        (w[a] + w[c]).powi(2) - w[b] * w[b],
                        (w[a] - w[c]).powi(2) - w[b] * w[b],
                        (w[b] + w[c]).powi(2) - w[a] * w[a],
                        (w[b] - w[c]).powi(2) - w[a] * w[a],
                    ];
                    for (k, &d) in den.iter().enumerate() {
                        if d.abs() < RESONANCE_TOL {
                            let roles = match k / 2 {
                                0 => vec![a, b, c],
                                1 => vec![a, c, b],
                                _ => vec![b, c, a],
                            };
                            flags.push(ResonanceFlag {
                                kind: if k % 2 == 0 { "sum" } else { "diff" },
                                modes: roles,
                                denominator: d,
                            });
                        }
                    }
                    triples.push(Triple {
                        a,
                        b,
                        c,
                        b2: value * value,
                        den,
                    });
                }
            }
        }

        Ok(ShiftContext {
            n_ions: modes.n_ions,
            eta: tensors.eta,
            beta_x: modes.beta_x,
            formula,
            scales: *scales,
            w,
            cd: tensors.c_diag.clone(),
            cp: tensors.c_pair.clone(),
            bd,
            bp,
            triples,
            flags,
        })
    }

    pub fn n_modes(&self) -> usize {
        self.w.len()
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.w
    }

    /// Denominators that came within [`RESONANCE_TOL`] of zero; independent
    /// of occupations, so computed once at construction.
    pub fn resonance_flags(&self) -> &[ResonanceFlag] {
        &self.flags
    }

    /// Energy correction (units of `m omega_z^2 l0^2`) at the given mean
    /// occupations. Exact for integer occupations; because the expression
    /// is a quadratic polynomial in each `n_a`, substituting thermal means
    /// performs the thermal average exactly.
    pub fn delta_e(&self, n: &[f64]) -> f64 {
        let m = self.w.len();
        let w = &self.w;

        let mut quartic = 0.0;
        for a in 0..m {
            let na = n[a];
            quartic += (2.0 * na * na + 2.0 * na + 1.0) * self.cd[a];
            for (b, &nb) in n.iter().enumerate() {
                if b != a {
                    quartic += (2.0 * na + 1.0) * (2.0 * nb + 1.0) * self.cp[(a, b)];
                }
            }
        }
        let first_order = 3.0 * quartic;

        // like-mode second order: -B_aaa^2 (30n^2+30n+11)/w_a
        let mut t_diag = 0.0;
        for a in 0..m {
            if self.bd[a] != 0.0 {
                t_diag -=
                    self.bd[a] * self.bd[a] * (30.0 * n[a] * n[a] + 30.0 * n[a] + 11.0) / w[a];
            }
        }

        // B_bba B_aaa and B_bba^2 families
        let mut t_cross = 0.0;
        let mut t_two = 0.0;
        let mut t_spect = 0.0;
        for a in 0..m {
            let na1 = 2.0 * n[a] + 1.0;
            let mut p = 0.0;
            let mut p_sq = 0.0;
            for b in 0..m {
                if b == a {
                    continue;
                }
                let bba = self.bp[(b, a)];
                if bba == 0.0 {
                    continue;
                }
                let nb1 = 2.0 * n[b] + 1.0;
                if self.bd[a] != 0.0 {
                    t_cross -= 18.0 * bba * self.bd[a] * nb1 * na1 / w[a];
                }
                let anomalous = match self.formula {
                    ShiftFormula::Consistent => 2.0 * w[a] * (n[b] * n[b] + n[b] + 1.0),
                    ShiftFormula::Tabulated => 2.0 * (n[b] * n[b] + n[b] + 1.0),
                };
                let num = -4.0 * w[b] * nb1 * na1 + anomalous;
                t_two +=
                    9.0 * bba * bba * (num / (4.0 * w[b] * w[b] - w[a] * w[a]) - nb1 * nb1 / w[a]);
                p += bba * nb1;
                p_sq += bba * bba * nb1 * nb1;
            }
            // sum over distinct spectators b != c collapses to P^2 - sum of squares
            t_spect -= 9.0 * (p * p - p_sq) / w[a];
        }

        // distinct-mode triples; the kernel is symmetric in its first two
        // roles, so each unordered triple contributes twice per role choice
        let mut t_triples = 0.0;
        for tr in &self.triples {
            let (na, nb, nc) = (n[tr.a], n[tr.b], n[tr.c]);
            let (wa, wb, wc) = (w[tr.a], w[tr.b], w[tr.c]);
            let g = triple_kernel(na, nb, nc, wa, wb, wc, tr.den[0], tr.den[1])
                + triple_kernel(na, nc, nb, wa, wc, wb, tr.den[2], tr.den[3])
                + triple_kernel(nb, nc, na, wb, wc, wa, tr.den[4], tr.den[5]);
            t_triples += tr.b2 * g;
        }
        t_triples *= 12.0;

        first_order + (t_diag + t_cross + t_two + t_spect + t_triples) / self.eta
    }

    /// Fractional frequency shift of mode `a` relative to the transverse
    /// center-of-mass frequency: the energy cost of one extra phonon over
    /// the transverse CM quantum.
    pub fn frequency_shift(&self, a: usize, n: &[f64]) -> f64 {
        let mut shifted = n.to_vec();
        shifted[a] += 1.0;
        (self.delta_e(&shifted) - self.delta_e(n)) / (self.eta * self.beta_x)
    }

    /// Mean occupations at dimensionless temperature `t` (k_B T in units of
    /// the transverse CM quantum) under a cooling scheme.
    pub fn occupations_at_t(&self, t: f64, cooling: Cooling) -> Result<Vec<f64>> {
        if t < 0.0 {
            return Err(Error::NegativeTemperature(t));
        }
        let mut n: Vec<f64> = if t == 0.0 {
            vec![0.0; self.w.len()]
        } else {
            self.w
                .iter()
                .map(|&w| 1.0 / ((w / (t * self.beta_x)).exp() - 1.0))
                .collect()
        };
        if cooling == Cooling::SidebandTransverse {
            for value in n.iter_mut().take(2 * self.n_ions) {
                *value = 0.0;
            }
        }
        Ok(n)
    }

    /// Shifts of every mode at one temperature point.
    pub fn shift_report(&self, t: f64, cooling: Cooling) -> Result<ShiftReport> {
        let n = self.occupations_at_t(t, cooling)?;
        let base = self.delta_e(&n);
        let shift_over_cm: Vec<f64> = (0..self.w.len())
            .into_par_iter()
            .map(|a| {
                let mut shifted = n.clone();
                shifted[a] += 1.0;
                (self.delta_e(&shifted) - base) / (self.eta * self.beta_x)
            })
            .collect();
        Ok(ShiftReport {
            t,
            temperature_kelvin: t_parameter_to_kelvin(t, self.beta_x, &self.scales),
            cooling,
            occupations: n,
            shift_over_cm,
            flags: self.flags.clone(),
        })
    }
}

#[allow(clippy::too_many_arguments)]
fn triple_kernel(
    na: f64,
    nb: f64,
    nc: f64,
    wa: f64,
    wb: f64,
    wc: f64,
    den_sum: f64,
    den_diff: f64,
) -> f64 {
    let nc1 = 2.0 * nc + 1.0;
    let pair = na + nb + 2.0 * na * nb;
    let sum_num = -(wa + wb) * (1.0 + na + nb) * nc1 + wc * (1.0 + pair);
    let diff_num = (wa - wb) * (na - nb) * nc1 + wc * pair;
    sum_num / den_sum + diff_num / den_diff
}

/// Shifts of all modes at one temperature.
#[derive(Debug, Clone, Serialize)]
pub struct ShiftReport {
    /// Dimensionless temperature: k_B T over the transverse CM quantum.
    pub t: f64,
    pub temperature_kelvin: f64,
    pub cooling: Cooling,
    pub occupations: Vec<f64>,
    /// Per-mode fractional shift delta omega_a / omega_cm.
    pub shift_over_cm: Vec<f64>,
    pub flags: Vec<ResonanceFlag>,
}

/// Shift reports over a temperature grid.
pub fn thermal_shift_sweep(
    ctx: &ShiftContext,
    t_grid: &[f64],
    cooling: Cooling,
) -> Result<Vec<ShiftReport>> {
    t_grid
        .iter()
        .map(|&t| ctx.shift_report(t, cooling))
        .collect()
}
