//! Cubic and quartic Coulomb coupling tensors.
//!
//! At a linear-chain equilibrium the third and fourth position derivatives
//! of the potential collapse to a handful of families indexed by the
//! direction multiset and the ion-repetition pattern, all built from two
//! geometry tables: `sgn(j-i)/d_ij^4` and `1/d_ij^5`. This module evaluates
//! single entries from those tables, contracts them against normal-mode
//! vectors to produce the dimensionless mode tensors `B` and `C`, and
//! audits the tables against direct finite differences of the potential.

use rayon::prelude::*;
use serde::Serialize;

use crate::equilibrium::{potential, IonChain};
use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::modes::{Branch, NormalModes};
use crate::units::{ScaleSet, TrapConfig};

/// One tensor index: a direction and an ion.
pub type Site = (Branch, usize);

/// Mode count above which the dense quartic tensor is refused.
pub const FULL_QUARTIC_MODE_LIMIT: usize = 12;

// Direction factors of the quartic families, indexed by the two (possibly
// equal) directions that each appear twice: diag 9/9/24, cross 3 and -12.
const QMAT: [[f64; 3]; 3] = [[9.0, 3.0, -12.0], [3.0, 9.0, -12.0], [-12.0, -12.0, 24.0]];

/// Geometry tables of an equilibrium chain from which every cubic and
/// quartic position-space entry is assembled.
#[derive(Debug, Clone)]
pub struct PositionTensors {
    pub n_ions: usize,
    pub z: Vec<f64>,
    /// `g4[i][j] = sgn(j-i)/d_ij^4`, zero diagonal (antisymmetric).
    g4: Mat,
    /// Row sums of `g4`.
    sum_g4: Vec<f64>,
    /// `r5[i][j] = 1/d_ij^5`, zero diagonal (symmetric).
    r5: Mat,
    /// Row sums of `r5`.
    s5: Vec<f64>,
}

pub fn position_tensors(chain: &IonChain) -> PositionTensors {
    let n = chain.n_ions();
    let mut g4 = Mat::zeros(n, n);
    let mut r5 = Mat::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let d = (chain.z[j] - chain.z[i]).abs();
            g4[(i, j)] = (chain.z[j] - chain.z[i]).signum() / d.powi(4);
            r5[(i, j)] = 1.0 / d.powi(5);
        }
    }
    let sum_g4 = (0..n).map(|i| g4.row(i).iter().sum()).collect();
    let s5 = (0..n).map(|i| r5.row(i).iter().sum()).collect();
    PositionTensors {
        n_ions: n,
        z: chain.z.clone(),
        g4,
        sum_g4,
        r5,
        s5,
    }
}

/// Direction factor of a cubic family: -3 for a transverse pair with one
/// longitudinal index, +6 for three longitudinal indices, otherwise the
/// entry vanishes identically.
fn cubic_direction_factor(branches: [Branch; 3]) -> Option<f64> {
    let mut counts = [0usize; 3];
    for b in branches {
        counts[b.index()] += 1;
    }
    match counts {
        [2, 0, 1] | [0, 2, 1] => Some(-3.0),
        [0, 0, 3] => Some(6.0),
        _ => None,
    }
}

/// Direction factor of a quartic family: nonzero only when every direction
/// appears an even number of times.
fn quartic_direction_factor(branches: [Branch; 4]) -> Option<f64> {
    let mut counts = [0usize; 3];
    for b in branches {
        counts[b.index()] += 1;
    }
    if counts.iter().any(|&c| c % 2 == 1) {
        return None;
    }
    let mut dirs = [0usize; 2];
    let mut k = 0;
    for (d, &c) in counts.iter().enumerate() {
        for _ in 0..c / 2 {
            dirs[k] = d;
            k += 1;
        }
    }
    Some(QMAT[dirs[0]][dirs[1]])
}

/// Ion-pattern classification shared by both tensor ranks: the entry value
/// depends only on which ion indices repeat, not on how directions pair
/// with them.
fn repetition_pattern(ions: &[usize]) -> RepetitionPattern {
    let mut distinct: Vec<(usize, usize)> = Vec::with_capacity(ions.len());
    for &i in ions {
        match distinct.iter_mut().find(|(ion, _)| *ion == i) {
            Some((_, count)) => *count += 1,
            None => distinct.push((i, 1)),
        }
    }
    match distinct.as_slice() {
        [(i, _)] => RepetitionPattern::AllSame(*i),
        [(i, a), (j, b)] => {
            if a >= b {
                RepetitionPattern::TwoIons {
                    major: *i,
                    minor: *j,
                    split: (*a, *b),
                }
            } else {
                RepetitionPattern::TwoIons {
                    major: *j,
                    minor: *i,
                    split: (*b, *a),
                }
            }
        }
        _ => RepetitionPattern::Scattered,
    }
}

enum RepetitionPattern {
    AllSame(usize),
    TwoIons {
        major: usize,
        minor: usize,
        split: (usize, usize),
    },
    Scattered,
}

/// Third derivative of the dimensionless potential with respect to the
/// three site coordinates, from the family tables.
pub fn b_tilde(pos: &PositionTensors, s1: Site, s2: Site, s3: Site) -> f64 {
    let Some(dc) = cubic_direction_factor([s1.0, s2.0, s3.0]) else {
        return 0.0;
    };
    match repetition_pattern(&[s1.1, s2.1, s3.1]) {
        RepetitionPattern::AllSame(i) => dc * pos.sum_g4[i],
        RepetitionPattern::TwoIons { major, minor, .. } => -dc * pos.g4[(major, minor)],
        RepetitionPattern::Scattered => 0.0,
    }
}

/// Fourth derivative of the dimensionless potential with respect to the
/// four site coordinates, from the family tables.
pub fn c_tilde(pos: &PositionTensors, s1: Site, s2: Site, s3: Site, s4: Site) -> f64 {
    let Some(q) = quartic_direction_factor([s1.0, s2.0, s3.0, s4.0]) else {
        return 0.0;
    };
    match repetition_pattern(&[s1.1, s2.1, s3.1, s4.1]) {
        RepetitionPattern::AllSame(i) => q * pos.s5[i],
        RepetitionPattern::TwoIons {
            major,
            minor,
            split: (3, 1),
        } => -q * pos.r5[(major, minor)],
        RepetitionPattern::TwoIons {
            major,
            minor,
            split: (2, 2),
        } => q * pos.r5[(major, minor)],
        _ => 0.0,
    }
}

/// All canonically ordered (sites ascending) nonzero cubic entries.
pub fn nonzero_cubic(pos: &PositionTensors) -> Vec<(Site, Site, Site, f64)> {
    let sites = all_sites(pos.n_ions);
    let mut out = Vec::new();
    for (p, &s1) in sites.iter().enumerate() {
        for (q, &s2) in sites.iter().enumerate().skip(p) {
            for &s3 in sites.iter().skip(q) {
                let v = b_tilde(pos, s1, s2, s3);
                if v != 0.0 {
                    out.push((s1, s2, s3, v));
                }
            }
        }
    }
    out
}

/// All canonically ordered nonzero quartic entries.
pub fn nonzero_quartic(pos: &PositionTensors) -> Vec<(Site, Site, Site, Site, f64)> {
    let sites = all_sites(pos.n_ions);
    let mut out = Vec::new();
    for (p, &s1) in sites.iter().enumerate() {
        for (q, &s2) in sites.iter().enumerate().skip(p) {
            for (r, &s3) in sites.iter().enumerate().skip(q) {
                for &s4 in sites.iter().skip(r) {
                    let v = c_tilde(pos, s1, s2, s3, s4);
                    if v != 0.0 {
                        out.push((s1, s2, s3, s4, v));
                    }
                }
            }
        }
    }
    out
}

fn all_sites(n: usize) -> Vec<Site> {
    Branch::ALL
        .into_iter()
        .flat_map(|b| (0..n).map(move |i| (b, i)))
        .collect()
}

fn hadamard(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x * y).collect()
}

fn matvec(m: &Mat, v: &[f64]) -> Vec<f64> {
    (0..m.rows())
        .map(|i| m.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Contraction of one cubic family against three ion-amplitude vectors,
/// without the direction factor: the all-same-ion diagonal minus the three
/// ways of placing the single unrepeated ion.
fn cubic_raw(pos: &PositionTensors, u: &[f64], v: &[f64], t: &[f64]) -> f64 {
    let uv = hadamard(u, v);
    let ut = hadamard(u, t);
    let vt = hadamard(v, t);
    let diag: f64 = (0..pos.n_ions).map(|i| pos.sum_g4[i] * uv[i] * t[i]).sum();
    let cross = dot(&uv, &matvec(&pos.g4, t))
        + dot(&ut, &matvec(&pos.g4, v))
        + dot(&vt, &matvec(&pos.g4, u));
    diag - cross
}

/// Contraction of one quartic family against four ion-amplitude vectors,
/// without the direction factor: all-same-ion diagonal, minus the four
/// 3+1 placements, plus the three 2+2 pairings.
fn quartic_raw(pos: &PositionTensors, u: &[f64], v: &[f64], s: &[f64], t: &[f64]) -> f64 {
    let uv = hadamard(u, v);
    let us = hadamard(u, s);
    let ut = hadamard(u, t);
    let vs = hadamard(v, s);
    let vt = hadamard(v, t);
    let st = hadamard(s, t);
    let uvs = hadamard(&uv, s);
    let uvt = hadamard(&uv, t);
    let ust = hadamard(&us, t);
    let vst = hadamard(&vs, t);
    let diag: f64 = (0..pos.n_ions).map(|i| pos.s5[i] * uvs[i] * t[i]).sum();
    let three_one = dot(&vst, &matvec(&pos.r5, u))
        + dot(&ust, &matvec(&pos.r5, v))
        + dot(&uvt, &matvec(&pos.r5, s))
        + dot(&uvs, &matvec(&pos.r5, t));
    let two_two = dot(&uv, &matvec(&pos.r5, &st))
        + dot(&us, &matvec(&pos.r5, &vt))
        + dot(&ut, &matvec(&pos.r5, &vs));
    diag - three_one + two_two
}

/// Dimensionless mode-space coupling tensors.
///
/// `B` is stored dense over all `(3N)^3` index triples; the quartic tensor
/// is kept only in the slices the perturbation theory consumes (`C_aaaa`
/// and `C_aabb`) unless the dense form is explicitly requested for the
/// brute-force oracle.
#[derive(Debug, Clone)]
pub struct ModeTensors {
    pub n_modes: usize,
    pub eta: f64,
    /// Mode frequencies omega_a/omega_z, copied from the spectrum.
    pub frequencies: Vec<f64>,
    pub(crate) b: Vec<f64>,
    /// `C_aaaa` per mode.
    pub c_diag: Vec<f64>,
    /// `C_aabb` (symmetric, diagonal equals `c_diag`).
    pub c_pair: Mat,
    pub(crate) c_full: Option<Vec<f64>>,
}

impl ModeTensors {
    /// Cubic coupling `B_abc` (fully symmetric).
    pub fn b(&self, a: usize, b: usize, c: usize) -> f64 {
        self.b[(a * self.n_modes + b) * self.n_modes + c]
    }

    pub fn has_full_quartic(&self) -> bool {
        self.c_full.is_some()
    }

    /// Quartic coupling `C_abcd` from the dense tensor.
    pub fn c(&self, a: usize, b: usize, c: usize, d: usize) -> Result<f64> {
        let m = self.n_modes;
        self.c_full
            .as_ref()
            .map(|full| full[((a * m + b) * m + c) * m + d])
            .ok_or(Error::MissingFullQuartic)
    }
}

fn mode_frequencies_checked(modes: &NormalModes) -> Result<Vec<f64>> {
    if !modes.stable {
        return Err(Error::UnstableModes {
            branch: modes.soft_branch.label(),
            min_squared_frequency: modes.min_squared_frequency,
        });
    }
    Ok(modes.frequencies.clone())
}

/// Builds `B`, `C_aaaa`, and `C_aabb` by contracting the position-space
/// families against mode vectors.
pub fn mode_tensors(
    pos: &PositionTensors,
    modes: &NormalModes,
    scales: &ScaleSet,
) -> Result<ModeTensors> {
    build_tensors(pos, modes, scales, false)
}

/// As [`mode_tensors`] but additionally materializes the dense quartic
/// tensor; refused above [`FULL_QUARTIC_MODE_LIMIT`] modes.
pub fn mode_tensors_full(
    pos: &PositionTensors,
    modes: &NormalModes,
    scales: &ScaleSet,
) -> Result<ModeTensors> {
    if modes.n_modes() > FULL_QUARTIC_MODE_LIMIT {
        return Err(Error::StateSpaceOverflow {
            modes: modes.n_modes(),
            limit: FULL_QUARTIC_MODE_LIMIT,
        });
    }
    build_tensors(pos, modes, scales, true)
}

fn build_tensors(
    pos: &PositionTensors,
    modes: &NormalModes,
    scales: &ScaleSet,
    full_quartic: bool,
) -> Result<ModeTensors> {
    let w = mode_frequencies_checked(modes)?;
    let m = modes.n_modes();
    let eta = scales.eta;
    let b_pref = (eta / 2.0).powf(1.5) / 6.0;
    let c_pref = (eta / 2.0).powi(2) / 24.0;

    let mut b = vec![0.0; m * m * m];
    for a in 0..m {
        for bb in a..m {
            for c in bb..m {
                let Some(dc) = cubic_direction_factor([
                    modes.branch_of(a),
                    modes.branch_of(bb),
                    modes.branch_of(c),
                ]) else {
                    continue;
                };
                let raw = dc
                    * cubic_raw(
                        pos,
                        modes.mode_vector(a),
                        modes.mode_vector(bb),
                        modes.mode_vector(c),
                    );
                let value = b_pref * raw / (w[a] * w[bb] * w[c]).sqrt();
                for (p, q, r) in [
                    (a, bb, c),
                    (a, c, bb),
                    (bb, a, c),
                    (bb, c, a),
                    (c, a, bb),
                    (c, bb, a),
                ] {
                    b[(p * m + q) * m + r] = value;
                }
            }
        }
    }

    let mut c_pair = Mat::zeros(m, m);
    for a in 0..m {
        for bb in a..m {
            let q = QMAT[modes.branch_of(a).index()][modes.branch_of(bb).index()];
            let raw = q * quartic_raw(
                pos,
                modes.mode_vector(a),
                modes.mode_vector(a),
                modes.mode_vector(bb),
                modes.mode_vector(bb),
            );
            let value = c_pref * raw / (w[a] * w[bb]);
            c_pair[(a, bb)] = value;
            c_pair[(bb, a)] = value;
        }
    }
    let c_diag: Vec<f64> = (0..m).map(|a| c_pair[(a, a)]).collect();

    let c_full = if full_quartic {
        let mut full = vec![0.0; m * m * m * m];
        for a in 0..m {
            for bb in a..m {
                for c in bb..m {
                    for d in c..m {
                        let Some(q) = quartic_direction_factor([
                            modes.branch_of(a),
                            modes.branch_of(bb),
                            modes.branch_of(c),
                            modes.branch_of(d),
                        ]) else {
                            continue;
                        };
                        let raw = q * quartic_raw(
                            pos,
                            modes.mode_vector(a),
                            modes.mode_vector(bb),
                            modes.mode_vector(c),
                            modes.mode_vector(d),
                        );
                        let value = c_pref * raw / (w[a] * w[bb] * w[c] * w[d]).sqrt();
                        for perm in permutations4([a, bb, c, d]) {
                            let [p, q2, r, s] = perm;
                            full[((p * m + q2) * m + r) * m + s] = value;
                        }
                    }
                }
            }
        }
        Some(full)
    } else {
        None
    };

    Ok(ModeTensors {
        n_modes: m,
        eta,
        frequencies: w,
        b,
        c_diag,
        c_pair,
        c_full,
    })
}

fn permutations4(idx: [usize; 4]) -> Vec<[usize; 4]> {
    let mut out = Vec::with_capacity(24);
    let mut items = idx;
    heap_permute(&mut items, 4, &mut out);
    out
}

fn heap_permute(items: &mut [usize; 4], k: usize, out: &mut Vec<[usize; 4]>) {
    if k == 1 {
        out.push(*items);
        return;
    }
    for i in 0..k {
        heap_permute(items, k - 1, out);
        if k.is_multiple_of(2) {
            items.swap(i, k - 1);
        } else {
            items.swap(0, k - 1);
        }
    }
}

// Central finite-difference stencils: STEN2 is second-order accurate for
// derivative orders 1..3, STEN4 fourth-order accurate for orders 1..4.
const STEN2: [&[(i32, f64)]; 3] = [
    &[(1, 0.5), (-1, -0.5)],
    &[(1, 1.0), (0, -2.0), (-1, 1.0)],
    &[(2, 0.5), (1, -1.0), (-1, 1.0), (-2, -0.5)],
];
const STEN4: [&[(i32, f64)]; 4] = [
    &[
        (2, -1.0 / 12.0),
        (1, 8.0 / 12.0),
        (-1, -8.0 / 12.0),
        (-2, 1.0 / 12.0),
    ],
    &[
        (2, -1.0 / 12.0),
        (1, 16.0 / 12.0),
        (0, -30.0 / 12.0),
        (-1, 16.0 / 12.0),
        (-2, -1.0 / 12.0),
    ],
    &[
        (3, -1.0 / 8.0),
        (2, 1.0),
        (1, -13.0 / 8.0),
        (-1, 13.0 / 8.0),
        (-2, -1.0),
        (-3, 1.0 / 8.0),
    ],
    &[
        (3, -1.0 / 6.0),
        (2, 2.0),
        (1, -39.0 / 6.0),
        (0, 56.0 / 6.0),
        (-1, -39.0 / 6.0),
        (-2, 2.0),
        (-3, -1.0 / 6.0),
    ],
];

/// Step sizes pinned by the audits below: the cubic tables pass a plain
/// second-order stencil at 1e-3, the quartic ones need the fourth-order
/// stencil at 1e-2 to clear truncation-plus-roundoff.
pub const FD_CUBIC_STEP: f64 = 1e-3;
pub const FD_QUARTIC_STEP: f64 = 1e-2;

fn site_coordinate(site: Site, n: usize) -> usize {
    site.0.index() * n + site.1
}

fn fd_partial(
    coords: &mut Vec<f64>,
    orders: &[(usize, usize)],
    stencils: &[&[(i32, f64)]],
    h: f64,
    bx: f64,
    by: f64,
) -> f64 {
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        coords: &mut Vec<f64>,
        orders: &[(usize, usize)],
        stencils: &[&[(i32, f64)]],
        k: usize,
        weight: f64,
        h: f64,
        bx: f64,
        by: f64,
    ) -> f64 {
        if k == orders.len() {
            return weight * potential(coords, bx, by).expect("displaced chain stays separated");
        }
        let (ci, m) = orders[k];
        let saved = coords[ci];
        let mut acc = 0.0;
        for &(offset, coeff) in stencils[m - 1] {
            coords[ci] = saved + offset as f64 * h;
            acc += recurse(coords, orders, stencils, k + 1, weight * coeff, h, bx, by);
        }
        coords[ci] = saved;
        acc
    }
    let total: usize = orders.iter().map(|&(_, m)| m).sum();
    recurse(coords, orders, stencils, 0, 1.0, h, bx, by) / h.powi(total as i32)
}

fn derivative_orders(sites: &[Site], n: usize) -> Vec<(usize, usize)> {
    let mut orders: Vec<(usize, usize)> = Vec::with_capacity(sites.len());
    for &s in sites {
        let ci = site_coordinate(s, n);
        match orders.iter_mut().find(|(c, _)| *c == ci) {
            Some((_, m)) => *m += 1,
            None => orders.push((ci, 1)),
        }
    }
    orders
}

/// Third derivative of the full potential by central differences.
pub fn fd_cubic_entry(chain: &IonChain, config: &TrapConfig, s1: Site, s2: Site, s3: Site) -> f64 {
    let mut coords = chain.coordinates();
    let orders = derivative_orders(&[s1, s2, s3], chain.n_ions());
    fd_partial(
        &mut coords,
        &orders,
        &STEN2,
        FD_CUBIC_STEP,
        config.beta_x,
        config.beta_y,
    )
}

/// Fourth derivative of the full potential by central differences.
pub fn fd_quartic_entry(
    chain: &IonChain,
    config: &TrapConfig,
    s1: Site,
    s2: Site,
    s3: Site,
    s4: Site,
) -> f64 {
    let mut coords = chain.coordinates();
    let orders = derivative_orders(&[s1, s2, s3, s4], chain.n_ions());
    fd_partial(
        &mut coords,
        &orders,
        &STEN4,
        FD_QUARTIC_STEP,
        config.beta_x,
        config.beta_y,
    )
}

/// Result of checking tensor tables against finite differences.
#[derive(Debug, Clone, Serialize)]
pub struct FdAudit {
    pub entries_checked: usize,
    pub max_relative_error: f64,
}

/// Compares up to `max_samples` nonzero cubic table entries against finite
/// differences, sampling the canonical list evenly.
pub fn finite_difference_audit_cubic(
    chain: &IonChain,
    config: &TrapConfig,
    pos: &PositionTensors,
    max_samples: usize,
) -> FdAudit {
    let entries = nonzero_cubic(pos);
    let picked = sample(&entries, max_samples);
    let max_relative_error = picked
        .par_iter()
        .map(|&&(s1, s2, s3, exact)| {
            let fd = fd_cubic_entry(chain, config, s1, s2, s3);
            ((fd - exact) / exact).abs()
        })
        .reduce(|| 0.0, f64::max);
    FdAudit {
        entries_checked: picked.len(),
        max_relative_error,
    }
}

/// Compares up to `max_samples` nonzero quartic table entries against
/// finite differences.
pub fn finite_difference_audit_quartic(
    chain: &IonChain,
    config: &TrapConfig,
    pos: &PositionTensors,
    max_samples: usize,
) -> FdAudit {
    let entries = nonzero_quartic(pos);
    let picked = sample(&entries, max_samples);
    let max_relative_error = picked
        .par_iter()
        .map(|&&(s1, s2, s3, s4, exact)| {
            let fd = fd_quartic_entry(chain, config, s1, s2, s3, s4);
            ((fd - exact) / exact).abs()
        })
        .reduce(|| 0.0, f64::max);
    FdAudit {
        entries_checked: picked.len(),
        max_relative_error,
    }
}

fn sample<T>(entries: &[T], max_samples: usize) -> Vec<&T> {
    if entries.len() <= max_samples {
        return entries.iter().collect();
    }
    // even stride over the canonical ordering keeps the pick deterministic
    (0..max_samples)
        .map(|k| &entries[k * entries.len() / max_samples])
        .collect()
}
