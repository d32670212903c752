//! Brute-force check of the closed-form energy correction.
//!
//! Builds the perturbing operators literally from ladder operators in the
//! number basis and evaluates first-order quartic plus second-order cubic
//! Rayleigh-Schroedinger corrections by explicit state enumeration. Exact
//! up to floating point, exponentially expensive, and therefore capped at
//! a small mode count — its only job is to adjudicate the closed form.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::tensors::ModeTensors;

/// Hard cap on the mode count the oracle will enumerate.
pub const ORACLE_MODE_LIMIT: usize = 12;

type State = BTreeMap<Vec<u32>, f64>;

/// Applies `a + a^dagger` of one mode to a superposition.
fn apply_ladder(state: &State, mode: usize) -> State {
    let mut out = State::new();
    for (ket, &amp) in state {
        let n = ket[mode];
        if n > 0 {
            let mut down = ket.clone();
            down[mode] = n - 1;
            *out.entry(down).or_insert(0.0) += amp * (n as f64).sqrt();
        }
        let mut up = ket.clone();
        up[mode] = n + 1;
        *out.entry(up).or_insert(0.0) += amp * ((n + 1) as f64).sqrt();
    }
    out
}

/// Energy correction of the number state |n> by explicit perturbation
/// theory over the dense tensors. Requires [`ModeTensors`] built with the
/// full quartic tensor.
pub fn delta_e_oracle(n: &[u32], tensors: &ModeTensors) -> Result<f64> {
    let m = tensors.n_modes;
    if m > ORACLE_MODE_LIMIT {
        return Err(Error::StateSpaceOverflow {
            modes: m,
            limit: ORACLE_MODE_LIMIT,
        });
    }
    if !tensors.has_full_quartic() {
        return Err(Error::MissingFullQuartic);
    }
    assert_eq!(n.len(), m, "occupation vector must cover every mode");

    let base: State = [(n.to_vec(), 1.0)].into_iter().collect();

    // first order: <n| sum C_abcd A_a A_b A_c A_d |n>
    let mut e1 = 0.0;
    for a in 0..m {
        for b in 0..m {
            for c in 0..m {
                for d in 0..m {
                    let coupling = tensors.c(a, b, c, d)?;
                    if coupling == 0.0 {
                        continue;
                    }
                    // operators act right to left
                    let mut state = apply_ladder(&base, d);
                    state = apply_ladder(&state, c);
                    state = apply_ladder(&state, b);
                    state = apply_ladder(&state, a);
                    if let Some(&amp) = state.get(n) {
                        e1 += coupling * amp;
                    }
                }
            }
        }
    }

    // second order: sum_{m != n} |<m| V3 |n>|^2 / (E_n - E_m)
    let mut phi = State::new();
    for a in 0..m {
        for b in 0..m {
            for c in 0..m {
                let coupling = tensors.b(a, b, c);
                if coupling == 0.0 {
                    continue;
                }
                let mut state = apply_ladder(&base, c);
                state = apply_ladder(&state, b);
                state = apply_ladder(&state, a);
                for (ket, amp) in state {
                    *phi.entry(ket).or_insert(0.0) += coupling * amp;
                }
            }
        }
    }
    let mut e2 = 0.0;
    for (ket, amp) in &phi {
        if ket.as_slice() == n {
            continue;
        }
        let gap: f64 = tensors
            .frequencies
            .iter()
            .zip(n.iter().zip(ket.iter()))
            .map(|(&w, (&ni, &ki))| w * (ni as f64 - ki as f64))
            .sum();
        e2 += amp * amp / (tensors.eta * gap);
    }

    Ok(e1 + e2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Mat;
    use approx::assert_relative_eq;

    /// Hand-built single-mode tensors: one cubic coupling, no quartic.
    fn single_mode(w: f64, b: f64, eta: f64) -> ModeTensors {
        ModeTensors {
            n_modes: 1,
            eta,
            frequencies: vec![w],
            b: vec![b],
            c_diag: vec![0.0],
            c_pair: Mat::zeros(1, 1),
            c_full: Some(vec![0.0]),
        }
    }

    #[test]
    fn single_mode_cubic_matches_textbook_series() {
        let (w, b, eta) = (1.3, 0.04, 0.7);
        let tensors = single_mode(w, b, eta);
        // -B^2 (30n^2+30n+11)/(eta w)
        for n in [0u32, 1, 2, 5] {
            let nf = n as f64;
            let expect = -b * b * (30.0 * nf * nf + 30.0 * nf + 11.0) / (eta * w);
            let got = delta_e_oracle(&[n], &tensors).unwrap();
            assert_relative_eq!(got, expect, max_relative = 1e-12);
        }
    }

    #[test]
    fn guards_reject_missing_tensor_and_large_systems() {
        let mut tensors = single_mode(1.0, 0.1, 1.0);
        tensors.c_full = None;
        assert!(matches!(
            delta_e_oracle(&[0], &tensors).unwrap_err(),
            Error::MissingFullQuartic
        ));

        let m = ORACLE_MODE_LIMIT + 1;
        let big = ModeTensors {
            n_modes: m,
            eta: 1.0,
            frequencies: vec![1.0; m],
            b: vec![0.0; m * m * m],
            c_diag: vec![0.0; m],
            c_pair: Mat::zeros(m, m),
            c_full: Some(vec![0.0; m * m * m * m]),
        };
        assert!(matches!(
            delta_e_oracle(&vec![0; m], &big).unwrap_err(),
            Error::StateSpaceOverflow { .. }
        ));
    }
}
