//! Chain equilibrium: the dimensionless trap-plus-Coulomb potential, its
//! analytic derivatives, and a damped Newton minimizer over the longitudinal
//! coordinates (the transverse equilibrium of a linear chain is identically
//! zero).
//!
//! Coordinate layout: a flat slice of length 3N ordered direction-major,
//! `[x_0..x_{N-1}, y_0..y_{N-1}, z_0..z_{N-1}]`. The Coulomb energy counts
//! each pair once: sum_{i<j} 1/|r_i - r_j|.

use crate::error::{Error, Result};
use crate::linalg::{jacobi_eigh, lu_solve, Mat};
use crate::units::TrapConfig;

/// Convergence threshold on the max-norm of the longitudinal gradient.
pub const GRADIENT_TOL: f64 = 1e-12;
/// Newton iteration cap.
pub const MAX_ITERATIONS: usize = 500;
/// Below this separation the Coulomb term is treated as divergent.
const MIN_SEPARATION: f64 = 1e-12;

/// Equilibrium geometry of a linear chain, in units of l0.
#[derive(Debug, Clone)]
pub struct IonChain {
    /// Longitudinal positions, strictly increasing.
    pub z: Vec<f64>,
    /// Max-norm of the longitudinal gradient at the solution.
    pub residual_force_norm: f64,
    /// Dimensionless potential at the solution.
    pub potential_value: f64,
}

impl IonChain {
    pub fn n_ions(&self) -> usize {
        self.z.len()
    }

    /// Embeds the chain into full 3N coordinates (transverse zeros).
    pub fn coordinates(&self) -> Vec<f64> {
        let n = self.z.len();
        let mut coords = vec![0.0; 3 * n];
        coords[2 * n..].copy_from_slice(&self.z);
        coords
    }
}

fn split_coords(coords: &[f64]) -> (usize, &[f64], &[f64], &[f64]) {
    assert!(
        coords.len().is_multiple_of(3) && !coords.is_empty(),
        "coordinates must hold 3N values"
    );
    let n = coords.len() / 3;
    (n, &coords[..n], &coords[n..2 * n], &coords[2 * n..])
}

fn pair_displacement(
    x: &[f64],
    y: &[f64],
    z: &[f64],
    i: usize,
    j: usize,
) -> Result<(f64, f64, f64, f64)> {
    let dx = x[i] - x[j];
    let dy = y[i] - y[j];
    let dz = z[i] - z[j];
    let d = (dx * dx + dy * dy + dz * dz).sqrt();
    if d < MIN_SEPARATION {
        return Err(Error::CoincidentIons {
            i,
            j,
            separation: d,
        });
    }
    Ok((dx, dy, dz, d))
}

/// Dimensionless potential: 0.5 sum_alpha beta_alpha^2 x_{alpha i}^2 plus the
/// single-counted Coulomb sum.
pub fn potential(coords: &[f64], beta_x: f64, beta_y: f64) -> Result<f64> {
    let (n, x, y, z) = split_coords(coords);
    let mut v = 0.0;
    for i in 0..n {
        v += 0.5 * (beta_x * beta_x * x[i] * x[i] + beta_y * beta_y * y[i] * y[i] + z[i] * z[i]);
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let (_, _, _, d) = pair_displacement(x, y, z, i, j)?;
            v += 1.0 / d;
        }
    }
    Ok(v)
}

/// Analytic gradient of `potential`, same 3N layout.
pub fn gradient(coords: &[f64], beta_x: f64, beta_y: f64) -> Result<Vec<f64>> {
    let (n, x, y, z) = split_coords(coords);
    let mut g = vec![0.0; 3 * n];
    for i in 0..n {
        g[i] = beta_x * beta_x * x[i];
        g[n + i] = beta_y * beta_y * y[i];
        g[2 * n + i] = z[i];
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let (dx, dy, dz, d) = pair_displacement(x, y, z, i, j)?;
            let inv3 = 1.0 / (d * d * d);
            g[i] -= dx * inv3;
            g[j] += dx * inv3;
            g[n + i] -= dy * inv3;
            g[n + j] += dy * inv3;
            g[2 * n + i] -= dz * inv3;
            g[2 * n + j] += dz * inv3;
        }
    }
    Ok(g)
}

/// Analytic Hessian of `potential`, 3N x 3N, exactly symmetric by
/// construction.
pub fn hessian(coords: &[f64], beta_x: f64, beta_y: f64) -> Result<Mat> {
    let (n, x, y, z) = split_coords(coords);
    let mut h = Mat::zeros(3 * n, 3 * n);
    for i in 0..n {
        h[(i, i)] = beta_x * beta_x;
        h[(n + i, n + i)] = beta_y * beta_y;
        h[(2 * n + i, 2 * n + i)] = 1.0;
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let (dx, dy, dz, d) = pair_displacement(x, y, z, i, j)?;
            let inv3 = 1.0 / (d * d * d);
            let inv5 = inv3 / (d * d);
            let delta = [dx, dy, dz];
            for a in 0..3 {
                for b in 0..3 {
                    let same = if a == b { inv3 } else { 0.0 };
                    // second derivative of 1/d: same-ion block, and the
                    // cross-ion block with opposite sign; grouping the
                    // displacement product keeps the matrix bitwise symmetric
                    let block = 3.0 * (delta[a] * delta[b]) * inv5 - same;
                    h[(a * n + i, b * n + i)] += block;
                    h[(a * n + j, b * n + j)] += block;
                    h[(a * n + i, b * n + j)] -= block;
                    h[(a * n + j, b * n + i)] -= block;
                }
            }
        }
    }
    Ok(h)
}

/// Direction blocks of the Hessian at a linear-chain configuration
/// (transverse coordinates zero): returns (Axx, Ayy, Azz), each N x N.
pub fn hessian_blocks(z: &[f64], beta_x: f64, beta_y: f64) -> (Mat, Mat, Mat) {
    let n = z.len();
    let mut axx = Mat::zeros(n, n);
    let mut ayy = Mat::zeros(n, n);
    let mut azz = Mat::zeros(n, n);
    for i in 0..n {
        axx[(i, i)] = beta_x * beta_x;
        ayy[(i, i)] = beta_y * beta_y;
        azz[(i, i)] = 1.0;
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let d = (z[j] - z[i]).abs();
            let t = 1.0 / (d * d * d);
            axx[(i, j)] = t;
            axx[(j, i)] = t;
            axx[(i, i)] -= t;
            axx[(j, j)] -= t;
            ayy[(i, j)] = t;
            ayy[(j, i)] = t;
            ayy[(i, i)] -= t;
            ayy[(j, j)] -= t;
            azz[(i, j)] = -2.0 * t;
            azz[(j, i)] = -2.0 * t;
            azz[(i, i)] += 2.0 * t;
            azz[(j, j)] += 2.0 * t;
        }
    }
    (axx, ayy, azz)
}

/// Default starting guess: uniform spacing with the outer ions at
/// +/- 0.48 N^0.56, an empirical fit of chain extent that keeps every
/// tested N in the Newton basin.
pub fn initial_guess(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.0];
    }
    let half = 0.48 * (n as f64).powf(0.56);
    (0..n)
        .map(|i| -half + 2.0 * half * i as f64 / (n - 1) as f64)
        .collect()
}

fn strictly_increasing(z: &[f64]) -> bool {
    z.windows(2).all(|w| w[1] - w[0] > MIN_SEPARATION)
}

// Longitudinal-only potential/gradient/Hessian used by the solver.
fn potential_z(z: &[f64]) -> f64 {
    let mut v = 0.0;
    for (i, zi) in z.iter().enumerate() {
        v += 0.5 * zi * zi;
        for zj in &z[(i + 1)..] {
            v += 1.0 / (zj - zi).abs();
        }
    }
    v
}

fn gradient_z(z: &[f64]) -> Vec<f64> {
    let n = z.len();
    let mut g: Vec<f64> = z.to_vec();
    for i in 0..n {
        for j in (i + 1)..n {
            let dz = z[i] - z[j];
            let inv3 = 1.0 / (dz.abs().powi(3));
            g[i] -= dz * inv3;
            g[j] += dz * inv3;
        }
    }
    g
}

/// Finds the chain equilibrium by damped Newton iteration on the
/// longitudinal coordinates, with analytic gradient and Hessian and a
/// backtracking line search.
///
/// The line search accepts any step that keeps the ordering and does not
/// increase the potential beyond a relative slack of 1e-15; near the minimum
/// the decrease itself falls below floating-point resolution, and a strict
/// decrease test would stall there.
pub fn solve_equilibrium(config: &TrapConfig, guess: Option<&[f64]>) -> Result<IonChain> {
    config.validate()?;
    let n = config.n_ions;
    if n == 1 {
        return Ok(IonChain {
            z: vec![0.0],
            residual_force_norm: 0.0,
            potential_value: 0.0,
        });
    }

    let mut z: Vec<f64> = match guess {
        Some(g) => {
            if g.len() != n {
                return Err(Error::InvalidConfig(format!(
                    "initial guess has {} positions for {} ions",
                    g.len(),
                    n
                )));
            }
            if !strictly_increasing(g) {
                return Err(Error::InvalidConfig(
                    "initial guess must be strictly increasing (no coincident ions)".into(),
                ));
            }
            g.to_vec()
        }
        None => initial_guess(n),
    };

    let max_abs = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let mut residual = max_abs(&gradient_z(&z));

    for iteration in 0..MAX_ITERATIONS {
        if residual < GRADIENT_TOL {
            // Confirm this is a minimum, not a saddle: the longitudinal
            // Hessian must be positive semidefinite.
            let (_, _, azz) = hessian_blocks(&z, config.beta_x, config.beta_y);
            let (eigs, _) = jacobi_eigh(&azz);
            if eigs[0] < -1e-9 {
                return Err(Error::NoConvergence {
                    iterations: iteration,
                    residual: eigs[0],
                    tolerance: GRADIENT_TOL,
                });
            }
            return Ok(IonChain {
                z: z.clone(),
                residual_force_norm: residual,
                potential_value: potential_z(&z),
            });
        }

        let g = gradient_z(&z);
        let (_, _, azz) = hessian_blocks(&z, config.beta_x, config.beta_y);
        let neg_g: Vec<f64> = g.iter().map(|v| -v).collect();
        // Newton step; fall back to steepest descent if the Hessian is
        // singular (only possible far from the minimum).
        let step = lu_solve(&azz, &neg_g).unwrap_or(neg_g);

        let v0 = potential_z(&z);
        let mut lambda = 1.0;
        let mut candidate = z.clone();
        while lambda > 1e-10 {
            for (c, (zi, si)) in candidate.iter_mut().zip(z.iter().zip(&step)) {
                *c = zi + lambda * si;
            }
            if strictly_increasing(&candidate) && potential_z(&candidate) <= v0 + 1e-15 * v0.abs() {
                break;
            }
            lambda *= 0.5;
        }
        if strictly_increasing(&candidate) {
            z = candidate;
        }
        residual = max_abs(&gradient_z(&z));
    }

    Err(Error::NoConvergence {
        iterations: MAX_ITERATIONS,
        residual,
        tolerance: GRADIENT_TOL,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_ion_is_trivial() {
        assert_eq!(potential(&[0.0, 0.0, 0.0], 10.0, 10.0).unwrap(), 0.0);
        let h = hessian(&[0.0, 0.0, 0.0], 3.0, 4.0).unwrap();
        assert_eq!(h[(0, 0)], 9.0);
        assert_eq!(h[(1, 1)], 16.0);
        assert_eq!(h[(2, 2)], 1.0);
        let chain = solve_equilibrium(&TrapConfig::yb171(1), None).unwrap();
        assert_eq!(chain.z, vec![0.0]);
    }

    #[test]
    fn two_ion_closed_forms() {
        let chain = solve_equilibrium(&TrapConfig::yb171(2), None).unwrap();
        let z0 = 2f64.powf(-2.0 / 3.0);
        assert_abs_diff_eq!(chain.z[0], -z0, epsilon = 1e-12);
        assert_abs_diff_eq!(chain.z[1], z0, epsilon = 1e-12);
        assert!(chain.residual_force_norm < GRADIENT_TOL);
        // V = d^2/4 + 1/d at d = 2^(1/3)
        assert_relative_eq!(
            chain.potential_value,
            3.0 * 2f64.powf(-4.0 / 3.0),
            max_relative = 1e-12
        );
        // longitudinal block eigenvalues {1, 3}
        let (_, _, azz) = hessian_blocks(&chain.z, 10.0, 10.0);
        let (eigs, _) = jacobi_eigh(&azz);
        assert_abs_diff_eq!(eigs[0], 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(eigs[1], 3.0, epsilon = 1e-10);
    }

    #[test]
    fn three_ion_closed_forms() {
        let chain = solve_equilibrium(&TrapConfig::yb171(3), None).unwrap();
        let z0 = (5.0f64 / 4.0).powf(1.0 / 3.0);
        assert_abs_diff_eq!(chain.z[0], -z0, epsilon = 1e-12);
        assert_abs_diff_eq!(chain.z[1], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(chain.z[2], z0, epsilon = 1e-12);
    }

    #[test]
    fn translation_shifts_potential_by_trap_algebra() {
        // For a z-translation by delta: dV = N delta^2/2 + delta * sum(z).
        let coords = [0.1, -0.2, 0.0, 0.05, 0.0, -0.12, -1.1, 0.3, 1.4];
        let v0 = potential(&coords, 7.0, 9.0).unwrap();
        let delta = 0.37;
        let mut shifted = coords;
        for zi in &mut shifted[6..] {
            *zi += delta;
        }
        let v1 = potential(&shifted, 7.0, 9.0).unwrap();
        let zsum: f64 = coords[6..].iter().sum();
        assert_relative_eq!(
            v1 - v0,
            3.0 * delta * delta / 2.0 + delta * zsum,
            max_relative = 1e-10
        );
    }

    #[test]
    fn gradient_and_hessian_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 4;
        let chain = solve_equilibrium(&TrapConfig::yb171(n), None).unwrap();
        // displace all coordinates, transverse included
        let mut coords = chain.coordinates();
        for c in coords.iter_mut() {
            *c += rng.gen_range(-0.05..0.05);
        }
        let (bx, by) = (10.0, 10.0);
        let g = gradient(&coords, bx, by).unwrap();
        let h = hessian(&coords, bx, by).unwrap();
        assert_eq!(h.asymmetry(), 0.0);

        let step = 1e-5;
        for k in 0..3 * n {
            let mut plus = coords.clone();
            let mut minus = coords.clone();
            plus[k] += step;
            minus[k] -= step;
            let fd_g = (potential(&plus, bx, by).unwrap() - potential(&minus, bx, by).unwrap())
                / (2.0 * step);
            assert_relative_eq!(g[k], fd_g, max_relative = 1e-6, epsilon = 1e-9);
            let gp = gradient(&plus, bx, by).unwrap();
            let gm = gradient(&minus, bx, by).unwrap();
            for l in 0..3 * n {
                let fd_h = (gp[l] - gm[l]) / (2.0 * step);
                assert_relative_eq!(h[(k, l)], fd_h, max_relative = 1e-6, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn hessian_blocks_agree_with_full_hessian() {
        let chain = solve_equilibrium(&TrapConfig::yb171(5), None).unwrap();
        let n = 5;
        let full = hessian(&chain.coordinates(), 10.0, 10.0).unwrap();
        let (axx, ayy, azz) = hessian_blocks(&chain.z, 10.0, 10.0);
        for i in 0..n {
            for j in 0..n {
                assert_abs_diff_eq!(axx[(i, j)], full[(i, j)], epsilon = 1e-14);
                assert_abs_diff_eq!(ayy[(i, j)], full[(n + i, n + j)], epsilon = 1e-14);
                assert_abs_diff_eq!(azz[(i, j)], full[(2 * n + i, 2 * n + j)], epsilon = 1e-14);
                // off-diagonal direction blocks vanish at the linear configuration
                assert_abs_diff_eq!(full[(i, n + j)], 0.0, epsilon = 1e-14);
                assert_abs_diff_eq!(full[(i, 2 * n + j)], 0.0, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn chains_converge_ordered_and_mirror_symmetric() {
        for n in 2..=24 {
            let chain = solve_equilibrium(&TrapConfig::yb171(n), None).unwrap();
            assert!(chain.residual_force_norm < GRADIENT_TOL, "N={n}");
            assert!(strictly_increasing(&chain.z), "N={n}");
            let zsum: f64 = chain.z.iter().sum();
            assert_abs_diff_eq!(zsum, 0.0, epsilon = 1e-9);
            for i in 0..n {
                assert_abs_diff_eq!(chain.z[i], -chain.z[n - 1 - i], epsilon = 1e-9);
            }
            // spacing grows from the center outward
            let spacings: Vec<f64> = chain.z.windows(2).map(|w| w[1] - w[0]).collect();
            let central = (n - 1) / 2;
            for k in central..spacings.len() - 1 {
                assert!(spacings[k + 1] >= spacings[k] - 1e-12, "N={n}, k={k}");
            }
            for k in (1..=central).rev() {
                assert!(spacings[k - 1] >= spacings[k] - 1e-12, "N={n}, k={k}");
            }
        }
    }

    #[test]
    fn guess_validation() {
        let config = TrapConfig::yb171(3);
        assert!(solve_equilibrium(&config, Some(&[0.0, 0.0, 1.0])).is_err());
        assert!(solve_equilibrium(&config, Some(&[0.0, 1.0])).is_err());
        let ok = solve_equilibrium(&config, Some(&[-2.0, 0.1, 2.0])).unwrap();
        assert_abs_diff_eq!(ok.z[1], 0.0, epsilon = 1e-10);
    }

    #[test]
    fn coincident_ions_are_rejected() {
        let coords = [0.0, 0.0, 0.0, 0.0, 0.5, 0.5];
        match potential(&coords, 10.0, 10.0) {
            Err(Error::CoincidentIons { i: 0, j: 1, .. }) => {}
            other => panic!("expected CoincidentIons, got {other:?}"),
        }
    }
}
