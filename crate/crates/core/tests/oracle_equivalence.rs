//! Cross-validates the closed-form energy correction against the
//! brute-force ladder-operator oracle on small chains, and pins down which
//! of the two formula variants the oracle endorses.

use ionchain::perturbation::oracle::delta_e_oracle;
use ionchain::{
    mode_tensors_full, modes_from_chain, position_tensors, solve_equilibrium, ScaleSet,
    ShiftContext, ShiftFormula, TrapConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn setup(n: usize, eta: f64) -> (ionchain::ModeTensors, ionchain::NormalModes, ScaleSet) {
    let config = TrapConfig::yb171(n);
    let chain = solve_equilibrium(&config, None).unwrap();
    let modes = modes_from_chain(&chain, &config);
    let pos = position_tensors(&chain);
    let scales = ScaleSet::synthetic(eta);
    let tensors = mode_tensors_full(&pos, &modes, &scales).unwrap();
    (tensors, modes, scales)
}

fn occupation_vectors(m: usize, count: usize, seed: u64) -> Vec<Vec<u32>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![vec![0; m]];
    // every single-phonon state, then random fillings
    for a in 0..m {
        let mut v = vec![0; m];
        v[a] = 1;
        out.push(v);
    }
    while out.len() < count {
        out.push((0..m).map(|_| rng.gen_range(0..=3)).collect());
    }
    out
}

#[test]
fn consistent_form_reproduces_oracle_to_machine_precision() {
    for (n_ions, tol) in [(2usize, 1e-11), (3usize, 1e-9)] {
        let (tensors, modes, scales) = setup(n_ions, 1.0);
        let ctx = ShiftContext::new(&tensors, &modes, &scales, ShiftFormula::Consistent).unwrap();
        let mut worst = 0.0f64;
        for n in occupation_vectors(3 * n_ions, 20, 42) {
            let oracle = delta_e_oracle(&n, &tensors).unwrap();
            let nf: Vec<f64> = n.iter().map(|&k| k as f64).collect();
            let closed = ctx.delta_e(&nf);
            let rel = ((closed - oracle) / oracle).abs();
            worst = worst.max(rel);
            assert!(
                rel < tol,
                "n_ions={n_ions} n={n:?}: closed {closed:.15e} vs oracle {oracle:.15e} (rel {rel:.2e})"
            );
        }
        println!("n_ions={n_ions}: worst closed-vs-oracle relative deviation {worst:.2e}");
    }
}

#[test]
fn tabulated_variant_is_rejected_by_the_oracle() {
    let (tensors, modes, scales) = setup(2, 1.0);
    let ctx = ShiftContext::new(&tensors, &modes, &scales, ShiftFormula::Tabulated).unwrap();
    let mut worst = 0.0f64;
    for n in occupation_vectors(6, 20, 42) {
        let oracle = delta_e_oracle(&n, &tensors).unwrap();
        let nf: Vec<f64> = n.iter().map(|&k| k as f64).collect();
        let rel = ((ctx.delta_e(&nf) - oracle) / oracle).abs();
        worst = worst.max(rel);
    }
    assert!(
        worst > 1e-4,
        "tabulated variant unexpectedly matches the oracle (worst rel {worst:.2e})"
    );
}

#[test]
fn equivalence_holds_at_physical_quantumness() {
    let config = TrapConfig::yb171(2);
    let chain = solve_equilibrium(&config, None).unwrap();
    let modes = modes_from_chain(&chain, &config);
    let pos = position_tensors(&chain);
    let scales = ionchain::derive_scales(&config).unwrap();
    let tensors = mode_tensors_full(&pos, &modes, &scales).unwrap();
    let ctx = ShiftContext::new(&tensors, &modes, &scales, ShiftFormula::Consistent).unwrap();
    for n in occupation_vectors(6, 10, 7) {
        let oracle = delta_e_oracle(&n, &tensors).unwrap();
        let nf: Vec<f64> = n.iter().map(|&k| k as f64).collect();
        let closed = ctx.delta_e(&nf);
        let rel = ((closed - oracle) / oracle).abs();
        assert!(rel < 1e-9, "n={n:?}: rel {rel:.2e}");
    }
}
