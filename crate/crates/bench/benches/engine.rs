//! End-to-end benchmarks of the engine stages at reference scale (N = 24)
//! plus the brute-force oracle at its natural small scale.

use criterion::{criterion_group, criterion_main, Criterion};
use ionchain::perturbation::oracle::delta_e_oracle;
use ionchain::{
    derive_scales, j_matrix, mode_tensors, mode_tensors_full, modes_from_chain, position_tensors,
    solve_equilibrium, Anchor, Cooling, DriveSpec, ScaleSet, ShiftContext, ShiftFormula,
    TrapConfig,
};

fn bench_engine(c: &mut Criterion) {
    let config = TrapConfig::yb171(24);
    let scales = derive_scales(&config).unwrap();
    let chain = solve_equilibrium(&config, None).unwrap();
    let modes = modes_from_chain(&chain, &config);
    let pos = position_tensors(&chain);
    let tensors = mode_tensors(&pos, &modes, &scales).unwrap();
    let ctx = ShiftContext::new(&tensors, &modes, &scales, ShiftFormula::Consistent).unwrap();
    let occupations = ctx.occupations_at_t(1.0, Cooling::DopplerAll).unwrap();

    c.bench_function("equilibrium_n24", |b| {
        b.iter(|| solve_equilibrium(&config, None).unwrap())
    });
    c.bench_function("modes_n24", |b| {
        b.iter(|| modes_from_chain(&chain, &config))
    });
    c.bench_function("mode_tensors_n24", |b| {
        b.iter(|| mode_tensors(&pos, &modes, &scales).unwrap())
    });
    c.bench_function("delta_e_n24", |b| b.iter(|| ctx.delta_e(&occupations)));
    c.bench_function("shift_report_n24", |b| {
        b.iter(|| ctx.shift_report(1.0, Cooling::DopplerAll).unwrap())
    });
    c.bench_function("jmatrix_n24", |b| {
        b.iter(|| j_matrix(&modes, &DriveSpec::new(Anchor::Cm, 1e-1), None).unwrap())
    });

    let config2 = TrapConfig::yb171(2);
    let chain2 = solve_equilibrium(&config2, None).unwrap();
    let modes2 = modes_from_chain(&chain2, &config2);
    let pos2 = position_tensors(&chain2);
    let tensors2 = mode_tensors_full(&pos2, &modes2, &ScaleSet::synthetic(1.0)).unwrap();
    let filling = vec![1u32; 6];
    c.bench_function("oracle_n2", |b| {
        b.iter(|| delta_e_oracle(&filling, &tensors2).unwrap())
    });
}

criterion_group!(benches, bench_engine);
criterion_main!(benches);
