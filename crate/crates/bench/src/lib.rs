//! Fixed workloads shared by the benchmarks.

use villadsen_core::gen::{self, seeded_rng, SystemShape};
use villadsen_core::{
    AFTrace, AFVilladsenSystem, DimensionSystem, LevelTrace, Measure, Neighborhood, Observable, Rational, SeedAlgebra,
    TraceTower, ValueFn,
};

/// Random multi-summand system with `levels` explicit levels.
pub fn wide_system(levels: usize, seed: u64) -> DimensionSystem {
    let shape = SystemShape { levels, max_j: 4, max_n: 5, max_theta: 4 };
    gen::random_system_exact(&mut seeded_rng(seed), shape, levels)
}

/// Dense measure on words of length `len` with up to `atoms` atoms.
pub fn dense_measure(len: usize, atoms: usize, seed: u64) -> Measure {
    gen::random_dense_measure(&mut seeded_rng(seed), len, 3, atoms)
}

pub struct CertificateCase {
    pub system: DimensionSystem,
    pub seed: SeedAlgebra,
    pub tau: TraceTower,
    pub nbhd: Neighborhood,
    pub af: AFTrace,
}

/// Uniform trace on a doubling chain, tested against every indicator.
pub fn certificate_case(epsilon: Rational) -> CertificateCase {
    let system = gen::scalar_chain(&[2, 2, 2, 2, 2, 2, 2, 2, 2, 2, 2, 2, 2, 2, 2], &[], 2).base;
    let seed = SeedAlgebra::new(vec![1, 2]).expect("seed");
    let n2 = system.n_usize(2).expect("level 2")[0];
    let one = Rational::from_integer(1.into());
    let tau = TraceTower::new(vec![LevelTrace::new(2, vec![one.clone()], vec![seed.uniform(n2).expect("uniform")])])
        .expect("tower");
    let af = AFTrace::from_top(&system, 16, vec![one]).expect("af");
    let groups = (0..n2)
        .flat_map(|c| (0..seed.m()).map(move |x| (c, x)))
        .map(|(c, x)| vec![Observable::new(0, n2, ValueFn::indicator(c, x as u8)).expect("indicator")])
        .collect();
    CertificateCase { system, seed, tau, nbhd: Neighborhood { level: 2, epsilon, groups }, af }
}

/// Scalar chain whose evaluation counts stop after a few levels.
pub fn convergent_chain(depth: usize) -> AFVilladsenSystem {
    let thetas = vec![2; depth];
    let evals: Vec<i64> = (0..depth).map(|i| if i < 3 { 1 } else { 0 }).collect();
    gen::scalar_chain(&thetas, &evals, 3)
}

/// Multi-summand system with small evaluation counts.
pub fn af_system(depth: usize, seed: u64) -> AFVilladsenSystem {
    let shape = SystemShape { levels: depth, max_j: 2, max_n: 2, max_theta: 2 };
    gen::random_af_system(&mut seeded_rng(seed), shape, depth, 1)
}
