//! Seeded random instances for tests and benchmarks.

use num_traits::Zero;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::af_intertwining::AFVilladsenSystem;
use crate::dimension_system::{DimensionSystem, IntMatrix};
use crate::exact::{int, Int, Rational};
use crate::matrix::Matrix;
use crate::trace_tower::{AFTrace, Letter, Measure, ValueFn, Word};

/// The generator behind every seeded run.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone, Copy)]
pub struct SystemShape {
    pub levels: usize,
    pub max_j: usize,
    pub max_n: i64,
    pub max_theta: i64,
}

impl Default for SystemShape {
    fn default() -> Self {
        SystemShape { levels: 5, max_j: 3, max_n: 4, max_theta: 3 }
    }
}

/// Nonnegative matrix with entries `≤ max` and no zero row or column.
pub fn random_multiplicities<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize, max: i64) -> IntMatrix {
    let mut m: Vec<Vec<i64>> = (0..rows).map(|_| (0..cols).map(|_| rng.random_range(0..=max)).collect()).collect();
    for k in 0..rows {
        if m[k].iter().all(|&v| v == 0) {
            let l = rng.random_range(0..cols);
            m[k][l] = rng.random_range(1..=max.max(1));
        }
    }
    for l in 0..cols {
        if m.iter().all(|row| row[l] == 0) {
            let k = rng.random_range(0..rows);
            m[k][l] = rng.random_range(1..=max.max(1));
        }
    }
    Matrix::from_fn(rows, cols, |k, l| int(m[k][l]))
}

/// A valid system with between 2 and `shape.levels` levels.
pub fn random_system<R: Rng + ?Sized>(rng: &mut R, shape: SystemShape) -> DimensionSystem {
    let levels = rng.random_range(2..=shape.levels.max(2));
    random_system_exact(rng, shape, levels)
}

pub fn random_system_exact<R: Rng + ?Sized>(rng: &mut R, shape: SystemShape, levels: usize) -> DimensionSystem {
    let js: Vec<usize> = (0..levels).map(|_| rng.random_range(1..=shape.max_j)).collect();
    let n1: Vec<Int> = (0..js[0]).map(|_| int(rng.random_range(1..=shape.max_n))).collect();
    let thetas = js.windows(2).map(|w| random_multiplicities(rng, w[0], w[1], shape.max_theta)).collect();
    DimensionSystem::from_multiplicities(n1, thetas).expect("generated data is valid")
}

/// Probability vector with denominators dividing `den`.
pub fn random_probability_vector<R: Rng + ?Sized>(rng: &mut R, len: usize, den: u32) -> Vec<Rational> {
    let mut weights: Vec<u32> = (0..len).map(|_| rng.random_range(0..=den)).collect();
    if weights.iter().all(|&w| w == 0) {
        weights[rng.random_range(0..len)] = 1;
    }
    let total: u32 = weights.iter().sum();
    weights.into_iter().map(|w| Rational::new(w.into(), total.into())).collect()
}

pub fn random_word<R: Rng + ?Sized>(rng: &mut R, len: usize, alphabet: usize) -> Word {
    (0..len).map(|_| rng.random_range(0..alphabet) as Letter).collect()
}

/// Dense measure with at most `max_atoms` distinct atoms.
pub fn random_dense_measure<R: Rng + ?Sized>(rng: &mut R, len: usize, alphabet: usize, max_atoms: usize) -> Measure {
    let count = rng.random_range(1..=max_atoms);
    let mut words: Vec<Word> = (0..count).map(|_| random_word(rng, len, alphabet)).collect();
    words.sort();
    words.dedup();
    let masses = random_probability_vector(rng, words.len(), 64);
    let atoms: Vec<(Word, Rational)> = words.into_iter().zip(masses).filter(|(_, m)| !m.is_zero()).collect();
    Measure::dense(len, atoms).expect("generated measure is normalized")
}

/// Dirac, dense or product measure on words of length `len`.
pub fn random_measure<R: Rng + ?Sized>(rng: &mut R, len: usize, alphabet: usize) -> Measure {
    match rng.random_range(0..3) {
        0 => Measure::dirac(random_word(rng, len, alphabet)),
        1 if len <= 6 => random_dense_measure(rng, len, alphabet, 8),
        _ => {
            let mut factors = Vec::new();
            let mut left = len;
            while left > 0 {
                let chunk = rng.random_range(1..=left.min(3));
                factors.push(random_dense_measure(rng, chunk, alphabet, 4));
                left -= chunk;
            }
            Measure::product(factors)
        }
    }
}

/// AF tuples for levels `1..=level`, pulled back from a random top tuple.
pub fn random_af_trace<R: Rng + ?Sized>(rng: &mut R, system: &DimensionSystem, level: usize) -> AFTrace {
    let j = system.j(level).expect("level exists");
    let alpha = random_probability_vector(rng, j, 12);
    AFTrace::from_top(system, level, alpha).expect("pullback of a probability vector")
}

/// Value function on words of length `len` with `sup_bound ≤ 1`.
pub fn random_value_fn<R: Rng + ?Sized>(rng: &mut R, len: usize, alphabet: usize) -> ValueFn {
    let unit = |rng: &mut R| Rational::new(rng.random_range(-8..=8).into(), 8.into());
    match rng.random_range(0..3) {
        0 => ValueFn::indicator(rng.random_range(0..len), rng.random_range(0..alphabet) as Letter),
        1 => {
            let entries: Vec<(Word, Rational)> = (0..rng.random_range(1..=6))
                .map(|_| (random_word(rng, len, alphabet), unit(rng)))
                .collect();
            // repeated words add up; rescale keeps the bound at 1
            let table = ValueFn::table(entries);
            let b = table.sup_bound();
            if b > Rational::from_integer(1.into()) {
                ValueFn::Sum { terms: vec![crate::trace_tower::Term { coef: b.recip(), value: table }] }
            } else {
                table
            }
        }
        _ => {
            let mut coords: Vec<usize> = (0..len).collect();
            coords.shuffle(rng);
            coords.truncate(rng.random_range(1..=len.min(3)));
            let inner_len = coords.len();
            ValueFn::Lifted { coords, inner: Box::new(random_value_fn(rng, inner_len, alphabet)) }
        }
    }
}

/// A system with evaluation counts `≤ max_eval`, on top of a random base of `depth` levels.
pub fn random_af_system<R: Rng + ?Sized>(rng: &mut R, shape: SystemShape, depth: usize, max_eval: i64) -> AFVilladsenSystem {
    let base = random_system_exact(rng, shape, depth);
    let evals = (1..depth)
        .map(|i| {
            let theta = base.theta(i).expect("explicit level");
            Matrix::from_fn(theta.rows(), theta.cols(), |_, _| int(rng.random_range(0..=max_eval)))
        })
        .collect();
    AFVilladsenSystem::new(base, evals, 2, None).expect("generated data is valid")
}

/// `j = 1` chain with the given multiplicities and evaluation counts.
pub fn scalar_chain(thetas: &[i64], evals: &[i64], x_size: usize) -> AFVilladsenSystem {
    let scalar = |v: i64| Matrix::from_rows(vec![vec![int(v)]]).expect("1x1");
    let base = DimensionSystem::from_multiplicities(vec![int(1)], thetas.iter().map(|&t| scalar(t)).collect())
        .expect("positive multiplicities");
    AFVilladsenSystem::new(base, evals.iter().map(|&e| scalar(e)).collect(), x_size, None).expect("valid chain")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dimension_system::validate;

    #[test]
    fn generated_systems_validate() {
        let mut rng = seeded_rng(7);
        for _ in 0..50 {
            assert!(validate(&random_system(&mut rng, SystemShape::default())).is_valid());
        }
    }

    #[test]
    fn generated_value_fns_are_bounded() {
        let mut rng = seeded_rng(8);
        for _ in 0..50 {
            let f = random_value_fn(&mut rng, 4, 3);
            assert!(f.sup_bound() <= Rational::from_integer(1.into()));
            f.check_len(4).unwrap();
        }
    }
}
