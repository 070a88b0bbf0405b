//! Partition data for the connecting-map seeds and the permutation
//! intertwiners relating two partitions of the same diagram.
//!
//! Coordinates (positions `s` in a tensor power) and enumeration indices
//! `t` are 0-based. `blocks[k][l][m][t]` is `p_{i;k,l}^{(m,t)}`.

use num_traits::ToPrimitive;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dimension_system::{compose, DimensionSystem, ValidationReport, Violation, ViolationKind};
use crate::error::{Error, Result};

/// Largest tensor power for which explicit coordinate layouts are built.
pub const MAX_LAYOUT_COORDS: usize = 1 << 24;

pub type Blocks = Vec<Vec<Vec<Vec<usize>>>>;

/// One level's partition `P_{i;k,l}^{(m)}` with fixed enumerations.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionScheme {
    pub level: usize,
    /// Positions are 1-based on the wire.
    #[serde(with = "one_based")]
    pub blocks: Blocks,
}

impl PartitionScheme {
    pub fn block(&self, k: usize, l: usize, m: usize) -> &[usize] {
        &self.blocks[k][l][m]
    }

    pub fn j_source(&self) -> usize {
        self.blocks.len()
    }

    pub fn j_target(&self) -> usize {
        self.blocks.first().map_or(0, Vec::len)
    }
}

/// Summand sizes at `level`, refused above [`MAX_LAYOUT_COORDS`].
pub fn layout_sizes(system: &DimensionSystem, level: usize) -> Result<Vec<usize>> {
    system.n(level)?.iter().map(|v| to_usize(v, &format!("dimension at level {level}"))).collect()
}

fn to_usize(v: &crate::exact::Int, what: &str) -> Result<usize> {
    v.to_usize()
        .filter(|&x| x <= MAX_LAYOUT_COORDS)
        .ok_or_else(|| Error::ResourceCap(format!("{what} = {v} exceeds the layout cap {MAX_LAYOUT_COORDS}")))
}

pub fn validate_partition(scheme: &PartitionScheme, system: &DimensionSystem, i: usize) -> Result<ValidationReport> {
    let mut report = ValidationReport::default();
    let theta = system.theta(i)?;
    let n_lo = layout_sizes(system, i)?;
    let n_hi = layout_sizes(system, i + 1)?;
    if scheme.level != i {
        report.push(Violation::new(ViolationKind::ShapeMismatch, i, None, None, format!("scheme is for level {}", scheme.level)));
    }
    if scheme.blocks.len() != n_lo.len() || scheme.blocks.iter().any(|row| row.len() != n_hi.len()) {
        report.push(Violation::new(ViolationKind::ShapeMismatch, i, None, None, "block table does not match summand counts"));
        return Ok(report);
    }
    for (l, &size) in n_hi.iter().enumerate() {
        let mut owner: Vec<Option<(usize, usize)>> = vec![None; size];
        for (k, &nk) in n_lo.iter().enumerate() {
            let blocks = &scheme.blocks[k][l];
            let expected = theta.get(k, l).to_usize().unwrap_or(usize::MAX);
            if blocks.len() != expected {
                report.push(Violation::new(
                    ViolationKind::BlockCount,
                    i,
                    Some(k),
                    Some(l),
                    format!("{} blocks, multiplicity is {}", blocks.len(), theta.get(k, l)),
                ));
            }
            for (m, block) in blocks.iter().enumerate() {
                if block.len() != nk {
                    report.push(Violation::new(
                        ViolationKind::Cardinality,
                        i,
                        Some(k),
                        Some(l),
                        format!("block {} has {} entries, expected {nk}", m + 1, block.len()),
                    ));
                }
                for &s in block {
                    if s >= size {
                        report.push(Violation::new(ViolationKind::OutOfRange, i, Some(k), Some(l), format!("position {} > {size}", s + 1)));
                        continue;
                    }
                    if let Some((k0, m0)) = owner[s] {
                        report.push(Violation::new(
                            ViolationKind::Disjointness,
                            i,
                            None,
                            Some(l),
                            format!("position {} in blocks ({},{}) and ({},{})", s + 1, k0 + 1, m0 + 1, k + 1, m + 1),
                        ));
                    } else {
                        owner[s] = Some((k, m));
                    }
                }
            }
        }
        let missing = owner.iter().filter(|o| o.is_none()).count();
        if missing > 0 {
            report.push(Violation::new(ViolationKind::Coverage, i, None, Some(l), format!("{missing} positions not covered")));
        }
    }
    Ok(report)
}

/// Consecutive runs: for each target summand, all blocks of source summand 1,
/// then summand 2, and so on; enumerations increase.
pub fn canonical_partition(system: &DimensionSystem, i: usize) -> Result<PartitionScheme> {
    let theta = system.theta(i)?;
    let n_lo = layout_sizes(system, i)?;
    let j_hi = theta.cols();
    layout_sizes(system, i + 1)?;
    let mut blocks: Blocks = vec![vec![Vec::new(); j_hi]; n_lo.len()];
    for l in 0..j_hi {
        let mut offset = 0usize;
        for (k, &nk) in n_lo.iter().enumerate() {
            let count = to_usize(theta.get(k, l), "multiplicity")?;
            for _ in 0..count {
                blocks[k][l].push((offset..offset + nk).collect());
                offset += nk;
            }
        }
    }
    Ok(PartitionScheme { level: i, blocks })
}

/// Block layout of the composite of the canonical single-step maps from
/// level `i` to level `i + t`. Equal to [`canonical_partition`] for `t = 1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockLayout {
    pub from_level: usize,
    pub span: usize,
    pub blocks: Blocks,
}

pub fn composed_layout(system: &DimensionSystem, i: usize, t: usize) -> Result<BlockLayout> {
    if t == 0 {
        return Err(Error::invalid("span t must be at least 1"));
    }
    let sys = system.materialize(i + t)?;
    let mut blocks = canonical_partition(&sys, i)?.blocks;
    for level in i + 1..i + t {
        let step = canonical_partition(&sys, level)?;
        let j_next = step.j_target();
        let mut next: Blocks = vec![vec![Vec::new(); j_next]; blocks.len()];
        for (k, per_mid) in blocks.iter().enumerate() {
            for l in 0..j_next {
                for (mid, inner_blocks) in per_mid.iter().enumerate() {
                    for outer in &step.blocks[mid][l] {
                        for inner in inner_blocks {
                            next[k][l].push(inner.iter().map(|&u| outer[u]).collect());
                        }
                    }
                }
            }
        }
        blocks = next;
    }
    debug_assert_eq!(
        blocks.iter().map(|r| r.iter().map(Vec::len).collect::<Vec<_>>()).collect::<Vec<_>>(),
        compose(&sys, i, t)?
            .to_rows()
            .iter()
            .map(|r| r.iter().map(|v| v.to_usize().unwrap_or(0)).collect::<Vec<_>>())
            .collect::<Vec<_>>()
    );
    Ok(BlockLayout { from_level: i, span: t, blocks })
}

/// A tensor factor symbol: the unit or a generator `c_t^{(k)}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Symbol {
    Unit,
    Gen { summand: usize, index: usize },
}

/// An elementary tensor in summand `summand`, one symbol per factor.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ElementaryTensorLabel {
    pub summand: usize,
    pub word: Vec<Symbol>,
}

impl ElementaryTensorLabel {
    pub fn unit(summand: usize, len: usize) -> Self {
        ElementaryTensorLabel { summand, word: vec![Symbol::Unit; len] }
    }

    /// `c_1^{(k)} ⊗ ... ⊗ c_n^{(k)}` with every factor a distinct generator.
    pub fn generators(summand: usize, len: usize) -> Self {
        ElementaryTensorLabel { summand, word: (0..len).map(|index| Symbol::Gen { summand, index }).collect() }
    }

    pub fn generator_count(&self) -> usize {
        self.word.iter().filter(|s| matches!(s, Symbol::Gen { .. })).count()
    }
}

fn check_inputs(system: &DimensionSystem, i: usize, inputs: &[ElementaryTensorLabel]) -> Result<Vec<usize>> {
    let n_lo = layout_sizes(system, i)?;
    if inputs.len() != n_lo.len() {
        return Err(Error::shape(format!("{} input labels for {} summands", inputs.len(), n_lo.len())));
    }
    for (k, (label, &nk)) in inputs.iter().zip(&n_lo).enumerate() {
        if label.summand != k || label.word.len() != nk {
            return Err(Error::shape(format!(
                "input {k} has summand {} and length {}, expected summand {k} and length {nk}",
                label.summand,
                label.word.len()
            )));
        }
    }
    Ok(n_lo)
}

/// Image of one elementary tensor per source summand under the seed of the
/// connecting map: for each target summand, the diagonal blocks in order
/// `(k, m)`.
pub fn seed_image(
    scheme: &PartitionScheme,
    system: &DimensionSystem,
    i: usize,
    inputs: &[ElementaryTensorLabel],
) -> Result<Vec<Vec<ElementaryTensorLabel>>> {
    check_inputs(system, i, inputs)?;
    let n_hi = layout_sizes(system, i + 1)?;
    if scheme.blocks.len() != inputs.len() || scheme.j_target() != n_hi.len() {
        return Err(Error::shape("partition scheme does not match the system level"));
    }
    let mut out = Vec::with_capacity(n_hi.len());
    for (l, &size) in n_hi.iter().enumerate() {
        let mut diag = Vec::new();
        for (k, input) in inputs.iter().enumerate() {
            for block in &scheme.blocks[k][l] {
                let mut word = vec![Symbol::Unit; size];
                for (t, &s) in block.iter().enumerate() {
                    let slot = word.get_mut(s).ok_or_else(|| Error::shape(format!("position {s} outside summand {l}")))?;
                    *slot = input.word[t];
                }
                diag.push(ElementaryTensorLabel { summand: l, word });
            }
        }
        out.push(diag);
    }
    Ok(out)
}

/// One permutation per summand, acting on tensor factors by
/// `⊗_t x_t ↦ ⊗_t x_{π(t)}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelPermutationFamily {
    #[serde(with = "one_based")]
    pub perms: Vec<Vec<usize>>,
}

impl LevelPermutationFamily {
    pub fn identity(sizes: &[usize]) -> Self {
        LevelPermutationFamily { perms: sizes.iter().map(|&n| (0..n).collect()).collect() }
    }

    pub fn random<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Self {
        let perms = sizes
            .iter()
            .map(|&n| {
                let mut p: Vec<usize> = (0..n).collect();
                p.shuffle(rng);
                p
            })
            .collect();
        LevelPermutationFamily { perms }
    }

    pub fn is_bijective(&self) -> bool {
        self.perms.iter().all(|p| {
            let mut seen = vec![false; p.len()];
            p.iter().all(|&x| x < p.len() && !std::mem::replace(&mut seen[x], true))
        })
    }

    pub fn apply(&self, label: &ElementaryTensorLabel) -> Result<ElementaryTensorLabel> {
        let perm = self
            .perms
            .get(label.summand)
            .filter(|p| p.len() == label.word.len())
            .ok_or_else(|| Error::shape(format!("no permutation of length {} for summand {}", label.word.len(), label.summand)))?;
        Ok(ElementaryTensorLabel { summand: label.summand, word: perm.iter().map(|&t| label.word[t]).collect() })
    }
}

/// `γ_l(q^{(m,t)}) = p^{(m, σ_k(t))}` for every block of `Q`.
pub fn intertwiner(
    scheme_p: &PartitionScheme,
    scheme_q: &PartitionScheme,
    sigma: &LevelPermutationFamily,
) -> Result<LevelPermutationFamily> {
    if scheme_p.blocks.len() != scheme_q.blocks.len() || scheme_p.j_target() != scheme_q.j_target() {
        return Err(Error::shape("schemes have different summand counts"));
    }
    if sigma.perms.len() != scheme_p.blocks.len() || !sigma.is_bijective() {
        return Err(Error::shape("sigma must be one bijection per source summand"));
    }
    let j_hi = scheme_p.j_target();
    let mut perms = Vec::with_capacity(j_hi);
    for l in 0..j_hi {
        let size: usize = scheme_q.blocks.iter().map(|row| row[l].iter().map(Vec::len).sum::<usize>()).sum();
        let mut gamma: Vec<Option<usize>> = vec![None; size];
        for (k, sigma_k) in sigma.perms.iter().enumerate() {
            let (pb, qb) = (&scheme_p.blocks[k][l], &scheme_q.blocks[k][l]);
            if pb.len() != qb.len() {
                return Err(Error::shape(format!("block counts differ at ({},{})", k + 1, l + 1)));
            }
            for (p_block, q_block) in pb.iter().zip(qb) {
                if p_block.len() != sigma_k.len() || q_block.len() != sigma_k.len() {
                    return Err(Error::shape(format!("block sizes differ at ({},{})", k + 1, l + 1)));
                }
                for (t, &q_pos) in q_block.iter().enumerate() {
                    let slot = gamma.get_mut(q_pos).ok_or_else(|| Error::shape("Q position out of range"))?;
                    *slot = Some(p_block[sigma_k[t]]);
                }
            }
        }
        let gamma: Vec<usize> = gamma
            .into_iter()
            .collect::<Option<_>>()
            .ok_or_else(|| Error::shape(format!("Q blocks do not cover target summand {}", l + 1)))?;
        perms.push(gamma);
    }
    let family = LevelPermutationFamily { perms };
    if !family.is_bijective() {
        return Err(Error::shape("P blocks do not partition the target positions"));
    }
    Ok(family)
}

/// Checks `γ ∘ φ_P = φ_Q ∘ σ` symbolically on every sample.
pub fn verify_commutation(
    scheme_p: &PartitionScheme,
    scheme_q: &PartitionScheme,
    sigma: &LevelPermutationFamily,
    gamma: &LevelPermutationFamily,
    system: &DimensionSystem,
    i: usize,
    samples: &[Vec<ElementaryTensorLabel>],
) -> Result<bool> {
    for sample in samples {
        let top = seed_image(scheme_p, system, i, sample)?;
        let permuted: Vec<_> = sample.iter().map(|x| sigma.apply(x)).collect::<Result<_>>()?;
        let bottom = seed_image(scheme_q, system, i, &permuted)?;
        for (top_l, bottom_l) in top.iter().zip(&bottom) {
            for (a, b) in top_l.iter().zip(bottom_l) {
                if gamma.apply(a)? != *b {
                    return Ok(false);
                }
            }
        }
    }
    Ok(true)
}

/// Every input with exactly one generator symbol `c_t^{(k)}` (at factor `t`).
pub fn single_generator_samples(system: &DimensionSystem, i: usize) -> Result<Vec<Vec<ElementaryTensorLabel>>> {
    let n_lo = layout_sizes(system, i)?;
    let units: Vec<_> = n_lo.iter().enumerate().map(|(k, &n)| ElementaryTensorLabel::unit(k, n)).collect();
    let mut samples = Vec::new();
    for (k, &nk) in n_lo.iter().enumerate() {
        for t in 0..nk {
            let mut sample = units.clone();
            sample[k].word[t] = Symbol::Gen { summand: k, index: t };
            samples.push(sample);
        }
    }
    Ok(samples)
}

pub fn unit_sample(system: &DimensionSystem, i: usize) -> Result<Vec<ElementaryTensorLabel>> {
    Ok(layout_sizes(system, i)?.iter().enumerate().map(|(k, &n)| ElementaryTensorLabel::unit(k, n)).collect())
}

/// A uniformly relabelled canonical partition: each target summand's
/// positions are shuffled by a random bijection.
pub fn random_partition<R: Rng + ?Sized>(system: &DimensionSystem, i: usize, rng: &mut R) -> Result<PartitionScheme> {
    let mut scheme = canonical_partition(system, i)?;
    for (l, size) in layout_sizes(system, i + 1)?.into_iter().enumerate() {
        let mut relabel: Vec<usize> = (0..size).collect();
        relabel.shuffle(rng);
        for row in scheme.blocks.iter_mut() {
            for block in row[l].iter_mut() {
                for s in block.iter_mut() {
                    *s = relabel[*s];
                }
            }
        }
    }
    Ok(scheme)
}

mod one_based {
    use serde::de::DeserializeOwned;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub trait Shift: Sized {
        type Wire: Serialize + DeserializeOwned;
        fn up(&self) -> Self::Wire;
        fn down(wire: Self::Wire) -> Option<Self>;
    }

    impl Shift for usize {
        type Wire = u64;
        fn up(&self) -> u64 {
            (*self as u64).saturating_add(1)
        }
        fn down(wire: u64) -> Option<usize> {
            wire.checked_sub(1).and_then(|v| usize::try_from(v).ok())
        }
    }

    impl<T: Shift> Shift for Vec<T> {
        type Wire = Vec<T::Wire>;
        fn up(&self) -> Self::Wire {
            self.iter().map(Shift::up).collect()
        }
        fn down(wire: Self::Wire) -> Option<Self> {
            wire.into_iter().map(T::down).collect()
        }
    }

    pub fn serialize<T: Shift, S: Serializer>(v: &T, s: S) -> Result<S::Ok, S::Error> {
        v.up().serialize(s)
    }

    pub fn deserialize<'de, T: Shift, D: Deserializer<'de>>(d: D) -> Result<T, D::Error> {
        T::down(T::Wire::deserialize(d)?).ok_or_else(|| serde::de::Error::custom("positions are 1-based"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::int;
    use crate::matrix::Matrix;

    fn chain(n1: i64, thetas: &[i64]) -> DimensionSystem {
        DimensionSystem::from_multiplicities(
            vec![int(n1)],
            thetas.iter().map(|&t| Matrix::from_rows(vec![vec![int(t)]]).unwrap()).collect(),
        )
        .unwrap()
    }

    fn two_summand() -> DimensionSystem {
        let theta = Matrix::from_rows(vec![vec![int(1), int(2)], vec![int(1), int(1)]]).unwrap();
        DimensionSystem::from_multiplicities(vec![int(1), int(2)], vec![theta]).unwrap()
    }

    #[test]
    fn wire_positions_are_one_based() {
        let scheme = PartitionScheme { level: 1, blocks: vec![vec![vec![vec![1, 0]]]] };
        let text = serde_json::to_string(&scheme).unwrap();
        assert_eq!(text, r#"{"level":1,"blocks":[[[[2,1]]]]}"#);
        assert_eq!(serde_json::from_str::<PartitionScheme>(&text).unwrap(), scheme);
        assert!(serde_json::from_str::<PartitionScheme>(r#"{"level":1,"blocks":[[[[0]]]]}"#).is_err());
    }

    #[test]
    fn canonical_single_chain() {
        let sys = chain(2, &[2]);
        let p = canonical_partition(&sys, 1).unwrap();
        assert_eq!(p.blocks, vec![vec![vec![vec![0, 1], vec![2, 3]]]]);
        assert!(validate_partition(&p, &sys, 1).unwrap().is_valid());
    }

    #[test]
    fn canonical_two_summands_single_blocks() {
        let theta = Matrix::from_rows(vec![vec![int(1)], vec![int(1)]]).unwrap();
        let sys = DimensionSystem::from_multiplicities(vec![int(1), int(1)], vec![theta]).unwrap();
        let p = canonical_partition(&sys, 1).unwrap();
        assert_eq!(p.blocks, vec![vec![vec![vec![0]]], vec![vec![vec![1]]]]);
    }

    #[test]
    fn shared_index_breaks_disjointness() {
        let sys = chain(2, &[2]);
        let mut p = canonical_partition(&sys, 1).unwrap();
        p.blocks[0][0][1] = vec![1, 2];
        let report = validate_partition(&p, &sys, 1).unwrap();
        assert!(report.has(ViolationKind::Disjointness));
        assert!(report.has(ViolationKind::Coverage));
    }

    #[test]
    fn short_block_breaks_cardinality() {
        let sys = chain(2, &[2]);
        let mut p = canonical_partition(&sys, 1).unwrap();
        p.blocks[0][0][1].pop();
        assert!(validate_partition(&p, &sys, 1).unwrap().has(ViolationKind::Cardinality));
    }

    #[test]
    fn intro_seed_doubles_generator() {
        let sys = chain(1, &[2]);
        let p = canonical_partition(&sys, 1).unwrap();
        let out = seed_image(&p, &sys, 1, &[ElementaryTensorLabel::generators(0, 1)]).unwrap();
        let c = Symbol::Gen { summand: 0, index: 0 };
        assert_eq!(out[0][0].word, vec![c, Symbol::Unit]);
        assert_eq!(out[0][1].word, vec![Symbol::Unit, c]);
    }

    #[test]
    fn units_map_to_units() {
        let sys = two_summand();
        let p = canonical_partition(&sys, 1).unwrap();
        let out = seed_image(&p, &sys, 1, &unit_sample(&sys, 1).unwrap()).unwrap();
        assert!(out.iter().flatten().all(|lbl| lbl.generator_count() == 0));
    }

    #[test]
    fn canonical_layout_for_two_summands() {
        // n = (1, 2), theta = [[1, 2], [1, 1]]: n' = (3, 4)
        let sys = two_summand();
        let p = canonical_partition(&sys, 1).unwrap();
        let inputs = [ElementaryTensorLabel::generators(0, 1), ElementaryTensorLabel::generators(1, 2)];
        let out = seed_image(&p, &sys, 1, &inputs).unwrap();
        let a = Symbol::Gen { summand: 0, index: 0 };
        let b0 = Symbol::Gen { summand: 1, index: 0 };
        let b1 = Symbol::Gen { summand: 1, index: 1 };
        let u = Symbol::Unit;
        let words: Vec<Vec<Vec<Symbol>>> = out.iter().map(|d| d.iter().map(|x| x.word.clone()).collect()).collect();
        assert_eq!(words[0], vec![vec![a, u, u], vec![u, b0, b1]]);
        assert_eq!(words[1], [vec![a, u, u, u, u], vec![u, a, u, u, u], vec![u, u, b0, b1, u]].iter().map(|w| w[..4].to_vec()).collect::<Vec<_>>());
    }

    #[test]
    fn malformed_input_rejected() {
        let sys = chain(2, &[2]);
        let p = canonical_partition(&sys, 1).unwrap();
        assert!(seed_image(&p, &sys, 1, &[ElementaryTensorLabel::generators(0, 3)]).is_err());
    }

    #[test]
    fn identity_intertwiner_for_equal_schemes() {
        let sys = two_summand();
        let p = canonical_partition(&sys, 1).unwrap();
        let sigma = LevelPermutationFamily::identity(&sys.n_usize(1).unwrap());
        let gamma = intertwiner(&p, &p, &sigma).unwrap();
        assert_eq!(gamma, LevelPermutationFamily::identity(&sys.n_usize(2).unwrap()));
    }

    #[test]
    fn swapped_blocks_give_transposition() {
        let sys = chain(1, &[2]);
        let p = canonical_partition(&sys, 1).unwrap();
        let q = PartitionScheme { level: 1, blocks: vec![vec![vec![vec![1], vec![0]]]] };
        let sigma = LevelPermutationFamily::identity(&[1]);
        let gamma = intertwiner(&p, &q, &sigma).unwrap();
        assert_eq!(gamma.perms, vec![vec![1, 0]]);
        let samples = single_generator_samples(&sys, 1).unwrap();
        assert!(verify_commutation(&p, &q, &sigma, &gamma, &sys, 1, &samples).unwrap());
        let id = LevelPermutationFamily::identity(&[2]);
        assert!(!verify_commutation(&p, &q, &sigma, &id, &sys, 1, &samples).unwrap());
        // unit-only samples cannot tell them apart
        let units = vec![unit_sample(&sys, 1).unwrap()];
        assert!(verify_commutation(&p, &q, &sigma, &id, &sys, 1, &units).unwrap());
    }

    #[test]
    fn mismatched_block_counts_rejected() {
        let sys = chain(1, &[2]);
        let p = canonical_partition(&sys, 1).unwrap();
        let q = PartitionScheme { level: 1, blocks: vec![vec![vec![vec![1]]]] };
        assert!(intertwiner(&p, &q, &LevelPermutationFamily::identity(&[1])).is_err());
    }

    #[test]
    fn composed_layout_counts_match_composed_multiplicities() {
        let sys = two_summand();
        let theta2 = Matrix::from_rows(vec![vec![int(2), int(1)], vec![int(1), int(1)]]).unwrap();
        let sys = DimensionSystem::from_multiplicities(sys.n(1).unwrap(), vec![sys.theta(1).unwrap(), theta2]).unwrap();
        let layout = composed_layout(&sys, 1, 2).unwrap();
        let theta = compose(&sys, 1, 2).unwrap();
        for (k, l, v) in theta.entries() {
            assert_eq!(layout.blocks[k][l].len(), v.to_usize().unwrap());
        }
        // every target summand is covered exactly once
        for (l, size) in sys.n_usize(3).unwrap().into_iter().enumerate() {
            let mut all: Vec<usize> = layout.blocks.iter().flat_map(|r| r[l].iter().flatten().copied()).collect();
            all.sort_unstable();
            assert_eq!(all, (0..size).collect::<Vec<_>>());
        }
    }
}
