//! Traces on the finite stages `B_i`, their pullbacks along connecting maps,
//! and extensions of traces from the canonical AF subalgebra.
//!
//! A trace at level `i` is a tuple `lambda` of summand weights together with
//! one probability measure per summand. All pullbacks use the canonical
//! partitions; any other partition gives an isomorphic system.

pub mod measure;
pub mod observable;

use num_traits::Zero;
use serde::{Deserialize, Serialize};

pub use measure::{DenseMeasure, Letter, Measure, Word, DENSE_ATOM_CAP};
pub use observable::{Observable, TableEntry, Term, ValueFn};

use crate::dimension_system::{trace_pullback_matrix, DimensionSystem};
use crate::error::{Error, Result};
use crate::exact::{self, is_probability_vector, Rational};
use crate::partition_scheme::composed_layout;

/// A finite-dimensional multi-matrix seed `M_{d_1} ⊕ … ⊕ M_{d_m}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedAlgebra {
    pub block_dims: Vec<u32>,
}

impl SeedAlgebra {
    pub fn new(block_dims: Vec<u32>) -> Result<Self> {
        if block_dims.is_empty() || block_dims.contains(&0) {
            return Err(Error::invalid("seed algebra needs at least one positive block dimension"));
        }
        if block_dims.len() > Letter::MAX as usize + 1 {
            return Err(Error::ResourceCap(format!("{} seed summands", block_dims.len())));
        }
        Ok(SeedAlgebra { block_dims })
    }

    /// Number of extreme traces.
    pub fn m(&self) -> usize {
        self.block_dims.len()
    }

    pub fn is_noncommutative(&self) -> bool {
        self.block_dims.iter().any(|&d| d >= 2)
    }

    pub fn has_multiple_traces(&self) -> bool {
        self.m() >= 2
    }

    pub fn uniform(&self, len: usize) -> Result<Measure> {
        Measure::uniform(len, self.m())
    }
}

/// `τ_i = Σ_k λ_k τ_k`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelTrace {
    pub level: usize,
    #[serde(with = "exact::vec")]
    pub lambda: Vec<Rational>,
    pub measures: Vec<Measure>,
    /// Summands whose measure was chosen because `λ_k = 0` left it free.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flagged: Vec<usize>,
}

impl LevelTrace {
    pub fn new(level: usize, lambda: Vec<Rational>, measures: Vec<Measure>) -> Self {
        LevelTrace { level, lambda, measures, flagged: Vec::new() }
    }

    pub fn check(&self, system: &DimensionSystem, seed: &SeedAlgebra) -> Result<()> {
        let n = system.n_usize(self.level)?;
        if self.lambda.len() != n.len() || self.measures.len() != n.len() {
            return Err(Error::shape(format!(
                "level {} has {} summands, trace gives {} weights and {} measures",
                self.level,
                n.len(),
                self.lambda.len(),
                self.measures.len()
            )));
        }
        if !is_probability_vector(&self.lambda) {
            return Err(Error::invalid(format!("weights at level {} are not a probability vector", self.level)));
        }
        for (k, (m, &len)) in self.measures.iter().zip(&n).enumerate() {
            if m.len() != len {
                return Err(Error::shape(format!(
                    "summand {} at level {} has words of length {len}, measure has {}",
                    k + 1,
                    self.level,
                    m.len()
                )));
            }
            if m.max_letter().is_some_and(|l| l as usize >= seed.m()) {
                return Err(Error::invalid(format!("measure on summand {} uses a letter beyond the seed's {}", k + 1, seed.m())));
            }
            m.check_normalized()?;
        }
        Ok(())
    }

    pub fn is_flagged(&self, k: usize) -> bool {
        self.flagged.contains(&k)
    }
}

/// Consecutive levels of one trace, starting anywhere.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceTower {
    pub levels: Vec<LevelTrace>,
}

impl TraceTower {
    pub fn new(levels: Vec<LevelTrace>) -> Result<Self> {
        let Some(first) = levels.first() else {
            return Err(Error::invalid("trace tower has no levels"));
        };
        if levels.iter().enumerate().any(|(d, lt)| lt.level != first.level + d) {
            return Err(Error::shape("trace tower levels must be consecutive"));
        }
        Ok(TraceTower { levels })
    }

    pub fn first_level(&self) -> usize {
        self.levels[0].level
    }

    pub fn last_level(&self) -> usize {
        self.first_level() + self.levels.len() - 1
    }

    pub fn level(&self, i: usize) -> Option<&LevelTrace> {
        i.checked_sub(self.first_level()).and_then(|d| self.levels.get(d))
    }

    pub fn check(&self, system: &DimensionSystem, seed: &SeedAlgebra) -> Result<()> {
        self.levels.iter().try_for_each(|lt| lt.check(system, seed))
    }

    /// Every consecutive pair related by the pullback, exactly. Summands the
    /// pullback flags are unconstrained and skipped.
    pub fn consistency(&self, system: &DimensionSystem, seed: &SeedAlgebra) -> Result<Vec<ConsistencyIssue>> {
        let mut issues = Vec::new();
        for pair in self.levels.windows(2) {
            let pulled = pullback(system, seed, &pair[1], 1)?;
            let below = &pair[0];
            if pulled.lambda != below.lambda {
                issues.push(ConsistencyIssue { level: below.level, summand: None });
                continue;
            }
            for (k, (a, b)) in pulled.measures.iter().zip(&below.measures).enumerate() {
                if !pulled.is_flagged(k) && !a.equivalent(b)? {
                    issues.push(ConsistencyIssue { level: below.level, summand: Some(k + 1) });
                }
            }
        }
        Ok(issues)
    }

    pub fn is_consistent(&self, system: &DimensionSystem, seed: &SeedAlgebra) -> Result<bool> {
        Ok(self.consistency(system, seed)?.is_empty())
    }
}

/// Where the pullback of level `level + 1` disagrees with level `level`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsistencyIssue {
    pub level: usize,
    /// 1-based; `None` when the weight tuples differ.
    pub summand: Option<usize>,
}

/// Scalar tuples of a trace on the canonical AF subalgebra, for consecutive
/// levels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AFTrace {
    pub first_level: usize,
    #[serde(with = "exact::vec2")]
    pub alphas: Vec<Vec<Rational>>,
}

impl AFTrace {
    pub fn new(system: &DimensionSystem, first_level: usize, alphas: Vec<Vec<Rational>>) -> Result<Self> {
        let af = AFTrace { first_level, alphas };
        af.check(system)?;
        Ok(af)
    }

    /// The tuple at `level` pulled back to every level below it.
    pub fn from_top(system: &DimensionSystem, level: usize, alpha: Vec<Rational>) -> Result<Self> {
        if level == 0 {
            return Err(Error::invalid("levels are numbered from 1"));
        }
        let mut alphas = vec![alpha];
        for i in (1..level).rev() {
            let below = trace_pullback_matrix(system, i, 1)?.apply(&alphas[0])?;
            alphas.insert(0, below);
        }
        AFTrace::new(system, 1, alphas)
    }

    pub fn last_level(&self) -> usize {
        self.first_level + self.alphas.len() - 1
    }

    pub fn alpha(&self, level: usize) -> Option<&[Rational]> {
        level.checked_sub(self.first_level).and_then(|d| self.alphas.get(d)).map(Vec::as_slice)
    }

    pub fn check(&self, system: &DimensionSystem) -> Result<()> {
        if self.first_level == 0 || self.alphas.is_empty() {
            return Err(Error::invalid("AF trace needs at least one level, numbered from 1"));
        }
        for (d, alpha) in self.alphas.iter().enumerate() {
            let level = self.first_level + d;
            if alpha.len() != system.j(level)? {
                return Err(Error::shape(format!("AF tuple at level {level} has {} entries", alpha.len())));
            }
            if !is_probability_vector(alpha) {
                return Err(Error::invalid(format!("AF tuple at level {level} is not a probability vector")));
            }
        }
        for d in 1..self.alphas.len() {
            let level = self.first_level + d - 1;
            if trace_pullback_matrix(system, level, 1)?.apply(&self.alphas[d])? != self.alphas[d - 1] {
                return Err(Error::Inconsistent(format!("AF tuples at levels {level} and {} are not related by the pullback", level + 1)));
            }
        }
        Ok(())
    }
}

/// Pulls a trace at level `i + t` back to level `i = target.level - t`.
pub fn pullback(system: &DimensionSystem, seed: &SeedAlgebra, target: &LevelTrace, t: usize) -> Result<LevelTrace> {
    let top = target.level;
    let i = top
        .checked_sub(t)
        .filter(|&i| i >= 1 && t >= 1)
        .ok_or_else(|| Error::invalid(format!("cannot pull level {top} back by {t}")))?;
    let m = trace_pullback_matrix(system, i, t)?;
    let lambda = m.apply(&target.lambda)?;
    let layout = composed_layout(system, i, t)?;
    let n_lo = system.n_usize(i)?;
    let mut measures = Vec::with_capacity(n_lo.len());
    let mut flagged = Vec::new();
    for (k, &len) in n_lo.iter().enumerate() {
        if lambda[k].is_zero() {
            measures.push(seed.uniform(len)?);
            flagged.push(k);
            continue;
        }
        let mut terms = Vec::new();
        for (l, lam_l) in target.lambda.iter().enumerate() {
            if lam_l.is_zero() {
                continue;
            }
            let blocks = &layout.blocks[k][l];
            if blocks.is_empty() {
                continue;
            }
            // λ_l n_k θ / n_l spread evenly over the θ blocks
            let per_block = lam_l * m.entries.get(k, l) / &lambda[k] / Rational::from_integer(blocks.len().into());
            for block in blocks {
                terms.push((per_block.clone(), target.measures[l].marginal(block)?));
            }
        }
        measures.push(Measure::mix(&terms)?);
    }
    Ok(LevelTrace { level: i, lambda, measures, flagged })
}

/// Product-form extension of one level to the next:
/// `τ_l^{(i+1)} = ⊗_k τ_k^{⊗θ_{k,l}}` in canonical block order.
pub fn extend_level(system: &DimensionSystem, below: &LevelTrace, lambda_above: Vec<Rational>) -> Result<LevelTrace> {
    let theta = system.theta(below.level)?;
    let mut measures = Vec::with_capacity(theta.cols());
    for l in 0..theta.cols() {
        let mut factors = Vec::new();
        for (k, mk) in below.measures.iter().enumerate() {
            let count = usize::try_from(theta.get(k, l).clone())
                .map_err(|_| Error::ResourceCap(format!("multiplicity {} is too large", theta.get(k, l))))?;
            factors.extend(std::iter::repeat_n(mk.clone(), count));
        }
        measures.push(Measure::product(factors));
    }
    Ok(LevelTrace::new(below.level + 1, lambda_above, measures))
}

/// Extends an AF trace to a trace on the whole system, starting from one
/// measure per summand at the AF trace's first level.
pub fn extend_af_trace(system: &DimensionSystem, seed: &SeedAlgebra, af: &AFTrace, seeds: Vec<Measure>) -> Result<TraceTower> {
    af.check(system)?;
    let first = LevelTrace::new(af.first_level, af.alphas[0].clone(), seeds);
    first.check(system, seed)?;
    let mut levels = vec![first];
    for alpha in &af.alphas[1..] {
        let next = extend_level(system, levels.last().expect("nonempty"), alpha.clone())?;
        levels.push(next);
    }
    TraceTower::new(levels)
}

/// Whether the tower's weights equal the AF tuples at every one of its levels.
pub fn fiber_check(tower: &TraceTower, af: &AFTrace) -> bool {
    tower.levels.iter().all(|lt| af.alpha(lt.level) == Some(lt.lambda.as_slice()))
}

/// Convex combination of towers in one fiber.
pub fn convex_combine(towers: &[TraceTower], weights: &[Rational]) -> Result<TraceTower> {
    let Some(first) = towers.first() else {
        return Err(Error::invalid("no towers to combine"));
    };
    if towers.len() != weights.len() {
        return Err(Error::shape("one weight per tower required"));
    }
    if !is_probability_vector(weights) {
        return Err(Error::invalid("weights must be nonnegative and sum to 1"));
    }
    for t in towers {
        if t.first_level() != first.first_level() || t.levels.len() != first.levels.len() {
            return Err(Error::shape("towers cover different levels"));
        }
        if t.levels.iter().zip(&first.levels).any(|(a, b)| a.lambda != b.lambda) {
            return Err(Error::FiberMismatch("towers have different weight tuples".into()));
        }
    }
    let mut levels = Vec::with_capacity(first.levels.len());
    for (d, base) in first.levels.iter().enumerate() {
        let mut measures = Vec::with_capacity(base.measures.len());
        for k in 0..base.measures.len() {
            let terms: Vec<_> = towers.iter().zip(weights).map(|(t, w)| (w.clone(), t.levels[d].measures[k].clone())).collect();
            measures.push(Measure::mix(&terms)?);
        }
        let mut flagged: Vec<usize> = towers.iter().flat_map(|t| t.levels[d].flagged.iter().copied()).collect();
        flagged.sort_unstable();
        flagged.dedup();
        levels.push(LevelTrace { level: base.level, lambda: base.lambda.clone(), measures, flagged });
    }
    TraceTower::new(levels)
}

/// Every summand measure at levels `>= from_level` is a point mass.
pub fn is_extreme_truncation(tower: &TraceTower, from_level: usize) -> bool {
    tower.levels.iter().filter(|lt| lt.level >= from_level).all(|lt| lt.measures.iter().all(Measure::is_dirac))
}

/// `λ_k ∫ b dτ_k`.
pub fn evaluate(trace: &LevelTrace, obs: &Observable) -> Result<Rational> {
    let measure = trace
        .measures
        .get(obs.summand)
        .ok_or_else(|| Error::shape(format!("no summand {} at level {}", obs.summand + 1, trace.level)))?;
    if measure.len() != obs.len {
        return Err(Error::shape(format!("observable length {} on summand of length {}", obs.len, measure.len())));
    }
    let lambda = &trace.lambda[obs.summand];
    if lambda.is_zero() {
        return Ok(Rational::zero());
    }
    Ok(lambda * obs.value.expect(measure)?)
}

/// Image of an observable on level `i` under the connecting map to level
/// `i + t`, one component per target summand. Satisfies
/// `evaluate(pullback(τ), b) = Σ_l evaluate(τ, push_forward(b)_l)`.
pub fn push_forward(system: &DimensionSystem, obs: &Observable, i: usize, t: usize) -> Result<Vec<Observable>> {
    let m = trace_pullback_matrix(system, i, t)?;
    let layout = composed_layout(system, i, t)?;
    let n_hi = system.n_usize(i + t)?;
    let blocks = layout.blocks.get(obs.summand).ok_or_else(|| Error::shape("observable summand out of range"))?;
    let mut out = Vec::with_capacity(n_hi.len());
    for (l, &len) in n_hi.iter().enumerate() {
        let count = blocks[l].len();
        let terms = if count == 0 {
            Vec::new()
        } else {
            // n_k / n_l per block
            let coef = m.entries.get(obs.summand, l) / Rational::from_integer(count.into());
            blocks[l]
                .iter()
                .map(|b| Term { coef: coef.clone(), value: ValueFn::Lifted { coords: b.clone(), inner: Box::new(obs.value.clone()) } })
                .collect()
        };
        out.push(Observable { summand: l, len, value: ValueFn::Sum { terms } });
    }
    Ok(out)
}

/// Sum of `evaluate` over the components of one test element.
pub fn evaluate_group(trace: &LevelTrace, parts: &[Observable]) -> Result<Rational> {
    parts.iter().map(|o| evaluate(trace, o)).sum()
}
