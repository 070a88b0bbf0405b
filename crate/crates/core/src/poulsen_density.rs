//! Extreme traces approximating a given trace in its fiber.
//!
//! Given a trace `τ`, a finite family of test elements at level `i'` and
//! `ε > 0`, this finds a depth `t'`, replaces `τ_k^{(i')}` by averages of point
//! masses along every composed multiplicity, and assembles the extreme trace
//! `η` whose level-`(i'+t')` components are the resulting products. The
//! certificate records exact deviations `|τ(b) − η(b)|`.

use num_traits::{Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::dimension_system::{compose, trace_pullback_matrix, DimensionSystem, IntMatrix, RatMatrix};
use crate::error::{Error, Result};
use crate::exact::{self, ceil, Int, Rational};
use crate::matrix::Matrix;
use crate::partition_scheme::{composed_layout, MAX_LAYOUT_COORDS};
use crate::trace_tower::measure::{de_word, ser_word};
use crate::trace_tower::{
    evaluate_group, extend_level, fiber_check, pullback, AFTrace, LevelTrace, Measure, Observable, SeedAlgebra,
    TraceTower, Word,
};

/// One atom of a quantized measure.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuantizedAtom {
    pub word: Word,
    pub mass: Rational,
    pub count: u64,
}

/// Largest-remainder apportionment of `n` point masses to the atoms of `p`,
/// ties to the lexicographically smallest word.
pub fn quantize_measure(p: &Measure, n: u64) -> Result<Vec<QuantizedAtom>> {
    if n == 0 {
        return Err(Error::invalid("quantization needs at least one point"));
    }
    let atoms = p.atoms()?;
    let n_q = Rational::from_integer(n.into());
    let mut out: Vec<QuantizedAtom> = Vec::with_capacity(atoms.len());
    let mut remainders: Vec<(Rational, usize)> = Vec::with_capacity(atoms.len());
    let mut assigned: u64 = 0;
    for (idx, (word, mass)) in atoms.into_iter().enumerate() {
        let scaled = &mass * &n_q;
        let floor = scaled.floor();
        let count = floor.to_integer().to_u64().ok_or_else(|| Error::invalid("negative or oversized mass"))?;
        assigned += count;
        remainders.push((scaled - floor, idx));
        out.push(QuantizedAtom { word, mass, count });
    }
    let left = n.checked_sub(assigned).ok_or_else(|| Error::invalid("measure mass exceeds 1"))?;
    // stable sort keeps lower indices first among equal remainders
    remainders.sort_by(|a, b| b.0.cmp(&a.0));
    if left as usize > remainders.len() {
        return Err(Error::invalid("measure mass is below 1"));
    }
    for (_, idx) in remainders.into_iter().take(left as usize) {
        out[idx].count += 1;
    }
    Ok(out)
}

/// `max_x |p(x) − c_x/n|`.
pub fn quantization_error(atoms: &[QuantizedAtom]) -> Rational {
    let n: u64 = atoms.iter().map(|a| a.count).sum();
    let n_q = Rational::from_integer(n.into());
    atoms
        .iter()
        .map(|a| (&a.mass - Rational::from_integer(a.count.into()) / &n_q).abs())
        .fold(Rational::zero(), Rational::max)
}

/// Largest-remainder errors are each below `1/n` and sum to zero, so
/// `Σ_x |p(x) − c_x/n| < 2⌊s/2⌋/n` for a support of size `s`.
pub fn support_factor(support: usize) -> usize {
    2 * (support / 2)
}

/// Smallest `t' <= horizon` with `θ_{i',i'+t'-1;k,l} > N_k` for all `k, l`.
/// Running out of levels in a finite system counts as exceeding the horizon.
pub fn choose_depth(system: &DimensionSystem, i: usize, thresholds: &[Int], horizon: usize) -> Result<usize> {
    if thresholds.len() != system.j(i)? {
        return Err(Error::shape("one threshold per summand required"));
    }
    let reachable = match system.available_depth() {
        Some(depth) => horizon.min(depth.saturating_sub(i)),
        None => horizon,
    };
    let sys = system.materialize(i + reachable)?;
    let mut theta: Option<IntMatrix> = None;
    for t in 1..=reachable {
        let next = sys.theta(i + t - 1)?;
        let composed = match theta {
            None => next,
            Some(prev) => prev.try_mul(&next)?,
        };
        if composed.entries().all(|(k, _, v)| *v > thresholds[k]) {
            return Ok(t);
        }
        theta = Some(composed);
    }
    Err(Error::HorizonExceeded { horizon })
}

/// A run of `count` equal point masses `δ_word`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionRun {
    #[serde(serialize_with = "ser_word", deserialize_with = "de_word")]
    pub word: Word,
    pub count: u64,
}

/// `selections[k][l]` lists `μ_{k,l,1}, μ_{k,l,2}, …` as runs.
pub type Selections = Vec<Vec<Vec<SelectionRun>>>;

/// Collapses explicit per-`(k,l,m)` measures to runs; each must be a point mass.
pub fn selections_from_measures(measures: &[Vec<Vec<Measure>>]) -> Result<Selections> {
    let mut out = Vec::with_capacity(measures.len());
    for (k, row) in measures.iter().enumerate() {
        let mut out_row = Vec::with_capacity(row.len());
        for (l, list) in row.iter().enumerate() {
            let mut runs: Vec<SelectionRun> = Vec::new();
            for (m, mu) in list.iter().enumerate() {
                let word = mu.dirac_word().ok_or(Error::NonDirac { k: k + 1, l: l + 1, m: m + 1 })?;
                match runs.last_mut() {
                    Some(run) if run.word == word => run.count += 1,
                    _ => runs.push(SelectionRun { word, count: 1 }),
                }
            }
            out_row.push(runs);
        }
        out.push(out_row);
    }
    Ok(out)
}

fn check_selections(system: &DimensionSystem, i: usize, theta: &IntMatrix, selections: &Selections) -> Result<()> {
    let n_lo = system.n_usize(i)?;
    if selections.len() != theta.rows() || selections.iter().any(|r| r.len() != theta.cols()) {
        return Err(Error::shape("selection table does not match the composed multiplicity matrix"));
    }
    for (k, l, v) in theta.entries() {
        let runs = &selections[k][l];
        let total: u64 = runs.iter().map(|r| r.count).sum();
        if Int::from(total) != *v {
            return Err(Error::shape(format!("{total} selections at ({},{}), multiplicity is {v}", k + 1, l + 1)));
        }
        if let Some(r) = runs.iter().find(|r| r.word.len() != n_lo[k]) {
            return Err(Error::shape(format!(
                "selection word of length {} at ({},{}), expected {}",
                r.word.len(),
                k + 1,
                l + 1,
                n_lo[k]
            )));
        }
    }
    Ok(())
}

/// The extreme trace `η` from level `i + t` up to the last level of `af`:
/// point masses on the composed block layout, then the product recursion.
pub fn build_eta(
    system: &DimensionSystem,
    seed: &SeedAlgebra,
    i: usize,
    t: usize,
    selections: &Selections,
    af: &AFTrace,
) -> Result<TraceTower> {
    let top = i + t;
    let theta = compose(system, i, t)?;
    check_selections(system, i, &theta, selections)?;
    let alpha = af.alpha(top).ok_or_else(|| Error::DepthExhausted {
        depth: af.last_level(),
        reason: format!("AF trace does not reach level {top}"),
    })?;
    let layout = composed_layout(system, i, t)?;
    let n_hi = system.n_usize(top)?;
    let mut measures = Vec::with_capacity(n_hi.len());
    for (l, &len) in n_hi.iter().enumerate() {
        if len > MAX_LAYOUT_COORDS {
            return Err(Error::ResourceCap(format!("summand {} at level {top} has {len} coordinates", l + 1)));
        }
        let mut word: Word = vec![0; len];
        for (k, row) in selections.iter().enumerate() {
            let mut blocks = layout.blocks[k][l].iter();
            for run in &row[l] {
                for _ in 0..run.count {
                    let block = blocks.next().expect("counts checked against multiplicities");
                    for (&pos, &letter) in block.iter().zip(&run.word) {
                        word[pos] = letter;
                    }
                }
            }
        }
        measures.push(Measure::dirac(word));
    }
    let first = LevelTrace::new(top, alpha.to_vec(), measures);
    first.check(system, seed)?;
    let mut levels = vec![first];
    for level in top + 1..=af.last_level() {
        let alpha = af.alpha(level).expect("within range").to_vec();
        let next = extend_level(system, levels.last().expect("nonempty"), alpha)?;
        levels.push(next);
    }
    TraceTower::new(levels)
}

/// Basic neighbourhood `{τ' : |τ(b) − τ'(b)| < ε, b ∈ F}` with every `b` at one level.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Neighborhood {
    pub level: usize,
    #[serde(with = "exact::scalar")]
    pub epsilon: Rational,
    /// One list of summand components per test element; absent summands are zero.
    pub groups: Vec<Vec<Observable>>,
}

impl Neighborhood {
    pub fn check(&self, system: &DimensionSystem) -> Result<()> {
        if !self.epsilon.is_positive() {
            return Err(Error::invalid("epsilon must be positive"));
        }
        let n = system.n_usize(self.level)?;
        for (g, group) in self.groups.iter().enumerate() {
            for obs in group {
                let len = n.get(obs.summand).ok_or_else(|| {
                    Error::shape(format!("test element {} uses summand {} of {}", g + 1, obs.summand + 1, n.len()))
                })?;
                if obs.len != *len {
                    return Err(Error::shape(format!(
                        "test element {} has length {} on summand {}, expected {len}",
                        g + 1,
                        obs.len,
                        obs.summand + 1
                    )));
                }
                obs.value.check_len(obs.len)?;
            }
        }
        Ok(())
    }

    /// Largest sup bound among components on each summand.
    pub fn sup_bounds(&self, j: usize) -> Vec<Rational> {
        let mut out = vec![Rational::zero(); j];
        for obs in self.groups.iter().flatten() {
            if let Some(b) = out.get_mut(obs.summand) {
                *b = b.clone().max(obs.sup_bound());
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CertificateVerdict {
    Pass,
    Fail,
}

/// Deviation of one test element, with the chain
/// `|Σ w e| ≤ Σ w |e| < Σ w ε = ε`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Deviation {
    pub group: usize,
    #[serde(with = "exact::scalar")]
    pub tau_value: Rational,
    #[serde(with = "exact::scalar")]
    pub eta_value: Rational,
    #[serde(with = "exact::scalar")]
    pub deviation: Rational,
    /// `Σ_{k,l} w_{k,l} |τ_k(b_k) − avg_{k,l}(b_k)|`.
    #[serde(with = "exact::scalar")]
    pub triangle_bound: Rational,
}

/// Quantization quality for one `(k, l)`; indices are 1-based.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairBound {
    pub k: usize,
    pub l: usize,
    #[serde(with = "exact::scalar")]
    pub multiplicity: Int,
    #[serde(with = "exact::scalar")]
    pub weight: Rational,
    /// `B_k 2⌊|supp τ_k|/2⌋ / θ`, strictly above the observed error.
    #[serde(with = "exact::scalar")]
    pub a_priori: Rational,
    /// Largest `|avg_{k,l}(b_k) − τ_k(b_k)|` over the test elements.
    #[serde(with = "exact::scalar")]
    pub observed: Rational,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoulsenCertificate {
    pub base_level: usize,
    pub depth: usize,
    #[serde(with = "exact::scalar")]
    pub epsilon: Rational,
    #[serde(with = "exact::vec")]
    pub thresholds: Vec<Int>,
    pub composed_multiplicities: IntMatrix,
    /// `w_{k,l} = α_l n_{i',k} θ_{k,l} / n_{i'+t',l}`; all entries sum to 1.
    pub weights: RatMatrix,
    pub selections: Selections,
    pub deviations: Vec<Deviation>,
    pub pair_bounds: Vec<PairBound>,
    pub eta_extreme: bool,
    pub eta_in_fiber: bool,
    /// 1-based summands with `α_k = 0`; their components are unconstrained.
    pub flagged_summands: Vec<usize>,
    /// 1-based summands no test element touches.
    pub unobserved_summands: Vec<usize>,
    pub verdict: CertificateVerdict,
}

fn average_over_runs(runs: &[SelectionRun], group: &[Observable], k: usize) -> Result<Rational> {
    let total: u64 = runs.iter().map(|r| r.count).sum();
    let mut acc = Rational::zero();
    for run in runs {
        for obs in group.iter().filter(|o| o.summand == k) {
            acc += Rational::from_integer(run.count.into()) * obs.value.eval(&run.word)?;
        }
    }
    Ok(acc / Rational::from_integer(total.into()))
}

fn component_value(measure: &Measure, group: &[Observable], k: usize) -> Result<Rational> {
    group.iter().filter(|o| o.summand == k).map(|o| o.value.expect(measure)).sum()
}

struct Evaluation {
    deviations: Vec<Deviation>,
    observed: Vec<Vec<Rational>>,
}

/// Deviations two ways: by pulling `η` back and by the weighted triple sum.
/// The two must agree exactly.
fn evaluate_deviations(
    system: &DimensionSystem,
    seed: &SeedAlgebra,
    tau_base: &LevelTrace,
    eta_top: &LevelTrace,
    nbhd: &Neighborhood,
    t: usize,
    weights: &RatMatrix,
    selections: &Selections,
) -> Result<Evaluation> {
    let eta_base = pullback(system, seed, eta_top, t)?;
    let mut observed = vec![vec![Rational::zero(); weights.cols()]; weights.rows()];
    let mut deviations = Vec::with_capacity(nbhd.groups.len());
    for (g, group) in nbhd.groups.iter().enumerate() {
        let tau_value = evaluate_group(tau_base, group)?;
        let eta_value = evaluate_group(&eta_base, group)?;
        let mut signed = Rational::zero();
        let mut triangle = Rational::zero();
        for (k, row) in observed.iter_mut().enumerate() {
            let tau_k = component_value(&tau_base.measures[k], group, k)?;
            for (l, seen) in row.iter_mut().enumerate() {
                let err = &tau_k - average_over_runs(&selections[k][l], group, k)?;
                let w = weights.get(k, l);
                signed += w * &err;
                triangle += w * err.abs();
                *seen = seen.clone().max(err.abs());
            }
        }
        let deviation = (&tau_value - &eta_value).abs();
        if deviation != signed.abs() {
            return Err(Error::Inconsistent(format!(
                "test element {}: pulled-back deviation {deviation} differs from weighted sum {}",
                g + 1,
                signed.abs()
            )));
        }
        deviations.push(Deviation { group: g + 1, tau_value, eta_value, deviation, triangle_bound: triangle });
    }
    Ok(Evaluation { deviations, observed })
}

fn certificate_weights(system: &DimensionSystem, i: usize, t: usize, af: &AFTrace) -> Result<RatMatrix> {
    let m = trace_pullback_matrix(system, i, t)?;
    let alpha = af.alpha(i + t).ok_or_else(|| Error::DepthExhausted {
        depth: af.last_level(),
        reason: format!("AF trace does not reach level {}", i + t),
    })?;
    Ok(m.entries.map(|_, l, v| v * &alpha[l]))
}

/// Runs the whole approximation and certifies `η ∈ N`.
pub fn certify(
    system: &DimensionSystem,
    seed: &SeedAlgebra,
    tau: &TraceTower,
    nbhd: &Neighborhood,
    af: &AFTrace,
    horizon: usize,
) -> Result<PoulsenCertificate> {
    let i = nbhd.level;
    nbhd.check(system)?;
    tau.check(system, seed)?;
    af.check(system)?;
    if !fiber_check(tau, af) {
        return Err(Error::FiberMismatch("trace weights differ from the AF tuples".into()));
    }
    let tau_base = tau
        .level(i)
        .ok_or_else(|| Error::invalid(format!("trace does not cover level {i} of the test elements")))?;
    let j = tau_base.measures.len();
    let bounds = nbhd.sup_bounds(j);
    let mut supports = Vec::with_capacity(j);
    let mut thresholds = Vec::with_capacity(j);
    for (k, measure) in tau_base.measures.iter().enumerate() {
        let supp = measure.support_size()?;
        supports.push(supp);
        let need = Rational::from_integer(support_factor(supp).into()) * &bounds[k] / &nbhd.epsilon;
        thresholds.push(ceil(&need));
    }
    let t = choose_depth(system, i, &thresholds, horizon)?;
    let theta = compose(system, i, t)?;
    let mut selections: Selections = vec![vec![Vec::new(); theta.cols()]; j];
    for (k, l, v) in theta.entries() {
        let n = v.to_u64().ok_or_else(|| Error::ResourceCap(format!("multiplicity {v} is too large to quantize")))?;
        selections[k][l] = quantize_measure(&tau_base.measures[k], n)?
            .into_iter()
            .filter(|a| a.count > 0)
            .map(|a| SelectionRun { word: a.word, count: a.count })
            .collect();
    }
    let eta = build_eta(system, seed, i, t, &selections, af)?;
    let weights = certificate_weights(system, i, t, af)?;
    let eval = evaluate_deviations(system, seed, tau_base, &eta.levels[0], nbhd, t, &weights, &selections)?;
    let pair_bounds = theta
        .entries()
        .map(|(k, l, v)| PairBound {
            k: k + 1,
            l: l + 1,
            multiplicity: v.clone(),
            weight: weights.get(k, l).clone(),
            a_priori: Rational::from_integer(support_factor(supports[k]).into()) * &bounds[k] / Rational::from_integer(v.clone()),
            observed: eval.observed[k][l].clone(),
        })
        .collect();
    let alpha_base = af.alpha(i).ok_or_else(|| Error::invalid(format!("AF trace does not cover level {i}")))?;
    let flagged_summands = (0..j).filter(|&k| alpha_base[k].is_zero()).map(|k| k + 1).collect();
    let unobserved_summands = (0..j)
        .filter(|&k| !nbhd.groups.iter().flatten().any(|o| o.summand == k))
        .map(|k| k + 1)
        .collect();
    let verdict = if eval.deviations.iter().all(|d| d.deviation < nbhd.epsilon) {
        CertificateVerdict::Pass
    } else {
        CertificateVerdict::Fail
    };
    Ok(PoulsenCertificate {
        base_level: i,
        depth: t,
        epsilon: nbhd.epsilon.clone(),
        thresholds,
        composed_multiplicities: theta,
        weights,
        selections,
        deviations: eval.deviations,
        pair_bounds,
        eta_extreme: crate::trace_tower::is_extreme_truncation(&eta, i + t),
        eta_in_fiber: fiber_check(&eta, af),
        flagged_summands,
        unobserved_summands,
        verdict,
    })
}

/// Recomputes deviations from a certificate's selections alone.
pub fn recheck_certificate(
    system: &DimensionSystem,
    seed: &SeedAlgebra,
    tau: &TraceTower,
    nbhd: &Neighborhood,
    af: &AFTrace,
    cert: &PoulsenCertificate,
) -> Result<Vec<Deviation>> {
    let i = cert.base_level;
    let t = cert.depth;
    if nbhd.level != i {
        return Err(Error::invalid("certificate base level differs from the test elements' level"));
    }
    let tau_base = tau.level(i).ok_or_else(|| Error::invalid(format!("trace does not cover level {i}")))?;
    let eta = build_eta(system, seed, i, t, &cert.selections, af)?;
    let weights = certificate_weights(system, i, t, af)?;
    Ok(evaluate_deviations(system, seed, tau_base, &eta.levels[0], nbhd, t, &weights, &cert.selections)?.deviations)
}

/// The a priori quantization bound `B 2⌊|supp|/2⌋ / θ` per `(k, l)` at span `t`.
pub fn quantization_bounds(system: &DimensionSystem, i: usize, t: usize, supports: &[usize], bounds: &[Rational]) -> Result<RatMatrix> {
    let theta = compose(system, i, t)?;
    Ok(Matrix::from_fn(theta.rows(), theta.cols(), |k, l| {
        let v = theta.get(k, l);
        if v.is_zero() {
            Rational::zero()
        } else {
            Rational::from_integer(support_factor(supports[k]).into()) * &bounds[k] / Rational::from_integer(v.clone())
        }
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::{int, q};
    use crate::trace_tower::{extend_af_trace, ValueFn};

    fn chain(n1: i64, thetas: &[i64]) -> DimensionSystem {
        DimensionSystem::from_multiplicities(
            vec![int(n1)],
            thetas.iter().map(|&t| Matrix::from_rows(vec![vec![int(t)]]).unwrap()).collect(),
        )
        .unwrap()
    }

    fn bernoulli(p: Rational) -> Measure {
        Measure::dense(1, [(vec![0], p.clone()), (vec![1], Rational::from_integer(1.into()) - p)]).unwrap()
    }

    fn counts(p: &Measure, n: u64) -> Vec<u64> {
        quantize_measure(p, n).unwrap().iter().map(|a| a.count).collect()
    }

    #[test]
    fn exact_apportionment() {
        let p = bernoulli(q(3, 5));
        assert_eq!(counts(&p, 5), vec![3, 2]);
        assert_eq!(quantization_error(&quantize_measure(&p, 5).unwrap()), q(0, 1));
        assert_eq!(counts(&bernoulli(q(1, 2)), 2), vec![1, 1]);
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let p = bernoulli(q(1, 2));
        let atoms = quantize_measure(&p, 3).unwrap();
        assert_eq!(atoms.iter().map(|a| a.count).collect::<Vec<_>>(), vec![2, 1]);
        // error against an indicator is |1/2 - 2/3| = 1/6 <= 1/3
        let avg = Rational::from_integer(2.into()) / Rational::from_integer(3.into());
        assert!((avg - q(1, 2)).abs() <= q(1, 3));
    }

    #[test]
    fn depth_for_doubling_chain() {
        let sys = chain(1, &[2, 2, 2]);
        assert_eq!(choose_depth(&sys, 1, &[int(3)], 3).unwrap(), 2);
        assert_eq!(choose_depth(&sys, 1, &[int(0)], 3).unwrap(), 1);
        assert!(matches!(choose_depth(&sys, 1, &[int(100)], 3), Err(Error::HorizonExceeded { .. })));
    }

    #[test]
    fn reducible_diagram_never_fills() {
        let theta = Matrix::from_rows(vec![vec![int(2), int(0)], vec![int(0), int(2)]]).unwrap();
        let sys = DimensionSystem::from_multiplicities(vec![int(1), int(1)], vec![theta.clone()])
            .unwrap()
            .with_tail(vec![crate::dimension_system::TailStep { theta, eval_counts: None }]);
        assert!(matches!(choose_depth(&sys, 1, &[int(0), int(0)], 8), Err(Error::HorizonExceeded { horizon: 8 })));
    }

    #[test]
    fn eta_from_two_point_selections() {
        let sys = chain(1, &[2]);
        let seed = SeedAlgebra::new(vec![1, 1]).unwrap();
        let af = AFTrace::from_top(&sys, 2, vec![q(1, 1)]).unwrap();
        let sel = selections_from_measures(&[vec![vec![Measure::dirac(vec![0]), Measure::dirac(vec![1])]]]).unwrap();
        let eta = build_eta(&sys, &seed, 1, 1, &sel, &af).unwrap();
        assert_eq!(eta.levels[0].measures[0], Measure::dirac(vec![0, 1]));
        let bad = selections_from_measures(&[vec![vec![Measure::uniform(1, 2).unwrap()]]]);
        assert!(matches!(bad, Err(Error::NonDirac { k: 1, l: 1, m: 1 })));
    }

    #[test]
    fn eta_pullback_averages_selections() {
        let sys = chain(1, &[3, 2]);
        let seed = SeedAlgebra::new(vec![2, 3]).unwrap();
        let af = AFTrace::from_top(&sys, 3, vec![q(1, 1)]).unwrap();
        let sel = vec![vec![vec![SelectionRun { word: vec![0], count: 4 }, SelectionRun { word: vec![1], count: 2 }]]];
        let eta = build_eta(&sys, &seed, 1, 2, &sel, &af).unwrap();
        let down = pullback(&sys, &seed, &eta.levels[0], 2).unwrap();
        assert!(down.measures[0].equivalent(&bernoulli(q(2, 3))).unwrap());
        assert!(crate::trace_tower::is_extreme_truncation(&eta, 3));
    }

    #[test]
    fn dirac_trace_certifies_with_zero_deviation() {
        let sys = chain(1, &[2, 2, 2]);
        let seed = SeedAlgebra::new(vec![2, 3]).unwrap();
        let af = AFTrace::from_top(&sys, 4, vec![q(1, 1)]).unwrap();
        let tau = extend_af_trace(&sys, &seed, &af, vec![Measure::dirac(vec![1])]).unwrap();
        let obs = vec![vec![Observable::new(0, 2, ValueFn::indicator(0, 1)).unwrap()]];
        let nbhd = Neighborhood { level: 2, epsilon: q(1, 1000), groups: obs };
        let cert = certify(&sys, &seed, &tau, &nbhd, &af, 2).unwrap();
        assert_eq!(cert.verdict, CertificateVerdict::Pass);
        assert!(cert.deviations.iter().all(|d| d.deviation.is_zero()));
    }

    #[test]
    fn weights_sum_to_one() {
        let a = Matrix::from_rows(vec![vec![int(1), int(2)], vec![int(1), int(1)]]).unwrap();
        let sys = DimensionSystem::from_multiplicities(vec![int(1), int(2)], vec![a.clone(), a]).unwrap();
        let af = AFTrace::from_top(&sys, 3, vec![q(1, 4), q(3, 4)]).unwrap();
        let w = certificate_weights(&sys, 1, 2, &af).unwrap();
        assert_eq!(w.entries().map(|(_, _, v)| v.clone()).sum::<Rational>(), q(1, 1));
        // per summand the weights give back the lower AF tuple
        for (k, alpha_k) in af.alpha(1).unwrap().iter().enumerate() {
            assert_eq!(w.row(k).iter().sum::<Rational>(), *alpha_k);
        }
    }
}
