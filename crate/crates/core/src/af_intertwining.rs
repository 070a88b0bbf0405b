//! Villadsen systems with point evaluations over a finite seed space, and
//! the estimates comparing them with the evaluation-free system.
//!
//! Vectors in `R^{j_i}` are affine functions on the state space of level
//! `i`; a `j_i × j_{i+t}` matrix `M` acts by `v ↦ (Σ_k v_k M_{k,l})_l`.

use std::collections::hash_map::Entry;
use std::collections::{BTreeMap, HashMap};

use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::dimension_system::{compose, DimensionSystem, IntMatrix, RatMatrix};
use crate::error::{Error, Result};
use crate::exact::{self, sup_norm, Int, Rational};
use crate::matrix::Matrix;
use crate::partition_scheme::composed_layout;
use crate::trace_tower::{Letter, Word};

/// Largest function-space dimension materialized by [`phi_psi_function_maps`].
pub const FUNCTION_SPACE_CAP: usize = 1 << 20;
/// Largest composed evaluation multiset.
pub const EVAL_POINT_CAP: usize = 1 << 20;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AFVilladsenSystem {
    pub base: DimensionSystem,
    /// `|E_{i;k,l}|` for the explicit levels; the tail supplies the rest.
    pub eval_counts: Vec<IntMatrix>,
    pub x_size: usize,
    /// `eval_points[i][k][l]`: words in `X^{n_{i,k}}`, 0-based letters.
    pub eval_points: Option<Vec<Vec<Vec<Vec<Word>>>>>,
}

fn q(v: &Int) -> Rational {
    Rational::from_integer(v.clone())
}

fn ones(len: usize) -> Vec<Rational> {
    vec![Rational::one(); len]
}

fn two_pow_neg(i: usize) -> Rational {
    Rational::new(Int::one(), Int::one() << i)
}

impl AFVilladsenSystem {
    pub fn new(
        base: DimensionSystem,
        eval_counts: Vec<IntMatrix>,
        x_size: usize,
        eval_points: Option<Vec<Vec<Vec<Vec<Word>>>>>,
    ) -> Result<Self> {
        if x_size < 2 || x_size > Letter::MAX as usize + 1 {
            return Err(Error::invalid(format!("seed space size {x_size} must be between 2 and 256")));
        }
        let sys = AFVilladsenSystem { base, eval_counts, x_size, eval_points };
        for i in 1..=sys.eval_counts.len() {
            let e = &sys.eval_counts[i - 1];
            let theta = sys.base.theta(i)?;
            if e.rows() != theta.rows() || e.cols() != theta.cols() {
                return Err(Error::shape(format!("evaluation counts at level {i} do not match the multiplicity matrix")));
            }
            if !e.is_nonnegative() {
                return Err(Error::invalid(format!("negative evaluation count at level {i}")));
            }
        }
        if let Some(points) = &sys.eval_points {
            for (idx, per_level) in points.iter().enumerate() {
                let i = idx + 1;
                let counts = sys.eval_count(i)?;
                let n = sys.base.n_usize(i)?;
                if per_level.len() != counts.rows() || per_level.iter().any(|r| r.len() != counts.cols()) {
                    return Err(Error::shape(format!("evaluation point table at level {i} has the wrong shape")));
                }
                for (k, l, c) in counts.entries() {
                    let list = &per_level[k][l];
                    if Int::from(list.len()) != *c {
                        return Err(Error::Inconsistent(format!(
                            "{} evaluation points at ({i};{},{}), count is {c}",
                            list.len(),
                            k + 1,
                            l + 1
                        )));
                    }
                    if list.iter().any(|w| w.len() != n[k] || w.iter().any(|&x| x as usize >= sys.x_size)) {
                        return Err(Error::invalid(format!("malformed evaluation point at ({i};{},{})", k + 1, l + 1)));
                    }
                }
            }
        }
        Ok(sys)
    }

    /// Evaluation-free system: every count zero.
    pub fn without_evaluations(base: DimensionSystem, x_size: usize) -> Result<Self> {
        AFVilladsenSystem::new(base, Vec::new(), x_size, None)
    }

    /// `|E_{i;k,l}|`; zero where neither the explicit list nor the tail says otherwise.
    pub fn eval_count(&self, i: usize) -> Result<IntMatrix> {
        if let Some(e) = i.checked_sub(1).and_then(|d| self.eval_counts.get(d)) {
            return Ok(e.clone());
        }
        let theta = self.base.theta(i)?;
        let from_tail = self.base.tail.as_ref().and_then(|t| t.step_for(i)).and_then(|s| s.eval_counts.clone());
        Ok(from_tail.unwrap_or_else(|| theta.map(|_, _, _| Int::zero())))
    }

    /// `θ_i + |E_i|`.
    pub fn total(&self, i: usize) -> Result<IntMatrix> {
        let theta = self.base.theta(i)?;
        let e = self.eval_count(i)?;
        Ok(theta.map(|k, l, v| v + e.get(k, l)))
    }

    /// Explicit points, or the default `m`-th point `(m mod |X|, …)`.
    pub fn points(&self, i: usize) -> Result<Vec<Vec<Vec<Word>>>> {
        if let Some(p) = self.eval_points.as_ref().and_then(|p| p.get(i - 1)) {
            return Ok(p.clone());
        }
        let counts = self.eval_count(i)?;
        let n = self.base.n_usize(i)?;
        let mut out = vec![vec![Vec::new(); counts.cols()]; counts.rows()];
        for (k, l, c) in counts.entries() {
            let c = c.to_usize().filter(|&c| c <= EVAL_POINT_CAP).ok_or_else(|| Error::ResourceCap(format!("{c} evaluation points")))?;
            out[k][l] = (0..c).map(|m| vec![(m % self.x_size) as Letter; n[k]]).collect();
        }
        Ok(out)
    }
}

/// `ñ_1 = n_1`, `ñ_{i+1,l} = Σ_k (θ_{i;k,l} + |E_{i;k,l}|) ñ_{i,k}`, for levels `1..=depth`.
pub fn n_tilde(sys: &AFVilladsenSystem, depth: usize) -> Result<Vec<Vec<Int>>> {
    if depth == 0 {
        return Err(Error::invalid("depth must be at least 1"));
    }
    let mut out = vec![sys.base.n(1)?];
    for i in 1..depth {
        let next = sys.total(i)?.left_apply(out.last().expect("nonempty"))?;
        out.push(next);
    }
    Ok(out)
}

/// The four matrices attached to the span `i → i + t`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThetaMaps {
    /// `θ**`: `θ_{k,l} n_{i,k} / n_{i+t,l}`.
    pub theta_star: RatMatrix,
    /// `Θ`: `total_{k,l} n_{i,k} / n_{i+t,l}`.
    pub big_theta: RatMatrix,
    /// Product of the `θ_s + |E_s|`.
    pub composed_total: IntMatrix,
    /// `composed_total − composed θ`, the composed evaluation counts.
    pub composed_eval: IntMatrix,
}

pub fn theta_maps(sys: &AFVilladsenSystem, i: usize, t: usize) -> Result<ThetaMaps> {
    if t == 0 {
        return Err(Error::invalid("span t must be at least 1"));
    }
    let theta = compose(&sys.base, i, t)?;
    let mut total = sys.total(i)?;
    for s in i + 1..i + t {
        total = total.try_mul(&sys.total(s)?)?;
    }
    let n_lo = sys.base.n(i)?;
    let n_hi = sys.base.n(i + t)?;
    let scale = |m: &IntMatrix| m.map(|k, l, v| Rational::new(v * &n_lo[k], n_hi[l].clone()));
    let big_theta = scale(&total);
    // Θ composes as the product of its single steps
    let mut stepwise = single_big_theta(sys, i)?;
    for s in i + 1..i + t {
        stepwise = stepwise.try_mul(&single_big_theta(sys, s)?)?;
    }
    if stepwise != big_theta {
        return Err(Error::Inconsistent(format!("composed Θ from level {i} over {t} steps disagrees with its factors")));
    }
    let composed_eval = total.map(|k, l, v| v - theta.get(k, l));
    if !composed_eval.is_nonnegative() {
        return Err(Error::Inconsistent("composed evaluation count is negative".into()));
    }
    Ok(ThetaMaps { theta_star: scale(&theta), big_theta, composed_total: total, composed_eval })
}

fn single_big_theta(sys: &AFVilladsenSystem, i: usize) -> Result<RatMatrix> {
    let total = sys.total(i)?;
    let n_lo = sys.base.n(i)?;
    let n_hi = sys.base.n(i + 1)?;
    Ok(total.map(|k, l, v| Rational::new(v * &n_lo[k], n_hi[l].clone())))
}

fn theta_star(sys: &AFVilladsenSystem, i: usize, t: usize) -> Result<RatMatrix> {
    if t == 0 {
        let j = sys.base.j(i)?;
        return Ok(Matrix::identity(j));
    }
    let theta = compose(&sys.base, i, t)?;
    let n_lo = sys.base.n(i)?;
    let n_hi = sys.base.n(i + t)?;
    Ok(theta.map(|k, l, v| Rational::new(v * &n_lo[k], n_hi[l].clone())))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Convergence {
    Convergent,
    Divergent,
    Undecided,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LimitKind {
    Constant,
    Nonconstant,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RSequence {
    #[serde(with = "exact::vec2")]
    pub n_tilde: Vec<Vec<Int>>,
    /// `r_i = ñ_i / n_i`, levels `1..=depth`.
    #[serde(with = "exact::vec2")]
    pub r: Vec<Vec<Rational>>,
    /// `‖r_{i+1} − θ**_i(r_i)‖∞`.
    #[serde(with = "exact::vec")]
    pub increments: Vec<Rational>,
    /// `Σ_{i ≥ s} increments_i` within the truncation, for each `s`.
    #[serde(with = "exact::vec")]
    pub tail_sums: Vec<Rational>,
    pub increasing: bool,
    pub convergence: Convergence,
    /// Last increment over the one before it.
    #[serde(with = "exact::option")]
    pub ratio: Option<Rational>,
    /// Geometric estimate `δ q / (1 − q)` of the remaining tail.
    #[serde(with = "exact::option")]
    pub tail_estimate: Option<Rational>,
    pub limit: LimitKind,
    /// `max_k r_{depth,k} − min_k r_{depth,k}`.
    #[serde(with = "exact::scalar")]
    pub spread: Rational,
    /// `‖r_depth‖∞`, a lower bound on the limit's norm.
    #[serde(with = "exact::scalar")]
    pub sup_norm: Rational,
    #[serde(with = "exact::scalar")]
    pub tolerance: Rational,
    pub truncation: bool,
}

/// `r_i`, its increments and a convergence diagnosis at tolerance `tol`.
pub fn r_sequence(sys: &AFVilladsenSystem, depth: usize, tol: &Rational) -> Result<RSequence> {
    let nt = n_tilde(sys, depth)?;
    let mut r = Vec::with_capacity(depth);
    for (d, nti) in nt.iter().enumerate() {
        let n = sys.base.n(d + 1)?;
        if nti.iter().zip(&n).any(|(a, b)| a < b) {
            return Err(Error::Inconsistent(format!("ñ below n at level {}", d + 1)));
        }
        r.push(nti.iter().zip(&n).map(|(a, b)| Rational::new(a.clone(), b.clone())).collect::<Vec<_>>());
    }
    // the recursion r_{i+1} = Θ_i(r_i) must reproduce the closed form
    let mut increments = Vec::with_capacity(depth.saturating_sub(1));
    let mut increasing = true;
    for i in 1..depth {
        if single_big_theta(sys, i)?.left_apply(&r[i - 1])? != r[i] {
            return Err(Error::Inconsistent(format!("r_{} differs from Θ applied to r_{i}", i + 1)));
        }
        let pushed = theta_star(sys, i, 1)?.left_apply(&r[i - 1])?;
        let diff: Vec<Rational> = r[i].iter().zip(&pushed).map(|(a, b)| a - b).collect();
        increasing &= diff.iter().all(|d| !d.is_negative());
        increments.push(sup_norm(&diff));
    }
    let mut tail_sums = vec![Rational::zero(); increments.len()];
    let mut acc = Rational::zero();
    for (s, d) in increments.iter().enumerate().rev() {
        acc += d;
        tail_sums[s] = acc.clone();
    }
    let (convergence, ratio, tail_estimate) = diagnose(&increments, tol);
    let last = r.last().expect("depth >= 1");
    let max = last.iter().cloned().fold(last[0].clone(), Rational::max);
    let min = last.iter().cloned().fold(last[0].clone(), Rational::min);
    let spread = &max - &min;
    let limit = match convergence {
        Convergence::Convergent if last.len() == 1 || spread < *tol => LimitKind::Constant,
        Convergence::Convergent => LimitKind::Nonconstant,
        _ => LimitKind::Unknown,
    };
    let all_zero = increments.iter().all(Zero::is_zero);
    Ok(RSequence {
        n_tilde: nt,
        sup_norm: max,
        r,
        increments,
        tail_sums,
        increasing,
        convergence,
        ratio,
        tail_estimate,
        limit,
        spread,
        tolerance: tol.clone(),
        truncation: !all_zero,
    })
}

fn diagnose(increments: &[Rational], tol: &Rational) -> (Convergence, Option<Rational>, Option<Rational>) {
    match increments {
        [] => (Convergence::Undecided, None, None),
        [.., last] if last.is_zero() => (Convergence::Convergent, None, Some(Rational::zero())),
        [_] => (Convergence::Undecided, None, None),
        [.., prev, last] => {
            if prev.is_zero() || last >= prev {
                return (Convergence::Divergent, None, None);
            }
            let ratio = last / prev;
            let estimate = last * &ratio / (Rational::one() - &ratio);
            let verdict = if estimate < *tol { Convergence::Convergent } else { Convergence::Undecided };
            (verdict, Some(ratio), Some(estimate))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GSequence {
    pub s: usize,
    #[serde(with = "exact::vec2")]
    pub g: Vec<Vec<Rational>>,
    /// `g_{i+1} − θ**_i(g_i)`, at level `i + 1`.
    #[serde(with = "exact::vec2")]
    pub increments: Vec<Vec<Rational>>,
    /// Partial sums of the increments pushed to the top level, from `i = s`.
    #[serde(with = "exact::vec2")]
    pub partial_sums: Vec<Vec<Rational>>,
    /// `g^{(s)} ≤ g^{(1)}` at every level.
    pub dominated: bool,
    /// Increments of `g^{(s)}` are at most those of `g^{(1)}`.
    pub increments_dominated: bool,
    /// `g^{(1)} − g^{(s)} = Θ_{s,i-1}((Θ_{1,s-1} − θ**_{1,s-1})(r_1))` for `i ≥ s`.
    pub gap_identity: bool,
    /// Partial sums equal `θ**_{N,depth}(g_N) − 1` for every `N`.
    pub telescoping: bool,
    pub increasing: bool,
}

fn g_values(sys: &AFVilladsenSystem, s: usize, depth: usize) -> Result<Vec<Vec<Rational>>> {
    let mut g = vec![ones(sys.base.j(1)?)];
    for i in 1..depth {
        let map = if i < s { theta_star(sys, i, 1)? } else { single_big_theta(sys, i)? };
        let next = map.left_apply(g.last().expect("nonempty"))?;
        g.push(next);
    }
    Ok(g)
}

/// `g^{(s)}`: `r` with its first `s` terms replaced by order units.
pub fn g_double_sequence(sys: &AFVilladsenSystem, s: usize, depth: usize) -> Result<GSequence> {
    if s == 0 || depth == 0 {
        return Err(Error::invalid("s and depth must be at least 1"));
    }
    let g = g_values(sys, s, depth)?;
    let r = g_values(sys, 1, depth)?;
    let increments_of = |seq: &[Vec<Rational>]| -> Result<Vec<Vec<Rational>>> {
        (1..depth)
            .map(|i| {
                let pushed = theta_star(sys, i, 1)?.left_apply(&seq[i - 1])?;
                Ok(seq[i].iter().zip(&pushed).map(|(a, b)| a - b).collect())
            })
            .collect()
    };
    let increments = increments_of(&g)?;
    let r_increments = increments_of(&r)?;
    let dominated = g.iter().zip(&r).all(|(a, b)| a.iter().zip(b).all(|(x, y)| x <= y));
    let increments_dominated = increments.iter().zip(&r_increments).all(|(a, b)| a.iter().zip(b).all(|(x, y)| x <= y));
    let increasing = increments.iter().flatten().all(|d| !d.is_negative());
    let mut gap_identity = true;
    if s <= depth {
        let span = s - 1;
        let seed = if span == 0 {
            vec![Rational::zero(); sys.base.j(1)?]
        } else {
            let m = theta_maps(sys, 1, span)?;
            let big = m.big_theta.left_apply(&ones(sys.base.j(1)?))?;
            let small = m.theta_star.left_apply(&ones(sys.base.j(1)?))?;
            big.iter().zip(&small).map(|(a, b)| a - b).collect()
        };
        for i in s..=depth {
            let mut v = seed.clone();
            for level in s..i {
                v = single_big_theta(sys, level)?.left_apply(&v)?;
            }
            let gap: Vec<Rational> = r[i - 1].iter().zip(&g[i - 1]).map(|(a, b)| a - b).collect();
            gap_identity &= gap == v;
        }
    }
    // partial sums pushed to level `depth`
    let mut partial_sums = Vec::new();
    let mut telescoping = true;
    let top_j = sys.base.j(depth)?;
    let start = s.min(depth);
    let mut acc = vec![Rational::zero(); top_j];
    for n_level in start..=depth {
        if n_level > start {
            let i = n_level - 1;
            let pushed = theta_star(sys, i + 1, depth - i - 1)?.left_apply(&increments[i - 1])?;
            for (a, p) in acc.iter_mut().zip(pushed) {
                *a += p;
            }
        }
        let direct: Vec<Rational> = theta_star(sys, n_level, depth - n_level)?
            .left_apply(&g[n_level - 1])?
            .into_iter()
            .map(|v| v - Rational::one())
            .collect();
        telescoping &= direct == acc;
        partial_sums.push(acc.clone());
    }
    Ok(GSequence { s, g, increments, partial_sums, dominated, increments_dominated, gap_identity, telescoping, increasing })
}

/// `Σ_k (n_{i,k}/n_{i+t,l}) |E_{i,i+t-1;k,l}|` for one `(i, t)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FundamentalCell {
    pub i: usize,
    pub t: usize,
    #[serde(with = "exact::vec")]
    pub values: Vec<Rational>,
}

pub fn fundamental_value(sys: &AFVilladsenSystem, i: usize, t: usize) -> Result<Vec<Rational>> {
    let m = theta_maps(sys, i, t)?;
    let n_lo = sys.base.n(i)?;
    let n_hi = sys.base.n(i + t)?;
    Ok((0..m.composed_eval.cols())
        .map(|l| {
            (0..m.composed_eval.rows())
                .map(|k| Rational::new(&n_lo[k] * m.composed_eval.get(k, l), n_hi[l].clone()))
                .sum()
        })
        .collect())
}

pub fn fundamental_limit_table(
    sys: &AFVilladsenSystem,
    i_range: std::ops::RangeInclusive<usize>,
    t_range: std::ops::RangeInclusive<usize>,
) -> Result<Vec<FundamentalCell>> {
    let mut out = Vec::new();
    for i in i_range {
        for t in t_range.clone() {
            out.push(FundamentalCell { i, t, values: fundamental_value(sys, i, t)? });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundForm {
    /// `2 Σ_k (n_{i,k}/n_{i+t,l}) |E|`, valid when `r_{i,k} ≤ r_{i+t,l}`.
    Closed,
    /// Direct triangle inequality on the componentwise difference.
    Triangle,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DefectBound {
    pub i: usize,
    pub t: usize,
    /// `Σ_k |ñ_{i,k}/ñ_{i+t,l} − n_{i,k}/n_{i+t,l}| θ + (ñ_{i,k}/ñ_{i+t,l}) |E|`.
    #[serde(with = "exact::vec")]
    pub triangle: Vec<Rational>,
    /// `Σ_k (1 − r_{i,k}/r_{i+t,l}) (n/n) θ + (ñ/ñ) |E|`.
    #[serde(with = "exact::vec")]
    pub middle: Vec<Rational>,
    #[serde(with = "exact::vec")]
    pub closed: Vec<Rational>,
    /// `r_{i,k} ≤ r_{i+t,l}` for all `k, l`.
    pub monotone: bool,
    pub form: BoundForm,
    #[serde(with = "exact::vec")]
    pub certified: Vec<Rational>,
}

/// Upper bounds on `‖(ψ** − φ**)(h)_l‖` over `‖h‖ ≤ 1`.
pub fn defect_bound(sys: &AFVilladsenSystem, i: usize, t: usize) -> Result<DefectBound> {
    let m = theta_maps(sys, i, t)?;
    let theta = compose(&sys.base, i, t)?;
    let nt = n_tilde(sys, i + t)?;
    let (nt_lo, nt_hi) = (&nt[i - 1], &nt[i + t - 1]);
    let n_lo = sys.base.n(i)?;
    let n_hi = sys.base.n(i + t)?;
    let r_lo: Vec<Rational> = nt_lo.iter().zip(&n_lo).map(|(a, b)| Rational::new(a.clone(), b.clone())).collect();
    let r_hi: Vec<Rational> = nt_hi.iter().zip(&n_hi).map(|(a, b)| Rational::new(a.clone(), b.clone())).collect();
    let monotone = r_lo.iter().all(|a| r_hi.iter().all(|b| a <= b));
    let (mut triangle, mut middle, mut closed) = (Vec::new(), Vec::new(), Vec::new());
    for l in 0..theta.cols() {
        let (mut tri, mut mid, mut pap) = (Rational::zero(), Rational::zero(), Rational::zero());
        for k in 0..theta.rows() {
            let tilde = Rational::new(nt_lo[k].clone(), nt_hi[l].clone());
            let plain = Rational::new(n_lo[k].clone(), n_hi[l].clone());
            let th = q(theta.get(k, l));
            let e = q(m.composed_eval.get(k, l));
            tri += (&tilde - &plain).abs() * &th + &tilde * &e;
            mid += (Rational::one() - &r_lo[k] / &r_hi[l]) * &plain * &th + &tilde * &e;
            pap += Rational::from_integer(2.into()) * &plain * &e;
        }
        triangle.push(tri);
        middle.push(mid);
        closed.push(pap);
    }
    let (form, certified) = if monotone { (BoundForm::Closed, closed.clone()) } else { (BoundForm::Triangle, triangle.clone()) };
    Ok(DefectBound { i, t, triangle, middle, closed, monotone, form, certified })
}

/// Composed evaluation multiset `E_{i,i+t-1;k,l}`, as `[k][l]` point lists.
pub fn composed_eval_points(sys: &AFVilladsenSystem, i: usize, t: usize) -> Result<Vec<Vec<Vec<Word>>>> {
    if t == 0 {
        return Err(Error::invalid("span t must be at least 1"));
    }
    let mut acc = sys.points(i)?;
    for s in 1..t {
        let step = sys.points(i + s)?;
        let total = sys.total(i + s)?;
        let layout = composed_layout(&sys.base, i, s)?;
        let mut next = vec![vec![Vec::new(); total.cols()]; acc.len()];
        for (k, row) in acc.iter().enumerate() {
            for l in 0..total.cols() {
                let out: &mut Vec<Word> = &mut next[k][l];
                for (mid, points) in row.iter().enumerate() {
                    let reps = total.get(mid, l).to_usize().unwrap_or(usize::MAX);
                    for x in points {
                        for _ in 0..reps {
                            out.push(x.clone());
                        }
                    }
                    for y in &step[mid][l] {
                        for block in &layout.blocks[k][mid] {
                            out.push(block.iter().map(|&p| y[p]).collect());
                        }
                    }
                    if out.len() > EVAL_POINT_CAP {
                        return Err(Error::ResourceCap(format!("more than {EVAL_POINT_CAP} composed evaluation points")));
                    }
                }
            }
        }
        acc = next;
    }
    Ok(acc)
}

/// A linear map between function spaces `⊕_k R^{X^{n_k}} → ⊕_l R^{X^{n_l}}`,
/// stored as sparse rows `rows[l][y]` over global source indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FunctionMap {
    pub source_sizes: Vec<usize>,
    pub rows: Vec<Vec<BTreeMap<usize, Rational>>>,
}

impl FunctionMap {
    fn offsets(&self) -> Vec<usize> {
        self.source_sizes
            .iter()
            .scan(0, |acc, &s| {
                let o = *acc;
                *acc += s;
                Some(o)
            })
            .collect()
    }

    pub fn apply(&self, h: &[Vec<Rational>]) -> Result<Vec<Vec<Rational>>> {
        if h.len() != self.source_sizes.len() || h.iter().zip(&self.source_sizes).any(|(v, &s)| v.len() != s) {
            return Err(Error::shape("function tuple does not match the source spaces"));
        }
        let flat: Vec<&Rational> = h.iter().flatten().collect();
        Ok(self
            .rows
            .iter()
            .map(|rows| rows.iter().map(|row| row.iter().map(|(&src, c)| c * flat[src]).sum()).collect())
            .collect())
    }

    pub fn is_unital(&self) -> bool {
        self.rows.iter().flatten().all(|row| row.values().sum::<Rational>().is_one())
    }

    pub fn is_positive(&self) -> bool {
        self.rows.iter().flatten().all(|row| row.values().all(|c| !c.is_negative()))
    }

    /// `(self − other)`, rowwise.
    pub fn minus(&self, other: &FunctionMap) -> Result<FunctionMap> {
        if self.source_sizes != other.source_sizes || self.rows.len() != other.rows.len() {
            return Err(Error::shape("maps have different spaces"));
        }
        let rows = self
            .rows
            .iter()
            .zip(&other.rows)
            .map(|(a, b)| {
                a.iter()
                    .zip(b)
                    .map(|(ra, rb)| {
                        let mut row = ra.clone();
                        for (&src, c) in rb {
                            *row.entry(src).or_insert_with(Rational::zero) -= c;
                        }
                        row.retain(|_, c| !c.is_zero());
                        row
                    })
                    .collect()
            })
            .collect();
        Ok(FunctionMap { source_sizes: self.source_sizes.clone(), rows })
    }

    /// `sup_{‖h‖ ≤ 1} ‖(self h)_l‖`, attained at a ±1 vertex: the largest row ℓ1 norm.
    pub fn norm_per_target(&self) -> Vec<Rational> {
        self.rows
            .iter()
            .map(|rows| {
                rows.iter()
                    .map(|row| row.values().map(Signed::abs).sum::<Rational>())
                    .fold(Rational::zero(), Rational::max)
            })
            .collect()
    }

    /// Scales source component `k` by `left[k]` and target component `l` by `right[l]`.
    pub fn scaled(&self, left: &[Rational], right: &[Rational]) -> FunctionMap {
        let offsets = self.offsets();
        let owner = |src: usize| offsets.partition_point(|&o| o <= src) - 1;
        let rows = self
            .rows
            .iter()
            .enumerate()
            .map(|(l, rows)| {
                rows.iter()
                    .map(|row| row.iter().map(|(&src, c)| (src, c * &left[owner(src)] * &right[l])).collect())
                    .collect()
            })
            .collect();
        FunctionMap { source_sizes: self.source_sizes.clone(), rows }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FunctionMaps {
    pub phi: FunctionMap,
    pub psi: FunctionMap,
}

fn index_of(word: &[Letter], x: usize) -> usize {
    word.iter().fold(0, |acc, &c| acc * x + c as usize)
}

fn word_of(mut idx: usize, len: usize, x: usize) -> Word {
    let mut w = vec![0; len];
    for slot in w.iter_mut().rev() {
        *slot = (idx % x) as Letter;
        idx /= x;
    }
    w
}

fn space_size(x: usize, n: usize) -> Result<usize> {
    u32::try_from(n)
        .ok()
        .and_then(|n| x.checked_pow(n))
        .filter(|&s| s <= FUNCTION_SPACE_CAP)
        .ok_or_else(|| {
            Error::ResourceCap(format!("C(X^{n}) with |X| = {x} exceeds {FUNCTION_SPACE_CAP} points; use defect_bound instead"))
        })
}

/// `φ**` and `ψ**` from level `i` to `i + t` as explicit maps.
pub fn phi_psi_function_maps(sys: &AFVilladsenSystem, i: usize, t: usize) -> Result<FunctionMaps> {
    let x = sys.x_size;
    let n_lo = sys.base.n_usize(i)?;
    let n_hi = sys.base.n_usize(i + t)?;
    let source_sizes = n_lo.iter().map(|&n| space_size(x, n)).collect::<Result<Vec<_>>>()?;
    let target_sizes = n_hi.iter().map(|&n| space_size(x, n)).collect::<Result<Vec<_>>>()?;
    let offsets: Vec<usize> = source_sizes
        .iter()
        .scan(0, |acc, &s| {
            let o = *acc;
            *acc += s;
            Some(o)
        })
        .collect();
    let layout = composed_layout(&sys.base, i, t)?;
    let points = composed_eval_points(sys, i, t)?;
    let nt = n_tilde(sys, i + t)?;
    let (nt_lo, nt_hi) = (&nt[i - 1], &nt[i + t - 1]);
    let n_lo_int = sys.base.n(i)?;
    let n_hi_int = sys.base.n(i + t)?;
    let mut phi_rows = Vec::with_capacity(n_hi.len());
    let mut psi_rows = Vec::with_capacity(n_hi.len());
    for (l, &size) in target_sizes.iter().enumerate() {
        let mut phi_l = Vec::with_capacity(size);
        let mut psi_l = Vec::with_capacity(size);
        for y_idx in 0..size {
            let y = word_of(y_idx, n_hi[l], x);
            let mut phi_row: BTreeMap<usize, Rational> = BTreeMap::new();
            let mut psi_row: BTreeMap<usize, Rational> = BTreeMap::new();
            for k in 0..n_lo.len() {
                let plain = Rational::new(n_lo_int[k].clone(), n_hi_int[l].clone());
                let tilde = Rational::new(nt_lo[k].clone(), nt_hi[l].clone());
                for block in &layout.blocks[k][l] {
                    let sub: Word = block.iter().map(|&p| y[p]).collect();
                    let src = offsets[k] + index_of(&sub, x);
                    *phi_row.entry(src).or_insert_with(Rational::zero) += &plain;
                    *psi_row.entry(src).or_insert_with(Rational::zero) += &tilde;
                }
                for p in &points[k][l] {
                    let src = offsets[k] + index_of(p, x);
                    *psi_row.entry(src).or_insert_with(Rational::zero) += &tilde;
                }
            }
            phi_l.push(phi_row);
            psi_l.push(psi_row);
        }
        phi_rows.push(phi_l);
        psi_rows.push(psi_l);
    }
    Ok(FunctionMaps {
        phi: FunctionMap { source_sizes: source_sizes.clone(), rows: phi_rows },
        psi: FunctionMap { source_sizes, rows: psi_rows },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Auto,
    Constant,
    Cone,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubsequenceOptions {
    pub mode: Mode,
    /// How many indices `i` to verify.
    pub terms: usize,
    #[serde(with = "exact::scalar")]
    pub tolerance: Rational,
    /// Known upper bound on `‖r‖`; otherwise the truncation value is used.
    #[serde(with = "exact::option")]
    pub r_cap: Option<Rational>,
    /// Allow cone mode when the limit looks constant.
    pub allow_constant: bool,
}

impl Default for SubsequenceOptions {
    fn default() -> Self {
        SubsequenceOptions { mode: Mode::Auto, terms: 4, tolerance: Rational::new(1.into(), 100.into()), r_cap: None, allow_constant: false }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubsequenceStep {
    pub i: usize,
    pub from: usize,
    pub to: usize,
    #[serde(with = "exact::vec")]
    pub bounds: Vec<Rational>,
    #[serde(with = "exact::scalar")]
    pub threshold: Rational,
    pub form: Option<BoundForm>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subsequence {
    pub mode: Mode,
    pub s: Vec<usize>,
    pub steps: Vec<SubsequenceStep>,
    #[serde(with = "exact::scalar")]
    pub r_norm: Rational,
    /// `‖r‖` came from the truncation rather than a supplied cap.
    pub truncation_conditional: bool,
}

fn resolve_mode(r: &RSequence, opts: &SubsequenceOptions) -> Result<Mode> {
    let conv = r.convergence;
    match (opts.mode, conv, r.limit) {
        (_, Convergence::Divergent, _) => Err(Error::ModeMismatch("the r sequence diverges at the truncation".into())),
        (_, Convergence::Undecided, _) => {
            Err(Error::ModeMismatch("convergence of the r sequence is undecided at the truncation".into()))
        }
        (Mode::Auto, _, LimitKind::Constant) => Ok(Mode::Constant),
        (Mode::Auto, _, _) => Ok(Mode::Cone),
        (Mode::Constant, _, LimitKind::Constant) => Ok(Mode::Constant),
        (Mode::Constant, _, _) => Err(Error::ModeMismatch("the limit of the r sequence is not constant".into())),
        (Mode::Cone, _, LimitKind::Constant) if !opts.allow_constant => {
            Err(Error::ModeMismatch("the limit looks constant; pass allow_constant to use cone mode".into()))
        }
        (Mode::Cone, _, _) => Ok(Mode::Cone),
    }
}

/// Greedy subsequence `(s_i)` meeting the mode's bound at every verified `i`.
pub fn select_subsequence(sys: &AFVilladsenSystem, depth: usize, opts: &SubsequenceOptions) -> Result<Subsequence> {
    let r = r_sequence(sys, depth, &opts.tolerance)?;
    let mode = resolve_mode(&r, opts)?;
    let (r_norm, truncation_conditional) = match &opts.r_cap {
        Some(cap) if *cap >= r.sup_norm => (cap.clone(), false),
        Some(cap) => return Err(Error::invalid(format!("r cap {cap} is below the computed ‖r‖ = {}", r.sup_norm))),
        None => (r.sup_norm.clone(), r.truncation),
    };
    let mut defects: HashMap<(usize, usize), DefectBound> = HashMap::new();
    let mut funds: HashMap<(usize, usize), Vec<Rational>> = HashMap::new();
    let found = match mode {
        Mode::Constant => {
            let mut found = None;
            'outer: for s1 in 1..depth {
                'pair: for s2 in s1 + 1..depth {
                    let mut s = vec![s1, s2];
                    let mut steps = Vec::new();
                    for i in 1..=opts.terms {
                        let from = s[i - 1];
                        let threshold = two_pow_neg(i);
                        let mut hit = None;
                        for to in s[i] + 1..=depth {
                            let key = (from, to - from);
                            if let Entry::Vacant(e) = defects.entry(key) {
                                e.insert(defect_bound(sys, from, to - from)?);
                            }
                            let d = &defects[&key];
                            if d.certified.iter().all(|b| *b < threshold) {
                                hit = Some(SubsequenceStep {
                                    i,
                                    from,
                                    to,
                                    bounds: d.certified.clone(),
                                    threshold: threshold.clone(),
                                    form: Some(d.form),
                                });
                                break;
                            }
                        }
                        match hit {
                            Some(step) => {
                                s.push(step.to);
                                steps.push(step);
                            }
                            None => continue 'pair,
                        }
                    }
                    found = Some((s, steps));
                    break 'outer;
                }
            }
            found
        }
        _ => {
            let mut found = None;
            'cone: for s1 in 1..depth {
                let mut s = vec![s1];
                let mut steps = Vec::new();
                for i in 1..=opts.terms {
                    let from = s[i - 1];
                    let threshold = two_pow_neg(i) / &r_norm;
                    let mut hit = None;
                    for to in from + 1..=depth {
                        let key = (from, to - from);
                        if let Entry::Vacant(e) = funds.entry(key) {
                            e.insert(fundamental_value(sys, from, to - from)?);
                        }
                        let v = &funds[&key];
                        if v.iter().all(|b| *b < threshold) {
                            hit = Some(SubsequenceStep { i, from, to, bounds: v.clone(), threshold: threshold.clone(), form: None });
                            break;
                        }
                    }
                    match hit {
                        Some(step) => {
                            s.push(step.to);
                            steps.push(step);
                        }
                        None => continue 'cone,
                    }
                }
                found = Some((s, steps));
                break;
            }
            found
        }
    };
    let (s, steps) = found.ok_or_else(|| Error::DepthExhausted {
        depth,
        reason: format!("no admissible subsequence with {} verified terms", opts.terms),
    })?;
    Ok(Subsequence { mode, s, steps, r_norm, truncation_conditional })
}

/// One step of the scaled intertwining, with both bound chains per target summand.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeltaStep {
    pub i: usize,
    pub from: usize,
    pub to: usize,
    /// `1 / r_{s_i,k}`.
    #[serde(with = "exact::vec")]
    pub scale_down: Vec<Rational>,
    /// `r_{s_i,k}`.
    #[serde(with = "exact::vec")]
    pub scale_up: Vec<Rational>,
    /// `Σ_k (n_{s_i,k}/ñ_{s_{i+1},l}) |E|`.
    #[serde(with = "exact::vec")]
    pub forward: Vec<Rational>,
    /// `Σ_k (ñ_{s_i,k}/n_{s_{i+1},l}) |E|`.
    #[serde(with = "exact::vec")]
    pub backward: Vec<Rational>,
    /// `Σ_k (n_{s_i,k}/n_{s_{i+1},l}) |E|`.
    #[serde(with = "exact::vec")]
    pub fundamental: Vec<Rational>,
    #[serde(with = "exact::scalar")]
    pub threshold: Rational,
    pub forward_holds: bool,
    pub backward_holds: bool,
}

pub fn delta_maps(sys: &AFVilladsenSystem, s_list: &[usize], r_norm: &Rational) -> Result<Vec<DeltaStep>> {
    let depth = *s_list.iter().max().ok_or_else(|| Error::invalid("empty subsequence"))?;
    if s_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("subsequence must be strictly increasing"));
    }
    let nt = n_tilde(sys, depth)?;
    let mut out = Vec::new();
    for (idx, w) in s_list.windows(2).enumerate() {
        let (from, to) = (w[0], w[1]);
        let i = idx + 1;
        let m = theta_maps(sys, from, to - from)?;
        let n_lo = sys.base.n(from)?;
        let n_hi = sys.base.n(to)?;
        let r_lo: Vec<Rational> = nt[from - 1].iter().zip(&n_lo).map(|(a, b)| Rational::new(a.clone(), b.clone())).collect();
        let mut forward = Vec::new();
        let mut backward = Vec::new();
        let mut fundamental = Vec::new();
        for l in 0..m.composed_eval.cols() {
            let (mut f, mut b, mut u) = (Rational::zero(), Rational::zero(), Rational::zero());
            for k in 0..m.composed_eval.rows() {
                let e = m.composed_eval.get(k, l);
                f += Rational::new(&n_lo[k] * e, nt[to - 1][l].clone());
                b += Rational::new(&nt[from - 1][k] * e, n_hi[l].clone());
                u += Rational::new(&n_lo[k] * e, n_hi[l].clone());
            }
            forward.push(f);
            backward.push(b);
            fundamental.push(u);
        }
        let threshold = two_pow_neg(i);
        let small = &threshold / r_norm;
        let forward_holds = forward.iter().zip(&fundamental).all(|(f, u)| f <= u && *u < small) && small <= threshold;
        let backward_holds = backward.iter().zip(&fundamental).all(|(b, u)| *b <= r_norm * u && r_norm * u < threshold);
        out.push(DeltaStep {
            i,
            from,
            to,
            scale_down: r_lo.iter().map(|r| r.recip()).collect(),
            scale_up: r_lo,
            forward,
            backward,
            fundamental,
            threshold,
            forward_holds,
            backward_holds,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntertwiningVerdict {
    /// Unital intertwining found: the trace simplexes agree.
    SimplexesIsomorphic,
    /// Scaled intertwining found: the tracial cones agree.
    ConesIsomorphic,
    /// No intertwining certified at this truncation.
    Undecided,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntertwiningReport {
    pub depth: usize,
    pub r: RSequence,
    pub fundamental_table: Vec<FundamentalCell>,
    pub subsequence: Option<Subsequence>,
    pub delta: Vec<DeltaStep>,
    pub failure: Option<String>,
    pub verdict: IntertwiningVerdict,
    /// Verdicts rest on a finite truncation of the sequences.
    pub truncation: bool,
}

/// Full diagnosis at `depth`. Mode mismatches and exhausted depth are
/// reported, not raised.
pub fn intertwine(sys: &AFVilladsenSystem, depth: usize, opts: &SubsequenceOptions) -> Result<IntertwiningReport> {
    let r = r_sequence(sys, depth, &opts.tolerance)?;
    let mut fundamental_table = Vec::new();
    for i in 1..depth {
        fundamental_table.extend(fundamental_limit_table(sys, i..=i, 1..=depth - i)?);
    }
    let (subsequence, failure) = match select_subsequence(sys, depth, opts) {
        Ok(s) => (Some(s), None),
        Err(e @ (Error::ModeMismatch(_) | Error::DepthExhausted { .. })) => (None, Some(e.to_string())),
        Err(e) => return Err(e),
    };
    let mut delta = Vec::new();
    let verdict = match &subsequence {
        Some(s) if s.mode == Mode::Constant => IntertwiningVerdict::SimplexesIsomorphic,
        Some(s) => {
            delta = delta_maps(sys, &s.s, &s.r_norm)?;
            if delta.iter().all(|d| d.forward_holds && d.backward_holds) {
                IntertwiningVerdict::ConesIsomorphic
            } else {
                IntertwiningVerdict::Undecided
            }
        }
        None => IntertwiningVerdict::Undecided,
    };
    let truncation = r.truncation;
    Ok(IntertwiningReport { depth, r, fundamental_table, subsequence, delta, failure, verdict, truncation })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::{int, q as rq};

    fn chain_af(thetas: &[i64], evals: &[i64], x: usize) -> AFVilladsenSystem {
        let base = DimensionSystem::from_multiplicities(
            vec![int(1)],
            thetas.iter().map(|&t| Matrix::from_rows(vec![vec![int(t)]]).unwrap()).collect(),
        )
        .unwrap();
        let e = evals.iter().map(|&c| Matrix::from_rows(vec![vec![int(c)]]).unwrap()).collect();
        AFVilladsenSystem::new(base, e, x, None).unwrap()
    }

    fn powers(depth: usize) -> AFVilladsenSystem {
        let thetas: Vec<i64> = (1..depth as u32).map(|i| 1i64 << i).collect();
        chain_af(&thetas, &vec![1; depth - 1], 2)
    }

    #[test]
    fn n_tilde_for_power_chain() {
        let nt = n_tilde(&powers(4), 4).unwrap();
        assert_eq!(nt, vec![vec![int(1)], vec![int(3)], vec![int(15)], vec![int(135)]]);
    }

    #[test]
    fn no_evaluations_gives_plain_dimensions() {
        let sys = chain_af(&[2, 3], &[], 2);
        assert_eq!(n_tilde(&sys, 3).unwrap(), vec![vec![int(1)], vec![int(2)], vec![int(6)]]);
        let r = r_sequence(&sys, 3, &rq(1, 100)).unwrap();
        assert!(r.r.iter().flatten().all(One::is_one));
        assert_eq!(r.limit, LimitKind::Constant);
    }

    #[test]
    fn composed_counts_for_two_steps() {
        let sys = chain_af(&[2, 4], &[1, 1], 2);
        let m = theta_maps(&sys, 1, 2).unwrap();
        assert_eq!(m.composed_total.get(0, 0), &int(15));
        assert_eq!(m.composed_eval.get(0, 0), &int(7));
    }

    #[test]
    fn r_values_and_divergence() {
        let r = r_sequence(&powers(5), 5, &rq(1, 100)).unwrap();
        assert_eq!(r.r[..4], [vec![rq(1, 1)], vec![rq(3, 2)], vec![rq(15, 8)], vec![rq(135, 64)]]);
        let div = chain_af(&[2, 2, 2, 2], &[1, 1, 1, 1], 2);
        let r = r_sequence(&div, 5, &rq(1, 100)).unwrap();
        assert_eq!(r.r[4], vec![rq(81, 16)]);
        assert_eq!(r.convergence, Convergence::Divergent);
    }

    #[test]
    fn fundamental_value_closed_form() {
        assert_eq!(fundamental_value(&powers(4), 1, 3).unwrap(), vec![rq(71, 64)]);
    }

    #[test]
    fn defect_forms_for_power_chain() {
        let d = defect_bound(&powers(4), 1, 3).unwrap();
        assert_eq!(d.closed, vec![rq(71, 32)]);
        assert_eq!(d.triangle, vec![rq(142, 135)]);
        assert_eq!(d.middle, d.triangle);
        assert_eq!(d.form, BoundForm::Closed);
    }

    #[test]
    fn zero_evaluations_have_zero_defect() {
        let sys = chain_af(&[2, 2, 2], &[], 2);
        assert!(defect_bound(&sys, 1, 2).unwrap().certified.iter().all(Zero::is_zero));
        let sub = select_subsequence(&sys, 8, &SubsequenceOptions { terms: 3, ..Default::default() });
        // the finite base has only 4 levels
        assert!(sub.is_err());
        let base = sys.base.clone().with_tail(vec![crate::dimension_system::TailStep { theta: Matrix::from_rows(vec![vec![int(2)]]).unwrap(), eval_counts: None }]);
        let sys = AFVilladsenSystem::without_evaluations(base, 2).unwrap();
        let sub = select_subsequence(&sys, 8, &SubsequenceOptions { terms: 3, ..Default::default() }).unwrap();
        assert_eq!(sub.s, vec![1, 2, 3, 4, 5]);
    }

    #[test]
    fn power_chain_subsequence() {
        let sys = powers(12);
        let sub = select_subsequence(&sys, 12, &SubsequenceOptions::default()).unwrap();
        assert_eq!(sub.mode, Mode::Constant);
        assert_eq!(sub.s, vec![3, 4, 5, 6, 7, 8]);
    }

    #[test]
    fn function_maps_are_unital() {
        let sys = chain_af(&[2], &[1], 2);
        let maps = phi_psi_function_maps(&sys, 1, 1).unwrap();
        assert!(maps.phi.is_unital() && maps.psi.is_unital());
        assert!(maps.phi.is_positive() && maps.psi.is_positive());
        // φ** of the indicator of letter 1 on X^1 averages both coordinates
        let h = vec![vec![rq(0, 1), rq(1, 1)]];
        let out = maps.phi.apply(&h).unwrap();
        assert_eq!(out[0], vec![rq(0, 1), rq(1, 2), rq(1, 2), rq(1, 1)]);
    }

    #[test]
    fn two_step_eval_points_count() {
        let sys = chain_af(&[2, 2], &[1, 1], 2);
        let pts = composed_eval_points(&sys, 1, 2).unwrap();
        let m = theta_maps(&sys, 1, 2).unwrap();
        assert_eq!(int(pts[0][0].len() as i64), *m.composed_eval.get(0, 0));
    }

    #[test]
    fn delta_identity_when_no_evaluations() {
        let sys = chain_af(&[2, 2, 2], &[], 2);
        let d = delta_maps(&sys, &[1, 2, 3], &rq(1, 1)).unwrap();
        assert!(d.iter().all(|s| s.scale_down.iter().all(One::is_one) && s.forward_holds && s.backward_holds));
    }
}
