//! Dimension-group data of a Bratteli diagram: order units `n_i`, multiplicity
//! matrices `theta_i`, their compositions, and the induced maps on scalar
//! trace tuples.
//!
//! Levels are numbered from 1. Summand indices are 0-based in the API and
//! 1-based in human-readable violation messages.

use std::borrow::Cow;
use std::fmt;

use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::{self, Int, Rational};
use crate::matrix::Matrix;

pub type IntMatrix = Matrix<Int>;
pub type RatMatrix = Matrix<Rational>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelSpec {
    /// Order unit `(n_{i,1}, ..., n_{i,j_i})`.
    #[serde(with = "exact::vec")]
    pub n: Vec<Int>,
    /// Multiplicity matrix to the next level, `j_i x j_{i+1}`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<IntMatrix>,
}

impl LevelSpec {
    pub fn j(&self) -> usize {
        self.n.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TailStep {
    pub theta: IntMatrix,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval_counts: Option<IntMatrix>,
}

/// Periodic continuation of the diagram: the map leaving level
/// `start_level + q` is `pattern[q mod p]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TailRule {
    pub start_level: usize,
    pub pattern: Vec<TailStep>,
}

impl TailRule {
    pub fn period(&self) -> usize {
        self.pattern.len()
    }

    pub fn step_for(&self, level: usize) -> Option<&TailStep> {
        if level < self.start_level || self.pattern.is_empty() {
            return None;
        }
        Some(&self.pattern[(level - self.start_level) % self.pattern.len()])
    }

    /// Product of one full period of multiplicity matrices.
    pub fn period_matrix(&self) -> Result<IntMatrix> {
        let mut it = self.pattern.iter();
        let first = it.next().ok_or_else(|| Error::invalid("empty tail pattern"))?;
        it.try_fold(first.theta.clone(), |acc, s| acc.try_mul(&s.theta))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DimensionSystem {
    pub levels: Vec<LevelSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tail: Option<TailRule>,
}

impl DimensionSystem {
    pub fn new(levels: Vec<LevelSpec>, tail: Option<TailRule>) -> Self {
        DimensionSystem { levels, tail }
    }

    /// Builds the levels from the first order unit, deriving every later
    /// order unit by unitality.
    pub fn from_multiplicities(n1: Vec<Int>, thetas: Vec<IntMatrix>) -> Result<Self> {
        let mut levels = vec![LevelSpec { n: n1, theta: None }];
        for theta in thetas {
            let last = levels.last_mut().expect("nonempty");
            let next = theta.left_apply(&last.n)?;
            last.theta = Some(theta);
            levels.push(LevelSpec { n: next, theta: None });
        }
        Ok(DimensionSystem { levels, tail: None })
    }

    /// Attaches a periodic tail starting at the last explicit level.
    pub fn with_tail(mut self, pattern: Vec<TailStep>) -> Self {
        self.tail = Some(TailRule { start_level: self.levels.len(), pattern });
        self
    }

    pub fn explicit_depth(&self) -> usize {
        self.levels.len()
    }

    /// `Some(depth)` for purely finite systems, `None` when a tail rule
    /// generates levels without bound.
    pub fn available_depth(&self) -> Option<usize> {
        match self.tail {
            Some(_) => None,
            None => Some(self.levels.len()),
        }
    }

    /// A view with at least `depth` levels, generated from the tail rule if
    /// needed.
    pub fn materialize(&self, depth: usize) -> Result<Cow<'_, DimensionSystem>> {
        if depth <= self.levels.len() {
            return Ok(Cow::Borrowed(self));
        }
        let Some(tail) = &self.tail else {
            return Err(Error::LevelOutOfRange { level: depth, available: self.levels.len() });
        };
        if self.levels.is_empty() {
            return Err(Error::invalid("system has no levels"));
        }
        let mut sys = self.clone();
        while sys.levels.len() < depth {
            let level = sys.levels.len();
            let step = tail
                .step_for(level)
                .ok_or_else(|| Error::invalid(format!("tail rule does not cover level {level}")))?;
            let last = sys.levels.last_mut().expect("nonempty");
            let next = step.theta.left_apply(&last.n)?;
            last.theta = Some(step.theta.clone());
            sys.levels.push(LevelSpec { n: next, theta: None });
        }
        Ok(Cow::Owned(sys))
    }

    fn spec(&self, level: usize) -> Result<&LevelSpec> {
        if level == 0 {
            return Err(Error::invalid("levels are numbered from 1"));
        }
        self.levels
            .get(level - 1)
            .ok_or(Error::LevelOutOfRange { level, available: self.levels.len() })
    }

    pub fn n(&self, level: usize) -> Result<Vec<Int>> {
        Ok(self.materialize(level)?.spec(level)?.n.clone())
    }

    pub fn j(&self, level: usize) -> Result<usize> {
        Ok(self.materialize(level)?.spec(level)?.j())
    }

    /// `theta_i`, the multiplicity matrix leaving `level`.
    pub fn theta(&self, level: usize) -> Result<IntMatrix> {
        let sys = self.materialize(level + 1)?;
        sys.spec(level)?
            .theta
            .clone()
            .ok_or_else(|| Error::invalid(format!("level {level} has no multiplicity matrix")))
    }

    /// `n_i` as usize word lengths, for building measures over coordinates.
    pub fn n_usize(&self, level: usize) -> Result<Vec<usize>> {
        self.n(level)?
            .iter()
            .map(|v| {
                usize::try_from(v.clone()).map_err(|_| {
                    Error::ResourceCap(format!("dimension {v} at level {level} does not fit in memory"))
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    EmptyLevel,
    NonPositiveDimension,
    NegativeMultiplicity,
    ShapeMismatch,
    MissingMultiplicity,
    DanglingMultiplicity,
    ZeroRow,
    ZeroColumn,
    Unitality,
    TailShape,
    TailMismatch,
    BlockCount,
    Cardinality,
    OutOfRange,
    Disjointness,
    Coverage,
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ViolationKind::EmptyLevel => "empty level",
            ViolationKind::NonPositiveDimension => "nonpositive dimension",
            ViolationKind::NegativeMultiplicity => "negative multiplicity",
            ViolationKind::ShapeMismatch => "shape mismatch",
            ViolationKind::MissingMultiplicity => "missing multiplicity matrix",
            ViolationKind::DanglingMultiplicity => "dangling multiplicity matrix",
            ViolationKind::ZeroRow => "zero row",
            ViolationKind::ZeroColumn => "zero column",
            ViolationKind::Unitality => "unitality",
            ViolationKind::TailShape => "tail shape",
            ViolationKind::TailMismatch => "tail mismatch",
            ViolationKind::BlockCount => "block count",
            ViolationKind::Cardinality => "cardinality",
            ViolationKind::OutOfRange => "out of range",
            ViolationKind::Disjointness => "disjointness",
            ViolationKind::Coverage => "coverage",
        };
        f.write_str(s)
    }
}

/// One violated invariant. Coordinates are 1-based.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub level: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l: Option<usize>,
    pub detail: String,
}

impl Violation {
    pub(crate) fn new(kind: ViolationKind, level: usize, k: Option<usize>, l: Option<usize>, detail: impl Into<String>) -> Self {
        Violation { kind, level, k: k.map(|v| v + 1), l: l.map(|v| v + 1), detail: detail.into() }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} at ({}", self.kind, self.level)?;
        if let Some(k) = self.k {
            write!(f, ",{k}")?;
        }
        if let Some(l) = self.l {
            write!(f, ",{l}")?;
        }
        write!(f, ")")?;
        if !self.detail.is_empty() {
            write!(f, ": {}", self.detail)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has(&self, kind: ViolationKind) -> bool {
        self.violations.iter().any(|v| v.kind == kind)
    }

    pub(crate) fn push(&mut self, v: Violation) {
        self.violations.push(v);
    }
}

fn check_theta_entries(theta: &IntMatrix, level: usize, report: &mut ValidationReport) {
    for (k, l, v) in theta.entries() {
        if v.is_negative() {
            report.push(Violation::new(ViolationKind::NegativeMultiplicity, level, Some(k), Some(l), format!("entry {v}")));
        }
    }
    for k in 0..theta.rows() {
        if theta.row(k).iter().all(|v| !v.is_positive()) {
            report.push(Violation::new(ViolationKind::ZeroRow, level, Some(k), None, "summand has no image"));
        }
    }
    for l in 0..theta.cols() {
        if theta.column(l).all(|v| !v.is_positive()) {
            report.push(Violation::new(ViolationKind::ZeroColumn, level, None, Some(l), "summand receives nothing"));
        }
    }
}

/// Lists every violated invariant; an empty report means the system is valid.
pub fn validate(system: &DimensionSystem) -> ValidationReport {
    let mut report = ValidationReport::default();
    let depth = system.levels.len();
    if depth == 0 {
        report.push(Violation::new(ViolationKind::EmptyLevel, 0, None, None, "system has no levels"));
        return report;
    }
    for (idx, spec) in system.levels.iter().enumerate() {
        let level = idx + 1;
        if spec.n.is_empty() {
            report.push(Violation::new(ViolationKind::EmptyLevel, level, None, None, "no summands"));
        }
        for (k, v) in spec.n.iter().enumerate() {
            if !v.is_positive() {
                report.push(Violation::new(ViolationKind::NonPositiveDimension, level, Some(k), None, format!("n = {v}")));
            }
        }
        let next = system.levels.get(idx + 1);
        match (&spec.theta, next) {
            (None, Some(_)) => {
                report.push(Violation::new(ViolationKind::MissingMultiplicity, level, None, None, ""));
            }
            (Some(_), None) if system.tail.is_none() => {
                report.push(Violation::new(ViolationKind::DanglingMultiplicity, level, None, None, "no next level"));
            }
            _ => {}
        }
        let (Some(theta), Some(next)) = (&spec.theta, next) else { continue };
        if theta.rows() != spec.j() || theta.cols() != next.j() {
            report.push(Violation::new(
                ViolationKind::ShapeMismatch,
                level,
                None,
                None,
                format!("theta is {}x{}, levels have {} and {} summands", theta.rows(), theta.cols(), spec.j(), next.j()),
            ));
            continue;
        }
        check_theta_entries(theta, level, &mut report);
        for l in 0..theta.cols() {
            let image: Int = (0..theta.rows()).map(|k| &spec.n[k] * theta.get(k, l)).sum();
            if image != next.n[l] {
                report.push(Violation::new(
                    ViolationKind::Unitality,
                    level,
                    None,
                    Some(l),
                    format!("sum_k n_k theta_(k,l) = {image}, next order unit has {}", next.n[l]),
                ));
            }
        }
        if let Some(step) = system.tail.as_ref().and_then(|t| t.step_for(level)) {
            if &step.theta != theta {
                report.push(Violation::new(ViolationKind::TailMismatch, level, None, None, "explicit matrix disagrees with tail rule"));
            }
        }
    }
    if let Some(tail) = &system.tail {
        validate_tail(system, tail, &mut report);
    }
    report
}

fn validate_tail(system: &DimensionSystem, tail: &TailRule, report: &mut ValidationReport) {
    let depth = system.levels.len();
    if tail.pattern.is_empty() {
        report.push(Violation::new(ViolationKind::TailShape, depth, None, None, "empty tail pattern"));
        return;
    }
    if tail.start_level == 0 || tail.start_level > depth {
        report.push(Violation::new(
            ViolationKind::TailShape,
            tail.start_level,
            None,
            None,
            format!("tail must start at an explicit level (1..={depth})"),
        ));
        return;
    }
    let j_start = system.levels[tail.start_level - 1].j();
    let p = tail.pattern.len();
    for (q, step) in tail.pattern.iter().enumerate() {
        let level = tail.start_level + q;
        let expected_rows = if q == 0 { j_start } else { tail.pattern[q - 1].theta.cols() };
        if step.theta.rows() != expected_rows {
            report.push(Violation::new(ViolationKind::TailShape, level, None, None, "pattern matrices do not chain"));
        }
        if q == p - 1 && step.theta.cols() != tail.pattern[0].theta.rows() {
            report.push(Violation::new(ViolationKind::TailShape, level, None, None, "pattern is not cyclic"));
        }
        if let Some(e) = &step.eval_counts {
            if e.rows() != step.theta.rows() || e.cols() != step.theta.cols() || !e.is_nonnegative() {
                report.push(Violation::new(ViolationKind::TailShape, level, None, None, "bad evaluation counts"));
            }
        }
        check_theta_entries(&step.theta, level, report);
    }
}

/// `theta_{i,i+t-1}`: the multiplicity matrix of the composed map from level
/// `i` to level `i + t`.
pub fn compose(system: &DimensionSystem, i: usize, t: usize) -> Result<IntMatrix> {
    if t == 0 {
        return Err(Error::invalid("span t must be at least 1"));
    }
    let sys = system.materialize(i + t)?;
    let mut acc = sys.theta(i)?;
    for level in i + 1..i + t {
        acc = acc.try_mul(&sys.theta(level)?)?;
    }
    Ok(acc)
}

/// Column-stochastic map from scalar trace tuples at level `i + span` to
/// level `i`: `lambda^{(i)} = M lambda^{(i+span)}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StochasticMatrix {
    pub from_level: usize,
    pub span: usize,
    pub entries: RatMatrix,
}

impl StochasticMatrix {
    pub fn apply(&self, lambda: &[Rational]) -> Result<Vec<Rational>> {
        self.entries.right_apply(lambda)
    }

    pub fn column_sums(&self) -> Vec<Rational> {
        (0..self.entries.cols()).map(|l| self.entries.column(l).sum()).collect()
    }

    pub fn is_column_stochastic(&self) -> bool {
        self.entries.entries().all(|(_, _, v)| !v.is_negative() && *v <= Rational::one())
            && self.column_sums().iter().all(One::is_one)
    }

    /// `M(i, t)` followed by `M(i + t, s)` gives `M(i, t + s)`.
    pub fn then(&self, deeper: &StochasticMatrix) -> Result<StochasticMatrix> {
        if deeper.from_level != self.from_level + self.span {
            return Err(Error::shape("pullback matrices are not adjacent"));
        }
        Ok(StochasticMatrix {
            from_level: self.from_level,
            span: self.span + deeper.span,
            entries: self.entries.try_mul(&deeper.entries)?,
        })
    }

    /// Largest l1 distance between two columns.
    pub fn l1_column_diameter(&self) -> Rational {
        let m = &self.entries;
        let mut best = Rational::zero();
        for a in 0..m.cols() {
            for b in a + 1..m.cols() {
                let d: Rational = (0..m.rows()).map(|k| (m.get(k, a) - m.get(k, b)).abs()).sum();
                best = best.max(d);
            }
        }
        best
    }
}

/// Entry `(k, l)` is `n_{i,k} theta_{i,i+t-1;k,l} / n_{i+t,l}`.
pub fn trace_pullback_matrix(system: &DimensionSystem, i: usize, t: usize) -> Result<StochasticMatrix> {
    let theta = compose(system, i, t)?;
    let sys = system.materialize(i + t)?;
    let n_lo = sys.n(i)?;
    let n_hi = sys.n(i + t)?;
    let entries = theta.map(|k, l, v| Rational::new(&n_lo[k] * v, n_hi[l].clone()));
    Ok(StochasticMatrix { from_level: i, span: t, entries })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimplicityVerdict {
    /// Every vertex below the horizon reaches all vertices of some later level
    /// (a truncation verdict).
    Simple,
    NotYetWitnessed,
    SimplePeriodic,
    NotSimplePeriodic,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimplicityWitness {
    pub level: usize,
    pub k: usize,
    pub span: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimplicityReport {
    pub verdict: SimplicityVerdict,
    pub horizon: usize,
    /// True when the verdict only speaks about the levels up to the horizon.
    pub truncation: bool,
    pub witnesses: Vec<SimplicityWitness>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_gap: Option<SimplicityWitness>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub primitive_exponent: Option<usize>,
}

fn positivity(m: &IntMatrix) -> Matrix<bool> {
    m.map(|_, _, v| v.is_positive())
}

/// Smallest `q` with `P^q` entrywise positive, if `P` is primitive.
pub fn primitive_exponent(period: &IntMatrix) -> Option<usize> {
    if period.rows() != period.cols() {
        return None;
    }
    let j = period.rows();
    let base = positivity(period);
    let bound = (j - 1) * (j - 1) + 1;
    let mut power = base.clone();
    for q in 1..=bound {
        if power.all_true() {
            return Some(q);
        }
        power = power.bool_mul(&base);
    }
    None
}

pub fn simplicity_verdict(system: &DimensionSystem, horizon: usize) -> Result<SimplicityReport> {
    let sys = system.materialize(horizon)?;
    let mut witnesses = Vec::new();
    let mut first_gap = None;
    for level in 1..horizon {
        let j = sys.j(level)?;
        // reach[k][l]: positivity pattern of the composed matrix
        let mut reach = positivity(&sys.theta(level)?);
        let mut found = vec![None; j];
        for span in 1..=horizon - level {
            if span > 1 {
                reach = reach.bool_mul(&positivity(&sys.theta(level + span - 1)?));
            }
            for (k, slot) in found.iter_mut().enumerate() {
                if slot.is_none() && reach.row(k).iter().all(|&b| b) {
                    *slot = Some(span);
                }
            }
        }
        for (k, slot) in found.into_iter().enumerate() {
            match slot {
                Some(span) => witnesses.push(SimplicityWitness { level, k, span }),
                None if first_gap.is_none() => first_gap = Some(SimplicityWitness { level, k, span: 0 }),
                None => {}
            }
        }
    }
    if horizon < 2 && first_gap.is_none() {
        first_gap = Some(SimplicityWitness { level: 1, k: 0, span: 0 });
    }
    if let Some(tail) = &system.tail {
        let exponent = primitive_exponent(&tail.period_matrix()?);
        let verdict = if exponent.is_some() { SimplicityVerdict::SimplePeriodic } else { SimplicityVerdict::NotSimplePeriodic };
        return Ok(SimplicityReport { verdict, horizon, truncation: false, witnesses, first_gap, primitive_exponent: exponent });
    }
    let verdict = if first_gap.is_none() { SimplicityVerdict::Simple } else { SimplicityVerdict::NotYetWitnessed };
    Ok(SimplicityReport { verdict, horizon, truncation: true, witnesses, first_gap, primitive_exponent: None })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UniqueTraceVerdict {
    UniqueTraceLikely,
    NotYetContracted,
    UniqueTracePeriodic,
    PeriodicUndecided,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiameterEntry {
    pub span: usize,
    #[serde(with = "exact::scalar")]
    pub diameter: Rational,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeriodicContraction {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub primitive_exponent: Option<usize>,
    /// Minimal cross ratio of the positive power of the period matrix. Its
    /// Birkhoff contraction coefficient is `< 1` exactly when this is `> 0`.
    #[serde(default, with = "exact::option", skip_serializing_if = "Option::is_none")]
    pub cross_ratio: Option<Rational>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiameterReport {
    pub horizon: usize,
    #[serde(with = "exact::scalar")]
    pub tolerance: Rational,
    pub diameters: Vec<DiameterEntry>,
    pub strictly_decreasing: bool,
    pub verdict: UniqueTraceVerdict,
    pub truncation: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub periodic: Option<PeriodicContraction>,
}

/// `min (a_kl a_k'l') / (a_k'l a_kl')` over all index pairs of a positive matrix.
pub fn min_cross_ratio(m: &IntMatrix) -> Option<Rational> {
    if m.entries().any(|(_, _, v)| !v.is_positive()) {
        return None;
    }
    let mut best: Option<Rational> = None;
    for k in 0..m.rows() {
        for k2 in 0..m.rows() {
            for l in 0..m.cols() {
                for l2 in 0..m.cols() {
                    let r = Rational::new(m.get(k, l) * m.get(k2, l2), m.get(k2, l) * m.get(k, l2));
                    best = Some(best.map_or(r.clone(), |b| b.min(r)));
                }
            }
        }
    }
    best
}

pub fn unique_trace_diagnostic(system: &DimensionSystem, horizon: usize, tol: &Rational) -> Result<DiameterReport> {
    let sys = system.materialize(horizon.max(1))?;
    let mut diameters = Vec::new();
    for span in 1..horizon {
        let d = trace_pullback_matrix(&sys, 1, span)?.l1_column_diameter();
        diameters.push(DiameterEntry { span, diameter: d });
    }
    let strictly_decreasing = diameters.windows(2).all(|w| w[1].diameter < w[0].diameter);
    if let Some(tail) = &system.tail {
        let period = tail.period_matrix()?;
        let exponent = primitive_exponent(&period);
        let cross_ratio = match exponent {
            Some(q) => {
                let mut power = period.clone();
                for _ in 1..q {
                    power = power.try_mul(&period)?;
                }
                min_cross_ratio(&power)
            }
            None => None,
        };
        let verdict = if cross_ratio.as_ref().is_some_and(Signed::is_positive) {
            UniqueTraceVerdict::UniqueTracePeriodic
        } else {
            UniqueTraceVerdict::PeriodicUndecided
        };
        return Ok(DiameterReport {
            horizon,
            tolerance: tol.clone(),
            diameters,
            strictly_decreasing,
            verdict,
            truncation: false,
            periodic: Some(PeriodicContraction { primitive_exponent: exponent, cross_ratio }),
        });
    }
    let verdict = if diameters.iter().any(|d| &d.diameter < tol) {
        UniqueTraceVerdict::UniqueTraceLikely
    } else {
        UniqueTraceVerdict::NotYetContracted
    };
    Ok(DiameterReport { horizon, tolerance: tol.clone(), diameters, strictly_decreasing, verdict, truncation: true, periodic: None })
}

/// Heuristic: the total dimension `sum_k n_{i,k}^2` grows strictly at every
/// level up to the horizon.
pub fn is_infinite_dimensional(system: &DimensionSystem, horizon: usize) -> Result<bool> {
    let sys = system.materialize(horizon)?;
    let totals = (1..=horizon)
        .map(|i| sys.n(i).map(|n| n.iter().map(|v| v * v).sum::<Int>()))
        .collect::<Result<Vec<_>>>()?;
    Ok(totals.windows(2).all(|w| w[1] > w[0]))
}

/// Unitality residuals for a composed span, exact: `sum_k n_{i,k} theta - n_{i+t,l}`.
pub fn unitality_residuals(system: &DimensionSystem, i: usize, t: usize) -> Result<Vec<Int>> {
    let theta = compose(system, i, t)?;
    let image = theta.left_apply(&system.n(i)?)?;
    let target = system.n(i + t)?;
    Ok(image.iter().zip(&target).map(|(a, b)| a - b).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::{int, q};

    fn im(rows: &[&[i64]]) -> IntMatrix {
        Matrix::from_rows(rows.iter().map(|r| r.iter().map(|&v| int(v)).collect()).collect()).unwrap()
    }

    fn ints(v: &[i64]) -> Vec<Int> {
        v.iter().map(|&x| int(x)).collect()
    }

    fn chain(thetas: &[i64]) -> DimensionSystem {
        DimensionSystem::from_multiplicities(ints(&[1]), thetas.iter().map(|&t| im(&[&[t]])).collect()).unwrap()
    }

    #[test]
    fn doubling_chain_is_valid() {
        let sys = chain(&[2, 2]);
        assert_eq!(sys.n(3).unwrap(), ints(&[4]));
        assert!(validate(&sys).is_valid());
    }

    #[test]
    fn two_summand_level_is_valid() {
        let sys = DimensionSystem::new(
            vec![
                LevelSpec { n: ints(&[1, 1]), theta: Some(im(&[&[1, 1], &[1, 1]])) },
                LevelSpec { n: ints(&[2, 2]), theta: None },
            ],
            None,
        );
        assert!(validate(&sys).is_valid());
    }

    #[test]
    fn unitality_violation_is_reported_with_coordinates() {
        let sys = DimensionSystem::new(
            vec![LevelSpec { n: ints(&[1]), theta: Some(im(&[&[2]])) }, LevelSpec { n: ints(&[3]), theta: None }],
            None,
        );
        let report = validate(&sys);
        assert_eq!(report.violations.len(), 1);
        let v = &report.violations[0];
        assert_eq!(v.kind, ViolationKind::Unitality);
        assert!(v.to_string().starts_with("unitality at (1,1)"), "{v}");
    }

    #[test]
    fn zero_rows_and_columns_rejected() {
        let sys = DimensionSystem::new(
            vec![
                LevelSpec { n: ints(&[1, 1]), theta: Some(im(&[&[1, 0], &[0, 0]])) },
                LevelSpec { n: ints(&[1, 0]), theta: None },
            ],
            None,
        );
        let report = validate(&sys);
        assert!(report.has(ViolationKind::ZeroRow));
        assert!(report.has(ViolationKind::ZeroColumn));
        assert!(report.has(ViolationKind::NonPositiveDimension));
    }

    #[test]
    fn negative_entry_and_shape_errors() {
        let sys = DimensionSystem::new(
            vec![LevelSpec { n: ints(&[1]), theta: Some(im(&[&[-1]])) }, LevelSpec { n: ints(&[1]), theta: None }],
            None,
        );
        assert!(validate(&sys).has(ViolationKind::NegativeMultiplicity));
        let bad = DimensionSystem::new(
            vec![LevelSpec { n: ints(&[1]), theta: Some(im(&[&[1, 1]])) }, LevelSpec { n: ints(&[2]), theta: None }],
            None,
        );
        assert!(validate(&bad).has(ViolationKind::ShapeMismatch));
    }

    #[test]
    fn compose_span_one_is_theta() {
        let sys = chain(&[2, 3]);
        assert_eq!(compose(&sys, 1, 1).unwrap(), im(&[&[2]]));
    }

    #[test]
    fn compose_two_summands() {
        let sys = DimensionSystem::from_multiplicities(
            ints(&[1, 1]),
            vec![im(&[&[1, 1], &[1, 1]]), im(&[&[2, 1], &[1, 2]])],
        )
        .unwrap();
        // oracle: direct matrix product
        assert_eq!(compose(&sys, 1, 2).unwrap(), im(&[&[3, 3], &[3, 3]]));
        assert_eq!(sys.n(3).unwrap(), ints(&[6, 6]));
        let m = trace_pullback_matrix(&sys, 1, 2).unwrap();
        assert!(m.entries.entries().all(|(_, _, v)| *v == q(1, 2)));
    }

    #[test]
    fn identity_multiplicities_compose_to_identity() {
        let id = im(&[&[1, 0], &[0, 1]]);
        let sys = DimensionSystem::from_multiplicities(ints(&[2, 3]), vec![id.clone(), id.clone(), id.clone()]).unwrap();
        assert_eq!(compose(&sys, 1, 3).unwrap(), id);
    }

    #[test]
    fn out_of_range_without_tail() {
        let sys = chain(&[2]);
        assert!(matches!(compose(&sys, 1, 2), Err(Error::LevelOutOfRange { .. })));
        assert!(matches!(compose(&sys, 1, 0), Err(Error::Invalid(_))));
    }

    #[test]
    fn tail_generates_levels() {
        let sys = chain(&[]).with_tail(vec![TailStep { theta: im(&[&[2]]), eval_counts: None }]);
        assert_eq!(sys.n(5).unwrap(), ints(&[16]));
        assert_eq!(compose(&sys, 2, 3).unwrap(), im(&[&[8]]));
        assert!(validate(&sys).is_valid());
    }

    #[test]
    fn single_summand_pullback_is_one() {
        let m = trace_pullback_matrix(&chain(&[2, 2]), 1, 2).unwrap();
        assert_eq!(m.entries, Matrix::from_rows(vec![vec![q(1, 1)]]).unwrap());
    }

    #[test]
    fn simplicity_all_positive() {
        let sys = DimensionSystem::from_multiplicities(ints(&[1, 2]), vec![im(&[&[1, 2], &[1, 1]]); 3]).unwrap();
        let r = simplicity_verdict(&sys, 4).unwrap();
        assert_eq!(r.verdict, SimplicityVerdict::Simple);
        assert!(r.truncation);
        assert!(r.witnesses.iter().all(|w| w.span == 1));
    }

    #[test]
    fn simplicity_periodic_cases() {
        let base = DimensionSystem::new(vec![LevelSpec { n: ints(&[1, 1]), theta: None }], None);
        let block = base.clone().with_tail(vec![TailStep { theta: im(&[&[1, 0], &[0, 1]]), eval_counts: None }]);
        assert_eq!(simplicity_verdict(&block, 4).unwrap().verdict, SimplicityVerdict::NotSimplePeriodic);
        let fib = base.with_tail(vec![TailStep { theta: im(&[&[1, 1], &[1, 0]]), eval_counts: None }]);
        let r = simplicity_verdict(&fib, 4).unwrap();
        assert_eq!(r.verdict, SimplicityVerdict::SimplePeriodic);
        // oracle: [[1,1],[1,0]]^2 = [[2,1],[1,1]] is the first positive power
        assert_eq!(r.primitive_exponent, Some(2));
    }

    #[test]
    fn diameters_decrease_for_symmetric_periodic() {
        let sys = DimensionSystem::new(vec![LevelSpec { n: ints(&[1, 1]), theta: None }], None)
            .with_tail(vec![TailStep { theta: im(&[&[2, 1], &[1, 2]]), eval_counts: None }]);
        let r = unique_trace_diagnostic(&sys, 4, &q(1, 100)).unwrap();
        // oracle: columns (2/3,1/3),(1/3,2/3) -> 2/3; (5/9,4/9),(4/9,5/9) -> 2/9; 14/27 vs 13/27 -> 2/27
        let d: Vec<_> = r.diameters.iter().map(|d| d.diameter.clone()).collect();
        assert_eq!(d, vec![q(2, 3), q(2, 9), q(2, 27)]);
        assert!(r.strictly_decreasing);
        assert_eq!(r.verdict, UniqueTraceVerdict::UniqueTracePeriodic);
    }

    #[test]
    fn single_summand_diameter_is_zero() {
        let r = unique_trace_diagnostic(&chain(&[2, 2, 2]), 4, &q(1, 10)).unwrap();
        assert!(r.diameters.iter().all(|d| d.diameter.is_zero()));
        assert_eq!(r.verdict, UniqueTraceVerdict::UniqueTraceLikely);
    }

    #[test]
    fn rank_one_stage_collapses_diameter() {
        let sys = DimensionSystem::from_multiplicities(ints(&[1, 1]), vec![im(&[&[1, 2], &[2, 1]]), im(&[&[1, 1], &[1, 1]])]).unwrap();
        let r = unique_trace_diagnostic(&sys, 3, &q(1, 10)).unwrap();
        assert!(r.diameters[1].diameter.is_zero());
    }

    #[test]
    fn infinite_dimensional_heuristic() {
        assert!(is_infinite_dimensional(&chain(&[2, 2]), 3).unwrap());
        let id = im(&[&[1]]);
        assert!(!is_infinite_dimensional(&DimensionSystem::from_multiplicities(ints(&[3]), vec![id]).unwrap(), 2).unwrap());
    }
}
