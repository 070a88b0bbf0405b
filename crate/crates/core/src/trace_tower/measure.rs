//! Exact probability measures on words over a finite alphabet.
//!
//! Traces on `C_0^{⊗n}` for a multi-matrix seed `C_0` with `m` summands are
//! exactly the probability measures on `{0,…,m-1}^n`; extreme traces are the
//! Dirac measures. Letters are 0-based in memory and 1-based on the wire.

use std::collections::{BTreeMap, HashMap};

use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::{self, Rational};

pub type Letter = u8;
pub type Word = Vec<Letter>;

/// Largest number of atoms a dense measure may hold.
pub const DENSE_ATOM_CAP: usize = 1 << 20;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DenseMeasure {
    len: usize,
    atoms: BTreeMap<Word, Rational>,
}

impl DenseMeasure {
    /// Zero masses are dropped; repeated words accumulate.
    pub fn new(len: usize, atoms: impl IntoIterator<Item = (Word, Rational)>) -> Result<Self> {
        let mut map: BTreeMap<Word, Rational> = BTreeMap::new();
        for (word, mass) in atoms {
            if word.len() != len {
                return Err(Error::shape(format!("atom of length {} in a measure on words of length {len}", word.len())));
            }
            if mass.is_negative() {
                return Err(Error::invalid(format!("negative mass {mass}")));
            }
            *map.entry(word).or_insert_with(Rational::zero) += mass;
        }
        map.retain(|_, m| !m.is_zero());
        if map.len() > DENSE_ATOM_CAP {
            return Err(Error::ResourceCap(format!("{} atoms exceed the dense cap {DENSE_ATOM_CAP}", map.len())));
        }
        Ok(DenseMeasure { len, atoms: map })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn atoms(&self) -> &BTreeMap<Word, Rational> {
        &self.atoms
    }

    pub fn total_mass(&self) -> Rational {
        self.atoms.values().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "MeasureRepr", into = "MeasureRepr")]
pub enum Measure {
    Dirac(Word),
    Dense(DenseMeasure),
    /// Independent factors on consecutive coordinate runs.
    Product(Vec<Measure>),
}

fn checked_atoms(sizes: impl IntoIterator<Item = usize>) -> Result<usize> {
    let mut total: usize = 1;
    for s in sizes {
        total = total
            .checked_mul(s)
            .filter(|&t| t <= DENSE_ATOM_CAP)
            .ok_or_else(|| Error::ResourceCap(format!("densifying would exceed {DENSE_ATOM_CAP} atoms")))?;
    }
    Ok(total)
}

impl Measure {
    pub fn dirac(word: Word) -> Self {
        Measure::Dirac(word)
    }

    /// Product of `len` uniform single-letter factors.
    pub fn uniform(len: usize, alphabet: usize) -> Result<Self> {
        if alphabet == 0 || alphabet > Letter::MAX as usize + 1 {
            return Err(Error::invalid(format!("alphabet size {alphabet} out of range")));
        }
        let letter = DenseMeasure::new(
            1,
            (0..alphabet).map(|a| (vec![a as Letter], Rational::new(1.into(), (alphabet as i64).into()))),
        )?;
        Ok(Measure::Product(vec![Measure::Dense(letter); len]).canonical())
    }

    pub fn dense(len: usize, atoms: impl IntoIterator<Item = (Word, Rational)>) -> Result<Self> {
        Ok(Measure::Dense(DenseMeasure::new(len, atoms)?).canonical())
    }

    pub fn product(factors: Vec<Measure>) -> Self {
        Measure::Product(factors).canonical()
    }

    pub fn len(&self) -> usize {
        match self {
            Measure::Dirac(w) => w.len(),
            Measure::Dense(d) => d.len,
            Measure::Product(fs) => fs.iter().map(Measure::len).sum(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn total_mass(&self) -> Rational {
        match self {
            Measure::Dirac(_) => Rational::one(),
            Measure::Dense(d) => d.total_mass(),
            Measure::Product(fs) => fs.iter().map(Measure::total_mass).product(),
        }
    }

    /// The word if this is a point mass.
    pub fn dirac_word(&self) -> Option<Word> {
        match self {
            Measure::Dirac(w) => Some(w.clone()),
            Measure::Dense(d) if d.atoms.len() == 1 => d.atoms.keys().next().cloned(),
            Measure::Dense(_) => None,
            Measure::Product(fs) => {
                let mut out = Word::with_capacity(self.len());
                for f in fs {
                    out.extend(f.dirac_word()?);
                }
                Some(out)
            }
        }
    }

    pub fn is_dirac(&self) -> bool {
        self.dirac_word().is_some()
    }

    pub fn max_letter(&self) -> Option<Letter> {
        match self {
            Measure::Dirac(w) => w.iter().copied().max(),
            Measure::Dense(d) => d.atoms.keys().flat_map(|w| w.iter().copied()).max(),
            Measure::Product(fs) => fs.iter().filter_map(Measure::max_letter).max(),
        }
    }

    /// Number of atoms after densifying, or a resource-cap error.
    pub fn support_size(&self) -> Result<usize> {
        match self {
            Measure::Dirac(_) => Ok(1),
            Measure::Dense(d) => Ok(d.atoms.len()),
            Measure::Product(fs) => checked_atoms(fs.iter().map(Measure::support_size).collect::<Result<Vec<_>>>()?),
        }
    }

    pub fn atoms(&self) -> Result<BTreeMap<Word, Rational>> {
        match self {
            Measure::Dirac(w) => Ok(BTreeMap::from([(w.clone(), Rational::one())])),
            Measure::Dense(d) => Ok(d.atoms.clone()),
            Measure::Product(fs) => {
                self.support_size()?;
                let mut acc: BTreeMap<Word, Rational> = BTreeMap::from([(Word::new(), Rational::one())]);
                for f in fs {
                    let fa = f.atoms()?;
                    let mut next = BTreeMap::new();
                    for (w, p) in &acc {
                        for (v, r) in &fa {
                            let mut word = w.clone();
                            word.extend_from_slice(v);
                            next.insert(word, p * r);
                        }
                    }
                    acc = next;
                }
                Ok(acc)
            }
        }
    }

    pub fn to_dense(&self) -> Result<DenseMeasure> {
        DenseMeasure::new(self.len(), self.atoms()?)
    }

    /// Mass of one word, without densifying products.
    pub fn mass_of(&self, word: &[Letter]) -> Result<Rational> {
        if word.len() != self.len() {
            return Err(Error::shape(format!("word of length {} for a measure of length {}", word.len(), self.len())));
        }
        Ok(match self {
            Measure::Dirac(w) => {
                if w.as_slice() == word {
                    Rational::one()
                } else {
                    Rational::zero()
                }
            }
            Measure::Dense(d) => d.atoms.get(word).cloned().unwrap_or_else(Rational::zero),
            Measure::Product(fs) => {
                let mut offset = 0;
                let mut mass = Rational::one();
                for f in fs {
                    let n = f.len();
                    mass *= f.mass_of(&word[offset..offset + n])?;
                    if mass.is_zero() {
                        break;
                    }
                    offset += n;
                }
                mass
            }
        })
    }

    /// Pushforward under `w ↦ (w[c_0], w[c_1], …)`.
    pub fn marginal(&self, coords: &[usize]) -> Result<Measure> {
        let len = self.len();
        let mut seen = vec![false; len];
        for &c in coords {
            if c >= len {
                return Err(Error::shape(format!("coordinate {} outside a word of length {len}", c + 1)));
            }
            if std::mem::replace(&mut seen[c], true) {
                return Err(Error::shape(format!("coordinate {} repeated", c + 1)));
            }
        }
        if coords.len() == len && coords.iter().enumerate().all(|(a, &b)| a == b) {
            return Ok(self.clone());
        }
        match self {
            Measure::Dirac(w) => Ok(Measure::Dirac(coords.iter().map(|&c| w[c]).collect())),
            Measure::Dense(d) => Measure::dense(
                coords.len(),
                d.atoms.iter().map(|(w, p)| (coords.iter().map(|&c| w[c]).collect(), p.clone())),
            ),
            Measure::Product(fs) => product_marginal(fs, coords),
        }
    }

    /// Convex combination; weights must be nonnegative and sum to 1.
    pub fn mix(terms: &[(Rational, Measure)]) -> Result<Measure> {
        let Some((_, first)) = terms.first() else {
            return Err(Error::invalid("empty convex combination"));
        };
        let len = first.len();
        let mut total = Rational::zero();
        let mut order: Vec<Measure> = Vec::new();
        let mut weights: HashMap<Measure, Rational> = HashMap::new();
        for (w, m) in terms {
            if w.is_negative() {
                return Err(Error::invalid(format!("negative weight {w}")));
            }
            if m.len() != len {
                return Err(Error::shape("mixing measures on words of different lengths"));
            }
            total += w;
            if w.is_zero() {
                continue;
            }
            let m = m.clone().canonical();
            match weights.get_mut(&m) {
                Some(acc) => *acc += w,
                None => {
                    weights.insert(m.clone(), w.clone());
                    order.push(m);
                }
            }
        }
        if !total.is_one() {
            return Err(Error::invalid(format!("weights sum to {total}, not 1")));
        }
        if order.len() == 1 {
            return Ok(order.pop().expect("one group"));
        }
        let mut acc: BTreeMap<Word, Rational> = BTreeMap::new();
        for m in &order {
            let w = &weights[m];
            for (word, p) in m.atoms()? {
                *acc.entry(word).or_insert_with(Rational::zero) += p * w;
            }
            if acc.len() > DENSE_ATOM_CAP {
                return Err(Error::ResourceCap(format!("mixture exceeds {DENSE_ATOM_CAP} atoms")));
            }
        }
        Measure::dense(len, acc)
    }

    /// Equality as measures, regardless of representation.
    pub fn equivalent(&self, other: &Measure) -> Result<bool> {
        if self.len() != other.len() {
            return Ok(false);
        }
        let (a, b) = (self.clone().canonical(), other.clone().canonical());
        if a == b {
            return Ok(true);
        }
        if let (Some(x), Some(y)) = (a.dirac_word(), b.dirac_word()) {
            return Ok(x == y);
        }
        Ok(a.atoms()? == b.atoms()?)
    }

    /// Flattens products, merges adjacent point masses and collapses
    /// single-atom dense measures.
    pub fn canonical(self) -> Measure {
        match self {
            Measure::Dirac(_) => self,
            Measure::Dense(d) => {
                if d.atoms.len() == 1 && d.atoms.values().all(One::is_one) {
                    Measure::Dirac(d.atoms.into_keys().next().expect("one atom"))
                } else {
                    Measure::Dense(d)
                }
            }
            Measure::Product(fs) => {
                let mut out: Vec<Measure> = Vec::with_capacity(fs.len());
                let push = |m: Measure, out: &mut Vec<Measure>| match (out.last_mut(), m) {
                    (Some(Measure::Dirac(prev)), Measure::Dirac(w)) => prev.extend(w),
                    (_, m) => out.push(m),
                };
                for f in fs {
                    match f.canonical() {
                        Measure::Product(inner) => {
                            for g in inner {
                                push(g, &mut out);
                            }
                        }
                        m => push(m, &mut out),
                    }
                }
                match out.len() {
                    0 => Measure::Dirac(Word::new()),
                    1 => out.pop().expect("one factor"),
                    _ => Measure::Product(out),
                }
            }
        }
    }

    /// Checks exact normalization of every factor and returns the total mass.
    pub fn check_normalized(&self) -> Result<()> {
        match self {
            Measure::Dirac(_) => Ok(()),
            Measure::Dense(d) => {
                let total = d.total_mass();
                if total.is_one() {
                    Ok(())
                } else {
                    Err(Error::invalid(format!("dense measure has mass {total}")))
                }
            }
            Measure::Product(fs) => fs.iter().try_for_each(Measure::check_normalized),
        }
    }
}

fn product_marginal(fs: &[Measure], coords: &[usize]) -> Result<Measure> {
    let mut starts = Vec::with_capacity(fs.len());
    let mut offset = 0;
    for f in fs {
        starts.push(offset);
        offset += f.len();
    }
    let locate = |c: usize| {
        let f = starts.partition_point(|&s| s <= c) - 1;
        (f, c - starts[f])
    };
    // maximal runs of coordinates inside one factor
    let mut runs: Vec<(usize, Vec<usize>)> = Vec::new();
    for &c in coords {
        let (f, local) = locate(c);
        match runs.last_mut() {
            Some((g, locals)) if *g == f => locals.push(local),
            _ => runs.push((f, vec![local])),
        }
    }
    let mut used = vec![false; fs.len()];
    if runs.iter().all(|(f, _)| !std::mem::replace(&mut used[*f], true)) {
        let factors = runs.iter().map(|(f, locals)| fs[*f].marginal(locals)).collect::<Result<Vec<_>>>()?;
        return Ok(Measure::product(factors));
    }
    // a factor is visited twice: densify just the involved factors
    let mut per_factor: BTreeMap<usize, Vec<(usize, usize)>> = BTreeMap::new();
    for (pos, &c) in coords.iter().enumerate() {
        let (f, local) = locate(c);
        per_factor.entry(f).or_default().push((pos, local));
    }
    let mut factors = Vec::new();
    let mut positions = Vec::new();
    for (f, entries) in &per_factor {
        let locals: Vec<usize> = entries.iter().map(|&(_, l)| l).collect();
        factors.push(fs[*f].marginal(&locals)?);
        positions.extend(entries.iter().map(|&(p, _)| p));
    }
    let joint = Measure::Product(factors).atoms()?;
    Measure::dense(
        coords.len(),
        joint.into_iter().map(|(w, p)| {
            let mut out = vec![0; coords.len()];
            for (src, &dst) in positions.iter().enumerate() {
                out[dst] = w[src];
            }
            (out, p)
        }),
    )
}

/// 1-based letters on the wire.
mod one_based {
    use super::{Letter, Word};
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(w: &Word, s: S) -> Result<S::Ok, S::Error> {
        w.iter().map(|&l| u16::from(l) + 1).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Word, D::Error> {
        Vec::<u16>::deserialize(d)?
            .into_iter()
            .map(|l| {
                l.checked_sub(1)
                    .and_then(|v| Letter::try_from(v).ok())
                    .ok_or_else(|| serde::de::Error::custom(format!("letter {l} outside 1..=256")))
            })
            .collect()
    }
}

pub(crate) use one_based::{deserialize as de_word, serialize as ser_word};

#[derive(Serialize, Deserialize)]
struct AtomRepr {
    #[serde(with = "one_based")]
    word: Word,
    #[serde(with = "exact::scalar")]
    mass: Rational,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
enum MeasureRepr {
    Dirac {
        #[serde(with = "one_based")]
        word: Word,
    },
    Dense {
        len: usize,
        atoms: Vec<AtomRepr>,
    },
    Product {
        factors: Vec<Measure>,
    },
    Uniform {
        len: usize,
        alphabet: usize,
    },
}

impl TryFrom<MeasureRepr> for Measure {
    type Error = Error;

    fn try_from(repr: MeasureRepr) -> Result<Self> {
        let m = match repr {
            MeasureRepr::Dirac { word } => Measure::Dirac(word),
            MeasureRepr::Dense { len, atoms } => Measure::dense(len, atoms.into_iter().map(|a| (a.word, a.mass)))?,
            MeasureRepr::Product { factors } => Measure::product(factors),
            MeasureRepr::Uniform { len, alphabet } => Measure::uniform(len, alphabet)?,
        };
        m.check_normalized()?;
        Ok(m)
    }
}

impl From<Measure> for MeasureRepr {
    fn from(m: Measure) -> Self {
        match m {
            Measure::Dirac(word) => MeasureRepr::Dirac { word },
            Measure::Dense(d) => MeasureRepr::Dense {
                len: d.len,
                atoms: d.atoms.into_iter().map(|(word, mass)| AtomRepr { word, mass }).collect(),
            },
            Measure::Product(factors) => MeasureRepr::Product { factors },
        }
    }
}
