//! Test elements, modelled by their values on the extreme traces of one
//! summand. Coordinates and letters are 1-based on the wire.

use std::collections::BTreeMap;

use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};

use super::measure::{de_word, ser_word, Letter, Measure, Word};
use crate::error::{Error, Result};
use crate::exact::{self, Rational};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ValueFn {
    Constant {
        #[serde(with = "exact::scalar")]
        value: Rational,
    },
    /// 1 when the letter at `coord` equals `letter`.
    Indicator {
        #[serde(with = "coord")]
        coord: usize,
        #[serde(with = "letter")]
        letter: Letter,
    },
    /// Explicit values; unlisted words are 0.
    Table { entries: Vec<TableEntry> },
    /// `inner` applied to the subword at `coords`.
    Lifted {
        #[serde(with = "coords")]
        coords: Vec<usize>,
        inner: Box<ValueFn>,
    },
    Sum { terms: Vec<Term> },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableEntry {
    #[serde(serialize_with = "ser_word", deserialize_with = "de_word")]
    pub word: Word,
    #[serde(with = "exact::scalar")]
    pub value: Rational,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Term {
    #[serde(with = "exact::scalar")]
    pub coef: Rational,
    pub value: ValueFn,
}

impl ValueFn {
    pub fn constant(value: Rational) -> Self {
        ValueFn::Constant { value }
    }

    pub fn indicator(coord: usize, letter: Letter) -> Self {
        ValueFn::Indicator { coord, letter }
    }

    pub fn table(entries: impl IntoIterator<Item = (Word, Rational)>) -> Self {
        ValueFn::Table { entries: entries.into_iter().map(|(word, value)| TableEntry { word, value }).collect() }
    }

    pub fn eval(&self, word: &[Letter]) -> Result<Rational> {
        Ok(match self {
            ValueFn::Constant { value } => value.clone(),
            ValueFn::Indicator { coord, letter } => {
                let x = word.get(*coord).ok_or_else(|| Error::shape(format!("coordinate {} outside word", coord + 1)))?;
                if x == letter {
                    Rational::from_integer(1.into())
                } else {
                    Rational::zero()
                }
            }
            ValueFn::Table { entries } => {
                entries.iter().filter(|e| e.word == word).map(|e| e.value.clone()).sum()
            }
            ValueFn::Lifted { coords, inner } => {
                let sub = coords
                    .iter()
                    .map(|&c| word.get(c).copied().ok_or_else(|| Error::shape(format!("coordinate {} outside word", c + 1))))
                    .collect::<Result<Word>>()?;
                inner.eval(&sub)?
            }
            ValueFn::Sum { terms } => {
                let mut acc = Rational::zero();
                for t in terms {
                    acc += &t.coef * t.value.eval(word)?;
                }
                acc
            }
        })
    }

    /// An upper bound on `|value(w)|`; exact for all but sums.
    pub fn sup_bound(&self) -> Rational {
        match self {
            ValueFn::Constant { value } => value.abs(),
            ValueFn::Indicator { .. } => Rational::from_integer(1.into()),
            ValueFn::Table { entries } => {
                let mut merged: BTreeMap<&Word, Rational> = BTreeMap::new();
                for e in entries {
                    *merged.entry(&e.word).or_insert_with(Rational::zero) += &e.value;
                }
                merged.values().map(Signed::abs).fold(Rational::zero(), Rational::max)
            }
            ValueFn::Lifted { inner, .. } => inner.sup_bound(),
            ValueFn::Sum { terms } => terms.iter().map(|t| t.coef.abs() * t.value.sup_bound()).sum(),
        }
    }

    /// Checks that every coordinate and table word fits words of length `len`.
    pub fn check_len(&self, len: usize) -> Result<()> {
        match self {
            ValueFn::Constant { .. } => Ok(()),
            ValueFn::Indicator { coord, .. } if *coord < len => Ok(()),
            ValueFn::Indicator { coord, .. } => Err(Error::shape(format!("coordinate {} outside length {len}", coord + 1))),
            ValueFn::Table { entries } => match entries.iter().find(|e| e.word.len() != len) {
                Some(e) => Err(Error::shape(format!("table word of length {} for length {len}", e.word.len()))),
                None => Ok(()),
            },
            ValueFn::Lifted { coords, inner } => {
                if let Some(c) = coords.iter().find(|&&c| c >= len) {
                    return Err(Error::shape(format!("coordinate {} outside length {len}", c + 1)));
                }
                inner.check_len(coords.len())
            }
            ValueFn::Sum { terms } => terms.iter().try_for_each(|t| t.value.check_len(len)),
        }
    }

    /// `∫ value dμ`, exact. Products are only densified for tables.
    pub fn expect(&self, measure: &Measure) -> Result<Rational> {
        match self {
            ValueFn::Constant { value } => Ok(value * measure.total_mass()),
            ValueFn::Indicator { coord, letter } => measure.marginal(&[*coord])?.mass_of(&[*letter]),
            ValueFn::Lifted { coords, inner } => inner.expect(&measure.marginal(coords)?),
            ValueFn::Sum { terms } => {
                let mut acc = Rational::zero();
                for t in terms {
                    acc += &t.coef * t.value.expect(measure)?;
                }
                Ok(acc)
            }
            ValueFn::Table { entries } => {
                if let Some(w) = measure.dirac_word() {
                    return self.eval(&w);
                }
                // entries are usually far fewer than atoms
                let mut acc = Rational::zero();
                for e in entries {
                    acc += &e.value * measure.mass_of(&e.word)?;
                }
                Ok(acc)
            }
        }
    }
}

/// One component `b_k` of a test element, living on summand `summand`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Observable {
    #[serde(with = "coord")]
    pub summand: usize,
    pub len: usize,
    pub value: ValueFn,
}

impl Observable {
    pub fn new(summand: usize, len: usize, value: ValueFn) -> Result<Self> {
        value.check_len(len)?;
        Ok(Observable { summand, len, value })
    }

    pub fn sup_bound(&self) -> Rational {
        self.value.sup_bound()
    }
}

macro_rules! one_based_index {
    ($name:ident, $ty:ty) => {
        mod $name {
            use serde::{Deserialize, Deserializer, Serialize, Serializer};

            pub fn serialize<S: Serializer>(v: &$ty, s: S) -> Result<S::Ok, S::Error> {
                u64::try_from(*v).unwrap_or(u64::MAX).saturating_add(1).serialize(s)
            }

            pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<$ty, D::Error> {
                let v = u64::deserialize(d)?;
                v.checked_sub(1)
                    .and_then(|x| <$ty>::try_from(x).ok())
                    .ok_or_else(|| serde::de::Error::custom(format!("index {v} must be between 1 and {}", (<$ty>::MAX as u64).saturating_add(1))))
            }
        }
    };
}

one_based_index!(coord, usize);
one_based_index!(letter, u8);

mod coords {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[usize], s: S) -> Result<S::Ok, S::Error> {
        v.iter().map(|&c| c + 1).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<usize>, D::Error> {
        Vec::<usize>::deserialize(d)?
            .into_iter()
            .map(|c| c.checked_sub(1).ok_or_else(|| serde::de::Error::custom("coordinates are 1-based")))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::q;

    #[test]
    fn constant_expectation_is_value() {
        let u = Measure::uniform(3, 2).unwrap();
        assert_eq!(ValueFn::constant(q(1, 1)).expect(&u).unwrap(), q(1, 1));
    }

    #[test]
    fn indicator_on_product_matches_dense() {
        let a = Measure::dense(1, [(vec![0], q(1, 3)), (vec![1], q(2, 3))]).unwrap();
        let p = Measure::product(vec![Measure::uniform(2, 2).unwrap(), a]);
        let f = ValueFn::indicator(2, 1);
        let oracle: Rational = p.atoms().unwrap().iter().map(|(w, m)| m * f.eval(w).unwrap()).sum();
        assert_eq!(f.expect(&p).unwrap(), oracle);
        assert_eq!(oracle, q(2, 3));
    }

    #[test]
    fn table_and_lifted_agree_with_enumeration() {
        let p = Measure::dense(2, [(vec![0, 1], q(1, 2)), (vec![1, 1], q(1, 4)), (vec![1, 0], q(1, 4))]).unwrap();
        let f = ValueFn::Sum {
            terms: vec![
                Term { coef: q(1, 2), value: ValueFn::table([(vec![1, 1], q(-1, 1)), (vec![0, 1], q(1, 3))]) },
                Term {
                    coef: q(1, 2),
                    value: ValueFn::Lifted { coords: vec![1], inner: Box::new(ValueFn::table([(vec![0], q(1, 1))])) },
                },
            ],
        };
        let oracle: Rational = p.atoms().unwrap().iter().map(|(w, m)| m * f.eval(w).unwrap()).sum();
        assert_eq!(f.expect(&p).unwrap(), oracle);
        assert!(f.sup_bound() >= q(1, 1));
    }

    #[test]
    fn serde_one_based() {
        let obs = Observable::new(0, 2, ValueFn::indicator(1, 0)).unwrap();
        let text = serde_json::to_string(&obs).unwrap();
        assert_eq!(text, r#"{"summand":1,"len":2,"value":{"type":"indicator","coord":2,"letter":1}}"#);
        let back: Observable = serde_json::from_str(&text).unwrap();
        assert_eq!(back, obs);
        assert!(Observable::new(0, 1, ValueFn::indicator(1, 0)).is_err());
    }
}
