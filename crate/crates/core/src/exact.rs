//! Exact integers and rationals, and their text form.
//!
//! Rationals are written as `"p/q"` (or `"p"` when integral) and integers as
//! decimal strings, so no value ever passes through a float. Deserializers
//! also accept plain JSON integers.

use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::de::{self, Visitor};
use serde::{Deserializer, Serializer};

use crate::error::{Error, Result};

pub type Int = BigInt;
pub type Rational = BigRational;

pub fn int(v: i64) -> Int {
    Int::from(v)
}

pub fn q(num: i64, den: i64) -> Rational {
    Rational::new(Int::from(num), Int::from(den))
}

pub fn q_int(v: &Int) -> Rational {
    Rational::from_integer(v.clone())
}

pub fn parse_rational(s: &str) -> Result<Rational> {
    let s = s.trim();
    let (num, den) = match s.split_once('/') {
        Some((n, d)) => (n.trim(), d.trim()),
        None => (s, "1"),
    };
    let num = Int::from_str(num).map_err(|_| Error::Parse(s.to_string()))?;
    let den = Int::from_str(den).map_err(|_| Error::Parse(s.to_string()))?;
    if den.is_zero() {
        return Err(Error::Parse(s.to_string()));
    }
    Ok(Rational::new(num, den))
}

pub fn parse_int(s: &str) -> Result<Int> {
    Int::from_str(s.trim()).map_err(|_| Error::Parse(s.to_string()))
}

/// `ceil(x)` for a rational.
pub fn ceil(x: &Rational) -> Int {
    x.ceil().to_integer()
}

pub fn abs(x: &Rational) -> Rational {
    x.abs()
}

/// Sup norm of a vector.
pub fn sup_norm(v: &[Rational]) -> Rational {
    v.iter().map(Signed::abs).fold(Rational::zero(), |a, b| a.max(b))
}

pub fn is_probability_vector(v: &[Rational]) -> bool {
    v.iter().all(|x| !x.is_negative()) && v.iter().sum::<Rational>() == Rational::one()
}

/// Anything with an exact decimal text form.
pub trait ExactText: Sized {
    fn to_text(&self) -> String;
    fn from_text(s: &str) -> Result<Self>;
    fn from_i64(v: i64) -> Self;
    fn from_u64(v: u64) -> Self;
}

impl ExactText for Int {
    fn to_text(&self) -> String {
        self.to_string()
    }
    fn from_text(s: &str) -> Result<Self> {
        parse_int(s)
    }
    fn from_i64(v: i64) -> Self {
        Int::from(v)
    }
    fn from_u64(v: u64) -> Self {
        Int::from(v)
    }
}

impl ExactText for Rational {
    fn to_text(&self) -> String {
        self.to_string()
    }
    fn from_text(s: &str) -> Result<Self> {
        parse_rational(s)
    }
    fn from_i64(v: i64) -> Self {
        Rational::from_integer(Int::from(v))
    }
    fn from_u64(v: u64) -> Self {
        Rational::from_integer(Int::from(v))
    }
}

struct ExactVisitor<T>(std::marker::PhantomData<T>);

impl<T: ExactText> Visitor<'_> for ExactVisitor<T> {
    type Value = T;

    fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
        f.write_str("an integer or a string of the form \"p/q\"")
    }

    fn visit_str<E: de::Error>(self, v: &str) -> Result<T, E> {
        T::from_text(v).map_err(E::custom)
    }

    fn visit_i64<E: de::Error>(self, v: i64) -> Result<T, E> {
        Ok(T::from_i64(v))
    }

    fn visit_u64<E: de::Error>(self, v: u64) -> Result<T, E> {
        Ok(T::from_u64(v))
    }
}

/// `#[serde(with = "exact::scalar")]`
pub mod scalar {
    use super::*;

    pub fn serialize<T: ExactText, S: Serializer>(v: &T, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&v.to_text())
    }

    pub fn deserialize<'de, T: ExactText, D: Deserializer<'de>>(d: D) -> Result<T, D::Error> {
        d.deserialize_any(ExactVisitor(std::marker::PhantomData))
    }
}

/// Wrapper used to route nested containers through [`scalar`].
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Exact<T>(pub T);

impl<T: ExactText> serde::Serialize for Exact<T> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        scalar::serialize(&self.0, s)
    }
}

impl<'de, T: ExactText> serde::Deserialize<'de> for Exact<T> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        scalar::deserialize(d).map(Exact)
    }
}

/// `#[serde(with = "exact::vec")]`
pub mod vec {
    use super::*;
    use serde::{Deserialize, Serialize};

    pub fn serialize<T: ExactText + Clone, S: Serializer>(v: &[T], s: S) -> Result<S::Ok, S::Error> {
        v.iter().cloned().map(Exact).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, T: ExactText, D: Deserializer<'de>>(d: D) -> Result<Vec<T>, D::Error> {
        Ok(Vec::<Exact<T>>::deserialize(d)?.into_iter().map(|e| e.0).collect())
    }
}

/// `#[serde(with = "exact::vec2")]`
pub mod vec2 {
    use super::*;
    use serde::{Deserialize, Serialize};

    pub fn serialize<T: ExactText + Clone, S: Serializer>(
        v: &[Vec<T>],
        s: S,
    ) -> Result<S::Ok, S::Error> {
        v.iter()
            .map(|row| row.iter().cloned().map(Exact).collect::<Vec<_>>())
            .collect::<Vec<_>>()
            .serialize(s)
    }

    pub fn deserialize<'de, T: ExactText, D: Deserializer<'de>>(
        d: D,
    ) -> Result<Vec<Vec<T>>, D::Error> {
        Ok(Vec::<Vec<Exact<T>>>::deserialize(d)?
            .into_iter()
            .map(|row| row.into_iter().map(|e| e.0).collect())
            .collect())
    }
}

/// `#[serde(with = "exact::option")]`
pub mod option {
    use super::*;
    use serde::{Deserialize, Serialize};

    pub fn serialize<T: ExactText + Clone, S: Serializer>(
        v: &Option<T>,
        s: S,
    ) -> Result<S::Ok, S::Error> {
        v.clone().map(Exact).serialize(s)
    }

    pub fn deserialize<'de, T: ExactText, D: Deserializer<'de>>(
        d: D,
    ) -> Result<Option<T>, D::Error> {
        Ok(Option::<Exact<T>>::deserialize(d)?.map(|e| e.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_fractions_and_integers() {
        assert_eq!(parse_rational("3/6").unwrap(), q(1, 2));
        assert_eq!(parse_rational("-4").unwrap(), q(-4, 1));
        assert_eq!(parse_rational(" 7 / 3 ").unwrap(), q(7, 3));
    }

    #[test]
    fn zero_denominator_is_rejected() {
        assert_eq!(parse_rational("3/0"), Err(Error::Parse("3/0".into())));
        assert!(parse_rational("x/2").is_err());
    }

    #[test]
    fn text_form_round_trips() {
        let x = q(-22, 7);
        assert_eq!(x.to_text(), "-22/7");
        assert_eq!(Rational::from_text(&x.to_text()).unwrap(), x);
        assert_eq!(q(4, 2).to_text(), "2");
    }

    #[test]
    fn ceil_of_rationals() {
        assert_eq!(ceil(&q(40, 1)), int(40));
        assert_eq!(ceil(&q(81, 2)), int(41));
        assert_eq!(ceil(&q(-3, 2)), int(-1));
    }
}
