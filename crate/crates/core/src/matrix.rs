//! Dense row-major matrices over exact scalars.
//!
//! Orientation follows the multiplicity convention everywhere: entry `(k, l)`
//! connects source summand `k` to target summand `l`, and composition is the
//! ordinary product `A * B` (first `A`, then `B`).

use std::ops::{Add, Mul};

use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::exact::{Exact, ExactText};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Clone> Matrix<T> {
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Matrix { rows, cols, data }
    }

    pub fn from_rows(rows: Vec<Vec<T>>) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if r == 0 || c == 0 {
            return Err(Error::shape("matrix must have at least one row and one column"));
        }
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::shape("ragged matrix rows"));
        }
        Ok(Matrix { rows: r, cols: c, data: rows.into_iter().flatten().collect() })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> &T {
        &self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> impl Iterator<Item = &T> + '_ {
        (0..self.rows).map(move |r| self.get(r, c))
    }

    pub fn to_rows(&self) -> Vec<Vec<T>> {
        (0..self.rows).map(|r| self.row(r).to_vec()).collect()
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, &T)> + '_ {
        self.data.iter().enumerate().map(|(i, v)| (i / self.cols, i % self.cols, v))
    }

    pub fn map<U: Clone>(&self, mut f: impl FnMut(usize, usize, &T) -> U) -> Matrix<U> {
        Matrix::from_fn(self.rows, self.cols, |r, c| f(r, c, self.get(r, c)))
    }

    pub fn transpose(&self) -> Self {
        Matrix::from_fn(self.cols, self.rows, |r, c| self.get(c, r).clone())
    }
}

impl<T> Matrix<T>
where
    T: Clone + Zero + One,
{
    pub fn identity(n: usize) -> Self {
        Matrix::from_fn(n, n, |r, c| if r == c { T::one() } else { T::zero() })
    }
}

impl<T> Matrix<T>
where
    T: Clone + Zero + for<'a> Add<&'a T, Output = T>,
    for<'a> &'a T: Mul<&'a T, Output = T>,
{
    pub fn try_mul(&self, rhs: &Matrix<T>) -> Result<Matrix<T>> {
        if self.cols != rhs.rows {
            return Err(Error::shape(format!(
                "cannot compose {}x{} with {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        Ok(Matrix::from_fn(self.rows, rhs.cols, |r, c| {
            (0..self.cols).fold(T::zero(), |acc, m| acc + &(self.get(r, m) * rhs.get(m, c)))
        }))
    }

    /// Row vector times matrix: `out[l] = sum_k v[k] * self[k][l]`.
    pub fn left_apply(&self, v: &[T]) -> Result<Vec<T>> {
        if v.len() != self.rows {
            return Err(Error::shape(format!("vector of length {} against {} rows", v.len(), self.rows)));
        }
        Ok((0..self.cols)
            .map(|c| (0..self.rows).fold(T::zero(), |acc, r| acc + &(&v[r] * self.get(r, c))))
            .collect())
    }

    /// Matrix times column vector: `out[k] = sum_l self[k][l] * v[l]`.
    pub fn right_apply(&self, v: &[T]) -> Result<Vec<T>> {
        if v.len() != self.cols {
            return Err(Error::shape(format!("vector of length {} against {} columns", v.len(), self.cols)));
        }
        Ok((0..self.rows)
            .map(|r| (0..self.cols).fold(T::zero(), |acc, c| acc + &(self.get(r, c) * &v[c])))
            .collect())
    }
}

impl<T: Signed + Clone> Matrix<T> {
    pub fn is_nonnegative(&self) -> bool {
        self.data.iter().all(|v| !v.is_negative())
    }
}

impl Matrix<bool> {
    pub fn bool_mul(&self, rhs: &Matrix<bool>) -> Matrix<bool> {
        Matrix::from_fn(self.rows, rhs.cols, |r, c| (0..self.cols).any(|m| *self.get(r, m) && *rhs.get(m, c)))
    }

    pub fn all_true(&self) -> bool {
        self.data.iter().all(|&b| b)
    }
}

impl<T: Clone + ExactText> Serialize for Matrix<T> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        (0..self.rows)
            .map(|r| self.row(r).iter().cloned().map(Exact).collect::<Vec<_>>())
            .collect::<Vec<_>>()
            .serialize(s)
    }
}

impl<'de, T: Clone + ExactText> Deserialize<'de> for Matrix<T> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows: Vec<Vec<Exact<T>>> = Vec::deserialize(d)?;
        Matrix::from_rows(rows.into_iter().map(|r| r.into_iter().map(|e| e.0).collect()).collect())
            .map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::{int, Int};

    fn m(rows: &[&[i64]]) -> Matrix<Int> {
        Matrix::from_rows(rows.iter().map(|r| r.iter().map(|&v| int(v)).collect()).collect()).unwrap()
    }

    #[test]
    fn product_matches_hand_computation() {
        let a = m(&[&[1, 1], &[1, 1]]);
        let b = m(&[&[2, 1], &[1, 2]]);
        assert_eq!(a.try_mul(&b).unwrap(), m(&[&[3, 3], &[3, 3]]));
    }

    #[test]
    fn mismatched_product_fails() {
        let a = m(&[&[1, 2, 3]]);
        assert!(a.try_mul(&a).is_err());
    }

    #[test]
    fn left_apply_is_row_vector_product() {
        let a = m(&[&[1, 2], &[3, 4]]);
        assert_eq!(a.left_apply(&[int(1), int(10)]).unwrap(), vec![int(31), int(42)]);
        assert_eq!(a.right_apply(&[int(1), int(10)]).unwrap(), vec![int(21), int(43)]);
    }

    #[test]
    fn ragged_rows_rejected() {
        assert!(Matrix::from_rows(vec![vec![int(1)], vec![int(1), int(2)]]).is_err());
    }
}
