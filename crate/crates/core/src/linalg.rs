//! Small dense determinants.
//!
//! Floating point matrices use LU with partial pivoting. Exact rings
//! (integers, big integers, rationals) use fraction-free Bareiss elimination,
//! which is what the tridiagonal identity is checked against.

use std::ops::{Index, IndexMut};

use num_traits::{Num, Signed};
use serde::{Deserialize, Serialize};

use crate::scalar::Real;

/// Row-major square matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SquareMatrix<T> {
    n: usize,
    data: Vec<T>,
}

impl<T: Clone> SquareMatrix<T> {
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                data.push(f(i, j));
            }
        }
        Self { n, data }
    }

    pub fn from_rows(rows: Vec<Vec<T>>) -> Self {
        let n = rows.len();
        assert!(rows.iter().all(|r| r.len() == n), "matrix must be square");
        Self {
            n,
            data: rows.into_iter().flatten().collect(),
        }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn rows(&self) -> Vec<Vec<T>> {
        self.data.chunks(self.n.max(1)).map(|r| r.to_vec()).collect()
    }

    /// Leading `k × k` block.
    pub fn leading(&self, k: usize) -> Self {
        Self::from_fn(k, |i, j| self[(i, j)].clone())
    }

    pub fn map<U: Clone>(&self, f: impl Fn(&T) -> U) -> SquareMatrix<U> {
        SquareMatrix {
            n: self.n,
            data: self.data.iter().map(f).collect(),
        }
    }
}

impl<T> Index<(usize, usize)> for SquareMatrix<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.n + j]
    }
}

impl<T> IndexMut<(usize, usize)> for SquareMatrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.n + j]
    }
}

impl<T: Real> SquareMatrix<T> {
    pub fn neg(&self) -> Self {
        self.map(|&x| -x)
    }

    /// Determinant by LU decomposition with partial pivoting.
    pub fn det(&self) -> T {
        let n = self.n;
        let mut a = self.data.clone();
        let mut det = T::one();
        for col in 0..n {
            let pivot = (col..n)
                .max_by(|&r, &s| {
                    a[r * n + col]
                        .abs()
                        .partial_cmp(&a[s * n + col].abs())
                        .unwrap()
                })
                .unwrap();
            if a[pivot * n + col] == T::zero() {
                return T::zero();
            }
            if pivot != col {
                for j in 0..n {
                    a.swap(pivot * n + j, col * n + j);
                }
                det = -det;
            }
            let p = a[col * n + col];
            det = det * p;
            for r in col + 1..n {
                let factor = a[r * n + col] / p;
                if factor != T::zero() {
                    for j in col..n {
                        let v = a[col * n + j];
                        a[r * n + j] = a[r * n + j] - factor * v;
                    }
                }
            }
        }
        det
    }

    /// Determinants of the leading principal blocks, `D_1, …, D_n`.
    pub fn leading_principal_minors(&self) -> Vec<T> {
        (1..=self.n).map(|k| self.leading(k).det()).collect()
    }

    /// Negative definite iff `(−1)^k D_k > 0` for every leading minor.
    pub fn is_negative_definite(&self) -> bool {
        self.leading_principal_minors()
            .iter()
            .enumerate()
            .all(|(k, &d)| if k % 2 == 0 { d < T::zero() } else { d > T::zero() })
    }

    /// Positive definite iff every leading minor is positive.
    pub fn is_positive_definite(&self) -> bool {
        self.leading_principal_minors()
            .iter()
            .all(|&d| d > T::zero())
    }

    /// Strict row diagonal dominance, `|a_ii| > Σ_{j≠i} |a_ij|`.
    pub fn is_diagonally_dominant(&self) -> bool {
        (0..self.n).all(|i| {
            let off = (0..self.n)
                .filter(|&j| j != i)
                .fold(T::zero(), |acc, j| acc + self[(i, j)].abs());
            self[(i, i)].abs() > off
        })
    }

    /// Largest `|a_ij − a_ji|`.
    pub fn asymmetry(&self) -> T {
        let mut worst = T::zero();
        for i in 0..self.n {
            for j in 0..i {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }

    /// `(A + Aᵀ)/2`.
    pub fn symmetrized(&self) -> Self {
        let half = T::lit(0.5);
        Self::from_fn(self.n, |i, j| (self[(i, j)] + self[(j, i)]) * half)
    }
}

/// Exact determinant over an integral domain (Bareiss elimination).
pub fn det_exact<T>(m: &SquareMatrix<T>) -> T
where
    T: Num + Signed + Clone,
{
    let n = m.dim();
    if n == 0 {
        return T::one();
    }
    let mut a = m.clone();
    let mut sign = T::one();
    let mut prev = T::one();
    for k in 0..n - 1 {
        if a[(k, k)].is_zero() {
            match (k + 1..n).find(|&r| !a[(r, k)].is_zero()) {
                Some(r) => {
                    for j in 0..n {
                        let tmp = a[(k, j)].clone();
                        a[(k, j)] = a[(r, j)].clone();
                        a[(r, j)] = tmp;
                    }
                    sign = -sign;
                }
                None => return T::zero(),
            }
        }
        for i in k + 1..n {
            for j in k + 1..n {
                let v = (a[(i, j)].clone() * a[(k, k)].clone()
                    - a[(i, k)].clone() * a[(k, j)].clone())
                    / prev.clone();
                a[(i, j)] = v;
            }
        }
        prev = a[(k, k)].clone();
    }
    sign * a[(n - 1, n - 1)].clone()
}

/// The `n × n` matrix with 2 on the diagonal and −1 beside it.
pub fn tridiagonal_matrix<T: Num + Signed + Clone>(n: usize) -> SquareMatrix<T> {
    let two = T::one() + T::one();
    SquareMatrix::from_fn(n, |i, j| {
        if i == j {
            two.clone()
        } else if i.abs_diff(j) == 1 {
            -T::one()
        } else {
            T::zero()
        }
    })
}

/// Determinant of the `n × n` (2, −1) tridiagonal matrix by the three-term
/// recurrence `d(n) = 2 d(n−1) − d(n−2)`, `d(1) = 2`, `d(2) = 3`.
///
/// Returns `None` for `n = 0`.
pub fn tridiagonal_det<T: Num + Clone>(n: usize) -> Option<T> {
    let two = T::one() + T::one();
    let three = two.clone() + T::one();
    match n {
        0 => None,
        1 => Some(two),
        2 => Some(three),
        _ => {
            let (mut prev, mut cur) = (two.clone(), three);
            for _ in 3..=n {
                let next = two.clone() * cur.clone() - prev;
                prev = cur;
                cur = next;
            }
            Some(cur)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lu_determinant_small_cases() {
        let a = SquareMatrix::from_rows(vec![vec![4.0, 3.0], vec![6.0, 3.0]]);
        assert!((a.det() + 6.0_f64).abs() < 1e-14);
        let b = SquareMatrix::from_rows(vec![
            vec![0.0, 2.0, 1.0],
            vec![1.0, 0.0, 0.0],
            vec![3.0, 1.0, 5.0],
        ]);
        // expansion along the second row: -1 * (2*5 - 1*1)
        assert!((b.det() + 9.0_f64).abs() < 1e-13);
        let s = SquareMatrix::from_rows(vec![vec![1.0, 2.0], vec![2.0, 4.0_f64]]);
        assert_eq!(s.det(), 0.0);
    }

    #[test]
    fn definiteness_via_minors() {
        let b = tridiagonal_matrix::<i64>(5).map(|&v| v as f64);
        assert!(b.is_positive_definite());
        assert!(b.neg().is_negative_definite());
        assert!(!b.is_negative_definite());
        let indefinite = SquareMatrix::from_rows(vec![vec![1.0, 0.0], vec![0.0, -1.0_f64]]);
        assert!(!indefinite.is_negative_definite());
        assert!(!indefinite.is_positive_definite());
    }

    #[test]
    fn tridiagonal_examples() {
        assert_eq!(tridiagonal_det::<i64>(1), Some(2));
        assert_eq!(tridiagonal_det::<i64>(2), Some(3));
        assert_eq!(tridiagonal_det::<i64>(7), Some(8));
        assert_eq!(tridiagonal_det::<i64>(0), None);
    }

    #[test]
    fn bareiss_matches_recurrence() {
        for n in 1..=12 {
            assert_eq!(
                det_exact(&tridiagonal_matrix::<i64>(n)),
                tridiagonal_det::<i64>(n).unwrap()
            );
        }
    }

    #[test]
    fn bareiss_handles_zero_pivot() {
        let a = SquareMatrix::from_rows(vec![vec![0_i64, 1], vec![1, 0]]);
        assert_eq!(det_exact(&a), -1);
        let z = SquareMatrix::from_rows(vec![vec![0_i64, 1], vec![0, 5]]);
        assert_eq!(det_exact(&z), 0);
    }

    #[test]
    fn dominance_and_symmetry() {
        let a = SquareMatrix::from_rows(vec![vec![-3.0, 1.0], vec![1.5, -2.0_f64]]);
        assert!(a.is_diagonally_dominant());
        assert!((a.asymmetry() - 0.5).abs() < 1e-15);
        assert_eq!(a.symmetrized().asymmetry(), 0.0);
        let b = SquareMatrix::from_rows(vec![vec![1.0, 1.0], vec![1.0, 1.0_f64]]);
        assert!(!b.is_diagonally_dominant());
    }
}
