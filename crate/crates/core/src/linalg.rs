//! Dense LU solve used by the interpolation systems.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Solves `A X = B` for a square row-major `A` (n×n) and `B` (n×k) by
/// Gaussian elimination with partial pivoting.
pub fn solve_dense<T: Scalar>(a: &[Vec<T>], b: &[Vec<T>]) -> Result<Vec<Vec<T>>> {
    let n = a.len();
    if a.iter().any(|r| r.len() != n) || b.len() != n {
        return Err(Error::validation("solve_dense: dimension mismatch"));
    }
    let k = b.first().map_or(0, |r| r.len());
    let mut m: Vec<Vec<T>> = a.to_vec();
    let mut x: Vec<Vec<T>> = b.to_vec();
    let scale = a
        .iter()
        .flat_map(|r| r.iter())
        .fold(T::zero(), |acc, v| acc.max(v.abs()));
    let tiny = scale * T::epsilon() * T::of(n as f64);
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| m[i][col].abs().partial_cmp(&m[j][col].abs()).unwrap())
            .unwrap();
        if !(m[piv][col].abs() > tiny) {
            return Err(Error::Fit(format!("singular collocation matrix at column {col}")));
        }
        m.swap(col, piv);
        x.swap(col, piv);
        for row in col + 1..n {
            let f = m[row][col] / m[col][col];
            if f == T::zero() {
                continue;
            }
            for c in col..n {
                let v = m[col][c];
                m[row][c] -= f * v;
            }
            for c in 0..k {
                let v = x[col][c];
                x[row][c] -= f * v;
            }
        }
    }
    for col in (0..n).rev() {
        for c in 0..k {
            let mut s = x[col][c];
            for j in col + 1..n {
                s -= m[col][j] * x[j][c];
            }
            x[col][c] = s / m[col][col];
        }
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_system() {
        let a: Vec<Vec<f64>> = vec![vec![0.0, 2.0], vec![1.0, 1.0]];
        let b = vec![vec![4.0], vec![3.0]];
        let x = solve_dense(&a, &b).unwrap();
        assert!((x[0][0] - 1.0).abs() < 1e-15);
        assert!((x[1][0] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn singular_is_fit_error() {
        let a = vec![vec![1.0, 2.0], vec![2.0, 4.0]];
        let b = vec![vec![1.0], vec![1.0]];
        assert!(matches!(solve_dense(&a, &b), Err(Error::Fit(_))));
    }
}
