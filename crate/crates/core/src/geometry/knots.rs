//! Knot vectors and B-spline basis evaluation (Cox–de Boor).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{KnotScalar, Scalar};

/// Non-decreasing knot sequence with its degree and evaluation domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnotVector<T> {
    pub values: Vec<T>,
    pub degree: usize,
    /// End knots repeated `degree + 1` times.
    pub clamped: bool,
    /// Parameter interval on which the curve is evaluated.
    pub domain: (T, T),
}

/// Nonzero basis values `N_{start..=start+degree}` at one parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisValues<T> {
    pub start: usize,
    pub values: Vec<T>,
}

/// Basis values and their first `order` derivatives at one parameter.
/// `ders[k][j]` is the k-th derivative of `N_{start+j}`.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisDerivatives<T> {
    pub start: usize,
    pub ders: Vec<Vec<T>>,
}

impl<T: KnotScalar> KnotVector<T> {
    /// Builds a knot vector after validating ordering and length.
    pub fn new(values: Vec<T>, degree: usize, clamped: bool, domain: (T, T)) -> Result<Self> {
        let kv = KnotVector {
            values,
            degree,
            clamped,
            domain,
        };
        kv.validate()?;
        Ok(kv)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.degree;
        if self.values.len() < 2 * (d + 1) {
            return Err(Error::validation(format!(
                "knot vector of length {} too short for degree {d}",
                self.values.len()
            )));
        }
        if self.values.windows(2).any(|w| !(w[0] <= w[1])) {
            return Err(Error::validation("knot values must be non-decreasing"));
        }
        let (lo, hi) = self.domain;
        if !(lo < hi) || lo < self.values[d] || hi > self.values[self.num_basis()] {
            return Err(Error::validation("evaluation domain not covered by knot spans"));
        }
        if self.clamped {
            let first = self.values[0];
            let last = self.values[self.values.len() - 1];
            let head = self.values[..=d].iter().all(|&k| k == first);
            let tail = self.values[self.values.len() - d - 1..].iter().all(|&k| k == last);
            if !head || !tail {
                return Err(Error::validation(format!(
                    "clamped knot vector must repeat end knots {} times",
                    d + 1
                )));
            }
        }
        Ok(())
    }

    /// Number of basis functions (equals the number of control points).
    pub fn num_basis(&self) -> usize {
        self.values.len() - self.degree - 1
    }

    pub fn contains(&self, u: T) -> bool {
        self.domain.0 <= u && u <= self.domain.1
    }

    /// Knot span index `i` with `t_i <= u < t_{i+1}`, restricted to
    /// `[degree, num_basis - 1]`.
    pub fn find_span(&self, u: T) -> Result<usize> {
        if !self.contains(u) {
            return Err(Error::Domain(format!(
                "{u:?} not in [{:?}, {:?}]",
                self.domain.0, self.domain.1
            )));
        }
        let t = &self.values;
        let lo = self.degree;
        let hi = self.num_basis() - 1;
        if u >= t[hi + 1] {
            // right end of a clamped domain: last non-empty span
            let mut i = hi;
            while i > lo && !(t[i] < t[i + 1]) {
                i -= 1;
            }
            return Ok(i);
        }
        // binary search for t[i] <= u < t[i+1]
        let (mut a, mut b) = (lo, hi + 1);
        while b - a > 1 {
            let mid = (a + b) / 2;
            if u < t[mid] {
                b = mid;
            } else {
                a = mid;
            }
        }
        Ok(a)
    }

    /// Nonzero basis functions at `u` via the triangular Cox–de Boor scheme.
    pub fn basis_functions(&self, u: T) -> Result<BasisValues<T>> {
        let span = self.find_span(u)?;
        Ok(BasisValues {
            start: span - self.degree,
            values: self.basis_at_span(span, u),
        })
    }

    fn basis_at_span(&self, span: usize, u: T) -> Vec<T> {
        let d = self.degree;
        let t = &self.values;
        let mut n = vec![T::zero(); d + 1];
        let mut left = vec![T::zero(); d + 1];
        let mut right = vec![T::zero(); d + 1];
        n[0] = T::one();
        for j in 1..=d {
            left[j] = u - t[span + 1 - j];
            right[j] = t[span + j] - u;
            let mut saved = T::zero();
            for r in 0..j {
                let tmp = n[r] / (right[r + 1] + left[j - r]);
                n[r] = saved + right[r + 1] * tmp;
                saved = left[j - r] * tmp;
            }
            n[j] = saved;
        }
        n
    }

    /// Basis functions and derivatives up to `order` at `u`.
    pub fn basis_derivatives(&self, u: T, order: usize) -> Result<BasisDerivatives<T>> {
        let span = self.find_span(u)?;
        let d = self.degree;
        let t = &self.values;
        // ndu holds basis values (upper triangle) and knot differences (lower)
        let mut ndu = vec![vec![T::zero(); d + 1]; d + 1];
        let mut left = vec![T::zero(); d + 1];
        let mut right = vec![T::zero(); d + 1];
        ndu[0][0] = T::one();
        for j in 1..=d {
            left[j] = u - t[span + 1 - j];
            right[j] = t[span + j] - u;
            let mut saved = T::zero();
            for r in 0..j {
                ndu[j][r] = right[r + 1] + left[j - r];
                let tmp = ndu[r][j - 1] / ndu[j][r];
                ndu[r][j] = saved + right[r + 1] * tmp;
                saved = left[j - r] * tmp;
            }
            ndu[j][j] = saved;
        }
        let mut ders = vec![vec![T::zero(); d + 1]; order + 1];
        for j in 0..=d {
            ders[0][j] = ndu[j][d];
        }
        let mut a = vec![vec![T::zero(); d + 1]; 2];
        for r in 0..=d {
            let (mut s1, mut s2) = (0usize, 1usize);
            a[0][0] = T::one();
            for k in 1..=order.min(d) {
                let mut dk = T::zero();
                let rk = r as isize - k as isize;
                let pk = d - k;
                if r >= k {
                    let rk = rk as usize;
                    a[s2][0] = a[s1][0] / ndu[pk + 1][rk];
                    dk = a[s2][0] * ndu[rk][pk];
                }
                let j1 = if rk >= -1 { 1 } else { (-rk) as usize };
                let j2 = if (r as isize - 1) <= pk as isize { k - 1 } else { d - r };
                for j in j1..=j2 {
                    let idx = (rk + j as isize) as usize;
                    a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][idx];
                    dk = dk + a[s2][j] * ndu[idx][pk];
                }
                if r <= pk {
                    a[s2][k] = (T::zero() - a[s1][k - 1]) / ndu[pk + 1][r];
                    dk = dk + a[s2][k] * ndu[r][pk];
                }
                ders[k][r] = dk;
                std::mem::swap(&mut s1, &mut s2);
            }
        }
        // multiply by d!/(d-k)!
        let mut factor = T::one();
        let mut deg_t = T::zero();
        for _ in 0..d {
            deg_t = deg_t + T::one();
        }
        let mut mult = deg_t;
        for k in 1..=order.min(d) {
            factor = factor * mult;
            mult = mult - T::one();
            for v in ders[k].iter_mut() {
                *v = *v * factor;
            }
        }
        Ok(BasisDerivatives {
            start: span - d,
            ders,
        })
    }
}

impl<T: Scalar> KnotVector<T> {
    /// Clamped knots by averaging consecutive parameters:
    /// `t_{j+d} = (1/d) Σ_{i=j}^{j+d-1} ū_i` for `j = 1..n-d-1`.
    pub fn clamped_averaged(params: &[T], degree: usize) -> Result<Self> {
        let n = params.len();
        if degree == 0 || n < degree + 1 {
            return Err(Error::validation(format!(
                "need degree >= 1 and at least {} parameters, got degree {degree} and {n}",
                degree + 1
            )));
        }
        let mut values = vec![T::zero(); n + degree + 1];
        for v in values.iter_mut().skip(n) {
            *v = T::one();
        }
        let inv_d = T::one() / T::of(degree as f64);
        for j in 1..n - degree {
            let s: T = params[j..j + degree].iter().copied().sum();
            values[j + degree] = s * inv_d;
        }
        KnotVector::new(values, degree, true, (T::zero(), T::one()))
    }

    /// Unclamped uniform knots for a closed radial loop of `m` points:
    /// `{-d·δ, -(d-1)·δ, …, (m+1+d)·δ}` with `δ = 1/m`, evaluated on `[0, 1]`.
    pub fn periodic_radial(m: usize, degree: usize) -> Result<Self> {
        if m < 3 {
            return Err(Error::validation(format!("radial count {m} < 3")));
        }
        let delta = T::one() / T::of(m as f64);
        let values = (0..m + 2 * degree + 2)
            .map(|k| T::of(k as f64 - degree as f64) * delta)
            .collect();
        KnotVector::new(values, degree, false, (T::zero(), T::one()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degree_zero_indicator() {
        let kv = KnotVector::new(vec![0.0, 1.0], 0, true, (0.0, 1.0)).unwrap();
        let b = kv.basis_functions(0.5).unwrap();
        assert_eq!(b.start, 0);
        assert_eq!(b.values, vec![1.0]);
    }

    #[test]
    fn partition_of_unity_cubic() {
        let params: Vec<f64> = (0..10).map(|k| k as f64 / 9.0).collect();
        let kv = KnotVector::clamped_averaged(&params, 3).unwrap();
        for s in 1..200 {
            let u = s as f64 / 200.0;
            let b = kv.basis_functions(u).unwrap();
            let sum: f64 = b.values.iter().sum();
            assert!((sum - 1.0).abs() < 1e-12, "u={u} sum={sum}");
        }
    }

    #[test]
    fn averaged_knots_match_hand_values() {
        // 5 params, degree 2 → interior knots (ū1+ū2)/2, (ū2+ū3)/2
        let p = [0.0, 0.25, 0.5, 0.75, 1.0];
        let kv = KnotVector::clamped_averaged(&p, 2).unwrap();
        assert_eq!(kv.values, vec![0.0, 0.0, 0.0, 0.375, 0.625, 1.0, 1.0, 1.0]);
        assert_eq!(kv.num_basis(), 5);
    }

    #[test]
    fn outside_domain_is_error() {
        let kv = KnotVector::periodic_radial(8, 3).unwrap();
        assert!(matches!(kv.basis_functions(1.2), Err(Error::Domain(_))));
        assert!(matches!(kv.basis_functions(-0.01), Err(Error::Domain(_))));
    }

    #[test]
    fn malformed_knots_rejected() {
        assert!(KnotVector::new(vec![0.0, 0.5, 0.4, 1.0], 1, false, (0.5, 0.6)).is_err());
        assert!(KnotVector::new(vec![0.0, 0.0, 1.0], 1, true, (0.0, 1.0)).is_err());
        assert!(KnotVector::new(vec![0.0, 0.1, 0.9, 1.0], 1, true, (0.1, 0.9)).is_err());
    }

    #[test]
    fn radial_knots_span_layout() {
        let kv = KnotVector::<f64>::periodic_radial(4, 3).unwrap();
        assert_eq!(kv.values.len(), 4 + 2 * 3 + 2);
        assert!((kv.values[0] + 0.75).abs() < 1e-15);
        assert!((kv.values.last().unwrap() - 2.0).abs() < 1e-15);
        assert_eq!(kv.num_basis(), 4 + 3 + 1);
        let b0 = kv.basis_functions(0.0).unwrap();
        let b1 = kv.basis_functions(1.0).unwrap();
        assert_eq!(b0.start, 0);
        assert_eq!(b1.start, 4);
        for (a, b) in b0.values.iter().zip(&b1.values) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let params: Vec<f64> = (0..8).map(|k| k as f64 / 7.0).collect();
        let kv = KnotVector::clamped_averaged(&params, 3).unwrap();
        let h = 1e-6;
        for &u in &[0.1, 0.33, 0.5, 0.77, 0.9] {
            let d = kv.basis_derivatives(u, 1).unwrap();
            let p = kv.basis_functions(u + h).unwrap();
            let m = kv.basis_functions(u - h).unwrap();
            assert_eq!(p.start, d.start);
            assert_eq!(m.start, d.start);
            for j in 0..4 {
                let fd = (p.values[j] - m.values[j]) / (2.0 * h);
                assert!((fd - d.ders[1][j]).abs() < 1e-6, "u={u} j={j}");
                assert!((d.ders[0][j] - kv.basis_functions(u).unwrap().values[j]).abs() < 1e-15);
            }
        }
    }
}
