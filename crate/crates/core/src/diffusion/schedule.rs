//! Variance schedule of the forward noising process.
//!
//! The reverse kernel uses the q-posterior moments: for the forward
//! marginal `q(x_τ | x_0) = N(√ᾱ_τ x_0, (1−ᾱ_τ) I)` the posterior
//! `q(x_{τ−1} | x_τ, x_0)` is Gaussian with mean
//! `μ̃ = √ᾱ_{τ−1} β_τ/(1−ᾱ_τ) x_0 + √α_τ (1−ᾱ_{τ−1})/(1−ᾱ_τ) x_τ`
//! and variance `β̃_τ = (1−ᾱ_{τ−1})/(1−ᾱ_τ) β_τ`. Substituting the
//! ε-parameterised `x_0` gives the ancestral update used by the samplers,
//! `x_{τ−1} = (x_τ + β_τ ζ)/√α_τ + σ_τ z` with `ζ = −ε̂/√(1−ᾱ_τ)` and
//! `σ_τ² = β̃_τ`. Only the simplified ε-loss is trained; the variational
//! bound enters solely through `β̃`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const DEFAULT_STEPS: usize = 1000;
pub const DEFAULT_BETA_START: f64 = 1e-4;
pub const DEFAULT_BETA_END: f64 = 2e-2;

/// Linear β schedule with derived per-step quantities, stored in `f64`.
/// Index `τ−1` holds step `τ` (steps run 1..=T).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ScheduleSpec", into = "ScheduleSpec")]
pub struct NoiseSchedule {
    pub steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    pub beta: Vec<f64>,
    pub alpha: Vec<f64>,
    pub alpha_bar: Vec<f64>,
    /// Per-step sampling variance `σ_τ² = β̃_τ`.
    pub variance: Vec<f64>,
    pub sigma: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScheduleSpec {
    pub steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
}

impl Default for ScheduleSpec {
    fn default() -> Self {
        ScheduleSpec {
            steps: DEFAULT_STEPS,
            beta_start: DEFAULT_BETA_START,
            beta_end: DEFAULT_BETA_END,
        }
    }
}

impl TryFrom<ScheduleSpec> for NoiseSchedule {
    type Error = Error;
    fn try_from(s: ScheduleSpec) -> Result<Self> {
        NoiseSchedule::linear(s.steps, s.beta_start, s.beta_end)
    }
}

impl From<NoiseSchedule> for ScheduleSpec {
    fn from(s: NoiseSchedule) -> Self {
        s.spec()
    }
}

impl Default for NoiseSchedule {
    fn default() -> Self {
        NoiseSchedule::linear(DEFAULT_STEPS, DEFAULT_BETA_START, DEFAULT_BETA_END)
            .expect("default schedule is valid")
    }
}

impl NoiseSchedule {
    pub fn linear(steps: usize, beta_start: f64, beta_end: f64) -> Result<Self> {
        if steps == 0 {
            return Err(Error::validation("schedule needs at least one step"));
        }
        if !(beta_start > 0.0 && beta_end < 1.0 && beta_start <= beta_end) {
            return Err(Error::validation(format!(
                "invalid β range [{beta_start}, {beta_end}]"
            )));
        }
        let beta: Vec<f64> = (0..steps)
            .map(|k| {
                if steps == 1 {
                    beta_start
                } else {
                    beta_start + (beta_end - beta_start) * k as f64 / (steps - 1) as f64
                }
            })
            .collect();
        Ok(Self::from_betas(beta, beta_start, beta_end))
    }

    fn from_betas(beta: Vec<f64>, beta_start: f64, beta_end: f64) -> Self {
        let alpha: Vec<f64> = beta.iter().map(|b| 1.0 - b).collect();
        let mut alpha_bar = Vec::with_capacity(beta.len());
        let mut acc = 1.0;
        for a in &alpha {
            acc *= a;
            alpha_bar.push(acc);
        }
        let variance: Vec<f64> = (0..beta.len())
            .map(|k| {
                let prev = if k == 0 { 1.0 } else { alpha_bar[k - 1] };
                (1.0 - prev) / (1.0 - alpha_bar[k]) * beta[k]
            })
            .collect();
        let sigma = variance.iter().map(|v| v.sqrt()).collect();
        NoiseSchedule {
            steps: beta.len(),
            beta_start,
            beta_end,
            beta,
            alpha,
            alpha_bar,
            variance,
            sigma,
        }
    }

    pub fn spec(&self) -> ScheduleSpec {
        ScheduleSpec {
            steps: self.steps,
            beta_start: self.beta_start,
            beta_end: self.beta_end,
        }
    }

    fn index(&self, tau: usize) -> Result<usize> {
        if tau == 0 || tau > self.steps {
            return Err(Error::Domain(format!("step {tau} outside [1, {}]", self.steps)));
        }
        Ok(tau - 1)
    }

    pub fn beta_at(&self, tau: usize) -> f64 {
        self.beta[tau - 1]
    }

    pub fn alpha_at(&self, tau: usize) -> f64 {
        self.alpha[tau - 1]
    }

    pub fn alpha_bar_at(&self, tau: usize) -> f64 {
        self.alpha_bar[tau - 1]
    }

    pub fn sigma_at(&self, tau: usize) -> f64 {
        self.sigma[tau - 1]
    }

    /// Posterior variance `β̃_τ`.
    pub fn beta_tilde(&self, tau: usize) -> Result<f64> {
        let k = self.index(tau)?;
        let prev = if k == 0 { 1.0 } else { self.alpha_bar[k - 1] };
        Ok((1.0 - prev) / (1.0 - self.alpha_bar[k]) * self.beta[k])
    }

    /// `x_τ = √ᾱ_τ x_0 + √(1−ᾱ_τ) ε`.
    pub fn forward_diffuse<T: Scalar>(&self, x0: &[T], tau: usize, eps: &[T]) -> Result<Vec<T>> {
        let k = self.index(tau)?;
        if x0.len() != eps.len() {
            return Err(Error::validation("x0 and eps lengths differ"));
        }
        Ok(forward_with(self.alpha_bar[k], x0, eps))
    }
}

/// Closed-form marginal for an explicit `ᾱ`.
pub fn forward_with<T: Scalar>(alpha_bar: f64, x0: &[T], eps: &[T]) -> Vec<T> {
    let a = T::of(alpha_bar.sqrt());
    let s = T::of((1.0 - alpha_bar).sqrt());
    x0.iter().zip(eps).map(|(&x, &e)| a * x + s * e).collect()
}

/// `x̂_0 = (x_τ + (1−ᾱ_τ) ζ) / √ᾱ_τ`.
pub fn posterior_mean<T: Scalar>(alpha_bar: f64, x: &[T], score: &[T]) -> Vec<T> {
    let inv = T::of(1.0 / alpha_bar.sqrt());
    let c = T::of(1.0 - alpha_bar);
    x.iter().zip(score).map(|(&xi, &si)| (xi + c * si) * inv).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let s = NoiseSchedule::default();
        assert_eq!(s.steps, 1000);
        assert_eq!(s.beta[0], 1e-4);
        assert!((s.beta[999] - 2e-2).abs() < 1e-15);
    }

    #[test]
    fn identities() {
        let s = NoiseSchedule::default();
        let mut p = 1.0;
        for k in 0..s.steps {
            p *= 1.0 - s.beta[k];
            assert!((s.alpha_bar[k] - p).abs() < 1e-12);
            let tau = k + 1;
            let bt = s.beta_tilde(tau).unwrap();
            assert_eq!(s.variance[k], bt);
            assert_eq!(s.sigma_at(tau), bt.sqrt());
            assert!((s.sigma_at(tau).powi(2) - bt).abs() <= 4.0 * f64::EPSILON * bt);
            if k > 0 {
                assert!(s.alpha_bar[k] < s.alpha_bar[k - 1]);
                assert!(s.beta[k] >= s.beta[k - 1]);
            }
        }
        assert_eq!(s.sigma[0], 0.0);
    }

    #[test]
    fn out_of_range() {
        let s = NoiseSchedule::default();
        assert!(s.forward_diffuse(&[1.0], 0, &[0.0]).is_err());
        assert!(s.forward_diffuse(&[1.0], 1001, &[0.0]).is_err());
    }

    #[test]
    fn limits() {
        assert_eq!(forward_with(1.0, &[0.3, -2.0], &[5.0, 5.0]), vec![0.3, -2.0]);
        assert_eq!(forward_with(0.0, &[0.3, -2.0], &[5.0, 1.5]), vec![5.0, 1.5]);
        assert_eq!(posterior_mean(1.0, &[0.7], &[3.0]), vec![0.7]);
    }

    #[test]
    fn serde_round_trip() {
        let s = NoiseSchedule::linear(10, 1e-3, 0.1).unwrap();
        let j = serde_json::to_string(&s).unwrap();
        let back: NoiseSchedule = serde_json::from_str(&j).unwrap();
        assert_eq!(s, back);
    }
}
