//! Ancestral sampling with optional classifier-free guidance and
//! posterior-mean observation guidance.

use ndarray::{Array2, ArrayView1, ArrayView2, Zip};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::net::{CondInput, DenoiserNet, Tape};
use super::schedule::NoiseSchedule;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const DEFAULT_SAMPLE_BATCH: usize = 50;
/// Added to the residual before normalizing the guidance step.
pub const RESIDUAL_EPS: f64 = 1e-6;

/// Anything that predicts the injected noise and its input VJP.
pub trait NoisePredictor<T: Scalar> {
    type Tape;
    fn dim(&self) -> usize;
    fn eps(&self, x: ArrayView2<T>, tau: usize, cond: Option<ArrayView2<T>>) -> Result<(Array2<T>, Self::Tape)>;
    /// `(∂ε̂/∂x)ᵀ · cot`, row by row.
    fn eps_vjp(&self, tape: &Self::Tape, cot: ArrayView2<T>) -> Array2<T>;
}

impl<T: Scalar> NoisePredictor<T> for DenoiserNet<T> {
    type Tape = Tape<T>;

    fn dim(&self) -> usize {
        self.shape.data_dim
    }

    fn eps(&self, x: ArrayView2<T>, tau: usize, cond: Option<ArrayView2<T>>) -> Result<(Array2<T>, Tape<T>)> {
        let taus = vec![tau; x.nrows()];
        let c = match cond {
            Some(c) => CondInput::All(c),
            None => CondInput::Null,
        };
        self.forward(x, &taus, c)
    }

    fn eps_vjp(&self, tape: &Tape<T>, cot: ArrayView2<T>) -> Array2<T> {
        self.backward(tape, cot, None)
    }
}

/// How the observation residual is turned into a score term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Guidance {
    /// `−dps_scale · ∇L / (L + 1e−6)`.
    ResidualNormalized,
    /// Gaussian likelihood with variance `dps_sigma² + inflation·(1−ᾱ_τ)`.
    /// `inflation = 0` is the plain posterior-mean plug-in; `1` accounts
    /// for the spread of `x_0 | x_τ` under a unit-variance prior.
    Gaussian { variance_inflation: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    pub gamma: f64,
    pub batch: usize,
    pub seed: u64,
    pub dps_sigma: f64,
    pub dps_scale: f64,
    pub guidance: Guidance,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            gamma: 0.0,
            batch: DEFAULT_SAMPLE_BATCH,
            seed: 0,
            dps_sigma: 1.0,
            dps_scale: 1.0,
            guidance: Guidance::ResidualNormalized,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma >= 0.0) {
            return Err(Error::validation("gamma must be non-negative"));
        }
        if self.batch == 0 {
            return Err(Error::validation("batch must be at least 1"));
        }
        if !(self.dps_sigma > 0.0) || !(self.dps_scale >= 0.0) {
            return Err(Error::validation("dps_sigma must be positive and dps_scale non-negative"));
        }
        if let Guidance::Gaussian { variance_inflation } = self.guidance {
            if !(variance_inflation >= 0.0) {
                return Err(Error::validation("variance_inflation must be non-negative"));
            }
        }
        Ok(())
    }
}

/// Residual of one sample against the prompts, evaluated at its
/// posterior-mean estimate (in network space).
#[derive(Debug, Clone)]
pub struct ObservationTerm<T> {
    pub value: T,
    pub grad: Vec<T>,
    /// Number of observed points behind `value` (a mean).
    pub count: usize,
}

pub trait Observation<T> {
    fn is_empty(&self) -> bool;
    fn evaluate(&self, row: usize, x0: ArrayView1<T>) -> Result<ObservationTerm<T>>;
}

/// `−ε̂ / √(1−ᾱ_τ)`.
pub fn score_from_eps<T: Scalar>(eps: &Array2<T>, alpha_bar: f64) -> Array2<T> {
    let c = T::of(-1.0 / (1.0 - alpha_bar).sqrt());
    eps.mapv(|e| e * c)
}

/// `(1−γ)·ζ_u + γ·ζ_c`, which reduces exactly to either score at γ ∈ {0, 1}.
pub fn cfg_score<T: Scalar>(uncond: &Array2<T>, cond: &Array2<T>, gamma: f64) -> Array2<T> {
    let (a, b) = (T::of(1.0 - gamma), T::of(gamma));
    let mut out = uncond.clone();
    Zip::from(&mut out).and(cond).for_each(|u, &c| *u = a * *u + b * c);
    out
}

/// Called after every reverse step with the new state `x_{τ−1}`.
pub type StepHook<'a, T> = &'a mut dyn FnMut(usize, ArrayView2<T>);

/// Runs `T` reverse steps from `x_T ~ N(0, I)`.
pub fn sample<T: Scalar, P: NoisePredictor<T>>(
    model: &P,
    schedule: &NoiseSchedule,
    cond: Option<ArrayView2<T>>,
    cfg: &SamplerConfig,
    obs: Option<&dyn Observation<T>>,
) -> Result<Array2<T>> {
    sample_traced(model, schedule, cond, cfg, obs, None)
}

pub fn sample_traced<T: Scalar, P: NoisePredictor<T>>(
    model: &P,
    schedule: &NoiseSchedule,
    cond: Option<ArrayView2<T>>,
    cfg: &SamplerConfig,
    obs: Option<&dyn Observation<T>>,
    mut hook: Option<StepHook<'_, T>>,
) -> Result<Array2<T>> {
    cfg.validate()?;
    let (b, d) = (cfg.batch, model.dim());
    if let Some(c) = cond {
        if c.nrows() != b {
            return Err(Error::validation(format!(
                "{} condition rows for a batch of {b}",
                c.nrows()
            )));
        }
    }
    let obs = obs.filter(|o| !o.is_empty());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut x = Array2::<T>::from_shape_simple_fn((b, d), || {
        let z: f64 = StandardNormal.sample(&mut rng);
        T::of(z)
    });
    for tau in (1..=schedule.steps).rev() {
        let ab = schedule.alpha_bar_at(tau);
        let (eu, tape_u) = model.eps(x.view(), tau, None)?;
        let zu = score_from_eps(&eu, ab);
        let (mut score, tape_c) = match cond {
            Some(c) => {
                let (ec, tape_c) = model.eps(x.view(), tau, Some(c))?;
                let zc = score_from_eps(&ec, ab);
                (cfg_score(&zu, &zc, cfg.gamma), Some(tape_c))
            }
            None => (zu, None),
        };
        if let Some(obs) = obs {
            let g = observation_guidance(model, &x, &score, tau, ab, cfg, obs, &tape_u, tape_c.as_ref())?;
            score += &g;
        }
        let beta = T::of(schedule.beta_at(tau));
        let inv = T::of(1.0 / schedule.alpha_at(tau).sqrt());
        let sigma = T::of(schedule.sigma_at(tau));
        Zip::from(&mut x).and(&score).for_each(|xi, &s| *xi = (*xi + beta * s) * inv);
        if tau > 1 {
            for xi in x.iter_mut() {
                let z: f64 = StandardNormal.sample(&mut rng);
                *xi += sigma * T::of(z);
            }
        }
        if let Some(h) = hook.as_deref_mut() {
            h(tau - 1, x.view());
        }
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("sampler produced non-finite values".into()));
    }
    Ok(x)
}

/// `∇_x log p(y | x̂_0(x))` through the posterior mean and the network.
#[allow(clippy::too_many_arguments)]
fn observation_guidance<T: Scalar, P: NoisePredictor<T>>(
    model: &P,
    x: &Array2<T>,
    score: &Array2<T>,
    tau: usize,
    ab: f64,
    cfg: &SamplerConfig,
    obs: &dyn Observation<T>,
    tape_u: &P::Tape,
    tape_c: Option<&P::Tape>,
) -> Result<Array2<T>> {
    let (b, d) = x.dim();
    let c = T::of(1.0 - ab);
    let inv = T::of(1.0 / ab.sqrt());
    let x0 = Zip::from(x).and(score).map_collect(|&xi, &si| (xi + c * si) * inv);
    // cotangent of the weighted residual w.r.t. x̂_0
    let mut cot = Array2::<T>::zeros((b, d));
    let mut active = vec![false; b];
    for r in 0..b {
        let term = obs.evaluate(r, x0.row(r))?;
        let weight = match cfg.guidance {
            Guidance::ResidualNormalized => cfg.dps_scale / (term.value.to_f64_lossy() + RESIDUAL_EPS),
            Guidance::Gaussian { variance_inflation } => {
                let var = cfg.dps_sigma * cfg.dps_sigma + variance_inflation * (1.0 - ab);
                cfg.dps_scale * term.count as f64 / (2.0 * var)
            }
        };
        let w = T::of(weight);
        if !(term.value.is_finite() && weight.is_finite()) || term.grad.iter().any(|g| !g.is_finite()) {
            log::warn!("skipping non-finite guidance for sample {r} at step {tau}");
            continue;
        }
        active[r] = true;
        for k in 0..d {
            cot[[r, k]] = w * term.grad[k];
        }
    }
    // x̂_0 = (x + (1−ᾱ)ζ)/√ᾱ with ζ = −ε̂_mix/√(1−ᾱ)
    let ju = model.eps_vjp(tape_u, cot.view());
    let jeps = match tape_c {
        Some(tc) => {
            let jc = model.eps_vjp(tc, cot.view());
            cfg_score(&ju, &jc, cfg.gamma)
        }
        None => ju,
    };
    let k = T::of((1.0 - ab).sqrt());
    let mut g = Zip::from(&cot).and(&jeps).map_collect(|&v, &j| -(v - k * j) * inv);
    for r in 0..b {
        if !active[r] || g.row(r).iter().any(|v| !v.is_finite()) {
            if active[r] {
                log::warn!("skipping non-finite guidance gradient for sample {r} at step {tau}");
            }
            g.row_mut(r).fill(T::zero());
        }
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn cfg_identities() {
        let u = array![[0.3, -1.7], [2.2, 0.1]];
        let c = array![[-0.9, 0.4], [1.0, 5.5]];
        assert_eq!(cfg_score(&u, &c, 0.0), u);
        assert_eq!(cfg_score(&u, &c, 1.0), c);
    }
}
