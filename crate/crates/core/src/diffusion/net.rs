//! Dense residual ε-predictor with hand-written reverse pass.
//!
//! `z = [x ; time(τ) ; cond]`, `h_0 = z W_in + b_in`,
//! `h_{k+1} = h_k + silu(h_k) W_k + b_k`, `ε̂ = silu(h_L) W_out + b_out`.
//! The condition slot holds `silu(c W_c + b_c)` or a learned null token.
//! Rows are samples; all parameters live in one flat vector so the
//! optimizer and checkpoints see a single buffer.
//!
//! With a [`Preconditioner`] the stack above is the inner function `F` and
//! the returned noise is `ε̂ = a·u − b·F(u/√v, τ)`, per coordinate, with
//! `u = x − √ᾱ μ`, `v = 1 − ᾱ + ᾱ s²`, `a = √(1−ᾱ)/v`, `b = s√(ᾱ/v)`.
//! `a·u` alone is the exact predictor for independent N(μ, s²) data, so
//! the network only learns the correction and every step sees unit-scale
//! inputs and targets. With a basis the same scaling is applied in the
//! principal axes of the data (`u ← Uᵀu`, `s²` the eigenvalues, `ε̂ ← U ε̂`),
//! which makes `a·u` the exact predictor for correlated Gaussian data.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2, Axis};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetShape {
    pub data_dim: usize,
    /// Width of the raw condition vector; 0 for an unconditional net.
    pub cond_dim: usize,
    pub hidden: usize,
    pub blocks: usize,
    pub time_dim: usize,
    pub cond_embed_dim: usize,
}

impl NetShape {
    pub fn new(data_dim: usize, cond_dim: usize) -> Self {
        NetShape {
            data_dim,
            cond_dim,
            hidden: 256,
            blocks: 4,
            time_dim: 64,
            cond_embed_dim: 64,
        }
    }

    pub fn conditional(&self) -> bool {
        self.cond_dim > 0
    }

    fn input_dim(&self) -> usize {
        self.data_dim + self.time_dim + if self.conditional() { self.cond_embed_dim } else { 0 }
    }

    fn validate(&self) -> Result<()> {
        if self.data_dim == 0 || self.hidden == 0 || self.time_dim < 2 || self.time_dim % 2 != 0 {
            return Err(Error::validation(format!("invalid network shape {self:?}")));
        }
        if self.conditional() && self.cond_embed_dim == 0 {
            return Err(Error::validation("conditional net needs a condition embedding"));
        }
        Ok(())
    }
}

/// Offsets of every tensor inside the flat parameter vector.
#[derive(Debug, Clone)]
struct Layout {
    cond_w: usize,
    cond_b: usize,
    null: usize,
    in_w: usize,
    in_b: usize,
    blocks: Vec<(usize, usize)>,
    out_w: usize,
    out_b: usize,
    total: usize,
}

impl Layout {
    fn new(s: &NetShape) -> Self {
        let mut o = 0;
        let mut take = |n: usize| {
            let at = o;
            o += n;
            at
        };
        let ce = if s.conditional() { s.cond_embed_dim } else { 0 };
        let cond_w = take(s.cond_dim * ce);
        let cond_b = take(ce);
        let null = take(ce);
        let in_w = take(s.input_dim() * s.hidden);
        let in_b = take(s.hidden);
        let blocks = (0..s.blocks)
            .map(|_| (take(s.hidden * s.hidden), take(s.hidden)))
            .collect();
        let out_w = take(s.hidden * s.data_dim);
        let out_b = take(s.data_dim);
        Layout {
            cond_w,
            cond_b,
            null,
            in_w,
            in_b,
            blocks,
            out_w,
            out_b,
            total: o,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenoiserNet<T> {
    pub shape: NetShape,
    pub params: Vec<T>,
    pub precond: Option<Preconditioner<T>>,
}

/// Fixed per-step input/output scaling from the training data statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preconditioner<T> {
    /// ᾱ for τ = 1..=T.
    pub alpha_bar: Vec<f64>,
    pub mean: Vec<T>,
    /// Spread per (rotated) coordinate.
    pub std: Vec<T>,
    /// Row-major `d×d` orthonormal matrix whose columns are the axes.
    pub basis: Option<Vec<T>>,
}

/// Floor on the per-coordinate spread used by the preconditioner.
const MIN_STD: f64 = 1e-3;
/// Principal variances are floored at this fraction of the mean variance.
const MIN_VARIANCE_FRACTION: f64 = 1e-3;

impl<T: Scalar> Preconditioner<T> {
    /// Column means and (population) standard deviations of `data`.
    pub fn from_data(data: ArrayView2<T>, alpha_bar: Vec<f64>) -> Result<Self> {
        let k = data.nrows();
        if k == 0 {
            return Err(Error::validation("preconditioner needs data"));
        }
        let mut mean = Vec::with_capacity(data.ncols());
        let mut std = Vec::with_capacity(data.ncols());
        for col in data.columns() {
            let m = col.iter().map(|v| v.to_f64_lossy()).sum::<f64>() / k as f64;
            let var = col.iter().map(|v| (v.to_f64_lossy() - m).powi(2)).sum::<f64>() / k as f64;
            mean.push(T::of(m));
            std.push(T::of(var.sqrt().max(MIN_STD)));
        }
        Ok(Preconditioner {
            alpha_bar,
            mean,
            std,
            basis: None,
        })
    }

    /// Like [`Preconditioner::from_data`] but in the eigenbasis of the
    /// (population) covariance.
    pub fn from_data_rotated(data: ArrayView2<T>, alpha_bar: Vec<f64>) -> Result<Self> {
        let mut p = Self::from_data(data, alpha_bar)?;
        let (k, d) = data.dim();
        let mut cov = nalgebra::DMatrix::<f64>::zeros(d, d);
        for row in data.rows() {
            let c = nalgebra::DVector::from_iterator(
                d,
                row.iter().zip(&p.mean).map(|(v, m)| v.to_f64_lossy() - m.to_f64_lossy()),
            );
            cov += &c * c.transpose();
        }
        cov /= k as f64;
        let eig = nalgebra::SymmetricEigen::new(cov);
        let floor = (MIN_VARIANCE_FRACTION * eig.eigenvalues.sum() / d as f64).max(MIN_STD * MIN_STD);
        p.std = eig.eigenvalues.iter().map(|&l| T::of(l.max(floor).sqrt())).collect();
        p.basis = Some((0..d * d).map(|i| T::of(eig.eigenvectors[(i / d, i % d)])).collect());
        Ok(p)
    }

    fn basis(&self) -> Option<ArrayView2<'_, T>> {
        let d = self.mean.len();
        self.basis.as_ref().map(|b| ArrayView2::from_shape((d, d), b).expect("square basis"))
    }

    fn alpha_bar(&self, tau: usize) -> Result<f64> {
        tau.checked_sub(1)
            .and_then(|i| self.alpha_bar.get(i))
            .copied()
            .ok_or_else(|| Error::validation(format!("step {tau} outside the preconditioner range")))
    }
}

/// Per-entry coefficients of the preconditioned output.
#[derive(Debug, Clone)]
struct PreTape<T> {
    a: Array2<T>,
    b: Array2<T>,
    inv_sqrt_v: Array2<T>,
}

/// Which rows receive the condition; the rest get the null token.
#[derive(Debug, Clone, Copy)]
pub enum CondInput<'a, T> {
    Null,
    All(ArrayView2<'a, T>),
    Masked(ArrayView2<'a, T>, &'a [bool]),
}

/// Activations kept for the reverse pass.
#[derive(Debug, Clone)]
pub struct Tape<T> {
    x: Array2<T>,
    taus: Vec<usize>,
    cemb: Option<Array2<T>>,
    hs: Vec<Array2<T>>,
    cond: Option<(Array2<T>, Array2<T>, Vec<bool>)>,
    pre: Option<PreTape<T>>,
}

#[inline]
fn sigmoid<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

#[inline]
fn silu<T: Scalar>(x: T) -> T {
    x * sigmoid(x)
}

#[inline]
fn silu_grad<T: Scalar>(x: T) -> T {
    let s = sigmoid(x);
    s * (T::one() + x * (T::one() - s))
}

/// Sinusoidal features of the integer step.
pub fn time_embedding<T: Scalar>(tau: usize, dim: usize) -> Vec<T> {
    let half = dim / 2;
    let t = tau as f64;
    let mut out = vec![T::zero(); dim];
    for k in 0..half {
        let f = (-(10000f64.ln()) * k as f64 / half as f64).exp();
        out[k] = T::of((t * f).sin());
        out[half + k] = T::of((t * f).cos());
    }
    out
}

impl<T: Scalar> DenoiserNet<T> {
    pub fn new<R: Rng + ?Sized>(shape: NetShape, rng: &mut R) -> Result<Self> {
        shape.validate()?;
        let lay = Layout::new(&shape);
        let mut params = vec![T::zero(); lay.total];
        let mut fill = |at: usize, n: usize, std: f64, p: &mut [T]| {
            for v in &mut p[at..at + n] {
                let z: f64 = StandardNormal.sample(rng);
                *v = T::of(z * std);
            }
        };
        if shape.conditional() {
            let ce = shape.cond_embed_dim;
            fill(lay.cond_w, shape.cond_dim * ce, (1.0 / shape.cond_dim as f64).sqrt(), &mut params);
            fill(lay.null, ce, 0.5, &mut params);
        }
        fill(lay.in_w, shape.input_dim() * shape.hidden, (1.0 / shape.input_dim() as f64).sqrt(), &mut params);
        // residual branches start small so the stack begins near identity
        let block_std = (1.0 / shape.hidden as f64).sqrt() / (shape.blocks.max(1) as f64).sqrt();
        for &(w, _) in &lay.blocks {
            fill(w, shape.hidden * shape.hidden, block_std, &mut params);
        }
        fill(lay.out_w, shape.hidden * shape.data_dim, 0.1 * (1.0 / shape.hidden as f64).sqrt(), &mut params);
        Ok(DenoiserNet {
            shape,
            params,
            precond: None,
        })
    }

    pub fn with_preconditioner(mut self, p: Preconditioner<T>) -> Result<Self> {
        if p.mean.len() != self.shape.data_dim || p.std.len() != self.shape.data_dim {
            return Err(Error::validation("preconditioner width differs from the network"));
        }
        self.precond = Some(p);
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        self.shape.validate()?;
        if self.params.len() != Layout::new(&self.shape).total {
            return Err(Error::validation("parameter count does not match the network shape"));
        }
        if self.params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Numerical("non-finite network parameter".into()));
        }
        if let Some(p) = &self.precond {
            let d = self.shape.data_dim;
            if p.mean.len() != d
                || p.std.len() != d
                || p.std.iter().any(|s| !(*s > T::zero()))
                || p.basis.as_ref().is_some_and(|b| b.len() != d * d)
            {
                return Err(Error::validation("malformed preconditioner"));
            }
        }
        Ok(())
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    fn mat(&self, at: usize, r: usize, c: usize) -> ArrayView2<'_, T> {
        ArrayView2::from_shape((r, c), &self.params[at..at + r * c]).expect("layout")
    }

    fn vec(&self, at: usize, n: usize) -> ArrayView1<'_, T> {
        ArrayView1::from(&self.params[at..at + n])
    }

    /// Predicts ε for every row; `taus` holds one step per row.
    pub fn predict(&self, x: ArrayView2<T>, taus: &[usize], cond: CondInput<T>) -> Result<Array2<T>> {
        Ok(self.forward(x, taus, cond)?.0)
    }

    pub fn forward(
        &self,
        x: ArrayView2<T>,
        taus: &[usize],
        cond: CondInput<T>,
    ) -> Result<(Array2<T>, Tape<T>)> {
        let Some(p) = &self.precond else {
            return self.forward_inner(x, taus, cond);
        };
        if x.ncols() != self.shape.data_dim || taus.len() != x.nrows() {
            return self.forward_inner(x, taus, cond);
        }
        let (b, d) = x.dim();
        let mut z = Array2::<T>::zeros((b, d));
        let mut pt = PreTape {
            a: Array2::zeros((b, d)),
            b: Array2::zeros((b, d)),
            inv_sqrt_v: Array2::zeros((b, d)),
        };
        let mut u = Array2::<T>::zeros((b, d));
        for (r, &tau) in taus.iter().enumerate() {
            let ab = p.alpha_bar(tau)?;
            let sab = T::of(ab.sqrt());
            for k in 0..d {
                let sd = p.std[k].to_f64_lossy();
                let v = 1.0 - ab + ab * sd * sd;
                u[[r, k]] = x[[r, k]] - sab * p.mean[k];
                pt.a[[r, k]] = T::of((1.0 - ab).sqrt() / v);
                pt.b[[r, k]] = T::of(sd * (ab / v).sqrt());
                pt.inv_sqrt_v[[r, k]] = T::of(1.0 / v.sqrt());
            }
        }
        if let Some(basis) = p.basis() {
            u = u.dot(&basis);
        }
        z.assign(&(&u * &pt.inv_sqrt_v));
        let (f, mut tape) = self.forward_inner(z.view(), taus, cond)?;
        let mut y = &pt.a * &u - &pt.b * &f;
        if let Some(basis) = p.basis() {
            y = y.dot(&basis.t());
        }
        tape.pre = Some(pt);
        Ok((y, tape))
    }

    fn forward_inner(
        &self,
        x: ArrayView2<T>,
        taus: &[usize],
        cond: CondInput<T>,
    ) -> Result<(Array2<T>, Tape<T>)> {
        let s = &self.shape;
        let lay = Layout::new(s);
        let b = x.nrows();
        if x.ncols() != s.data_dim || taus.len() != b {
            return Err(Error::validation(format!(
                "network expects {}-wide rows with one step each, got {}×{} and {} steps",
                s.data_dim,
                b,
                x.ncols(),
                taus.len()
            )));
        }
        let mut cond_tape = None;
        let mut cemb = None;
        if s.conditional() {
            let ce = s.cond_embed_dim;
            let null = self.vec(lay.null, ce);
            let (craw, mask): (Option<ArrayView2<T>>, Vec<bool>) = match cond {
                CondInput::Null => (None, vec![false; b]),
                CondInput::All(c) => (Some(c), vec![true; b]),
                CondInput::Masked(c, m) => {
                    if m.len() != b {
                        return Err(Error::validation("condition mask length differs from batch"));
                    }
                    (Some(c), m.to_vec())
                }
            };
            let mut e = Array2::<T>::zeros((b, ce));
            match craw {
                Some(c) => {
                    if c.nrows() != b || c.ncols() != s.cond_dim {
                        return Err(Error::validation(format!(
                            "condition must be {}×{}, got {}×{}",
                            b,
                            s.cond_dim,
                            c.nrows(),
                            c.ncols()
                        )));
                    }
                    let pre = c.dot(&self.mat(lay.cond_w, s.cond_dim, ce)) + &self.vec(lay.cond_b, ce);
                    for r in 0..b {
                        let mut dst = e.row_mut(r);
                        if mask[r] {
                            dst.zip_mut_with(&pre.row(r), |d, &p| *d = silu(p));
                        } else {
                            dst.assign(&null);
                        }
                    }
                    cond_tape = Some((c.to_owned(), pre, mask));
                }
                None => {
                    for r in 0..b {
                        e.row_mut(r).assign(&null);
                    }
                }
            }
            cemb = Some(e);
        } else if !matches!(cond, CondInput::Null) {
            return Err(Error::validation("unconditional network given a condition"));
        }

        let (wx, wt, wc) = self.input_blocks(&lay);
        let mut h = x.dot(&wx) + &self.vec(lay.in_b, s.hidden);
        if let Some(e) = &cemb {
            h += &e.dot(&wc);
        }
        // the time features only enter through `te · W_t`; a batch sharing
        // one step (the sampling case) needs a single product
        if b == 0 {
        } else if taus.iter().all(|&t| t == taus[0]) {
            let te = time_embedding::<T>(taus[0], s.time_dim);
            h += &ArrayView1::from(&te).dot(&wt);
        } else {
            h += &time_matrix(taus, s.time_dim).dot(&wt);
        }
        let mut hs = Vec::with_capacity(s.blocks + 1);
        for &(w, bias) in &lay.blocks {
            let a = h.mapv(silu);
            let next = &h + &(a.dot(&self.mat(w, s.hidden, s.hidden)) + &self.vec(bias, s.hidden));
            hs.push(h);
            h = next;
        }
        let a = h.mapv(silu);
        let y = a.dot(&self.mat(lay.out_w, s.hidden, s.data_dim)) + &self.vec(lay.out_b, s.data_dim);
        hs.push(h);
        Ok((
            y,
            Tape {
                x: x.to_owned(),
                taus: taus.to_vec(),
                cemb,
                hs,
                cond: cond_tape,
                pre: None,
            },
        ))
    }

    /// Row blocks of `W_in` acting on the data, time and condition slots.
    fn input_blocks(&self, lay: &Layout) -> (ArrayView2<'_, T>, ArrayView2<'_, T>, ArrayView2<'_, T>) {
        let s = &self.shape;
        let w = self.mat(lay.in_w, s.input_dim(), s.hidden);
        let (d, t) = (s.data_dim, s.time_dim);
        let (wx, rest) = w.split_at(Axis(0), d);
        let (wt, wc) = rest.split_at(Axis(0), t);
        (wx, wt, wc)
    }

    /// Reverse pass. Returns `∂/∂x` and, when `param_grad` is given,
    /// accumulates parameter gradients into it.
    pub fn backward(&self, tape: &Tape<T>, dy: ArrayView2<T>, param_grad: Option<&mut [T]>) -> Array2<T> {
        match &tape.pre {
            None => self.backward_inner(tape, dy, param_grad),
            Some(pt) => {
                let basis = self.precond.as_ref().and_then(|p| p.basis());
                let dy = match basis {
                    Some(u) => dy.dot(&u),
                    None => dy.to_owned(),
                };
                let df = (&pt.b * &dy).mapv(|v| -v);
                let dz = self.backward_inner(tape, df.view(), param_grad);
                let dx = &pt.a * &dy + &(&dz * &pt.inv_sqrt_v);
                match basis {
                    Some(u) => dx.dot(&u.t()),
                    None => dx,
                }
            }
        }
    }

    fn backward_inner(&self, tape: &Tape<T>, dy: ArrayView2<T>, mut param_grad: Option<&mut [T]>) -> Array2<T> {
        let s = &self.shape;
        let lay = Layout::new(s);
        let hl = tape.hs.last().expect("tape");
        if let Some(g) = param_grad.as_deref_mut() {
            let a = hl.mapv(silu);
            add_mat(g, lay.out_w, s.hidden, s.data_dim, a.t().dot(&dy));
            add_vec(g, lay.out_b, dy.sum_axis(Axis(0)));
        }
        let mut dh = dy.dot(&self.mat(lay.out_w, s.hidden, s.data_dim).t());
        dh.zip_mut_with(hl, |d, &h| *d = *d * silu_grad(h));
        for (k, &(w, bias)) in lay.blocks.iter().enumerate().rev() {
            let hk = &tape.hs[k];
            let wk = self.mat(w, s.hidden, s.hidden);
            if let Some(g) = param_grad.as_deref_mut() {
                let a = hk.mapv(silu);
                add_mat(g, w, s.hidden, s.hidden, a.t().dot(&dh));
                add_vec(g, bias, dh.sum_axis(Axis(0)));
            }
            let mut branch = dh.dot(&wk.t());
            branch.zip_mut_with(hk, |d, &h| *d = *d * silu_grad(h));
            dh += &branch;
        }
        let (wx, _, wc) = self.input_blocks(&lay);
        if let Some(g) = param_grad.as_deref_mut() {
            let b = dh.nrows();
            let te = time_matrix(&tape.taus, s.time_dim);
            let mut gin = Array2::<T>::zeros((s.input_dim(), s.hidden));
            gin.slice_mut(s![..s.data_dim, ..]).assign(&tape.x.t().dot(&dh));
            gin.slice_mut(s![s.data_dim..s.data_dim + s.time_dim, ..]).assign(&te.t().dot(&dh));
            if let Some(e) = &tape.cemb {
                gin.slice_mut(s![s.data_dim + s.time_dim.., ..]).assign(&e.t().dot(&dh));
            }
            add_mat(g, lay.in_w, s.input_dim(), s.hidden, gin);
            add_vec(g, lay.in_b, dh.sum_axis(Axis(0)));
            if s.conditional() {
                let ce = s.cond_embed_dim;
                let de = dh.dot(&wc.t());
                let mut null_g = Array1::<T>::zeros(ce);
                match &tape.cond {
                    Some((c, pre, mask)) => {
                        let mut dpre = Array2::<T>::zeros((b, ce));
                        for r in 0..b {
                            if mask[r] {
                                for k in 0..ce {
                                    dpre[[r, k]] = de[[r, k]] * silu_grad(pre[[r, k]]);
                                }
                            } else {
                                null_g += &de.row(r);
                            }
                        }
                        add_mat(g, lay.cond_w, s.cond_dim, ce, c.t().dot(&dpre));
                        add_vec(g, lay.cond_b, dpre.sum_axis(Axis(0)));
                    }
                    None => null_g = de.sum_axis(Axis(0)),
                }
                add_vec(g, lay.null, null_g);
            }
        }
        dh.dot(&wx.t())
    }
}

fn time_matrix<T: Scalar>(taus: &[usize], dim: usize) -> Array2<T> {
    let mut te = Array2::<T>::zeros((taus.len(), dim));
    for (r, &tau) in taus.iter().enumerate() {
        te.row_mut(r).assign(&ArrayView1::from(&time_embedding::<T>(tau, dim)));
    }
    te
}

fn add_mat<T: Scalar>(g: &mut [T], at: usize, r: usize, c: usize, m: Array2<T>) {
    let mut dst = ArrayViewMut2::from_shape((r, c), &mut g[at..at + r * c]).expect("layout");
    dst += &m;
}

fn add_vec<T: Scalar>(g: &mut [T], at: usize, v: Array1<T>) {
    let n = v.len();
    let mut dst = ArrayViewMut1::from(&mut g[at..at + n]);
    dst += &v;
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small(cond_dim: usize) -> DenoiserNet<f64> {
        let shape = NetShape {
            data_dim: 3,
            cond_dim,
            hidden: 8,
            blocks: 2,
            time_dim: 4,
            cond_embed_dim: 5,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut net = DenoiserNet::new(shape, &mut rng).unwrap();
        // perturb so no tensor is exactly zero
        for p in net.params.iter_mut() {
            *p += 0.05 * (rng.random::<f64>() - 0.5);
        }
        net
    }

    fn loss(net: &DenoiserNet<f64>, x: &Array2<f64>, c: &Array2<f64>, mask: &[bool], w: &Array2<f64>) -> f64 {
        let cond = if net.shape.conditional() {
            CondInput::Masked(c.view(), mask)
        } else {
            CondInput::Null
        };
        let y = net.predict(x.view(), &[3, 17], cond).unwrap();
        (&y * w).sum()
    }

    #[test]
    fn gradients_match_finite_differences() {
        for (cond_dim, pre) in [(0, 0), (2, 0), (0, 1), (2, 1), (0, 2), (2, 2)] {
            let mut net = small(cond_dim);
            if pre > 0 {
                let ab = (1..=20).map(|t| 1.0 - 0.04 * t as f64).collect();
                let data = Array2::from_shape_vec((3, 3), vec![0.1, 0.5, 0.9, 0.3, 0.2, 0.8, 0.6, 0.4, 1.0]).unwrap();
                let p = if pre == 1 {
                    Preconditioner::from_data(data.view(), ab)
                } else {
                    Preconditioner::from_data_rotated(data.view(), ab)
                };
                net = net.with_preconditioner(p.unwrap()).unwrap();
            }
            let x = Array2::from_shape_vec((2, 3), vec![0.3, -0.2, 0.9, 0.1, 0.5, -0.7]).unwrap();
            let c = Array2::from_shape_vec((2, 2), vec![0.4, -1.0, 0.2, 0.8]).unwrap();
            let w = Array2::from_shape_vec((2, 3), vec![1.0, -0.5, 0.25, 0.7, 0.3, -1.2]).unwrap();
            let mask = [true, false];
            let cond = if cond_dim > 0 {
                CondInput::Masked(c.view(), &mask)
            } else {
                CondInput::Null
            };
            let (_, tape) = net.forward(x.view(), &[3, 17], cond).unwrap();
            let mut g = vec![0.0; net.num_params()];
            let dx = net.backward(&tape, w.view(), Some(&mut g));
            let h = 1e-6;
            for k in 0..net.num_params() {
                let p = net.params[k];
                net.params[k] = p + h;
                let fp = loss(&net, &x, &c, &mask, &w);
                net.params[k] = p - h;
                let fm = loss(&net, &x, &c, &mask, &w);
                net.params[k] = p;
                let fd = (fp - fm) / (2.0 * h);
                assert!((fd - g[k]).abs() < 1e-7, "param {k}: {fd} vs {}", g[k]);
            }
            for r in 0..2 {
                for k in 0..3 {
                    let mut xp = x.clone();
                    xp[[r, k]] += h;
                    let mut xm = x.clone();
                    xm[[r, k]] -= h;
                    let fd = (loss(&net, &xp, &c, &mask, &w) - loss(&net, &xm, &c, &mask, &w)) / (2.0 * h);
                    assert!((fd - dx[[r, k]]).abs() < 1e-7);
                }
            }
        }
    }

    #[test]
    fn zero_output_layer_gives_the_independent_gaussian_predictor() {
        let mut net = small(0);
        let lay = Layout::new(&net.shape);
        net.params[lay.out_w..].iter_mut().for_each(|p| *p = 0.0);
        let ab = vec![0.9, 0.6, 0.3];
        let data = Array2::from_shape_vec((2, 3), vec![0.0, 1.0, 0.2, 1.0, 0.0, 0.6]).unwrap();
        let net = net.with_preconditioner(Preconditioner::from_data(data.view(), ab).unwrap()).unwrap();
        let x = Array2::from_shape_vec((1, 3), vec![0.7, -0.1, 0.3]).unwrap();
        let y = net.predict(x.view(), &[2], CondInput::Null).unwrap();
        // E[ε | x] for x = √ᾱ x0 + √(1−ᾱ) ε with x0 ~ N(μ, s²)
        let (mu, var) = ([0.5, 0.5, 0.4], [0.25, 0.25, 0.04]);
        for k in 0..3 {
            let want = (0.4f64).sqrt() * (x[[0, k]] - 0.6f64.sqrt() * mu[k]) / (0.6 * var[k] + 0.4);
            assert!((y[[0, k]] - want).abs() < 1e-12);
        }
        assert!(net.predict(x.view(), &[4], CondInput::Null).is_err());
    }

    #[test]
    fn rotated_zero_output_layer_gives_the_correlated_gaussian_predictor() {
        let mut net = small(0);
        let lay = Layout::new(&net.shape);
        net.params[lay.out_w..].iter_mut().for_each(|p| *p = 0.0);
        let data = Array2::from_shape_vec(
            (4, 3),
            vec![0.0, 0.1, 0.3, 1.0, 0.8, 0.5, 0.4, 0.6, 0.0, 0.7, 0.2, 0.9],
        )
        .unwrap();
        let ab = 0.55;
        let net = net
            .with_preconditioner(Preconditioner::from_data_rotated(data.view(), vec![ab]).unwrap())
            .unwrap();
        let x = Array2::from_shape_vec((1, 3), vec![0.2, -0.4, 1.1]).unwrap();
        let y = net.predict(x.view(), &[1], CondInput::Null).unwrap();
        // √(1−ᾱ) (ᾱΣ + (1−ᾱ)I)⁻¹ (x − √ᾱ μ), solved directly
        let mu: Vec<f64> = (0..3).map(|k| data.column(k).mean().unwrap()).collect();
        let mut sig = nalgebra::Matrix3::<f64>::identity() * (1.0 - ab);
        for row in data.rows() {
            let c = nalgebra::Vector3::new(row[0] - mu[0], row[1] - mu[1], row[2] - mu[2]);
            sig += c * c.transpose() * (ab / 4.0);
        }
        let rhs = nalgebra::Vector3::new(
            x[[0, 0]] - ab.sqrt() * mu[0],
            x[[0, 1]] - ab.sqrt() * mu[1],
            x[[0, 2]] - ab.sqrt() * mu[2],
        );
        let want = sig.lu().solve(&rhs).unwrap() * (1.0 - ab).sqrt();
        for k in 0..3 {
            assert!((y[[0, k]] - want[k]).abs() < 1e-12, "{k}: {} vs {}", y[[0, k]], want[k]);
        }
    }

    #[test]
    fn shape_checks() {
        let net = small(2);
        let x = Array2::<f64>::zeros((2, 4));
        assert!(net.predict(x.view(), &[1, 1], CondInput::Null).is_err());
        let u = small(0);
        let c = Array2::<f64>::zeros((1, 2));
        assert!(u
            .predict(Array2::zeros((1, 3)).view(), &[1], CondInput::All(c.view()))
            .is_err());
    }
}
