//! Weighted maximum-likelihood fitting.
//!
//! The optimizer works on the loss divided by the total weight, which leaves
//! the minimizer unchanged but makes the gradient tolerance independent of
//! `n` and of the weight scale.

pub mod lbfgs;

use std::time::Instant;

use log::debug;
use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::basis::{unit_ramp, BasisExpansion};
use crate::error::{Error, Result};
use crate::model::{self, lambda_len, LossBreakdown, ModelParams, DEFAULT_ETA};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Parametrization {
    /// Optimize `theta` directly; the log argument is floored at `eta`.
    RawClamped,
    /// `theta_j` = free intercept plus cumulative softplus increments, so
    /// every fitted marginal transformation is strictly increasing.
    MonotoneReparam,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Initializer {
    /// Standardized identity marginals and `Lambda = I`.
    IdentityMarginals,
    /// Identity start perturbed with noise from `seed`.
    RandomSeeded,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub max_iters: usize,
    pub grad_tol: f64,
    pub parametrization: Parametrization,
    pub initializer: Initializer,
    pub seed: u64,
    pub eta: f64,
    pub memory: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            max_iters: 500,
            grad_tol: 1e-6,
            parametrization: Parametrization::MonotoneReparam,
            initializer: Initializer::IdentityMarginals,
            seed: 0,
            eta: DEFAULT_ETA,
            memory: 10,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters < 1 {
            return Err(Error::config("max_iters must be at least 1"));
        }
        if !(self.grad_tol > 0.0) {
            return Err(Error::config("gradient tolerance must be positive"));
        }
        if !(self.eta >= 0.0) {
            return Err(Error::config("eta must be nonnegative"));
        }
        if self.memory < 1 {
            return Err(Error::config("quasi-Newton memory must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct FitResult {
    /// Raw coefficients, whatever the parametrization used.
    pub params: ModelParams,
    pub loss: LossBreakdown,
    pub iterations: usize,
    pub converged: bool,
    /// The line search gave up before convergence.
    pub stalled: bool,
    /// Gradient norm of the weight-normalized loss at the returned point.
    pub grad_norm: f64,
    pub evaluations: usize,
    pub fit_time_s: f64,
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

fn softplus_inv(y: f64) -> f64 {
    debug_assert!(y > 0.0);
    if y > 30.0 {
        y
    } else {
        y.exp_m1().ln()
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Maps the optimizer's unconstrained vector to model parameters and back.
struct Layout {
    dims: usize,
    dim: usize,
    parametrization: Parametrization,
    eta: f64,
}

impl Layout {
    fn len(&self) -> usize {
        self.dims * self.dim + lambda_len(self.dims)
    }

    fn to_params(&self, x: &[f64]) -> ModelParams {
        let (jdim, d) = (self.dims, self.dim);
        let mut theta = Array2::zeros((jdim, d));
        for j in 0..jdim {
            let src = &x[j * d..(j + 1) * d];
            match self.parametrization {
                Parametrization::RawClamped => theta.row_mut(j).iter_mut().zip(src).for_each(|(t, v)| *t = *v),
                Parametrization::MonotoneReparam => {
                    let mut acc = src[0];
                    theta[[j, 0]] = acc;
                    for k in 1..d {
                        acc += softplus(src[k]);
                        theta[[j, k]] = acc;
                    }
                }
            }
        }
        ModelParams { theta, lambda: x[jdim * d..].to_vec(), eta: self.eta }
    }

    /// Inverse of [`Layout::to_params`]; monotone layouts need strictly
    /// increasing coefficients.
    fn to_free(&self, p: &ModelParams) -> Vec<f64> {
        let (jdim, d) = (self.dims, self.dim);
        let mut x = Vec::with_capacity(self.len());
        for j in 0..jdim {
            let row = p.theta.row(j);
            match self.parametrization {
                Parametrization::RawClamped => x.extend(row.iter()),
                Parametrization::MonotoneReparam => {
                    x.push(row[0]);
                    for k in 1..d {
                        x.push(softplus_inv((row[k] - row[k - 1]).max(1e-10)));
                    }
                }
            }
        }
        x.extend_from_slice(&p.lambda);
        x
    }

    /// Chain rule from the raw gradient to the unconstrained coordinates.
    fn pull_back(&self, x: &[f64], raw: &model::Gradient, scale: f64, out: &mut [f64]) {
        let (jdim, d) = (self.dims, self.dim);
        let gt = raw.theta.as_slice().expect("standard layout");
        for j in 0..jdim {
            let g = &gt[j * d..(j + 1) * d];
            let o = &mut out[j * d..(j + 1) * d];
            match self.parametrization {
                Parametrization::RawClamped => {
                    for k in 0..d {
                        o[k] = g[k] * scale;
                    }
                }
                Parametrization::MonotoneReparam => {
                    // suffix sums: theta_m depends on every increment k <= m
                    let mut tail = 0.0;
                    for k in (1..d).rev() {
                        tail += g[k];
                        o[k] = tail * sigmoid(x[j * d + k]) * scale;
                    }
                    o[0] = (tail + g[0]) * scale;
                }
            }
        }
        for (o, g) in out[jdim * d..].iter_mut().zip(&raw.lambda) {
            *o = g * scale;
        }
    }
}

/// Starting parameters for `expansion` under `config`.
pub fn initial_params(expansion: &BasisExpansion, weights: Option<&[f64]>, config: &FitConfig) -> ModelParams {
    let (n, jdim, d) = (expansion.n(), expansion.dims(), expansion.dim());
    let ramp = unit_ramp(d);
    let a = expansion.basis_slice();
    let mut theta = Array2::zeros((jdim, d));
    for j in 0..jdim {
        if d == 1 {
            theta[[j, 0]] = 1.0;
            continue;
        }
        // weighted moments of the unit-scale position t = <a_ij, ramp>
        let (mut sw, mut s1, mut s2) = (0.0, 0.0, 0.0);
        for i in 0..n {
            let w = weights.map_or(1.0, |w| w[i]);
            let off = (i * jdim + j) * d;
            let t: f64 = a[off..off + d].iter().zip(&ramp).map(|(x, r)| x * r).sum();
            sw += w;
            s1 += w * t;
            s2 += w * t * t;
        }
        let mean = if sw > 0.0 { s1 / sw } else { 0.5 };
        let var = if sw > 0.0 { (s2 / sw - mean * mean).max(0.0) } else { 1.0 / 12.0 };
        let sd = var.sqrt().max(1e-3);
        for k in 0..d {
            theta[[j, k]] = (ramp[k] - mean) / sd;
        }
    }
    let mut params = ModelParams { theta, lambda: vec![0.0; lambda_len(jdim)], eta: config.eta };
    if config.initializer == Initializer::RandomSeeded {
        let mut r = rng::stream(config.seed, "fit-init", &[]);
        for j in 0..jdim {
            let mut prev_old = params.theta[[j, 0]];
            let shift: f64 = 0.2 * r.sample::<f64, _>(StandardNormal);
            params.theta[[j, 0]] += shift;
            for k in 1..d {
                let old = params.theta[[j, k]];
                let inc = (old - prev_old) * (0.2 * r.sample::<f64, _>(StandardNormal)).exp();
                prev_old = old;
                params.theta[[j, k]] = params.theta[[j, k - 1]] + inc;
            }
        }
        for l in params.lambda.iter_mut() {
            *l = 0.1 * r.sample::<f64, _>(StandardNormal);
        }
    }
    params
}

/// Fit by weighted maximum likelihood. `weights = None` means unit weights.
pub fn fit(expansion: &BasisExpansion, weights: Option<&[f64]>, config: &FitConfig) -> Result<FitResult> {
    let start = initial_params(expansion, weights, config);
    fit_from(expansion, weights, config, start)
}

/// Fit starting from the given parameters.
pub fn fit_from(
    expansion: &BasisExpansion,
    weights: Option<&[f64]>,
    config: &FitConfig,
    start: ModelParams,
) -> Result<FitResult> {
    config.validate()?;
    if expansion.n() == 0 {
        return Err(Error::config("cannot fit an empty expansion"));
    }
    if let Some(w) = weights {
        if w.len() != expansion.n() {
            return Err(Error::config(format!("{} weights for {} observations", w.len(), expansion.n())));
        }
        if w.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::config("fit weights must be positive and finite"));
        }
    }
    let clock = Instant::now();
    let total_weight = weights.map_or(expansion.n() as f64, |w| w.iter().sum());
    let scale = 1.0 / total_weight;
    let layout = Layout {
        dims: expansion.dims(),
        dim: expansion.dim(),
        parametrization: config.parametrization,
        eta: config.eta,
    };
    let mut start = start;
    start.eta = config.eta;
    let x0 = layout.to_free(&start);

    let objective = |x: &[f64], g: &mut [f64]| -> f64 {
        let p = layout.to_params(x);
        match model::nll_with_gradient(expansion, &p, weights) {
            Ok((loss, raw)) => {
                layout.pull_back(x, &raw, scale, g);
                loss.total * scale
            }
            Err(_) => f64::NAN,
        }
    };
    let opts = lbfgs::Options { max_iters: config.max_iters, grad_tol: config.grad_tol, memory: config.memory };
    let outcome = lbfgs::minimize(objective, x0, &opts)
        .map_err(|_| Error::Diverged { iterations: 0, last: Box::new(start.clone()) })?;
    let params = layout.to_params(&outcome.x);
    let loss = model::nll(expansion, &params, weights)?;
    if !loss.total.is_finite() {
        return Err(Error::Diverged { iterations: outcome.iterations, last: Box::new(params) });
    }
    let fit_time_s = clock.elapsed().as_secs_f64();
    debug!(
        "fit: {} iterations, {:?}, |g| = {:.3e}, total = {:.6}",
        outcome.iterations, outcome.status, outcome.grad_norm, loss.total
    );
    Ok(FitResult {
        params,
        loss,
        iterations: outcome.iterations,
        converged: outcome.status == lbfgs::Status::Converged,
        stalled: outcome.status == lbfgs::Status::Stalled,
        grad_norm: outcome.grad_norm,
        evaluations: outcome.evaluations,
        fit_time_s,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{expand, fit_bounds, BoundPolicy};
    use crate::data::Dataset;
    use ndarray::Array2;
    use rand::SeedableRng;

    fn normal_sample(n: usize, seed: u64) -> Dataset {
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let v: Vec<f64> = (0..n).map(|_| r.sample::<f64, _>(StandardNormal)).collect();
        Dataset::from_values(Array2::from_shape_vec((n, 1), v).unwrap())
    }

    #[test]
    fn reparametrization_round_trips_and_chains() {
        let layout = Layout { dims: 2, dim: 3, parametrization: Parametrization::MonotoneReparam, eta: 0.0 };
        let x = vec![0.3, -0.2, 1.1, -1.0, 0.4, 0.0, 0.25];
        let p = layout.to_params(&x);
        let back = layout.to_free(&p);
        for (a, b) in x.iter().zip(&back) {
            assert!((a - b).abs() < 1e-12);
        }
        // chain rule against finite differences of a linear functional of theta
        let weights = Array2::from_shape_fn((2, 3), |(j, k)| 1.0 + j as f64 - 0.5 * k as f64);
        let raw = model::Gradient { theta: weights.clone(), lambda: vec![2.0] };
        let mut g = vec![0.0; 7];
        layout.pull_back(&x, &raw, 1.0, &mut g);
        let f = |x: &[f64]| {
            let p = layout.to_params(x);
            (&p.theta * &weights).sum() + 2.0 * p.lambda[0]
        };
        for c in 0..7 {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[c] += 1e-6;
            xm[c] -= 1e-6;
            let fd = (f(&xp) - f(&xm)) / 2e-6;
            assert!((fd - g[c]).abs() < 1e-7, "coord {c}: {fd} vs {}", g[c]);
        }
    }

    #[test]
    fn weight_scaling_leaves_argmin_unchanged() {
        let data = normal_sample(300, 3);
        let cfg = fit_bounds(&data, 4, &BoundPolicy::default()).unwrap();
        let e = expand(&data, &cfg).unwrap();
        let fc = FitConfig::default();
        let one = fit(&e, Some(&vec![1.0; 300]), &fc).unwrap();
        let two = fit(&e, Some(&vec![2.0; 300]), &fc).unwrap();
        for (a, b) in one.params.theta.iter().zip(two.params.theta.iter()) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
        assert!((two.loss.total - 2.0 * one.loss.total).abs() < 1e-8 * one.loss.total.abs().max(1.0));
    }

    #[test]
    fn fit_is_deterministic() {
        let data = normal_sample(200, 5);
        let cfg = fit_bounds(&data, 5, &BoundPolicy::default()).unwrap();
        let e = expand(&data, &cfg).unwrap();
        let fc = FitConfig { initializer: Initializer::RandomSeeded, seed: 11, ..FitConfig::default() };
        let a = fit(&e, None, &fc).unwrap();
        let b = fit(&e, None, &fc).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.loss, b.loss);
        assert_eq!(a.iterations, b.iterations);
    }

    #[test]
    fn infeasible_start_is_diverged() {
        let data = normal_sample(50, 1);
        let cfg = fit_bounds(&data, 3, &BoundPolicy::default()).unwrap();
        let e = expand(&data, &cfg).unwrap();
        let fc = FitConfig { eta: 0.0, parametrization: Parametrization::RawClamped, ..FitConfig::default() };
        let start = ModelParams::new(Array2::zeros((1, 4)), vec![], 0.0).unwrap();
        assert!(matches!(fit_from(&e, None, &fc, start), Err(Error::Diverged { .. })));
    }

    #[test]
    fn rejects_bad_config() {
        let data = normal_sample(20, 1);
        let cfg = fit_bounds(&data, 3, &BoundPolicy::default()).unwrap();
        let e = expand(&data, &cfg).unwrap();
        let fc = FitConfig { max_iters: 0, ..FitConfig::default() };
        assert!(matches!(fit(&e, None, &fc), Err(Error::InvalidConfig(_))));
    }
}
