//! MCTM parameters and the weighted negative log-likelihood.
//!
//! For observation `i` the transformed scores are `h_ij = <theta_j, a_ij>`
//! and the latent Gaussian coordinates are `z_i = Lambda h_i` with `Lambda`
//! unit lower triangular. The per-observation loss is
//!
//! ```text
//!   sum_j  1/2 z_ij^2 - log(max(<theta_j, a'_ij>, eta))
//! ```
//!
//! split into the squared part `f1`, the positive part of the log term `f2`
//! and its negative part `f3`, so `total = f1 - f2 + f3`.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::basis::{unit_ramp, BasisConfig, BasisExpansion};
use crate::error::{Error, Result};
use crate::linalg::pairwise_sum;

/// Clamp level used when no coreset tolerance ties it down.
pub const DEFAULT_ETA: f64 = 1e-6;

/// Observations per partial sum. Partial sums are reduced pairwise, so the
/// result only depends on the data order.
const CHUNK: usize = 256;

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    /// `J × d` marginal coefficients, one row per dimension.
    pub theta: Array2<f64>,
    /// Strictly lower-triangular entries of `Lambda`, row by row:
    /// `(1,0), (2,0), (2,1), (3,0), ...`.
    pub lambda: Vec<f64>,
    /// Floor applied to the log argument.
    pub eta: f64,
}

/// Position of `lambda_{jk}` (`k < j`) in the packed vector.
#[inline]
pub fn lambda_index(j: usize, k: usize) -> usize {
    debug_assert!(k < j);
    j * (j - 1) / 2 + k
}

pub fn lambda_len(dims: usize) -> usize {
    dims * dims.saturating_sub(1) / 2
}

impl ModelParams {
    pub fn new(theta: Array2<f64>, lambda: Vec<f64>, eta: f64) -> Result<Self> {
        let dims = theta.nrows();
        if lambda.len() != lambda_len(dims) {
            return Err(Error::config(format!(
                "{} dimensions need {} lambda entries, got {}",
                dims,
                lambda_len(dims),
                lambda.len()
            )));
        }
        if !(eta >= 0.0) {
            return Err(Error::config("eta must be nonnegative"));
        }
        Ok(Self { theta, lambda, eta })
    }

    /// Linear marginals `h_j(t) = t` on the unit scale and independence.
    pub fn ramp(dims: usize, dim: usize, eta: f64) -> Self {
        let ramp = unit_ramp(dim);
        let theta = Array2::from_shape_fn((dims, dim), |(_, k)| ramp[k]);
        Self { theta, lambda: vec![0.0; lambda_len(dims)], eta }
    }

    pub fn dims(&self) -> usize {
        self.theta.nrows()
    }

    pub fn dim(&self) -> usize {
        self.theta.ncols()
    }

    pub fn lambda_at(&self, j: usize, k: usize) -> f64 {
        match j.cmp(&k) {
            std::cmp::Ordering::Equal => 1.0,
            std::cmp::Ordering::Less => 0.0,
            std::cmp::Ordering::Greater => self.lambda[lambda_index(j, k)],
        }
    }

    /// The full unit lower-triangular matrix.
    pub fn lambda_matrix(&self) -> Array2<f64> {
        let j = self.dims();
        Array2::from_shape_fn((j, j), |(r, c)| self.lambda_at(r, c))
    }

    /// Covariance `Lambda^{-1} Lambda^{-T}` of the transformed outcome.
    pub fn implied_covariance(&self) -> Array2<f64> {
        let j = self.dims();
        // invert the unit lower-triangular factor column by column
        let mut inv = Array2::<f64>::zeros((j, j));
        for c in 0..j {
            inv[[c, c]] = 1.0;
            for r in c + 1..j {
                let mut s = 0.0;
                for k in c..r {
                    s -= self.lambda_at(r, k) * inv[[k, c]];
                }
                inv[[r, c]] = s;
            }
        }
        inv.dot(&inv.t())
    }

    /// Correlation matrix implied by `Lambda`.
    pub fn implied_correlation(&self) -> Array2<f64> {
        let cov = self.implied_covariance();
        let j = self.dims();
        Array2::from_shape_fn((j, j), |(r, c)| cov[[r, c]] / (cov[[r, r]] * cov[[c, c]]).sqrt())
    }

    /// Density of the `j`-th marginal at a raw value:
    /// `phi(h_j(y) / s_j) h_j'(y) / s_j`, with `s_j^2` the implied variance.
    pub fn marginal_density(&self, config: &BasisConfig, j: usize, y: f64) -> f64 {
        let d = self.dim();
        let (mut a, mut da) = (vec![0.0; d], vec![0.0; d]);
        config.eval(j, y, &mut a, &mut da);
        let row = self.theta.row(j);
        let h: f64 = a.iter().zip(row.iter()).map(|(x, c)| x * c).sum();
        let dh: f64 = da.iter().zip(row.iter()).map(|(x, c)| x * c).sum();
        let s = self.implied_covariance()[[j, j]].sqrt();
        let z = h / s;
        (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt() * dh / s
    }
}

/// The three parts of the weighted loss.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub f1: f64,
    pub f2: f64,
    pub f3: f64,
    pub total: f64,
    pub clamp_count: usize,
}

impl LossBreakdown {
    fn combine(parts: &[LossBreakdown]) -> LossBreakdown {
        let f1 = pairwise_sum(&parts.iter().map(|p| p.f1).collect::<Vec<_>>());
        let f2 = pairwise_sum(&parts.iter().map(|p| p.f2).collect::<Vec<_>>());
        let f3 = pairwise_sum(&parts.iter().map(|p| p.f3).collect::<Vec<_>>());
        LossBreakdown { f1, f2, f3, total: f1 - f2 + f3, clamp_count: parts.iter().map(|p| p.clamp_count).sum() }
    }

    /// `nJ (ln c + 1)`: the constant that makes every per-cell loss
    /// nonnegative when each likelihood factor is bounded by `c`.
    pub fn normalization_shift(n: usize, dims: usize, c: f64) -> f64 {
        (n * dims) as f64 * (c.ln() + 1.0)
    }
}

/// Gradient of the total loss with respect to the free parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradient {
    pub theta: Array2<f64>,
    pub lambda: Vec<f64>,
}

impl Gradient {
    pub fn zeros(dims: usize, dim: usize) -> Self {
        Self { theta: Array2::zeros((dims, dim)), lambda: vec![0.0; lambda_len(dims)] }
    }

    /// `theta` (row-major) followed by `lambda`.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.theta.iter().copied().collect();
        v.extend_from_slice(&self.lambda);
        v
    }
}

fn check_shapes(expansion: &BasisExpansion, params: &ModelParams, weights: Option<&[f64]>) -> Result<()> {
    if expansion.dims() != params.dims() || expansion.dim() != params.dim() {
        return Err(Error::config(format!(
            "parameters are {}×{}, expansion has {} dimensions of size {}",
            params.dims(),
            params.dim(),
            expansion.dims(),
            expansion.dim()
        )));
    }
    if let Some(w) = weights {
        if w.len() != expansion.n() {
            return Err(Error::config(format!("{} weights for {} observations", w.len(), expansion.n())));
        }
        if let Some(bad) = w.iter().position(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::config(format!("weight {bad} is negative or not finite")));
        }
    }
    Ok(())
}

/// Loss and (optionally) gradient over observations `rows`.
fn evaluate_chunk(
    expansion: &BasisExpansion,
    params: &ModelParams,
    weights: Option<&[f64]>,
    rows: std::ops::Range<usize>,
    mut grad: Option<&mut Gradient>,
) -> Result<LossBreakdown> {
    let (jdim, d) = (params.dims(), params.dim());
    let a = expansion.basis_slice();
    let da = expansion.deriv_slice();
    let theta = params.theta.as_slice().expect("standard layout");
    let eta = params.eta;

    let mut h = vec![0.0; jdim];
    let mut z = vec![0.0; jdim];
    let mut r = vec![0.0; jdim];
    let mut inv_g = vec![0.0; jdim];
    let mut out = LossBreakdown::default();

    for i in rows {
        let w = weights.map_or(1.0, |w| w[i]);
        let (mut f1, mut f2, mut f3) = (0.0, 0.0, 0.0);
        for j in 0..jdim {
            let off = (i * jdim + j) * d;
            let th = &theta[j * d..(j + 1) * d];
            let mut hv = 0.0;
            let mut gv = 0.0;
            for k in 0..d {
                hv += a[off + k] * th[k];
                gv += da[off + k] * th[k];
            }
            h[j] = hv;
            let mut zv = hv;
            for k in 0..j {
                zv += params.lambda[lambda_index(j, k)] * h[k];
            }
            z[j] = zv;
            f1 += 0.5 * zv * zv;

            let arg = if gv < eta {
                if eta == 0.0 {
                    return Err(Error::NonPositiveLogArgument { obs: i, dim: j, value: gv });
                }
                out.clamp_count += 1;
                inv_g[j] = 0.0;
                eta
            } else {
                inv_g[j] = 1.0 / gv;
                gv
            };
            let lg = arg.ln();
            if lg > 0.0 {
                f2 += lg;
            } else {
                f3 -= lg;
            }
        }
        out.f1 += w * f1;
        out.f2 += w * f2;
        out.f3 += w * f3;

        if let Some(g) = grad.as_deref_mut() {
            // r = Lambda^T z
            for k in 0..jdim {
                let mut s = z[k];
                for j in k + 1..jdim {
                    s += params.lambda[lambda_index(j, k)] * z[j];
                }
                r[k] = s;
            }
            let gt = g.theta.as_slice_mut().expect("standard layout");
            for j in 0..jdim {
                let off = (i * jdim + j) * d;
                let (cr, cg) = (w * r[j], w * inv_g[j]);
                let gj = &mut gt[j * d..(j + 1) * d];
                for k in 0..d {
                    gj[k] += cr * a[off + k] - cg * da[off + k];
                }
                for k in 0..j {
                    g.lambda[lambda_index(j, k)] += w * z[j] * h[k];
                }
            }
        }
    }
    out.total = out.f1 - out.f2 + out.f3;
    Ok(out)
}

fn evaluate(
    expansion: &BasisExpansion,
    params: &ModelParams,
    weights: Option<&[f64]>,
    want_grad: bool,
) -> Result<(LossBreakdown, Option<Gradient>)> {
    check_shapes(expansion, params, weights)?;
    let n = expansion.n();
    let chunks = n.div_ceil(CHUNK);
    let mut parts = Vec::with_capacity(chunks);
    let mut grads = Vec::with_capacity(if want_grad { chunks } else { 0 });
    for c in 0..chunks {
        let rows = c * CHUNK..((c + 1) * CHUNK).min(n);
        if want_grad {
            let mut g = Gradient::zeros(params.dims(), params.dim());
            parts.push(evaluate_chunk(expansion, params, weights, rows, Some(&mut g))?);
            grads.push(g);
        } else {
            parts.push(evaluate_chunk(expansion, params, weights, rows, None)?);
        }
    }
    let loss = LossBreakdown::combine(&parts);
    let grad = want_grad.then(|| {
        let mut g = Gradient::zeros(params.dims(), params.dim());
        let mut buf = vec![0.0; grads.len()];
        for (idx, v) in g.theta.iter_mut().enumerate() {
            for (b, part) in buf.iter_mut().zip(&grads) {
                *b = part.theta.as_slice().unwrap()[idx];
            }
            *v = pairwise_sum(&buf);
        }
        for (idx, v) in g.lambda.iter_mut().enumerate() {
            for (b, part) in buf.iter_mut().zip(&grads) {
                *b = part.lambda[idx];
            }
            *v = pairwise_sum(&buf);
        }
        g
    });
    Ok((loss, grad))
}

/// Weighted negative log-likelihood. `weights = None` means unit weights.
pub fn nll(expansion: &BasisExpansion, params: &ModelParams, weights: Option<&[f64]>) -> Result<LossBreakdown> {
    Ok(evaluate(expansion, params, weights, false)?.0)
}

/// Analytic gradient of [`nll`]. Clamped cells contribute no log-term gradient.
pub fn nll_gradient(expansion: &BasisExpansion, params: &ModelParams, weights: Option<&[f64]>) -> Result<Gradient> {
    Ok(evaluate(expansion, params, weights, true)?.1.expect("requested"))
}

/// Loss and gradient in one pass.
pub fn nll_with_gradient(
    expansion: &BasisExpansion,
    params: &ModelParams,
    weights: Option<&[f64]>,
) -> Result<(LossBreakdown, Gradient)> {
    let (l, g) = evaluate(expansion, params, weights, true)?;
    Ok((l, g.expect("requested")))
}

/// Move `params` into the region where every log argument is at least `eta`
/// by adding the smallest multiple of the identity ramp to each offending
/// `theta_j`. Dimensions already inside are untouched.
pub fn shift_into_domain(params: &ModelParams, expansion: &BasisExpansion, eta: f64) -> Result<ModelParams> {
    check_shapes(expansion, params, None)?;
    if !(eta >= 0.0) {
        return Err(Error::config("eta must be nonnegative"));
    }
    let (n, jdim, d) = (expansion.n(), params.dims(), params.dim());
    let ramp = unit_ramp(d);
    let da = expansion.deriv_slice();
    let mut out = params.clone();
    out.eta = eta;
    // at eta = 0 the argument must still be strictly positive
    let target = if eta > 0.0 { eta } else { 1e-12 };
    for j in 0..jdim {
        let th = params.theta.row(j);
        let mut c: f64 = 0.0;
        for i in 0..n {
            let off = (i * jdim + j) * d;
            let row = &da[off..off + d];
            let g: f64 = row.iter().zip(th.iter()).map(|(x, c)| x * c).sum();
            let outside = if eta > 0.0 { g < eta } else { g <= 0.0 };
            if !outside {
                continue;
            }
            let gain: f64 = row.iter().zip(&ramp).map(|(x, c)| x * c).sum();
            if !(gain > 0.0) {
                return Err(Error::InfeasibleShift { dim: j });
            }
            c = c.max((target - g) / gain);
        }
        if c > 0.0 {
            for (t, r) in out.theta.row_mut(j).iter_mut().zip(&ramp) {
                *t += c * r;
            }
        }
    }
    Ok(out)
}

/// On-disk form of a fitted model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub degree: usize,
    pub bounds: Vec<(f64, f64)>,
    pub theta: Vec<Vec<f64>>,
    pub lambda: Vec<f64>,
    pub eta: f64,
}

impl ModelDocument {
    pub fn new(params: &ModelParams, config: &BasisConfig) -> Self {
        Self {
            degree: config.degree,
            bounds: config.bounds.clone(),
            theta: params.theta.rows().into_iter().map(|r| r.to_vec()).collect(),
            lambda: params.lambda.clone(),
            eta: params.eta,
        }
    }

    pub fn into_parts(self) -> Result<(ModelParams, BasisConfig)> {
        let config = BasisConfig::new(self.degree, self.bounds)?;
        let dims = self.theta.len();
        let d = config.dim();
        if dims != config.dims() || self.theta.iter().any(|r| r.len() != d) {
            return Err(Error::config("theta shape does not match degree and bounds"));
        }
        let flat: Vec<f64> = self.theta.into_iter().flatten().collect();
        let theta = Array2::from_shape_vec((dims, d), flat).expect("checked");
        Ok((ModelParams::new(theta, self.lambda, self.eta)?, config))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}
