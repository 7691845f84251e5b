//! Leverage scores of the stacked basis rows and the sampling distribution
//! built from them.
//!
//! The squared part of the loss is `||B theta||^2` for a block matrix `B`
//! whose `J` rows for observation `i` each carry the concatenated basis row
//! `b_i = (a_i1, ..., a_iJ)` in a different column block. Rows in disjoint
//! column blocks do not interact, so every row of `B` belonging to
//! observation `i` has the leverage of `b_i` inside the `n × dJ` matrix of
//! stacked rows. One score per observation is therefore enough.

use std::io::Write;

use log::warn;
use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::basis::BasisExpansion;
use crate::data::format_float;
use crate::error::{Error, Result};
use crate::linalg::{cholesky, forward_solve, ColMajor, PivotedQr};
use crate::rng;

/// Above this many matrix entries the automatic method switches to a sketch.
pub const EXACT_ENTRY_LIMIT: usize = 50_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScoreMethod {
    ExactQr,
    Sketched,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LeverageMethod {
    Exact,
    Sketched {
        sketch_dim: usize,
        seed: u64,
    },
    /// Exact up to [`EXACT_ENTRY_LIMIT`] entries, sketched beyond.
    Auto {
        seed: u64,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct LeverageScores {
    pub u: Vec<f64>,
    pub rank: usize,
    pub method: ScoreMethod,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SamplingProbabilities {
    /// Normalized probabilities.
    pub p: Vec<f64>,
    /// Unnormalized scores `u_i + 1/n`.
    pub s: Vec<f64>,
}

/// Row `i` is `(a_i1, ..., a_iJ)`.
pub fn stacked_rows(expansion: &BasisExpansion) -> Array2<f64> {
    let (n, jdim, d) = (expansion.n(), expansion.dims(), expansion.dim());
    Array2::from_shape_vec((n, jdim * d), expansion.basis_slice().to_vec()).expect("contiguous n×J×d")
}

fn rank_tolerance(rows: usize, cols: usize) -> f64 {
    rows.max(cols) as f64 * f64::EPSILON
}

fn check_nonzero(flat: &[f64]) -> Result<()> {
    if flat.iter().all(|v| *v == 0.0) {
        return Err(Error::DegenerateInput("stacked basis matrix is all zeros".into()));
    }
    Ok(())
}

/// Leverage scores of the stacked rows.
pub fn leverage_scores(expansion: &BasisExpansion, method: LeverageMethod) -> Result<LeverageScores> {
    let cols = expansion.dims() * expansion.dim();
    match method {
        LeverageMethod::Exact => exact_leverage(expansion),
        LeverageMethod::Sketched { sketch_dim, seed } => sketched_leverage(expansion, sketch_dim, seed),
        LeverageMethod::Auto { seed } => {
            if expansion.n() * cols <= EXACT_ENTRY_LIMIT {
                exact_leverage(expansion)
            } else {
                sketched_leverage(expansion, default_sketch_dim(expansion.n(), cols), seed)
            }
        }
    }
}

/// Sketch size used by [`LeverageMethod::Auto`].
pub fn default_sketch_dim(n: usize, cols: usize) -> usize {
    (8 * cols * cols).max(4 * cols).min(n)
}

fn scores_from_r(flat: &[f64], cols: usize, qr: &PivotedQr) -> Vec<f64> {
    let mut scratch = Vec::with_capacity(qr.rank);
    flat.chunks_exact(cols).map(|row| qr.leverage_of_row(row, &mut scratch)).collect()
}

fn exact_leverage(expansion: &BasisExpansion) -> Result<LeverageScores> {
    let flat = expansion.basis_slice();
    check_nonzero(flat)?;
    let (n, cols) = (expansion.n(), expansion.dims() * expansion.dim());
    let qr = PivotedQr::factor(ColMajor::from_row_major(n, cols, flat), rank_tolerance(n, cols));
    let u = scores_from_r(flat, cols, &qr).into_iter().map(|v| v.clamp(0.0, 1.0)).collect();
    Ok(LeverageScores { u, rank: qr.rank, method: ScoreMethod::ExactQr })
}

/// Approximate leverage scores from the triangular factor of a sketch `S A`.
///
/// With `sketch_dim >= n` the sketch is a random signed permutation, which
/// is orthogonal, so the scores are exact up to rounding. Otherwise each row
/// is hashed into a few sketch rows with random signs (a sparse embedding).
pub fn sketched_leverage(expansion: &BasisExpansion, sketch_dim: usize, seed: u64) -> Result<LeverageScores> {
    let (n, cols) = (expansion.n(), expansion.dims() * expansion.dim());
    if sketch_dim < cols {
        return Err(Error::config(format!("sketch dimension {sketch_dim} is below the column count {cols}")));
    }
    let flat = expansion.basis_slice();
    check_nonzero(flat)?;
    let mut r = rng::stream(seed, "leverage-sketch", &[]);
    let rows = sketch_dim.min(n);
    let mut sketch = ColMajor::zeros(rows, cols);
    if sketch_dim >= n {
        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let k = r.random_range(0..=i);
            perm.swap(i, k);
        }
        for (i, row) in flat.chunks_exact(cols).enumerate() {
            let sign = if r.random::<bool>() { 1.0 } else { -1.0 };
            let target = perm[i];
            for (c, v) in row.iter().enumerate() {
                sketch.data[c * rows + target] = sign * v;
            }
        }
    } else {
        let nnz = 4.min(rows);
        let scale = 1.0 / (nnz as f64).sqrt();
        let mut targets = Vec::with_capacity(nnz);
        for row in flat.chunks_exact(cols) {
            targets.clear();
            while targets.len() < nnz {
                let t = r.random_range(0..rows);
                if !targets.contains(&t) {
                    targets.push(t);
                }
            }
            for &t in &targets {
                let sign = if r.random::<bool>() { scale } else { -scale };
                for (c, v) in row.iter().enumerate() {
                    sketch.data[c * rows + t] += sign * v;
                }
            }
        }
    }
    let qr = PivotedQr::factor(sketch, rank_tolerance(rows, cols));
    let u = scores_from_r(flat, cols, &qr).into_iter().map(|v| v.clamp(0.0, 1.0)).collect();
    Ok(LeverageScores { u, rank: qr.rank, method: ScoreMethod::Sketched })
}

/// `s_i = u_i + 1/n`, `p = s / sum(s)`.
pub fn sampling_probabilities(u: &[f64]) -> SamplingProbabilities {
    let n = u.len() as f64;
    let s: Vec<f64> = u.iter().map(|v| v + 1.0 / n).collect();
    let total: f64 = crate::linalg::pairwise_sum(&s);
    let p = s.iter().map(|v| v / total).collect();
    SamplingProbabilities { p, s }
}

/// Ridge leverage scores `b_i^T (B^T B + gamma I)^{-1} b_i`.
///
/// Not part of the canonical construction; offered to mirror a baseline
/// whose exact definition is not published. `gamma` defaults to
/// `1e-3 * trace(B^T B) / (dJ)`.
pub fn ridge_leverage(expansion: &BasisExpansion, gamma: Option<f64>) -> Result<Vec<f64>> {
    warn!("ridge leverage scores are a non-canonical baseline");
    let flat = expansion.basis_slice();
    check_nonzero(flat)?;
    let cols = expansion.dims() * expansion.dim();
    let mut gram = vec![0.0; cols * cols];
    for row in flat.chunks_exact(cols) {
        for a in 0..cols {
            let ra = row[a];
            if ra == 0.0 {
                continue;
            }
            for b in 0..=a {
                gram[a * cols + b] += ra * row[b];
            }
        }
    }
    for a in 0..cols {
        for b in 0..a {
            gram[b * cols + a] = gram[a * cols + b];
        }
    }
    let trace: f64 = (0..cols).map(|a| gram[a * cols + a]).sum();
    let gamma = gamma.unwrap_or(1e-3 * trace / cols as f64);
    for a in 0..cols {
        gram[a * cols + a] += gamma;
    }
    let l = cholesky(&gram, cols)
        .ok_or_else(|| Error::DegenerateInput("ridge Gram matrix is not positive definite".into()))?;
    let mut buf = vec![0.0; cols];
    Ok(flat
        .chunks_exact(cols)
        .map(|row| {
            buf.copy_from_slice(row);
            forward_solve(&l, cols, &mut buf);
            buf.iter().map(|v| v * v).sum()
        })
        .collect())
}

/// Square roots of the leverage scores (renormalization happens in
/// [`sampling_probabilities`]). Non-canonical, like [`ridge_leverage`].
pub fn root_leverage(u: &[f64]) -> Vec<f64> {
    warn!("root leverage scores are a non-canonical baseline");
    u.iter().map(|v| v.max(0.0).sqrt()).collect()
}

/// `index,u,s,p` CSV.
pub fn write_scores_csv<W: Write>(out: W, u: &[f64], probs: &SamplingProbabilities) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["index", "u", "s", "p"])?;
    for (i, ((u, s), p)) in u.iter().zip(&probs.s).zip(&probs.p).enumerate() {
        w.write_record([i.to_string(), format_float(*u), format_float(*s), format_float(*p)])?;
    }
    w.flush()?;
    Ok(())
}
