//! Weighted observation subsets: uniform, leverage-sampled, and the hybrid
//! of leverage sampling with convex hull augmentation.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::basis::BasisExpansion;
use crate::data::format_float;
use crate::error::{Error, Result};
use crate::hull::{hull_augmentation, HullPooling};
use crate::rng;
use crate::scores::{leverage_scores, sampling_probabilities, LeverageMethod, SamplingProbabilities};

pub const DEFAULT_ALPHA: f64 = 0.8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoresetMethod {
    Uniform,
    L2Only,
    L2Hull,
}

impl CoresetMethod {
    pub const ALL: [CoresetMethod; 3] = [CoresetMethod::Uniform, CoresetMethod::L2Only, CoresetMethod::L2Hull];

    pub fn as_str(self) -> &'static str {
        match self {
            CoresetMethod::Uniform => "uniform",
            CoresetMethod::L2Only => "l2-only",
            CoresetMethod::L2Hull => "l2-hull",
        }
    }
}

impl fmt::Display for CoresetMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CoresetMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "uniform" => Ok(CoresetMethod::Uniform),
            "l2-only" | "l2" => Ok(CoresetMethod::L2Only),
            "l2-hull" | "hybrid" => Ok(CoresetMethod::L2Hull),
            other => Err(Error::config(format!("unknown coreset method `{other}`"))),
        }
    }
}

/// A weighted subset of observations. Indices are distinct and ascending.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoresetSample {
    pub indices: Vec<usize>,
    pub weights: Vec<f64>,
    pub method: CoresetMethod,
    pub k_target: usize,
    pub alpha: f64,
    pub seed: u64,
    pub sample_time_s: f64,
}

impl CoresetSample {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Weighted sum `sum_s w_s g[i_s]`.
    pub fn weighted_sum(&self, g: &[f64]) -> f64 {
        self.indices.iter().zip(&self.weights).map(|(&i, w)| w * g[i]).sum()
    }

    /// `index,weight` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["index", "weight"])?;
        for (i, wt) in self.indices.iter().zip(&self.weights) {
            w.write_record([i.to_string(), format_float(*wt)])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Metadata without the index list.
    pub fn metadata_json(&self) -> Result<String> {
        let meta = serde_json::json!({
            "method": self.method,
            "k": self.k_target,
            "size": self.indices.len(),
            "alpha": self.alpha,
            "seed": self.seed,
            "sample_time_s": self.sample_time_s,
        });
        Ok(serde_json::to_string_pretty(&meta)?)
    }

    /// Reads an `index,weight` CSV back into `(indices, weights)`.
    pub fn read_weights<R: std::io::Read>(input: R) -> Result<(Vec<usize>, Vec<f64>)> {
        let mut r = csv::Reader::from_reader(input);
        let mut indices = Vec::new();
        let mut weights = Vec::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec?;
            let bad = |what: &str| Error::Load {
                path: "<coreset>".into(),
                line: line as u64 + 2,
                message: format!("unparsable {what}"),
            };
            let i: usize = rec.get(0).and_then(|s| s.trim().parse().ok()).ok_or_else(|| bad("index"))?;
            let w: f64 = rec.get(1).and_then(|s| s.trim().parse().ok()).ok_or_else(|| bad("weight"))?;
            if !(w > 0.0 && w.is_finite()) {
                return Err(bad("weight (must be positive)"));
            }
            indices.push(i);
            weights.push(w);
        }
        Ok((indices, weights))
    }
}

fn merge(draws: impl IntoIterator<Item = (usize, f64)>) -> (Vec<usize>, Vec<f64>) {
    let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
    for (i, w) in draws {
        *acc.entry(i).or_insert(0.0) += w;
    }
    acc.into_iter().unzip()
}

/// `k` distinct indices uniformly without replacement, each weighted `n/k`.
pub fn sample_uniform(n: usize, k: usize, seed: u64) -> Result<CoresetSample> {
    if k == 0 || k > n {
        return Err(Error::config(format!("uniform sample size must lie in 1..={n}, got {k}")));
    }
    let start = Instant::now();
    let mut r = rng::stream(seed, "coreset-uniform", &[]);
    let mut indices = rand::seq::index::sample(&mut r, n, k).into_vec();
    indices.sort_unstable();
    let w = n as f64 / k as f64;
    Ok(CoresetSample {
        weights: vec![w; k],
        indices,
        method: CoresetMethod::Uniform,
        k_target: k,
        alpha: 1.0,
        seed,
        sample_time_s: start.elapsed().as_secs_f64(),
    })
}

fn l2_draws(p: &[f64], k: usize, seed: u64) -> Result<Vec<(usize, f64)>> {
    let dist = WeightedIndex::new(p).map_err(|e| Error::config(format!("invalid sampling probabilities: {e}")))?;
    let total: f64 = p.iter().sum();
    let mut r = rng::stream(seed, "coreset-l2", &[]);
    Ok((0..k)
        .map(|_| {
            let i = dist.sample(&mut r);
            (i, total / (k as f64 * p[i]))
        })
        .collect())
}

/// `k` independent draws from `probabilities`, each weighted `1/(k p_i)`;
/// repeated indices are merged by summing their weights.
pub fn sample_l2(probabilities: &SamplingProbabilities, k: usize, seed: u64) -> Result<CoresetSample> {
    if k == 0 {
        return Err(Error::config("sample size must be at least 1"));
    }
    let start = Instant::now();
    let (indices, weights) = merge(l2_draws(&probabilities.p, k, seed)?);
    Ok(CoresetSample {
        indices,
        weights,
        method: CoresetMethod::L2Only,
        k_target: k,
        alpha: 1.0,
        seed,
        sample_time_s: start.elapsed().as_secs_f64(),
    })
}

/// Leverage sampling for `floor(alpha k)` draws plus hull augmentation for
/// the remaining `k - floor(alpha k)` observations at weight 1.
pub fn sample_hybrid(
    expansion: &BasisExpansion,
    probabilities: &SamplingProbabilities,
    k: usize,
    alpha: f64,
    epsilon: f64,
    seed: u64,
    pooling: HullPooling,
) -> Result<CoresetSample> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::config(format!("alpha must lie in (0, 1], got {alpha}")));
    }
    if k < 2 {
        return Err(Error::config("hybrid sample size must be at least 2"));
    }
    let start = Instant::now();
    let k1 = (alpha * k as f64).floor() as usize;
    let k2 = k - k1;
    let mut draws = if k1 > 0 { l2_draws(&probabilities.p, k1, seed)? } else { Vec::new() };
    let hull = hull_augmentation(expansion, k2, epsilon, rng::derive_seed(seed, "coreset-hull", &[]), pooling)?;
    draws.extend(hull.observations.into_iter().map(|i| (i, 1.0)));
    let (indices, weights) = merge(draws);
    Ok(CoresetSample {
        indices,
        weights,
        method: CoresetMethod::L2Hull,
        k_target: k,
        alpha,
        seed,
        sample_time_s: start.elapsed().as_secs_f64(),
    })
}

/// Settings shared by [`build_coreset`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoresetOptions {
    pub alpha: f64,
    pub epsilon: f64,
    pub pooling: HullPooling,
}

impl Default for CoresetOptions {
    fn default() -> Self {
        Self { alpha: DEFAULT_ALPHA, epsilon: 0.01, pooling: HullPooling::Pooled }
    }
}

/// Runs one method end to end, scores included. `sample_time_s` covers the
/// leverage computation and hull selection as well as the draws.
pub fn build_coreset(
    method: CoresetMethod,
    expansion: &BasisExpansion,
    k: usize,
    options: &CoresetOptions,
    seed: u64,
) -> Result<CoresetSample> {
    let start = Instant::now();
    let mut sample = match method {
        CoresetMethod::Uniform => sample_uniform(expansion.n(), k.min(expansion.n()), seed)?,
        CoresetMethod::L2Only | CoresetMethod::L2Hull => {
            let scores =
                leverage_scores(expansion, LeverageMethod::Auto { seed: rng::derive_seed(seed, "scores", &[]) })?;
            let probs = sampling_probabilities(&scores.u);
            if method == CoresetMethod::L2Only {
                sample_l2(&probs, k, seed)?
            } else {
                sample_hybrid(expansion, &probs, k, options.alpha, options.epsilon, seed, options.pooling)?
            }
        }
    };
    sample.k_target = k;
    sample.sample_time_s = start.elapsed().as_secs_f64();
    Ok(sample)
}
