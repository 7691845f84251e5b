//! Benchmark runner: fit the full data once, then draw coresets with each
//! method, fit on them, and compare against the full fit.

use std::collections::BTreeMap;
use std::io::Write;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use log::{info, warn};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::basis::{expand, fit_bounds, BasisExpansion, BoundPolicy, DEFAULT_DEGREE, DEFAULT_MARGIN};
use crate::coreset::{build_coreset, CoresetMethod, CoresetOptions, DEFAULT_ALPHA};
use crate::data::{format_float, Dataset};
use crate::dgp::{generate, process_seed, DgpId, DgpSpec};
use crate::error::{Error, Result};
use crate::fit::{fit, FitConfig};
use crate::hull::HullPooling;
use crate::model::{nll, LossBreakdown, ModelParams};
use crate::rng;

pub const ROWS_HEADER: [&str; 11] = [
    "dataset",
    "method",
    "k",
    "rep",
    "loglik_ratio",
    "param_l2",
    "param_l2_sq",
    "lambda_err",
    "sample_time_s",
    "fit_time_s",
    "total_time_s",
];

/// Metrics reported per row, in column order after the identifying fields.
pub const METRICS: [&str; 7] =
    ["loglik_ratio", "param_l2", "param_l2_sq", "lambda_err", "sample_time_s", "fit_time_s", "total_time_s"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub dataset: String,
    pub method: CoresetMethod,
    pub k: usize,
    pub rep: usize,
    pub loglik_ratio: f64,
    pub param_l2: f64,
    pub param_l2_sq: f64,
    pub lambda_err: f64,
    pub sample_time_s: f64,
    pub fit_time_s: f64,
    pub total_time_s: f64,
}

impl MetricRow {
    pub fn metric(&self, name: &str) -> Option<f64> {
        Some(match name {
            "loglik_ratio" => self.loglik_ratio,
            "param_l2" => self.param_l2,
            "param_l2_sq" => self.param_l2_sq,
            "lambda_err" => self.lambda_err,
            "sample_time_s" => self.sample_time_s,
            "fit_time_s" => self.fit_time_s,
            "total_time_s" => self.total_time_s,
            _ => return None,
        })
    }
}

/// A repetition whose sampling or fitting failed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FailedRun {
    pub dataset: String,
    pub method: CoresetMethod,
    pub k: usize,
    pub rep: usize,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

impl MetricSummary {
    /// Mean and sample standard deviation (zero for a single value).
    pub fn of(values: &[f64]) -> Self {
        let count = values.len();
        if count == 0 {
            return Self { mean: f64::NAN, std: f64::NAN, count };
        }
        let mean = values.iter().sum::<f64>() / count as f64;
        let std = if count > 1 {
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (count - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, std, count }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub dataset: String,
    pub method: CoresetMethod,
    pub k: usize,
    pub metrics: BTreeMap<String, MetricSummary>,
}

/// Summary of the full-data reference fit for one dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FullFitSummary {
    pub dataset: String,
    pub n: usize,
    pub loss: LossBreakdown,
    pub iterations: usize,
    pub converged: bool,
    pub fit_time_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dgps: Vec<DgpId>,
    pub n: usize,
    pub seed: u64,
    pub degree: usize,
    pub margin: f64,
    pub ks: Vec<usize>,
    pub methods: Vec<CoresetMethod>,
    pub reps: usize,
    pub alpha: f64,
    pub epsilon: f64,
    /// Domain margin; `None` means `2 * epsilon`.
    pub eta: Option<f64>,
    pub pooling: HullPooling,
    pub fit: FitConfig,
    /// When false every timing column is written as zero, which makes the
    /// output files byte-identical across runs with the same seed.
    pub record_timings: bool,
    pub threads: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dgps: DgpId::ALL.to_vec(),
            n: 10_000,
            seed: 0,
            degree: DEFAULT_DEGREE,
            margin: DEFAULT_MARGIN,
            ks: vec![30, 100],
            methods: CoresetMethod::ALL.to_vec(),
            reps: 10,
            alpha: DEFAULT_ALPHA,
            epsilon: 0.01,
            eta: None,
            pooling: HullPooling::Pooled,
            fit: FitConfig::default(),
            record_timings: true,
            threads: 1,
        }
    }
}

impl ExperimentConfig {
    pub fn effective_eta(&self) -> f64 {
        self.eta.unwrap_or(2.0 * self.epsilon)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::config("n must be at least 1"));
        }
        if self.reps == 0 {
            return Err(Error::config("reps must be at least 1"));
        }
        if self.ks.is_empty() || self.ks.contains(&0) {
            return Err(Error::config("coreset sizes must be a nonempty list of positive integers"));
        }
        if self.methods.is_empty() {
            return Err(Error::config("at least one coreset method is required"));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::config(format!("alpha must lie in (0, 1], got {}", self.alpha)));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::config(format!("epsilon must lie in (0, 1), got {}", self.epsilon)));
        }
        if !(self.effective_eta() >= 0.0) {
            return Err(Error::config("eta must be nonnegative"));
        }
        if self.threads == 0 {
            return Err(Error::config("threads must be at least 1"));
        }
        self.fit.validate()
    }

    fn fit_config(&self) -> FitConfig {
        FitConfig { eta: self.effective_eta(), ..self.fit.clone() }
    }

    fn coreset_options(&self) -> CoresetOptions {
        CoresetOptions { alpha: self.alpha, epsilon: self.epsilon, pooling: self.pooling }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub full_fits: Vec<FullFitSummary>,
    pub rows: Vec<MetricRow>,
    pub failures: Vec<FailedRun>,
    pub aggregates: Vec<Aggregate>,
}

impl ExperimentReport {
    pub fn write_rows_csv<W: Write>(&self, out: W) -> Result<()> {
        write_rows_csv(out, &self.rows)
    }

    /// Aggregates as a JSON array of flat objects, one per
    /// `(dataset, method, k)`.
    pub fn aggregates_json(&self) -> Result<String> {
        let arr: Vec<Value> = self
            .aggregates
            .iter()
            .map(|a| {
                let mut m = Map::new();
                m.insert("dataset".into(), json!(a.dataset));
                m.insert("method".into(), json!(a.method));
                m.insert("k".into(), json!(a.k));
                for (name, s) in &a.metrics {
                    m.insert(name.clone(), json!({"mean": s.mean, "std": s.std, "count": s.count}));
                }
                Value::Object(m)
            })
            .collect();
        Ok(serde_json::to_string_pretty(&arr)?)
    }

    /// Mean of one metric for `(dataset, method, k)`.
    pub fn mean(&self, dataset: &str, method: CoresetMethod, k: usize, metric: &str) -> Option<f64> {
        self.aggregates
            .iter()
            .find(|a| a.dataset == dataset && a.method == method && a.k == k)
            .and_then(|a| a.metrics.get(metric))
            .map(|s| s.mean)
    }
}

pub fn write_rows_csv<W: Write>(out: W, rows: &[MetricRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(ROWS_HEADER)?;
    for r in rows {
        let mut rec = vec![r.dataset.clone(), r.method.to_string(), r.k.to_string(), r.rep.to_string()];
        rec.extend(METRICS.iter().map(|m| format_float(r.metric(m).expect("known metric"))));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Full-data loss at `candidate` divided by full-data loss at `reference`,
/// both with unit weights.
///
/// When the reference loss is not positive, both sides get the same shift
/// `nJ (ln c + 1)`, with `c` starting at 1 and growing until the shifted
/// reference is positive.
pub fn likelihood_ratio(expansion: &BasisExpansion, reference: &ModelParams, candidate: &ModelParams) -> Result<f64> {
    let num = nll(expansion, candidate, None)?.total;
    let den = nll(expansion, reference, None)?.total;
    Ok(shifted_ratio(num, den, expansion.n(), expansion.dims()))
}

/// `num / den`, shifted as in [`likelihood_ratio`] when `den <= 0`.
pub fn shifted_ratio(num: f64, den: f64, n: usize, dims: usize) -> f64 {
    if den > 0.0 {
        return num / den;
    }
    let mut c: f64 = 1.0;
    let mut shift = LossBreakdown::normalization_shift(n, dims, c);
    while den + shift <= 0.0 {
        c *= std::f64::consts::E;
        shift = LossBreakdown::normalization_shift(n, dims, c);
    }
    (num + shift) / (den + shift)
}

fn check_same_shape(a: &ModelParams, b: &ModelParams) -> Result<()> {
    if a.theta.dim() != b.theta.dim() || a.lambda.len() != b.lambda.len() {
        return Err(Error::ShapeMismatch(format!(
            "cannot compare parameters of shapes {:?} and {:?}",
            a.theta.dim(),
            b.theta.dim()
        )));
    }
    Ok(())
}

/// Squared Euclidean distance between the `theta` blocks.
pub fn param_l2_sq(full: &ModelParams, coreset: &ModelParams) -> Result<f64> {
    check_same_shape(full, coreset)?;
    Ok(full.theta.iter().zip(coreset.theta.iter()).map(|(a, b)| (a - b) * (a - b)).sum())
}

/// Euclidean distance between the `theta` blocks; `lambda` is ignored.
pub fn param_l2(full: &ModelParams, coreset: &ModelParams) -> Result<f64> {
    param_l2_sq(full, coreset).map(f64::sqrt)
}

/// Euclidean norm of the differences of the strictly lower-triangular
/// entries of `Lambda`.
pub fn lambda_err(full: &ModelParams, coreset: &ModelParams) -> Result<f64> {
    check_same_shape(full, coreset)?;
    Ok(full.lambda.iter().zip(&coreset.lambda).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
}

/// Mean and standard deviation per `(dataset, method, k)`, in row order of
/// first appearance.
pub fn aggregate(rows: &[MetricRow]) -> Vec<Aggregate> {
    let mut order: Vec<(String, CoresetMethod, usize)> = Vec::new();
    let mut groups: BTreeMap<(String, CoresetMethod, usize), Vec<&MetricRow>> = BTreeMap::new();
    for r in rows {
        let key = (r.dataset.clone(), r.method, r.k);
        if !groups.contains_key(&key) {
            order.push(key.clone());
        }
        groups.entry(key).or_default().push(r);
    }
    order
        .into_iter()
        .map(|key| {
            let members = &groups[&key];
            let metrics = METRICS
                .iter()
                .map(|m| {
                    let vals: Vec<f64> = members.iter().map(|r| r.metric(m).expect("known metric")).collect();
                    (m.to_string(), MetricSummary::of(&vals))
                })
                .collect();
            Aggregate { dataset: key.0, method: key.1, k: key.2, metrics }
        })
        .collect()
}

struct DatasetOutcome {
    full: FullFitSummary,
    rows: Vec<MetricRow>,
    failures: Vec<FailedRun>,
}

fn run_one(name: &str, index: u64, data: &Dataset, config: &ExperimentConfig) -> Result<DatasetOutcome> {
    let basis = fit_bounds(data, config.degree, &BoundPolicy::FromData { margin: config.margin })?;
    let expansion = expand(data, &basis)?;
    let fit_config = config.fit_config();
    let full = fit(&expansion, None, &fit_config)?;
    if !full.converged {
        warn!("{name}: full-data fit stopped after {} iterations without converging", full.iterations);
    }
    info!("{name}: full fit loss {:.6} in {} iterations", full.loss.total, full.iterations);
    let timing = |t: f64| if config.record_timings { t } else { 0.0 };
    let summary = FullFitSummary {
        dataset: name.to_string(),
        n: data.n(),
        loss: full.loss,
        iterations: full.iterations,
        converged: full.converged,
        fit_time_s: timing(full.fit_time_s),
    };
    let options = config.coreset_options();
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for &k in &config.ks {
        for rep in 0..config.reps {
            for &method in &config.methods {
                let seed = rng::derive_seed(config.seed, "coreset", &[index, method as u64, k as u64, rep as u64]);
                let attempt = || -> Result<MetricRow> {
                    let sample = build_coreset(method, &expansion, k, &options, seed)?;
                    let sub = expansion.subset(&sample.indices);
                    let cfit = fit(&sub, Some(&sample.weights), &fit_config)?;
                    let ratio = likelihood_ratio(&expansion, &full.params, &cfit.params)?;
                    let sq = param_l2_sq(&full.params, &cfit.params)?;
                    Ok(MetricRow {
                        dataset: name.to_string(),
                        method,
                        k,
                        rep,
                        loglik_ratio: ratio,
                        param_l2: sq.sqrt(),
                        param_l2_sq: sq,
                        lambda_err: lambda_err(&full.params, &cfit.params)?,
                        sample_time_s: timing(sample.sample_time_s),
                        fit_time_s: timing(cfit.fit_time_s),
                        total_time_s: timing(sample.sample_time_s + cfit.fit_time_s),
                    })
                };
                match attempt() {
                    Ok(row) => rows.push(row),
                    Err(e) => {
                        warn!("{name}: {method} k={k} rep={rep} failed: {e}");
                        failures.push(FailedRun { dataset: name.to_string(), method, k, rep, error: e.to_string() });
                    }
                }
            }
        }
    }
    Ok(DatasetOutcome { full: summary, rows, failures })
}

/// Run the benchmark on already loaded datasets.
pub fn run_on_datasets(datasets: &[(String, Dataset)], config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let start = Instant::now();
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<DatasetOutcome>>>> = Mutex::new((0..datasets.len()).map(|_| None).collect());
    let workers = config.threads.min(datasets.len()).max(1);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= datasets.len() {
                    break;
                }
                let (name, data) = &datasets[i];
                let out = run_one(name, i as u64, data, config);
                results.lock().expect("no panics while holding the lock")[i] = Some(out);
            });
        }
    });
    let mut full_fits = Vec::new();
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for out in results.into_inner().expect("workers joined") {
        let out = out.expect("every dataset processed")?;
        full_fits.push(out.full);
        rows.extend(out.rows);
        failures.extend(out.failures);
    }
    info!("experiment finished in {:.1}s", start.elapsed().as_secs_f64());
    let aggregates = aggregate(&rows);
    Ok(ExperimentReport { config: config.clone(), full_fits, rows, failures, aggregates })
}

/// Simulate every configured process and run the benchmark on it.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let datasets = config
        .dgps
        .iter()
        .map(|&id| Ok((id.name().to_string(), generate(&DgpSpec::new(id, config.n, process_seed(config.seed, id)))?)))
        .collect::<Result<Vec<_>>>()?;
    run_on_datasets(&datasets, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn params(theta: ndarray::Array2<f64>, lambda: Vec<f64>) -> ModelParams {
        ModelParams::new(theta, lambda, 1e-6).unwrap()
    }

    #[test]
    fn param_distance_examples() {
        let a = params(array![[0.0, 1.0], [0.0, 1.0]], vec![0.2]);
        let mut b = a.clone();
        assert_eq!(param_l2(&a, &b).unwrap(), 0.0);
        b.theta[[1, 0]] += 1.0;
        b.lambda[0] = 5.0;
        assert_eq!(param_l2(&a, &b).unwrap(), 1.0);
        assert_eq!(param_l2_sq(&a, &b).unwrap(), 1.0);
    }

    #[test]
    fn lambda_error_examples() {
        let a = params(array![[0.0, 1.0], [0.0, 1.0]], vec![0.2]);
        let mut b = a.clone();
        b.lambda[0] = 0.5;
        assert!((lambda_err(&a, &b).unwrap() - 0.3).abs() < 1e-12);
        let c = params(ndarray::Array2::zeros((3, 2)), vec![0.0, 0.0, 0.0]);
        let d = params(ndarray::Array2::zeros((3, 2)), vec![3.0, 0.0, 4.0]);
        assert_eq!(lambda_err(&c, &d).unwrap(), 5.0);
        assert!(matches!(lambda_err(&a, &c), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn shifted_ratio_handles_negative_denominator() {
        assert_eq!(shifted_ratio(3.0, 2.0, 10, 2), 1.5);
        let r = shifted_ratio(-5.0, -10.0, 10, 2);
        assert!(r > 0.0 && r.is_finite());
        // same shift on both sides
        assert!((r - (-5.0 + 20.0) / (-10.0 + 20.0)).abs() < 1e-12);
        assert_eq!(shifted_ratio(-100.0, -100.0, 10, 2), 1.0);
    }

    #[test]
    fn summary_uses_sample_std() {
        let s = MetricSummary::of(&[1.0, 2.0, 3.0]);
        assert_eq!(s.mean, 2.0);
        assert_eq!(s.std, 1.0);
        assert_eq!(MetricSummary::of(&[4.0]).std, 0.0);
    }

    #[test]
    fn config_validation() {
        let mut c = ExperimentConfig::default();
        assert!(c.validate().is_ok());
        c.alpha = 0.0;
        assert!(c.validate().is_err());
        c = ExperimentConfig { ks: vec![], ..Default::default() };
        assert!(c.validate().is_err());
        assert_eq!(ExperimentConfig::default().effective_eta(), 0.02);
    }
}
