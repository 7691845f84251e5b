use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::{info, warn};
use mctm_core::basis::{expand, fit_bounds};
use mctm_core::coreset::build_coreset;
use mctm_core::data::{load_csv, ColumnSelector};
use mctm_core::dgp::{generate, process_seed};
use mctm_core::experiment::{run_experiment, run_on_datasets};
use mctm_core::fit::fit;
use mctm_core::hull::{hull_augmentation, write_selection_csv};
use mctm_core::model::DEFAULT_ETA;
use mctm_core::scores::{
    default_sketch_dim, leverage_scores, ridge_leverage, root_leverage, sampling_probabilities, write_scores_csv,
};
use mctm_core::{
    rng, BasisConfig, BasisExpansion, BoundPolicy, CoresetMethod, CoresetOptions, CoresetSample, Dataset, DgpId,
    DgpSpec, Error, ExperimentConfig, ExperimentReport, FitConfig, HullPooling, LeverageMethod, ModelDocument,
};
use serde_json::json;

use crate::args::{
    BasisArgs, BenchArgs, Cli, Command, CoresetArgs, ExpandArgs, FitArgs, FitOptions, InputArgs, Parametrization,
    Pooling, RealArgs, SamplingArgs, ScoreKind, ScoresArgs, SimulateArgs, SweepArgs,
};

/// A failure, split by the exit code it maps to.
#[derive(Debug)]
pub enum Failure {
    Config(String),
    Runtime(Error),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Config(_) => 1,
            Failure::Runtime(_) => 2,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "{m}"),
            Failure::Runtime(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidConfig(_) | Error::MissingColumn(_) | Error::ShapeMismatch(_) => {
                Failure::Config(e.to_string())
            }
            other => Failure::Runtime(other),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(Error::Io(e))
    }
}

type Outcome = Result<(), Failure>;

fn config_err(msg: impl Into<String>) -> Failure {
    Failure::Config(msg.into())
}

pub fn run(cli: &Cli) -> Outcome {
    let out = match &cli.command {
        Command::Simulate(a) => &a.out.out,
        Command::Expand(a) => &a.out.out,
        Command::Scores(a) => &a.out.out,
        Command::Coreset(a) => &a.out.out,
        Command::Fit(a) => &a.out.out,
        Command::Bench(a) => &a.sweep.out.out,
        Command::Real(a) => &a.sweep.out.out,
    };
    validate(&cli.command)?;
    prepare_out(out)?;
    let echo = json!({
        "version": env!("CARGO_PKG_VERSION"),
        "invocation": cli.command,
    });
    write_text(&out.join("config.json"), &serde_json::to_string_pretty(&echo).expect("plain data"))?;
    match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Expand(a) => expand_cmd(a),
        Command::Scores(a) => scores(a),
        Command::Coreset(a) => coreset(a),
        Command::Fit(a) => fit_cmd(a),
        Command::Bench(a) => bench(a),
        Command::Real(a) => real(a),
    }
}

/// Checks that need no data, so bad flags fail before any work.
fn validate(command: &Command) -> Outcome {
    let basis = |b: &BasisArgs| -> Outcome {
        if b.degree < 1 {
            return Err(config_err("--degree must be at least 1"));
        }
        if !(b.margin >= 0.0) {
            return Err(config_err("--margin must be nonnegative"));
        }
        Ok(())
    };
    let sampling = |s: &SamplingArgs| -> Outcome {
        if !(s.epsilon > 0.0 && s.epsilon < 1.0) {
            return Err(config_err("--epsilon must lie in (0, 1)"));
        }
        if !(s.alpha > 0.0 && s.alpha <= 1.0) {
            return Err(config_err("--alpha must lie in (0, 1]"));
        }
        Ok(())
    };
    let input = |i: &InputArgs| -> Outcome {
        if !i.input.is_file() {
            return Err(config_err(format!("input file {} does not exist", i.input.display())));
        }
        Ok(())
    };
    match command {
        Command::Simulate(a) => {
            DgpId::parse_list(&a.dgps)?;
            if a.n == 0 {
                return Err(config_err("--n must be at least 1"));
            }
        }
        Command::Expand(a) => {
            input(&a.input)?;
            basis(&a.basis)?;
        }
        Command::Scores(a) => {
            input(&a.input)?;
            basis(&a.basis)?;
        }
        Command::Coreset(a) => {
            input(&a.input)?;
            basis(&a.basis)?;
            sampling(&a.sampling)?;
            CoresetMethod::from_str(&a.method)?;
            if a.k == 0 {
                return Err(config_err("--k must be at least 1"));
            }
        }
        Command::Fit(a) => {
            input(&a.input)?;
            basis(&a.basis)?;
            if let Some(c) = &a.coreset {
                if !c.is_file() {
                    return Err(config_err(format!("coreset file {} does not exist", c.display())));
                }
            }
            fit_config(&a.fit, DEFAULT_ETA, a.seed).validate()?;
        }
        Command::Bench(a) => {
            DgpId::parse_list(&a.dgps)?;
            experiment_config(&a.sweep)?.validate()?;
        }
        Command::Real(a) => {
            input(&a.input)?;
            experiment_config(&a.sweep)?.validate()?;
        }
    }
    Ok(())
}

fn prepare_out(out: &Path) -> Outcome {
    if out.is_dir() {
        return Ok(());
    }
    if out.exists() {
        return Err(config_err(format!("--out {} exists and is not a directory", out.display())));
    }
    let parent = match out.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    if !parent.is_dir() {
        return Err(config_err(format!("parent directory of --out {} does not exist", out.display())));
    }
    fs::create_dir(out)?;
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    Ok(BufWriter::new(File::create(path)?))
}

fn write_text(path: &Path, text: &str) -> Outcome {
    let mut f = create(path)?;
    f.write_all(text.as_bytes())?;
    f.write_all(b"\n")?;
    f.flush()?;
    Ok(())
}

fn pooling(p: Pooling) -> HullPooling {
    match p {
        Pooling::Pooled => HullPooling::Pooled,
        Pooling::PerDimension => HullPooling::PerDimension,
    }
}

fn fit_config(f: &FitOptions, default_eta: f64, seed: u64) -> FitConfig {
    FitConfig {
        max_iters: f.max_iters,
        grad_tol: f.grad_tol,
        parametrization: match f.parametrization {
            Parametrization::Monotone => mctm_core::Parametrization::MonotoneReparam,
            Parametrization::RawClamped => mctm_core::Parametrization::RawClamped,
        },
        seed,
        eta: f.eta.unwrap_or(default_eta),
        ..FitConfig::default()
    }
}

fn load(input: &InputArgs, seed: u64) -> Result<Dataset, Failure> {
    let (data, report) = load_csv(&input.input, &ColumnSelector::parse(&input.columns), input.max_rows, seed)?;
    info!("{}: {} rows read, {} kept, {} columns", input.input.display(), report.rows_read, data.n(), data.dims());
    Ok(data)
}

fn expansion_of(data: &Dataset, basis: &BasisArgs) -> Result<(BasisConfig, BasisExpansion), Failure> {
    let config = fit_bounds(data, basis.degree, &BoundPolicy::FromData { margin: basis.margin })?;
    let e = expand(data, &config)?;
    Ok((config, e))
}

fn simulate(a: &SimulateArgs) -> Outcome {
    for id in DgpId::parse_list(&a.dgps)? {
        let data = generate(&DgpSpec::new(id, a.n, process_seed(a.seed, id)))?;
        let path = a.out.out.join(format!("{}.csv", id.name()));
        data.write_csv(create(&path)?)?;
        info!("wrote {} rows to {}", data.n(), path.display());
    }
    Ok(())
}

fn expand_cmd(a: &ExpandArgs) -> Outcome {
    let data = load(&a.input, a.seed)?;
    let (config, e) = expansion_of(&data, &a.basis)?;
    e.write_csv(create(&a.out.out.join("expansion.csv"))?)?;
    write_text(&a.out.out.join("basis.json"), &serde_json::to_string_pretty(&config).expect("plain data"))?;
    Ok(())
}

fn scores(a: &ScoresArgs) -> Outcome {
    let data = load(&a.input, a.seed)?;
    let (_, e) = expansion_of(&data, &a.basis)?;
    let u = match a.method {
        ScoreKind::Auto => leverage_scores(&e, LeverageMethod::Auto { seed: a.seed })?.u,
        ScoreKind::Exact => leverage_scores(&e, LeverageMethod::Exact)?.u,
        ScoreKind::Sketched => {
            let sketch_dim = a.sketch_dim.unwrap_or_else(|| default_sketch_dim(e.n(), e.dims() * e.dim()));
            leverage_scores(&e, LeverageMethod::Sketched { sketch_dim, seed: a.seed })?.u
        }
        ScoreKind::Ridge => ridge_leverage(&e, None)?,
        ScoreKind::Root => root_leverage(&leverage_scores(&e, LeverageMethod::Auto { seed: a.seed })?.u),
    };
    let probs = sampling_probabilities(&u);
    write_scores_csv(create(&a.out.out.join("scores.csv"))?, &u, &probs)?;
    Ok(())
}

fn coreset(a: &CoresetArgs) -> Outcome {
    let data = load(&a.input, a.seed)?;
    let (_, e) = expansion_of(&data, &a.basis)?;
    let method = CoresetMethod::from_str(&a.method)?;
    if method == CoresetMethod::Uniform && a.k > e.n() {
        return Err(config_err(format!("--k {} exceeds the {} observations", a.k, e.n())));
    }
    let options =
        CoresetOptions { alpha: a.sampling.alpha, epsilon: a.sampling.epsilon, pooling: pooling(a.sampling.pooling) };
    let sample = build_coreset(method, &e, a.k, &options, a.seed)?;
    info!(
        "{method}: {} distinct observations, total weight {:.1}, {:.2}s",
        sample.len(),
        sample.total_weight(),
        sample.sample_time_s
    );
    sample.write_csv(create(&a.out.out.join("weights.csv"))?)?;
    write_text(&a.out.out.join("coreset.json"), &sample.metadata_json()?)?;
    if method == CoresetMethod::L2Hull {
        let k2 = a.k - (options.alpha * a.k as f64).floor() as usize;
        let hull =
            hull_augmentation(&e, k2, options.epsilon, rng::derive_seed(a.seed, "coreset-hull", &[]), options.pooling)?;
        for (s, sel) in hull.selections.iter().enumerate() {
            let name = if hull.selections.len() == 1 { "hull.csv".to_string() } else { format!("hull_{s}.csv") };
            write_selection_csv(create(&a.out.out.join(name))?, sel)?;
        }
    }
    Ok(())
}

fn fit_cmd(a: &FitArgs) -> Outcome {
    let data = load(&a.input, a.seed)?;
    let (config, e) = expansion_of(&data, &a.basis)?;
    let cfg = fit_config(&a.fit, DEFAULT_ETA, a.seed);
    let result = match &a.coreset {
        None => fit(&e, None, &cfg)?,
        Some(path) => {
            let (indices, weights) = CoresetSample::read_weights(File::open(path)?)?;
            if let Some(bad) = indices.iter().find(|&&i| i >= e.n()) {
                return Err(config_err(format!("coreset index {bad} is out of range for {} observations", e.n())));
            }
            fit(&e.subset(&indices), Some(&weights), &cfg)?
        }
    };
    if !result.converged {
        warn!("fit stopped after {} iterations without converging", result.iterations);
    }
    write_text(&a.out.out.join("model.json"), &ModelDocument::new(&result.params, &config).to_json()?)?;
    let summary = json!({
        "loss": result.loss,
        "iterations": result.iterations,
        "converged": result.converged,
        "stalled": result.stalled,
        "grad_norm": result.grad_norm,
        "fit_time_s": result.fit_time_s,
    });
    write_text(&a.out.out.join("fit.json"), &serde_json::to_string_pretty(&summary).expect("plain data"))?;
    if let Some(points) = a.grid {
        if points < 2 {
            return Err(config_err("--grid needs at least two points"));
        }
        let mut w = create(&a.out.out.join("density.csv"))?;
        writeln!(w, "dimension,y,density")?;
        for (j, &(lo, hi)) in config.bounds.iter().enumerate() {
            for g in 0..points {
                let y = lo + (hi - lo) * g as f64 / (points - 1) as f64;
                writeln!(w, "{j},{y:?},{:?}", result.params.marginal_density(&config, j, y))?;
            }
        }
        w.flush()?;
    }
    Ok(())
}

fn experiment_config(s: &SweepArgs) -> Result<ExperimentConfig, Failure> {
    let methods = s.methods.split(',').map(|m| CoresetMethod::from_str(m.trim())).collect::<Result<Vec<_>, _>>()?;
    let threads = s.threads.unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1));
    Ok(ExperimentConfig {
        seed: s.seed,
        degree: s.basis.degree,
        margin: s.basis.margin,
        ks: s.k.clone(),
        methods,
        reps: s.reps,
        alpha: s.sampling.alpha,
        epsilon: s.sampling.epsilon,
        eta: s.fit.eta,
        pooling: pooling(s.sampling.pooling),
        fit: fit_config(&s.fit, DEFAULT_ETA, s.seed),
        record_timings: !s.no_timings,
        threads,
        ..ExperimentConfig::default()
    })
}

fn write_report(report: &ExperimentReport, out: &Path) -> Outcome {
    report.write_rows_csv(create(&out.join("rows.csv"))?)?;
    write_text(&out.join("aggregates.json"), &report.aggregates_json()?)?;
    write_text(&out.join("full_fits.json"), &serde_json::to_string_pretty(&report.full_fits).expect("plain data"))?;
    if !report.failures.is_empty() {
        warn!("{} runs failed; see failures.json", report.failures.len());
        write_text(&out.join("failures.json"), &serde_json::to_string_pretty(&report.failures).expect("plain data"))?;
    }
    println!("{:<24} {:<8} {:>6} {:>18}", "dataset", "method", "k", "loglik ratio");
    for a in &report.aggregates {
        let r = &a.metrics["loglik_ratio"];
        println!("{:<24} {:<8} {:>6} {:>10.4} ± {:.4}", a.dataset, a.method.to_string(), a.k, r.mean, r.std);
    }
    Ok(())
}

fn bench(a: &BenchArgs) -> Outcome {
    let config = ExperimentConfig { dgps: DgpId::parse_list(&a.dgps)?, n: a.n, ..experiment_config(&a.sweep)? };
    let report = run_experiment(&config)?;
    write_report(&report, &a.sweep.out.out)
}

fn real(a: &RealArgs) -> Outcome {
    let data = load(&a.input, a.sweep.seed)?;
    let name = a.name.clone().unwrap_or_else(|| {
        a.input.input.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "data".into())
    });
    let config = ExperimentConfig { dgps: Vec::new(), n: data.n(), ..experiment_config(&a.sweep)? };
    let report = run_on_datasets(&[(name, data)], &config)?;
    write_report(&report, &a.sweep.out.out)
}
