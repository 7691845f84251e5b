use std::io::Write as _;

use mctm_core::basis::{expand, fit_bounds};
use mctm_core::data::{load_csv, ColumnSelector};
use mctm_core::dgp::DgpId;
use mctm_core::experiment::{likelihood_ratio, run_experiment, ROWS_HEADER};
use mctm_core::fit::{fit, FitConfig};
use mctm_core::{BoundPolicy, CoresetMethod, Error, ExperimentConfig};

fn small(dgps: Vec<DgpId>, n: usize, ks: Vec<usize>, reps: usize) -> ExperimentConfig {
    ExperimentConfig { dgps, n, seed: 3, ks, reps, record_timings: false, ..ExperimentConfig::default() }
}

#[test]
fn full_grid_has_one_row_per_cell() {
    let report = run_experiment(&small(DgpId::ALL.to_vec(), 300, vec![30, 100], 10)).unwrap();
    assert_eq!(report.rows.len() + report.failures.len(), 840);
    assert!(report.failures.is_empty(), "{:?}", report.failures);
    assert_eq!(report.aggregates.len(), 14 * 3 * 2);
    assert_eq!(report.full_fits.len(), 14);
    for a in &report.aggregates {
        assert_eq!(a.metrics["loglik_ratio"].count, 10);
    }
    for r in &report.rows {
        assert!(r.loglik_ratio > 0.0 && r.param_l2 >= 0.0 && r.lambda_err >= 0.0);
        assert!((r.param_l2 * r.param_l2 - r.param_l2_sq).abs() <= 1e-9 * r.param_l2_sq.max(1.0));
    }
}

#[test]
fn aggregates_are_the_row_means() {
    let report = run_experiment(&small(vec![DgpId::Hourglass, DgpId::Bimodal], 300, vec![25, 50], 3)).unwrap();
    for a in &report.aggregates {
        let members: Vec<_> =
            report.rows.iter().filter(|r| r.dataset == a.dataset && r.method == a.method && r.k == a.k).collect();
        assert_eq!(members.len(), 3);
        for metric in ["loglik_ratio", "param_l2", "lambda_err"] {
            let vals: Vec<f64> = members.iter().map(|r| r.metric(metric).unwrap()).collect();
            let mean = vals.iter().sum::<f64>() / 3.0;
            let std = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 2.0).sqrt();
            let s = &a.metrics[metric];
            assert!((s.mean - mean).abs() <= 1e-12 * mean.abs().max(1.0));
            assert!((s.std - std).abs() <= 1e-12 * std.max(1.0));
        }
    }
    let json: serde_json::Value = serde_json::from_str(&report.aggregates_json().unwrap()).unwrap();
    let first = &json.as_array().unwrap()[0];
    assert!(first["dataset"].is_string() && first["method"].is_string() && first["k"].is_u64());
    assert!(first["loglik_ratio"]["mean"].is_f64());
    assert_eq!(first["loglik_ratio"]["count"], 3);
}

#[test]
fn whole_data_coreset_reproduces_the_full_fit() {
    let report = run_experiment(&ExperimentConfig {
        methods: vec![CoresetMethod::Uniform],
        ..small(vec![DgpId::BivariateNormal, DgpId::Sinusoidal], 200, vec![200], 2)
    })
    .unwrap();
    for r in &report.rows {
        assert!((r.loglik_ratio - 1.0).abs() < 1e-9, "{r:?}");
        assert!(r.param_l2 < 1e-9);
    }
}

#[test]
fn ratio_of_a_model_with_itself_is_one() {
    let data = mctm_core::dgp::generate(&mctm_core::DgpSpec::new(DgpId::Spiral, 400, 0)).unwrap();
    let e = expand(&data, &fit_bounds(&data, 6, &BoundPolicy::default()).unwrap()).unwrap();
    let p = fit(&e, None, &FitConfig::default()).unwrap().params;
    assert_eq!(likelihood_ratio(&e, &p, &p).unwrap(), 1.0);
}

#[test]
fn csv_bytes_are_reproducible_across_thread_counts() {
    let cfg = small(vec![DgpId::NormalMixture, DgpId::ClaytonCopula, DgpId::Piecewise], 300, vec![30], 2);
    let bytes = |threads| {
        let report = run_experiment(&ExperimentConfig { threads, ..cfg.clone() }).unwrap();
        let mut buf = Vec::new();
        report.write_rows_csv(&mut buf).unwrap();
        (buf, report.aggregates_json().unwrap())
    };
    let (a, ja) = bytes(1);
    let (b, jb) = bytes(1);
    let (c, jc) = bytes(3);
    assert_eq!(a, b);
    assert_eq!(a, c);
    assert_eq!((ja.clone(), ja), (jb, jc));
    let text = String::from_utf8(a).unwrap();
    assert_eq!(text.lines().next().unwrap(), ROWS_HEADER.join(","));
}

#[test]
fn invalid_configs_are_rejected() {
    assert!(run_experiment(&small(vec![DgpId::Spiral], 100, vec![], 1)).is_err());
    assert!(run_experiment(&ExperimentConfig { alpha: 0.0, ..small(vec![DgpId::Spiral], 100, vec![10], 1) }).is_err());
    assert!(run_experiment(&small(vec![DgpId::Spiral], 100, vec![10], 0)).is_err());
}

fn csv_file(body: &str) -> tempfile::NamedTempFile {
    let mut f = tempfile::NamedTempFile::new().unwrap();
    f.write_all(body.as_bytes()).unwrap();
    f
}

#[test]
fn loading_selects_columns_and_rows() {
    let f = csv_file("a,b,c\n1,2,3\n4,5,6\n7,8,9\n10,11,12\n");
    let (d, report) = load_csv(f.path(), &ColumnSelector::parse("c,a"), Some(10), 0).unwrap();
    assert_eq!(d.columns, vec!["c", "a"]);
    assert_eq!(d.values.row(1).to_vec(), vec![6.0, 4.0]);
    assert_eq!(report.rows_read, 4);
    assert_eq!(report.subsampled_to, None);

    let (d, report) = load_csv(f.path(), &ColumnSelector::parse("0-1"), Some(2), 5).unwrap();
    assert_eq!(d.values.dim(), (2, 2));
    assert_eq!(report.subsampled_to, Some(2));
    let again = load_csv(f.path(), &ColumnSelector::parse("0-1"), Some(2), 5).unwrap().0;
    assert_eq!(d, again);
}

#[test]
fn loading_reports_bad_input() {
    let f = csv_file("x,y\n1,2\nNaN,3\n4,inf\n5,6\n");
    let (d, report) = load_csv(f.path(), &ColumnSelector::All, None, 0).unwrap();
    assert_eq!(d.n(), 2);
    assert_eq!(report.dropped_non_finite, vec![3, 4]);

    let err = load_csv(f.path(), &ColumnSelector::parse("x,yy"), None, 0).unwrap_err();
    assert!(matches!(err, Error::MissingColumn(ref c) if c == "yy"), "{err}");

    let g = csv_file("x,y\n1,2\n3,oops\n");
    let err = load_csv(g.path(), &ColumnSelector::All, None, 0).unwrap_err();
    assert!(matches!(err, Error::Load { line: 3, .. }), "{err}");
}
