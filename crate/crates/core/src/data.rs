//! In-memory datasets and CSV ingestion.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use log::warn;
use ndarray::{Array2, Axis};
use rand::seq::index;

use crate::error::{Error, Result};
use crate::rng;

/// `n` observations of a `J`-dimensional continuous outcome.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub columns: Vec<String>,
    /// `n × J`, one row per observation.
    pub values: Array2<f64>,
}

impl Dataset {
    pub fn new(columns: Vec<String>, values: Array2<f64>) -> Result<Self> {
        if columns.len() != values.ncols() {
            return Err(Error::config(format!("{} column names for {} columns", columns.len(), values.ncols())));
        }
        Ok(Self { columns, values })
    }

    /// Columns named `y1, y2, ...`.
    pub fn from_values(values: Array2<f64>) -> Self {
        let columns = (1..=values.ncols()).map(|j| format!("y{j}")).collect();
        Self { columns, values }
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn dims(&self) -> usize {
        self.values.ncols()
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self { columns: self.columns.clone(), values: self.values.select(Axis(0), rows) }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.columns)?;
        for row in self.values.rows() {
            w.write_record(row.iter().map(|v| format_float(*v)))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Shortest representation that parses back to the same `f64`.
pub(crate) fn format_float(v: f64) -> String {
    format!("{v:?}")
}

/// Which columns of a CSV file to keep.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ColumnSelector {
    All,
    Names(Vec<String>),
    Indices(Vec<usize>),
}

impl ColumnSelector {
    /// Parse `all`, a comma list of names, or a comma list of zero-based
    /// indices and inclusive ranges such as `0-9,12`.
    pub fn parse(spec: &str) -> Self {
        let spec = spec.trim();
        if spec.is_empty() || spec.eq_ignore_ascii_case("all") {
            return ColumnSelector::All;
        }
        let parts: Vec<&str> = spec.split(',').map(str::trim).collect();
        let mut indices = Vec::new();
        for part in &parts {
            if let Ok(i) = part.parse::<usize>() {
                indices.push(i);
            } else if let Some((a, b)) = part.split_once('-') {
                match (a.trim().parse::<usize>(), b.trim().parse::<usize>()) {
                    (Ok(a), Ok(b)) if a <= b => indices.extend(a..=b),
                    _ => return ColumnSelector::Names(parts.iter().map(|s| s.to_string()).collect()),
                }
            } else {
                return ColumnSelector::Names(parts.iter().map(|s| s.to_string()).collect());
            }
        }
        ColumnSelector::Indices(indices)
    }
}

/// Rows dropped during loading because a selected cell was not finite.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LoadReport {
    pub rows_read: usize,
    pub dropped_non_finite: Vec<u64>,
    pub subsampled_to: Option<usize>,
}

/// Load the selected numeric columns of a headed CSV file, dropping rows with
/// non-finite cells and optionally subsampling uniformly to `max_rows`.
pub fn load_csv(
    path: &Path,
    columns: &ColumnSelector,
    max_rows: Option<usize>,
    seed: u64,
) -> Result<(Dataset, LoadReport)> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let header: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let by_name: HashMap<&str, usize> = header.iter().enumerate().map(|(i, h)| (h.as_str(), i)).collect();

    let picked: Vec<usize> = match columns {
        ColumnSelector::All => (0..header.len()).collect(),
        ColumnSelector::Names(names) => names
            .iter()
            .map(|n| by_name.get(n.as_str()).copied().ok_or_else(|| Error::MissingColumn(n.clone())))
            .collect::<Result<_>>()?,
        ColumnSelector::Indices(idx) => idx
            .iter()
            .map(|&i| if i < header.len() { Ok(i) } else { Err(Error::MissingColumn(format!("#{i}"))) })
            .collect::<Result<_>>()?,
    };
    if picked.is_empty() {
        return Err(Error::config("no columns selected"));
    }

    let mut report = LoadReport::default();
    let mut flat = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        report.rows_read += 1;
        let mut row = Vec::with_capacity(picked.len());
        let mut finite = true;
        for &c in &picked {
            let cell = record.get(c).ok_or_else(|| Error::Load {
                path: path.to_path_buf(),
                line,
                message: format!("missing field for column `{}`", header[c]),
            })?;
            let v: f64 = cell.trim().parse().map_err(|_| Error::Load {
                path: path.to_path_buf(),
                line,
                message: format!("cannot parse `{}` in column `{}` as a number", cell, header[c]),
            })?;
            finite &= v.is_finite();
            row.push(v);
        }
        if finite {
            flat.extend(row);
        } else {
            report.dropped_non_finite.push(line);
        }
    }
    if !report.dropped_non_finite.is_empty() {
        warn!("{}: dropped {} rows with non-finite values", path.display(), report.dropped_non_finite.len());
    }

    let j = picked.len();
    let n = flat.len() / j;
    let values = Array2::from_shape_vec((n, j), flat).expect("row width is fixed");
    let names = picked.iter().map(|&c| header[c].clone()).collect();
    let mut data = Dataset::new(names, values)?;

    if let Some(max) = max_rows {
        if max < n {
            let mut r = rng::stream(seed, "load-subsample", &[]);
            let mut rows = index::sample(&mut r, n, max).into_vec();
            rows.sort_unstable();
            data = data.select_rows(&rows);
            report.subsampled_to = Some(max);
        }
    }
    Ok((data, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn selector_parsing() {
        assert_eq!(ColumnSelector::parse("all"), ColumnSelector::All);
        assert_eq!(ColumnSelector::parse("0-2,5"), ColumnSelector::Indices(vec![0, 1, 2, 5]));
        assert_eq!(ColumnSelector::parse("a, b"), ColumnSelector::Names(vec!["a".into(), "b".into()]));
    }

    #[test]
    fn loads_named_columns_and_drops_non_finite() {
        let f = write_tmp("a,b,c\n1,2,3\n4,NaN,6\n7,8,9\n");
        let sel = ColumnSelector::Names(vec!["c".into(), "b".into()]);
        let (d, report) = load_csv(f.path(), &sel, None, 0).unwrap();
        assert_eq!(d.columns, vec!["c", "b"]);
        assert_eq!(d.values, ndarray::array![[3.0, 2.0], [9.0, 8.0]]);
        assert_eq!(report.dropped_non_finite, vec![3]);
    }

    #[test]
    fn max_rows_above_file_size_keeps_everything() {
        let f = write_tmp("a\n1\n2\n3\n");
        let (d, report) = load_csv(f.path(), &ColumnSelector::All, Some(10), 0).unwrap();
        assert_eq!(d.n(), 3);
        assert_eq!(report.subsampled_to, None);
        let (d, _) = load_csv(f.path(), &ColumnSelector::All, Some(2), 0).unwrap();
        assert_eq!(d.n(), 2);
    }

    #[test]
    fn column_typo_is_named_in_error() {
        let f = write_tmp("alpha,beta\n1,2\n");
        let err = load_csv(f.path(), &ColumnSelector::Names(vec!["bta".into()]), None, 0).unwrap_err();
        assert!(err.to_string().contains("bta"), "{err}");
    }

    #[test]
    fn unparsable_cell_reports_line() {
        let f = write_tmp("a\n1\nx\n");
        let err = load_csv(f.path(), &ColumnSelector::All, None, 0).unwrap_err();
        match err {
            Error::Load { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }
}
