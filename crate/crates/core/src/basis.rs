//! Bernstein-polynomial basis expansion of the raw outcomes.
//!
//! Each coordinate `y_ij` is mapped affinely onto `[0, 1]` with per-dimension
//! bounds and expanded into the `M + 1` Bernstein polynomials of degree `M`,
//! together with their derivatives with respect to the raw value. A marginal
//! transformation is then `h_j(y) = a(y)^T theta_j`; nondecreasing
//! coefficients give a nondecreasing transformation.

use std::io::Write;

use ndarray::{Array3, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::data::{format_float, Dataset};
use crate::error::{Error, Result};

pub const DEFAULT_DEGREE: usize = 6;
pub const DEFAULT_MARGIN: f64 = 0.01;

/// How the per-dimension bounds are chosen.
#[derive(Clone, Debug, PartialEq)]
pub enum BoundPolicy {
    /// Observed min/max widened by `margin` times the range on each side.
    FromData {
        margin: f64,
    },
    UserSupplied(Vec<(f64, f64)>),
}

impl Default for BoundPolicy {
    fn default() -> Self {
        BoundPolicy::FromData { margin: DEFAULT_MARGIN }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BasisConfig {
    /// Polynomial degree `M`; the basis dimension is `M + 1`.
    pub degree: usize,
    /// `(lo, hi)` per outcome dimension.
    pub bounds: Vec<(f64, f64)>,
}

impl BasisConfig {
    pub fn new(degree: usize, bounds: Vec<(f64, f64)>) -> Result<Self> {
        let cfg = Self { degree, bounds };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.degree < 1 {
            return Err(Error::config("Bernstein degree must be at least 1"));
        }
        for (j, &(lo, hi)) in self.bounds.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && hi > lo) {
                return Err(Error::config(format!("bounds for dimension {j} must satisfy lo < hi, got ({lo}, {hi})")));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.degree + 1
    }

    pub fn dims(&self) -> usize {
        self.bounds.len()
    }

    /// Map a raw value of dimension `j` into `[0, 1]`. The flag reports
    /// whether the value had to be clipped.
    pub fn to_unit(&self, j: usize, y: f64) -> (f64, bool) {
        let (lo, hi) = self.bounds[j];
        let t = (y - lo) / (hi - lo);
        if t < 0.0 {
            (0.0, true)
        } else if t > 1.0 {
            (1.0, true)
        } else {
            (t, false)
        }
    }

    /// Basis values and raw-scale derivatives at a single raw value.
    pub fn eval(&self, j: usize, y: f64, basis: &mut [f64], deriv: &mut [f64]) -> bool {
        let (t, clipped) = self.to_unit(j, y);
        let (lo, hi) = self.bounds[j];
        bernstein_with_derivative(self.degree, t, basis, deriv);
        let chain = 1.0 / (hi - lo);
        deriv.iter_mut().for_each(|v| *v *= chain);
        clipped
    }
}

/// Choose bounds for every column of `data`.
pub fn fit_bounds(data: &Dataset, degree: usize, policy: &BoundPolicy) -> Result<BasisConfig> {
    let bounds = match policy {
        BoundPolicy::UserSupplied(b) => {
            if b.len() != data.dims() {
                return Err(Error::config(format!("{} bound pairs supplied for {} columns", b.len(), data.dims())));
            }
            b.clone()
        }
        BoundPolicy::FromData { margin } => {
            if data.n() < 2 {
                return Err(Error::config("need at least two observations to fit bounds"));
            }
            if !(*margin >= 0.0) {
                return Err(Error::config("bound margin must be nonnegative"));
            }
            data.values
                .axis_iter(Axis(1))
                .zip(&data.columns)
                .map(|(col, name)| {
                    let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
                    let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    if !(hi > lo) {
                        return Err(Error::DegenerateColumn { column: name.clone() });
                    }
                    let pad = margin * (hi - lo);
                    Ok((lo - pad, hi + pad))
                })
                .collect::<Result<Vec<_>>>()?
        }
    };
    BasisConfig::new(degree, bounds)
}

/// Bernstein basis `B_{k,M}(t)`, `k = 0..=M`, by the de Casteljau recurrence
/// `B_{k,m} = (1 - t) B_{k,m-1} + t B_{k-1,m-1}`.
pub fn bernstein(degree: usize, t: f64, out: &mut [f64]) {
    debug_assert_eq!(out.len(), degree + 1);
    out.fill(0.0);
    out[0] = 1.0;
    raise(out, 0, degree, t);
}

fn raise(b: &mut [f64], from: usize, to: usize, t: f64) {
    let s = 1.0 - t;
    for m in from + 1..=to {
        b[m] = t * b[m - 1];
        for k in (1..m).rev() {
            b[k] = s * b[k] + t * b[k - 1];
        }
        b[0] *= s;
    }
}

/// Basis values and their derivatives in `t`:
/// `B'_{k,M} = M (B_{k-1,M-1} - B_{k,M-1})`.
pub fn bernstein_with_derivative(degree: usize, t: f64, basis: &mut [f64], deriv: &mut [f64]) {
    debug_assert_eq!(basis.len(), degree + 1);
    debug_assert_eq!(deriv.len(), degree + 1);
    basis.fill(0.0);
    basis[0] = 1.0;
    raise(basis, 0, degree - 1, t);
    let m = degree as f64;
    deriv[0] = -m * basis[0];
    for k in 1..degree {
        deriv[k] = m * (basis[k - 1] - basis[k]);
    }
    deriv[degree] = m * basis[degree - 1];
    raise(basis, degree - 1, degree, t);
}

/// Basis rows and derivative rows for every observation and dimension.
#[derive(Clone, Debug)]
pub struct BasisExpansion {
    /// `n × J × d` basis values `a_ij`.
    pub basis: Array3<f64>,
    /// `n × J × d` derivatives `a'_ij` with respect to the raw value.
    pub deriv: Array3<f64>,
    /// Absent for expansions assembled directly from arrays.
    pub config: Option<BasisConfig>,
    /// Number of raw values that fell outside the bounds.
    pub clip_count: usize,
}

impl BasisExpansion {
    /// Expansion assembled from arbitrary rows; no basis configuration.
    pub fn from_arrays(basis: Array3<f64>, deriv: Array3<f64>) -> Result<Self> {
        if basis.dim() != deriv.dim() {
            return Err(Error::config(format!(
                "basis shape {:?} differs from derivative shape {:?}",
                basis.dim(),
                deriv.dim()
            )));
        }
        if basis.is_empty() {
            return Err(Error::config("empty expansion"));
        }
        Ok(Self {
            basis: basis.as_standard_layout().into_owned(),
            deriv: deriv.as_standard_layout().into_owned(),
            config: None,
            clip_count: 0,
        })
    }

    pub fn n(&self) -> usize {
        self.basis.dim().0
    }

    pub fn dims(&self) -> usize {
        self.basis.dim().1
    }

    pub fn dim(&self) -> usize {
        self.basis.dim().2
    }

    #[inline]
    pub fn basis_row(&self, i: usize, j: usize) -> ArrayView1<'_, f64> {
        self.basis.slice(ndarray::s![i, j, ..])
    }

    #[inline]
    pub fn deriv_row(&self, i: usize, j: usize) -> ArrayView1<'_, f64> {
        self.deriv.slice(ndarray::s![i, j, ..])
    }

    /// Flat row-major `n*J*d` views for hot loops.
    pub fn basis_slice(&self) -> &[f64] {
        self.basis.as_slice().expect("standard layout")
    }

    pub fn deriv_slice(&self) -> &[f64] {
        self.deriv.as_slice().expect("standard layout")
    }

    /// Restriction to the given observations, in the given order.
    pub fn subset(&self, rows: &[usize]) -> Self {
        Self {
            basis: self.basis.select(Axis(0), rows),
            deriv: self.deriv.select(Axis(0), rows),
            config: self.config.clone(),
            clip_count: 0,
        }
    }

    /// One line per `(observation, dimension)`: the basis row, then the
    /// derivative row.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let d = self.dim();
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["observation".to_string(), "dimension".to_string()];
        header.extend((0..d).map(|k| format!("a{k}")));
        header.extend((0..d).map(|k| format!("da{k}")));
        w.write_record(&header)?;
        for i in 0..self.n() {
            for j in 0..self.dims() {
                let mut rec = vec![i.to_string(), j.to_string()];
                rec.extend(self.basis_row(i, j).iter().map(|v| format_float(*v)));
                rec.extend(self.deriv_row(i, j).iter().map(|v| format_float(*v)));
                w.write_record(&rec)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Expand every value of `data` with `config`. Values outside the bounds are
/// clipped to the boundary and counted.
pub fn expand(data: &Dataset, config: &BasisConfig) -> Result<BasisExpansion> {
    config.validate()?;
    if config.dims() != data.dims() {
        return Err(Error::config(format!(
            "basis configured for {} dimensions, data has {}",
            config.dims(),
            data.dims()
        )));
    }
    if data.n() == 0 {
        return Err(Error::config("empty dataset"));
    }
    let (n, jdim, d) = (data.n(), data.dims(), config.dim());
    let mut basis = vec![0.0; n * jdim * d];
    let mut deriv = vec![0.0; n * jdim * d];
    let mut clips = 0;
    for i in 0..n {
        for j in 0..jdim {
            let off = (i * jdim + j) * d;
            let clipped = config.eval(j, data.values[[i, j]], &mut basis[off..off + d], &mut deriv[off..off + d]);
            clips += clipped as usize;
        }
    }
    Ok(BasisExpansion {
        basis: Array3::from_shape_vec((n, jdim, d), basis).expect("shape"),
        deriv: Array3::from_shape_vec((n, jdim, d), deriv).expect("shape"),
        config: Some(config.clone()),
        clip_count: clips,
    })
}

/// Coefficients of the identity `t` in the Bernstein basis of this degree
/// (linear precision: `sum_k (k/M) B_{k,M}(t) = t`).
pub fn unit_ramp(dim: usize) -> Vec<f64> {
    if dim == 1 {
        return vec![1.0];
    }
    let m = (dim - 1) as f64;
    (0..dim).map(|k| k as f64 / m).collect()
}
