//! The fourteen bivariate simulation processes.
//!
//! Every process returns an `n × 2` [`Dataset`] with columns `y1,y2`. A few
//! of the processes are described only loosely in words; the readings used
//! here are documented on the corresponding variant.

use std::collections::BTreeMap;
use std::f64::consts::{PI, SQRT_2};
use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use rand::Rng;
use rand_distr::{ChiSquared, Exp1, Gamma, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Gamma as GammaDist, Normal, StudentsT};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng::{self, StreamRng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DgpId {
    /// Standard bivariate normal with correlation 0.7.
    BivariateNormal,
    /// `X ~ U[-3,3]`, `Y1 = X^2 + e1` with `e1 ~ N(0, 0.5^2)`, and `Y2`
    /// standard normal with correlation `sin(X)` to `e1`.
    NonlinearCorrelation,
    NormalMixture,
    /// Half the points on a noisy circle of radius `N(2, 0.2^2)`, half on
    /// the two diagonals through the origin. Positions along a diagonal are
    /// uniform on `[-3, 3]` and both coordinates get `N(0, 0.2^2)` noise.
    GeometricMixed,
    /// Skew-t with location 0, scale `[[1, .5], [.5, 1]]`, slant `(5, -3)`
    /// and 4 degrees of freedom, drawn by hidden truncation.
    SkewT,
    Heteroscedastic,
    /// Clayton copula (`theta = 2`) with Gamma(2, 1) and LogNormal(0, 1)
    /// marginals.
    ClaytonCopula,
    Spiral,
    Circular,
    /// t copula (`rho = 0.7`, 3 degrees of freedom) with `t_5` and Exp(1)
    /// marginals.
    TCopula,
    Piecewise,
    Hourglass,
    Bimodal,
    Sinusoidal,
}

impl DgpId {
    pub const ALL: [DgpId; 14] = [
        DgpId::BivariateNormal,
        DgpId::NonlinearCorrelation,
        DgpId::NormalMixture,
        DgpId::GeometricMixed,
        DgpId::SkewT,
        DgpId::Heteroscedastic,
        DgpId::ClaytonCopula,
        DgpId::Spiral,
        DgpId::Circular,
        DgpId::TCopula,
        DgpId::Piecewise,
        DgpId::Hourglass,
        DgpId::Bimodal,
        DgpId::Sinusoidal,
    ];

    /// One-based position in [`DgpId::ALL`].
    pub fn number(self) -> usize {
        DgpId::ALL.iter().position(|d| *d == self).expect("listed") + 1
    }

    pub fn from_number(k: usize) -> Result<Self> {
        k.checked_sub(1)
            .and_then(|i| DgpId::ALL.get(i).copied())
            .ok_or_else(|| Error::config(format!("no process numbered {k}; expected 1..=14")))
    }

    pub fn name(self) -> &'static str {
        match self {
            DgpId::BivariateNormal => "bivariate-normal",
            DgpId::NonlinearCorrelation => "nonlinear-correlation",
            DgpId::NormalMixture => "normal-mixture",
            DgpId::GeometricMixed => "geometric-mixed",
            DgpId::SkewT => "skew-t",
            DgpId::Heteroscedastic => "heteroscedastic",
            DgpId::ClaytonCopula => "clayton-copula",
            DgpId::Spiral => "spiral",
            DgpId::Circular => "circular",
            DgpId::TCopula => "t-copula",
            DgpId::Piecewise => "piecewise",
            DgpId::Hourglass => "hourglass",
            DgpId::Bimodal => "bimodal",
            DgpId::Sinusoidal => "sinusoidal",
        }
    }

    /// Parses a comma-separated list of names or numbers, or `all`.
    pub fn parse_list(s: &str) -> Result<Vec<DgpId>> {
        if s.trim().eq_ignore_ascii_case("all") {
            return Ok(DgpId::ALL.to_vec());
        }
        s.split(',').filter(|t| !t.trim().is_empty()).map(str::parse).collect()
    }
}

impl fmt::Display for DgpId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DgpId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_lowercase();
        let digits = t.strip_prefix("dgp").unwrap_or(&t);
        if let Ok(k) = digits.parse::<usize>() {
            return DgpId::from_number(k);
        }
        DgpId::ALL
            .iter()
            .copied()
            .find(|d| d.name() == t)
            .ok_or_else(|| Error::config(format!("unknown process `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DgpSpec {
    pub id: DgpId,
    pub n: usize,
    pub seed: u64,
}

impl DgpSpec {
    pub fn new(id: DgpId, n: usize, seed: u64) -> Self {
        Self { id, n, seed }
    }
}

fn normal(r: &mut StreamRng) -> f64 {
    r.sample(StandardNormal)
}

/// Correlated standard normal pair.
fn normal_pair(r: &mut StreamRng, rho: f64) -> (f64, f64) {
    let a = normal(r);
    let b = normal(r);
    (a, rho * a + (1.0 - rho * rho).sqrt() * b)
}

/// Draw from `N(mean, cov)` for a 2 × 2 covariance `[[s11, s12], [s12, s22]]`.
fn gaussian2(r: &mut StreamRng, mean: (f64, f64), s11: f64, s12: f64, s22: f64) -> (f64, f64) {
    let l11 = s11.sqrt();
    let l21 = s12 / l11;
    let l22 = (s22 - l21 * l21).sqrt();
    let a = normal(r);
    let b = normal(r);
    (mean.0 + l11 * a, mean.1 + l21 * a + l22 * b)
}

fn open_unit(u: f64) -> f64 {
    u.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

struct Samplers {
    gamma_half: Gamma<f64>,
    chi4: ChiSquared<f64>,
    chi3: ChiSquared<f64>,
    gamma21: GammaDist,
    std_normal: Normal,
    t3: StudentsT,
    t5: StudentsT,
}

impl Samplers {
    fn new() -> Self {
        Self {
            gamma_half: Gamma::new(0.5, 1.0).expect("valid"),
            chi4: ChiSquared::new(4.0).expect("valid"),
            chi3: ChiSquared::new(3.0).expect("valid"),
            gamma21: GammaDist::new(2.0, 1.0).expect("valid"),
            std_normal: Normal::standard(),
            t3: StudentsT::new(0.0, 1.0, 3.0).expect("valid"),
            t5: StudentsT::new(0.0, 1.0, 5.0).expect("valid"),
        }
    }
}

/// Skew-normal direction vector `Omega alpha / sqrt(1 + alpha' Omega alpha)`
/// and the Cholesky factor of `Omega - delta delta'`.
fn skew_t_setup() -> ([f64; 2], [f64; 3]) {
    let omega: [[f64; 2]; 2] = [[1.0, 0.5], [0.5, 1.0]];
    let alpha: [f64; 2] = [5.0, -3.0];
    let oa = [omega[0][0] * alpha[0] + omega[0][1] * alpha[1], omega[1][0] * alpha[0] + omega[1][1] * alpha[1]];
    let q = alpha[0] * oa[0] + alpha[1] * oa[1];
    let scale = (1.0 + q).sqrt();
    let delta = [oa[0] / scale, oa[1] / scale];
    let s11 = omega[0][0] - delta[0] * delta[0];
    let s12 = omega[0][1] - delta[0] * delta[1];
    let s22 = omega[1][1] - delta[1] * delta[1];
    let l11 = s11.sqrt();
    let l21 = s12 / l11;
    let l22 = (s22 - l21 * l21).sqrt();
    (delta, [l11, l21, l22])
}

fn draw(id: DgpId, r: &mut StreamRng, s: &Samplers, skew: &([f64; 2], [f64; 3])) -> (f64, f64) {
    let u33 = Uniform::new_inclusive(-3.0, 3.0).expect("valid");
    match id {
        DgpId::BivariateNormal => normal_pair(r, 0.7),
        DgpId::NonlinearCorrelation => {
            let x: f64 = r.sample(u33);
            let z1 = normal(r);
            let xi = normal(r);
            let rho = x.sin();
            (x * x + 0.5 * z1, rho * z1 + (1.0 - rho * rho).max(0.0).sqrt() * xi)
        }
        DgpId::NormalMixture => {
            if r.random_bool(0.5) {
                gaussian2(r, (0.0, 0.0), 1.0, 0.8, 1.0)
            } else {
                gaussian2(r, (3.0, -2.0), 1.5, -0.5, 1.5)
            }
        }
        DgpId::GeometricMixed => {
            if r.random_bool(0.5) {
                let radius = 2.0 + 0.2 * normal(r);
                let angle = r.random_range(0.0..2.0 * PI);
                (radius * angle.cos(), radius * angle.sin())
            } else {
                let sign = if r.random_bool(0.5) { 1.0 } else { -1.0 };
                let pos: f64 = r.sample(u33);
                let (a, b) = (pos / SQRT_2, sign * pos / SQRT_2);
                (a + 0.2 * normal(r), b + 0.2 * normal(r))
            }
        }
        DgpId::SkewT => {
            let (delta, l) = skew;
            let x0 = normal(r);
            let z1 = normal(r);
            let z2 = normal(r);
            let mut x = [delta[0] * x0 + l[0] * z1, delta[1] * x0 + l[1] * z1 + l[2] * z2];
            if x0 <= 0.0 {
                x = [-x[0], -x[1]];
            }
            let w: f64 = r.sample(s.chi4);
            let scale = (w / 4.0).sqrt();
            (x[0] / scale, x[1] / scale)
        }
        DgpId::Heteroscedastic => {
            let x: f64 = r.sample(u33);
            let y1 = x * x + (0.5 * x).exp() * normal(r);
            let y2 = x.sin() + x.abs().sqrt() * normal(r);
            (y1, y2)
        }
        DgpId::ClaytonCopula => {
            // Marshall–Olkin: U_i = (1 + E_i / V)^(-1/theta), V ~ Gamma(1/theta, 1)
            let v: f64 = r.sample(s.gamma_half);
            let e1: f64 = r.sample(Exp1);
            let e2: f64 = r.sample(Exp1);
            let u1 = open_unit((1.0 + e1 / v).powf(-0.5));
            let u2 = open_unit((1.0 + e2 / v).powf(-0.5));
            (s.gamma21.inverse_cdf(u1), s.std_normal.inverse_cdf(u2).exp())
        }
        DgpId::Spiral => {
            let t = r.random_range(0.0..=3.0 * PI);
            let radius = 0.5 * t;
            (radius * t.cos() + 0.5 * normal(r), radius * t.sin() + 0.5 * normal(r))
        }
        DgpId::Circular => {
            let angle = r.random_range(0.0..2.0 * PI);
            let radius = 5.0 + normal(r);
            (radius * angle.cos(), radius * angle.sin())
        }
        DgpId::TCopula => {
            let (z1, z2) = normal_pair(r, 0.7);
            let w: f64 = r.sample(s.chi3);
            let scale = (w / 3.0).sqrt();
            let (t1, t2) = (z1 / scale, z2 / scale);
            // work in the lower tail and reflect to keep precision near 1
            let lower = open_unit(s.t3.cdf(-t1.abs()));
            let q = s.t5.inverse_cdf(lower);
            let y1 = if t1 > 0.0 { -q } else { q };
            let upper_tail = s.t3.sf(t2).max(f64::MIN_POSITIVE);
            (y1, -upper_tail.ln())
        }
        DgpId::Piecewise => {
            let y1 = 2.0 * normal(r);
            let y2 = if y1 < -1.0 {
                1.5 * y1 + 0.5 * normal(r)
            } else if y1 < 1.0 {
                -0.5 * y1 + 0.8 * normal(r)
            } else {
                -2.0 * y1 + 0.5 * normal(r)
            };
            (y1, y2)
        }
        DgpId::Hourglass => {
            let y1 = 2.0 * normal(r);
            (y1, (0.2 + 0.3 * y1 * y1).sqrt() * normal(r))
        }
        DgpId::Bimodal => {
            if r.random_bool(0.5) {
                gaussian2(r, (-2.0, 2.0), 1.0, 0.8, 1.0)
            } else {
                gaussian2(r, (2.0, 2.0), 1.0, -0.7, 1.0)
            }
        }
        DgpId::Sinusoidal => {
            let y1: f64 = r.sample(u33);
            (y1, 2.0 * (PI * y1).sin() + 0.5 * normal(r))
        }
    }
}

/// `n` rows from the process, reproducible from `spec.seed`.
pub fn generate(spec: &DgpSpec) -> Result<Dataset> {
    if spec.n == 0 {
        return Err(Error::config("process sample count must be at least 1"));
    }
    let mut r = rng::stream(spec.seed, "dgp", &[spec.id.number() as u64]);
    let samplers = Samplers::new();
    let skew = skew_t_setup();
    let mut values = Array2::zeros((spec.n, 2));
    for mut row in values.rows_mut() {
        let (a, b) = draw(spec.id, &mut r, &samplers, &skew);
        row[0] = a;
        row[1] = b;
    }
    Ok(Dataset::from_values(values))
}

/// Seed used for process `id` under master seed `seed`.
pub fn process_seed(seed: u64, id: DgpId) -> u64 {
    rng::derive_seed(seed, "dgp-master", &[id.number() as u64])
}

/// One dataset per process, each with its own derived seed.
pub fn generate_all(n: usize, seed: u64) -> Result<BTreeMap<DgpId, Dataset>> {
    DgpId::ALL.iter().map(|&id| Ok((id, generate(&DgpSpec::new(id, n, process_seed(seed, id)))?))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_and_numbers_parse() {
        for id in DgpId::ALL {
            assert_eq!(id.name().parse::<DgpId>().unwrap(), id);
            assert_eq!(id.number().to_string().parse::<DgpId>().unwrap(), id);
        }
        assert_eq!("dgp6".parse::<DgpId>().unwrap(), DgpId::Heteroscedastic);
        assert!("15".parse::<DgpId>().is_err());
        assert!("nope".parse::<DgpId>().is_err());
        assert_eq!(DgpId::parse_list("all").unwrap().len(), 14);
        assert_eq!(DgpId::parse_list("1,spiral").unwrap(), vec![DgpId::BivariateNormal, DgpId::Spiral]);
    }

    #[test]
    fn skew_t_direction_is_inside_unit_ball() {
        let (delta, l) = skew_t_setup();
        assert!(delta[0] * delta[0] + delta[1] * delta[1] < 1.0);
        assert!(l.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn every_process_is_finite() {
        let all = generate_all(2000, 5).unwrap();
        assert_eq!(all.len(), 14);
        for (id, ds) in &all {
            assert_eq!(ds.values.dim(), (2000, 2));
            assert!(ds.values.iter().all(|v| v.is_finite()), "{id}");
        }
    }

    #[test]
    fn zero_rows_rejected() {
        assert!(generate(&DgpSpec::new(DgpId::Spiral, 0, 1)).is_err());
    }
}
