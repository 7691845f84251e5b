//! Helpers shared by the integration tests: random instances and
//! independent reference implementations.
#![allow(dead_code, clippy::needless_range_loop)]

use mctm_core::basis::{expand, BasisConfig, BasisExpansion};
use mctm_core::data::Dataset;
use mctm_core::model::{nll_with_gradient, ModelParams};
use mctm_core::rng;
use mctm_core::scores::stacked_rows;
use nalgebra::DMatrix;
use ndarray::{Array2, Array3};
use rand::Rng;

/// Expansion of uniform data on `[0, 1]^J` with unit bounds.
pub fn random_expansion(n: usize, dims: usize, dim: usize, seed: u64) -> BasisExpansion {
    let mut r = rng::stream(seed, "test-data", &[]);
    let values = Array2::from_shape_fn((n, dims), |_| r.random_range(0.02..0.98));
    let config = BasisConfig::new(dim - 1, vec![(0.0, 1.0); dims]).unwrap();
    expand(&Dataset::from_values(values), &config).unwrap()
}

/// Arbitrary (non-Bernstein) rows, for identities that hold for any input.
pub fn arbitrary_expansion(n: usize, dims: usize, dim: usize, seed: u64) -> BasisExpansion {
    let mut r = rng::stream(seed, "test-arbitrary", &[]);
    let basis = Array3::from_shape_fn((n, dims, dim), |_| r.random_range(-1.0..1.0));
    let deriv = Array3::from_shape_fn((n, dims, dim), |_| r.random_range(0.1..1.0));
    BasisExpansion::from_arrays(basis, deriv).unwrap()
}

/// Parameters with positive log arguments on derivative rows that are
/// themselves positive.
pub fn random_params(dims: usize, dim: usize, seed: u64, eta: f64) -> ModelParams {
    let mut r = rng::stream(seed, "test-params", &[]);
    let theta = Array2::from_shape_fn((dims, dim), |_| r.random_range(0.2..1.5));
    let lambda = (0..dims * (dims - 1) / 2).map(|_| r.random_range(-1.0..1.0)).collect();
    ModelParams::new(theta, lambda, eta).unwrap()
}

/// The loss written out term by term, with no chunking or packing tricks.
pub fn naive_nll(e: &BasisExpansion, p: &ModelParams, w: Option<&[f64]>) -> f64 {
    let (n, dims) = (e.n(), e.dims());
    let mut total = 0.0;
    for i in 0..n {
        let wi = w.map_or(1.0, |w| w[i]);
        let h: Vec<f64> = (0..dims).map(|j| e.basis_row(i, j).dot(&p.theta.row(j))).collect();
        for j in 0..dims {
            let mut z = h[j];
            for k in 0..j {
                z += p.lambda_at(j, k) * h[k];
            }
            let g = e.deriv_row(i, j).dot(&p.theta.row(j));
            total += wi * (0.5 * z * z - g.max(p.eta).ln());
        }
    }
    total
}

/// Counter-clockwise hull vertices of a 2-D point set, collinear points
/// excluded (Andrew's monotone chain).
pub fn convex_hull_2d(points: &[(f64, f64)]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..points.len()).collect();
    idx.sort_by(|&a, &b| points[a].partial_cmp(&points[b]).unwrap());
    idx.dedup_by(|a, b| points[*a] == points[*b]);
    if idx.len() < 3 {
        return idx;
    }
    let cross = |o: usize, a: usize, b: usize| {
        let (o, a, b) = (points[o], points[a], points[b]);
        (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
    };
    let mut hull: Vec<usize> = Vec::new();
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &usize>> =
            if pass == 0 { Box::new(idx.iter()) } else { Box::new(idx.iter().rev()) };
        for &p in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

fn project_segment(q: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (ex, ey) = (b.0 - a.0, b.1 - a.1);
    let len2 = ex * ex + ey * ey;
    let t = if len2 > 0.0 { (((q.0 - a.0) * ex + (q.1 - a.1) * ey) / len2).clamp(0.0, 1.0) } else { 0.0 };
    let (px, py) = (a.0 + t * ex, a.1 + t * ey);
    ((q.0 - px).powi(2) + (q.1 - py).powi(2)).sqrt()
}

/// Exact distance from `q` to the hull of a small 2-D set: zero inside,
/// otherwise the smallest distance to any segment between two points
/// (which covers every hull edge and vertex).
pub fn exact_hull_distance_2d(q: (f64, f64), set: &[(f64, f64)]) -> f64 {
    let hull = convex_hull_2d(set);
    if hull.len() >= 3 {
        let inside = (0..hull.len()).all(|s| {
            let (a, b) = (set[hull[s]], set[hull[(s + 1) % hull.len()]]);
            (b.0 - a.0) * (q.1 - a.1) - (b.1 - a.1) * (q.0 - a.0) >= 0.0
        });
        if inside {
            return 0.0;
        }
    }
    let mut best = f64::INFINITY;
    for a in 0..set.len() {
        for b in a..set.len() {
            best = best.min(project_segment(q, set[a], set[b]));
        }
    }
    best
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// Leverage of every row of the explicit `nJ × dJ^2` block matrix, from a
/// column-pivoted QR: squared row norms of the leading `rank` columns of `Q`.
pub fn explicit_block_leverage(e: &BasisExpansion) -> Vec<f64> {
    let (n, dims, dim) = (e.n(), e.dims(), e.dim());
    let width = dim * dims;
    let mut b = DMatrix::<f64>::zeros(n * dims, width * dims);
    for i in 0..n {
        let row = stacked_rows(e).row(i).to_vec();
        for j in 0..dims {
            for (c, v) in row.iter().enumerate() {
                b[(i * dims + j, j * width + c)] = *v;
            }
        }
    }
    let qr = b.clone().col_piv_qr();
    let (q, r) = (qr.q(), qr.r());
    let rmax = r[(0, 0)].abs();
    let rank = (0..r.nrows().min(r.ncols())).take_while(|&k| r[(k, k)].abs() > 1e-10 * rmax).count();
    (0..n * dims).map(|row| (0..rank).map(|k| q[(row, k)] * q[(row, k)]).sum()).collect()
}

/// Largest relative error between the analytic gradient and central
/// differences of [`naive_nll`], over every free coordinate.
pub fn max_gradient_error(e: &BasisExpansion, p: &ModelParams) -> f64 {
    let (_, g) = nll_with_gradient(e, p, None).unwrap();
    let h = 1e-6;
    let central = |up: ModelParams, dn: ModelParams| (naive_nll(e, &up, None) - naive_nll(e, &dn, None)) / (2.0 * h);
    let mut worst: f64 = 0.0;
    for j in 0..p.dims() {
        for k in 0..p.dim() {
            let (mut up, mut dn) = (p.clone(), p.clone());
            up.theta[[j, k]] += h;
            dn.theta[[j, k]] -= h;
            worst = worst.max(relative_error(central(up, dn), g.theta[[j, k]]));
        }
    }
    for l in 0..p.lambda.len() {
        let (mut up, mut dn) = (p.clone(), p.clone());
        up.lambda[l] += h;
        dn.lambda[l] -= h;
        worst = worst.max(relative_error(central(up, dn), g.lambda[l]));
    }
    worst
}
