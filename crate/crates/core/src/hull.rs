//! Sparse approximation of a convex hull (an ε-kernel).
//!
//! Points are added greedily: start from a random point `a0`, the point
//! farthest from it, and the point farthest from the line through both; then
//! repeatedly add the input point farthest from the hull of the current
//! selection. Distances to the hull are computed with Gilbert's
//! Frank–Wolfe iteration, which only needs the extreme selected point in a
//! direction and a projection onto a segment.
//!
//! The greedy loop keeps, for every input point, a witness inside the current
//! hull together with the distance to it. The selection only grows, so a
//! witness stays valid and its distance is an upper bound on the true hull
//! distance; points certified to lie within tolerance of the hull are retired
//! for good. Each round then refines candidates lazily in decreasing order of
//! their bound until the best one is certified.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::io::Write;

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::basis::BasisExpansion;
use crate::data::format_float;
use crate::error::{Error, Result};
use crate::linalg::{cholesky, forward_solve};
use crate::rng;

/// Result of a greedy hull selection.
#[derive(Clone, Debug, PartialEq)]
pub struct HullSelection {
    /// `(observation, dimension)` pairs in selection order.
    pub selected: Vec<(usize, usize)>,
    /// The selected points, one row each.
    pub points: Array2<f64>,
    /// Farthest remaining hull distance when each point past the three
    /// seeds was added.
    pub residuals: Vec<f64>,
    pub epsilon: f64,
}

/// How pooled derivative rows are grouped before selection.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HullPooling {
    /// One hull over all `nJ` derivative rows.
    #[default]
    Pooled,
    /// A separate hull per outcome dimension, budget split evenly.
    PerDimension,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HullAugmentation {
    /// Distinct observation indices in order of first selection.
    pub observations: Vec<usize>,
    pub selections: Vec<HullSelection>,
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Iteration budget `ceil(1/eps^2)` of the Frank–Wolfe loop.
pub fn iteration_budget(epsilon: f64) -> u64 {
    let m = (1.0 / (epsilon * epsilon)).ceil();
    if m >= u64::MAX as f64 {
        u64::MAX
    } else {
        m.max(1.0) as u64
    }
}

/// Move `t` to the point of segment `[t, p]` closest to `q`; returns the new
/// distance.
#[inline]
fn segment_step(q: &[f64], t: &mut [f64], p: &[f64]) -> f64 {
    let mut ve = 0.0;
    let mut ee = 0.0;
    for k in 0..q.len() {
        let e = p[k] - t[k];
        ve += (q[k] - t[k]) * e;
        ee += e * e;
    }
    if ee > 0.0 && ve > 0.0 {
        let g = (ve / ee).min(1.0);
        for k in 0..q.len() {
            t[k] += g * (p[k] - t[k]);
        }
    }
    dist2(q, t).sqrt()
}

/// Gilbert iterations from a witness `t` already inside `conv(selected)`.
/// Returns `(upper, lower)` bounds on the distance; `t` is updated in place.
/// Stops early once the upper bound falls below `stop_below`.
fn refine(q: &[f64], t: &mut [f64], selected: &[f64], tol: f64, max_iters: u64, stop_below: f64) -> (f64, f64) {
    let d = q.len();
    let mut v = vec![0.0; d];
    let mut lower: f64 = 0.0;
    let mut upper = dist2(q, t).sqrt();
    let mut it = 0u64;
    while it < max_iters {
        if upper < tol || upper < stop_below {
            break;
        }
        for k in 0..d {
            v[k] = q[k] - t[k];
        }
        // extreme selected point in direction v, lowest index on ties
        let mut best = 0;
        let mut best_val = f64::NEG_INFINITY;
        for (s, p) in selected.chunks_exact(d).enumerate() {
            let val = dot(&v, p);
            if val > best_val {
                best_val = val;
                best = s;
            }
        }
        let gap = best_val - dot(&v, t);
        lower = lower.max((upper * upper - gap) / upper);
        if gap <= 0.0 {
            // no selected point beyond t in direction v: t is the projection
            lower = upper;
            break;
        }
        if upper - lower <= tol {
            break;
        }
        let p = &selected[best * d..(best + 1) * d];
        let next = segment_step(q, t, p);
        it += 1;
        if !(next < upper) {
            break;
        }
        upper = next;
    }
    (upper, lower.min(upper))
}

/// Minimum-norm point of the affine hull of `pts` (rows of `corral`),
/// as barycentric coefficients. `None` when the points are affinely
/// dependent to working precision.
fn affine_min_norm(x: &[f64], corral: &[usize], d: usize) -> Option<Vec<f64>> {
    let c = corral.len();
    if c == 1 {
        return Some(vec![1.0]);
    }
    let base = &x[corral[0] * d..(corral[0] + 1) * d];
    let diffs: Vec<Vec<f64>> = corral[1..].iter().map(|&s| (0..d).map(|k| x[s * d + k] - base[k]).collect()).collect();
    let m = c - 1;
    let mut gram = vec![0.0; m * m];
    let mut rhs = vec![0.0; m];
    for a in 0..m {
        for b in 0..=a {
            let g = dot(&diffs[a], &diffs[b]);
            gram[a * m + b] = g;
            gram[b * m + a] = g;
        }
        rhs[a] = -dot(&diffs[a], base);
    }
    let scale = (0..m).map(|a| gram[a * m + a]).fold(0.0, f64::max);
    let l = cholesky(&gram, m)?;
    if (0..m).any(|a| l[a * m + a] * l[a * m + a] <= 1e-13 * scale) {
        return None;
    }
    forward_solve(&l, m, &mut rhs);
    for a in (0..m).rev() {
        let mut v = rhs[a];
        for b in a + 1..m {
            v -= l[b * m + a] * rhs[b];
        }
        rhs[a] = v / l[a * m + a];
    }
    let mut alpha = Vec::with_capacity(c);
    alpha.push(1.0 - rhs.iter().sum::<f64>());
    alpha.extend(rhs);
    Some(alpha)
}

/// Distance from `q` to `conv(selected)` by Wolfe's minimum-norm-point
/// method: Frank–Wolfe vertex steps with an exact affine correction over a
/// small active set. Writes the closest point found into `t` and returns
/// `(upper, lower)`; stops once the bounds are `tol` apart or the upper
/// bound drops below `stop_below`.
fn wolfe(q: &[f64], t: &mut [f64], selected: &[f64], tol: f64, stop_below: f64) -> (f64, f64) {
    let d = q.len();
    let k = selected.len() / d;
    // shift so that q is the origin
    let x: Vec<f64> = selected.chunks_exact(d).flat_map(|p| p.iter().zip(q).map(|(a, b)| a - b)).collect();
    let norm2 = |s: usize| dot(&x[s * d..(s + 1) * d], &x[s * d..(s + 1) * d]);
    let mut first = 0;
    for s in 1..k {
        if norm2(s) < norm2(first) {
            first = s;
        }
    }
    let mut corral = vec![first];
    let mut lambda = vec![1.0];
    let mut y = x[first * d..(first + 1) * d].to_vec();
    let mut lower: f64 = 0.0;
    let combine = |corral: &[usize], w: &[f64], y: &mut [f64]| {
        y.iter_mut().for_each(|v| *v = 0.0);
        for (&s, &wt) in corral.iter().zip(w) {
            for c in 0..d {
                y[c] += wt * x[s * d + c];
            }
        }
    };
    for _major in 0..(8 * k + 64) {
        let yy = dot(&y, &y);
        let upper = yy.sqrt();
        if upper < tol || upper < stop_below {
            break;
        }
        let mut best = 0;
        let mut best_val = f64::INFINITY;
        for s in 0..k {
            let v = dot(&y, &x[s * d..(s + 1) * d]);
            if v < best_val {
                best_val = v;
                best = s;
            }
        }
        lower = lower.max(best_val / upper);
        if upper - lower <= tol || yy - best_val <= 1e-14 * yy || corral.contains(&best) {
            break;
        }
        corral.push(best);
        lambda.push(0.0);
        // minor cycles: move toward the affine minimizer, dropping points
        // whose weight reaches zero
        loop {
            let alpha = match affine_min_norm(&x, &corral, d) {
                Some(a) => a,
                None => {
                    corral.pop();
                    lambda.pop();
                    combine(&corral, &lambda, &mut y);
                    let up = dot(&y, &y).sqrt();
                    for c in 0..d {
                        t[c] = q[c] + y[c];
                    }
                    return (up, lower.min(up));
                }
            };
            if alpha.iter().all(|&a| a > 1e-14) {
                lambda = alpha;
                break;
            }
            let mut theta: f64 = 1.0;
            for (a, l) in alpha.iter().zip(&lambda) {
                if *a <= 1e-14 {
                    theta = theta.min(l / (l - a));
                }
            }
            for (l, a) in lambda.iter_mut().zip(&alpha) {
                *l = theta * a + (1.0 - theta) * *l;
            }
            let mut w = 0;
            for r in 0..corral.len() {
                if lambda[r] > 1e-14 {
                    corral[w] = corral[r];
                    lambda[w] = lambda[r];
                    w += 1;
                }
            }
            corral.truncate(w);
            lambda.truncate(w);
            let total: f64 = lambda.iter().sum();
            lambda.iter_mut().for_each(|l| *l /= total);
        }
        combine(&corral, &lambda, &mut y);
    }
    let upper = dot(&y, &y).sqrt();
    for c in 0..d {
        t[c] = q[c] + y[c];
    }
    (upper, lower.min(upper))
}

/// Rough diameter: the largest distance among the points that are extreme
/// along some coordinate axis.
pub fn diameter_estimate(points: &[f64], d: usize) -> f64 {
    if points.is_empty() || d == 0 {
        return 0.0;
    }
    let mut extremes: Vec<usize> = Vec::with_capacity(2 * d);
    for k in 0..d {
        let (mut lo, mut hi) = (0, 0);
        for (i, p) in points.chunks_exact(d).enumerate() {
            if p[k] < points[lo * d + k] {
                lo = i;
            }
            if p[k] > points[hi * d + k] {
                hi = i;
            }
        }
        extremes.push(lo);
        extremes.push(hi);
    }
    extremes.sort_unstable();
    extremes.dedup();
    let mut best: f64 = 0.0;
    for (x, &a) in extremes.iter().enumerate() {
        for &b in &extremes[x + 1..] {
            best = best.max(dist2(&points[a * d..(a + 1) * d], &points[b * d..(b + 1) * d]));
        }
    }
    best.sqrt()
}

/// Distance from `q` to the hull of the rows of `set` (`k × d`, flattened),
/// accurate to `epsilon` times the diameter of `set ∪ {q}`.
///
/// Starts at the closest point of `set` and runs at most `ceil(1/eps^2)`
/// Frank–Wolfe steps. Returns the distance and the witness point.
pub fn hull_distance(q: &[f64], set: &[f64], epsilon: f64) -> (f64, Vec<f64>) {
    let d = q.len();
    assert!(d > 0 && !set.is_empty() && set.len().is_multiple_of(d), "set must hold at least one point of dimension d");
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, p) in set.chunks_exact(d).enumerate() {
        let v = dist2(q, p);
        if v < best_d {
            best_d = v;
            best = i;
        }
    }
    let mut t = set[best * d..(best + 1) * d].to_vec();
    let mut all = set.to_vec();
    all.extend_from_slice(q);
    let tol = epsilon * diameter_estimate(&all, d);
    let (upper, _) = refine(q, &mut t, set, tol, iteration_budget(epsilon), 0.0);
    (upper, t)
}

/// One representative (the lowest index) per grid cell of side `cell`.
/// Returns the representative indices and their points, flattened.
fn representatives(points: &[f64], d: usize, cell: f64) -> (Vec<usize>, Vec<f64>) {
    let m = points.len() / d;
    if !(cell > 0.0) {
        return ((0..m).collect(), points.to_vec());
    }
    let quantize = |i: usize, k: usize| (points[i * d + k] / cell).floor() as i64;
    let mut seen: HashMap<u64, usize> = HashMap::with_capacity(m / 4);
    let mut idx = Vec::new();
    let mut pts = Vec::new();
    for i in 0..m {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for k in 0..d {
            h ^= quantize(i, k) as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3).rotate_left(29);
        }
        let keep = match seen.get(&h) {
            Some(&r) => (0..d).any(|k| quantize(r, k) != quantize(i, k)),
            None => {
                seen.insert(h, i);
                true
            }
        };
        if keep {
            idx.push(i);
            pts.extend_from_slice(&points[i * d..(i + 1) * d]);
        }
    }
    (idx, pts)
}

/// Relative distance below which a selected point counts as interior.
const INTERIOR_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq)]
struct Key(f64, usize);

impl Eq for Key {}

impl Ord for Key {
    fn cmp(&self, other: &Self) -> Ordering {
        // larger bound first, then lower index
        self.0.total_cmp(&other.0).then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Greedy farthest-point state over `m` points of dimension `d`.
struct Greedy<'a> {
    pts: &'a [f64],
    d: usize,
    m: usize,
    epsilon: f64,
    tol: f64,
    selected: Vec<usize>,
    sel_pts: Vec<f64>,
    active: Vec<bool>,
    upper: Vec<f64>,
    witness: Vec<f64>,
    residuals: Vec<f64>,
}

impl<'a> Greedy<'a> {
    fn new(pts: &'a [f64], d: usize, epsilon: f64, diam: f64) -> Self {
        let m = pts.len() / d;
        Self {
            pts,
            d,
            m,
            epsilon,
            tol: epsilon * diam,
            selected: Vec::new(),
            sel_pts: Vec::new(),
            active: vec![true; m],
            upper: vec![f64::INFINITY; m],
            witness: Vec::new(),
            residuals: Vec::new(),
        }
    }

    fn point(&self, i: usize) -> &'a [f64] {
        &self.pts[i * self.d..(i + 1) * self.d]
    }

    fn push_selected(&mut self, i: usize) {
        self.selected.push(i);
        self.sel_pts.extend_from_slice(self.point(i));
        self.active[i] = false;
    }

    /// `a0` at random, `a1` farthest from `a0`, `a2` farthest from the line
    /// through both. Stops early when the points coincide.
    fn seed(&mut self, rng: &mut impl Rng, budget: usize) {
        let d = self.d;
        let a0 = rng.random_range(0..self.m);
        self.push_selected(a0);
        if budget < 2 {
            return;
        }
        let p0 = self.point(a0);
        let (mut a1, mut far) = (a0, 0.0);
        for i in 0..self.m {
            let v = dist2(self.point(i), p0);
            if v > far {
                far = v;
                a1 = i;
            }
        }
        if a1 == a0 {
            return;
        }
        self.push_selected(a1);
        if budget < 3 {
            return;
        }
        let p1 = self.point(a1);
        let dir: Vec<f64> = (0..d).map(|k| p1[k] - p0[k]).collect();
        let dd = dot(&dir, &dir);
        let (mut a2, mut far) = (a0, 0.0);
        for i in 0..self.m {
            let q = self.point(i);
            let mut qa = 0.0;
            let mut proj = 0.0;
            for k in 0..d {
                let w = q[k] - p0[k];
                qa += w * w;
                proj += w * dir[k];
            }
            let v = qa - proj * proj / dd;
            if v > far {
                far = v;
                a2 = i;
            }
        }
        if a2 != a0 && far > 0.0 {
            self.push_selected(a2);
        }
    }

    /// Reset every witness to the nearest selected point.
    fn rebuild(&mut self) {
        let d = self.d;
        self.witness = vec![0.0; self.m * d];
        let selected_set: std::collections::HashSet<usize> = self.selected.iter().copied().collect();
        for i in 0..self.m {
            if selected_set.contains(&i) {
                self.active[i] = false;
                self.upper[i] = 0.0;
                continue;
            }
            let q = self.point(i);
            let (mut best, mut bd) = (0, f64::INFINITY);
            for (s, p) in self.sel_pts.chunks_exact(d).enumerate() {
                let v = dist2(q, p);
                if v < bd {
                    bd = v;
                    best = s;
                }
            }
            self.witness[i * d..(i + 1) * d].copy_from_slice(&self.sel_pts[best * d..(best + 1) * d]);
            // walk the witness along the other selected points once
            let mut u = bd.sqrt();
            for s in 0..self.selected.len() {
                if s != best {
                    let p = &self.sel_pts[s * d..(s + 1) * d];
                    u = segment_step(q, &mut self.witness[i * d..(i + 1) * d], p);
                }
            }
            self.upper[i] = u;
            self.active[i] = u >= self.tol;
        }
    }

    /// Fold the newest selected point into every witness.
    fn absorb_last(&mut self) {
        let d = self.d;
        let p = self.point(*self.selected.last().expect("nonempty"));
        for i in 0..self.m {
            if !self.active[i] {
                continue;
            }
            let q = self.point(i);
            let u = segment_step(q, &mut self.witness[i * d..(i + 1) * d], p);
            self.upper[i] = u;
            if u < self.tol {
                self.active[i] = false;
            }
        }
    }

    /// Add the farthest point. Returns `None` once every point is within
    /// tolerance of the hull.
    fn step(&mut self) -> Option<usize> {
        let d = self.d;
        let mut heap: BinaryHeap<Key> =
            (0..self.m).filter(|&i| self.active[i]).map(|i| Key(self.upper[i], i)).collect();
        while let Some(Key(_, i)) = heap.pop() {
            // refining past the runner-up's bound cannot change the order
            let next = heap.peek().map_or(0.0, |k| k.0);
            let q = self.point(i);
            let (up, _) = wolfe(q, &mut self.witness[i * d..(i + 1) * d], &self.sel_pts, self.tol, next);
            self.upper[i] = up;
            if up < self.tol {
                self.active[i] = false;
            } else if up >= next {
                self.push_selected(i);
                self.residuals.push(up);
                self.absorb_last();
                return Some(i);
            } else {
                heap.push(Key(up, i));
            }
        }
        None
    }

    /// Drop selected points that lie inside the hull of the others. Such a
    /// point does not change the hull, so every witness stays valid.
    /// Returns whether anything was removed.
    fn prune(&mut self) -> bool {
        let d = self.d;
        let inside = INTERIOR_TOL * self.tol / self.epsilon;
        let mut removed = false;
        let mut s = 0;
        while s < self.selected.len() && self.selected.len() > 1 {
            let q = self.point(self.selected[s]).to_vec();
            let others: Vec<f64> = self
                .sel_pts
                .chunks_exact(d)
                .enumerate()
                .filter(|(x, _)| *x != s)
                .flat_map(|(_, p)| p.iter().copied())
                .collect();
            let mut t = vec![0.0; d];
            let (up, _) = wolfe(&q, &mut t, &others, inside, 0.0);
            if up < inside {
                self.selected.remove(s);
                self.sel_pts.drain(s * d..(s + 1) * d);
                removed = true;
            } else {
                s += 1;
            }
        }
        removed
    }

    /// Run the greedy loop until `done` says the selection is large enough
    /// or no point is left outside tolerance. Selected points that end up
    /// inside the hull of the others (the random first seed, typically) are
    /// dropped and the freed budget is refilled.
    fn run(&mut self, mut done: impl FnMut(&[usize]) -> bool) {
        self.rebuild();
        loop {
            while !done(&self.selected) {
                if self.step().is_none() {
                    break;
                }
            }
            if !self.prune() {
                return;
            }
        }
    }
}

/// Greedy selection over the grid representatives of `points`, with half
/// the tolerance spent on the grid and half on the hull distances.
/// `done` sees original indices. Returns the selected original indices,
/// their points and the residual trace.
fn greedy_kernel(
    points: &[f64],
    d: usize,
    epsilon: f64,
    seed: u64,
    seed_budget: usize,
    mut done: impl FnMut(&[usize]) -> bool,
) -> (Vec<usize>, Vec<f64>, Vec<f64>) {
    let diam = diameter_estimate(points, d);
    let cell = 0.5 * epsilon * diam / (d as f64).sqrt();
    let (idx, pts) = representatives(points, d, cell);
    if idx.len() < 3 {
        return (idx, pts, Vec::new());
    }
    let mut greedy = Greedy::new(&pts, d, 0.5 * epsilon, diam);
    let mut r = rng::stream(seed, "hull-seed", &[]);
    greedy.seed(&mut r, seed_budget);
    let mut mapped = Vec::new();
    greedy.run(|sel| {
        mapped.clear();
        mapped.extend(sel.iter().map(|&i| idx[i]));
        done(&mapped)
    });
    let chosen = greedy.selected.iter().map(|&i| idx[i]).collect();
    (chosen, greedy.sel_pts, greedy.residuals)
}

fn selection_from(
    chosen: (Vec<usize>, Vec<f64>, Vec<f64>),
    d: usize,
    label: impl Fn(usize) -> (usize, usize),
    epsilon: f64,
) -> HullSelection {
    let (idx, pts, residuals) = chosen;
    HullSelection {
        selected: idx.iter().map(|&i| label(i)).collect(),
        points: Array2::from_shape_vec((idx.len(), d), pts).expect("k × d"),
        residuals,
        epsilon,
    }
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::config(format!("hull tolerance must lie in (0, 1), got {epsilon}")));
    }
    Ok(())
}

/// Greedy ε-kernel of the rows of `points`, at most `budget` of them.
/// Pairs in the result are `(row, 0)`.
pub fn select_hull_points(points: &Array2<f64>, budget: usize, epsilon: f64, seed: u64) -> Result<HullSelection> {
    check_epsilon(epsilon)?;
    if budget < 1 {
        return Err(Error::config("hull budget must be at least 1"));
    }
    let (m, d) = points.dim();
    if m == 0 {
        return Err(Error::config("no points to select from"));
    }
    let flat = points.as_standard_layout();
    let flat = flat.as_slice().expect("standard layout");
    if m < 3 {
        return Ok(HullSelection {
            selected: (0..m).map(|i| (i, 0)).collect(),
            points: points.to_owned(),
            residuals: Vec::new(),
            epsilon,
        });
    }
    let chosen = greedy_kernel(flat, d, epsilon, seed, budget, |sel| sel.len() >= budget);
    Ok(selection_from(chosen, d, |i| (i, 0), epsilon))
}

/// Observations whose derivative rows span an approximate hull of all
/// derivative rows, with tolerance `epsilon / J`. Selection continues until
/// `k2` distinct observations are covered or the residual falls below the
/// tolerance.
pub fn hull_augmentation(
    expansion: &BasisExpansion,
    k2: usize,
    epsilon: f64,
    seed: u64,
    pooling: HullPooling,
) -> Result<HullAugmentation> {
    check_epsilon(epsilon)?;
    if k2 == 0 {
        return Ok(HullAugmentation { observations: Vec::new(), selections: Vec::new() });
    }
    let (n, jdim, d) = (expansion.n(), expansion.dims(), expansion.dim());
    let tol = epsilon / jdim as f64;
    let deriv = expansion.deriv_slice();
    let mut observations: Vec<usize> = Vec::new();
    let mut seen = vec![false; n];
    let mut selections = Vec::new();

    let mut record = |obs: usize, observations: &mut Vec<usize>| {
        if !seen[obs] {
            seen[obs] = true;
            observations.push(obs);
        }
    };

    match pooling {
        HullPooling::Pooled => {
            let m = n * jdim;
            if m < 3 {
                for i in 0..n {
                    record(i, &mut observations);
                }
            } else {
                let chosen = greedy_kernel(deriv, d, tol, seed, 3, |sel| {
                    let mut obs: Vec<usize> = sel.iter().map(|p| p / jdim).collect();
                    obs.sort_unstable();
                    obs.dedup();
                    obs.len() >= k2
                });
                let sel = selection_from(chosen, d, |p| (p / jdim, p % jdim), tol);
                for &(i, _) in &sel.selected {
                    record(i, &mut observations);
                }
                selections.push(sel);
            }
        }
        HullPooling::PerDimension => {
            // rows of one dimension, gathered contiguously
            for j in 0..jdim {
                let share = k2 / jdim + usize::from(j < k2 % jdim);
                if share == 0 {
                    continue;
                }
                let mut rows = Vec::with_capacity(n * d);
                for i in 0..n {
                    let off = (i * jdim + j) * d;
                    rows.extend_from_slice(&deriv[off..off + d]);
                }
                let pts = Array2::from_shape_vec((n, d), rows).expect("n × d");
                let mut sel = select_hull_points(&pts, share, tol, rng::derive_seed(seed, "hull-dim", &[j as u64]))?;
                sel.selected.iter_mut().for_each(|p| p.1 = j);
                for &(i, _) in &sel.selected {
                    record(i, &mut observations);
                }
                selections.push(sel);
            }
        }
    }
    if observations.len() > k2 {
        observations.truncate(k2);
    }
    Ok(HullAugmentation { observations, selections })
}

/// `step,observation,dimension,residual` CSV; seeds carry an empty residual.
pub fn write_selection_csv<W: Write>(out: W, sel: &HullSelection) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["step", "observation", "dimension", "residual"])?;
    let seeds = sel.selected.len().saturating_sub(sel.residuals.len());
    for (s, (i, j)) in sel.selected.iter().enumerate() {
        let res = if s >= seeds { format_float(sel.residuals[s - seeds]) } else { String::new() };
        w.write_record([s.to_string(), i.to_string(), j.to_string(), res])?;
    }
    w.flush()?;
    Ok(())
}
