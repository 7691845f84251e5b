//! Small dense linear-algebra kernels used by the leverage-score code.
//!
//! Matrices here are tall and skinny (`n` up to a few hundred thousand rows,
//! at most a few hundred columns), so everything works on column-major
//! buffers where a Householder sweep touches contiguous memory.

/// Sum with pairwise (cascade) reduction. The result only depends on the
/// input order, never on how the caller chunked the work.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const BASE: usize = 32;
    if values.len() <= BASE {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Tall column-major matrix.
#[derive(Clone, Debug)]
pub struct ColMajor {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl ColMajor {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    /// Build from a row-major slice.
    pub fn from_row_major(rows: usize, cols: usize, values: &[f64]) -> Self {
        assert_eq!(values.len(), rows * cols);
        let mut m = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m.data[j * rows + i] = values[i * cols + j];
            }
        }
        m
    }

    #[inline]
    pub fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[j * self.rows + i]
    }
}

/// Result of a rank-revealing QR factorization `A P = Q R`.
///
/// Only the leading `rank × rank` block of `R` and the column order are kept;
/// the leverage computation never needs `Q` explicitly.
#[derive(Clone, Debug)]
pub struct PivotedQr {
    /// Column order: `perm[k]` is the original index of the k-th pivoted column.
    pub perm: Vec<usize>,
    /// Numerical rank.
    pub rank: usize,
    /// Upper-triangular factor restricted to the leading `rank` columns,
    /// row-major `rank × rank`.
    pub r11: Vec<f64>,
}

impl PivotedQr {
    /// Householder QR with column pivoting. Columns whose remaining norm drops
    /// below `rel_tol` times the largest initial column norm end the sweep.
    pub fn factor(mut a: ColMajor, rel_tol: f64) -> Self {
        let (m, n) = (a.rows, a.cols);
        let mut perm: Vec<usize> = (0..n).collect();
        let mut norms: Vec<f64> = (0..n).map(|j| sq_norm(a.col(j)).sqrt()).collect();
        let mut ref_norms = norms.clone();
        let max_norm = norms.iter().cloned().fold(0.0, f64::max);
        let threshold = rel_tol * max_norm;
        let steps = m.min(n);
        let mut rank = 0;

        for k in 0..steps {
            // pivot: largest remaining column norm, lowest index on ties
            let mut p = k;
            for j in k + 1..n {
                if norms[j] > norms[p] {
                    p = j;
                }
            }
            if norms[p] <= threshold || norms[p] == 0.0 {
                break;
            }
            if p != k {
                let (lo, hi) = a.data.split_at_mut(p * m);
                lo[k * m..(k + 1) * m].swap_with_slice(&mut hi[..m]);
                perm.swap(k, p);
                norms.swap(k, p);
                ref_norms.swap(k, p);
            }

            // Householder vector for column k, rows k..m
            let (head, tail) = a.data.split_at_mut((k + 1) * m);
            let col = &mut head[k * m + k..(k + 1) * m];
            let alpha = sq_norm(col).sqrt();
            if alpha == 0.0 {
                break;
            }
            let beta = if col[0] > 0.0 { -alpha } else { alpha };
            let v0 = col[0] - beta;
            col[0] = v0;
            // v = col (with v0 head), H = I - 2 v v^T / (v^T v)
            let vtv = sq_norm(col);
            for j in 0..n - k - 1 {
                let cj = &mut tail[j * m + k..(j + 1) * m];
                let dot: f64 = col.iter().zip(cj.iter()).map(|(x, y)| x * y).sum();
                let f = 2.0 * dot / vtv;
                for (y, x) in cj.iter_mut().zip(col.iter()) {
                    *y -= f * x;
                }
            }
            col[0] = beta;
            rank = k + 1;

            // downdate remaining norms; recompute when cancellation bites
            for j in k + 1..n {
                let rkj = a.data[j * m + k];
                let nj = norms[j];
                if nj == 0.0 {
                    continue;
                }
                let t = (1.0 - (rkj / nj).powi(2)).max(0.0);
                let t2 = t * (nj / ref_norms[j]).powi(2);
                if t2 <= f64::EPSILON.sqrt() {
                    let v = sq_norm(&a.data[j * m + k + 1..(j + 1) * m]).sqrt();
                    norms[j] = v;
                    ref_norms[j] = v;
                } else {
                    norms[j] = nj * t.sqrt();
                }
            }
        }

        let mut r11 = vec![0.0; rank * rank];
        for i in 0..rank {
            for j in i..rank {
                r11[i * rank + j] = a.get(i, j);
            }
        }
        Self { perm, rank, r11 }
    }

    /// Squared norm of `R11^{-T} x`, where `x` holds the pivoted leading
    /// entries of an original row. This is the leverage of that row.
    pub fn leverage_of_row(&self, row: &[f64], scratch: &mut Vec<f64>) -> f64 {
        let r = self.rank;
        scratch.clear();
        scratch.extend(self.perm[..r].iter().map(|&c| row[c]));
        // forward substitution with R11^T (lower triangular)
        for i in 0..r {
            let mut s = scratch[i];
            for k in 0..i {
                s -= self.r11[k * r + i] * scratch[k];
            }
            scratch[i] = s / self.r11[i * r + i];
        }
        scratch.iter().map(|x| x * x).sum()
    }
}

#[inline]
fn sq_norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

/// Cholesky factor (lower, row-major) of a symmetric positive-definite matrix.
/// Returns `None` when a pivot is not positive.
pub fn cholesky(a: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if s <= 0.0 {
                    return None;
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    Some(l)
}

/// Solve `L y = b` in place for lower-triangular row-major `L`.
pub fn forward_solve(l: &[f64], n: usize, b: &mut [f64]) {
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_matches_naive_on_small_input() {
        let v: Vec<f64> = (0..100).map(|i| i as f64 * 0.5).collect();
        assert_eq!(pairwise_sum(&v), v.iter().sum::<f64>());
    }

    #[test]
    fn qr_detects_rank_and_reproduces_gram() {
        // third column = first + second
        let rows = [[1.0, 2.0, 3.0], [0.0, 1.0, 1.0], [4.0, -1.0, 3.0], [2.0, 2.0, 4.0]];
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let qr = PivotedQr::factor(ColMajor::from_row_major(4, 3, &flat), 1e-12);
        assert_eq!(qr.rank, 2);
        // leverage scores of a rank-2 matrix sum to 2
        let mut scratch = Vec::new();
        let total: f64 = rows.iter().map(|r| qr.leverage_of_row(r, &mut scratch)).sum();
        assert!((total - 2.0).abs() < 1e-12, "{total}");
    }

    #[test]
    fn cholesky_solves() {
        let a = [4.0, 2.0, 2.0, 3.0];
        let l = cholesky(&a, 2).unwrap();
        let mut b = [2.0, 1.0];
        forward_solve(&l, 2, &mut b);
        // L L^T x = rhs check through the forward half only
        assert!((l[0] - 2.0).abs() < 1e-15);
        assert!((b[0] - 1.0).abs() < 1e-15);
        assert!(cholesky(&[1.0, 2.0, 2.0, 1.0], 2).is_none());
    }
}
