//! Limited-memory BFGS with a backtracking Armijo line search.

use std::collections::VecDeque;

pub const ARMIJO_C: f64 = 1e-4;
pub const MAX_HALVINGS: usize = 60;

#[derive(Clone, Copy, Debug)]
pub struct Options {
    pub max_iters: usize,
    /// Stop once the Euclidean gradient norm falls to this level.
    pub grad_tol: f64,
    pub memory: usize,
}

impl Default for Options {
    fn default() -> Self {
        Self { max_iters: 500, grad_tol: 1e-6, memory: 10 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Converged,
    MaxIterations,
    /// The line search found no acceptable step; the best iterate is kept.
    Stalled,
}

#[derive(Clone, Debug)]
pub struct Outcome {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub status: Status,
    pub evaluations: usize,
}

/// The starting point itself has a non-finite objective or gradient.
#[derive(Clone, Debug)]
pub struct NonFiniteStart;

/// Result of one backtracking search along `dir`.
#[derive(Clone, Debug)]
pub struct StepResult {
    pub step: f64,
    pub x: Vec<f64>,
    pub f: f64,
    pub grad: Vec<f64>,
    pub evaluations: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Backtrack from `initial` by halving until the Armijo condition holds.
/// Trial points with a non-finite value count as failures. Returns `None`
/// after [`MAX_HALVINGS`] halvings.
pub fn line_search<F>(
    objective: &mut F,
    x: &[f64],
    f: f64,
    grad: &[f64],
    dir: &[f64],
    initial: f64,
) -> Option<StepResult>
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let slope = dot(grad, dir);
    let mut step = initial;
    let mut trial = vec![0.0; x.len()];
    let mut g = vec![0.0; x.len()];
    for evals in 1..=MAX_HALVINGS + 1 {
        for ((t, xi), di) in trial.iter_mut().zip(x).zip(dir) {
            *t = xi + step * di;
        }
        let ft = objective(&trial, &mut g);
        if ft.is_finite() && g.iter().all(|v| v.is_finite()) && ft <= f + ARMIJO_C * step * slope {
            return Some(StepResult { step, x: trial, f: ft, grad: g, evaluations: evals });
        }
        step *= 0.5;
    }
    None
}

/// Minimize `objective`, which writes the gradient into its second argument
/// and returns the value (non-finite values mark infeasible points).
pub fn minimize<F>(mut objective: F, x0: Vec<f64>, opts: &Options) -> Result<Outcome, NonFiniteStart>
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let dim = x0.len();
    let mut x = x0;
    let mut g = vec![0.0; dim];
    let mut f = objective(&x, &mut g);
    let mut evaluations = 1;
    if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(NonFiniteStart);
    }
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(opts.memory);
    let mut status = Status::MaxIterations;
    let mut iterations = 0;

    while iterations < opts.max_iters {
        let gn = norm(&g);
        if gn <= opts.grad_tol {
            status = Status::Converged;
            break;
        }
        iterations += 1;

        let mut dir = two_loop(&g, &history);
        let mut initial = 1.0;
        if dot(&dir, &g) >= 0.0 || dir.iter().any(|v| !v.is_finite()) {
            history.clear();
            dir = g.iter().map(|v| -v).collect();
        }
        if history.is_empty() {
            initial = (1.0 / norm(&dir)).min(1.0);
        }

        let res = match line_search(&mut objective, &x, f, &g, &dir, initial) {
            Some(r) => r,
            None if !history.is_empty() => {
                // retry once along steepest descent before giving up
                history.clear();
                dir = g.iter().map(|v| -v).collect();
                let init = (1.0 / norm(&dir)).min(1.0);
                evaluations += MAX_HALVINGS + 1;
                match line_search(&mut objective, &x, f, &g, &dir, init) {
                    Some(r) => r,
                    None => {
                        evaluations += MAX_HALVINGS + 1;
                        status = Status::Stalled;
                        break;
                    }
                }
            }
            None => {
                evaluations += MAX_HALVINGS + 1;
                status = Status::Stalled;
                break;
            }
        };
        evaluations += res.evaluations;

        let s: Vec<f64> = res.x.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = res.grad.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * norm(&s) * norm(&y) && sy > 0.0 {
            if history.len() == opts.memory {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
        x = res.x;
        f = res.f;
        g = res.grad;
    }
    if status == Status::MaxIterations && norm(&g) <= opts.grad_tol {
        status = Status::Converged;
    }
    Ok(Outcome { grad_norm: norm(&g), x, f, iterations, status, evaluations })
}

/// Two-loop recursion: approximate inverse Hessian times `-g`.
fn two_loop(g: &[f64], history: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q: Vec<f64> = g.to_vec();
    let mut alphas = Vec::with_capacity(history.len());
    for (s, y, rho) in history.iter().rev() {
        let a = rho * dot(s, &q);
        for (qi, yi) in q.iter_mut().zip(y) {
            *qi -= a * yi;
        }
        alphas.push(a);
    }
    if let Some((s, y, _)) = history.back() {
        let gamma = dot(s, y) / dot(y, y);
        q.iter_mut().for_each(|v| *v *= gamma);
    }
    for ((s, y, rho), a) in history.iter().zip(alphas.iter().rev()) {
        let b = rho * dot(y, &q);
        for (qi, si) in q.iter_mut().zip(s) {
            *qi += (a - b) * si;
        }
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}
