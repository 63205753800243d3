//! Limited-memory BFGS with a backtracking Armijo line search.

use std::collections::VecDeque;
use std::time::{Duration, Instant};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LbfgsConfig {
    pub history: usize,
    pub max_iterations: usize,
    /// Stop when `|f_prev - f| / max(|f_prev|, |f|, 1)` drops below this.
    pub rel_tol: f64,
    /// Stop when the gradient infinity norm drops below this.
    pub grad_tol: f64,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        LbfgsConfig {
            history: 10,
            max_iterations: 200,
            rel_tol: 1e-6,
            grad_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    GradientTolerance,
    RelativeChange,
    MaxIterations,
    /// No step along the search direction decreased the objective.
    LineSearch,
}

#[derive(Debug, Clone)]
pub struct IterationLog {
    pub iteration: usize,
    pub value: f64,
    pub grad_inf_norm: f64,
    pub step: f64,
    pub evaluations: usize,
    pub elapsed: Duration,
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub reason: StopReason,
    pub iterations: Vec<IterationLog>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

struct Pair {
    s: Vec<f64>,
    y: Vec<f64>,
    rho: f64,
}

/// Two-loop recursion: returns `-H g`.
fn direction(grad: &[f64], memory: &VecDeque<Pair>) -> Vec<f64> {
    let mut q = grad.to_vec();
    let mut alphas = Vec::with_capacity(memory.len());
    for p in memory.iter().rev() {
        let a = p.rho * dot(&p.s, &q);
        for (qi, yi) in q.iter_mut().zip(&p.y) {
            *qi -= a * yi;
        }
        alphas.push(a);
    }
    if let Some(last) = memory.back() {
        let gamma = dot(&last.s, &last.y) / dot(&last.y, &last.y);
        q.iter_mut().for_each(|v| *v *= gamma);
    }
    for (p, a) in memory.iter().zip(alphas.iter().rev()) {
        let b = p.rho * dot(&p.y, &q);
        for (qi, si) in q.iter_mut().zip(&p.s) {
            *qi += (a - b) * si;
        }
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

/// Minimizes `f` from `x0`. `f` returns the value and gradient; `on_iter`
/// sees every accepted step.
pub fn minimize<F, C>(mut f: F, x0: Vec<f64>, config: &LbfgsConfig, mut on_iter: C) -> Result<Minimum>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
    C: FnMut(&IterationLog),
{
    const ARMIJO: f64 = 1e-4;
    const MAX_BACKTRACKS: usize = 50;

    let mut x = x0;
    let (mut value, mut grad) = f(&x)?;
    if !value.is_finite() {
        return Err(Error::Training(format!("non-finite objective {value} at the starting point")));
    }
    let mut memory: VecDeque<Pair> = VecDeque::with_capacity(config.history);
    let mut log = Vec::new();
    let mut reason = StopReason::MaxIterations;

    if inf_norm(&grad) < config.grad_tol {
        return Ok(Minimum {
            x,
            value,
            reason: StopReason::GradientTolerance,
            iterations: log,
        });
    }

    for iteration in 1..=config.max_iterations {
        let started = Instant::now();
        let mut dir = direction(&grad, &memory);
        let mut slope = dot(&dir, &grad);
        if !(slope < 0.0) {
            memory.clear();
            dir = grad.iter().map(|g| -g).collect();
            slope = dot(&dir, &grad);
        }
        let mut step = if memory.is_empty() {
            1.0 / dot(&grad, &grad).sqrt().max(1.0)
        } else {
            1.0
        };
        let mut evaluations = 0;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let candidate: Vec<f64> = x.iter().zip(&dir).map(|(xi, di)| xi + step * di).collect();
            let (v, g) = f(&candidate)?;
            evaluations += 1;
            if v.is_finite() && v <= value + ARMIJO * step * slope {
                accepted = Some((candidate, v, g));
                break;
            }
            step *= 0.5;
        }
        let Some((next_x, next_value, next_grad)) = accepted else {
            if !memory.is_empty() {
                memory.clear();
                continue;
            }
            reason = StopReason::LineSearch;
            break;
        };

        let s: Vec<f64> = next_x.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = next_grad.iter().zip(&grad).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&y, &y).max(f64::MIN_POSITIVE) {
            if memory.len() == config.history {
                memory.pop_front();
            }
            memory.push_back(Pair { s, y, rho: 1.0 / sy });
        }

        let rel = (value - next_value).abs() / value.abs().max(next_value.abs()).max(1.0);
        x = next_x;
        value = next_value;
        grad = next_grad;
        let entry = IterationLog {
            iteration,
            value,
            grad_inf_norm: inf_norm(&grad),
            step,
            evaluations,
            elapsed: started.elapsed(),
        };
        on_iter(&entry);
        log.push(entry);

        if inf_norm(&grad) < config.grad_tol {
            reason = StopReason::GradientTolerance;
            break;
        }
        if rel < config.rel_tol {
            reason = StopReason::RelativeChange;
            break;
        }
    }
    Ok(Minimum {
        x,
        value,
        reason,
        iterations: log,
    })
}
