//! Limited-memory BFGS with a strong-Wolfe line search.
//!
//! The line search brackets a step and then zooms with safeguarded cubic
//! interpolation (Nocedal & Wright, algorithms 3.5 and 3.6). A search that
//! cannot find a strong-Wolfe point inside its evaluation budget ends the run
//! cleanly with [`Termination::LineSearchFailed`]; the last accepted iterate is
//! returned.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LbfgsConfig {
    /// Number of curvature pairs kept.
    pub memory: usize,
    pub max_iters: usize,
    /// Stop when the gradient's Euclidean norm is at most this.
    pub grad_tol: f64,
    pub wolfe_c1: f64,
    pub wolfe_c2: f64,
    /// Objective evaluations allowed per line search.
    pub max_line_search_steps: usize,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        Self {
            memory: 10,
            max_iters: 200,
            grad_tol: 1e-5,
            wolfe_c1: 1e-4,
            wolfe_c2: 0.9,
            max_line_search_steps: 20,
        }
    }
}

impl LbfgsConfig {
    pub fn with_max_iters(self, max_iters: usize) -> Self {
        Self { max_iters, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.wolfe_c1 && self.wolfe_c1 < self.wolfe_c2 && self.wolfe_c2 < 1.0) {
            return Err(Error::Config(format!(
                "need 0 < c1 < c2 < 1, got c1={} c2={}",
                self.wolfe_c1, self.wolfe_c2
            )));
        }
        if self.memory == 0 {
            return Err(Error::Config("L-BFGS memory must be at least 1".into()));
        }
        if self.max_line_search_steps == 0 {
            return Err(Error::Config("line search needs at least one evaluation".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    GradientTolerance,
    IterationCap,
    LineSearchFailed,
}

/// One accepted iteration, with the data needed to re-check the Wolfe
/// conditions: `phi(a) = f(x + a·d)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcceptedStep {
    pub step_length: f64,
    pub value_before: f64,
    pub value_after: f64,
    /// `phi'(0)`
    pub slope_before: f64,
    /// `phi'(step_length)`
    pub slope_after: f64,
}

impl AcceptedStep {
    pub fn satisfies_strong_wolfe(&self, c1: f64, c2: f64) -> bool {
        self.value_after <= self.value_before + c1 * self.step_length * self.slope_before
            && self.slope_after.abs() <= c2 * self.slope_before.abs()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad_norm: f64,
    pub initial_value: f64,
    pub steps: Vec<AcceptedStep>,
    pub evaluations: usize,
    pub termination: Termination,
}

impl Minimum {
    pub fn iterations(&self) -> usize {
        self.steps.len()
    }

    /// Objective value at the start and after every accepted step.
    pub fn values(&self) -> Vec<f64> {
        std::iter::once(self.initial_value)
            .chain(self.steps.iter().map(|s| s.value_after))
            .collect()
    }
}

/// A stored `(s, y)` pair: `s = x_{k+1} − x_k`, `y = g_{k+1} − g_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvaturePair {
    pub s: Vec<f64>,
    pub y: Vec<f64>,
}

impl CurvaturePair {
    fn sy(&self) -> f64 {
        dot(&self.s, &self.y)
    }
}

/// Pairs whose `sᵀy` is at or below this are not stored.
pub const MIN_CURVATURE: f64 = 1e-10;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Two-loop recursion: returns `H·g` for the L-BFGS inverse-Hessian
/// approximation built from `pairs` (oldest first), with initial scaling
/// `γ = sᵀy / yᵀy` of the newest pair. No pairs means `H = I`.
pub fn two_loop(pairs: &[CurvaturePair], g: &[f64]) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alphas = vec![0.0; pairs.len()];
    for (i, p) in pairs.iter().enumerate().rev() {
        let rho = 1.0 / p.sy();
        alphas[i] = rho * dot(&p.s, &q);
        axpy(-alphas[i], &p.y, &mut q);
    }
    if let Some(last) = pairs.last() {
        let gamma = last.sy() / dot(&last.y, &last.y);
        q.iter_mut().for_each(|v| *v *= gamma);
    }
    for (i, p) in pairs.iter().enumerate() {
        let rho = 1.0 / p.sy();
        let beta = rho * dot(&p.y, &q);
        axpy(alphas[i] - beta, &p.s, &mut q);
    }
    q
}

struct Probe {
    alpha: f64,
    value: f64,
    slope: f64,
    x: Vec<f64>,
    grad: Vec<f64>,
}

struct LineSearch<'a, F> {
    objective: &'a mut F,
    x: &'a [f64],
    dir: &'a [f64],
    value0: f64,
    slope0: f64,
    c1: f64,
    c2: f64,
    budget: usize,
    evaluations: usize,
}

impl<F: FnMut(&[f64]) -> (f64, Vec<f64>)> LineSearch<'_, F> {
    fn probe(&mut self, alpha: f64) -> Probe {
        let mut x = self.x.to_vec();
        axpy(alpha, self.dir, &mut x);
        let (value, grad) = (self.objective)(&x);
        self.evaluations += 1;
        let slope = dot(&grad, self.dir);
        Probe {
            alpha,
            value,
            slope,
            x,
            grad,
        }
    }

    fn armijo_fails(&self, p: &Probe) -> bool {
        !p.value.is_finite() || p.value > self.value0 + self.c1 * p.alpha * self.slope0
    }

    fn curvature_ok(&self, p: &Probe) -> bool {
        p.slope.is_finite() && p.slope.abs() <= -self.c2 * self.slope0
    }

    fn run(&mut self, alpha0: f64) -> Option<Probe> {
        let mut prev = Probe {
            alpha: 0.0,
            value: self.value0,
            slope: self.slope0,
            x: Vec::new(),
            grad: Vec::new(),
        };
        let mut alpha = alpha0;
        let mut first = true;
        while self.evaluations < self.budget {
            let cur = self.probe(alpha);
            if self.armijo_fails(&cur) || (!first && cur.value >= prev.value) {
                return self.zoom(prev, cur);
            }
            if self.curvature_ok(&cur) {
                return Some(cur);
            }
            if cur.slope >= 0.0 {
                return self.zoom(cur, prev);
            }
            first = false;
            alpha = (2.0 * cur.alpha).min(1e10);
            prev = cur;
        }
        None
    }

    fn zoom(&mut self, mut lo: Probe, mut hi: Probe) -> Option<Probe> {
        while self.evaluations < self.budget {
            let (a, b) = if lo.alpha < hi.alpha {
                (lo.alpha, hi.alpha)
            } else {
                (hi.alpha, lo.alpha)
            };
            let width = b - a;
            if width <= f64::EPSILON * b.max(1.0) {
                return None;
            }
            let mut alpha = cubic_min(&lo, &hi).unwrap_or(0.5 * (a + b));
            let margin = 0.1 * width;
            if !(alpha > a + margin && alpha < b - margin) {
                alpha = 0.5 * (a + b);
            }
            let cur = self.probe(alpha);
            if self.armijo_fails(&cur) || cur.value >= lo.value {
                hi = cur;
            } else {
                if self.curvature_ok(&cur) {
                    return Some(cur);
                }
                if cur.slope * (hi.alpha - lo.alpha) >= 0.0 {
                    hi = lo;
                }
                lo = cur;
            }
        }
        None
    }
}

// Minimizer of the cubic interpolating value and slope at both ends.
fn cubic_min(p0: &Probe, p1: &Probe) -> Option<f64> {
    if !(p0.value.is_finite() && p1.value.is_finite() && p0.slope.is_finite() && p1.slope.is_finite()) {
        return None;
    }
    let d1 = p0.slope + p1.slope - 3.0 * (p0.value - p1.value) / (p0.alpha - p1.alpha);
    let disc = d1 * d1 - p0.slope * p1.slope;
    if disc < 0.0 {
        return None;
    }
    let d2 = (p1.alpha - p0.alpha).signum() * disc.sqrt();
    let denom = p1.slope - p0.slope + 2.0 * d2;
    if denom == 0.0 {
        return None;
    }
    let a = p1.alpha - (p1.alpha - p0.alpha) * (p1.slope + d2 - d1) / denom;
    a.is_finite().then_some(a)
}

// Stores the pair if its curvature is positive enough; returns whether it did.
fn remember(history: &mut VecDeque<CurvaturePair>, pair: CurvaturePair, memory: usize) -> bool {
    if pair.sy() <= MIN_CURVATURE {
        return false;
    }
    if history.len() == memory {
        history.pop_front();
    }
    history.push_back(pair);
    true
}

/// Minimizes `objective`, which returns the value and gradient at a point.
pub fn minimize<F>(mut objective: F, x0: &[f64], cfg: &LbfgsConfig) -> Result<Minimum>
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    cfg.validate()?;
    let (mut value, mut grad) = objective(x0);
    if !value.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFiniteStart);
    }
    let mut x = x0.to_vec();
    let mut evaluations = 1;
    let mut history: VecDeque<CurvaturePair> = VecDeque::new();
    let mut steps = Vec::new();
    let initial_value = value;

    let termination = loop {
        if norm(&grad) <= cfg.grad_tol {
            break Termination::GradientTolerance;
        }
        if steps.len() >= cfg.max_iters {
            break Termination::IterationCap;
        }
        let pairs: Vec<CurvaturePair> = history.iter().cloned().collect();
        let mut dir: Vec<f64> = two_loop(&pairs, &grad).into_iter().map(|v| -v).collect();
        let mut slope0 = dot(&grad, &dir);
        if !(slope0 < 0.0) {
            history.clear();
            dir = grad.iter().map(|g| -g).collect();
            slope0 = -dot(&grad, &grad);
        }
        let alpha0 = if history.is_empty() {
            (1.0 / norm(&grad)).min(1.0)
        } else {
            1.0
        };
        let mut search = LineSearch {
            objective: &mut objective,
            x: &x,
            dir: &dir,
            value0: value,
            slope0,
            c1: cfg.wolfe_c1,
            c2: cfg.wolfe_c2,
            budget: cfg.max_line_search_steps,
            evaluations: 0,
        };
        let found = search.run(alpha0);
        evaluations += search.evaluations;
        let Some(probe) = found else {
            break Termination::LineSearchFailed;
        };

        let s: Vec<f64> = probe.x.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = probe.grad.iter().zip(&grad).map(|(a, b)| a - b).collect();
        remember(&mut history, CurvaturePair { s, y }, cfg.memory);
        steps.push(AcceptedStep {
            step_length: probe.alpha,
            value_before: value,
            value_after: probe.value,
            slope_before: slope0,
            slope_after: probe.slope,
        });
        x = probe.x;
        value = probe.value;
        grad = probe.grad;
    };

    Ok(Minimum {
        grad_norm: norm(&grad),
        x,
        value,
        initial_value,
        steps,
        evaluations,
        termination,
    })
}
