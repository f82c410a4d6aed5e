//! Limited-memory BFGS with a strong-Wolfe line search.

use std::collections::VecDeque;
use std::fmt;

use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, norm, norm_inf};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LbfgsConfig {
    pub memory: usize,
    pub max_iters: usize,
    /// Stop once `‖∇f‖∞` drops to this value.
    pub gradient_tolerance: f64,
    pub wolfe_c1: f64,
    pub wolfe_c2: f64,
    pub max_line_search_evals: usize,
    pub record_path: bool,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        LbfgsConfig {
            memory: 10,
            max_iters: 200,
            gradient_tolerance: 1e-8,
            wolfe_c1: 1e-4,
            wolfe_c2: 0.9,
            max_line_search_evals: 25,
            record_path: false,
        }
    }
}

impl LbfgsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.memory == 0 {
            return Err(Error::config("lbfgs memory must be at least 1"));
        }
        if !(0.0 < self.wolfe_c1 && self.wolfe_c1 < self.wolfe_c2 && self.wolfe_c2 < 1.0) {
            return Err(Error::config(format!(
                "wolfe constants need 0 < c1 < c2 < 1, got c1 = {}, c2 = {}",
                self.wolfe_c1, self.wolfe_c2
            )));
        }
        if !(self.gradient_tolerance >= 0.0) {
            return Err(Error::config("gradient tolerance must be non-negative"));
        }
        if self.max_line_search_evals == 0 {
            return Err(Error::config("line search needs at least one evaluation"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    GradientTolerance,
    MaxIterations,
    LineSearchFailure,
}

impl Termination {
    pub fn name(self) -> &'static str {
        match self {
            Termination::GradientTolerance => "gradient-tolerance",
            Termination::MaxIterations => "max-iterations",
            Termination::LineSearchFailure => "line-search-failure",
        }
    }
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

/// Data of one accepted step, enough to re-check the Wolfe conditions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub step_length: f64,
    /// `f` and `⟨∇f, d⟩` at the start of the step.
    pub f0: f64,
    pub slope0: f64,
    /// The same at the accepted point.
    pub f1: f64,
    pub slope1: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimTrace {
    /// `x_0 … x_K`, only when `record_path` is set.
    pub iterates: Vec<Vec<f64>>,
    pub objective_values: Vec<f64>,
    /// `‖∇f‖∞` at each iterate.
    pub gradient_norms: Vec<f64>,
    pub steps: Vec<StepRecord>,
    pub evaluations: usize,
    pub termination: Termination,
}

impl OptimTrace {
    pub fn iterations(&self) -> usize {
        self.steps.len()
    }
}

struct Point {
    alpha: f64,
    f: f64,
    slope: f64,
}

/// Far end of a line-search bracket.
enum End {
    Point(Point),
    NonFinite(f64),
}

impl End {
    fn alpha(&self) -> f64 {
        match self {
            End::Point(p) => p.alpha,
            End::NonFinite(a) => *a,
        }
    }
}

struct Accepted {
    point: Point,
    x: Vec<f64>,
    g: Vec<f64>,
}

struct LineSearch<'a, F> {
    objective: &'a mut F,
    x: &'a [f64],
    d: &'a [f64],
    f0: f64,
    slope0: f64,
    c1: f64,
    c2: f64,
    evals_left: usize,
    evaluations: usize,
}

/// Minimizer of the cubic through two points with known slopes, if it lies
/// strictly inside the safeguarded interval.
fn cubic_min(a: &Point, b: &Point) -> Option<f64> {
    let d1 = a.slope + b.slope - 3.0 * (a.f - b.f) / (a.alpha - b.alpha);
    let disc = d1 * d1 - a.slope * b.slope;
    if !(disc >= 0.0) {
        return None;
    }
    let d2 = (b.alpha - a.alpha).signum() * disc.sqrt();
    let t = b.alpha - (b.alpha - a.alpha) * (b.slope + d2 - d1) / (b.slope - a.slope + 2.0 * d2);
    let (lo, hi) = (a.alpha.min(b.alpha), a.alpha.max(b.alpha));
    let margin = 0.1 * (hi - lo);
    (t.is_finite() && t > lo + margin && t < hi - margin).then_some(t)
}

impl<F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>> LineSearch<'_, F> {
    fn eval(&mut self, alpha: f64) -> Result<Option<(Point, Vec<f64>, Vec<f64>)>> {
        self.evals_left -= 1;
        self.evaluations += 1;
        let mut x = self.x.to_vec();
        axpy(alpha, self.d, &mut x);
        let (f, g) = (self.objective)(&x)?;
        if g.len() != x.len() {
            return Err(Error::shape("objective gradient has the wrong length"));
        }
        if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
            return Ok(None);
        }
        let slope = dot(&g, self.d);
        Ok(Some((Point { alpha, f, slope }, x, g)))
    }

    fn sufficient(&self, p: &Point) -> bool {
        p.f <= self.f0 + self.c1 * p.alpha * self.slope0
    }

    fn curvature(&self, p: &Point) -> bool {
        p.slope.abs() <= -self.c2 * self.slope0
    }

    fn search(&mut self, alpha_init: f64) -> Result<Option<Accepted>> {
        let mut prev = Point {
            alpha: 0.0,
            f: self.f0,
            slope: self.slope0,
        };
        let mut alpha = alpha_init;
        let mut first = true;
        while self.evals_left > 0 {
            let Some((p, x, g)) = self.eval(alpha)? else {
                // overshoot into a non-finite region: treat as too long
                return self.zoom(prev, End::NonFinite(alpha));
            };
            if !self.sufficient(&p) || (!first && p.f >= prev.f) {
                return self.zoom(prev, End::Point(p));
            }
            if self.curvature(&p) {
                return Ok(Some(Accepted { point: p, x, g }));
            }
            if p.slope >= 0.0 {
                return self.zoom(p, End::Point(prev));
            }
            first = false;
            alpha = p.alpha * 2.0;
            prev = p;
        }
        Ok(None)
    }

    /// Shrinks the bracket between `lo` and `hi` until a strong-Wolfe point is found.
    fn zoom(&mut self, mut lo: Point, mut hi: End) -> Result<Option<Accepted>> {
        while self.evals_left > 0 {
            let alpha = match &hi {
                End::Point(h) => cubic_min(&lo, h).unwrap_or(0.5 * (lo.alpha + h.alpha)),
                End::NonFinite(a) => 0.5 * (lo.alpha + a),
            };
            if alpha == lo.alpha || alpha == hi.alpha() || !alpha.is_finite() {
                return Ok(None);
            }
            let Some((p, x, g)) = self.eval(alpha)? else {
                hi = End::NonFinite(alpha);
                continue;
            };
            if !self.sufficient(&p) || p.f >= lo.f {
                hi = End::Point(p);
                continue;
            }
            if self.curvature(&p) {
                return Ok(Some(Accepted { point: p, x, g }));
            }
            if p.slope * (hi.alpha() - lo.alpha) >= 0.0 {
                hi = End::Point(lo);
            }
            lo = p;
        }
        Ok(None)
    }
}

/// Minimizes `objective` from `x0`. The objective returns `(f, ∇f)`.
pub fn minimize<F>(mut objective: F, x0: &[f64], cfg: &LbfgsConfig) -> Result<(Vec<f64>, OptimTrace)>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    cfg.validate()?;
    let (mut f, mut g) = objective(x0)?;
    if g.len() != x0.len() {
        return Err(Error::shape("objective gradient has the wrong length"));
    }
    if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(Error::Precondition("objective is not finite at the starting point".into()));
    }
    let mut x = x0.to_vec();
    let mut trace = OptimTrace {
        iterates: if cfg.record_path { vec![x.clone()] } else { Vec::new() },
        objective_values: vec![f],
        gradient_norms: vec![norm_inf(&g)],
        steps: Vec::new(),
        evaluations: 1,
        termination: Termination::MaxIterations,
    };
    // (s, y, 1 / ⟨s, y⟩)
    let mut pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(cfg.memory);
    let mut alphas = vec![0.0; cfg.memory];
    loop {
        if norm_inf(&g) <= cfg.gradient_tolerance {
            trace.termination = Termination::GradientTolerance;
            break;
        }
        if trace.steps.len() >= cfg.max_iters {
            trace.termination = Termination::MaxIterations;
            break;
        }
        let mut accepted = None;
        // a failed search with curvature memory is retried once along −∇f
        for attempt in 0..2 {
            if attempt == 1 && pairs.is_empty() {
                break;
            }
            if attempt == 1 {
                pairs.clear();
            }
            let d = direction(&g, &pairs, &mut alphas);
            let slope0 = dot(&g, &d);
            let (d, slope0) = if slope0 < 0.0 && slope0.is_finite() {
                (d, slope0)
            } else {
                pairs.clear();
                let d: Vec<f64> = g.iter().map(|v| -v).collect();
                let s = -dot(&g, &g);
                (d, s)
            };
            let alpha_init = if pairs.is_empty() { (1.0 / norm(&g)).min(1.0) } else { 1.0 };
            let mut ls = LineSearch {
                objective: &mut objective,
                x: &x,
                d: &d,
                f0: f,
                slope0,
                c1: cfg.wolfe_c1,
                c2: cfg.wolfe_c2,
                evals_left: cfg.max_line_search_evals,
                evaluations: 0,
            };
            let result = ls.search(alpha_init)?;
            trace.evaluations += ls.evaluations;
            if let Some(acc) = result {
                accepted = Some((acc, slope0));
                break;
            }
        }
        let Some((acc, slope0)) = accepted else {
            trace.termination = Termination::LineSearchFailure;
            break;
        };
        let s: Vec<f64> = acc.x.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = acc.g.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * norm(&s) * norm(&y) {
            if pairs.len() == cfg.memory {
                pairs.pop_front();
            }
            pairs.push_back((s, y, 1.0 / sy));
        }
        trace.steps.push(StepRecord {
            step_length: acc.point.alpha,
            f0: f,
            slope0,
            f1: acc.point.f,
            slope1: acc.point.slope,
        });
        x = acc.x;
        g = acc.g;
        f = acc.point.f;
        trace.objective_values.push(f);
        trace.gradient_norms.push(norm_inf(&g));
        if cfg.record_path {
            trace.iterates.push(x.clone());
        }
    }
    Ok((x, trace))
}

/// Two-loop recursion: `−H ∇f` with `H₀ = γ I`.
fn direction(g: &[f64], pairs: &VecDeque<(Vec<f64>, Vec<f64>, f64)>, alphas: &mut [f64]) -> Vec<f64> {
    let mut q = g.to_vec();
    for (i, (s, y, rho)) in pairs.iter().enumerate().rev() {
        let a = rho * dot(s, &q);
        alphas[i] = a;
        axpy(-a, y, &mut q);
    }
    if let Some((_, y, rho)) = pairs.back() {
        let gamma = 1.0 / (rho * dot(y, y));
        q.iter_mut().for_each(|v| *v *= gamma);
    }
    for (i, (s, y, rho)) in pairs.iter().enumerate() {
        let b = rho * dot(y, &q);
        axpy(alphas[i] - b, s, &mut q);
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}
