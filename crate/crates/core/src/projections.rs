//! Projection of an approximate trajectory `û` onto the constraint set `h(u) = c`.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::grid::Trajectory;
use crate::krylov::{cg, LinearOperator, SolveOptions, SolveReport};
use crate::lbfgs::{minimize, LbfgsConfig, OptimTrace};
use crate::linalg::{axpy, dot, norm};
use crate::systems::{ConstraintSpec, Linearization, ResidualMap, ResidualVector, System};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    /// Linearized constraint enforced exactly.
    Constrained,
    /// Linearized constraint as a quadratic penalty.
    Relaxed,
    /// Nonlinear penalty problem solved by L-BFGS.
    Lbfgs,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Constrained, Method::Relaxed, Method::Lbfgs];

    pub fn name(self) -> &'static str {
        match self {
            Method::Constrained => "constrained",
            Method::Relaxed => "relaxed",
            Method::Lbfgs => "lbfgs",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::config(format!("unknown projection method `{s}` (expected constrained, relaxed or lbfgs)")))
    }
}

/// Penalty weight: a number or the norm of `û`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Lambda {
    Value(f64),
    NormOfUhat,
}

impl Lambda {
    pub const NORM_TOKEN: &'static str = "norm-of-uhat";
}

impl fmt::Display for Lambda {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Lambda::Value(v) => write!(f, "{v}"),
            Lambda::NormOfUhat => f.write_str(Self::NORM_TOKEN),
        }
    }
}

impl FromStr for Lambda {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case(Self::NORM_TOKEN) {
            return Ok(Lambda::NormOfUhat);
        }
        let v: f64 = s
            .trim()
            .parse()
            .map_err(|_| Error::config(format!("lambda must be a number or `{}`, got `{s}`", Self::NORM_TOKEN)))?;
        let lambda = Lambda::Value(v);
        lambda.validate()?;
        Ok(lambda)
    }
}

impl Lambda {
    pub fn validate(&self) -> Result<()> {
        match self {
            Lambda::Value(v) if !(*v >= 0.0 && v.is_finite()) => {
                Err(Error::config(format!("lambda must be a finite non-negative number, got {v}")))
            }
            _ => Ok(()),
        }
    }
}

/// Whether the penalty objective squares its two norms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PenaltyNorms {
    Squared,
    Unsquared,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionConfig {
    pub method: Method,
    pub lambda: Lambda,
    pub krylov_tol: f64,
    pub krylov_max_iters: usize,
    pub lbfgs: LbfgsConfig,
    pub penalty_norms: PenaltyNorms,
}

impl ProjectionConfig {
    pub fn new(method: Method, lambda: Lambda) -> Self {
        ProjectionConfig {
            method,
            lambda,
            krylov_tol: 1e-8,
            krylov_max_iters: 2000,
            lbfgs: LbfgsConfig::default(),
            penalty_norms: PenaltyNorms::Squared,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.lambda.validate()?;
        if !(self.krylov_tol > 0.0) || self.krylov_max_iters == 0 {
            return Err(Error::config("krylov tolerance and iteration budget must be positive"));
        }
        self.lbfgs.validate()
    }

    fn solve_options(&self) -> SolveOptions {
        SolveOptions {
            tol: self.krylov_tol,
            max_iters: self.krylov_max_iters,
        }
    }
}

/// Numeric `λ` for `û`.
pub fn resolve_lambda(lambda: Lambda, uhat: &Trajectory) -> Result<f64> {
    lambda.validate()?;
    Ok(match lambda {
        Lambda::Value(v) => v,
        Lambda::NormOfUhat => uhat.norm2().sqrt(),
    })
}

// Linearized states beyond this size are recomputed per product instead of cached.
const CACHE_LIMIT_BYTES: usize = 1 << 29;

/// The constraint linearized at `û`: `C = J_h(û)` and `r̂ = h(û) − c`, so
/// that `b = c − h(û) + C û = C û − r̂`.
pub struct LinearizedConstraint {
    map: ResidualMap,
    base: Trajectory,
    lin: Option<Linearization>,
    residual: ResidualVector,
}

impl LinearizedConstraint {
    pub fn new(uhat: &Trajectory, spec: &ConstraintSpec, system: &System) -> Result<Self> {
        Self::from_map(ResidualMap::new(uhat.grid(), system, spec.clone())?, uhat)
    }

    pub fn from_map(mut map: ResidualMap, uhat: &Trajectory) -> Result<Self> {
        let residual = map.residual(uhat)?;
        let grid = uhat.grid();
        let per = if map.spec().scheme == crate::systems::Scheme::Heun { 2 } else { 1 };
        let bytes = grid.num_steps.saturating_sub(1) * map.spec().micro_steps * per * grid.spatial_size() * 8;
        let lin = if bytes <= CACHE_LIMIT_BYTES {
            Some(map.linearize(uhat)?)
        } else {
            None
        };
        Ok(LinearizedConstraint {
            map,
            base: uhat.clone(),
            lin,
            residual,
        })
    }

    pub fn base(&self) -> &Trajectory {
        &self.base
    }

    /// `r̂ = h(û) − c`.
    pub fn residual(&self) -> &ResidualVector {
        &self.residual
    }

    pub fn dim(&self) -> usize {
        self.base.len()
    }

    pub fn jvp(&mut self, v: &[f64]) -> Result<Vec<f64>> {
        let v = Trajectory::from_parts(self.base.grid().clone(), v.to_vec());
        let r = match &self.lin {
            Some(lin) => self.map.jvp_at(lin, &v)?,
            None => self.map.jvp(&self.base, &v)?,
        };
        Ok(r.into_values())
    }

    pub fn vjp(&mut self, w: &[f64]) -> Result<Vec<f64>> {
        let w = ResidualVector::from_values(self.residual.block_len(), w.to_vec())?;
        let t = match &self.lin {
            Some(lin) => self.map.vjp_at(lin, &w)?,
            None => self.map.vjp(&self.base, &w)?,
        };
        Ok(t.into_values())
    }

    /// `b = C û − r̂`.
    pub fn rhs_b(&mut self) -> Result<Vec<f64>> {
        let base = self.base.values().to_vec();
        let mut b = self.jvp(&base)?;
        axpy(-1.0, self.residual.values(), &mut b);
        Ok(b)
    }
}

impl LinearOperator for LinearizedConstraint {
    fn in_dim(&self) -> usize {
        self.dim()
    }

    fn out_dim(&self) -> usize {
        self.residual.len()
    }

    fn apply(&mut self, x: &[f64], out: &mut [f64]) -> Result<()> {
        out.copy_from_slice(&self.jvp(x)?);
        Ok(())
    }

    fn apply_adjoint(&mut self, y: &[f64], out: &mut [f64]) -> Result<()> {
        out.copy_from_slice(&self.vjp(y)?);
        Ok(())
    }

    fn has_adjoint(&self) -> bool {
        true
    }
}

/// `X ↦ C Cᵀ X`.
struct OuterNormal<'a, C: ?Sized> {
    c: &'a mut C,
    tmp: Vec<f64>,
}

impl<C: LinearOperator + ?Sized> LinearOperator for OuterNormal<'_, C> {
    fn in_dim(&self) -> usize {
        self.c.out_dim()
    }

    fn out_dim(&self) -> usize {
        self.c.out_dim()
    }

    fn apply(&mut self, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.c.apply_adjoint(x, &mut self.tmp)?;
        self.c.apply(&self.tmp, out)
    }

    fn is_symmetric(&self) -> bool {
        true
    }
}

/// `X ↦ X + λ Cᵀ C X`.
struct ShiftedInnerNormal<'a, C: ?Sized> {
    c: &'a mut C,
    lambda: f64,
    tmp: Vec<f64>,
}

impl<C: LinearOperator + ?Sized> LinearOperator for ShiftedInnerNormal<'_, C> {
    fn in_dim(&self) -> usize {
        self.c.in_dim()
    }

    fn out_dim(&self) -> usize {
        self.c.in_dim()
    }

    fn apply(&mut self, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.c.apply(x, &mut self.tmp)?;
        self.c.apply_adjoint(&self.tmp, out)?;
        for (o, xi) in out.iter_mut().zip(x) {
            *o = xi + self.lambda * *o;
        }
        Ok(())
    }

    fn is_symmetric(&self) -> bool {
        true
    }

    fn is_positive_definite(&self) -> bool {
        true
    }
}

fn require_adjoint<C: LinearOperator + ?Sized>(c: &C, uhat: &[f64], rhat: &[f64]) -> Result<()> {
    if !c.has_adjoint() {
        return Err(Error::Unsupported("projection needs the adjoint of the constraint operator".into()));
    }
    if uhat.len() != c.in_dim() || rhat.len() != c.out_dim() {
        return Err(Error::shape("projection inputs do not match the constraint operator"));
    }
    Ok(())
}

/// `u = û − Cᵀ X` with `C Cᵀ X = r̂`, the closest point to `û` satisfying `C u = b`.
pub fn constrained_update<C: LinearOperator + ?Sized>(
    c: &mut C,
    uhat: &[f64],
    rhat: &[f64],
    opts: SolveOptions,
) -> Result<(Vec<f64>, SolveReport)> {
    require_adjoint(c, uhat, rhat)?;
    let n = c.in_dim();
    let (x, report) = {
        let mut op = OuterNormal { c: &mut *c, tmp: vec![0.0; n] };
        cg(&mut op, rhat, opts, None)?
    };
    let mut ctx = vec![0.0; n];
    c.apply_adjoint(&x, &mut ctx)?;
    let u = uhat.iter().zip(&ctx).map(|(a, b)| a - b).collect();
    Ok((u, report))
}

/// `u = (I + λ CᵀC)⁻¹ (û + λ Cᵀ b)` with `b = C û − r̂`.
pub fn relaxed_update<C: LinearOperator + ?Sized>(
    c: &mut C,
    uhat: &[f64],
    rhat: &[f64],
    lambda: f64,
    opts: SolveOptions,
) -> Result<(Vec<f64>, SolveReport)> {
    require_adjoint(c, uhat, rhat)?;
    if !(lambda >= 0.0) {
        return Err(Error::config(format!("lambda must be non-negative, got {lambda}")));
    }
    let n = c.in_dim();
    let mut b = vec![0.0; c.out_dim()];
    c.apply(uhat, &mut b)?;
    axpy(-1.0, rhat, &mut b);
    let mut rhs = vec![0.0; n];
    c.apply_adjoint(&b, &mut rhs)?;
    for (r, u) in rhs.iter_mut().zip(uhat) {
        *r = u + lambda * *r;
    }
    let mut op = ShiftedInnerNormal {
        c,
        lambda,
        tmp: vec![0.0; b.len()],
    };
    cg(&mut op, &rhs, opts, Some(uhat))
}

pub fn project_constrained(
    uhat: &Trajectory,
    spec: &ConstraintSpec,
    system: &System,
    cfg: &ProjectionConfig,
) -> Result<(Trajectory, SolveReport)> {
    cfg.validate()?;
    let mut c = LinearizedConstraint::new(uhat, spec, system)?;
    let rhat = c.residual().values().to_vec();
    let (u, report) = constrained_update(&mut c, uhat.values(), &rhat, cfg.solve_options())?;
    Ok((Trajectory::new(uhat.grid().clone(), u)?, report))
}

pub fn project_relaxed(
    uhat: &Trajectory,
    spec: &ConstraintSpec,
    system: &System,
    cfg: &ProjectionConfig,
) -> Result<(Trajectory, SolveReport)> {
    cfg.validate()?;
    let lambda = resolve_lambda(cfg.lambda, uhat)?;
    let mut c = LinearizedConstraint::new(uhat, spec, system)?;
    if lambda == 0.0 {
        let report = SolveReport {
            solver: "cg",
            iterations: 0,
            final_relative_residual: 0.0,
            converged: true,
            tolerance: cfg.krylov_tol,
            breakdown: false,
            residual_history: vec![0.0],
        };
        return Ok((uhat.clone(), report));
    }
    let rhat = c.residual().values().to_vec();
    let (u, report) = relaxed_update(&mut c, uhat.values(), &rhat, lambda, cfg.solve_options())?;
    Ok((Trajectory::new(uhat.grid().clone(), u)?, report))
}

/// Penalty objective `‖u − û‖² + λ‖h(u) − c‖²` (or the unsquared variant) and its gradient.
pub struct PenaltyObjective {
    map: ResidualMap,
    uhat: Trajectory,
    lambda: f64,
    norms: PenaltyNorms,
}

impl PenaltyObjective {
    pub fn new(uhat: &Trajectory, spec: &ConstraintSpec, system: &System, lambda: f64, norms: PenaltyNorms) -> Result<Self> {
        Self::from_map(ResidualMap::new(uhat.grid(), system, spec.clone())?, uhat, lambda, norms)
    }

    pub fn from_map(map: ResidualMap, uhat: &Trajectory, lambda: f64, norms: PenaltyNorms) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::config(format!("the penalty weight must be positive, got {lambda}")));
        }
        Ok(PenaltyObjective {
            map,
            uhat: uhat.clone(),
            lambda,
            norms,
        })
    }

    pub fn evaluate(&mut self, u: &[f64]) -> Result<(f64, Vec<f64>)> {
        let ut = Trajectory::from_parts(self.uhat.grid().clone(), u.to_vec());
        let (r, jtr) = self.map.residual_and_vjp(&ut)?;
        let d: Vec<f64> = u.iter().zip(self.uhat.values()).map(|(a, b)| a - b).collect();
        let (dd, rr) = (dot(&d, &d), r.norm2());
        match self.norms {
            PenaltyNorms::Squared => {
                let mut g: Vec<f64> = d.iter().map(|v| 2.0 * v).collect();
                axpy(2.0 * self.lambda, jtr.values(), &mut g);
                Ok((dd + self.lambda * rr, g))
            }
            PenaltyNorms::Unsquared => {
                // zero subgradient where a norm vanishes
                let (dn, rn) = (dd.sqrt(), rr.sqrt());
                let mut g = if dn > 0.0 { d.iter().map(|v| v / dn).collect() } else { vec![0.0; d.len()] };
                if rn > 0.0 {
                    axpy(self.lambda / rn, jtr.values(), &mut g);
                }
                Ok((dn + self.lambda * rn, g))
            }
        }
    }
}

pub fn project_lbfgs(
    uhat: &Trajectory,
    spec: &ConstraintSpec,
    system: &System,
    cfg: &ProjectionConfig,
) -> Result<(Trajectory, OptimTrace)> {
    cfg.validate()?;
    let lambda = resolve_lambda(cfg.lambda, uhat)?;
    let mut obj = PenaltyObjective::new(uhat, spec, system, lambda, cfg.penalty_norms)?;
    let (u, trace) = minimize(|u| obj.evaluate(u), uhat.values(), &cfg.lbfgs)?;
    Ok((Trajectory::new(uhat.grid().clone(), u)?, trace))
}

/// Solver record of one projection.
#[derive(Debug, Clone, PartialEq)]
pub enum SolverRecord {
    Krylov(SolveReport),
    Lbfgs(OptimTrace),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionReport {
    pub method: Method,
    /// Resolved `λ` (unused by the constrained method).
    pub lambda: f64,
    /// `‖h − c‖²` before and after.
    pub residual_before: f64,
    pub residual_after: f64,
    pub solver: SolverRecord,
    pub note: Option<String>,
}

impl ProjectionReport {
    pub fn converged(&self) -> bool {
        match &self.solver {
            SolverRecord::Krylov(r) => r.converged,
            SolverRecord::Lbfgs(t) => t.termination == crate::lbfgs::Termination::GradientTolerance,
        }
    }

    pub fn iterations(&self) -> usize {
        match &self.solver {
            SolverRecord::Krylov(r) => r.iterations,
            SolverRecord::Lbfgs(t) => t.iterations(),
        }
    }
}

/// Runs the configured method and records residuals before and after.
pub fn project(
    uhat: &Trajectory,
    spec: &ConstraintSpec,
    system: &System,
    cfg: &ProjectionConfig,
) -> Result<(Trajectory, ProjectionReport)> {
    cfg.validate()?;
    let lambda = match cfg.method {
        Method::Constrained => 0.0,
        _ => resolve_lambda(cfg.lambda, uhat)?,
    };
    let (u, solver) = match cfg.method {
        Method::Constrained => {
            let (u, r) = project_constrained(uhat, spec, system, cfg)?;
            (u, SolverRecord::Krylov(r))
        }
        Method::Relaxed => {
            let (u, r) = project_relaxed(uhat, spec, system, cfg)?;
            (u, SolverRecord::Krylov(r))
        }
        Method::Lbfgs => {
            let (u, t) = project_lbfgs(uhat, spec, system, cfg)?;
            (u, SolverRecord::Lbfgs(t))
        }
    };
    let mut map = ResidualMap::new(uhat.grid(), system, spec.clone())?;
    let residual_before = map.residual(uhat)?.norm2();
    let residual_after = map.residual(&u)?.norm2();
    let note = match &solver {
        SolverRecord::Krylov(r) if !r.converged && cfg.method == Method::Constrained => Some(format!(
            "CG stopped at relative residual {:.3e}; C Cᵀ may be singular, the relaxed method is a fallback",
            r.final_relative_residual
        )),
        SolverRecord::Krylov(r) if !r.converged => {
            Some(format!("CG stopped at relative residual {:.3e}", r.final_relative_residual))
        }
        SolverRecord::Lbfgs(t) if t.termination != crate::lbfgs::Termination::GradientTolerance => {
            Some(format!("lbfgs stopped: {}", t.termination))
        }
        _ => None,
    };
    Ok((
        u,
        ProjectionReport {
            method: cfg.method,
            lambda,
            residual_before,
            residual_after,
            solver,
            note,
        },
    ))
}

/// `‖C u − b‖` for the constraint linearized at `lin.base()`.
pub fn linearized_violation(lin: &mut LinearizedConstraint, u: &[f64]) -> Result<f64> {
    let b = lin.rhs_b()?;
    let cu = lin.jvp(u)?;
    Ok(norm(&cu.iter().zip(&b).map(|(a, b)| a - b).collect::<Vec<_>>()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;
    use crate::integrators::euler_integrate;
    use crate::krylov::DenseOperator;
    use crate::systems::testutil::random_vec;
    use crate::systems::{LorenzParams, Scheme};
    use nalgebra::{DMatrix, DVector};

    fn lorenz_noisy(steps: usize, noise: f64, seed: u64) -> (Trajectory, ConstraintSpec, System) {
        let p = LorenzParams::default();
        let u0 = [1.0, 2.0, 20.0];
        let truth = euler_integrate(u0, &p, 1.0 / 512.0, steps).unwrap();
        let mut u = truth.values().to_vec();
        let noise_vec = random_vec(u.len(), seed);
        for (v, e) in u.iter_mut().zip(noise_vec) {
            *v += noise * e;
        }
        let spec = ConstraintSpec::new(u0.to_vec(), Scheme::Euler, 1);
        (Trajectory::new(truth.grid().clone(), u).unwrap(), spec, System::Lorenz(p))
    }

    fn residual_norm(u: &Trajectory, spec: &ConstraintSpec, system: &System) -> f64 {
        crate::systems::residual(u, spec, system).unwrap().norm2().sqrt()
    }

    fn dense_jacobian(uhat: &Trajectory, spec: &ConstraintSpec, system: &System) -> DMatrix<f64> {
        let n = uhat.len();
        let h = 1e-6;
        let mut jac = DMatrix::zeros(n, n);
        for j in 0..n {
            let mut plus = uhat.clone();
            plus.values_mut()[j] += h;
            let mut minus = uhat.clone();
            minus.values_mut()[j] -= h;
            let rp = crate::systems::residual(&plus, spec, system).unwrap();
            let rm = crate::systems::residual(&minus, spec, system).unwrap();
            for i in 0..n {
                jac[(i, j)] = (rp.values()[i] - rm.values()[i]) / (2.0 * h);
            }
        }
        jac
    }

    fn rel_err(a: &[f64], b: &[f64]) -> f64 {
        let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
        norm(&d) / norm(b)
    }

    fn cfg(method: Method, lambda: f64) -> ProjectionConfig {
        let mut c = ProjectionConfig::new(method, Lambda::Value(lambda));
        c.krylov_tol = 1e-12;
        c
    }

    #[test]
    fn linearization_identity() {
        let (uhat, spec, system) = lorenz_noisy(16, 0.5, 3);
        let mut lin = LinearizedConstraint::new(&uhat, &spec, &system).unwrap();
        let b = lin.rhs_b().unwrap();
        let cu = lin.jvp(uhat.values()).unwrap();
        let lhs: Vec<f64> = cu.iter().zip(&b).map(|(a, b)| a - b).collect();
        assert!(rel_err(&lhs, lin.residual().values()) < 1e-12);
        assert!(linearized_violation(&mut lin, uhat.values()).unwrap() > 0.1);
    }

    #[test]
    fn toy_constrained_projection() {
        // x + y = 2 from the origin
        let mut c = DenseOperator::new(1, 2, vec![1.0, 1.0]).unwrap();
        let opts = SolveOptions { tol: 1e-12, max_iters: 10 };
        let (u, rep) = constrained_update(&mut c, &[0.0, 0.0], &[-2.0], opts).unwrap();
        assert!(rep.converged);
        assert!((u[0] - 1.0).abs() < 1e-12 && (u[1] - 1.0).abs() < 1e-12);
        let (u, _) = constrained_update(&mut c, &[3.0, -1.0], &[0.0], opts).unwrap();
        assert_eq!(u, vec![3.0, -1.0]);
    }

    #[test]
    fn toy_relaxed_projection() {
        let mut c = DenseOperator::new(1, 2, vec![1.0, 1.0]).unwrap();
        let opts = SolveOptions { tol: 1e-14, max_iters: 10 };
        let (u, _) = relaxed_update(&mut c, &[0.0, 0.0], &[-2.0], 1e8, opts).unwrap();
        assert!((u[0] - 1.0).abs() < 1e-6 && (u[1] - 1.0).abs() < 1e-6);
        // closed form for this toy: u = 2λ/(1+2λ) (1, 1)
        let (u, _) = relaxed_update(&mut c, &[0.0, 0.0], &[-2.0], 1.0, opts).unwrap();
        assert!((u[0] - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn toy_constrained_is_idempotent() {
        let mut c = DenseOperator::new(2, 4, vec![1.0, 2.0, 0.0, -1.0, 0.5, 0.0, 3.0, 1.0]).unwrap();
        let b = [1.0, -2.0];
        let opts = SolveOptions { tol: 1e-10, max_iters: 50 };
        let resid = |c: &mut DenseOperator, u: &[f64]| {
            let mut out = vec![0.0; 2];
            c.apply(u, &mut out).unwrap();
            vec![out[0] - b[0], out[1] - b[1]]
        };
        let uhat = [0.3, -0.7, 1.1, 2.0];
        let r = resid(&mut c, &uhat);
        let (u1, _) = constrained_update(&mut c, &uhat, &r, opts).unwrap();
        let r1 = resid(&mut c, &u1);
        assert!(norm(&r1) < 1e-9);
        let (u2, _) = constrained_update(&mut c, &u1, &r1, opts).unwrap();
        assert!(rel_err(&u2, &u1) <= 10.0 * opts.tol);
    }

    #[test]
    fn linear_field_constrained_is_idempotent() {
        use crate::systems::{Dynamics, LinearField};
        let grid = GridSpec::lorenz(6, 0.1);
        let matrix = vec![-1.0, 2.0, 0.0, -2.0, -0.5, 1.0, 0.0, -1.0, -0.2];
        let spec = ConstraintSpec::new(vec![1.0, 0.0, -1.0], Scheme::Euler, 1);
        let map = |g: &GridSpec| {
            let field = Dynamics::Linear(LinearField::new(3, matrix.clone()).unwrap());
            ResidualMap::with_field(g, field, spec.clone()).unwrap()
        };
        let opts = SolveOptions { tol: 1e-10, max_iters: 200 };
        let uhat = Trajectory::new(grid.clone(), random_vec(18, 21)).unwrap();
        let mut lin = LinearizedConstraint::from_map(map(&grid), &uhat).unwrap();
        let r = lin.residual().values().to_vec();
        let (u1, _) = constrained_update(&mut lin, uhat.values(), &r, opts).unwrap();
        let u1 = Trajectory::new(grid.clone(), u1).unwrap();
        let mut lin = LinearizedConstraint::from_map(map(&grid), &u1).unwrap();
        assert!(lin.residual().norm2().sqrt() < 1e-9);
        let r = lin.residual().values().to_vec();
        let (u2, _) = constrained_update(&mut lin, u1.values(), &r, opts).unwrap();
        assert!(rel_err(&u2, u1.values()) <= 10.0 * opts.tol);
    }

    #[test]
    fn lorenz_constrained_matches_dense_oracle() {
        let (uhat, spec, system) = lorenz_noisy(8, 0.3, 5);
        let (u, rep) = project_constrained(&uhat, &spec, &system, &cfg(Method::Constrained, 0.0)).unwrap();
        assert!(rep.converged);
        let c = dense_jacobian(&uhat, &spec, &system);
        let r = DVector::from_column_slice(crate::systems::residual(&uhat, &spec, &system).unwrap().values());
        let cct = &c * c.transpose();
        let x = cct.pseudo_inverse(1e-12).unwrap() * r;
        let expect = DVector::from_column_slice(uhat.values()) - c.transpose() * x;
        assert!(rel_err(u.values(), expect.as_slice()) < 1e-6);
    }

    #[test]
    fn lorenz_relaxed_matches_dense_oracle() {
        let (uhat, spec, system) = lorenz_noisy(8, 0.3, 6);
        let lambda = 1000.0;
        let (u, rep) = project_relaxed(&uhat, &spec, &system, &cfg(Method::Relaxed, lambda)).unwrap();
        assert!(rep.converged);
        let c = dense_jacobian(&uhat, &spec, &system);
        let uh = DVector::from_column_slice(uhat.values());
        let r = DVector::from_column_slice(crate::systems::residual(&uhat, &spec, &system).unwrap().values());
        let b = &c * &uh - r;
        let a = DMatrix::identity(uh.len(), uh.len()) + lambda * c.transpose() * &c;
        let expect = a.lu().solve(&(&uh + lambda * c.transpose() * b)).unwrap();
        assert!(rel_err(u.values(), expect.as_slice()) < 1e-6);
    }

    #[test]
    fn feasible_input_is_fixed() {
        let (uhat, spec, system) = lorenz_noisy(32, 0.0, 0);
        let (u, _) = project_constrained(&uhat, &spec, &system, &cfg(Method::Constrained, 0.0)).unwrap();
        assert!(rel_err(u.values(), uhat.values()) < 1e-12);
        let (u, _) = project_relaxed(&uhat, &spec, &system, &cfg(Method::Relaxed, 10.0)).unwrap();
        assert!(rel_err(u.values(), uhat.values()) < 1e-10);
        let (u, trace) = project_lbfgs(&uhat, &spec, &system, &cfg(Method::Lbfgs, 10.0)).unwrap();
        assert!(trace.iterations() <= 1);
        assert!(rel_err(u.values(), uhat.values()) < 1e-12);
    }

    #[test]
    fn zero_lambda_returns_input() {
        let (uhat, spec, system) = lorenz_noisy(16, 0.5, 7);
        let (u, _) = project_relaxed(&uhat, &spec, &system, &cfg(Method::Relaxed, 0.0)).unwrap();
        assert_eq!(u, uhat);
    }

    #[test]
    fn relaxed_approaches_constrained_as_lambda_grows() {
        let (uhat, spec, system) = lorenz_noisy(16, 0.5, 8);
        let (uc, _) = project_constrained(&uhat, &spec, &system, &cfg(Method::Constrained, 0.0)).unwrap();
        let mut lin = LinearizedConstraint::new(&uhat, &spec, &system).unwrap();
        let (mut prev_gap, mut prev_viol) = (f64::INFINITY, f64::INFINITY);
        for lambda in [1.0, 10.0, 100.0, 1e3, 1e4, 1e5, 1e6] {
            let (u, _) = project_relaxed(&uhat, &spec, &system, &cfg(Method::Relaxed, lambda)).unwrap();
            let gap = rel_err(u.values(), uc.values());
            let viol = linearized_violation(&mut lin, u.values()).unwrap();
            assert!(gap < prev_gap && viol < prev_viol, "lambda {lambda}: {gap} {viol}");
            prev_gap = gap;
            prev_viol = viol;
        }
        assert!(prev_gap < 1e-4);
    }

    #[test]
    fn projections_reduce_residual() {
        let (uhat, spec, system) = lorenz_noisy(64, 0.2, 9);
        let before = residual_norm(&uhat, &spec, &system);
        for (method, lambda) in [(Method::Constrained, 0.0), (Method::Relaxed, 1000.0), (Method::Lbfgs, 1000.0)] {
            let (u, rep) = project(&uhat, &spec, &system, &cfg(method, lambda)).unwrap();
            let after = residual_norm(&u, &spec, &system);
            assert!(after < 0.1 * before, "{method}: {after} vs {before}");
            assert!((rep.residual_after.sqrt() - after).abs() <= 1e-12 * before);
        }
    }

    #[test]
    fn heavy_penalty_lbfgs_beats_linearized_projection() {
        let (uhat, spec, system) = lorenz_noisy(12, 2.0, 10);
        let (uc, _) = project_constrained(&uhat, &spec, &system, &cfg(Method::Constrained, 0.0)).unwrap();
        let mut c = cfg(Method::Lbfgs, 1e6);
        c.lbfgs.max_iters = 2000;
        let (ul, _) = project_lbfgs(&uhat, &spec, &system, &c).unwrap();
        let (rc, rl) = (residual_norm(&uc, &spec, &system), residual_norm(&ul, &spec, &system));
        assert!(rl <= rc, "lbfgs {rl} vs constrained {rc}");
    }

    #[test]
    fn penalty_gradient_matches_finite_differences() {
        let (uhat, spec, system) = lorenz_noisy(6, 0.5, 11);
        for norms in [PenaltyNorms::Squared, PenaltyNorms::Unsquared] {
            let mut obj = PenaltyObjective::new(&uhat, &spec, &system, 3.0, norms).unwrap();
            let u: Vec<f64> = uhat.values().iter().zip(random_vec(uhat.len(), 12)).map(|(a, e)| a + 0.1 * e).collect();
            let (_, g) = obj.evaluate(&u).unwrap();
            let h = 1e-6;
            for j in 0..u.len() {
                let mut p = u.clone();
                p[j] += h;
                let mut m = u.clone();
                m[j] -= h;
                let fd = (obj.evaluate(&p).unwrap().0 - obj.evaluate(&m).unwrap().0) / (2.0 * h);
                assert!((fd - g[j]).abs() <= 1e-6 * (1.0 + g[j].abs()), "{norms:?} {j}: {fd} {}", g[j]);
            }
        }
    }

    #[test]
    fn lambda_parsing_and_resolution() {
        assert_eq!("1000".parse::<Lambda>().unwrap(), Lambda::Value(1000.0));
        assert_eq!("norm-of-uhat".parse::<Lambda>().unwrap(), Lambda::NormOfUhat);
        assert!("-1".parse::<Lambda>().is_err());
        assert!("abc".parse::<Lambda>().is_err());
        let grid = GridSpec::lorenz(2, 0.1);
        let u = Trajectory::new(grid, vec![3.0, 0.0, 0.0, 0.0, 4.0, 0.0]).unwrap();
        assert_eq!(resolve_lambda(Lambda::NormOfUhat, &u).unwrap(), 5.0);
        assert_eq!(resolve_lambda(Lambda::Value(10.0), &u).unwrap(), 10.0);
        assert!(resolve_lambda(Lambda::Value(f64::NAN), &u).is_err());
        assert_eq!("LBFGS".parse::<Method>().unwrap(), Method::Lbfgs);
        assert!("newton".parse::<Method>().is_err());
    }

    #[test]
    fn invalid_configuration_is_rejected() {
        let (uhat, spec, system) = lorenz_noisy(4, 0.1, 13);
        let mut c = cfg(Method::Relaxed, 1.0);
        c.krylov_tol = 0.0;
        assert!(project(&uhat, &spec, &system, &c).is_err());
        assert!(project_lbfgs(&uhat, &spec, &system, &cfg(Method::Lbfgs, 0.0)).is_err());
        let mut c = DenseOperator::new(1, 2, vec![1.0, 1.0]).unwrap();
        let opts = SolveOptions::default();
        assert!(constrained_update(&mut c, &[0.0; 3], &[0.0], opts).is_err());
        assert!(relaxed_update(&mut c, &[0.0; 2], &[0.0], -1.0, opts).is_err());
    }
}
