//! Trajectory residual `h(u) − c` and its exact linearizations.
//!
//! The residual has one block per frame. Block 0 is the initial-condition
//! mismatch `u[0] − u₀`. Block `t + 1` is the dynamics mismatch of the
//! interval `t → t + 1`:
//!
//! * explicit schemes: `u[t+1] − Φ_m(u[t])` where `Φ_m` composes `m`
//!   micro-steps of forward Euler or Heun with step `dt / m`;
//! * BDF1: `(u[t+1] − u[t]) / dt − F(u[t+1])`.
//!
//! Each block only reads `u[t]` and `u[t+1]`, so the Jacobian is block lower
//! bidiagonal and every product is computed interval by interval.

use std::fmt;
use std::str::FromStr;

use super::{Dynamics, System, VectorField};
use crate::error::{Error, Result};
use crate::grid::{GridSpec, Trajectory};
use crate::linalg;

/// Time discretization that defines the dynamics blocks of the residual.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    Euler,
    Bdf1,
    Heun,
}

impl Scheme {
    pub fn code(self) -> u8 {
        match self {
            Scheme::Euler => 0,
            Scheme::Bdf1 => 1,
            Scheme::Heun => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Scheme::Euler),
            1 => Some(Scheme::Bdf1),
            2 => Some(Scheme::Heun),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Euler => "euler",
            Scheme::Bdf1 => "bdf1",
            Scheme::Heun => "heun",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "euler" => Ok(Scheme::Euler),
            "bdf1" => Ok(Scheme::Bdf1),
            "heun" => Ok(Scheme::Heun),
            other => Err(Error::config(format!(
                "unknown scheme `{other}` (expected euler, bdf1 or heun)"
            ))),
        }
    }
}

/// Right-hand side `c` of the constraint and the discretization of `h`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSpec {
    pub initial_state: Vec<f64>,
    pub scheme: Scheme,
    /// Micro-steps composed per recorded interval.
    pub micro_steps: usize,
}

impl ConstraintSpec {
    pub fn new(initial_state: Vec<f64>, scheme: Scheme, micro_steps: usize) -> Self {
        ConstraintSpec {
            initial_state,
            scheme,
            micro_steps,
        }
    }

    /// Spec with the generator's scheme and micro-step count for `system`.
    pub fn for_system(system: &System, initial_state: Vec<f64>) -> Self {
        ConstraintSpec::new(
            initial_state,
            system.default_scheme(),
            system.default_micro_steps(),
        )
    }

    pub fn validate(&self, grid: &GridSpec) -> Result<()> {
        if self.micro_steps == 0 {
            return Err(Error::config("micro-steps per interval must be at least 1"));
        }
        if self.scheme == Scheme::Bdf1 && self.micro_steps != 1 {
            return Err(Error::config("bdf1 residuals use exactly one step per interval"));
        }
        if self.initial_state.len() != grid.spatial_size() {
            return Err(Error::shape(format!(
                "initial state has {} values, a frame has {}",
                self.initial_state.len(),
                grid.spatial_size()
            )));
        }
        Ok(())
    }
}

/// Stacked residual blocks; same length as the trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualVector {
    block: usize,
    values: Vec<f64>,
}

impl ResidualVector {
    pub fn from_values(block: usize, values: Vec<f64>) -> Result<Self> {
        if block == 0 || values.len() % block != 0 {
            return Err(Error::shape(format!(
                "residual of length {} is not a whole number of blocks of {block}",
                values.len()
            )));
        }
        Ok(ResidualVector { block, values })
    }

    pub fn zeros(block: usize, num_blocks: usize) -> Self {
        ResidualVector {
            block,
            values: vec![0.0; block * num_blocks],
        }
    }

    pub fn initial_block(&self) -> &[f64] {
        &self.values[..self.block]
    }

    /// Dynamics block of interval `t → t + 1`.
    pub fn step_block(&self, t: usize) -> &[f64] {
        &self.values[(t + 1) * self.block..(t + 2) * self.block]
    }

    pub fn num_step_blocks(&self) -> usize {
        self.values.len() / self.block - 1
    }

    pub fn block_len(&self) -> usize {
        self.block
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Squared Euclidean norm.
    pub fn norm2(&self) -> f64 {
        linalg::dot(&self.values, &self.values)
    }
}

/// Forward micro-step states of every interval, reused by repeated
/// Jacobian products at a fixed base trajectory.
#[derive(Debug, Clone)]
pub struct Linearization {
    base: Trajectory,
    states: Vec<Vec<f64>>,
}

impl Linearization {
    pub fn base(&self) -> &Trajectory {
        &self.base
    }
}

/// Evaluator of `h(u) − c`, `J v` and `Jᵀ w` for one grid and constraint.
#[derive(Debug, Clone)]
pub struct ResidualMap {
    grid: GridSpec,
    field: Dynamics,
    spec: ConstraintSpec,
    micro_dt: f64,
    n: usize,
    k1: Vec<f64>,
    k2: Vec<f64>,
    tmp: Vec<f64>,
}

impl ResidualMap {
    pub fn new(grid: &GridSpec, system: &System, spec: ConstraintSpec) -> Result<Self> {
        let field = Dynamics::new(system, grid)?;
        Self::with_field(grid, field, spec)
    }

    /// Residual map over an arbitrary vector field, e.g. a linear toy system.
    pub fn with_field(grid: &GridSpec, field: Dynamics, spec: ConstraintSpec) -> Result<Self> {
        grid.validate()?;
        spec.validate(grid)?;
        let n = grid.spatial_size();
        if field.dim() != n {
            return Err(Error::shape(format!(
                "vector field acts on {} values, a frame has {n}",
                field.dim()
            )));
        }
        Ok(ResidualMap {
            micro_dt: grid.dt / spec.micro_steps as f64,
            grid: grid.clone(),
            field,
            spec,
            n,
            k1: vec![0.0; n],
            k2: vec![0.0; n],
            tmp: vec![0.0; n],
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn spec(&self) -> &ConstraintSpec {
        &self.spec
    }

    pub fn field_mut(&mut self) -> &mut Dynamics {
        &mut self.field
    }

    fn check(&self, u: &Trajectory, what: &str) -> Result<()> {
        self.grid.check_same(u.grid(), what)
    }

    fn check_residual(&self, w: &ResidualVector) -> Result<()> {
        if w.block != self.n || w.values.len() != self.grid.total_size() {
            return Err(Error::shape(format!(
                "residual vector of length {} does not match grid of size {}",
                w.values.len(),
                self.grid.total_size()
            )));
        }
        Ok(())
    }

    fn frame<'a>(&self, values: &'a [f64], t: usize) -> &'a [f64] {
        &values[t * self.n..(t + 1) * self.n]
    }

    /// Runs the `m` micro-steps of an interval from `x0` into `out`,
    /// recording the states the tangent and adjoint sweeps need.
    fn advance(&mut self, x0: &[f64], mut store: Option<&mut Vec<f64>>, out: &mut [f64]) {
        let h = self.micro_dt;
        out.copy_from_slice(x0);
        for _ in 0..self.spec.micro_steps {
            if let Some(s) = store.as_deref_mut() {
                s.extend_from_slice(out);
            }
            self.field.eval(out, &mut self.k1);
            match self.spec.scheme {
                Scheme::Euler => linalg::axpy(h, &self.k1, out),
                Scheme::Heun => {
                    for i in 0..self.n {
                        self.tmp[i] = out[i] + h * self.k1[i];
                    }
                    if let Some(s) = store.as_deref_mut() {
                        s.extend_from_slice(&self.tmp);
                    }
                    self.field.eval(&self.tmp, &mut self.k2);
                    for i in 0..self.n {
                        out[i] += 0.5 * h * (self.k1[i] + self.k2[i]);
                    }
                }
                Scheme::Bdf1 => unreachable!("bdf1 has no explicit propagator"),
            }
        }
    }

    /// `out = JΦ_m · d` given the recorded states of the interval.
    fn advance_tangent(&mut self, states: &[f64], d: &[f64], out: &mut [f64]) {
        let h = self.micro_dt;
        let n = self.n;
        out.copy_from_slice(d);
        let per = if self.spec.scheme == Scheme::Heun { 2 } else { 1 };
        for j in 0..self.spec.micro_steps {
            let x = &states[j * per * n..(j * per + 1) * n];
            self.field.tangent(x, out, &mut self.k1);
            if per == 1 {
                linalg::axpy(h, &self.k1, out);
            } else {
                let xs = &states[(j * per + 1) * n..(j * per + 2) * n];
                for i in 0..n {
                    self.tmp[i] = out[i] + h * self.k1[i];
                }
                self.field.tangent(xs, &self.tmp, &mut self.k2);
                for i in 0..n {
                    out[i] += 0.5 * h * (self.k1[i] + self.k2[i]);
                }
            }
        }
    }

    /// `out = JΦ_mᵀ · a` given the recorded states of the interval.
    fn advance_adjoint(&mut self, states: &[f64], a: &[f64], out: &mut [f64]) {
        let h = self.micro_dt;
        let n = self.n;
        out.copy_from_slice(a);
        let per = if self.spec.scheme == Scheme::Heun { 2 } else { 1 };
        for j in (0..self.spec.micro_steps).rev() {
            let x = &states[j * per * n..(j * per + 1) * n];
            if per == 1 {
                self.field.adjoint(x, out, &mut self.k1);
                linalg::axpy(h, &self.k1, out);
            } else {
                // x' = x + h/2 F(x) + h/2 F(x*),  x* = x + h F(x)
                // āx = ā' + g + JF(x)ᵀ (h/2 ā' + h g),  g = h/2 JF(x*)ᵀ ā'
                let xs = &states[(j * per + 1) * n..(j * per + 2) * n];
                self.field.adjoint(xs, out, &mut self.k2);
                for i in 0..n {
                    self.k2[i] *= 0.5 * h;
                    self.tmp[i] = 0.5 * h * out[i] + h * self.k2[i];
                }
                self.field.adjoint(x, &self.tmp, &mut self.k1);
                for i in 0..n {
                    out[i] += self.k2[i] + self.k1[i];
                }
            }
        }
    }

    fn explicit(&self) -> bool {
        self.spec.scheme != Scheme::Bdf1
    }

    pub fn residual(&mut self, u: &Trajectory) -> Result<ResidualVector> {
        self.check(u, "residual")?;
        let n = self.n;
        let steps = self.grid.num_steps;
        let uv = u.values();
        let mut r = vec![0.0; uv.len()];
        for i in 0..n {
            r[i] = uv[i] - self.spec.initial_state[i];
        }
        let mut phi = vec![0.0; n];
        for t in 0..steps - 1 {
            let next = self.frame(uv, t + 1);
            let block = &mut r[(t + 1) * n..(t + 2) * n];
            if self.explicit() {
                self.advance(self.frame(uv, t), None, &mut phi);
                for i in 0..n {
                    block[i] = next[i] - phi[i];
                }
            } else {
                self.field.eval(next, &mut phi);
                let cur = self.frame(uv, t);
                let inv_dt = 1.0 / self.grid.dt;
                for i in 0..n {
                    block[i] = (next[i] - cur[i]) * inv_dt - phi[i];
                }
            }
        }
        Ok(ResidualVector { block: n, values: r })
    }

    /// Records the micro-step states of `u` for repeated products.
    pub fn linearize(&mut self, u: &Trajectory) -> Result<Linearization> {
        self.check(u, "linearize")?;
        let mut states = Vec::new();
        if self.explicit() {
            let mut phi = vec![0.0; self.n];
            for t in 0..self.grid.num_steps - 1 {
                let mut s = Vec::new();
                self.advance(self.frame(u.values(), t), Some(&mut s), &mut phi);
                states.push(s);
            }
        }
        Ok(Linearization {
            base: u.clone(),
            states,
        })
    }

    fn jvp_impl(&mut self, u: &Trajectory, cached: Option<&[Vec<f64>]>, v: &Trajectory) -> Result<ResidualVector> {
        self.check(v, "jvp direction")?;
        let n = self.n;
        let steps = self.grid.num_steps;
        let (uv, vv) = (u.values(), v.values());
        let mut out = vec![0.0; uv.len()];
        out[..n].copy_from_slice(&vv[..n]);
        let mut d = vec![0.0; n];
        let mut scratch = Vec::new();
        for t in 0..steps - 1 {
            let vnext = self.frame(vv, t + 1);
            if self.explicit() {
                if cached.is_none() {
                    scratch.clear();
                    let mut phi = vec![0.0; n];
                    self.advance(self.frame(uv, t), Some(&mut scratch), &mut phi);
                }
                let states: &[f64] = cached.map_or(&scratch, |c| &c[t]);
                self.advance_tangent(states, self.frame(vv, t), &mut d);
                let block = &mut out[(t + 1) * n..(t + 2) * n];
                for i in 0..n {
                    block[i] = vnext[i] - d[i];
                }
            } else {
                self.field.tangent(self.frame(uv, t + 1), vnext, &mut d);
                let vcur = self.frame(vv, t);
                let inv_dt = 1.0 / self.grid.dt;
                let block = &mut out[(t + 1) * n..(t + 2) * n];
                for i in 0..n {
                    block[i] = (vnext[i] - vcur[i]) * inv_dt - d[i];
                }
            }
        }
        Ok(ResidualVector { block: n, values: out })
    }

    fn vjp_impl(&mut self, u: &Trajectory, cached: Option<&[Vec<f64>]>, w: &ResidualVector) -> Result<Trajectory> {
        self.check_residual(w)?;
        let n = self.n;
        let steps = self.grid.num_steps;
        let uv = u.values();
        let wv = w.values();
        let mut out = vec![0.0; uv.len()];
        out[..n].copy_from_slice(&wv[..n]);
        let mut a = vec![0.0; n];
        let mut scratch = Vec::new();
        for t in 0..steps - 1 {
            let wb = &wv[(t + 1) * n..(t + 2) * n];
            self.adjoint_block(uv, t, cached.and_then(|c| c.get(t)).map(|c| c.as_slice()), wb, &mut a, &mut scratch, &mut out);
        }
        Ok(Trajectory::from_parts(u.grid().clone(), out))
    }

    /// Accumulates the contribution of dynamics block `t` with weight `wb`.
    #[allow(clippy::too_many_arguments)]
    fn adjoint_block(
        &mut self,
        uv: &[f64],
        t: usize,
        cached: Option<&[f64]>,
        wb: &[f64],
        a: &mut [f64],
        scratch: &mut Vec<f64>,
        out: &mut [f64],
    ) {
        let n = self.n;
        if self.explicit() {
            if cached.is_none() {
                scratch.clear();
                let mut phi = vec![0.0; n];
                self.advance(self.frame(uv, t), Some(scratch), &mut phi);
            }
            let states: &[f64] = cached.unwrap_or(scratch);
            self.advance_adjoint(states, wb, a);
            for i in 0..n {
                out[t * n + i] -= a[i];
                out[(t + 1) * n + i] += wb[i];
            }
        } else {
            self.field.adjoint(self.frame(uv, t + 1), wb, a);
            let inv_dt = 1.0 / self.grid.dt;
            for i in 0..n {
                out[(t + 1) * n + i] += wb[i] * inv_dt - a[i];
                out[t * n + i] -= wb[i] * inv_dt;
            }
        }
    }

    /// `J_h(u) · v`
    pub fn jvp(&mut self, u: &Trajectory, v: &Trajectory) -> Result<ResidualVector> {
        self.check(u, "jvp base")?;
        self.jvp_impl(u, None, v)
    }

    /// `J_h(u)ᵀ · w`
    pub fn vjp(&mut self, u: &Trajectory, w: &ResidualVector) -> Result<Trajectory> {
        self.check(u, "vjp base")?;
        self.vjp_impl(u, None, w)
    }

    pub fn jvp_at(&mut self, lin: &Linearization, v: &Trajectory) -> Result<ResidualVector> {
        self.jvp_impl(&lin.base, Some(&lin.states), v)
    }

    pub fn vjp_at(&mut self, lin: &Linearization, w: &ResidualVector) -> Result<Trajectory> {
        self.vjp_impl(&lin.base, Some(&lin.states), w)
    }

    /// Residual `r = h(u) − c` together with `J_h(u)ᵀ r`, in one sweep.
    pub fn residual_and_vjp(&mut self, u: &Trajectory) -> Result<(ResidualVector, Trajectory)> {
        self.check(u, "residual")?;
        let n = self.n;
        let steps = self.grid.num_steps;
        let uv = u.values();
        let mut r = vec![0.0; uv.len()];
        let mut out = vec![0.0; uv.len()];
        for i in 0..n {
            r[i] = uv[i] - self.spec.initial_state[i];
            out[i] = r[i];
        }
        let mut phi = vec![0.0; n];
        let mut a = vec![0.0; n];
        let mut states = Vec::new();
        for t in 0..steps - 1 {
            let next = self.frame(uv, t + 1);
            if self.explicit() {
                states.clear();
                self.advance(self.frame(uv, t), Some(&mut states), &mut phi);
                let block = &mut r[(t + 1) * n..(t + 2) * n];
                for i in 0..n {
                    block[i] = next[i] - phi[i];
                }
                let wb = r[(t + 1) * n..(t + 2) * n].to_vec();
                self.advance_adjoint(&states, &wb, &mut a);
                for i in 0..n {
                    out[t * n + i] -= a[i];
                    out[(t + 1) * n + i] += wb[i];
                }
            } else {
                self.field.eval(next, &mut phi);
                let cur = self.frame(uv, t);
                let inv_dt = 1.0 / self.grid.dt;
                let block = &mut r[(t + 1) * n..(t + 2) * n];
                for i in 0..n {
                    block[i] = (next[i] - cur[i]) * inv_dt - phi[i];
                }
                let wb = r[(t + 1) * n..(t + 2) * n].to_vec();
                self.field.adjoint(next, &wb, &mut a);
                for i in 0..n {
                    out[(t + 1) * n + i] += wb[i] * inv_dt - a[i];
                    out[t * n + i] -= wb[i] * inv_dt;
                }
            }
        }
        Ok((
            ResidualVector { block: n, values: r },
            Trajectory::from_parts(u.grid().clone(), out),
        ))
    }
}

/// `h(u) − c` for `u` on its own grid.
pub fn residual(u: &Trajectory, spec: &ConstraintSpec, system: &System) -> Result<ResidualVector> {
    ResidualMap::new(u.grid(), system, spec.clone())?.residual(u)
}

/// `J_h(u) · v`
pub fn residual_jvp(u: &Trajectory, v: &Trajectory, spec: &ConstraintSpec, system: &System) -> Result<ResidualVector> {
    ResidualMap::new(u.grid(), system, spec.clone())?.jvp(u, v)
}

/// `J_h(u)ᵀ · w`
pub fn residual_vjp(u: &Trajectory, w: &ResidualVector, spec: &ConstraintSpec, system: &System) -> Result<Trajectory> {
    ResidualMap::new(u.grid(), system, spec.clone())?.vjp(u, w)
}
