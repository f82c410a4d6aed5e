//! Governing systems and their trajectory-level residuals.
//!
//! Each system provides a pointwise right-hand side `F` together with its
//! tangent `JF(x) v` and adjoint `JF(x)ᵀ w`. The residual map composes these
//! through the time-stepping scheme to obtain `h(u) − c`, its Jacobian-vector
//! product and its vector-Jacobian product.

mod ks;
mod linear;
mod lorenz;
mod ns;
mod residual;

use crate::error::{Error, Result};
use crate::grid::{GridSpec, SystemKind};

pub use ks::{ks_rhs, KsField, KsParams};
pub use linear::LinearField;
pub use lorenz::{lorenz_rhs, LorenzField, LorenzParams};
pub use ns::{ns_rhs, NsField, NsParams};
pub use residual::{
    residual, residual_jvp, residual_vjp, ConstraintSpec, Linearization, ResidualMap,
    ResidualVector, Scheme,
};

/// A differentiable autonomous vector field `dx/dt = F(x)` on a flat state.
pub trait VectorField {
    /// Length of the state vector.
    fn dim(&self) -> usize;

    fn eval(&mut self, x: &[f64], out: &mut [f64]);

    /// `out = JF(x) v`
    fn tangent(&mut self, x: &[f64], v: &[f64], out: &mut [f64]);

    /// `out = JF(x)ᵀ w`
    fn adjoint(&mut self, x: &[f64], w: &[f64], out: &mut [f64]);
}

/// Physical parameters of one of the three reference systems.
#[derive(Debug, Clone, PartialEq)]
pub enum System {
    Lorenz(LorenzParams),
    Ks(KsParams),
    Ns(NsParams),
}

impl System {
    pub fn default_for(kind: SystemKind) -> Self {
        match kind {
            SystemKind::Lorenz => System::Lorenz(LorenzParams::default()),
            SystemKind::Ks => System::Ks(KsParams::default()),
            SystemKind::Ns => System::Ns(NsParams::default()),
        }
    }

    pub fn kind(&self) -> SystemKind {
        match self {
            System::Lorenz(_) => SystemKind::Lorenz,
            System::Ks(_) => SystemKind::Ks,
            System::Ns(_) => SystemKind::Ns,
        }
    }

    /// Scheme used by the matching data generator.
    pub fn default_scheme(&self) -> Scheme {
        match self {
            System::Lorenz(_) => Scheme::Euler,
            System::Ks(_) => Scheme::Bdf1,
            System::Ns(_) => Scheme::Heun,
        }
    }

    /// Micro-steps composed per recorded interval by default.
    pub fn default_micro_steps(&self) -> usize {
        match self {
            System::Ns(_) => 16,
            _ => 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            System::Lorenz(p) => p.validate(),
            System::Ks(p) => p.validate(),
            System::Ns(p) => p.validate(),
        }
    }
}

/// Concrete vector field for a grid, owning any spectral workspace it needs.
#[derive(Debug, Clone)]
pub enum Dynamics {
    Lorenz(LorenzField),
    Ks(KsField),
    Ns(NsField),
    Linear(LinearField),
}

impl Dynamics {
    pub fn new(system: &System, grid: &GridSpec) -> Result<Self> {
        system.validate()?;
        if system.kind() != grid.kind {
            return Err(Error::config(format!(
                "system {} does not match grid of kind {}",
                system.kind(),
                grid.kind
            )));
        }
        Ok(match system {
            System::Lorenz(p) => Dynamics::Lorenz(LorenzField::new(*p)),
            System::Ks(p) => Dynamics::Ks(KsField::new(*p, grid)?),
            System::Ns(p) => Dynamics::Ns(NsField::new(*p, grid)?),
        })
    }

    /// `out ≈ (I − shift·J_F)⁻¹ rhs`: inverts the stiff linear part where the
    /// field has one (KS) and copies `rhs` otherwise.
    pub fn solve_linear_part(&mut self, shift: f64, rhs: &[f64], out: &mut [f64]) {
        match self {
            Dynamics::Ks(f) => f.solve_shifted_linear(shift, rhs, out),
            _ => out.copy_from_slice(rhs),
        }
    }
}

impl VectorField for Dynamics {
    fn dim(&self) -> usize {
        match self {
            Dynamics::Lorenz(f) => f.dim(),
            Dynamics::Ks(f) => f.dim(),
            Dynamics::Ns(f) => f.dim(),
            Dynamics::Linear(f) => f.dim(),
        }
    }

    fn eval(&mut self, x: &[f64], out: &mut [f64]) {
        match self {
            Dynamics::Lorenz(f) => f.eval(x, out),
            Dynamics::Ks(f) => f.eval(x, out),
            Dynamics::Ns(f) => f.eval(x, out),
            Dynamics::Linear(f) => f.eval(x, out),
        }
    }

    fn tangent(&mut self, x: &[f64], v: &[f64], out: &mut [f64]) {
        match self {
            Dynamics::Lorenz(f) => f.tangent(x, v, out),
            Dynamics::Ks(f) => f.tangent(x, v, out),
            Dynamics::Ns(f) => f.tangent(x, v, out),
            Dynamics::Linear(f) => f.tangent(x, v, out),
        }
    }

    fn adjoint(&mut self, x: &[f64], w: &[f64], out: &mut [f64]) {
        match self {
            Dynamics::Lorenz(f) => f.adjoint(x, w, out),
            Dynamics::Ks(f) => f.adjoint(x, w, out),
            Dynamics::Ns(f) => f.adjoint(x, w, out),
            Dynamics::Linear(f) => f.adjoint(x, w, out),
        }
    }
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::VectorField;
    use crate::linalg;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub fn random_vec(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    /// Checks `<JF v, w> = <v, JFᵀ w>` and the tangent against central differences.
    pub fn check_field<F: VectorField>(f: &mut F, x: &[f64], seed: u64, fd_tol: f64) {
        let n = f.dim();
        let v = random_vec(n, seed + 1);
        let w = random_vec(n, seed + 2);
        let mut jv = vec![0.0; n];
        let mut jtw = vec![0.0; n];
        f.tangent(x, &v, &mut jv);
        f.adjoint(x, &w, &mut jtw);
        let lhs = linalg::dot(&jv, &w);
        let rhs = linalg::dot(&v, &jtw);
        let scale = linalg::norm(&jv) * linalg::norm(&w) + linalg::norm(&v) * linalg::norm(&jtw);
        assert!((lhs - rhs).abs() <= 1e-12 * scale, "adjoint mismatch {lhs} vs {rhs}");

        let eps = 1e-6 * linalg::norm(x).max(1.0) / linalg::norm(&v);
        let xp: Vec<f64> = x.iter().zip(&v).map(|(a, b)| a + eps * b).collect();
        let xm: Vec<f64> = x.iter().zip(&v).map(|(a, b)| a - eps * b).collect();
        let mut fp = vec![0.0; n];
        let mut fm = vec![0.0; n];
        f.eval(&xp, &mut fp);
        f.eval(&xm, &mut fm);
        let fd: Vec<f64> = fp.iter().zip(&fm).map(|(a, b)| (a - b) / (2.0 * eps)).collect();
        let err = linalg::norm(&linalg::sub(&fd, &jv)) / linalg::norm(&jv);
        assert!(err <= fd_tol, "tangent vs finite differences: {err}");
    }
}
