//! Constraint violation along an optimizer path against its first- and
//! second-order Taylor models at the starting point.

use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::grid::{GridSpec, Trajectory};
use crate::lbfgs::OptimTrace;
use crate::linalg::{dot, norm};
use crate::systems::{ConstraintSpec, ResidualMap, System};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuadraticMode {
    /// `‖J δ‖²` as the second-order term.
    GaussNewton,
    /// Half the second difference of the violation along `δ`.
    SecantFd,
}

impl QuadraticMode {
    pub fn name(self) -> &'static str {
        match self {
            QuadraticMode::GaussNewton => "gauss-newton",
            QuadraticMode::SecantFd => "secant-fd",
        }
    }
}

impl FromStr for QuadraticMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gauss-newton" => Ok(QuadraticMode::GaussNewton),
            "secant-fd" => Ok(QuadraticMode::SecantFd),
            _ => Err(Error::config(format!("unknown quadratic mode `{s}` (expected gauss-newton or secant-fd)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LandscapeCurve {
    /// Path length `d(k) = Σ_{i<k} ‖u_{i+1} − u_i‖`.
    pub d: Vec<f64>,
    pub v_true: Vec<f64>,
    pub v_linear: Vec<f64>,
    pub v_quadratic: Vec<f64>,
}

impl LandscapeCurve {
    pub fn len(&self) -> usize {
        self.d.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d.is_empty()
    }

    /// `|model − v| / v` at `k` (absolute error where `v = 0`).
    pub fn linear_error(&self, k: usize) -> f64 {
        rel(self.v_linear[k], self.v_true[k])
    }

    pub fn quadratic_error(&self, k: usize) -> f64 {
        rel(self.v_quadratic[k], self.v_true[k])
    }

    /// First `k` whose path length reaches `fraction` of the total.
    pub fn index_at_fraction(&self, fraction: f64) -> usize {
        let total = self.d.last().copied().unwrap_or(0.0);
        self.d.iter().position(|&d| d >= fraction * total).unwrap_or(self.d.len().saturating_sub(1))
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("k,d,v_true,v_linear,v_quadratic\n");
        for k in 0..self.len() {
            let _ = writeln!(s, "{k},{:e},{:e},{:e},{:e}", self.d[k], self.v_true[k], self.v_linear[k], self.v_quadratic[k]);
        }
        s
    }
}

fn rel(model: f64, truth: f64) -> f64 {
    let err = (model - truth).abs();
    if truth == 0.0 {
        err
    } else {
        err / truth.abs()
    }
}

// Relative step of the second difference along δ.
const SECANT_EPS: f64 = 1e-3;

pub fn taylor_landscape(
    trace: &OptimTrace,
    grid: &GridSpec,
    spec: &ConstraintSpec,
    system: &System,
    mode: QuadraticMode,
) -> Result<LandscapeCurve> {
    if trace.iterates.is_empty() {
        return Err(Error::Precondition("the trace has no recorded iterates; rerun with record_path".into()));
    }
    taylor_landscape_with(&mut ResidualMap::new(grid, system, spec.clone())?, trace, mode)
}

/// As [`taylor_landscape`] for an explicit residual map.
pub fn taylor_landscape_with(map: &mut ResidualMap, trace: &OptimTrace, mode: QuadraticMode) -> Result<LandscapeCurve> {
    let path = &trace.iterates;
    let grid = &map.grid().clone();
    if path.is_empty() {
        return Err(Error::Precondition("the trace has no recorded iterates; rerun with record_path".into()));
    }
    if path.iter().any(|u| u.len() != grid.total_size()) {
        return Err(Error::shape("recorded iterates do not match the grid"));
    }
    let traj = |v: &[f64]| Trajectory::new(grid.clone(), v.to_vec());
    let u0 = traj(&path[0])?;
    let r0 = map.residual(&u0)?;
    let v0 = r0.norm2();
    let lin = map.linearize(&u0)?;

    let mut curve = LandscapeCurve {
        d: Vec::with_capacity(path.len()),
        v_true: Vec::with_capacity(path.len()),
        v_linear: Vec::with_capacity(path.len()),
        v_quadratic: Vec::with_capacity(path.len()),
    };
    let mut d = 0.0;
    for (k, u) in path.iter().enumerate() {
        if k > 0 {
            let step: Vec<f64> = u.iter().zip(&path[k - 1]).map(|(a, b)| a - b).collect();
            d += norm(&step);
        }
        let delta: Vec<f64> = u.iter().zip(&path[0]).map(|(a, b)| a - b).collect();
        let jd = map.jvp_at(&lin, &traj(&delta)?)?;
        let first = 2.0 * dot(r0.values(), jd.values());
        let second = match mode {
            QuadraticMode::GaussNewton => jd.norm2(),
            QuadraticMode::SecantFd if k == 0 => 0.0,
            QuadraticMode::SecantFd => {
                let mut at = |s: f64| -> Result<f64> {
                    let p: Vec<f64> = path[0].iter().zip(&delta).map(|(a, b)| a + s * b).collect();
                    Ok(map.residual(&traj(&p)?)?.norm2())
                };
                let e = SECANT_EPS;
                0.5 * (at(e)? - 2.0 * v0 + at(-e)?) / (e * e)
            }
        };
        curve.d.push(d);
        curve.v_true.push(if k == 0 { v0 } else { map.residual(&traj(u)?)?.norm2() });
        curve.v_linear.push(v0 + first);
        curve.v_quadratic.push(v0 + first + second);
    }
    Ok(curve)
}
