//! Space-time grids and the flat trajectory container.
//!
//! A trajectory is stored as one flat `f64` buffer in row-major order with
//! time outermost, then the spatial axes in declaration order, then the state
//! components. The same ordering is used by the residual blocks, the Jacobian
//! products and the on-disk format.

use std::f64::consts::PI;
use std::fmt;

use crate::error::{Error, Result};
use crate::linalg;

/// Which governing system a grid belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SystemKind {
    Lorenz,
    Ks,
    Ns,
}

impl SystemKind {
    pub fn code(self) -> u8 {
        match self {
            SystemKind::Lorenz => 0,
            SystemKind::Ks => 1,
            SystemKind::Ns => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(SystemKind::Lorenz),
            1 => Some(SystemKind::Ks),
            2 => Some(SystemKind::Ns),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SystemKind::Lorenz => "lorenz",
            SystemKind::Ks => "ks",
            SystemKind::Ns => "ns",
        }
    }
}

impl fmt::Display for SystemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl std::str::FromStr for SystemKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lorenz" => Ok(SystemKind::Lorenz),
            "ks" => Ok(SystemKind::Ks),
            "ns" => Ok(SystemKind::Ns),
            other => Err(Error::config(format!(
                "unknown system `{other}` (expected lorenz, ks or ns)"
            ))),
        }
    }
}

/// Discretization of the space-time domain.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub kind: SystemKind,
    /// Points per spatial axis (empty for the Lorenz ODE).
    pub resolutions: Vec<usize>,
    /// Physical length per spatial axis.
    pub lengths: Vec<f64>,
    /// Spacing between recorded frames.
    pub dt: f64,
    /// Number of recorded frames, including the initial state.
    pub num_steps: usize,
    pub state_dim: usize,
    pub periodic: bool,
}

impl GridSpec {
    pub fn lorenz(num_steps: usize, dt: f64) -> Self {
        GridSpec {
            kind: SystemKind::Lorenz,
            resolutions: Vec::new(),
            lengths: Vec::new(),
            dt,
            num_steps,
            state_dim: 3,
            periodic: false,
        }
    }

    pub fn ks(nx: usize, num_steps: usize, dt: f64) -> Self {
        GridSpec {
            kind: SystemKind::Ks,
            resolutions: vec![nx],
            lengths: vec![64.0],
            dt,
            num_steps,
            state_dim: 1,
            periodic: true,
        }
    }

    pub fn ns(nx: usize, ny: usize, num_steps: usize, dt: f64) -> Self {
        GridSpec {
            kind: SystemKind::Ns,
            resolutions: vec![nx, ny],
            lengths: vec![2.0 * PI, 2.0 * PI],
            dt,
            num_steps,
            state_dim: 1,
            periodic: true,
        }
    }

    /// Same grid with a different frame count.
    pub fn with_steps(&self, num_steps: usize) -> Self {
        GridSpec {
            num_steps,
            ..self.clone()
        }
    }

    /// Same grid with every spatial axis set to `n` points.
    pub fn with_resolution(&self, n: usize) -> Self {
        GridSpec {
            resolutions: vec![n; self.resolutions.len()],
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::config(format!("dt must be positive, got {}", self.dt)));
        }
        if self.lengths.len() != self.resolutions.len() {
            return Err(Error::config("one domain length is required per spatial axis"));
        }
        if let Some(l) = self.lengths.iter().find(|l| !(**l > 0.0 && l.is_finite())) {
            return Err(Error::config(format!("domain lengths must be positive, got {l}")));
        }
        if self.num_steps == 0 || self.state_dim == 0 || self.resolutions.contains(&0) {
            return Err(Error::config("grid sizes must be positive"));
        }
        let spatial = self
            .resolutions
            .iter()
            .try_fold(self.state_dim, |acc, &n| acc.checked_mul(n));
        if spatial.and_then(|s| s.checked_mul(self.num_steps)).is_none() {
            return Err(Error::config("grid size overflows"));
        }
        Ok(())
    }

    /// Number of values in one frame.
    pub fn spatial_size(&self) -> usize {
        self.state_dim * self.resolutions.iter().product::<usize>()
    }

    /// Total number of values `N` in a trajectory.
    pub fn total_size(&self) -> usize {
        self.num_steps * self.spatial_size()
    }

    /// Grid coordinates of axis `axis`: `x_j = j L / n`.
    pub fn coordinates(&self, axis: usize) -> Vec<f64> {
        let n = self.resolutions[axis];
        let h = self.lengths[axis] / n as f64;
        (0..n).map(|j| j as f64 * h).collect()
    }

    /// Dimensions in file order: time first, then space, then components.
    pub fn dims(&self) -> Vec<usize> {
        let mut dims = vec![self.num_steps];
        dims.extend(&self.resolutions);
        if self.state_dim > 1 {
            dims.push(self.state_dim);
        }
        dims
    }

    fn same_shape(&self, other: &GridSpec) -> bool {
        self.kind == other.kind
            && self.resolutions == other.resolutions
            && self.num_steps == other.num_steps
            && self.state_dim == other.state_dim
    }

    pub(crate) fn check_same(&self, other: &GridSpec, what: &str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::shape(format!(
                "{what}: grid {:?} does not match {:?}",
                self.dims(),
                other.dims()
            )))
        }
    }
}

/// A discretized space-time state `u ∈ R^N`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    grid: GridSpec,
    values: Vec<f64>,
}

impl Trajectory {
    pub fn new(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        grid.validate()?;
        if values.len() != grid.total_size() {
            return Err(Error::shape(format!(
                "trajectory expects {} values, got {}",
                grid.total_size(),
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::shape(format!("non-finite value at index {i}")));
        }
        Ok(Trajectory { grid, values })
    }

    pub fn zeros(grid: GridSpec) -> Self {
        let n = grid.total_size();
        Trajectory {
            grid,
            values: vec![0.0; n],
        }
    }

    /// Builds a trajectory from per-frame slices.
    pub fn from_frames<'a>(grid: GridSpec, frames: impl IntoIterator<Item = &'a [f64]>) -> Result<Self> {
        let mut values = Vec::with_capacity(grid.total_size());
        for f in frames {
            values.extend_from_slice(f);
        }
        Trajectory::new(grid, values)
    }

    /// Wraps values that are already known to match the grid.
    pub(crate) fn from_parts(grid: GridSpec, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.total_size());
        Trajectory { grid, values }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
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

    pub fn num_frames(&self) -> usize {
        self.grid.num_steps
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        let s = self.grid.spatial_size();
        &self.values[t * s..(t + 1) * s]
    }

    pub fn frame_mut(&mut self, t: usize) -> &mut [f64] {
        let s = self.grid.spatial_size();
        &mut self.values[t * s..(t + 1) * s]
    }

    pub fn frames(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.grid.spatial_size())
    }

    /// Frames `start..end` as a new trajectory.
    pub fn window(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.num_frames() {
            return Err(Error::shape(format!(
                "window {start}..{end} outside 0..{}",
                self.num_frames()
            )));
        }
        let s = self.grid.spatial_size();
        Ok(Trajectory {
            grid: self.grid.with_steps(end - start),
            values: self.values[start * s..end * s].to_vec(),
        })
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn dot(&self, other: &Trajectory) -> Result<f64> {
        dot(self, other)
    }

    pub fn norm2(&self) -> f64 {
        linalg::dot(&self.values, &self.values)
    }
}

/// Euclidean inner product of the flat values.
pub fn dot(a: &Trajectory, b: &Trajectory) -> Result<f64> {
    a.grid.check_same(&b.grid, "dot")?;
    Ok(linalg::dot(&a.values, &b.values))
}

/// Squared Euclidean norm of the flat values.
pub fn norm2(a: &Trajectory) -> f64 {
    a.norm2()
}
