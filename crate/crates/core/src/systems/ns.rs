use num_complex::Complex64;

use super::VectorField;
use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::spectral::SpectralWorkspace;

/// Parameters of the forced 2-D Navier–Stokes vorticity equation.
///
/// The forcing is `amplitude · cos(wavenumber · y) + drag · ω`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NsParams {
    pub reynolds: f64,
    pub forcing_amplitude: f64,
    pub forcing_wavenumber: i32,
    pub drag: f64,
}

impl Default for NsParams {
    fn default() -> Self {
        NsParams {
            reynolds: 1000.0,
            forcing_amplitude: -4.0,
            forcing_wavenumber: 4,
            drag: -0.1,
        }
    }
}

impl NsParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.reynolds > 0.0 && self.reynolds.is_finite()) {
            return Err(Error::config("reynolds number must be positive"));
        }
        if !(self.forcing_amplitude.is_finite() && self.drag.is_finite()) {
            return Err(Error::config("forcing parameters must be finite"));
        }
        Ok(())
    }
}

/// Right-hand side `−u·∇ω + Δω/Re + f` with `Δψ = ω`, `u = (ψ_y, −ψ_x)`.
///
/// The advection term is computed from 2/3-truncated inputs and the product
/// is truncated again, so it is free of aliasing. With `P` the truncation,
/// `F(ω) = −P[U(Pω)·Wx(Pω) + V(Pω)·Wy(Pω)] + Lω + f₀` where `U, V, Wx, Wy`
/// are the circulant maps `ω ↦ ψ_y, −ψ_x, ω_x, ω_y`.
#[derive(Debug, Clone)]
pub struct NsField {
    ws: SpectralWorkspace,
    forcing: Vec<f64>,
    // per spectral entry
    sym_u: Vec<Complex64>,
    sym_v: Vec<Complex64>,
    sym_wx: Vec<Complex64>,
    sym_wy: Vec<Complex64>,
    lin: Vec<f64>,
    spec: Vec<Complex64>,
    work: Vec<Complex64>,
    acc: Vec<Complex64>,
    // derived fields of the base state
    base: [Vec<f64>; 4],
    // derived fields of a direction
    dir: [Vec<f64>; 4],
    tmp: Vec<f64>,
}

impl NsField {
    pub fn new(params: NsParams, grid: &GridSpec) -> Result<Self> {
        params.validate()?;
        if grid.resolutions.len() != 2 {
            return Err(Error::shape("NS needs a 2-D grid"));
        }
        let ws = SpectralWorkspace::new(grid, true)?;
        let n = ws.field_len();
        let ny = grid.resolutions[1];
        let y = grid.coordinates(1);
        let mut forcing = vec![0.0; n];
        for (i, f) in forcing.iter_mut().enumerate() {
            *f = params.forcing_amplitude * (params.forcing_wavenumber as f64 * y[i % ny]).cos();
        }
        let len = ws.spectral_len();
        let mut sym_u = Vec::with_capacity(len);
        let mut sym_v = Vec::with_capacity(len);
        let mut sym_wx = Vec::with_capacity(len);
        let mut sym_wy = Vec::with_capacity(len);
        let mut lin = Vec::with_capacity(len);
        for i in 0..len {
            let (kx, ky, k2) = (ws.k_odd(0, i), ws.k_odd(1, i), ws.k2(i));
            let inv = if k2 == 0.0 { 0.0 } else { 1.0 / k2 };
            // ψ̂ = −ω̂ / |k|²
            sym_u.push(Complex64::new(0.0, -ky * inv));
            sym_v.push(Complex64::new(0.0, kx * inv));
            sym_wx.push(Complex64::new(0.0, kx));
            sym_wy.push(Complex64::new(0.0, ky));
            lin.push(-k2 / params.reynolds + params.drag);
        }
        let zero = || vec![0.0; n];
        Ok(NsField {
            spec: ws.zero_spectrum(),
            work: ws.zero_spectrum(),
            acc: ws.zero_spectrum(),
            ws,
            forcing,
            sym_u,
            sym_v,
            sym_wx,
            sym_wy,
            lin,
            base: [zero(), zero(), zero(), zero()],
            dir: [zero(), zero(), zero(), zero()],
            tmp: zero(),
        })
    }

    pub fn forcing(&self) -> &[f64] {
        &self.forcing
    }

    /// Fills `target` with `[Wx, U, Wy, V]` of `P x`; leaves `x̂` in `self.spec`.
    fn derived(&mut self, x: &[f64], base: bool) {
        self.ws.forward(x, &mut self.spec);
        let syms = [&self.sym_wx, &self.sym_u, &self.sym_wy, &self.sym_v];
        for (slot, sym) in syms.into_iter().enumerate() {
            for i in 0..self.spec.len() {
                self.work[i] = if self.ws.keeps(i) {
                    self.spec[i] * sym[i]
                } else {
                    Complex64::new(0.0, 0.0)
                };
            }
            let target = if base {
                &mut self.base[slot]
            } else {
                &mut self.dir[slot]
            };
            self.ws.inverse(&self.work, target);
        }
    }

    /// `out = IFFT(−P FFT(tmp) + L·self.spec)`
    fn finish(&mut self, out: &mut [f64]) {
        self.ws.forward(&self.tmp, &mut self.work);
        for i in 0..self.work.len() {
            let adv = if self.ws.keeps(i) {
                self.work[i]
            } else {
                Complex64::new(0.0, 0.0)
            };
            self.work[i] = self.spec[i] * self.lin[i] - adv;
        }
        self.ws.inverse(&self.work, out);
    }
}

/// Evaluates the NS right-hand side on one vorticity field.
pub fn ns_rhs(vorticity: &[f64], p: &NsParams, ws: &SpectralWorkspace) -> Result<Vec<f64>> {
    let shape = ws.shape();
    if shape.len() != 2 || vorticity.len() != ws.field_len() {
        return Err(Error::shape("ns_rhs: field does not match workspace"));
    }
    let mut grid = GridSpec::ns(shape[0], shape[1], 1, 1.0);
    grid.lengths = vec![
        2.0 * std::f64::consts::PI / ws.wavenumbers(0).get(1).copied().unwrap_or(1.0),
        2.0 * std::f64::consts::PI / ws.wavenumbers(1).get(1).copied().unwrap_or(1.0),
    ];
    let mut f = NsField::new(*p, &grid)?;
    let mut out = vec![0.0; vorticity.len()];
    f.eval(vorticity, &mut out);
    Ok(out)
}

impl VectorField for NsField {
    fn dim(&self) -> usize {
        self.ws.field_len()
    }

    fn eval(&mut self, w: &[f64], out: &mut [f64]) {
        self.derived(w, true);
        let [wx, u, wy, v] = &self.base;
        for i in 0..self.tmp.len() {
            self.tmp[i] = u[i] * wx[i] + v[i] * wy[i];
        }
        self.finish(out);
        for (o, f) in out.iter_mut().zip(&self.forcing) {
            *o += f;
        }
    }

    fn tangent(&mut self, w: &[f64], d: &[f64], out: &mut [f64]) {
        self.derived(w, true);
        self.derived(d, false);
        let [wx, u, wy, v] = &self.base;
        let [dwx, du, dwy, dv] = &self.dir;
        for i in 0..self.tmp.len() {
            self.tmp[i] = du[i] * wx[i] + u[i] * dwx[i] + dv[i] * wy[i] + v[i] * dwy[i];
        }
        // self.spec holds d̂ from the second `derived` call
        self.finish(out);
    }

    fn adjoint(&mut self, w: &[f64], a: &[f64], out: &mut [f64]) {
        self.derived(w, true);
        // q = P a, keep â in acc for the linear part
        self.ws.forward(a, &mut self.acc);
        for i in 0..self.work.len() {
            self.work[i] = if self.ws.keeps(i) {
                self.acc[i]
            } else {
                Complex64::new(0.0, 0.0)
            };
        }
        let mut q = std::mem::take(&mut self.tmp);
        self.ws.inverse(&self.work, &mut q);
        for v in self.acc.iter_mut().zip(&self.lin) {
            *v.0 *= *v.1;
        }
        // Σ conj(σ_s) · FFT(base_{s'} ⊙ q), pairing each operator with the
        // field it multiplies: U·Wx, Wx·U, V·Wy, Wy·V
        let pairs = [(1usize, 0usize), (0, 1), (3, 2), (2, 3)];
        let mut prod = std::mem::take(&mut self.dir[0]);
        for (field_slot, op_slot) in pairs {
            let other = &self.base[field_slot];
            for i in 0..prod.len() {
                prod[i] = other[i] * q[i];
            }
            self.ws.forward(&prod, &mut self.spec);
            let sym = [&self.sym_wx, &self.sym_u, &self.sym_wy, &self.sym_v][op_slot];
            for i in 0..self.spec.len() {
                if self.ws.keeps(i) {
                    self.acc[i] -= self.spec[i] * sym[i].conj();
                }
            }
        }
        self.dir[0] = prod;
        self.tmp = q;
        self.ws.inverse(&self.acc, out);
    }
}
