use num_complex::Complex64;

use super::VectorField;
use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::spectral::SpectralWorkspace;

/// Kuramoto–Sivashinsky parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsParams {
    pub domain_length: f64,
}

impl Default for KsParams {
    fn default() -> Self {
        KsParams { domain_length: 64.0 }
    }
}

impl KsParams {
    pub fn validate(&self) -> Result<()> {
        if self.domain_length > 0.0 && self.domain_length.is_finite() {
            Ok(())
        } else {
            Err(Error::config("KS domain length must be positive"))
        }
    }
}

/// `∂_t u = −(u_xx + u_xxxx + u u_x)` on a periodic 1-D grid, without de-aliasing.
#[derive(Debug, Clone)]
pub struct KsField {
    ws: SpectralWorkspace,
    // linear symbol k² − k⁴ per spectral entry
    lin: Vec<f64>,
    spec: Vec<Complex64>,
    spec2: Vec<Complex64>,
    ux: Vec<f64>,
    tmp: Vec<f64>,
}

impl KsField {
    pub fn new(params: KsParams, grid: &GridSpec) -> Result<Self> {
        params.validate()?;
        if grid.resolutions.len() != 1 {
            return Err(Error::shape("KS needs a 1-D grid"));
        }
        let ws = SpectralWorkspace::with_shape(&grid.resolutions, &[params.domain_length], false)
            .and_then(|ws| {
                if grid.periodic {
                    Ok(ws)
                } else {
                    Err(Error::Unsupported("KS requires a periodic grid".into()))
                }
            })?;
        Ok(Self::with_workspace(ws))
    }

    fn with_workspace(ws: SpectralWorkspace) -> Self {
        let lin = (0..ws.spectral_len())
            .map(|i| {
                let k = ws.k(0, i);
                k * k - k * k * k * k
            })
            .collect();
        let n = ws.field_len();
        KsField {
            spec: ws.zero_spectrum(),
            spec2: ws.zero_spectrum(),
            ws,
            lin,
            ux: vec![0.0; n],
            tmp: vec![0.0; n],
        }
    }

    /// `out = (I − shift·L)⁻¹ rhs` for the linear part `L` of the field.
    pub(crate) fn solve_shifted_linear(&mut self, shift: f64, rhs: &[f64], out: &mut [f64]) {
        self.ws.forward(rhs, &mut self.spec);
        for (s, l) in self.spec.iter_mut().zip(&self.lin) {
            *s /= 1.0 - shift * l;
        }
        self.ws.inverse(&self.spec, out);
    }

    /// `u_x` of `u` into `self.ux`, leaving `û` in `self.spec`.
    fn derivative_of(&mut self, u: &[f64]) {
        self.ws.forward(u, &mut self.spec);
        for (i, s) in self.spec2.iter_mut().enumerate() {
            *s = self.spec[i] * Complex64::new(0.0, self.ws.k_odd(0, i));
        }
        self.ws.inverse(&self.spec2, &mut self.ux);
    }
}

/// Evaluates the KS right-hand side on one field.
pub fn ks_rhs(field: &[f64], p: &KsParams, ws: &SpectralWorkspace) -> Result<Vec<f64>> {
    let grid = GridSpec {
        lengths: vec![p.domain_length],
        ..GridSpec::ks(ws.shape()[0], 1, 1.0)
    };
    if field.len() != ws.field_len() {
        return Err(Error::shape("ks_rhs: field does not match workspace"));
    }
    let mut f = KsField::new(*p, &grid)?;
    let mut out = vec![0.0; field.len()];
    f.eval(field, &mut out);
    Ok(out)
}

impl VectorField for KsField {
    fn dim(&self) -> usize {
        self.ws.field_len()
    }

    fn eval(&mut self, u: &[f64], out: &mut [f64]) {
        self.derivative_of(u);
        for (s, l) in self.spec.iter_mut().zip(&self.lin) {
            *s *= *l;
        }
        self.ws.inverse(&self.spec, out);
        for ((o, a), b) in out.iter_mut().zip(u).zip(&self.ux) {
            *o -= a * b;
        }
    }

    fn tangent(&mut self, u: &[f64], v: &[f64], out: &mut [f64]) {
        // ux of the base state into tmp
        self.derivative_of(u);
        self.tmp.copy_from_slice(&self.ux);
        self.derivative_of(v);
        for (s, l) in self.spec.iter_mut().zip(&self.lin) {
            *s *= *l;
        }
        self.ws.inverse(&self.spec, out);
        for i in 0..out.len() {
            out[i] -= u[i] * self.ux[i] + v[i] * self.tmp[i];
        }
    }

    fn adjoint(&mut self, u: &[f64], w: &[f64], out: &mut [f64]) {
        // JFᵀ w = L w − u_x w + D1(u w)   (D1ᵀ = −D1)
        self.derivative_of(u);
        for i in 0..u.len() {
            self.tmp[i] = u[i] * w[i];
        }
        self.ws.forward(&self.tmp, &mut self.spec2);
        self.ws.forward(w, &mut self.spec);
        for i in 0..self.spec.len() {
            let dz = self.spec2[i] * Complex64::new(0.0, self.ws.k_odd(0, i));
            self.spec[i] = self.spec[i] * self.lin[i] + dz;
        }
        self.ws.inverse(&self.spec, out);
        for i in 0..out.len() {
            out[i] -= self.ux[i] * w[i];
        }
    }
}
