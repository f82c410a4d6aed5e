//! Fourier pseudo-spectral primitives on periodic grids.
//!
//! Real fields are transformed with a real-to-complex FFT along the last
//! (contiguous) axis and a complex FFT along the first axis for 2-D grids. The
//! stored spectrum is therefore a half spectrum: for 1-D grids it has
//! `n/2 + 1` entries, for 2-D grids `(ny/2 + 1) * nx` entries laid out with
//! the `ky` index outermost so that the `x` transforms run over contiguous
//! chunks.
//!
//! Every operator applied here is a real circulant map: its symbol satisfies
//! `σ(-k) = conj(σ(k))`. Odd-order derivatives zero the Nyquist mode of the
//! differentiated axis, which keeps first derivatives exactly antisymmetric.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::grid::GridSpec;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Signed mode index for position `j` of an `n`-point FFT in standard order.
pub fn signed_mode(j: usize, n: usize) -> i64 {
    if j <= n / 2 {
        j as i64
    } else {
        j as i64 - n as i64
    }
}

/// Wavenumbers `2π m / L` in standard FFT order (non-negative modes first).
pub fn wavenumbers(n: usize, length: f64) -> Vec<f64> {
    (0..n)
        .map(|j| 2.0 * PI * signed_mode(j, n) as f64 / length)
        .collect()
}

/// Reusable FFT plans, scratch buffers and per-mode tables for one grid.
///
/// Not shareable between concurrent computations; clone one per worker.
#[derive(Clone)]
pub struct SpectralWorkspace {
    shape: Vec<usize>,
    wavenumbers: Vec<Vec<f64>>,
    dealias: bool,
    // Per spectral entry: wavenumber and Nyquist flag for each axis.
    k_tab: Vec<Vec<f64>>,
    nyq_tab: Vec<Vec<bool>>,
    mask: Vec<bool>,
    r2c: Arc<dyn RealToComplex<f64>>,
    c2r: Arc<dyn ComplexToReal<f64>>,
    fft_x: Option<(Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>)>,
    row_in: Vec<f64>,
    row_spec: Vec<Complex64>,
    buf: Vec<Complex64>,
    real_scratch: Vec<Complex64>,
    fft_scratch: Vec<Complex64>,
}

impl std::fmt::Debug for SpectralWorkspace {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectralWorkspace")
            .field("shape", &self.shape)
            .field("dealias", &self.dealias)
            .finish()
    }
}

impl SpectralWorkspace {
    /// Workspace for the spatial part of `grid`.
    pub fn new(grid: &GridSpec, dealias: bool) -> Result<Self> {
        if !grid.periodic {
            return Err(Error::Unsupported(
                "spectral operators require a periodic grid".into(),
            ));
        }
        if grid.state_dim != 1 {
            return Err(Error::Unsupported(
                "spectral operators act on scalar fields".into(),
            ));
        }
        Self::with_shape(&grid.resolutions, &grid.lengths, dealias)
    }

    pub fn with_shape(shape: &[usize], lengths: &[f64], dealias: bool) -> Result<Self> {
        if shape.is_empty() || shape.len() > 2 || shape.len() != lengths.len() {
            return Err(Error::Unsupported(format!(
                "spectral workspace supports 1-D and 2-D grids, got {} axes",
                shape.len()
            )));
        }
        if shape.iter().any(|&n| n < 2) {
            return Err(Error::config("spectral axes need at least two points"));
        }
        let wavenumbers: Vec<Vec<f64>> = shape
            .iter()
            .zip(lengths)
            .map(|(&n, &l)| wavenumbers(n, l))
            .collect();

        let last = *shape.last().unwrap();
        let half = last / 2 + 1;
        let mut planner = RealFftPlanner::<f64>::new();
        let r2c = planner.plan_fft_forward(last);
        let c2r = planner.plan_fft_inverse(last);
        let real_scratch_len = r2c.get_scratch_len().max(c2r.get_scratch_len());

        let (k_tab, nyq_tab, mask, fft_x, fft_scratch_len) = if shape.len() == 1 {
            let n = shape[0];
            let k: Vec<f64> = wavenumbers[0][..half].to_vec();
            let nyq: Vec<bool> = (0..half).map(|j| n % 2 == 0 && j == n / 2).collect();
            let mask = (0..half)
                .map(|j| !dealias || 3 * j <= n)
                .collect();
            (vec![k], vec![nyq], mask, None, 0)
        } else {
            let (nx, ny) = (shape[0], shape[1]);
            let mut kx = Vec::with_capacity(half * nx);
            let mut ky = Vec::with_capacity(half * nx);
            let mut nx_nyq = Vec::with_capacity(half * nx);
            let mut ny_nyq = Vec::with_capacity(half * nx);
            let mut mask = Vec::with_capacity(half * nx);
            for jy in 0..half {
                for jx in 0..nx {
                    kx.push(wavenumbers[0][jx]);
                    ky.push(wavenumbers[1][jy]);
                    nx_nyq.push(nx % 2 == 0 && jx == nx / 2);
                    ny_nyq.push(ny % 2 == 0 && jy == ny / 2);
                    let mx = signed_mode(jx, nx).unsigned_abs() as usize;
                    mask.push(!dealias || (3 * mx <= nx && 3 * jy <= ny));
                }
            }
            let mut cplanner = FftPlanner::<f64>::new();
            let fwd = cplanner.plan_fft_forward(nx);
            let inv = cplanner.plan_fft_inverse(nx);
            let scratch = fwd
                .get_inplace_scratch_len()
                .max(inv.get_inplace_scratch_len());
            (
                vec![kx, ky],
                vec![nx_nyq, ny_nyq],
                mask,
                Some((fwd, inv)),
                scratch,
            )
        };

        let spec_len = mask.len();
        Ok(SpectralWorkspace {
            shape: shape.to_vec(),
            wavenumbers,
            dealias,
            k_tab,
            nyq_tab,
            mask,
            r2c,
            c2r,
            fft_x,
            row_in: vec![0.0; last],
            row_spec: vec![ZERO; half],
            buf: vec![ZERO; spec_len],
            real_scratch: vec![ZERO; real_scratch_len],
            fft_scratch: vec![ZERO; fft_scratch_len],
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn dealias_enabled(&self) -> bool {
        self.dealias
    }

    /// Full-length wavenumber array of `axis` in FFT order.
    pub fn wavenumbers(&self, axis: usize) -> &[f64] {
        &self.wavenumbers[axis]
    }

    pub fn field_len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn spectral_len(&self) -> usize {
        self.mask.len()
    }

    /// Wavenumber along `axis` of spectral entry `idx`.
    pub fn k(&self, axis: usize, idx: usize) -> f64 {
        self.k_tab[axis][idx]
    }

    /// Wavenumber along `axis` with the Nyquist mode mapped to zero, as used
    /// by odd-order derivatives.
    pub fn k_odd(&self, axis: usize, idx: usize) -> f64 {
        if self.nyq_tab[axis][idx] {
            0.0
        } else {
            self.k_tab[axis][idx]
        }
    }

    /// Squared wavenumber magnitude of spectral entry `idx`.
    pub fn k2(&self, idx: usize) -> f64 {
        self.k_tab.iter().map(|k| k[idx] * k[idx]).sum()
    }

    /// True when entry `idx` survives the 2/3 rule (always true when disabled).
    pub fn keeps(&self, idx: usize) -> bool {
        self.mask[idx]
    }

    /// Unnormalized forward transform.
    pub fn forward(&mut self, field: &[f64], out: &mut [Complex64]) {
        assert_eq!(field.len(), self.field_len(), "field length");
        assert_eq!(out.len(), self.spectral_len(), "spectrum length");
        if self.shape.len() == 1 {
            self.row_in.copy_from_slice(field);
            self.r2c
                .process_with_scratch(&mut self.row_in, out, &mut self.real_scratch)
                .expect("r2c");
            return;
        }
        let (nx, ny) = (self.shape[0], self.shape[1]);
        let half = ny / 2 + 1;
        for ix in 0..nx {
            self.row_in.copy_from_slice(&field[ix * ny..(ix + 1) * ny]);
            self.r2c
                .process_with_scratch(&mut self.row_in, &mut self.row_spec, &mut self.real_scratch)
                .expect("r2c");
            for (jy, v) in self.row_spec.iter().enumerate() {
                out[jy * nx + ix] = *v;
            }
        }
        let (fwd, _) = self.fft_x.as_ref().unwrap();
        fwd.process_with_scratch(&mut out[..half * nx], &mut self.fft_scratch);
    }

    /// Normalized inverse transform (`inverse(forward(f)) == f`).
    pub fn inverse(&mut self, spec: &[Complex64], out: &mut [f64]) {
        assert_eq!(spec.len(), self.spectral_len(), "spectrum length");
        assert_eq!(out.len(), self.field_len(), "field length");
        let norm = 1.0 / self.field_len() as f64;
        let last = *self.shape.last().unwrap();
        let even = last % 2 == 0;
        if self.shape.len() == 1 {
            self.row_spec.copy_from_slice(spec);
            self.row_spec[0].im = 0.0;
            if even {
                self.row_spec[last / 2].im = 0.0;
            }
            self.c2r
                .process_with_scratch(&mut self.row_spec, out, &mut self.real_scratch)
                .expect("c2r");
            out.iter_mut().for_each(|v| *v *= norm);
            return;
        }
        let (nx, ny) = (self.shape[0], self.shape[1]);
        let half = ny / 2 + 1;
        self.buf.copy_from_slice(spec);
        let (_, inv) = self.fft_x.as_ref().unwrap();
        inv.process_with_scratch(&mut self.buf, &mut self.fft_scratch);
        for ix in 0..nx {
            for jy in 0..half {
                self.row_spec[jy] = self.buf[jy * nx + ix];
            }
            self.row_spec[0].im = 0.0;
            if even {
                self.row_spec[ny / 2].im = 0.0;
            }
            let row = &mut out[ix * ny..(ix + 1) * ny];
            self.c2r
                .process_with_scratch(&mut self.row_spec, row, &mut self.real_scratch)
                .expect("c2r");
            row.iter_mut().for_each(|v| *v *= norm);
        }
    }

    pub fn zero_spectrum(&self) -> Vec<Complex64> {
        vec![ZERO; self.spectral_len()]
    }

    /// Symbol `(i k)^order` of the derivative along `axis` at entry `idx`.
    pub fn derivative_symbol(&self, order: u32, axis: usize, idx: usize) -> Complex64 {
        let k = if order % 2 == 1 {
            self.k_odd(axis, idx)
        } else {
            self.k(axis, idx)
        };
        Complex64::new(0.0, k).powu(order)
    }

    /// Zeroes every mode with `|m| > n/3` on any axis (no-op when disabled).
    pub fn dealias_23(&self, spec: &mut [Complex64]) {
        for (v, keep) in spec.iter_mut().zip(&self.mask) {
            if !keep {
                *v = ZERO;
            }
        }
    }

    /// `order`-th derivative of a real field along `axis`.
    pub fn derivative(&mut self, field: &[f64], order: u32, axis: usize) -> Result<Vec<f64>> {
        if axis >= self.shape.len() {
            return Err(Error::shape(format!(
                "axis {axis} out of range for a {}-D grid",
                self.shape.len()
            )));
        }
        if field.len() != self.field_len() {
            return Err(Error::shape(format!(
                "field has {} points, grid has {}",
                field.len(),
                self.field_len()
            )));
        }
        if order == 0 {
            return Ok(field.to_vec());
        }
        let mut spec = self.zero_spectrum();
        self.forward(field, &mut spec);
        for (idx, v) in spec.iter_mut().enumerate() {
            *v *= self.derivative_symbol(order, axis, idx);
        }
        let mut out = vec![0.0; field.len()];
        self.inverse(&spec, &mut out);
        Ok(out)
    }
}

/// Spectral derivative of `field` of the given order along `axis`.
pub fn spectral_derivative(
    field: &[f64],
    order: u32,
    axis: usize,
    ws: &mut SpectralWorkspace,
) -> Result<Vec<f64>> {
    ws.derivative(field, order, axis)
}

/// 2/3-rule de-aliasing of a half spectrum.
pub fn dealias_23(field_hat: &[Complex64], ws: &SpectralWorkspace) -> Vec<Complex64> {
    let mut out = field_hat.to_vec();
    ws.dealias_23(&mut out);
    out
}

fn resample_line(line: &[f64], new_n: usize, planner: &mut FftPlanner<f64>) -> Vec<f64> {
    let n = line.len();
    if n == new_n {
        return line.to_vec();
    }
    let mut spec: Vec<Complex64> = line.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    planner.plan_fft_forward(n).process(&mut spec);
    let mut target = vec![ZERO; new_n];
    let place = |m: i64| -> usize { m.rem_euclid(new_n as i64) as usize };
    for (j, v) in spec.iter().enumerate() {
        let m = signed_mode(j, n);
        let source_nyquist = n % 2 == 0 && j == n / 2;
        if new_n > n {
            if source_nyquist {
                target[place(m)] += v * 0.5;
                target[place(-m)] += v * 0.5;
            } else {
                target[place(m)] += v;
            }
        } else if 2 * m.unsigned_abs() < new_n as u64 {
            target[place(m)] += v;
        }
    }
    planner.plan_fft_inverse(new_n).process(&mut target);
    // forward is unnormalized over n, inverse over new_n
    let scale = 1.0 / n as f64;
    target.iter().map(|c| c.re * scale).collect()
}

/// Resamples a periodic field to a new resolution by spectral zero-padding
/// (refinement) or truncation (coarsening). Modes that cannot be represented
/// symmetrically on the target grid, including its Nyquist mode, are dropped.
pub fn resample(field: &[f64], shape: &[usize], new_shape: &[usize]) -> Result<Vec<f64>> {
    if shape.len() != new_shape.len() || field.len() != shape.iter().product::<usize>() {
        return Err(Error::shape("resample: field does not match its shape"));
    }
    let mut planner = FftPlanner::new();
    match shape.len() {
        1 => Ok(resample_line(field, new_shape[0], &mut planner)),
        2 => {
            let (nx, ny) = (shape[0], shape[1]);
            let (mx, my) = (new_shape[0], new_shape[1]);
            // along y (contiguous rows)
            let mut rows = Vec::with_capacity(nx * my);
            for ix in 0..nx {
                rows.extend(resample_line(&field[ix * ny..(ix + 1) * ny], my, &mut planner));
            }
            // along x (columns)
            let mut out = vec![0.0; mx * my];
            let mut col = vec![0.0; nx];
            for jy in 0..my {
                for ix in 0..nx {
                    col[ix] = rows[ix * my + jy];
                }
                for (ix, v) in resample_line(&col, mx, &mut planner).into_iter().enumerate() {
                    out[ix * my + jy] = v;
                }
            }
            Ok(out)
        }
        d => Err(Error::Unsupported(format!("resample of {d}-D fields"))),
    }
}
