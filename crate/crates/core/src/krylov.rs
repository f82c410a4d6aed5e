//! Matrix-free Krylov solvers.

use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, norm};

/// A linear map available only through its action on vectors.
pub trait LinearOperator {
    fn in_dim(&self) -> usize;
    fn out_dim(&self) -> usize;
    fn apply(&mut self, x: &[f64], out: &mut [f64]) -> Result<()>;

    /// `out = Aᵀ y`, for operators that provide it.
    fn apply_adjoint(&mut self, _y: &[f64], _out: &mut [f64]) -> Result<()> {
        Err(Error::Unsupported("operator has no adjoint".into()))
    }

    fn has_adjoint(&self) -> bool {
        false
    }

    fn is_symmetric(&self) -> bool {
        false
    }

    fn is_positive_definite(&self) -> bool {
        false
    }

    /// Diagonal of the operator, for a future Jacobi preconditioner. The
    /// solvers here do not precondition.
    fn diagonal(&mut self) -> Option<Vec<f64>> {
        None
    }
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseOperator {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
    symmetric: bool,
    positive_definite: bool,
}

impl DenseOperator {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        let symmetric = rows == cols
            && (0..rows).all(|i| (0..i).all(|j| data[i * cols + j] == data[j * cols + i]));
        Ok(DenseOperator {
            rows,
            cols,
            data,
            symmetric,
            positive_definite: false,
        })
    }

    pub fn identity(n: usize) -> Self {
        Self::diagonal_matrix(&vec![1.0; n])
    }

    pub fn diagonal_matrix(d: &[f64]) -> Self {
        let n = d.len();
        let mut data = vec![0.0; n * n];
        for (i, v) in d.iter().enumerate() {
            data[i * n + i] = *v;
        }
        DenseOperator {
            rows: n,
            cols: n,
            data,
            symmetric: true,
            positive_definite: d.iter().all(|v| *v > 0.0),
        }
    }

    /// Marks the matrix as positive definite; the caller vouches for it.
    pub fn assume_positive_definite(mut self) -> Self {
        self.positive_definite = true;
        self
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }
}

impl LinearOperator for DenseOperator {
    fn in_dim(&self) -> usize {
        self.cols
    }

    fn out_dim(&self) -> usize {
        self.rows
    }

    fn apply(&mut self, x: &[f64], out: &mut [f64]) -> Result<()> {
        for (i, o) in out.iter_mut().enumerate() {
            *o = dot(&self.data[i * self.cols..(i + 1) * self.cols], x);
        }
        Ok(())
    }

    fn apply_adjoint(&mut self, y: &[f64], out: &mut [f64]) -> Result<()> {
        out.fill(0.0);
        for (i, yi) in y.iter().enumerate() {
            axpy(*yi, &self.data[i * self.cols..(i + 1) * self.cols], out);
        }
        Ok(())
    }

    fn has_adjoint(&self) -> bool {
        true
    }

    fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    fn is_positive_definite(&self) -> bool {
        self.positive_definite
    }

    fn diagonal(&mut self) -> Option<Vec<f64>> {
        (self.rows == self.cols).then(|| (0..self.rows).map(|i| self.data[i * self.cols + i]).collect())
    }
}

/// Square operator from a closure.
pub struct FnOperator<F> {
    dim: usize,
    f: F,
    symmetric: bool,
    positive_definite: bool,
}

impl<F: FnMut(&[f64], &mut [f64]) -> Result<()>> FnOperator<F> {
    pub fn new(dim: usize, f: F) -> Self {
        FnOperator {
            dim,
            f,
            symmetric: false,
            positive_definite: false,
        }
    }

    pub fn symmetric(mut self, positive_definite: bool) -> Self {
        self.symmetric = true;
        self.positive_definite = positive_definite;
        self
    }
}

impl<F: FnMut(&[f64], &mut [f64]) -> Result<()>> LinearOperator for FnOperator<F> {
    fn in_dim(&self) -> usize {
        self.dim
    }

    fn out_dim(&self) -> usize {
        self.dim
    }

    fn apply(&mut self, x: &[f64], out: &mut [f64]) -> Result<()> {
        (self.f)(x, out)
    }

    fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    fn is_positive_definite(&self) -> bool {
        self.positive_definite
    }
}

/// Outcome of a linear solve.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub solver: &'static str,
    pub iterations: usize,
    /// `‖A x − rhs‖ / ‖rhs‖`, recomputed from the returned `x`.
    pub final_relative_residual: f64,
    pub converged: bool,
    pub tolerance: f64,
    pub breakdown: bool,
    /// Relative residual estimate after every iteration, starting with the initial guess.
    pub residual_history: Vec<f64>,
}

/// Tolerance and iteration budget shared by the solvers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tol: 1e-8,
            max_iters: 2000,
        }
    }
}

struct Setup {
    x: Vec<f64>,
    r: Vec<f64>,
    bnorm: f64,
    target: f64,
}

fn setup<A: LinearOperator + ?Sized>(a: &mut A, rhs: &[f64], x0: Option<&[f64]>, tol: f64) -> Result<Option<Setup>> {
    let n = a.in_dim();
    if a.out_dim() != n {
        return Err(Error::shape(format!("operator is {}x{n}, not square", a.out_dim())));
    }
    if rhs.len() != n {
        return Err(Error::shape(format!("rhs has length {}, operator dimension is {n}", rhs.len())));
    }
    if !(tol > 0.0) {
        return Err(Error::config("solver tolerance must be positive"));
    }
    if let Some(x0) = x0 {
        if x0.len() != n {
            return Err(Error::shape(format!("initial guess has length {}, expected {n}", x0.len())));
        }
    }
    if rhs.iter().any(|v| !v.is_finite()) {
        return Err(Error::Precondition("rhs contains non-finite values".into()));
    }
    let bnorm = norm(rhs);
    if bnorm == 0.0 {
        return Ok(None);
    }
    let x = x0.map_or_else(|| vec![0.0; n], <[f64]>::to_vec);
    let r = true_residual(a, rhs, &x)?;
    Ok(Some(Setup {
        x,
        r,
        bnorm,
        target: (tol * bnorm).max(1e-300),
    }))
}

fn true_residual<A: LinearOperator + ?Sized>(a: &mut A, rhs: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    let mut ax = vec![0.0; rhs.len()];
    a.apply(x, &mut ax)?;
    Ok(rhs.iter().zip(&ax).map(|(b, v)| b - v).collect())
}

fn zero_solution(solver: &'static str, n: usize, tol: f64) -> (Vec<f64>, SolveReport) {
    (
        vec![0.0; n],
        SolveReport {
            solver,
            iterations: 0,
            final_relative_residual: 0.0,
            converged: true,
            tolerance: tol,
            breakdown: false,
            residual_history: vec![0.0],
        },
    )
}

fn finish<A: LinearOperator + ?Sized>(
    a: &mut A,
    solver: &'static str,
    rhs: &[f64],
    x: Vec<f64>,
    bnorm: f64,
    tol: f64,
    iterations: usize,
    breakdown: bool,
    residual_history: Vec<f64>,
) -> Result<(Vec<f64>, SolveReport)> {
    let rel = norm(&true_residual(a, rhs, &x)?) / bnorm;
    Ok((
        x,
        SolveReport {
            solver,
            iterations,
            final_relative_residual: rel,
            converged: rel <= tol,
            tolerance: tol,
            breakdown,
            residual_history,
        },
    ))
}

/// Conjugate gradients for symmetric positive (semi-)definite operators.
pub fn cg<A: LinearOperator + ?Sized>(
    a: &mut A,
    rhs: &[f64],
    opts: SolveOptions,
    x0: Option<&[f64]>,
) -> Result<(Vec<f64>, SolveReport)> {
    let Some(Setup { mut x, mut r, bnorm, target }) = setup(a, rhs, x0, opts.tol)? else {
        return Ok(zero_solution("cg", rhs.len(), opts.tol));
    };
    let mut p = r.clone();
    let mut ap = vec![0.0; rhs.len()];
    let mut rr = dot(&r, &r);
    let mut history = vec![rr.sqrt() / bnorm];
    let mut iterations = 0;
    let mut breakdown = false;
    while rr.sqrt() > target && iterations < opts.max_iters {
        a.apply(&p, &mut ap)?;
        let pap = dot(&p, &ap);
        if !(pap > 0.0) || !pap.is_finite() {
            breakdown = true;
            break;
        }
        let alpha = rr / pap;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);
        iterations += 1;
        let mut rr_new = dot(&r, &r);
        if rr_new.sqrt() <= target {
            // guard against drift of the recursive residual
            r = true_residual(a, rhs, &x)?;
            rr_new = dot(&r, &r);
            if rr_new.sqrt() > target {
                history.push(rr_new.sqrt() / bnorm);
                rr = rr_new;
                p.copy_from_slice(&r);
                continue;
            }
        }
        history.push(rr_new.sqrt() / bnorm);
        let beta = rr_new / rr;
        rr = rr_new;
        for (pi, ri) in p.iter_mut().zip(&r) {
            *pi = ri + beta * *pi;
        }
    }
    finish(a, "cg", rhs, x, bnorm, opts.tol, iterations, breakdown, history)
}

/// Stabilized bi-conjugate gradients for general square operators.
pub fn bicgstab<A: LinearOperator + ?Sized>(
    a: &mut A,
    rhs: &[f64],
    opts: SolveOptions,
    x0: Option<&[f64]>,
) -> Result<(Vec<f64>, SolveReport)> {
    let Some(Setup { mut x, mut r, bnorm, target }) = setup(a, rhs, x0, opts.tol)? else {
        return Ok(zero_solution("bicgstab", rhs.len(), opts.tol));
    };
    let n = rhs.len();
    let r_hat = r.clone();
    let mut p = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut t = vec![0.0; n];
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut history = vec![norm(&r) / bnorm];
    let mut iterations = 0;
    let mut breakdown = false;
    while norm(&r) > target && iterations < opts.max_iters {
        let rho_new = dot(&r_hat, &r);
        if rho_new == 0.0 || omega == 0.0 || !rho_new.is_finite() {
            breakdown = true;
            break;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        a.apply(&p, &mut v)?;
        let rv = dot(&r_hat, &v);
        if rv == 0.0 || !rv.is_finite() {
            breakdown = true;
            break;
        }
        alpha = rho / rv;
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        iterations += 1;
        if norm(&s) <= target {
            axpy(alpha, &p, &mut x);
            r.copy_from_slice(&s);
            history.push(norm(&r) / bnorm);
            break;
        }
        a.apply(&s, &mut t)?;
        let tt = dot(&t, &t);
        if tt == 0.0 || !tt.is_finite() {
            breakdown = true;
            axpy(alpha, &p, &mut x);
            break;
        }
        omega = dot(&t, &s) / tt;
        for i in 0..n {
            x[i] += alpha * p[i] + omega * s[i];
            r[i] = s[i] - omega * t[i];
        }
        history.push(norm(&r) / bnorm);
    }
    finish(a, "bicgstab", rhs, x, bnorm, opts.tol, iterations, breakdown, history)
}

fn givens(a: f64, b: f64) -> (f64, f64) {
    if b == 0.0 {
        (1.0, 0.0)
    } else {
        let h = a.hypot(b);
        (a / h, b / h)
    }
}

/// Restarted GMRES with Givens-rotation least squares.
pub fn gmres<A: LinearOperator + ?Sized>(
    a: &mut A,
    rhs: &[f64],
    opts: SolveOptions,
    restart: usize,
    x0: Option<&[f64]>,
) -> Result<(Vec<f64>, SolveReport)> {
    if restart == 0 {
        return Err(Error::config("gmres restart length must be positive"));
    }
    let Some(Setup { mut x, mut r, bnorm, target }) = setup(a, rhs, x0, opts.tol)? else {
        return Ok(zero_solution("gmres", rhs.len(), opts.tol));
    };
    let n = rhs.len();
    let m = restart.min(n.max(1));
    let mut history = vec![norm(&r) / bnorm];
    let mut iterations = 0;
    let mut breakdown = false;
    let mut w = vec![0.0; n];
    loop {
        let beta = norm(&r);
        if beta <= target || iterations >= opts.max_iters || !beta.is_finite() {
            break;
        }
        let mut basis: Vec<Vec<f64>> = vec![r.iter().map(|v| v / beta).collect()];
        // column-major upper Hessenberg, column j has j + 2 entries
        let mut hess: Vec<Vec<f64>> = Vec::with_capacity(m);
        let mut cs: Vec<(f64, f64)> = Vec::with_capacity(m);
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        let mut k = 0;
        let mut happy = false;
        while k < m && iterations < opts.max_iters {
            a.apply(&basis[k], &mut w)?;
            let mut col = vec![0.0; k + 2];
            // modified Gram-Schmidt, applied twice for orthogonality
            for _ in 0..2 {
                for (i, v) in basis.iter().enumerate() {
                    let h = dot(&w, v);
                    col[i] += h;
                    axpy(-h, v, &mut w);
                }
            }
            let hn = norm(&w);
            col[k + 1] = hn;
            for (i, &(c, s)) in cs.iter().enumerate() {
                let (a0, a1): (f64, f64) = (col[i], col[i + 1]);
                col[i] = c * a0 + s * a1;
                col[i + 1] = -s * a0 + c * a1;
            }
            let (c, s) = givens(col[k], col[k + 1]);
            col[k] = c * col[k] + s * col[k + 1];
            col[k + 1] = 0.0;
            g[k + 1] = -s * g[k];
            g[k] *= c;
            cs.push((c, s));
            hess.push(col);
            k += 1;
            iterations += 1;
            history.push(g[k].abs() / bnorm);
            if hn <= 1e-14 * beta || !hn.is_finite() {
                happy = true;
                break;
            }
            if g[k].abs() <= target {
                break;
            }
            basis.push(w.iter().map(|v| v / hn).collect());
        }
        // back substitution for the k×k triangular system
        let mut y = vec![0.0; k];
        for i in (0..k).rev() {
            let mut acc = g[i];
            for j in i + 1..k {
                acc -= hess[j][i] * y[j];
            }
            let d = hess[i][i];
            if d == 0.0 {
                breakdown = true;
                y[i] = 0.0;
            } else {
                y[i] = acc / d;
            }
        }
        for (yi, v) in y.iter().zip(&basis) {
            axpy(*yi, v, &mut x);
        }
        r = true_residual(a, rhs, &x)?;
        if breakdown || (happy && norm(&r) > target && k < m) {
            // the Krylov space is exhausted without reaching the target
            breakdown = breakdown || norm(&r) > target;
            break;
        }
    }
    finish(a, "gmres", rhs, x, bnorm, opts.tol, iterations, breakdown, history)
}
