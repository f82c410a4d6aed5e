use super::VectorField;
use crate::error::{Error, Result};

/// Linear vector field `F(x) = A x` with a dense row-major matrix.
///
/// Used as a toy system for which every linearization is exact.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearField {
    n: usize,
    matrix: Vec<f64>,
}

impl LinearField {
    pub fn new(n: usize, matrix: Vec<f64>) -> Result<Self> {
        if matrix.len() != n * n {
            return Err(Error::shape(format!(
                "linear field of dimension {n} needs {} entries, got {}",
                n * n,
                matrix.len()
            )));
        }
        Ok(LinearField { n, matrix })
    }

    /// `F(x) = rate * x`
    pub fn scalar(n: usize, rate: f64) -> Self {
        let mut matrix = vec![0.0; n * n];
        for i in 0..n {
            matrix[i * n + i] = rate;
        }
        LinearField { n, matrix }
    }

    pub fn matrix(&self) -> &[f64] {
        &self.matrix
    }
}

impl VectorField for LinearField {
    fn dim(&self) -> usize {
        self.n
    }

    fn eval(&mut self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.matrix[i * self.n..(i + 1) * self.n]
                .iter()
                .zip(x)
                .map(|(a, b)| a * b)
                .sum();
        }
    }

    fn tangent(&mut self, _x: &[f64], v: &[f64], out: &mut [f64]) {
        self.eval(v, out);
    }

    fn adjoint(&mut self, _x: &[f64], w: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for (i, wi) in w.iter().enumerate() {
            for (o, a) in out.iter_mut().zip(&self.matrix[i * self.n..(i + 1) * self.n]) {
                *o += a * wi;
            }
        }
    }
}
