use super::VectorField;
use crate::error::{Error, Result};

/// Lorenz-63 parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LorenzParams {
    pub sigma: f64,
    pub rho: f64,
    pub beta: f64,
}

impl Default for LorenzParams {
    fn default() -> Self {
        LorenzParams {
            sigma: 10.0,
            rho: 28.0,
            beta: 8.0 / 3.0,
        }
    }
}

impl LorenzParams {
    pub fn validate(&self) -> Result<()> {
        if [self.sigma, self.rho, self.beta].iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::config("lorenz parameters must be finite"))
        }
    }
}

/// `(σ(y − x), x(ρ − z) − y, xy − βz)`
pub fn lorenz_rhs(state: [f64; 3], p: &LorenzParams) -> [f64; 3] {
    let [x, y, z] = state;
    [p.sigma * (y - x), x * (p.rho - z) - y, x * y - p.beta * z]
}

#[derive(Debug, Clone, Copy)]
pub struct LorenzField {
    pub params: LorenzParams,
}

impl LorenzField {
    pub fn new(params: LorenzParams) -> Self {
        LorenzField { params }
    }
}

impl VectorField for LorenzField {
    fn dim(&self) -> usize {
        3
    }

    fn eval(&mut self, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&lorenz_rhs([x[0], x[1], x[2]], &self.params));
    }

    fn tangent(&mut self, s: &[f64], v: &[f64], out: &mut [f64]) {
        let LorenzParams { sigma, rho, beta } = self.params;
        let (x, y, z) = (s[0], s[1], s[2]);
        out[0] = sigma * (v[1] - v[0]);
        out[1] = (rho - z) * v[0] - v[1] - x * v[2];
        out[2] = y * v[0] + x * v[1] - beta * v[2];
    }

    fn adjoint(&mut self, s: &[f64], w: &[f64], out: &mut [f64]) {
        let LorenzParams { sigma, rho, beta } = self.params;
        let (x, y, z) = (s[0], s[1], s[2]);
        out[0] = -sigma * w[0] + (rho - z) * w[1] + y * w[2];
        out[1] = sigma * w[0] - w[1] + x * w[2];
        out[2] = -x * w[1] - beta * w[2];
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::testutil::{check_field, random_vec};

    #[test]
    fn fixed_point_and_unit_state() {
        let p = LorenzParams::default();
        assert_eq!(lorenz_rhs([0.0; 3], &p), [0.0; 3]);
        let r = lorenz_rhs([1.0, 1.0, 1.0], &p);
        assert_eq!(r[0], 0.0);
        assert_eq!(r[1], 26.0);
        assert!((r[2] + 5.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn matches_scalar_evaluation() {
        let p = LorenzParams {
            sigma: 9.5,
            rho: 27.0,
            beta: 2.5,
        };
        for seed in 0..20 {
            let s = random_vec(3, seed);
            let (x, y, z): (f64, f64, f64) = (s[0] * 20.0, s[1] * 20.0, s[2] * 40.0);
            let got = lorenz_rhs([x, y, z], &p);
            let dx = 9.5 * y - 9.5 * x;
            let dy = 27.0 * x - x * z - y;
            let dz = x * y - 2.5 * z;
            for (g, e) in got.iter().zip([dx, dy, dz]) {
                assert!((g - e).abs() <= 1e-14 * e.abs().max(1.0));
            }
        }
    }

    #[test]
    fn tangent_and_adjoint() {
        let mut f = LorenzField::new(LorenzParams::default());
        for seed in 0..10 {
            let x: Vec<f64> = random_vec(3, seed).iter().map(|v| v * 15.0).collect();
            check_field(&mut f, &x, seed * 7, 1e-8);
        }
    }

    #[test]
    fn rejects_non_finite() {
        let p = LorenzParams {
            sigma: f64::NAN,
            ..Default::default()
        };
        assert!(p.validate().is_err());
    }
}
