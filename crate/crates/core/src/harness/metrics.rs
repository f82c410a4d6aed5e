use crate::error::{Error, Result};
use crate::grid::Trajectory;
use crate::linalg::dot;
use crate::systems::{residual, ConstraintSpec, System};

/// One row of an evaluation table. For aggregated rows every number is a
/// mean over trajectories.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub method: String,
    /// Mean over all entries of `(u − u_gt)²`.
    pub mse: f64,
    /// `‖h(u) − c‖²`.
    pub residual: f64,
    /// Spatial points per axis, 0 for ODEs.
    pub resolution: usize,
    pub wall_time_s: f64,
    pub iterations: f64,
    pub converged: bool,
}

/// Mean squared difference with compensated summation.
pub fn mse(u: &Trajectory, u_gt: &Trajectory) -> Result<f64> {
    u.grid().check_same(u_gt.grid(), "evaluation")?;
    if u.grid().dt != u_gt.grid().dt {
        return Err(Error::shape("evaluation: time steps differ"));
    }
    let d: Vec<f64> = u.values().iter().zip(u_gt.values()).map(|(a, b)| a - b).collect();
    Ok(dot(&d, &d) / d.len() as f64)
}

pub fn evaluate(u: &Trajectory, u_gt: &Trajectory, spec: &ConstraintSpec, system: &System) -> Result<MetricsRow> {
    Ok(MetricsRow {
        method: "evaluate".into(),
        mse: mse(u, u_gt)?,
        residual: residual(u, spec, system)?.norm2(),
        resolution: u.grid().resolutions.first().copied().unwrap_or(0),
        wall_time_s: 0.0,
        iterations: 0.0,
        converged: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{GridSpec, SystemKind};
    use crate::integrators::Generator;
    use crate::systems::testutil::random_vec;

    // double-double accumulation as an extended-precision oracle
    fn two_sum(a: f64, b: f64) -> (f64, f64) {
        let s = a + b;
        let bb = s - a;
        (s, (a - (s - bb)) + (b - bb))
    }

    fn two_prod(a: f64, b: f64) -> (f64, f64) {
        let p = a * b;
        (p, a.mul_add(b, -p))
    }

    fn dd_sum_squares(d: &[f64]) -> f64 {
        let (mut hi, mut lo) = (0.0, 0.0);
        for x in d {
            let (p, pe) = two_prod(*x, *x);
            let (s, se) = two_sum(hi, p);
            lo += se + pe;
            let (h, l) = two_sum(s, lo);
            hi = h;
            lo = l;
        }
        hi + lo
    }

    #[test]
    fn ground_truth_scores_zero() {
        for kind in [SystemKind::Lorenz, SystemKind::Ks] {
            let mut g = Generator::default_for(kind);
            g.steps = 32;
            g.window = None;
            let (u, spec) = g.trajectory(11).unwrap();
            let row = evaluate(&u, &u, &spec, &g.system).unwrap();
            assert_eq!(row.mse, 0.0);
            assert!(row.residual <= 1e-12 * u.len() as f64, "{kind}: {}", row.residual);
        }
    }

    #[test]
    fn unit_offset_gives_unit_mse() {
        let grid = GridSpec::ks(16, 4, 0.1);
        let u = Trajectory::new(grid.clone(), random_vec(64, 1)).unwrap();
        let v = Trajectory::new(grid, u.values().iter().map(|x| x + 1.0).collect()).unwrap();
        assert!((mse(&v, &u).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn mse_matches_extended_precision() {
        for seed in 0..10 {
            let grid = GridSpec::ns(16, 16, 20, 0.1);
            let a: Vec<f64> = random_vec(grid.total_size(), seed).iter().map(|x| 1e3 * x).collect();
            let b: Vec<f64> = random_vec(grid.total_size(), seed + 100).iter().map(|x| x * 1e-3).collect();
            let ua = Trajectory::new(grid.clone(), a.clone()).unwrap();
            let ub = Trajectory::new(grid, b.clone()).unwrap();
            let d: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
            let oracle = dd_sum_squares(&d) / d.len() as f64;
            assert!((mse(&ua, &ub).unwrap() - oracle).abs() <= 1e-12 * oracle);
        }
    }

    #[test]
    fn grid_mismatch_is_an_error() {
        let a = Trajectory::zeros(GridSpec::ks(16, 4, 0.1));
        let b = Trajectory::zeros(GridSpec::ks(32, 4, 0.1));
        let c = Trajectory::zeros(GridSpec::ks(16, 4, 0.2));
        assert!(mse(&a, &b).is_err());
        assert!(mse(&a, &c).is_err());
    }
}
