//! Trajectory laws `f_X` and point-symmetry analysis.

mod empirical;
mod gaussian;
mod random_walk;

use nalgebra::{DMatrix, DVector};
use rand::RngCore;

pub use empirical::{empirical_from_runs, BinGrid, EmpiricalTrajectoryDist, FactoredEmpiricalDist};
pub use gaussian::{GaussianDist, QUADRATURE_HALF_WIDTH, QUADRATURE_NODES};
pub use random_walk::RandomWalkDist;

use crate::error::{check_dim, Result};
use crate::numeric::{halton, stack, stream_rng, unstack, PRIMES};
use crate::Path;

/// A probability law over trajectories `X_1..X_T` of `step_dim`-vectors.
///
/// `density` is a density for continuous laws and a probability mass for
/// discrete ones; posteriors only use ratios, so either works.
pub trait TrajectoryLaw: Sync {
    fn horizon(&self) -> usize;
    fn step_dim(&self) -> usize;
    fn density(&self, path: &[DVector<f64>]) -> f64;
    fn log_density(&self, path: &[DVector<f64>]) -> f64 {
        self.density(path).ln()
    }
    /// `E[g(X)]`, computed exactly or by deterministic quadrature.
    fn expectation(&self, g: &(dyn Fn(&[DVector<f64>]) -> f64 + Sync)) -> Result<f64>;
    fn step_means(&self) -> Path;
    fn step_covariances(&self) -> Vec<DMatrix<f64>>;
    fn sample(&self, rng: &mut dyn RngCore) -> Path;
}

/// The three families of laws used by the experiments.
#[derive(Debug, Clone)]
pub enum Distribution {
    Gaussian(GaussianDist),
    RandomWalk(RandomWalkDist),
    Empirical(EmpiricalTrajectoryDist),
}

impl Distribution {
    pub fn law(&self) -> &dyn TrajectoryLaw {
        match self {
            Distribution::Gaussian(d) => d,
            Distribution::RandomWalk(d) => d,
            Distribution::Empirical(d) => d,
        }
    }

    pub fn density(&self, path: &[DVector<f64>]) -> f64 {
        self.law().density(path)
    }
}

/// Centre `v` of a point-symmetric law, `f(x) = f(2v - x)`, stacked over
/// the whole trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetryPoint {
    pub point: DVector<f64>,
}

impl SymmetryPoint {
    pub fn as_path(&self, step_dim: usize) -> Path {
        unstack(&self.point, step_dim)
    }
}

/// Probe points for continuous laws: `count` Halton points in a box of
/// `radius_sigmas` marginal standard deviations around the mean, the mean
/// itself, and `samples` draws from the law under a fixed seed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeSet {
    pub count: usize,
    pub radius_sigmas: f64,
    pub samples: usize,
    pub seed: u64,
}

impl Default for ProbeSet {
    fn default() -> Self {
        Self {
            count: 64,
            radius_sigmas: 4.0,
            samples: 16,
            seed: 0x5eed,
        }
    }
}

/// Default relative tolerance for analytic laws.
pub const ANALYTIC_SYMMETRY_TOL: f64 = 1e-6;

/// Returns the mean as symmetry point when `f(x)` and `f(2v - x)` agree on
/// every probe.
///
/// Discrete laws are checked on their full support. Empirical tables
/// accept a count mismatch within sampling noise, see
/// [`EmpiricalTrajectoryDist::symmetry_point`].
pub fn point_symmetry(dist: &Distribution, tol: f64, probes: &ProbeSet) -> Option<SymmetryPoint> {
    match dist {
        Distribution::Gaussian(g) => continuous_symmetry(g, tol, probes),
        Distribution::RandomWalk(w) => {
            // A lattice law can only be symmetric about a half-integer.
            let v: Vec<f64> = w.marginal_means().iter().map(|m| (2.0 * m).round() / 2.0).collect();
            let symmetric = w.support().iter().all(|(path, p)| {
                let reflected: Vec<f64> = path.iter().zip(&v).map(|(&x, m)| 2.0 * m - x as f64).collect();
                let mirrored = w.density(&reflected.iter().map(|&x| DVector::from_element(1, x)).collect::<Vec<_>>());
                (p - mirrored).abs() <= tol * p.max(mirrored)
            });
            symmetric.then(|| SymmetryPoint {
                point: DVector::from_vec(v),
            })
        }
        Distribution::Empirical(e) => e.symmetry_point(tol),
    }
}

/// Probe-based check for any law with a density.
pub fn continuous_symmetry(law: &dyn TrajectoryLaw, tol: f64, probes: &ProbeSet) -> Option<SymmetryPoint> {
    let mean = stack(&law.step_means());
    let sigma: Vec<f64> = law
        .step_covariances()
        .iter()
        .flat_map(|c| c.diagonal().iter().map(|v| v.max(0.0).sqrt()).collect::<Vec<_>>())
        .collect();
    let d = mean.len();
    let step = law.step_dim();
    let mut points = vec![mean.clone()];
    for i in 1..=probes.count as u64 {
        points.push(DVector::from_fn(d, |j, _| {
            let u = halton(i, PRIMES[j % PRIMES.len()]);
            mean[j] + probes.radius_sigmas * sigma[j] * (2.0 * u - 1.0)
        }));
    }
    let mut rng = stream_rng(probes.seed, 0);
    for _ in 0..probes.samples {
        points.push(stack(&law.sample(&mut rng)));
    }
    let symmetric = points.iter().all(|x| {
        let reflected = &mean * 2.0 - x;
        let a = law.log_density(&unstack(x, step));
        let b = law.log_density(&unstack(&reflected, step));
        if a == f64::NEG_INFINITY && b == f64::NEG_INFINITY {
            return true;
        }
        (a - b).abs().exp_m1() <= tol
    });
    symmetric.then_some(SymmetryPoint { point: mean })
}

/// Symmetry point of the pushforward of a law through `x -> M1 x + M2`.
pub fn affine_pushforward_symmetry(
    v: &SymmetryPoint,
    m1: &DMatrix<f64>,
    m2: &DVector<f64>,
) -> Result<SymmetryPoint> {
    check_dim("pushforward matrix cols", v.point.len(), m1.ncols())?;
    check_dim("pushforward offset", m1.nrows(), m2.len())?;
    Ok(SymmetryPoint {
        point: m1 * &v.point + m2,
    })
}
