use nalgebra::{DMatrix, DVector};
use rand::RngCore;
use rand_distr::{Distribution as _, StandardNormal};
use rayon::prelude::*;

use super::TrajectoryLaw;
use crate::error::{check_dim, Error, Result};
use crate::numeric::{check_psd, gaussian_trapezoid, stack, sym_eigen, unstack};
use crate::Path;

/// Nodes per whitened dimension for rank <= 2.
pub const QUADRATURE_NODES: usize = 801;
/// Half width of the quadrature box in standard deviations.
pub const QUADRATURE_HALF_WIDTH: f64 = 8.0;
/// Total node budget once the tensor grid outgrows 801 per dimension.
const QUADRATURE_BUDGET: f64 = 4.0e6;
const MAX_QUADRATURE_RANK: usize = 5;

/// Multivariate normal over a stacked trajectory of `horizon` steps of
/// `step_dim` coordinates each.
///
/// Singular covariances are allowed. The density is then taken on the
/// support: the pseudo-inverse replaces the inverse, the pseudo-determinant
/// the determinant, and the off-support component of the argument is ignored.
#[derive(Debug, Clone)]
pub struct GaussianDist {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    step_dim: usize,
    // Columns span the support, scaled by the square root of the eigenvalue.
    basis: DMatrix<f64>,
    precision: DMatrix<f64>,
    log_norm: f64,
}

impl GaussianDist {
    /// Single-step law (`horizon = 1`).
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        Self::trajectory(mean, cov, d)
    }

    /// Law over a stacked trajectory whose steps have `step_dim` coordinates.
    pub fn trajectory(mean: DVector<f64>, cov: DMatrix<f64>, step_dim: usize) -> Result<Self> {
        let d = mean.len();
        check_dim("covariance rows", d, cov.nrows())?;
        check_dim("covariance cols", d, cov.ncols())?;
        if step_dim == 0 || !d.is_multiple_of(step_dim) {
            return Err(Error::InvalidParameter(format!(
                "step dimension {step_dim} does not divide {d}"
            )));
        }
        check_psd(&cov, "covariance")?;
        let eig = sym_eigen(&cov);
        let cutoff = 1e-12 * (1.0 + eig.eigenvalues.amax());
        let support: Vec<usize> = (0..d).filter(|&i| eig.eigenvalues[i] > cutoff).collect();
        let r = support.len();
        let mut basis = DMatrix::zeros(d, r);
        let mut precision = DMatrix::zeros(d, d);
        let mut log_det = 0.0;
        for (col, &i) in support.iter().enumerate() {
            let lambda = eig.eigenvalues[i];
            let v = eig.eigenvectors.column(i);
            basis.set_column(col, &(v * lambda.sqrt()));
            precision += v * v.transpose() / lambda;
            log_det += lambda.ln();
        }
        let log_norm = 0.5 * (r as f64 * (2.0 * std::f64::consts::PI).ln() + log_det);
        Ok(Self {
            mean,
            cov,
            step_dim,
            basis,
            precision,
            log_norm,
        })
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Dimension of the support.
    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }

    /// Maps whitened coordinates onto the support: `mean + basis * z`.
    pub fn from_whitened(&self, z: &DVector<f64>) -> DVector<f64> {
        &self.mean + &self.basis * z
    }

    pub fn log_density_stacked(&self, x: &DVector<f64>) -> f64 {
        let d = x - &self.mean;
        -0.5 * (d.transpose() * &self.precision * &d)[(0, 0)] - self.log_norm
    }

    pub fn density_stacked(&self, x: &DVector<f64>) -> f64 {
        self.log_density_stacked(x).exp()
    }

    /// Node count per whitened dimension used by [`TrajectoryLaw::expectation`].
    pub fn quadrature_nodes(rank: usize) -> Result<usize> {
        match rank {
            0..=2 => Ok(QUADRATURE_NODES),
            r if r <= MAX_QUADRATURE_RANK => {
                let mut n = QUADRATURE_BUDGET.powf(1.0 / r as f64).floor() as usize;
                if n.is_multiple_of(2) {
                    n -= 1;
                }
                Ok(n.max(21))
            }
            r => Err(Error::Numerical(format!(
                "tensor quadrature over a rank-{r} Gaussian is not supported; use Monte Carlo"
            ))),
        }
    }
}

impl TrajectoryLaw for GaussianDist {
    fn horizon(&self) -> usize {
        self.dim() / self.step_dim
    }

    fn step_dim(&self) -> usize {
        self.step_dim
    }

    fn density(&self, path: &[DVector<f64>]) -> f64 {
        self.density_stacked(&stack(path))
    }

    fn log_density(&self, path: &[DVector<f64>]) -> f64 {
        self.log_density_stacked(&stack(path))
    }

    /// Tensor trapezoid rule in whitened coordinates over `[-8, 8]`
    /// standard deviations per support dimension.
    fn expectation(&self, g: &(dyn Fn(&[DVector<f64>]) -> f64 + Sync)) -> Result<f64> {
        let r = self.rank();
        if r == 0 {
            return Ok(g(&unstack(&self.mean, self.step_dim)));
        }
        let nodes = Self::quadrature_nodes(r)?;
        let (zs, ws) = gaussian_trapezoid(nodes, QUADRATURE_HALF_WIDTH);
        let inner = nodes.pow(r as u32 - 1);
        let partials: Vec<f64> = (0..nodes)
            .into_par_iter()
            .map(|first| {
                let mut z = DVector::zeros(r);
                let mut acc = 0.0;
                for rest in 0..inner {
                    let mut w = ws[first];
                    z[0] = zs[first];
                    let mut idx = rest;
                    for dim in 1..r {
                        let i = idx % nodes;
                        idx /= nodes;
                        z[dim] = zs[i];
                        w *= ws[i];
                    }
                    if w == 0.0 {
                        continue;
                    }
                    let x = self.from_whitened(&z);
                    acc += w * g(&unstack(&x, self.step_dim));
                }
                acc
            })
            .collect();
        Ok(partials.iter().sum())
    }

    fn step_means(&self) -> Path {
        unstack(&self.mean, self.step_dim)
    }

    fn step_covariances(&self) -> Vec<DMatrix<f64>> {
        (0..self.horizon())
            .map(|t| {
                let o = t * self.step_dim;
                self.cov.view((o, o), (self.step_dim, self.step_dim)).into_owned()
            })
            .collect()
    }

    fn sample(&self, rng: &mut dyn RngCore) -> Path {
        let z = DVector::from_fn(self.rank(), |_, _| StandardNormal.sample(rng));
        unstack(&self.from_whitened(&z), self.step_dim)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    #[test]
    fn standard_normal_at_zero() {
        let g = GaussianDist::new(dvector![0.0], DMatrix::identity(1, 1)).unwrap();
        let expected = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
        assert!((g.density(&[dvector![0.0]]) - expected).abs() < 1e-15);
        assert!((g.density(&[dvector![0.0]]) - 0.3989).abs() < 1e-4);
    }

    #[test]
    fn singular_covariance_uses_support() {
        // Degenerate along (1, -1): density is the 1-D normal of (x1 + x2)/sqrt(2)
        // with variance 2.
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let g = GaussianDist::new(dvector![0.0, 0.0], cov).unwrap();
        assert_eq!(g.rank(), 1);
        let at_zero = g.density_stacked(&dvector![0.0, 0.0]);
        assert!((at_zero - 1.0 / (2.0 * std::f64::consts::PI * 2.0).sqrt()).abs() < 1e-12);
        let e = g.expectation(&|p| p[0][0] * p[0][1]).unwrap();
        assert!((e - 1.0).abs() < 1e-10);
    }

    #[test]
    fn quadrature_recovers_second_moments() {
        let cov = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 0.5]);
        let g = GaussianDist::new(dvector![1.0, -1.0], cov).unwrap();
        let e = g.expectation(&|p| (p[0][0] - 1.0) * (p[0][1] + 1.0)).unwrap();
        assert!((e - 0.3).abs() < 1e-12);
    }

    #[test]
    fn trajectory_blocks() {
        let cov = DMatrix::from_diagonal(&dvector![1.0, 2.0, 3.0, 4.0]);
        let g = GaussianDist::trajectory(dvector![0.0, 1.0, 2.0, 3.0], cov, 2).unwrap();
        assert_eq!(g.horizon(), 2);
        assert_eq!(g.step_means()[1], dvector![2.0, 3.0]);
        assert_eq!(g.step_covariances()[1], DMatrix::from_diagonal(&dvector![3.0, 4.0]));
        assert!(GaussianDist::trajectory(dvector![0.0, 1.0, 2.0], DMatrix::identity(3, 3), 2).is_err());
    }

    #[test]
    fn node_budget() {
        assert_eq!(GaussianDist::quadrature_nodes(2).unwrap(), 801);
        assert_eq!(GaussianDist::quadrature_nodes(3).unwrap(), 157);
        assert!(GaussianDist::quadrature_nodes(6).is_err());
    }
}
