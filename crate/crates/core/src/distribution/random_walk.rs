use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore};

use super::TrajectoryLaw;
use crate::error::{Error, Result};
use crate::Path;

/// Bounded integer walk on `[-a, a]`: `X_1` is uniform on the interval and
/// `X_t` is uniform over `{X_{t-1} + s : s in steps}` intersected with the
/// interval. The standard walk uses steps `{-1, 0, 1}`.
#[derive(Debug, Clone)]
pub struct RandomWalkDist {
    half_width: i64,
    horizon: usize,
    steps: Vec<i64>,
    support: OnceLock<Vec<(Vec<i64>, f64)>>,
}

impl PartialEq for RandomWalkDist {
    fn eq(&self, other: &Self) -> bool {
        self.half_width == other.half_width && self.horizon == other.horizon && self.steps == other.steps
    }
}

impl RandomWalkDist {
    pub fn symmetric(half_width: i64, horizon: usize) -> Result<Self> {
        Self::with_steps(half_width, horizon, vec![-1, 0, 1])
    }

    pub fn with_steps(half_width: i64, horizon: usize, mut steps: Vec<i64>) -> Result<Self> {
        if half_width < 1 || horizon < 1 {
            return Err(Error::InvalidParameter(format!(
                "random walk needs a >= 1 and T >= 1, got a = {half_width}, T = {horizon}"
            )));
        }
        steps.sort_unstable();
        steps.dedup();
        if steps.is_empty() {
            return Err(Error::InvalidParameter("random walk needs at least one step".into()));
        }
        Ok(Self {
            half_width,
            horizon,
            steps,
            support: OnceLock::new(),
        })
    }

    pub fn half_width(&self) -> i64 {
        self.half_width
    }

    pub fn steps(&self) -> &[i64] {
        &self.steps
    }

    pub fn in_range(&self, x: i64) -> bool {
        x.abs() <= self.half_width
    }

    /// Reachable successors of `x` (the transition kernel is uniform on them).
    pub fn successors(&self, x: i64) -> Vec<i64> {
        self.steps.iter().map(|s| x + s).filter(|&y| self.in_range(y)).collect()
    }

    pub fn initial_pmf(&self, x: i64) -> f64 {
        if self.in_range(x) {
            1.0 / (2 * self.half_width + 1) as f64
        } else {
            0.0
        }
    }

    /// `P(X_t = y | X_{t-1} = x)`.
    pub fn kernel(&self, x: i64, y: i64) -> f64 {
        if !self.in_range(x) {
            return 0.0;
        }
        let next = self.successors(x);
        if next.contains(&y) {
            1.0 / next.len() as f64
        } else {
            0.0
        }
    }

    /// Joint pmf by forward recursion.
    pub fn pmf(&self, path: &[i64]) -> f64 {
        if path.len() != self.horizon {
            return 0.0;
        }
        let mut p = self.initial_pmf(path[0]);
        for w in path.windows(2) {
            if p == 0.0 {
                break;
            }
            p *= self.kernel(w[0], w[1]);
        }
        p
    }

    /// Every path with positive probability, in lexicographic order.
    pub fn support(&self) -> &[(Vec<i64>, f64)] {
        self.support.get_or_init(|| {
            let mut out = Vec::new();
            let mut stack: Vec<(Vec<i64>, f64)> = (-self.half_width..=self.half_width)
                .rev()
                .map(|x| (vec![x], self.initial_pmf(x)))
                .collect();
            while let Some((path, p)) = stack.pop() {
                if path.len() == self.horizon {
                    out.push((path, p));
                    continue;
                }
                let last = *path.last().unwrap();
                let next = self.successors(last);
                let q = 1.0 / next.len() as f64;
                for &y in next.iter().rev() {
                    let mut ext = path.clone();
                    ext.push(y);
                    stack.push((ext, p * q));
                }
            }
            out
        })
    }

    /// Per-step marginal means.
    pub fn marginal_means(&self) -> Vec<f64> {
        let mut means = vec![0.0; self.horizon];
        for (path, p) in self.support() {
            for (m, &x) in means.iter_mut().zip(path) {
                *m += p * x as f64;
            }
        }
        means
    }

    /// Checks that the whole-path law is point symmetric: the
    /// initial law is symmetric about its mean, and every transition kernel
    /// is reflection-equivariant about the marginal means,
    /// `P(y | x) = P(2 mu_t - y | 2 mu_{t-1} - x)` for every reachable `x`.
    pub fn markov_symmetry_check(&self) -> bool {
        const TOL: f64 = 1e-12;
        let means = self.marginal_means();
        let mirror = |mu: f64, x: i64| -> Option<i64> {
            let m = 2.0 * mu - x as f64;
            let r = m.round();
            ((m - r).abs() < 1e-9).then_some(r as i64)
        };
        let a = self.half_width;
        for x in -a..=a {
            let q = mirror(means[0], x).map_or(0.0, |y| self.initial_pmf(y));
            if (self.initial_pmf(x) - q).abs() > TOL {
                return false;
            }
        }
        let mut reachable: Vec<i64> = (-a..=a).collect();
        for t in 1..self.horizon {
            for &x in &reachable {
                let xm = mirror(means[t - 1], x);
                for y in -a..=a {
                    let mirrored = match (xm, mirror(means[t], y)) {
                        (Some(xm), Some(ym)) => self.kernel(xm, ym),
                        _ => 0.0,
                    };
                    if (self.kernel(x, y) - mirrored).abs() > TOL {
                        return false;
                    }
                }
            }
            let mut next: Vec<i64> = reachable.iter().flat_map(|&x| self.successors(x)).collect();
            next.sort_unstable();
            next.dedup();
            reachable = next;
        }
        true
    }

    fn to_integers(path: &[DVector<f64>]) -> Option<Vec<i64>> {
        path.iter()
            .map(|v| {
                if v.len() != 1 {
                    return None;
                }
                let r = v[0].round();
                ((v[0] - r).abs() < 1e-9).then_some(r as i64)
            })
            .collect()
    }
}

fn as_path(ints: &[i64]) -> Path {
    ints.iter().map(|&x| DVector::from_element(1, x as f64)).collect()
}

impl TrajectoryLaw for RandomWalkDist {
    fn horizon(&self) -> usize {
        self.horizon
    }

    fn step_dim(&self) -> usize {
        1
    }

    fn density(&self, path: &[DVector<f64>]) -> f64 {
        Self::to_integers(path).map_or(0.0, |p| self.pmf(&p))
    }

    /// Exact, by enumerating the support.
    fn expectation(&self, g: &(dyn Fn(&[DVector<f64>]) -> f64 + Sync)) -> Result<f64> {
        Ok(self.support().iter().map(|(path, p)| p * g(&as_path(path))).sum())
    }

    fn step_means(&self) -> Path {
        self.marginal_means()
            .into_iter()
            .map(|m| DVector::from_element(1, m))
            .collect()
    }

    fn step_covariances(&self) -> Vec<DMatrix<f64>> {
        let means = self.marginal_means();
        let mut vars = vec![0.0; self.horizon];
        for (path, p) in self.support() {
            for t in 0..self.horizon {
                vars[t] += p * (path[t] as f64 - means[t]).powi(2);
            }
        }
        vars.into_iter().map(|v| DMatrix::from_element(1, 1, v)).collect()
    }

    fn sample(&self, rng: &mut dyn RngCore) -> Path {
        let mut x = rng.random_range(-self.half_width..=self.half_width);
        let mut out = vec![x];
        for _ in 1..self.horizon {
            let next = self.successors(x);
            x = next[rng.random_range(0..next.len())];
            out.push(x);
        }
        as_path(&out)
    }
}
