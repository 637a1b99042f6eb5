//! Discrete-time linear plant `x_{t+1} = A x_t + B u_t + w_t`, trajectory
//! simulation, and the equality-constrained quadratic trajectory planner.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::numeric::{check_psd, matrix_power, stream_rng, sym_eigen};
use crate::Path;

/// Linear plant with perfect state observation (`C = I`, no measurement
/// noise).
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystem {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    process_noise_cov: DMatrix<f64>,
    // Square root of the noise covariance, `w = noise_sqrt * z`.
    noise_sqrt: DMatrix<f64>,
}

impl LinearSystem {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, process_noise_cov: DMatrix<f64>) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::InvalidParameter(format!(
                "state matrix must be square, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        let n = a.nrows();
        check_dim("input matrix rows", n, b.nrows())?;
        check_dim("noise covariance rows", n, process_noise_cov.nrows())?;
        check_dim("noise covariance cols", n, process_noise_cov.ncols())?;
        check_psd(&process_noise_cov, "process noise covariance")?;
        let eig = sym_eigen(&process_noise_cov);
        let sqrt_vals = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| v.max(0.0).sqrt()));
        let noise_sqrt = &eig.eigenvectors * sqrt_vals;
        Ok(Self {
            a,
            b,
            process_noise_cov,
            noise_sqrt,
        })
    }

    /// Noiseless plant.
    pub fn noiseless(a: DMatrix<f64>, b: DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        Self::new(a, b, DMatrix::zeros(n, n))
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn process_noise_cov(&self) -> &DMatrix<f64> {
        &self.process_noise_cov
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    pub fn is_noiseless(&self) -> bool {
        self.process_noise_cov.amax() == 0.0
    }

    /// One step of the dynamics: `A x + B u + w`.
    pub fn step(&self, x: &DVector<f64>, u: &DVector<f64>, w: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim("state", self.state_dim(), x.len())?;
        check_dim("input", self.input_dim(), u.len())?;
        check_dim("noise", self.state_dim(), w.len())?;
        Ok(&self.a * x + &self.b * u + w)
    }

    /// Runs the plant from `x_init` under `inputs`. Noise is drawn from the
    /// counter-based stream of `noise_seed` (step `t` uses stream `t`); with
    /// zero covariance or no seed the run is noiseless.
    pub fn simulate(
        &self,
        x_init: &DVector<f64>,
        inputs: &[DVector<f64>],
        noise_seed: Option<u64>,
    ) -> Result<Trajectory> {
        if inputs.is_empty() {
            return Err(Error::InvalidParameter("simulation needs at least one input".into()));
        }
        check_dim("initial state", self.state_dim(), x_init.len())?;
        let n = self.state_dim();
        let mut states = Vec::with_capacity(inputs.len() + 1);
        states.push(x_init.clone());
        for (t, u) in inputs.iter().enumerate() {
            let w = match noise_seed {
                Some(seed) if !self.is_noiseless() => {
                    let mut rng = stream_rng(seed, t as u64);
                    let z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
                    &self.noise_sqrt * z
                }
                _ => DVector::zeros(n),
            };
            let next = self.step(&states[t], u, &w)?;
            states.push(next);
        }
        Ok(Trajectory {
            states,
            inputs: inputs.to_vec(),
            sample_time: 1.0,
        })
    }
}

/// States `X_1..X_T` and the inputs `U_1..U_{T-1}` that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Path,
    pub inputs: Path,
    pub sample_time: f64,
}

impl Trajectory {
    pub fn horizon(&self) -> usize {
        self.states.len()
    }

    pub fn with_sample_time(mut self, sample_time: f64) -> Self {
        self.sample_time = sample_time;
        self
    }

    /// CSV with header `t,x1..xn,u1..um`; the final row has empty input
    /// fields since no input follows the last state.
    pub fn to_csv(&self) -> String {
        let n = self.states.first().map_or(0, |s| s.len());
        let m = self.inputs.first().map_or(0, |u| u.len());
        let mut out = String::from("t");
        for i in 1..=n {
            let _ = write!(out, ",x{i}");
        }
        for j in 1..=m {
            let _ = write!(out, ",u{j}");
        }
        out.push('\n');
        for (t, x) in self.states.iter().enumerate() {
            let _ = write!(out, "{}", t + 1);
            for v in x.iter() {
                let _ = write!(out, ",{v}");
            }
            match self.inputs.get(t) {
                Some(u) => u.iter().for_each(|v| {
                    let _ = write!(out, ",{v}");
                }),
                None => (0..m).for_each(|_| out.push(',')),
            }
            out.push('\n');
        }
        out
    }
}

/// Minimizer of `|U|^2 + state_weight * |X_2..X_{T-1}|^2` subject to the
/// noiseless dynamics, `X_1 = x_init` and `X_T = x_target`.
///
/// The KKT matrix depends only on the plant, horizon and weight, so it is
/// factored once and reused for every endpoint pair.
#[derive(Debug, Clone)]
pub struct TrajectoryPlanner {
    n: usize,
    m: usize,
    horizon: usize,
    kkt: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    // Linear term of the objective gradient per unit of x_init.
    cost_cross: DMatrix<f64>,
    // A^{T-1}: free response of the terminal state.
    terminal_free: DMatrix<f64>,
}

impl TrajectoryPlanner {
    pub fn new(sys: &LinearSystem, horizon: usize, state_weight: f64) -> Result<Self> {
        if horizon < 2 {
            return Err(Error::Planning(format!(
                "horizon {horizon} leaves no input to plan"
            )));
        }
        if !(state_weight >= 0.0) {
            return Err(Error::InvalidParameter("state weight must be nonnegative".into()));
        }
        let n = sys.state_dim();
        let m = sys.input_dim();
        let vars = (horizon - 1) * m;
        let powers: Vec<DMatrix<f64>> = (0..horizon).map(|p| matrix_power(sys.a(), p)).collect();

        // X_t = A^{t-1} x_init + input_map(t) U, t = 1..T.
        let input_map = |t: usize| {
            let mut map = DMatrix::zeros(n, vars);
            for s in 1..t {
                let block = &powers[t - 1 - s] * sys.b();
                map.view_mut((0, (s - 1) * m), (n, m)).copy_from(&block);
            }
            map
        };

        let mut hessian = DMatrix::<f64>::identity(vars, vars);
        let mut cost_cross = DMatrix::<f64>::zeros(vars, n);
        for t in 2..horizon {
            let map = input_map(t);
            hessian += (map.transpose() * &map) * state_weight;
            cost_cross += (map.transpose() * &powers[t - 1]) * state_weight;
        }
        let terminal = input_map(horizon);

        let rank = terminal.clone().svd(false, false).rank(1e-9 * (1.0 + terminal.amax()));
        if rank < n {
            return Err(Error::Planning(format!(
                "target not reachable in {horizon} steps: reachability matrix has rank {rank} < {n}"
            )));
        }

        let size = vars + n;
        let mut kkt = DMatrix::<f64>::zeros(size, size);
        kkt.view_mut((0, 0), (vars, vars)).copy_from(&(hessian * 2.0));
        kkt.view_mut((0, vars), (vars, n)).copy_from(&terminal.transpose());
        kkt.view_mut((vars, 0), (n, vars)).copy_from(&terminal);
        let lu = kkt.lu();
        if !lu.is_invertible() {
            return Err(Error::Planning("singular KKT system".into()));
        }
        Ok(Self {
            n,
            m,
            horizon,
            kkt: lu,
            cost_cross,
            terminal_free: powers[horizon - 1].clone(),
        })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn plan(&self, x_init: &DVector<f64>, x_target: &DVector<f64>) -> Result<Path> {
        check_dim("initial state", self.n, x_init.len())?;
        check_dim("target state", self.n, x_target.len())?;
        let vars = (self.horizon - 1) * self.m;
        let mut rhs = DVector::zeros(vars + self.n);
        rhs.rows_mut(0, vars).copy_from(&(&self.cost_cross * x_init * -2.0));
        rhs.rows_mut(vars, self.n)
            .copy_from(&(x_target - &self.terminal_free * x_init));
        let sol = self
            .kkt
            .solve(&rhs)
            .ok_or_else(|| Error::Planning("singular KKT system".into()))?;
        Ok(sol
            .rows(0, vars)
            .as_slice()
            .chunks(self.m)
            .map(DVector::from_column_slice)
            .collect())
    }
}

/// Convenience wrapper that builds a [`TrajectoryPlanner`] for one query.
pub fn lqr_plan(
    sys: &LinearSystem,
    x_init: &DVector<f64>,
    x_target: &DVector<f64>,
    horizon: usize,
    state_weight: f64,
) -> Result<Path> {
    TrajectoryPlanner::new(sys, horizon, state_weight)?.plan(x_init, x_target)
}

/// Three decoupled double integrators sampled at `sample_time`.
///
/// State order is `(px, py, pz, vx, vy, vz)` so the positions are the first
/// three coordinates; inputs are per-axis accelerations. Each axis `i` uses
/// the pair `(i, i + 3)` with `A_axis = [[1, Ts], [0, 1]]` and
/// `B_axis = [Ts^2/2, Ts]`.
pub fn quadrotor_like_model(sample_time: f64) -> Result<LinearSystem> {
    if !(sample_time > 0.0) {
        return Err(Error::InvalidParameter("sample time must be positive".into()));
    }
    let mut a = DMatrix::<f64>::identity(6, 6);
    let mut b = DMatrix::<f64>::zeros(6, 3);
    for axis in 0..3 {
        a[(axis, axis + 3)] = sample_time;
        b[(axis, axis)] = sample_time * sample_time / 2.0;
        b[(axis + 3, axis)] = sample_time;
    }
    LinearSystem::noiseless(a, b)
}

/// Plant matrices as nested row arrays, the on-disk form.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SystemSpec {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    #[serde(default)]
    pub process_noise_cov: Option<Vec<Vec<f64>>>,
}

pub(crate) fn matrix_from_rows(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, |r| r.len());
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Config(format!("{what}: ragged rows")));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

pub(crate) fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

impl SystemSpec {
    pub fn build(&self) -> Result<LinearSystem> {
        let a = matrix_from_rows(&self.a, "a")?;
        let b = matrix_from_rows(&self.b, "b")?;
        let n = a.nrows();
        let cov = match &self.process_noise_cov {
            Some(rows) => matrix_from_rows(rows, "process_noise_cov")?,
            None => DMatrix::zeros(n, n),
        };
        LinearSystem::new(a, b, cov)
    }
}

impl From<&LinearSystem> for SystemSpec {
    fn from(sys: &LinearSystem) -> Self {
        Self {
            a: matrix_to_rows(sys.a()),
            b: matrix_to_rows(sys.b()),
            process_noise_cov: Some(matrix_to_rows(sys.process_noise_cov())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    fn scalar(a: f64, b: f64) -> LinearSystem {
        LinearSystem::noiseless(DMatrix::from_element(1, 1, a), DMatrix::from_element(1, 1, b)).unwrap()
    }

    #[test]
    fn step_identity_dynamics() {
        let sys = LinearSystem::noiseless(DMatrix::identity(2, 2), DMatrix::identity(2, 2)).unwrap();
        let x = sys.step(&dvector![1.0, 0.0], &dvector![0.0, 1.0], &dvector![0.0, 0.0]).unwrap();
        assert_eq!(x, dvector![1.0, 1.0]);
    }

    #[test]
    fn step_pure_noise() {
        let sys = LinearSystem::noiseless(DMatrix::zeros(2, 2), DMatrix::zeros(2, 1)).unwrap();
        let x = sys.step(&dvector![5.0, 7.0], &dvector![2.0], &dvector![3.0, -1.0]).unwrap();
        assert_eq!(x, dvector![3.0, -1.0]);
    }

    #[test]
    fn step_double_integrator() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        let b = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let sys = LinearSystem::noiseless(a, b).unwrap();
        let x = sys.step(&dvector![0.0, 2.0], &dvector![1.0], &dvector![0.0, 0.0]).unwrap();
        assert_eq!(x, dvector![1.0, 3.0]);
    }

    #[test]
    fn step_rejects_bad_dimensions() {
        let sys = scalar(1.0, 1.0);
        assert!(matches!(
            sys.step(&dvector![1.0, 2.0], &dvector![0.0], &dvector![0.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn rejects_non_square_or_indefinite() {
        assert!(LinearSystem::noiseless(DMatrix::zeros(2, 3), DMatrix::zeros(2, 1)).is_err());
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(LinearSystem::new(DMatrix::identity(2, 2), DMatrix::zeros(2, 1), cov).is_err());
    }

    #[test]
    fn simulate_identity_without_inputs_is_constant() {
        let sys = LinearSystem::noiseless(DMatrix::identity(2, 2), DMatrix::identity(2, 2)).unwrap();
        let x0 = dvector![0.3, -0.2];
        let traj = sys.simulate(&x0, &[dvector![0.0, 0.0], dvector![0.0, 0.0]], None).unwrap();
        assert!(traj.states.iter().all(|s| *s == x0));
    }

    #[test]
    fn simulate_geometric_doubling() {
        let traj = scalar(2.0, 1.0)
            .simulate(&dvector![1.0], &[dvector![0.0], dvector![0.0]], None)
            .unwrap();
        let xs: Vec<f64> = traj.states.iter().map(|s| s[0]).collect();
        assert_eq!(xs, vec![1.0, 2.0, 4.0]);
    }

    #[test]
    fn simulate_seeded_noise_is_reproducible() {
        let sys = LinearSystem::new(
            DMatrix::identity(2, 2),
            DMatrix::identity(2, 2),
            DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 0.5]),
        )
        .unwrap();
        let inputs = vec![dvector![0.1, 0.0]; 5];
        let a = sys.simulate(&dvector![0.0, 0.0], &inputs, Some(11)).unwrap();
        let b = sys.simulate(&dvector![0.0, 0.0], &inputs, Some(11)).unwrap();
        let c = sys.simulate(&dvector![0.0, 0.0], &inputs, Some(12)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn simulate_rejects_empty_inputs() {
        assert!(scalar(1.0, 1.0).simulate(&dvector![0.0], &[], None).is_err());
    }

    #[test]
    fn plan_zero_endpoints_gives_zero_inputs() {
        let sys = quadrotor_like_model(0.5).unwrap();
        let z = DVector::zeros(6);
        let u = lqr_plan(&sys, &z, &z, 10, 10.0).unwrap();
        assert_eq!(u.len(), 9);
        assert!(u.iter().all(|v| v.amax() < 1e-12));
    }

    #[test]
    fn plan_single_step_is_forced() {
        let u = lqr_plan(&scalar(1.0, 1.0), &dvector![0.0], &dvector![5.0], 2, 0.0).unwrap();
        assert_eq!(u.len(), 1);
        assert!((u[0][0] - 5.0).abs() < 1e-12);
    }

    #[test]
    fn plan_splits_effort_evenly() {
        // min u1^2 + u2^2 s.t. u1 + u2 = 2
        let u = lqr_plan(&scalar(1.0, 1.0), &dvector![0.0], &dvector![2.0], 3, 0.0).unwrap();
        assert!((u[0][0] - 1.0).abs() < 1e-12);
        assert!((u[1][0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn plan_reports_unreachable_target() {
        let sys = LinearSystem::noiseless(DMatrix::identity(2, 2), DMatrix::from_row_slice(2, 1, &[1.0, 0.0])).unwrap();
        let err = lqr_plan(&sys, &dvector![0.0, 0.0], &dvector![1.0, 1.0], 4, 1.0).unwrap_err();
        assert!(matches!(err, Error::Planning(msg) if msg.contains("rank")));
        assert!(lqr_plan(&scalar(1.0, 1.0), &dvector![0.0], &dvector![1.0], 1, 0.0).is_err());
    }

    #[test]
    fn quadrotor_blocks() {
        let sys = quadrotor_like_model(0.5).unwrap();
        for axis in 0..3 {
            let (p, v) = (axis, axis + 3);
            assert_eq!(sys.a()[(p, p)], 1.0);
            assert_eq!(sys.a()[(p, v)], 0.5);
            assert_eq!(sys.a()[(v, p)], 0.0);
            assert_eq!(sys.a()[(v, v)], 1.0);
            assert_eq!(sys.b()[(p, axis)], 0.125);
            assert_eq!(sys.b()[(v, axis)], 0.5);
        }
        // No coupling between axes: permuted to (p, v) pairs the matrix is
        // block diagonal with identical blocks.
        let perm = [0, 3, 1, 4, 2, 5];
        let pa = DMatrix::from_fn(6, 6, |i, j| sys.a()[(perm[i], perm[j])]);
        for bi in 0..3 {
            for bj in 0..3 {
                let block = pa.view((2 * bi, 2 * bj), (2, 2)).into_owned();
                if bi == bj {
                    assert_eq!(block, DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]));
                } else {
                    assert_eq!(block, DMatrix::zeros(2, 2));
                }
            }
        }
    }

    #[test]
    fn quadrotor_unit_acceleration_from_rest() {
        let sys = quadrotor_like_model(1.0).unwrap();
        let traj = sys.simulate(&DVector::zeros(6), &[dvector![1.0, 0.0, 0.0]], None).unwrap();
        assert!((traj.states[1][0] - 0.5).abs() < 1e-15);
        assert!((traj.states[1][3] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn csv_layout() {
        let traj = scalar(2.0, 1.0)
            .simulate(&dvector![1.0], &[dvector![0.5]], None)
            .unwrap();
        assert_eq!(traj.to_csv(), "t,x1,u1\n1,1,0.5\n2,2.5,\n");
    }

    #[test]
    fn system_spec_round_trip() {
        let sys = quadrotor_like_model(0.5).unwrap();
        let spec = SystemSpec::from(&sys);
        assert_eq!(spec.build().unwrap(), sys);
        let ragged = SystemSpec { a: vec![vec![1.0], vec![1.0, 2.0]], b: vec![vec![1.0]], process_noise_cov: None };
        assert!(ragged.build().is_err());
    }
}
