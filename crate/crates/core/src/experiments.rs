//! Experiment runners behind the CLI. Each returns typed results plus CSV
//! renderings and the invariant checks the CLI turns into its exit code.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::adversary::{avg_distortion_closed_1bit, no_observation_baselines, within_bound};
use crate::bounds::{verify_bound_empirically, BoundReport};
use crate::config::{CaseStudyConfig, InputBoundConfig, QuadrotorConfig, RandomWalkConfig, ThetaCurveConfig};
use crate::distribution::{EmpiricalTrajectoryDist, FactoredEmpiricalDist, GaussianDist, RandomWalkDist, TrajectoryLaw};
use crate::error::{Error, Result};
use crate::mirror::{MirrorPlane, MirrorScheme};
use crate::numeric::{map_streams, matrix_power};
use crate::report::{cell, CsvTable};
use crate::shift_mirror::{optimize_theta, StandardNormal, ThetaSearch, TrajectoryCipher};
use crate::system::{matrix_from_rows, quadrotor_like_model, LinearSystem, SystemSpec, Trajectory, TrajectoryPlanner};

/// Relative slack of the no-observation ceilings.
pub const CEILING_TOL: f64 = 1e-9;

/// A named pass/fail invariant of an experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
}

impl Check {
    fn new(name: impl Into<String>, passed: bool) -> Self {
        Self {
            name: name.into(),
            passed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThetaCurveRow {
    pub k: u32,
    pub theta: f64,
    pub dw: f64,
    pub argmin_z: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThetaCurve {
    pub rows: Vec<ThetaCurveRow>,
}

/// `(k, theta_k, D_W)` for `k = 1..=k_max`.
pub fn run_theta_curve(cfg: &ThetaCurveConfig) -> Result<ThetaCurve> {
    if !(1..=8).contains(&cfg.k_max) {
        return Err(Error::Config(format!("theta_curve.k_max must lie in 1..=8, got {}", cfg.k_max)));
    }
    let search = ThetaSearch {
        coarse_step: cfg.coarse_step,
        max_theta: cfg.max_theta,
        fine_step: cfg.fine_step,
    };
    let rows = (1..=cfg.k_max)
        .map(|k| {
            let o = optimize_theta(k, &StandardNormal, &search)?;
            Ok(ThetaCurveRow {
                k,
                theta: o.theta,
                dw: o.dw,
                argmin_z: o.argmin_z,
            })
        })
        .collect::<Result<_>>()?;
    Ok(ThetaCurve { rows })
}

impl ThetaCurve {
    pub fn to_csv(&self) -> String {
        let mut t = CsvTable::new(["k", "theta_star", "D_W"]);
        for r in &self.rows {
            t.push(vec![cell(r.k), cell(r.theta), cell(r.dw)]);
        }
        t.render()
    }

    pub fn checks(&self) -> Vec<Check> {
        vec![
            Check::new(
                "D_W increases with k",
                self.rows.windows(2).all(|w| w[1].dw > w[0].dw),
            ),
            // Unit-variance source: D_W_max = 1.
            Check::new(
                "D_W <= D_W_max",
                self.rows.iter().all(|r| within_bound(r.dw, 1.0, CEILING_TOL)),
            ),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaseRow {
    pub case: String,
    pub t: usize,
    pub measured: f64,
    pub bound: f64,
    /// `tr(A^t Sigma A^t')`: Eve's distortion with no initial symbol.
    pub ceiling: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaseStudy {
    pub theta: f64,
    pub rows: Vec<CaseRow>,
}

/// Trajectory distortion evolution of the per-coordinate cipher for each
/// configured `A`.
pub fn run_case_study(cfg: &CaseStudyConfig) -> Result<CaseStudy> {
    let n = cfg.variances.len();
    if cfg.mean.len() != n {
        return Err(Error::Config("case_study.mean and case_study.variances differ in length".into()));
    }
    let theta = match cfg.theta {
        Some(t) => t,
        None => optimize_theta(cfg.k, &StandardNormal, &ThetaSearch::default())?.theta,
    };
    let sigma = DMatrix::from_diagonal(&DVector::from_vec(cfg.variances.clone()));
    let mut rows = Vec::new();
    for case in &cfg.cases {
        let a = matrix_from_rows(&case.a, "case_study.cases.a")?;
        let sys = LinearSystem::noiseless(a.clone(), DMatrix::identity(n, n))?;
        let cipher = TrajectoryCipher::gaussian(sys, DVector::from_vec(cfg.mean.clone()), &sigma, theta, cfg.k)?;
        for p in cipher.distortion_evolution(cfg.t_max, &StandardNormal)? {
            let at = matrix_power(&a, p.t);
            rows.push(CaseRow {
                case: case.name.clone(),
                t: p.t,
                measured: p.measured,
                bound: p.bound,
                ceiling: (&at * &sigma * at.transpose()).trace(),
            });
        }
    }
    Ok(CaseStudy { theta, rows })
}

impl CaseStudy {
    pub fn to_csv(&self) -> String {
        let mut t = CsvTable::new(["case", "t", "D_t", "bound_t"]);
        for r in &self.rows {
            t.push(vec![r.case.clone(), cell(r.t), cell(r.measured), cell(r.bound)]);
        }
        t.render()
    }

    pub fn case(&self, name: &str) -> Vec<&CaseRow> {
        self.rows.iter().filter(|r| r.case == name).collect()
    }

    pub fn checks(&self) -> Vec<Check> {
        vec![Check::new(
            "D_t <= tr(A^t Sigma A^t')",
            self.rows.iter().all(|r| within_bound(r.measured, r.ceiling, CEILING_TOL)),
        )]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadrotorRow {
    pub scheme: &'static str,
    pub estimator: &'static str,
    pub d_e: f64,
}

#[derive(Debug, Clone)]
pub struct QuadrotorResult {
    pub runs: usize,
    pub distinct_trajectories: usize,
    pub d_e_max: f64,
    pub rows: Vec<QuadrotorRow>,
    /// The first `dump_runs` simulated trajectories.
    pub dumped: Vec<Trajectory>,
    pub table: EmpiricalTrajectoryDist,
}

/// Samples start and target points, plans and flies each trajectory, bins
/// positions, and evaluates the one-bit closed form for a mirror plane
/// through the `x` axis and a point mirror at the origin.
///
/// Two density estimates are reported: the joint trajectory histogram and
/// the product of per-axis histograms.
pub fn run_quadrotor(cfg: &QuadrotorConfig, seed: u64) -> Result<QuadrotorResult> {
    if cfg.runs == 0 {
        return Err(Error::Config("quadrotor.runs must be positive".into()));
    }
    let sys = quadrotor_like_model(cfg.sample_time)?;
    let planner = TrajectoryPlanner::new(&sys, cfg.horizon, cfg.state_weight)?;
    let origin = DVector::from_element(3, cfg.bin_origin);
    let grid = crate::distribution::BinGrid::new(cfg.bin_width, origin.clone(), vec![0, 1, 2])?;
    let dump_runs = cfg.dump_runs.min(cfg.runs);
    let fly = |rng: &mut dyn rand::RngCore| -> Result<Trajectory> {
        let mut u = || rng.random_range(-1.0..=1.0);
        let (y1, z1, yt, zt) = (u(), u(), u(), u());
        let x_init = DVector::from_vec(vec![-1.0, y1, z1, 0.0, 0.0, 0.0]);
        let x_target = DVector::from_vec(vec![1.0, yt, zt, 0.0, 0.0, 0.0]);
        let inputs = planner.plan(&x_init, &x_target)?;
        Ok(sys.simulate(&x_init, &inputs, None)?.with_sample_time(cfg.sample_time))
    };
    let keys = map_streams(cfg.runs, seed, |rng| {
        let run = fly(rng)?;
        let key: Vec<i64> = run.states.iter().flat_map(|x| grid.index(x)).collect();
        Ok(key)
    })?;
    let dumped = map_streams(dump_runs, seed, |rng| fly(rng))?;
    let mut table = EmpiricalTrajectoryDist::new(cfg.bin_width, origin, cfg.horizon)?;
    for key in keys {
        table.record_key(key, 1)?;
    }
    let (d_e_max, _) = no_observation_baselines(&table.step_covariances())?;
    let factored = FactoredEmpiricalDist::new(table.clone())?;
    let plane = MirrorPlane::new(
        DMatrix::from_row_slice(2, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0]),
        DVector::zeros(2),
    )?;
    let point = MirrorPlane::point(DVector::zeros(3));
    let mut rows = Vec::new();
    for (scheme, p) in [("plane", &plane), ("point", &point)] {
        let planes = vec![p.clone(); cfg.horizon];
        for (estimator, law) in [("joint", &table as &dyn TrajectoryLaw), ("factored", &factored)] {
            rows.push(QuadrotorRow {
                scheme,
                estimator,
                d_e: avg_distortion_closed_1bit(law, &planes)?,
            });
        }
    }
    Ok(QuadrotorResult {
        runs: cfg.runs,
        distinct_trajectories: table.len(),
        d_e_max,
        rows,
        dumped,
        table,
    })
}

impl QuadrotorResult {
    pub fn ratio(&self, scheme: &str, estimator: &str) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.scheme == scheme && r.estimator == estimator)
            .map(|r| r.d_e / self.d_e_max)
    }

    pub fn to_csv(&self) -> String {
        let mut t = CsvTable::new(["scheme", "estimator", "D_E", "D_E_max", "ratio"]);
        for r in &self.rows {
            t.push(vec![
                r.scheme.into(),
                r.estimator.into(),
                cell(r.d_e),
                cell(self.d_e_max),
                cell(r.d_e / self.d_e_max),
            ]);
        }
        t.render()
    }

    /// Rows `run,t,px,py,pz,vx,vy,vz,u1,u2,u3`; the last step of each run
    /// has empty inputs.
    pub fn dump_csv(&self) -> String {
        let mut t = CsvTable::new(["run", "t", "px", "py", "pz", "vx", "vy", "vz", "u1", "u2", "u3"]);
        for (i, run) in self.dumped.iter().enumerate() {
            for (s, x) in run.states.iter().enumerate() {
                let mut row = vec![cell(i), cell(s + 1)];
                row.extend(x.iter().map(cell));
                match run.inputs.get(s) {
                    Some(u) => row.extend(u.iter().map(cell)),
                    None => row.extend(std::iter::repeat_n(String::new(), 3)),
                }
                t.push(row);
            }
        }
        t.render()
    }

    pub fn checks(&self) -> Vec<Check> {
        vec![Check::new(
            "D_E <= D_E_max",
            self.rows.iter().all(|r| within_bound(r.d_e, self.d_e_max, CEILING_TOL)),
        )]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RandomWalkRow {
    pub horizon: usize,
    pub d_e: f64,
    pub d_e_max: f64,
    pub symmetric: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RandomWalkResult {
    pub rows: Vec<RandomWalkRow>,
}

/// Point mirroring at the marginal means of the walk, evaluated exactly by
/// enumerating its support.
pub fn run_random_walk(cfg: &RandomWalkConfig) -> Result<RandomWalkResult> {
    let rows = cfg
        .horizons
        .iter()
        .map(|&horizon| {
            let walk = RandomWalkDist::with_steps(cfg.half_width, horizon, cfg.steps.clone())?;
            let planes: Vec<MirrorPlane> = walk
                .marginal_means()
                .iter()
                .map(|&m| MirrorPlane::point(DVector::from_element(1, m)))
                .collect();
            let d_e = avg_distortion_closed_1bit(&walk, &planes)?;
            let (d_e_max, _) = no_observation_baselines(&walk.step_covariances())?;
            Ok(RandomWalkRow {
                horizon,
                d_e,
                d_e_max,
                symmetric: walk.markov_symmetry_check(),
            })
        })
        .collect::<Result<_>>()?;
    Ok(RandomWalkResult { rows })
}

impl RandomWalkResult {
    pub fn to_csv(&self) -> String {
        let mut t = CsvTable::new(["T", "D_E", "D_E_max"]);
        for r in &self.rows {
            t.push(vec![cell(r.horizon), cell(r.d_e), cell(r.d_e_max)]);
        }
        t.render()
    }

    pub fn checks(&self) -> Vec<Check> {
        vec![
            Check::new(
                "symmetric walks reach D_E_max",
                self.rows
                    .iter()
                    .filter(|r| r.symmetric)
                    .all(|r| (r.d_e - r.d_e_max).abs() <= 1e-12),
            ),
            Check::new(
                "D_E <= D_E_max",
                self.rows.iter().all(|r| within_bound(r.d_e, r.d_e_max, CEILING_TOL)),
            ),
        ]
    }
}

/// Gaussian input law `N(0, R)` per step, either independent across steps
/// or held constant over the horizon.
pub fn input_law(cfg: &InputBoundConfig) -> Result<GaussianDist> {
    let r = matrix_from_rows(&cfg.input_cov, "input_bound.input_cov")?;
    let m = r.nrows();
    let h = cfg.horizon;
    if h == 0 {
        return Err(Error::Config("input_bound.horizon must be positive".into()));
    }
    let coupling = if cfg.constant_inputs {
        DMatrix::from_element(h, h, 1.0)
    } else {
        DMatrix::identity(h, h)
    };
    GaussianDist::trajectory(DVector::zeros(h * m), coupling.kronecker(&r), m)
}

/// Point-mirrors the inputs at the origin with one key bit and checks the
/// input-to-state bound by Monte Carlo.
pub fn run_input_bound(system: Option<&SystemSpec>, cfg: &InputBoundConfig, seed: u64) -> Result<BoundReport> {
    let sys = match system {
        Some(spec) => spec.build()?,
        None => LinearSystem::noiseless(DMatrix::identity(1, 1), DMatrix::identity(1, 1))?,
    };
    let law = input_law(cfg)?;
    if law.step_dim() != sys.input_dim() {
        return Err(Error::Config(format!(
            "input covariance is {0}x{0} but the plant has {1} inputs",
            law.step_dim(),
            sys.input_dim()
        )));
    }
    let scheme = MirrorScheme::one_bit(vec![MirrorPlane::point(DVector::zeros(sys.input_dim())); cfg.horizon])?;
    verify_bound_empirically(&sys, &law, &scheme, cfg.samples, seed)
}

/// Invariant checks of an input-bound run, including the no-observation
/// ceilings of both sides.
pub fn input_bound_checks(report: &BoundReport, law: &GaussianDist, sys: &LinearSystem) -> Vec<Check> {
    let u_covs = law.step_covariances();
    let x_covs = state_covariances(sys, law);
    let ceilings = |covs: &[DMatrix<f64>]| no_observation_baselines(covs).unwrap_or((f64::INFINITY, f64::INFINITY));
    let (u_de, u_dw) = ceilings(&u_covs);
    let (x_de, x_dw) = ceilings(&x_covs);
    // Ceiling checks allow for the sampling error of the mean.
    let slack = |e: &crate::numeric::Estimate| 3.0 * e.std_error;
    vec![
        Check::new("phi condition", report.condition_holds),
        Check::new("D_E state bound", report.d_e_bound_holds),
        Check::new("D_W state bound", report.d_w_bound_holds),
        Check::new(
            "input D_E <= D_E_max, D_W <= D_W_max",
            within_bound(report.d_e_u.mean - slack(&report.d_e_u), u_de, CEILING_TOL)
                && within_bound(report.d_w_u, u_dw, CEILING_TOL),
        ),
        Check::new(
            "state D_E <= D_E_max, D_W <= D_W_max",
            within_bound(report.d_e_x.mean - slack(&report.d_e_x), x_de, CEILING_TOL)
                && within_bound(report.d_w_x, x_dw, CEILING_TOL),
        ),
    ]
}

/// Covariances of `X_t = sum_{i<=t} A^{t-i} B U_{i-1}` under a Gaussian
/// input law.
pub fn state_covariances(sys: &LinearSystem, law: &GaussianDist) -> Vec<DMatrix<f64>> {
    let m = sys.input_dim();
    let n = sys.state_dim();
    let h = law.horizon();
    let blocks: Vec<DMatrix<f64>> = (0..h).map(|p| matrix_power(sys.a(), p) * sys.b()).collect();
    (1..=h)
        .map(|t| {
            let mut map = DMatrix::zeros(n, h * m);
            for i in 1..=t {
                map.view_mut((0, (i - 1) * m), (n, m)).copy_from(&blocks[t - i]);
            }
            &map * law.cov() * map.transpose()
        })
        .collect()
}
