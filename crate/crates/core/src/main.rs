use std::path::{Path as FsPath, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use distortia::config::ExperimentConfig;
use distortia::experiments::{
    input_bound_checks, input_law, run_case_study, run_input_bound, run_quadrotor, run_random_walk,
    run_theta_curve, Check,
};
use distortia::report::{cell, emit, CsvTable};
use distortia::shift_mirror::{optimize_theta, StandardNormal, ThetaSearch};
use distortia::system::LinearSystem;
use distortia::Error;

#[derive(Parser)]
#[command(name = "distortia", version, about = "Distortion-based lightweight security experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML experiment configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output CSV path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Optimal window width and worst-case distortion for k = 1..k_max.
    ThetaCurve(Common),
    /// Trajectory distortion evolution of the per-coordinate cipher.
    CaseStudy(Common),
    /// Empirical quadrotor trajectories under plane and point mirroring.
    Quadrotor {
        #[command(flatten)]
        common: Common,
        /// Where to write the dump of simulated trajectories.
        #[arg(long)]
        dump: Option<PathBuf>,
    },
    /// Exact average distortion of point-mirrored random walks.
    RandomWalk(Common),
    /// Best window width for a k-bit shifting+mirroring scheme.
    OptimizeTheta {
        #[arg(long)]
        k: u32,
        #[arg(long, default_value_t = 0.01)]
        coarse: f64,
        #[arg(long, default_value_t = 0.001)]
        fine: f64,
        #[arg(long, default_value_t = 10.0)]
        max_theta: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte-Carlo check of the input-to-state distortion bound.
    VerifyInputBound(Common),
}

enum Failure {
    Config(String),
    Checks(Vec<String>),
    Run(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(m) => Failure::Config(m),
            e => Failure::Run(e),
        }
    }
}

fn load(common: &Common) -> Result<ExperimentConfig, Failure> {
    Ok(match &common.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    })
}

fn seed(common: &Common, cfg: &ExperimentConfig) -> Result<u64, Failure> {
    common
        .seed
        .or(cfg.seed)
        .ok_or_else(|| Failure::Config("a seed is required: set `seed` in the config or pass --seed".into()))
}

fn finish(checks: Vec<Check>) -> Result<(), Failure> {
    let failed: Vec<String> = checks.into_iter().filter(|c| !c.passed).map(|c| c.name).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Checks(failed))
    }
}

fn out(path: &Option<PathBuf>) -> Option<&FsPath> {
    path.as_deref()
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::ThetaCurve(c) => {
            let cfg = load(&c)?;
            let curve = run_theta_curve(&cfg.theta_curve)?;
            emit(&curve.to_csv(), out(&c.out))?;
            finish(curve.checks())
        }
        Command::CaseStudy(c) => {
            let cfg = load(&c)?;
            let study = run_case_study(&cfg.case_study)?;
            emit(&study.to_csv(), out(&c.out))?;
            finish(study.checks())
        }
        Command::Quadrotor { common, dump } => {
            let cfg = load(&common)?;
            let seed = seed(&common, &cfg)?;
            let result = run_quadrotor(&cfg.quadrotor, seed)?;
            emit(&result.to_csv(), out(&common.out))?;
            if let Some(p) = dump {
                emit(&result.dump_csv(), Some(&p))?;
            }
            finish(result.checks())
        }
        Command::RandomWalk(c) => {
            let cfg = load(&c)?;
            let result = run_random_walk(&cfg.random_walk)?;
            emit(&result.to_csv(), out(&c.out))?;
            finish(result.checks())
        }
        Command::OptimizeTheta {
            k,
            coarse,
            fine,
            max_theta,
            out: path,
        } => {
            let search = ThetaSearch {
                coarse_step: coarse,
                max_theta,
                fine_step: fine,
            };
            let o = optimize_theta(k, &StandardNormal, &search).map_err(|e| match e {
                Error::InvalidParameter(m) => Failure::Config(m),
                e => Failure::Run(e),
            })?;
            let mut t = CsvTable::new(["theta", "dw"]);
            t.push(vec![cell(o.theta), cell(o.dw)]);
            emit(&t.render(), out(&path))?;
            Ok(())
        }
        Command::VerifyInputBound(c) => {
            let cfg = load(&c)?;
            let seed = seed(&c, &cfg)?;
            let sys = match &cfg.system {
                Some(spec) => spec.build()?,
                None => LinearSystem::noiseless(nalgebra::DMatrix::identity(1, 1), nalgebra::DMatrix::identity(1, 1))?,
            };
            let report = run_input_bound(cfg.system.as_ref(), &cfg.input_bound, seed)?;
            emit(&report.to_csv(), out(&c.out))?;
            let law = input_law(&cfg.input_bound)?;
            finish(input_bound_checks(&report, &law, &sys))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("config error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Checks(names)) => {
            for n in names {
                eprintln!("check failed: {n}");
            }
            ExitCode::from(3)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
