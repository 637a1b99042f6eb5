//! From input distortion to state distortion.
//!
//! With `X_0 = 0` and no noise, `X_t = sum_{i=1}^t A^{t-i} B U_{i-1}`, so
//! `tr R_{X_t|Z} = sum_i tr(A^{t-i} B R_{U_{i-1}|Z} B' A^{t-i}') + 2 tr Phi_t`
//! with the cross term
//! `Phi_t = sum_{i<j<=t} B'(A^{t-j})' A^{t-i} B R_{U_{i-1} U_{j-1}|Z}`.
//! Whenever `E_Z tr Phi_t >= 0` the state distortions are at least
//! `lambda_min(B'B)` times the input distortions.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::adversary::{conditional_distortion, posterior, AmbiguitySet};
use crate::distribution::TrajectoryLaw;
use crate::error::{check_dim, Error, Result};
use crate::mirror::KeyedEncoder;
use crate::numeric::{lambda_min, map_streams, matrix_power, Estimate};
use crate::system::LinearSystem;
use crate::Path;

/// `lambda_min(B'B) * d_u`.
pub fn state_bound(d_u: f64, b: &DMatrix<f64>) -> Result<f64> {
    if !(d_u >= 0.0) {
        return Err(Error::InvalidParameter(format!("input distortion must be nonnegative, got {d_u}")));
    }
    Ok(lambda_min(&(b.transpose() * b)).max(0.0) * d_u)
}

/// `X_t = sum_{i=1}^t A^{t-i} B U_{i-1}` for `t = 1..=T`.
pub fn unroll_states(sys: &LinearSystem, inputs: &[DVector<f64>]) -> Path {
    let mut x = DVector::zeros(sys.state_dim());
    inputs
        .iter()
        .map(|u| {
            x = sys.a() * &x + sys.b() * u;
            x.clone()
        })
        .collect()
}

/// `M[t][i][j] = B'(A^{t-j})' A^{t-i} B` for `1 <= i < j <= t <= T`, indexed
/// from zero.
fn cross_maps(sys: &LinearSystem, horizon: usize) -> Vec<DMatrix<f64>> {
    let powers: Vec<DMatrix<f64>> = (0..horizon).map(|p| matrix_power(sys.a(), p) * sys.b()).collect();
    let mut out = Vec::with_capacity(horizon * horizon);
    for a in &powers {
        for b in &powers {
            out.push(b.transpose() * a);
        }
    }
    out
}

/// `tr Phi_t(Z)` for `t = 1..=T` given Eve's posterior over the inputs.
fn phi_traces(amb: &AmbiguitySet, maps: &[DMatrix<f64>], horizon: usize) -> Vec<f64> {
    let means: Vec<DVector<f64>> = (0..horizon).map(|s| crate::adversary::mmse_estimate(amb, s)).collect();
    (1..=horizon)
        .map(|t| {
            let mut acc = 0.0;
            for c in amb.candidates() {
                let dev: Vec<DVector<f64>> = (0..t).map(|s| &c.path[s] - &means[s]).collect();
                for i in 1..t {
                    for j in i + 1..=t {
                        let m = &maps[(t - i) * horizon + (t - j)];
                        acc += c.weight * dev[j - 1].dot(&(m * &dev[i - 1]));
                    }
                }
            }
            acc
        })
        .collect()
}

fn check_setup(sys: &LinearSystem, input_law: &dyn TrajectoryLaw, n: usize) -> Result<()> {
    if !sys.is_noiseless() {
        return Err(Error::InvalidParameter("the input-to-state bound assumes a noiseless plant".into()));
    }
    check_dim("input law step dimension", sys.input_dim(), input_law.step_dim())?;
    if n < 2 {
        return Err(Error::InvalidParameter("need at least two samples for a standard error".into()));
    }
    Ok(())
}

/// Per-sample quantities for one draw of `(U, K)`.
struct Draw {
    input_per_t: Vec<f64>,
    state_per_t: Vec<f64>,
    phi: Vec<f64>,
}

fn draw(
    sys: &LinearSystem,
    input_law: &dyn TrajectoryLaw,
    encoder: &dyn KeyedEncoder,
    maps: &[DMatrix<f64>],
    rng: &mut dyn rand::RngCore,
) -> Result<Draw> {
    let horizon = input_law.horizon();
    let u = input_law.sample(rng);
    let key = rng.random_range(0..encoder.key_count());
    let z = encoder.encode(&u, key)?;
    let amb = posterior(input_law, encoder, &z)?;
    let input_per_t = (0..horizon).map(|t| conditional_distortion(&amb, t)).collect();
    let states = AmbiguitySet::from_log_weights(
        amb.candidates()
            .iter()
            .map(|c| (unroll_states(sys, &c.path), c.weight.ln()))
            .collect(),
    )?;
    let state_per_t = (0..horizon).map(|t| conditional_distortion(&states, t)).collect();
    Ok(Draw {
        input_per_t,
        state_per_t,
        phi: phi_traces(&amb, maps, horizon),
    })
}

fn phi_estimates(draws: &[Draw], horizon: usize) -> Vec<Estimate> {
    (0..horizon)
        .map(|t| Estimate::from_samples(&draws.iter().map(|d| d.phi[t]).collect::<Vec<_>>()))
        .collect()
}

fn holds(phi: &[Estimate]) -> bool {
    phi.iter().all(|e| e.mean >= -3.0 * e.std_error)
}

/// Monte-Carlo estimate of `E_Z tr Phi_t` for each `t`, and the verdict
/// that every estimate is at least `-3` standard errors.
pub fn phi_condition(
    sys: &LinearSystem,
    input_law: &dyn TrajectoryLaw,
    encoder: &dyn KeyedEncoder,
    n: usize,
    seed: u64,
) -> Result<(Vec<Estimate>, bool)> {
    check_setup(sys, input_law, n)?;
    let horizon = input_law.horizon();
    let maps = cross_maps(sys, horizon);
    let draws = map_streams(n, seed, |rng| draw(sys, input_law, encoder, &maps, rng))?;
    let phi = phi_estimates(&draws, horizon);
    let ok = holds(&phi);
    Ok((phi, ok))
}

/// Measured input- and state-side distortions with the bound verdicts.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub lambda_min: f64,
    pub phi: Vec<Estimate>,
    pub condition_holds: bool,
    pub d_e_u: Estimate,
    pub d_e_x: Estimate,
    /// `(1/T) sum_t (tr R_{X_t|Z} - lambda_min tr R_{U_{t-1}|Z})` per sample.
    pub d_e_gap: Estimate,
    pub d_w_u: f64,
    pub d_w_x: f64,
    /// `min_t (tr R_{X_t|Z} - lambda_min tr R_{U_{t-1}|Z})` per sample.
    pub d_w_gap: Estimate,
    /// `D_E^X >= lambda_min D_E^U - 3 sigma` (paired standard error).
    pub d_e_bound_holds: bool,
    /// `D_W^X >= lambda_min D_W^U - 3 sigma` (paired standard error).
    pub d_w_bound_holds: bool,
}

impl BoundReport {
    /// Both bounds hold and the condition they rest on was met.
    pub fn certified(&self) -> bool {
        self.condition_holds && self.d_e_bound_holds && self.d_w_bound_holds
    }

    /// Rows `t,phi_estimate,std_err`, then one verdict line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,phi_estimate,std_err\n");
        for (t, e) in self.phi.iter().enumerate() {
            let _ = writeln!(out, "{},{},{}", t + 1, e.mean, e.std_error);
        }
        let verdict = |b: bool| if b { "holds" } else { "fails" };
        let _ = writeln!(
            out,
            "verdict: condition {}; D_E_X={} >= {}*D_E_U={} - {} {}; D_W_X={} >= {}*D_W_U={} - {} {}",
            verdict(self.condition_holds),
            self.d_e_x.mean,
            self.lambda_min,
            self.d_e_u.mean,
            3.0 * self.d_e_gap.std_error,
            verdict(self.d_e_bound_holds),
            self.d_w_x,
            self.lambda_min,
            self.d_w_u,
            3.0 * self.d_w_gap.std_error,
            verdict(self.d_w_bound_holds),
        );
        out
    }
}

/// Measures `D_E` and `D_W` on the input side and, through the unrolled
/// states, on the state side, and checks them against [`state_bound`].
/// The bound verdicts are only meaningful when `condition_holds`.
pub fn verify_bound_empirically(
    sys: &LinearSystem,
    input_law: &dyn TrajectoryLaw,
    encoder: &dyn KeyedEncoder,
    n: usize,
    seed: u64,
) -> Result<BoundReport> {
    check_setup(sys, input_law, n)?;
    let horizon = input_law.horizon();
    let maps = cross_maps(sys, horizon);
    let lam = lambda_min(&(sys.b().transpose() * sys.b())).max(0.0);
    let draws = map_streams(n, seed, |rng| draw(sys, input_law, encoder, &maps, rng))?;
    let phi = phi_estimates(&draws, horizon);
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let min = |v: &[f64]| v.iter().copied().fold(f64::INFINITY, f64::min);
    let collect = |f: &dyn Fn(&Draw) -> f64| draws.iter().map(f).collect::<Vec<f64>>();
    let d_e_u = Estimate::from_samples(&collect(&|d| mean(&d.input_per_t)));
    let d_e_x = Estimate::from_samples(&collect(&|d| mean(&d.state_per_t)));
    let d_e_gap = Estimate::from_samples(&collect(&|d| {
        mean(&d.state_per_t) - lam * mean(&d.input_per_t)
    }));
    let d_w_gap = Estimate::from_samples(&collect(&|d| {
        min(&d
            .state_per_t
            .iter()
            .zip(&d.input_per_t)
            .map(|(x, u)| x - lam * u)
            .collect::<Vec<_>>())
    }));
    let d_w_u = draws.iter().map(|d| min(&d.input_per_t)).fold(f64::INFINITY, f64::min);
    let d_w_x = draws.iter().map(|d| min(&d.state_per_t)).fold(f64::INFINITY, f64::min);
    Ok(BoundReport {
        lambda_min: lam,
        condition_holds: holds(&phi),
        phi,
        d_e_bound_holds: d_e_x.mean >= lam * d_e_u.mean - 3.0 * d_e_gap.std_error,
        d_w_bound_holds: d_w_x >= lam * d_w_u - 3.0 * d_w_gap.std_error,
        d_e_u,
        d_e_x,
        d_e_gap,
        d_w_u,
        d_w_x,
        d_w_gap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distribution::GaussianDist;
    use crate::mirror::{MirrorPlane, MirrorScheme};
    use nalgebra::{dmatrix, dvector};

    #[test]
    fn state_bound_examples() {
        assert_eq!(state_bound(1.5, &DMatrix::identity(2, 2)).unwrap(), 1.5);
        assert!((state_bound(1.5, &(DMatrix::identity(2, 2) * 2.0)).unwrap() - 6.0).abs() < 1e-12);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let tall = dmatrix![s, 0.0; s, 0.0; 0.0, 1.0];
        assert!((state_bound(2.0, &tall).unwrap() - 2.0).abs() < 1e-12);
        assert!(state_bound(-1.0, &tall).is_err());
    }

    #[test]
    fn unrolled_states_match_simulation() {
        let sys = LinearSystem::noiseless(dmatrix![0.5, 1.0; 0.0, 0.8], dmatrix![1.0; 2.0]).unwrap();
        let u = vec![dvector![1.0], dvector![-0.5], dvector![2.0]];
        let x = unroll_states(&sys, &u);
        let sim = sys.simulate(&dvector![0.0, 0.0], &u, None).unwrap();
        for t in 0..3 {
            assert!((&x[t] - &sim.states[t + 1]).amax() < 1e-12);
        }
    }

    fn iid_scalar_inputs(horizon: usize) -> (GaussianDist, MirrorScheme) {
        let law = GaussianDist::trajectory(DVector::zeros(horizon), DMatrix::identity(horizon, horizon), 1).unwrap();
        let scheme = MirrorScheme::one_bit(vec![MirrorPlane::point(dvector![0.0]); horizon]).unwrap();
        (law, scheme)
    }

    #[test]
    fn single_step_has_no_cross_terms() {
        let sys = LinearSystem::noiseless(dmatrix![1.0], dmatrix![1.0]).unwrap();
        let (law, scheme) = iid_scalar_inputs(1);
        let (phi, ok) = phi_condition(&sys, &law, &scheme, 100, 1).unwrap();
        assert_eq!(phi.len(), 1);
        assert_eq!(phi[0].mean, 0.0);
        assert!(ok);
    }

    #[test]
    fn uncorrelated_inputs_average_out() {
        let sys = LinearSystem::noiseless(dmatrix![1.0], dmatrix![1.0]).unwrap();
        let (law, scheme) = iid_scalar_inputs(3);
        let (phi, ok) = phi_condition(&sys, &law, &scheme, 20_000, 2).unwrap();
        for e in &phi {
            assert!(e.mean.abs() < 4.0 * e.std_error.max(1e-12), "{e:?}");
        }
        assert!(ok);
    }

    #[test]
    fn scalar_integrator_bound() {
        let sys = LinearSystem::noiseless(dmatrix![1.0], dmatrix![1.0]).unwrap();
        let (law, scheme) = iid_scalar_inputs(3);
        let r = verify_bound_empirically(&sys, &law, &scheme, 20_000, 3).unwrap();
        assert!((r.d_e_u.mean - 1.0).abs() < 4.0 * r.d_e_u.std_error);
        assert!(r.certified(), "{r:?}");
        assert!(r.to_csv().starts_with("t,phi_estimate,std_err\n1,"));
    }

    #[test]
    fn zero_input_map_is_trivial() {
        let sys = LinearSystem::noiseless(dmatrix![0.5], dmatrix![0.0]).unwrap();
        let (law, scheme) = iid_scalar_inputs(2);
        let r = verify_bound_empirically(&sys, &law, &scheme, 200, 4).unwrap();
        assert_eq!(r.lambda_min, 0.0);
        assert_eq!(r.d_e_x.mean, 0.0);
        assert!(r.certified());
    }

    #[test]
    fn isometric_inputs_are_tight() {
        let sys = LinearSystem::noiseless(DMatrix::zeros(3, 3), dmatrix![1.0, 0.0; 0.0, 0.0; 0.0, 1.0]).unwrap();
        let law = GaussianDist::trajectory(DVector::zeros(4), DMatrix::from_diagonal(&dvector![1.0, 2.0, 0.5, 3.0]), 2)
            .unwrap();
        let scheme = MirrorScheme::one_bit(vec![MirrorPlane::point(dvector![0.0, 0.0]); 2]).unwrap();
        let r = verify_bound_empirically(&sys, &law, &scheme, 500, 5).unwrap();
        assert!((r.d_e_x.mean - r.d_e_u.mean).abs() < 1e-12);
    }

    #[test]
    fn rejects_noisy_plant() {
        let sys = LinearSystem::new(dmatrix![1.0], dmatrix![1.0], dmatrix![0.1]).unwrap();
        let (law, scheme) = iid_scalar_inputs(2);
        assert!(phi_condition(&sys, &law, &scheme, 10, 1).is_err());
        let quiet = LinearSystem::noiseless(dmatrix![1.0], dmatrix![1.0]).unwrap();
        assert!(phi_condition(&quiet, &law, &scheme, 1, 1).is_err());
    }
}
