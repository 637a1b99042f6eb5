//! Eve's optimal estimator and the distortion evaluators.
//!
//! Eve sees the encoded trajectory `Z` and knows the law of `X` and the
//! scheme, but not the key. Her posterior is supported on the preimages of
//! `Z` under every key, weighted by the prior density; her MMSE estimate is
//! the posterior mean and her distortion the posterior trace covariance.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::distribution::TrajectoryLaw;
use crate::error::{check_dim, Error, Result};
use crate::mirror::{KeyedEncoder, MirrorPlane, MirrorScheme};
use crate::numeric::{map_streams, Estimate};
use crate::shift_mirror::{EvolutionPoint, SMScheme, ScalarLaw, StandardNormal, TrajectoryCipher, ZGrid};
use crate::Path;

/// Relative distance under which two preimages count as the same point.
const MERGE_TOL: f64 = 1e-12;

/// One preimage of the received trajectory and its posterior weight.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub path: Path,
    pub weight: f64,
}

/// Eve's posterior: distinct preimages of `Z` with positive weights
/// summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct AmbiguitySet {
    candidates: Vec<Candidate>,
    horizon: usize,
}

impl AmbiguitySet {
    /// Normalizes `(path, log weight)` pairs. Non-finite log weights are
    /// dropped; nothing left means `Z` lies outside the model support.
    pub fn from_log_weights(entries: Vec<(Path, f64)>) -> Result<Self> {
        let horizon = entries.first().map_or(0, |(p, _)| p.len());
        let kept: Vec<(Path, f64)> = entries.into_iter().filter(|(_, lw)| lw.is_finite()).collect();
        let max = kept
            .iter()
            .map(|(_, lw)| *lw)
            .fold(f64::NEG_INFINITY, f64::max);
        if kept.is_empty() {
            return Err(Error::ImpossibleObservation);
        }
        let raw: Vec<f64> = kept.iter().map(|(_, lw)| (lw - max).exp()).collect();
        let total: f64 = raw.iter().sum();
        Ok(Self {
            candidates: kept
                .into_iter()
                .zip(raw)
                .map(|((path, _), w)| Candidate {
                    path,
                    weight: w / total,
                })
                .collect(),
            horizon,
        })
    }

    pub fn candidates(&self) -> &[Candidate] {
        &self.candidates
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    /// `D(t, Z)` for every `t`.
    pub fn per_time(&self) -> Vec<f64> {
        (0..self.horizon).map(|t| conditional_distortion(self, t)).collect()
    }

    /// `(1/T) sum_t D(t, Z)`.
    pub fn mean_distortion(&self) -> f64 {
        if self.horizon == 0 {
            return 0.0;
        }
        self.per_time().iter().sum::<f64>() / self.horizon as f64
    }
}

/// Variance of a two-point law taking `a` with probability `p_a`, else `b`.
pub fn bernoulli_var(a: f64, b: f64, p_a: f64) -> f64 {
    p_a * (1.0 - p_a) * (a - b).powi(2)
}

fn same_path(a: &[DVector<f64>], b: &[DVector<f64>]) -> bool {
    a.iter().zip(b).all(|(x, y)| {
        let scale = 1.0 + x.amax().max(y.amax());
        (x - y).amax() <= MERGE_TOL * scale
    })
}

/// Posterior over the key-indexed preimages `alpha^{-(K)}(Z)`, weight
/// proportional to `f_X` of the preimage. Coinciding preimages are merged
/// and their weights added; zero-density preimages are dropped.
pub fn posterior(law: &dyn TrajectoryLaw, encoder: &dyn KeyedEncoder, z: &[DVector<f64>]) -> Result<AmbiguitySet> {
    let mut distinct: Vec<(Path, u64)> = Vec::new();
    for key in 0..encoder.key_count() {
        let x = encoder.decode(z, key)?;
        match distinct.iter_mut().find(|(p, _)| same_path(p, &x)) {
            Some(entry) => entry.1 += 1,
            None => distinct.push((x, 1)),
        }
    }
    AmbiguitySet::from_log_weights(
        distinct
            .into_iter()
            .map(|(p, m)| {
                let lw = (m as f64).ln() + law.log_density(&p);
                (p, lw)
            })
            .collect(),
    )
}

/// Candidates `Z` and `alpha^-(Z)` with weights `f(Z) / (f(Z) + f(alpha^-(Z)))`
/// and its complement.
pub fn posterior_1bit(law: &dyn TrajectoryLaw, z: &[DVector<f64>], planes: &[MirrorPlane]) -> Result<AmbiguitySet> {
    posterior(law, &MirrorScheme::one_bit(planes.to_vec())?, z)
}

pub fn posterior_kbit(law: &dyn TrajectoryLaw, z: &[DVector<f64>], scheme: &MirrorScheme) -> Result<AmbiguitySet> {
    posterior(law, scheme, z)
}

/// `sum_i p_i c_i[t]`.
pub fn mmse_estimate(amb: &AmbiguitySet, t: usize) -> DVector<f64> {
    let dim = amb.candidates[0].path[t].len();
    amb.candidates
        .iter()
        .fold(DVector::zeros(dim), |acc, c| acc + &c.path[t] * c.weight)
}

/// `tr R_{X_t|Z} = sum_i p_i |c_i[t] - E[X_t|Z]|^2`.
pub fn conditional_distortion(amb: &AmbiguitySet, t: usize) -> f64 {
    let m = mmse_estimate(amb, t);
    amb.candidates
        .iter()
        .map(|c| c.weight * (&c.path[t] - &m).norm_squared())
        .sum()
}

fn check_planes(law: &dyn TrajectoryLaw, planes: &[MirrorPlane]) -> Result<()> {
    check_dim("planes per trajectory", law.horizon(), planes.len())?;
    for p in planes {
        check_dim("plane ambient dimension", law.step_dim(), p.ambient_dim())?;
    }
    Ok(())
}

/// `D_E = (1/2T) sum_t E_X[ f(a^-(X)) / (f(X) + f(a^-(X))) |X_t - a_t^-(X_t)|^2 ]`.
pub fn avg_distortion_closed_1bit(law: &dyn TrajectoryLaw, planes: &[MirrorPlane]) -> Result<f64> {
    check_planes(law, planes)?;
    let horizon = law.horizon() as f64;
    let g = |x: &[DVector<f64>]| -> f64 {
        let mirrored: Path = x.iter().zip(planes).map(|(xt, p)| p.reflect_unchecked(xt)).collect();
        let lx = law.log_density(x);
        let lm = law.log_density(&mirrored);
        let share = if lm == f64::NEG_INFINITY {
            0.0
        } else {
            1.0 / (1.0 + (lx - lm).exp())
        };
        if share == 0.0 {
            return 0.0;
        }
        let spread: f64 = x.iter().zip(&mirrored).map(|(a, b)| (a - b).norm_squared()).sum();
        share * spread
    };
    Ok(law.expectation(&g)? / (2.0 * horizon))
}

/// `D_E = (1/4T) sum_t E|X_t - a_t(X_t)|^2`, valid when `f(x) = f(a^-(x))`.
pub fn avg_distortion_symmetric_1bit(law: &dyn TrajectoryLaw, planes: &[MirrorPlane]) -> Result<f64> {
    check_planes(law, planes)?;
    let g = |x: &[DVector<f64>]| -> f64 {
        x.iter()
            .zip(planes)
            .map(|(xt, p)| (xt - p.reflect_unchecked(xt)).norm_squared())
            .sum()
    };
    Ok(law.expectation(&g)? / (4.0 * law.horizon() as f64))
}

/// `D_E = (1/T) sum_t tr(S_t R_t S_t') + |b_t - S_t mu_t|^2`, valid for
/// laws symmetric under each reflection.
pub fn avg_distortion_mirrorplane_closed(
    means: &[DVector<f64>],
    covs: &[DMatrix<f64>],
    planes: &[MirrorPlane],
) -> Result<f64> {
    check_dim("covariances per trajectory", means.len(), covs.len())?;
    check_dim("planes per trajectory", means.len(), planes.len())?;
    if means.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for ((mu, r), p) in means.iter().zip(covs).zip(planes) {
        check_dim("plane ambient dimension", mu.len(), p.ambient_dim())?;
        if p.s().nrows() == 0 {
            continue;
        }
        total += (p.s() * r * p.s().transpose()).trace() + (p.b() - p.s() * mu).norm_squared();
    }
    Ok(total / means.len() as f64)
}

fn check_scheme(law: &dyn TrajectoryLaw, scheme: &MirrorScheme) -> Result<()> {
    check_dim("scheme horizon", law.horizon(), scheme.horizon())?;
    check_dim("scheme state dimension", law.step_dim(), scheme.state_dim())
}

fn preimage_log_densities(law: &dyn TrajectoryLaw, scheme: &MirrorScheme, x: &[DVector<f64>]) -> (Vec<Path>, Vec<f64>) {
    let pre: Vec<Path> = (0..scheme.key_count())
        .map(|key| x.iter().enumerate().map(|(t, xt)| scheme.alpha_inv(t, key, xt)).collect())
        .collect();
    let logs = pre.iter().map(|p| law.log_density(p)).collect();
    (pre, logs)
}

/// The k-bit closed form
/// `(1/(2^k T)) sum_t E_X[ sum_K f_K |R_t^K|^2 / ((sum_K f_K)^2 f(X)) ]`,
/// with `f_K = f(a^{-(K)}(X))` and
/// `R_t^K = sum_l f_l (a_t^{-(l)}(X_t) - a_t^{-(K)}(X_t))`.
///
/// The expectation over `X` stands in for one over `Z`; this is exact when
/// every `a^{(K)}` maps the support of `f_X` onto itself. See
/// [`avg_distortion_keyed`] for the general value.
pub fn avg_distortion_closed_kbit(law: &dyn TrajectoryLaw, scheme: &MirrorScheme) -> Result<f64> {
    check_scheme(law, scheme)?;
    let n_keys = scheme.key_count();
    let g = |x: &[DVector<f64>]| -> f64 {
        let (pre, logs) = preimage_log_densities(law, scheme, x);
        let lx = law.log_density(x);
        let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        // Scale-free weights: only ratios f_K / sum f and f_K / f(X) enter.
        let f: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
        let sum: f64 = f.iter().sum();
        let mut acc = 0.0;
        for t in 0..x.len() {
            for k in 0..n_keys as usize {
                if f[k] == 0.0 {
                    continue;
                }
                let r = pre
                    .iter()
                    .zip(&f)
                    .fold(DVector::zeros(x[t].len()), |acc, (p, fl)| acc + (&p[t] - &pre[k][t]) * (*fl / sum));
                acc += (logs[k] - lx).exp() * r.norm_squared();
            }
        }
        acc
    };
    Ok(law.expectation(&g)? / (n_keys as f64 * law.horizon() as f64))
}

/// `(1/(2^{3k} T)) sum_t E_X[ sum_K | sum_l (a_t^{-(K)}(X_t) - a_t^{-(l)}(X_t)) |^2 ]`,
/// valid when all preimages of a point have equal density.
pub fn avg_distortion_symmetric_kbit(law: &dyn TrajectoryLaw, scheme: &MirrorScheme) -> Result<f64> {
    check_scheme(law, scheme)?;
    let n_keys = scheme.key_count();
    let g = |x: &[DVector<f64>]| -> f64 {
        let mut acc = 0.0;
        for (t, xt) in x.iter().enumerate() {
            let pre: Vec<DVector<f64>> = (0..n_keys).map(|key| scheme.alpha_inv(t, key, xt)).collect();
            let total = pre.iter().fold(DVector::zeros(xt.len()), |a, p| a + p);
            for p in &pre {
                acc += (p * n_keys as f64 - &total).norm_squared();
            }
        }
        acc
    };
    Ok(law.expectation(&g)? / ((n_keys as f64).powi(3) * law.horizon() as f64))
}

/// `D_E` straight from its definition: the key is uniform, `Z = enc(X, K)`
/// and Eve's distortion is averaged over `X` and `K`,
/// `(1/2^k) sum_K E_X[(1/T) sum_t tr R_{X_t | Z = enc(X, K)}]`.
pub fn avg_distortion_keyed(law: &dyn TrajectoryLaw, encoder: &dyn KeyedEncoder) -> Result<f64> {
    let n_keys = encoder.key_count();
    let g = |x: &[DVector<f64>]| -> f64 {
        let mut acc = 0.0;
        for key in 0..n_keys {
            let d = encoder
                .encode(x, key)
                .and_then(|z| posterior(law, encoder, &z))
                .map(|amb| amb.mean_distortion());
            acc += d.unwrap_or(f64::NAN);
        }
        acc / n_keys as f64
    };
    let value = law.expectation(&g)?;
    if value.is_nan() {
        return Err(Error::Numerical("posterior failed inside the key-averaged expectation".into()));
    }
    Ok(value)
}

/// Monte-Carlo estimate of `D_E`: sample `X`, a uniform key, encode, and
/// average Eve's per-sample distortion. Sample `i` uses stream `i` of
/// `seed`.
pub fn avg_distortion_monte_carlo(
    law: &dyn TrajectoryLaw,
    encoder: &dyn KeyedEncoder,
    n: usize,
    seed: u64,
) -> Result<Estimate> {
    if n == 0 {
        return Err(Error::InvalidParameter("Monte Carlo needs at least one sample".into()));
    }
    let samples = map_streams(n, seed, |rng| {
        let x = law.sample(rng);
        let key = rng.random_range(0..encoder.key_count());
        let z = encoder.encode(&x, key)?;
        Ok(posterior(law, encoder, &z)?.mean_distortion())
    })?;
    Ok(Estimate::from_samples(&samples))
}

/// `Var(X | Z = z)` for a scalar shifting+mirroring scheme.
///
/// Outside the window the preimages are `z` and `-z` with `2^{k-1}` keys
/// each; inside they are the `2^k` distinct window shifts.
pub fn sm_conditional_variance(scheme: &SMScheme, law: &dyn ScalarLaw, z: f64) -> f64 {
    let th = scheme.theta;
    if z == th {
        return 0.0;
    }
    if z.abs() > th {
        let (la, lb) = (law.log_density(z), law.log_density(-z));
        if la == f64::NEG_INFINITY && lb == f64::NEG_INFINITY {
            return f64::NAN;
        }
        let p = 1.0 / (1.0 + (lb - la).exp());
        return bernoulli_var(z, -z, p);
    }
    let n = scheme.key_count();
    // SMScheme caps k at 8.
    let mut xs = [0.0; 256];
    let mut ls = [0.0; 256];
    let mut max = f64::NEG_INFINITY;
    for key in 0..n as usize {
        let x = scheme.decode_unchecked(z, key as u64);
        xs[key] = x;
        ls[key] = law.log_density(x);
        max = max.max(ls[key]);
    }
    if max == f64::NEG_INFINITY {
        return f64::NAN;
    }
    let (mut w, mut m1) = (0.0, 0.0);
    for key in 0..n as usize {
        let p = (ls[key] - max).exp();
        ls[key] = p;
        w += p;
        m1 += p * xs[key];
    }
    let mean = m1 / w;
    let mut var = 0.0;
    for key in 0..n as usize {
        var += ls[key] * (xs[key] - mean).powi(2);
    }
    var / w
}

/// Minimum of a scalar worst-case objective and the symbol attaining it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorstCase {
    pub value: f64,
    pub argmin: f64,
}

/// `min_z f(z)` over an ascending grid; ties go to the smallest `z`.
/// Symbols with no preimage in the support are skipped.
pub fn worst_case_over(grid: &ZGrid, f: impl Fn(f64) -> f64) -> Result<WorstCase> {
    let mut best: Option<WorstCase> = None;
    for &z in &grid.points {
        let v = f(z);
        if v.is_nan() {
            continue;
        }
        if best.is_none_or(|b| v < b.value) {
            best = Some(WorstCase { value: v, argmin: z });
        }
    }
    best.ok_or_else(|| Error::InvalidParameter("z grid has no admissible point".into()))
}

/// `D_W = min_z Var(X | Z = z)` for a scalar shifting+mirroring scheme.
pub fn worst_case_distortion(scheme: &SMScheme, law: &dyn ScalarLaw, grid: &ZGrid) -> Result<WorstCase> {
    worst_case_over(grid, |z| sm_conditional_variance(scheme, law, z))
}

/// Worst case of plain point mirroring `Z = +-X` (no window): the
/// preimages of `z` are `z` and `-z`.
pub fn point_mirror_worst_case(law: &dyn ScalarLaw, grid: &ZGrid) -> Result<WorstCase> {
    worst_case_over(grid, |z| {
        let p = 1.0 / (1.0 + (law.log_density(-z) - law.log_density(z)).exp());
        bernoulli_var(z, -z, p)
    })
}

/// Per-`t` minimum over the initial symbol of Eve's distortion against the
/// analytic bound, for a standard-normal standardized initial state.
pub fn trajectory_distortion_evolution(cipher: &TrajectoryCipher, t_max: usize) -> Result<Vec<EvolutionPoint>> {
    cipher.distortion_evolution(t_max, &StandardNormal)
}

/// `(D_E_max, D_W_max) = ((1/T) sum_t tr R_t, min_t tr R_t)`.
pub fn no_observation_baselines(covs: &[DMatrix<f64>]) -> Result<(f64, f64)> {
    if covs.is_empty() {
        return Err(Error::InvalidParameter("no covariances".into()));
    }
    let traces: Vec<f64> = covs.iter().map(|c| c.trace()).collect();
    let de = traces.iter().sum::<f64>() / traces.len() as f64;
    let dw = traces.iter().copied().fold(f64::INFINITY, f64::min);
    Ok((de, dw))
}

/// Distortion figures of one experiment with their no-observation ceilings.
#[derive(Debug, Clone, PartialEq)]
pub struct DistortionReport {
    pub per_time: Vec<f64>,
    pub d_e: f64,
    pub d_w: f64,
    pub d_e_max: f64,
    pub d_w_max: f64,
}

impl DistortionReport {
    /// `D_E <= D_E_max (1 + tol)` and `D_W <= D_W_max (1 + tol)`.
    pub fn within_upper_bounds(&self, tol: f64) -> bool {
        within_bound(self.d_e, self.d_e_max, tol) && within_bound(self.d_w, self.d_w_max, tol)
    }

    /// Rows `t,D_t`, then the summary header and row
    /// `D_E,D_W,D_E_max,D_W_max`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,D_t\n");
        for (t, d) in self.per_time.iter().enumerate() {
            let _ = writeln!(out, "{},{d}", t + 1);
        }
        let _ = writeln!(out, "D_E,D_W,D_E_max,D_W_max");
        let _ = writeln!(out, "{},{},{},{}", self.d_e, self.d_w, self.d_e_max, self.d_w_max);
        out
    }
}

/// `value <= ceiling (1 + tol)`, with a small absolute slack at zero.
pub fn within_bound(value: f64, ceiling: f64, tol: f64) -> bool {
    value <= ceiling * (1.0 + tol) + tol * f64::EPSILON.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distribution::{GaussianDist, RandomWalkDist};
    use nalgebra::{dmatrix, dvector};

    fn scalar_path(v: f64) -> Path {
        vec![dvector![v]]
    }

    #[test]
    fn bernoulli_examples() {
        assert_eq!(bernoulli_var(1.0, -1.0, 0.5), 1.0);
        assert_eq!(bernoulli_var(3.0, 3.0, 0.3), 0.0);
        assert!((bernoulli_var(0.0, 2.0, 0.25) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn one_bit_posterior() {
        let g = GaussianDist::new(dvector![0.0], DMatrix::identity(1, 1)).unwrap();
        let amb = posterior_1bit(&g, &scalar_path(1.0), &[MirrorPlane::point(dvector![0.0])]).unwrap();
        assert_eq!(amb.len(), 2);
        for c in amb.candidates() {
            assert!((c.weight - 0.5).abs() < 1e-15);
        }
        assert!(mmse_estimate(&amb, 0)[0].abs() < 1e-15);
        assert!((conditional_distortion(&amb, 0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn certain_when_mirror_image_has_no_mass() {
        let w = RandomWalkDist::with_steps(1, 1, vec![0]).unwrap();
        // Mirror about 1 maps 1 to itself and 0 to 2, outside the support.
        let amb = posterior_1bit(&w, &scalar_path(0.0), &[MirrorPlane::point(dvector![1.0])]).unwrap();
        assert_eq!(amb.len(), 1);
        assert_eq!(amb.candidates()[0].weight, 1.0);
        assert_eq!(conditional_distortion(&amb, 0), 0.0);
        let far = posterior_1bit(&w, &scalar_path(5.0), &[MirrorPlane::point(dvector![1.0])]);
        assert!(matches!(far, Err(Error::ImpossibleObservation)));
    }

    #[test]
    fn k_bit_posterior_merges_and_weights() {
        let g = GaussianDist::new(dvector![0.0, 0.0], DMatrix::identity(2, 2)).unwrap();
        let planes = vec![
            MirrorPlane::new(dmatrix![1.0, 0.0], dvector![0.0]).unwrap(),
            MirrorPlane::new(dmatrix![0.0, 1.0], dvector![0.0]).unwrap(),
        ];
        let scheme = MirrorScheme::time_invariant(planes, 1).unwrap();
        let amb = posterior_kbit(&g, &[dvector![1.0, 2.0]], &scheme).unwrap();
        assert_eq!(amb.len(), 4);
        for c in amb.candidates() {
            assert!((c.weight - 0.25).abs() < 1e-15);
        }
        // On an axis two preimages coincide.
        let amb = posterior_kbit(&g, &[dvector![0.0, 2.0]], &scheme).unwrap();
        assert_eq!(amb.len(), 2);
    }

    #[test]
    fn shift_mirror_outside_window_merges_keys() {
        let law = GaussianDist::new(dvector![0.0], DMatrix::identity(1, 1)).unwrap();
        let s = SMScheme::new(2.0, 3).unwrap();
        let amb = posterior(&law, &s, &scalar_path(2.5)).unwrap();
        assert_eq!(amb.len(), 2);
        assert!((amb.candidates()[0].weight - 0.5).abs() < 1e-15);
        assert!((conditional_distortion(&amb, 0) - 6.25).abs() < 1e-12);
        assert!((sm_conditional_variance(&s, &StandardNormal, 2.5) - 6.25).abs() < 1e-12);
    }

    #[test]
    fn fast_variance_matches_generic_posterior() {
        let law = GaussianDist::new(dvector![0.0], DMatrix::identity(1, 1)).unwrap();
        for k in 1..=4 {
            let s = SMScheme::new(1.3 * k as f64, k).unwrap();
            for z in [-1.7, -0.2, 0.0, 0.9, 3.1] {
                let amb = posterior(&law, &s, &scalar_path(z)).unwrap();
                let slow = conditional_distortion(&amb, 0);
                let fast = sm_conditional_variance(&s, &StandardNormal, z);
                assert!((slow - fast).abs() < 1e-12, "k={k} z={z}: {slow} vs {fast}");
            }
        }
    }

    #[test]
    fn mmse_is_weighted_mean() {
        let amb = AmbiguitySet::from_log_weights(vec![
            (scalar_path(0.0), 0.25f64.ln()),
            (scalar_path(2.0), 0.75f64.ln()),
        ])
        .unwrap();
        assert!((mmse_estimate(&amb, 0)[0] - 1.5).abs() < 1e-15);
        assert!((conditional_distortion(&amb, 0) - bernoulli_var(0.0, 2.0, 0.25)).abs() < 1e-15);
        let single = AmbiguitySet::from_log_weights(vec![(scalar_path(4.0), 0.0)]).unwrap();
        assert_eq!(mmse_estimate(&single, 0)[0], 4.0);
        assert_eq!(conditional_distortion(&single, 0), 0.0);
    }

    #[test]
    fn one_bit_closed_forms() {
        let g = GaussianDist::new(dvector![0.0], DMatrix::identity(1, 1)).unwrap();
        let point = [MirrorPlane::point(dvector![0.0])];
        assert!((avg_distortion_closed_1bit(&g, &point).unwrap() - 1.0).abs() < 1e-12);
        assert!((avg_distortion_symmetric_1bit(&g, &point).unwrap() - 1.0).abs() < 1e-12);
        let w = RandomWalkDist::symmetric(1, 1).unwrap();
        assert!((avg_distortion_closed_1bit(&w, &point).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(avg_distortion_closed_1bit(&g, &[MirrorPlane::identity(1)]).unwrap(), 0.0);
    }

    #[test]
    fn mirrorplane_trace_formula() {
        let mu = dvector![1.0, -1.0];
        let r = dmatrix![2.0, 0.0; 0.0, 3.0];
        let full = avg_distortion_mirrorplane_closed(&[mu.clone()], &[r.clone()], &[MirrorPlane::point(mu.clone())]).unwrap();
        assert!((full - 5.0).abs() < 1e-15);
        let first = MirrorPlane::new(dmatrix![1.0, 0.0], dvector![1.0]).unwrap();
        assert!((avg_distortion_mirrorplane_closed(&[mu.clone()], &[r.clone()], &[first]).unwrap() - 2.0).abs() < 1e-15);
        let offset = MirrorPlane::new(dmatrix![1.0, 0.0], dvector![1.5]).unwrap();
        assert!((avg_distortion_mirrorplane_closed(&[mu], &[r], &[offset]).unwrap() - 2.25).abs() < 1e-15);
    }

    #[test]
    fn k_bit_forms_agree_on_gaussian() {
        let g = GaussianDist::new(dvector![0.0, 0.0], DMatrix::from_diagonal(&dvector![1.5, 0.5])).unwrap();
        let planes = vec![
            MirrorPlane::new(dmatrix![1.0, 0.0], dvector![0.0]).unwrap(),
            MirrorPlane::new(dmatrix![0.0, 1.0], dvector![0.0]).unwrap(),
        ];
        let scheme = MirrorScheme::time_invariant(planes.clone(), 1).unwrap();
        let closed = avg_distortion_closed_kbit(&g, &scheme).unwrap();
        let sym = avg_distortion_symmetric_kbit(&g, &scheme).unwrap();
        assert!((closed - 2.0).abs() < 1e-10, "{closed}");
        assert!((sym - 2.0).abs() < 1e-10, "{sym}");
        let one = MirrorScheme::one_bit(vec![planes[0].clone()]).unwrap();
        let a = avg_distortion_closed_kbit(&g, &one).unwrap();
        let b = avg_distortion_closed_1bit(&g, &planes[..1]).unwrap();
        assert!((a - b).abs() < 1e-12);
        let trivial = MirrorScheme::time_invariant(vec![MirrorPlane::identity(2); 2], 1).unwrap();
        assert!(avg_distortion_closed_kbit(&g, &trivial).unwrap().abs() < 1e-15);
    }

    #[test]
    fn keyed_form_matches_closed_form_on_walk() {
        let w = RandomWalkDist::symmetric(2, 3).unwrap();
        let planes = vec![MirrorPlane::point(dvector![0.0]); 3];
        let scheme = MirrorScheme::one_bit(planes.clone()).unwrap();
        let keyed = avg_distortion_keyed(&w, &scheme).unwrap();
        let closed = avg_distortion_closed_1bit(&w, &planes).unwrap();
        assert!((keyed - closed).abs() < 1e-12);
    }

    #[test]
    fn monte_carlo_is_reproducible() {
        let g = GaussianDist::new(dvector![0.0], DMatrix::identity(1, 1)).unwrap();
        let s = MirrorScheme::one_bit(vec![MirrorPlane::point(dvector![0.0])]).unwrap();
        let a = avg_distortion_monte_carlo(&g, &s, 1000, 9).unwrap();
        let b = avg_distortion_monte_carlo(&g, &s, 1000, 9).unwrap();
        assert_eq!(a, b);
        let one = avg_distortion_monte_carlo(&g, &s, 1, 9).unwrap();
        assert_eq!(one.n, 1);
        assert!(avg_distortion_monte_carlo(&g, &s, 0, 9).is_err());
    }

    #[test]
    fn worst_case_one_bit() {
        let s = SMScheme::new(1.76, 1).unwrap();
        let wc = worst_case_distortion(&s, &StandardNormal, &ZGrid::standard(&s)).unwrap();
        // At z = -theta the candidates are -theta and 0.
        let f = |x: f64| (-0.5 * x * x).exp();
        let p = f(1.76) / (f(0.0) + f(1.76));
        let hand = bernoulli_var(-1.76, 0.0, p);
        assert!((wc.value - hand).abs() < 1e-6, "{} vs {hand}", wc.value);
        assert!((wc.value - 0.4477).abs() < 2e-4);
    }

    #[test]
    fn point_mirror_worst_case_shrinks_with_grid() {
        let coarse = ZGrid::from_points(vec![-1.0, 0.5, 2.0]).unwrap();
        let wc = point_mirror_worst_case(&StandardNormal, &coarse).unwrap();
        assert_eq!(wc.argmin, 0.5);
        assert!((wc.value - 0.25).abs() < 1e-15);
        let fine = ZGrid::from_points(vec![-1e-3, 1e-3, 1.0]).unwrap();
        let wc = point_mirror_worst_case(&StandardNormal, &fine).unwrap();
        assert_eq!(wc.argmin, -1e-3);
    }

    #[test]
    fn baselines() {
        let unit = vec![DMatrix::identity(1, 1); 4];
        assert_eq!(no_observation_baselines(&unit).unwrap(), (1.0, 1.0));
        let two = vec![dmatrix![2.0], dmatrix![3.0]];
        assert_eq!(no_observation_baselines(&two).unwrap(), (2.5, 2.0));
    }

    #[test]
    fn report_csv() {
        let r = DistortionReport {
            per_time: vec![1.0, 0.5],
            d_e: 0.75,
            d_w: 0.5,
            d_e_max: 1.0,
            d_w_max: 1.0,
        };
        assert_eq!(r.to_csv(), "t,D_t\n1,1\n2,0.5\nD_E,D_W,D_E_max,D_W_max\n0.75,0.5,1,1\n");
        assert!(r.within_upper_bounds(1e-9));
    }
}
