//! Shifting+mirroring encoders for worst-case distortion.
//!
//! Outside the public window `[-theta, theta)` a scalar is either kept or
//! negated, depending on the top key bit. Inside, the window is cut into
//! `2^k` equal sub-windows and the point jumps `K` of them cyclically.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adversary::{worst_case_distortion, WorstCase};
use crate::error::{check_dim, Error, Result};
use crate::mirror::{Key, KeyedEncoder};
use crate::numeric::matrix_power;
use crate::system::LinearSystem;
use crate::Path;

/// Constant of the trajectory bound `D(t) >= c tr(|L|^{2t} V'Sigma V)`.
pub const CIPHER_CONSTANT: f64 = 0.9998;

/// `r mod [a, b)`: the unique `r - i (b - a)` in `[a, b)` with `i` integer.
pub fn interval_mod(r: f64, a: f64, b: f64) -> Result<f64> {
    if !(a < b) {
        return Err(Error::InvalidParameter(format!("interval [{a}, {b}) is empty")));
    }
    Ok(wrap(r, a, b))
}

fn wrap(r: f64, a: f64, b: f64) -> f64 {
    let w = b - a;
    let v = r - ((r - a) / w).floor() * w;
    // Rounding can land exactly on b (or a hair below a).
    if v >= b || v < a {
        a
    } else {
        v
    }
}

/// Scalar shifting+mirroring scheme with window half-width `theta` and
/// `k` key bits.
///
/// The point `x = theta` is a fixed point of every key.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SMScheme {
    pub theta: f64,
    pub k: u32,
}

impl SMScheme {
    pub fn new(theta: f64, k: u32) -> Result<Self> {
        if !(theta > 0.0 && theta.is_finite()) {
            return Err(Error::InvalidParameter(format!("theta must be positive, got {theta}")));
        }
        if !(1..=8).contains(&k) {
            return Err(Error::InvalidParameter(format!("k must lie in 1..=8, got {k}")));
        }
        Ok(Self { theta, k })
    }

    pub fn key_count(&self) -> u64 {
        1 << self.k
    }

    /// Width `2 theta / 2^k` of one sub-window.
    pub fn shift(&self) -> f64 {
        2.0 * self.theta / self.key_count() as f64
    }

    fn mirrors(&self, key: u64) -> bool {
        key >= self.key_count() / 2
    }

    pub fn encode(&self, x: f64, key: u64) -> Result<f64> {
        Key::new(key, self.k)?;
        Ok(self.encode_unchecked(x, key))
    }

    pub fn decode(&self, z: f64, key: u64) -> Result<f64> {
        Key::new(key, self.k)?;
        Ok(self.decode_unchecked(z, key))
    }

    pub(crate) fn encode_unchecked(&self, x: f64, key: u64) -> f64 {
        let th = self.theta;
        if x == th {
            x
        } else if x.abs() > th {
            if self.mirrors(key) {
                -x
            } else {
                x
            }
        } else {
            wrap(x + key as f64 * self.shift(), -th, th)
        }
    }

    pub(crate) fn decode_unchecked(&self, z: f64, key: u64) -> f64 {
        let th = self.theta;
        if z == th {
            z
        } else if z.abs() > th {
            if self.mirrors(key) {
                -z
            } else {
                z
            }
        } else {
            wrap(z - key as f64 * self.shift(), -th, th)
        }
    }

    /// Distinct preimages of `z` over all keys, each with its key count.
    pub fn preimages(&self, z: f64) -> Vec<(f64, u64)> {
        let th = self.theta;
        let n = self.key_count();
        if z == th {
            vec![(z, n)]
        } else if z.abs() > th {
            vec![(z, n / 2), (-z, n / 2)]
        } else {
            let mut out: Vec<(f64, u64)> = Vec::with_capacity(n as usize);
            for key in 0..n {
                let x = self.decode_unchecked(z, key);
                match out.iter_mut().find(|(y, _)| *y == x) {
                    Some(entry) => entry.1 += 1,
                    None => out.push((x, 1)),
                }
            }
            out
        }
    }

    /// Edges of the window and of every sub-window.
    pub fn boundaries(&self) -> Vec<f64> {
        (0..=self.key_count())
            .map(|j| -self.theta + j as f64 * self.shift())
            .collect()
    }
}

impl KeyedEncoder for SMScheme {
    fn key_count(&self) -> u64 {
        SMScheme::key_count(self)
    }

    fn encode(&self, path: &[DVector<f64>], key: u64) -> Result<Path> {
        Key::new(key, self.k)?;
        path.iter()
            .map(|x| {
                check_dim("scalar symbol", 1, x.len())?;
                Ok(DVector::from_element(1, self.encode_unchecked(x[0], key)))
            })
            .collect()
    }

    fn decode(&self, path: &[DVector<f64>], key: u64) -> Result<Path> {
        Key::new(key, self.k)?;
        path.iter()
            .map(|z| {
                check_dim("scalar symbol", 1, z.len())?;
                Ok(DVector::from_element(1, self.decode_unchecked(z[0], key)))
            })
            .collect()
    }
}

/// A scalar source law, through its log density (normalization optional).
pub trait ScalarLaw: Sync {
    fn log_density(&self, x: f64) -> f64;
}

/// `N(0, 1)`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StandardNormal;

impl ScalarLaw for StandardNormal {
    fn log_density(&self, x: f64) -> f64 {
        -0.5 * x * x - 0.5 * (2.0 * std::f64::consts::PI).ln()
    }
}

impl<F: Fn(f64) -> f64 + Sync> ScalarLaw for F {
    fn log_density(&self, x: f64) -> f64 {
        self(x)
    }
}

/// Received symbols at which the worst case is searched.
#[derive(Debug, Clone, PartialEq)]
pub struct ZGrid {
    pub points: Vec<f64>,
}

impl ZGrid {
    /// Step `step` over `[-theta - margin, theta + margin]`, plus the points
    /// `eps` either side of every window and sub-window edge. The symbol
    /// `theta` itself is dropped: only `x = theta` produces it.
    pub fn for_scheme(scheme: &SMScheme, step: f64, margin: f64, eps: f64) -> Result<Self> {
        if !(step > 0.0) || !(margin >= 0.0) {
            return Err(Error::InvalidParameter("z grid needs step > 0 and margin >= 0".into()));
        }
        let lo = -scheme.theta - margin;
        let hi = scheme.theta + margin;
        let n = ((hi - lo) / step).floor() as usize;
        let mut points: Vec<f64> = (0..=n).map(|i| lo + i as f64 * step).collect();
        for b in scheme.boundaries() {
            points.push(b - eps);
            points.push(b + eps);
        }
        points.retain(|&z| z != scheme.theta);
        points.sort_by(f64::total_cmp);
        points.dedup();
        Ok(Self { points })
    }

    /// Step 0.002, margin 8, edge offset 1e-9.
    pub fn standard(scheme: &SMScheme) -> Self {
        Self::for_scheme(scheme, 0.002, 8.0, 1e-9).expect("constant grid parameters are valid")
    }

    pub fn from_points(points: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidParameter("empty z grid".into()));
        }
        Ok(Self { points })
    }
}

/// Coarse-to-fine search grid for `theta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaSearch {
    pub coarse_step: f64,
    pub max_theta: f64,
    pub fine_step: f64,
}

impl Default for ThetaSearch {
    fn default() -> Self {
        Self {
            coarse_step: 0.01,
            max_theta: 10.0,
            fine_step: 0.001,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaOptimum {
    pub theta: f64,
    pub dw: f64,
    pub argmin_z: f64,
}

/// `theta_k = argmax_theta min_z Var(X | Z = z)`: the coarse grid
/// `step, 2 step, .., max_theta`, then the fine grid over one coarse step
/// either side of the incumbent. The first maximizer wins ties.
pub fn optimize_theta(k: u32, law: &dyn ScalarLaw, search: &ThetaSearch) -> Result<ThetaOptimum> {
    if !(1..=8).contains(&k) {
        return Err(Error::InvalidParameter(format!("k must lie in 1..=8, got {k}")));
    }
    let ThetaSearch {
        coarse_step,
        max_theta,
        fine_step,
    } = *search;
    if !(coarse_step > 0.0 && fine_step > 0.0 && max_theta >= coarse_step) {
        return Err(Error::InvalidParameter("empty theta grid".into()));
    }
    let coarse: Vec<f64> = (1..=(max_theta / coarse_step + 1e-9).floor() as usize)
        .map(|i| i as f64 * coarse_step)
        .collect();
    let best = best_theta(k, law, &coarse)?;
    let steps = (coarse_step / fine_step).round() as i64;
    let fine: Vec<f64> = (-steps..=steps)
        .map(|i| best.theta + i as f64 * fine_step)
        .filter(|&t| t > 0.0)
        .collect();
    let refined = best_theta(k, law, &fine)?;
    Ok(if refined.dw > best.dw { refined } else { best })
}

fn best_theta(k: u32, law: &dyn ScalarLaw, thetas: &[f64]) -> Result<ThetaOptimum> {
    let results: Vec<ThetaOptimum> = thetas
        .par_iter()
        .map(|&theta| {
            let scheme = SMScheme::new(theta, k)?;
            let WorstCase { value, argmin } = worst_case_distortion(&scheme, law, &ZGrid::standard(&scheme))?;
            Ok(ThetaOptimum {
                theta,
                dw: value,
                argmin_z: argmin,
            })
        })
        .collect::<Result<_>>()?;
    results
        .into_iter()
        .reduce(|a, b| if b.dw > a.dw { b } else { a })
        .ok_or_else(|| Error::InvalidParameter("empty theta grid".into()))
}

/// One scalar scheme per coordinate of `(x - mu) / sigma`.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorSMScheme {
    schemes: Vec<SMScheme>,
    mu: DVector<f64>,
    sigma: DVector<f64>,
}

impl VectorSMScheme {
    pub fn new(schemes: Vec<SMScheme>, mu: DVector<f64>, sigma: DVector<f64>) -> Result<Self> {
        check_dim("coordinate schemes", mu.len(), schemes.len())?;
        check_dim("standard deviations", mu.len(), sigma.len())?;
        if let Some(s) = sigma.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
            return Err(Error::InvalidParameter(format!("standard deviations must be positive, got {s}")));
        }
        let k = schemes.first().map_or(1, |s| s.k);
        if schemes.iter().any(|s| s.k != k) {
            return Err(Error::InvalidParameter("all coordinates must use the same key size".into()));
        }
        Ok(Self { schemes, mu, sigma })
    }

    /// The same `(theta, k)` for every coordinate.
    pub fn uniform(theta: f64, k: u32, mu: DVector<f64>, sigma: DVector<f64>) -> Result<Self> {
        let s = SMScheme::new(theta, k)?;
        Self::new(vec![s; mu.len()], mu, sigma)
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn bits_per_coordinate(&self) -> u32 {
        self.schemes[0].k
    }

    pub fn schemes(&self) -> &[SMScheme] {
        &self.schemes
    }

    pub fn mu(&self) -> &DVector<f64> {
        &self.mu
    }

    pub fn sigma(&self) -> &DVector<f64> {
        &self.sigma
    }

    fn check(&self, v: &DVector<f64>, keys: &[u64]) -> Result<()> {
        check_dim("vector symbol", self.dim(), v.len())?;
        check_dim("coordinate keys", self.dim(), keys.len())?;
        for (s, &key) in self.schemes.iter().zip(keys) {
            Key::new(key, s.k)?;
        }
        Ok(())
    }

    /// Standardized symbol `z_i = sm((x_i - mu_i) / sigma_i, K_i)`.
    pub fn encode(&self, x: &DVector<f64>, keys: &[u64]) -> Result<DVector<f64>> {
        self.check(x, keys)?;
        Ok(DVector::from_fn(self.dim(), |i, _| {
            self.schemes[i].encode_unchecked((x[i] - self.mu[i]) / self.sigma[i], keys[i])
        }))
    }

    pub fn decode(&self, z: &DVector<f64>, keys: &[u64]) -> Result<DVector<f64>> {
        self.check(z, keys)?;
        Ok(DVector::from_fn(self.dim(), |i, _| {
            self.mu[i] + self.sigma[i] * self.schemes[i].decode_unchecked(z[i], keys[i])
        }))
    }

    /// Splits a packed key: coordinate `i` reads bits `[i k, (i + 1) k)`.
    pub fn split_key(&self, key: u64) -> Vec<u64> {
        let k = self.bits_per_coordinate();
        let mask = (1u64 << k) - 1;
        (0..self.dim()).map(|i| key >> (i as u32 * k) & mask).collect()
    }

    fn total_bits(&self) -> u32 {
        self.bits_per_coordinate() * self.dim() as u32
    }
}

/// Packed-key view: every step of a path is encoded with the same keys.
impl KeyedEncoder for VectorSMScheme {
    fn key_count(&self) -> u64 {
        1 << self.total_bits()
    }

    fn encode(&self, path: &[DVector<f64>], key: u64) -> Result<Path> {
        Key::new(key, self.total_bits())?;
        let keys = self.split_key(key);
        path.iter().map(|x| VectorSMScheme::encode(self, x, &keys)).collect()
    }

    fn decode(&self, path: &[DVector<f64>], key: u64) -> Result<Path> {
        Key::new(key, self.total_bits())?;
        let keys = self.split_key(key);
        path.iter().map(|z| VectorSMScheme::decode(self, z, &keys)).collect()
    }
}

/// Trajectory encoder for a perfectly observed plant: only the initial
/// state is key-encoded, later symbols carry the increments,
/// `Z_{t+1} = A Z_t + (Y_{t+1} - A Y_t)`.
///
/// `Z_1` is the encoded standardized symbol mapped back to state units,
/// `mu + sigma * z`; all-zero keys give `Z = Y`.
#[derive(Debug, Clone)]
pub struct TrajectoryCipher {
    sys: LinearSystem,
    init: VectorSMScheme,
    c: f64,
}

/// One row of the trajectory distortion evolution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvolutionPoint {
    pub t: usize,
    /// `min_Z tr((A^t)' A^t R_{X_1|Z_1})`.
    pub measured: f64,
    /// `c tr(|L|^{2t} V' Sigma V)` with `A = P L V'` the SVD.
    pub bound: f64,
}

impl TrajectoryCipher {
    pub fn new(sys: LinearSystem, init: VectorSMScheme) -> Result<Self> {
        check_dim("initial scheme", sys.state_dim(), init.dim())?;
        Ok(Self {
            sys,
            init,
            c: CIPHER_CONSTANT,
        })
    }

    /// Scheme for `X_1 ~ N(mu, cov)` with `k` bits per coordinate; `cov`
    /// must be diagonal.
    pub fn gaussian(sys: LinearSystem, mu: DVector<f64>, cov: &DMatrix<f64>, theta: f64, k: u32) -> Result<Self> {
        check_dim("initial covariance", mu.len(), cov.nrows())?;
        check_dim("initial covariance", mu.len(), cov.ncols())?;
        let off = (cov - DMatrix::from_diagonal(&cov.diagonal())).amax();
        if off > 0.0 {
            return Err(Error::InvalidParameter(
                "initial covariance must be diagonal for the per-coordinate cipher".into(),
            ));
        }
        let sigma = cov.diagonal().map(f64::sqrt);
        Self::new(sys, VectorSMScheme::uniform(theta, k, mu, sigma)?)
    }

    pub fn system(&self) -> &LinearSystem {
        &self.sys
    }

    pub fn init_scheme(&self) -> &VectorSMScheme {
        &self.init
    }

    pub fn constant(&self) -> f64 {
        self.c
    }

    fn check_path(&self, path: &[DVector<f64>]) -> Result<()> {
        for x in path {
            check_dim("trajectory state", self.sys.state_dim(), x.len())?;
        }
        Ok(())
    }

    pub fn encode(&self, ys: &[DVector<f64>], keys: &[u64]) -> Result<Path> {
        self.check_path(ys)?;
        let Some(y1) = ys.first() else {
            return Ok(Vec::new());
        };
        let a = self.sys.a();
        let z1 = self.init.encode(y1, keys)?;
        let mut out = vec![self.init.mu() + self.init.sigma().component_mul(&z1)];
        for w in ys.windows(2) {
            let prev = out.last().unwrap();
            out.push(a * prev + (&w[1] - a * &w[0]));
        }
        Ok(out)
    }

    pub fn decode(&self, zs: &[DVector<f64>], keys: &[u64]) -> Result<Path> {
        self.check_path(zs)?;
        let Some(z1) = zs.first() else {
            return Ok(Vec::new());
        };
        let a = self.sys.a();
        let standardized = (z1 - self.init.mu()).component_div(self.init.sigma());
        let mut out = vec![self.init.decode(&standardized, keys)?];
        for w in zs.windows(2) {
            let prev = out.last().unwrap();
            out.push(&w[1] - a * &w[0] + a * prev);
        }
        Ok(out)
    }

    /// Worst-case distortion of each coordinate of the standardized initial
    /// state under `law`.
    pub fn coordinate_worst_cases(&self, law: &dyn ScalarLaw) -> Result<Vec<WorstCase>> {
        self.init
            .schemes()
            .iter()
            .map(|s| worst_case_distortion(s, law, &ZGrid::standard(s)))
            .collect()
    }

    /// `D(t)` for `t = 0..=t_max` against the analytic bound.
    ///
    /// Eve's knowledge about `X_{t+1}` beyond the leaked increments is
    /// `A^t X_1` given `Z_1`, whose conditional covariance is
    /// `A^t R A^t'` with `R = diag(Sigma_ii Var(V_i | Z_i))`. For diagonal
    /// `R` the minimum over the product grid of `Z_1` splits into the
    /// per-coordinate minima.
    pub fn distortion_evolution(&self, t_max: usize, law: &dyn ScalarLaw) -> Result<Vec<EvolutionPoint>> {
        let worst: Vec<f64> = self.coordinate_worst_cases(law)?.iter().map(|w| w.value).collect();
        let sigma2 = self.init.sigma().map(|s| s * s);
        let a = self.sys.a();
        let svd = a.clone().svd(false, true);
        let v_t = svd.v_t.ok_or_else(|| Error::Numerical("SVD of A failed".into()))?;
        let rotated = &v_t * DMatrix::from_diagonal(&sigma2) * v_t.transpose();
        (0..=t_max)
            .map(|t| {
                let at = matrix_power(a, t);
                let g = at.transpose() * at;
                let measured: f64 = (0..self.init.dim()).map(|i| g[(i, i)] * sigma2[i] * worst[i]).sum();
                let bound: f64 = (0..svd.singular_values.len())
                    .map(|i| svd.singular_values[i].powi(2 * t as i32) * rotated[(i, i)])
                    .sum::<f64>()
                    * self.c;
                Ok(EvolutionPoint { t, measured, bound })
            })
            .collect()
    }

    fn total_bits(&self) -> u32 {
        self.init.total_bits()
    }
}

impl KeyedEncoder for TrajectoryCipher {
    fn key_count(&self) -> u64 {
        1 << self.total_bits()
    }

    fn encode(&self, path: &[DVector<f64>], key: u64) -> Result<Path> {
        Key::new(key, self.total_bits())?;
        TrajectoryCipher::encode(self, path, &self.init.split_key(key))
    }

    fn decode(&self, path: &[DVector<f64>], key: u64) -> Result<Path> {
        Key::new(key, self.total_bits())?;
        TrajectoryCipher::decode(self, path, &self.init.split_key(key))
    }
}
