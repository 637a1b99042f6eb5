//! Small numerical helpers shared across modules: seeded sample streams,
//! running statistics, Gaussian quadrature nodes and matrix utilities.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Counter-based stream: sample `index` of a run seeded with `seed` always
/// draws the same numbers, whatever thread evaluates it.
pub fn stream_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Evaluates `f` on `n` independent seeded streams in parallel and returns
/// the results in sample order.
pub fn map_streams<T, F>(n: usize, seed: u64, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&mut ChaCha8Rng) -> Result<T> + Sync,
{
    (0..n as u64)
        .into_par_iter()
        .map(|i| f(&mut stream_rng(seed, i)))
        .collect()
}

/// Sample mean with its standard error, plus the sample minimum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
    pub min: f64,
    pub n: usize,
}

impl Estimate {
    pub fn from_samples(samples: &[f64]) -> Self {
        let n = samples.len();
        if n == 0 {
            return Self {
                mean: f64::NAN,
                std_error: f64::NAN,
                min: f64::NAN,
                n,
            };
        }
        // Sequential sum in sample order.
        let mean = samples.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        let min = samples.iter().copied().fold(f64::INFINITY, f64::min);
        Self {
            mean,
            std_error: (var / n as f64).sqrt(),
            min,
            n,
        }
    }
}

/// Trapezoid nodes on `[-half_width, half_width]` weighted by the standard
/// normal density. Weights are renormalized to sum to one.
pub fn gaussian_trapezoid(nodes: usize, half_width: f64) -> (Vec<f64>, Vec<f64>) {
    assert!(nodes >= 2);
    let h = 2.0 * half_width / (nodes - 1) as f64;
    let xs: Vec<f64> = (0..nodes).map(|i| -half_width + i as f64 * h).collect();
    let mut ws: Vec<f64> = xs
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let end = if i == 0 || i == nodes - 1 { 0.5 } else { 1.0 };
            end * (-0.5 * x * x).exp()
        })
        .collect();
    let total: f64 = ws.iter().sum();
    ws.iter_mut().for_each(|w| *w /= total);
    (xs, ws)
}

/// `m^power` by repeated squaring.
pub fn matrix_power(m: &DMatrix<f64>, power: usize) -> DMatrix<f64> {
    let mut result = DMatrix::identity(m.nrows(), m.ncols());
    let mut base = m.clone();
    let mut p = power;
    while p > 0 {
        if p & 1 == 1 {
            result = &result * &base;
        }
        base = &base * &base;
        p >>= 1;
    }
    result
}

/// Symmetric eigen-decomposition after explicit symmetrization.
pub fn sym_eigen(m: &DMatrix<f64>) -> SymmetricEigen<f64, nalgebra::Dyn> {
    let sym = (m + m.transpose()) * 0.5;
    SymmetricEigen::new(sym)
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn lambda_min(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    sym_eigen(m).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

pub fn is_symmetric(m: &DMatrix<f64>, tol: f64) -> bool {
    m.is_square() && (m - m.transpose()).amax() <= tol * (1.0 + m.amax())
}

/// Checks symmetry and positive semi-definiteness (eigenvalues >= -1e-10 in
/// relative terms).
pub fn check_psd(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if !is_symmetric(m, 1e-10) {
        return Err(Error::InvalidParameter(format!("{what} is not symmetric")));
    }
    let scale = 1.0 + m.amax();
    if lambda_min(m) < -1e-10 * scale {
        return Err(Error::InvalidParameter(format!(
            "{what} is not positive semi-definite"
        )));
    }
    Ok(())
}

/// Radical inverse in `base`, the i-th element of a Halton sequence.
pub fn halton(mut index: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while index > 0 {
        f /= base as f64;
        r += f * (index % base) as f64;
        index /= base;
    }
    r
}

pub(crate) const PRIMES: [u64; 24] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89,
];

/// Stacks a path into one long vector.
pub fn stack(path: &[DVector<f64>]) -> DVector<f64> {
    let total = path.iter().map(|v| v.len()).sum();
    let mut out = DVector::zeros(total);
    let mut offset = 0;
    for v in path {
        out.rows_mut(offset, v.len()).copy_from(v);
        offset += v.len();
    }
    out
}

/// Splits a stacked vector into `steps` equal chunks.
pub fn unstack(v: &DVector<f64>, step_dim: usize) -> Vec<DVector<f64>> {
    if step_dim == 0 {
        return Vec::new();
    }
    v.as_slice()
        .chunks(step_dim)
        .map(DVector::from_column_slice)
        .collect()
}

/// Relative mismatch `|a - b| / max(a, b)`, zero when both vanish.
pub fn relative_gap(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: f64 = stream_rng(7, 3).random();
        let b: f64 = stream_rng(7, 3).random();
        let c: f64 = stream_rng(7, 4).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn trapezoid_reproduces_gaussian_moments() {
        let (xs, ws) = gaussian_trapezoid(801, 8.0);
        let m2: f64 = xs.iter().zip(&ws).map(|(x, w)| x * x * w).sum();
        let m4: f64 = xs.iter().zip(&ws).map(|(x, w)| x.powi(4) * w).sum();
        assert!((m2 - 1.0).abs() < 1e-12);
        assert!((m4 - 3.0).abs() < 1e-11);
    }

    #[test]
    fn matrix_power_matches_repeated_product() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        let p = matrix_power(&m, 5);
        assert!((p[(0, 1)] - 2.5).abs() < 1e-12);
        assert_eq!(matrix_power(&m, 0), DMatrix::identity(2, 2));
    }

    #[test]
    fn estimate_of_constant_has_zero_error() {
        let e = Estimate::from_samples(&[2.0; 10]);
        assert_eq!(e.mean, 2.0);
        assert_eq!(e.std_error, 0.0);
        assert_eq!(e.min, 2.0);
    }

    #[test]
    fn halton_base_two() {
        assert_eq!(halton(1, 2), 0.5);
        assert_eq!(halton(2, 2), 0.25);
        assert_eq!(halton(3, 2), 0.75);
    }
}
