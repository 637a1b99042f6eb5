//! Key-indexed mirroring encoders: `x -> (I - 2 S'S) x + 2 S'b`, composed
//! over the planes selected by the key bits.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::numeric::sym_eigen;
use crate::system::{matrix_from_rows, matrix_to_rows};
use crate::Path;

const ORTHONORMAL_TOL: f64 = 1e-10;
const REPAIR_TOL: f64 = 1e-6;

/// The affine subspace `S x = b` with orthonormal rows in `S`. Reflecting
/// across it fixes the subspace and flips the displacement from it.
#[derive(Debug, Clone, PartialEq)]
pub struct MirrorPlane {
    s: DMatrix<f64>,
    b: DVector<f64>,
}

impl MirrorPlane {
    /// Rows of `s` within `1e-6` of orthonormal are re-orthonormalized by
    /// Gram-Schmidt; larger violations are rejected. `s` may have zero rows,
    /// giving the identity map.
    pub fn new(s: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        check_dim("mirror offset", s.nrows(), b.len())?;
        if s.nrows() > s.ncols() {
            return Err(Error::InvalidParameter(format!(
                "mirror plane has {} rows but only {} columns",
                s.nrows(),
                s.ncols()
            )));
        }
        let dev = orthonormal_deviation(&s);
        if dev <= ORTHONORMAL_TOL {
            return Ok(Self { s, b });
        }
        if dev > REPAIR_TOL {
            return Err(Error::InvalidParameter(format!(
                "mirror rows are not orthonormal (max |SS' - I| entry {dev:.3e})"
            )));
        }
        let mut q = s.clone();
        for i in 0..q.nrows() {
            for j in 0..i {
                let proj = q.row(i).dot(&q.row(j));
                let rj = q.row(j).into_owned();
                let ri = q.row(i) - rj * proj;
                q.set_row(i, &ri);
            }
            let norm = q.row(i).norm();
            q.row_mut(i).unscale_mut(norm);
        }
        Ok(Self { s: q, b })
    }

    /// Point reflection through `center` (`S = I`, `b = center`).
    pub fn point(center: DVector<f64>) -> Self {
        let n = center.len();
        Self {
            s: DMatrix::identity(n, n),
            b: center,
        }
    }

    /// The identity map on `R^n`.
    pub fn identity(n: usize) -> Self {
        Self {
            s: DMatrix::zeros(0, n),
            b: DVector::zeros(0),
        }
    }

    pub fn s(&self) -> &DMatrix<f64> {
        &self.s
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn ambient_dim(&self) -> usize {
        self.s.ncols()
    }

    /// `(I - 2 S'S) x + 2 S'b`.
    pub fn reflect(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim("reflected point", self.ambient_dim(), x.len())?;
        Ok(self.reflect_unchecked(x))
    }

    pub(crate) fn reflect_unchecked(&self, x: &DVector<f64>) -> DVector<f64> {
        if self.s.nrows() == 0 {
            return x.clone();
        }
        x - self.s.transpose() * ((&self.s * x - &self.b) * 2.0)
    }
}

fn orthonormal_deviation(s: &DMatrix<f64>) -> f64 {
    let d = s.nrows();
    if d == 0 {
        return 0.0;
    }
    (s * s.transpose() - DMatrix::<f64>::identity(d, d)).amax()
}

/// A shared key of `bits` bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Key {
    value: u64,
    bits: u32,
}

impl Key {
    pub fn new(value: u64, bits: u32) -> Result<Self> {
        if bits == 0 || bits > 63 || value >= 1 << bits {
            return Err(Error::KeyOutOfRange { key: value, bits });
        }
        Ok(Self { value, bits })
    }

    pub fn value(self) -> u64 {
        self.value
    }

    pub fn bits(self) -> u32 {
        self.bits
    }

    pub fn bit(self, j: u32) -> bool {
        self.value >> j & 1 == 1
    }

    /// All `2^bits` keys in increasing order.
    pub fn all(bits: u32) -> Result<Vec<Self>> {
        Self::new(0, bits)?;
        Ok((0..1u64 << bits).map(|value| Self { value, bits }).collect())
    }
}

/// An encoder with a finite key space under which decoding inverts
/// encoding: the interface Eve's evaluators need.
pub trait KeyedEncoder: Sync {
    fn key_count(&self) -> u64;
    fn encode(&self, path: &[DVector<f64>], key: u64) -> Result<Path>;
    fn decode(&self, path: &[DVector<f64>], key: u64) -> Result<Path>;
}

/// `k` mirror planes per time step. Key bit `j` selects plane `j`; the
/// selected reflections are applied in ascending bit order when encoding
/// and in descending order when decoding.
#[derive(Debug, Clone, PartialEq)]
pub struct MirrorScheme {
    planes: Vec<Vec<MirrorPlane>>,
    bits: u32,
}

impl MirrorScheme {
    pub fn new(planes: Vec<Vec<MirrorPlane>>) -> Result<Self> {
        let bits = planes.first().map_or(0, |p| p.len());
        if bits == 0 {
            return Err(Error::InvalidParameter("scheme needs at least one plane per step".into()));
        }
        let n = planes[0][0].ambient_dim();
        for step in &planes {
            check_dim("planes per step", bits, step.len())?;
            for p in step {
                check_dim("plane ambient dimension", n, p.ambient_dim())?;
            }
        }
        if bits > 63 {
            return Err(Error::InvalidParameter(format!("{bits} key bits is too many")));
        }
        Ok(Self {
            planes,
            bits: bits as u32,
        })
    }

    /// The 1-bit scheme with plane `planes[t]` at step `t`.
    pub fn one_bit(planes: Vec<MirrorPlane>) -> Result<Self> {
        Self::new(planes.into_iter().map(|p| vec![p]).collect())
    }

    /// The same `k` planes at every one of `horizon` steps.
    pub fn time_invariant(planes: Vec<MirrorPlane>, horizon: usize) -> Result<Self> {
        Self::new(vec![planes; horizon])
    }

    /// Planes spanned by eigenvectors of each step covariance, through the
    /// step mean. `groups[j]` lists the eigenvector indices (by descending
    /// eigenvalue) that form the rows of the plane for key bit `j`.
    pub fn eigen_planes(means: &[DVector<f64>], covs: &[DMatrix<f64>], groups: &[Vec<usize>]) -> Result<Self> {
        check_dim("covariances per step", means.len(), covs.len())?;
        let planes = means
            .iter()
            .zip(covs)
            .map(|(mu, cov)| {
                check_dim("covariance size", mu.len(), cov.nrows())?;
                let eig = sym_eigen(cov);
                let mut order: Vec<usize> = (0..mu.len()).collect();
                order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
                groups
                    .iter()
                    .map(|g| {
                        let mut s = DMatrix::zeros(g.len(), mu.len());
                        for (r, &i) in g.iter().enumerate() {
                            let idx = *order.get(i).ok_or_else(|| {
                                Error::InvalidParameter(format!("eigenvector index {i} out of range"))
                            })?;
                            s.set_row(r, &eig.eigenvectors.column(idx).transpose());
                        }
                        let b = &s * mu;
                        MirrorPlane::new(s, b)
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(planes)
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn horizon(&self) -> usize {
        self.planes.len()
    }

    pub fn state_dim(&self) -> usize {
        self.planes[0][0].ambient_dim()
    }

    pub fn planes(&self, t: usize) -> &[MirrorPlane] {
        &self.planes[t]
    }

    fn check_key(&self, key: u64) -> Result<()> {
        Key::new(key, self.bits).map(|_| ())
    }

    /// `alpha_t^{(K)}(x)`.
    pub fn alpha(&self, t: usize, key: u64, x: &DVector<f64>) -> DVector<f64> {
        let mut y = x.clone();
        for (j, p) in self.planes[t].iter().enumerate() {
            if key >> j & 1 == 1 {
                y = p.reflect_unchecked(&y);
            }
        }
        y
    }

    /// `alpha_t^{-(K)}(z)`.
    pub fn alpha_inv(&self, t: usize, key: u64, z: &DVector<f64>) -> DVector<f64> {
        let mut y = z.clone();
        for (j, p) in self.planes[t].iter().enumerate().rev() {
            if key >> j & 1 == 1 {
                y = p.reflect_unchecked(&y);
            }
        }
        y
    }

    fn check_path(&self, path: &[DVector<f64>]) -> Result<()> {
        check_dim("trajectory length", self.horizon(), path.len())?;
        for x in path {
            check_dim("state dimension", self.state_dim(), x.len())?;
        }
        Ok(())
    }
}

impl KeyedEncoder for MirrorScheme {
    fn key_count(&self) -> u64 {
        1 << self.bits
    }

    fn encode(&self, path: &[DVector<f64>], key: u64) -> Result<Path> {
        self.check_key(key)?;
        self.check_path(path)?;
        Ok(path.iter().enumerate().map(|(t, x)| self.alpha(t, key, x)).collect())
    }

    fn decode(&self, path: &[DVector<f64>], key: u64) -> Result<Path> {
        self.check_key(key)?;
        self.check_path(path)?;
        Ok(path.iter().enumerate().map(|(t, z)| self.alpha_inv(t, key, z)).collect())
    }
}

/// `Z_t = X_t` for `K = 0`, `Z_t = alpha_t(X_t)` for `K = 1`.
pub fn encode_1bit(states: &[DVector<f64>], planes: &[MirrorPlane], key: u64) -> Result<Path> {
    check_dim("planes per trajectory", states.len(), planes.len())?;
    Key::new(key, 1)?;
    states
        .iter()
        .zip(planes)
        .map(|(x, p)| if key == 1 { p.reflect(x) } else { Ok(x.clone()) })
        .collect()
}

/// Inverse of [`encode_1bit`]; reflections are involutions.
pub fn decode_1bit(encoded: &[DVector<f64>], planes: &[MirrorPlane], key: u64) -> Result<Path> {
    encode_1bit(encoded, planes, key)
}

pub fn encode_kbit(states: &[DVector<f64>], scheme: &MirrorScheme, key: u64) -> Result<Path> {
    scheme.encode(states, key)
}

pub fn decode_kbit(encoded: &[DVector<f64>], scheme: &MirrorScheme, key: u64) -> Result<Path> {
    scheme.decode(encoded, key)
}

/// Config form of a plane: rows of `S` and the offset `b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaneSpec {
    pub s: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

impl PlaneSpec {
    pub fn build(&self) -> Result<MirrorPlane> {
        let s = if self.s.is_empty() {
            return Err(Error::Config("plane needs at least one row; use an explicit identity scheme".into()));
        } else {
            matrix_from_rows(&self.s, "mirror S")?
        };
        MirrorPlane::new(s, DVector::from_vec(self.b.clone()))
    }
}

impl From<&MirrorPlane> for PlaneSpec {
    fn from(p: &MirrorPlane) -> Self {
        Self {
            s: matrix_to_rows(&p.s),
            b: p.b.iter().copied().collect(),
        }
    }
}

/// Config form of a scheme: `steps[t][j]` is the plane of key bit `j` at
/// step `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeSpec {
    pub steps: Vec<Vec<PlaneSpec>>,
}

impl SchemeSpec {
    pub fn build(&self) -> Result<MirrorScheme> {
        MirrorScheme::new(
            self.steps
                .iter()
                .map(|step| step.iter().map(PlaneSpec::build).collect())
                .collect::<Result<Vec<_>>>()?,
        )
    }
}

impl From<&MirrorScheme> for SchemeSpec {
    fn from(s: &MirrorScheme) -> Self {
        Self {
            steps: s.planes.iter().map(|step| step.iter().map(PlaneSpec::from).collect()).collect(),
        }
    }
}
