use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore};
use rayon::prelude::*;

use super::{SymmetryPoint, TrajectoryLaw};
use crate::error::{check_dim, Error, Result};
use crate::system::Trajectory;
use crate::Path;

/// Count mismatch, in standard deviations of `c1 - c2`, still read as
/// sampling noise by the symmetry check.
const COUNT_NOISE_SIGMAS: f64 = 5.0;

/// Axis-aligned grid over the encoded coordinates `coords` of a state.
#[derive(Debug, Clone, PartialEq)]
pub struct BinGrid {
    pub bin_width: f64,
    pub origin: DVector<f64>,
    pub coords: Vec<usize>,
}

impl BinGrid {
    pub fn new(bin_width: f64, origin: DVector<f64>, coords: Vec<usize>) -> Result<Self> {
        if !(bin_width > 0.0 && bin_width.is_finite()) {
            return Err(Error::InvalidParameter(format!("bin width must be positive, got {bin_width}")));
        }
        check_dim("bin grid origin", coords.len(), origin.len())?;
        if coords.is_empty() {
            return Err(Error::InvalidParameter("bin grid needs at least one coordinate".into()));
        }
        Ok(Self {
            bin_width,
            origin,
            coords,
        })
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    /// Bin of a full state vector: `floor((x[coords] - origin) / bin_width)`.
    pub fn index(&self, state: &DVector<f64>) -> Vec<i64> {
        self.coords
            .iter()
            .zip(self.origin.iter())
            .map(|(&c, o)| ((state[c] - o) / self.bin_width).floor() as i64)
            .collect()
    }

    /// Bin of a point already restricted to the encoded coordinates.
    pub fn index_local(&self, point: &DVector<f64>) -> Vec<i64> {
        point
            .iter()
            .zip(self.origin.iter())
            .map(|(x, o)| ((x - o) / self.bin_width).floor() as i64)
            .collect()
    }

    pub fn center(&self, index: &[i64]) -> DVector<f64> {
        DVector::from_fn(index.len(), |j, _| {
            self.origin[j] + (index[j] as f64 + 0.5) * self.bin_width
        })
    }
}

/// Histogram of binned trajectories. Keys are the per-step bin tuples
/// concatenated over the horizon; a path has mass `count / total`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalTrajectoryDist {
    bin_width: f64,
    origin: DVector<f64>,
    horizon: usize,
    table: BTreeMap<Vec<i64>, u64>,
    total: u64,
}

impl EmpiricalTrajectoryDist {
    pub fn new(bin_width: f64, origin: DVector<f64>, horizon: usize) -> Result<Self> {
        if !(bin_width > 0.0 && bin_width.is_finite()) {
            return Err(Error::InvalidParameter(format!("bin width must be positive, got {bin_width}")));
        }
        if origin.is_empty() || horizon == 0 {
            return Err(Error::InvalidParameter("empirical law needs dim >= 1 and horizon >= 1".into()));
        }
        Ok(Self {
            bin_width,
            origin,
            horizon,
            table: BTreeMap::new(),
            total: 0,
        })
    }

    pub fn bin_width(&self) -> f64 {
        self.bin_width
    }

    pub fn origin(&self) -> &DVector<f64> {
        &self.origin
    }

    pub fn dim(&self) -> usize {
        self.origin.len()
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// Number of distinct trajectory keys.
    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&Vec<i64>, u64)> {
        self.table.iter().map(|(k, &c)| (k, c))
    }

    fn local_grid(&self) -> BinGrid {
        BinGrid {
            bin_width: self.bin_width,
            origin: self.origin.clone(),
            coords: (0..self.dim()).collect(),
        }
    }

    /// Key of a path given in encoded coordinates.
    pub fn key_of(&self, path: &[DVector<f64>]) -> Option<Vec<i64>> {
        if path.len() != self.horizon || path.iter().any(|x| x.len() != self.dim()) {
            return None;
        }
        let grid = self.local_grid();
        Some(path.iter().flat_map(|x| grid.index_local(x)).collect())
    }

    /// Bin centres of a key.
    pub fn centers(&self, key: &[i64]) -> Path {
        let grid = self.local_grid();
        key.chunks(self.dim()).map(|c| grid.center(c)).collect()
    }

    pub fn record_key(&mut self, key: Vec<i64>, count: u64) -> Result<()> {
        check_dim("empirical key length", self.horizon * self.dim(), key.len())?;
        if count == 0 {
            return Ok(());
        }
        *self.table.entry(key).or_insert(0) += count;
        self.total += count;
        Ok(())
    }

    /// Records a path given in encoded coordinates.
    pub fn record(&mut self, path: &[DVector<f64>]) -> Result<()> {
        check_dim("empirical path length", self.horizon, path.len())?;
        let key = self
            .key_of(path)
            .ok_or_else(|| Error::InvalidParameter("path does not match the grid dimension".into()))?;
        self.record_key(key, 1)
    }

    /// Adds the counts of `other`, which must use the same grid and horizon.
    pub fn merge(&mut self, other: &Self) -> Result<()> {
        if self.bin_width != other.bin_width || self.origin != other.origin || self.horizon != other.horizon {
            return Err(Error::InvalidParameter("cannot merge histograms over different grids".into()));
        }
        for (k, &c) in &other.table {
            *self.table.entry(k.clone()).or_insert(0) += c;
        }
        self.total += other.total;
        Ok(())
    }

    pub fn count(&self, key: &[i64]) -> u64 {
        self.table.get(key).copied().unwrap_or(0)
    }

    pub fn mass(&self, key: &[i64]) -> f64 {
        if self.total == 0 {
            return 0.0;
        }
        self.count(key) as f64 / self.total as f64
    }

    /// Histogram of coordinate `axis` alone.
    pub fn marginal_axis(&self, axis: usize) -> Result<Self> {
        if axis >= self.dim() {
            return Err(Error::InvalidParameter(format!("axis {axis} out of range")));
        }
        let d = self.dim();
        let mut out = Self::new(self.bin_width, DVector::from_element(1, self.origin[axis]), self.horizon)?;
        for (k, &c) in &self.table {
            let sub: Vec<i64> = k.iter().skip(axis).step_by(d).copied().collect();
            *out.table.entry(sub).or_insert(0) += c;
        }
        out.total = self.total;
        Ok(out)
    }

    /// Point symmetry of the table. The candidate centre is the sample mean
    /// snapped to the nearest half-bin, the only centres that map bins onto
    /// bins. A key and its reflection must have counts within
    /// `max(tol * max(c1, c2), 5 * sqrt(c1 + c2))`.
    pub fn symmetry_point(&self, tol: f64) -> Option<SymmetryPoint> {
        if self.total == 0 {
            return None;
        }
        let d = self.dim();
        let n = self.horizon * d;
        let mut mean = DVector::zeros(n);
        for (k, &c) in &self.table {
            for (j, &i) in k.iter().enumerate() {
                mean[j] += c as f64 * (self.origin[j % d] + (i as f64 + 0.5) * self.bin_width);
            }
        }
        mean /= self.total as f64;
        let twice: Vec<i64> = (0..n)
            .map(|j| (2.0 * (mean[j] - self.origin[j % d]) / self.bin_width).round() as i64)
            .collect();
        let symmetric = self.table.iter().all(|(k, &c1)| {
            let reflected: Vec<i64> = k.iter().zip(&twice).map(|(&i, &m)| m - 1 - i).collect();
            let c2 = self.count(&reflected);
            let (c1, c2) = (c1 as f64, c2 as f64);
            (c1 - c2).abs() <= (tol * c1.max(c2)).max(COUNT_NOISE_SIGMAS * (c1 + c2).sqrt())
        });
        symmetric.then(|| SymmetryPoint {
            point: DVector::from_fn(n, |j, _| self.origin[j % d] + twice[j] as f64 * self.bin_width / 2.0),
        })
    }

    /// Line format: a header
    /// `# empirical bin_width=<w> origin=<o1,..> dim=<d> horizon=<T>` and one
    /// line `i1,...,i_{dT},count` per key.
    pub fn to_text(&self) -> String {
        let origin: Vec<String> = self.origin.iter().map(|o| o.to_string()).collect();
        let mut out = format!(
            "# empirical bin_width={} origin={} dim={} horizon={}\n",
            self.bin_width,
            origin.join(","),
            self.dim(),
            self.horizon
        );
        for (k, c) in &self.table {
            for i in k {
                let _ = write!(out, "{i},");
            }
            let _ = writeln!(out, "{c}");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or(Error::Format {
            line: 1,
            message: "empty input".into(),
        })?;
        let fmt_err = |line: usize, message: String| Error::Format { line, message };
        let fields = header
            .strip_prefix("# empirical")
            .ok_or_else(|| fmt_err(1, "missing `# empirical` header".into()))?;
        let mut bin_width = None;
        let mut origin = None;
        let mut dim = None;
        let mut horizon = None;
        for field in fields.split_whitespace() {
            let (name, value) = field
                .split_once('=')
                .ok_or_else(|| fmt_err(1, format!("malformed header field `{field}`")))?;
            let bad = || fmt_err(1, format!("bad value for `{name}`"));
            match name {
                "bin_width" => bin_width = Some(value.parse::<f64>().map_err(|_| bad())?),
                "origin" => {
                    let o: std::result::Result<Vec<f64>, _> = value.split(',').map(str::parse).collect();
                    origin = Some(o.map_err(|_| bad())?);
                }
                "dim" => dim = Some(value.parse::<usize>().map_err(|_| bad())?),
                "horizon" => horizon = Some(value.parse::<usize>().map_err(|_| bad())?),
                _ => return Err(fmt_err(1, format!("unknown header field `{name}`"))),
            }
        }
        let missing = |what: &str| fmt_err(1, format!("header lacks `{what}`"));
        let origin = origin.ok_or_else(|| missing("origin"))?;
        let dim = dim.ok_or_else(|| missing("dim"))?;
        if origin.len() != dim {
            return Err(fmt_err(1, format!("origin has {} entries, dim is {dim}", origin.len())));
        }
        let mut out = Self::new(
            bin_width.ok_or_else(|| missing("bin_width"))?,
            DVector::from_vec(origin),
            horizon.ok_or_else(|| missing("horizon"))?,
        )
        .map_err(|e| fmt_err(1, e.to_string()))?;
        for (i, line) in lines {
            let line_no = i + 1;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split(',').collect();
            if parts.len() != out.horizon * dim + 1 {
                return Err(fmt_err(
                    line_no,
                    format!("expected {} fields, found {}", out.horizon * dim + 1, parts.len()),
                ));
            }
            let (key, count) = parts.split_at(parts.len() - 1);
            let key: std::result::Result<Vec<i64>, _> = key.iter().map(|s| s.trim().parse()).collect();
            let key = key.map_err(|e| fmt_err(line_no, format!("bad bin index: {e}")))?;
            let count: u64 = count[0]
                .trim()
                .parse()
                .map_err(|e| fmt_err(line_no, format!("bad count: {e}")))?;
            if count == 0 {
                return Err(fmt_err(line_no, "counts must be at least 1".into()));
            }
            out.record_key(key, count)?;
        }
        Ok(out)
    }

    fn weighted_centers(&self) -> Vec<(Path, f64)> {
        let total = self.total as f64;
        self.table
            .iter()
            .map(|(k, &c)| (self.centers(k), c as f64 / total))
            .collect()
    }
}

/// Bins the coordinates `coords` of every state of every run.
pub fn empirical_from_runs(
    runs: &[Trajectory],
    bin_width: f64,
    origin: &DVector<f64>,
    coords: &[usize],
) -> Result<EmpiricalTrajectoryDist> {
    let first = runs
        .first()
        .ok_or_else(|| Error::InvalidParameter("no runs to bin".into()))?;
    let grid = BinGrid::new(bin_width, origin.clone(), coords.to_vec())?;
    let horizon = first.horizon();
    let mut out = EmpiricalTrajectoryDist::new(bin_width, origin.clone(), horizon)?;
    for run in runs {
        check_dim("run horizon", horizon, run.horizon())?;
        if let Some(bad) = run.states.iter().find(|x| coords.iter().any(|&c| c >= x.len())) {
            return Err(Error::DimensionMismatch {
                context: "binned coordinate",
                expected: coords.iter().max().unwrap() + 1,
                actual: bad.len(),
            });
        }
        out.record_key(run.states.iter().flat_map(|x| grid.index(x)).collect(), 1)?;
    }
    Ok(out)
}

fn expectation_over(
    entries: &[(Path, f64)],
    g: &(dyn Fn(&[DVector<f64>]) -> f64 + Sync),
) -> f64 {
    let parts: Vec<f64> = entries.par_iter().map(|(path, p)| p * g(path)).collect();
    parts.iter().sum()
}

fn moments(entries: &[(Path, f64)], horizon: usize, dim: usize) -> (Path, Vec<DMatrix<f64>>) {
    let mut means = vec![DVector::zeros(dim); horizon];
    for (path, p) in entries {
        for (m, x) in means.iter_mut().zip(path) {
            *m += x * *p;
        }
    }
    let mut covs = vec![DMatrix::zeros(dim, dim); horizon];
    for (path, p) in entries {
        for t in 0..horizon {
            let c = &path[t] - &means[t];
            covs[t] += &c * c.transpose() * *p;
        }
    }
    (means, covs)
}

fn sample_key<'a>(table: &'a BTreeMap<Vec<i64>, u64>, total: u64, rng: &mut dyn RngCore) -> &'a [i64] {
    let mut target = rng.random_range(0..total);
    for (k, &c) in table {
        if target < c {
            return k;
        }
        target -= c;
    }
    unreachable!("counts sum to total")
}

impl TrajectoryLaw for EmpiricalTrajectoryDist {
    fn horizon(&self) -> usize {
        self.horizon
    }

    fn step_dim(&self) -> usize {
        self.dim()
    }

    fn density(&self, path: &[DVector<f64>]) -> f64 {
        self.key_of(path).map_or(0.0, |k| self.mass(&k))
    }

    /// Exact sum over the recorded keys, each at its bin centres.
    fn expectation(&self, g: &(dyn Fn(&[DVector<f64>]) -> f64 + Sync)) -> Result<f64> {
        if self.total == 0 {
            return Err(Error::InvalidParameter("empty histogram".into()));
        }
        Ok(expectation_over(&self.weighted_centers(), g))
    }

    fn step_means(&self) -> Path {
        moments(&self.weighted_centers(), self.horizon, self.dim()).0
    }

    fn step_covariances(&self) -> Vec<DMatrix<f64>> {
        moments(&self.weighted_centers(), self.horizon, self.dim()).1
    }

    fn sample(&self, rng: &mut dyn RngCore) -> Path {
        self.centers(sample_key(&self.table, self.total, rng))
    }
}

/// Histogram law whose density is the product of the per-coordinate
/// trajectory histograms, for samples whose coordinates evolve
/// independently. Expectations and moments still run over the joint
/// sample.
///
/// A joint histogram over `d * T` bin indices leaves most keys seen once,
/// so their reflections are rarely recorded; the per-coordinate tables are
/// dense enough to score reflected paths.
#[derive(Debug, Clone)]
pub struct FactoredEmpiricalDist {
    joint: EmpiricalTrajectoryDist,
    axes: Vec<EmpiricalTrajectoryDist>,
    entries: Vec<(Path, f64)>,
}

impl FactoredEmpiricalDist {
    pub fn new(joint: EmpiricalTrajectoryDist) -> Result<Self> {
        if joint.total == 0 {
            return Err(Error::InvalidParameter("empty histogram".into()));
        }
        let axes = (0..joint.dim())
            .map(|a| joint.marginal_axis(a))
            .collect::<Result<Vec<_>>>()?;
        let entries = joint.weighted_centers();
        Ok(Self { joint, axes, entries })
    }

    pub fn joint(&self) -> &EmpiricalTrajectoryDist {
        &self.joint
    }

    pub fn axis(&self, a: usize) -> &EmpiricalTrajectoryDist {
        &self.axes[a]
    }
}

impl TrajectoryLaw for FactoredEmpiricalDist {
    fn horizon(&self) -> usize {
        self.joint.horizon
    }

    fn step_dim(&self) -> usize {
        self.joint.dim()
    }

    fn density(&self, path: &[DVector<f64>]) -> f64 {
        let Some(key) = self.joint.key_of(path) else {
            return 0.0;
        };
        let d = self.joint.dim();
        let mut p = 1.0;
        for (a, axis) in self.axes.iter().enumerate() {
            let sub: Vec<i64> = key.iter().skip(a).step_by(d).copied().collect();
            p *= axis.mass(&sub);
            if p == 0.0 {
                break;
            }
        }
        p
    }

    fn expectation(&self, g: &(dyn Fn(&[DVector<f64>]) -> f64 + Sync)) -> Result<f64> {
        Ok(expectation_over(&self.entries, g))
    }

    fn step_means(&self) -> Path {
        moments(&self.entries, self.horizon(), self.step_dim()).0
    }

    fn step_covariances(&self) -> Vec<DMatrix<f64>> {
        moments(&self.entries, self.horizon(), self.step_dim()).1
    }

    fn sample(&self, rng: &mut dyn RngCore) -> Path {
        self.joint.sample(rng)
    }
}
