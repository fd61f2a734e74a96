//! Empirical stationary measures, dimension estimators and fiber measures.
//!
//! Distances used by the estimators are chordal: a subspace `U` is embedded
//! by its orthogonal projector, `|P_U − P_V|_F / √2 = (Σ sin² θ_k)^{1/2}`,
//! and a flag or configuration by the concatenation over its levels or open
//! sets. This is bi-Lipschitz to the principal-angle metric, so dimensions
//! agree, and it lets kd-trees do the neighbor searches.

use std::io::{Read, Write};

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flag::{
    fiber_chart, general_position, oseledets_lines, project_config, Configuration, FlagPoint, PartialFlagPoint,
};
use crate::kdtree::{KdTree, Norm};
use crate::linalg::{qr_positive, Matrix, Subspace};
use crate::parallel::chunk_rng;
use crate::stats::{linear_fit, mean, quantile, trimmed_mean, variance};
use crate::topology::{one_step, AdmissibleTopology, IntervalPartition};
use crate::walk::MatrixMeasure;

/// Doubling the depth must move sampled points by less than this.
pub const DEPTH_TOL: f64 = 1e-9;

/// Fewest ball-mass regressions (centers) needed for an estimate.
const MIN_CENTERS: usize = 10;

const MAGIC: &[u8; 4] = b"FLGC";
const VERSION: u16 = 1;

/// The space a cloud lives in.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CloudSpace {
    /// Partial flags of type `Q`; records are frames whose leading columns
    /// span the levels.
    Partition(IntervalPartition),
    /// Configurations of `X_T^{f'}`; records hold the lines `E_i` as columns.
    Topology { topology: AdmissibleTopology, anchor: FlagPoint },
}

impl CloudSpace {
    pub fn d(&self) -> usize {
        match self {
            CloudSpace::Partition(q) => q.d(),
            CloudSpace::Topology { topology, .. } => topology.d(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CloudMeta {
    pub depth: u64,
    pub seed: u64,
    /// Hex SHA-256 of the sampling measure (empty for synthetic clouds).
    pub measure_hash: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    space: CloudSpace,
    points: Vec<Matrix>,
    meta: CloudMeta,
}

impl PointCloud {
    pub fn new(space: CloudSpace, points: Vec<Matrix>, meta: CloudMeta) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::TooFewPoints { got: 0, need: 1 });
        }
        let d = space.d();
        for p in &points {
            if p.rows() != d || p.cols() != d {
                return Err(Error::DimensionMismatch("cloud record size".into()));
            }
            if !p.is_finite() {
                return Err(Error::NonFinite("cloud record"));
            }
            if let CloudSpace::Topology { .. } = space {
                if p.det().abs() < 1e-12 {
                    return Err(Error::NotGeneralPosition { margin: p.det().abs() });
                }
            }
        }
        Ok(PointCloud { space, points, meta })
    }

    pub fn space(&self) -> &CloudSpace {
        &self.space
    }

    pub fn meta(&self) -> &CloudMeta {
        &self.meta
    }

    pub fn points(&self) -> &[Matrix] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn d(&self) -> usize {
        self.space.d()
    }

    /// Point `k` as a partial flag (partition clouds only).
    pub fn partial(&self, k: usize) -> Result<PartialFlagPoint> {
        match &self.space {
            CloudSpace::Partition(q) => PartialFlagPoint::from_matrix(q, &self.points[k]),
            _ => Err(Error::Format("not a partition cloud".into())),
        }
    }

    /// Point `k` as a configuration (topology clouds only).
    pub fn configuration(&self, k: usize) -> Result<Configuration> {
        match &self.space {
            CloudSpace::Topology { topology, .. } => Ok(Configuration::from_lines(topology, &self.lines(k)?)),
            _ => Err(Error::Format("not a topology cloud".into())),
        }
    }

    fn lines(&self, k: usize) -> Result<Vec<Subspace>> {
        let m = &self.points[k];
        (0..self.d()).map(|c| Subspace::line(&m.col(c))).collect()
    }

    /// Keeps the points with the given indices.
    pub fn subset(&self, idx: &[usize]) -> Result<PointCloud> {
        PointCloud::new(self.space.clone(), idx.iter().map(|&i| self.points[i]).collect(), self.meta.clone())
    }

    /// The same points viewed in a coarser partition, or projected to a
    /// coarser topology.
    pub fn project_partition(&self, q: &IntervalPartition) -> Result<PointCloud> {
        match &self.space {
            CloudSpace::Partition(p) if q.d() == p.d() && q.cuts().iter().all(|c| p.cuts().contains(c)) => {
                PointCloud::new(CloudSpace::Partition(q.clone()), self.points.clone(), self.meta.clone())
            }
            _ => Err(Error::NotComparable),
        }
    }

    /// Chordal embedding of every point, flat with [`PointCloud::embed_dim`] columns.
    pub fn embedding(&self) -> Result<Vec<f64>> {
        let rows: Vec<Result<Vec<f64>>> = (0..self.len()).into_par_iter().map(|k| self.embed_one(k)).collect();
        let mut out = Vec::with_capacity(self.len() * self.embed_dim());
        for r in rows {
            out.extend(r?);
        }
        Ok(out)
    }

    pub fn embed_dim(&self) -> usize {
        let d = self.d();
        match &self.space {
            CloudSpace::Partition(q) => (q.levels() - 1) * d * d,
            CloudSpace::Topology { topology, .. } => embedded_masks(topology).len() * d * d,
        }
    }

    fn embed_one(&self, k: usize) -> Result<Vec<f64>> {
        let subs: Vec<Subspace> = match &self.space {
            CloudSpace::Partition(_) => self.partial(k)?.subspaces(),
            CloudSpace::Topology { topology, .. } => {
                let x = self.configuration(k)?;
                embedded_masks(topology).into_iter().map(|m| *x.get_mask(m).expect("open")).collect()
            }
        };
        Ok(embed_subspaces(&subs))
    }

    /// Writes the binary cloud format.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        let d = self.d();
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(d as u16).to_le_bytes())?;
        match &self.space {
            CloudSpace::Partition(q) => {
                w.write_all(&[0u8, q.cuts().len() as u8])?;
                w.write_all(&q.cuts().iter().map(|&c| c as u8).collect::<Vec<_>>())?;
            }
            CloudSpace::Topology { topology, anchor } => {
                w.write_all(&[1u8])?;
                for i in 1..=d {
                    w.write_all(&topology.atom_mask(i).to_le_bytes())?;
                }
                write_matrix(&mut w, anchor.frame())?;
            }
        }
        w.write_all(&self.meta.depth.to_le_bytes())?;
        w.write_all(&self.meta.seed.to_le_bytes())?;
        let hash = self.meta.measure_hash.as_bytes();
        w.write_all(&[hash.len() as u8])?;
        w.write_all(hash)?;
        w.write_all(&(self.points.len() as u64).to_le_bytes())?;
        for p in &self.points {
            write_matrix(&mut w, p)?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<PointCloud> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let version = read_u16(&mut r)?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let d = read_u16(&mut r)? as usize;
        if !(1..=crate::linalg::MAX_DIM).contains(&d) {
            return Err(Error::Format(format!("dimension {d}")));
        }
        let space = match read_u8(&mut r)? {
            0 => {
                let n = read_u8(&mut r)? as usize;
                let mut cuts = vec![0u8; n];
                r.read_exact(&mut cuts)?;
                let q = IntervalPartition::new(cuts.into_iter().map(usize::from).collect())?;
                if q.d() != d {
                    return Err(Error::Format("partition dimension".into()));
                }
                CloudSpace::Partition(q)
            }
            1 => {
                let masks = (0..d).map(|_| read_u16(&mut r)).collect::<std::io::Result<Vec<_>>>()?;
                let topology = AdmissibleTopology::from_masks(d, masks)?;
                let anchor = FlagPoint::from_orthogonal(read_matrix(&mut r, d)?);
                CloudSpace::Topology { topology, anchor }
            }
            k => return Err(Error::Format(format!("unknown kind {k}"))),
        };
        let depth = read_u64(&mut r)?;
        let seed = read_u64(&mut r)?;
        let hlen = read_u8(&mut r)? as usize;
        let mut hash = vec![0u8; hlen];
        r.read_exact(&mut hash)?;
        let measure_hash = String::from_utf8(hash).map_err(|_| Error::Format("hash is not utf-8".into()))?;
        let count = read_u64(&mut r)? as usize;
        let points = (0..count).map(|_| read_matrix(&mut r, d)).collect::<Result<Vec<_>>>()?;
        PointCloud::new(space, points, CloudMeta { depth, seed, measure_hash })
    }

    /// One record per row, row-major entries.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let d = self.d();
        let header: Vec<String> = (0..d).flat_map(|r| (0..d).map(move |c| format!("m{}{}", r + 1, c + 1))).collect();
        writeln!(w, "{}", header.join(","))?;
        for p in &self.points {
            let row: Vec<String> = p.to_row_vec().iter().map(|v| v.to_string()).collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Open sets that vary within `X_T^{f'}` (the tails are fixed by the anchor).
fn embedded_masks(t: &AdmissibleTopology) -> Vec<u16> {
    let d = t.d();
    let tails: Vec<u16> = (1..=d).map(|i| ((1u32 << d) - (1u32 << (i - 1))) as u16).collect();
    t.open_masks().into_iter().filter(|m| !tails.contains(m)).collect()
}

/// Chordal embedding of a partial flag.
pub fn embed_partial(p: &PartialFlagPoint) -> Vec<f64> {
    embed_subspaces(&p.subspaces())
}

fn embed_subspaces(subs: &[Subspace]) -> Vec<f64> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    subs.iter().flat_map(|u| u.projector().to_row_vec().into_iter().map(move |v| v * s)).collect()
}

fn write_matrix<W: Write>(w: &mut W, m: &Matrix) -> Result<()> {
    for v in m.to_row_vec() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_matrix<R: Read>(r: &mut R, d: usize) -> Result<Matrix> {
    let mut vals = Vec::with_capacity(d * d);
    for _ in 0..d * d {
        let mut b = [0u8; 8];
        r.read_exact(&mut b)?;
        vals.push(f64::from_le_bytes(b));
    }
    Matrix::from_row_slice(d, d, &vals)
}

fn read_u8<R: Read>(r: &mut R) -> std::io::Result<u8> {
    let mut b = [0u8; 1];
    r.read_exact(&mut b)?;
    Ok(b[0])
}

fn read_u16<R: Read>(r: &mut R) -> std::io::Result<u16> {
    let mut b = [0u8; 2];
    r.read_exact(&mut b)?;
    Ok(u16::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> std::io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

/// Frame of `g_{-1} ⋯ g_{-n} f_0`, applying `g_{-n}` first.
fn push_frame(seq: &[Matrix], f0: &Matrix) -> Result<Matrix> {
    let mut w = *f0;
    for g in seq.iter().rev() {
        w = qr_positive(&(g * &w))?.0;
    }
    Ok(w)
}

/// Whether sampling verifies its depth by doubling.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DepthCheck {
    /// Recompute 1% of the points at twice the depth.
    Auto,
    Off,
}

/// `n_points` independent approximate `ν` samples `g_{-1} ⋯ g_{-depth} f_0`.
///
/// The start flag `f_0` is drawn once from the seed. With [`DepthCheck::Auto`]
/// a 1% subsample is recomputed at doubled depth, and a displacement above
/// [`DEPTH_TOL`] fails with `DepthInsufficient`.
pub fn sample_stationary_cloud(
    mu: &MatrixMeasure,
    q: &IntervalPartition,
    n_points: usize,
    depth: usize,
    seed: u64,
    check: DepthCheck,
) -> Result<PointCloud> {
    if q.d() != mu.d() {
        return Err(Error::DimensionMismatch("partition vs measure".into()));
    }
    let frames = sample_flags(mu, n_points, depth, seed, check)?;
    let meta = CloudMeta { depth: depth as u64, seed, measure_hash: mu.hash() };
    PointCloud::new(CloudSpace::Partition(q.clone()), frames, meta)
}

fn start_frame(d: usize, seed: u64) -> Matrix {
    let mut rng = chunk_rng(seed, "cloud_start", 0);
    qr_positive(&Matrix::random_gaussian(d, d, &mut rng)).expect("gaussian is invertible").0
}

fn sample_flags(mu: &MatrixMeasure, n_points: usize, depth: usize, seed: u64, check: DepthCheck) -> Result<Vec<Matrix>> {
    if n_points == 0 {
        return Err(Error::TooFewPoints { got: 0, need: 1 });
    }
    let f0 = start_frame(mu.d(), seed);
    let frames: Vec<Result<Matrix>> = (0..n_points)
        .into_par_iter()
        .map(|k| {
            let mut rng = chunk_rng(seed, "cloud", k as u64);
            push_frame(&mu.sample_seq(depth, &mut rng), &f0)
        })
        .collect();
    let frames = frames.into_iter().collect::<Result<Vec<_>>>()?;
    if check == DepthCheck::Auto {
        let n_check = n_points.div_ceil(100);
        let stride = n_points / n_check;
        let worst = (0..n_check)
            .into_par_iter()
            .map(|c| {
                let k = c * stride;
                let mut rng = chunk_rng(seed, "cloud", k as u64);
                let seq = mu.sample_seq(2 * depth, &mut rng);
                let deep = push_frame(&seq, &f0)?;
                Ok(FlagPoint::from_orthogonal(deep).distance(&FlagPoint::from_orthogonal(frames[k])))
            })
            .collect::<Result<Vec<f64>>>()?
            .into_iter()
            .fold(0.0, f64::max);
        if !(worst < DEPTH_TOL) {
            return Err(Error::DepthInsufficient { displacement: worst });
        }
    }
    Ok(frames)
}

/// Stationary configurations `F_T(f, f')` with `f ~ ν` and a fixed anchor `f'`.
pub fn sample_configuration_cloud(
    mu: &MatrixMeasure,
    t: &AdmissibleTopology,
    anchor: &FlagPoint,
    n_points: usize,
    depth: usize,
    seed: u64,
    check: DepthCheck,
) -> Result<PointCloud> {
    if t.d() != mu.d() || anchor.d() != mu.d() {
        return Err(Error::DimensionMismatch("topology vs measure".into()));
    }
    let frames = sample_flags(mu, n_points, depth, seed, check)?;
    let d = mu.d();
    let points = frames
        .into_iter()
        .map(|m| {
            let f = FlagPoint::from_orthogonal(m);
            let (ok, margin) = general_position(&f, anchor);
            if !ok {
                return Err(Error::NotGeneralPosition { margin });
            }
            let lines = oseledets_lines(&f, anchor);
            Matrix::from_columns(d, &lines.iter().map(Subspace::direction).collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>>>()?;
    let meta = CloudMeta { depth: depth as u64, seed, measure_hash: mu.hash() };
    PointCloud::new(CloudSpace::Topology { topology: t.clone(), anchor: *anchor }, points, meta)
}

/// Converts a full-flag partition cloud to configurations on `T` with anchor `f'`.
///
/// Flags not in general position with the anchor (a null event, met only
/// through rounding) are dropped; more than 1% dropped is an error.
pub fn configurations_from_flags(cloud: &PointCloud, t: &AdmissibleTopology, anchor: &FlagPoint) -> Result<PointCloud> {
    let d = cloud.d();
    let mut worst = f64::INFINITY;
    let mut points = Vec::with_capacity(cloud.len());
    for m in cloud.points() {
        let f = FlagPoint::from_orthogonal(*m);
        let (ok, margin) = general_position(&f, anchor);
        if !ok {
            worst = worst.min(margin);
            continue;
        }
        points.push(Matrix::from_columns(d, &oseledets_lines(&f, anchor).iter().map(Subspace::direction).collect::<Vec<_>>())?);
    }
    if (cloud.len() - points.len()) * 100 > cloud.len() {
        return Err(Error::NotGeneralPosition { margin: worst });
    }
    PointCloud::new(CloudSpace::Topology { topology: t.clone(), anchor: *anchor }, points, cloud.meta().clone())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DimensionMethod {
    BallMass,
    KnnMle,
    FiberPooled,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DimensionEstimate {
    pub delta: f64,
    /// 95% half-width.
    pub ci: f64,
    pub r_range: (f64, f64),
    pub method: DimensionMethod,
    /// R² of the regression of mean log-mass on log r (1 for kNN).
    pub r2: f64,
}

/// `n` log-spaced radii covering `[lo, hi]`.
pub fn log_radii(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| (lo.ln() + (hi / lo).ln() * k as f64 / (n - 1).max(1) as f64).exp()).collect()
}

/// Default regression radii.
pub fn default_radii() -> Vec<f64> {
    log_radii(1e-3, 1e-1, 8)
}

/// Points as a flat array of fixed width.
#[derive(Clone, Debug)]
pub struct Embedded {
    pub data: Vec<f64>,
    pub dim: usize,
}

impl Embedded {
    pub fn new(data: Vec<f64>, dim: usize) -> Self {
        assert!(dim > 0 && data.len() % dim == 0);
        Embedded { data, dim }
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    fn point(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// Cartesian product with another cloud of the same size (`ℓ²` product metric).
    pub fn product(&self, other: &Embedded) -> Embedded {
        assert_eq!(self.len(), other.len());
        let data = (0..self.len()).flat_map(|i| self.point(i).iter().chain(other.point(i)).copied()).collect();
        Embedded { data, dim: self.dim + other.dim }
    }
}

fn bootstrap_ci<R: Rng + ?Sized>(values: &[f64], stat: impl Fn(&[f64]) -> f64, rng: &mut R) -> f64 {
    let n = values.len();
    let reps: Vec<f64> = (0..200)
        .map(|_| {
            let s: Vec<f64> = (0..n).map(|_| values[rng.random_range(0..n)]).collect();
            stat(&s)
        })
        .collect();
    (1.96 * variance(&reps).sqrt()).max(1e-12)
}

/// Ball-mass local dimension of an embedded cloud.
///
/// For `n_centers` random centers, `log ν̂(B(x, r))` is regressed on `log r`
/// over the radii with nonzero mass; the estimate is the 10% trimmed mean
/// of the slopes, with a bootstrap over centers for the interval.
pub fn local_dimension_points(points: &Embedded, radii: &[f64], n_centers: usize, seed: u64) -> Result<DimensionEstimate> {
    let n = points.len();
    if n < 2 {
        return Err(Error::TooFewPoints { got: n, need: 2 });
    }
    if radii.len() < 3 {
        return Err(Error::InvalidMeasure("at least three radii are needed".into()));
    }
    let mut rng = chunk_rng(seed, "local_dimension", 0);
    let centers = sample_indices(&mut rng, n, n_centers.min(n)).into_vec();
    let tree = KdTree::new(&points.data, points.dim, Norm::Euclidean);
    let log_r: Vec<f64> = radii.iter().map(|r| r.ln()).collect();
    let per_center: Vec<(Option<f64>, Vec<f64>)> = centers
        .par_iter()
        .map(|&c| {
            let q = points.point(c);
            let masses: Vec<f64> =
                radii.iter().map(|&r| tree.count_within(q, r, Some(c)) as f64 / (n - 1) as f64).collect();
            let (xs, ys): (Vec<f64>, Vec<f64>) =
                log_r.iter().zip(&masses).filter(|(_, &m)| m > 0.0).map(|(&x, &m)| (x, m.ln())).unzip();
            let slope = (xs.len() >= 3).then(|| linear_fit(&xs, &ys).slope);
            (slope, masses)
        })
        .collect();
    let slopes: Vec<f64> = per_center.iter().filter_map(|(s, _)| *s).collect();
    // regression of the center-averaged mass
    let avg: Vec<f64> = (0..radii.len()).map(|k| mean(&per_center.iter().map(|(_, m)| m[k]).collect::<Vec<_>>())).collect();
    let (xs, ys): (Vec<f64>, Vec<f64>) =
        log_r.iter().zip(&avg).filter(|(_, &m)| m > 0.0).map(|(&x, &m)| (x, m.ln())).unzip();
    let r2 = if xs.len() >= 3 { linear_fit(&xs, &ys).r2 } else { 0.0 };
    let r_range = (radii[0], radii[radii.len() - 1]);
    if slopes.len() < MIN_CENTERS.min(n_centers) {
        return Err(Error::InsufficientScaling { r2, estimate: slopes.first().copied().unwrap_or(f64::NAN) });
    }
    let stat = |v: &[f64]| trimmed_mean(v, 0.1).max(0.0);
    let delta = stat(&slopes);
    if r2 < 0.9 {
        return Err(Error::InsufficientScaling { r2, estimate: delta });
    }
    let ci = bootstrap_ci(&slopes, stat, &mut rng);
    Ok(DimensionEstimate { delta, ci, r_range, method: DimensionMethod::BallMass, r2 })
}

/// `log` of the center-averaged ball mass at each radius (`-inf` when empty),
/// for plotting the regression behind [`local_dimension_points`].
pub fn mean_log_mass(points: &Embedded, radii: &[f64], n_centers: usize, seed: u64) -> Vec<f64> {
    let n = points.len();
    if n < 2 {
        return vec![f64::NEG_INFINITY; radii.len()];
    }
    let mut rng = chunk_rng(seed, "local_dimension", 0);
    let centers = sample_indices(&mut rng, n, n_centers.min(n)).into_vec();
    let tree = KdTree::new(&points.data, points.dim, Norm::Euclidean);
    radii
        .iter()
        .map(|&r| {
            let m: Vec<f64> =
                centers.par_iter().map(|&c| tree.count_within(points.point(c), r, Some(c)) as f64 / (n - 1) as f64).collect();
            mean(&m).ln()
        })
        .collect()
}

/// Ball-mass local dimension of a cloud under the chordal metric.
pub fn local_dimension(cloud: &PointCloud, radii: &[f64], n_centers: usize, seed: u64) -> Result<DimensionEstimate> {
    if cloud.embed_dim() == 0 {
        return Ok(point_mass_estimate(radii, DimensionMethod::BallMass));
    }
    local_dimension_points(&Embedded::new(cloud.embedding()?, cloud.embed_dim()), radii, n_centers, seed)
}

fn point_mass_estimate(radii: &[f64], method: DimensionMethod) -> DimensionEstimate {
    let r_range = (radii.first().copied().unwrap_or(0.0), radii.last().copied().unwrap_or(0.0));
    DimensionEstimate { delta: 0.0, ci: 1e-12, r_range, method, r2: 1.0 }
}

/// Query points used by [`knn_dimension`].
pub const KNN_QUERIES: usize = 2000;

/// Levina-Bickel maximum-likelihood dimension from the `k` nearest
/// neighbors, averaged over a random subset of query points.
pub fn knn_dimension_points(points: &Embedded, k: usize, seed: u64) -> Result<DimensionEstimate> {
    let n = points.len();
    if k < 3 || n <= k {
        return Err(Error::TooFewPoints { got: n, need: k + 1 });
    }
    let mut rng = chunk_rng(seed, "knn_dimension", 0);
    let queries = sample_indices(&mut rng, n, KNN_QUERIES.min(n)).into_vec();
    let tree = KdTree::new(&points.data, points.dim, Norm::Euclidean);
    let est: Vec<(f64, f64, f64)> = queries
        .par_iter()
        .map(|&q| {
            let nn = tree.knn(points.point(q), k, Some(q));
            let tk = nn[k - 1];
            if tk <= 0.0 {
                return (0.0, 0.0, 0.0);
            }
            let s: f64 = nn[..k - 1].iter().map(|&t| (tk / t.max(tk * 1e-300)).ln()).sum();
            // (k - 2) makes the per-point estimator unbiased
            ((k - 2) as f64 / s, nn[0], tk)
        })
        .collect();
    let dims: Vec<f64> = est.iter().map(|e| e.0).collect();
    let delta = mean(&dims);
    let ci = bootstrap_ci(&dims, mean, &mut rng);
    let r_lo = quantile(&est.iter().map(|e| e.1).collect::<Vec<_>>(), 0.5);
    let r_hi = quantile(&est.iter().map(|e| e.2).collect::<Vec<_>>(), 0.5);
    Ok(DimensionEstimate { delta, ci, r_range: (r_lo, r_hi), method: DimensionMethod::KnnMle, r2: 1.0 })
}

pub fn knn_dimension(cloud: &PointCloud, k: usize, seed: u64) -> Result<DimensionEstimate> {
    if k < 5 {
        return Err(Error::InvalidMeasure("k must be at least 5".into()));
    }
    if cloud.embed_dim() == 0 {
        return Ok(point_mass_estimate(&[], DimensionMethod::KnnMle));
    }
    knn_dimension_points(&Embedded::new(cloud.embedding()?, cloud.embed_dim()), k, seed)
}

/// Parameters for fiber conditioning.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiberOptions {
    pub bin_radius: f64,
    /// Bins smaller than this are skipped.
    pub min_bin: usize,
    /// Radii for the one-dimensional regressions in the chart coordinate.
    pub radii: Vec<f64>,
    /// Centers per bin.
    pub n_centers: usize,
}

impl Default for FiberOptions {
    fn default() -> Self {
        FiberOptions { bin_radius: 0.05, min_bin: 500, radii: log_radii(1e-2, 3e-1, 8), n_centers: 200 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiberBin {
    /// Cloud index of the bin center.
    pub center: usize,
    pub n_points: usize,
    /// Angle `θ` of the chart at the center.
    pub theta: f64,
    pub gamma: Option<DimensionEstimate>,
    /// Set when the bin's regression failed.
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiberReport {
    pub arrow: (usize, usize),
    pub bin_radius: f64,
    pub bins: Vec<FiberBin>,
    pub pooled: DimensionEstimate,
}

/// Greedy cover: each unassigned point in shuffled order becomes a center
/// and takes every unassigned point within `radius` of it.
fn greedy_bins(base: &Embedded, radius: f64, seed: u64) -> Vec<(usize, Vec<usize>)> {
    let n = base.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = chunk_rng(seed, "bins", 0);
    rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng);
    let mut assigned = vec![false; n];
    let mut bins = Vec::new();
    for &c in &order {
        if assigned[c] {
            continue;
        }
        let q = base.point(c).to_vec();
        let members: Vec<usize> = (0..n)
            .into_par_iter()
            .filter(|&i| !assigned[i] && Norm::Euclidean.dist(&q, base.point(i)) < radius)
            .collect();
        for &i in &members {
            assigned[i] = true;
        }
        assigned[c] = true;
        bins.push((c, members));
    }
    bins
}

/// Embedding of the projections `π_{T,T'}(x)` of a topology cloud.
fn base_embedding(cloud: &PointCloud, tp: &AdmissibleTopology) -> Result<Embedded> {
    let masks = embedded_masks(tp);
    let d = cloud.d();
    if masks.is_empty() {
        return Ok(Embedded::new(vec![0.0; cloud.len()], 1));
    }
    let rows: Vec<Result<Vec<f64>>> = (0..cloud.len())
        .into_par_iter()
        .map(|k| {
            let x = cloud.configuration(k)?;
            let subs: Vec<Subspace> = masks.iter().map(|&m| *x.get_mask(m).expect("open")).collect();
            Ok(embed_subspaces(&subs))
        })
        .collect();
    let mut data = Vec::with_capacity(cloud.len() * masks.len() * d * d);
    for r in rows {
        data.extend(r?);
    }
    Ok(Embedded::new(data, masks.len() * d * d))
}

/// Conditional measures of a topology cloud along the one-step arrow
/// `(T, T')`, estimated per bin of the projection `π_{T,T'}`.
///
/// Fiber points are mapped through the chart at the bin center and their
/// one-dimensional dimension is measured in the chart coordinate `u`. The
/// pooled estimate is the size-weighted mean over bins whose regression
/// succeeded.
pub fn condition_on_projection(
    cloud: &PointCloud,
    tp: &AdmissibleTopology,
    opts: &FiberOptions,
    seed: u64,
) -> Result<FiberReport> {
    let t = match cloud.space() {
        CloudSpace::Topology { topology, .. } => topology.clone(),
        _ => return Err(Error::Format("fiber conditioning needs a topology cloud".into())),
    };
    let arrow = one_step(&t, tp).ok_or(Error::NotOneStep)?;
    let base = base_embedding(cloud, tp)?;
    let bins = greedy_bins(&base, opts.bin_radius, seed);
    let largest = bins.iter().map(|(_, m)| m.len()).max().unwrap_or(0);
    let big: Vec<&(usize, Vec<usize>)> = bins.iter().filter(|(_, m)| m.len() >= opts.min_bin).collect();
    if big.is_empty() {
        return Err(Error::BinsTooSparse { largest, need: opts.min_bin });
    }
    let results: Vec<Result<FiberBin>> = big
        .par_iter()
        .enumerate()
        .map(|(b, (c, members))| {
            let x = cloud.configuration(*c)?;
            let chart = fiber_chart(&x, tp)?;
            let us = members
                .iter()
                .map(|&k| Ok(chart.approx_coordinate(&cloud.configuration(k)?)))
                .collect::<Result<Vec<f64>>>()?;
            let est =
                local_dimension_points(&Embedded::new(us, 1), &opts.radii, opts.n_centers, seed ^ (b as u64 + 1));
            let (gamma, error) = match est {
                Ok(e) => (Some(e), None),
                Err(e) if e.is_quality_failure() => (None, Some(e.to_string())),
                Err(e) => return Err(e),
            };
            Ok(FiberBin { center: *c, n_points: members.len(), theta: chart.theta(), gamma, error })
        })
        .collect();
    let bins = results.into_iter().collect::<Result<Vec<_>>>()?;
    let ok: Vec<(&DimensionEstimate, f64)> =
        bins.iter().filter_map(|b| b.gamma.as_ref().map(|g| (g, b.n_points as f64))).collect();
    if ok.is_empty() {
        let estimate = f64::NAN;
        return Err(Error::InsufficientScaling { r2: 0.0, estimate });
    }
    let w: f64 = ok.iter().map(|(_, n)| n).sum();
    let delta = ok.iter().map(|(g, n)| g.delta * n).sum::<f64>() / w;
    let ci = (ok.iter().map(|(g, n)| (g.ci * n).powi(2)).sum::<f64>()).sqrt() / w;
    let r2 = ok.iter().map(|(g, n)| g.r2 * n).sum::<f64>() / w;
    let pooled = DimensionEstimate { delta, ci, r_range: (opts.radii[0], opts.radii[opts.radii.len() - 1]), method: DimensionMethod::FiberPooled, r2 };
    Ok(FiberReport { arrow, bin_radius: opts.bin_radius, bins, pooled })
}

/// Smallest radius on a log grid at which one base ball in ten (over 200
/// random centers) holds `min_bin` points.
///
/// Mixing neighboring fibers inside a bin inflates the fiber dimension by an
/// amount growing with the radius, so the rule takes the smallest radius that
/// still yields a usable share of bins.
pub fn suggest_bin_radius(cloud: &PointCloud, tp: &AdmissibleTopology, min_bin: usize, seed: u64) -> Result<f64> {
    let base = base_embedding(cloud, tp)?;
    let n = base.len();
    if n < min_bin {
        return Err(Error::TooFewPoints { got: n, need: min_bin });
    }
    let tree = KdTree::new(&base.data, base.dim, Norm::Euclidean);
    let mut rng = chunk_rng(seed, "bin_radius", 0);
    let centers = sample_indices(&mut rng, n, 200.min(n)).into_vec();
    for r in log_radii(1e-3, 2.0, 45) {
        let counts: Vec<f64> =
            centers.par_iter().map(|&c| tree.count_within(base.point(c), r, None) as f64).collect();
        if quantile(&counts, 0.9) >= min_bin as f64 {
            return Ok(r);
        }
    }
    Ok(2.0)
}

/// Shorthand for the projected cloud `π_{T,T'}` of a topology cloud.
pub fn project_cloud(cloud: &PointCloud, tp: &AdmissibleTopology) -> Result<Vec<Configuration>> {
    (0..cloud.len()).map(|k| project_config(tp, &cloud.configuration(k)?)).collect()
}
