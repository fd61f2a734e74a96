//! Random walks on `SL(d, R)`: measures, Lyapunov spectra, Oseledets frames.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::flag::{
    extension_lines, general_position, Configuration, FlagPoint,
};
use crate::linalg::{qr_positive, restricted_det, subspace_intersect, vdot, Matrix, Subspace, INTERSECT_TOL, MAX_DIM};
use crate::parallel::{chunk_ranges, chunk_rng, map_chunks};
use crate::stats::{linear_fit, mean, stderr};
use crate::topology::{is_finer, pair_exponent, removed_pairs, AdmissibleTopology};

pub use crate::flag::extend_configuration;

/// Batches used for the batch-means standard error of the spectrum.
pub const SPECTRUM_BATCHES: usize = 100;

/// Weight of the Haar component in the full-support mollifier.
pub const HAAR_WEIGHT: f64 = 1e-3;

/// Standard errors below this are treated as this; exact orbits otherwise
/// produce meaningless z-scores from rounding noise.
pub const STDERR_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub p: f64,
    pub m: Matrix,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MollifierKind {
    /// Gaussian on the Lie algebra, truncated at 3ε.
    SoBall,
    /// As `SoBall`, mixed with a small Haar component for full support.
    SoBallFull,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mollifier {
    pub kind: MollifierKind,
    pub epsilon: f64,
}

/// A finitely supported probability on `SL(d, R)`, optionally convolved on
/// the left with rotation noise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MeasureJson", into = "MeasureJson")]
pub struct MatrixMeasure {
    d: usize,
    atoms: Vec<Atom>,
    mollify: Option<Mollifier>,
    cumulative: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct MeasureJson {
    d: usize,
    atoms: Vec<Atom>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mollify: Option<Mollifier>,
}

impl From<MatrixMeasure> for MeasureJson {
    fn from(m: MatrixMeasure) -> Self {
        MeasureJson { d: m.d, atoms: m.atoms, mollify: m.mollify }
    }
}

impl TryFrom<MeasureJson> for MatrixMeasure {
    type Error = Error;
    fn try_from(j: MeasureJson) -> Result<Self> {
        MatrixMeasure::new(j.d, j.atoms, j.mollify)
    }
}

impl MatrixMeasure {
    pub fn new(d: usize, atoms: Vec<Atom>, mollify: Option<Mollifier>) -> Result<Self> {
        if !(2..=MAX_DIM).contains(&d) {
            return Err(Error::DimensionTooLarge { d, max: MAX_DIM });
        }
        if atoms.is_empty() {
            return Err(Error::InvalidMeasure("no atoms".into()));
        }
        let total: f64 = atoms.iter().map(|a| a.p).sum();
        if atoms.iter().any(|a| !(a.p > 0.0)) || (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidMeasure(format!("weights must be positive and sum to 1 (sum {total})")));
        }
        for a in &atoms {
            if a.m.rows() != d || a.m.cols() != d {
                return Err(Error::DimensionMismatch("atom size".into()));
            }
            if !a.m.is_finite() {
                return Err(Error::NonFinite("measure atom"));
            }
            if !a.m.is_unimodular(1e-9) {
                return Err(Error::InvalidMeasure(format!("atom with determinant {}", a.m.det())));
            }
        }
        if let Some(m) = mollify {
            if !(m.epsilon > 0.0 && m.epsilon.is_finite()) {
                return Err(Error::InvalidMeasure("mollifier epsilon must be positive".into()));
            }
        }
        let mut acc = 0.0;
        let cumulative = atoms
            .iter()
            .map(|a| {
                acc += a.p;
                acc
            })
            .collect();
        Ok(MatrixMeasure { d, atoms, mollify, cumulative })
    }

    /// Uniform measure on the given matrices.
    pub fn uniform(mats: &[Matrix]) -> Result<Self> {
        let d = mats.first().map_or(0, Matrix::rows);
        let p = 1.0 / mats.len() as f64;
        let atoms = mats.iter().map(|m| Atom { p, m: *m }).collect::<Vec<_>>();
        // renormalize the last weight so the sum is exact
        let mut atoms = atoms;
        let rest: f64 = atoms[..atoms.len() - 1].iter().map(|a| a.p).sum();
        if let Some(last) = atoms.last_mut() {
            last.p = 1.0 - rest;
        }
        MatrixMeasure::new(d, atoms, None)
    }

    pub fn dirac(g: Matrix) -> Result<Self> {
        MatrixMeasure::new(g.rows(), vec![Atom { p: 1.0, m: g }], None)
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn mollifier(&self) -> Option<Mollifier> {
        self.mollify
    }

    pub fn with_mollifier(&self, m: Option<Mollifier>) -> Result<Self> {
        MatrixMeasure::new(self.d, self.atoms.clone(), m)
    }

    /// The image measure under `g ↦ g⁻¹`.
    pub fn inverse(&self) -> Result<Self> {
        if self.mollify.is_some() {
            return Err(Error::InvalidMeasure("inverse of a mollified measure is not represented".into()));
        }
        let integer = self.is_integer();
        let atoms = self
            .atoms
            .iter()
            .map(|a| {
                let mut inv = a.m.inverse()?;
                if integer {
                    // unimodular integer matrices have integer inverses
                    for r in 0..self.d {
                        for c in 0..self.d {
                            inv[(r, c)] = inv[(r, c)].round();
                        }
                    }
                }
                Ok(Atom { p: a.p, m: inv })
            })
            .collect::<Result<Vec<_>>>()?;
        MatrixMeasure::new(self.d, atoms, None)
    }

    /// True when all atoms have exactly integral entries.
    pub fn is_integer(&self) -> bool {
        self.atoms.iter().all(|a| a.m.to_row_vec().iter().all(|x| x.fract() == 0.0 && x.abs() < 2f64.powi(52)))
    }

    /// SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("serializable");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    pub fn sample_index<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        self.cumulative.iter().position(|&c| u < c).unwrap_or(self.atoms.len() - 1)
    }

    /// One draw `g ~ μ` (times rotation noise when mollified).
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Matrix {
        let g = self.atoms[self.sample_index(rng)].m;
        match self.mollify {
            None => g,
            Some(m) => &rotation_noise(self.d, m, rng) * &g,
        }
    }

    pub fn sample_seq<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<Matrix> {
        (0..n).map(|_| self.sample(rng)).collect()
    }
}

/// Matrix exponential of a skew-symmetric matrix, re-orthonormalized.
fn expm_skew(a: &Matrix) -> Matrix {
    let d = a.rows();
    let norm = a.frobenius_norm();
    let mut s = 0;
    while norm / f64::from(1u32 << s) > 0.25 {
        s += 1;
    }
    let b = a.scale(1.0 / f64::from(1u32 << s));
    let mut term = Matrix::identity(d);
    let mut sum = Matrix::identity(d);
    for k in 1..=14 {
        term = (&term * &b).scale(1.0 / k as f64);
        sum = sum.add(&term);
    }
    for _ in 0..s {
        sum = &sum * &sum;
    }
    qr_positive(&sum).map(|(q, _)| q).unwrap_or(sum)
}

/// A Haar-distributed rotation in `SO(d)`.
pub fn haar_rotation<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Matrix {
    loop {
        if let Ok((mut q, _)) = qr_positive(&Matrix::random_gaussian(d, d, rng)) {
            if q.det() < 0.0 {
                for r in 0..d {
                    q[(r, 0)] = -q[(r, 0)];
                }
            }
            return q;
        }
    }
}

/// Rotation noise of the mollifier.
pub fn rotation_noise<R: Rng + ?Sized>(d: usize, m: Mollifier, rng: &mut R) -> Matrix {
    if m.kind == MollifierKind::SoBallFull && rng.random::<f64>() < HAAR_WEIGHT {
        return haar_rotation(d, rng);
    }
    let mut a = Matrix::zeros(d, d);
    for i in 0..d {
        for j in i + 1..d {
            let v = loop {
                let z: f64 = rng.sample(StandardNormal);
                if z.abs() <= 3.0 {
                    break z * m.epsilon;
                }
            };
            a[(i, j)] = v;
            a[(j, i)] = -v;
        }
    }
    expm_skew(&a)
}

/// Lyapunov exponents `χ_1 ≥ ... ≥ χ_d` with batch-means standard errors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LyapunovSpectrum {
    pub chi: Vec<f64>,
    pub stderr: Vec<f64>,
    /// Standard errors of the partial sums `Σ_{i≤j} χ_i`.
    pub partial_stderr: Vec<f64>,
    pub steps: usize,
}

impl LyapunovSpectrum {
    pub fn d(&self) -> usize {
        self.chi.len()
    }

    /// A spectrum known exactly (no sampling error).
    pub fn exact(chi: Vec<f64>) -> Self {
        let d = chi.len();
        LyapunovSpectrum { chi, stderr: vec![0.0; d], partial_stderr: vec![0.0; d], steps: 0 }
    }

    /// z-score of `Σ χ_i` against zero.
    pub fn sum_z(&self) -> f64 {
        let s: f64 = self.chi.iter().sum();
        s.abs() / self.partial_stderr[self.d() - 1].max(STDERR_FLOOR)
    }

    /// Smallest consecutive gap and the standard error attached to it.
    pub fn min_gap(&self) -> (f64, f64) {
        (0..self.d() - 1)
            .map(|i| {
                let se = (self.stderr[i].powi(2) + self.stderr[i + 1].powi(2)).sqrt();
                (self.chi[i] - self.chi[i + 1], se)
            })
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .unwrap_or((f64::INFINITY, 0.0))
    }

    /// Fails unless every consecutive gap exceeds five standard errors.
    pub fn require_simple(&self) -> Result<()> {
        let (gap, se) = self.min_gap();
        if !(gap > 5.0 * se) || gap <= 1e-12 {
            return Err(Error::SpectrumNotSimple { gap, stderr: se });
        }
        Ok(())
    }

    /// `max_i |χ_i − other_i|`.
    pub fn max_deviation(&self, other: &LyapunovSpectrum) -> f64 {
        self.chi.iter().zip(&other.chi).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

/// QR-deflation estimate of the spectrum from `steps` products.
///
/// The orbit is split into [`SPECTRUM_BATCHES`] independent trajectories,
/// each with a short discarded burn-in; the spread of the batch averages
/// gives the standard errors.
pub fn lyapunov_spectrum(mu: &MatrixMeasure, steps: usize, seed: u64) -> LyapunovSpectrum {
    let d = mu.d();
    let len = (steps / SPECTRUM_BATCHES).max(10);
    let burn = (len / 10).clamp(10, 500);
    let batches: Vec<Vec<f64>> = map_chunks(SPECTRUM_BATCHES, seed, "lyapunov", |_, rng| {
        let mut q = Matrix::identity(d);
        let mut sums = vec![0.0; d];
        for step in 0..burn + len {
            let g = mu.sample(rng);
            let (nq, r) = qr_positive(&(&g * &q)).expect("unimodular products stay nonsingular");
            q = nq;
            if step >= burn {
                for (i, s) in sums.iter_mut().enumerate() {
                    *s += r[(i, i)].ln();
                }
            }
        }
        sums.iter().map(|s| s / len as f64).collect()
    });
    let per_exp = |i: usize| -> Vec<f64> { batches.iter().map(|b| b[i]).collect() };
    let mut chi: Vec<f64> = (0..d).map(|i| mean(&per_exp(i))).collect();
    let mut se: Vec<f64> = (0..d).map(|i| stderr(&per_exp(i))).collect();
    // QR deflation orders the exponents already for long batches; sort anyway
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| chi[b].total_cmp(&chi[a]));
    chi = order.iter().map(|&i| chi[i]).collect();
    se = order.iter().map(|&i| se[i]).collect();
    let partial_stderr = (1..=d)
        .map(|j| {
            let sums: Vec<f64> = batches.iter().map(|b| order[..j].iter().map(|&i| b[i]).sum()).collect();
            stderr(&sums)
        })
        .collect();
    LyapunovSpectrum { chi, stderr: se, partial_stderr, steps: len * SPECTRUM_BATCHES }
}

/// The Oseledets splitting at one point of the shift space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OseledetsFrame {
    /// Stable flag `U'_1 ⊂ U'_2 ⊂ ...`, spanned by the slowest directions.
    pub e_plus: FlagPoint,
    /// Unstable flag `U_1 ⊂ U_2 ⊂ ...`.
    pub e_minus: FlagPoint,
    /// Lines `E_i = U_i ∩ U'_{d-i+1}`.
    pub lines: Vec<Subspace>,
    /// Flag distance between the estimates at full and at half depth.
    pub residual: f64,
}

/// Flag of `seq[0] · seq[1] ⋯ seq[n-1] · z`, applying the innermost factor first.
fn tail_flag(seq: &[Matrix], z: &Matrix) -> Result<FlagPoint> {
    let mut w = *z;
    for g in seq.iter().rev() {
        w = qr_positive(&(g * &w))?.0;
    }
    FlagPoint::from_matrix(&w)
}

fn reversed_columns(m: &Matrix) -> Matrix {
    let d = m.cols();
    let idx: Vec<usize> = (0..d).rev().collect();
    m.select_columns(&idx)
}

/// Unstable flag from the backward tail `g_{-1}, g_{-2}, ...`.
fn unstable_flag(left: &[Matrix], z: &Matrix) -> Result<FlagPoint> {
    tail_flag(left, z)
}

/// Stable flag from the forward tail `g_0, g_1, ...` via the transposed
/// product `g_0ᵀ g_1ᵀ ⋯`, whose leading column flag is the singular filtration
/// of `g_{n-1} ⋯ g_0` from the most expanded direction down.
fn stable_flag(right: &[Matrix], z: &Matrix) -> Result<FlagPoint> {
    let transposed: Vec<Matrix> = right.iter().map(Matrix::transpose).collect();
    let f = tail_flag(&transposed, z)?;
    Ok(FlagPoint::from_orthogonal(reversed_columns(f.frame())))
}

impl OseledetsFrame {
    /// Frames from explicit tails: `left = [g_{-1}, g_{-2}, ...]`,
    /// `right = [g_0, g_1, ...]`, with start frames `z_left`, `z_right`.
    pub fn from_tails(left: &[Matrix], right: &[Matrix], z_left: &Matrix, z_right: &Matrix) -> Result<Self> {
        let e_minus = unstable_flag(left, z_left)?;
        let e_plus = stable_flag(right, z_right)?;
        let half_minus = unstable_flag(&left[..left.len() / 2], z_left)?;
        let half_plus = stable_flag(&right[..right.len() / 2], z_right)?;
        let residual = e_minus.distance(&half_minus).max(e_plus.distance(&half_plus));
        let lines = frame_lines(&e_minus, &e_plus)?;
        Ok(OseledetsFrame { e_plus, e_minus, lines, residual })
    }

    /// Unit vectors along the lines.
    pub fn directions(&self) -> Vec<Vec<f64>> {
        self.lines.iter().map(Subspace::direction).collect()
    }
}

fn frame_lines(e_minus: &FlagPoint, e_plus: &FlagPoint) -> Result<Vec<Subspace>> {
    let d = e_minus.d();
    let (ok, margin) = general_position(e_minus, e_plus);
    if !ok {
        return Err(Error::NotGeneralPosition { margin });
    }
    (1..=d)
        .map(|i| {
            let l = subspace_intersect(&e_minus.level(i), &e_plus.level(d - i + 1), INTERSECT_TOL)?;
            if l.dim() != 1 {
                return Err(Error::NotGeneralPosition { margin });
            }
            Ok(l)
        })
        .collect()
}

/// Oseledets frames at a random point, from fresh independent tails of
/// length `depth`. Fails when the half-depth estimates differ by more than `tol`.
pub fn oseledets_frames(
    mu: &MatrixMeasure,
    spectrum: &LyapunovSpectrum,
    depth: usize,
    seed: u64,
    tol: f64,
) -> Result<OseledetsFrame> {
    spectrum.require_simple()?;
    let mut rng = chunk_rng(seed, "oseledets", 0);
    sample_frame(mu, depth, tol, &mut rng)
}

pub(crate) fn sample_frame(mu: &MatrixMeasure, depth: usize, tol: f64, rng: &mut ChaCha8Rng) -> Result<OseledetsFrame> {
    let d = mu.d();
    let left = mu.sample_seq(depth, rng);
    let right = mu.sample_seq(depth, rng);
    let zl = Matrix::random_gaussian(d, d, rng);
    let zr = Matrix::random_gaussian(d, d, rng);
    let frame = OseledetsFrame::from_tails(&left, &right, &zl, &zr)?;
    if !(frame.residual <= tol) {
        return Err(Error::NotConverged { residual: frame.residual });
    }
    Ok(frame)
}

/// Depth after which a flag estimate is accurate to machine precision.
pub fn convergence_depth(spectrum: &LyapunovSpectrum) -> usize {
    let (gap, _) = spectrum.min_gap();
    // a zero gap gives inf, which the cap absorbs
    ((50.0 / gap).ceil() + 50.0).min(5000.0) as usize
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartialSumCheck {
    pub j: usize,
    /// `Σ_{i≤j} χ_i` from the QR spectrum.
    pub lhs: f64,
    /// Monte Carlo mean of `log |det_{U_j(f)} g|` over `f ~ ν`, `g ~ μ`.
    pub rhs: f64,
    pub rhs_stderr: f64,
    pub z: f64,
}

/// Compares the spectrum's partial sums with the volume-growth integral
/// against stationary flags.
pub fn partial_sum_check(
    mu: &MatrixMeasure,
    spectrum: &LyapunovSpectrum,
    j: usize,
    flags: &[FlagPoint],
    seed: u64,
) -> Result<PartialSumCheck> {
    let d = mu.d();
    if j == 0 || j > d {
        return Err(Error::DimensionMismatch(format!("j = {j}")));
    }
    if flags.is_empty() {
        return Err(Error::TooFewPoints { got: 0, need: 1 });
    }
    let ranges = chunk_ranges(flags.len(), crate::parallel::default_chunks(flags.len()));
    let parts: Vec<Result<Vec<f64>>> = map_chunks(ranges.len(), seed, "partial_sum", |k, rng| {
        ranges[k]
            .clone()
            .map(|n| {
                let g = mu.sample(rng);
                Ok(restricted_det(&g, &flags[n].level(j))?.ln())
            })
            .collect()
    });
    let mut values = Vec::with_capacity(flags.len());
    for p in parts {
        values.extend(p?);
    }
    let lhs: f64 = spectrum.chi[..j].iter().sum();
    let rhs = mean(&values);
    let rhs_stderr = stderr(&values);
    let denom = (spectrum.partial_stderr[j - 1].powi(2) + rhs_stderr.powi(2)).sqrt().max(STDERR_FLOOR);
    Ok(PartialSumCheck { j, lhs, rhs, rhs_stderr, z: (lhs - rhs) / denom })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateProbe {
    pub depths: Vec<usize>,
    /// Mean over sampled points of `log dist(g_{-1}⋯g_{-n} Ê, E_T)`.
    pub mean_log_dist: Vec<f64>,
    /// Fitted slope of `mean_log_dist` against `n`; `None` when degenerate.
    pub slope: Option<f64>,
    pub slope_stderr: f64,
    /// `−min_{(i,j) ∈ D_{T,T'}} (χ_i − χ_j)`.
    pub bound: f64,
    /// Depths used in the fit (distance above the precision floor).
    pub fitted: Vec<usize>,
}

/// Distances below this are rounding noise and are left out of the fit.
pub const RATE_FLOOR: f64 = 1e-12;

/// Exponential rate at which pushed extensions approach the Oseledets
/// configuration.
///
/// For each depth `n` the configuration on `T'` at `σ^{-n}ω` is extended to
/// `T` and pushed by `g_{-1} ⋯ g_{-n}`. The push is evaluated in Oseledets
/// coordinates: each extension line is expanded in the lines `E_k(σ^{-n}ω)`,
/// and the growth of every `E_k` comes from QR deflation of the pushed frame,
/// so no unstable direction is ever iterated directly.
pub fn convergence_rate_probe(
    t: &AdmissibleTopology,
    tp: &AdmissibleTopology,
    mu: &MatrixMeasure,
    spectrum: &LyapunovSpectrum,
    depths: &[usize],
    n_points: usize,
    seed: u64,
) -> Result<RateProbe> {
    if !is_finer(t, tp) {
        return Err(Error::NotComparable);
    }
    let pairs = removed_pairs(t, tp)?;
    let bound = -pairs.iter().map(|&p| pair_exponent(&spectrum.chi, p)).fold(f64::INFINITY, f64::min);
    if pairs.is_empty() {
        return Ok(RateProbe {
            depths: depths.to_vec(),
            mean_log_dist: vec![f64::NEG_INFINITY; depths.len()],
            slope: None,
            slope_stderr: 0.0,
            bound: 0.0,
            fitted: Vec::new(),
        });
    }
    spectrum.require_simple()?;
    let conv = convergence_depth(spectrum);
    let n_max = depths.iter().copied().max().unwrap_or(0);
    let runs: Vec<Result<Vec<f64>>> = map_chunks(n_points.max(1), seed, "rate_probe", |_, rng| {
        let d = mu.d();
        let left = mu.sample_seq(n_max + conv, rng);
        let right = mu.sample_seq(conv, rng);
        let zl = Matrix::random_gaussian(d, d, rng);
        let zr = Matrix::random_gaussian(d, d, rng);
        let here = OseledetsFrame::from_tails(&left[..conv], &right, &zl, &zr)?;
        let target = Configuration::from_lines(t, &here.lines);
        depths
            .iter()
            .map(|&n| {
                let mut back_right: Vec<Matrix> = left[..n].iter().rev().copied().collect();
                back_right.extend_from_slice(&right);
                let there = OseledetsFrame::from_tails(&left[n..n + conv], &back_right, &zl, &zr)?;
                let pushed = pushed_extension(t, tp, &there, &here, &left[..n])?;
                let dist = crate::flag::config_distance(&pushed, &target)?;
                Ok(dist.ln())
            })
            .collect()
    });
    let mut per_depth = vec![Vec::new(); depths.len()];
    for r in runs {
        for (k, v) in r?.into_iter().enumerate() {
            per_depth[k].push(v);
        }
    }
    let mean_log_dist: Vec<f64> = per_depth.iter().map(|v| mean(v)).collect();
    let (xs, ys): (Vec<f64>, Vec<f64>) = depths
        .iter()
        .zip(&mean_log_dist)
        .filter(|(_, &y)| y.is_finite() && y > RATE_FLOOR.ln())
        .map(|(&n, &y)| (n as f64, y))
        .unzip();
    let fitted: Vec<usize> = xs.iter().map(|&x| x as usize).collect();
    let (slope, slope_stderr) = if xs.len() >= 3 {
        let f = linear_fit(&xs, &ys);
        (Some(f.slope), f.slope_stderr)
    } else {
        (None, 0.0)
    };
    Ok(RateProbe { depths: depths.to_vec(), mean_log_dist, slope, slope_stderr, bound, fitted })
}

/// `g_{-1} ⋯ g_{-n} Ê(σ^{-n}ω)` assembled from pushed extension lines.
fn pushed_extension(
    t: &AdmissibleTopology,
    tp: &AdmissibleTopology,
    there: &OseledetsFrame,
    here: &OseledetsFrame,
    path: &[Matrix],
) -> Result<Configuration> {
    let d = t.d();
    let xp = Configuration::from_lines(tp, &there.lines);
    let ext = extension_lines(&xp);
    let e_there = there.directions();
    let e_here = here.directions();
    // QR deflation of the frame E_1..E_d along the path; innermost factor first
    let mut m = Matrix::from_columns(d, &e_there)?;
    let (mut q, r0) = qr_positive(&m)?;
    let mut logs: Vec<f64> = (0..d).map(|k| r0[(k, k)].ln()).collect();
    for g in path.iter().rev() {
        m = g * &q;
        let (nq, r) = qr_positive(&m)?;
        q = nq;
        for (k, l) in logs.iter_mut().enumerate() {
            *l += r[(k, k)].ln();
        }
    }
    // signed factor with P e_k = exp(logs[k]) / <ê_k, q_k> · ê_k
    let proj: Vec<f64> = (0..d).map(|k| vdot(&e_here[k], &q.col(k))).collect();
    let lines = (1..=d)
        .map(|i| {
            let support = tp.atom(i);
            let basis = Matrix::from_columns(d, &support.iter().map(|&k| e_there[k - 1].clone()).collect::<Vec<_>>())?;
            let c = least_squares(&basis, &ext[i - 1].direction())?;
            let mut v = vec![0.0; d];
            for (n, &k) in support.iter().enumerate() {
                let w = c[n] * (logs[k - 1] - logs[i - 1]).exp() / proj[k - 1];
                for (x, e) in v.iter_mut().zip(&e_here[k - 1]) {
                    *x += w * e;
                }
            }
            Subspace::line(&v)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Configuration::from_lines(t, &lines))
}

/// Coefficients `c` minimizing `|A c − b|` for `A` with independent columns.
fn least_squares(a: &Matrix, b: &[f64]) -> Result<Vec<f64>> {
    let (q, r) = qr_positive(a)?;
    let k = a.cols();
    let qtb: Vec<f64> = (0..k).map(|j| vdot(&q.col(j), b)).collect();
    let mut c = vec![0.0; k];
    for j in (0..k).rev() {
        let s: f64 = (j + 1..k).map(|l| r[(j, l)] * c[l]).sum();
        c[j] = (qtb[j] - s) / r[(j, j)];
    }
    Ok(c)
}
