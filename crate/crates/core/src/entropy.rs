//! Entropy estimators, the Furstenberg bound, the Lyapunov dimension
//! profile and Ledrappier-Young consistency reports.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kdtree::{KdTree, Norm};
use crate::linalg::Matrix;
use crate::measure::{sample_stationary_cloud, DepthCheck, DimensionEstimate, Embedded};
use crate::parallel::chunk_rng;
use crate::stats::{digamma, mean, variance};
use crate::topology::{removed_pairs, AdmissibleTopology, IntervalPartition};
use crate::walk::{convergence_depth, lyapunov_spectrum, LyapunovSpectrum, MatrixMeasure, Mollifier, MollifierKind};

/// Largest support of `μ^{(n)}` that rw_entropy will enumerate.
pub const SUPPORT_LIMIT: usize = 10_000_000;

/// Grid for hashing non-integer matrices.
pub const FLOAT_GRID: f64 = 1e-9;

/// Steps used for the mollified spectrum in [`mollified_mi`].
pub const MI_SPECTRUM_STEPS: usize = 1_000_000;

/// Subsample spreads below this many nats never count as unstable.
pub const MI_ABS_FLOOR: f64 = 0.02;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EntropyMethod {
    ExactEnumeration,
    Extrapolated,
    MiKnn,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntropyEstimate {
    pub h: f64,
    /// Half-width of the uncertainty band.
    pub ci: f64,
    pub method: EntropyMethod,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_max: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    /// `H(μ^{(n)})` for `n = 0..=n_max` (enumeration only).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub entropies: Vec<f64>,
    /// Largest entry discrepancy between matrices merged under one float key.
    #[serde(default)]
    pub collision_audit: f64,
}

impl EntropyEstimate {
    /// An externally supplied value.
    pub fn given(h: f64, ci: f64, method: EntropyMethod) -> Self {
        EntropyEstimate { h, ci, method, n_max: None, samples: None, entropies: Vec::new(), collision_audit: 0.0 }
    }

    /// `H(μ^{(n)}) / n` for `n ≥ 1`.
    pub fn ratios(&self) -> Vec<f64> {
        self.entropies.iter().enumerate().skip(1).map(|(n, h)| h / n as f64).collect()
    }

    /// Plain increments `H(μ^{(n)}) − H(μ^{(n−1)})`.
    pub fn increments(&self) -> Vec<f64> {
        self.entropies.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// First-order Richardson extrapolations `n Δ_n − (n−1) Δ_{n−1}` of
    /// the increments, indexed from `n = 2`.
    pub fn extrapolated(&self) -> Vec<f64> {
        let inc = self.increments();
        (1..inc.len()).map(|k| (k + 1) as f64 * inc[k] - k as f64 * inc[k - 1]).collect()
    }
}

/// Common denominator `D` with every weight in `ℤ/D`, if a small one exists.
fn common_denominator(weights: &[f64]) -> Option<u64> {
    (1..=100_000u64).find(|&den| {
        weights.iter().all(|&p| {
            let x = p * den as f64;
            (x - x.round()).abs() < 1e-9 * den as f64
        })
    })
}

#[derive(Clone, Copy)]
enum Weight {
    Count(u128),
    Real(f64),
}

/// Exact convolution-power entropies `H(μ^{(n)})`, `n = 0..=n_max`.
///
/// Matrices are keyed exactly: integer atoms by their entries, others by
/// rounding to [`FLOAT_GRID`]. When the weights share a small denominator
/// the path counts are kept as integers, so equal multisets of masses (as
/// for `μ` and its inverse image) give bit-identical entropies.
pub fn rw_entropies(mu: &MatrixMeasure, n_max: usize, limit: usize) -> Result<(Vec<f64>, f64)> {
    if mu.mollifier().is_some() {
        return Err(Error::InvalidMeasure("random-walk entropy needs a discrete measure".into()));
    }
    let d = mu.d();
    let integer = mu.is_integer();
    let weights: Vec<f64> = mu.atoms().iter().map(|a| a.p).collect();
    let den = common_denominator(&weights).filter(|&den| (den as u128).checked_pow(n_max as u32).is_some());
    let atom_w: Vec<Weight> = weights
        .iter()
        .map(|&p| match den {
            Some(den) => Weight::Count((p * den as f64).round() as u128),
            None => Weight::Real(p),
        })
        .collect();
    let key_of = |m: &Matrix| -> Result<Vec<i64>> {
        m.to_row_vec()
            .iter()
            .map(|&x| {
                let v = if integer { x } else { (x / FLOAT_GRID).round() };
                if !(v.abs() < 9.0e15) {
                    return Err(Error::StateExplosion { n: 0, limit, partial: Vec::new() });
                }
                Ok(v as i64)
            })
            .collect()
    };
    // integer keys are the matrices themselves; float keys keep the first
    // matrix that reached them
    let mut support: HashMap<Vec<i64>, (Weight, Option<Box<[f64]>>)> = HashMap::new();
    let id = Matrix::identity(d);
    support.insert(key_of(&id)?, (atom_w[0].unit(), (!integer).then(|| id.to_row_vec().into_boxed_slice())));
    let mut entropies = vec![0.0];
    let mut audit: f64 = 0.0;
    for n in 1..=n_max {
        let mut next: HashMap<Vec<i64>, (Weight, Option<Box<[f64]>>)> = HashMap::with_capacity(support.len() * 2);
        for (key, (w, rep)) in &support {
            let m = match rep {
                Some(r) => Matrix::from_row_slice(d, d, r)?,
                None => Matrix::from_row_slice(d, d, &key.iter().map(|&v| v as f64).collect::<Vec<_>>())?,
            };
            for (a, aw) in mu.atoms().iter().zip(&atom_w) {
                let prod = &m * &a.m;
                let key = key_of(&prod).map_err(|_| Error::StateExplosion { n, limit, partial: entropies.clone() })?;
                let add = w.mul(aw);
                match next.get_mut(&key) {
                    Some((acc, rep)) => {
                        *acc = acc.add(&add);
                        if let Some(r) = rep {
                            let diff = r.iter().zip(prod.to_row_vec()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
                            audit = audit.max(diff);
                        }
                    }
                    None => {
                        next.insert(key, (add, (!integer).then(|| prod.to_row_vec().into_boxed_slice())));
                    }
                }
            }
            if next.len() > limit {
                return Err(Error::StateExplosion { n, limit, partial: entropies });
            }
        }
        support = next;
        let scale = den.map(|den| (den as f64).powi(n as i32));
        let mut masses: Vec<f64> = support
            .values()
            .map(|(w, _)| match (w, scale) {
                (Weight::Count(c), Some(s)) => *c as f64 / s,
                (Weight::Real(p), _) => *p,
                (Weight::Count(c), None) => *c as f64,
            })
            .collect();
        masses.sort_by(f64::total_cmp);
        entropies.push(masses.iter().filter(|&&p| p > 0.0).map(|&p| -p * p.ln()).sum::<f64>().max(0.0));
    }
    Ok((entropies, audit))
}

impl Weight {
    fn unit(&self) -> Weight {
        match self {
            Weight::Count(_) => Weight::Count(1),
            Weight::Real(_) => Weight::Real(1.0),
        }
    }

    fn mul(&self, other: &Weight) -> Weight {
        match (self, other) {
            (Weight::Count(a), Weight::Count(b)) => Weight::Count(a * b),
            (Weight::Real(a), Weight::Real(b)) => Weight::Real(a * b),
            _ => unreachable!("weights share one representation"),
        }
    }

    fn add(&self, other: &Weight) -> Weight {
        match (self, other) {
            (Weight::Count(a), Weight::Count(b)) => Weight::Count(a + b),
            (Weight::Real(a), Weight::Real(b)) => Weight::Real(a + b),
            _ => unreachable!("weights share one representation"),
        }
    }
}

/// Random-walk entropy from exact enumeration up to `n_max`.
///
/// The estimate is the extrapolated increment at `n_max` (see
/// [`EntropyEstimate::extrapolated`]); the band is the spread of the last
/// three extrapolated values.
pub fn rw_entropy(mu: &MatrixMeasure, n_max: usize) -> Result<EntropyEstimate> {
    if n_max < 4 {
        return Err(Error::InvalidMeasure("n_max must be at least 4".into()));
    }
    let (entropies, collision_audit) = rw_entropies(mu, n_max, SUPPORT_LIMIT)?;
    let mut est = EntropyEstimate {
        h: 0.0,
        ci: 0.0,
        method: EntropyMethod::Extrapolated,
        n_max: Some(n_max),
        samples: None,
        entropies,
        collision_audit,
    };
    let ext = est.extrapolated();
    let last = &ext[ext.len() - 3..];
    est.h = ext[ext.len() - 1].max(0.0);
    est.ci = last.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b)) - last.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    Ok(est)
}

/// Pairs `(i, j)`, `i < j`, separated by the partition.
fn separated(q: &IntervalPartition) -> Vec<(usize, usize)> {
    q.separated_pairs()
}

/// `Σ_{ℓ_Q(i) < ℓ_Q(j)} χ_i − χ_j`.
pub fn furstenberg_bound(spectrum: &LyapunovSpectrum, q: &IntervalPartition) -> f64 {
    separated(q).iter().map(|&(i, j)| spectrum.chi[i - 1] - spectrum.chi[j - 1]).sum()
}

/// Standard error of [`furstenberg_bound`], treating the exponents as
/// independent.
pub fn furstenberg_bound_stderr(spectrum: &LyapunovSpectrum, q: &IntervalPartition) -> f64 {
    let d = spectrum.d();
    let mut coef = vec![0.0; d];
    for (i, j) in separated(q) {
        coef[i - 1] += 1.0;
        coef[j - 1] -= 1.0;
    }
    coef.iter().zip(&spectrum.stderr).map(|(c, s)| (c * s).powi(2)).sum::<f64>().sqrt()
}

/// Kraskov-Stögbauer-Grassberger estimate (algorithm 1, max norm) of the
/// mutual information between paired samples.
pub fn ksg_mi(x: &Embedded, y: &Embedded, k: usize) -> Result<f64> {
    let n = x.len();
    if n != y.len() {
        return Err(Error::DimensionMismatch("paired samples".into()));
    }
    if n <= k {
        return Err(Error::TooFewPoints { got: n, need: k + 1 });
    }
    let joint = x.product(y);
    let tj = KdTree::new(&joint.data, joint.dim, Norm::Max);
    let tx = KdTree::new(&x.data, x.dim, Norm::Max);
    let ty = KdTree::new(&y.data, y.dim, Norm::Max);
    let psi: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let eps = tj.knn(tj.point(i), k, Some(i))[k - 1];
            let nx = tx.count_within(tx.point(i), eps, Some(i));
            let ny = ty.count_within(ty.point(i), eps, Some(i));
            digamma(nx as f64 + 1.0) + digamma(ny as f64 + 1.0)
        })
        .collect();
    Ok(digamma(k as f64) + digamma(n as f64) - mean(&psi))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MiEstimate {
    pub mi: f64,
    /// 95% half-width from the disjoint subsamples.
    pub ci: f64,
    /// Furstenberg bound of the mollified spectrum.
    pub rhs: f64,
    pub rhs_stderr: f64,
    pub z: f64,
    pub subsamples: Vec<f64>,
    pub spectrum: LyapunovSpectrum,
}

impl MiEstimate {
    pub fn relative_error(&self) -> f64 {
        (self.mi - self.rhs).abs() / self.rhs.abs()
    }

    pub fn entropy(&self) -> EntropyEstimate {
        let mut e = EntropyEstimate::given(self.mi.max(0.0), self.ci, EntropyMethod::MiKnn);
        e.samples = Some(self.subsamples.len());
        e
    }
}

/// Chart of a group element: its entries.
fn embed_matrix(m: &Matrix) -> Vec<f64> {
    m.to_row_vec()
}

/// Sampling depth for stationary clouds of a walk mollified at scale `ε`.
///
/// A simple spectrum gives [`convergence_depth`] with the doubling check;
/// otherwise the walk is run for `20/ε²` steps (a mixing time of the rotation
/// noise, capped at 4000) and the check is skipped.
pub fn mollified_depth(spectrum: &LyapunovSpectrum, epsilon: f64) -> (usize, DepthCheck) {
    let (gap, se) = spectrum.min_gap();
    if gap > 5.0 * se && gap > 1e-3 {
        (convergence_depth(spectrum), DepthCheck::Auto)
    } else {
        (((20.0 / (epsilon * epsilon)).ceil() as usize).min(4000), DepthCheck::Off)
    }
}

/// Mutual information between `g ~ μ_ε` and `g f` with `f ~ ν_{Q,ε}`,
/// against the exponent-gap sum of the mollified walk.
///
/// `μ_ε` uses the full-support mollifier. The stationary cloud is sampled
/// at the spectrum's convergence depth when the spectrum is simple, and at
/// depth `20/ε²` (a mixing time of the rotation noise) otherwise.
pub fn mollified_mi(
    mu: &MatrixMeasure,
    epsilon: f64,
    q: &IntervalPartition,
    n_samples: usize,
    k: usize,
    seed: u64,
) -> Result<MiEstimate> {
    let d = mu.d();
    if !(2..=3).contains(&d) {
        return Err(Error::DimensionTooLarge { d, max: 3 });
    }
    let mu_e = mu.with_mollifier(Some(Mollifier { kind: MollifierKind::SoBallFull, epsilon }))?;
    let spectrum = lyapunov_spectrum(&mu_e, MI_SPECTRUM_STEPS, seed);
    let rhs = furstenberg_bound(&spectrum, q);
    let rhs_stderr = furstenberg_bound_stderr(&spectrum, q);
    let (depth, check) = mollified_depth(&spectrum, epsilon);
    let cloud = sample_stationary_cloud(&mu_e, q, n_samples, depth, seed, check)?;
    let pairs = (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = chunk_rng(seed, "mi_pairs", i as u64);
            let g = mu_e.sample(&mut rng);
            let y = cloud.partial(i)?.act(&g)?;
            Ok((embed_matrix(&g), crate::measure::embed_partial(&y)))
        })
        .collect::<Result<Vec<_>>>()?;
    let x = Embedded::new(pairs.iter().flat_map(|p| p.0.iter().copied()).collect(), d * d);
    let ydim = pairs[0].1.len();
    let y = Embedded::new(pairs.iter().flat_map(|p| p.1.iter().copied()).collect(), ydim);
    let mi = ksg_mi(&x, &y, k)?;
    let m = n_samples / 5;
    let subsamples = (0..5)
        .map(|s| {
            let xs = Embedded::new(x.data[s * m * x.dim..(s + 1) * m * x.dim].to_vec(), x.dim);
            let ys = Embedded::new(y.data[s * m * y.dim..(s + 1) * m * y.dim].to_vec(), y.dim);
            ksg_mi(&xs, &ys, k)
        })
        .collect::<Result<Vec<f64>>>()?;
    let spread = subsamples.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b))
        - subsamples.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    if spread > 0.25 * mi.abs() && spread > MI_ABS_FLOOR {
        return Err(Error::EstimatorUnstable { spread: spread / mi.abs().max(f64::MIN_POSITIVE), estimates: subsamples });
    }
    // the full sample is five times larger than each subsample
    let se = (variance(&subsamples) / 5.0).sqrt();
    let ci = 1.96 * se;
    let z = (mi - rhs) / (se * se + rhs_stderr * rhs_stderr).sqrt().max(crate::walk::STDERR_FLOOR);
    Ok(MiEstimate { mi, ci, rhs, rhs_stderr, z, subsamples, spectrum })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LyapunovDimensionProfile {
    /// Sorted gaps `λ_1 ≤ ... ≤ λ_N`.
    pub lambdas: Vec<f64>,
    pub h: f64,
    /// `D(k)` for `k = 0..=N`.
    pub breakpoints: Vec<f64>,
    pub dim_ly: f64,
    /// True when `D(N) > 0`, so the root is capped at `N`.
    pub saturated: bool,
}

impl LyapunovDimensionProfile {
    /// Profile `D(0) = h` with slope `−λ_k` on `(k−1, k)`.
    pub fn from_gaps(mut lambdas: Vec<f64>, h: f64) -> Self {
        lambdas.sort_by(f64::total_cmp);
        let mut breakpoints = vec![h];
        for l in &lambdas {
            breakpoints.push(breakpoints[breakpoints.len() - 1] - l);
        }
        let n = lambdas.len();
        let mut dim_ly = n as f64;
        let saturated = breakpoints[n] > 0.0;
        if h <= 0.0 {
            dim_ly = 0.0;
        } else if !saturated {
            for k in 0..n {
                if breakpoints[k + 1] <= 0.0 {
                    dim_ly = k as f64 + breakpoints[k] / lambdas[k];
                    break;
                }
            }
        }
        LyapunovDimensionProfile { lambdas, h, breakpoints, dim_ly, saturated }
    }

    /// `D(s)` for `s ∈ [0, N]`.
    pub fn eval(&self, s: f64) -> f64 {
        let n = self.lambdas.len();
        let k = (s.floor() as usize).min(n.saturating_sub(1));
        if n == 0 {
            return self.h;
        }
        self.breakpoints[k] - self.lambdas[k] * (s - k as f64)
    }
}

/// Kaplan-Yorke profile of the entropy against the exponent gaps of `Q`.
pub fn lyapunov_profile(
    h: &EntropyEstimate,
    spectrum: &LyapunovSpectrum,
    q: &IntervalPartition,
) -> Result<LyapunovDimensionProfile> {
    let lambdas: Vec<f64> = separated(q).iter().map(|&(i, j)| spectrum.chi[i - 1] - spectrum.chi[j - 1]).collect();
    for &(i, j) in &separated(q) {
        let gap = spectrum.chi[i - 1] - spectrum.chi[j - 1];
        let se = (spectrum.stderr[i - 1].powi(2) + spectrum.stderr[j - 1].powi(2)).sqrt();
        if !(gap > 5.0 * se) || gap <= 0.0 {
            return Err(Error::SpectrumNotSimple { gap, stderr: se });
        }
    }
    let bound: f64 = lambdas.iter().sum();
    let tol = 3.0 * ((h.ci / 1.96).powi(2) + furstenberg_bound_stderr(spectrum, q).powi(2)).sqrt();
    if h.h > bound + tol {
        return Err(Error::EntropyExceedsBound { h: h.h, bound });
    }
    Ok(LyapunovDimensionProfile::from_gaps(lambdas, h.h))
}

/// Standard error of `dim_LY` by first-order propagation of the errors of
/// `ĥ` (from its interval) and of the gaps, treated as independent.
pub fn lyapunov_dimension_stderr(h: &EntropyEstimate, spectrum: &LyapunovSpectrum, q: &IntervalPartition) -> f64 {
    let pairs = separated(q);
    let lambdas: Vec<f64> = pairs.iter().map(|&(i, j)| spectrum.chi[i - 1] - spectrum.chi[j - 1]).collect();
    let dim = |l: Vec<f64>, h: f64| LyapunovDimensionProfile::from_gaps(l, h).dim_ly;
    let base = dim(lambdas.clone(), h.h);
    let step = 1e-7;
    let dh = (dim(lambdas.clone(), h.h + step) - base) / step;
    let mut var = (dh * h.ci / 1.96).powi(2);
    for (k, &(i, j)) in pairs.iter().enumerate() {
        let se = (spectrum.stderr[i - 1].powi(2) + spectrum.stderr[j - 1].powi(2)).sqrt();
        let mut l = lambdas.clone();
        l[k] += step;
        var += ((dim(l, h.h) - base) / step * se).powi(2);
    }
    var.sqrt()
}

/// One arrow of a chain with its exponent and measured fiber dimension.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArrowDimension {
    pub i: usize,
    pub j: usize,
    pub chi: f64,
    pub gamma: DimensionEstimate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LyReport {
    /// `Σ_t χ_t γ̂_t`.
    pub kappa: f64,
    pub kappa_ci: f64,
    pub h: f64,
    pub h_ci: f64,
    pub ly_formula_z: f64,
    /// `|κ − h| / h`.
    pub ly_formula_rel: f64,
    pub gamma_sum: f64,
    pub gamma_sum_ci: f64,
    pub delta: f64,
    pub delta_ci: f64,
    pub dim_sum_z: f64,
    pub dim_sum_rel: f64,
    /// Every `γ̂_t ∈ [−0.05, 1.05]`.
    pub gamma_bounds_ok: bool,
}

fn z_of(a: f64, ci_a: f64, b: f64, ci_b: f64) -> f64 {
    let s = ((ci_a / 1.96).powi(2) + (ci_b / 1.96).powi(2)).sqrt().max(crate::walk::STDERR_FLOOR);
    (a - b) / s
}

/// Compares the chain sums `Σ χ_t γ̂_t` and `Σ γ̂_t` with the entropy and
/// the directly measured dimension.
pub fn ly_report(arrows: &[ArrowDimension], h: &EntropyEstimate, delta: &DimensionEstimate) -> Result<LyReport> {
    if arrows.windows(2).any(|w| w[1].chi < w[0].chi) {
        return Err(Error::ChainMismatch);
    }
    let kappa: f64 = arrows.iter().map(|a| a.chi * a.gamma.delta).sum();
    let kappa_ci = arrows.iter().map(|a| (a.chi * a.gamma.ci).powi(2)).sum::<f64>().sqrt();
    let gamma_sum: f64 = arrows.iter().map(|a| a.gamma.delta).sum();
    let gamma_sum_ci = arrows.iter().map(|a| a.gamma.ci.powi(2)).sum::<f64>().sqrt();
    Ok(LyReport {
        kappa,
        kappa_ci,
        h: h.h,
        h_ci: h.ci,
        ly_formula_z: z_of(kappa, kappa_ci, h.h, h.ci),
        ly_formula_rel: (kappa - h.h).abs() / h.h.abs(),
        gamma_sum,
        gamma_sum_ci,
        delta: delta.delta,
        delta_ci: delta.ci,
        dim_sum_z: z_of(gamma_sum, gamma_sum_ci, delta.delta, delta.ci),
        dim_sum_rel: (gamma_sum - delta.delta).abs() / delta.delta.abs(),
        gamma_bounds_ok: arrows.iter().all(|a| (-0.05..=1.05).contains(&a.gamma.delta)),
    })
}

/// Sufficient condition for dimension conservation along
/// `π_{T,T''} = π_{T',T''} ∘ π_{T,T'}`: every gap of `D_{T,T'}` is at least
/// every gap of `D_{T',T''}`. A `false` only means the condition fails.
pub fn conservation_predicate(
    t: &AdmissibleTopology,
    tp: &AdmissibleTopology,
    tpp: &AdmissibleTopology,
    chi: &[f64],
) -> Result<bool> {
    let gap = |p: &(usize, usize)| chi[p.0 - 1] - chi[p.1 - 1];
    let lower = removed_pairs(t, tp)?;
    let upper = removed_pairs(tp, tpp)?;
    let min_lower = lower.iter().map(gap).fold(f64::INFINITY, f64::min);
    let max_upper = upper.iter().map(gap).fold(f64::NEG_INFINITY, f64::max);
    Ok(min_lower >= max_upper)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::DimensionMethod;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn dim_ly_stderr_propagates() {
        let spec = LyapunovSpectrum { chi: vec![0.5, -0.5], stderr: vec![0.01, 0.01], partial_stderr: vec![0.01, 1e-12], steps: 1 };
        let h = EntropyEstimate::given(0.5, 1.96 * 0.02, EntropyMethod::Extrapolated);
        let q = IntervalPartition::full(2);
        // dim = h / λ: σ² = (σ_h/λ)² + (h σ_λ/λ²)²
        let want = (0.02f64.powi(2) + (0.5 * 0.01 * 2f64.sqrt()).powi(2)).sqrt();
        let got = lyapunov_dimension_stderr(&h, &spec, &q);
        assert!((got - want).abs() < 1e-5, "{got} vs {want}");
    }

    fn free_pair() -> MatrixMeasure {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![0.0, 1.0]]).unwrap();
        let b = Matrix::from_rows(&[vec![1.0, 0.0], vec![2.0, 1.0]]).unwrap();
        MatrixMeasure::uniform(&[a, a.inverse().unwrap(), b, b.inverse().unwrap()]).unwrap()
    }

    /// `H(μ^{(n)})` of the simple walk on the free group of rank 2, from the
    /// word-length chain: given its length, the reduced word is uniform.
    fn free_group_entropy(n: usize) -> f64 {
        let mut p = vec![0.0; n + 2];
        p[0] = 1.0;
        for _ in 0..n {
            let mut next = vec![0.0; n + 2];
            next[1] += p[0];
            for l in 1..=n {
                next[l + 1] += 0.75 * p[l];
                next[l - 1] += 0.25 * p[l];
            }
            p = next;
        }
        p.iter()
            .enumerate()
            .filter(|(_, &v)| v > 0.0)
            .map(|(l, &v): (usize, &f64)| {
                let words = if l == 0 { 1.0 } else { 4.0 * 3f64.powi(l as i32 - 1) };
                -v * v.ln() + v * words.ln()
            })
            .sum()
    }

    #[test]
    fn free_pair_matches_word_oracle() {
        let (h, audit) = rw_entropies(&free_pair(), 9, SUPPORT_LIMIT).unwrap();
        assert_eq!(audit, 0.0);
        for (n, v) in h.iter().enumerate() {
            assert!((v - free_group_entropy(n)).abs() < 1e-9, "n = {n}: {v} vs {}", free_group_entropy(n));
        }
        let est = rw_entropy(&free_pair(), 9).unwrap();
        let r = est.ratios();
        assert!(r.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn trivial_entropies() {
        let mu = MatrixMeasure::dirac(Matrix::diag(&[2.0, 0.5])).unwrap();
        assert_eq!(rw_entropy(&mu, 6).unwrap().h, 0.0);
        let r = Matrix::from_rows(&[vec![0.0, -1.0], vec![1.0, 0.0]]).unwrap();
        let rot = MatrixMeasure::uniform(&[r, r.inverse().unwrap()]).unwrap();
        let e = rw_entropy(&rot, 8).unwrap();
        assert!(e.h.abs() < 1e-12);
        assert!(e.ratios().last().unwrap() < &0.1);
        // a rotation of order 5 hashed on the float grid
        let a = 2.0 * std::f64::consts::PI / 5.0;
        let r5 = Matrix::from_rows(&[vec![a.cos(), -a.sin()], vec![a.sin(), a.cos()]]).unwrap();
        let e5 = rw_entropies(&MatrixMeasure::uniform(&[r5, r5.transpose()]).unwrap(), 10, 100).unwrap();
        assert!(e5.0.iter().all(|&h| h <= 5f64.ln() + 1e-12));
        assert!(e5.1 < 1e-12);
    }

    #[test]
    fn inverse_measure_has_identical_entropy() {
        let mu = free_pair();
        let a = rw_entropies(&mu, 8, SUPPORT_LIMIT).unwrap().0;
        let b = rw_entropies(&mu.inverse().unwrap(), 8, SUPPORT_LIMIT).unwrap().0;
        assert_eq!(a, b);
        let c = Matrix::from_rows(&[vec![1.0, 1.0], vec![0.0, 1.0]]).unwrap();
        let lopsided = MatrixMeasure::new(
            2,
            vec![crate::walk::Atom { p: 0.75, m: c }, crate::walk::Atom { p: 0.25, m: c.transpose() }],
            None,
        )
        .unwrap();
        assert_eq!(
            rw_entropies(&lopsided, 7, SUPPORT_LIMIT).unwrap().0,
            rw_entropies(&lopsided.inverse().unwrap(), 7, SUPPORT_LIMIT).unwrap().0
        );
    }

    #[test]
    fn explosion_returns_partial() {
        match rw_entropies(&free_pair(), 10, 500) {
            Err(Error::StateExplosion { n, partial, .. }) => {
                assert_eq!(partial.len(), n);
                assert!(n >= 4);
            }
            other => panic!("{other:?}"),
        }
        let mollified = free_pair().with_mollifier(Some(Mollifier { kind: MollifierKind::SoBall, epsilon: 0.1 })).unwrap();
        assert!(rw_entropy(&mollified, 6).is_err());
    }

    #[test]
    fn bound_examples() {
        let s = LyapunovSpectrum::exact(vec![2.0, 1.0, -3.0]);
        assert_eq!(furstenberg_bound(&s, &IntervalPartition::full(3)), 10.0);
        assert_eq!(furstenberg_bound(&s, &IntervalPartition::trivial(3)), 0.0);
        let s2 = LyapunovSpectrum::exact(vec![0.3, -0.3]);
        assert!((furstenberg_bound(&s2, &IntervalPartition::full(2)) - 0.6).abs() < 1e-15);
    }

    #[test]
    fn profile_examples() {
        let p = LyapunovDimensionProfile::from_gaps(vec![1.0, 2.0, 3.0], 2.5);
        assert!((p.dim_ly - 1.75).abs() < 1e-15);
        assert_eq!(p.breakpoints, vec![2.5, 1.5, -0.5, -3.5]);
        assert_eq!(LyapunovDimensionProfile::from_gaps(vec![1.0, 2.0], 0.0).dim_ly, 0.0);
        assert!((LyapunovDimensionProfile::from_gaps(vec![0.7, 2.0], 0.7).dim_ly - 1.0).abs() < 1e-15);
        let sat = LyapunovDimensionProfile::from_gaps(vec![1.0], 2.0);
        assert!(sat.saturated && sat.dim_ly == 1.0);
        let s = LyapunovSpectrum::exact(vec![1.0, -1.0]);
        let h = EntropyEstimate::given(2.5, 0.01, EntropyMethod::Extrapolated);
        assert!(matches!(lyapunov_profile(&h, &s, &IntervalPartition::full(2)), Err(Error::EntropyExceedsBound { .. })));
    }

    proptest::proptest! {
        #[test]
        fn profile_is_scale_invariant(gaps in proptest::collection::vec(0.1f64..5.0, 1..6), frac in 0.0f64..1.0, c in 0.1f64..10.0) {
            let h = frac * gaps.iter().sum::<f64>();
            let a = LyapunovDimensionProfile::from_gaps(gaps.clone(), h);
            let b = LyapunovDimensionProfile::from_gaps(gaps.iter().map(|g| g * c).collect(), h * c);
            proptest::prop_assert!((a.dim_ly - b.dim_ly).abs() < 1e-9);
            proptest::prop_assert!(a.dim_ly <= gaps.len() as f64);
            proptest::prop_assert!(a.eval(a.dim_ly).abs() < 1e-9 * (1.0 + h));
        }
    }

    #[test]
    fn ksg_on_gaussians() {
        // I = −½ log(1 − ρ²)
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rho: f64 = 0.8;
        let n = 20_000;
        let (mut xs, mut ys) = (Vec::new(), Vec::new());
        for _ in 0..n {
            let a: f64 = rng.sample(rand_distr::StandardNormal);
            let b: f64 = rng.sample(rand_distr::StandardNormal);
            xs.push(a);
            ys.push(rho * a + (1.0 - rho * rho).sqrt() * b);
        }
        let mi = ksg_mi(&Embedded::new(xs.clone(), 1), &Embedded::new(ys.clone(), 1), 4).unwrap();
        let truth = -0.5 * (1.0 - rho * rho).ln();
        assert!((mi - truth).abs() < 0.03, "{mi} vs {truth}");
        let mut shuffled = ys;
        rand::seq::SliceRandom::shuffle(shuffled.as_mut_slice(), &mut rng);
        let null = ksg_mi(&Embedded::new(xs, 1), &Embedded::new(shuffled, 1), 4).unwrap();
        assert!(null.abs() < 0.02, "{null}");
    }

    #[test]
    fn identity_atoms_have_no_information() {
        let mu = MatrixMeasure::dirac(Matrix::identity(2)).unwrap();
        let est = mollified_mi(&mu, 0.3, &IntervalPartition::full(2), 20_000, 4, 7).unwrap();
        assert!(est.rhs.abs() < 0.01, "{}", est.rhs);
        assert!(est.mi.abs() < 0.05, "{}", est.mi);
    }

    fn dim(v: f64, ci: f64) -> DimensionEstimate {
        DimensionEstimate { delta: v, ci, r_range: (1e-3, 1e-1), method: DimensionMethod::FiberPooled, r2: 1.0 }
    }

    #[test]
    fn ly_report_cases() {
        let h = EntropyEstimate::given(0.5, 0.01, EntropyMethod::Extrapolated);
        let arrows = vec![ArrowDimension { i: 1, j: 2, chi: 0.64, gamma: dim(0.78, 0.02) }];
        let r = ly_report(&arrows, &h, &dim(0.79, 0.02)).unwrap();
        assert!((r.kappa - 0.4992).abs() < 1e-12 && r.ly_formula_z.abs() < 3.0);
        assert!(r.dim_sum_z.abs() < 3.0 && r.gamma_bounds_ok);
        let all_one = vec![
            ArrowDimension { i: 1, j: 2, chi: 1.0, gamma: dim(1.0, 0.01) },
            ArrowDimension { i: 2, j: 3, chi: 2.5, gamma: dim(1.0, 0.01) },
            ArrowDimension { i: 1, j: 3, chi: 3.5, gamma: dim(1.0, 0.01) },
        ];
        let s = LyapunovSpectrum::exact(vec![1.5, 0.5, -2.0]);
        let b = furstenberg_bound(&s, &IntervalPartition::full(3));
        let r = ly_report(&all_one, &EntropyEstimate::given(b, 0.01, EntropyMethod::Extrapolated), &dim(3.0, 0.05)).unwrap();
        assert!((r.kappa - b).abs() < 1e-12 && (r.gamma_sum - 3.0).abs() < 1e-12);
        let mut bad = all_one.clone();
        bad.swap(0, 2);
        assert!(matches!(ly_report(&bad, &h, &dim(3.0, 0.05)), Err(Error::ChainMismatch)));
    }

    #[test]
    fn conservation_examples() {
        let t1 = AdmissibleTopology::finest(3);
        let t0 = AdmissibleTopology::coarsest(3);
        let chi = [0.7, 0.05, -0.75];
        // the middle topology with atoms {1,3}, {2}, {3} removes only (1,3)
        let mid = AdmissibleTopology::from_atoms(3, &[vec![1, 3], vec![2], vec![3]]).unwrap();
        assert!(conservation_predicate(&t1, &mid, &t0, &chi).unwrap());
        // through points or planes the lower gap is a consecutive one
        for q in [IntervalPartition::new(vec![0, 1, 3]).unwrap(), IntervalPartition::new(vec![0, 2, 3]).unwrap()] {
            let tq = crate::topology::filtered_from_partition(&q);
            assert!(!conservation_predicate(&t1, &tq, &t0, &chi).unwrap());
        }
    }
}
