//! Flags, partial flags and configuration spaces `X_T`.
//!
//! A configuration on an admissible topology `T` assigns to every nonempty
//! open set `I` a subspace `x_I` of dimension `|I|`, compatible with unions
//! (sums) and intersections. The tails `{i..d}` always carry the anchor flag
//! `f'` via `x_{i..d} = U'_{d-i+1}`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    intersection_of_dim, qr_positive, restricted_det, subspace_distance, unit, vdot, Matrix,
    Subspace,
};
use crate::topology::{is_finer, one_step, AdmissibleTopology, IntervalPartition};

/// Default general-position threshold on `sin ∠`.
pub const GENERAL_POSITION_TOL: f64 = 1e-7;

/// Projections are declared equal below this configuration distance.
pub const SAME_FIBER_TOL: f64 = 1e-8;

/// A complete flag, stored by a canonical orthogonal frame whose first `i`
/// columns span `U_i`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlagPoint {
    frame: Matrix,
}

impl FlagPoint {
    /// The flag of column spans of `m`.
    pub fn from_matrix(m: &Matrix) -> Result<FlagPoint> {
        if !m.is_square() {
            return Err(Error::DimensionMismatch("flag matrix must be square".into()));
        }
        let (q, _) = qr_positive(m)?;
        Ok(FlagPoint { frame: q })
    }

    /// Wraps an orthogonal frame without refactoring it.
    pub fn from_orthogonal(frame: Matrix) -> FlagPoint {
        FlagPoint { frame }
    }

    /// The coordinate flag `span(e_1) ⊂ span(e_1, e_2) ⊂ ...`.
    pub fn coordinate(d: usize) -> FlagPoint {
        FlagPoint { frame: Matrix::identity(d) }
    }

    /// The reversed coordinate flag `span(e_d) ⊂ span(e_d, e_{d-1}) ⊂ ...`.
    pub fn reversed(d: usize) -> FlagPoint {
        let mut m = Matrix::zeros(d, d);
        for c in 0..d {
            m[(d - 1 - c, c)] = 1.0;
        }
        FlagPoint { frame: m }
    }

    pub fn d(&self) -> usize {
        self.frame.rows()
    }

    pub fn frame(&self) -> &Matrix {
        &self.frame
    }

    /// `U_i`, spanned by the first `i` frame columns.
    pub fn level(&self, i: usize) -> Subspace {
        Subspace::from_orthonormal(self.frame.column_block(0, i))
    }

    /// The image flag `g f`.
    pub fn act(&self, g: &Matrix) -> Result<FlagPoint> {
        FlagPoint::from_matrix(&(g * &self.frame))
    }

    pub fn to_partial(&self, q: &IntervalPartition) -> PartialFlagPoint {
        PartialFlagPoint { partition: q.clone(), frame: self.frame }
    }

    /// Sum over levels of the subspace distances; a metric on the flag manifold.
    pub fn distance(&self, other: &FlagPoint) -> f64 {
        (1..self.d())
            .map(|i| subspace_distance(&self.level(i), &other.level(i)).expect("same dims"))
            .sum()
    }
}

/// A partial flag `U_{q_1} ⊂ ... ⊂ U_{q_{k-1}}`, stored cumulatively by a
/// frame whose first `q_j` columns span `U_{q_j}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartialFlagPoint {
    partition: IntervalPartition,
    frame: Matrix,
}

impl PartialFlagPoint {
    pub fn from_matrix(q: &IntervalPartition, m: &Matrix) -> Result<PartialFlagPoint> {
        if m.rows() != q.d() {
            return Err(Error::DimensionMismatch("partition vs matrix".into()));
        }
        Ok(FlagPoint::from_matrix(m)?.to_partial(q))
    }

    pub fn partition(&self) -> &IntervalPartition {
        &self.partition
    }

    pub fn frame(&self) -> &Matrix {
        &self.frame
    }

    pub fn d(&self) -> usize {
        self.partition.d()
    }

    /// The nested subspaces `U_{q_1}, ..., U_{q_{k-1}}`.
    pub fn subspaces(&self) -> Vec<Subspace> {
        let cuts = self.partition.cuts();
        cuts[1..cuts.len() - 1]
            .iter()
            .map(|&q| Subspace::from_orthonormal(self.frame.column_block(0, q)))
            .collect()
    }

    pub fn level(&self, q: usize) -> Subspace {
        Subspace::from_orthonormal(self.frame.column_block(0, q))
    }

    pub fn act(&self, g: &Matrix) -> Result<PartialFlagPoint> {
        PartialFlagPoint::from_matrix(&self.partition, &(g * &self.frame))
    }

    pub fn distance(&self, other: &PartialFlagPoint) -> f64 {
        self.subspaces()
            .iter()
            .zip(other.subspaces())
            .map(|(a, b)| subspace_distance(a, &b).expect("same dims"))
            .sum()
    }
}

/// Transversality of `f` and `f'`: `U_j ⊕ U'_{d-j} = R^d` for `0 < j < d`.
///
/// The margin is the minimum over `j` of the smallest singular value of the
/// projection of `U_j` onto the orthogonal complement of `U'_{d-j}`.
pub fn general_position(f: &FlagPoint, fp: &FlagPoint) -> (bool, f64) {
    general_position_tol(f, fp, GENERAL_POSITION_TOL)
}

pub fn general_position_tol(f: &FlagPoint, fp: &FlagPoint, tol: f64) -> (bool, f64) {
    let d = f.d();
    let mut margin: f64 = 1.0;
    for j in 1..d {
        // complement of U'_{d-j} is spanned by the last j columns of f'
        let comp = fp.frame.column_block(d - j, d);
        let cross = &f.frame.column_block(0, j).transpose() * &comp;
        let s = crate::linalg::singular_values(&cross);
        margin = margin.min(*s.last().unwrap_or(&1.0));
    }
    (margin >= tol, margin)
}

/// A point of the configuration space `X_T`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Configuration {
    topology: AdmissibleTopology,
    /// Nonempty open sets as masks with their subspaces, sorted by mask.
    sets: Vec<(u16, Subspace)>,
}

fn mask_of(set: &[usize]) -> u16 {
    set.iter().fold(0, |m, &k| m | (1 << (k - 1)))
}

fn mask_elems(m: u16) -> impl Iterator<Item = usize> {
    (1..=16).filter(move |&k| m & (1 << (k - 1)) != 0)
}

impl Configuration {
    /// `x_I = ⊕_{i ∈ I} L_i` for a family of independent lines.
    pub fn from_lines(t: &AdmissibleTopology, lines: &[Subspace]) -> Configuration {
        let d = t.d();
        let sets = t
            .open_masks()
            .into_iter()
            .map(|m| {
                let parts: Vec<Subspace> = mask_elems(m).map(|k| lines[k - 1]).collect();
                (m, Subspace::sum_all(&parts, d, m.count_ones() as usize))
            })
            .collect();
        Configuration { topology: t.clone(), sets }
    }

    /// Builds from explicit subspaces for every open set, validating dimensions.
    pub fn from_sets(t: &AdmissibleTopology, sets: Vec<(Vec<usize>, Subspace)>) -> Result<Configuration> {
        let mut out: Vec<(u16, Subspace)> =
            sets.into_iter().map(|(s, sub)| (mask_of(&s), sub)).collect();
        out.sort_by_key(|(m, _)| *m);
        let expected = t.open_masks();
        if out.iter().map(|(m, _)| *m).collect::<Vec<_>>() != expected {
            return Err(Error::InvalidTopology("configuration sets differ from open sets".into()));
        }
        if out.iter().any(|(m, s)| s.dim() != m.count_ones() as usize) {
            return Err(Error::DimensionMismatch("dim x_I must equal |I|".into()));
        }
        Ok(Configuration { topology: t.clone(), sets: out })
    }

    pub fn topology(&self) -> &AdmissibleTopology {
        &self.topology
    }

    pub fn d(&self) -> usize {
        self.topology.d()
    }

    pub(crate) fn get_mask(&self, m: u16) -> Option<&Subspace> {
        if m == 0 {
            return None;
        }
        self.sets.binary_search_by_key(&m, |(k, _)| *k).ok().map(|p| &self.sets[p].1)
    }

    /// `x_I` for an open set `I`, or `None` if `I` is not open.
    pub fn get(&self, set: &[usize]) -> Option<Subspace> {
        if set.is_empty() {
            return Some(Subspace::zero(self.d()));
        }
        self.get_mask(mask_of(set)).copied()
    }

    fn get_or_zero(&self, m: u16) -> Subspace {
        if m == 0 {
            Subspace::zero(self.d())
        } else {
            *self.get_mask(m).expect("open set")
        }
    }

    /// Open sets with their subspaces.
    pub fn sets(&self) -> impl Iterator<Item = (Vec<usize>, &Subspace)> {
        self.sets.iter().map(|(m, s)| (mask_elems(*m).collect(), s))
    }

    /// The anchor flag `f'` read off the tails, `U'_k = x_{d-k+1..d}`.
    pub fn anchor(&self) -> Result<FlagPoint> {
        let d = self.d();
        let mut m = Matrix::zeros(d, d);
        let mut prev = Subspace::zero(d);
        for k in 1..=d {
            let tail = mask_of(&((d - k + 1)..=d).collect::<Vec<_>>());
            let cur = self.get_or_zero(tail);
            let v = cur.relative_complement(&prev);
            m.set_col(k - 1, &v.direction());
            prev = cur;
        }
        FlagPoint::from_matrix(&m)
    }

    /// Image `g x`.
    pub fn image(&self, g: &Matrix) -> Result<Configuration> {
        let sets = self
            .sets
            .iter()
            .map(|(m, s)| Ok((*m, s.image(g)?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Configuration { topology: self.topology.clone(), sets })
    }

    /// Largest violation of `x_{I∪J} = x_I + x_J` and `x_{I∩J} = x_I ∩ x_J`.
    pub fn lattice_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (a, sa) in &self.sets {
            for (b, sb) in &self.sets {
                let u = a | b;
                let su = sa.sum_with_dim(sb, u.count_ones() as usize);
                worst = worst.max(subspace_distance(&su, self.get_mask(u).expect("union open")).unwrap_or(f64::INFINITY));
                let n = a & b;
                if n != 0 {
                    let sn = intersection_of_dim(sa, sb, n.count_ones() as usize);
                    worst = worst.max(subspace_distance(&sn, self.get_mask(n).expect("intersection open")).unwrap_or(f64::INFINITY));
                } else {
                    // trivial intersection: the sum must be direct
                    let direct = sa.sum_with_dim(sb, (sa.dim() + sb.dim()).min(self.d()));
                    if direct.dim() < sa.dim() + sb.dim() {
                        worst = worst.max(1.0);
                    }
                }
            }
        }
        worst
    }
}

/// `F_T(f, f')_I = ⊕_{i ∈ I} (U_i ∩ U'_{d-i+1})`.
pub fn assemble_config(t: &AdmissibleTopology, f: &FlagPoint, fp: &FlagPoint) -> Result<Configuration> {
    let (ok, margin) = general_position(f, fp);
    if !ok {
        return Err(Error::NotGeneralPosition { margin });
    }
    Ok(Configuration::from_lines(t, &oseledets_lines(f, fp)))
}

/// The lines `U_i ∩ U'_{d-i+1}` of a transverse flag pair.
pub fn oseledets_lines(f: &FlagPoint, fp: &FlagPoint) -> Vec<Subspace> {
    let d = f.d();
    (1..=d).map(|i| intersection_of_dim(&f.level(i), &fp.level(d - i + 1), 1)).collect()
}

/// The filtered configuration of a partial flag in general position with `f'`.
///
/// Every open set of `T_Q` is a disjoint union of intervals `{a..b}` and the
/// interval is sent to `U'_{d-a+1} ∩ U_b`.
pub fn config_from_partial(x: &PartialFlagPoint, fp: &FlagPoint) -> Result<Configuration> {
    let q = x.partition();
    let t = crate::topology::filtered_from_partition(q);
    let d = q.d();
    let mut sets = Vec::new();
    for m in t.open_masks() {
        let elems: Vec<usize> = mask_elems(m).collect();
        let mut parts = Vec::new();
        let mut start = 0;
        while start < elems.len() {
            let mut end = start;
            while end + 1 < elems.len() && elems[end + 1] == elems[end] + 1 {
                end += 1;
            }
            let (a, b) = (elems[start], elems[end]);
            let u = if b == d { Subspace::full(d) } else { x.level(b) };
            let part = intersection_of_dim(&u, &fp.level(d - a + 1), b - a + 1);
            parts.push(part);
            start = end + 1;
        }
        sets.push((m, Subspace::sum_all(&parts, d, elems.len())));
    }
    let config = Configuration { topology: t, sets };
    let defect = config.lattice_defect();
    if defect > 1e-6 {
        return Err(Error::NotGeneralPosition { margin: defect });
    }
    Ok(config)
}

/// The partial flag `(x_{1..q_j})_j` of a filtered configuration.
pub fn partial_from_config(x: &Configuration, q: &IntervalPartition) -> Result<PartialFlagPoint> {
    let d = q.d();
    let mut m = Matrix::zeros(d, d);
    let mut prev = Subspace::zero(d);
    let mut col = 0;
    for &c in &q.cuts()[1..] {
        let cur = if c == d {
            Subspace::full(d)
        } else {
            x.get(&(1..=c).collect::<Vec<_>>()).ok_or(Error::TopologyMismatch)?
        };
        let block = cur.relative_complement(&prev);
        for k in 0..block.dim() {
            m.set_col(col, &block.frame().col(k));
            col += 1;
        }
        prev = cur;
    }
    PartialFlagPoint::from_matrix(q, &m)
}

/// `π_{T,T'}`: keep only the open sets of `T'`.
pub fn project_config(tp: &AdmissibleTopology, x: &Configuration) -> Result<Configuration> {
    if !is_finer(x.topology(), tp) {
        return Err(Error::NotComparable);
    }
    let keep = tp.open_masks();
    let sets = x.sets.iter().filter(|(m, _)| keep.binary_search(m).is_ok()).copied().collect();
    Ok(Configuration { topology: tp.clone(), sets })
}

/// `Σ_{I ∈ T} dist(x_I, y_I)`.
pub fn config_distance(x: &Configuration, y: &Configuration) -> Result<f64> {
    if x.topology != y.topology {
        return Err(Error::TopologyMismatch);
    }
    let mut total = 0.0;
    for ((_, a), (_, b)) in x.sets.iter().zip(&y.sets) {
        total += subspace_distance(a, b)?;
    }
    Ok(total)
}

/// Distance between two points of one fiber of a one-step projection,
/// measured at the changed atom `T(i)`.
pub fn fiber_metric(x1: &Configuration, x2: &Configuration, tp: &AdmissibleTopology) -> Result<f64> {
    let t = x1.topology();
    let (i, _) = one_step(t, tp).ok_or(Error::NotOneStep)?;
    let base = config_distance(&project_config(tp, x1)?, &project_config(tp, x2)?)?;
    if base > SAME_FIBER_TOL {
        return Err(Error::NotSameFiber { distance: base });
    }
    let m = t.atom_mask(i);
    subspace_distance(x1.get_mask(m).expect("atom open"), x2.get_mask(m).expect("atom open"))
}

/// The fiber chart `φ_x` of a one-step arrow.
///
/// Inside `V = x'_{T'(i)} ⊖ B` with `B = x'_{T'(i)∖{i,j}}`, the line through
/// `cos u · X + sin u · Y` replaces `x_{T(i)}`, where `X` spans `x_{T(i)} ⊖ B`
/// and `Y` spans `x'_{T'(i)∖{i}} ⊖ B`. The deleted point `u = ±π/2` is the
/// line `Y` itself, so the chart is open and never evaluated there.
#[derive(Clone, Debug)]
pub struct FiberChart {
    base: Configuration,
    coarse: AdmissibleTopology,
    arrow: (usize, usize),
    theta: f64,
    x: Vec<f64>,
    y: Vec<f64>,
    b: Subspace,
}

pub fn fiber_chart(x: &Configuration, tp: &AdmissibleTopology) -> Result<FiberChart> {
    let t = x.topology();
    let (i, j) = one_step(t, tp).ok_or(Error::NotOneStep)?;
    let d = t.d();
    let big = tp.atom_mask(i);
    let bm = big & !(1 << (i - 1)) & !(1 << (j - 1));
    let b = x.get_or_zero(bm);
    let xs = x.get_or_zero(t.atom_mask(i)).relative_complement(&b).direction();
    let xs = unit(&xs);
    let ym = big & !(1 << (i - 1));
    let mut ys = unit(&x.get_or_zero(ym).relative_complement(&b).direction());
    let c = vdot(&xs, &ys);
    if c < 0.0 {
        ys.iter_mut().for_each(|v| *v = -*v);
    }
    let theta = c.abs().clamp(0.0, 1.0).acos();
    if theta < 1e-8 {
        return Err(Error::DegenerateAngle { theta });
    }
    debug_assert_eq!(b.ambient(), d);
    Ok(FiberChart { base: x.clone(), coarse: tp.clone(), arrow: (i, j), theta, x: xs, y: ys, b })
}

impl FiberChart {
    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn arrow(&self) -> (usize, usize) {
        self.arrow
    }

    pub fn base(&self) -> &Configuration {
        &self.base
    }

    /// `|dφ_x(u)| = sin θ / (1 + sin 2u · cos θ)`.
    pub fn derivative(&self, u: f64) -> f64 {
        self.theta.sin() / (1.0 + (2.0 * u).sin() * self.theta.cos())
    }

    fn line_at(&self, u: f64) -> Subspace {
        let v: Vec<f64> = self.x.iter().zip(&self.y).map(|(a, b)| u.cos() * a + u.sin() * b).collect();
        Subspace::line(&v).expect("nonzero direction")
    }

    /// `φ_x(u)` for `u ∈ (−π/2, π/2)`.
    pub fn eval(&self, u: f64) -> Configuration {
        let t = self.base.topology();
        let (i, j) = self.arrow;
        let d = t.d();
        let (bi, bj) = (1u16 << (i - 1), 1u16 << (j - 1));
        let z_atom = self.b.sum_with_dim(&self.line_at(u), self.b.dim() + 1);
        let sets = self
            .base
            .sets
            .iter()
            .map(|(m, s)| {
                if m & bi == 0 || m & bj != 0 {
                    return (*m, *s);
                }
                if *m == t.atom_mask(i) {
                    return (*m, z_atom);
                }
                let jm = mask_elems(*m).filter(|&k| k != i).fold(0u16, |acc, k| acc | t.atom_mask(k));
                let rest = self.base.get_or_zero(jm);
                (*m, z_atom.sum_with_dim(&rest, (m.count_ones() as usize).min(d)))
            })
            .collect();
        Configuration { topology: t.clone(), sets }
    }

    /// Inverse chart: the coordinate `u` of a configuration in the same fiber.
    pub fn coordinate(&self, z: &Configuration) -> Result<f64> {
        let base = config_distance(&project_config(&self.coarse, z)?, &project_config(&self.coarse, &self.base)?)?;
        if base > SAME_FIBER_TOL {
            return Err(Error::NotSameFiber { distance: base });
        }
        Ok(self.approx_coordinate(z))
    }

    /// Chart coordinate of the atom `z_{T(i)}` projected onto the chart
    /// plane, without checking that `z` lies in the same fiber. Used for
    /// binned fibers, where base points only agree up to the bin radius.
    pub fn approx_coordinate(&self, z: &Configuration) -> f64 {
        let t = self.base.topology();
        let w = z.get_or_zero(t.atom_mask(self.arrow.0)).relative_complement(&self.b).direction();
        let (px, py) = (vdot(&w, &self.x), vdot(&w, &self.y));
        let c = self.theta.cos();
        // solve w = a X + b Y with Gram matrix [[1, c], [c, 1]]
        let det = 1.0 - c * c;
        let a = (px - c * py) / det;
        let b = (py - c * px) / det;
        (b / a).atan()
    }
}

/// Lines `x'_{T'(i)} ⊖ x'_{T'(i)∖{i}}` used to extend a configuration.
pub fn extension_lines(xp: &Configuration) -> Vec<Subspace> {
    let tp = xp.topology();
    (1..=tp.d())
        .map(|i| {
            let big = tp.atom_mask(i);
            xp.get_or_zero(big).relative_complement(&xp.get_or_zero(big & !(1 << (i - 1))))
        })
        .collect()
}

/// The extension `Ê` of a configuration on `T'` to the finer topology `T`,
/// built from the perpendicular lines of [`extension_lines`]. Sets already
/// open in `T'` keep their original subspaces.
pub fn extend_configuration(t: &AdmissibleTopology, xp: &Configuration) -> Result<Configuration> {
    let tp = xp.topology();
    if !is_finer(t, tp) {
        return Err(Error::NotComparable);
    }
    if t == tp {
        return Ok(xp.clone());
    }
    let mut x = Configuration::from_lines(t, &extension_lines(xp));
    for (m, s) in x.sets.iter_mut() {
        if let Some(orig) = xp.get_mask(*m) {
            *s = *orig;
        }
    }
    Ok(x)
}

/// A sample of the orthogonally invariant probability on `F_Q`.
pub fn sample_invariant_flag<R: Rng + ?Sized>(q: &IntervalPartition, rng: &mut R) -> PartialFlagPoint {
    let d = q.d();
    loop {
        let m = Matrix::random_gaussian(d, d, rng);
        if let Ok(x) = PartialFlagPoint::from_matrix(q, &m) {
            return x;
        }
    }
}

/// A sample of the orthogonally invariant probability on complete flags.
pub fn sample_invariant_full_flag<R: Rng + ?Sized>(d: usize, rng: &mut R) -> FlagPoint {
    loop {
        if let Ok(f) = FlagPoint::from_matrix(&Matrix::random_gaussian(d, d, rng)) {
            return f;
        }
    }
}

/// `dgη/dη(gx) = Π_j |det_{U_{q_j}}(g)|^{q_{j+1} − q_{j−1}} / |det g|^{q_{k−1}}`
/// for the invariant probability `η` on `F_Q`.
pub fn invariant_rn_derivative(g: &Matrix, x: &PartialFlagPoint) -> Result<f64> {
    let cuts = x.partition().cuts();
    let k = cuts.len() - 1;
    let mut log = 0.0;
    for j in 1..k {
        let u = x.level(cuts[j]);
        log += (cuts[j + 1] - cuts[j - 1]) as f64 * restricted_det(g, &u)?.ln();
    }
    log -= cuts[k - 1] as f64 * g.det().abs().ln();
    let v = log.exp();
    if !v.is_finite() {
        return Err(Error::NonFinite("invariant_rn_derivative"));
    }
    Ok(v)
}
