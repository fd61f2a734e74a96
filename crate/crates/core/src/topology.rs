//! Admissible topologies on `{1, ..., d}`.
//!
//! A topology is stored by its atoms `T(i)`, the smallest open set containing
//! `i`, as bit masks (bit `k` stands for index `k + 1`). Admissibility means
//! every tail `{i, ..., d}` is open, which with the closure rule is the same
//! as `T(i) ⊆ {i, ..., d}`; these are exactly the suborders of the natural
//! order. Public functions use one-based indices throughout.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Enumeration is exhaustive, so it is capped.
pub const MAX_ENUM_DIM: usize = 6;

type Mask = u16;

#[inline]
fn bit(k: usize) -> Mask {
    1 << (k - 1)
}

fn tail_mask(i: usize, d: usize) -> Mask {
    (i..=d).fold(0, |m, k| m | bit(k))
}

fn mask_to_vec(m: Mask) -> Vec<usize> {
    (1..=16).filter(|&k| m & bit(k) != 0).collect()
}

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "TopologyJson", into = "TopologyJson")]
pub struct AdmissibleTopology {
    d: usize,
    atoms: Vec<Mask>,
}

#[derive(Serialize, Deserialize)]
struct TopologyJson {
    d: usize,
    atoms: Vec<Vec<usize>>,
}

impl From<AdmissibleTopology> for TopologyJson {
    fn from(t: AdmissibleTopology) -> Self {
        TopologyJson { d: t.d, atoms: (1..=t.d).map(|i| t.atom(i)).collect() }
    }
}

impl TryFrom<TopologyJson> for AdmissibleTopology {
    type Error = Error;
    fn try_from(j: TopologyJson) -> Result<Self> {
        if j.atoms.len() != j.d {
            return Err(Error::InvalidTopology(format!("{} atoms for d = {}", j.atoms.len(), j.d)));
        }
        AdmissibleTopology::from_atoms(j.d, &j.atoms)
    }
}

impl AdmissibleTopology {
    /// Builds a topology from its atoms `T(1), ..., T(d)`, validating them.
    pub fn from_atoms(d: usize, atoms: &[Vec<usize>]) -> Result<Self> {
        if d == 0 || d > 16 {
            return Err(Error::InvalidTopology(format!("d = {d}")));
        }
        let mut masks = Vec::with_capacity(d);
        for a in atoms {
            let mut m = 0;
            for &k in a {
                if k == 0 || k > d {
                    return Err(Error::InvalidTopology(format!("index {k} out of range")));
                }
                m |= bit(k);
            }
            masks.push(m);
        }
        Self::from_masks(d, masks)
    }

    pub(crate) fn from_masks(d: usize, atoms: Vec<Mask>) -> Result<Self> {
        if atoms.len() != d {
            return Err(Error::InvalidTopology("wrong number of atoms".into()));
        }
        let t = AdmissibleTopology { d, atoms };
        t.validate()?;
        Ok(t)
    }

    fn validate(&self) -> Result<()> {
        for i in 1..=self.d {
            let a = self.atoms[i - 1];
            if a & bit(i) == 0 {
                return Err(Error::InvalidTopology(format!("T({i}) does not contain {i}")));
            }
            if a & !tail_mask(i, self.d) != 0 {
                return Err(Error::InvalidTopology(format!("T({i}) not inside {{{i}..{}}}", self.d)));
            }
            for j in mask_to_vec(a) {
                if self.atoms[j - 1] & !a != 0 {
                    return Err(Error::InvalidTopology(format!("{j} in T({i}) but T({j}) not in T({i})")));
                }
            }
        }
        Ok(())
    }

    /// The coarsest admissible topology `T_0`: atoms are the tails.
    pub fn coarsest(d: usize) -> Self {
        AdmissibleTopology { d, atoms: (1..=d).map(|i| tail_mask(i, d)).collect() }
    }

    /// The discrete topology `T_1`: singleton atoms.
    pub fn finest(d: usize) -> Self {
        AdmissibleTopology { d, atoms: (1..=d).map(bit).collect() }
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// The atom `T(i)` as a sorted list.
    pub fn atom(&self, i: usize) -> Vec<usize> {
        mask_to_vec(self.atoms[i - 1])
    }

    pub(crate) fn atom_mask(&self, i: usize) -> Mask {
        self.atoms[i - 1]
    }

    pub fn atoms(&self) -> Vec<Vec<usize>> {
        (1..=self.d).map(|i| self.atom(i)).collect()
    }

    /// All nonempty open sets as masks, in increasing numeric order.
    pub(crate) fn open_masks(&self) -> Vec<Mask> {
        let mut seen = BTreeSet::new();
        let mut frontier: Vec<Mask> = self.atoms.clone();
        while let Some(m) = frontier.pop() {
            if seen.insert(m) {
                for &a in &self.atoms {
                    let u = m | a;
                    if !seen.contains(&u) {
                        frontier.push(u);
                    }
                }
            }
        }
        seen.into_iter().collect()
    }

    /// All nonempty open sets.
    pub fn open_sets(&self) -> Vec<Vec<usize>> {
        self.open_masks().into_iter().map(mask_to_vec).collect()
    }

    pub fn is_open(&self, set: &[usize]) -> bool {
        let m = set.iter().fold(0, |m, &k| m | bit(k));
        set.iter().all(|&k| self.atoms[k - 1] & !m == 0)
    }

    /// True for topologies generated by tails and initial segments.
    pub fn is_filtered(&self) -> bool {
        partition_of_filtered(self).is_some()
    }

    /// Topology generated by this one together with an extra open set.
    fn with_open_set(&self, s: Mask) -> AdmissibleTopology {
        let atoms = (1..=self.d)
            .map(|k| if s & bit(k) != 0 { self.atoms[k - 1] & s } else { self.atoms[k - 1] })
            .collect();
        AdmissibleTopology { d: self.d, atoms }
    }
}

impl fmt::Debug for AdmissibleTopology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "T[")?;
        for (k, a) in self.atoms().iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{{")?;
            for (n, x) in a.iter().enumerate() {
                if n > 0 {
                    write!(f, ",")?;
                }
                write!(f, "{x}")?;
            }
            write!(f, "}}")?;
        }
        write!(f, "]")
    }
}

impl fmt::Display for AdmissibleTopology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Every admissible topology on `{1..d}`, sorted by atom masks.
pub fn enumerate_admissible(d: usize) -> Result<Vec<AdmissibleTopology>> {
    if d > MAX_ENUM_DIM {
        return Err(Error::DimensionTooLarge { d, max: MAX_ENUM_DIM });
    }
    if d == 0 {
        return Err(Error::InvalidTopology("d = 0".into()));
    }
    // atoms are chosen from i = d down to 1; T(i) = {i} ∪ S with S a union
    // of already chosen atoms, which is exactly the closure condition
    fn rec(i: usize, d: usize, atoms: &mut Vec<Mask>, out: &mut Vec<AdmissibleTopology>) {
        if i == 0 {
            out.push(AdmissibleTopology { d, atoms: atoms.clone() });
            return;
        }
        let higher = tail_mask(i + 1, d);
        let mut s: Mask = higher;
        loop {
            let closed = mask_to_vec(s).iter().all(|&j| atoms[j - 1] & !s == 0);
            if closed {
                atoms[i - 1] = bit(i) | s;
                rec(i - 1, d, atoms, out);
            }
            if s == 0 {
                break;
            }
            s = (s - 1) & higher;
        }
    }
    let mut atoms = vec![0; d];
    let mut out = Vec::new();
    rec(d, d, &mut atoms, &mut out);
    out.sort();
    Ok(out)
}

/// `T ≼ T'`: every atom of `T` is inside the corresponding atom of `T'`.
pub fn is_finer(t: &AdmissibleTopology, tp: &AdmissibleTopology) -> bool {
    t.d == tp.d && t.atoms.iter().zip(&tp.atoms).all(|(a, b)| a & !b == 0)
}

/// The pair `(i, j)` when `T` is one step finer than `T'`.
pub fn one_step(t: &AdmissibleTopology, tp: &AdmissibleTopology) -> Option<(usize, usize)> {
    if !is_finer(t, tp) {
        return None;
    }
    let mut found = None;
    for i in 1..=t.d {
        let diff = tp.atoms[i - 1] & !t.atoms[i - 1];
        if diff != 0 {
            if found.is_some() || diff.count_ones() != 1 {
                return None;
            }
            found = Some((i, diff.trailing_zeros() as usize + 1));
        }
    }
    found
}

/// `D_{T,T'}`: the pairs `(i, j)` with `j ∈ T'(i) ∖ T(i)`, sorted.
pub fn removed_pairs(t: &AdmissibleTopology, tp: &AdmissibleTopology) -> Result<Vec<(usize, usize)>> {
    if !is_finer(t, tp) {
        return Err(Error::NotComparable);
    }
    let mut out = Vec::new();
    for i in 1..=t.d {
        for j in mask_to_vec(tp.atoms[i - 1] & !t.atoms[i - 1]) {
            out.push((i, j));
        }
    }
    Ok(out)
}

/// The pair exponent `χ_i − χ_j` of a one-step arrow.
pub fn pair_exponent(chi: &[f64], (i, j): (usize, usize)) -> f64 {
    chi[i - 1] - chi[j - 1]
}

/// A chain `T' = T^0, T^1, ..., T^N = T` of one-step refinements with
/// nondecreasing pair exponents.
///
/// Removed pairs are processed by ascending `χ_i − χ_j` (ties broken
/// lexicographically); at step `t` the set `T^{t-1}(i_t) ∖ {j_t}` is added to
/// the open sets of `T^{t-1}`.
pub fn chain_decompose(
    t: &AdmissibleTopology,
    tp: &AdmissibleTopology,
    chi: &[f64],
) -> Result<Vec<AdmissibleTopology>> {
    if chi.len() != t.d {
        return Err(Error::DimensionMismatch(format!("{} exponents for d = {}", chi.len(), t.d)));
    }
    let mut pairs = removed_pairs(t, tp)?;
    pairs.sort_by(|a, b| pair_exponent(chi, *a).total_cmp(&pair_exponent(chi, *b)).then(a.cmp(b)));
    let mut chain = vec![tp.clone()];
    let mut cur = tp.clone();
    for (i, j) in pairs {
        let s = cur.atoms[i - 1] & !bit(j);
        let next = cur.with_open_set(s);
        if one_step(&next, &cur) != Some((i, j)) {
            // happens only for exponent vectors that are not strictly decreasing
            return Err(Error::ChainMismatch);
        }
        chain.push(next.clone());
        cur = next;
    }
    debug_assert_eq!(&cur, t);
    Ok(chain)
}

/// The arrows `(i_t, j_t)` of a chain.
pub fn chain_arrows(chain: &[AdmissibleTopology]) -> Vec<(usize, usize)> {
    chain.windows(2).filter_map(|w| one_step(&w[1], &w[0])).collect()
}

/// Interval partition `0 = q_0 < q_1 < ... < q_k = d`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "PartitionJson", into = "PartitionJson")]
pub struct IntervalPartition {
    d: usize,
    cuts: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct PartitionJson {
    d: usize,
    cuts: Vec<usize>,
}

impl From<IntervalPartition> for PartitionJson {
    fn from(q: IntervalPartition) -> Self {
        PartitionJson { d: q.d, cuts: q.cuts }
    }
}

impl TryFrom<PartitionJson> for IntervalPartition {
    type Error = Error;
    fn try_from(j: PartitionJson) -> Result<Self> {
        let q = IntervalPartition::new(j.cuts)?;
        if q.d != j.d {
            return Err(Error::InvalidPartition("last cut must equal d".into()));
        }
        Ok(q)
    }
}

impl IntervalPartition {
    /// From the full cut list, starting at 0 and ending at `d`.
    pub fn new(cuts: Vec<usize>) -> Result<Self> {
        if cuts.len() < 2 || cuts[0] != 0 {
            return Err(Error::InvalidPartition("cuts must start at 0 and have an end".into()));
        }
        if cuts.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidPartition("cuts must be strictly increasing".into()));
        }
        let d = *cuts.last().expect("nonempty");
        Ok(IntervalPartition { d, cuts })
    }

    /// The trivial partition `{0 < d}`.
    pub fn trivial(d: usize) -> Self {
        IntervalPartition { d, cuts: vec![0, d] }
    }

    /// The full-flag partition `{0 < 1 < ... < d}`.
    pub fn full(d: usize) -> Self {
        IntervalPartition { d, cuts: (0..=d).collect() }
    }

    /// Lines: `{0 < 1 < d}`.
    pub fn projective(d: usize) -> Self {
        IntervalPartition::new(vec![0, 1, d]).expect("d >= 2")
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn cuts(&self) -> &[usize] {
        &self.cuts
    }

    /// Number of levels `k`.
    pub fn levels(&self) -> usize {
        self.cuts.len() - 1
    }

    /// Level `ℓ(i)`: the `l` with `q_{l-1} < i ≤ q_l`.
    pub fn level(&self, i: usize) -> usize {
        self.cuts.iter().position(|&q| q >= i).expect("i <= d")
    }

    /// The pairs `(i, j)` with `ℓ(i) < ℓ(j)`.
    pub fn separated_pairs(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 1..=self.d {
            for j in i + 1..=self.d {
                if self.level(i) < self.level(j) {
                    out.push((i, j));
                }
            }
        }
        out
    }

    /// Dimension of the partial flag manifold.
    pub fn manifold_dim(&self) -> usize {
        self.separated_pairs().len()
    }

    /// All `2^{d-1}` interval partitions of `{1..d}`.
    pub fn all(d: usize) -> Vec<IntervalPartition> {
        (0..1u32 << (d - 1))
            .map(|m| {
                let mut cuts = vec![0];
                cuts.extend((1..d).filter(|&q| m & (1 << (q - 1)) != 0));
                cuts.push(d);
                IntervalPartition { d, cuts }
            })
            .collect()
    }
}

/// The filtered topology `T_Q` generated by the tails and the initial
/// segments `{1..q_j}`.
pub fn filtered_from_partition(q: &IntervalPartition) -> AdmissibleTopology {
    let d = q.d;
    let mut generators: Vec<Mask> = (1..=d).map(|i| tail_mask(i, d)).collect();
    generators.extend(q.cuts[1..].iter().map(|&c| (1..=c).fold(0, |m, k| m | bit(k))));
    // atom of k in a generated topology: intersection of generators containing k
    let atoms = (1..=d)
        .map(|k| generators.iter().filter(|g| *g & bit(k) != 0).fold(!0, |m, g| m & g))
        .collect();
    AdmissibleTopology { d, atoms }
}

/// The partition of a filtered topology, if it is one.
pub fn partition_of_filtered(t: &AdmissibleTopology) -> Option<IntervalPartition> {
    let mut cuts = vec![0];
    let mut i = 1;
    while i <= t.d {
        let top = *t.atom(i).last().expect("nonempty");
        cuts.push(top);
        i = top + 1;
    }
    let q = IntervalPartition::new(cuts).ok()?;
    (filtered_from_partition(&q) == *t).then_some(q)
}

/// All one-step arrows `(T, T')` with `T` one step finer than `T'`.
pub fn all_arrows(tops: &[AdmissibleTopology]) -> Vec<(usize, usize, (usize, usize))> {
    let mut out = Vec::new();
    for (a, t) in tops.iter().enumerate() {
        for (b, tp) in tops.iter().enumerate() {
            if let Some(p) = one_step(t, tp) {
                out.push((a, b, p));
            }
        }
    }
    out
}

/// Graphviz rendering of the one-step graph; filtered topologies are gray.
pub fn hasse_dot(d: usize) -> Result<String> {
    let tops = enumerate_admissible(d)?;
    let mut s = String::from("digraph admissible {\n  rankdir=BT;\n");
    for (k, t) in tops.iter().enumerate() {
        let style = if t.is_filtered() { ", style=filled, fillcolor=gray80" } else { "" };
        s.push_str(&format!("  t{k} [label=\"{t}\"{style}];\n"));
    }
    for (a, b, (i, j)) in all_arrows(&tops) {
        s.push_str(&format!("  t{a} -> t{b} [label=\"{i},{j}\"];\n"));
    }
    s.push_str("}\n");
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Suborders of the natural order as transitive relations `R ⊆ {(i,j): i<j}`.
    fn brute_force_count(d: usize) -> usize {
        let pairs: Vec<(usize, usize)> =
            (0..d).flat_map(|i| (i + 1..d).map(move |j| (i, j))).collect();
        let mut count = 0;
        for m in 0u32..1 << pairs.len() {
            let has = |i: usize, j: usize| {
                pairs.iter().position(|&p| p == (i, j)).is_some_and(|k| m & (1 << k) != 0)
            };
            let transitive = (0..d).all(|i| {
                (i + 1..d).all(|j| (j + 1..d).all(|k| !(has(i, j) && has(j, k)) || has(i, k)))
            });
            if transitive {
                count += 1;
            }
        }
        count
    }

    #[test]
    fn counts_match_brute_force() {
        for d in 1..=5 {
            assert_eq!(enumerate_admissible(d).unwrap().len(), brute_force_count(d), "d={d}");
        }
        assert_eq!(enumerate_admissible(4).unwrap().len(), 40);
        assert!(matches!(enumerate_admissible(7), Err(Error::DimensionTooLarge { .. })));
    }

    #[test]
    fn arrow_counts() {
        assert_eq!(all_arrows(&enumerate_admissible(3).unwrap()).len(), 9);
        assert_eq!(all_arrows(&enumerate_admissible(4).unwrap()).len(), 92);
        let t1 = AdmissibleTopology::finest(2);
        let t0 = AdmissibleTopology::coarsest(2);
        assert_eq!(one_step(&t1, &t0), Some((1, 2)));
        assert_eq!(one_step(&t0, &t0), None);
    }

    #[test]
    fn removed_pairs_examples() {
        let t1 = AdmissibleTopology::finest(3);
        let t0 = AdmissibleTopology::coarsest(3);
        assert_eq!(removed_pairs(&t1, &t0).unwrap(), vec![(1, 2), (1, 3), (2, 3)]);
        assert!(removed_pairs(&t0, &t0).unwrap().is_empty());
        let t12 = AdmissibleTopology::from_atoms(3, &[vec![1, 2], vec![2], vec![3]]).unwrap();
        assert_eq!(removed_pairs(&t12, &t0).unwrap(), vec![(1, 3), (2, 3)]);
        assert!(matches!(removed_pairs(&t0, &t1), Err(Error::NotComparable)));
    }

    #[test]
    fn chain_example_by_hand() {
        let t1 = AdmissibleTopology::finest(3);
        let t0 = AdmissibleTopology::coarsest(3);
        let chain = chain_decompose(&t1, &t0, &[2.0, 1.0, -3.0]).unwrap();
        assert_eq!(chain_arrows(&chain), vec![(1, 2), (2, 3), (1, 3)]);
        assert_eq!(chain[1].atoms(), vec![vec![1, 3], vec![2, 3], vec![3]]);
        assert_eq!(chain[2].atoms(), vec![vec![1, 3], vec![2], vec![3]]);
        assert_eq!(chain[3], t1);
        assert_eq!(chain_decompose(&t0, &t0, &[2.0, 1.0, -3.0]).unwrap(), vec![t0]);
    }

    #[test]
    fn filtered_topologies() {
        for d in 1..=5 {
            let parts = IntervalPartition::all(d);
            let image: BTreeSet<_> = parts.iter().map(filtered_from_partition).collect();
            assert_eq!(image.len(), 1 << (d - 1));
            for q in &parts {
                let t = filtered_from_partition(q);
                assert!(t.validate().is_ok());
                assert!(t.is_filtered());
                assert_eq!(partition_of_filtered(&t).as_ref(), Some(q));
                // D_{T_Q,T_0} = pairs on different levels
                let t0 = AdmissibleTopology::coarsest(d);
                assert_eq!(removed_pairs(&t, &t0).unwrap(), q.separated_pairs());
            }
            let filtered = enumerate_admissible(d).unwrap().iter().filter(|t| t.is_filtered()).count();
            assert_eq!(filtered, 1 << (d - 1));
        }
        assert_eq!(filtered_from_partition(&IntervalPartition::trivial(4)), AdmissibleTopology::coarsest(4));
        assert_eq!(filtered_from_partition(&IntervalPartition::full(4)), AdmissibleTopology::finest(4));
    }

    #[test]
    fn prop_3_2_memberships() {
        for d in 2..=5 {
            let tops = enumerate_admissible(d).unwrap();
            for (_, b, (i, j)) in all_arrows(&tops) {
                let tp = &tops[b];
                let a = tp.atom(i);
                let minus_i: Vec<usize> = a.iter().copied().filter(|&k| k != i).collect();
                let minus_ij: Vec<usize> = minus_i.iter().copied().filter(|&k| k != j).collect();
                assert!(tp.is_open(&minus_i) && tp.is_open(&minus_ij));
            }
        }
    }

    #[test]
    fn json_round_trip() {
        let t = AdmissibleTopology::coarsest(3);
        let s = serde_json::to_string(&t).unwrap();
        assert_eq!(s, r#"{"d":3,"atoms":[[1,2,3],[2,3],[3]]}"#);
        let back: AdmissibleTopology = serde_json::from_str(&s).unwrap();
        assert_eq!(back, t);
        assert!(serde_json::from_str::<AdmissibleTopology>(r#"{"d":2,"atoms":[[1],[1,2]]}"#).is_err());
    }

    #[test]
    fn dot_export_lists_everything() {
        let dot = hasse_dot(3).unwrap();
        assert_eq!(dot.matches(" -> ").count(), 9);
        assert_eq!(dot.matches("[label=\"T[").count(), 7);
    }

    fn decreasing_zero_sum(d: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.01f64..3.0, d - 1).prop_map(move |gaps| {
            let mut chi = vec![0.0];
            for g in gaps {
                let last = *chi.last().unwrap();
                chi.push(last - g);
            }
            let mean = chi.iter().sum::<f64>() / d as f64;
            chi.iter().map(|c| c - mean).collect()
        })
    }

    proptest! {
        #[test]
        fn chains_are_one_step_and_monotone(chi in decreasing_zero_sum(4), a in 0usize..40, b in 0usize..40) {
            let tops = enumerate_admissible(4).unwrap();
            let (t, tp) = (&tops[a], &tops[b]);
            if is_finer(t, tp) {
                let chain = chain_decompose(t, tp, &chi).unwrap();
                prop_assert_eq!(chain.len() - 1, removed_pairs(t, tp).unwrap().len());
                prop_assert_eq!(chain.first().unwrap(), tp);
                prop_assert_eq!(chain.last().unwrap(), t);
                let arrows = chain_arrows(&chain);
                prop_assert_eq!(arrows.len(), chain.len() - 1);
                for w in chain.windows(2) {
                    prop_assert!(w[1].validate().is_ok());
                    prop_assert!(one_step(&w[1], &w[0]).is_some());
                }
                for w in arrows.windows(2) {
                    prop_assert!(pair_exponent(&chi, w[0]) <= pair_exponent(&chi, w[1]));
                }
            }
        }

        #[test]
        fn pair_counts_are_additive(a in 0usize..40, b in 0usize..40, c in 0usize..40) {
            let tops = enumerate_admissible(4).unwrap();
            let (t, tp, tpp) = (&tops[a], &tops[b], &tops[c]);
            if is_finer(t, tp) && is_finer(tp, tpp) {
                let n = |x, y| removed_pairs(x, y).unwrap().len();
                prop_assert_eq!(n(t, tpp), n(t, tp) + n(tp, tpp));
            }
        }

        #[test]
        fn order_extremes(a in 0usize..40) {
            let tops = enumerate_admissible(4).unwrap();
            let t = &tops[a];
            prop_assert!(is_finer(&AdmissibleTopology::finest(4), t));
            prop_assert!(is_finer(t, &AdmissibleTopology::coarsest(4)));
            prop_assert!(is_finer(t, t));
        }
    }
}
