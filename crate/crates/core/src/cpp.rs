//! Coalescent point process of the population alive at a fixed time,
//! conditioned on survival, with neutral mutations overlaid and the resulting
//! allelic partition.
//!
//! Individual `i` (`1 <= i < N`) hangs off the tree at depth `H_i`; the
//! coalescence depth of `i < j` is `max(H_{i+1}, …, H_j)`. Branch 0 is the
//! ancestral lineage and spans ages `(0, horizon]`.

use std::cmp::Ordering;

use rand::Rng;
use rand_distr::{Distribution, Exp1, Geometric, Open01};

use crate::error::{Error, Result};
use crate::scale::{BranchSampler, ScaleGrid};

/// Depths `H_1, …, H_{N−1}` below a horizon.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CoalescentTree {
    horizon: f64,
    depths: Vec<f64>,
}

impl CoalescentTree {
    pub fn new(horizon: f64, depths: Vec<f64>) -> Result<Self> {
        if !(horizon > 0.0) {
            return Err(Error::Range(format!("horizon must be positive, got {horizon}")));
        }
        if let Some(h) = depths.iter().find(|&&h| !(h > 0.0 && h < horizon)) {
            return Err(Error::Range(format!("depth {h} outside (0, {horizon})")));
        }
        Ok(Self { horizon, depths })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Population size `N`.
    pub fn size(&self) -> usize {
        self.depths.len() + 1
    }

    /// `H_1, …, H_{N−1}`.
    pub fn depths(&self) -> &[f64] {
        &self.depths
    }

    /// Depth of branch `i`; branch 0 has depth `horizon`.
    #[inline]
    pub fn depth(&self, i: usize) -> f64 {
        if i == 0 {
            self.horizon
        } else {
            self.depths[i - 1]
        }
    }

    /// Total branch length `horizon + Σ H_i`.
    pub fn total_length(&self) -> f64 {
        self.horizon + self.depths.iter().sum::<f64>()
    }
}

/// Mutation ages per branch, stored contiguously (branch `i` owns
/// `ages[offsets[i]..offsets[i+1]]`, sorted ascending).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MutationSet {
    offsets: Vec<usize>,
    ages: Vec<f64>,
}

impl MutationSet {
    pub fn from_lists(lists: Vec<Vec<f64>>) -> Result<Self> {
        let mut offsets = vec![0];
        let mut ages = Vec::new();
        for list in lists {
            if list.windows(2).any(|w| !(w[0] < w[1])) {
                return Err(Error::Inconsistent("mutation ages must be strictly increasing".into()));
            }
            ages.extend(list);
            offsets.push(ages.len());
        }
        Ok(Self { offsets, ages })
    }

    pub fn num_branches(&self) -> usize {
        self.offsets.len().saturating_sub(1)
    }

    #[inline]
    pub fn branch(&self, i: usize) -> &[f64] {
        &self.ages[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn total(&self) -> usize {
        self.ages.len()
    }

    fn check(&self, tree: &CoalescentTree) -> Result<()> {
        if self.num_branches() != tree.size() {
            return Err(Error::Inconsistent(format!(
                "{} mutation lists for {} branches",
                self.num_branches(),
                tree.size()
            )));
        }
        for i in 0..tree.size() {
            let d = tree.depth(i);
            if let Some(&a) = self.branch(i).iter().find(|&&a| !(a > 0.0 && a <= d)) {
                return Err(Error::Inconsistent(format!("mutation age {a} on branch {i} exceeds depth {d}")));
            }
        }
        Ok(())
    }
}

/// Type of an individual: untouched ancestral type or the type created by a
/// particular mutation. In forward runs `branch` holds the mutation's serial
/// number instead.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HaplotypeId {
    Ancestral,
    Mut { branch: usize, age: f64 },
}

impl Eq for HaplotypeId {}

impl Ord for HaplotypeId {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Self::Ancestral, Self::Ancestral) => Ordering::Equal,
            (Self::Ancestral, _) => Ordering::Less,
            (_, Self::Ancestral) => Ordering::Greater,
            (Self::Mut { branch: b1, age: a1 }, Self::Mut { branch: b2, age: a2 }) => {
                b1.cmp(b2).then(a1.total_cmp(a2))
            }
        }
    }
}

impl PartialOrd for HaplotypeId {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Family {
    pub id: HaplotypeId,
    pub size: u64,
    /// Age of the defining mutation, `horizon` for the ancestral type.
    pub age: f64,
}

/// Families with at least one living member, in identifier order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AllelicPartition {
    horizon: f64,
    families: Vec<Family>,
}

impl AllelicPartition {
    /// Builds a partition, merging nothing: identifiers must be distinct.
    pub fn new(horizon: f64, mut families: Vec<Family>) -> Result<Self> {
        families.sort_by(|a, b| a.id.cmp(&b.id));
        if families.windows(2).any(|w| w[0].id == w[1].id) {
            return Err(Error::Inconsistent("duplicate haplotype".into()));
        }
        for f in &families {
            if f.size == 0 || !(f.age > 0.0 && f.age <= horizon) {
                return Err(Error::Inconsistent(format!("invalid family {f:?}")));
            }
            if f.id == HaplotypeId::Ancestral && f.age != horizon {
                return Err(Error::Inconsistent("ancestral family must have age = horizon".into()));
            }
        }
        Ok(Self { horizon, families })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn families(&self) -> &[Family] {
        &self.families
    }

    pub fn len(&self) -> usize {
        self.families.len()
    }

    pub fn is_empty(&self) -> bool {
        self.families.is_empty()
    }

    pub fn population(&self) -> u64 {
        self.families.iter().map(|f| f.size).sum()
    }

    pub fn get(&self, id: &HaplotypeId) -> Option<&Family> {
        self.families.binary_search_by(|f| f.id.cmp(id)).ok().map(|i| &self.families[i])
    }

    /// Size of the ancestral family, 0 when it has died out.
    pub fn ancestral_size(&self) -> u64 {
        match self.families.first() {
            Some(f) if f.id == HaplotypeId::Ancestral => f.size,
            _ => 0,
        }
    }
}

/// Draws trees and mutations for one horizon. Immutable; share freely.
#[derive(Debug, Clone)]
pub struct CppSampler<'g> {
    branches: BranchSampler<'g>,
    geometric: Geometric,
    theta: f64,
}

impl<'g> CppSampler<'g> {
    pub fn new(grid: &'g ScaleGrid, horizon: f64, theta: f64) -> Result<Self> {
        if !(theta >= 0.0) {
            return Err(Error::Domain(format!("theta must be nonnegative, got {theta}")));
        }
        if !(horizon > 0.0) {
            return Err(Error::Range(format!("horizon must be positive, got {horizon}")));
        }
        let branches = grid.branch_sampler(horizon)?;
        let geometric = Geometric::new(branches.success_probability())
            .map_err(|e| Error::Domain(format!("geometric law: {e}")))?;
        Ok(Self { branches, geometric, theta })
    }

    pub fn horizon(&self) -> f64 {
        self.branches.horizon()
    }

    /// `N ~ 1 + Geometric(1/W(t))` followed by `N − 1` conditional depths.
    pub fn sample_tree_into<R: Rng + ?Sized>(&self, rng: &mut R, tree: &mut CoalescentTree) {
        let horizon = self.branches.horizon();
        tree.horizon = horizon;
        tree.depths.clear();
        let extra = self.geometric.sample(rng) as usize;
        tree.depths.reserve(extra);
        for _ in 0..extra {
            let u: f64 = rng.sample(Open01);
            // keep depths strictly inside (0, horizon)
            let h = self.branches.quantile(u).clamp(f64::MIN_POSITIVE, horizon * (1.0 - f64::EPSILON));
            tree.depths.push(h);
        }
    }

    /// Poisson mutations on every branch, generated as exponential gaps so
    /// each branch's list comes out sorted.
    pub fn overlay_into<R: Rng + ?Sized>(&self, tree: &CoalescentTree, rng: &mut R, muts: &mut MutationSet) {
        overlay_with(tree, self.theta, rng, muts)
    }
}

fn overlay_with<R: Rng + ?Sized>(tree: &CoalescentTree, theta: f64, rng: &mut R, muts: &mut MutationSet) {
    muts.offsets.clear();
    muts.ages.clear();
    muts.offsets.push(0);
    for i in 0..tree.size() {
        if theta > 0.0 {
            let depth = tree.depth(i);
            let mut age = 0.0;
            loop {
                let gap: f64 = Exp1.sample(rng);
                age += gap / theta;
                if age >= depth {
                    break;
                }
                if age > 0.0 {
                    muts.ages.push(age);
                }
            }
        }
        muts.offsets.push(muts.ages.len());
    }
}

pub fn simulate_tree<R: Rng + ?Sized>(grid: &ScaleGrid, horizon: f64, rng: &mut R) -> Result<CoalescentTree> {
    let sampler = CppSampler::new(grid, horizon, 0.0)?;
    let mut tree = CoalescentTree::default();
    sampler.sample_tree_into(rng, &mut tree);
    Ok(tree)
}

pub fn overlay_mutations<R: Rng + ?Sized>(tree: &CoalescentTree, theta: f64, rng: &mut R) -> Result<MutationSet> {
    if !(theta >= 0.0) {
        return Err(Error::Domain(format!("theta must be nonnegative, got {theta}")));
    }
    let mut muts = MutationSet::default();
    overlay_with(tree, theta, rng, &mut muts);
    Ok(muts)
}

pub fn resolve_partition(tree: &CoalescentTree, muts: &MutationSet) -> Result<AllelicPartition> {
    let mut out = AllelicPartition::default();
    Resolver::default().resolve_into(tree, muts, &mut out)?;
    Ok(out)
}

const ANCESTRAL: usize = usize::MAX;

/// Reusable scratch space for partition resolution.
#[derive(Debug, Clone, Default)]
pub struct Resolver {
    stack: Vec<usize>,
    /// Type carried by the lineage just above the top of each branch.
    above: Vec<usize>,
    /// Slot 0 counts the ancestral type, slot `g + 1` mutation `g`.
    counts: Vec<u64>,
}

impl Resolver {
    pub fn resolve_into(&mut self, tree: &CoalescentTree, muts: &MutationSet, out: &mut AllelicPartition) -> Result<()> {
        muts.check(tree)?;
        let n = tree.size();
        self.above.clear();
        self.above.push(ANCESTRAL);
        self.stack.clear();
        self.stack.push(0);
        for i in 1..n {
            let h = tree.depths[i - 1];
            // l(i) = max{j < i : H_j > H_i}, with H_0 = ∞
            while self.stack.len() > 1 && tree.depth(*self.stack.last().unwrap()) <= h {
                self.stack.pop();
            }
            let l = *self.stack.last().unwrap();
            let ages = muts.branch(l);
            let pos = ages.partition_point(|&a| a <= h);
            let t = if pos < ages.len() { muts.offsets[l] + pos } else { self.above[l] };
            self.above.push(t);
            self.stack.push(i);
        }

        self.counts.clear();
        self.counts.resize(muts.total() + 1, 0);
        for i in 0..n {
            let own = muts.offsets[i];
            let t = if own < muts.offsets[i + 1] { own } else { self.above[i] };
            let slot = if t == ANCESTRAL { 0 } else { t + 1 };
            self.counts[slot] += 1;
        }

        out.horizon = tree.horizon;
        out.families.clear();
        if self.counts[0] > 0 {
            out.families.push(Family { id: HaplotypeId::Ancestral, size: self.counts[0], age: tree.horizon });
        }
        for b in 0..n {
            for g in muts.offsets[b]..muts.offsets[b + 1] {
                let size = self.counts[g + 1];
                if size > 0 {
                    let age = muts.ages[g];
                    out.families.push(Family { id: HaplotypeId::Mut { branch: b, age }, size, age });
                }
            }
        }
        Ok(())
    }
}

/// Counts and order statistics of one partition.
///
/// `l`, `o`, `m` and `k` keep the queried thresholds in input order next to
/// their counts.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExtremeSummary {
    pub l: Vec<(f64, u64)>,
    pub o: Vec<(f64, u64)>,
    pub m: Vec<((f64, f64, f64), u64)>,
    pub k: Vec<((f64, f64, f64), u64)>,
    pub ordered_sizes: Vec<u64>,
    pub ordered_ages: Vec<f64>,
}

fn lookup<K: PartialEq + Copy>(table: &[(K, u64)], key: K) -> Option<u64> {
    table.iter().find(|(k, _)| *k == key).map(|&(_, c)| c)
}

impl ExtremeSummary {
    pub fn l_at(&self, x: f64) -> Option<u64> {
        lookup(&self.l, x)
    }
    pub fn o_at(&self, s: f64) -> Option<u64> {
        lookup(&self.o, s)
    }
    pub fn m_at(&self, w: (f64, f64, f64)) -> Option<u64> {
        lookup(&self.m, w)
    }
    pub fn k_at(&self, w: (f64, f64, f64)) -> Option<u64> {
        lookup(&self.k, w)
    }
    /// `X^(i)` (1-based), 0 if there are fewer than `i` families.
    pub fn size_rank(&self, i: usize) -> u64 {
        self.ordered_sizes.get(i - 1).copied().unwrap_or(0)
    }
    /// `A^(i)` (1-based), 0 if there are fewer than `i` families.
    pub fn age_rank(&self, i: usize) -> f64 {
        self.ordered_ages.get(i - 1).copied().unwrap_or(0.0)
    }
}

/// Smallest integer size counted by a threshold `x` ("at least x").
#[inline]
pub fn size_floor(x: f64) -> u64 {
    x.ceil().max(0.0) as u64
}

pub fn extreme_stats(
    partition: &AllelicPartition,
    size_thresholds: &[f64],
    age_thresholds: &[f64],
    windows: &[(f64, f64, f64)],
) -> Result<ExtremeSummary> {
    if let Some(w) = windows.iter().find(|w| !(w.1 <= w.2)) {
        return Err(Error::Range(format!("window {w:?} has s1 > s2")));
    }
    let fams = partition.families();
    let mut by_size: Vec<&Family> = fams.iter().collect();
    by_size.sort_by(|a, b| b.size.cmp(&a.size).then(a.id.cmp(&b.id)));
    let mut by_age: Vec<&Family> = fams.iter().collect();
    by_age.sort_by(|a, b| b.age.total_cmp(&a.age).then(a.id.cmp(&b.id)));
    let ordered_sizes: Vec<u64> = by_size.iter().map(|f| f.size).collect();
    let ordered_ages: Vec<f64> = by_age.iter().map(|f| f.age).collect();

    let l = size_thresholds
        .iter()
        .map(|&x| {
            let need = size_floor(x);
            (x, ordered_sizes.partition_point(|&s| s >= need) as u64)
        })
        .collect();
    let o = age_thresholds
        .iter()
        .map(|&s| (s, ordered_ages.partition_point(|&a| a > s) as u64))
        .collect();
    let mut m = Vec::with_capacity(windows.len());
    let mut k = Vec::with_capacity(windows.len());
    for &w in windows {
        let (x, s1, s2) = w;
        let need = size_floor(x);
        let (mut cm, mut ck) = (0, 0);
        for f in fams {
            if f.size >= need && f.age > s1 && f.age <= s2 {
                cm += 1;
                if matches!(f.id, HaplotypeId::Mut { branch: 0, .. }) {
                    ck += 1;
                }
            }
        }
        m.push((w, cm));
        k.push((w, ck));
    }
    Ok(ExtremeSummary { l, o, m, k, ordered_sizes, ordered_ages })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{LifespanModel, ModelParams};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tree(h: f64, d: &[f64]) -> CoalescentTree {
        CoalescentTree::new(h, d.to_vec()).unwrap()
    }

    #[test]
    fn resolve_examples() {
        let t = tree(2.0, &[1.0]);
        let none = MutationSet::from_lists(vec![vec![], vec![]]).unwrap();
        let p = resolve_partition(&t, &none).unwrap();
        assert_eq!(p.families(), &[Family { id: HaplotypeId::Ancestral, size: 2, age: 2.0 }]);

        let m = MutationSet::from_lists(vec![vec![1.5], vec![]]).unwrap();
        let p = resolve_partition(&t, &m).unwrap();
        let id = HaplotypeId::Mut { branch: 0, age: 1.5 };
        assert_eq!(p.families(), &[Family { id, size: 2, age: 1.5 }]);
        let s = extreme_stats(&p, &[1.0], &[1.0], &[]).unwrap();
        assert_eq!(s.l_at(1.0), Some(1));
        assert_eq!(s.o_at(1.0), Some(1));
        assert_eq!(s.size_rank(1), 2);
        assert_eq!(s.age_rank(1), 1.5);

        let m = MutationSet::from_lists(vec![vec![], vec![0.3]]).unwrap();
        let p = resolve_partition(&t, &m).unwrap();
        assert_eq!(p.get(&HaplotypeId::Mut { branch: 1, age: 0.3 }).unwrap().size, 1);
        assert_eq!(p.get(&HaplotypeId::Ancestral).unwrap().size, 1);
        assert_eq!(p.ancestral_size(), 1);

        // mutation below the coalescence depth is not inherited
        let m = MutationSet::from_lists(vec![vec![0.5], vec![]]).unwrap();
        let p = resolve_partition(&t, &m).unwrap();
        assert_eq!(p.len(), 2);
    }

    #[test]
    fn inconsistent_mutations_rejected() {
        let t = tree(2.0, &[1.0]);
        let m = MutationSet::from_lists(vec![vec![], vec![1.2]]).unwrap();
        assert!(resolve_partition(&t, &m).is_err());
        let m = MutationSet::from_lists(vec![vec![]]).unwrap();
        assert!(resolve_partition(&t, &m).is_err());
        assert!(MutationSet::from_lists(vec![vec![0.5, 0.2]]).is_err());
    }

    /// Brute-force spine walk: climb from each individual through
    /// the branches it joins, taking the first mutation met.
    fn naive(tree: &CoalescentTree, muts: &MutationSet) -> Vec<HaplotypeId> {
        let n = tree.size();
        (0..n)
            .map(|i| {
                let (mut b, mut from) = (i, 0.0);
                loop {
                    let top = tree.depth(b);
                    if let Some(&a) = muts.branch(b).iter().find(|&&a| a > from && a <= top) {
                        return HaplotypeId::Mut { branch: b, age: a };
                    }
                    if b == 0 {
                        return HaplotypeId::Ancestral;
                    }
                    let l = (0..b).rev().find(|&j| tree.depth(j) > top).unwrap();
                    from = top;
                    b = l;
                }
            })
            .collect()
    }

    proptest! {
        #[test]
        fn resolver_matches_naive_spine_walk(
            depths in prop::collection::vec(0.01f64..0.99, 0..40),
            theta in 0.0f64..6.0,
            seed in any::<u64>(),
        ) {
            let t = CoalescentTree::new(1.0, depths).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = overlay_mutations(&t, theta, &mut rng).unwrap();
            let p = resolve_partition(&t, &m).unwrap();
            prop_assert_eq!(p.population(), t.size() as u64);
            let types = naive(&t, &m);
            for f in p.families() {
                let c = types.iter().filter(|&&id| id == f.id).count() as u64;
                prop_assert_eq!(c, f.size);
            }
            let distinct = {
                let mut v = types.clone();
                v.sort();
                v.dedup();
                v.len()
            };
            prop_assert_eq!(distinct, p.len());
        }

        #[test]
        fn extreme_invariants(
            depths in prop::collection::vec(0.01f64..1.99, 0..60),
            seed in any::<u64>(),
            x in 0.5f64..6.0,
            s in prop::collection::vec(0.0f64..2.0, 3),
        ) {
            let t = CoalescentTree::new(2.0, depths).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = overlay_mutations(&t, 2.0, &mut rng).unwrap();
            let p = resolve_partition(&t, &m).unwrap();
            let mut s = s.clone();
            s.sort_by(f64::total_cmp);
            let w = [(x, s[0], s[1]), (x, s[1], s[2]), (x, s[0], s[2]), (x, s[1], s[1])];
            let e = extreme_stats(&p, &[1.0, x, x + 1.0], &[s[0], s[1], s[2]], &w).unwrap();
            prop_assert_eq!(e.l_at(1.0).unwrap(), p.len() as u64);
            prop_assert!(e.l_at(x).unwrap() >= e.l_at(x + 1.0).unwrap());
            prop_assert!(e.o_at(s[0]).unwrap() >= e.o_at(s[1]).unwrap());
            prop_assert!(e.o_at(s[1]).unwrap() >= e.o_at(s[2]).unwrap());
            prop_assert_eq!(e.m[0].1 + e.m[1].1, e.m[2].1);
            prop_assert_eq!(e.m[3].1, 0);
            for (mk, kk) in e.m.iter().zip(&e.k) {
                prop_assert!(kk.1 <= mk.1);
            }
            prop_assert!(e.ordered_sizes.windows(2).all(|v| v[0] >= v[1]));
            prop_assert!(e.ordered_ages.windows(2).all(|v| v[0] >= v[1]));
        }
    }

    #[test]
    fn tiny_horizon_gives_singletons() {
        let p = ModelParams::new(LifespanModel::yule(1.0).unwrap(), 0.0).unwrap();
        let g = crate::scale::ScaleGrid::build(&p, 1.0, 1e-3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            assert_eq!(simulate_tree(&g, 1e-12, &mut rng).unwrap().size(), 1);
        }
        assert!(simulate_tree(&g, 2.0, &mut rng).is_err());
    }

    #[test]
    fn deterministic_given_seed() {
        let p = ModelParams::new(LifespanModel::yule(1.0).unwrap(), 0.0).unwrap();
        let g = crate::scale::ScaleGrid::build(&p, 4.0, 1e-3).unwrap();
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let t = simulate_tree(&g, 3.0, &mut rng).unwrap();
            let m = overlay_mutations(&t, 1.0, &mut rng).unwrap();
            resolve_partition(&t, &m).unwrap()
        };
        assert_eq!(draw(7), draw(7));
    }
}
