//! Shared latent-structure types: id sets, allocation matrices, subset draws.
//!
//! Observations carry global integer ids `1..=n` assigned at ingestion. Every
//! subset stores global ids, so subsets drawn on different shards can be
//! compared without a translation table.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{CmcError, Result};

/// A sorted set of global observation ids.
#[derive(Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct IdSet(Vec<usize>);

impl IdSet {
    pub fn new() -> Self {
        Self(Vec::new())
    }

    /// Builds a set from arbitrary ids, sorting and removing duplicates.
    pub fn from_ids(ids: impl IntoIterator<Item = usize>) -> Self {
        let mut v: Vec<usize> = ids.into_iter().collect();
        v.sort_unstable();
        v.dedup();
        Self(v)
    }

    /// Wraps ids already sorted strictly ascending.
    pub(crate) fn from_sorted(v: Vec<usize>) -> Self {
        debug_assert!(v.windows(2).all(|w| w[0] < w[1]));
        Self(v)
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, id: usize) -> bool {
        self.0.binary_search(&id).is_ok()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().copied()
    }

    pub fn min(&self) -> Option<usize> {
        self.0.first().copied()
    }

    pub fn max(&self) -> Option<usize> {
        self.0.last().copied()
    }

    pub fn intersection(&self, other: &IdSet) -> IdSet {
        let (mut i, mut j) = (0, 0);
        let mut out = Vec::new();
        while i < self.0.len() && j < other.0.len() {
            match self.0[i].cmp(&other.0[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    out.push(self.0[i]);
                    i += 1;
                    j += 1;
                }
            }
        }
        IdSet(out)
    }

    pub fn union(&self, other: &IdSet) -> IdSet {
        let (mut i, mut j) = (0, 0);
        let mut out = Vec::with_capacity(self.0.len() + other.0.len());
        while i < self.0.len() && j < other.0.len() {
            match self.0[i].cmp(&other.0[j]) {
                std::cmp::Ordering::Less => {
                    out.push(self.0[i]);
                    i += 1;
                }
                std::cmp::Ordering::Greater => {
                    out.push(other.0[j]);
                    j += 1;
                }
                std::cmp::Ordering::Equal => {
                    out.push(self.0[i]);
                    i += 1;
                    j += 1;
                }
            }
        }
        out.extend_from_slice(&self.0[i..]);
        out.extend_from_slice(&other.0[j..]);
        IdSet(out)
    }

    pub fn difference(&self, other: &IdSet) -> IdSet {
        IdSet(self.0.iter().copied().filter(|&x| !other.contains(x)).collect())
    }

    pub fn is_disjoint(&self, other: &IdSet) -> bool {
        self.intersection(other).is_empty()
    }
}

impl fmt::Debug for IdSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.0.iter()).finish()
    }
}

impl FromIterator<usize> for IdSet {
    fn from_iter<T: IntoIterator<Item = usize>>(iter: T) -> Self {
        IdSet::from_ids(iter)
    }
}

impl From<Vec<usize>> for IdSet {
    fn from(v: Vec<usize>) -> Self {
        IdSet::from_ids(v)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AllocKind {
    Partition,
    Feature,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Dpm,
    Fa,
    Dfa,
}

impl ModelKind {
    pub fn alloc_kind(self) -> AllocKind {
        match self {
            ModelKind::Dpm => AllocKind::Partition,
            ModelKind::Fa | ModelKind::Dfa => AllocKind::Feature,
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Dpm => "dpm",
            ModelKind::Fa => "fa",
            ModelKind::Dfa => "dfa",
        })
    }
}

/// Binary `n x K` membership matrix, stored row-major.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AllocationMatrix {
    n: usize,
    k: usize,
    entries: Vec<u8>,
    kind: AllocKind,
}

impl AllocationMatrix {
    pub fn new(n: usize, k: usize, entries: Vec<u8>, kind: AllocKind) -> Result<Self> {
        if entries.len() != n * k {
            return Err(CmcError::Dimension {
                expected: n * k,
                got: entries.len(),
            });
        }
        let m = Self { n, k, entries, kind };
        m.validate()?;
        Ok(m)
    }

    /// Builds a partition matrix from 0-based labels, one column per distinct
    /// label in order of first appearance.
    pub fn from_labels(labels: &[usize]) -> Self {
        let mut remap: BTreeMap<usize, usize> = BTreeMap::new();
        let mut order = Vec::with_capacity(labels.len());
        for &l in labels {
            let next = remap.len();
            order.push(*remap.entry(l).or_insert(next));
        }
        let k = remap.len();
        let mut entries = vec![0u8; labels.len() * k];
        for (i, &c) in order.iter().enumerate() {
            entries[i * k + c] = 1;
        }
        Self {
            n: labels.len(),
            k,
            entries,
            kind: AllocKind::Partition,
        }
    }

    /// Builds a feature matrix from columns, dropping all-zero columns.
    pub fn from_columns(n: usize, columns: &[Vec<u8>]) -> Result<Self> {
        let kept: Vec<&Vec<u8>> = columns.iter().filter(|c| c.iter().any(|&x| x != 0)).collect();
        let k = kept.len();
        let mut entries = vec![0u8; n * k];
        for (c, col) in kept.iter().enumerate() {
            if col.len() != n {
                return Err(CmcError::Dimension {
                    expected: n,
                    got: col.len(),
                });
            }
            for i in 0..n {
                entries[i * k + c] = col[i];
            }
        }
        Self::new(n, k, entries, AllocKind::Feature)
    }

    fn validate(&self) -> Result<()> {
        if self.entries.iter().any(|&x| x > 1) {
            return Err(CmcError::Invariant("entries must be 0 or 1".into()));
        }
        match self.kind {
            AllocKind::Partition => {
                if self.k > self.n {
                    return Err(CmcError::Invariant(format!(
                        "partition with {} columns over {} rows",
                        self.k, self.n
                    )));
                }
                for i in 0..self.n {
                    let s: u32 = self.row(i).iter().map(|&x| x as u32).sum();
                    if s != 1 {
                        return Err(CmcError::Invariant(format!(
                            "partition row {} sums to {}",
                            i + 1,
                            s
                        )));
                    }
                }
            }
            AllocKind::Feature => {
                if let Some(c) = (0..self.k).find(|&c| self.column_sum(c) == 0) {
                    return Err(CmcError::Invariant(format!("feature column {} is empty", c + 1)));
                }
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn kind(&self) -> AllocKind {
        self.kind
    }

    pub fn get(&self, i: usize, k: usize) -> u8 {
        self.entries[i * self.k + k]
    }

    pub fn row(&self, i: usize) -> &[u8] {
        &self.entries[i * self.k..(i + 1) * self.k]
    }

    pub fn column(&self, k: usize) -> Vec<u8> {
        (0..self.n).map(|i| self.get(i, k)).collect()
    }

    pub fn columns(&self) -> Vec<Vec<u8>> {
        (0..self.k).map(|c| self.column(c)).collect()
    }

    pub fn column_sum(&self, k: usize) -> usize {
        (0..self.n).map(|i| self.get(i, k) as usize).sum()
    }

    pub fn entries(&self) -> &[u8] {
        &self.entries
    }

    /// Column index per row, for partition matrices.
    pub fn labels(&self) -> Option<Vec<usize>> {
        if self.kind != AllocKind::Partition {
            return None;
        }
        Some(
            (0..self.n)
                .map(|i| self.row(i).iter().position(|&x| x == 1).unwrap_or(0))
                .collect(),
        )
    }

    /// Returns a copy with columns reordered by `perm` (new column `c` is old column `perm[c]`).
    pub fn permute_columns(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.k {
            return Err(CmcError::Dimension {
                expected: self.k,
                got: perm.len(),
            });
        }
        let cols = self.columns();
        let mut entries = vec![0u8; self.n * self.k];
        for (new_c, &old_c) in perm.iter().enumerate() {
            for i in 0..self.n {
                entries[i * self.k + new_c] = cols[old_c][i];
            }
        }
        Self::new(self.n, self.k, entries, self.kind)
    }

    /// Subsets `F_k` as global ids `1..=n`.
    pub fn subsets(&self) -> Vec<IdSet> {
        (0..self.k)
            .map(|c| IdSet::from_sorted((0..self.n).filter(|&i| self.get(i, c) == 1).map(|i| i + 1).collect()))
            .collect()
    }
}

/// One Monte Carlo draw: subsets `F_k` with their parameters `theta*_k`, plus
/// model-level globals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubsetDraw<P, G> {
    pub subsets: Vec<IdSet>,
    pub params: Vec<P>,
    pub globals: G,
}

impl<P, G> SubsetDraw<P, G> {
    pub fn k(&self) -> usize {
        self.subsets.len()
    }

    pub fn check(&self, kind: AllocKind, ids: Option<&IdSet>) -> Result<()> {
        if self.subsets.len() != self.params.len() {
            return Err(CmcError::Invariant(format!(
                "{} subsets but {} parameter blocks",
                self.subsets.len(),
                self.params.len()
            )));
        }
        if let Some(k) = self.subsets.iter().position(IdSet::is_empty) {
            return Err(CmcError::Invariant(format!("subset {} is empty", k + 1)));
        }
        if kind == AllocKind::Partition {
            let total: usize = self.subsets.iter().map(IdSet::len).sum();
            let union = self.subsets.iter().fold(IdSet::new(), |acc, s| acc.union(s));
            if union.len() != total {
                return Err(CmcError::Invariant("partition subsets overlap".into()));
            }
            if let Some(ids) = ids {
                if &union != ids {
                    return Err(CmcError::Invariant("partition is not exhaustive".into()));
                }
            }
        }
        Ok(())
    }
}

/// Anchor-overlap distance between two subsets.
///
/// With `X = a ∩ anchors`, `Y = b ∩ anchors`, `C = |X ∩ Y|` and
/// `D = |X Δ Y|`, returns `D / (C + D)`, or 1 when both counts are zero.
pub fn anchor_distance(a: &IdSet, b: &IdSet, anchors: &IdSet) -> Result<f64> {
    if anchors.is_empty() {
        return Err(CmcError::Config("anchor set is empty".into()));
    }
    let x = a.intersection(anchors);
    let y = b.intersection(anchors);
    let common = x.intersection(&y).len();
    let different = x.len() + y.len() - 2 * common;
    Ok(distance_from_counts(common, different))
}

pub(crate) fn distance_from_counts(common: usize, different: usize) -> f64 {
    if common + different == 0 {
        1.0
    } else {
        different as f64 / (common + different) as f64
    }
}

/// Converts the subset view of a draw to its matrix view over ids `1..=n`.
pub fn matrix_from_draw<P, G>(draw: &SubsetDraw<P, G>, n: usize, kind: AllocKind) -> Result<AllocationMatrix> {
    let ids: Vec<usize> = (1..=n).collect();
    matrix_over_ids(&draw.subsets, &ids, kind)
}

/// Matrix view of `subsets` with one row per entry of `ids`, in that order.
pub fn matrix_over_ids(subsets: &[IdSet], ids: &[usize], kind: AllocKind) -> Result<AllocationMatrix> {
    let k = subsets.len();
    let pos: BTreeMap<usize, usize> = ids.iter().enumerate().map(|(r, &id)| (id, r)).collect();
    let mut entries = vec![0u8; ids.len() * k];
    for (c, s) in subsets.iter().enumerate() {
        for id in s.iter() {
            let r = *pos
                .get(&id)
                .ok_or_else(|| CmcError::Data(format!("subset element {id} is outside the id range")))?;
            entries[r * k + c] = 1;
        }
    }
    AllocationMatrix::new(ids.len(), k, entries, kind)
}

/// Iteration schedule shared by all samplers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
}

impl Default for Schedule {
    fn default() -> Self {
        Self {
            iterations: 5000,
            burn_in: 2500,
            thin: 5,
        }
    }
}

impl Schedule {
    pub fn new(iterations: usize, burn_in: usize, thin: usize) -> Self {
        Self {
            iterations,
            burn_in,
            thin,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.thin == 0 {
            return Err(CmcError::Config("thinning must be at least 1".into()));
        }
        if self.burn_in > self.iterations {
            return Err(CmcError::Config("burn-in exceeds the iteration count".into()));
        }
        if self.retained() == 0 {
            return Err(CmcError::Config("schedule retains no draws".into()));
        }
        Ok(())
    }

    pub fn retained(&self) -> usize {
        (self.iterations - self.burn_in.min(self.iterations)) / self.thin.max(1)
    }

    /// Whether iteration `t` (0-based) is kept.
    pub fn keep(&self, t: usize) -> bool {
        t >= self.burn_in && (t - self.burn_in + 1) % self.thin == 0
    }

    pub fn in_burn_in(&self, t: usize) -> bool {
        t < self.burn_in
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainMeta {
    pub model: ModelKind,
    pub seed: u64,
    pub schedule: Schedule,
    pub n_obs: usize,
    /// Post-burn-in acceptance rates per move type.
    pub acceptance: BTreeMap<String, f64>,
}

/// Retained draws from one chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleSet<P, G> {
    pub draws: Vec<SubsetDraw<P, G>>,
    pub meta: ChainMeta,
}

impl<P, G> SampleSet<P, G> {
    pub fn k_trace(&self) -> Vec<usize> {
        self.draws.iter().map(SubsetDraw::k).collect()
    }
}

/// Running accept/propose counters keyed by move name.
#[derive(Clone, Debug, Default)]
pub(crate) struct AcceptCounter {
    counts: BTreeMap<&'static str, (u64, u64)>,
}

impl AcceptCounter {
    pub fn record(&mut self, name: &'static str, accepted: bool) {
        let e = self.counts.entry(name).or_insert((0, 0));
        e.1 += 1;
        if accepted {
            e.0 += 1;
        }
    }

    pub fn rates(&self) -> BTreeMap<String, f64> {
        self.counts
            .iter()
            .map(|(k, &(a, n))| (k.to_string(), if n == 0 { 0.0 } else { a as f64 / n as f64 }))
            .collect()
    }
}
