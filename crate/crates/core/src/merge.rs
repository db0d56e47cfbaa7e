//! Anchor-overlap merging of per-shard draws into consensus draws.
//!
//! For a fixed iteration `t`, every `(shard, subset)` pair is a node. Two nodes
//! are linked when their anchor distance is below
//! `epsilon`; consensus subsets are unions over connected components of that
//! graph. Parameters of linked subsets are merged by size-weighted averaging
//! (continuous values) or size-weighted majority vote (categorical values).

use std::collections::BTreeMap;
use std::fmt::Debug;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::allocation::{distance_from_counts, AllocKind, IdSet, SubsetDraw};
use crate::error::{CmcError, Result};
use crate::shard::MergeConfig;

/// Subset-specific parameter block that can be merged across shards.
pub trait SubsetParams: Clone + Debug + Send + Sync + Serialize + DeserializeOwned {
    /// Merges `(block, subset size)` pairs. `tie` resolves tied categorical votes.
    fn merge(blocks: &[(&Self, usize)], tie: i8) -> Result<Self>;
}

/// Model-level parameters shared by all subsets of a draw.
pub trait GlobalParams: Clone + Debug + Send + Sync + Serialize + DeserializeOwned {
    /// Combines the globals of all shard draws at one iteration.
    fn combine(items: &[&Self]) -> Result<Self>;
}

impl GlobalParams for () {
    fn combine(_: &[&Self]) -> Result<Self> {
        Ok(())
    }
}

/// Generic parameter block: continuous values plus categorical codes.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamBlock {
    pub continuous: Vec<f64>,
    pub categorical: Vec<i8>,
}

impl SubsetParams for ParamBlock {
    fn merge(blocks: &[(&Self, usize)], tie: i8) -> Result<Self> {
        let cont: Vec<(&[f64], usize)> = blocks.iter().map(|(b, w)| (b.continuous.as_slice(), *w)).collect();
        let cat: Vec<(&[i8], usize)> = blocks.iter().map(|(b, w)| (b.categorical.as_slice(), *w)).collect();
        Ok(ParamBlock {
            continuous: weighted_mean(&cont)?,
            categorical: weighted_vote(&cat, tie)?,
        })
    }
}

/// Merges parameter blocks weighted by subset size. A single block is returned unchanged.
pub fn merge_params<P: SubsetParams>(blocks: &[(&P, usize)], tie: i8) -> Result<P> {
    match blocks {
        [] => Err(CmcError::Empty("no parameter blocks to merge".into())),
        [(only, _)] => Ok((*only).clone()),
        _ => P::merge(blocks, tie),
    }
}

fn normalised_weights(sizes: impl Iterator<Item = usize> + Clone) -> Vec<f64> {
    let total: usize = sizes.clone().sum();
    let count = sizes.clone().count();
    if total == 0 {
        return vec![1.0 / count as f64; count];
    }
    sizes.map(|w| w as f64 / total as f64).collect()
}

/// Size-weighted elementwise mean of equal-length vectors.
pub fn weighted_mean(blocks: &[(&[f64], usize)]) -> Result<Vec<f64>> {
    let Some(((first, _), _)) = blocks.split_first() else {
        return Ok(Vec::new());
    };
    let len = first.len();
    if let Some((bad, _)) = blocks.iter().find(|(v, _)| v.len() != len) {
        return Err(CmcError::Dimension {
            expected: len,
            got: bad.len(),
        });
    }
    let weights = normalised_weights(blocks.iter().map(|(_, w)| *w));
    let mut out = vec![0.0; len];
    for ((v, _), w) in blocks.iter().zip(&weights) {
        for (o, x) in out.iter_mut().zip(v.iter()) {
            *o += w * x;
        }
    }
    Ok(out)
}

/// Size-weighted elementwise majority vote; ties go to `tie`.
pub fn weighted_vote(blocks: &[(&[i8], usize)], tie: i8) -> Result<Vec<i8>> {
    let Some(((first, _), _)) = blocks.split_first() else {
        return Ok(Vec::new());
    };
    let len = first.len();
    if let Some((bad, _)) = blocks.iter().find(|(v, _)| v.len() != len) {
        return Err(CmcError::Dimension {
            expected: len,
            got: bad.len(),
        });
    }
    let mut out = Vec::with_capacity(len);
    for j in 0..len {
        let mut tally: BTreeMap<i8, usize> = BTreeMap::new();
        for (v, w) in blocks {
            *tally.entry(v[j]).or_default() += *w;
        }
        let best = tally.values().copied().max().unwrap_or(0);
        let leaders: Vec<i8> = tally.iter().filter(|(_, &w)| w == best).map(|(&c, _)| c).collect();
        out.push(if leaders.len() == 1 { leaders[0] } else { tie });
    }
    Ok(out)
}

/// One consensus draw with the `(shard, subset)` pairs behind each subset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConsensusDraw<P, G> {
    pub t: usize,
    pub draw: SubsetDraw<P, G>,
    pub provenance: Vec<Vec<(usize, usize)>>,
}

struct DisjointSets {
    parent: Vec<usize>,
}

impl DisjointSets {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // keep the smaller index as root so components are labelled canonically
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

fn anchor_bits(subset: &IdSet, anchors: &IdSet, words: usize) -> Vec<u64> {
    let mut bits = vec![0u64; words];
    let a = anchors.as_slice();
    for id in subset.iter() {
        if let Ok(pos) = a.binary_search(&id) {
            bits[pos / 64] |= 1 << (pos % 64);
        }
    }
    bits
}

/// Merges the shard draws of one iteration into a consensus draw.
pub fn merge_draws<P: SubsetParams, G: GlobalParams>(
    draws: &[&SubsetDraw<P, G>],
    cfg: &MergeConfig,
    kind: AllocKind,
    t: usize,
) -> Result<ConsensusDraw<P, G>> {
    if draws.is_empty() {
        return Err(CmcError::Empty("no shard draws to merge".into()));
    }
    let words = cfg.anchors.len().div_ceil(64).max(1);
    let mut nodes: Vec<(usize, usize)> = Vec::new();
    let mut bits: Vec<Vec<u64>> = Vec::new();
    for (s, d) in draws.iter().enumerate() {
        for (k, subset) in d.subsets.iter().enumerate() {
            nodes.push((s, k));
            bits.push(anchor_bits(subset, &cfg.anchors, words));
        }
    }

    let mut sets = DisjointSets::new(nodes.len());
    for a in 0..nodes.len() {
        for b in a + 1..nodes.len() {
            let (mut common, mut diff) = (0u32, 0u32);
            for (x, y) in bits[a].iter().zip(&bits[b]) {
                common += (x & y).count_ones();
                diff += (x ^ y).count_ones();
            }
            if distance_from_counts(common as usize, diff as usize) < cfg.epsilon {
                sets.union(a, b);
            }
        }
    }

    // Components in order of their first node.
    let mut comp_of_root: BTreeMap<usize, usize> = BTreeMap::new();
    let mut members: Vec<Vec<usize>> = Vec::new();
    for a in 0..nodes.len() {
        let r = sets.find(a);
        let c = *comp_of_root.entry(r).or_insert_with(|| {
            members.push(Vec::new());
            members.len() - 1
        });
        members[c].push(a);
    }

    let mut subsets = Vec::with_capacity(members.len());
    let mut params = Vec::with_capacity(members.len());
    let mut provenance = Vec::with_capacity(members.len());
    let mut node_comp = vec![0usize; nodes.len()];
    for (c, group) in members.iter().enumerate() {
        let mut union = IdSet::new();
        let mut blocks = Vec::with_capacity(group.len());
        for &a in group {
            node_comp[a] = c;
            let (s, k) = nodes[a];
            let subset = &draws[s].subsets[k];
            union = union.union(subset);
            blocks.push((&draws[s].params[k], subset.len()));
        }
        subsets.push(union);
        params.push(merge_params(&blocks, cfg.categorical_tie)?);
        provenance.push(group.iter().map(|&a| nodes[a]).collect::<Vec<_>>());
    }

    if kind == AllocKind::Partition && members.len() > 1 {
        repair_partition(draws, cfg, &nodes, &node_comp, &mut subsets);
        let keep: Vec<bool> = subsets.iter().map(|s| !s.is_empty()).collect();
        let mut it = keep.iter();
        subsets.retain(|_| *it.next().unwrap());
        let mut it = keep.iter();
        params.retain(|_| *it.next().unwrap());
        let mut it = keep.iter();
        provenance.retain(|_| *it.next().unwrap());
    }

    let globals: Vec<&G> = draws.iter().map(|d| &d.globals).collect();
    Ok(ConsensusDraw {
        t,
        draw: SubsetDraw {
            subsets,
            params,
            globals: G::combine(&globals)?,
        },
        provenance,
    })
}

/// Anchors carry an assignment in every shard. Each anchor keeps only the
/// consensus cluster chosen by majority over shards; ties go to the larger
/// cluster, then the lower index.
fn repair_partition<P, G>(
    draws: &[&SubsetDraw<P, G>],
    cfg: &MergeConfig,
    nodes: &[(usize, usize)],
    node_comp: &[usize],
    subsets: &mut [IdSet],
) {
    let mut node_index: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for (a, &n) in nodes.iter().enumerate() {
        node_index.insert(n, a);
    }
    let sizes: Vec<usize> = subsets.iter().map(IdSet::len).collect();
    let mut removals: Vec<Vec<usize>> = vec![Vec::new(); subsets.len()];
    for anchor in cfg.anchors.iter() {
        let mut votes: BTreeMap<usize, usize> = BTreeMap::new();
        for (s, d) in draws.iter().enumerate() {
            if let Some(k) = d.subsets.iter().position(|f| f.contains(anchor)) {
                *votes.entry(node_comp[node_index[&(s, k)]]).or_default() += 1;
            }
        }
        if votes.len() <= 1 {
            continue;
        }
        let winner = votes
            .iter()
            .max_by(|(ca, va), (cb, vb)| va.cmp(vb).then(sizes[**ca].cmp(&sizes[**cb])).then(cb.cmp(ca)))
            .map(|(&c, _)| c)
            .expect("non-empty votes");
        for &c in votes.keys() {
            if c != winner {
                removals[c].push(anchor);
            }
        }
    }
    for (c, gone) in removals.into_iter().enumerate() {
        if !gone.is_empty() {
            subsets[c] = subsets[c].difference(&IdSet::from_sorted(gone));
        }
    }
}
