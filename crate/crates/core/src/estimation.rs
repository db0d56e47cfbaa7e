//! Point estimates from posterior draws, error metrics against a known truth,
//! and the two-shard CMC-versus-MCMC diagnostic.

use std::collections::{BTreeMap, HashMap};

use rand::seq::index::sample as sample_indices;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::allocation::{matrix_over_ids, AllocKind, AllocationMatrix, IdSet, SubsetDraw};
use crate::consensus::{merge_chains, run_full, run_shards, ChainModel, ShardData};
use crate::dfa::DfaSubsetParams;
use crate::dpm::GaussianClusterParams;
use crate::error::{CmcError, Result};
use crate::fa::FaSubsetParams;
use crate::rng::{chain_rng, stream_seed};
use crate::shard::{MergeConfig, ShardPlan};

/// Most frequent value; ties go to the smaller one.
pub fn posterior_mode_k(ks: &[usize]) -> Result<usize> {
    let hist = k_histogram(ks);
    hist.iter()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
        .map(|(&k, _)| k)
        .ok_or_else(|| CmcError::Empty("no draws".into()))
}

pub fn k_histogram(ks: &[usize]) -> BTreeMap<usize, usize> {
    let mut hist = BTreeMap::new();
    for &k in ks {
        *hist.entry(k).or_insert(0) += 1;
    }
    hist
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointEstimate<P> {
    pub k_hat: usize,
    /// Rows follow the id order passed to [`point_estimate`].
    pub a_hat: AllocationMatrix,
    pub subsets: Vec<IdSet>,
    pub params_hat: Vec<P>,
    /// Index of the selected draw in the input.
    pub draw_index: usize,
    pub method: String,
}

/// Cluster label of every id; ids outside all subsets get `usize::MAX`.
fn labels_of(subsets: &[IdSet], pos: &HashMap<usize, usize>, n: usize) -> Vec<usize> {
    let mut out = vec![usize::MAX; n];
    for (k, s) in subsets.iter().enumerate() {
        for id in s.iter() {
            if let Some(&r) = pos.get(&id) {
                out[r] = k;
            }
        }
    }
    out
}

/// Number of unordered pairs on which the two co-membership matrices differ.
pub fn comembership_distance(a: &[usize], b: &[usize]) -> u64 {
    let ka = a.iter().copied().filter(|&x| x != usize::MAX).max().map_or(0, |m| m + 1) + 1;
    let kb = b.iter().copied().filter(|&x| x != usize::MAX).max().map_or(0, |m| m + 1) + 1;
    let slot = |x: usize, k: usize| if x == usize::MAX { k - 1 } else { x };
    let mut na = vec![0u64; ka];
    let mut nb = vec![0u64; kb];
    let mut nab = vec![0u64; ka * kb];
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (slot(x, ka), slot(y, kb));
        na[x] += 1;
        nb[y] += 1;
        nab[x * kb + y] += 1;
    }
    let sq = |v: &[u64]| v.iter().map(|c| c * c).sum::<u64>();
    (sq(&na) + sq(&nb) - 2 * sq(&nab)) / 2
}

fn bitsets(subsets: &[IdSet], pos: &HashMap<usize, usize>, n: usize) -> Vec<Vec<u64>> {
    let words = n.div_ceil(64);
    subsets
        .iter()
        .map(|s| {
            let mut bits = vec![0u64; words];
            for id in s.iter() {
                if let Some(&r) = pos.get(&id) {
                    bits[r / 64] |= 1 << (r % 64);
                }
            }
            bits
        })
        .collect()
}

fn hamming_bits(a: &[u64], b: &[u64]) -> u64 {
    a.iter().zip(b).map(|(x, y)| u64::from((x ^ y).count_ones())).sum()
}

/// Hamming distance between two feature matrices after greedily pairing
/// their columns by smallest distance.
pub(crate) fn aligned_hamming(a: &[Vec<u64>], b: &[Vec<u64>]) -> u64 {
    let empty = vec![0u64; a.first().or(b.first()).map_or(0, Vec::len)];
    let mut pairs: Vec<(u64, usize, usize)> = Vec::with_capacity(a.len() * b.len());
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            pairs.push((hamming_bits(x, y), i, j));
        }
    }
    pairs.sort_unstable();
    let mut used_a = vec![false; a.len()];
    let mut used_b = vec![false; b.len()];
    let mut total = 0;
    for (d, i, j) in pairs {
        if !used_a[i] && !used_b[j] {
            used_a[i] = true;
            used_b[j] = true;
            total += d;
        }
    }
    for (i, x) in a.iter().enumerate() {
        if !used_a[i] {
            total += hamming_bits(x, &empty);
        }
    }
    for (j, y) in b.iter().enumerate() {
        if !used_b[j] {
            total += hamming_bits(y, &empty);
        }
    }
    total
}

/// Medoid of the draws with the modal number of subsets.
pub fn point_estimate<P: Clone, G>(
    draws: &[&SubsetDraw<P, G>],
    ids: &[usize],
    kind: AllocKind,
) -> Result<PointEstimate<P>> {
    let ks: Vec<usize> = draws.iter().map(|d| d.k()).collect();
    let k_hat = posterior_mode_k(&ks)?;
    let cand: Vec<usize> = (0..draws.len()).filter(|&t| ks[t] == k_hat).collect();
    let n = ids.len();
    let pos: HashMap<usize, usize> = ids.iter().enumerate().map(|(r, &id)| (id, r)).collect();
    let dist: Vec<Vec<u64>> = match kind {
        AllocKind::Partition => {
            let labels: Vec<Vec<usize>> = cand.iter().map(|&t| labels_of(&draws[t].subsets, &pos, n)).collect();
            pairwise(&labels, |a, b| comembership_distance(a, b))
        }
        AllocKind::Feature => {
            let bits: Vec<Vec<Vec<u64>>> = cand.iter().map(|&t| bitsets(&draws[t].subsets, &pos, n)).collect();
            pairwise(&bits, |a, b| aligned_hamming(a, b))
        }
    };
    let best = (0..cand.len())
        .min_by_key(|&c| dist[c].iter().sum::<u64>())
        .expect("the mode is attained");
    let chosen = draws[cand[best]];
    Ok(PointEstimate {
        k_hat,
        a_hat: matrix_over_ids(&chosen.subsets, ids, kind)?,
        subsets: chosen.subsets.clone(),
        params_hat: chosen.params.clone(),
        draw_index: cand[best],
        method: "medoid conditional on modal K".into(),
    })
}

fn pairwise<T: Sync>(items: &[T], d: impl Fn(&T, &T) -> u64 + Sync) -> Vec<Vec<u64>> {
    let m = items.len();
    let upper: Vec<Vec<u64>> = (0..m)
        .into_par_iter()
        .map(|i| (i + 1..m).map(|j| d(&items[i], &items[j])).collect())
        .collect();
    let mut out = vec![vec![0u64; m]; m];
    for i in 0..m {
        for (off, &v) in upper[i].iter().enumerate() {
            let j = i + 1 + off;
            out[i][j] = v;
            out[j][i] = v;
        }
    }
    out
}

/// Greedy column matching of `a_hat` to `a_true`.
///
/// Matching estimated column `k` to true column `l` replaces the cost `|l|`
/// of a missing column by their Hamming distance; pairs are taken in order of
/// decreasing saving until `min(K_hat, K_true)` pairs are fixed. Returns
/// `(hat, true)` index pairs.
pub fn match_columns(a_hat: &AllocationMatrix, a_true: &AllocationMatrix) -> Result<Vec<(usize, usize)>> {
    if a_hat.n() != a_true.n() {
        return Err(CmcError::Dimension {
            expected: a_true.n(),
            got: a_hat.n(),
        });
    }
    let hat = a_hat.columns();
    let tru = a_true.columns();
    let mut pairs: Vec<(i64, usize, usize)> = Vec::with_capacity(hat.len() * tru.len());
    for (k, h) in hat.iter().enumerate() {
        for (l, t) in tru.iter().enumerate() {
            let ham = h.iter().zip(t).filter(|(x, y)| x != y).count() as i64;
            let ones = t.iter().filter(|&&x| x == 1).count() as i64;
            pairs.push((ones - ham, k, l));
        }
    }
    pairs.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut used_h = vec![false; hat.len()];
    let mut used_t = vec![false; tru.len()];
    let mut out = Vec::new();
    for (_, k, l) in pairs {
        if !used_h[k] && !used_t[l] {
            used_h[k] = true;
            used_t[l] = true;
            out.push((k, l));
        }
    }
    Ok(out)
}

/// Hamming distance to the truth after matching, divided by `n K_true`.
pub fn misallocation_rate(a_hat: &AllocationMatrix, a_true: &AllocationMatrix) -> Result<f64> {
    let matching = match_columns(a_hat, a_true)?;
    let (n, kt) = (a_true.n(), a_true.k());
    if kt == 0 || n == 0 {
        return Ok(0.0);
    }
    let mut matched = vec![None; kt];
    for &(k, l) in &matching {
        matched[l] = Some(k);
    }
    let mut ham = 0usize;
    for (l, m) in matched.iter().enumerate() {
        for i in 0..n {
            let h = m.map_or(0, |k| a_hat.get(i, k));
            ham += (h != a_true.get(i, l)) as usize;
        }
    }
    Ok(ham as f64 / (n * kt) as f64)
}

/// Normalised mutual information `2 I / (H_a + H_b)` with natural logarithms.
pub fn nmi(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(CmcError::Dimension {
            expected: a.len(),
            got: b.len(),
        });
    }
    if a.is_empty() {
        return Err(CmcError::Empty("no labels".into()));
    }
    let n = a.len() as f64;
    let mut ca: HashMap<usize, f64> = HashMap::new();
    let mut cb: HashMap<usize, f64> = HashMap::new();
    let mut cab: HashMap<(usize, usize), f64> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *ca.entry(x).or_default() += 1.0;
        *cb.entry(y).or_default() += 1.0;
        *cab.entry((x, y)).or_default() += 1.0;
    }
    let entropy = |c: &HashMap<usize, f64>| -c.values().map(|&v| (v / n) * (v / n).ln()).sum::<f64>();
    let (ha, hb) = (entropy(&ca), entropy(&cb));
    if ha + hb <= 0.0 {
        return Ok(1.0);
    }
    let mi: f64 = cab
        .iter()
        .map(|(&(x, y), &v)| (v / n) * ((v * n) / (ca[&x] * cb[&y])).ln())
        .sum();
    Ok((2.0 * mi / (ha + hb)).clamp(0.0, 1.0))
}

/// Per-subset parameters that can be scored against a truth.
pub trait ScoredParams {
    /// Summed error and number of scored entries.
    fn error_against(&self, truth: &Self) -> Result<(f64, usize)>;
}

fn squared(a: &[f64], b: &[f64]) -> Result<(f64, usize)> {
    if a.len() != b.len() {
        return Err(CmcError::Dimension {
            expected: b.len(),
            got: a.len(),
        });
    }
    Ok((a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum(), a.len()))
}

impl ScoredParams for GaussianClusterParams {
    fn error_against(&self, truth: &Self) -> Result<(f64, usize)> {
        squared(&self.mu, &truth.mu)
    }
}

impl ScoredParams for FaSubsetParams {
    fn error_against(&self, truth: &Self) -> Result<(f64, usize)> {
        squared(&self.theta, &truth.theta)
    }
}

impl ScoredParams for DfaSubsetParams {
    fn error_against(&self, truth: &Self) -> Result<(f64, usize)> {
        if self.c_col.len() != truth.c_col.len() {
            return Err(CmcError::Dimension {
                expected: truth.c_col.len(),
                got: self.c_col.len(),
            });
        }
        let wrong = self.c_col.iter().zip(&truth.c_col).filter(|(a, b)| a != b).count();
        Ok((wrong as f64, self.c_col.len()))
    }
}

/// Mean error over the matched `(hat, true)` column pairs: squared error for
/// continuous parameters, mismatch rate for categorical ones.
pub fn param_error<P: ScoredParams>(hat: &[P], truth: &[P], matching: &[(usize, usize)]) -> Result<f64> {
    let (mut sum, mut count) = (0.0, 0usize);
    for &(k, l) in matching {
        let (h, t) = (
            hat.get(k).ok_or_else(|| CmcError::Data(format!("no estimated subset {k}")))?,
            truth.get(l).ok_or_else(|| CmcError::Data(format!("no true subset {l}")))?,
        );
        let (s, c) = h.error_against(t)?;
        sum += s;
        count += c;
    }
    Ok(if count == 0 { 0.0 } else { sum / count as f64 })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticSummary {
    pub epsilon: f64,
    pub mean: f64,
    pub sd: f64,
    /// Agreement per repetition: NMI for partitions, `1 - e_A` for features.
    pub values: Vec<f64>,
    /// 1-based worker shards used in each repetition.
    pub shard_pairs: Vec<(usize, usize)>,
}

/// Agreement between two point estimates over the same ids.
pub fn estimate_agreement(a: &AllocationMatrix, b: &AllocationMatrix) -> Result<f64> {
    match a.kind() {
        AllocKind::Partition => {
            let la = a.labels().ok_or_else(|| CmcError::Invariant("not a partition".into()))?;
            let lb = b.labels().ok_or_else(|| CmcError::Invariant("not a partition".into()))?;
            nmi(&la, &lb)
        }
        AllocKind::Feature => Ok(1.0 - misallocation_rate(a, b)?),
    }
}

/// For each repetition, picks two worker shards at random, runs CMC on them
/// with the anchors and a single chain on their union, and compares the two
/// point estimates.
pub fn approximation_diagnostic<M: ChainModel>(
    data: &M::Data,
    plan: &ShardPlan,
    cfg: &M::Config,
    merge: &MergeConfig,
    n_reps: usize,
) -> Result<DiagnosticSummary> {
    if &merge.anchors != plan.anchors() {
        return Err(CmcError::Config("merge anchors differ from the shard plan's anchor shard".into()));
    }
    let mut out = diagnostic_sweep::<M>(data, plan, cfg, &[merge.epsilon], n_reps)?;
    Ok(out.remove(0))
}

/// The diagnostic at several merge thresholds. Each repetition runs its
/// chains once and re-merges them per threshold.
pub fn diagnostic_sweep<M: ChainModel>(
    data: &M::Data,
    plan: &ShardPlan,
    cfg: &M::Config,
    epsilons: &[f64],
    n_reps: usize,
) -> Result<Vec<DiagnosticSummary>> {
    let s = plan.num_shards();
    if s < 2 {
        return Err(CmcError::Config("the diagnostic needs at least two worker shards".into()));
    }
    if n_reps == 0 {
        return Err(CmcError::Config("need at least one repetition".into()));
    }
    let merges: Vec<MergeConfig> = epsilons
        .iter()
        .map(|&e| MergeConfig::new(e, plan.anchors().clone()))
        .collect::<Result<_>>()?;
    if merges.is_empty() {
        return Err(CmcError::Config("need at least one threshold".into()));
    }
    let master = M::seed(cfg);
    let kind = M::MODEL.alloc_kind();
    let reps: Vec<(Vec<f64>, (usize, usize))> = (0..n_reps)
        .into_par_iter()
        .map(|r| {
            let rep_seed = stream_seed(master, 1_000_000 + r as u64);
            let mut rng = chain_rng(rep_seed);
            let pick = sample_indices(&mut rng, s, 2);
            let (a, b) = (pick.index(0).min(pick.index(1)), pick.index(0).max(pick.index(1)));
            let sub_plan = ShardPlan::from_parts(
                vec![plan.worker(a).clone(), plan.worker(b).clone()],
                plan.anchors().clone(),
            )?;
            let union = sub_plan.all_ids();
            let sub_data = data.select(&union)?;
            let rep_cfg = M::with_seed(cfg, rep_seed);
            let chains = run_shards::<M>(&sub_data, &sub_plan, &rep_cfg)?;
            let full = run_full::<M>(&sub_data, &rep_cfg)?;
            let ids: Vec<usize> = union.iter().collect();
            let full_draws: Vec<_> = full.draws.iter().collect();
            let est_full = point_estimate(&full_draws, &ids, kind)?;
            let values = merges
                .iter()
                .map(|m| {
                    let cmc = merge_chains(&chains, m, kind)?;
                    let cmc_draws: Vec<_> = cmc.iter().map(|d| &d.draw).collect();
                    let est_cmc = point_estimate(&cmc_draws, &ids, kind)?;
                    estimate_agreement(&est_cmc.a_hat, &est_full.a_hat)
                })
                .collect::<Result<Vec<f64>>>()?;
            Ok((values, (a + 1, b + 1)))
        })
        .collect::<Result<_>>()?;
    let pairs: Vec<(usize, usize)> = reps.iter().map(|r| r.1).collect();
    Ok((0..merges.len())
        .map(|e| {
            let values: Vec<f64> = reps.iter().map(|r| r.0[e]).collect();
            let mean = values.iter().sum::<f64>() / values.len() as f64;
            let sd = if values.len() > 1 {
                (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (values.len() - 1) as f64).sqrt()
            } else {
                0.0
            };
            DiagnosticSummary {
                epsilon: merges[e].epsilon,
                mean,
                sd,
                values,
                shard_pairs: pairs.clone(),
            }
        })
        .collect())
}
