//! Random splitting of observations into worker shards plus one anchor shard.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::allocation::IdSet;
use crate::error::{config_err, CmcError, Result};
use crate::rng::chain_rng;

/// `S` worker shards plus the anchor shard, stored last.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShardPlan {
    pub n: usize,
    pub shards: Vec<IdSet>,
}

impl ShardPlan {
    /// Builds a plan from explicit worker shards and anchors and validates it.
    pub fn from_parts(workers: Vec<IdSet>, anchors: IdSet) -> Result<Self> {
        let mut shards = workers;
        shards.push(anchors);
        let n = shards.iter().map(IdSet::len).sum();
        let plan = Self { n, shards };
        plan.validate()?;
        Ok(plan)
    }

    /// Number of worker shards `S`.
    pub fn num_shards(&self) -> usize {
        self.shards.len() - 1
    }

    pub fn anchors(&self) -> &IdSet {
        self.shards.last().expect("plan always holds the anchor shard")
    }

    pub fn worker(&self, s: usize) -> &IdSet {
        &self.shards[s]
    }

    /// Worker shard `s` joined with the anchors.
    pub fn augmented(&self, s: usize) -> IdSet {
        self.shards[s].union(self.anchors())
    }

    pub fn all_ids(&self) -> IdSet {
        self.shards.iter().fold(IdSet::new(), |acc, s| acc.union(s))
    }

    pub fn validate(&self) -> Result<()> {
        if self.shards.len() < 2 {
            return config_err("a plan needs at least one worker shard and the anchor shard");
        }
        if self.anchors().is_empty() {
            return config_err("anchor shard is empty");
        }
        let total: usize = self.shards.iter().map(IdSet::len).sum();
        let union = self.all_ids();
        if union.len() != total {
            return Err(CmcError::Invariant("shards overlap".into()));
        }
        if total != self.n {
            return Err(CmcError::Invariant(format!(
                "shards cover {} ids but n = {}",
                total, self.n
            )));
        }
        Ok(())
    }
}

/// Randomly splits ids `1..=n` into `num_shards` worker shards and an anchor
/// shard of `anchor_size`. Worker sizes differ by at most one, with the
/// remainder going to the first shards.
pub fn make_shard_plan(n: usize, num_shards: usize, anchor_size: usize, seed: u64) -> Result<ShardPlan> {
    let ids: Vec<usize> = (1..=n).collect();
    make_shard_plan_over(&ids, num_shards, anchor_size, seed)
}

/// As [`make_shard_plan`], over an arbitrary id list.
pub fn make_shard_plan_over(ids: &[usize], num_shards: usize, anchor_size: usize, seed: u64) -> Result<ShardPlan> {
    let n = ids.len();
    if num_shards == 0 {
        return config_err("need at least one worker shard");
    }
    if anchor_size == 0 {
        return config_err("anchor shard must be non-empty");
    }
    if anchor_size + num_shards > n {
        return config_err(format!(
            "cannot place {anchor_size} anchors and {num_shards} non-empty shards in {n} observations"
        ));
    }
    let mut shuffled = ids.to_vec();
    let mut rng = chain_rng(seed);
    shuffled.shuffle(&mut rng);

    let anchors = IdSet::from_ids(shuffled[..anchor_size].iter().copied());
    let rest = &shuffled[anchor_size..];
    let base = rest.len() / num_shards;
    let extra = rest.len() % num_shards;
    let mut workers = Vec::with_capacity(num_shards);
    let mut start = 0;
    for s in 0..num_shards {
        let size = base + usize::from(s < extra);
        workers.push(IdSet::from_ids(rest[start..start + size].iter().copied()));
        start += size;
    }
    ShardPlan::from_parts(workers, anchors)
}

/// Settings for anchor-overlap merging.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MergeConfig {
    pub epsilon: f64,
    pub anchors: IdSet,
    /// Value chosen when a size-weighted categorical vote is tied.
    #[serde(default)]
    pub categorical_tie: i8,
}

impl MergeConfig {
    pub fn new(epsilon: f64, anchors: IdSet) -> Result<Self> {
        let cfg = Self {
            epsilon,
            anchors,
            categorical_tie: 0,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        // Values above 1 are allowed: they merge every pair sharing an anchor.
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return config_err(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if self.anchors.is_empty() {
            return config_err("anchor set is empty");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_plan_sizes() {
        let plan = make_shard_plan(10, 2, 2, 7).unwrap();
        let sizes: Vec<usize> = plan.shards.iter().map(IdSet::len).collect();
        assert_eq!(sizes, vec![4, 4, 2]);
        assert_eq!(plan.all_ids(), (1..=10).collect());
    }

    #[test]
    fn simulation_plan_has_five_equal_shards() {
        let plan = make_shard_plan(500, 4, 100, 1).unwrap();
        assert!(plan.shards.iter().all(|s| s.len() == 100));
        for s in 0..4 {
            let aug = plan.augmented(s);
            assert_eq!(aug.len(), 200);
            assert_eq!(aug.intersection(plan.anchors()).len(), 100);
        }
    }

    #[test]
    fn deterministic_given_seed() {
        assert_eq!(make_shard_plan(57, 3, 9, 11).unwrap(), make_shard_plan(57, 3, 9, 11).unwrap());
        assert_ne!(make_shard_plan(57, 3, 9, 11).unwrap(), make_shard_plan(57, 3, 9, 12).unwrap());
    }

    #[test]
    fn infeasible_sizes_rejected() {
        assert!(make_shard_plan(5, 3, 3, 0).is_err());
        assert!(make_shard_plan(5, 0, 1, 0).is_err());
        assert!(make_shard_plan(5, 1, 0, 0).is_err());
    }

    #[test]
    fn exhaustive_small_plans_are_valid() {
        for n in 1..=12 {
            for s in 1..=3 {
                for a in 1..=n {
                    match make_shard_plan(n, s, a, (n * 31 + s * 7 + a) as u64) {
                        Ok(plan) => {
                            plan.validate().unwrap();
                            assert_eq!(plan.num_shards(), s);
                            assert_eq!(plan.anchors().len(), a);
                            let sizes: Vec<usize> = plan.shards[..s].iter().map(IdSet::len).collect();
                            let (lo, hi) = (sizes.iter().min().unwrap(), sizes.iter().max().unwrap());
                            assert!(hi - lo <= 1);
                            assert!(*lo >= 1);
                            assert_eq!(plan.all_ids(), (1..=n).collect());
                        }
                        Err(_) => assert!(a + s > n),
                    }
                }
            }
        }
    }

    #[test]
    fn plan_serializes_as_id_arrays() {
        let plan = make_shard_plan(6, 1, 2, 3).unwrap();
        let json = serde_json::to_string(&plan).unwrap();
        assert!(json.contains("\"shards\":[["));
        let back: ShardPlan = serde_json::from_str(&json).unwrap();
        assert_eq!(back, plan);
    }
}
