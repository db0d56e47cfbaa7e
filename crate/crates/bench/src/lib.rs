//! Fixtures shared by the benchmarks.

use cmc_core::{make_shard_plan, IdSet, MergeConfig, ParamBlock, ShardPlan, SubsetDraw};

/// One partition draw per shard: each augmented shard is cut into `k`
/// clusters by id residue, so matching clusters agree on the anchors.
pub fn partition_draws(n: usize, shards: usize, anchors: usize, k: usize) -> (Vec<SubsetDraw<ParamBlock, ()>>, MergeConfig) {
    let plan: ShardPlan = make_shard_plan(n, shards, anchors, 1).expect("valid plan");
    let draws = (0..shards)
        .map(|s| {
            let ids = plan.augmented(s);
            let subsets: Vec<IdSet> = (0..k)
                .map(|c| IdSet::from_ids(ids.iter().filter(|id| id % k == c)))
                .filter(|set| !set.is_empty())
                .collect();
            let params = subsets
                .iter()
                .map(|set| ParamBlock {
                    continuous: vec![set.len() as f64; 4],
                    categorical: vec![1, 0, -1],
                })
                .collect();
            SubsetDraw {
                subsets,
                params,
                globals: (),
            }
        })
        .collect();
    let merge = MergeConfig::new(0.1, plan.anchors().clone()).expect("valid merge config");
    (draws, merge)
}
