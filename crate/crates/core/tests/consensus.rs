use cmc_core::dfa::{FixedA, FixedEntries};
use cmc_core::simgen::gen_sim1;
use cmc_core::{
    make_shard_plan, merge_draws, run_consensus, AllocKind, CmcError, ConsensusDraw, Dfa, DfaConfig, DfaData, Dpm,
    DpmConfig, DpmData, Fa, FaConfig, FaData, IdSet, MergeConfig, Schedule, ShardPlan,
};
use cmc_core::{dpm_run, GaussianClusterParams, SubsetDraw};

fn dpm_cfg(iters: usize, seed: u64) -> DpmConfig {
    let mut cfg = DpmConfig::new(4);
    cfg.schedule = Schedule::new(iters, iters / 2, 5);
    cfg.seed = seed;
    cfg
}

fn sorted_subsets<P, G>(d: &SubsetDraw<P, G>) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = d.subsets.iter().map(|s| s.iter().collect()).collect();
    out.sort();
    out
}

#[test]
fn single_shard_consensus_is_the_chain() {
    let sim = gen_sim1(80, 2).unwrap();
    let plan = make_shard_plan(80, 1, 20, 2).unwrap();
    let cfg = dpm_cfg(200, 8);
    let merge = MergeConfig::new(0.1, plan.anchors().clone()).unwrap();
    let run = run_consensus::<Dpm>(&sim.data, &plan, &cfg, &merge).unwrap();
    assert_eq!(run.chains.len(), 1);
    for (c, d) in run.draws.iter().zip(&run.chains[0].samples.draws) {
        assert_eq!(sorted_subsets(&c.draw), sorted_subsets(d));
        assert!(c.provenance.iter().all(|p| p.len() == 1));
    }
}

fn two_blob_rows(m: usize) -> Vec<Vec<f64>> {
    (0..m)
        .map(|i| {
            let c = if i % 2 == 0 { -4.0 } else { 4.0 };
            let e = (i as f64 * 0.37).sin() * 0.3;
            vec![c + e, c - e]
        })
        .collect()
}

#[test]
fn duplicate_shards_reproduce_the_shard_cluster_count() {
    // Worker shards 1..=30 and 31..=60 hold the same rows; anchors are 61..=90.
    let block = two_blob_rows(30);
    let anchors = two_blob_rows(30);
    let make = |ids: Vec<usize>| {
        let mut rows = block.clone();
        rows.extend(anchors.iter().cloned());
        DpmData::new(ids, &rows).unwrap()
    };
    let a = make((1..=30).chain(61..=90).collect());
    let b = make((31..=60).chain(61..=90).collect());
    let mut cfg = DpmConfig::new(2);
    cfg.schedule = Schedule::new(300, 150, 5);
    cfg.seed = 5;
    let sa = dpm_run(&a, &cfg).unwrap();
    let sb = dpm_run(&b, &cfg).unwrap();
    let merge = MergeConfig::new(0.1, IdSet::from_ids(61..=90)).unwrap();
    for (da, db) in sa.draws.iter().zip(&sb.draws) {
        assert_eq!(da.k(), db.k());
        let c: ConsensusDraw<GaussianClusterParams, ()> =
            merge_draws(&[da, db], &merge, AllocKind::Partition, 0).unwrap();
        assert_eq!(c.draw.k(), da.k());
        assert!(c.provenance.iter().all(|p| p.len() == 2));
    }
}

#[test]
fn reruns_are_bit_identical() {
    let sim = gen_sim1(120, 6).unwrap();
    let plan = make_shard_plan(120, 3, 30, 6).unwrap();
    let cfg = dpm_cfg(150, 6);
    let merge = MergeConfig::new(0.1, plan.anchors().clone()).unwrap();
    let a = run_consensus::<Dpm>(&sim.data, &plan, &cfg, &merge).unwrap();
    let b = run_consensus::<Dpm>(&sim.data, &plan, &cfg, &merge).unwrap();
    assert_eq!(serde_json::to_string(&a.draws).unwrap(), serde_json::to_string(&b.draws).unwrap());
}

#[test]
fn merge_ignores_shard_order() {
    let rows: Vec<Vec<u32>> = (0..60).map(|i| vec![if i < 30 { 20 } else { 1 }, 25]).collect();
    let total = vec![vec![50u32, 50]; 60];
    let data = FaData::from_rows(&rows, &total).unwrap();
    let plan = make_shard_plan(60, 3, 15, 1).unwrap();
    let cfg = FaConfig {
        schedule: Schedule::new(100, 50, 5),
        tempering: None,
        seed: 3,
        ..FaConfig::default()
    };
    let merge = MergeConfig::new(0.2, plan.anchors().clone()).unwrap();
    let run = run_consensus::<Fa>(&data, &plan, &cfg, &merge).unwrap();
    for (t, c) in run.draws.iter().enumerate() {
        let mut shards: Vec<_> = run.chains.iter().map(|ch| &ch.samples.draws[t]).collect();
        shards.reverse();
        let rev = merge_draws(&shards, &merge, AllocKind::Feature, t).unwrap();
        assert_eq!(sorted_subsets(&rev.draw), sorted_subsets(&c.draw));
    }
}

#[test]
fn failing_shard_is_named() {
    let rows: Vec<Vec<i8>> = (0..12).map(|i| vec![(i % 3) as i8 - 1; 3]).collect();
    let data = DfaData::from_rows(&rows).unwrap();
    let plan = ShardPlan::from_parts(
        vec![IdSet::from_ids(1..=4), IdSet::from_ids(5..=8)],
        IdSet::from_ids(9..=12),
    )
    .unwrap();
    // The pinned member lives in shard 1 only, so the second chain has none.
    let cfg = DfaConfig {
        fixed: FixedEntries {
            a: vec![FixedA {
                row: 2,
                feature: 1,
                value: 1,
            }],
            c: vec![],
        },
        schedule: Schedule::new(20, 10, 1),
        ..DfaConfig::default()
    };
    let merge = MergeConfig::new(0.1, plan.anchors().clone()).unwrap();
    match run_consensus::<Dfa>(&data, &plan, &cfg, &merge) {
        Err(CmcError::Shard { shard, .. }) => assert_eq!(shard, 2),
        other => panic!("expected a shard failure, got {:?}", other.map(|r| r.draws.len())),
    }
}

#[test]
fn plan_must_cover_the_data() {
    let sim = gen_sim1(40, 1).unwrap();
    let plan = make_shard_plan(36, 2, 10, 1).unwrap();
    let merge = MergeConfig::new(0.1, plan.anchors().clone()).unwrap();
    assert!(run_consensus::<Dpm>(&sim.data, &plan, &dpm_cfg(20, 1), &merge).is_err());
    let plan = make_shard_plan(40, 2, 10, 1).unwrap();
    let other = MergeConfig::new(0.1, IdSet::from_ids([1, 2])).unwrap();
    assert!(run_consensus::<Dpm>(&sim.data, &plan, &dpm_cfg(20, 1), &other).is_err());
}
