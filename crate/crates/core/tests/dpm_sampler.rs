use cmc_core::estimation::{misallocation_rate, nmi, point_estimate, posterior_mode_k};
use cmc_core::simgen::gen_sim1;
use cmc_core::stats::batch_mean_se;
use cmc_core::{dpm_run, matrix_over_ids, AllocKind, DpmConfig, DpmData, Schedule};

#[test]
fn prior_only_cluster_count_matches_crp() {
    let sim = gen_sim1(40, 3).unwrap();
    let mut cfg = DpmConfig::new(4);
    cfg.prior_only = true;
    cfg.m = 1.5;
    cfg.schedule = Schedule::new(60_000, 1_000, 1);
    cfg.seed = 11;
    let out = dpm_run(&sim.data, &cfg).unwrap();
    let ks: Vec<f64> = out.k_trace().iter().map(|&k| k as f64).collect();
    let (mean, se) = batch_mean_se(&ks, 50);
    let expected: f64 = (1..=40).map(|i| cfg.m / (cfg.m + i as f64 - 1.0)).sum();
    assert!((mean - expected).abs() < 3.0 * se, "E[K] {mean} vs {expected} (se {se})");
}

#[test]
fn recovers_four_gaussian_clusters() {
    let sim = gen_sim1(200, 4).unwrap();
    let mut cfg = DpmConfig::new(4);
    cfg.schedule = Schedule::new(1_500, 750, 5);
    cfg.seed = 4;
    let out = dpm_run(&sim.data, &cfg).unwrap();
    assert_eq!(posterior_mode_k(&out.k_trace()).unwrap(), 4);
    let ids: Vec<usize> = (1..=200).collect();
    let draws: Vec<_> = out.draws.iter().collect();
    let est = point_estimate(&draws, &ids, AllocKind::Partition).unwrap();
    let truth = matrix_over_ids(&sim.truth.subsets, &ids, AllocKind::Partition).unwrap();
    assert!(misallocation_rate(&est.a_hat, &truth).unwrap() < 0.08);
    assert!(nmi(&est.a_hat.labels().unwrap(), &truth.labels().unwrap()).unwrap() > 0.8);
}

#[test]
fn chain_uses_global_ids() {
    let rows = vec![vec![0.0, 0.1], vec![5.0, 5.2], vec![0.2, -0.1], vec![5.1, 4.9]];
    let data = DpmData::new(vec![10, 20, 30, 40], &rows).unwrap();
    let mut cfg = DpmConfig::new(2);
    cfg.schedule = Schedule::new(200, 100, 10);
    let out = dpm_run(&data, &cfg).unwrap();
    for d in &out.draws {
        let mut all: Vec<usize> = d.subsets.iter().flat_map(|s| s.iter()).collect();
        all.sort_unstable();
        assert_eq!(all, vec![10, 20, 30, 40]);
    }
}
