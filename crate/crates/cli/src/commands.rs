use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use cmc_core::estimation::{diagnostic_sweep, k_histogram, match_columns, ScoredParams};
use cmc_core::io::{
    peek_model, write_dfa_csv, write_dpm_csv, write_draw, write_fa_csv, write_k_histogram, AllocationRecord, Stamp,
};
use cmc_core::shard::make_shard_plan_over;
use cmc_core::simgen::{gen_sim1, gen_sim2_rows, gen_sim3, Sim3Options};
use cmc_core::{
    matrix_over_ids, misallocation_rate, nmi, param_error, point_estimate, run_consensus, AllocKind, ChainModel, Dfa,
    Dpm, Fa, IdSet, MergeConfig, ModelKind, ShardData, ShardPlan,
};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::json;

use crate::config::{RunConfig, RunFlags};
use crate::model::CliModel;

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Scenario {
    Sim1,
    Sim2,
    Sim3,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub scenario: Scenario,
    /// Observations; defaults to 500, 800 and 1000 for the three scenarios.
    #[arg(long)]
    pub n: Option<usize>,
    /// Symptoms in scenario 3.
    #[arg(long, default_value_t = 60)]
    pub p: usize,
    /// IBP mass in scenario 3.
    #[arg(long, default_value_t = 1.0)]
    pub m_ibp: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ScoreArgs {
    /// Estimate JSON written by `run`.
    #[arg(long)]
    pub estimate: PathBuf,
    /// Truth JSON written by `simulate`.
    #[arg(long)]
    pub truth: PathBuf,
    /// Also write the scores here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct DiagnoseArgs {
    #[command(flatten)]
    pub run: RunFlags,
    /// Repetitions of the two-shard comparison.
    #[arg(long, default_value_t = 10)]
    pub reps: usize,
    /// Comma-separated merge thresholds; defaults to the run's epsilon.
    #[arg(long, value_delimiter = ',')]
    pub epsilon_sweep: Vec<f64>,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("cannot write {}", path.display()))?))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn make_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))
}

pub fn simulate(args: &SimulateArgs) -> Result<()> {
    make_dir(&args.out)?;
    let data_path = args.out.join("data.csv");
    let truth_path = args.out.join("truth.json");
    match args.scenario {
        Scenario::Sim1 => {
            let sim = gen_sim1(args.n.unwrap_or(500), args.seed)?;
            write_dpm_csv(create(&data_path)?, sim.data.ids(), &sim.data.rows())?;
            write_truth(&truth_path, ModelKind::Dpm, sim.data.ids(), sim.truth.subsets, sim.truth.params, sim.truth.globals)?;
        }
        Scenario::Sim2 => {
            let sim = gen_sim2_rows(args.n.unwrap_or(800), args.seed)?;
            let d = &sim.data;
            let y: Vec<Vec<u32>> = (0..d.len()).map(|i| (0..d.p()).map(|j| d.y(i, j)).collect()).collect();
            let t: Vec<Vec<u32>> = (0..d.len()).map(|i| (0..d.p()).map(|j| d.total(i, j)).collect()).collect();
            write_fa_csv(create(&data_path)?, d.ids(), &y, &t)?;
            write_truth(&truth_path, ModelKind::Fa, d.ids(), sim.truth.subsets, sim.truth.params, sim.truth.globals)?;
        }
        Scenario::Sim3 => {
            let sim = gen_sim3(args.n.unwrap_or(1000), args.p, args.m_ibp, args.seed, &Sim3Options::default())?;
            let d = &sim.data;
            let rows: Vec<Vec<i8>> = (0..d.len()).map(|i| (0..d.p()).map(|j| d.y(i, j)).collect()).collect();
            write_dfa_csv(create(&data_path)?, d.ids(), &rows)?;
            write_truth(&truth_path, ModelKind::Dfa, d.ids(), sim.truth.subsets, sim.truth.params, sim.truth.globals)?;
        }
    }
    println!("wrote {} and {}", data_path.display(), truth_path.display());
    Ok(())
}

fn write_truth<P: Serialize, G: Serialize>(
    path: &Path,
    model: ModelKind,
    ids: &[usize],
    subsets: Vec<IdSet>,
    params: Vec<P>,
    globals: G,
) -> Result<()> {
    let rec = AllocationRecord {
        model,
        ids: ids.to_vec(),
        subsets,
        params,
        globals,
        config_hash: None,
        master_seed: None,
    };
    write_json(path, &rec)
}

fn thread_pool(jobs: Option<usize>) -> Result<rayon::ThreadPool> {
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    Ok(rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(cores))
        .build()?)
}

fn plan_for(run: &RunConfig, ids: &[usize]) -> Result<ShardPlan> {
    Ok(make_shard_plan_over(ids, run.shards, run.anchors.size(ids.len()), run.seed)?)
}

pub fn run(flags: &RunFlags) -> Result<()> {
    let cfg = RunConfig::resolve(flags)?;
    match cfg.model {
        ModelKind::Dpm => run_model::<Dpm>(&cfg),
        ModelKind::Fa => run_model::<Fa>(&cfg),
        ModelKind::Dfa => run_model::<Dfa>(&cfg),
    }
}

fn run_model<M: CliModel>(run: &RunConfig) -> Result<()>
where
    M::Config: Serialize,
{
    let data = M::load(&run.data)?;
    let sampler = M::sampler_config(&data, run)?;
    let plan = plan_for(run, data.ids())?;
    let merge = MergeConfig::new(run.epsilon, plan.anchors().clone())?;
    let stamp = Stamp {
        config_hash: run.hash(),
        master_seed: run.seed,
    };
    make_dir(&run.out)?;
    write_json(
        &run.out.join("shard_plan.json"),
        &json!({"config_hash": stamp.config_hash, "master_seed": stamp.master_seed, "plan": plan}),
    )?;

    let start = Instant::now();
    let result = thread_pool(run.jobs)?.install(|| run_consensus::<M>(&data, &plan, &sampler, &merge))?;
    let total = start.elapsed();

    for chain in &result.chains {
        let mut w = create(&run.out.join(format!("shard_{}.jsonl", chain.shard_id)))?;
        for (t, d) in chain.samples.draws.iter().enumerate() {
            write_draw(&mut w, t, d, None, &stamp)?;
        }
        w.flush()?;
    }
    let mut w = create(&run.out.join("consensus.jsonl"))?;
    for d in &result.draws {
        write_draw(&mut w, d.t, &d.draw, Some(&d.provenance), &stamp)?;
    }
    w.flush()?;

    let ks: Vec<usize> = result.draws.iter().map(|d| d.draw.k()).collect();
    let hist = k_histogram(&ks);
    write_k_histogram(create(&run.out.join("k_histogram.csv"))?, &hist)?;

    let ids = data.ids().to_vec();
    let draws: Vec<_> = result.draws.iter().map(|d| &d.draw).collect();
    let est = point_estimate(&draws, &ids, M::MODEL.alloc_kind())?;
    let estimate = AllocationRecord {
        model: M::MODEL,
        ids: ids.clone(),
        subsets: est.subsets.clone(),
        params: est.params_hat.clone(),
        globals: draws[est.draw_index].globals.clone(),
        config_hash: Some(stamp.config_hash.clone()),
        master_seed: Some(stamp.master_seed),
    };
    write_json(&run.out.join("estimate.json"), &estimate)?;

    let chains: Vec<_> = result
        .chains
        .iter()
        .map(|c| {
            json!({
                "shard": c.shard_id,
                "seed": c.seed,
                "rows": plan.augmented(c.shard_id - 1).len(),
                "wall_seconds": c.wall_time.as_secs_f64(),
                "k_histogram": k_histogram(&c.samples.k_trace()),
                "acceptance": c.samples.meta.acceptance,
            })
        })
        .collect();
    let report = json!({
        "config_hash": stamp.config_hash,
        "master_seed": stamp.master_seed,
        "config": run,
        "sampler": sampler,
        "n": ids.len(),
        "anchors": plan.anchors().len(),
        "chains": chains,
        "wall_seconds": {
            "total": total.as_secs_f64(),
            "chains": result.chain_time.as_secs_f64(),
            "merge": result.merge_time.as_secs_f64(),
        },
        "k_histogram": hist,
        "k_hat": est.k_hat,
        "estimate_draw": est.draw_index,
    });
    write_json(&run.out.join("report.json"), &report)?;
    println!(
        "{} consensus draws, K mode {}, written to {}",
        result.draws.len(),
        est.k_hat,
        run.out.display()
    );
    Ok(())
}

pub fn score(args: &ScoreArgs) -> Result<()> {
    let est_text = fs::read_to_string(&args.estimate).with_context(|| format!("reading {}", args.estimate.display()))?;
    let truth_text = fs::read_to_string(&args.truth).with_context(|| format!("reading {}", args.truth.display()))?;
    let model = peek_model(&est_text)?;
    if peek_model(&truth_text)? != model {
        bail!("estimate and truth are for different models");
    }
    let report = match model {
        ModelKind::Dpm => score_model::<Dpm>(&est_text, &truth_text)?,
        ModelKind::Fa => score_model::<Fa>(&est_text, &truth_text)?,
        ModelKind::Dfa => score_model::<Dfa>(&est_text, &truth_text)?,
    };
    let text = serde_json::to_string_pretty(&report)?;
    println!("{text}");
    if let Some(path) = &args.out {
        write_json(path, &report)?;
    }
    Ok(())
}

fn score_model<M: ChainModel>(est: &str, truth: &str) -> Result<serde_json::Value>
where
    M::Params: ScoredParams + DeserializeOwned,
{
    let est: AllocationRecord<M::Params, M::Globals> = serde_json::from_str(est).context("parsing estimate")?;
    let truth: AllocationRecord<M::Params, M::Globals> = serde_json::from_str(truth).context("parsing truth")?;
    if est.ids.len() != truth.ids.len() {
        bail!("estimate covers {} observations, truth {}", est.ids.len(), truth.ids.len());
    }
    if IdSet::from_ids(est.ids.iter().copied()) != IdSet::from_ids(truth.ids.iter().copied()) {
        bail!("estimate and truth cover different observation ids");
    }
    let kind = M::MODEL.alloc_kind();
    let a_hat = matrix_over_ids(&est.subsets, &truth.ids, kind)?;
    let a_true = matrix_over_ids(&truth.subsets, &truth.ids, kind)?;
    let matching = match_columns(&a_hat, &a_true)?;
    let mut out = BTreeMap::new();
    out.insert("k_hat", json!(est.subsets.len()));
    out.insert("k_true", json!(truth.subsets.len()));
    out.insert("e_A", json!(misallocation_rate(&a_hat, &a_true)?));
    out.insert("e_theta", json!(param_error(&est.params, &truth.params, &matching)?));
    if kind == AllocKind::Partition {
        let (la, lb) = (a_hat.labels(), a_true.labels());
        if let (Some(a), Some(b)) = (la, lb) {
            out.insert("nmi", json!(nmi(&a, &b)?));
        }
    }
    Ok(json!(out))
}

pub fn diagnose(args: &DiagnoseArgs) -> Result<()> {
    let cfg = RunConfig::resolve(&args.run)?;
    match cfg.model {
        ModelKind::Dpm => diagnose_model::<Dpm>(&cfg, args),
        ModelKind::Fa => diagnose_model::<Fa>(&cfg, args),
        ModelKind::Dfa => diagnose_model::<Dfa>(&cfg, args),
    }
}

fn diagnose_model<M: CliModel>(run: &RunConfig, args: &DiagnoseArgs) -> Result<()> {
    let data = M::load(&run.data)?;
    let sampler = M::sampler_config(&data, run)?;
    let plan = plan_for(run, data.ids())?;
    let eps = if args.epsilon_sweep.is_empty() {
        vec![run.epsilon]
    } else {
        args.epsilon_sweep.clone()
    };
    let sweep = thread_pool(run.jobs)?.install(|| diagnostic_sweep::<M>(&data, &plan, &sampler, &eps, args.reps))?;
    make_dir(&run.out)?;
    let report = json!({
        "config_hash": run.hash(),
        "master_seed": run.seed,
        "config": run,
        "repetitions": args.reps,
        "metric": match M::MODEL.alloc_kind() {
            AllocKind::Partition => "nmi",
            AllocKind::Feature => "one_minus_misallocation",
        },
        "sweep": sweep,
    });
    write_json(&run.out.join("diagnostic.json"), &report)?;
    for s in &sweep {
        println!("epsilon {}: mean {:.4} sd {:.4}", s.epsilon, s.mean, s.sd);
    }
    Ok(())
}
