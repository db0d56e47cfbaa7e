//! Runs independent chains on anchor-augmented shards and merges their draws
//! iteration by iteration.

use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::allocation::{AllocKind, IdSet, ModelKind, SampleSet, Schedule};
use crate::dfa::{dfa_run, DfaConfig, DfaData, DfaGlobals, DfaSubsetParams};
use crate::dpm::{dpm_run, DpmConfig, DpmData, GaussianClusterParams};
use crate::error::{CmcError, Result};
use crate::fa::{fa_run, FaConfig, FaData, FaGlobals, FaSubsetParams};
use crate::merge::{merge_draws, ConsensusDraw, GlobalParams, SubsetParams};
use crate::rng::stream_seed;
use crate::shard::{MergeConfig, ShardPlan};

/// A dataset indexed by global observation ids that can be restricted to a shard.
pub trait ShardData: Sized + Clone + Send + Sync {
    fn ids(&self) -> &[usize];
    fn select(&self, ids: &IdSet) -> Result<Self>;
}

/// A sampler usable as the per-shard chain.
pub trait ChainModel {
    type Data: ShardData;
    type Config: Clone + Send + Sync;
    type Params: SubsetParams;
    type Globals: GlobalParams;
    const MODEL: ModelKind;

    fn run_chain(data: &Self::Data, cfg: &Self::Config) -> Result<SampleSet<Self::Params, Self::Globals>>;
    fn seed(cfg: &Self::Config) -> u64;
    fn with_seed(cfg: &Self::Config, seed: u64) -> Self::Config;
    fn schedule(cfg: &Self::Config) -> Schedule;
}

#[derive(Clone, Copy, Debug)]
pub struct Dpm;
#[derive(Clone, Copy, Debug)]
pub struct Fa;
#[derive(Clone, Copy, Debug)]
pub struct Dfa;

macro_rules! chain_model {
    ($ty:ty, $kind:expr, $data:ty, $cfg:ty, $params:ty, $globals:ty, $run:path) => {
        impl ChainModel for $ty {
            type Data = $data;
            type Config = $cfg;
            type Params = $params;
            type Globals = $globals;
            const MODEL: ModelKind = $kind;

            fn run_chain(data: &$data, cfg: &$cfg) -> Result<SampleSet<$params, $globals>> {
                $run(data, cfg)
            }

            fn seed(cfg: &$cfg) -> u64 {
                cfg.seed
            }

            fn with_seed(cfg: &$cfg, seed: u64) -> $cfg {
                let mut c = cfg.clone();
                c.seed = seed;
                c
            }

            fn schedule(cfg: &$cfg) -> Schedule {
                cfg.schedule
            }
        }
    };
}

chain_model!(Dpm, ModelKind::Dpm, DpmData, DpmConfig, GaussianClusterParams, (), dpm_run);
chain_model!(Fa, ModelKind::Fa, FaData, FaConfig, FaSubsetParams, FaGlobals, fa_run);
chain_model!(Dfa, ModelKind::Dfa, DfaData, DfaConfig, DfaSubsetParams, DfaGlobals, dfa_run);

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ChainResult<P, G> {
    pub shard_id: usize,
    pub samples: SampleSet<P, G>,
    #[serde(with = "secs")]
    pub wall_time: Duration,
    pub seed: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConsensusRun<P, G> {
    pub chains: Vec<ChainResult<P, G>>,
    pub draws: Vec<ConsensusDraw<P, G>>,
    #[serde(with = "secs")]
    pub chain_time: Duration,
    #[serde(with = "secs")]
    pub merge_time: Duration,
}

mod secs {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_secs_f64(f64::deserialize(d)?))
    }
}

/// Seed of the chain on shard `s` (0-based) given the master seed.
pub fn shard_seed(master: u64, s: usize) -> u64 {
    stream_seed(master, s as u64)
}

/// Runs one chain per augmented shard in parallel. The config's seed is the
/// master seed.
pub fn run_shards<M: ChainModel>(
    data: &M::Data,
    plan: &ShardPlan,
    cfg: &M::Config,
) -> Result<Vec<ChainResult<M::Params, M::Globals>>> {
    plan.validate()?;
    let master = M::seed(cfg);
    (0..plan.num_shards())
        .into_par_iter()
        .map(|s| {
            let wrap = |e: CmcError| CmcError::Shard {
                shard: s + 1,
                source: Box::new(e),
            };
            let shard_data = data.select(&plan.augmented(s)).map_err(wrap)?;
            let seed = shard_seed(master, s);
            let start = Instant::now();
            let samples = M::run_chain(&shard_data, &M::with_seed(cfg, seed)).map_err(wrap)?;
            Ok(ChainResult {
                shard_id: s + 1,
                samples,
                wall_time: start.elapsed(),
                seed,
            })
        })
        .collect()
}

/// Merges retained draw `t` of every chain, in parallel over `t`.
pub fn merge_chains<P: SubsetParams, G: GlobalParams>(
    chains: &[ChainResult<P, G>],
    merge: &MergeConfig,
    kind: AllocKind,
) -> Result<Vec<ConsensusDraw<P, G>>> {
    merge.validate()?;
    let t_len = chains.first().map_or(0, |c| c.samples.draws.len());
    if let Some(c) = chains.iter().find(|c| c.samples.draws.len() != t_len) {
        return Err(CmcError::Invariant(format!(
            "shard {} retained {} draws, expected {t_len}",
            c.shard_id,
            c.samples.draws.len()
        )));
    }
    (0..t_len)
        .into_par_iter()
        .map(|t| {
            let draws: Vec<_> = chains.iter().map(|c| &c.samples.draws[t]).collect();
            merge_draws(&draws, merge, kind, t)
        })
        .collect()
}

/// Consensus Monte Carlo over `plan`.
pub fn run_consensus<M: ChainModel>(
    data: &M::Data,
    plan: &ShardPlan,
    cfg: &M::Config,
    merge: &MergeConfig,
) -> Result<ConsensusRun<M::Params, M::Globals>> {
    if &merge.anchors != plan.anchors() {
        return Err(CmcError::Config("merge anchors differ from the shard plan's anchor shard".into()));
    }
    let all = plan.all_ids();
    if data.ids().len() != all.len() || IdSet::from_ids(data.ids().iter().copied()) != all {
        return Err(CmcError::Data("shard plan does not cover the dataset".into()));
    }
    let start = Instant::now();
    let chains = run_shards::<M>(data, plan, cfg)?;
    let chain_time = start.elapsed();
    let start = Instant::now();
    let draws = merge_chains(&chains, merge, M::MODEL.alloc_kind())?;
    Ok(ConsensusRun {
        chains,
        draws,
        chain_time,
        merge_time: start.elapsed(),
    })
}

/// Single chain over the whole dataset, for baselines and diagnostics.
pub fn run_full<M: ChainModel>(data: &M::Data, cfg: &M::Config) -> Result<SampleSet<M::Params, M::Globals>> {
    M::run_chain(data, cfg)
}
