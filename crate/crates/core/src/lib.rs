//! Consensus Monte Carlo for Bayesian nonparametric clustering and feature
//! allocation.
//!
//! Data are split into worker shards that all share one anchor shard. Each
//! shard runs its own chain (DP mixture, IBP tumour-heterogeneity model or
//! double feature allocation); draws are then merged by comparing which
//! anchor points each cluster or feature contains.

pub mod allocation;
pub mod consensus;
pub mod dfa;
pub mod dpm;
pub mod error;
pub mod estimation;
pub mod fa;
pub mod ibp;
pub mod io;
pub mod merge;
pub mod rng;
pub mod shard;
pub mod simgen;
pub mod stats;

pub use allocation::{
    anchor_distance, matrix_from_draw, matrix_over_ids, AllocKind, AllocationMatrix, ChainMeta, IdSet, ModelKind,
    SampleSet, Schedule, SubsetDraw,
};
pub use consensus::{run_consensus, run_full, ChainModel, ChainResult, ConsensusRun, Dfa, Dpm, Fa, ShardData};
pub use dfa::{dfa_cell_logprob, dfa_run, DfaConfig, DfaData, DfaGlobals, DfaSubsetParams, FixedEntries};
pub use dpm::{dpm_loglik, dpm_run, DpmConfig, DpmData, GaussianClusterParams};
pub use error::{CmcError, Result};
pub use estimation::{
    approximation_diagnostic, diagnostic_sweep, misallocation_rate, nmi, param_error, point_estimate, posterior_mode_k, PointEstimate,
};
pub use fa::{fa_run, fa_success_prob, FaConfig, FaData, FaGlobals, FaSubsetParams, Tempering};
pub use ibp::{ibp_gibbs_existing, ibp_new_features, ibp_prior_logpmf};
pub use merge::{merge_draws, merge_params, ConsensusDraw, GlobalParams, ParamBlock, SubsetParams};
pub use shard::{make_shard_plan, MergeConfig, ShardPlan};
