//! Per-model glue: data loading and sampler configuration.

use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use anyhow::{Context, Result};
use cmc_core::io::{read_dfa_csv, read_dpm_csv, read_fa_csv};
use cmc_core::{ChainModel, Dfa, DfaConfig, Dpm, DpmConfig, Fa, FaConfig, Schedule};
use serde_json::Value;

use crate::config::{overlay, RunConfig};

pub trait CliModel: ChainModel {
    fn load(path: &Path) -> Result<Self::Data>;
    fn base_config(data: &Self::Data) -> Value;
    fn parse_config(v: Value) -> Result<Self::Config>;
    fn validate(cfg: &Self::Config) -> Result<()>;

    /// Defaults, then the `sampler` block, then schedule and seed from the run.
    fn sampler_config(data: &Self::Data, run: &RunConfig) -> Result<Self::Config> {
        let mut v = Self::base_config(data);
        overlay(&mut v, &run.sampler);
        let sched = Schedule::new(run.iters, run.burnin, run.thin);
        overlay(
            &mut v,
            &serde_json::json!({"schedule": serde_json::to_value(sched)?, "seed": run.seed}),
        );
        let cfg = Self::parse_config(v).context("invalid sampler settings")?;
        Self::validate(&cfg)?;
        Ok(cfg)
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?))
}

impl CliModel for Dpm {
    fn load(path: &Path) -> Result<Self::Data> {
        read_dpm_csv(open(path)?).with_context(|| format!("reading {}", path.display()))
    }

    fn base_config(data: &Self::Data) -> Value {
        serde_json::to_value(DpmConfig::new(data.p())).expect("serialisable")
    }

    fn parse_config(v: Value) -> Result<Self::Config> {
        Ok(serde_json::from_value(v)?)
    }

    fn validate(cfg: &Self::Config) -> Result<()> {
        Ok(cfg.validate()?)
    }
}

impl CliModel for Fa {
    fn load(path: &Path) -> Result<Self::Data> {
        read_fa_csv(open(path)?).with_context(|| format!("reading {}", path.display()))
    }

    fn base_config(_: &Self::Data) -> Value {
        serde_json::to_value(FaConfig::default()).expect("serialisable")
    }

    fn parse_config(v: Value) -> Result<Self::Config> {
        Ok(serde_json::from_value(v)?)
    }

    fn validate(cfg: &Self::Config) -> Result<()> {
        Ok(cfg.validate()?)
    }
}

impl CliModel for Dfa {
    fn load(path: &Path) -> Result<Self::Data> {
        read_dfa_csv(open(path)?).with_context(|| format!("reading {}", path.display()))
    }

    fn base_config(_: &Self::Data) -> Value {
        serde_json::to_value(DfaConfig::default()).expect("serialisable")
    }

    fn parse_config(v: Value) -> Result<Self::Config> {
        Ok(serde_json::from_value(v)?)
    }

    fn validate(cfg: &Self::Config) -> Result<()> {
        Ok(cfg.validate()?)
    }
}
