//! Run configuration: JSON file merged with command-line flags.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;
use cmc_core::ModelKind;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

/// Flags shared by `run` and `diagnose`. Every flag overrides the config file.
#[derive(Args, Debug, Clone, Default)]
pub struct RunFlags {
    /// JSON config file with the same keys as the flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_parser = parse_model)]
    pub model: Option<ModelKind>,
    /// Input CSV.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Number of worker shards.
    #[arg(long)]
    pub shards: Option<usize>,
    /// Size of the anchor shard.
    #[arg(long, conflicts_with = "anchor_frac")]
    pub anchors: Option<usize>,
    /// Anchor shard size as a fraction of the observations.
    #[arg(long)]
    pub anchor_frac: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub burnin: Option<usize>,
    #[arg(long)]
    pub thin: Option<usize>,
    /// Master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads; defaults to the available cores.
    #[arg(long)]
    pub jobs: Option<usize>,
}

pub fn parse_model(s: &str) -> Result<ModelKind, String> {
    match s {
        "dpm" => Ok(ModelKind::Dpm),
        "fa" => Ok(ModelKind::Fa),
        "dfa" => Ok(ModelKind::Dfa),
        _ => Err(format!("unknown model '{s}', expected dpm, fa or dfa")),
    }
}

/// Contents of a config file. All keys are optional.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    model: Option<ModelKind>,
    data: Option<PathBuf>,
    shards: Option<usize>,
    anchors: Option<usize>,
    anchor_frac: Option<f64>,
    epsilon: Option<f64>,
    iters: Option<usize>,
    burnin: Option<usize>,
    thin: Option<usize>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    jobs: Option<usize>,
    /// Model-specific sampler settings, overlaid on the defaults.
    sampler: Option<Value>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnchorSpec {
    Count(usize),
    Fraction(f64),
}

impl AnchorSpec {
    pub fn size(&self, n: usize) -> usize {
        match *self {
            AnchorSpec::Count(c) => c,
            AnchorSpec::Fraction(f) => ((f * n as f64).round() as usize).max(1),
        }
    }
}

/// Fully resolved run settings.
#[derive(Clone, Debug, Serialize)]
pub struct RunConfig {
    pub model: ModelKind,
    pub data: PathBuf,
    pub shards: usize,
    pub anchors: AnchorSpec,
    pub epsilon: f64,
    pub iters: usize,
    pub burnin: usize,
    pub thin: usize,
    pub seed: u64,
    /// Sampler settings before the model defaults are filled in.
    pub sampler: Value,
    #[serde(skip)]
    pub out: PathBuf,
    #[serde(skip)]
    pub jobs: Option<usize>,
}

impl RunConfig {
    pub fn resolve(flags: &RunFlags) -> Result<Self> {
        let file = match &flags.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                let mut cfg: FileConfig =
                    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
                // Relative data paths are taken from the config file's directory.
                if let (Some(d), Some(dir)) = (&cfg.data, path.parent()) {
                    if d.is_relative() && !d.exists() {
                        cfg.data = Some(dir.join(d));
                    }
                }
                cfg
            }
            None => FileConfig::default(),
        };
        let anchors = match (flags.anchors, flags.anchor_frac) {
            (Some(c), _) => AnchorSpec::Count(c),
            (None, Some(f)) => AnchorSpec::Fraction(f),
            (None, None) => match (file.anchors, file.anchor_frac) {
                (Some(_), Some(_)) => bail!("config sets both anchors and anchor_frac"),
                (Some(c), None) => AnchorSpec::Count(c),
                (None, Some(f)) => AnchorSpec::Fraction(f),
                (None, None) => AnchorSpec::Fraction(0.2),
            },
        };
        let cfg = RunConfig {
            model: flags.model.or(file.model).context("no model given (--model dpm|fa|dfa)")?,
            data: flags.data.clone().or(file.data).context("no data file given (--data)")?,
            shards: flags.shards.or(file.shards).unwrap_or(4),
            anchors,
            epsilon: flags.epsilon.or(file.epsilon).unwrap_or(0.1),
            iters: flags.iters.or(file.iters).unwrap_or(5000),
            burnin: flags.burnin.or(file.burnin).unwrap_or(2500),
            thin: flags.thin.or(file.thin).unwrap_or(5),
            seed: flags.seed.or(file.seed).unwrap_or(1),
            sampler: file.sampler.unwrap_or(Value::Object(Default::default())),
            out: flags.out.clone().or(file.out).unwrap_or_else(|| PathBuf::from("cmc-out")),
            jobs: flags.jobs.or(file.jobs),
        };
        cfg.check()?;
        Ok(cfg)
    }

    fn check(&self) -> Result<()> {
        if self.shards == 0 {
            bail!("--shards must be at least 1");
        }
        if let AnchorSpec::Fraction(f) = self.anchors {
            if !(f > 0.0 && f < 1.0) {
                bail!("--anchor-frac must lie in (0, 1), got {f}");
            }
        }
        if self.anchors == AnchorSpec::Count(0) {
            bail!("--anchors must be at least 1");
        }
        if !self.sampler.is_object() {
            bail!("'sampler' must be a JSON object");
        }
        if self.jobs == Some(0) {
            bail!("--jobs must be at least 1");
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON of the resolved settings.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("config serialises");
        hex::encode(Sha256::digest(&canonical))
    }
}

/// Overlays `patch` on `base`, key by key.
pub fn overlay(base: &mut Value, patch: &Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(k) {
                    Some(slot) => overlay(slot, v),
                    None => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (slot, v) => *slot = v.clone(),
    }
}
