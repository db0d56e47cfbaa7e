//! Generators for the three simulation truths and the sequential IBP sampler.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Binomial, Distribution, Exp, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::allocation::{AllocationMatrix, IdSet};
use crate::dfa::{dfa_cell_logprob, DfaData, DfaGlobals, DfaSubsetParams};
use crate::dpm::{DpmData, GaussianClusterParams};
use crate::error::{config_err, CmcError, Result};
use crate::fa::{fa_success_prob, FaData, FaGlobals, FaSubsetParams};
use crate::ibp::ibp_sequential;
use crate::rng::chain_rng;
use crate::stats::sample_dirichlet;

/// Known truth for scoring, in the subset view over ids `1..=n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Truth<P, G> {
    pub n: usize,
    pub subsets: Vec<IdSet>,
    pub params: Vec<P>,
    pub globals: G,
}

impl<P, G> Truth<P, G> {
    pub fn k(&self) -> usize {
        self.subsets.len()
    }
}

pub const SIM1_MEANS: [[f64; 4]; 4] = [
    [-1.0, 1.0, -1.0, 1.0],
    [1.0, -1.0, 1.0, -1.0],
    [-1.0, -1.0, 1.0, 1.0],
    [1.0, 1.0, -1.0, -1.0],
];
pub const SIM1_VARIANCE: f64 = 0.4;

pub struct Sim1 {
    pub data: DpmData,
    pub truth: Truth<GaussianClusterParams, ()>,
}

/// Four Gaussian clusters in four dimensions, sizes as equal as `n` allows;
/// rows come in label blocks.
pub fn gen_sim1(n: usize, seed: u64) -> Result<Sim1> {
    if n < 4 {
        return config_err(format!("simulation 1 needs at least 4 observations, got {n}"));
    }
    let mut rng = chain_rng(seed);
    let sizes: Vec<usize> = (0..4).map(|k| n / 4 + usize::from(k < n % 4)).collect();
    let sd = SIM1_VARIANCE.sqrt();
    let mut rows = Vec::with_capacity(n);
    for (mu, &size) in SIM1_MEANS.iter().zip(&sizes) {
        for _ in 0..size {
            rows.push(mu.iter().map(|m| m + sd * rng.sample::<f64, _>(StandardNormal)).collect());
        }
    }
    let params = SIM1_MEANS
        .iter()
        .map(|mu| GaussianClusterParams {
            mu: mu.to_vec(),
            sigma: (0..4)
                .map(|i| (0..4).map(|j| if i == j { SIM1_VARIANCE } else { 0.0 }).collect())
                .collect(),
        })
        .collect();
    Ok(Sim1 {
        data: DpmData::from_rows(&rows)?,
        truth: Truth {
            n,
            subsets: sizes
                .iter()
                .scan(0, |start, &size| {
                    *start += size;
                    Some(IdSet::from_ids(*start - size + 1..=*start))
                })
                .collect(),
            params,
            globals: (),
        },
    })
}

pub const SIM2_ROWS: usize = 800;
pub const SIM2_SAMPLES: usize = 5;
pub const SIM2_CUTOFFS: [usize; 4] = [100, 250, 400, 600];
pub const SIM2_DEPTH: u32 = 50;
pub const SIM2_P0: f64 = 0.01;

pub struct Sim2 {
    pub data: FaData,
    pub truth: Truth<FaSubsetParams, FaGlobals>,
    /// The permuted Dirichlet weights for the four subclones.
    pub weights: Vec<f64>,
}

/// Nested subclones over 800 SNVs and 5 samples at depth 50.
pub fn gen_sim2(seed: u64) -> Result<Sim2> {
    gen_sim2_rows(SIM2_ROWS, seed)
}

/// Simulation 2 with `n` rows; the nested column boundaries scale with `n / 800`.
pub fn gen_sim2_rows(n: usize, seed: u64) -> Result<Sim2> {
    if n < 8 {
        return config_err("simulation 2 needs at least 8 rows");
    }
    let mut rng = chain_rng(seed);
    let mut weights = vec![1.0, 5.0, 6.0, 10.0];
    weights.shuffle(&mut rng);
    let mut alpha = vec![0.2];
    alpha.extend_from_slice(&weights);
    let p = SIM2_SAMPLES;
    let simplex: Vec<Vec<f64>> = (0..p)
        .map(|_| loop {
            if let Some(v) = sample_dirichlet(&alpha, &mut rng) {
                break v;
            }
        })
        .collect();
    let cutoffs: Vec<usize> = SIM2_CUTOFFS.iter().map(|c| c * n / SIM2_ROWS).collect();
    let theta: Vec<FaSubsetParams> = (0..4)
        .map(|k| FaSubsetParams {
            theta: simplex.iter().map(|v| v[k + 1]).collect(),
        })
        .collect();
    let b: Vec<f64> = simplex.iter().map(|v| v[0]).collect();
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let a_row: Vec<u8> = cutoffs.iter().map(|&c| (i < c) as u8).collect();
        let row: Vec<u32> = (0..p)
            .map(|j| {
                let th: Vec<f64> = theta.iter().map(|t| t.theta[j]).collect();
                let pr = fa_success_prob(&a_row, &th, b[j], SIM2_P0);
                Binomial::new(u64::from(SIM2_DEPTH), pr).expect("valid probability").sample(&mut rng) as u32
            })
            .collect();
        y.push(row);
    }
    let totals = vec![vec![SIM2_DEPTH; p]; n];
    Ok(Sim2 {
        data: FaData::from_rows(&y, &totals)?,
        truth: Truth {
            n,
            subsets: cutoffs.iter().map(|&c| IdSet::from_ids(1..=c)).collect(),
            params: theta,
            globals: FaGlobals { b, p0: SIM2_P0 },
        },
        weights,
    })
}

/// Generator settings for simulation 3.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sim3Options {
    /// Probabilities of `C_jk = -1, 0, 1`.
    pub pi_c: [f64; 3],
    /// Rate of the exponential weight distribution.
    pub tau_w: f64,
    /// Variance of the symptom offsets.
    pub tau2: f64,
}

impl Default for Sim3Options {
    fn default() -> Self {
        Self {
            pi_c: [0.15, 0.7, 0.15],
            tau_w: 0.25,
            tau2: 1.0,
        }
    }
}

pub struct Sim3 {
    pub data: DfaData,
    pub truth: Truth<DfaSubsetParams, DfaGlobals>,
}

/// IBP patient features with trinary symptom profiles.
pub fn gen_sim3(n: usize, p: usize, m_ibp: f64, seed: u64, opts: &Sim3Options) -> Result<Sim3> {
    if n == 0 || p == 0 {
        return config_err("simulation 3 needs n, p >= 1");
    }
    if !(m_ibp > 0.0 && opts.tau_w > 0.0 && opts.tau2 > 0.0) {
        return config_err("m, tau_w and tau2 must be positive");
    }
    let total: f64 = opts.pi_c.iter().sum();
    if opts.pi_c.iter().any(|&x| x < 0.0) || (total - 1.0).abs() > 1e-9 {
        return config_err("pi_c must be a probability vector");
    }
    let mut rng = chain_rng(seed);
    let a = AllocationMatrix::from_columns(n, &ibp_sequential(n, m_ibp, &mut rng))?;
    let k = a.k();
    let wdist = Exp::new(opts.tau_w).map_err(|e| CmcError::Config(e.to_string()))?;
    let eta = Normal::new(0.0, opts.tau2.sqrt()).map_err(|e| CmcError::Config(e.to_string()))?;
    let params: Vec<DfaSubsetParams> = (0..k)
        .map(|_| {
            let c_col = (0..p)
                .map(|_| {
                    let u: f64 = rng.random();
                    if u < opts.pi_c[0] {
                        -1
                    } else if u < opts.pi_c[0] + opts.pi_c[1] {
                        0
                    } else {
                        1
                    }
                })
                .collect();
            DfaSubsetParams {
                c_col,
                w_plus: (0..p).map(|_| wdist.sample(&mut rng)).collect(),
                w_minus: (0..p).map(|_| wdist.sample(&mut rng)).collect(),
            }
        })
        .collect();
    let eta_minus: Vec<f64> = (0..p).map(|_| eta.sample(&mut rng)).collect();
    let eta_plus: Vec<f64> = (0..p).map(|_| eta.sample(&mut rng)).collect();
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let a_row = a.row(i);
        let row: Vec<i8> = (0..p)
            .map(|j| {
                let lp: Vec<f64> = [-1i8, 0, 1]
                    .iter()
                    .map(|&y| dfa_cell_logprob(y, j, a_row, &params, eta_minus[j], eta_plus[j]).exp())
                    .collect();
                let u: f64 = rng.random();
                if u < lp[0] {
                    -1
                } else if u < lp[0] + lp[1] {
                    0
                } else {
                    1
                }
            })
            .collect();
        rows.push(row);
    }
    Ok(Sim3 {
        data: DfaData::from_rows(&rows)?,
        truth: Truth {
            n,
            subsets: a.subsets(),
            params,
            globals: DfaGlobals {
                eta_minus,
                eta_plus,
                pi: opts.pi_c.to_vec(),
            },
        },
    })
}

/// Draws a feature allocation from `IBP(m)` by the sequential buffet construction.
pub fn ibp_prior_sample(n: usize, m_ibp: f64, seed: u64) -> Result<AllocationMatrix> {
    if n == 0 {
        return config_err("need at least one row");
    }
    if !(m_ibp > 0.0) {
        return config_err("IBP mass must be positive");
    }
    let cols = ibp_sequential(n, m_ibp, &mut chain_rng(seed));
    AllocationMatrix::from_columns(n, &cols)
}
