//! Sampler for the IBP feature-allocation model of tumour heterogeneity.
//!
//! Read counts follow `y_ij ~ Bin(N_ij, b_j p0 + sum_k theta_jk A_ik)` with
//! `(b_j, theta_j1..K) ~ Dir` per sample, `A ~ IBP(m)` and `p0 ~ Beta`.
//! Optional parallel tempering raises the likelihood to `t_l` on replica `l`
//! and only the `t = 1` replica is recorded.

use std::collections::HashMap;

use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::allocation::{AcceptCounter, ChainMeta, IdSet, ModelKind, SampleSet, Schedule, SubsetDraw};
use crate::consensus::ShardData;
use crate::error::{config_err, CmcError, Result};
use crate::ibp::ibp_new_features;
use crate::merge::{weighted_mean, GlobalParams, SubsetParams};
use crate::rng::{chain_rng, ChainRng};
use crate::stats::{accept, bernoulli_logit, binomial_kernel, ln_beta_density, ln_dirichlet_density, sample_dirichlet};

pub const PROB_CLAMP: f64 = 1e-10;

/// Offset added to Dirichlet proposal concentrations so that no component is zero.
const DIR_PROPOSAL_FLOOR: f64 = 0.05;
const ADAPT_WINDOW: usize = 50;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tempering {
    /// Strictly decreasing, starting at 1.
    pub temperatures: Vec<f64>,
    pub swap_interval: usize,
}

impl Default for Tempering {
    fn default() -> Self {
        Self::geometric(4, 0.8, 10)
    }
}

impl Tempering {
    /// `t_l = ratio^(l-1)` for `l = 1..=levels`.
    pub fn geometric(levels: usize, ratio: f64, swap_interval: usize) -> Self {
        Self {
            temperatures: (0..levels).map(|l| ratio.powi(l as i32)).collect(),
            swap_interval,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let t = &self.temperatures;
        if t.is_empty() {
            return config_err("tempering ladder is empty");
        }
        if t[0] != 1.0 {
            return config_err("tempering ladder must start at 1");
        }
        if t.windows(2).any(|w| !(w[1] < w[0])) || t.iter().any(|&x| !(x > 0.0)) {
            return config_err("temperatures must be positive and strictly decreasing");
        }
        if self.swap_interval == 0 {
            return config_err("swap interval must be at least 1");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BetaPrior {
    pub a: f64,
    pub b: f64,
}

/// Dirichlet weights for `(b_j, theta_j1, ..., theta_jK)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DirWeights {
    pub background: f64,
    pub feature: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FaConfig {
    pub m_ibp: f64,
    pub p0_prior: BetaPrior,
    pub dir_weights: DirWeights,
    pub tempering: Option<Tempering>,
    pub schedule: Schedule,
    pub seed: u64,
    /// Upper bound on the number of features; births beyond it are rejected.
    #[serde(default)]
    pub max_features: Option<usize>,
    #[serde(default)]
    pub prior_only: bool,
}

impl Default for FaConfig {
    fn default() -> Self {
        Self {
            m_ibp: 1.0,
            p0_prior: BetaPrior { a: 1.0, b: 99.0 },
            dir_weights: DirWeights {
                background: 1.0,
                feature: 1.0,
            },
            tempering: Some(Tempering::default()),
            schedule: Schedule::default(),
            seed: 0,
            max_features: None,
            prior_only: false,
        }
    }
}

impl FaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.m_ibp > 0.0) {
            return config_err("IBP mass must be positive");
        }
        if !(self.p0_prior.a > 0.0 && self.p0_prior.b > 0.0) {
            return config_err("p0 prior parameters must be positive");
        }
        if !(self.dir_weights.background > 0.0 && self.dir_weights.feature > 0.0) {
            return config_err("Dirichlet weights must be positive");
        }
        if let Some(t) = &self.tempering {
            t.validate()?;
        }
        self.schedule.validate()
    }
}

/// Proportions `theta_jk` of one subclone in each sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FaSubsetParams {
    pub theta: Vec<f64>,
}

impl SubsetParams for FaSubsetParams {
    fn merge(blocks: &[(&Self, usize)], _tie: i8) -> Result<Self> {
        let v: Vec<(&[f64], usize)> = blocks.iter().map(|(b, w)| (b.theta.as_slice(), *w)).collect();
        Ok(Self {
            theta: weighted_mean(&v)?,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FaGlobals {
    /// Background weight `b_j` per sample.
    pub b: Vec<f64>,
    pub p0: f64,
}

impl GlobalParams for FaGlobals {
    fn combine(items: &[&Self]) -> Result<Self> {
        let b: Vec<(&[f64], usize)> = items.iter().map(|g| (g.b.as_slice(), 1)).collect();
        let p0: Vec<f64> = items.iter().map(|g| g.p0).collect();
        Ok(Self {
            b: weighted_mean(&b)?,
            p0: p0.iter().sum::<f64>() / p0.len().max(1) as f64,
        })
    }
}

/// Read counts, one row per SNV and one column per sample.
#[derive(Clone, Debug, PartialEq)]
pub struct FaData {
    ids: Vec<usize>,
    p: usize,
    y: Vec<u32>,
    total: Vec<u32>,
}

impl FaData {
    pub fn new(ids: Vec<usize>, y: &[Vec<u32>], total: &[Vec<u32>]) -> Result<Self> {
        if ids.len() != y.len() || y.len() != total.len() {
            return Err(CmcError::Dimension {
                expected: ids.len(),
                got: y.len().min(total.len()),
            });
        }
        let p = y.first().map_or(0, Vec::len);
        let mut yy = Vec::with_capacity(ids.len() * p);
        let mut tt = Vec::with_capacity(ids.len() * p);
        for (r, (yr, tr)) in y.iter().zip(total).enumerate() {
            if yr.len() != p || tr.len() != p {
                return Err(CmcError::Dimension {
                    expected: p,
                    got: yr.len().min(tr.len()),
                });
            }
            for (&a, &b) in yr.iter().zip(tr) {
                if b == 0 || a > b {
                    return Err(CmcError::Data(format!(
                        "SNV {}: need 0 <= y <= N and N >= 1, got y={a}, N={b}",
                        ids[r]
                    )));
                }
            }
            yy.extend_from_slice(yr);
            tt.extend_from_slice(tr);
        }
        Ok(Self {
            ids,
            p,
            y: yy,
            total: tt,
        })
    }

    pub fn from_rows(y: &[Vec<u32>], total: &[Vec<u32>]) -> Result<Self> {
        Self::new((1..=y.len()).collect(), y, total)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn y(&self, i: usize, j: usize) -> u32 {
        self.y[i * self.p + j]
    }

    pub fn total(&self, i: usize, j: usize) -> u32 {
        self.total[i * self.p + j]
    }
}

impl ShardData for FaData {
    fn ids(&self) -> &[usize] {
        &self.ids
    }

    fn select(&self, ids: &IdSet) -> Result<Self> {
        let pos: HashMap<usize, usize> = self.ids.iter().enumerate().map(|(r, &id)| (id, r)).collect();
        let mut out = Self {
            ids: Vec::with_capacity(ids.len()),
            p: self.p,
            y: Vec::with_capacity(ids.len() * self.p),
            total: Vec::with_capacity(ids.len() * self.p),
        };
        for id in ids.iter() {
            let r = *pos
                .get(&id)
                .ok_or_else(|| CmcError::Data(format!("id {id} not present in data")))?;
            out.ids.push(id);
            out.y.extend_from_slice(&self.y[r * self.p..(r + 1) * self.p]);
            out.total.extend_from_slice(&self.total[r * self.p..(r + 1) * self.p]);
        }
        Ok(out)
    }
}

fn prior_alpha(w: DirWeights, k: usize) -> Vec<f64> {
    let mut a = vec![w.feature; k + 1];
    a[0] = w.background;
    a
}

/// Density of a carved proportion `u b` when `u ~ Beta(w.feature, w.background)`.
fn carve_log_density(u: f64, b: f64, w: DirWeights) -> f64 {
    ln_beta_density(u, w.feature, w.background) - b.ln()
}

/// `b_j p0 + sum_k theta_jk A_ik`, clamped away from 0 and 1.
pub fn fa_success_prob(a_row: &[u8], theta: &[f64], b_j: f64, p0: f64) -> f64 {
    let s: f64 = a_row.iter().zip(theta).map(|(&a, &t)| if a == 1 { t } else { 0.0 }).sum();
    (b_j * p0 + s).clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

#[inline]
fn cell_ll(y: u32, total: u32, p: f64) -> f64 {
    binomial_kernel(y, total, p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP))
}

/// Latent state of one replica.
#[derive(Clone, Debug)]
struct FaState {
    /// Feature columns, each of length `n`, in birth order.
    cols: Vec<Vec<u8>>,
    counts: Vec<usize>,
    /// Per sample `j`: `[b_j, theta_j1, ..., theta_jK]`.
    v: Vec<Vec<f64>>,
    p0: f64,
    /// `sum_k theta_jk A_ik`, row-major `n x p`.
    s: Vec<f64>,
}

#[derive(Clone, Debug)]
struct Tuning {
    dir_conc: f64,
    p0_conc: f64,
    dir_window: (usize, usize),
    p0_window: (usize, usize),
}

impl Tuning {
    fn new() -> Self {
        Self {
            dir_conc: 200.0,
            p0_conc: 200.0,
            dir_window: (0, 0),
            p0_window: (0, 0),
        }
    }

    fn adapt(conc: &mut f64, window: &mut (usize, usize)) {
        if window.1 == 0 {
            return;
        }
        let rate = window.0 as f64 / window.1 as f64;
        if rate < 0.2 {
            *conc = (*conc * 1.5).min(1e7);
        } else if rate > 0.4 {
            *conc = (*conc / 1.5).max(2.0);
        }
        *window = (0, 0);
    }
}

struct Replica {
    temp: f64,
    state: FaState,
    tuning: Tuning,
}

struct FaSampler<'a> {
    data: &'a FaData,
    cfg: &'a FaConfig,
    replicas: Vec<Replica>,
    acc: AcceptCounter,
}

impl FaState {
    fn k(&self) -> usize {
        self.cols.len()
    }

    fn recompute_s(&mut self, n: usize, p: usize) {
        self.s = vec![0.0; n * p];
        for (k, col) in self.cols.iter().enumerate() {
            for (i, &a) in col.iter().enumerate() {
                if a == 1 {
                    for j in 0..p {
                        self.s[i * p + j] += self.v[j][k + 1];
                    }
                }
            }
        }
    }
}

impl<'a> FaSampler<'a> {
    fn new(data: &'a FaData, cfg: &'a FaConfig, rng: &mut ChainRng) -> Result<Self> {
        cfg.validate()?;
        if data.is_empty() {
            return Err(CmcError::Empty("no SNVs".into()));
        }
        let temps = cfg
            .tempering
            .as_ref()
            .map_or_else(|| vec![1.0], |t| t.temperatures.clone());
        let p0_dist = Beta::new(cfg.p0_prior.a, cfg.p0_prior.b).map_err(|e| CmcError::Config(e.to_string()))?;
        let (n, p) = (data.len(), data.p());
        let mut replicas = Vec::with_capacity(temps.len());
        for temp in temps {
            // Start from one feature shared by every row.
            let cols = if cfg.max_features == Some(0) { Vec::new() } else { vec![vec![1u8; n]] };
            let alpha = prior_alpha(cfg.dir_weights, cols.len());
            let v = (0..p)
                .map(|_| sample_dirichlet(&alpha, rng).unwrap_or_else(|| vec![1.0 / alpha.len() as f64; alpha.len()]))
                .collect();
            let p0 = p0_dist.sample(rng).clamp(1e-6, 1.0 - 1e-6);
            let mut state = FaState {
                counts: cols.iter().map(|c| c.iter().map(|&a| a as usize).sum()).collect(),
                cols,
                v,
                p0,
                s: Vec::new(),
            };
            state.recompute_s(n, p);
            replicas.push(Replica {
                temp,
                state,
                tuning: Tuning::new(),
            });
        }
        Ok(Self {
            data,
            cfg,
            replicas,
            acc: AcceptCounter::default(),
        })
    }

    fn loglik(&self, st: &FaState) -> f64 {
        if self.cfg.prior_only {
            return 0.0;
        }
        let (n, p) = (self.data.len(), self.data.p());
        let mut ll = 0.0;
        for i in 0..n {
            for j in 0..p {
                let pr = st.v[j][0] * st.p0 + st.s[i * p + j];
                ll += cell_ll(self.data.y(i, j), self.data.total(i, j), pr);
            }
        }
        ll
    }

    /// Log-likelihood of sample `j` under simplex `vj`.
    fn loglik_sample(&self, st: &FaState, j: usize, vj: &[f64]) -> f64 {
        if self.cfg.prior_only {
            return 0.0;
        }
        let base = vj[0] * st.p0;
        let mut ll = 0.0;
        for i in 0..self.data.len() {
            let mut pr = base;
            for (k, col) in st.cols.iter().enumerate() {
                if col[i] == 1 {
                    pr += vj[k + 1];
                }
            }
            ll += cell_ll(self.data.y(i, j), self.data.total(i, j), pr);
        }
        ll
    }

    fn update_existing(&self, st: &mut FaState, temp: f64, rng: &mut ChainRng) {
        let (n, p) = (self.data.len(), self.data.p());
        for i in 0..n {
            for k in 0..st.k() {
                let a = st.cols[k][i];
                let r = st.counts[k] - a as usize;
                if r == 0 {
                    continue;
                }
                let mut dll = 0.0;
                if !self.cfg.prior_only {
                    for j in 0..p {
                        let theta = st.v[j][k + 1];
                        let without = st.v[j][0] * st.p0 + st.s[i * p + j] - if a == 1 { theta } else { 0.0 };
                        let (y, tot) = (self.data.y(i, j), self.data.total(i, j));
                        dll += cell_ll(y, tot, without + theta) - cell_ll(y, tot, without);
                    }
                }
                let logit = (r as f64).ln() - ((n - r) as f64).ln() + temp * dll;
                let new = bernoulli_logit(logit, rng) as u8;
                if new != a {
                    st.cols[k][i] = new;
                    if new == 1 {
                        st.counts[k] += 1;
                    } else {
                        st.counts[k] -= 1;
                    }
                    let sign = if new == 1 { 1.0 } else { -1.0 };
                    for j in 0..p {
                        st.s[i * p + j] += sign * st.v[j][k + 1];
                    }
                }
            }
        }
    }

    /// Drops the singleton features of row `i` (their mass returns to `b_j`)
    /// and appends `k_new` singletons whose proportions are carved from `b_j`.
    /// Returns the proposed state and the log prior-times-proposal ratio of
    /// the simplex part.
    fn propose_singletons(
        &self,
        st: &FaState,
        i: usize,
        singles: &[usize],
        k_new: usize,
        rng: &mut ChainRng,
    ) -> Option<(FaState, f64)> {
        let (n, p) = (self.data.len(), self.data.p());
        let w = self.cfg.dir_weights;
        let frac = Beta::new(w.feature, w.background).ok()?;
        let keep: Vec<usize> = (0..st.k()).filter(|k| !singles.contains(k)).collect();
        let mut cols: Vec<Vec<u8>> = keep.iter().map(|&k| st.cols[k].clone()).collect();
        let mut counts: Vec<usize> = keep.iter().map(|&k| st.counts[k]).collect();
        for _ in 0..k_new {
            let mut col = vec![0u8; n];
            col[i] = 1;
            cols.push(col);
            counts.push(1);
        }
        let prior_old = prior_alpha(w, st.k());
        let prior_new = prior_alpha(w, cols.len());
        let mut log_r = 0.0;
        let mut v = Vec::with_capacity(p);
        for vj in &st.v {
            let removed: Vec<f64> = singles.iter().map(|&k| vj[k + 1]).collect();
            let mut b = vj[0] + removed.iter().sum::<f64>();
            let mut out = vec![0.0];
            out.extend(keep.iter().map(|&k| vj[k + 1]));
            for _ in 0..k_new {
                let u: f64 = frac.sample(rng);
                if !(u > 0.0 && u < 1.0) {
                    return None;
                }
                log_r -= carve_log_density(u, b, w);
                out.push(u * b);
                b *= 1.0 - u;
            }
            if !(b > 0.0) {
                return None;
            }
            out[0] = b;
            let mut rest = vj[0] + removed.iter().sum::<f64>();
            for &x in &removed {
                log_r += carve_log_density(x / rest, rest, w);
                rest -= x;
            }
            log_r += ln_dirichlet_density(&out, &prior_new) - ln_dirichlet_density(vj, &prior_old);
            v.push(out);
        }
        let mut out = FaState {
            cols,
            counts,
            v,
            p0: st.p0,
            s: Vec::new(),
        };
        out.recompute_s(n, p);
        Some((out, log_r))
    }

    /// Dirichlet-proposal Metropolis update of every sample's simplex.
    fn update_simplex(&self, st: &mut FaState, tuning: &mut Tuning, temp: f64, rng: &mut ChainRng) -> (usize, usize) {
        let (n, p) = (self.data.len(), self.data.p());
        let k = st.k();
        if k == 0 {
            return (0, 0);
        }
        let prior = prior_alpha(self.cfg.dir_weights, k);
        let c = tuning.dir_conc;
        let mut accepted = 0;
        for j in 0..p {
            let cur = st.v[j].clone();
            let fwd: Vec<f64> = cur.iter().map(|x| c * x + DIR_PROPOSAL_FLOOR).collect();
            let Some(prop) = sample_dirichlet(&fwd, rng) else {
                continue;
            };
            let rev: Vec<f64> = prop.iter().map(|x| c * x + DIR_PROPOSAL_FLOOR).collect();
            let log_r = temp * (self.loglik_sample(st, j, &prop) - self.loglik_sample(st, j, &cur))
                + ln_dirichlet_density(&prop, &prior)
                - ln_dirichlet_density(&cur, &prior)
                + ln_dirichlet_density(&cur, &rev)
                - ln_dirichlet_density(&prop, &fwd);
            if accept(log_r, rng) {
                accepted += 1;
                for i in 0..n {
                    let mut s = 0.0;
                    for (kk, col) in st.cols.iter().enumerate() {
                        if col[i] == 1 {
                            s += prop[kk + 1];
                        }
                    }
                    st.s[i * p + j] = s;
                }
                st.v[j] = prop;
            }
        }
        tuning.dir_window.0 += accepted;
        tuning.dir_window.1 += p;
        (accepted, p)
    }

    /// Beta-proposal Metropolis update of `p0`.
    fn update_p0(&self, st: &mut FaState, tuning: &mut Tuning, temp: f64, rng: &mut ChainRng) -> bool {
        let c = tuning.p0_conc;
        let cur = st.p0;
        let Ok(fwd) = Beta::new(c * cur, c * (1.0 - cur)) else {
            return false;
        };
        let prop = fwd.sample(rng);
        if !(prop > 0.0 && prop < 1.0) {
            tuning.p0_window.1 += 1;
            return false;
        }
        let ll_cur = self.loglik(st);
        let old = std::mem::replace(&mut st.p0, prop);
        let ll_prop = self.loglik(st);
        let BetaPrior { a, b } = self.cfg.p0_prior;
        let log_r = temp * (ll_prop - ll_cur) + ln_beta_density(prop, a, b) - ln_beta_density(old, a, b)
            + ln_beta_density(old, c * prop, c * (1.0 - prop))
            - ln_beta_density(prop, c * old, c * (1.0 - old));
        let ok = accept(log_r, rng);
        if !ok {
            st.p0 = old;
        }
        tuning.p0_window.1 += 1;
        tuning.p0_window.0 += ok as usize;
        ok
    }

    fn sweep(&mut self, t: usize, rng: &mut ChainRng) {
        let burn = self.cfg.schedule.in_burn_in(t);
        let mut replicas = std::mem::take(&mut self.replicas);
        for (l, rep) in replicas.iter_mut().enumerate() {
            let record = l == 0 && !burn;
            let temp = rep.temp;
            self.update_existing(&mut rep.state, temp, rng);
            let sing = self.update_singletons(&mut rep.state, temp, rng);
            let (acc_s, tot_s) = self.update_simplex(&mut rep.state, &mut rep.tuning, temp, rng);
            let p0_ok = self.update_p0(&mut rep.state, &mut rep.tuning, temp, rng);
            if record {
                for (ok, cnt) in [(true, sing.0), (false, sing.1 - sing.0)] {
                    for _ in 0..cnt {
                        self.acc.record("birth_death", ok);
                    }
                }
                for _ in 0..acc_s {
                    self.acc.record("simplex", true);
                }
                for _ in acc_s..tot_s {
                    self.acc.record("simplex", false);
                }
                self.acc.record("p0", p0_ok);
            }
            if burn && (t + 1) % ADAPT_WINDOW == 0 {
                Tuning::adapt(&mut rep.tuning.dir_conc, &mut rep.tuning.dir_window);
                Tuning::adapt(&mut rep.tuning.p0_conc, &mut rep.tuning.p0_window);
            }
        }
        if let Some(temper) = &self.cfg.tempering {
            if replicas.len() > 1 && (t + 1) % temper.swap_interval == 0 {
                let mut lls: Vec<f64> = replicas.iter().map(|r| self.loglik(&r.state)).collect();
                for l in 0..replicas.len() - 1 {
                    let log_r = (replicas[l].temp - replicas[l + 1].temp) * (lls[l + 1] - lls[l]);
                    let ok = accept(log_r, rng);
                    if ok {
                        let (lo, hi) = replicas.split_at_mut(l + 1);
                        std::mem::swap(&mut lo[l].state, &mut hi[0].state);
                        lls.swap(l, l + 1);
                    }
                    if !burn {
                        self.acc.record("swap", ok);
                    }
                }
            }
        }
        self.replicas = replicas;
    }

    /// Replaces the features held only by row `i` with `Poisson(m/n)` fresh
    /// ones, for every row. Returns (accepted, proposed).
    fn update_singletons(&self, st: &mut FaState, temp: f64, rng: &mut ChainRng) -> (usize, usize) {
        let n = self.data.len();
        let (mut acc, mut tot) = (0, 0);
        for i in 0..n {
            let singles: Vec<usize> = (0..st.k()).filter(|&k| st.counts[k] == 1 && st.cols[k][i] == 1).collect();
            let k_new = ibp_new_features(self.cfg.m_ibp, n, rng);
            if singles.is_empty() && k_new == 0 {
                continue;
            }
            tot += 1;
            let keep = st.k() - singles.len();
            if self.cfg.max_features.is_some_and(|cap| keep + k_new > cap) {
                continue;
            }
            let Some((prop, log_q)) = self.propose_singletons(st, i, &singles, k_new, rng) else {
                continue;
            };
            let ll_old = self.loglik(st);
            let ll_new = self.loglik(&prop);
            if accept(temp * (ll_new - ll_old) + log_q, rng) {
                *st = prop;
                acc += 1;
            }
        }
        (acc, tot)
    }

    fn snapshot(&self) -> SubsetDraw<FaSubsetParams, FaGlobals> {
        let st = &self.replicas[0].state;
        let subsets = st
            .cols
            .iter()
            .map(|col| {
                col.iter()
                    .enumerate()
                    .filter(|(_, &a)| a == 1)
                    .map(|(i, _)| self.data.ids[i])
                    .collect::<IdSet>()
            })
            .collect();
        let params = (0..st.k())
            .map(|k| FaSubsetParams {
                theta: st.v.iter().map(|vj| vj[k + 1]).collect(),
            })
            .collect();
        SubsetDraw {
            subsets,
            params,
            globals: FaGlobals {
                b: st.v.iter().map(|vj| vj[0]).collect(),
                p0: st.p0,
            },
        }
    }
}

/// Runs one FA chain (with its tempered companions) and returns the retained
/// draws of the `t = 1` replica.
pub fn fa_run(data: &FaData, cfg: &FaConfig) -> Result<SampleSet<FaSubsetParams, FaGlobals>> {
    let mut rng = chain_rng(cfg.seed);
    let mut sampler = FaSampler::new(data, cfg, &mut rng)?;
    let mut draws = Vec::with_capacity(cfg.schedule.retained());
    for t in 0..cfg.schedule.iterations {
        sampler.sweep(t, &mut rng);
        if cfg.schedule.keep(t) {
            draws.push(sampler.snapshot());
        }
    }
    Ok(SampleSet {
        draws,
        meta: ChainMeta {
            model: ModelKind::Fa,
            seed: cfg.seed,
            schedule: cfg.schedule,
            n_obs: data.len(),
            acceptance: sampler.acc.rates(),
        },
    })
}

/// Runs the chain and hands every post-burn-in state of the `t = 1` replica
/// to `visit`, without thinning. Used by the small-instance posterior checks.
pub fn fa_visit(
    data: &FaData,
    cfg: &FaConfig,
    mut visit: impl FnMut(&SubsetDraw<FaSubsetParams, FaGlobals>),
) -> Result<()> {
    let mut rng = chain_rng(cfg.seed);
    let mut sampler = FaSampler::new(data, cfg, &mut rng)?;
    for t in 0..cfg.schedule.iterations {
        sampler.sweep(t, &mut rng);
        if !cfg.schedule.in_burn_in(t) {
            visit(&sampler.snapshot());
        }
    }
    Ok(())
}
