//! Sampler for double feature allocation: an IBP matrix `A` over patients and a
//! matched trinary matrix `C` over symptoms, linked by a per-cell softmax over
//! the outcomes `{-1, 0, 1}`.

use std::collections::{BTreeMap, HashMap};

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::allocation::{AcceptCounter, ChainMeta, IdSet, ModelKind, SampleSet, Schedule, SubsetDraw};
use crate::consensus::ShardData;
use crate::error::{config_err, CmcError, Result};
use crate::ibp::ibp_new_features;
use crate::merge::{weighted_mean, weighted_vote, GlobalParams, SubsetParams};
use crate::rng::{chain_rng, ChainRng};
use crate::stats::{accept, log_sum_exp, sample_dirichlet, sample_log_weights};

const ADAPT_WINDOW: usize = 50;
const OUTCOMES: [i8; 3] = [-1, 0, 1];

/// Pinned entry of `A`: patient `row` (global id) in feature `feature` (1-based).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixedA {
    pub row: usize,
    pub feature: usize,
    pub value: u8,
}

/// Pinned entry of `C`: symptom `col` (1-based) in feature `feature` (1-based).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixedC {
    pub col: usize,
    pub feature: usize,
    pub value: i8,
}

/// Entries of `A` and `C` held constant. Features that carry any pin occupy
/// the leading columns and are never removed.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FixedEntries {
    #[serde(default)]
    pub a: Vec<FixedA>,
    #[serde(default)]
    pub c: Vec<FixedC>,
}

impl FixedEntries {
    pub fn is_empty(&self) -> bool {
        self.a.is_empty() && self.c.is_empty()
    }

    /// Number of pinned features.
    pub fn num_features(&self) -> usize {
        let fa = self.a.iter().map(|e| e.feature);
        let fc = self.c.iter().map(|e| e.feature);
        fa.chain(fc).max().unwrap_or(0)
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        for e in &self.a {
            if e.feature == 0 || e.row == 0 || e.value > 1 {
                return config_err(format!("invalid A pin {e:?}"));
            }
        }
        for e in &self.c {
            if e.feature == 0 || e.col == 0 || e.col > p || !OUTCOMES.contains(&e.value) {
                return config_err(format!("invalid C pin {e:?}"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DfaConfig {
    pub m_ibp: f64,
    /// Prior variance of the offsets `eta`.
    pub tau2: f64,
    /// Rate of the `Ga(1, tau_w)` weight prior.
    pub tau_w: f64,
    /// Dirichlet weights for `(pi_-1, pi_0, pi_1)`.
    pub dir_c: [f64; 3],
    #[serde(default)]
    pub fixed: FixedEntries,
    pub schedule: Schedule,
    pub seed: u64,
    /// Initial log-scale step for weight updates.
    pub weight_step: f64,
    pub eta_step: f64,
    #[serde(default)]
    pub max_features: Option<usize>,
    #[serde(default)]
    pub prior_only: bool,
}

impl Default for DfaConfig {
    fn default() -> Self {
        Self {
            m_ibp: 1.0,
            tau2: 10.0,
            tau_w: 1.0,
            dir_c: [1.0, 1.0, 1.0],
            fixed: FixedEntries::default(),
            schedule: Schedule::default(),
            seed: 0,
            weight_step: 0.3,
            eta_step: 0.3,
            max_features: None,
            prior_only: false,
        }
    }
}

impl DfaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.m_ibp > 0.0) {
            return config_err("IBP mass must be positive");
        }
        if !(self.tau2 > 0.0 && self.tau_w > 0.0) {
            return config_err("tau2 and tau_w must be positive");
        }
        if self.dir_c.iter().any(|&a| !(a > 0.0)) {
            return config_err("Dirichlet weights for pi must be positive");
        }
        if !(self.weight_step > 0.0 && self.eta_step > 0.0) {
            return config_err("step sizes must be positive");
        }
        if let Some(cap) = self.max_features {
            if cap < self.fixed.num_features() {
                return config_err("max_features is below the number of pinned features");
            }
        }
        self.schedule.validate()
    }
}

/// Column `k` of `C` with its symptom weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DfaSubsetParams {
    pub c_col: Vec<i8>,
    pub w_plus: Vec<f64>,
    pub w_minus: Vec<f64>,
}

impl SubsetParams for DfaSubsetParams {
    fn merge(blocks: &[(&Self, usize)], tie: i8) -> Result<Self> {
        let c: Vec<(&[i8], usize)> = blocks.iter().map(|(b, w)| (b.c_col.as_slice(), *w)).collect();
        let wp: Vec<(&[f64], usize)> = blocks.iter().map(|(b, w)| (b.w_plus.as_slice(), *w)).collect();
        let wm: Vec<(&[f64], usize)> = blocks.iter().map(|(b, w)| (b.w_minus.as_slice(), *w)).collect();
        Ok(Self {
            c_col: weighted_vote(&c, tie)?,
            w_plus: weighted_mean(&wp)?,
            w_minus: weighted_mean(&wm)?,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DfaGlobals {
    pub eta_minus: Vec<f64>,
    pub eta_plus: Vec<f64>,
    /// `(pi_-1, pi_0, pi_1)`.
    pub pi: Vec<f64>,
}

impl GlobalParams for DfaGlobals {
    fn combine(items: &[&Self]) -> Result<Self> {
        let avg = |f: fn(&Self) -> &[f64]| weighted_mean(&items.iter().map(|g| (f(g), 1)).collect::<Vec<_>>());
        Ok(Self {
            eta_minus: avg(|g| &g.eta_minus)?,
            eta_plus: avg(|g| &g.eta_plus)?,
            pi: avg(|g| &g.pi)?,
        })
    }
}

/// Trinary patient-by-symptom outcomes.
#[derive(Clone, Debug, PartialEq)]
pub struct DfaData {
    ids: Vec<usize>,
    p: usize,
    y: Vec<i8>,
}

impl DfaData {
    pub fn new(ids: Vec<usize>, rows: &[Vec<i8>]) -> Result<Self> {
        if ids.len() != rows.len() {
            return Err(CmcError::Dimension {
                expected: rows.len(),
                got: ids.len(),
            });
        }
        let p = rows.first().map_or(0, Vec::len);
        let mut y = Vec::with_capacity(rows.len() * p);
        for (r, row) in rows.iter().enumerate() {
            if row.len() != p {
                return Err(CmcError::Dimension {
                    expected: p,
                    got: row.len(),
                });
            }
            if let Some(v) = row.iter().find(|v| !OUTCOMES.contains(v)) {
                return Err(CmcError::Data(format!("patient {}: value {v} is not in {{-1, 0, 1}}", ids[r])));
            }
            y.extend_from_slice(row);
        }
        Ok(Self { ids, p, y })
    }

    pub fn from_rows(rows: &[Vec<i8>]) -> Result<Self> {
        Self::new((1..=rows.len()).collect(), rows)
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

    pub fn y(&self, i: usize, j: usize) -> i8 {
        self.y[i * self.p + j]
    }
}

impl ShardData for DfaData {
    fn ids(&self) -> &[usize] {
        &self.ids
    }

    fn select(&self, ids: &IdSet) -> Result<Self> {
        let pos: HashMap<usize, usize> = self.ids.iter().enumerate().map(|(r, &id)| (id, r)).collect();
        let mut out = Self {
            ids: Vec::with_capacity(ids.len()),
            p: self.p,
            y: Vec::with_capacity(ids.len() * self.p),
        };
        for id in ids.iter() {
            let r = *pos
                .get(&id)
                .ok_or_else(|| CmcError::Data(format!("id {id} not present in data")))?;
            out.ids.push(id);
            out.y.extend_from_slice(&self.y[r * self.p..(r + 1) * self.p]);
        }
        Ok(out)
    }
}

/// `ln P(y)` given the two non-zero outcome scores.
#[inline]
fn softmax_logprob(y: i8, u_minus: f64, u_plus: f64) -> f64 {
    let m = u_minus.max(u_plus).max(0.0);
    let lse = m + ((u_minus - m).exp() + (-m).exp() + (u_plus - m).exp()).ln();
    match y {
        -1 => u_minus - lse,
        1 => u_plus - lse,
        _ => -lse,
    }
}

/// Log probability of outcome `y` for symptom `j` of a patient with feature row `a_row`.
pub fn dfa_cell_logprob(
    y: i8,
    j: usize,
    a_row: &[u8],
    params: &[DfaSubsetParams],
    eta_minus: f64,
    eta_plus: f64,
) -> f64 {
    let (mut um, mut up) = (eta_minus, eta_plus);
    for (a, prm) in a_row.iter().zip(params) {
        if *a == 1 {
            match prm.c_col[j] {
                1 => up += prm.w_plus[j],
                -1 => um += prm.w_minus[j],
                _ => {}
            }
        }
    }
    let lse = log_sum_exp(&[um, 0.0, up]);
    match y {
        -1 => um - lse,
        1 => up - lse,
        _ => -lse,
    }
}

#[derive(Clone, Debug)]
struct DfaState {
    cols: Vec<Vec<u8>>,
    counts: Vec<usize>,
    /// Per feature, length `p`.
    c: Vec<Vec<i8>>,
    wp: Vec<Vec<f64>>,
    wm: Vec<Vec<f64>>,
    eta_p: Vec<f64>,
    eta_m: Vec<f64>,
    pi: [f64; 3],
    /// Feature contributions to the `+1` and `-1` scores, row-major `n x p`.
    up: Vec<f64>,
    um: Vec<f64>,
    /// Current cell log probabilities, row-major `n x p`.
    ll: Vec<f64>,
}

/// Per-feature pin masks in local row order.
#[derive(Clone, Debug, Default)]
struct Pins {
    a: Vec<Vec<Option<u8>>>,
    c: Vec<Vec<Option<i8>>>,
}

impl Pins {
    fn protected(&self) -> usize {
        self.a.len()
    }

    fn a_pinned(&self, k: usize, i: usize) -> bool {
        k < self.a.len() && self.a[k][i].is_some()
    }

    fn c_pinned(&self, k: usize, j: usize) -> bool {
        k < self.c.len() && self.c[k][j].is_some()
    }
}

struct DfaSampler<'a> {
    data: &'a DfaData,
    cfg: &'a DfaConfig,
    st: DfaState,
    pins: Pins,
    w_step: f64,
    eta_step: f64,
    w_window: (usize, usize),
    eta_window: (usize, usize),
    acc: AcceptCounter,
}

fn draw_c<R: Rng + ?Sized>(pi: &[f64; 3], rng: &mut R) -> i8 {
    let u: f64 = rng.random();
    if u < pi[0] {
        -1
    } else if u < pi[0] + pi[1] {
        0
    } else {
        1
    }
}

impl<'a> DfaSampler<'a> {
    fn new(data: &'a DfaData, cfg: &'a DfaConfig, rng: &mut ChainRng) -> Result<Self> {
        cfg.validate()?;
        if data.is_empty() {
            return Err(CmcError::Empty("no patients".into()));
        }
        let (n, p) = (data.len(), data.p());
        cfg.fixed.validate(p)?;
        let f = cfg.fixed.num_features();
        let local: HashMap<usize, usize> = data.ids.iter().enumerate().map(|(r, &id)| (id, r)).collect();
        let mut pins = Pins {
            a: vec![vec![None; n]; f],
            c: vec![vec![None; p]; f],
        };
        for e in &cfg.fixed.a {
            if let Some(&r) = local.get(&e.row) {
                pins.a[e.feature - 1][r] = Some(e.value);
            }
        }
        for e in &cfg.fixed.c {
            pins.c[e.feature - 1][e.col - 1] = Some(e.value);
        }
        for (k, col) in pins.a.iter().enumerate() {
            if !col.contains(&Some(1)) {
                return Err(CmcError::Config(format!(
                    "pinned feature {} has no patient fixed to 1 among this chain's rows",
                    k + 1
                )));
            }
        }
        let pi = sample_dirichlet(&cfg.dir_c, rng).ok_or_else(|| CmcError::Config("degenerate pi prior".into()))?;
        let pi = [pi[0], pi[1], pi[2]];
        // Offsets start at the smoothed marginal log-odds of each symptom.
        let mut freq = vec![[1.0f64; 3]; p];
        for i in 0..n {
            for (j, f) in freq.iter_mut().enumerate() {
                f[(data.y(i, j) + 1) as usize] += 1.0;
            }
        }
        let wdist = Exp::new(cfg.tau_w).map_err(|e| CmcError::Config(e.to_string()))?;
        let mut st = DfaState {
            cols: Vec::new(),
            counts: Vec::new(),
            c: Vec::new(),
            wp: Vec::new(),
            wm: Vec::new(),
            eta_p: freq.iter().map(|f| (f[2] / f[1]).ln()).collect(),
            eta_m: freq.iter().map(|f| (f[0] / f[1]).ln()).collect(),
            pi,
            up: vec![0.0; n * p],
            um: vec![0.0; n * p],
            ll: vec![0.0; n * p],
        };
        for k in 0..f {
            let col: Vec<u8> = pins.a[k].iter().map(|v| v.unwrap_or(0)).collect();
            st.counts.push(col.iter().filter(|&&a| a == 1).count());
            st.cols.push(col);
            st.c.push((0..p).map(|j| pins.c[k][j].unwrap_or_else(|| draw_c(&pi, rng))).collect());
            st.wp.push((0..p).map(|_| wdist.sample(rng)).collect());
            st.wm.push((0..p).map(|_| wdist.sample(rng)).collect());
        }
        let mut s = Self {
            data,
            cfg,
            st,
            pins,
            w_step: cfg.weight_step,
            eta_step: cfg.eta_step,
            w_window: (0, 0),
            eta_window: (0, 0),
            acc: AcceptCounter::default(),
        };
        s.recompute_scores();
        Ok(s)
    }

    fn recompute_scores(&mut self) {
        let (n, p) = (self.data.len(), self.data.p());
        let st = &mut self.st;
        st.up = vec![0.0; n * p];
        st.um = vec![0.0; n * p];
        for k in 0..st.cols.len() {
            for i in 0..n {
                if st.cols[k][i] == 1 {
                    for j in 0..p {
                        match st.c[k][j] {
                            1 => st.up[i * p + j] += st.wp[k][j],
                            -1 => st.um[i * p + j] += st.wm[k][j],
                            _ => {}
                        }
                    }
                }
            }
        }
        for i in 0..n {
            for j in 0..p {
                self.st.ll[i * p + j] = self.cell(i, j, 0.0, 0.0);
            }
        }
    }

    #[inline]
    fn cached(&self, i: usize, j: usize) -> f64 {
        self.st.ll[i * self.data.p() + j]
    }

    /// Adds score shifts to cell `(i, j)` and refreshes its cached value.
    #[inline]
    fn shift_cell(&mut self, i: usize, j: usize, dm: f64, dp: f64) {
        let at = i * self.data.p() + j;
        self.st.um[at] += dm;
        self.st.up[at] += dp;
        self.st.ll[at] = self.cell(i, j, 0.0, 0.0);
    }

    #[inline]
    fn cell(&self, i: usize, j: usize, d_minus: f64, d_plus: f64) -> f64 {
        if self.cfg.prior_only {
            return 0.0;
        }
        let p = self.data.p();
        let st = &self.st;
        softmax_logprob(
            self.data.y(i, j),
            st.eta_m[j] + st.um[i * p + j] + d_minus,
            st.eta_p[j] + st.up[i * p + j] + d_plus,
        )
    }

    /// Score shifts of feature `k` at symptom `j` when a patient holds it.
    #[inline]
    fn feature_shift(&self, k: usize, j: usize) -> (f64, f64) {
        match self.st.c[k][j] {
            1 => (0.0, self.st.wp[k][j]),
            -1 => (self.st.wm[k][j], 0.0),
            _ => (0.0, 0.0),
        }
    }

    fn toggle_row(&mut self, k: usize, i: usize, on: bool) {
        let p = self.data.p();
        let sign = if on { 1.0 } else { -1.0 };
        for j in 0..p {
            let (dm, dp) = self.feature_shift(k, j);
            if dm != 0.0 || dp != 0.0 {
                self.shift_cell(i, j, sign * dm, sign * dp);
            }
        }
        self.st.cols[k][i] = on as u8;
        if on {
            self.st.counts[k] += 1;
        } else {
            self.st.counts[k] -= 1;
        }
    }

    fn update_a(&mut self, rng: &mut ChainRng) {
        let (n, p) = (self.data.len(), self.data.p());
        for i in 0..n {
            for k in 0..self.st.cols.len() {
                if self.pins.a_pinned(k, i) {
                    continue;
                }
                let a = self.st.cols[k][i];
                let r = self.st.counts[k] - a as usize;
                if r == 0 {
                    continue;
                }
                let mut dll = 0.0;
                for j in 0..p {
                    let (dm, dp) = self.feature_shift(k, j);
                    if dm == 0.0 && dp == 0.0 {
                        continue;
                    }
                    dll += if a == 1 {
                        self.cached(i, j) - self.cell(i, j, -dm, -dp)
                    } else {
                        self.cell(i, j, dm, dp) - self.cached(i, j)
                    };
                }
                let logit = (r as f64).ln() - ((n - r) as f64).ln() + dll;
                let new = crate::stats::bernoulli_logit(logit, rng);
                if new != (a == 1) {
                    self.toggle_row(k, i, new);
                }
            }
        }
    }

    fn row_loglik(&self, i: usize) -> f64 {
        (0..self.data.p()).map(|j| self.cached(i, j)).sum()
    }

    fn remove_feature(&mut self, k: usize) {
        let st = &mut self.st;
        st.cols.remove(k);
        st.counts.remove(k);
        st.c.remove(k);
        st.wp.remove(k);
        st.wm.remove(k);
    }

    /// Per row: swap the row's unprotected singleton features for
    /// `Poisson(m/n)` new ones drawn from the prior.
    fn update_singletons(&mut self, rng: &mut ChainRng, record: bool) {
        let (n, p) = (self.data.len(), self.data.p());
        let f = self.pins.protected();
        let wdist = Exp::new(self.cfg.tau_w).expect("validated");
        for i in 0..n {
            let singles: Vec<usize> = (f..self.st.cols.len())
                .filter(|&k| self.st.counts[k] == 1 && self.st.cols[k][i] == 1)
                .collect();
            let k_new = ibp_new_features(self.cfg.m_ibp, n, rng);
            if singles.is_empty() && k_new == 0 {
                continue;
            }
            let keep = self.st.cols.len() - singles.len();
            if self.cfg.max_features.is_some_and(|cap| keep + k_new > cap) {
                if record {
                    self.acc.record("birth_death", false);
                }
                continue;
            }
            let new_c: Vec<Vec<i8>> = (0..k_new)
                .map(|_| (0..p).map(|_| draw_c(&self.st.pi, rng)).collect())
                .collect();
            let new_wp: Vec<Vec<f64>> = (0..k_new).map(|_| (0..p).map(|_| wdist.sample(rng)).collect()).collect();
            let new_wm: Vec<Vec<f64>> = (0..k_new).map(|_| (0..p).map(|_| wdist.sample(rng)).collect()).collect();
            let ll_old = self.row_loglik(i);
            let mut ll_new = 0.0;
            for j in 0..p {
                let (mut dm, mut dp) = (0.0, 0.0);
                for &k in &singles {
                    let (a, b) = self.feature_shift(k, j);
                    dm -= a;
                    dp -= b;
                }
                for q in 0..k_new {
                    match new_c[q][j] {
                        1 => dp += new_wp[q][j],
                        -1 => dm += new_wm[q][j],
                        _ => {}
                    }
                }
                ll_new += self.cell(i, j, dm, dp);
            }
            let ok = accept(ll_new - ll_old, rng);
            if record {
                self.acc.record("birth_death", ok);
            }
            if ok {
                for &k in singles.iter().rev() {
                    self.toggle_row(k, i, false);
                    self.remove_feature(k);
                }
                for q in 0..k_new {
                    self.st.cols.push(vec![0; n]);
                    self.st.counts.push(0);
                    self.st.c.push(new_c[q].clone());
                    self.st.wp.push(new_wp[q].clone());
                    self.st.wm.push(new_wm[q].clone());
                    let k = self.st.cols.len() - 1;
                    self.toggle_row(k, i, true);
                }
            }
        }
    }

    fn members(&self, k: usize) -> Vec<usize> {
        (0..self.data.len()).filter(|&i| self.st.cols[k][i] == 1).collect()
    }

    fn update_c(&mut self, rng: &mut ChainRng) {
        let p = self.data.p();
        let ln_pi: Vec<f64> = self.st.pi.iter().map(|x| x.ln()).collect();
        for k in 0..self.st.cols.len() {
            let rows = self.members(k);
            for j in 0..p {
                if self.pins.c_pinned(k, j) {
                    continue;
                }
                let cur = self.feature_shift(k, j);
                let (wm, wp) = (self.st.wm[k][j], self.st.wp[k][j]);
                let mut lw = [0.0; 3];
                for (slot, &c) in OUTCOMES.iter().enumerate() {
                    let shift = match c {
                        1 => (0.0, wp),
                        -1 => (wm, 0.0),
                        _ => (0.0, 0.0),
                    };
                    let (dm, dp) = (shift.0 - cur.0, shift.1 - cur.1);
                    lw[slot] = ln_pi[slot]
                        + if c == self.st.c[k][j] {
                            rows.iter().map(|&i| self.cached(i, j)).sum::<f64>()
                        } else {
                            rows.iter().map(|&i| self.cell(i, j, dm, dp)).sum::<f64>()
                        };
                }
                let c = OUTCOMES[sample_log_weights(&lw, rng)];
                if c != self.st.c[k][j] {
                    let (dm, dp) = {
                        let new = match c {
                            1 => (0.0, wp),
                            -1 => (wm, 0.0),
                            _ => (0.0, 0.0),
                        };
                        (new.0 - cur.0, new.1 - cur.1)
                    };
                    for &i in &rows {
                        self.shift_cell(i, j, dm, dp);
                    }
                    self.st.c[k][j] = c;
                }
            }
        }
    }

    fn update_pi(&mut self, rng: &mut ChainRng) {
        let mut alpha = self.cfg.dir_c;
        for col in &self.st.c {
            for &c in col {
                alpha[(c + 1) as usize] += 1.0;
            }
        }
        if let Some(pi) = sample_dirichlet(&alpha, rng) {
            self.st.pi = [pi[0], pi[1], pi[2]];
        }
    }

    fn update_eta(&mut self, rng: &mut ChainRng) {
        let (n, p) = (self.data.len(), self.data.p());
        let step = self.eta_step;
        let mut buf = vec![0.0; n];
        for j in 0..p {
            for plus in [false, true] {
                let cur = if plus { self.st.eta_p[j] } else { self.st.eta_m[j] };
                let prop = cur + step * rng.sample::<f64, _>(rand_distr::StandardNormal);
                let d = prop - cur;
                let (dm, dp) = if plus { (0.0, d) } else { (d, 0.0) };
                let mut dll = 0.0;
                for i in 0..n {
                    let v = self.cell(i, j, dm, dp);
                    dll += v - self.cached(i, j);
                    buf[i] = v;
                }
                let log_r = dll - (prop * prop - cur * cur) / (2.0 * self.cfg.tau2);
                let ok = accept(log_r, rng);
                if ok {
                    for (i, &v) in buf.iter().enumerate() {
                        self.st.ll[i * p + j] = v;
                    }
                    if plus {
                        self.st.eta_p[j] = prop;
                    } else {
                        self.st.eta_m[j] = prop;
                    }
                }
                self.eta_window.0 += ok as usize;
                self.eta_window.1 += 1;
            }
        }
    }

    fn update_weights(&mut self, rng: &mut ChainRng) {
        let p = self.data.p();
        let tau_w = self.cfg.tau_w;
        let wdist = Exp::new(tau_w).expect("validated");
        let mut buf = Vec::new();
        for k in 0..self.st.cols.len() {
            let rows = self.members(k);
            for j in 0..p {
                let c = self.st.c[k][j];
                for plus in [false, true] {
                    let active = (plus && c == 1) || (!plus && c == -1);
                    if !active {
                        // The likelihood does not involve this weight.
                        let w = wdist.sample(rng);
                        if plus {
                            self.st.wp[k][j] = w;
                        } else {
                            self.st.wm[k][j] = w;
                        }
                        continue;
                    }
                    let cur = if plus { self.st.wp[k][j] } else { self.st.wm[k][j] };
                    let prop = cur * (self.w_step * rng.sample::<f64, _>(rand_distr::StandardNormal)).exp();
                    let d = prop - cur;
                    let (dm, dp) = if plus { (0.0, d) } else { (d, 0.0) };
                    let mut dll = 0.0;
                    buf.clear();
                    for &i in &rows {
                        let v = self.cell(i, j, dm, dp);
                        dll += v - self.cached(i, j);
                        buf.push(v);
                    }
                    // Exponential prior plus the log-scale Jacobian.
                    let log_r = dll - tau_w * d + (prop / cur).ln();
                    let ok = accept(log_r, rng);
                    if ok {
                        for (&i, &v) in rows.iter().zip(&buf) {
                            self.st.um[i * p + j] += dm;
                            self.st.up[i * p + j] += dp;
                            self.st.ll[i * p + j] = v;
                        }
                        if plus {
                            self.st.wp[k][j] = prop;
                        } else {
                            self.st.wm[k][j] = prop;
                        }
                    }
                    self.w_window.0 += ok as usize;
                    self.w_window.1 += 1;
                }
            }
        }
    }

    fn adapt(step: &mut f64, window: &mut (usize, usize)) {
        if window.1 > 0 {
            let rate = window.0 as f64 / window.1 as f64;
            if rate < 0.2 {
                *step = (*step / 1.25).max(1e-3);
            } else if rate > 0.4 {
                *step = (*step * 1.25).min(5.0);
            }
        }
        *window = (0, 0);
    }

    fn sweep(&mut self, t: usize, rng: &mut ChainRng) {
        let burn = self.cfg.schedule.in_burn_in(t);
        self.update_a(rng);
        self.update_singletons(rng, !burn);
        self.update_c(rng);
        self.update_pi(rng);
        let eta_before = self.eta_window;
        self.update_eta(rng);
        let w_before = self.w_window;
        self.update_weights(rng);
        if !burn {
            let add = |acc: &mut AcceptCounter, name, before: (usize, usize), after: (usize, usize)| {
                let (a, n) = (after.0 - before.0, after.1 - before.1);
                for q in 0..n {
                    acc.record(name, q < a);
                }
            };
            add(&mut self.acc, "eta", eta_before, self.eta_window);
            add(&mut self.acc, "weights", w_before, self.w_window);
        }
        if burn && (t + 1) % ADAPT_WINDOW == 0 {
            Self::adapt(&mut self.w_step, &mut self.w_window);
            Self::adapt(&mut self.eta_step, &mut self.eta_window);
        }
    }

    fn snapshot(&self) -> SubsetDraw<DfaSubsetParams, DfaGlobals> {
        let st = &self.st;
        let mut subsets = Vec::new();
        let mut params = Vec::new();
        for k in 0..st.cols.len() {
            if st.counts[k] == 0 {
                continue;
            }
            subsets.push(self.members(k).into_iter().map(|i| self.data.ids[i]).collect::<IdSet>());
            params.push(DfaSubsetParams {
                c_col: st.c[k].clone(),
                w_plus: st.wp[k].clone(),
                w_minus: st.wm[k].clone(),
            });
        }
        SubsetDraw {
            subsets,
            params,
            globals: DfaGlobals {
                eta_minus: st.eta_m.clone(),
                eta_plus: st.eta_p.clone(),
                pi: st.pi.to_vec(),
            },
        }
    }
}

pub fn dfa_run(data: &DfaData, cfg: &DfaConfig) -> Result<SampleSet<DfaSubsetParams, DfaGlobals>> {
    let mut rng = chain_rng(cfg.seed);
    let mut sampler = DfaSampler::new(data, cfg, &mut rng)?;
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
            model: ModelKind::Dfa,
            seed: cfg.seed,
            schedule: cfg.schedule,
            n_obs: data.len(),
            acceptance: sampler.acc.rates(),
        },
    })
}

/// Runs the chain and passes every post-burn-in state to `visit`.
pub fn dfa_visit(
    data: &DfaData,
    cfg: &DfaConfig,
    mut visit: impl FnMut(&SubsetDraw<DfaSubsetParams, DfaGlobals>),
) -> Result<()> {
    let mut rng = chain_rng(cfg.seed);
    let mut sampler = DfaSampler::new(data, cfg, &mut rng)?;
    for t in 0..cfg.schedule.iterations {
        sampler.sweep(t, &mut rng);
        if !cfg.schedule.in_burn_in(t) {
            visit(&sampler.snapshot());
        }
    }
    Ok(())
}

/// Counts of `C` entries equal to -1, 0 and 1.
pub fn c_counts(cols: &[Vec<i8>]) -> BTreeMap<i8, usize> {
    let mut out: BTreeMap<i8, usize> = OUTCOMES.iter().map(|&c| (c, 0)).collect();
    for col in cols {
        for c in col {
            *out.get_mut(c).expect("trinary") += 1;
        }
    }
    out
}
