//! Brute-force posterior oracles for tiny FA and DFA instances.
#![allow(dead_code)]

use std::collections::HashMap;

use cmc_core::dfa::{dfa_visit, DfaConfig, DfaData};
use cmc_core::fa::{fa_visit, FaConfig, FaData};
use cmc_core::ibp::ibp_prior_logpmf;
use cmc_core::rng::chain_rng;
use cmc_core::stats::{ln_gamma, log_sum_exp, sample_dirichlet};
use cmc_core::AllocationMatrix;
use rand_distr::{Beta, Distribution, Exp, Normal};

/// Feature allocation up to column order: sorted row bitmasks of the columns.
pub type Class = Vec<u32>;

pub fn tv<K: std::hash::Hash + Eq + Clone>(a: &HashMap<K, f64>, b: &HashMap<K, f64>) -> f64 {
    let mut keys: Vec<&K> = a.keys().collect();
    keys.extend(b.keys().filter(|k| !a.contains_key(*k)));
    0.5 * keys
        .into_iter()
        .map(|k| (a.get(k).copied().unwrap_or(0.0) - b.get(k).copied().unwrap_or(0.0)).abs())
        .sum::<f64>()
}

/// All multisets of non-empty column masks over `n` rows with at most `k_cap` columns.
pub fn classes(n: usize, k_cap: usize) -> Vec<Class> {
    fn rec(start: u32, top: u32, left: usize, cur: &mut Class, out: &mut Vec<Class>) {
        out.push(cur.clone());
        if left == 0 {
            return;
        }
        for m in start..=top {
            cur.push(m);
            rec(m, top, left - 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(1, (1u32 << n) - 1, k_cap, &mut Vec::new(), &mut out);
    out
}

fn class_matrix(class: &Class, n: usize) -> AllocationMatrix {
    let cols: Vec<Vec<u8>> = class
        .iter()
        .map(|m| (0..n).map(|i| ((m >> i) & 1) as u8).collect())
        .collect();
    AllocationMatrix::from_columns(n, &cols).unwrap()
}

/// `ln P([A])`: the ordered-matrix prior times the number of distinct column orders.
pub fn ln_class_prior(class: &Class, n: usize, m: f64) -> f64 {
    let mut mult: HashMap<u32, usize> = HashMap::new();
    for &c in class {
        *mult.entry(c).or_default() += 1;
    }
    let orders = ln_gamma(class.len() as f64 + 1.0) - mult.values().map(|&c| ln_gamma(c as f64 + 1.0)).sum::<f64>();
    ibp_prior_logpmf(&class_matrix(class, n), m).unwrap() + orders
}

fn class_of(subsets: &[cmc_core::IdSet]) -> Class {
    let mut c: Class = subsets
        .iter()
        .map(|s| s.iter().map(|id| 1u32 << (id - 1)).sum())
        .collect();
    c.sort_unstable();
    c
}

fn normalise<K: std::hash::Hash + Eq>(logw: HashMap<K, f64>) -> HashMap<K, f64> {
    let vals: Vec<f64> = logw.values().copied().collect();
    let z = log_sum_exp(&vals);
    logw.into_iter().map(|(k, v)| (k, (v - z).exp())).collect()
}

/// Posterior over FA classes with at most `k_cap` columns. The marginal
/// likelihood of each class is a prior Monte Carlo average over the simplexes
/// and `p0`.
pub fn fa_oracle(y: &[Vec<u32>], total: &[Vec<u32>], cfg: &FaConfig, k_cap: usize, draws: usize) -> HashMap<Class, f64> {
    let (n, p) = (y.len(), y[0].len());
    let mut rng = chain_rng(991);
    let p0_dist = Beta::new(cfg.p0_prior.a, cfg.p0_prior.b).unwrap();
    let mut logw = HashMap::new();
    for class in classes(n, k_cap) {
        let k = class.len();
        let mut alpha = vec![cfg.dir_weights.feature; k + 1];
        alpha[0] = cfg.dir_weights.background;
        let mut lls = Vec::with_capacity(draws);
        for _ in 0..draws {
            let p0: f64 = p0_dist.sample(&mut rng);
            let mut ll = 0.0;
            for j in 0..p {
                let v = sample_dirichlet(&alpha, &mut rng).unwrap_or_else(|| vec![1.0 / (k + 1) as f64; k + 1]);
                for i in 0..n {
                    let mut pr = v[0] * p0;
                    for (c, m) in class.iter().enumerate() {
                        if (m >> i) & 1 == 1 {
                            pr += v[c + 1];
                        }
                    }
                    let pr = pr.clamp(1e-10, 1.0 - 1e-10);
                    ll += y[i][j] as f64 * pr.ln() + (total[i][j] - y[i][j]) as f64 * (1.0 - pr).ln();
                }
            }
            lls.push(ll);
        }
        let ml = log_sum_exp(&lls) - (draws as f64).ln();
        logw.insert(class.clone(), ln_class_prior(&class, n, cfg.m_ibp) + ml);
    }
    normalise(logw)
}

pub fn fa_chain_dist(data: &FaData, cfg: &FaConfig) -> HashMap<Class, f64> {
    let mut counts: HashMap<Class, f64> = HashMap::new();
    let mut total = 0.0;
    fa_visit(data, cfg, |d| {
        *counts.entry(class_of(&d.subsets)).or_default() += 1.0;
        total += 1.0;
    })
    .unwrap();
    counts.into_iter().map(|(k, v)| (k, v / total)).collect()
}

/// DFA state with at most one feature: `None` for no feature, otherwise the
/// row mask and the column of `C`.
pub type DfaKey = Option<(u32, Vec<i8>)>;

/// Posterior over DFA states with `K <= 1` by prior Monte Carlo over the
/// offsets and weights; `pi` is integrated out analytically.
pub fn dfa_oracle(rows: &[Vec<i8>], cfg: &DfaConfig, draws: usize) -> HashMap<DfaKey, f64> {
    let (n, p) = (rows.len(), rows[0].len());
    let mut rng = chain_rng(313);
    let eta = Normal::new(0.0, cfg.tau2.sqrt()).unwrap();
    let wd = Exp::new(cfg.tau_w).unwrap();
    let softmax = |y: i8, um: f64, up: f64| {
        let lse = log_sum_exp(&[um, 0.0, up]);
        match y {
            -1 => um - lse,
            1 => up - lse,
            _ => -lse,
        }
    };
    let mut states: Vec<DfaKey> = vec![None];
    for mask in 1..(1u32 << n) {
        for code in 0..3usize.pow(p as u32) {
            let c: Vec<i8> = (0..p).map(|j| ((code / 3usize.pow(j as u32)) % 3) as i8 - 1).collect();
            states.push(Some((mask, c)));
        }
    }
    let a: f64 = cfg.dir_c.iter().sum();
    let mut logw = HashMap::new();
    for st in states {
        let lprior = match &st {
            None => ln_class_prior(&vec![], n, cfg.m_ibp),
            Some((mask, c)) => {
                let mut lp = ln_class_prior(&vec![*mask], n, cfg.m_ibp) + ln_gamma(a) - ln_gamma(a + p as f64);
                for (slot, val) in [-1i8, 0, 1].iter().enumerate() {
                    let cnt = c.iter().filter(|x| *x == val).count() as f64;
                    lp += ln_gamma(cfg.dir_c[slot] + cnt) - ln_gamma(cfg.dir_c[slot]);
                }
                lp
            }
        };
        let mut lls = Vec::with_capacity(draws);
        for _ in 0..draws {
            let mut ll = 0.0;
            for j in 0..p {
                let (em, ep): (f64, f64) = (eta.sample(&mut rng), eta.sample(&mut rng));
                let (wm, wp): (f64, f64) = (wd.sample(&mut rng), wd.sample(&mut rng));
                for i in 0..n {
                    let (mut um, mut up) = (em, ep);
                    if let Some((mask, c)) = &st {
                        if (mask >> i) & 1 == 1 {
                            match c[j] {
                                1 => up += wp,
                                -1 => um += wm,
                                _ => {}
                            }
                        }
                    }
                    ll += softmax(rows[i][j], um, up);
                }
            }
            lls.push(ll);
        }
        let ml = log_sum_exp(&lls) - (draws as f64).ln();
        logw.insert(st, lprior + ml);
    }
    normalise(logw)
}

pub fn dfa_chain_dist(data: &DfaData, cfg: &DfaConfig) -> HashMap<DfaKey, f64> {
    let mut counts: HashMap<DfaKey, f64> = HashMap::new();
    let mut total = 0.0;
    dfa_visit(data, cfg, |d| {
        let key = match d.subsets.len() {
            0 => None,
            _ => Some((class_of(&d.subsets)[0], d.params[0].c_col.clone())),
        };
        *counts.entry(key).or_default() += 1.0;
        total += 1.0;
    })
    .unwrap();
    counts.into_iter().map(|(k, v)| (k, v / total)).collect()
}
