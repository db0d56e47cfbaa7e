//! Gibbs sampler for a Dirichlet process mixture of multivariate normals.
//!
//! Base measure `G0(mu, Sigma) = N(mu | 0, Sigma / kappa0) x IW(Sigma | b, I)`.
//! Allocations are updated with Neal's Algorithm 8 (auxiliary components from
//! `G0`), cluster parameters with their conjugate Normal-Inverse-Wishart full
//! conditionals.
//!
//! Components are stored through a lower-triangular factor `R` of the
//! precision, `Sigma^-1 = R R^T`, which is exactly what the Bartlett
//! decomposition produces, so densities need no inversion.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::allocation::{AcceptCounter, ChainMeta, IdSet, ModelKind, SampleSet, Schedule, SubsetDraw};
use crate::consensus::ShardData;
use crate::error::{config_err, CmcError, Result};
use crate::merge::{weighted_mean, SubsetParams};
use crate::rng::{chain_rng, ChainRng};
use crate::stats::sample_log_weights;

const LN_2PI: f64 = 1.837_877_066_409_345_3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DpmConfig {
    /// DP concentration `m`.
    pub m: f64,
    /// Prior precision scale of the cluster means.
    pub kappa0: f64,
    /// Inverse-Wishart degrees of freedom.
    pub b: f64,
    /// Data dimension.
    pub p: usize,
    /// Auxiliary components per allocation update.
    pub n_aux: usize,
    pub schedule: Schedule,
    pub seed: u64,
    /// Number of k-means clusters used to initialise the chain.
    pub init_clusters: usize,
    /// Replaces the likelihood by a constant; the chain then targets the prior.
    #[serde(default)]
    pub prior_only: bool,
}

impl DpmConfig {
    pub fn new(p: usize) -> Self {
        Self {
            m: 1.0,
            kappa0: 0.01,
            b: p as f64,
            p,
            n_aux: 3,
            schedule: Schedule::default(),
            seed: 0,
            init_clusters: 8,
            prior_only: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.m > 0.0) {
            return config_err("DP concentration must be positive");
        }
        if !(self.kappa0 > 0.0) {
            return config_err("kappa0 must be positive");
        }
        if self.p == 0 {
            return config_err("dimension must be at least 1");
        }
        // Bartlett needs b > p - 1; b >= p is the documented constraint.
        if !(self.b >= self.p as f64) {
            return config_err("inverse-Wishart degrees of freedom must be at least p");
        }
        if self.n_aux == 0 {
            return config_err("need at least one auxiliary component");
        }
        self.schedule.validate()
    }
}

/// Location and covariance of one mixture component.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianClusterParams {
    pub mu: Vec<f64>,
    /// Row-major `p x p` covariance.
    pub sigma: Vec<Vec<f64>>,
}

impl SubsetParams for GaussianClusterParams {
    fn merge(blocks: &[(&Self, usize)], _tie: i8) -> Result<Self> {
        let mus: Vec<(&[f64], usize)> = blocks.iter().map(|(b, w)| (b.mu.as_slice(), *w)).collect();
        let flat: Vec<(Vec<f64>, usize)> = blocks.iter().map(|(b, w)| (b.sigma.concat(), *w)).collect();
        let flat_refs: Vec<(&[f64], usize)> = flat.iter().map(|(v, w)| (v.as_slice(), *w)).collect();
        let mu = weighted_mean(&mus)?;
        let sigma = weighted_mean(&flat_refs)?;
        let p = mu.len();
        if sigma.len() != p * p {
            return Err(CmcError::Dimension {
                expected: p * p,
                got: sigma.len(),
            });
        }
        Ok(Self {
            mu,
            sigma: sigma.chunks(p).map(<[f64]>::to_vec).collect(),
        })
    }
}

/// Observations for the mixture model, one row per global id.
#[derive(Clone, Debug, PartialEq)]
pub struct DpmData {
    ids: Vec<usize>,
    p: usize,
    values: Vec<f64>,
}

impl DpmData {
    pub fn new(ids: Vec<usize>, rows: &[Vec<f64>]) -> Result<Self> {
        if ids.len() != rows.len() {
            return Err(CmcError::Dimension {
                expected: rows.len(),
                got: ids.len(),
            });
        }
        let p = rows.first().map_or(0, Vec::len);
        let mut values = Vec::with_capacity(rows.len() * p);
        for (r, row) in rows.iter().enumerate() {
            if row.len() != p {
                return Err(CmcError::Dimension {
                    expected: p,
                    got: row.len(),
                });
            }
            if row.iter().any(|x| !x.is_finite()) {
                return Err(CmcError::Data(format!("non-finite value in observation {}", ids[r])));
            }
            values.extend_from_slice(row);
        }
        Ok(Self { ids, p, values })
    }

    /// Rows get ids `1..=n`.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new((1..=rows.len()).collect(), rows)
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.p..(i + 1) * self.p]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|i| self.row(i).to_vec()).collect()
    }
}

impl ShardData for DpmData {
    fn ids(&self) -> &[usize] {
        &self.ids
    }

    fn select(&self, ids: &IdSet) -> Result<Self> {
        let mut out_ids = Vec::with_capacity(ids.len());
        let mut values = Vec::with_capacity(ids.len() * self.p);
        let pos: std::collections::HashMap<usize, usize> = self.ids.iter().enumerate().map(|(r, &id)| (id, r)).collect();
        for id in ids.iter() {
            let r = *pos
                .get(&id)
                .ok_or_else(|| CmcError::Data(format!("id {id} not present in data")))?;
            out_ids.push(id);
            values.extend_from_slice(self.row(r));
        }
        Ok(Self {
            ids: out_ids,
            p: self.p,
            values,
        })
    }
}

/// Log density of `y` under `N(mu, Sigma)`.
pub fn dpm_loglik(y: &[f64], params: &GaussianClusterParams) -> Result<f64> {
    let p = params.mu.len();
    if y.len() != p {
        return Err(CmcError::Dimension {
            expected: p,
            got: y.len(),
        });
    }
    if params.sigma.len() != p || params.sigma.iter().any(|r| r.len() != p) {
        return Err(CmcError::Dimension {
            expected: p,
            got: params.sigma.len(),
        });
    }
    let sigma = DMatrix::from_fn(p, p, |i, j| params.sigma[i][j]);
    let chol = sigma.cholesky().ok_or(CmcError::NotPositiveDefinite)?;
    let l = chol.l();
    let diff = nalgebra::DVector::from_fn(p, |i, _| y[i] - params.mu[i]);
    let z = l
        .solve_lower_triangular(&diff)
        .ok_or(CmcError::NotPositiveDefinite)?;
    let log_det: f64 = (0..p).map(|i| l[(i, i)].ln()).sum::<f64>() * 2.0;
    Ok(-0.5 * (p as f64 * LN_2PI + log_det + z.norm_squared()))
}

/// Mixture component in precision-factor form.
#[derive(Clone, Debug)]
pub(crate) struct Component {
    mean: Vec<f64>,
    /// Lower-triangular `R`, row-major, with `Sigma^-1 = R R^T`.
    prec_chol: Vec<f64>,
    log_norm: f64,
}

impl Component {
    fn new(mean: Vec<f64>, prec_chol: Vec<f64>) -> Self {
        let p = mean.len();
        let log_det_r: f64 = (0..p).map(|i| prec_chol[i * p + i].ln()).sum();
        Self {
            mean,
            prec_chol,
            log_norm: -0.5 * p as f64 * LN_2PI + log_det_r,
        }
    }

    #[inline]
    fn loglik(&self, y: &[f64]) -> f64 {
        let p = self.mean.len();
        let r = &self.prec_chol;
        let mut q = 0.0;
        for j in 0..p {
            let mut s = 0.0;
            for i in j..p {
                s += r[i * p + j] * (y[i] - self.mean[i]);
            }
            q += s * s;
        }
        self.log_norm - 0.5 * q
    }

    /// Solves `R^T x = z`.
    fn solve_rt(&self, z: &[f64]) -> Vec<f64> {
        let p = z.len();
        let r = &self.prec_chol;
        let mut x = vec![0.0; p];
        for j in (0..p).rev() {
            let mut s = z[j];
            for i in j + 1..p {
                s -= r[i * p + j] * x[i];
            }
            x[j] = s / r[j * p + j];
        }
        x
    }

    fn sample_point<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let z: Vec<f64> = (0..self.mean.len()).map(|_| rng.sample(StandardNormal)).collect();
        let x = self.solve_rt(&z);
        x.iter().zip(&self.mean).map(|(a, b)| a + b).collect()
    }

    /// Covariance `(R R^T)^-1`, symmetrised; `None` if it is not numerically PD.
    fn covariance(&self) -> Option<Vec<Vec<f64>>> {
        let p = self.mean.len();
        let r = DMatrix::from_fn(p, p, |i, j| self.prec_chol[i * p + j]);
        let r_inv = r.solve_lower_triangular(&DMatrix::identity(p, p))?;
        let sigma = r_inv.transpose() * &r_inv;
        let sym = (&sigma + sigma.transpose()) * 0.5;
        if !sym.iter().all(|x| x.is_finite()) {
            return None;
        }
        sym.clone().cholesky()?;
        Some((0..p).map(|i| (0..p).map(|j| sym[(i, j)]).collect()).collect())
    }

    fn params(&self) -> Option<GaussianClusterParams> {
        Some(GaussianClusterParams {
            mu: self.mean.clone(),
            sigma: self.covariance()?,
        })
    }
}

/// Draws `(mu, Sigma)` with `Sigma^-1 ~ Wishart(nu, scale_inv)` through the
/// Bartlett decomposition and `mu ~ N(center, Sigma / kappa)`.
/// `scale_inv_chol` is the lower Cholesky factor of the Wishart scale.
fn draw_niw<R: Rng + ?Sized>(
    scale_inv_chol: &[f64],
    nu: f64,
    center: &[f64],
    kappa: f64,
    rng: &mut R,
) -> Component {
    let p = center.len();
    let mut a = vec![0.0; p * p];
    for i in 0..p {
        let chi = ChiSquared::new(nu - i as f64).expect("nu > p - 1");
        a[i * p + i] = chi.sample(rng).sqrt().max(1e-150);
        for j in 0..i {
            a[i * p + j] = rng.sample(StandardNormal);
        }
    }
    // R = L A, both lower-triangular.
    let mut r = vec![0.0; p * p];
    for i in 0..p {
        for j in 0..=i {
            let mut s = 0.0;
            for k in j..=i {
                s += scale_inv_chol[i * p + k] * a[k * p + j];
            }
            r[i * p + j] = s;
        }
    }
    let comp = Component::new(vec![0.0; p], r);
    let z: Vec<f64> = (0..p).map(|_| rng.sample::<f64, _>(StandardNormal) / kappa.sqrt()).collect();
    let offset = comp.solve_rt(&z);
    let mean = offset.iter().zip(center).map(|(a, b)| a + b).collect();
    Component::new(mean, comp.prec_chol)
}

/// Sufficient statistics of the observations in one cluster.
#[derive(Clone, Debug)]
pub(crate) struct ClusterStats {
    n: usize,
    sum: Vec<f64>,
    /// Row-major sum of outer products.
    sum_sq: Vec<f64>,
}

impl ClusterStats {
    pub(crate) fn new(p: usize) -> Self {
        Self {
            n: 0,
            sum: vec![0.0; p],
            sum_sq: vec![0.0; p * p],
        }
    }

    pub(crate) fn add(&mut self, y: &[f64]) {
        let p = y.len();
        self.n += 1;
        for i in 0..p {
            self.sum[i] += y[i];
            for j in 0..p {
                self.sum_sq[i * p + j] += y[i] * y[j];
            }
        }
    }
}

/// Normal-Inverse-Wishart posterior draw given a cluster's statistics.
pub(crate) fn sample_cluster<R: Rng + ?Sized>(stats: &ClusterStats, cfg: &DpmConfig, rng: &mut R) -> Component {
    let p = cfg.p;
    let n = stats.n as f64;
    let kappa_n = cfg.kappa0 + n;
    let nu_n = cfg.b + n;
    let mean: Vec<f64> = if stats.n > 0 {
        stats.sum.iter().map(|s| s / n).collect()
    } else {
        vec![0.0; p]
    };
    let center: Vec<f64> = stats.sum.iter().map(|s| s / kappa_n).collect();
    // Psi_n = I + S + kappa0 n / kappa_n * ybar ybar^T, with S the centred scatter.
    let shrink = if stats.n > 0 { cfg.kappa0 * n / kappa_n } else { 0.0 };
    let psi = DMatrix::from_fn(p, p, |i, j| {
        let scatter = stats.sum_sq[i * p + j] - n * mean[i] * mean[j];
        let eye = if i == j { 1.0 } else { 0.0 };
        eye + scatter + shrink * mean[i] * mean[j]
    });
    let psi = (&psi + psi.transpose()) * 0.5;
    let scale_inv = psi
        .cholesky()
        .map(|c| c.inverse())
        .expect("posterior scale is PD");
    let scale_inv = (&scale_inv + scale_inv.transpose()) * 0.5;
    let l = scale_inv.cholesky().expect("inverse scale is PD").l();
    let l_flat: Vec<f64> = (0..p).flat_map(|i| (0..p).map(move |j| (i, j))).map(|(i, j)| l[(i, j)]).collect();
    draw_niw(&l_flat, nu_n, &center, kappa_n, rng)
}

fn identity_flat(p: usize) -> Vec<f64> {
    let mut v = vec![0.0; p * p];
    for i in 0..p {
        v[i * p + i] = 1.0;
    }
    v
}

/// State of one DPM chain.
pub struct DpmSampler {
    data: DpmData,
    cfg: DpmConfig,
    assign: Vec<usize>,
    counts: Vec<usize>,
    comps: Vec<Component>,
    g0_chol: Vec<f64>,
    g0_center: Vec<f64>,
}

impl DpmSampler {
    pub fn new(data: DpmData, cfg: DpmConfig, rng: &mut ChainRng) -> Result<Self> {
        cfg.validate()?;
        if data.is_empty() {
            return Err(CmcError::Empty("no observations".into()));
        }
        if data.p() != cfg.p {
            return Err(CmcError::Dimension {
                expected: cfg.p,
                got: data.p(),
            });
        }
        let p = cfg.p;
        let assign = kmeans_init(&data, cfg.init_clusters.clamp(1, data.len()), rng);
        let k = assign.iter().max().map_or(0, |m| m + 1);
        let mut s = Self {
            data,
            g0_chol: identity_flat(p),
            g0_center: vec![0.0; p],
            assign,
            counts: vec![0; k],
            comps: Vec::new(),
            cfg,
        };
        for &c in &s.assign {
            s.counts[c] += 1;
        }
        s.comps = (0..k).map(|_| s.draw_g0(rng)).collect();
        s.drop_empty();
        s.update_params(rng);
        Ok(s)
    }

    fn draw_g0(&self, rng: &mut ChainRng) -> Component {
        draw_niw(&self.g0_chol, self.cfg.b, &self.g0_center, self.cfg.kappa0, rng)
    }

    fn drop_empty(&mut self) {
        let mut c = 0;
        while c < self.counts.len() {
            if self.counts[c] == 0 {
                self.remove_cluster(c);
            } else {
                c += 1;
            }
        }
    }

    /// Swap-removes cluster `c` and relabels the former last cluster.
    fn remove_cluster(&mut self, c: usize) -> Component {
        let last = self.counts.len() - 1;
        let comp = self.comps.swap_remove(c);
        self.counts.swap_remove(c);
        if c != last {
            for a in &mut self.assign {
                if *a == last {
                    *a = c;
                }
            }
        }
        comp
    }

    #[inline]
    fn loglik(&self, comp: &Component, i: usize) -> f64 {
        if self.cfg.prior_only {
            0.0
        } else {
            comp.loglik(self.data.row(i))
        }
    }

    /// Step (i): reallocate every observation.
    fn update_allocations(&mut self, rng: &mut ChainRng) {
        let n_aux = self.cfg.n_aux;
        let log_aux_weight = (self.cfg.m / n_aux as f64).ln();
        let mut aux: Vec<Component> = Vec::with_capacity(n_aux);
        let mut log_w: Vec<f64> = Vec::new();
        for i in 0..self.data.len() {
            let c = self.assign[i];
            self.counts[c] -= 1;
            aux.clear();
            if self.counts[c] == 0 {
                // The emptied cluster's parameters become the first auxiliary value.
                aux.push(self.remove_cluster(c));
            }
            while aux.len() < n_aux {
                aux.push(self.draw_g0(rng));
            }
            log_w.clear();
            for (k, comp) in self.comps.iter().enumerate() {
                log_w.push((self.counts[k] as f64).ln() + self.loglik(comp, i));
            }
            for comp in &aux {
                log_w.push(log_aux_weight + self.loglik(comp, i));
            }
            let pick = sample_log_weights(&log_w, rng);
            let k_existing = self.comps.len();
            if pick < k_existing {
                self.assign[i] = pick;
                self.counts[pick] += 1;
            } else {
                self.comps.push(aux.swap_remove(pick - k_existing));
                self.counts.push(1);
                self.assign[i] = k_existing;
            }
        }
    }

    /// Step (ii): redraw each cluster's parameters from its conjugate posterior.
    fn update_params(&mut self, rng: &mut ChainRng) {
        let p = self.cfg.p;
        let mut stats = vec![ClusterStats::new(p); self.comps.len()];
        if !self.cfg.prior_only {
            for i in 0..self.data.len() {
                stats[self.assign[i]].add(self.data.row(i));
            }
        }
        for (k, st) in stats.iter().enumerate() {
            let mut comp = sample_cluster(st, &self.cfg, rng);
            for _ in 0..16 {
                if comp.covariance().is_some() {
                    break;
                }
                comp = sample_cluster(st, &self.cfg, rng);
            }
            self.comps[k] = comp;
        }
    }

    pub fn sweep(&mut self, rng: &mut ChainRng) {
        self.update_allocations(rng);
        self.update_params(rng);
    }

    pub fn num_clusters(&self) -> usize {
        self.comps.len()
    }

    /// Current cluster index per local observation.
    pub fn labels(&self) -> &[usize] {
        &self.assign
    }

    pub fn data(&self) -> &DpmData {
        &self.data
    }

    /// Redraws every observation from its current component.
    pub fn resample_data(&mut self, rng: &mut ChainRng) {
        let p = self.cfg.p;
        for i in 0..self.data.len() {
            let y = self.comps[self.assign[i]].sample_point(rng);
            self.data.values[i * p..(i + 1) * p].copy_from_slice(&y);
        }
    }

    pub fn snapshot(&self) -> SubsetDraw<GaussianClusterParams, ()> {
        let mut members: Vec<Vec<usize>> = vec![Vec::new(); self.comps.len()];
        for (i, &c) in self.assign.iter().enumerate() {
            members[c].push(self.data.ids[i]);
        }
        let params = self
            .comps
            .iter()
            .map(|c| {
                c.params().unwrap_or_else(|| GaussianClusterParams {
                    mu: c.mean.clone(),
                    sigma: vec![vec![f64::NAN; self.cfg.p]; self.cfg.p],
                })
            })
            .collect();
        SubsetDraw {
            subsets: members.into_iter().map(IdSet::from_ids).collect(),
            params,
            globals: (),
        }
    }
}

/// k-means++ seeding followed by a few Lloyd iterations.
fn kmeans_init(data: &DpmData, k: usize, rng: &mut ChainRng) -> Vec<usize> {
    let n = data.len();
    let p = data.p();
    let dist2 = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
    let mut centers: Vec<Vec<f64>> = vec![data.row(rng.random_range(0..n)).to_vec()];
    let mut d: Vec<f64> = (0..n).map(|i| dist2(data.row(i), &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d.iter().sum();
        if !(total > 0.0) {
            break;
        }
        let mut u = rng.random::<f64>() * total;
        let mut pick = n - 1;
        for (i, di) in d.iter().enumerate() {
            u -= di;
            if u <= 0.0 {
                pick = i;
                break;
            }
        }
        centers.push(data.row(pick).to_vec());
        let c = centers.last().expect("just pushed");
        for i in 0..n {
            d[i] = d[i].min(dist2(data.row(i), c));
        }
    }
    let mut assign = vec![0usize; n];
    for _ in 0..10 {
        for (i, a) in assign.iter_mut().enumerate() {
            let row = data.row(i);
            *a = (0..centers.len())
                .min_by(|&x, &y| dist2(row, &centers[x]).total_cmp(&dist2(row, &centers[y])))
                .unwrap_or(0);
        }
        let mut sums = vec![vec![0.0; p]; centers.len()];
        let mut cnt = vec![0usize; centers.len()];
        for (i, &a) in assign.iter().enumerate() {
            cnt[a] += 1;
            for (s, x) in sums[a].iter_mut().zip(data.row(i)) {
                *s += x;
            }
        }
        for (c, center) in centers.iter_mut().enumerate() {
            if cnt[c] > 0 {
                for (x, s) in center.iter_mut().zip(&sums[c]) {
                    *x = s / cnt[c] as f64;
                }
            }
        }
    }
    assign
}

/// Runs one DPM chain and returns its retained draws.
pub fn dpm_run(data: &DpmData, cfg: &DpmConfig) -> Result<SampleSet<GaussianClusterParams, ()>> {
    let mut rng = chain_rng(cfg.seed);
    let mut sampler = DpmSampler::new(data.clone(), cfg.clone(), &mut rng)?;
    let mut draws = Vec::with_capacity(cfg.schedule.retained());
    for t in 0..cfg.schedule.iterations {
        sampler.sweep(&mut rng);
        if cfg.schedule.keep(t) {
            draws.push(sampler.snapshot());
        }
    }
    Ok(SampleSet {
        draws,
        meta: ChainMeta {
            model: ModelKind::Dpm,
            seed: cfg.seed,
            schedule: cfg.schedule,
            n_obs: data.len(),
            acceptance: AcceptCounter::default().rates(),
        },
    })
}
