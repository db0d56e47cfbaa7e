//! Small numeric helpers shared by the samplers.

use rand::Rng;
use rand_distr::{Distribution, Gamma};
pub use statrs::function::gamma::ln_gamma;

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Draws an index with probability proportional to `exp(log_w)`.
pub fn sample_log_weights<R: Rng + ?Sized>(log_w: &[f64], rng: &mut R) -> usize {
    let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let total: f64 = log_w.iter().map(|x| (x - max).exp()).sum();
    let mut u = rng.random::<f64>() * total;
    for (i, x) in log_w.iter().enumerate() {
        u -= (x - max).exp();
        if u <= 0.0 {
            return i;
        }
    }
    log_w.len() - 1
}

/// `ln(1 + e^x)` without overflow.
pub fn log1p_exp(x: f64) -> f64 {
    if x > 35.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

/// Bernoulli draw from log-odds.
pub fn bernoulli_logit<R: Rng + ?Sized>(logit: f64, rng: &mut R) -> bool {
    let p = 1.0 / (1.0 + (-logit).exp());
    rng.random::<f64>() < p
}

/// Metropolis acceptance from a log ratio.
pub fn accept<R: Rng + ?Sized>(log_ratio: f64, rng: &mut R) -> bool {
    if log_ratio >= 0.0 {
        return true;
    }
    if log_ratio.is_nan() {
        return false;
    }
    rng.random::<f64>().ln() < log_ratio
}

pub fn harmonic(n: usize) -> f64 {
    (1..=n).map(|i| 1.0 / i as f64).sum()
}

pub fn ln_beta_density(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 || x >= 1.0 {
        return f64::NEG_INFINITY;
    }
    ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + (a - 1.0) * x.ln() + (b - 1.0) * (-x).ln_1p()
}

pub fn ln_dirichlet_density(x: &[f64], alpha: &[f64]) -> f64 {
    let mut out = ln_gamma(alpha.iter().sum());
    for (&xi, &ai) in x.iter().zip(alpha) {
        if xi <= 0.0 {
            return f64::NEG_INFINITY;
        }
        out += (ai - 1.0) * xi.ln() - ln_gamma(ai);
    }
    out
}

/// Dirichlet draw through normalised gammas. Components that underflow to
/// zero are reported as `None`.
pub fn sample_dirichlet<R: Rng + ?Sized>(alpha: &[f64], rng: &mut R) -> Option<Vec<f64>> {
    let mut g: Vec<f64> = alpha
        .iter()
        .map(|&a| Gamma::new(a, 1.0).expect("positive shape").sample(rng))
        .collect();
    let total: f64 = g.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return None;
    }
    for x in &mut g {
        *x /= total;
    }
    if g.iter().any(|&x| x <= 0.0) {
        return None;
    }
    Some(g)
}

/// Binomial log-likelihood kernel `y ln p + (N - y) ln(1 - p)`.
#[inline]
pub fn binomial_kernel(y: u32, total: u32, p: f64) -> f64 {
    let mut out = 0.0;
    if y > 0 {
        out += y as f64 * p.ln();
    }
    if total > y {
        out += (total - y) as f64 * (-p).ln_1p();
    }
    out
}

pub fn ln_binomial_coef(total: u32, y: u32) -> f64 {
    ln_gamma(total as f64 + 1.0) - ln_gamma(y as f64 + 1.0) - ln_gamma((total - y) as f64 + 1.0)
}

/// Mean and batch-means standard error of a correlated trace.
pub fn batch_mean_se(xs: &[f64], batches: usize) -> (f64, f64) {
    let n = xs.len();
    let mean = xs.iter().sum::<f64>() / n as f64;
    let size = n / batches;
    let means: Vec<f64> = (0..batches)
        .map(|b| xs[b * size..(b + 1) * size].iter().sum::<f64>() / size as f64)
        .collect();
    let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (batches - 1) as f64;
    (mean, (var / batches as f64).sqrt())
}
