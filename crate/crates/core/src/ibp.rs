//! Indian buffet process prior pieces shared by the feature-allocation samplers.

use rand::Rng;
use rand_distr::{Distribution, Poisson};

use crate::allocation::{AllocKind, AllocationMatrix};
use crate::error::{CmcError, Result};
use crate::stats::{harmonic, ln_gamma};

/// Prior probability that row `i` joins a column held by `r_minus` of the other
/// `n - 1` rows.
pub fn ibp_gibbs_existing(r_minus: usize, n: usize) -> Result<f64> {
    if r_minus == 0 {
        return Err(CmcError::Invariant(
            "column has no other members; treat it through the new-feature move".into(),
        ));
    }
    if r_minus >= n {
        return Err(CmcError::Invariant(format!("{r_minus} other members but only {n} rows")));
    }
    Ok(r_minus as f64 / n as f64)
}

/// Number of new features for one row, `Poisson(m / n)`.
pub fn ibp_new_features<R: Rng + ?Sized>(m_ibp: f64, n: usize, rng: &mut R) -> usize {
    let rate = m_ibp / n as f64;
    if !(rate > 0.0) {
        return 0;
    }
    Poisson::new(rate).map_or(0, |d| d.sample(rng) as usize)
}

/// Log prior of a column-ordered binary matrix with no empty columns.
pub fn ibp_prior_logpmf(a: &AllocationMatrix, m_ibp: f64) -> Result<f64> {
    if a.kind() != AllocKind::Feature {
        return Err(CmcError::Invariant("IBP prior needs a feature allocation".into()));
    }
    let n = a.n();
    let k = a.k();
    let mut lp = k as f64 * m_ibp.ln() - m_ibp * harmonic(n) - ln_gamma(k as f64 + 1.0);
    for col in 0..k {
        let c = a.column_sum(col);
        if c == 0 {
            return Err(CmcError::Invariant(format!("column {} is empty", col + 1)));
        }
        lp += ln_gamma(c as f64) + ln_gamma((n - c) as f64 + 1.0) - ln_gamma(n as f64 + 1.0);
    }
    Ok(lp)
}

/// Columns of one draw from `IBP(m)` by the sequential buffet construction.
pub(crate) fn ibp_sequential<R: Rng + ?Sized>(n: usize, m_ibp: f64, rng: &mut R) -> Vec<Vec<u8>> {
    let mut cols: Vec<Vec<u8>> = Vec::new();
    let mut counts: Vec<usize> = Vec::new();
    for i in 0..n {
        let customers = (i + 1) as f64;
        for (col, c) in cols.iter_mut().zip(counts.iter_mut()) {
            if rng.random::<f64>() < *c as f64 / customers {
                col[i] = 1;
                *c += 1;
            }
        }
        for _ in 0..ibp_new_features(m_ibp, i + 1, rng) {
            let mut col = vec![0u8; n];
            col[i] = 1;
            cols.push(col);
            counts.push(1);
        }
    }
    cols
}
