//! Gelman-Rubin potential scale reduction factor.

use crate::error::{Error, Result};

/// Classic PSRF over equal-length chains:
/// `sqrt(((n-1)/n · W + B/n) / W)` with `W` the mean within-chain variance
/// and `B/n` the variance of the chain means.
pub fn gelman_rubin(chains: &[&[f64]]) -> Result<f64> {
    let m = chains.len();
    if m < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: m });
    }
    let n = chains[0].len();
    if let Some(c) = chains.iter().find(|c| c.len() != n) {
        return Err(Error::LengthMismatch {
            expected: n,
            actual: c.len(),
        });
    }
    if n < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: n });
    }
    let nf = n as f64;
    let mut means = Vec::with_capacity(m);
    let mut w = 0.0;
    for c in chains {
        let mean = c.iter().sum::<f64>() / nf;
        let var = c.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (nf - 1.0);
        means.push(mean);
        w += var;
    }
    w /= m as f64;
    if w <= 0.0 {
        return Err(Error::ZeroVariance("every chain"));
    }
    let grand = means.iter().sum::<f64>() / m as f64;
    let b_over_n = means.iter().map(|x| (x - grand) * (x - grand)).sum::<f64>() / (m as f64 - 1.0);
    let var_plus = (nf - 1.0) / nf * w + b_over_n;
    Ok((var_plus / w).sqrt())
}

/// PSRF after cutting each chain into its first and second half, which also
/// flags drift inside a single chain.
pub fn split_gelman_rubin(chains: &[&[f64]]) -> Result<f64> {
    let n = chains.iter().map(|c| c.len()).min().unwrap_or(0);
    let half = n / 2;
    let mut parts: Vec<&[f64]> = Vec::with_capacity(2 * chains.len());
    for c in chains {
        parts.push(&c[..half]);
        parts.push(&c[n - half..n]);
    }
    gelman_rubin(&parts)
}
