//! Exact smoothing for the five-phase chain, in log space.

use super::model::{PhaseModel, N_PHASES};

pub(crate) fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

fn normalize_log(v: &mut [f64; N_PHASES]) -> f64 {
    let z = log_sum_exp(v);
    for x in v.iter_mut() {
        *x -= z;
    }
    z
}

/// Log filtered distributions `log P(phase_t | y_1..y_t)` for every week.
pub(crate) fn forward_log(y: &[f64], model: &PhaseModel) -> Vec<[f64; N_PHASES]> {
    let lt = model.log_transition();
    let mut alpha: Vec<[f64; N_PHASES]> = Vec::with_capacity(y.len());
    for (t, &obs) in y.iter().enumerate() {
        let le = model.log_emissions(obs);
        let mut a = [f64::NEG_INFINITY; N_PHASES];
        if t == 0 {
            a[0] = le[0];
        } else {
            let prev = &alpha[t - 1];
            for j in 0..N_PHASES {
                let stay = prev[j] + lt[j][j];
                let moved = if j > 0 { prev[j - 1] + lt[j - 1][j] } else { f64::NEG_INFINITY };
                a[j] = log_sum_exp(&[stay, moved]) + le[j];
            }
        }
        normalize_log(&mut a);
        alpha.push(a);
    }
    alpha
}

/// Smoothed marginals `P(phase_t = k | y, model)`, one row per week.
pub fn forward_backward_exact(y: &[f64], model: &PhaseModel) -> Vec<[f64; N_PHASES]> {
    let n = y.len();
    if n == 0 {
        return Vec::new();
    }
    let alpha = forward_log(y, model);
    let lt = model.log_transition();
    let mut beta = vec![[0.0; N_PHASES]; n];
    for t in (0..n - 1).rev() {
        let le = model.log_emissions(y[t + 1]);
        let mut b = [f64::NEG_INFINITY; N_PHASES];
        for (i, bi) in b.iter_mut().enumerate() {
            let stay = lt[i][i] + le[i] + beta[t + 1][i];
            let moved = if i + 1 < N_PHASES {
                lt[i][i + 1] + le[i + 1] + beta[t + 1][i + 1]
            } else {
                f64::NEG_INFINITY
            };
            *bi = log_sum_exp(&[stay, moved]);
        }
        normalize_log(&mut b);
        beta[t] = b;
    }
    alpha
        .iter()
        .zip(&beta)
        .map(|(a, b)| {
            let mut g = [0.0; N_PHASES];
            for k in 0..N_PHASES {
                g[k] = a[k] + b[k];
            }
            normalize_log(&mut g);
            g.map(f64::exp)
        })
        .collect()
}
