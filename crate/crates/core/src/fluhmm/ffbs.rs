use rand::Rng;

use super::draw::categorical;
use super::exact::forward_log;
use super::model::{PhaseModel, N_PHASES};

/// Draws a phase path from `P(path | y, model)` by forward filtering and
/// backward sampling. Phases are 0-based; the path never decreases.
pub fn ffbs_sample<R: Rng + ?Sized>(y: &[f64], model: &PhaseModel, rng: &mut R) -> Vec<u8> {
    let n = y.len();
    let mut path = vec![0u8; n];
    if n == 0 {
        return path;
    }
    let alpha = forward_log(y, model);
    let last = alpha[n - 1].map(f64::exp);
    let mut next = categorical(rng, &last);
    path[n - 1] = next as u8;
    for t in (0..n - 1).rev() {
        // only `next` and `next - 1` can precede `next`
        let mut w = [0.0; N_PHASES];
        w[next] = alpha[t][next].exp() * model.transition(next, next);
        if next > 0 {
            w[next - 1] = alpha[t][next - 1].exp() * model.transition(next - 1, next);
        }
        next = categorical(rng, &w);
        path[t] = next as u8;
    }
    path
}
