//! Multi-chain Gibbs sampler for the five-phase model.
//!
//! One sweep draws, in order: the phase path by forward filtering and
//! backward sampling; each phase's variance and then its mean from the
//! conjugate conditionals under the plateau ordering; the advance
//! probabilities from their Beta conditionals.
//!
//! Means are drawn jointly by rejection against the ordering constraint.
//! When 100 proposals in a row are rejected the sweep instead updates each
//! mean from its truncated-normal full conditional given the others.
//! Either branch leaves the target invariant and which one runs does not
//! depend on the current means, so the mixture is a valid kernel.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::draw::{beta, categorical, normal, trunc_gamma, trunc_normal};
use super::ffbs::ffbs_sample;
use super::model::{is_ordered, PhaseModel, N_PHASES};
use super::psrf::split_gelman_rubin;
use crate::error::{Error, Result};
use crate::series::IliSeries;

const MAX_ORDER_REJECTIONS: usize = 100;
/// Keeps advance probabilities strictly inside (0, 1).
const ADVANCE_EPS: f64 = 1e-12;

/// Prior hyperparameters.
///
/// Variances get an inverse-gamma prior restricted to
/// `[sd_floor², sd_ceiling²]`; means are flat over the ordered region inside
/// `[min(y) - spread, max(y) + spread]` where `spread` is the data range
/// (at least 1). A `None` bound is derived from the series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Priors {
    pub var_shape: f64,
    pub var_scale: f64,
    pub advance_alpha: f64,
    pub advance_beta: f64,
    pub sd_floor: f64,
    pub sd_ceiling: Option<f64>,
    pub mean_bounds: Option<(f64, f64)>,
}

impl Default for Priors {
    fn default() -> Self {
        Priors {
            var_shape: 0.01,
            var_scale: 0.01,
            advance_alpha: 1.0,
            advance_beta: 1.0,
            sd_floor: 0.1,
            sd_ceiling: None,
            mean_bounds: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub chains: usize,
    pub initial_iterations: usize,
    pub increment: usize,
    pub max_iterations: usize,
    pub burn_in_fraction: f64,
    pub psrf_threshold: f64,
    pub seed: u64,
    pub priors: Priors,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            chains: 4,
            initial_iterations: 5000,
            increment: 5000,
            max_iterations: 50_000,
            burn_in_fraction: 0.5,
            psrf_threshold: 1.1,
            seed: 42,
            priors: Priors::default(),
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        let p = &self.priors;
        let ok = self.chains >= 2
            && self.initial_iterations >= 1
            && self.increment >= 1
            && self.max_iterations >= self.initial_iterations
            && self.burn_in_fraction > 0.0
            && self.burn_in_fraction < 1.0
            && self.psrf_threshold > 1.0
            && p.var_shape > 0.0
            && p.var_scale > 0.0
            && p.advance_alpha > 0.0
            && p.advance_beta > 0.0
            && p.sd_floor > 0.0
            && p.sd_ceiling.is_none_or(|c| c > p.sd_floor)
            && p.mean_bounds.is_none_or(|(lo, hi)| lo < hi);
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid sampler configuration {self:?}")))
        }
    }
}

/// Posterior summary of a fit.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    /// Posterior probability of each phase, one row per week.
    pub phase_probs: Vec<[f64; N_PHASES]>,
    /// Retained (post burn-in) parameter draws, chain after chain.
    pub param_draws: Vec<PhaseModel>,
    /// Retained phase paths, aligned with `param_draws`.
    pub path_draws: Vec<Vec<u8>>,
    /// Split-chain PSRF of each phase mean at the last check.
    pub psrf: [f64; N_PHASES],
    pub converged: bool,
    /// Iterations run by each chain.
    pub total_iterations: usize,
    /// Times the ordered-mean draw fell back to coordinate updates.
    pub order_fallbacks: u64,
    pub config: SamplerConfig,
}

impl FitResult {
    pub fn weeks(&self) -> usize {
        self.phase_probs.len()
    }

    /// Most probable phase of each week (ties go to the earlier phase).
    pub fn map_phases(&self) -> Vec<usize> {
        self.phase_probs
            .iter()
            .map(|row| {
                (0..N_PHASES)
                    .fold(0, |best, k| if row[k] > row[best] { k } else { best })
            })
            .collect()
    }

    /// First week whose most probable phase is `phase` or later.
    pub fn map_onset(&self, phase: usize) -> Option<usize> {
        self.map_phases().iter().position(|&k| k >= phase)
    }

    /// Posterior mean of the parameters over the retained draws.
    pub fn posterior_mean(&self) -> Option<PhaseModel> {
        let n = self.param_draws.len();
        if n == 0 {
            return None;
        }
        let mut m = PhaseModel {
            mu: [0.0; 5],
            sigma: [0.0; 5],
            advance: [0.0; 4],
        };
        for d in &self.param_draws {
            for k in 0..N_PHASES {
                m.mu[k] += d.mu[k] / n as f64;
                m.sigma[k] += d.sigma[k] / n as f64;
            }
            for k in 0..N_PHASES - 1 {
                m.advance[k] += d.advance[k] / n as f64;
            }
        }
        Some(m)
    }
}

#[derive(Debug, Clone, Copy)]
struct Bounds {
    mean_lo: f64,
    mean_hi: f64,
    sd_lo: f64,
    sd_hi: f64,
}

impl Bounds {
    fn for_series(y: &[f64], p: &Priors) -> Self {
        let lo = y.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let spread = (hi - lo).max(1.0);
        let (mean_lo, mean_hi) = p.mean_bounds.unwrap_or((lo - spread, hi + spread));
        Bounds {
            mean_lo,
            mean_hi,
            sd_lo: p.sd_floor,
            sd_hi: p.sd_ceiling.unwrap_or(spread),
        }
    }
}

/// Sufficient statistics of the observations assigned to each phase.
#[derive(Debug, Default)]
struct PhaseStats {
    n: [usize; N_PHASES],
    sum: [f64; N_PHASES],
    stay: [usize; N_PHASES],
    advance: [usize; N_PHASES],
}

impl PhaseStats {
    fn of(y: &[f64], path: &[u8]) -> Self {
        let mut s = PhaseStats::default();
        for (t, (&obs, &k)) in y.iter().zip(path).enumerate() {
            let k = k as usize;
            s.n[k] += 1;
            s.sum[k] += obs;
            if let Some(&next) = path.get(t + 1) {
                if next as usize == k {
                    s.stay[k] += 1;
                } else {
                    s.advance[k] += 1;
                }
            }
        }
        s
    }
}

struct Chain {
    rng: ChaCha8Rng,
    state: PhaseModel,
    mu_trace: Vec<[f64; N_PHASES]>,
    draws: Vec<PhaseModel>,
    paths: Vec<Vec<u8>>,
    fallbacks: u64,
}

impl Chain {
    fn new(y: &[f64], cfg: &SamplerConfig, bounds: &Bounds, index: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(index as u64);
        let path = random_path(&mut rng, y.len());
        let ybar = y.iter().sum::<f64>() / y.len() as f64;
        let mut chain = Chain {
            rng,
            state: PhaseModel {
                mu: [ybar.clamp(bounds.mean_lo, bounds.mean_hi); N_PHASES],
                sigma: [bounds.sd_hi; N_PHASES],
                advance: [0.5; N_PHASES - 1],
            },
            mu_trace: Vec::new(),
            draws: Vec::new(),
            paths: Vec::new(),
            fallbacks: 0,
        };
        chain.update_params(y, &path, &cfg.priors, bounds);
        chain
    }

    fn run(&mut self, y: &[f64], iterations: usize, priors: &Priors, bounds: &Bounds) {
        for _ in 0..iterations {
            let path = ffbs_sample(y, &self.state, &mut self.rng);
            self.update_params(y, &path, priors, bounds);
            self.mu_trace.push(self.state.mu);
            self.draws.push(self.state);
            self.paths.push(path);
        }
    }

    fn update_params(&mut self, y: &[f64], path: &[u8], p: &Priors, b: &Bounds) {
        let stats = PhaseStats::of(y, path);
        let rng = &mut self.rng;
        let state = &mut self.state;

        // variances given current means, sampled as precisions
        for k in 0..N_PHASES {
            let ss: f64 = y
                .iter()
                .zip(path)
                .filter(|(_, &ph)| ph as usize == k)
                .map(|(obs, _)| (obs - state.mu[k]).powi(2))
                .sum();
            let shape = p.var_shape + stats.n[k] as f64 / 2.0;
            let rate = p.var_scale + ss / 2.0;
            let tau = trunc_gamma(rng, shape, rate, 1.0 / (b.sd_hi * b.sd_hi), 1.0 / (b.sd_lo * b.sd_lo));
            state.sigma[k] = tau.sqrt().recip();
        }

        // means given variances, jointly under the ordering
        let mut accepted = None;
        for _ in 0..MAX_ORDER_REJECTIONS {
            let mut mu = [0.0; N_PHASES];
            for k in 0..N_PHASES {
                mu[k] = draw_mean(rng, &stats, state, k, b.mean_lo, b.mean_hi);
            }
            if is_ordered(&mu) {
                accepted = Some(mu);
                break;
            }
        }
        match accepted {
            Some(mu) => state.mu = mu,
            None => {
                self.fallbacks += 1;
                log::debug!("ordered mean proposal rejected {MAX_ORDER_REJECTIONS} times; coordinate update");
                for k in 0..N_PHASES {
                    let (lo, hi) = order_window(&state.mu, k);
                    let (lo, hi) = (lo.max(b.mean_lo), hi.min(b.mean_hi));
                    state.mu[k] = draw_mean(rng, &stats, state, k, lo, hi);
                }
            }
        }

        for k in 0..N_PHASES - 1 {
            let a = p.advance_alpha + stats.advance[k] as f64;
            let bb = p.advance_beta + stats.stay[k] as f64;
            state.advance[k] = beta(rng, a, bb).clamp(ADVANCE_EPS, 1.0 - ADVANCE_EPS);
        }
    }
}

/// Mean of phase `k` from its conditional restricted to `[lo, hi]`: the
/// normal around the phase average, or uniform for an unvisited phase.
fn draw_mean<R: Rng + ?Sized>(rng: &mut R, stats: &PhaseStats, state: &PhaseModel, k: usize, lo: f64, hi: f64) -> f64 {
    let n = stats.n[k];
    if n == 0 {
        return lo + rng.random::<f64>() * (hi - lo);
    }
    let mean = stats.sum[k] / n as f64;
    let sd = state.sigma[k] / (n as f64).sqrt();
    if (lo..=hi).contains(&mean) && (hi - lo) > 16.0 * sd {
        let x = normal(rng, mean, sd);
        if (lo..=hi).contains(&x) {
            return x;
        }
    }
    trunc_normal(rng, mean, sd, lo, hi)
}

/// Interval the ordering leaves for `mu[k]` with the other means fixed.
fn order_window(mu: &[f64; N_PHASES], k: usize) -> (f64, f64) {
    let inf = f64::INFINITY;
    match k {
        0 => (-inf, mu[1]),
        1 => (mu[0], mu[2]),
        2 => (mu[1].max(mu[3]), inf),
        3 => (mu[4], mu[2]),
        _ => (-inf, mu[3]),
    }
}

/// Monotone starting path with uniformly placed phase changes.
fn random_path<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<u8> {
    let mut cuts: Vec<usize> = Vec::new();
    if n > N_PHASES - 1 {
        while cuts.len() < N_PHASES - 1 {
            let c = rng.random_range(1..n);
            if !cuts.contains(&c) {
                cuts.push(c);
            }
        }
    } else {
        // short series: pick how far the path gets, one step per week
        let reach = categorical(rng, &vec![1.0; n]);
        cuts.extend(1..=reach);
    }
    cuts.sort_unstable();
    (0..n).map(|t| cuts.iter().filter(|&&c| c <= t).count() as u8).collect()
}

/// Fits the five-phase model to a weekly series, extending every chain by
/// `increment` iterations until the split PSRF of each phase mean drops
/// below the threshold or `max_iterations` is reached.
pub fn fit(series: &IliSeries, config: &SamplerConfig) -> Result<FitResult> {
    config.validate()?;
    let y = series.values();
    if y.len() < 5 {
        return Err(Error::TooFewSamples { needed: 5, got: y.len() });
    }
    if let Some((t, v)) = y.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v >= 0.0)) {
        return Err(Error::invalid(format!("week {t} has negative or non-finite score {v}")));
    }
    let bounds = Bounds::for_series(y, &config.priors);
    let priors = config.priors;

    let mut chains: Vec<Chain> = (0..config.chains).map(|i| Chain::new(y, config, &bounds, i)).collect();
    let mut done = 0;
    let mut target = config.initial_iterations;
    let (psrf, converged, keep_from) = loop {
        let steps = target - done;
        chains.par_iter_mut().for_each(|c| c.run(y, steps, &priors, &bounds));
        done = target;

        let keep_from = ((done as f64) * config.burn_in_fraction).floor() as usize;
        let mut psrf = [f64::NAN; N_PHASES];
        for (k, r) in psrf.iter_mut().enumerate() {
            let traces: Vec<Vec<f64>> = chains
                .iter()
                .map(|c| c.mu_trace[keep_from..].iter().map(|m| m[k]).collect())
                .collect();
            let refs: Vec<&[f64]> = traces.iter().map(Vec::as_slice).collect();
            *r = split_gelman_rubin(&refs).unwrap_or(f64::NAN);
        }
        let converged = psrf.iter().all(|&r| r < config.psrf_threshold);
        log::info!("after {done} iterations: psrf {psrf:.4?}");
        if converged || done >= config.max_iterations {
            break (psrf, converged, keep_from);
        }
        target = (done + config.increment).min(config.max_iterations);
    };

    let mut counts = vec![[0u64; N_PHASES]; y.len()];
    let mut param_draws = Vec::new();
    let mut path_draws = Vec::new();
    let mut order_fallbacks = 0;
    for c in chains {
        order_fallbacks += c.fallbacks;
        for path in &c.paths[keep_from..] {
            for (t, &k) in path.iter().enumerate() {
                counts[t][k as usize] += 1;
            }
        }
        param_draws.extend_from_slice(&c.draws[keep_from..]);
        path_draws.extend(c.paths.into_iter().skip(keep_from));
    }
    let total = (path_draws.len() as f64).max(1.0);
    let phase_probs = counts.iter().map(|row| row.map(|c| c as f64 / total)).collect();

    Ok(FitResult {
        phase_probs,
        param_draws,
        path_draws,
        psrf,
        converged,
        total_iterations: done,
        order_fallbacks,
        config: *config,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(seed: u64) -> SamplerConfig {
        SamplerConfig {
            initial_iterations: 1000,
            increment: 1000,
            max_iterations: 6000,
            seed,
            ..SamplerConfig::default()
        }
    }

    fn season() -> IliSeries {
        let mut v = vec![2.0; 8];
        v.extend([14.0, 16.0, 15.0, 41.0, 39.0, 40.0, 42.0, 16.0, 14.0, 15.0]);
        v.extend([2.0, 3.0, 1.0, 2.0, 2.0, 2.0]);
        IliSeries::new(v).unwrap()
    }

    #[test]
    fn start_paths_are_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for n in 1..12 {
            for _ in 0..50 {
                let p = random_path(&mut rng, n);
                assert_eq!(p.len(), n);
                assert_eq!(p[0], 0);
                assert!(p.windows(2).all(|w| w[1] == w[0] || w[1] == w[0] + 1));
            }
        }
    }

    #[test]
    fn order_windows_keep_order() {
        let mu = [1.0, 5.0, 9.0, 4.0, 2.0];
        for k in 0..5 {
            let (lo, hi) = order_window(&mu, k);
            assert!(lo <= mu[k] && mu[k] <= hi);
        }
    }

    #[test]
    fn recovers_planted_phases() {
        let fit = fit(&season(), &cfg(3)).unwrap();
        assert!(fit.converged, "psrf {:?}", fit.psrf);
        assert_eq!(fit.map_onset(1), Some(8));
        assert_eq!(fit.map_onset(2), Some(11));
        assert_eq!(fit.map_onset(3), Some(15));
        assert_eq!(fit.map_onset(4), Some(18));
        for row in &fit.phase_probs {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn retained_draws_respect_structure() {
        let fit = fit(&season(), &cfg(4)).unwrap();
        assert_eq!(fit.param_draws.len(), fit.path_draws.len());
        assert_eq!(fit.param_draws.len(), 4 * (fit.total_iterations - fit.total_iterations / 2));
        for d in &fit.param_draws {
            assert!(is_ordered(&d.mu));
            assert!(d.sigma.iter().all(|s| *s > 0.0));
            assert!(d.advance.iter().all(|p| *p > 0.0 && *p < 1.0));
        }
        for p in &fit.path_draws {
            assert_eq!(p[0], 0);
            assert!(p.windows(2).all(|w| w[1] >= w[0]));
        }
    }

    #[test]
    fn same_seed_same_result() {
        let a = fit(&season(), &cfg(9)).unwrap();
        let b = fit(&season(), &cfg(9)).unwrap();
        assert_eq!(a, b);
        let c = fit(&season(), &cfg(10)).unwrap();
        assert_ne!(a.param_draws, c.param_draws);
    }

    #[test]
    fn thread_count_does_not_matter() {
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let a = one.install(|| fit(&season(), &cfg(21)).unwrap());
        let b = fit(&season(), &cfg(21)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn flat_zero_series_stays_pre_epidemic() {
        let zeros = IliSeries::new(vec![0.0; 20]).unwrap();
        let mut c = cfg(8);
        c.priors.advance_beta = 20.0;
        let f = fit(&zeros, &c).unwrap();
        for row in &f.phase_probs {
            assert!(row[0] >= 0.8, "{row:?}");
        }
        let pm = f.posterior_mean().unwrap();
        let exact = super::super::forward_backward_exact(zeros.values(), &pm);
        for row in &exact {
            assert!(row[0] >= 0.8, "{row:?}");
        }
    }

    #[test]
    fn rejects_bad_input() {
        let short = IliSeries::new(vec![1.0, 2.0, 3.0]).unwrap();
        assert!(fit(&short, &cfg(1)).is_err());
        let bad = SamplerConfig { chains: 1, ..cfg(1) };
        assert!(fit(&season(), &bad).is_err());
    }

    #[test]
    fn gives_up_at_max_iterations() {
        let tight = SamplerConfig {
            initial_iterations: 20,
            increment: 20,
            max_iterations: 60,
            psrf_threshold: 1.000_000_1,
            ..cfg(5)
        };
        let f = fit(&season(), &tight).unwrap();
        assert!(!f.converged);
        assert_eq!(f.total_iterations, 60);
    }
}
