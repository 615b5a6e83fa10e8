//! Random variate helpers for the Gibbs updates.

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use statrs::distribution::{ContinuousCDF, Gamma as GammaDist};
use statrs::function::erf::{erfc, erfc_inv};

const SQRT_2: f64 = std::f64::consts::SQRT_2;

/// Standard normal CDF.
fn phi(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

fn phi_inv(u: f64) -> f64 {
    -SQRT_2 * erfc_inv(2.0 * u)
}

/// Standard normal restricted to `[a, b]`.
fn std_trunc_normal<R: Rng + ?Sized>(rng: &mut R, a: f64, b: f64) -> f64 {
    debug_assert!(a <= b);
    if a == b {
        return a;
    }
    // plain rejection when the interval holds a good share of the mass
    if a < 0.5 && b > -0.5 && (b - a) > 1.0 {
        for _ in 0..32 {
            let z: f64 = rng.sample(StandardNormal);
            if (a..=b).contains(&z) {
                return z;
            }
        }
    }
    if a >= 0.0 {
        upper_tail(rng, a, b)
    } else if b <= 0.0 {
        -upper_tail(rng, -b, -a)
    } else {
        let (pa, pb) = (phi(a), phi(b));
        phi_inv(pa + rng.random::<f64>() * (pb - pa)).clamp(a, b)
    }
}

/// Draw on `[a, b]` with `0 <= a`, inverting the upper tail.
fn upper_tail<R: Rng + ?Sized>(rng: &mut R, a: f64, b: f64) -> f64 {
    let (qa, qb) = (phi(-a), phi(-b));
    if qa > 1e-300 && qa > qb {
        let u = qb + rng.random::<f64>() * (qa - qb);
        return (-phi_inv(u)).clamp(a, b);
    }
    // far tail: the density is close to a exp(-a (z - a)) there
    let width = b - a;
    let u: f64 = rng.random();
    let z = a - (1.0 - u * (1.0 - (-a * width).exp())).ln() / a;
    z.clamp(a, b)
}

/// `N(mean, sd²)` restricted to `[lo, hi]`.
pub(crate) fn trunc_normal<R: Rng + ?Sized>(rng: &mut R, mean: f64, sd: f64, lo: f64, hi: f64) -> f64 {
    let z = std_trunc_normal(rng, (lo - mean) / sd, (hi - mean) / sd);
    (mean + sd * z).clamp(lo, hi)
}

pub(crate) fn normal<R: Rng + ?Sized>(rng: &mut R, mean: f64, sd: f64) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    mean + sd * z
}

/// Gamma(shape, rate) restricted to `[lo, hi]`.
pub(crate) fn trunc_gamma<R: Rng + ?Sized>(rng: &mut R, shape: f64, rate: f64, lo: f64, hi: f64) -> f64 {
    let g = Gamma::new(shape, 1.0 / rate).expect("positive gamma parameters");
    for _ in 0..64 {
        let x: f64 = g.sample(rng);
        if (lo..=hi).contains(&x) {
            return x;
        }
    }
    let d = GammaDist::new(shape, rate).expect("positive gamma parameters");
    let (fl, fh) = (d.cdf(lo), d.cdf(hi));
    if !(fh > fl) {
        // all mass is on one side of the window
        return if d.cdf(lo) >= 0.5 { lo } else { hi };
    }
    d.inverse_cdf(fl + rng.random::<f64>() * (fh - fl)).clamp(lo, hi)
}

pub(crate) fn beta<R: Rng + ?Sized>(rng: &mut R, a: f64, b: f64) -> f64 {
    rand_distr::Beta::new(a, b).expect("positive beta parameters").sample(rng)
}

/// Index drawn with probability proportional to `weights`.
pub(crate) fn categorical<R: Rng + ?Sized>(rng: &mut R, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    let mut last = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w <= 0.0 {
            continue;
        }
        last = i;
        if u < w {
            return i;
        }
        u -= w;
    }
    last
}
