use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const N_PHASES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(u8)]
pub enum Phase {
    PreEpidemic = 0,
    Growth = 1,
    Plateau = 2,
    Decline = 3,
    PostEpidemic = 4,
}

impl Phase {
    pub const ALL: [Phase; N_PHASES] = [
        Phase::PreEpidemic,
        Phase::Growth,
        Phase::Plateau,
        Phase::Decline,
        Phase::PostEpidemic,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Phase> {
        Phase::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Phase::PreEpidemic => "pre-epidemic",
            Phase::Growth => "epidemic growth",
            Phase::Plateau => "epidemic plateau",
            Phase::Decline => "epidemic decline",
            Phase::PostEpidemic => "post-epidemic",
        }
    }
}

/// True iff `mu` rises to the plateau and falls after it.
pub fn is_ordered(mu: &[f64; N_PHASES]) -> bool {
    mu[0] <= mu[1] && mu[1] <= mu[2] && mu[2] >= mu[3] && mu[3] >= mu[4]
}

/// Emission and transition parameters of the five-phase chain.
///
/// The season always starts in the pre-epidemic phase. From phase `i < 4`
/// the chain advances to `i + 1` with probability `advance[i]` and stays
/// otherwise; the post-epidemic phase is absorbing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseModel {
    pub mu: [f64; N_PHASES],
    pub sigma: [f64; N_PHASES],
    pub advance: [f64; N_PHASES - 1],
}

impl PhaseModel {
    pub fn new(mu: [f64; 5], sigma: [f64; 5], advance: [f64; 4]) -> Result<Self> {
        let m = PhaseModel { mu, sigma, advance };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.mu.iter().all(|m| m.is_finite()) || !is_ordered(&self.mu) {
            return Err(Error::invalid(format!("phase means {:?} violate the plateau ordering", self.mu)));
        }
        if !self.sigma.iter().all(|s| s.is_finite() && *s > 0.0) {
            return Err(Error::invalid(format!("phase sds {:?} must be positive", self.sigma)));
        }
        if !self.advance.iter().all(|p| *p > 0.0 && *p < 1.0) {
            return Err(Error::invalid(format!(
                "advance probabilities {:?} must lie strictly in (0, 1)",
                self.advance
            )));
        }
        Ok(())
    }

    /// `P(phase_{t+1} = to | phase_t = from)`.
    pub fn transition(&self, from: usize, to: usize) -> f64 {
        match (from, to) {
            (4, 4) => 1.0,
            (i, j) if i == j => 1.0 - self.advance[i],
            (i, j) if j == i + 1 => self.advance[i],
            _ => 0.0,
        }
    }

    pub fn log_transition(&self) -> [[f64; N_PHASES]; N_PHASES] {
        let mut lt = [[f64::NEG_INFINITY; N_PHASES]; N_PHASES];
        for (i, row) in lt.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                let p = self.transition(i, j);
                if p > 0.0 {
                    *v = p.ln();
                }
            }
        }
        lt
    }

    /// Gaussian log-density of `y` under each phase.
    pub fn log_emissions(&self, y: f64) -> [f64; N_PHASES] {
        const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;
        let mut out = [0.0; N_PHASES];
        for k in 0..N_PHASES {
            let z = (y - self.mu[k]) / self.sigma[k];
            out[k] = -HALF_LN_2PI - self.sigma[k].ln() - 0.5 * z * z;
        }
        out
    }
}
