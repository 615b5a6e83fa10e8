use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::gibbs::{FitResult, SamplerConfig};
use super::model::{Phase, N_PHASES};
use crate::error::{Error, Result};

const FORMAT: &str = "flutrack-fit";
const VERSION: u32 = 1;

/// On-disk form of a fit: everything except the raw draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub format: String,
    pub version: u32,
    pub weeks: usize,
    pub phases: Vec<String>,
    pub phase_probs: Vec<[f64; N_PHASES]>,
    pub map_phase: Vec<usize>,
    pub psrf: Vec<PsrfEntry>,
    pub converged: bool,
    pub total_iterations: usize,
    pub config: SamplerConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsrfEntry {
    pub parameter: String,
    /// `None` when the diagnostic could not be computed.
    pub psrf: Option<f64>,
}

impl From<&FitResult> for FitReport {
    fn from(fit: &FitResult) -> Self {
        FitReport {
            format: FORMAT.into(),
            version: VERSION,
            weeks: fit.weeks(),
            phases: Phase::ALL.iter().map(|p| p.name().to_string()).collect(),
            phase_probs: fit.phase_probs.clone(),
            map_phase: fit.map_phases(),
            psrf: Phase::ALL
                .iter()
                .zip(fit.psrf)
                .map(|(p, r)| PsrfEntry {
                    parameter: format!("mean[{}]", p.name()),
                    psrf: r.is_finite().then_some(r),
                })
                .collect(),
            converged: fit.converged,
            total_iterations: fit.total_iterations,
            config: fit.config,
        }
    }
}

impl FitReport {
    pub fn write_json<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer_pretty(w, self)?;
        Ok(())
    }

    pub fn read_json<R: Read>(r: R) -> Result<Self> {
        let rep: FitReport = serde_json::from_reader(r)?;
        if rep.format != FORMAT || rep.version != VERSION {
            return Err(Error::invalid(format!("unsupported fit file {} v{}", rep.format, rep.version)));
        }
        if rep.phase_probs.len() != rep.weeks {
            return Err(Error::LengthMismatch {
                expected: rep.weeks,
                actual: rep.phase_probs.len(),
            });
        }
        Ok(rep)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(f);
        self.write_json(&mut w)?;
        writeln!(w).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        FitReport::read_json(std::io::BufReader::new(f))
    }
}
