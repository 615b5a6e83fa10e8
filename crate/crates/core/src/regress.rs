//! Least-squares model from selected-term counts to an ILI score.
//!
//! The fit uses a Householder QR factorization of the column-scaled design
//! matrix `[1 | X]`, never forming `XᵀX`. A column whose component orthogonal
//! to the preceding columns is below `RANK_TOL` (relative to its own norm)
//! is reported as linearly dependent.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const RANK_TOL: f64 = 1e-10;
const FORMAT: &str = "flutrack-linear-model";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub n_samples: usize,
    pub rss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub terms: Vec<String>,
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub training: TrainingMeta,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    #[serde(flatten)]
    model: LinearModel,
}

/// Ordinary least squares with an intercept. `features` is row-major n×p.
pub fn fit_ols(terms: Vec<String>, features: &[Vec<f64>], targets: &[f64]) -> Result<LinearModel> {
    let n = features.len();
    let p = terms.len();
    if targets.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            actual: targets.len(),
        });
    }
    if let Some(row) = features.iter().find(|r| r.len() != p) {
        return Err(Error::LengthMismatch {
            expected: p,
            actual: row.len(),
        });
    }
    if n < p + 1 {
        return Err(Error::TooFewSamples { needed: p + 1, got: n });
    }

    // column 0 is the intercept
    let mut a = DMatrix::from_fn(n, p + 1, |i, j| if j == 0 { 1.0 } else { features[i][j - 1] });
    let mut scale = vec![1.0; p + 1];
    for j in 0..=p {
        let norm = a.column(j).norm();
        if norm == 0.0 {
            return Err(dependent(j));
        }
        scale[j] = norm;
        a.column_mut(j).scale_mut(1.0 / norm);
    }

    let qr = a.qr();
    let r = qr.r();
    if let Some(j) = (0..=p).find(|&j| r[(j, j)].abs() < RANK_TOL) {
        return Err(dependent(j));
    }
    let y = DVector::from_column_slice(targets);
    let qty = qr.q().transpose() * &y;
    let scaled = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::invalid("triangular solve failed"))?;
    let beta: Vec<f64> = scaled.iter().zip(&scale).map(|(b, s)| b / s).collect();

    let mut model = LinearModel {
        terms,
        coefficients: beta[1..].to_vec(),
        intercept: beta[0],
        training: TrainingMeta { n_samples: n, rss: 0.0 },
    };
    model.training.rss = rss(&model.coefficients, model.intercept, features, targets);
    Ok(model)
}

fn dependent(design_col: usize) -> Error {
    // design column 0 is the intercept; report feature indices
    match design_col {
        0 => Error::invalid("intercept column is degenerate"),
        j => Error::RankDeficient { column: j - 1 },
    }
}

pub fn rss(coefficients: &[f64], intercept: f64, features: &[Vec<f64>], targets: &[f64]) -> f64 {
    features
        .iter()
        .zip(targets)
        .map(|(x, y)| {
            let e = y - linear(coefficients, intercept, x);
            e * e
        })
        .sum()
}

fn linear(coefficients: &[f64], intercept: f64, x: &[f64]) -> f64 {
    intercept + coefficients.iter().zip(x).map(|(b, v)| b * v).sum::<f64>()
}

impl LinearModel {
    /// Raw linear response `β·x + b`, without clamping.
    pub fn response(&self, features: &[f64]) -> Result<f64> {
        if features.len() != self.coefficients.len() {
            return Err(Error::LengthMismatch {
                expected: self.coefficients.len(),
                actual: features.len(),
            });
        }
        Ok(linear(&self.coefficients, self.intercept, features))
    }

    /// Estimated score, clamped at zero.
    pub fn predict(&self, features: &[f64]) -> Result<f64> {
        Ok(self.response(features)?.max(0.0))
    }

    /// Applies the weekly-trained model to one day of counts: the day is
    /// scaled up to a week, predicted, and scaled back, so seven identical
    /// days add up to the weekly prediction.
    pub fn predict_daily(&self, day_counts: &[f64]) -> Result<f64> {
        let week: Vec<f64> = day_counts.iter().map(|c| 7.0 * c).collect();
        Ok(self.predict(&week)? / 7.0)
    }

    pub fn write_json<W: Write>(&self, w: W) -> Result<()> {
        let file = ModelFile {
            format: FORMAT.into(),
            version: VERSION,
            model: self.clone(),
        };
        serde_json::to_writer_pretty(w, &file)?;
        Ok(())
    }

    pub fn read_json<R: Read>(r: R) -> Result<Self> {
        let file: ModelFile = serde_json::from_reader(r)?;
        if file.format != FORMAT || file.version != VERSION {
            return Err(Error::invalid(format!(
                "unsupported model file {} v{}",
                file.format, file.version
            )));
        }
        let m = file.model;
        if m.terms.len() != m.coefficients.len() {
            return Err(Error::LengthMismatch {
                expected: m.terms.len(),
                actual: m.coefficients.len(),
            });
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(f);
        self.write_json(&mut w)?;
        writeln!(w).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        LinearModel::read_json(std::io::BufReader::new(f))
    }
}

/// Weekly feature table: header `week,<term>,...`, one row per week.
pub fn write_feature_table<W: Write>(terms: &[String], rows: &[Vec<f64>], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["week".to_string()];
    header.extend(terms.iter().cloned());
    out.write_record(&header)?;
    for (i, row) in rows.iter().enumerate() {
        let mut rec = vec![i.to_string()];
        rec.extend(row.iter().map(|v| format!("{v}")));
        out.write_record(&rec)?;
    }
    out.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

pub fn read_feature_table<R: Read>(r: R) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut rdr = csv::Reader::from_reader(r);
    let header = rdr.headers()?.clone();
    if header.get(0).map(str::trim) != Some("week") || header.len() < 2 {
        return Err(Error::invalid("feature table must start with `week` and name at least one term"));
    }
    let terms: Vec<String> = header.iter().skip(1).map(str::to_owned).collect();
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let week: usize = crate::series::parse_field(&rec, 0, i)?;
        if week != i {
            return Err(Error::invalid(format!("row {}: expected week {i}, found {week}", i + 1)));
        }
        let row = (1..=terms.len())
            .map(|j| crate::series::parse_field(&rec, j, i))
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok((terms, rows))
}
