//! Reduction of the one-dimensional regression loss
//! `L̄(a, b) = (1/2n) Σ (aᵀb·xᵢ − yᵢ)²` to the product loss.
//!
//! With `c = Σxᵢyᵢ / Σxᵢ²`,
//! `L̄(a, b) = (Σxᵢ²/n)·½(aᵀb − c)² + (1/2n)(Σyᵢ² − (Σxᵢyᵢ)²/Σxᵢ²)`.

use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::{HyperParams, HyperParamsF64, ParamState, ParamStateF64};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    samples: Vec<(f64, f64)>,
}

impl Dataset {
    pub fn new(samples: Vec<(f64, f64)>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidState("dataset needs at least one sample".into()));
        }
        if samples.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(Error::InvalidState("dataset has non-finite entries".into()));
        }
        Ok(Self { samples })
    }

    /// Two-column `x,y` CSV. A header row is skipped if its first field is not numeric.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(reader);
        let mut samples = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::Io(e.to_string()))?;
            if rec.len() != 2 {
                return Err(Error::Io(format!("row {}: expected 2 columns, got {}", line + 1, rec.len())));
            }
            let parse = |s: &str| s.parse::<f64>();
            match (parse(&rec[0]), parse(&rec[1])) {
                (Ok(x), Ok(y)) => samples.push((x, y)),
                _ if line == 0 => continue,
                _ => return Err(Error::Io(format!("row {}: not numeric", line + 1))),
            }
        }
        Self::new(samples)
    }

    pub fn samples(&self) -> &[(f64, f64)] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// `L̄(a, b) = (1/2n) Σ (aᵀb·xᵢ − yᵢ)²`.
    pub fn full_loss(&self, state: &ParamStateF64) -> f64 {
        let m = state.product();
        let n = self.samples.len() as f64;
        self.samples.iter().map(|(x, y)| (m * x - y).powi(2)).sum::<f64>() / (2.0 * n)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReductionResult {
    /// `c = Σxᵢyᵢ / Σxᵢ²`; may be negative.
    pub phi: f64,
    /// `(1/n) Σxᵢ²`.
    pub scale_factor: f64,
    pub constant: f64,
    /// `c < 0`: train against `Φ = |c|` with `a → −a`.
    pub sign_flipped: bool,
}

impl ReductionResult {
    /// Target for the product loss, `|c|`.
    pub fn target(&self) -> f64 {
        self.phi.abs()
    }

    /// Hyperparameters for the product loss that reproduce GD on `L̄` with step `eta`.
    pub fn reduced_hyper(&self, eta: f64) -> Result<HyperParamsF64> {
        HyperParams::new(self.target(), self.scale_factor * eta)
    }

    /// Maps a state of `L̄` to the product-loss state (flips `a` when `c < 0`).
    /// The map is its own inverse.
    pub fn map_state(&self, state: &ParamStateF64) -> ParamStateF64 {
        if !self.sign_flipped {
            return state.clone();
        }
        let a = state.a().iter().map(|x| -x).collect();
        ParamState::new(a, state.b().to_vec()).expect("negation keeps the state valid")
    }
}

pub fn reduce_dataset(ds: &Dataset) -> Result<ReductionResult> {
    let n = ds.len() as f64;
    let (sxx, sxy, syy) = ds
        .samples()
        .iter()
        .fold((0.0, 0.0, 0.0), |(xx, xy, yy), (x, y)| (xx + x * x, xy + x * y, yy + y * y));
    if sxx == 0.0 {
        return Err(Error::DegenerateDesign);
    }
    let c = sxy / sxx;
    // Cauchy–Schwarz makes this non-negative; clamp the rounding.
    let constant = ((syy - sxy * c) / (2.0 * n)).max(0.0);
    Ok(ReductionResult { phi: c, scale_factor: sxx / n, constant, sign_flipped: c < 0.0 })
}
