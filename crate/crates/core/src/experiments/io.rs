//! Sweep tables as CSV and trajectories as JSON.
//!
//! CSV: header row, `,` separator, `.` decimal, LF line endings, columns in
//! [`SWEEP_COLUMNS`] order. Floats use the shortest representation that reads
//! back to the same `f64`.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::sweep::{SweepRow, SWEEP_COLUMNS};
use crate::error::{Error, Result};
use crate::summary::RegionLabel;
use crate::verify::trajectory::{RunStatus, StepRecord, TrajectoryRecord};
use crate::{HyperParams, ParamState};

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

pub fn write_sweep_csv<W: Write>(out: W, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .has_headers(false)
        .from_writer(out);
    w.write_record(SWEEP_COLUMNS).map_err(csv_err)?;
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::Io(e.to_string()))
}

pub fn read_sweep_csv<R: Read>(input: R) -> Result<Vec<SweepRow>> {
    let mut rdr = csv::Reader::from_reader(input);
    let header = rdr.headers().map_err(csv_err)?.clone();
    if header.iter().ne(SWEEP_COLUMNS) {
        return Err(Error::Io(format!("unexpected sweep header: {}", header.iter().collect::<Vec<_>>().join(","))));
    }
    rdr.deserialize().map(|r| r.map_err(csv_err)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DumpMeta {
    pub phi: f64,
    pub eta: f64,
    pub d: usize,
    pub seed: u64,
    pub delta: f64,
    pub status: RunStatus,
}

/// One step of a JSON dump. Derived fields are written for readers but
/// recomputed from `(a, b)` on load; they can be `null` when they overflow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DumpStep {
    pub t: usize,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub residual: Option<f64>,
    pub scale: Option<f64>,
    #[serde(rename = "Q")]
    pub q: Vec<Option<f64>>,
    pub region: RegionLabel,
    pub loss: Option<f64>,
    pub alpha: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryDump {
    pub meta: DumpMeta,
    pub steps: Vec<DumpStep>,
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

impl TrajectoryDump {
    pub fn from_record(tr: &TrajectoryRecord) -> Self {
        let steps = tr
            .steps
            .iter()
            .map(|s| DumpStep {
                t: s.t,
                a: s.param.a().to_vec(),
                b: s.param.b().to_vec(),
                residual: finite(s.residual()),
                scale: finite(s.scale()),
                q: s.summary.imbalances().iter().map(|&q| finite(q)).collect(),
                region: s.region,
                loss: finite(s.loss),
                alpha: finite(s.alpha),
            })
            .collect();
        Self {
            meta: DumpMeta {
                phi: tr.phi(),
                eta: tr.eta(),
                d: tr.initial().param.dim(),
                seed: tr.seed,
                delta: tr.delta,
                status: tr.status,
            },
            steps,
        }
    }

    pub fn into_record(self) -> Result<TrajectoryRecord> {
        let hyper = HyperParams::new(self.meta.phi, self.meta.eta)?;
        let mut steps = Vec::with_capacity(self.steps.len());
        for (i, s) in self.steps.into_iter().enumerate() {
            if s.t != i {
                return Err(Error::Io(format!("step {i} has t = {}", s.t)));
            }
            steps.push(StepRecord::new(s.t, ParamState::new(s.a, s.b)?, hyper.phi));
        }
        if steps.is_empty() {
            return Err(Error::Io("trajectory has no steps".into()));
        }
        Ok(TrajectoryRecord { hyper, delta: self.meta.delta, seed: self.meta.seed, status: self.meta.status, steps })
    }
}

pub fn write_trajectory_json<W: Write>(out: W, tr: &TrajectoryRecord) -> Result<()> {
    let mut out = out;
    serde_json::to_writer(&mut out, &TrajectoryDump::from_record(tr)).map_err(|e| Error::Io(e.to_string()))?;
    out.write_all(b"\n").map_err(|e| Error::Io(e.to_string()))
}

pub fn read_trajectory_json<R: Read>(input: R) -> Result<TrajectoryRecord> {
    let dump: TrajectoryDump = serde_json::from_reader(input).map_err(|e| Error::Io(e.to_string()))?;
    dump.into_record()
}
