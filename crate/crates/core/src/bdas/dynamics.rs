//! Boundary-width trajectories of training runs.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bdas::train::LogEntry;
use crate::error::{Error, Result};
use crate::intervene::{masks_from_boundaries, snap_masks};
use crate::io::write_atomic;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlignmentClass {
    Aligned,
    Unaligned,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DynamicsPoint {
    pub step: usize,
    /// Total continuous width over `d / 2`.
    pub normalized_width: f64,
    /// Total snapped width over `d / 2`.
    pub snapped_width: f64,
    pub eval_iia: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryDynamics {
    pub series: Vec<DynamicsPoint>,
    pub class: AlignmentClass,
    /// Coordinates selected by the snapped masks at the last entry.
    pub final_snapped: usize,
    pub peak_iia: f64,
}

/// Number of coordinates the snapped masks of `widths` select at `beta`.
pub fn snapped_width(widths: &[f64], d: usize, beta: f64) -> usize {
    let mut b = Vec::with_capacity(widths.len() + 1);
    b.push(0.0);
    for w in widths {
        b.push((b[b.len() - 1] + w).min(d as f64));
    }
    snap_masks(&masks_from_boundaries(&b, d, beta)).total_width()
}

/// Normalises widths by `d / 2` and classifies the run: unaligned iff the
/// final snapped width is below one coordinate.
pub fn boundary_dynamics(log: &[LogEntry], d: usize) -> Result<BoundaryDynamics> {
    let last = log.last().ok_or_else(|| Error::Evaluation("empty training log".into()))?;
    let half = d as f64 / 2.0;
    let series = log
        .iter()
        .map(|e| DynamicsPoint {
            step: e.step,
            normalized_width: e.widths.iter().sum::<f64>() / half,
            snapped_width: snapped_width(&e.widths, d, e.beta) as f64 / half,
            eval_iia: e.eval_iia,
        })
        .collect();
    let final_snapped = snapped_width(&last.widths, d, last.beta);
    Ok(BoundaryDynamics {
        series,
        class: if final_snapped < 1 { AlignmentClass::Unaligned } else { AlignmentClass::Aligned },
        final_snapped,
        peak_iia: log.iter().map(|e| e.eval_iia).fold(f64::NEG_INFINITY, f64::max),
    })
}

/// Training log CSV: step, beta, eval_iia, width_slot_0..k, loss.
pub fn log_to_csv(log: &[LogEntry]) -> Result<Vec<u8>> {
    let k = log.first().map_or(0, |e| e.widths.len());
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["step".to_string(), "beta".into(), "eval_iia".into()];
    header.extend((0..k).map(|j| format!("width_slot_{j}")));
    header.push("loss".into());
    w.write_record(&header)?;
    for e in log {
        let mut rec = vec![e.step.to_string(), format!("{:.6e}", e.beta), format!("{:.6}", e.eval_iia)];
        rec.extend(e.widths.iter().map(|v| format!("{v:.6}")));
        rec.push(format!("{:.6e}", e.loss));
        w.write_record(&rec)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

pub fn write_log_csv(path: &Path, log: &[LogEntry]) -> Result<()> {
    write_atomic(path, &log_to_csv(log)?)
}
