//! Summary statistics over heatmaps.

use std::path::Path;

use crate::bdas::IIAHeatmap;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub experiment: String,
    /// NaN when the heatmap has no sidecar.
    pub task_acc: f64,
    pub iia_max: f64,
    /// Pearson correlation with the reference; `None` without a
    /// reference or when either side is constant.
    pub correlation: Option<f64>,
    /// Population variance of the cells, times 100.
    pub variance_x100: f64,
}

fn values(h: &IIAHeatmap) -> Vec<f64> {
    h.cells.iter().filter_map(|c| c.iia).collect()
}

fn is_constant(x: &[f64]) -> bool {
    x.windows(2).all(|w| w[0] == w[1])
}

/// Pearson correlation; `None` for mismatched lengths, fewer than two
/// points, or a constant series.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 || is_constant(x) || is_constant(y) {
        return None;
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    // sqrt(v · v) is exactly v, so a series against itself gives 1
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

pub fn population_variance(x: &[f64]) -> f64 {
    // the rounded mean of equal values can differ from them by an ulp
    if is_constant(x) {
        return 0.0;
    }
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n
}

/// Cell values of `h` and `r` paired by (layer, position); the two grids
/// must cover the same sites.
fn paired(h: &IIAHeatmap, r: &IIAHeatmap) -> Result<(Vec<f64>, Vec<f64>)> {
    let key = |m: &IIAHeatmap| m.cells.iter().map(|c| (c.layer, c.position)).collect::<Vec<_>>();
    if key(h) != key(r) {
        return Err(Error::Report(format!(
            "heatmap `{}` ({} cells) and the reference `{}` ({} cells) cover different sites",
            h.hypothesis,
            h.cells.len(),
            r.hypothesis,
            r.cells.len()
        )));
    }
    Ok(h.cells.iter().zip(&r.cells).filter_map(|(a, b)| Some((a.iia?, b.iia?))).unzip())
}

pub fn summarize(experiment: &str, h: &IIAHeatmap, reference: Option<&IIAHeatmap>) -> Result<SummaryRow> {
    let v = values(h);
    if v.is_empty() {
        return Err(Error::Report(format!("heatmap `{experiment}` has no cells with a value")));
    }
    let correlation = match reference {
        Some(r) => {
            let (a, b) = paired(h, r)?;
            pearson(&a, &b)
        }
        None => None,
    };
    Ok(SummaryRow {
        experiment: experiment.to_string(),
        task_acc: h.task_acc,
        iia_max: v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        correlation,
        variance_x100: 100.0 * population_variance(&v),
    })
}

/// Experiment name of a heatmap file: its stem, or its directory's name
/// when the stem is the default `heatmap`.
pub fn experiment_name(path: &Path) -> String {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    if stem == "heatmap" {
        if let Some(dir) = path.parent().and_then(Path::file_name) {
            return dir.to_string_lossy().into_owned();
        }
    }
    if stem.is_empty() {
        path.display().to_string()
    } else {
        stem
    }
}

/// Summarises each heatmap CSV, named by [`experiment_name`].
pub fn report(paths: &[impl AsRef<Path>], reference: Option<&Path>) -> Result<Vec<SummaryRow>> {
    let reference = reference.map(IIAHeatmap::load_csv).transpose()?;
    paths
        .iter()
        .map(|p| {
            let p = p.as_ref();
            let h = IIAHeatmap::load_csv(p)?;
            summarize(&experiment_name(p), &h, reference.as_ref())
        })
        .collect()
}

fn fields(r: &SummaryRow) -> [String; 5] {
    let opt = |v: f64| if v.is_nan() { "NA".to_string() } else { format!("{v:.2}") };
    [
        r.experiment.clone(),
        opt(r.task_acc),
        format!("{:.2}", r.iia_max),
        r.correlation.map_or_else(|| "NA".to_string(), |c| format!("{c:.2}")),
        format!("{:.2}", r.variance_x100),
    ]
}

const HEADER: [&str; 5] = ["experiment", "task_acc", "iia_max", "correlation", "variance_x100"];

pub fn summary_csv(rows: &[SummaryRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(HEADER)?;
    for r in rows {
        w.write_record(fields(r))?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

/// Column-aligned text table; names left-aligned, numbers right-aligned.
pub fn summary_text(rows: &[SummaryRow]) -> String {
    let cells: Vec<[String; 5]> = rows.iter().map(fields).collect();
    let width: Vec<usize> =
        (0..5).map(|i| cells.iter().map(|c| c[i].len()).chain([HEADER[i].len()]).max().unwrap_or(0)).collect();
    let line = |row: [&str; 5]| {
        let mut s = format!("{:<w$}", row[0], w = width[0]);
        for i in 1..5 {
            s.push_str(&format!("  {:>w$}", row[i], w = width[i]));
        }
        s.push('\n');
        s
    };
    let mut out = line(HEADER);
    for c in &cells {
        out.push_str(&line([&c[0], &c[1], &c[2], &c[3], &c[4]]));
    }
    out
}
