//! Layer × position sweeps and the IIA heatmap.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bdas::config::TrainConfig;
use crate::bdas::train::{train_alignment, TrainOutcome};
use crate::causal::CausalModel;
use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::target::{ActivationSite, Network, TaskInstance};

const TASK_SAMPLE: usize = 2000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapCell {
    pub layer: usize,
    pub position: usize,
    /// Max over seeds of test IIA; `None` when every run of the cell failed.
    pub iia: Option<f64>,
    pub best_seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IIAHeatmap {
    pub hypothesis: String,
    /// Cells ordered by (layer, position).
    pub cells: Vec<HeatmapCell>,
    pub task_acc: f64,
    /// Dummy-classifier accuracy on the counterfactual test labels.
    pub base_rate: f64,
    pub control: (usize, usize),
}

impl IIAHeatmap {
    pub fn cell(&self, layer: usize, position: usize) -> Option<&HeatmapCell> {
        self.cells.iter().find(|c| c.layer == layer && c.position == position)
    }

    /// Highest cell; ties go to the first in (layer, position) order.
    pub fn max_cell(&self) -> Option<&HeatmapCell> {
        self.cells.iter().filter(|c| c.iia.is_some()).fold(None, |best: Option<&HeatmapCell>, c| match best {
            Some(b) if b.iia >= c.iia => Some(b),
            _ => Some(c),
        })
    }

    pub fn missing(&self) -> usize {
        self.cells.iter().filter(|c| c.iia.is_none()).count()
    }

    /// `clamp((iia − base_rate) / (task_acc − base_rate), 0, 1)`; `None`
    /// when the net does no better than the dummy classifier.
    pub fn scaled(&self, iia: f64) -> Option<f64> {
        let span = self.task_acc - self.base_rate;
        (span > 0.0).then(|| ((iia - self.base_rate) / span).clamp(0.0, 1.0))
    }

    /// Heatmap CSV: hypothesis, layer, position, iia, iia_scaled, best_seed.
    /// Missing cells have empty value fields.
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["hypothesis", "layer", "position", "iia", "iia_scaled", "best_seed"])?;
        for c in &self.cells {
            let iia = c.iia.map(|v| format!("{v:.6}")).unwrap_or_default();
            let scaled = c.iia.and_then(|v| self.scaled(v)).map(|v| format!("{v:.6}")).unwrap_or_default();
            let seed = c.best_seed.map(|s| s.to_string()).unwrap_or_default();
            w.write_record([&self.hypothesis, &c.layer.to_string(), &c.position.to_string(), &iia, &scaled, &seed])?;
        }
        w.into_inner().map_err(|e| Error::Io(e.into_error()))
    }

    /// Writes `<stem>.csv` and a `<stem>.json` sidecar carrying the
    /// task accuracy, base rate, and control site.
    pub fn save(&self, stem: &Path) -> Result<()> {
        write_atomic(&stem.with_extension("csv"), &self.to_csv()?)?;
        write_atomic(&stem.with_extension("json"), serde_json::to_string_pretty(self)?.as_bytes())
    }

    /// Reads a heatmap CSV; task accuracy, base rate and control site
    /// come from the sidecar when present and are NaN / (0, 0) otherwise.
    pub fn load_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        if header != ["hypothesis", "layer", "position", "iia", "iia_scaled", "best_seed"] {
            return Err(Error::Report(format!("{}: unexpected heatmap header {header:?}", path.display())));
        }
        let mut hypothesis = String::new();
        let mut cells = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            let bad = |what: &str| Error::Report(format!("{}: line {}: bad {what}", path.display(), i + 2));
            hypothesis = rec[0].to_string();
            let layer = rec[1].parse().map_err(|_| bad("layer"))?;
            let position = rec[2].parse().map_err(|_| bad("position"))?;
            let iia = match &rec[3] {
                "" => None,
                s => Some(s.parse::<f64>().ok().filter(|v| (0.0..=1.0).contains(v)).ok_or_else(|| bad("iia"))?),
            };
            let best_seed = match &rec[5] {
                "" => None,
                s => Some(s.parse().map_err(|_| bad("best_seed"))?),
            };
            cells.push(HeatmapCell { layer, position, iia, best_seed });
        }
        let sidecar = path.with_extension("json");
        let (task_acc, base_rate, control) = if sidecar.exists() {
            let h: IIAHeatmap = serde_json::from_str(&std::fs::read_to_string(&sidecar)?)?;
            (h.task_acc, h.base_rate, h.control)
        } else {
            (f64::NAN, f64::NAN, (0, 0))
        };
        Ok(Self { hypothesis, cells, task_acc, base_rate, control })
    }
}

/// One (site, seed) training run of a sweep.
#[derive(Debug)]
pub struct SweepRun {
    pub site: ActivationSite,
    pub seed: u64,
    pub outcome: Result<TrainOutcome>,
}

#[derive(Debug)]
pub struct SweepResult {
    pub heatmap: IIAHeatmap,
    pub runs: Vec<SweepRun>,
}

/// Trains every (site, seed) pair independently, `jobs` at a time, and
/// reduces each site to its best seed. The control site is always
/// included. Failed runs are kept in `runs`; a cell with no successful
/// run is marked missing.
pub fn sweep(
    net: &Network,
    sites: &[ActivationSite],
    model: &CausalModel,
    cfg: &TrainConfig,
    seeds: &[u64],
    jobs: usize,
) -> Result<SweepResult> {
    if sites.is_empty() {
        return Err(Error::Config("a sweep needs at least one site".into()));
    }
    if seeds.is_empty() {
        return Err(Error::Config("a sweep needs at least one seed".into()));
    }
    cfg.validate()?;
    for s in sites {
        net.check_site(s)?;
    }
    let control = net.control_site();
    let mut sites: Vec<ActivationSite> = sites.to_vec();
    sites.push(control);
    sites.sort_by_key(|s| (s.layer, s.position));
    sites.dedup();

    let tasks: Vec<(ActivationSite, u64)> =
        sites.iter().flat_map(|&s| seeds.iter().map(move |&seed| (s, seed))).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let runs: Vec<SweepRun> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(site, seed)| SweepRun { site, seed, outcome: train_alignment(net, &site, model, cfg, seed) })
            .collect()
    });

    let mut base_rate = 0.5;
    let cells = sites
        .iter()
        .map(|s| {
            let mut cell = HeatmapCell { layer: s.layer, position: s.position, iia: None, best_seed: None };
            for run in runs.iter().filter(|r| r.site == *s) {
                if let Ok(o) = &run.outcome {
                    base_rate = o.test_base_rate;
                    if cell.iia.is_none_or(|v| o.test_iia > v) {
                        cell.iia = Some(o.test_iia);
                        cell.best_seed = Some(run.seed);
                    }
                }
            }
            cell
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.test_seed);
    let sample: Vec<TaskInstance> = (0..TASK_SAMPLE).map(|_| TaskInstance::sample(&mut rng)).collect();
    let heatmap = IIAHeatmap {
        hypothesis: model.name().to_string(),
        cells,
        task_acc: net.task_accuracy(&sample)?,
        base_rate,
        control: (control.layer, control.position),
    };
    Ok(SweepResult { heatmap, runs })
}
