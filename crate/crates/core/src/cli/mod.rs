//! Command-line front end: configuration, commands, artifacts, reports.
//!
//! Every command reads one JSON [`RunConfig`], validates it completely
//! before touching the output directory, writes its artifacts atomically,
//! and finishes with a `manifest.json` holding the config hash and seeds.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 invalid configuration,
//! 3 training divergence.

mod config;
mod report;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use sha2::{Digest, Sha256};

pub use config::{load_config, parse_seeds, ConfigError, DataKind, DataSpec, NetSpec, RunConfig, SiteList, SiteRef, OUT_ENV};
pub use report::{experiment_name, pearson, population_variance, report, summarize, summary_csv, summary_text, SummaryRow};

use crate::bdas::{
    eval_iia, gen_counterfactual_dataset_with, log_to_csv, sweep, train_alignment, HeatmapCell, IIAHeatmap,
};
use crate::error::{Error, Result};
use crate::intervene::AlignmentState;
use crate::io::write_atomic;
use crate::target::{task_csv_bytes, ActivationSite, Network, TaskInstance};

#[derive(Debug, Parser)]
#[command(name = "bdas", version, about = "Boundless distributed alignment search")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// JSON run configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; overrides the config and BDAS_OUT.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Seeds, e.g. `0,1,2` or `0-4`; overrides the config.
    #[arg(long)]
    pub seeds: Option<String>,
    /// Parallel training runs.
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Train an alignment at one site, once per seed.
    Train(CommonArgs),
    /// Train alignments over sites × seeds and write the IIA heatmap.
    Sweep(CommonArgs),
    /// Evaluate a saved alignment on a fresh test set.
    Eval(CommonArgs),
    /// Summarise heatmaps: IIA max, correlation, variance.
    Report(CommonArgs),
    /// Write task or counterfactual datasets as CSV.
    GenData(CommonArgs),
    /// Build and save a planted network.
    BuildPlanted(CommonArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Train(_) => "train",
            Command::Sweep(_) => "sweep",
            Command::Eval(_) => "eval",
            Command::Report(_) => "report",
            Command::GenData(_) => "gen-data",
            Command::BuildPlanted(_) => "build-planted",
        }
    }

    pub fn args(&self) -> &CommonArgs {
        match self {
            Command::Train(a)
            | Command::Sweep(a)
            | Command::Eval(a)
            | Command::Report(a)
            | Command::GenData(a)
            | Command::BuildPlanted(a) => a,
        }
    }
}

#[derive(Debug)]
pub enum CliError {
    Config(ConfigError),
    Run(Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Run(Error::Config(_)) => 2,
            CliError::Run(Error::Divergence(_)) => 3,
            CliError::Run(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(e) => write!(f, "invalid config: {e}"),
            CliError::Run(Error::Config(m)) => write!(f, "invalid config: {m}"),
            CliError::Run(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Run(e)
    }
}

/// What a finished command reports back.
#[derive(Debug, Clone, PartialEq)]
pub struct Finished {
    pub out: PathBuf,
    pub artifacts: Vec<String>,
    /// Human-readable result, printed by the binary.
    pub message: String,
    /// Some runs diverged; artifacts of the others were written.
    pub diverged: bool,
}

impl Finished {
    pub fn exit_code(&self) -> i32 {
        if self.diverged {
            3
        } else {
            0
        }
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    config_sha256: String,
    seeds: Vec<u64>,
    version: &'static str,
    artifacts: Vec<String>,
    config: &'a RunConfig,
}

/// SHA-256 of the resolved config with the output directory removed.
pub fn config_hash(cfg: &RunConfig) -> Result<String> {
    let mut c = cfg.clone();
    c.out = None;
    Ok(hex::encode(Sha256::digest(serde_json::to_vec(&c)?)))
}

/// Collects files in memory so that nothing is written until every
/// fallible step has succeeded.
struct Artifacts {
    files: Vec<(String, Vec<u8>)>,
}

impl Artifacts {
    fn new() -> Self {
        Self { files: Vec::new() }
    }

    fn add(&mut self, name: impl Into<String>, bytes: Vec<u8>) {
        self.files.push((name.into(), bytes));
    }

    fn json<T: Serialize>(&mut self, name: impl Into<String>, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.add(name, text.into_bytes());
        Ok(())
    }

    fn state(&mut self, stem: &str, state: &AlignmentState) -> Result<()> {
        let (bin, json) = state.encode()?;
        self.add(format!("{stem}.bin"), bin);
        self.add(format!("{stem}.json"), json);
        Ok(())
    }

    fn network(&mut self, stem: &str, net: &Network) -> Result<()> {
        let (bin, json) = net.encode()?;
        self.add(format!("{stem}.bin"), bin);
        self.add(format!("{stem}.json"), json);
        Ok(())
    }

    fn commit(mut self, out: &Path, command: &str, cfg: &RunConfig) -> Result<Vec<String>> {
        let mut names: Vec<String> = self.files.iter().map(|(n, _)| n.clone()).collect();
        names.sort();
        let manifest = Manifest {
            command,
            config_sha256: config_hash(cfg)?,
            seeds: cfg.seeds(),
            version: env!("CARGO_PKG_VERSION"),
            artifacts: names.clone(),
            config: cfg,
        };
        self.json("manifest.json", &manifest)?;
        for (name, bytes) in &self.files {
            write_atomic(&out.join(name), bytes)?;
        }
        names.push("manifest.json".into());
        Ok(names)
    }
}

fn single_site(cfg: &RunConfig, net: &Network, command: &str) -> Result<ActivationSite> {
    let sites = cfg.sites(net, command)?;
    match sites.as_slice() {
        [s] => Ok(*s),
        _ => Err(Error::Config(format!("sites: `{command}` takes exactly one site, got {}", sites.len()))),
    }
}

/// Loads the config, applies flag overrides, and validates.
pub fn prepare(args: &CommonArgs) -> std::result::Result<RunConfig, CliError> {
    let mut cfg = load_config(&args.config).map_err(CliError::Config)?;
    if let Some(s) = &args.seeds {
        cfg.seeds = Some(parse_seeds(s)?);
    }
    if let Some(j) = args.jobs {
        if j == 0 {
            return Err(Error::Config("jobs must be positive".into()).into());
        }
        cfg.jobs = Some(j);
    }
    Ok(cfg)
}

pub fn run(command: &Command) -> std::result::Result<Finished, CliError> {
    let args = command.args();
    let cfg = prepare(args)?;
    let out = cfg.out_dir(args.out.as_deref())?;
    let name = command.name();
    let (files, message, diverged) = match command {
        Command::Train(_) => cmd_train(&cfg)?,
        Command::Sweep(_) => cmd_sweep(&cfg)?,
        Command::Eval(_) => cmd_eval(&cfg)?,
        Command::Report(_) => cmd_report(&cfg)?,
        Command::GenData(_) => cmd_gen_data(&cfg)?,
        Command::BuildPlanted(_) => cmd_build_planted(&cfg)?,
    };
    let artifacts = files.commit(&out, name, &cfg)?;
    Ok(Finished { out, artifacts, message, diverged })
}

type Outcome = (Artifacts, String, bool);

fn cmd_train(cfg: &RunConfig) -> Result<Outcome> {
    let model = cfg.model("train")?;
    let net = cfg.network("train")?;
    let site = single_site(cfg, &net, "train")?;
    let seeds = cfg.seeds();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs.unwrap_or(1))
        .build()
        .map_err(|e| Error::Config(format!("jobs: {e}")))?;
    let runs: Vec<_> = pool.install(|| {
        use rayon::prelude::*;
        seeds.par_iter().map(|&s| train_alignment(&net, &site, &model, &cfg.train, s)).collect()
    });
    let runs: Vec<_> = runs.into_iter().collect::<Result<_>>()?;

    let mut files = Artifacts::new();
    let mut best = 0;
    for (i, (run, seed)) in runs.iter().zip(&seeds).enumerate() {
        files.add(format!("log_seed{seed}.csv"), log_to_csv(&run.log)?);
        if run.test_iia > runs[best].test_iia {
            best = i;
        }
    }
    files.state("alignment", &runs[best].state)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.train.test_seed);
    let sample: Vec<TaskInstance> = (0..2000).map(|_| TaskInstance::sample(&mut rng)).collect();
    let heatmap = IIAHeatmap {
        hypothesis: model.name().to_string(),
        cells: vec![HeatmapCell {
            layer: site.layer,
            position: site.position,
            iia: Some(runs[best].test_iia),
            best_seed: Some(seeds[best]),
        }],
        task_acc: net.task_accuracy(&sample)?,
        base_rate: runs[best].test_base_rate,
        control: {
            let c = net.control_site();
            (c.layer, c.position)
        },
    };
    files.add("heatmap.csv", heatmap.to_csv()?);
    files.json("heatmap.json", &heatmap)?;
    let message = format!("{} at {site}: test IIA {:.4} (seed {})", model.name(), runs[best].test_iia, seeds[best]);
    Ok((files, message, false))
}

fn cmd_sweep(cfg: &RunConfig) -> Result<Outcome> {
    let model = cfg.model("sweep")?;
    let net = cfg.network("sweep")?;
    let sites = cfg.sites(&net, "sweep")?;
    let seeds = cfg.seeds();
    let result = sweep(&net, &sites, &model, &cfg.train, &seeds, cfg.jobs.unwrap_or(1))?;
    let mut files = Artifacts::new();
    let mut diverged = false;
    let mut failures = Vec::new();
    for run in &result.runs {
        let tag = format!("{}_seed{}", run.site, run.seed);
        match &run.outcome {
            Ok(o) => {
                files.add(format!("logs/{tag}.csv"), log_to_csv(&o.log)?);
                let cell = result.heatmap.cell(run.site.layer, run.site.position);
                if cell.and_then(|c| c.best_seed) == Some(run.seed) {
                    files.state(&format!("alignments/{}", run.site), &o.state)?;
                }
            }
            Err(e) => {
                diverged |= matches!(e, Error::Divergence(_));
                failures.push(format!("{tag}: {e}"));
            }
        }
    }
    let h = &result.heatmap;
    files.add("heatmap.csv", h.to_csv()?);
    files.json("heatmap.json", h)?;
    let mut message = match h.max_cell() {
        Some(c) => format!(
            "{}: {} cells, max IIA {:.4} at L{}P{} (seed {}), {} missing",
            h.hypothesis,
            h.cells.len(),
            c.iia.unwrap_or(f64::NAN),
            c.layer,
            c.position,
            c.best_seed.unwrap_or(0),
            h.missing()
        ),
        None => format!("{}: every cell failed", h.hypothesis),
    };
    for f in failures {
        message.push_str(&format!("\nfailed run {f}"));
    }
    Ok((files, message, diverged))
}

#[derive(Serialize)]
struct EvalRecord<'a> {
    hypothesis: &'a str,
    layer: usize,
    position: usize,
    iia: f64,
    test_size: usize,
    test_seed: u64,
}

fn cmd_eval(cfg: &RunConfig) -> Result<Outcome> {
    let model = cfg.model("eval")?;
    let path = cfg.require(&cfg.alignment, "alignment", "eval")?;
    let net = cfg.network("eval")?;
    let site = single_site(cfg, &net, "eval")?;
    let state = AlignmentState::load(path)?;
    let slots = model.alignable();
    if state.slots != slots {
        return Err(Error::Config(format!("alignment slots {:?} do not match the hypothesis {slots:?}", state.slots)));
    }
    if state.width() != site.width {
        return Err(Error::Config(format!("alignment width {} does not match the site width {}", state.width(), site.width)));
    }
    let test = gen_counterfactual_dataset_with(&model, cfg.train.test_size, cfg.train.test_seed, cfg.train.sampling)?;
    let iia = eval_iia(&net, &site, &state, &test)?;
    let mut files = Artifacts::new();
    files.json(
        "eval.json",
        &EvalRecord {
            hypothesis: model.name(),
            layer: site.layer,
            position: site.position,
            iia,
            test_size: test.len(),
            test_seed: cfg.train.test_seed,
        },
    )?;
    Ok((files, format!("{} at {site}: IIA {iia:.4} on {} examples", model.name(), test.len()), false))
}

fn cmd_report(cfg: &RunConfig) -> Result<Outcome> {
    let heatmaps = cfg.require(&cfg.heatmaps, "heatmaps", "report")?;
    if heatmaps.is_empty() {
        return Err(Error::Config("heatmaps must not be empty".into()));
    }
    let rows = report(heatmaps, cfg.reference.as_deref())?;
    let text = summary_text(&rows);
    let mut files = Artifacts::new();
    files.add("summary.csv", summary_csv(&rows)?);
    files.add("summary.txt", text.clone().into_bytes());
    Ok((files, text.trim_end().to_string(), false))
}

fn cmd_gen_data(cfg: &RunConfig) -> Result<Outcome> {
    let spec = cfg.require(&cfg.data, "data", "gen-data")?;
    let mut files = Artifacts::new();
    match spec.kind {
        DataKind::Task => {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            let data: Vec<TaskInstance> = (0..spec.n).map(|_| TaskInstance::sample(&mut rng)).collect();
            files.add("task.csv", task_csv_bytes(&data)?);
        }
        DataKind::Counterfactual => {
            let model = cfg.model("gen-data")?;
            let data = gen_counterfactual_dataset_with(&model, spec.n, spec.seed, cfg.train.sampling)?;
            let slots = model.alignable();
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record([
                "base_lower_cents",
                "base_upper_cents",
                "base_amount_cents",
                "source_lower_cents",
                "source_upper_cents",
                "source_amount_cents",
                "intervened",
                "label",
            ])?;
            for e in &data {
                let s = e.sources.iter().flatten().next().copied().unwrap_or(e.base);
                w.write_record([
                    e.base.lower().to_string(),
                    e.base.upper().to_string(),
                    e.base.amount().to_string(),
                    s.lower().to_string(),
                    s.upper().to_string(),
                    s.amount().to_string(),
                    e.intervened(&slots).join(";"),
                    e.label.to_string(),
                ])?;
            }
            files.add("counterfactual.csv", w.into_inner().map_err(|e| Error::Io(e.into_error()))?);
        }
    }
    Ok((files, format!("{} examples", spec.n), false))
}

fn cmd_build_planted(cfg: &RunConfig) -> Result<Outcome> {
    if !matches!(cfg.net, Some(NetSpec::PlantedMlp { .. })) {
        return Err(Error::Config("net: `build-planted` needs a planted-mlp net".into()));
    }
    let net = cfg.network("build-planted")?;
    let mut files = Artifacts::new();
    files.network("net", &net)?;
    let Network::Planted(p) = &net else { unreachable!("planted spec builds a planted net") };
    let truth = p.truth();
    files.json(
        "truth.json",
        &serde_json::json!({
            "hypothesis": p.hypothesis().name(),
            "blocks": truth.blocks.iter().map(|b| [b.start, b.end]).collect::<Vec<_>>(),
            "planted_site": net.planted_site().map(|s| [s.layer, s.position]),
            "control_site": [net.control_site().layer, net.control_site().position],
        }),
    )?;
    Ok((files, format!("planted {} net of width {}", p.hypothesis(), net.width()), false))
}

#[cfg(test)]
mod tests;
