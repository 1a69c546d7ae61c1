//! Run configuration: one JSON document per run.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bdas::TrainConfig;
use crate::causal::{make_hypothesis, model_from_json, CausalModel, Hypothesis};
use crate::error::{Error, Result};
use crate::target::{build_planted_net, train_task_net, ActivationSite, Network, SeqNetSpec, TaskTrainSpec};

/// Environment variable that may set the output directory.
pub const OUT_ENV: &str = "BDAS_OUT";

/// How to obtain the target network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum NetSpec {
    /// Build a planted network; `planted` defaults to the run hypothesis.
    PlantedMlp {
        width: usize,
        seed: u64,
        #[serde(default)]
        planted: Option<String>,
    },
    /// Load a saved network from `<path>.bin` / `<path>.json`.
    Saved { path: PathBuf },
    /// Train a sequence network on the task before aligning.
    SeqNet {
        arch: SeqNetSpec,
        #[serde(default)]
        task: TaskTrainSpec,
        seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SiteRef {
    pub layer: usize,
    pub position: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SiteList {
    /// The string `"all"`.
    All(String),
    List(Vec<SiteRef>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataKind {
    Task,
    Counterfactual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSpec {
    pub kind: DataKind,
    pub n: usize,
    pub seed: u64,
}

/// Fields used by each command:
///
/// - `train`, `sweep`: hypothesis (or model_file), net, sites, seeds, train
/// - `eval`: hypothesis, net, sites (one), alignment, train.test_size / test_seed
/// - `report`: heatmaps, reference
/// - `gen-data`: data, plus hypothesis for counterfactual data
/// - `build-planted`: hypothesis, net (planted-mlp)
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub hypothesis: Option<String>,
    /// JSON causal model used instead of a builtin hypothesis.
    #[serde(default)]
    pub model_file: Option<PathBuf>,
    #[serde(default)]
    pub net: Option<NetSpec>,
    #[serde(default)]
    pub sites: Option<SiteList>,
    #[serde(default)]
    pub seeds: Option<Vec<u64>>,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub jobs: Option<usize>,
    /// Saved alignment state stem, for `eval`.
    #[serde(default)]
    pub alignment: Option<PathBuf>,
    #[serde(default)]
    pub heatmaps: Option<Vec<PathBuf>>,
    #[serde(default)]
    pub reference: Option<PathBuf>,
    #[serde(default)]
    pub data: Option<DataSpec>,
}

/// A configuration problem, located in the source file when possible.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub path: PathBuf,
    pub line: Option<usize>,
    pub column: Option<usize>,
    pub message: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.path.display())?;
        if let Some(l) = self.line {
            write!(f, ":{l}")?;
            if let Some(c) = self.column {
                write!(f, ":{c}")?;
            }
        }
        write!(f, ": {}", self.message)
    }
}

/// Line of the first occurrence of `"key"` in `text`, 1-based.
fn locate(text: &str, key: &str) -> Option<usize> {
    let quoted = format!("\"{key}\"");
    text.lines().position(|l| l.contains(&quoted)).map(|i| i + 1)
}

fn key_of(message: &str) -> Option<&str> {
    message.split_whitespace().next().filter(|w| w.chars().all(|c| c.is_ascii_alphanumeric() || c == '_'))
}

/// Parses and validates a config file. Relative paths inside the file
/// are resolved against the file's directory.
pub fn load_config(path: &Path) -> std::result::Result<RunConfig, ConfigError> {
    let err = |line, column, message: String| ConfigError { path: path.to_path_buf(), line, column, message };
    let text = std::fs::read_to_string(path).map_err(|e| err(None, None, e.to_string()))?;
    let mut cfg: RunConfig = serde_json::from_str(&text).map_err(|e| {
        let msg = e.to_string();
        let msg = msg.rsplit_once(" at line ").map_or(msg.clone(), |(m, _)| m.to_string());
        err(Some(e.line()), Some(e.column()), msg)
    })?;
    let base = path.parent().unwrap_or(Path::new(""));
    cfg.resolve_paths(base);
    cfg.validate().map_err(|e| {
        let message = match e {
            Error::Config(m) => m,
            other => other.to_string(),
        };
        let line = key_of(&message).and_then(|k| locate(&text, k));
        err(line, None, message)
    })?;
    Ok(cfg)
}

impl RunConfig {
    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(p) = self.model_file.as_mut() {
            fix(p);
        }
        if let Some(NetSpec::Saved { path }) = self.net.as_mut() {
            fix(path);
        }
        if let Some(p) = self.alignment.as_mut() {
            fix(p);
        }
        for p in self.heatmaps.iter_mut().flatten() {
            fix(p);
        }
        if let Some(p) = self.reference.as_mut() {
            fix(p);
        }
        if let Some(p) = self.out.as_mut() {
            fix(p);
        }
    }

    /// Structural checks shared by every command; messages begin with the
    /// offending key so they can be located in the file.
    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if let Some(h) = &self.hypothesis {
            make_hypothesis(h).map_err(|_| Error::Config(format!("hypothesis `{h}` is not a builtin")))?;
        }
        if self.hypothesis.is_some() && self.model_file.is_some() {
            return Err(Error::Config("model_file and hypothesis are mutually exclusive".into()));
        }
        let exists = |key: &str, p: &Path, exts: &[&str]| -> Result<()> {
            let found = if exts.is_empty() { p.exists() } else { exts.iter().all(|e| p.with_extension(e).exists()) };
            if found {
                Ok(())
            } else {
                Err(Error::Config(format!("{key} file `{}` does not exist", p.display())))
            }
        };
        if let Some(p) = &self.model_file {
            exists("model_file", p, &[])?;
        }
        match &self.net {
            Some(NetSpec::Saved { path }) => exists("path", path, &["bin", "json"])?,
            Some(NetSpec::PlantedMlp { width, planted, .. }) => {
                if *width < 8 {
                    return Err(Error::Config(format!("width {width} is below the planted minimum of 8")));
                }
                if let Some(h) = planted {
                    make_hypothesis(h).map_err(|_| Error::Config(format!("planted hypothesis `{h}` is not a builtin")))?;
                }
            }
            Some(NetSpec::SeqNet { arch, task, .. }) => {
                arch.validate().map_err(|e| Error::Config(format!("arch {e}")))?;
                if task.train_size == 0 || task.test_size == 0 || task.epochs == 0 || task.batch == 0 || !(task.lr.is_finite() && task.lr > 0.0) {
                    return Err(Error::Config("task settings must be positive".into()));
                }
            }
            None => {}
        }
        if let Some(SiteList::All(s)) = &self.sites {
            if s != "all" {
                return Err(Error::Config(format!("sites must be a list or \"all\", got \"{s}\"")));
            }
        }
        if let Some(seeds) = &self.seeds {
            if seeds.is_empty() {
                return Err(Error::Config("seeds must not be empty".into()));
            }
        }
        if self.jobs == Some(0) {
            return Err(Error::Config("jobs must be positive".into()));
        }
        if let Some(p) = &self.alignment {
            exists("alignment", p, &["bin", "json"])?;
        }
        for p in self.heatmaps.iter().flatten() {
            exists("heatmaps", p, &[])?;
        }
        if let Some(p) = &self.reference {
            exists("reference", p, &[])?;
        }
        if let Some(d) = &self.data {
            if d.n == 0 {
                return Err(Error::Config("n must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn require<'a, T>(&self, value: &'a Option<T>, key: &str, command: &str) -> Result<&'a T> {
        value.as_ref().ok_or_else(|| Error::Config(format!("{key} is required by `{command}`")))
    }

    pub fn model(&self, command: &str) -> Result<CausalModel> {
        match (&self.hypothesis, &self.model_file) {
            (Some(h), _) => make_hypothesis(h),
            (None, Some(p)) => model_from_json(&std::fs::read_to_string(p)?),
            (None, None) => Err(Error::Config(format!("hypothesis is required by `{command}`"))),
        }
    }

    /// Builds, loads, or trains the target network.
    pub fn network(&self, command: &str) -> Result<Network> {
        match self.require(&self.net, "net", command)? {
            NetSpec::PlantedMlp { width, seed, planted } => {
                let model = match planted {
                    Some(h) => make_hypothesis(h)?,
                    None => self.model(command)?,
                };
                build_planted_net(&model, *width, *seed)
            }
            NetSpec::Saved { path } => Network::load(path),
            NetSpec::SeqNet { arch, task, seed } => Ok(Network::Seq(train_task_net(*arch, task, *seed)?)),
        }
    }

    pub fn sites(&self, net: &Network, command: &str) -> Result<Vec<ActivationSite>> {
        match self.require(&self.sites, "sites", command)? {
            SiteList::All(_) => Ok(net.sites()),
            SiteList::List(list) => {
                if list.is_empty() {
                    return Err(Error::Config("sites must not be empty".into()));
                }
                list.iter()
                    .map(|s| net.site(s.layer, s.position).map_err(|e| Error::Config(format!("sites {e}"))))
                    .collect()
            }
        }
    }

    pub fn seeds(&self) -> Vec<u64> {
        self.seeds.clone().unwrap_or_else(|| vec![0])
    }

    /// Output directory: `--out`, then the environment, then the file.
    pub fn out_dir(&self, flag: Option<&Path>) -> Result<PathBuf> {
        if let Some(p) = flag {
            return Ok(p.to_path_buf());
        }
        if let Some(p) = std::env::var_os(OUT_ENV) {
            return Ok(PathBuf::from(p));
        }
        self.out.clone().ok_or_else(|| Error::Config("out is required (config, --out, or BDAS_OUT)".into()))
    }

    pub fn builtin_hypothesis(&self) -> Option<Hypothesis> {
        self.hypothesis.as_deref().and_then(|h| h.parse().ok())
    }
}

/// Parses `--seeds`: comma-separated integers or inclusive ranges `a-b`.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let bad = || Error::Config(format!("seeds: cannot parse `{part}`"));
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b): (u64, u64) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
                if b < a {
                    return Err(bad());
                }
                out.extend(a..=b);
            }
            None => out.push(part.parse().map_err(|_| bad())?),
        }
    }
    if out.is_empty() {
        return Err(Error::Config("seeds: empty list".into()));
    }
    Ok(out)
}
