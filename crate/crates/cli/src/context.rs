use std::fmt;
use std::path::{Path, PathBuf};

use eoslab::artifacts::{write_json, Manifest};
use eoslab::experiment::{ExperimentConfig, RunStore};
use eoslab::langgen::DyckConfig;
use eoslab::Condition;

use crate::args::{GlobalArgs, SeedArgs};

pub const DEFAULT_OUT: &str = "eoslab-out";

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(eoslab::Error),
}

impl From<eoslab::Error> for CliError {
    fn from(e: eoslab::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Core(e) => e.fmt(f),
        }
    }
}

impl CliError {
    /// 1 usage, 2 data or validation, 3 runtime.
    pub fn exit_code(&self) -> u8 {
        use eoslab::Error as E;
        match self {
            CliError::Usage(_) => 1,
            CliError::Core(E::Config(_) | E::Domain(_)) => 1,
            CliError::Core(e) if e.is_data_error() => 2,
            CliError::Core(_) => 3,
        }
    }
}

pub type CliResult<T = ()> = Result<T, CliError>;

pub struct Ctx {
    pub out: PathBuf,
    pub seed: u64,
    pub jobs: usize,
    pub config: Option<ExperimentConfig>,
}

impl Ctx {
    pub fn new(g: &GlobalArgs) -> CliResult<Self> {
        let config = g
            .config
            .as_deref()
            .map(ExperimentConfig::load)
            .transpose()?;
        let out = g
            .out
            .clone()
            .or_else(|| config.as_ref().and_then(|c| c.out.clone()))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
        let jobs = match g.jobs {
            Some(0) => return Err(CliError::Usage("--jobs must be at least 1".into())),
            Some(n) => n,
            None => std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1),
        };
        Ok(Ctx {
            out,
            seed: g.seed,
            jobs,
            config,
        })
    }

    pub fn store(&self) -> RunStore {
        RunStore::new(&self.out)
    }

    pub fn seeds(&self, s: &SeedArgs) -> Vec<u64> {
        s.seeds
            .as_ref()
            .map(|s| s.resolve(self.seed))
            .unwrap_or_else(|| vec![self.seed])
    }

    pub fn pool(&self) -> CliResult<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.jobs)
            .build()
            .map_err(|e| CliError::Usage(format!("cannot start {} workers: {e}", self.jobs)))
    }

    pub fn dyck_data_dir(&self, cfg: &DyckConfig, condition: Condition, seed: u64) -> PathBuf {
        self.out.join("data").join(format!(
            "dyck-k{}-m{}-{}-s{seed}",
            cfg.k,
            cfg.m,
            slug(condition)
        ))
    }

    pub fn scan_data_dir(&self, cutoff: usize) -> PathBuf {
        self.out.join("data").join(format!("scan-l{cutoff}"))
    }

    pub fn report_dir(&self, name: &str) -> PathBuf {
        self.out.join("reports").join(name)
    }

    pub fn analysis_dir(&self, name: &str) -> PathBuf {
        self.out.join("analysis").join(name)
    }
}

pub fn slug(c: Condition) -> &'static str {
    match c {
        Condition::PlusEos => "plus-eos",
        Condition::MinusEos => "minus-eos",
        Condition::MinusEosRandomCutoff => "random-cutoff",
    }
}

/// Writes `report.txt`, `report.json` and `manifest.json` into `dir`.
#[allow(clippy::too_many_arguments)]
pub fn write_report<S: serde::Serialize>(
    dir: &Path,
    command: &str,
    config: serde_json::Value,
    seed: Option<u64>,
    inputs: &[PathBuf],
    text: &str,
    json: &S,
    extra_outputs: &[&str],
) -> CliResult {
    std::fs::create_dir_all(dir).map_err(|e| eoslab::Error::io(dir, e))?;
    let txt = dir.join("report.txt");
    std::fs::write(&txt, text).map_err(|e| eoslab::Error::io(&txt, e))?;
    write_json(&dir.join("report.json"), json)?;
    let mut m = Manifest::new(command, config, seed);
    for p in inputs {
        m.add_input(p)?;
    }
    m.outputs = vec!["report.txt".into(), "report.json".into()];
    m.outputs
        .extend(extra_outputs.iter().map(|s| s.to_string()));
    m.write(dir)?;
    Ok(())
}
