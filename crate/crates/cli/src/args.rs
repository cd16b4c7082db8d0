use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use eoslab::analysis::Labeling;
use eoslab::evalx::DecodeMode;
use eoslab::experiment::ExperimentConfig;
use eoslab::langgen::DyckConfig;
use eoslab::training::Task;
use eoslab::{Condition, Error};

#[derive(Parser, Debug)]
#[command(
    name = "eoslab",
    version,
    about = "EOS-decision length-extrapolation experiments"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct GlobalArgs {
    /// Experiment config (JSON): a train config, a seed list and an output directory.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Base seed; `--seeds N` counts up from here.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Output root.
    #[arg(long, global = true, env = "EOSLAB_OUT", value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Concurrent runs; defaults to the number of logical cores.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write datasets and their manifests.
    Generate(GenerateArgs),
    /// Train models (one run per condition and seed).
    Train(TrainArgs),
    /// Score trained models and print median tables.
    Eval(EvalArgs),
    /// Hidden-state PCA, probes and geometry.
    Analyze(AnalyzeArgs),
    /// Tabulate every cached result under the output root.
    Report(ReportArgs),
}

fn parse_condition(s: &str) -> Result<Condition, String> {
    s.parse().map_err(|e: eoslab::Error| e.to_string())
}

/// `N` (N seeds from `--seed`), `a..b` (inclusive) or `a,b,c`.
#[derive(Clone, Debug, PartialEq)]
pub enum SeedSpec {
    Count(u64),
    List(Vec<u64>),
}

impl SeedSpec {
    pub fn resolve(&self, base: u64) -> Vec<u64> {
        match self {
            SeedSpec::Count(n) => (base..base + n).collect(),
            SeedSpec::List(v) => v.clone(),
        }
    }
}

pub fn parse_seeds(s: &str) -> Result<SeedSpec, String> {
    let num = |t: &str| {
        t.trim()
            .parse::<u64>()
            .map_err(|_| format!("bad seed {t:?}"))
    };
    if let Some((a, b)) = s.split_once("..") {
        let (a, b) = (num(a)?, num(b.trim_start_matches('='))?);
        if a > b {
            return Err(format!("empty seed range {s:?}"));
        }
        return Ok(SeedSpec::List((a..=b).collect()));
    }
    if s.contains(',') {
        return Ok(SeedSpec::List(
            s.split(',').map(num).collect::<Result<_, _>>()?,
        ));
    }
    match num(s)? {
        0 => Err("--seeds needs at least one seed".into()),
        n => Ok(SeedSpec::Count(n)),
    }
}

#[derive(Args, Debug, Clone)]
pub struct SeedArgs {
    /// Seed sweep: `5`, `1..5` or `0,2,4`.
    #[arg(long, value_parser = parse_seeds)]
    pub seeds: Option<SeedSpec>,
}

#[derive(Args, Debug, Clone)]
pub struct DyckArgs {
    /// Maximum nesting depth; taken from `--config` when omitted.
    #[arg(long)]
    pub m: Option<usize>,
    /// Bracket types [default: 2].
    #[arg(long)]
    pub k: Option<usize>,
    /// Training sequences; defaults to 10^(m/2+2).
    #[arg(long)]
    pub n_train: Option<usize>,
    /// Validation sequences [default: 500].
    #[arg(long)]
    pub n_val: Option<usize>,
    /// Out-of-domain test sequences [default: 10000].
    #[arg(long)]
    pub n_test: Option<usize>,
}

impl DyckArgs {
    /// Flags override the Dyck task of `base`, if any.
    pub fn config(&self, base: Option<&ExperimentConfig>) -> eoslab::Result<DyckConfig> {
        let from_base = base.and_then(|b| match &b.train.task {
            Task::Dyck(d) => Some(d.clone()),
            Task::Scan { .. } => None,
        });
        let mut c = match (self.m, from_base) {
            (Some(m), _) => DyckConfig::standard(m)?,
            (None, Some(d)) => d,
            (None, None) => {
                return Err(Error::Config(
                    "--m is required unless --config names a Dyck task".into(),
                ))
            }
        };
        if let Some(k) = self.k {
            c.k = k;
        }
        if let Some(n) = self.n_train {
            c.n_train = n;
        }
        if let Some(n) = self.n_val {
            c.n_val = n;
        }
        if let Some(n) = self.n_test {
            c.n_test = n;
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Args, Debug, Clone)]
pub struct ScanArgs {
    /// Longest action sequence in the train split; taken from `--config` when omitted.
    #[arg(long)]
    pub cutoff: Option<usize>,
}

impl ScanArgs {
    pub fn cutoff(&self, base: Option<&ExperimentConfig>) -> eoslab::Result<usize> {
        match (self.cutoff, base.map(|b| &b.train.task)) {
            (Some(c), _) => Ok(c),
            (None, Some(Task::Scan { cutoff, .. })) => Ok(*cutoff),
            _ => Err(Error::Config(
                "--cutoff is required unless --config names a SCAN task".into(),
            )),
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct GenerateArgs {
    #[command(subcommand)]
    pub task: Option<GenerateTask>,
}

#[derive(Subcommand, Debug, Clone)]
pub enum GenerateTask {
    /// Dyck-(k,m) train/val/test splits for each condition and seed.
    Dyck {
        #[command(flatten)]
        dyck: DyckArgs,
        /// Defaults to every condition.
        #[arg(long, allow_hyphen_values = true, value_parser = parse_condition, value_delimiter = ',')]
        condition: Vec<Condition>,
        #[command(flatten)]
        seeds: SeedArgs,
    },
    /// The full SCAN enumeration and its length split.
    Scan {
        #[command(flatten)]
        scan: ScanArgs,
    },
}

#[derive(Args, Debug, Clone, Default)]
pub struct Overrides {
    /// Epoch budget.
    #[arg(long)]
    pub max_epochs: Option<usize>,
    /// Minibatch size.
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Adam step size.
    #[arg(long)]
    pub learning_rate: Option<f64>,
}

#[derive(Args, Debug, Clone)]
pub struct TrainArgs {
    #[command(subcommand)]
    pub task: Option<TrainTask>,
}

#[derive(Subcommand, Debug, Clone)]
pub enum TrainTask {
    /// LSTM language models on Dyck-(k,m).
    Dyck {
        #[command(flatten)]
        dyck: DyckArgs,
        /// Defaults to +eos and -eos.
        #[arg(long, allow_hyphen_values = true, value_parser = parse_condition, value_delimiter = ',')]
        condition: Vec<Condition>,
        #[command(flatten)]
        seeds: SeedArgs,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Sequence-to-sequence models on the SCAN length split.
    Scan {
        #[command(flatten)]
        scan: ScanArgs,
        /// Defaults to +eos and -eos.
        #[arg(long, allow_hyphen_values = true, value_parser = parse_condition, value_delimiter = ',')]
        condition: Vec<Condition>,
        #[command(flatten)]
        seeds: SeedArgs,
        #[command(flatten)]
        overrides: Overrides,
        /// LSTM width [default: 200].
        #[arg(long)]
        hidden: Option<usize>,
        /// Stacked LSTM layers [default: 2].
        #[arg(long)]
        layers: Option<usize>,
    },
}

#[derive(Args, Debug, Clone)]
pub struct EvalArgs {
    #[command(subcommand)]
    pub task: EvalTask,
}

/// Either a sweep in the run cache or one checkpoint against one dataset.
#[derive(Args, Debug, Clone)]
pub struct Target {
    #[arg(long, allow_hyphen_values = true, value_parser = parse_condition, value_delimiter = ',')]
    pub condition: Vec<Condition>,
    #[command(flatten)]
    pub seeds: SeedArgs,
    /// Score this checkpoint instead of cached runs.
    #[arg(long, requires = "data")]
    pub checkpoint: Option<PathBuf>,
    /// Dataset directory written by `generate`.
    #[arg(long, requires = "checkpoint")]
    pub data: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Standard,
    Oracle,
    Both,
}

impl ModeArg {
    pub fn modes(self) -> Vec<DecodeMode> {
        match self {
            ModeArg::Standard => vec![DecodeMode::Standard],
            ModeArg::Oracle => vec![DecodeMode::Oracle],
            ModeArg::Both => vec![DecodeMode::Standard, DecodeMode::Oracle],
        }
    }
}

#[derive(Subcommand, Debug, Clone)]
pub enum EvalTask {
    /// Bracket-closing score on the out-of-domain test set.
    DyckClose {
        #[command(flatten)]
        dyck: DyckArgs,
        #[command(flatten)]
        target: Target,
    },
    /// In- and out-of-domain perplexity.
    DyckPpl {
        #[command(flatten)]
        dyck: DyckArgs,
        #[command(flatten)]
        target: Target,
    },
    /// Exact match on the SCAN test split.
    Scan {
        #[command(flatten)]
        scan: ScanArgs,
        #[command(flatten)]
        target: Target,
        #[arg(long, value_enum, default_value_t = ModeArg::Both)]
        mode: ModeArg,
    },
}

#[derive(Args, Debug, Clone)]
pub struct AnalyzeArgs {
    #[command(subcommand)]
    pub task: AnalyzeTask,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    /// Training-length inputs.
    InDomain,
    /// Test-length inputs.
    OutOfDomain,
}

/// Which trained model to inspect.
#[derive(Args, Debug, Clone)]
pub struct ModelSel {
    /// Dyck depth (ignored with --cutoff).
    #[arg(long, default_value_t = 4)]
    pub m: usize,
    #[arg(long, default_value_t = 2)]
    pub k: usize,
    /// Analyze a SCAN model trained on this cutoff instead of a Dyck model.
    #[arg(long)]
    pub cutoff: Option<usize>,
    #[arg(long, allow_hyphen_values = true, value_parser = parse_condition, default_value = "+eos")]
    pub condition: Condition,
}

#[derive(Subcommand, Debug, Clone)]
pub enum AnalyzeTask {
    /// Top-two principal components of the hidden states: CSV plus SVG scatter.
    Pca {
        #[command(flatten)]
        model: ModelSel,
        #[arg(long, default_value = "position")]
        label: Labeling,
        #[arg(long, value_enum, default_value_t = SplitArg::InDomain)]
        split: SplitArg,
        /// Sequences to trace.
        #[arg(long, default_value_t = 100)]
        samples: usize,
    },
    /// Can-end probe accuracy, in and out of domain.
    Probe {
        #[command(flatten)]
        dyck: DyckArgs,
        #[arg(long, allow_hyphen_values = true, value_parser = parse_condition, value_delimiter = ',')]
        condition: Vec<Condition>,
        #[command(flatten)]
        seeds: SeedArgs,
    },
    /// Explained variance, empty-stack separability and per-cluster position correlation.
    Geometry {
        #[command(flatten)]
        model: ModelSel,
    },
}

#[derive(Args, Debug, Clone)]
pub struct ReportArgs {
    /// Only tabulate metrics already computed; do not evaluate finished runs.
    #[arg(long)]
    pub cached_only: bool,
}
