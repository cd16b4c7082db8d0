//! Cached training runs, per-run metrics and seed sweeps.
//!
//! Every run lives in its own directory named after its config hash, so a
//! finished run is never repeated and concurrent runs never share files.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::analysis::{can_end_probe, geometry_report, GeometryReport, ProbeReport};
use crate::artifacts::{read_json, write_json, Manifest};
use crate::condition::Condition;
use crate::error::{Error, Result};
use crate::evalx::{bracket_closing_score, exact_match, perplexity, DecodeMode};
use crate::langgen::{build_dyck_datasets, sample_dyck_set, DyckDatasets, DyckSample, LengthSplit};
use crate::models::{Checkpointable, LstmLm, Seq2Seq, TraceKind};
use crate::training::{
    scan_data, scan_data_from, train_dyck, train_dyck_on, train_scan, train_scan_on, EpochRecord,
    RunLog, Task, TrainConfig,
};

/// Scalar type used for all experiment runs.
pub type RunScalar = f32;

pub const IN_DOMAIN_EVAL: usize = 2000;
pub const PROBE_SEQS: usize = 500;
pub const PROBE_OOD_SEQS: usize = 200;

fn task_label(cfg: &TrainConfig) -> String {
    match &cfg.task {
        Task::Dyck(d) => format!("dyck-k{}-m{}", d.k, d.m),
        Task::Scan { cutoff, .. } => format!("scan-l{cutoff}"),
    }
}

/// Root of the cached run directories.
#[derive(Clone, Debug)]
pub struct RunStore {
    root: PathBuf,
}

impl RunStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        RunStore { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn run_dir(&self, cfg: &TrainConfig) -> PathBuf {
        let cond = match cfg.condition {
            Condition::PlusEos => "plus-eos",
            Condition::MinusEos => "minus-eos",
            Condition::MinusEosRandomCutoff => "random-cutoff",
        };
        self.root.join("runs").join(format!(
            "{}-{cond}-s{}-{}",
            task_label(cfg),
            cfg.seed,
            cfg.config_hash()
        ))
    }

    pub(crate) fn finished(&self, cfg: &TrainConfig) -> Option<(PathBuf, RunLog)> {
        let dir = self.run_dir(cfg);
        let ck = dir.join("checkpoint.json");
        let log = RunLog::read_jsonl(&dir.join("run.jsonl")).ok()?;
        ck.exists().then_some((ck, log))
    }

    fn record(
        &self,
        cfg: &TrainConfig,
        inputs: &[PathBuf],
        save: impl FnOnce(&Path) -> Result<()>,
        log: &mut RunLog,
    ) -> Result<()> {
        let dir = self.run_dir(cfg);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let ck = dir.join("checkpoint.json");
        save(&ck)?;
        log.checkpoint = Some(ck.clone());
        let mut m = Manifest::new("train", serde_json::to_value(cfg)?, Some(cfg.seed));
        for p in inputs {
            m.add_input(p)?;
        }
        m.outputs = vec!["checkpoint.json".into(), "run.jsonl".into()];
        m.write(&dir)?;
        // the log goes last: its presence marks the run as complete
        log.write_jsonl(&dir.join("run.jsonl"))
    }

    /// Whether `cfg` already has a complete run directory.
    pub fn is_finished(&self, cfg: &TrainConfig) -> bool {
        self.finished(cfg).is_some()
    }

    /// Trains (or loads) the Dyck model for `cfg` on generated data.
    pub fn dyck_model(
        &self,
        cfg: &TrainConfig,
        hook: &mut dyn FnMut(&EpochRecord),
    ) -> Result<(LstmLm<RunScalar>, RunLog)> {
        self.dyck_model_on(cfg, None, hook)
    }

    /// As [`RunStore::dyck_model`], training on `data` read from the listed files.
    pub fn dyck_model_on(
        &self,
        cfg: &TrainConfig,
        data: Option<(&DyckDatasets, &[PathBuf])>,
        hook: &mut dyn FnMut(&EpochRecord),
    ) -> Result<(LstmLm<RunScalar>, RunLog)> {
        if let Some((ck, log)) = self.finished(cfg) {
            return Ok((LstmLm::load_checkpoint(&ck)?, log));
        }
        let (model, mut log) = match data {
            Some((d, _)) => train_dyck_on::<RunScalar>(cfg, d, hook)?,
            None => train_dyck::<RunScalar>(cfg, hook)?,
        };
        let inputs = data.map(|d| d.1).unwrap_or_default();
        self.record(cfg, inputs, |p| model.save_checkpoint(p), &mut log)?;
        Ok((model, log))
    }

    /// Trains (or loads) the SCAN model for `cfg`.
    pub fn scan_model(
        &self,
        cfg: &TrainConfig,
        hook: &mut dyn FnMut(&EpochRecord),
    ) -> Result<(Seq2Seq<RunScalar>, RunLog)> {
        self.scan_model_on(cfg, None, hook)
    }

    pub fn scan_model_on(
        &self,
        cfg: &TrainConfig,
        split: Option<(&LengthSplit, &[PathBuf])>,
        hook: &mut dyn FnMut(&EpochRecord),
    ) -> Result<(Seq2Seq<RunScalar>, RunLog)> {
        if let Some((ck, log)) = self.finished(cfg) {
            return Ok((Seq2Seq::load_checkpoint(&ck)?, log));
        }
        let (model, mut log) = match (split, &cfg.task) {
            (
                Some((s, _)),
                Task::Scan {
                    cutoff, holdout, ..
                },
            ) => {
                if s.cutoff != *cutoff {
                    return Err(Error::Validation(format!(
                        "dataset has cutoff {} but the config asks for {cutoff}",
                        s.cutoff
                    )));
                }
                train_scan_on::<RunScalar>(
                    cfg,
                    &scan_data_from(s.clone(), *holdout, cfg.seed)?,
                    hook,
                )?
            }
            _ => train_scan::<RunScalar>(cfg, hook)?,
        };
        let inputs = split.map(|d| d.1).unwrap_or_default();
        self.record(cfg, inputs, |p| model.save_checkpoint(p), &mut log)?;
        Ok((model, log))
    }

    /// Cached JSON value under the run directory.
    pub fn memo<V: Serialize + DeserializeOwned>(
        &self,
        cfg: &TrainConfig,
        name: &str,
        compute: impl FnOnce() -> Result<V>,
    ) -> Result<V> {
        let path = self.run_dir(cfg).join(format!("{name}.json"));
        if let Ok(v) = read_json(&path) {
            return Ok(v);
        }
        let v = compute()?;
        write_json(&path, &v)?;
        Ok(v)
    }
}

/// Evaluation sets for a Dyck config, shared across conditions for a seed.
pub struct DyckEvalSets {
    pub in_domain: Vec<DyckSample>,
    pub out_of_domain: Vec<DyckSample>,
    pub probe_train: Vec<DyckSample>,
    pub probe_held_out: Vec<DyckSample>,
}

pub fn dyck_eval_sets(cfg: &TrainConfig) -> Result<DyckEvalSets> {
    let Task::Dyck(dc) = &cfg.task else {
        return Err(Error::Config("Dyck evaluation needs a Dyck config".into()));
    };
    let mut data_cfg = dc.clone();
    data_cfg.n_train = 1;
    data_cfg.n_val = 1;
    let test = build_dyck_datasets(&data_cfg, Condition::MinusEos, cfg.seed)?.test;
    let set =
        |purpose: &str, n: usize| sample_dyck_set(dc, dc.min_len, dc.max_len, cfg.seed, purpose, n);
    // small test sets (smoke configs) shrink the auxiliary sets with them
    let cap = |n: usize| n.min(dc.n_test.max(1));
    Ok(DyckEvalSets {
        in_domain: set("dyck-id-eval", cap(IN_DOMAIN_EVAL))?,
        probe_train: set("probe-train", cap(PROBE_SEQS))?,
        probe_held_out: set("probe-held-out", cap(PROBE_SEQS))?,
        out_of_domain: test,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DyckMetrics {
    pub condition: Condition,
    pub seed: u64,
    pub epochs: usize,
    pub best_val: f64,
    pub test_score: f64,
    pub per_distance: BTreeMap<usize, (usize, usize)>,
    pub ppl_in_domain: f64,
    pub ppl_out_of_domain: f64,
    pub probe: ProbeReport,
}

/// Trains if needed, then evaluates on the shared evaluation sets.
pub fn dyck_metrics(
    store: &RunStore,
    cfg: &TrainConfig,
    sets: Option<&DyckEvalSets>,
    hook: &mut dyn FnMut(&EpochRecord),
) -> Result<DyckMetrics> {
    let (model, log) = store.dyck_model(cfg, hook)?;
    store.memo(cfg, "metrics", || {
        let owned;
        let sets = match sets {
            Some(s) => s,
            None => {
                owned = dyck_eval_sets(cfg)?;
                &owned
            }
        };
        let score = bracket_closing_score(&model, &sets.out_of_domain)?;
        let ood_probe: Vec<DyckSample> = sets
            .out_of_domain
            .iter()
            .take(PROBE_OOD_SEQS)
            .cloned()
            .collect();
        let trace = |s: &[DyckSample]| model.trace_dyck(s, TraceKind::Hidden);
        let probe = can_end_probe(
            &trace(&sets.probe_train)?,
            &trace(&sets.probe_held_out)?,
            &trace(&ood_probe)?,
        )?;
        Ok(DyckMetrics {
            condition: cfg.condition,
            seed: cfg.seed,
            epochs: log.epochs.len(),
            best_val: log.best_val,
            test_score: score.value,
            per_distance: score.per_distance,
            ppl_in_domain: perplexity(&model, &sets.in_domain, false)?,
            ppl_out_of_domain: perplexity(&model, &sets.out_of_domain, false)?,
            probe,
        })
    })
}

/// Geometry of a trained model's in-domain hidden states.
pub fn dyck_geometry(store: &RunStore, cfg: &TrainConfig) -> Result<GeometryReport> {
    let (model, _) = store.dyck_model(cfg, &mut |_| {})?;
    store.memo(cfg, "geometry", || {
        let sets = dyck_eval_sets(cfg)?;
        let t = model.trace_dyck(&sets.probe_train, TraceKind::Hidden)?;
        geometry_report(&t, 50)
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanMetrics {
    pub condition: Condition,
    pub seed: u64,
    pub cutoff: usize,
    pub epochs: usize,
    pub best_val: f64,
    pub standard: Option<f64>,
    pub oracle: f64,
}

pub fn scan_metrics(
    store: &RunStore,
    cfg: &TrainConfig,
    hook: &mut dyn FnMut(&EpochRecord),
) -> Result<ScanMetrics> {
    let Task::Scan {
        cutoff, holdout, ..
    } = cfg.task
    else {
        return Err(Error::Config("SCAN evaluation needs a SCAN config".into()));
    };
    let (model, log) = store.scan_model(cfg, hook)?;
    store.memo(cfg, "metrics", || {
        let data = scan_data(cutoff, holdout, cfg.seed)?;
        let standard = if cfg.condition.trains_eos() {
            Some(exact_match(&model, &data.test, DecodeMode::Standard)?.value)
        } else {
            None
        };
        Ok(ScanMetrics {
            condition: cfg.condition,
            seed: cfg.seed,
            cutoff,
            epochs: log.epochs.len(),
            best_val: log.best_val,
            standard,
            oracle: exact_match(&model, &data.test, DecodeMode::Oracle)?.value,
        })
    })
}

/// One JSON document describing a training sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub train: TrainConfig,
    /// Seeds to run; empty means `train.seed` alone.
    #[serde(default)]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.train.validate()?;
        Ok(cfg)
    }

    /// One validated config per seed.
    pub fn runs(&self) -> Result<Vec<TrainConfig>> {
        self.train.validate()?;
        let seeds = if self.seeds.is_empty() {
            vec![self.train.seed]
        } else {
            self.seeds.clone()
        };
        Ok(seeds
            .into_iter()
            .map(|seed| TrainConfig {
                seed,
                ..self.train.clone()
            })
            .collect())
    }
}

/// A finished run found on disk.
#[derive(Clone, Debug)]
pub struct StoredRun {
    pub dir: PathBuf,
    pub config: TrainConfig,
}

impl RunStore {
    /// Every complete run directory, sorted by path.
    pub fn list(&self) -> Result<Vec<StoredRun>> {
        let runs = self.root.join("runs");
        let Ok(entries) = fs::read_dir(&runs) else {
            return Ok(Vec::new());
        };
        let mut out = Vec::new();
        for e in entries {
            let dir = e.map_err(|e| Error::io(&runs, e))?.path();
            if !dir.join("run.jsonl").exists() {
                continue;
            }
            let m: Manifest = read_json(&dir.join("manifest.json"))?;
            let config: TrainConfig = serde_json::from_value(m.config)?;
            out.push(StoredRun { dir, config });
        }
        out.sort_by(|a, b| a.dir.cmp(&b.dir));
        Ok(out)
    }
}

/// Median with the midpoint rule for even counts.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::langgen::DyckConfig;

    fn tiny(condition: Condition) -> TrainConfig {
        let mut dc = DyckConfig::standard(4).unwrap();
        dc.n_train = 32;
        dc.n_val = 8;
        dc.n_test = 4;
        let mut cfg = TrainConfig::dyck_from(dc, condition, 0).unwrap();
        cfg.max_epochs = 1;
        cfg
    }

    #[test]
    fn median_rule() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&[]), None);
    }

    #[test]
    fn runs_are_cached() {
        let dir = tempfile::tempdir().unwrap();
        let store = RunStore::new(dir.path());
        let cfg = tiny(Condition::PlusEos);
        let mut epochs = 0;
        let (a, la) = store.dyck_model(&cfg, &mut |_| epochs += 1).unwrap();
        let (b, lb) = store.dyck_model(&cfg, &mut |_| epochs += 1).unwrap();
        assert_eq!(epochs, 1);
        assert_eq!(a, b);
        assert_eq!(la, lb);
        let run = store.run_dir(&cfg);
        let m: Manifest = read_json(&run.join("manifest.json")).unwrap();
        assert_eq!(m.seed, Some(0));
        assert_ne!(store.run_dir(&tiny(Condition::MinusEos)), run);
        let mut calls = 0;
        for _ in 0..2 {
            let v: f64 = store
                .memo(&cfg, "x", || {
                    calls += 1;
                    Ok(1.5)
                })
                .unwrap();
            assert_eq!(v, 1.5);
        }
        assert_eq!(calls, 1);
    }

    #[test]
    fn experiment_config_parses() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig {
            train: TrainConfig::dyck(4, Condition::MinusEos, 0).unwrap(),
            seeds: vec![0, 1, 2],
            out: Some("runs-here".into()),
        };
        let path = dir.path().join("c.json");
        fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
        let back = ExperimentConfig::load(&path).unwrap();
        assert_eq!(back, cfg);
        let runs = back.runs().unwrap();
        assert_eq!(runs.iter().map(|r| r.seed).collect::<Vec<_>>(), [0, 1, 2]);

        let mut v = serde_json::to_value(&cfg).unwrap();
        v["extra"] = 1.into();
        fs::write(&path, v.to_string()).unwrap();
        assert!(matches!(
            ExperimentConfig::load(&path),
            Err(Error::Config(_))
        ));

        let mut v = serde_json::to_value(&cfg).unwrap();
        v["train"]["learning_rate"] = (-1.0).into();
        fs::write(&path, v.to_string()).unwrap();
        assert!(ExperimentConfig::load(&path).is_err());
    }
}
