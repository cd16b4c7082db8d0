//! Training loops for the Dyck language models and SCAN encoder-decoders.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::condition::Condition;
use crate::error::{Error, Result};
use crate::evalx::{bracket_closing_score, exact_match, DecodeMode};
use crate::langgen::{
    build_dyck_datasets, scan_enumerate, scan_length_split, DyckConfig, DyckDatasets, LengthSplit,
    ScanPair,
};
use crate::models::{lm_pair, BatchLoss, LstmLm, Parameterized, Seq2Seq};
use crate::numerics::{clip_global_norm, AdamConfig, AdamState, Matrix, RngStream, Scalar};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "lowercase")]
pub enum Task {
    Dyck(DyckConfig),
    Scan {
        cutoff: usize,
        hidden: usize,
        layers: usize,
        /// Fraction of the train split held out for early stopping.
        holdout: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    #[serde(flatten)]
    pub task: Task,
    pub condition: Condition,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub max_epochs: usize,
    /// Stop after this many evaluations without improvement.
    pub patience: Option<usize>,
    /// Stop once validation is perfect for this many consecutive evaluations.
    pub converge_evals: usize,
    pub clip_norm: f64,
    pub seed: u64,
}

impl TrainConfig {
    pub fn dyck(m: usize, condition: Condition, seed: u64) -> Result<Self> {
        Self::dyck_from(DyckConfig::standard(m)?, condition, seed)
    }

    pub fn dyck_from(cfg: DyckConfig, condition: Condition, seed: u64) -> Result<Self> {
        cfg.validate()?;
        Ok(TrainConfig {
            batch_size: cfg.batch_size(),
            task: Task::Dyck(cfg),
            condition,
            learning_rate: 0.01,
            max_epochs: 100,
            patience: None,
            converge_evals: 2,
            clip_norm: 5.0,
            seed,
        })
    }

    pub fn scan(cutoff: usize, condition: Condition, seed: u64) -> Self {
        TrainConfig {
            task: Task::Scan {
                cutoff,
                hidden: 200,
                layers: 2,
                holdout: 0.05,
            },
            condition,
            batch_size: 32,
            learning_rate: 0.001,
            max_epochs: 100,
            patience: Some(5),
            converge_evals: 1,
            clip_norm: 5.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return bad("learning_rate must be a finite non-negative number");
        }
        if !(self.clip_norm > 0.0) {
            return bad("clip_norm must be positive");
        }
        if self.converge_evals == 0 {
            return bad("converge_evals must be at least 1");
        }
        match &self.task {
            Task::Dyck(c) => c.validate(),
            Task::Scan {
                cutoff,
                hidden,
                layers,
                holdout,
            } => {
                if *cutoff < 1 || *hidden == 0 || *layers == 0 {
                    return bad("scan cutoff, hidden size and layer count must be positive");
                }
                if !(*holdout > 0.0 && *holdout < 1.0) {
                    return bad("holdout must lie in (0, 1)");
                }
                if self.condition == Condition::MinusEosRandomCutoff {
                    return bad("random cutoff applies to Dyck training only");
                }
                Ok(())
            }
        }
    }

    /// Short SHA-256 digest of the canonical JSON form.
    pub fn config_hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(text.as_bytes());
        hex::encode(&digest[..8])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_metric: f64,
    pub wall_secs: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    Converged,
    Patience,
    MaxEpochs,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub config_hash: String,
    pub condition: Condition,
    pub seed: u64,
    pub epochs: Vec<EpochRecord>,
    pub stop_reason: StopReason,
    pub best_epoch: usize,
    pub best_val: f64,
    /// Largest |gradient| seen on the EOS output row and bias.
    pub eos_row_grad_max: Option<f64>,
    pub checkpoint: Option<PathBuf>,
}

impl RunLog {
    /// One JSON record per epoch followed by a summary record.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.epochs {
            let mut v = serde_json::to_value(e).expect("record serializes");
            v["type"] = "epoch".into();
            out.push_str(&v.to_string());
            out.push('\n');
        }
        let mut summary = serde_json::to_value(self).expect("log serializes");
        summary.as_object_mut().expect("object").remove("epochs");
        summary["type"] = "summary".into();
        out.push_str(&summary.to_string());
        out.push('\n');
        out
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_jsonl()).map_err(|e| Error::io(path, e))
    }

    pub fn read_jsonl(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut epochs = Vec::new();
        let mut summary = None;
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let v: serde_json::Value = serde_json::from_str(line)?;
            match v.get("type").and_then(|t| t.as_str()) {
                Some("epoch") => epochs.push(serde_json::from_value::<EpochRecord>(v)?),
                Some("summary") => summary = Some(v),
                _ => {
                    return Err(Error::Load(format!(
                        "{}: unknown record {line}",
                        path.display()
                    )))
                }
            }
        }
        let mut v =
            summary.ok_or_else(|| Error::Load(format!("{}: no summary record", path.display())))?;
        v["epochs"] = serde_json::to_value(&epochs)?;
        Ok(serde_json::from_value(v)?)
    }

    /// The log with wall-clock times zeroed, for determinism comparisons.
    pub fn without_wall_time(&self) -> Self {
        let mut c = self.clone();
        c.epochs.iter_mut().for_each(|e| e.wall_secs = 0.0);
        c
    }
}

/// Called after every epoch.
pub type EpochHook<'a> = &'a mut dyn FnMut(&EpochRecord);

type BatchLossFn<'a, T, M> = &'a dyn Fn(&M, &[usize]) -> Result<BatchLoss<T>>;

struct Fit<'a, T, M> {
    cfg: &'a TrainConfig,
    n_examples: usize,
    batch_loss: BatchLossFn<'a, T, M>,
    validate: &'a dyn Fn(&M) -> Result<f64>,
    /// Output-row index of EOS and the positions of the head weight and bias.
    eos_row: Option<(usize, usize, usize)>,
}

fn eos_grad<T: Scalar>(grads: &[Matrix<T>], (eos, w, b): (usize, usize, usize)) -> f64 {
    let row = grads[w]
        .row(eos)
        .iter()
        .map(|x| x.as_f64().abs())
        .fold(0.0, f64::max);
    row.max(grads[b][(0, eos)].as_f64().abs())
}

fn fit<T: Scalar, M: Parameterized<T> + Clone>(
    mut model: M,
    f: Fit<'_, T, M>,
    hook: EpochHook<'_>,
) -> Result<(M, RunLog)> {
    let cfg = f.cfg;
    let mut adam = AdamState::for_params(AdamConfig::with_lr(cfg.learning_rate), &model.params())?;
    let mut order: Vec<usize> = (0..f.n_examples).collect();
    let mut best = (model.clone(), 0usize, (f.validate)(&model)?);
    let mut log = RunLog {
        config_hash: cfg.config_hash(),
        condition: cfg.condition,
        seed: cfg.seed,
        epochs: Vec::new(),
        stop_reason: StopReason::MaxEpochs,
        best_epoch: 0,
        best_val: best.2,
        eos_row_grad_max: f.eos_row.map(|_| 0.0),
        checkpoint: None,
    };
    let mut perfect_run = 0usize;
    let mut since_best = 0usize;
    for epoch in 1..=cfg.max_epochs {
        let start = Instant::now();
        RngStream::derive(cfg.seed, "shuffle", epoch as u64).shuffle(&mut order);
        let (mut nll, mut count) = (0.0, 0usize);
        for idx in order.chunks(cfg.batch_size) {
            let mut b = (f.batch_loss)(&model, idx)?;
            let loss = b.nll_sum.as_f64();
            if !loss.is_finite() {
                return Err(Error::Training {
                    epoch,
                    reason: "loss is not finite".into(),
                });
            }
            nll += loss;
            count += b.count;
            if let (Some(er), Some(max)) = (f.eos_row, log.eos_row_grad_max.as_mut()) {
                *max = max.max(eos_grad(&b.grads, er));
            }
            clip_global_norm(&mut b.grads.iter_mut().collect::<Vec<_>>(), cfg.clip_norm);
            adam.step(&mut model.params_mut(), &b.grads.iter().collect::<Vec<_>>())?;
        }
        let val = (f.validate)(&model)?;
        let rec = EpochRecord {
            epoch,
            train_loss: nll / count.max(1) as f64,
            val_metric: val,
            wall_secs: start.elapsed().as_secs_f64(),
        };
        hook(&rec);
        log.epochs.push(rec);
        if val > best.2 {
            since_best = 0;
        } else {
            since_best += 1;
        }
        if val >= best.2 {
            best = (model.clone(), epoch, val);
        }
        perfect_run = if val >= 1.0 { perfect_run + 1 } else { 0 };
        if perfect_run >= cfg.converge_evals {
            log.stop_reason = StopReason::Converged;
            break;
        }
        if cfg.patience.is_some_and(|p| since_best >= p) {
            log.stop_reason = StopReason::Patience;
            break;
        }
    }
    log.best_epoch = best.1;
    log.best_val = best.2;
    Ok((best.0, log))
}

fn training_json(cfg: &TrainConfig) -> serde_json::Value {
    serde_json::to_value(cfg).expect("config serializes")
}

/// Trains an LSTM language model on Dyck strings until the validation
/// bracket-closing score is perfect for `converge_evals` epochs in a row.
pub fn train_dyck<T: Scalar>(
    cfg: &TrainConfig,
    hook: EpochHook<'_>,
) -> Result<(LstmLm<T>, RunLog)> {
    cfg.validate()?;
    let Task::Dyck(dc) = &cfg.task else {
        return Err(Error::Config("train_dyck needs a Dyck task".into()));
    };
    let data = build_dyck_datasets(dc, cfg.condition, cfg.seed)?;
    train_dyck_on(cfg, &data, hook)
}

/// [`train_dyck`] on datasets supplied by the caller, e.g. read from files.
pub fn train_dyck_on<T: Scalar>(
    cfg: &TrainConfig,
    data: &DyckDatasets,
    hook: EpochHook<'_>,
) -> Result<(LstmLm<T>, RunLog)> {
    cfg.validate()?;
    let Task::Dyck(dc) = &cfg.task else {
        return Err(Error::Config("train_dyck needs a Dyck task".into()));
    };
    if data.config != *dc || data.condition != cfg.condition || data.seed != cfg.seed {
        return Err(Error::Validation(
            "datasets were generated for a different config".into(),
        ));
    }
    let mut model = LstmLm::<T>::for_dyck(dc, cfg.condition, cfg.seed)?;
    model.info.config_hash = cfg.config_hash();
    model.info.training = training_json(cfg);
    let eos = model.eos().expect("dyck vocab has EOS");
    let trains_eos = cfg.condition.trains_eos();
    let train = &data.train;
    let batch_loss = |m: &LstmLm<T>, idx: &[usize]| {
        let pairs: Vec<(&[usize], &[usize])> = idx
            .iter()
            .map(|&i| lm_pair(&train[i].tokens))
            .filter(|(x, _)| !x.is_empty())
            .collect();
        if !trains_eos && pairs.iter().any(|(_, y)| y.contains(&eos)) {
            return Err(Error::Training {
                epoch: 0,
                reason: "EOS target under an EOS-free condition".into(),
            });
        }
        m.batch_loss_and_grads(&pairs)
    };
    let validation = &data.validation;
    let validate = |m: &LstmLm<T>| Ok(bracket_closing_score(m, validation)?.value);
    let (mut best, mut log) = fit(
        model,
        Fit {
            cfg,
            n_examples: train.len(),
            batch_loss: &batch_loss,
            validate: &validate,
            eos_row: Some((eos, 4, 5)),
        },
        hook,
    )?;
    best.info.training["run"] = summary_json(&log);
    log.checkpoint = None;
    Ok((best, log))
}

fn summary_json(log: &RunLog) -> serde_json::Value {
    serde_json::json!({
        "best_epoch": log.best_epoch,
        "best_val": log.best_val,
        "epochs": log.epochs.len(),
        "stop_reason": log.stop_reason,
    })
}

/// Deterministic train / held-out / test partition for a SCAN cutoff.
#[derive(Clone, Debug)]
pub struct ScanData {
    pub train: Vec<ScanPair>,
    pub holdout: Vec<ScanPair>,
    pub test: Vec<ScanPair>,
}

pub fn scan_data(cutoff: usize, holdout: f64, seed: u64) -> Result<ScanData> {
    scan_data_from(scan_length_split(&scan_enumerate(), cutoff)?, holdout, seed)
}

/// Splits a held-out slice off the train side of `split`.
pub fn scan_data_from(split: LengthSplit, holdout: f64, seed: u64) -> Result<ScanData> {
    if !(0.0..1.0).contains(&holdout) {
        return Err(Error::Config(format!(
            "holdout fraction {holdout} outside [0, 1)"
        )));
    }
    let mut train = split.train;
    RngStream::derive(seed, "scan-holdout", 0).shuffle(&mut train);
    let n_hold = ((train.len() as f64) * holdout).round() as usize;
    let held = train.split_off(train.len() - n_hold);
    Ok(ScanData {
        train,
        holdout: held,
        test: split.test,
    })
}

/// Validation decode mode: standard for EOS-trained models, length oracle otherwise.
pub fn scan_validation_mode(condition: Condition) -> DecodeMode {
    if condition.trains_eos() {
        DecodeMode::Standard
    } else {
        DecodeMode::Oracle
    }
}

/// Trains an encoder-decoder on the SCAN length split with early stopping
/// on held-out exact match.
pub fn train_scan<T: Scalar>(
    cfg: &TrainConfig,
    hook: EpochHook<'_>,
) -> Result<(Seq2Seq<T>, RunLog)> {
    cfg.validate()?;
    let Task::Scan {
        cutoff, holdout, ..
    } = cfg.task
    else {
        return Err(Error::Config("train_scan needs a SCAN task".into()));
    };
    let data = scan_data(cutoff, holdout, cfg.seed)?;
    train_scan_on(cfg, &data, hook)
}

/// [`train_scan`] on a partition supplied by the caller.
pub fn train_scan_on<T: Scalar>(
    cfg: &TrainConfig,
    data: &ScanData,
    hook: EpochHook<'_>,
) -> Result<(Seq2Seq<T>, RunLog)> {
    cfg.validate()?;
    let Task::Scan { hidden, layers, .. } = cfg.task else {
        return Err(Error::Config("train_scan needs a SCAN task".into()));
    };
    if data.train.is_empty() || data.holdout.is_empty() {
        return Err(Error::Validation(
            "SCAN training needs non-empty train and held-out sets".into(),
        ));
    }
    let mut model = Seq2Seq::<T>::new(
        crate::models::Vocab::scan_source(),
        crate::models::Vocab::scan_target(),
        cfg.condition,
        hidden,
        layers,
        cfg.seed,
    )?;
    model.info.config_hash = cfg.config_hash();
    model.info.training = training_json(cfg);
    let encoded: Vec<(Vec<usize>, Vec<usize>)> = data
        .train
        .iter()
        .map(|p| model.encode_pair(p))
        .collect::<Result<_>>()?;
    let batch_loss = |m: &Seq2Seq<T>, idx: &[usize]| {
        let pairs: Vec<(&[usize], &[usize])> = idx
            .iter()
            .map(|&i| (encoded[i].0.as_slice(), encoded[i].1.as_slice()))
            .collect();
        m.batch_loss_and_grads(&pairs)
    };
    let mode = scan_validation_mode(cfg.condition);
    let validate = |m: &Seq2Seq<T>| Ok(exact_match(m, &data.holdout, mode)?.value);
    let n_params = model.params().len();
    let eos = model.eos();
    let (mut best, log) = fit(
        model,
        Fit {
            cfg,
            n_examples: encoded.len(),
            batch_loss: &batch_loss,
            validate: &validate,
            eos_row: Some((eos, n_params - 2, n_params - 1)),
        },
        hook,
    )?;
    best.info.training["run"] = summary_json(&log);
    Ok((best, log))
}
