use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Mutex;

use eoslab::artifacts::{read_dyck_data, read_scan_data, DYCK_SPLITS};
use eoslab::experiment::median;
use eoslab::training::{EpochRecord, RunLog, Task, TrainConfig};
use eoslab::Condition;
use rayon::prelude::*;
use serde::Serialize;

use crate::args::{Overrides, TrainArgs, TrainTask};
use crate::context::{write_report, CliError, CliResult, Ctx};
use crate::table::Table;

fn apply(cfg: &mut TrainConfig, o: &Overrides) {
    if let Some(v) = o.max_epochs {
        cfg.max_epochs = v;
    }
    if let Some(v) = o.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = o.learning_rate {
        cfg.learning_rate = v;
    }
}

fn default_conditions(given: Vec<Condition>) -> Vec<Condition> {
    if given.is_empty() {
        vec![Condition::PlusEos, Condition::MinusEos]
    } else {
        given
    }
}

pub fn run(ctx: &Ctx, args: TrainArgs) -> CliResult {
    let (name, configs) = match args.task {
        Some(TrainTask::Dyck {
            dyck,
            condition,
            seeds,
            overrides,
        }) => {
            let dc = dyck.config(ctx.config.as_ref())?;
            let mut v = Vec::new();
            for c in default_conditions(condition) {
                for s in ctx.seeds(&seeds) {
                    let mut cfg = TrainConfig::dyck_from(dc.clone(), c, s)?;
                    apply(&mut cfg, &overrides);
                    v.push(cfg);
                }
            }
            (format!("dyck-k{}-m{}", dc.k, dc.m), v)
        }
        Some(TrainTask::Scan {
            scan,
            condition,
            seeds,
            overrides,
            hidden,
            layers,
        }) => {
            let cutoff = scan.cutoff(ctx.config.as_ref())?;
            let mut v = Vec::new();
            for c in default_conditions(condition) {
                for s in ctx.seeds(&seeds) {
                    let mut cfg = TrainConfig::scan(cutoff, c, s);
                    apply(&mut cfg, &overrides);
                    if let Task::Scan {
                        hidden: h,
                        layers: l,
                        ..
                    } = &mut cfg.task
                    {
                        *h = hidden.unwrap_or(*h);
                        *l = layers.unwrap_or(*l);
                    }
                    v.push(cfg);
                }
            }
            (format!("scan-l{cutoff}"), v)
        }
        None => {
            let cfg = ctx.config.as_ref().ok_or_else(|| {
                CliError::Usage("train needs a task (dyck, scan) or --config".into())
            })?;
            let runs = cfg.runs()?;
            let name = match &runs[0].task {
                Task::Dyck(d) => format!("dyck-k{}-m{}", d.k, d.m),
                Task::Scan { cutoff, .. } => format!("scan-l{cutoff}"),
            };
            (name, runs)
        }
    };
    for c in &configs {
        c.validate()?;
    }
    let logs = train_all(ctx, &configs)?;
    write_sweep(ctx, &name, &configs, &logs)
}

fn tag(cfg: &TrainConfig) -> String {
    format!("{} s{}", cfg.condition.label(), cfg.seed)
}

pub fn train_all(ctx: &Ctx, configs: &[TrainConfig]) -> CliResult<Vec<(RunLog, PathBuf)>> {
    let store = ctx.store();
    let stderr = Mutex::new(());
    ctx.pool()?.install(|| {
        configs
            .par_iter()
            .map(|cfg| {
                let cached = store.is_finished(cfg);
                let mut hook = |e: &EpochRecord| {
                    let _g = stderr.lock();
                    eprintln!(
                        "[{}] epoch {} loss {:.4} val {:.4} ({:.1}s)",
                        tag(cfg),
                        e.epoch,
                        e.train_loss,
                        e.val_metric,
                        e.wall_secs
                    );
                };
                let log = match &cfg.task {
                    Task::Dyck(dc) => {
                        let dir = ctx.dyck_data_dir(dc, cfg.condition, cfg.seed);
                        let inputs: Vec<PathBuf> = DYCK_SPLITS.iter().map(|s| dir.join(format!("{s}.txt"))).collect();
                        if cached {
                            store.dyck_model(cfg, &mut hook)?.1
                        } else {
                            need_data(&dir, "dyck")?;
                            let data = read_dyck_data(&dir)?;
                            store.dyck_model_on(cfg, Some((&data, &inputs)), &mut hook)?.1
                        }
                    }
                    Task::Scan { cutoff, .. } => {
                        let dir = ctx.scan_data_dir(*cutoff);
                        let inputs = vec![dir.join("train.txt"), dir.join("test.txt")];
                        if cached {
                            store.scan_model(cfg, &mut hook)?.1
                        } else {
                            need_data(&dir, "scan")?;
                            let split = read_scan_data(&dir)?;
                            store.scan_model_on(cfg, Some((&split, &inputs)), &mut hook)?.1
                        }
                    }
                };
                let _g = stderr.lock();
                println!(
                    "[{}] {} after {} epochs: best validation {:.4} at epoch {}{}, EOS-row gradient max {}",
                    tag(cfg),
                    if cached { "cached" } else { "trained" },
                    log.epochs.len(),
                    log.best_val,
                    log.best_epoch,
                    match log.stop_reason {
                        eoslab::training::StopReason::Converged => " (converged)",
                        eoslab::training::StopReason::Patience => " (patience)",
                        eoslab::training::StopReason::MaxEpochs => " (epoch budget)",
                    },
                    log.eos_row_grad_max.map(|g| format!("{g:.3e}")).unwrap_or("-".into())
                );
                Ok((log, store.run_dir(cfg)))
            })
            .collect()
    })
}

#[derive(Serialize)]
struct SweepRun {
    condition: Condition,
    seed: u64,
    run_dir: PathBuf,
    epochs: usize,
    best_epoch: usize,
    best_val: f64,
    eos_row_grad_max: Option<f64>,
}

#[derive(Serialize)]
struct Sweep {
    name: String,
    runs: Vec<SweepRun>,
    median_best_val: BTreeMap<Condition, f64>,
}

fn write_sweep(
    ctx: &Ctx,
    name: &str,
    configs: &[TrainConfig],
    logs: &[(RunLog, PathBuf)],
) -> CliResult {
    let runs: Vec<SweepRun> = configs
        .iter()
        .zip(logs)
        .map(|(c, (l, d))| SweepRun {
            condition: c.condition,
            seed: c.seed,
            run_dir: d.clone(),
            epochs: l.epochs.len(),
            best_epoch: l.best_epoch,
            best_val: l.best_val,
            eos_row_grad_max: l.eos_row_grad_max,
        })
        .collect();
    let mut by_cond: BTreeMap<Condition, Vec<f64>> = BTreeMap::new();
    for r in &runs {
        by_cond.entry(r.condition).or_default().push(r.best_val);
    }
    let median_best_val: BTreeMap<Condition, f64> = by_cond
        .iter()
        .filter_map(|(c, v)| median(v).map(|m| (*c, m)))
        .collect();
    let mut t = Table::new(
        format!("{name}: median best validation score"),
        &["condition", "runs", "median"],
    );
    for (c, v) in &by_cond {
        t.row(vec![
            c.label().into(),
            v.len().to_string(),
            format!("{:.4}", median_best_val[c]),
        ]);
    }
    let text = t.render();
    print!("{text}");
    let seeds: Vec<u64> = configs.iter().map(|c| c.seed).collect();
    let inputs: Vec<PathBuf> = logs.iter().map(|(_, d)| d.join("run.jsonl")).collect();
    write_report(
        &ctx.out.join("sweeps").join(name),
        "train",
        serde_json::json!({ "configs": configs, "seeds": seeds }),
        Some(ctx.seed),
        &inputs,
        &text,
        &Sweep {
            name: name.into(),
            runs,
            median_best_val,
        },
        &[],
    )
}

fn need_data(dir: &std::path::Path, task: &str) -> CliResult {
    if dir.join("manifest.json").exists() {
        return Ok(());
    }
    Err(eoslab::Error::Validation(format!(
        "no dataset at {}; run `eoslab generate {task}` with the same options first",
        dir.display()
    ))
    .into())
}
