use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use eoslab::artifacts::{read_dyck_data, read_scan_data};
use eoslab::evalx::{bracket_closing_score, exact_match, perplexity, DecodeMode, EvalReport};
use eoslab::experiment::{
    dyck_metrics, median, scan_metrics, DyckMetrics, RunScalar, ScanMetrics, StoredRun,
};
use eoslab::langgen::DyckConfig;
use eoslab::models::{AnyModel, LstmLm, Vocab};
use eoslab::training::Task;
use eoslab::{Condition, Error};
use serde::Serialize;

use crate::args::{EvalArgs, EvalTask, ModeArg, Target};
use crate::context::{write_report, CliError, CliResult, Ctx};
use crate::table::{fmt_opt, Table};

/// Finished runs matching a task, keyed by (condition, seed); the first
/// match wins when several configs share a key.
pub fn find_runs(
    ctx: &Ctx,
    task: impl Fn(&Task) -> bool,
    conditions: &[Condition],
    seeds: Option<&[u64]>,
) -> CliResult<BTreeMap<(Condition, u64), StoredRun>> {
    let mut out = BTreeMap::new();
    for r in ctx.store().list()? {
        let c = &r.config;
        if !task(&c.task)
            || !conditions.contains(&c.condition)
            || seeds.is_some_and(|s| !s.contains(&c.seed))
        {
            continue;
        }
        out.entry((c.condition, c.seed)).or_insert(r);
    }
    if out.is_empty() {
        return Err(Error::Validation(format!(
            "no trained runs under {} match",
            ctx.out.join("runs").display()
        ))
        .into());
    }
    Ok(out)
}

pub fn same_dyck(dc: &DyckConfig) -> impl Fn(&Task) -> bool + '_ {
    move |t| matches!(t, Task::Dyck(d) if d.k == dc.k && d.m == dc.m)
}

fn conditions_or_all(c: &[Condition]) -> Vec<Condition> {
    if c.is_empty() {
        Condition::ALL.to_vec()
    } else {
        c.to_vec()
    }
}

/// Requested seeds, or every cached seed when `--seeds` is absent.
fn seed_filter(ctx: &Ctx, t: &Target) -> Option<Vec<u64>> {
    t.seeds.seeds.as_ref().map(|s| s.resolve(ctx.seed))
}

pub fn dyck_sweep(ctx: &Ctx, dc: &DyckConfig, t: &Target) -> CliResult<Vec<DyckMetrics>> {
    let seeds = seed_filter(ctx, t);
    let runs = find_runs(
        ctx,
        same_dyck(dc),
        &conditions_or_all(&t.condition),
        seeds.as_deref(),
    )?;
    let store = ctx.store();
    runs.values()
        .map(|r| Ok(dyck_metrics(&store, &r.config, None, &mut |_| {})?))
        .collect()
}

/// Column spec: condition, header and the value extracted from a run.
pub type Column<'a, M> = (Condition, &'a str, &'a dyn Fn(&M) -> Option<f64>);

/// Rows per seed plus a median row, one column per condition.
pub fn by_seed_table<M>(
    title: String,
    rows: &[M],
    key: impl Fn(&M) -> (Condition, u64),
    cols: &[Column<'_, M>],
    digits: usize,
) -> (Table, Vec<Option<f64>>) {
    let mut headers = vec!["seed"];
    headers.extend(cols.iter().map(|c| c.1));
    let mut t = Table::new(title, &headers);
    let mut seeds: Vec<u64> = rows.iter().map(|r| key(r).1).collect();
    seeds.sort_unstable();
    seeds.dedup();
    let mut per_col: Vec<Vec<f64>> = vec![Vec::new(); cols.len()];
    for s in &seeds {
        let mut cells = vec![s.to_string()];
        for (i, (cond, _, f)) in cols.iter().enumerate() {
            let v = rows.iter().find(|r| key(r) == (*cond, *s)).and_then(f);
            if let Some(x) = v {
                per_col[i].push(x);
            }
            cells.push(fmt_opt(v, digits));
        }
        t.row(cells);
    }
    let medians: Vec<Option<f64>> = per_col.iter().map(|v| median(v)).collect();
    let mut cells = vec!["median".to_string()];
    cells.extend(medians.iter().map(|m| fmt_opt(*m, digits)));
    t.row(cells);
    (t, medians)
}

#[derive(Serialize)]
struct SweepReport<'a, M> {
    columns: Vec<String>,
    medians: Vec<Option<f64>>,
    runs: &'a [M],
}

pub fn dyck_close_table(dc: &DyckConfig, rows: &[DyckMetrics]) -> (Table, Vec<Option<f64>>) {
    let score = |m: &DyckMetrics| Some(m.test_score);
    by_seed_table(
        format!(
            "Bracket-closing score, Dyck-({},{}), train lengths [{}, {}], test lengths [{}, {}]",
            dc.k, dc.m, dc.min_len, dc.max_len, dc.test_min, dc.test_max
        ),
        rows,
        |m| (m.condition, m.seed),
        &[
            (Condition::PlusEos, "+EOS", &score),
            (Condition::MinusEos, "-EOS", &score),
            (Condition::MinusEosRandomCutoff, "-EOS+RandomCutoff", &score),
        ],
        4,
    )
}

pub fn dyck_ppl_table(dc: &DyckConfig, rows: &[DyckMetrics]) -> (Table, Vec<Option<f64>>) {
    let id = |m: &DyckMetrics| Some(m.ppl_in_domain);
    let ood = |m: &DyckMetrics| Some(m.ppl_out_of_domain);
    by_seed_table(
        format!("Perplexity, Dyck-({},{}), EOS event excluded", dc.k, dc.m),
        rows,
        |m| (m.condition, m.seed),
        &[
            (Condition::PlusEos, "+EOS ID", &id),
            (Condition::PlusEos, "+EOS OOD", &ood),
            (Condition::MinusEos, "-EOS ID", &id),
            (Condition::MinusEos, "-EOS OOD", &ood),
        ],
        3,
    )
}

pub fn scan_table(cutoff: usize, rows: &[ScanMetrics], mode: ModeArg) -> (Table, Vec<Option<f64>>) {
    let std = |m: &ScanMetrics| m.standard;
    let ora = |m: &ScanMetrics| Some(m.oracle);
    let mut cols: Vec<Column<'_, ScanMetrics>> = Vec::new();
    if mode != ModeArg::Oracle {
        cols.push((Condition::PlusEos, "+EOS", &std));
    }
    if mode != ModeArg::Standard {
        cols.push((Condition::PlusEos, "+EOS+Oracle", &ora));
        cols.push((Condition::MinusEos, "-EOS+Oracle", &ora));
    }
    by_seed_table(
        format!("SCAN exact match, length split at {cutoff}"),
        rows,
        |m| (m.condition, m.seed),
        &cols,
        4,
    )
}

fn emit<M: Serialize>(
    ctx: &Ctx,
    name: &str,
    config: serde_json::Value,
    inputs: &[PathBuf],
    (table, medians): (Table, Vec<Option<f64>>),
    runs: &[M],
) -> CliResult {
    let text = table.render();
    print!("{text}");
    let columns = table.headers()[1..].to_vec();
    write_report(
        &ctx.report_dir(name),
        "eval",
        config,
        Some(ctx.seed),
        inputs,
        &text,
        &SweepReport {
            columns,
            medians,
            runs,
        },
        &[],
    )
}

fn run_inputs(
    ctx: &Ctx,
    rows: &[(Condition, u64)],
    task: impl Fn(&Task) -> bool,
) -> CliResult<Vec<PathBuf>> {
    let conds: Vec<Condition> = rows.iter().map(|r| r.0).collect();
    let seeds: Vec<u64> = rows.iter().map(|r| r.1).collect();
    Ok(find_runs(ctx, task, &conds, Some(&seeds))?
        .values()
        .map(|r| r.dir.join("checkpoint.json"))
        .collect())
}

pub fn run(ctx: &Ctx, args: EvalArgs) -> CliResult {
    match args.task {
        EvalTask::DyckClose { dyck, target } | EvalTask::DyckPpl { dyck, target }
            if target.checkpoint.is_some() =>
        {
            single_dyck(ctx, &dyck.config(ctx.config.as_ref())?, &target)
        }
        EvalTask::DyckClose { dyck, target } => {
            let dc = dyck.config(ctx.config.as_ref())?;
            let rows = dyck_sweep(ctx, &dc, &target)?;
            let keys: Vec<_> = rows.iter().map(|m| (m.condition, m.seed)).collect();
            emit(
                ctx,
                &format!("dyck-close-k{}-m{}", dc.k, dc.m),
                serde_json::to_value(&dc)?,
                &run_inputs(ctx, &keys, same_dyck(&dc))?,
                dyck_close_table(&dc, &rows),
                &rows,
            )
        }
        EvalTask::DyckPpl { dyck, target } => {
            let dc = dyck.config(ctx.config.as_ref())?;
            let rows = dyck_sweep(ctx, &dc, &target)?;
            let keys: Vec<_> = rows.iter().map(|m| (m.condition, m.seed)).collect();
            emit(
                ctx,
                &format!("dyck-ppl-k{}-m{}", dc.k, dc.m),
                serde_json::to_value(&dc)?,
                &run_inputs(ctx, &keys, same_dyck(&dc))?,
                dyck_ppl_table(&dc, &rows),
                &rows,
            )
        }
        EvalTask::Scan { scan, target, mode } if target.checkpoint.is_some() => {
            single_scan(ctx, scan.cutoff(ctx.config.as_ref())?, &target, mode)
        }
        EvalTask::Scan { scan, target, mode } => {
            let cutoff = scan.cutoff(ctx.config.as_ref())?;
            let is_scan = |t: &Task| matches!(t, Task::Scan { cutoff: c, .. } if *c == cutoff);
            let conds = if target.condition.is_empty() {
                vec![Condition::PlusEos, Condition::MinusEos]
            } else {
                target.condition.clone()
            };
            let seeds = seed_filter(ctx, &target);
            let runs = find_runs(ctx, is_scan, &conds, seeds.as_deref())?;
            let store = ctx.store();
            let rows: Vec<ScanMetrics> = runs
                .values()
                .map(|r| Ok(scan_metrics(&store, &r.config, &mut |_| {})?))
                .collect::<CliResult<_>>()?;
            let inputs: Vec<PathBuf> = runs
                .values()
                .map(|r| r.dir.join("checkpoint.json"))
                .collect();
            emit(
                ctx,
                &format!("scan-l{cutoff}"),
                serde_json::json!({ "cutoff": cutoff, "mode": format!("{mode:?}").to_lowercase() }),
                &inputs,
                scan_table(cutoff, &rows, mode),
                &rows,
            )
        }
    }
}

fn file_stem(p: &Path) -> String {
    p.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "model".into())
}

fn single_dyck(ctx: &Ctx, dc: &DyckConfig, t: &Target) -> CliResult {
    let (ck, data_dir) = (
        t.checkpoint.as_ref().expect("guarded"),
        t.data.as_ref().expect("required by clap"),
    );
    let AnyModel::Lm(model) = AnyModel::<RunScalar>::load(ck)? else {
        return Err(Error::Validation(format!(
            "{} is not a language-model checkpoint",
            ck.display()
        ))
        .into());
    };
    let data = read_dyck_data(data_dir)?;
    check_vocab(&model, &Vocab::dyck(data.config.k))?;
    if data.config.m != dc.m || data.config.k != dc.k {
        return Err(CliError::Usage(format!(
            "dataset is Dyck-({},{}), flags ask for Dyck-({},{})",
            data.config.k, data.config.m, dc.k, dc.m
        )));
    }
    let mut close =
        bracket_closing_score(&model, &data.test)?.with_context(model.condition, "test", data.seed);
    close.dataset = data_dir.display().to_string();
    let ppl = |set: &[eoslab::langgen::DyckSample], name: &str| -> CliResult<EvalReport> {
        let mut r = EvalReport::new(
            format!("perplexity_{name}"),
            perplexity(&model, set, false)?,
        );
        r.condition = Some(model.condition);
        r.dataset = data_dir.display().to_string();
        Ok(r)
    };
    let reports = vec![
        close,
        ppl(&data.validation, "val")?,
        ppl(&data.test, "test")?,
    ];
    let mut table = Table::new(
        format!("{} on {}", ck.display(), data_dir.display()),
        &["metric", "value"],
    );
    for r in &reports {
        table.row(vec![r.metric.clone(), format!("{:.4}", r.value)]);
    }
    let text = table.render();
    print!("{text}");
    write_report(
        &ctx.report_dir(&format!("single-{}", file_stem(data_dir))),
        "eval",
        serde_json::json!({ "checkpoint": ck, "data": data_dir }),
        None,
        &[ck.clone(), data_dir.join("test.txt")],
        &text,
        &reports,
        &[],
    )
}

fn check_vocab(model: &LstmLm<RunScalar>, want: &Vocab) -> CliResult {
    if model.vocab != *want {
        return Err(Error::Validation(format!(
            "checkpoint vocabulary {:?} does not match the dataset's {:?}",
            model.vocab.symbols(),
            want.symbols()
        ))
        .into());
    }
    Ok(())
}

fn single_scan(ctx: &Ctx, cutoff: usize, t: &Target, mode: ModeArg) -> CliResult {
    let (ck, data_dir) = (
        t.checkpoint.as_ref().expect("guarded"),
        t.data.as_ref().expect("required by clap"),
    );
    let AnyModel::Seq2Seq(model): AnyModel<RunScalar> = AnyModel::load(ck)? else {
        return Err(Error::Validation(format!(
            "{} is not a sequence-to-sequence checkpoint",
            ck.display()
        ))
        .into());
    };
    let split = read_scan_data(data_dir)?;
    if split.cutoff != cutoff {
        return Err(CliError::Usage(format!(
            "dataset cutoff is {}, flags say {cutoff}",
            split.cutoff
        )));
    }
    if model.src_vocab != Vocab::scan_source() || model.tgt_vocab != Vocab::scan_target() {
        return Err(
            Error::Validation("checkpoint vocabulary is not the SCAN vocabulary".into()).into(),
        );
    }
    let mut modes = mode.modes();
    if !model.condition.trains_eos() {
        if mode == ModeArg::Standard {
            return Err(Error::Config(
                "standard decoding needs an EOS-trained model; use --mode oracle".into(),
            )
            .into());
        }
        modes.retain(|m| *m == DecodeMode::Oracle);
    }
    let reports = modes
        .iter()
        .map(|&m| {
            let mut r = exact_match(&model, &split.test, m)?;
            r.condition = Some(model.condition);
            r.dataset = data_dir.display().to_string();
            Ok(r)
        })
        .collect::<CliResult<Vec<_>>>()?;
    let label = |m: &str| match (model.condition, m) {
        (Condition::PlusEos, "exact_match_standard") => "+EOS".to_string(),
        (c, _) => format!("{}+Oracle", c.label()),
    };
    let mut table = Table::new(
        format!("{} on {}", ck.display(), data_dir.display()),
        &["metric", "exact match"],
    );
    for r in &reports {
        table.row(vec![label(&r.metric), format!("{:.4}", r.value)]);
    }
    let text = table.render();
    print!("{text}");
    write_report(
        &ctx.report_dir(&format!("single-{}", file_stem(data_dir))),
        "eval",
        serde_json::json!({ "checkpoint": ck, "data": data_dir }),
        None,
        &[ck.clone(), data_dir.join("test.txt")],
        &text,
        &reports,
        &[],
    )
}
