use eoslab::analysis::{
    export_plot_data, label_states, pca_top2, render_scatter, Labeling, OutputHead,
};
use eoslab::experiment::{dyck_geometry, RunScalar, StoredRun};
use eoslab::langgen::{sample_dyck_set, scan_enumerate, scan_length_split, DyckConfig, ScanPair};
use eoslab::models::{LstmLm, Seq2Seq, StateTrace, TraceKind};
use eoslab::numerics::RngStream;
use eoslab::training::Task;
use eoslab::{Condition, Error};
use serde::Serialize;

use crate::args::{AnalyzeArgs, AnalyzeTask, ModelSel, SplitArg, Target};
use crate::context::{slug, write_report, CliResult, Ctx};
use crate::eval::{by_seed_table, dyck_sweep, find_runs, same_dyck};
use crate::table::Table;

type Trace = StateTrace<RunScalar>;

fn one_run(ctx: &Ctx, sel: &ModelSel, condition: Condition) -> CliResult<StoredRun> {
    let seeds = [ctx.seed];
    let mut runs = match sel.cutoff {
        Some(cutoff) => find_runs(
            ctx,
            |t| matches!(t, Task::Scan { cutoff: c, .. } if *c == cutoff),
            &[condition],
            Some(&seeds),
        )?,
        None => {
            let dc = DyckConfig {
                k: sel.k,
                ..DyckConfig::standard(sel.m)?
            };
            find_runs(ctx, same_dyck(&dc), &[condition], Some(&seeds))?
        }
    };
    Ok(runs.pop_first().expect("find_runs never returns empty").1)
}

fn split_name(s: SplitArg) -> &'static str {
    match s {
        SplitArg::InDomain => "in-domain",
        SplitArg::OutOfDomain => "out-of-domain",
    }
}

#[derive(Serialize)]
struct PcaSummary {
    states: usize,
    sequences: usize,
    explained: [f64; 2],
    total_variance: f64,
    components: [Vec<f64>; 2],
}

pub fn run(ctx: &Ctx, args: AnalyzeArgs) -> CliResult {
    match args.task {
        AnalyzeTask::Pca {
            model,
            label,
            split,
            samples,
        } => pca(ctx, &model, label, split, samples),
        AnalyzeTask::Probe {
            dyck,
            condition,
            seeds,
        } => {
            let dc = dyck.config(ctx.config.as_ref())?;
            let target = Target {
                condition: if condition.is_empty() {
                    vec![Condition::PlusEos, Condition::MinusEos]
                } else {
                    condition
                },
                seeds,
                checkpoint: None,
                data: None,
            };
            let rows = dyck_sweep(ctx, &dc, &target)?;
            let id = |m: &eoslab::experiment::DyckMetrics| Some(m.probe.in_domain);
            let ood = |m: &eoslab::experiment::DyckMetrics| Some(m.probe.out_of_domain);
            let (table, medians) = by_seed_table(
                format!("Can-end probe accuracy, Dyck-({},{})", dc.k, dc.m),
                &rows,
                |m| (m.condition, m.seed),
                &[
                    (Condition::PlusEos, "+EOS ID", &id),
                    (Condition::PlusEos, "+EOS OOD", &ood),
                    (Condition::MinusEos, "-EOS ID", &id),
                    (Condition::MinusEos, "-EOS OOD", &ood),
                ],
                4,
            );
            let text = table.render();
            print!("{text}");
            write_report(
                &ctx.analysis_dir(&format!("probe-k{}-m{}", dc.k, dc.m)),
                "analyze probe",
                serde_json::to_value(&dc)?,
                Some(ctx.seed),
                &[],
                &text,
                &serde_json::json!({ "columns": ["+EOS ID", "+EOS OOD", "-EOS ID", "-EOS OOD"], "medians": medians, "runs": rows }),
                &[],
            )
        }
        AnalyzeTask::Geometry { model } => {
            if model.cutoff.is_some() {
                return Err(Error::Config(
                    "geometry diagnostics need Dyck stack annotations".into(),
                )
                .into());
            }
            let run = one_run(ctx, &model, model.condition)?;
            let g = dyck_geometry(&ctx.store(), &run.config)?;
            let mut t = Table::new(
                format!(
                    "Hidden-state geometry, Dyck-({},{}) {} seed {}",
                    model.k,
                    model.m,
                    model.condition.label(),
                    ctx.seed
                ),
                &["quantity", "value"],
            );
            t.row(vec![
                "PC1 explained".into(),
                format!("{:.4}", g.explained[0]),
            ]);
            t.row(vec![
                "PC2 explained".into(),
                format!("{:.4}", g.explained[1]),
            ]);
            t.row(vec![
                "empty-stack probe accuracy".into(),
                format!("{:.4}", g.empty_stack_separability),
            ]);
            for c in g.clusters.iter().take(8) {
                let name = if c.stack.is_empty() {
                    "(empty)".to_string()
                } else {
                    c.stack.clone()
                };
                t.row(vec![
                    format!("position r, stack {name} (n={})", c.size),
                    format!("{:+.4}", c.r),
                ]);
            }
            let text = t.render();
            print!("{text}");
            write_report(
                &ctx.analysis_dir(&format!(
                    "geometry-k{}-m{}-{}-s{}",
                    model.k,
                    model.m,
                    slug(model.condition),
                    ctx.seed
                )),
                "analyze geometry",
                serde_json::to_value(&run.config)?,
                Some(ctx.seed),
                &[run.dir.join("checkpoint.json")],
                &text,
                &g,
                &[],
            )
        }
    }
}

fn pca(ctx: &Ctx, sel: &ModelSel, label: Labeling, split: SplitArg, samples: usize) -> CliResult {
    if samples == 0 {
        return Err(Error::Validation("--samples must be positive".into()).into());
    }
    let run = one_run(ctx, sel, sel.condition)?;
    let store = ctx.store();
    let mut inputs = vec![run.dir.join("checkpoint.json")];
    let wants_ref = label == Labeling::EosPlurality;
    let (trace, eos_labels, name) = match &run.config.task {
        Task::Dyck(dc) => {
            let (lo, hi) = match split {
                SplitArg::InDomain => (dc.min_len, dc.max_len),
                SplitArg::OutOfDomain => (dc.test_min, dc.test_max),
            };
            let seqs = sample_dyck_set(
                dc,
                lo,
                hi,
                ctx.seed,
                &format!("analysis-{}", split_name(split)),
                samples,
            )?;
            let (model, _) = store.dyck_model(&run.config, &mut |_| {})?;
            let trace = model.trace_dyck(&seqs, TraceKind::Hidden)?;
            let eos = if wants_ref || sel.condition.trains_eos() {
                let reference: LstmLm<RunScalar> = if sel.condition.trains_eos() {
                    model.clone()
                } else {
                    let r = one_run(ctx, sel, Condition::PlusEos).map_err(|_| {
                        Error::Config(
                            "EOS plurality labels need a trained +EOS model with the same seed"
                                .into(),
                        )
                    })?;
                    inputs.push(r.dir.join("checkpoint.json"));
                    store.dyck_model(&r.config, &mut |_| {})?.0
                };
                let ref_trace = reference.trace_dyck(&seqs, TraceKind::Hidden)?;
                Some((
                    Box::new(reference) as Box<dyn OutputHead<RunScalar>>,
                    ref_trace,
                ))
            } else {
                None
            };
            (trace, eos, format!("dyck-k{}-m{}", dc.k, dc.m))
        }
        Task::Scan { cutoff, .. } => {
            let split_pairs = scan_length_split(&scan_enumerate(), *cutoff)?;
            let pool = match split {
                SplitArg::InDomain => split_pairs.train,
                SplitArg::OutOfDomain => split_pairs.test,
            };
            let pairs = pick(pool, samples, ctx.seed);
            let (model, _) = store.scan_model(&run.config, &mut |_| {})?;
            let trace = scan_trace(&model, &pairs)?;
            let eos = if wants_ref || sel.condition.trains_eos() {
                let reference: Seq2Seq<RunScalar> = if sel.condition.trains_eos() {
                    model.clone()
                } else {
                    let r = one_run(ctx, sel, Condition::PlusEos).map_err(|_| {
                        Error::Config(
                            "EOS plurality labels need a trained +EOS model with the same seed"
                                .into(),
                        )
                    })?;
                    inputs.push(r.dir.join("checkpoint.json"));
                    store.scan_model(&r.config, &mut |_| {})?.0
                };
                let eos_sym = reference.tgt_vocab.symbol(reference.eos()).to_string();
                let mut ref_trace = scan_trace(&reference, &pairs)?;
                if !sel.condition.trains_eos() {
                    // the -EOS trace has no state predicting EOS
                    ref_trace =
                        ref_trace.filter(|m| m.gold_token.as_deref() != Some(eos_sym.as_str()));
                }
                Some((
                    Box::new(reference) as Box<dyn OutputHead<RunScalar>>,
                    ref_trace,
                ))
            } else {
                None
            };
            (trace, eos, format!("scan-l{cutoff}"))
        }
    };
    let proj = pca_top2(&trace.states)?;
    let labels = label_states(
        &trace,
        label,
        eos_labels.as_ref().map(|(h, t)| (h.as_ref(), t)),
    )?;
    let plurality: Option<Vec<bool>> = match &eos_labels {
        Some(_) => Some(
            label_states(
                &trace,
                Labeling::EosPlurality,
                eos_labels.as_ref().map(|(h, t)| (h.as_ref(), t)),
            )?
            .iter()
            .map(|l| l == "true")
            .collect(),
        ),
        None => None,
    };
    let dir = ctx.analysis_dir(&format!(
        "pca-{name}-{}-s{}-{}-{}",
        slug(sel.condition),
        ctx.seed,
        split_name(split),
        format!("{label:?}").to_lowercase()
    ));
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    export_plot_data(
        &trace,
        &proj.coords,
        plurality.as_deref(),
        &dir.join("states.csv"),
    )?;
    let title = format!(
        "{name} {} seed {} ({}), coloured by {label:?}",
        sel.condition.label(),
        ctx.seed,
        split_name(split)
    );
    render_scatter(&proj, &labels, &title, &dir.join("scatter.svg"))?;
    let summary = PcaSummary {
        states: trace.len(),
        sequences: samples,
        explained: proj.explained,
        total_variance: proj.total_variance,
        components: proj.components.clone(),
    };
    let text = format!(
        "{title}\n{} states; PC1 {:.4}, PC2 {:.4} of variance\nwrote {}\n",
        trace.len(),
        proj.explained[0],
        proj.explained[1],
        dir.display()
    );
    print!("{text}");
    write_report(
        &dir,
        "analyze pca",
        serde_json::json!({ "run": run.config, "label": label, "split": split_name(split), "samples": samples }),
        Some(ctx.seed),
        &inputs,
        &text,
        &summary,
        &["states.csv", "scatter.svg"],
    )
}

/// Deterministic subset of `pool`.
fn pick(mut pool: Vec<ScanPair>, n: usize, seed: u64) -> Vec<ScanPair> {
    RngStream::derive(seed, "analysis-pairs", 0).shuffle(&mut pool);
    pool.truncate(n);
    pool
}

fn scan_trace(model: &Seq2Seq<RunScalar>, pairs: &[ScanPair]) -> CliResult<Trace> {
    let enc: Vec<(Vec<usize>, Vec<usize>)> = pairs
        .iter()
        .map(|p| model.encode_pair(p))
        .collect::<Result<_, _>>()?;
    let mut parts = Vec::new();
    for (i, chunk) in enc.chunks(64).enumerate() {
        let batch: Vec<(&[usize], &[usize])> = chunk
            .iter()
            .map(|(s, t)| (s.as_slice(), t.as_slice()))
            .collect();
        let mut t = model.decoder_trace(&batch)?;
        for m in &mut t.meta {
            m.seq_id += i * 64;
        }
        parts.push(t);
    }
    Ok(StateTrace::concat(parts)?)
}
