use std::collections::BTreeMap;
use std::path::PathBuf;

use eoslab::artifacts::read_json;
use eoslab::experiment::{dyck_metrics, median, scan_metrics, DyckMetrics, ScanMetrics};
use eoslab::training::Task;
use eoslab::Condition;
use serde::Serialize;

use crate::args::ReportArgs;
use crate::context::{write_report, CliResult, Ctx};
use crate::table::{fmt_opt, Table};

#[derive(Serialize, Default)]
struct Summary {
    dyck: BTreeMap<String, Vec<DyckMetrics>>,
    scan: BTreeMap<usize, Vec<ScanMetrics>>,
}

fn med<M>(
    rows: &[M],
    cond: Condition,
    key: impl Fn(&M) -> (Condition, Option<f64>),
) -> (Option<f64>, usize) {
    let v: Vec<f64> = rows
        .iter()
        .filter_map(|r| {
            let (c, x) = key(r);
            if c == cond {
                x
            } else {
                None
            }
        })
        .collect();
    (median(&v), v.len())
}

fn cell((m, n): (Option<f64>, usize), digits: usize) -> String {
    match m {
        Some(_) => format!("{} ({n})", fmt_opt(m, digits)),
        None => "-".into(),
    }
}

pub fn run(ctx: &Ctx, args: ReportArgs) -> CliResult {
    let store = ctx.store();
    let mut s = Summary::default();
    let mut inputs: Vec<PathBuf> = Vec::new();
    let mut dyck_shape: BTreeMap<String, (usize, usize, [usize; 4])> = BTreeMap::new();
    for r in store.list()? {
        let metrics_path = r.dir.join("metrics.json");
        if args.cached_only && !metrics_path.exists() {
            continue;
        }
        match &r.config.task {
            Task::Dyck(dc) => {
                let m = if args.cached_only {
                    read_json(&metrics_path)?
                } else {
                    dyck_metrics(&store, &r.config, None, &mut |_| {})?
                };
                let key = format!("k{}-m{:02}", dc.k, dc.m);
                dyck_shape.insert(
                    key.clone(),
                    (
                        dc.k,
                        dc.m,
                        [dc.min_len, dc.max_len, dc.test_min, dc.test_max],
                    ),
                );
                s.dyck.entry(key).or_default().push(m);
            }
            Task::Scan { cutoff, .. } => {
                let m = if args.cached_only {
                    read_json(&metrics_path)?
                } else {
                    scan_metrics(&store, &r.config, &mut |_| {})?
                };
                s.scan.entry(*cutoff).or_default().push(m);
            }
        }
        inputs.push(metrics_path);
    }

    let score = |m: &DyckMetrics| (m.condition, Some(m.test_score));
    let mut close = Table::new(
        "Bracket-closing score on out-of-domain lengths (median, runs)",
        &[
            "k",
            "m",
            "L_train",
            "L_test",
            "+EOS",
            "-EOS",
            "-EOS+RandomCutoff",
        ],
    );
    let mut ppl = Table::new(
        "Perplexity, EOS event excluded (median, runs)",
        &["k", "m", "+EOS ID", "+EOS OOD", "-EOS ID", "-EOS OOD"],
    );
    let mut probe = Table::new(
        "Can-end probe accuracy (median, runs)",
        &["k", "m", "+EOS ID", "+EOS OOD", "-EOS ID", "-EOS OOD"],
    );
    for (key, rows) in &s.dyck {
        let (k, m, l) = dyck_shape[key];
        let head = vec![k.to_string(), m.to_string()];
        let mut c = head.clone();
        c.push(format!("[{}, {}]", l[0], l[1]));
        c.push(format!("[{}, {}]", l[2], l[3]));
        for cond in Condition::ALL {
            c.push(cell(med(rows, cond, score), 4));
        }
        close.row(c);
        let mut p = head.clone();
        let mut q = head;
        for cond in [Condition::PlusEos, Condition::MinusEos] {
            p.push(cell(
                med(rows, cond, |r| (r.condition, Some(r.ppl_in_domain))),
                3,
            ));
            p.push(cell(
                med(rows, cond, |r| (r.condition, Some(r.ppl_out_of_domain))),
                3,
            ));
            q.push(cell(
                med(rows, cond, |r| (r.condition, Some(r.probe.in_domain))),
                4,
            ));
            q.push(cell(
                med(rows, cond, |r| (r.condition, Some(r.probe.out_of_domain))),
                4,
            ));
        }
        ppl.row(p);
        probe.row(q);
    }
    let mut scan = Table::new(
        "SCAN exact match on the length split (median, runs)",
        &["cutoff", "+EOS", "+EOS+Oracle", "-EOS+Oracle"],
    );
    for (cutoff, rows) in &s.scan {
        scan.row(vec![
            cutoff.to_string(),
            cell(
                med(rows, Condition::PlusEos, |r| (r.condition, r.standard)),
                4,
            ),
            cell(
                med(rows, Condition::PlusEos, |r| (r.condition, Some(r.oracle))),
                4,
            ),
            cell(
                med(rows, Condition::MinusEos, |r| (r.condition, Some(r.oracle))),
                4,
            ),
        ]);
    }
    let text = [close.render(), ppl.render(), probe.render(), scan.render()].join("\n");
    print!("{text}");
    write_report(
        &ctx.report_dir("summary"),
        "report",
        serde_json::json!({ "cached_only": args.cached_only }),
        None,
        &inputs,
        &text,
        &s,
        &[],
    )
}
