use eoslab::artifacts::{write_dyck_data, write_scan_data};
use eoslab::langgen::{build_dyck_datasets, scan_enumerate, scan_length_split};
use eoslab::training::Task;
use eoslab::Condition;
use rayon::prelude::*;

use crate::args::{GenerateArgs, GenerateTask};
use crate::context::{CliError, CliResult, Ctx};

pub fn run(ctx: &Ctx, args: GenerateArgs) -> CliResult {
    match args.task {
        Some(GenerateTask::Dyck {
            dyck,
            condition,
            seeds,
        }) => {
            let cfg = dyck.config(ctx.config.as_ref())?;
            let conds = if condition.is_empty() {
                Condition::ALL.to_vec()
            } else {
                condition
            };
            let jobs: Vec<(Condition, u64)> = conds
                .iter()
                .flat_map(|&c| ctx.seeds(&seeds).into_iter().map(move |s| (c, s)))
                .collect();
            ctx.pool()?.install(|| {
                jobs.par_iter()
                    .map(|&(c, s)| dyck_one(ctx, &cfg, c, s))
                    .collect::<CliResult<Vec<_>>>()
            })?;
            Ok(())
        }
        Some(GenerateTask::Scan { scan }) => scan_one(ctx, scan.cutoff(ctx.config.as_ref())?),
        None => {
            let cfg = ctx.config.as_ref().ok_or_else(|| {
                CliError::Usage("generate needs a task (dyck, scan) or --config".into())
            })?;
            for run in cfg.runs()? {
                match &run.task {
                    Task::Dyck(dc) => dyck_one(ctx, dc, run.condition, run.seed)?,
                    Task::Scan { cutoff, .. } => scan_one(ctx, *cutoff)?,
                }
            }
            Ok(())
        }
    }
}

fn dyck_one(
    ctx: &Ctx,
    cfg: &eoslab::langgen::DyckConfig,
    condition: Condition,
    seed: u64,
) -> CliResult {
    let data = build_dyck_datasets(cfg, condition, seed)?;
    let dir = ctx.dyck_data_dir(cfg, condition, seed);
    write_dyck_data(&dir, &data)?;
    println!(
        "{}: {} train, {} val, {} test",
        dir.display(),
        data.train.len(),
        data.validation.len(),
        data.test.len()
    );
    Ok(())
}

fn scan_one(ctx: &Ctx, cutoff: usize) -> CliResult {
    let split = scan_length_split(&scan_enumerate(), cutoff)?;
    let dir = ctx.scan_data_dir(cutoff);
    write_scan_data(&dir, &split)?;
    println!(
        "{}: {} train, {} test",
        dir.display(),
        split.train.len(),
        split.test.len()
    );
    Ok(())
}
