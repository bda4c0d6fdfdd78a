use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use solrefine_core::model::RunState;
use solrefine_core::trajectory::{
    build_dataset, dataset_stats, split, stats_markdown, truncate, BuildOptions, Dataset, DatasetStats,
    DatasetVariant, TruncateMode,
};

use crate::eval::load_runs;

pub struct DatasetArgs {
    pub dirs: Vec<PathBuf>,
    pub variant: DatasetVariant,
    pub truncate: Option<TruncateMode>,
    pub limit: usize,
    pub split_seed: u64,
    pub train_frac: f64,
    pub include_all: bool,
    pub out: Option<PathBuf>,
}

#[derive(Serialize)]
struct StatsDoc<'a> {
    variant: DatasetVariant,
    truncate: Option<TruncateMode>,
    limit: usize,
    split_seed: u64,
    train_tasks: Vec<String>,
    test_tasks: Vec<String>,
    stats: &'a [DatasetStats],
}

fn write_jsonl(ds: &Dataset, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    ds.write_jsonl(&mut buf)?;
    fs::write(path, buf).with_context(|| format!("writing {}", path.display()))
}

/// Builds the dataset from every run under `dirs`, splits it by task,
/// optionally truncates each sample, and writes JSONL plus statistics.
pub fn cmd_dataset(args: &DatasetArgs) -> Result<PathBuf> {
    let mut runs: Vec<RunState> = Vec::new();
    for dir in &args.dirs {
        runs.extend(load_runs(dir)?);
    }
    let ds = build_dataset(&runs, args.variant, BuildOptions { include_all: args.include_all })?;
    let (mut train, mut test) = split(&ds, args.train_frac, args.split_seed)?;
    if let Some(mode) = args.truncate {
        for side in [&mut train, &mut test] {
            for sample in &mut side.samples {
                *sample = truncate(sample, args.limit, mode);
            }
        }
    }
    let out = args.out.clone().unwrap_or_else(|| args.dirs[0].join("datasets"));
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    write_jsonl(&train, &out.join(format!("{}.jsonl", train.name)))?;
    write_jsonl(&test, &out.join(format!("{}.jsonl", test.name)))?;

    let mut whole = train.clone();
    whole.name = ds.name.clone();
    whole.samples.extend(test.samples.iter().cloned());
    let stats = [dataset_stats(&whole), dataset_stats(&train), dataset_stats(&test)];
    let doc = StatsDoc {
        variant: args.variant,
        truncate: args.truncate,
        limit: args.limit,
        split_seed: args.split_seed,
        train_tasks: train.task_ids(),
        test_tasks: test.task_ids(),
        stats: &stats,
    };
    let json = serde_json::to_string_pretty(&doc)?;
    fs::write(out.join(format!("{}_stats.json", ds.name)), json + "\n")?;
    fs::write(out.join(format!("{}_stats.md", ds.name)), stats_markdown(&stats))?;
    println!(
        "{}: {} train / {} test samples ({} / {} tasks) -> {}",
        ds.name,
        train.samples.len(),
        test.samples.len(),
        train.task_ids().len(),
        test.task_ids().len(),
        out.display()
    );
    Ok(out)
}
