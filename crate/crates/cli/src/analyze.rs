use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::Args;
use rayon::prelude::*;

use boardball_core::logs::BlockLog;
use boardball_core::report::{build_report, dyad_rows, strategy_rows, trial_rows, write_csv, SegmentRow, TrialRow};
use boardball_core::analysis::analyze_trial;

use crate::{usage, write_file, DataError};

pub const TRIALS_CSV: &str = "trials.csv";
pub const SEGMENTS_CSV: &str = "segments.csv";
pub const STRATEGY_CSV: &str = "strategy.csv";
pub const DYAD_CSV: &str = "dyad.csv";
pub const AGGREGATE_JSON: &str = "aggregate.json";

#[derive(Debug, Clone, Args)]
pub struct AnalyzeArgs {
    /// Log files, directories (every `*.jsonl` inside) or glob patterns.
    #[arg(required = true)]
    pub logs: Vec<String>,
    /// Output directory for the metric tables.
    #[arg(long, default_value = "metrics")]
    pub out: PathBuf,
}

/// Expands the inputs to a sorted, de-duplicated list of log files.
pub fn find_logs(inputs: &[String]) -> anyhow::Result<Vec<PathBuf>> {
    let mut paths = Vec::new();
    for input in inputs {
        let p = Path::new(input);
        let pattern = if p.is_dir() {
            p.join("*.jsonl").to_string_lossy().into_owned()
        } else {
            input.clone()
        };
        let entries = glob::glob(&pattern).map_err(|e| usage(format!("bad pattern `{input}`: {e}")))?;
        for entry in entries {
            let path = entry.with_context(|| format!("listing {input}"))?;
            if path.is_file() {
                paths.push(path);
            }
        }
    }
    paths.sort();
    paths.dedup();
    Ok(paths)
}

#[derive(Debug, Default)]
pub struct AnalyzeOutcome {
    pub files: usize,
    pub failed: Vec<(PathBuf, String)>,
    pub trials: Vec<TrialRow>,
    pub segments: Vec<SegmentRow>,
}

fn analyze_file(path: &Path) -> Result<(Vec<TrialRow>, Vec<SegmentRow>), String> {
    let log = BlockLog::read(path).map_err(|e| e.to_string())?;
    let analyzed: Vec<_> = log
        .trials
        .par_iter()
        .map(|t| {
            analyze_trial(t, log.header.block.performer, &log.header.params)
                .map(|m| trial_rows(&log.header.session, &m, t.config.target_side.sign() as i8))
                .map_err(|e| format!("trial {}: {e}", t.config.trial_index))
        })
        .collect();
    let mut trials = Vec::with_capacity(analyzed.len());
    let mut segments = Vec::new();
    for r in analyzed {
        let (t, s) = r?;
        trials.push(t);
        segments.extend(s);
    }
    Ok((trials, segments))
}

/// Analyzes every log; files that fail are reported and skipped.
pub fn analyze_paths(paths: &[PathBuf]) -> AnalyzeOutcome {
    let results: Vec<_> = paths.par_iter().map(|p| (p, analyze_file(p))).collect();
    let mut out = AnalyzeOutcome { files: paths.len(), ..Default::default() };
    for (path, r) in results {
        match r {
            Ok((t, s)) => {
                out.trials.extend(t);
                out.segments.extend(s);
            }
            Err(e) => out.failed.push((path.clone(), e)),
        }
    }
    out
}

/// Writes the four CSVs and the JSON aggregate into `dir`.
pub fn write_outputs(dir: &Path, trials: &[TrialRow], segments: &[SegmentRow]) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let strategy = strategy_rows(trials);
    let dyad = dyad_rows(trials);
    let csv = |name: &str, f: &dyn Fn(&mut Vec<u8>) -> boardball_core::Result<()>| -> anyhow::Result<()> {
        let mut buf = Vec::new();
        f(&mut buf)?;
        write_file(&dir.join(name), buf)
    };
    csv(TRIALS_CSV, &|b| write_csv(trials, b))?;
    csv(SEGMENTS_CSV, &|b| write_csv(segments, b))?;
    csv(STRATEGY_CSV, &|b| write_csv(&strategy, b))?;
    csv(DYAD_CSV, &|b| write_csv(&dyad, b))?;
    let report = build_report(trials, segments, strategy, dyad);
    write_file(&dir.join(AGGREGATE_JSON), serde_json::to_string_pretty(&report)? + "\n")
}

pub fn run(args: &AnalyzeArgs) -> anyhow::Result<AnalyzeOutcome> {
    let paths = find_logs(&args.logs)?;
    if paths.is_empty() {
        return Err(DataError(format!("no logs found in {}", args.logs.join(", "))).into());
    }
    let outcome = analyze_paths(&paths);
    for (path, e) in &outcome.failed {
        eprintln!("skipped {}: {e}", path.display());
    }
    if outcome.failed.len() == paths.len() {
        return Err(DataError(format!("none of the {} logs could be analyzed", paths.len())).into());
    }
    write_outputs(&args.out, &outcome.trials, &outcome.segments)?;
    println!(
        "analyzed {} trials ({} segments) from {} of {} logs into {}",
        outcome.trials.len(),
        outcome.segments.len(),
        paths.len() - outcome.failed.len(),
        paths.len(),
        args.out.display()
    );
    if !outcome.failed.is_empty() {
        return Err(DataError(format!("{} of {} logs failed validation", outcome.failed.len(), paths.len())).into());
    }
    Ok(outcome)
}
