use std::path::PathBuf;

use anyhow::Context;
use clap::Args;
use rayon::prelude::*;

use boardball_core::agents::{run_block, AgentConfig, AgentPair, RunSettings, DEFAULT_WATCHDOG_S};
use boardball_core::logs::BlockLog;
use boardball_core::protocol::{build_schedule_with, Block, Condition, Mode, ProtocolSettings, TRIALS_PER_BLOCK};
use boardball_core::session::{summarize, BlockSummary};

use crate::{load_params, usage};

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Output directory for block logs.
    #[arg(long, default_value = "logs")]
    pub out: PathBuf,
    /// Simulator parameters (TOML); missing keys keep their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Agent playing participant A and the left handle in dyadic blocks.
    #[arg(long)]
    pub agent_a: Option<PathBuf>,
    /// Agent playing participant B and the right handle.
    #[arg(long)]
    pub agent_b: Option<PathBuf>,
    /// Comma-separated block filter: `bimanual`, `dyadic`, `on`, `off` or
    /// full labels such as `dyadic_on`. Default: every block.
    #[arg(long, value_delimiter = ',')]
    pub conditions: Vec<String>,
    #[arg(long, default_value_t = TRIALS_PER_BLOCK)]
    pub trials_per_block: u32,
    /// Invert every haptic flag of the schedule.
    #[arg(long)]
    pub counterbalance: bool,
    /// Simulated seconds before an unfinished trial is aborted.
    #[arg(long, default_value_t = DEFAULT_WATCHDOG_S)]
    pub watchdog: f64,
    /// Session id embedded in log file names.
    #[arg(long, default_value = "sim")]
    pub session: String,
}

fn matches_filter(condition: &Condition, filter: &[String]) -> anyhow::Result<bool> {
    if filter.is_empty() {
        return Ok(true);
    }
    let mut hit = false;
    for f in filter {
        let m = match f.as_str() {
            "all" => true,
            "bimanual" => condition.mode == Mode::Bimanual,
            "dyadic" => condition.mode == Mode::Dyadic,
            "on" => condition.haptic,
            "off" => !condition.haptic,
            label => match Condition::parse(label) {
                Some(c) => c == *condition,
                None => return Err(usage(format!("unknown condition filter `{label}`"))),
            },
        };
        hit |= m;
    }
    Ok(hit)
}

fn load_agent(path: Option<&PathBuf>, default: AgentConfig) -> anyhow::Result<AgentConfig> {
    match path {
        None => Ok(default),
        Some(p) => AgentConfig::load(p).map_err(|e| usage(e.to_string())),
    }
}

/// Blocks of the schedule selected by the arguments.
pub fn selected_blocks(args: &SimulateArgs) -> anyhow::Result<Vec<Block>> {
    if args.trials_per_block == 0 {
        return Err(usage("--trials-per-block must be at least 1"));
    }
    let schedule = build_schedule_with(args.counterbalance, args.trials_per_block);
    let mut blocks = Vec::new();
    for b in schedule.blocks {
        if matches_filter(&b.condition, &args.conditions)? {
            blocks.push(b);
        }
    }
    if blocks.is_empty() {
        return Err(usage("the condition filter selects no blocks"));
    }
    Ok(blocks)
}

/// Runs the selected blocks in parallel and writes one log per block.
pub fn run(args: &SimulateArgs) -> anyhow::Result<Vec<BlockSummary>> {
    let params = load_params(args.config.as_deref())?;
    let defaults = AgentPair::default();
    let pair = AgentPair {
        a: load_agent(args.agent_a.as_ref(), defaults.a)?,
        b: load_agent(args.agent_b.as_ref(), defaults.b)?,
    };
    pair.validate().map_err(|e| usage(e.to_string()))?;
    if !(args.watchdog.is_finite() && args.watchdog > 0.0) {
        return Err(usage("--watchdog must be positive"));
    }
    let blocks = selected_blocks(args)?;
    std::fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let settings = RunSettings { seed: args.seed, watchdog_s: args.watchdog, protocol: ProtocolSettings::default() };

    let summaries: Vec<anyhow::Result<BlockSummary>> = blocks
        .par_iter()
        .map(|block| {
            let agents = pair.for_block(block.performer);
            let trials = run_block(&agents, *block, &params, &settings)
                .with_context(|| format!("block {}", block.index))?;
            let players = serde_json::json!({
                "kind": "agents",
                "seed": args.seed,
                "agents": agents,
            });
            let log = BlockLog::new(&args.session, *block, params, players, trials);
            let (jsonl, _) = log.persist(&args.out).with_context(|| format!("writing block {}", block.index))?;
            let mut summary = summarize(&log);
            summary.files = vec![jsonl.file_name().unwrap_or_default().to_string_lossy().into_owned()];
            Ok(summary)
        })
        .collect();

    let mut out = Vec::with_capacity(summaries.len());
    for s in summaries {
        let s = s?;
        let ct = s.mean_completion_time.map_or("-".to_string(), |c| format!("{c:.3} s"));
        println!(
            "block {:02}  {:<12} {:>3}/{:<3} succeeded  mean completion time {ct}  {}",
            s.block_index,
            s.condition,
            s.n_succeeded,
            s.n_trials,
            s.files.first().map(String::as_str).unwrap_or(""),
        );
        out.push(s);
    }
    Ok(out)
}
