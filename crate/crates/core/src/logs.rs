//! Block logs: one JSON-lines file per block plus a summary CSV.
//!
//! Line kinds, in file order:
//!
//! * `block`: header with the block, simulator parameters and session id,
//! * `frame`: one per [`SampleFrame`], fields in declaration order,
//! * `trial`: closes the frames logged since the previous `trial` line,
//! * `block_end`: footer; `incomplete` is set when the block was cut short.
//!
//! Floats are written in shortest round-trip form, so reading a log back
//! reproduces every value bit for bit.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dynamics::Side;
use crate::error::{Error, Result};
use crate::params::SimParams;
use crate::protocol::{Block, Condition, SampleFrame, TrialConfig, TrialOutcome, TrialRecord};

pub const SCHEMA_VERSION: u32 = 1;
const FRAME_PREFIX: &str = "{\"kind\":\"frame\",";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockHeader {
    pub kind: String,
    pub schema_version: u32,
    pub session: String,
    pub block: Block,
    pub params: SimParams,
    /// Free-form description of who played (agent configs, client roles).
    #[serde(default)]
    pub players: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialLine {
    pub kind: String,
    pub block_index: u32,
    pub trial_index: u32,
    pub target_side: Side,
    pub condition: Condition,
    pub dwell_required: f64,
    pub outcome: TrialOutcome,
    pub completion_time: Option<f64>,
    pub n_failures: u32,
    pub attempt_start: Option<f64>,
}

impl TrialLine {
    pub fn from_record(r: &TrialRecord) -> Self {
        Self {
            kind: "trial".into(),
            block_index: r.config.block_index,
            trial_index: r.config.trial_index,
            target_side: r.config.target_side,
            condition: r.config.condition,
            dwell_required: r.config.dwell_required,
            outcome: r.outcome,
            completion_time: r.completion_time,
            n_failures: r.n_failures,
            attempt_start: r.attempt_start,
        }
    }

    fn config(&self) -> TrialConfig {
        TrialConfig {
            target_side: self.target_side,
            dwell_required: self.dwell_required,
            condition: self.condition,
            trial_index: self.trial_index,
            block_index: self.block_index,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockFooter {
    pub kind: String,
    pub n_trials: u32,
    pub n_succeeded: u32,
    pub incomplete: bool,
    #[serde(default)]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockLog {
    pub header: BlockHeader,
    pub trials: Vec<TrialRecord>,
    pub footer: BlockFooter,
}

impl BlockLog {
    pub fn new(session: &str, block: Block, params: SimParams, players: serde_json::Value, trials: Vec<TrialRecord>) -> Self {
        let n_succeeded = trials.iter().filter(|t| t.succeeded()).count() as u32;
        let n_aborted = trials.iter().filter(|t| t.outcome == TrialOutcome::Aborted).count() as u32;
        let incomplete = n_succeeded + n_aborted < block.trials_required;
        Self {
            header: BlockHeader {
                kind: "block".into(),
                schema_version: SCHEMA_VERSION,
                session: session.into(),
                block,
                params,
                players,
            },
            footer: BlockFooter {
                kind: "block_end".into(),
                n_trials: trials.len() as u32,
                n_succeeded,
                incomplete,
                error: None,
            },
            trials,
        }
    }

    /// `<session>_block07_dyad_dyadic_on`
    pub fn stem(&self) -> String {
        let b = &self.header.block;
        format!(
            "{}_block{:02}_{}_{}",
            self.header.session,
            b.index,
            b.performer.label(),
            b.condition.label()
        )
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        serde_json::to_writer(&mut out, &self.header)?;
        out.write_all(b"\n")?;
        let mut line = String::with_capacity(512);
        for trial in &self.trials {
            for frame in &trial.frames {
                line.clear();
                line.push_str(FRAME_PREFIX);
                let body = serde_json::to_string(frame)?;
                line.push_str(&body[1..]);
                line.push('\n');
                out.write_all(line.as_bytes())?;
            }
            serde_json::to_writer(&mut out, &TrialLine::from_record(trial))?;
            out.write_all(b"\n")?;
        }
        serde_json::to_writer(&mut out, &self.footer)?;
        out.write_all(b"\n")?;
        out.flush()?;
        Ok(())
    }

    pub fn summary_csv(&self) -> String {
        let mut s = String::from("block,trial,condition,completion_time,n_failures\n");
        for t in &self.trials {
            let ct = t.completion_time.map(|v| v.to_string()).unwrap_or_default();
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                t.config.block_index,
                t.config.trial_index,
                t.config.condition.label(),
                ct,
                t.n_failures
            );
        }
        s
    }

    /// Writes `<stem>.jsonl` and `<stem>_summary.csv` into `dir`.
    pub fn persist(&self, dir: &Path) -> Result<(PathBuf, PathBuf)> {
        std::fs::create_dir_all(dir)?;
        let jsonl = dir.join(format!("{}.jsonl", self.stem()));
        let csv = dir.join(format!("{}_summary.csv", self.stem()));
        self.write_jsonl(BufWriter::new(File::create(&jsonl)?))?;
        std::fs::write(&csv, self.summary_csv())?;
        Ok((jsonl, csv))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let file = File::open(path)?;
        Self::read_from(BufReader::new(file), path)
    }

    pub fn read_from<R: BufRead>(reader: R, path: &Path) -> Result<Self> {
        let schema = |line: usize, message: String| Error::Schema {
            path: path.to_path_buf(),
            line,
            message,
        };
        let mut header: Option<BlockHeader> = None;
        let mut footer: Option<BlockFooter> = None;
        let mut frames: Vec<SampleFrame> = Vec::new();
        let mut trials = Vec::new();

        for (i, line) in reader.lines().enumerate() {
            let lineno = i + 1;
            let line = line?;
            if line.is_empty() {
                continue;
            }
            if footer.is_some() {
                return Err(schema(lineno, "content after block_end".into()));
            }
            if line.starts_with(FRAME_PREFIX) {
                if header.is_none() {
                    return Err(schema(lineno, "frame before block header".into()));
                }
                let frame: SampleFrame = serde_json::from_str(&line).map_err(|e| schema(lineno, e.to_string()))?;
                if let Some(prev) = frames.last() {
                    if frame.t <= prev.t {
                        return Err(schema(lineno, format!("frame time {} not after {}", frame.t, prev.t)));
                    }
                }
                frames.push(frame);
                continue;
            }
            let kind: Kind = serde_json::from_str(&line).map_err(|e| schema(lineno, e.to_string()))?;
            match kind.kind.as_str() {
                "block" => {
                    if header.is_some() {
                        return Err(schema(lineno, "duplicate block header".into()));
                    }
                    let h: BlockHeader = serde_json::from_str(&line).map_err(|e| schema(lineno, e.to_string()))?;
                    if h.schema_version != SCHEMA_VERSION {
                        return Err(schema(lineno, format!("unsupported schema version {}", h.schema_version)));
                    }
                    header = Some(h);
                }
                "trial" => {
                    let t: TrialLine = serde_json::from_str(&line).map_err(|e| schema(lineno, e.to_string()))?;
                    if let Some(f) = frames.iter().find(|f| f.trial_index != t.trial_index) {
                        return Err(schema(
                            lineno,
                            format!("frame of trial {} inside trial {}", f.trial_index, t.trial_index),
                        ));
                    }
                    if t.outcome == TrialOutcome::Succeeded && t.completion_time.is_none() {
                        return Err(schema(lineno, "succeeded trial without completion_time".into()));
                    }
                    trials.push(TrialRecord {
                        config: t.config(),
                        frames: std::mem::take(&mut frames),
                        outcome: t.outcome,
                        completion_time: t.completion_time,
                        n_failures: t.n_failures,
                        attempt_start: t.attempt_start,
                    });
                }
                "block_end" => {
                    let f: BlockFooter = serde_json::from_str(&line).map_err(|e| schema(lineno, e.to_string()))?;
                    if f.n_trials as usize != trials.len() {
                        return Err(schema(
                            lineno,
                            format!("footer counts {} trials, found {}", f.n_trials, trials.len()),
                        ));
                    }
                    footer = Some(f);
                }
                other => return Err(schema(lineno, format!("unknown line kind `{other}`"))),
            }
        }
        let header = header.ok_or_else(|| schema(0, "missing block header".into()))?;
        if !frames.is_empty() {
            return Err(schema(0, "frames after the last trial line".into()));
        }
        let footer = footer.ok_or_else(|| schema(0, "missing block_end footer".into()))?;
        Ok(Self { header, trials, footer })
    }
}

#[derive(Deserialize)]
struct Kind {
    kind: String,
}
