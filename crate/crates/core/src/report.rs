//! Flat per-trial and per-segment rows, and the aggregate tables built
//! from them.
//!
//! `analyze` turns block logs into [`TrialRow`]s and [`SegmentRow`]s; the
//! strategy and dyad rows and the [`Report`] are pure functions of those,
//! so re-running the report on the CSV files reproduces the same numbers.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::analysis::{
    analyze_trial, dyad_comparison, strategy_ellipse, Metric, TrialMetrics, DELAY_FRACTIONS, STRATEGY_GROUP_SIZE,
};
use crate::error::{Error, Result};
use crate::logs::BlockLog;
use crate::protocol::{Condition, Mode, Performer, TrialOutcome};

/// Trials per completion-time / NP bin.
pub const BIN_SIZE: usize = 30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub session: String,
    pub block: u32,
    pub performer: Performer,
    pub condition: String,
    pub trial: u32,
    pub target_side: i8,
    pub outcome: TrialOutcome,
    pub n_failures: u32,
    pub completion_time: Option<f64>,
    pub np: Option<usize>,
    pub share_cooperative: Option<f64>,
    pub share_competitive: Option<f64>,
    pub share_single: Option<f64>,
    pub share_still: Option<f64>,
    pub n_segments: usize,
    pub n_cooperative: usize,
    pub delay_10: Option<f64>,
    pub delay_20: Option<f64>,
    pub delay_30: Option<f64>,
    pub delay_40: Option<f64>,
    pub strategy_distance: Option<f64>,
    pub strategy_velocity: Option<f64>,
    pub strategy_exclusion: Option<String>,
}

impl TrialRow {
    pub fn condition(&self) -> Result<Condition> {
        parse_condition(&self.condition)
    }

    pub fn shares(&self) -> Option<[f64; 4]> {
        Some([self.share_cooperative?, self.share_competitive?, self.share_single?, self.share_still?])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentRow {
    pub session: String,
    pub block: u32,
    pub performer: Performer,
    pub condition: String,
    pub trial: u32,
    pub segment: usize,
    /// Seconds from the release of the final attempt.
    pub t_start: f64,
    pub t_end: f64,
    pub direction: i8,
    pub angle_change_deg: f64,
    pub displacement_left: f64,
    pub displacement_right: f64,
    pub cooperative: bool,
    pub delay_10: Option<f64>,
    pub delay_20: Option<f64>,
    pub delay_30: Option<f64>,
    pub delay_40: Option<f64>,
    pub signed_delay_10: Option<f64>,
    pub signed_delay_20: Option<f64>,
    pub signed_delay_30: Option<f64>,
    pub signed_delay_40: Option<f64>,
}

impl SegmentRow {
    pub fn delays(&self) -> [Option<f64>; 4] {
        [self.delay_10, self.delay_20, self.delay_30, self.delay_40]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyRow {
    pub session: String,
    pub performer: Performer,
    pub condition: String,
    /// 1-based group of 30 consecutive trials.
    pub group: usize,
    pub n_points: usize,
    pub center_distance: f64,
    pub center_velocity: f64,
    pub rotation_deg: f64,
    pub half_width: f64,
    pub half_height: f64,
    pub area: f64,
    pub short_group: bool,
    pub degenerate: bool,
    pub unstable_rotation: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DyadRow {
    pub session: String,
    pub haptic: bool,
    pub participant: Performer,
    pub metric: Metric,
    pub v_self: f64,
    pub v_partner: f64,
    pub v_dyad: f64,
    pub x: f64,
    pub y: f64,
    pub below_diagonal: bool,
}

pub fn parse_condition(label: &str) -> Result<Condition> {
    Condition::parse(label).ok_or_else(|| Error::InvalidParam {
        name: "condition",
        reason: format!("unknown condition label `{label}`"),
    })
}

/// Rows for one analyzed trial.
pub fn trial_rows(session: &str, m: &TrialMetrics, target_side: i8) -> (TrialRow, Vec<SegmentRow>) {
    let condition = m.condition.label();
    let delay = |k| m.mean_delay(k);
    let trial = TrialRow {
        session: session.to_string(),
        block: m.block_index,
        performer: m.performer,
        condition: condition.clone(),
        trial: m.trial_index,
        target_side,
        outcome: m.outcome,
        n_failures: m.n_failures,
        completion_time: m.completion_time,
        np: m.np,
        share_cooperative: m.shares.map(|s| s.cooperative),
        share_competitive: m.shares.map(|s| s.competitive),
        share_single: m.shares.map(|s| s.single),
        share_still: m.shares.map(|s| s.still),
        n_segments: m.segments.len(),
        n_cooperative: m.segments.iter().filter(|s| s.cooperative).count(),
        delay_10: delay(0),
        delay_20: delay(1),
        delay_30: delay(2),
        delay_40: delay(3),
        strategy_distance: m.strategy.map(|p| p.distance_to_target_mid),
        strategy_velocity: m.strategy.map(|p| p.velocity_toward_target),
        strategy_exclusion: m.strategy_exclusion.map(|e| {
            serde_json::to_value(e).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default()
        }),
    };
    let segments = m
        .segments
        .iter()
        .enumerate()
        .map(|(i, s)| SegmentRow {
            session: session.to_string(),
            block: m.block_index,
            performer: m.performer,
            condition: condition.clone(),
            trial: m.trial_index,
            segment: i,
            t_start: s.t_start,
            t_end: s.t_end,
            direction: s.direction,
            angle_change_deg: s.angle_change.to_degrees(),
            displacement_left: s.displacement_left,
            displacement_right: s.displacement_right,
            cooperative: s.cooperative,
            delay_10: s.delays[0],
            delay_20: s.delays[1],
            delay_30: s.delays[2],
            delay_40: s.delays[3],
            signed_delay_10: s.signed_delays[0],
            signed_delay_20: s.signed_delays[1],
            signed_delay_30: s.signed_delays[2],
            signed_delay_40: s.signed_delays[3],
        })
        .collect();
    (trial, segments)
}

/// Analyzes every trial of a block log, in file order.
pub fn analyze_log(log: &BlockLog) -> Result<(Vec<TrialRow>, Vec<SegmentRow>)> {
    let mut trials = Vec::with_capacity(log.trials.len());
    let mut segments = Vec::new();
    for t in &log.trials {
        let m = analyze_trial(t, log.header.block.performer, &log.header.params)?;
        let (row, segs) = trial_rows(&log.header.session, &m, t.config.target_side.sign() as i8);
        trials.push(row);
        segments.extend(segs);
    }
    Ok((trials, segments))
}

type StreamKey = (String, Performer, String);

/// Trials grouped per session, performer and condition, in block and trial
/// order.
fn streams(trials: &[TrialRow]) -> BTreeMap<StreamKey, Vec<&TrialRow>> {
    let mut out: BTreeMap<StreamKey, Vec<&TrialRow>> = BTreeMap::new();
    for t in trials {
        out.entry((t.session.clone(), t.performer, t.condition.clone())).or_default().push(t);
    }
    for v in out.values_mut() {
        v.sort_by_key(|t| (t.block, t.trial));
    }
    out
}

/// Ellipses over consecutive groups of 30 trials per stream. Trials
/// without a strategy point still count toward the group boundaries.
pub fn strategy_rows(trials: &[TrialRow]) -> Vec<StrategyRow> {
    let mut rows = Vec::new();
    for ((session, performer, condition), stream) in streams(trials) {
        for (g, chunk) in stream.chunks(STRATEGY_GROUP_SIZE).enumerate() {
            let points: Vec<[f64; 2]> = chunk
                .iter()
                .filter_map(|t| Some([t.strategy_distance?, t.strategy_velocity?]))
                .collect();
            let e = strategy_ellipse(&points);
            rows.push(StrategyRow {
                session: session.clone(),
                performer,
                condition: condition.clone(),
                group: g + 1,
                n_points: e.n_points,
                center_distance: e.center[0],
                center_velocity: e.center[1],
                rotation_deg: e.rotation.to_degrees(),
                half_width: e.half_width,
                half_height: e.half_height,
                area: e.area(),
                short_group: e.short_group || chunk.len() < STRATEGY_GROUP_SIZE,
                degenerate: e.degenerate,
                unstable_rotation: e.unstable_rotation,
            });
        }
    }
    rows
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Per session and feedback setting, each participant's bimanual mean
/// against their partner's and the dyad's, for completion time and NP.
pub fn dyad_rows(trials: &[TrialRow]) -> Vec<DyadRow> {
    let mut values: BTreeMap<(String, bool, Performer, Metric), Vec<f64>> = BTreeMap::new();
    for t in trials {
        let Ok(c) = t.condition() else { continue };
        let key = |metric| (t.session.clone(), c.haptic, t.performer, metric);
        if let Some(ct) = t.completion_time {
            values.entry(key(Metric::CompletionTime)).or_default().push(ct);
        }
        if let Some(np) = t.np {
            values.entry(key(Metric::Np)).or_default().push(np as f64);
        }
    }
    let means: BTreeMap<_, f64> = values.into_iter().filter_map(|(k, v)| Some((k, mean(&v)?))).collect();
    let sessions: std::collections::BTreeSet<String> = trials.iter().map(|t| t.session.clone()).collect();
    let mut rows = Vec::new();
    for session in sessions {
        for haptic in [true, false] {
            for metric in [Metric::CompletionTime, Metric::Np] {
                let get = |p| means.get(&(session.clone(), haptic, p, metric)).copied();
                let (Some(a), Some(b), Some(d)) =
                    (get(Performer::ParticipantA), get(Performer::ParticipantB), get(Performer::Dyad))
                else {
                    continue;
                };
                for (who, v_self, v_partner) in [(Performer::ParticipantA, a, b), (Performer::ParticipantB, b, a)] {
                    let c = dyad_comparison(v_self, v_partner, d, metric);
                    rows.push(DyadRow {
                        session: session.clone(),
                        haptic,
                        participant: who,
                        metric,
                        v_self,
                        v_partner,
                        v_dyad: d,
                        x: c.x,
                        y: c.y,
                        below_diagonal: c.below_diagonal(),
                    });
                }
            }
        }
    }
    rows
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub n: usize,
    pub mean: Option<f64>,
    /// Sample standard deviation; absent below two values.
    pub std: Option<f64>,
}

impl Stat {
    pub fn of(v: &[f64]) -> Self {
        let m = mean(v);
        let std = (v.len() > 1).then(|| {
            let m = m.unwrap();
            (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
        });
        Stat { n: v.len(), mean: m, std }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinRow {
    pub condition: String,
    /// 1-based.
    pub bin: usize,
    pub first_trial: usize,
    pub last_trial: usize,
    pub n: usize,
    pub mean: Option<f64>,
    pub std: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SharesRow {
    pub condition: String,
    pub n_trials: usize,
    pub cooperative: f64,
    pub competitive: f64,
    pub single: f64,
    pub still: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayRow {
    pub condition: String,
    pub n_segments: usize,
    pub delay_10: Option<f64>,
    pub delay_20: Option<f64>,
    pub delay_30: Option<f64>,
    pub delay_40: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionSummary {
    pub condition: String,
    pub n_trials: usize,
    pub n_succeeded: usize,
    pub n_aborted: usize,
    pub completion_time: Stat,
    pub np: Stat,
    pub n_failures: Stat,
}

/// Everything the report tables show; also written as the analysis JSON
/// aggregate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub delay_fractions: [f64; 4],
    pub conditions: Vec<ConditionSummary>,
    pub completion_time_bins: Vec<BinRow>,
    pub np_bins: Vec<BinRow>,
    pub shares: Vec<SharesRow>,
    pub delay: Vec<DelayRow>,
    pub strategy: Vec<StrategyRow>,
    pub dyad: Vec<DyadRow>,
}

impl Report {
    pub fn condition(&self, label: &str) -> Option<&ConditionSummary> {
        self.conditions.iter().find(|c| c.condition == label)
    }

    pub fn delay_for(&self, label: &str) -> Option<&DelayRow> {
        self.delay.iter().find(|c| c.condition == label)
    }

    pub fn shares_for(&self, label: &str) -> Option<&SharesRow> {
        self.shares.iter().find(|c| c.condition == label)
    }
}

fn condition_order(label: &str) -> usize {
    Condition::ALL.iter().position(|c| c.label() == label).unwrap_or(usize::MAX)
}

fn sorted_conditions<'a>(labels: impl Iterator<Item = &'a str>) -> Vec<String> {
    let mut v: Vec<String> = labels.map(str::to_string).collect();
    v.sort_by_key(|l| (condition_order(l), l.clone()));
    v.dedup();
    v
}

/// Bins of 30 consecutive trials within each session/performer stream,
/// pooled across streams of the same condition.
fn bins(trials: &[TrialRow], value: impl Fn(&TrialRow) -> Option<f64>) -> Vec<BinRow> {
    let mut pooled: BTreeMap<(usize, String, usize), Vec<f64>> = BTreeMap::new();
    let mut len: BTreeMap<String, usize> = BTreeMap::new();
    for ((_, _, condition), stream) in streams(trials) {
        let n = len.entry(condition.clone()).or_default();
        *n = (*n).max(stream.len());
        for (i, t) in stream.iter().enumerate() {
            let e = pooled.entry((condition_order(&condition), condition.clone(), i / BIN_SIZE)).or_default();
            if let Some(v) = value(t) {
                e.push(v);
            }
        }
    }
    pooled
        .into_iter()
        .map(|((_, condition, b), v)| {
            let s = Stat::of(&v);
            BinRow {
                last_trial: ((b + 1) * BIN_SIZE).min(len[&condition]),
                condition,
                bin: b + 1,
                first_trial: b * BIN_SIZE + 1,
                n: s.n,
                mean: s.mean,
                std: s.std,
            }
        })
        .collect()
}

pub fn build_report(
    trials: &[TrialRow],
    segments: &[SegmentRow],
    strategy: Vec<StrategyRow>,
    dyad: Vec<DyadRow>,
) -> Report {
    let labels = sorted_conditions(trials.iter().map(|t| t.condition.as_str()));
    fn of<'a>(trials: &'a [TrialRow], label: &'a str) -> impl Iterator<Item = &'a TrialRow> + 'a {
        trials.iter().filter(move |t| t.condition == label)
    }

    let conditions = labels
        .iter()
        .map(|label| {
            let ct: Vec<f64> = of(trials, label).filter_map(|t| t.completion_time).collect();
            let np: Vec<f64> = of(trials, label).filter_map(|t| t.np.map(|n| n as f64)).collect();
            let fails: Vec<f64> = of(trials, label).map(|t| t.n_failures as f64).collect();
            ConditionSummary {
                condition: label.clone(),
                n_trials: of(trials, label).count(),
                n_succeeded: of(trials, label).filter(|t| t.outcome == TrialOutcome::Succeeded).count(),
                n_aborted: of(trials, label).filter(|t| t.outcome == TrialOutcome::Aborted).count(),
                completion_time: Stat::of(&ct),
                np: Stat::of(&np),
                n_failures: Stat::of(&fails),
            }
        })
        .collect();

    let shares = labels
        .iter()
        .filter_map(|label| {
            let rows: Vec<[f64; 4]> = of(trials, label).filter_map(TrialRow::shares).collect();
            if rows.is_empty() {
                return None;
            }
            let col = |k: usize| rows.iter().map(|r| r[k]).sum::<f64>() / rows.len() as f64;
            Some(SharesRow {
                condition: label.clone(),
                n_trials: rows.len(),
                cooperative: col(0),
                competitive: col(1),
                single: col(2),
                still: col(3),
            })
        })
        .collect();

    let seg_labels = sorted_conditions(segments.iter().map(|s| s.condition.as_str()));
    let delay = seg_labels
        .iter()
        .map(|label| {
            let segs: Vec<&SegmentRow> = segments.iter().filter(|s| &s.condition == label && s.cooperative).collect();
            let col = |k: usize| mean(&segs.iter().filter_map(|s| s.delays()[k]).collect::<Vec<_>>());
            DelayRow {
                condition: label.clone(),
                n_segments: segs.len(),
                delay_10: col(0),
                delay_20: col(1),
                delay_30: col(2),
                delay_40: col(3),
            }
        })
        .collect();

    Report {
        delay_fractions: DELAY_FRACTIONS,
        conditions,
        completion_time_bins: bins(trials, |t| t.completion_time),
        np_bins: bins(trials, |t| t.np.map(|n| n as f64)),
        shares,
        delay,
        strategy,
        dyad,
    }
}

/// Convenience for in-memory pipelines: strategy and dyad rows derived
/// from the trial rows.
pub fn report_from_rows(trials: &[TrialRow], segments: &[SegmentRow]) -> Report {
    build_report(trials, segments, strategy_rows(trials), dyad_rows(trials))
}

/// Whether a condition label is a dyadic one.
pub fn is_dyadic(label: &str) -> bool {
    Condition::parse(label).is_some_and(|c| c.mode == Mode::Dyadic)
}

pub fn write_csv<T: Serialize, W: Write>(rows: &[T], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<T: for<'de> Deserialize<'de>, R: Read>(input: R) -> Result<Vec<T>> {
    csv::Reader::from_reader(input)
        .deserialize()
        .collect::<std::result::Result<Vec<T>, _>>()
        .map_err(csv_error)
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(e) => Error::Io(e),
        other => Error::InvalidParam { name: "csv", reason: format!("{other:?}") },
    }
}
