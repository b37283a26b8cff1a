//! Trajectory analysis: completion time, movement classes, board movement
//! segments with inter-handle delays, ball speed peaks, braking strategy
//! ellipses and dyad comparisons.

pub mod classify;
pub mod dyad;
pub mod peaks;
pub mod segment;
pub mod strategy;

use serde::{Deserialize, Serialize};

pub use classify::{classify_step, movement_shares, MovementClass, MovementShares};
pub use dyad::{dyad_comparison, DyadComparison, Metric};
pub use peaks::count_velocity_peaks;
pub use segment::{is_cooperative_segment, segment_board_movements, segment_delay, MovementSegment};
pub use strategy::{extract_strategy, pca2, strategy_ellipse, StrategyEllipse, StrategyExclusion, StrategyPoint};

use crate::error::Result;
use crate::params::SimParams;
use crate::protocol::{Condition, Performer, TrialOutcome, TrialPhase, TrialRecord};
use crate::sigproc;

/// Stylus speed below which a handle counts as still (m/s).
pub const STILL_SPEED: f64 = 0.003;
/// Cutoff for force and kinematic data.
pub const KINEMATIC_CUTOFF_HZ: f64 = 20.0;
/// Cutoff applied before segmentation and peak counting.
pub const SEGMENT_CUTOFF_HZ: f64 = 5.0;
pub const SEGMENT_RATE_DEG_S: f64 = 1.0;
pub const MIN_SEGMENT_DURATION_S: f64 = 0.100;
pub const MIN_SEGMENT_ANGLE_DEG: f64 = 1.0;
pub const COOPERATIVE_RATIO: f64 = 9.0;
/// Fractions of the slower side's peak speed at which delays are measured.
pub const DELAY_FRACTIONS: [f64; 4] = [0.10, 0.20, 0.30, 0.40];
/// Minimum prominence of a ball speed peak (m/s).
pub const PEAK_PROMINENCE: f64 = 0.005;
pub const STRATEGY_GROUP_SIZE: usize = 30;

/// Time from release to the start of the final, successful dwell.
///
/// Recomputed from the frames of the last attempt; `None` unless the trial
/// succeeded.
pub fn completion_time(trial: &TrialRecord) -> Option<f64> {
    if trial.outcome != TrialOutcome::Succeeded {
        return None;
    }
    let frames = trial.final_attempt();
    let start = frames.first()?.t;
    let entry = frames
        .iter()
        .rposition(|f| !matches!(f.phase, TrialPhase::Dwelling | TrialPhase::Succeeded))
        .map(|i| i + 1)
        .unwrap_or(0);
    frames.get(entry).map(|f| f.t - start)
}

/// Everything computed for one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialMetrics {
    pub block_index: u32,
    pub trial_index: u32,
    pub performer: Performer,
    pub condition: Condition,
    pub outcome: TrialOutcome,
    pub n_failures: u32,
    pub completion_time: Option<f64>,
    pub np: Option<usize>,
    pub shares: Option<MovementShares>,
    /// Segment times are relative to the release of the final attempt.
    pub segments: Vec<MovementSegment>,
    pub strategy: Option<StrategyPoint>,
    pub strategy_exclusion: Option<StrategyExclusion>,
}

impl TrialMetrics {
    /// Mean absolute delay over cooperative segments for threshold `k`.
    pub fn mean_delay(&self, k: usize) -> Option<f64> {
        let d: Vec<f64> = self.segments.iter().filter_map(|s| s.delays[k]).collect();
        (!d.is_empty()).then(|| d.iter().sum::<f64>() / d.len() as f64)
    }
}

/// Runs the per-trial metrics over the final attempt of a trial.
pub fn analyze_trial(trial: &TrialRecord, performer: Performer, params: &SimParams) -> Result<TrialMetrics> {
    let fs = params.sample_rate();
    let mut metrics = TrialMetrics {
        block_index: trial.config.block_index,
        trial_index: trial.config.trial_index,
        performer,
        condition: trial.config.condition,
        outcome: trial.outcome,
        n_failures: trial.n_failures,
        completion_time: completion_time(trial),
        np: None,
        shares: None,
        segments: Vec::new(),
        strategy: None,
        strategy_exclusion: None,
    };
    if !trial.succeeded() {
        metrics.strategy_exclusion = Some(StrategyExclusion::NotSucceeded);
        return Ok(metrics);
    }
    let frames = trial.final_attempt();
    let series = |f: fn(&crate::protocol::SampleFrame) -> f64| frames.iter().map(f).collect::<Vec<f64>>();

    metrics.np = Some(count_velocity_peaks(&series(|f| f.p_ball), fs)?);

    let (z_left, z_right) = classify::stylus_positions(frames, fs)?;
    let v_left = sigproc::derivative(&z_left, fs);
    let v_right = sigproc::derivative(&z_right, fs);
    metrics.shares = Some(classify::shares_from_velocities(&v_left, &v_right));

    let mut segments = segment_board_movements(&series(|f| f.theta_dot), fs)?;
    segment::annotate_segments(&mut segments, &z_left, &z_right, &v_left, &v_right, fs);

    let theta = sigproc::lowpass_zero_phase(&series(|f| f.theta), KINEMATIC_CUTOFF_HZ, fs)?;
    let p = sigproc::lowpass_zero_phase(&series(|f| f.p_ball), KINEMATIC_CUTOFF_HZ, fs)?;
    let v = sigproc::lowpass_zero_phase(&series(|f| f.p_ball_dot), KINEMATIC_CUTOFF_HZ, fs)?;
    match strategy::strategy_from_segments(
        &segments,
        &theta,
        &p,
        &v,
        trial.config.target_side.sign(),
        trial.config.trial_index,
        params,
    ) {
        Ok(point) => metrics.strategy = Some(point),
        Err(reason) => metrics.strategy_exclusion = Some(reason),
    }
    metrics.segments = segments;
    Ok(metrics)
}
