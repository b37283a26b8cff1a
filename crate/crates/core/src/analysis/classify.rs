use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::protocol::{SampleFrame, TrialRecord};
use crate::sigproc;

use super::{KINEMATIC_CUTOFF_HZ, STILL_SPEED};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MovementClass {
    /// Both handles moving in opposite directions.
    Cooperative,
    /// Both handles moving in the same direction.
    Competitive,
    /// Exactly one handle moving.
    Single,
    Still,
}

impl MovementClass {
    pub const ALL: [MovementClass; 4] = [
        MovementClass::Cooperative,
        MovementClass::Competitive,
        MovementClass::Single,
        MovementClass::Still,
    ];
}

/// A handle counts as moving at or above [`STILL_SPEED`].
pub fn classify_step(v_left: f64, v_right: f64) -> MovementClass {
    let moving_left = v_left.abs() >= STILL_SPEED;
    let moving_right = v_right.abs() >= STILL_SPEED;
    match (moving_left, moving_right) {
        (false, false) => MovementClass::Still,
        (true, false) | (false, true) => MovementClass::Single,
        (true, true) if (v_left > 0.0) == (v_right > 0.0) => MovementClass::Competitive,
        (true, true) => MovementClass::Cooperative,
    }
}

/// Fraction of samples spent in each class.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MovementShares {
    pub cooperative: f64,
    pub competitive: f64,
    pub single: f64,
    pub still: f64,
}

impl MovementShares {
    pub fn get(&self, class: MovementClass) -> f64 {
        match class {
            MovementClass::Cooperative => self.cooperative,
            MovementClass::Competitive => self.competitive,
            MovementClass::Single => self.single,
            MovementClass::Still => self.still,
        }
    }

    pub fn total(&self) -> f64 {
        self.cooperative + self.competitive + self.single + self.still
    }
}

pub fn shares_from_velocities(v_left: &[f64], v_right: &[f64]) -> MovementShares {
    assert_eq!(v_left.len(), v_right.len());
    let mut counts = [0usize; 4];
    for (&l, &r) in v_left.iter().zip(v_right) {
        counts[classify_step(l, r) as usize] += 1;
    }
    let n = v_left.len().max(1) as f64;
    MovementShares {
        cooperative: counts[0] as f64 / n,
        competitive: counts[1] as f64 / n,
        single: counts[2] as f64 / n,
        still: counts[3] as f64 / n,
    }
}

/// Stylus z-velocities from logged positions: 20 Hz zero-phase, then
/// differentiated.
pub fn stylus_velocities(frames: &[SampleFrame], sample_rate: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let (zl, zr) = stylus_positions(frames, sample_rate)?;
    Ok((sigproc::derivative(&zl, sample_rate), sigproc::derivative(&zr, sample_rate)))
}

/// 20 Hz-filtered stylus positions.
pub fn stylus_positions(frames: &[SampleFrame], sample_rate: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let zl: Vec<f64> = frames.iter().map(|f| f.z_left).collect();
    let zr: Vec<f64> = frames.iter().map(|f| f.z_right).collect();
    Ok((
        sigproc::lowpass_zero_phase(&zl, KINEMATIC_CUTOFF_HZ, sample_rate)?,
        sigproc::lowpass_zero_phase(&zr, KINEMATIC_CUTOFF_HZ, sample_rate)?,
    ))
}

/// Movement-class shares over the final attempt of a trial.
pub fn movement_shares(trial: &TrialRecord, sample_rate: f64) -> Result<MovementShares> {
    let (vl, vr) = stylus_velocities(trial.final_attempt(), sample_rate)?;
    Ok(shares_from_velocities(&vl, &vr))
}
