//! Board movement segmentation and inter-handle delay.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::sigproc;

use super::{
    COOPERATIVE_RATIO, DELAY_FRACTIONS, MIN_SEGMENT_ANGLE_DEG, MIN_SEGMENT_DURATION_S, SEGMENT_CUTOFF_HZ,
    SEGMENT_RATE_DEG_S,
};

/// A contiguous rotation episode of the board. Times are seconds from the
/// first sample of the analyzed series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MovementSegment {
    pub start_index: usize,
    /// Inclusive.
    pub end_index: usize,
    pub t_start: f64,
    pub t_end: f64,
    /// Sign of the mean filtered angular velocity.
    pub direction: i8,
    /// Integrated filtered angular velocity over the segment (rad).
    pub angle_change: f64,
    pub displacement_left: f64,
    pub displacement_right: f64,
    pub cooperative: bool,
    /// Absolute delay (s) per entry of [`DELAY_FRACTIONS`].
    pub delays: [Option<f64>; 4],
    /// `t_right - t_left` per threshold; positive when the right side lags.
    pub signed_delays: [Option<f64>; 4],
}

impl MovementSegment {
    pub fn duration(&self) -> f64 {
        self.t_end - self.t_start
    }

    pub fn range(&self) -> std::ops::RangeInclusive<usize> {
        self.start_index..=self.end_index
    }
}

/// Filters the angular velocity at 5 Hz (zero phase), then applies
/// [`detect_segments`].
pub fn segment_board_movements(theta_dot: &[f64], sample_rate: f64) -> Result<Vec<MovementSegment>> {
    let filtered = sigproc::lowpass_zero_phase(theta_dot, SEGMENT_CUTOFF_HZ, sample_rate)?;
    Ok(detect_segments(&filtered, sample_rate))
}

/// Maximal runs with `|theta_dot| > 1 deg/s` lasting at least 100 ms and
/// turning the board by at least 1 deg. Input is already filtered.
pub fn detect_segments(theta_dot: &[f64], sample_rate: f64) -> Vec<MovementSegment> {
    let rate = SEGMENT_RATE_DEG_S.to_radians();
    let dt = 1.0 / sample_rate;
    let mut segments = Vec::new();
    let mut i = 0;
    while i < theta_dot.len() {
        if theta_dot[i].abs() <= rate {
            i += 1;
            continue;
        }
        let start = i;
        while i < theta_dot.len() && theta_dot[i].abs() > rate {
            i += 1;
        }
        let end = i - 1;
        let run = &theta_dot[start..=end];
        let duration = (end - start) as f64 * dt;
        // trapezoidal integral of the run
        let angle = if run.len() > 1 {
            (run.iter().sum::<f64>() - 0.5 * (run[0] + run[run.len() - 1])) * dt
        } else {
            0.0
        };
        if duration + 1e-9 >= MIN_SEGMENT_DURATION_S && angle.abs() >= MIN_SEGMENT_ANGLE_DEG.to_radians() {
            segments.push(MovementSegment {
                start_index: start,
                end_index: end,
                t_start: start as f64 * dt,
                t_end: end as f64 * dt,
                direction: if run.iter().sum::<f64>() >= 0.0 { 1 } else { -1 },
                angle_change: angle,
                displacement_left: 0.0,
                displacement_right: 0.0,
                cooperative: false,
                delays: [None; 4],
                signed_delays: [None; 4],
            });
        }
    }
    segments
}

/// Opposite-signed stylus displacements, the larger no more than nine
/// times the smaller.
pub fn is_cooperative_segment(displacement_left: f64, displacement_right: f64) -> bool {
    let (a, b) = (displacement_left.abs(), displacement_right.abs());
    let (small, large) = if a < b { (a, b) } else { (b, a) };
    displacement_left * displacement_right < 0.0 && large <= COOPERATIVE_RATIO * small
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayMeasure {
    /// Crossing times relative to the first sample of the window (s).
    pub t_left: f64,
    pub t_right: f64,
}

impl DelayMeasure {
    pub fn signed(&self) -> f64 {
        self.t_right - self.t_left
    }

    pub fn absolute(&self) -> f64 {
        self.signed().abs()
    }
}

/// Delay between the two handles inside one segment window.
///
/// The threshold is `fraction` of the smaller of the two peak speeds. Each
/// side's crossing is the first sample where its velocity, taken along
/// `direction_*`, reaches the threshold, refined by linear interpolation.
/// Returns `None` if a side never gets there.
pub fn segment_delay(
    v_left: &[f64],
    v_right: &[f64],
    direction_left: f64,
    direction_right: f64,
    fraction: f64,
    sample_rate: f64,
) -> Option<DelayMeasure> {
    if direction_left == 0.0 || direction_right == 0.0 || v_left.is_empty() || v_right.is_empty() {
        return None;
    }
    let peak = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let threshold = fraction * peak(v_left).min(peak(v_right));
    if threshold <= 0.0 {
        return None;
    }
    let crossing = |v: &[f64], dir: f64| -> Option<f64> {
        let dir = dir.signum();
        let i = v.iter().position(|x| x * dir >= threshold)?;
        if i == 0 {
            return Some(0.0);
        }
        let (a, b) = (v[i - 1] * dir, v[i] * dir);
        let frac = (threshold - a) / (b - a);
        Some((i as f64 - 1.0 + frac) / sample_rate)
    };
    Some(DelayMeasure {
        t_left: crossing(v_left, direction_left)?,
        t_right: crossing(v_right, direction_right)?,
    })
}

/// Fills displacements, the cooperative flag and delays of each segment
/// from filtered stylus positions and velocities sampled like `theta_dot`.
pub fn annotate_segments(
    segments: &mut [MovementSegment],
    z_left: &[f64],
    z_right: &[f64],
    v_left: &[f64],
    v_right: &[f64],
    sample_rate: f64,
) {
    for seg in segments.iter_mut() {
        let (s, e) = (seg.start_index, seg.end_index);
        seg.displacement_left = z_left[e] - z_left[s];
        seg.displacement_right = z_right[e] - z_right[s];
        seg.cooperative = is_cooperative_segment(seg.displacement_left, seg.displacement_right);
        if !seg.cooperative {
            continue;
        }
        for (k, &fraction) in DELAY_FRACTIONS.iter().enumerate() {
            let measure = segment_delay(
                &v_left[s..=e],
                &v_right[s..=e],
                seg.displacement_left.signum(),
                seg.displacement_right.signum(),
                fraction,
                sample_rate,
            );
            seg.delays[k] = measure.map(|m| m.absolute());
            seg.signed_delays[k] = measure.map(|m| m.signed());
        }
    }
}
