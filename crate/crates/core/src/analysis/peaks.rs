//! Velocity peak counting.

use crate::error::Result;
use crate::sigproc;

use super::{PEAK_PROMINENCE, SEGMENT_CUTOFF_HZ};

/// Local maxima as `(index, prominence)`.
///
/// A flat top counts once, at its middle sample. Prominence is the height
/// above the higher of the two lowest points reached on either side before
/// the signal climbs above the peak (or the series ends).
pub fn find_peaks(x: &[f64]) -> Vec<(usize, f64)> {
    let n = x.len();
    let mut peaks = Vec::new();
    let mut i = 1;
    while i + 1 < n {
        if x[i - 1] < x[i] {
            let mut ahead = i + 1;
            while ahead + 1 < n && x[ahead] == x[i] {
                ahead += 1;
            }
            if x[ahead] < x[i] {
                let left_edge = i;
                let right_edge = ahead - 1;
                let peak = (left_edge + right_edge) / 2;
                peaks.push((peak, prominence(x, left_edge, right_edge)));
                i = ahead;
                continue;
            }
            i = ahead;
            continue;
        }
        i += 1;
    }
    peaks
}

fn prominence(x: &[f64], left_edge: usize, right_edge: usize) -> f64 {
    let height = x[left_edge];
    let mut left_min = height;
    for &v in x[..left_edge].iter().rev() {
        if v > height {
            break;
        }
        left_min = left_min.min(v);
    }
    let mut right_min = height;
    for &v in &x[right_edge + 1..] {
        if v > height {
            break;
        }
        right_min = right_min.min(v);
    }
    height - left_min.max(right_min)
}

pub fn count_peaks(x: &[f64], min_prominence: f64) -> usize {
    find_peaks(x).iter().filter(|(_, p)| *p >= min_prominence).count()
}

/// Peaks of a speed profile after 5 Hz zero-phase smoothing.
pub fn count_speed_peaks(speed: &[f64], sample_rate: f64) -> Result<usize> {
    let smooth = sigproc::lowpass_zero_phase(speed, SEGMENT_CUTOFF_HZ, sample_rate)?;
    Ok(count_peaks(&smooth, PEAK_PROMINENCE))
}

/// Number of peaks of the ball's speed relative to the board center.
pub fn count_velocity_peaks(p_ball: &[f64], sample_rate: f64) -> Result<usize> {
    let speed: Vec<f64> = sigproc::derivative(p_ball, sample_rate)
        .into_iter()
        .map(f64::abs)
        .collect();
    count_speed_peaks(&speed, sample_rate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    const FS: f64 = 1000.0;

    #[test]
    fn raw_peak_finding() {
        assert!(find_peaks(&[0.0; 20]).is_empty());
        assert_eq!(find_peaks(&[0.0, 1.0, 0.0]), vec![(1, 1.0)]);
        // plateau counted once at its middle
        assert_eq!(find_peaks(&[0.0, 2.0, 2.0, 2.0, 1.0]), vec![(2, 1.0)]);
        // rising edge into the end is not a peak
        assert!(find_peaks(&[0.0, 1.0, 2.0]).is_empty());
        let p = find_peaks(&[0.0, 3.0, 1.0, 2.0, 0.5]);
        assert_eq!(p, vec![(1, 2.5), (3, 1.0)]);
    }

    #[test]
    fn abs_sine_peaks() {
        let n = 2500;
        let speed: Vec<f64> = (0..=n).map(|i| 0.3 * (2.0 * PI * i as f64 / FS).sin().abs()).collect();
        assert_eq!(count_speed_peaks(&speed, FS).unwrap(), 5);
    }

    #[test]
    fn single_bump_and_zero() {
        let bump: Vec<f64> = (0..1000).map(|i| (PI * i as f64 / 999.0).sin() * 0.2).collect();
        assert_eq!(count_speed_peaks(&bump, FS).unwrap(), 1);
        assert_eq!(count_speed_peaks(&[0.0; 500], FS).unwrap(), 0);
        assert_eq!(count_velocity_peaks(&[0.1; 500], FS).unwrap(), 0);
    }
}
