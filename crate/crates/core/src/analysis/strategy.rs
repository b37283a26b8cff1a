//! First-braking strategy points and their PCA ellipses.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::SimParams;
use crate::protocol::TrialRecord;
use crate::sigproc;

use super::segment::{segment_board_movements, MovementSegment};
use super::{KINEMATIC_CUTOFF_HZ, STRATEGY_GROUP_SIZE};

/// Ball state at the onset of the first braking movement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrategyPoint {
    /// Distance between the ball and the target center (m).
    pub distance_to_target_mid: f64,
    /// Ball velocity along the direction of the target (m/s).
    pub velocity_toward_target: f64,
    pub trial_index: u32,
    /// Set when the first movement segment did not push the ball toward
    /// the target and a later one was taken as the initial movement.
    pub ambiguous: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyExclusion {
    NotSucceeded,
    TooFewSegments,
    NoInitialMovement,
    NoBrakingMovement,
    TooShort,
}

/// Acceleration a board angle gives the ball along `target_dir`.
fn push_toward(theta: f64, target_dir: f64, params: &SimParams) -> f64 {
    params.roll_sign.factor() * params.gravity * theta.sin() * target_dir
}

/// Classifies segments by the acceleration the board angle imposes on the
/// ball when the movement ends, and by the change the movement made to it.
fn segment_push(seg: &MovementSegment, theta: &[f64], target_dir: f64, params: &SimParams) -> (f64, f64) {
    let end = push_toward(theta[seg.end_index], target_dir, params);
    let start = push_toward(theta[seg.start_index], target_dir, params);
    (end, end - start)
}

/// Strategy point of one trial from its final attempt.
///
/// The initial movement is the first segment leaving the ball accelerated
/// toward the target; the braking movement is the first later segment that
/// turns the board so the ball is accelerated away from it. The point is
/// sampled at the braking onset from 20 Hz-filtered kinematics.
pub fn extract_strategy(
    trial: &TrialRecord,
    params: &SimParams,
) -> std::result::Result<StrategyPoint, StrategyExclusion> {
    if !trial.succeeded() {
        return Err(StrategyExclusion::NotSucceeded);
    }
    let frames = trial.final_attempt();
    let fs = params.sample_rate();
    let series = |f: fn(&crate::protocol::SampleFrame) -> f64| frames.iter().map(f).collect::<Vec<f64>>();
    let smooth = |x: Vec<f64>| sigproc::lowpass_zero_phase(&x, KINEMATIC_CUTOFF_HZ, fs);

    let segments = segment_board_movements(&series(|f| f.theta_dot), fs).map_err(|_| StrategyExclusion::TooShort)?;
    let (Ok(theta), Ok(p), Ok(v)) = (
        smooth(series(|f| f.theta)),
        smooth(series(|f| f.p_ball)),
        smooth(series(|f| f.p_ball_dot)),
    ) else {
        return Err(StrategyExclusion::TooShort);
    };
    strategy_from_segments(&segments, &theta, &p, &v, trial.config.target_side.sign(), trial.config.trial_index, params)
}

/// Core of [`extract_strategy`] on pre-computed series.
pub fn strategy_from_segments(
    segments: &[MovementSegment],
    theta: &[f64],
    p_ball: &[f64],
    p_ball_dot: &[f64],
    target_dir: f64,
    trial_index: u32,
    params: &SimParams,
) -> std::result::Result<StrategyPoint, StrategyExclusion> {
    if segments.len() < 2 {
        return Err(StrategyExclusion::TooFewSegments);
    }
    let pushes: Vec<(f64, f64)> = segments
        .iter()
        .map(|s| segment_push(s, theta, target_dir, params))
        .collect();
    let initial = pushes
        .iter()
        .position(|&(end, change)| end > 0.0 && change > 0.0)
        .ok_or(StrategyExclusion::NoInitialMovement)?;
    let braking = pushes[initial + 1..]
        .iter()
        .position(|&(end, change)| end < 0.0 && change < 0.0)
        .map(|k| initial + 1 + k)
        .ok_or(StrategyExclusion::NoBrakingMovement)?;
    let onset = segments[braking].start_index;
    let target = target_dir * params.target_offset;
    Ok(StrategyPoint {
        distance_to_target_mid: (p_ball[onset] - target).abs(),
        velocity_toward_target: p_ball_dot[onset] * target_dir,
        trial_index,
        ambiguous: initial != 0,
    })
}

/// Eigen-decomposition of a 2x2 sample covariance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pca2 {
    pub mean: [f64; 2],
    /// Descending.
    pub eigvals: [f64; 2],
    /// Unit eigenvectors matching `eigvals`.
    pub eigvecs: [[f64; 2]; 2],
    /// Angle of the first eigenvector in `(-pi/2, pi/2]`.
    pub angle: f64,
    /// Eigenvalues equal within sampling error; `angle` is arbitrary.
    pub unstable: bool,
}

pub fn pca2(points: &[[f64; 2]]) -> Result<Pca2> {
    let n = points.len();
    if n < 3 {
        return Err(Error::NotEnoughPoints { got: n, need: 3 });
    }
    let mean = mean2(points);
    let (mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0);
    for p in points {
        let (da, db) = (p[0] - mean[0], p[1] - mean[1]);
        saa += da * da;
        sbb += db * db;
        sab += da * db;
    }
    let denom = (n - 1) as f64;
    let (caa, cbb, cab) = (saa / denom, sbb / denom, sab / denom);
    // spread at the rounding level of the coordinates counts as none
    let scale = mean[0].abs().max(mean[1].abs()) * 16.0 * f64::EPSILON;
    if caa + cbb <= scale * scale {
        return Err(Error::DegenerateCovariance);
    }
    let half_trace = 0.5 * (caa + cbb);
    let radius = (0.25 * (caa - cbb).powi(2) + cab * cab).sqrt();
    let eigvals = [half_trace + radius, (half_trace - radius).max(0.0)];
    let mut angle = 0.5 * (2.0 * cab).atan2(caa - cbb);
    if angle <= -std::f64::consts::FRAC_PI_2 {
        angle += std::f64::consts::PI;
    }
    let (s, c) = angle.sin_cos();
    // For an isotropic cloud the gap is 2x a Rayleigh variable with scale
    // half_trace / sqrt(n - 1); 6 scales covers ~99% of such samples.
    let unstable = (eigvals[0] - eigvals[1]) <= 6.0 * half_trace / denom.sqrt();
    Ok(Pca2 {
        mean,
        eigvals,
        eigvecs: [[c, s], [-s, c]],
        angle,
        unstable,
    })
}

fn mean2(points: &[[f64; 2]]) -> [f64; 2] {
    let n = points.len() as f64;
    let (a, b) = points.iter().fold((0.0, 0.0), |(a, b), p| (a + p[0], b + p[1]));
    [a / n, b / n]
}

/// Linear-interpolation percentile, `q` in `[0, 1]`.
pub fn percentile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrategyEllipse {
    pub center: [f64; 2],
    /// Direction of the first principal component (rad).
    pub rotation: f64,
    /// 90th percentile of absolute deviation along the first component.
    pub half_width: f64,
    /// Same along the second component.
    pub half_height: f64,
    pub n_points: usize,
    /// Fewer points than a full group of 30.
    pub short_group: bool,
    /// No spread (or too few points for PCA): collapsed to the mean.
    pub degenerate: bool,
    pub unstable_rotation: bool,
}

impl StrategyEllipse {
    pub fn area(&self) -> f64 {
        std::f64::consts::PI * self.half_width * self.half_height
    }
}

pub fn strategy_ellipse(points: &[[f64; 2]]) -> StrategyEllipse {
    let n = points.len();
    let short_group = n < STRATEGY_GROUP_SIZE;
    if n == 0 {
        return StrategyEllipse {
            center: [f64::NAN, f64::NAN],
            rotation: 0.0,
            half_width: 0.0,
            half_height: 0.0,
            n_points: 0,
            short_group,
            degenerate: true,
            unstable_rotation: true,
        };
    }
    let center = mean2(points);
    let Ok(pca) = pca2(points) else {
        return StrategyEllipse {
            center,
            rotation: 0.0,
            half_width: 0.0,
            half_height: 0.0,
            n_points: n,
            short_group,
            degenerate: true,
            unstable_rotation: true,
        };
    };
    let extent = |axis: [f64; 2]| {
        let dev: Vec<f64> = points
            .iter()
            .map(|p| ((p[0] - center[0]) * axis[0] + (p[1] - center[1]) * axis[1]).abs())
            .collect();
        percentile(&dev, 0.9)
    };
    StrategyEllipse {
        center,
        rotation: pca.angle,
        half_width: extent(pca.eigvecs[0]),
        half_height: extent(pca.eigvecs[1]),
        n_points: n,
        short_group,
        degenerate: false,
        unstable_rotation: pca.unstable,
    }
}

/// Consecutive groups of [`STRATEGY_GROUP_SIZE`] points, in trial order.
pub fn group_ellipses(points: &[StrategyPoint]) -> Vec<StrategyEllipse> {
    points
        .chunks(STRATEGY_GROUP_SIZE)
        .map(|chunk| {
            let xy: Vec<[f64; 2]> = chunk
                .iter()
                .map(|p| [p.distance_to_target_mid, p.velocity_toward_target])
                .collect();
            strategy_ellipse(&xy)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn gaussian_cloud(n: usize, sigma: [f64; 2], angle_deg: f64, seed: u64) -> Vec<[f64; 2]> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let (s, c) = angle_deg.to_radians().sin_cos();
        (0..n)
            .map(|_| {
                let a = sigma[0] * normal.sample(&mut rng);
                let b = sigma[1] * normal.sample(&mut rng);
                [c * a - s * b, s * a + c * b]
            })
            .collect()
    }

    #[test]
    fn line_is_45_degrees() {
        let pts: Vec<[f64; 2]> = (0..20).map(|i| [i as f64, i as f64]).collect();
        let p = pca2(&pts).unwrap();
        assert_eq!(p.angle, std::f64::consts::FRAC_PI_4);
        assert!(!p.unstable);
        assert!(p.eigvals[1].abs() < 1e-12);
    }

    #[test]
    fn isotropic_cloud_is_flagged() {
        let pts = gaussian_cloud(1000, [1.0, 1.0], 0.0, 3);
        let p = pca2(&pts).unwrap();
        assert!(p.unstable);
        assert!((p.eigvals[0] / p.eigvals[1] - 1.0).abs() < 0.2);
    }

    #[test]
    fn anisotropic_rotation_recovered() {
        let pts = gaussian_cloud(1000, [3.0, 1.0], 30.0, 7);
        let p = pca2(&pts).unwrap();
        assert!((p.angle.to_degrees() - 30.0).abs() < 5.0);
        assert!(!p.unstable);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(matches!(pca2(&[[1.0, 2.0]; 2]), Err(Error::NotEnoughPoints { .. })));
        assert!(matches!(pca2(&[[1.0, 2.0]; 5]), Err(Error::DegenerateCovariance)));
        let e = strategy_ellipse(&[[0.1, 0.4]; 30]);
        assert!((e.center[0] - 0.1).abs() < 1e-12 && (e.center[1] - 0.4).abs() < 1e-12);
        assert!(e.half_width < 1e-12 && e.half_height < 1e-12);
        assert!(e.degenerate && !e.short_group);
    }

    #[test]
    fn axis_aligned_extent_is_percentile_of_deviation() {
        let pts = gaussian_cloud(30, [0.05, 0.005], 0.0, 11);
        let e = strategy_ellipse(&pts);
        assert!(e.rotation.abs() < 0.1);
        let mean_a = pts.iter().map(|p| p[0]).sum::<f64>() / 30.0;
        // order statistic by hand: 90% of the 29 gaps -> index 26.1
        let mut dev: Vec<f64> = pts.iter().map(|p| (p[0] - mean_a).abs()).collect();
        dev.sort_by(f64::total_cmp);
        let expected = dev[26] + 0.1 * (dev[27] - dev[26]);
        assert!((e.half_width - expected).abs() / expected < 0.02, "{} {}", e.half_width, expected);
        assert!(e.half_width >= e.half_height);
    }

    #[test]
    fn percentile_interpolates() {
        assert_eq!(percentile(&[3.0, 1.0, 2.0], 0.5), 2.0);
        assert_eq!(percentile(&[0.0, 10.0], 0.9), 9.0);
        assert_eq!(percentile(&[4.0], 0.9), 4.0);
    }

    #[test]
    fn equivariance() {
        let pts = gaussian_cloud(200, [0.04, 0.01], -20.0, 5);
        let base = strategy_ellipse(&pts);
        let shifted: Vec<[f64; 2]> = pts.iter().map(|p| [p[0] + 0.3, p[1] - 1.2]).collect();
        let e = strategy_ellipse(&shifted);
        assert!((e.center[0] - base.center[0] - 0.3).abs() < 1e-9);
        assert!((e.center[1] - base.center[1] + 1.2).abs() < 1e-9);
        assert!((e.rotation - base.rotation).abs() < 1e-9);

        let alpha = 0.7f64;
        let (s, c) = alpha.sin_cos();
        let turned: Vec<[f64; 2]> = pts.iter().map(|p| [c * p[0] - s * p[1], s * p[0] + c * p[1]]).collect();
        let e = strategy_ellipse(&turned);
        let diff = (e.rotation - base.rotation - alpha).rem_euclid(std::f64::consts::PI);
        assert!(diff.min(std::f64::consts::PI - diff) < 1e-9);
        assert!((e.half_width - base.half_width).abs() < 1e-9);
        assert!((e.half_height - base.half_height).abs() < 1e-9);
    }
}
