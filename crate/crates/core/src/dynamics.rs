//! Equations of motion of the board, the ball and the stylus couplings.
//!
//! Angle convention: `theta > 0` raises the right control point. The left
//! and right control points sit at `z_board -/+ l sin(theta)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::SimParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    /// `-1` for left, `+1` for right.
    pub fn sign(self) -> f64 {
        match self {
            Side::Left => -1.0,
            Side::Right => 1.0,
        }
    }

    pub fn opposite(self) -> Side {
        match self {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
        }
    }
}

/// Full dynamical state at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SimState {
    pub t: f64,
    pub z_board: f64,
    pub z_board_dot: f64,
    pub theta: f64,
    pub theta_dot: f64,
    /// Ball position along the board relative to its center, positive right.
    pub p_ball: f64,
    pub p_ball_dot: f64,
}

impl SimState {
    pub fn is_finite(&self) -> bool {
        [
            self.t,
            self.z_board,
            self.z_board_dot,
            self.theta,
            self.theta_dot,
            self.p_ball,
            self.p_ball_dot,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

/// Stylus heights and vertical velocities for both handles.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StylusInput {
    pub z_left: f64,
    pub z_left_dot: f64,
    pub z_right: f64,
    pub z_right_dot: f64,
}

impl StylusInput {
    pub fn at_rest(z_left: f64, z_right: f64) -> Self {
        Self {
            z_left,
            z_left_dot: 0.0,
            z_right,
            z_right_dot: 0.0,
        }
    }

    pub fn side(&self, side: Side) -> (f64, f64) {
        match side {
            Side::Left => (self.z_left, self.z_left_dot),
            Side::Right => (self.z_right, self.z_right_dot),
        }
    }

    /// Left and right swapped.
    pub fn mirrored(&self) -> Self {
        Self {
            z_left: self.z_right,
            z_left_dot: self.z_right_dot,
            z_right: self.z_left,
            z_right_dot: self.z_left_dot,
        }
    }

    fn clamped(&self, limit: f64) -> Self {
        Self {
            z_left: self.z_left.clamp(-limit, limit),
            z_right: self.z_right.clamp(-limit, limit),
            ..*self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ForcePair {
    pub f_left: f64,
    pub f_right: f64,
}

impl ForcePair {
    pub const ZERO: ForcePair = ForcePair {
        f_left: 0.0,
        f_right: 0.0,
    };

    pub fn side(&self, side: Side) -> f64 {
        match side {
            Side::Left => self.f_left,
            Side::Right => self.f_right,
        }
    }

    pub fn negated(&self) -> Self {
        Self {
            f_left: -self.f_left,
            f_right: -self.f_right,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Accelerations {
    pub z_board: f64,
    pub theta: f64,
    pub p_ball: f64,
}

pub fn control_point_z(state: &SimState, side: Side, params: &SimParams) -> f64 {
    let lever = params.half_span * state.theta.sin();
    match side {
        Side::Left => state.z_board - lever,
        Side::Right => state.z_board + lever,
    }
}

/// Analytic control point velocity, `z_board_dot -/+ l cos(theta) theta_dot`.
pub fn control_point_vz(state: &SimState, side: Side, params: &SimParams) -> f64 {
    let lever = params.half_span * state.theta.cos() * state.theta_dot;
    match side {
        Side::Left => state.z_board_dot - lever,
        Side::Right => state.z_board_dot + lever,
    }
}

/// Spring-damper force a stylus exerts on its control point.
pub fn hand_force(stylus_z: f64, stylus_vz: f64, point_z: f64, point_vz: f64, params: &SimParams) -> f64 {
    params.hand_stiffness * (stylus_z - point_z) + params.hand_damping * (stylus_vz - point_vz)
}

pub fn spring_force(z_board: f64, params: &SimParams) -> f64 {
    -params.center_stiffness * z_board
}

/// Forces both styluses apply to the board.
pub fn coupling_forces(state: &SimState, input: &StylusInput, params: &SimParams) -> ForcePair {
    let force = |side| {
        let (z, vz) = input.side(side);
        hand_force(
            z,
            vz,
            control_point_z(state, side, params),
            control_point_vz(state, side, params),
            params,
        )
    };
    ForcePair {
        f_left: force(Side::Left),
        f_right: force(Side::Right),
    }
}

pub fn accelerations(state: &SimState, forces: &ForcePair, params: &SimParams) -> Accelerations {
    let SimParams {
        board_mass,
        ball_mass,
        gravity,
        half_span,
        inertia,
        ..
    } = *params;
    let cos = state.theta.cos();
    let z_board = (forces.f_left + forces.f_right - board_mass * gravity - ball_mass * gravity * (cos * cos)
        + spring_force(state.z_board, params))
        / board_mass;
    let theta = ((forces.f_right - forces.f_left) * half_span * cos - ball_mass * gravity * state.p_ball * cos) / inertia;
    let p_ball = params.roll_sign.factor() * gravity * state.theta.sin();
    Accelerations { z_board, theta, p_ball }
}

/// Advances the state by one `params.dt` with semi-implicit Euler.
///
/// Returns the new state and the force pair rendered to the handles, which
/// is the negation of the coupling forces applied to the board.
pub fn step(state: &SimState, input: &StylusInput, params: &SimParams) -> Result<(SimState, ForcePair)> {
    let input = input.clamped(params.stylus_limit);
    let forces = coupling_forces(state, &input, params);
    let acc = accelerations(state, &forces, params);
    let dt = params.dt;

    let z_board_dot = state.z_board_dot + acc.z_board * dt;
    let theta_dot = state.theta_dot + acc.theta * dt;
    let p_ball_dot = state.p_ball_dot + acc.p_ball * dt;
    let next = SimState {
        t: state.t + dt,
        z_board: state.z_board + z_board_dot * dt,
        z_board_dot,
        theta: state.theta + theta_dot * dt,
        theta_dot,
        p_ball: state.p_ball + p_ball_dot * dt,
        p_ball_dot,
    };
    if !next.is_finite() {
        return Err(Error::NonFinite { t: next.t });
    }
    Ok((next, forces.negated()))
}

/// Same as [`step`] but also returns the forces applied to the board.
pub fn step_with_forces(
    state: &SimState,
    input: &StylusInput,
    params: &SimParams,
) -> Result<(SimState, ForcePair, ForcePair)> {
    let (next, haptic) = step(state, input, params)?;
    Ok((next, haptic.negated(), haptic))
}
