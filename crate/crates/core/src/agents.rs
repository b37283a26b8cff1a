//! Scripted controllers for headless experiments.
//!
//! An agent runs a PD law on the ball error, turns the demanded ball
//! acceleration into a board angle and then into a stylus height for its
//! side. The visual command goes through a reaction-delay FIFO and picks up
//! smooth seeded noise.
//!
//! A haptic-aware agent that drives one handle reads the partner's handle
//! height off the force on its own handle: with the board in quasi-static
//! balance that force is a known load plus a stiffness times the sum of both
//! handle heights. It then blends a mirror of that estimate into its own
//! command, with no reaction delay. An agent driving both handles already
//! knows both heights, so the force adds nothing for it.

use std::collections::VecDeque;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dynamics::{ForcePair, Side, SimState, StylusInput};
use crate::error::{Error, Result};
use crate::params::SimParams;
use crate::protocol::{
    Block, BlockRunner, BlockSchedule, Performer, ProtocolSettings, TrialPhase, TrialRecord,
};

/// Simulated time after which a trial is closed as aborted.
pub const DEFAULT_WATCHDOG_S: f64 = 120.0;
/// Cutoff of the position differentiator that supplies stylus velocities.
pub const TRACKER_CUTOFF_HZ: f64 = 50.0;
/// Noise scale while the ball is held before release.
const HOLD_NOISE_SCALE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentSide {
    Left,
    Right,
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    /// Ball position gain (1/s^2).
    pub kp: f64,
    /// Ball velocity gain (1/s).
    pub kd: f64,
    /// Board angle regulation gain (dimensionless).
    pub k_theta: f64,
    /// Visual reaction delay (s).
    pub reaction_delay: f64,
    /// Standard deviation of the central command noise (m). Both handles
    /// of a bimanual agent share it.
    pub noise_std: f64,
    /// Standard deviation of the independent noise on each handle (m).
    pub hand_noise_std: f64,
    /// Correlation time of the command noise (s).
    pub noise_tau: f64,
    pub uses_haptic: bool,
    /// Share of the command taken from the mirrored partner estimate.
    pub haptic_weight: f64,
    /// Smoothing of the sensed force (s).
    pub force_tau: f64,
    /// Largest commanded tilt (deg).
    pub max_tilt_deg: f64,
    /// Time constant of each of the two motor smoothing stages (s).
    pub motor_tau: f64,
    pub side: AgentSide,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            kp: 5.0,
            kd: 3.0,
            k_theta: 0.5,
            reaction_delay: 0.15,
            noise_std: 0.003,
            hand_noise_std: 0.001,
            noise_tau: 0.1,
            uses_haptic: true,
            haptic_weight: 0.1,
            force_tau: 0.02,
            max_tilt_deg: 8.0,
            motor_tau: 0.05,
            side: AgentSide::Both,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            ("kp", self.kp),
            ("kd", self.kd),
            ("k_theta", self.k_theta),
        ];
        for (name, v) in finite {
            if !v.is_finite() {
                return Err(Error::InvalidParam { name, reason: "must be finite".into() });
            }
        }
        let nonneg = [
            ("reaction_delay", self.reaction_delay),
            ("noise_std", self.noise_std),
            ("hand_noise_std", self.hand_noise_std),
            ("noise_tau", self.noise_tau),
            ("force_tau", self.force_tau),
            ("motor_tau", self.motor_tau),
        ];
        for (name, v) in nonneg {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidParam { name, reason: "must be finite and >= 0".into() });
            }
        }
        if !(0.0..1.0).contains(&self.haptic_weight) {
            return Err(Error::InvalidParam { name: "haptic_weight", reason: "must be in [0, 1)".into() });
        }
        if !(self.max_tilt_deg > 0.0 && self.max_tilt_deg < 90.0) {
            return Err(Error::InvalidParam { name: "max_tilt_deg", reason: "must be in (0, 90)".into() });
        }
        Ok(())
    }

    pub fn from_config_str(text: &str) -> std::result::Result<Self, String> {
        let cfg: AgentConfig = toml::from_str(text).map_err(|e| e.to_string())?;
        cfg.validate().map_err(|e| e.to_string())?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_config_str(&text).map_err(|message| Error::Config { path: path.to_path_buf(), message })
    }

    pub fn with_side(&self, side: AgentSide) -> Self {
        Self { side, ..self.clone() }
    }
}

/// What an agent gets to see on one tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentObservation {
    pub p_ball: f64,
    pub p_ball_dot: f64,
    pub theta: f64,
    pub theta_dot: f64,
    pub target_side: Side,
    /// False while the ball is held before release.
    pub released: bool,
    /// Force rendered on the handles last tick. `None` when the block has
    /// no feedback or the agent ignores it.
    pub haptic: Option<ForcePair>,
}

impl AgentObservation {
    pub fn new(state: &SimState, phase: TrialPhase, target_side: Side, haptic: Option<ForcePair>) -> Self {
        Self {
            p_ball: state.p_ball,
            p_ball_dot: state.p_ball_dot,
            theta: state.theta,
            theta_dot: state.theta_dot,
            target_side,
            released: !matches!(phase, TrialPhase::PreTrial),
            haptic,
        }
    }
}

/// Heights for the handles an agent drives.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AgentCommand {
    pub left: Option<f64>,
    pub right: Option<f64>,
}

/// Smooth noise: an Ornstein-Uhlenbeck process fed through a second
/// first-order stage so that its derivative stays bounded.
#[derive(Debug, Clone)]
struct SmoothNoise {
    std: f64,
    a: f64,
    ou: f64,
    out: f64,
}

impl SmoothNoise {
    fn new(std: f64, tau: f64, dt: f64) -> Self {
        let a = if tau > 0.0 { (-dt / tau).exp() } else { 0.0 };
        Self { std, a, ou: 0.0, out: 0.0 }
    }

    fn next(&mut self, rng: &mut ChaCha8Rng) -> f64 {
        if self.std == 0.0 {
            return 0.0;
        }
        let w: f64 = StandardNormal.sample(rng);
        self.ou = self.a * self.ou + (1.0 - self.a * self.a).sqrt() * w;
        self.out = self.a * self.out + (1.0 - self.a) * self.ou;
        // stationary variance of the second stage is (1 + a^2) / (1 + a)^2
        let gain = (1.0 + self.a) / (1.0 + self.a * self.a).sqrt();
        self.std * gain * self.out
    }
}

#[derive(Debug, Clone)]
pub struct Agent {
    config: AgentConfig,
    params: SimParams,
    fifo: VecDeque<f64>,
    central_noise: SmoothNoise,
    hand_noise: [SmoothNoise; 2],
    force: [f64; 2],
    force_alpha: f64,
    last: [f64; 2],
    motor: [f64; 2],
    motor_alpha: f64,
    rng: ChaCha8Rng,
}

impl Agent {
    pub fn new(config: AgentConfig, params: &SimParams, seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let lag = (config.reaction_delay / params.dt).round() as usize;
        let hand = SmoothNoise::new(config.hand_noise_std, config.noise_tau, params.dt);
        let smoothing = |tau: f64| if tau > 0.0 { 1.0 - (-params.dt / tau).exp() } else { 1.0 };
        Self {
            fifo: std::iter::repeat_n(0.0, lag).collect(),
            central_noise: SmoothNoise::new(config.noise_std, config.noise_tau, params.dt),
            hand_noise: [hand.clone(), hand],
            force: [0.0; 2],
            last: [0.0; 2],
            force_alpha: smoothing(config.force_tau),
            motor: [0.0; 2],
            motor_alpha: smoothing(config.motor_tau),
            rng,
            params: *params,
            config,
        }
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    /// Board angle the visual loop asks for (rad).
    pub fn desired_angle(&self, obs: &AgentObservation) -> f64 {
        if !obs.released {
            return 0.0;
        }
        let c = &self.config;
        let error = self.params.target_center(obs.target_side) - obs.p_ball;
        let accel = c.kp * error - c.kd * obs.p_ball_dot;
        let limit = c.max_tilt_deg.to_radians().sin();
        // ball acceleration is factor * g * sin(theta)
        let s = (accel / self.params.gravity).clamp(-limit, limit);
        (self.params.roll_sign.factor() * s).asin()
    }

    /// Right-handle height for the visual part of the command; the left
    /// handle mirrors it.
    fn visual_command(&self, obs: &AgentObservation) -> f64 {
        let l = self.params.half_span;
        let theta_des = self.desired_angle(obs);
        l * theta_des.sin() + self.config.k_theta * l * (theta_des - obs.theta)
    }

    pub fn command(&mut self, obs: &AgentObservation) -> AgentCommand {
        let visual = self.visual_command(obs);
        let delayed = if self.fifo.is_empty() {
            visual
        } else {
            self.fifo.push_back(visual);
            self.fifo.pop_front().unwrap_or(0.0)
        };
        // limb dynamics: the hand cannot follow a step in the command
        self.motor[0] += self.motor_alpha * (delayed - self.motor[0]);
        self.motor[1] += self.motor_alpha * (self.motor[0] - self.motor[1]);
        // the board is steadied before release
        let steadiness = if obs.released { 1.0 } else { HOLD_NOISE_SCALE };
        let delayed = self.motor[1] + steadiness * self.central_noise.next(&mut self.rng);
        let haptic = obs.haptic.filter(|_| self.config.uses_haptic);
        let sides = self.config.side;
        let mut handle = |idx: usize, side: Side, alone: bool| {
            let mut z = side.sign() * delayed;
            if let (Some(f), true) = (haptic, alone) {
                self.force[idx] += self.force_alpha * (f.side(side) - self.force[idx]);
                let partner = self.partner_estimate(side, -self.force[idx], self.last[idx], obs);
                let w = self.config.haptic_weight;
                z = (1.0 - w) * z - w * partner;
            }
            z += steadiness * self.hand_noise[idx].next(&mut self.rng);
            self.last[idx] = z;
            z
        };
        match sides {
            AgentSide::Left => AgentCommand { left: Some(handle(0, Side::Left, true)), right: None },
            AgentSide::Right => AgentCommand { left: None, right: Some(handle(1, Side::Right, true)) },
            AgentSide::Both => AgentCommand {
                left: Some(handle(0, Side::Left, false)),
                right: Some(handle(1, Side::Right, false)),
            },
        }
    }

    /// Partner handle height implied by the support force on our handle.
    fn partner_estimate(&self, side: Side, support: f64, own_height: f64, obs: &AgentObservation) -> f64 {
        let p = &self.params;
        let (kh, ks) = (p.hand_stiffness, p.center_stiffness);
        let weight = (p.board_mass + p.ball_mass) * p.gravity;
        let kappa = kh * ks / (2.0 * (2.0 * kh + ks));
        let ball_load = side.sign() * p.ball_mass * p.gravity * obs.p_ball / (2.0 * p.half_span);
        let sum = (support - weight * kh / (2.0 * kh + ks) - ball_load) / kappa;
        sum - own_height
    }
}

/// Velocity estimate from successive positions: finite difference
/// followed by a first-order low-pass.
#[derive(Debug, Clone)]
pub struct StylusTracker {
    dt: f64,
    alpha: f64,
    last: Option<f64>,
    velocity: f64,
}

impl StylusTracker {
    pub fn new(dt: f64, cutoff_hz: f64) -> Self {
        Self {
            dt,
            alpha: 1.0 - (-2.0 * std::f64::consts::PI * cutoff_hz * dt).exp(),
            last: None,
            velocity: 0.0,
        }
    }

    /// Feeds the position for the next tick and returns `(z, z_dot)`.
    pub fn update(&mut self, z: f64) -> (f64, f64) {
        let raw = match self.last {
            Some(prev) => (z - prev) / self.dt,
            None => 0.0,
        };
        self.last = Some(z);
        self.velocity += self.alpha * (raw - self.velocity);
        (z, self.velocity)
    }

    pub fn last(&self) -> Option<f64> {
        self.last
    }
}

/// Left and right trackers that turn two heights into a [`StylusInput`].
#[derive(Debug, Clone)]
pub struct InputTracker {
    left: StylusTracker,
    right: StylusTracker,
}

impl InputTracker {
    pub fn new(params: &SimParams) -> Self {
        let t = StylusTracker::new(params.dt, TRACKER_CUTOFF_HZ);
        Self { left: t.clone(), right: t }
    }

    pub fn update(&mut self, z_left: f64, z_right: f64) -> StylusInput {
        let (z_left, z_left_dot) = self.left.update(z_left);
        let (z_right, z_right_dot) = self.right.update(z_right);
        StylusInput { z_left, z_left_dot, z_right, z_right_dot }
    }
}

/// The agents of one simulated pair of participants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentPair {
    /// Plays bimanual blocks as participant A and the left handle in dyadic
    /// blocks.
    pub a: AgentConfig,
    /// Participant B, right handle in dyadic blocks.
    pub b: AgentConfig,
}

impl Default for AgentPair {
    fn default() -> Self {
        Self {
            a: AgentConfig::default(),
            // slower partner, leans more on the force channel
            b: AgentConfig { reaction_delay: 0.25, haptic_weight: 0.5, ..AgentConfig::default() },
        }
    }
}

impl AgentPair {
    /// Agents that play a block, with sides set for its mode.
    pub fn for_block(&self, performer: Performer) -> Vec<AgentConfig> {
        match performer {
            Performer::ParticipantA => vec![self.a.with_side(AgentSide::Both)],
            Performer::ParticipantB => vec![self.b.with_side(AgentSide::Both)],
            Performer::Dyad => vec![self.a.with_side(AgentSide::Left), self.b.with_side(AgentSide::Right)],
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.a.validate()?;
        self.b.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunSettings {
    pub seed: u64,
    pub watchdog_s: f64,
    pub protocol: ProtocolSettings,
}

impl Default for RunSettings {
    fn default() -> Self {
        Self { seed: 1, watchdog_s: DEFAULT_WATCHDOG_S, protocol: ProtocolSettings::default() }
    }
}

/// Plays one block to completion with the given agents.
///
/// A single agent must drive both handles; two agents must drive one
/// handle each. Each agent gets its own random stream derived from the
/// seed and the block index, so blocks are independent of run order.
pub fn run_block(agents: &[AgentConfig], block: Block, params: &SimParams, settings: &RunSettings) -> Result<Vec<TrialRecord>> {
    let sides: Vec<AgentSide> = agents.iter().map(|a| a.side).collect();
    let valid = matches!(sides.as_slice(), [AgentSide::Both])
        || matches!(sides.as_slice(), [AgentSide::Left, AgentSide::Right] | [AgentSide::Right, AgentSide::Left]);
    if !valid {
        return Err(Error::Schedule(format!("agents {sides:?} do not cover both handles exactly once")));
    }
    for a in agents {
        a.validate()?;
    }
    params.validate()?;

    let mut players: Vec<Agent> = agents
        .iter()
        .enumerate()
        .map(|(i, cfg)| Agent::new(cfg.clone(), params, settings.seed, u64::from(block.index) * 4 + i as u64))
        .collect();
    let mut runner = BlockRunner::new(block, *params, settings.protocol).with_watchdog(settings.watchdog_s);
    let mut tracker = InputTracker::new(params);
    let mut rendered = ForcePair::ZERO;
    let haptic_on = block.condition.haptic;
    let (mut z_left, mut z_right) = (0.0, 0.0);

    while !runner.is_done() {
        let obs = AgentObservation::new(
            runner.state(),
            runner.phase(),
            runner.trial_config().target_side,
            haptic_on.then_some(rendered),
        );
        for agent in players.iter_mut() {
            let cmd = agent.command(&obs);
            z_left = cmd.left.unwrap_or(z_left);
            z_right = cmd.right.unwrap_or(z_right);
        }
        let input = tracker.update(z_left, z_right);
        rendered = runner.tick(&input)?.rendered;
    }
    Ok(runner.into_records())
}

/// One finished block of an experiment.
#[derive(Debug, Clone)]
pub struct BlockRun {
    pub block: Block,
    pub agents: Vec<AgentConfig>,
    pub trials: Vec<TrialRecord>,
}

/// Runs the blocks of a schedule one after another.
pub fn run_schedule(
    schedule: &BlockSchedule,
    pair: &AgentPair,
    params: &SimParams,
    settings: &RunSettings,
) -> Result<Vec<BlockRun>> {
    schedule
        .blocks
        .iter()
        .map(|block| {
            let agents = pair.for_block(block.performer);
            let trials = run_block(&agents, *block, params, settings)?;
            Ok(BlockRun { block: *block, agents, trials })
        })
        .collect()
}
