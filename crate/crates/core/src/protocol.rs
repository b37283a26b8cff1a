//! Experiment protocol: trial lifecycle, block schedule and the tick-level
//! runner that advances simulation and protocol in lock-step.
//!
//! A trial starts with the ball held opposite the target. Once the board has
//! been held level long enough the ball is released (`Running`). Entering
//! the target starts the dwell clock (`Dwelling`); leaving it resets the
//! clock. A contiguous dwell of `dwell_required` seconds ends the trial.
//! Letting the ball roll off the board fails the attempt, which restarts
//! the same trial.

use serde::{Deserialize, Serialize};

use crate::dynamics::{self, ForcePair, Side, SimState, StylusInput};
use crate::error::{Error, Result};
use crate::params::SimParams;

pub const TRIALS_PER_BLOCK: u32 = 60;
pub const DWELL_REQUIRED_S: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Bimanual,
    Dyadic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Performer {
    #[serde(rename = "a")]
    ParticipantA,
    #[serde(rename = "b")]
    ParticipantB,
    Dyad,
}

impl Performer {
    pub fn label(self) -> &'static str {
        match self {
            Performer::ParticipantA => "a",
            Performer::ParticipantB => "b",
            Performer::Dyad => "dyad",
        }
    }

    pub fn mode(self) -> Mode {
        match self {
            Performer::Dyad => Mode::Dyadic,
            _ => Mode::Bimanual,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Condition {
    pub mode: Mode,
    pub haptic: bool,
}

impl Condition {
    pub const ALL: [Condition; 4] = [
        Condition { mode: Mode::Bimanual, haptic: true },
        Condition { mode: Mode::Bimanual, haptic: false },
        Condition { mode: Mode::Dyadic, haptic: true },
        Condition { mode: Mode::Dyadic, haptic: false },
    ];

    /// `bimanual_on`, `dyadic_off`, ...
    pub fn label(&self) -> String {
        let mode = match self.mode {
            Mode::Bimanual => "bimanual",
            Mode::Dyadic => "dyadic",
        };
        format!("{mode}_{}", if self.haptic { "on" } else { "off" })
    }

    pub fn parse(label: &str) -> Option<Condition> {
        Condition::ALL.into_iter().find(|c| c.label() == label)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialPhase {
    PreTrial,
    Running,
    Dwelling,
    Succeeded,
    Failed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialConfig {
    pub target_side: Side,
    pub dwell_required: f64,
    pub condition: Condition,
    pub trial_index: u32,
    pub block_index: u32,
}

impl TrialConfig {
    /// Same block, next trial, target on the other side.
    pub fn next(&self) -> Self {
        Self {
            target_side: self.target_side.opposite(),
            trial_index: self.trial_index + 1,
            ..*self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub index: u32,
    pub performer: Performer,
    pub condition: Condition,
    pub trials_required: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockSchedule {
    pub blocks: Vec<Block>,
}

/// Performer order for one pair: four alternating bimanual blocks each, six
/// dyadic blocks, then two more alternating bimanual blocks each.
const PERFORMER_ORDER: [Performer; 18] = {
    use Performer::*;
    [
        ParticipantA, ParticipantB, ParticipantA, ParticipantB,
        ParticipantA, ParticipantB, ParticipantA, ParticipantB,
        Dyad, Dyad, Dyad, Dyad, Dyad, Dyad,
        ParticipantA, ParticipantB, ParticipantA, ParticipantB,
    ]
};

pub fn build_schedule(counterbalance: bool) -> BlockSchedule {
    build_schedule_with(counterbalance, TRIALS_PER_BLOCK)
}

/// The haptic flag alternates along each performer's own sequence of
/// blocks. Participant A and the dyad open with feedback on, participant B
/// with feedback off; `counterbalance` inverts every flag.
pub fn build_schedule_with(counterbalance: bool, trials_per_block: u32) -> BlockSchedule {
    let mut seen = [0usize; 3];
    let blocks = PERFORMER_ORDER
        .iter()
        .enumerate()
        .map(|(i, &performer)| {
            let slot = performer as usize;
            let opens_on = performer != Performer::ParticipantB;
            let haptic = (opens_on ^ (seen[slot] % 2 == 1)) ^ counterbalance;
            seen[slot] += 1;
            Block {
                index: i as u32,
                performer,
                condition: Condition {
                    mode: performer.mode(),
                    haptic,
                },
                trials_required: trials_per_block,
            }
        })
        .collect();
    BlockSchedule { blocks }
}

/// Checks the structural rules of a pair's schedule.
pub fn validate_schedule(schedule: &BlockSchedule) -> Result<()> {
    let fail = |msg: String| Err(Error::Schedule(msg));
    let blocks = &schedule.blocks;
    if blocks.len() != 18 {
        return fail(format!("expected 18 blocks, got {}", blocks.len()));
    }
    for (i, b) in blocks.iter().enumerate() {
        if b.index as usize != i {
            return fail(format!("block {i} carries index {}", b.index));
        }
        if b.condition.mode != b.performer.mode() {
            return fail(format!("block {i}: {:?} cannot run {:?}", b.performer, b.condition.mode));
        }
    }
    let performers: Vec<_> = blocks.iter().map(|b| b.performer).collect();
    let bimanual_phase = |range: std::ops::Range<usize>| {
        performers[range]
            .chunks(2)
            .all(|c| c == [Performer::ParticipantA, Performer::ParticipantB])
    };
    if !bimanual_phase(0..8) || !bimanual_phase(14..18) || performers[8..14].iter().any(|&p| p != Performer::Dyad) {
        return fail("performer order must be 4+4 alternating bimanual, 6 dyadic, 2+2 alternating bimanual".into());
    }
    for performer in [Performer::ParticipantA, Performer::ParticipantB, Performer::Dyad] {
        let flags: Vec<bool> = blocks
            .iter()
            .filter(|b| b.performer == performer)
            .map(|b| b.condition.haptic)
            .collect();
        if flags.windows(2).any(|w| w[0] == w[1]) {
            return fail(format!("haptic flag does not alternate across {performer:?} blocks"));
        }
    }
    for participant in [Performer::ParticipantA, Performer::ParticipantB] {
        for condition in Condition::ALL {
            let trials: u32 = blocks
                .iter()
                .filter(|b| b.condition == condition && (b.performer == participant || b.performer == Performer::Dyad))
                .map(|b| b.trials_required)
                .sum();
            let expected = 3 * blocks[0].trials_required;
            if trials != expected {
                return fail(format!(
                    "{participant:?} has {trials} trials in {} (expected {expected})",
                    condition.label()
                ));
            }
        }
    }
    Ok(())
}

/// Thresholds of the protocol state machine.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProtocolSettings {
    pub dwell_required: f64,
    /// Board must stay within this angle (rad) of level to release the ball.
    pub horizontal_tol: f64,
    /// ... while rotating slower than this (rad/s) ...
    pub rate_tol: f64,
    /// ... for this long (s).
    pub gate_hold: f64,
}

impl Default for ProtocolSettings {
    fn default() -> Self {
        Self {
            dwell_required: DWELL_REQUIRED_S,
            horizontal_tol: 1f64.to_radians(),
            rate_tol: 2f64.to_radians(),
            gate_hold: 0.2,
        }
    }
}

/// Places the ball opposite the target, at rest, keeping the board state.
pub fn init_trial(config: &TrialConfig, params: &SimParams, previous: &SimState) -> SimState {
    SimState {
        p_ball: -params.target_center(config.target_side),
        p_ball_dot: 0.0,
        ..*previous
    }
}

/// Whether the ball center lies within the target area.
pub fn in_target(p_ball: f64, side: Side, params: &SimParams) -> bool {
    (p_ball - params.target_center(side)).abs() <= params.target_half_width
}

pub fn fell_off(p_ball: f64, params: &SimParams) -> bool {
    p_ball.abs() > params.board_half_length
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum ProtocolEvent {
    TrialStarted { t: f64 },
    EnteredTarget { t: f64 },
    LeftTarget { t: f64 },
    Succeeded { t: f64, completion_time: f64, n_failures: u32 },
    Failed { t: f64, n_failures: u32 },
}

/// Phase machine of a single trial, advanced once per simulation tick.
#[derive(Debug, Clone)]
pub struct TrialProtocol {
    settings: ProtocolSettings,
    config: TrialConfig,
    phase: TrialPhase,
    gate_ticks: u32,
    gate_required: u32,
    dwell_ticks: u32,
    dwell_required: u32,
    start_t: Option<f64>,
    entry_t: Option<f64>,
    n_failures: u32,
}

impl TrialProtocol {
    pub fn new(config: TrialConfig, settings: ProtocolSettings, params: &SimParams) -> Self {
        Self {
            settings,
            config,
            phase: TrialPhase::PreTrial,
            gate_ticks: 0,
            gate_required: (settings.gate_hold / params.dt).round() as u32,
            dwell_ticks: 0,
            dwell_required: (config.dwell_required / params.dt).round() as u32,
            start_t: None,
            entry_t: None,
            n_failures: 0,
        }
    }

    pub fn phase(&self) -> TrialPhase {
        self.phase
    }

    pub fn config(&self) -> &TrialConfig {
        &self.config
    }

    pub fn n_failures(&self) -> u32 {
        self.n_failures
    }

    /// Time the current attempt was released.
    pub fn start_time(&self) -> Option<f64> {
        self.start_t
    }

    /// One protocol step on the state reached after the latest simulation step.
    pub fn protocol_step(&mut self, state: &SimState, params: &SimParams) -> Vec<ProtocolEvent> {
        let mut events = Vec::new();
        let t = state.t;
        match self.phase {
            TrialPhase::PreTrial => {
                let level = state.theta.abs() < self.settings.horizontal_tol
                    && state.theta_dot.abs() < self.settings.rate_tol;
                self.gate_ticks = if level { self.gate_ticks + 1 } else { 0 };
                if self.gate_ticks >= self.gate_required {
                    self.phase = TrialPhase::Running;
                    self.start_t = Some(t);
                    events.push(ProtocolEvent::TrialStarted { t });
                }
            }
            TrialPhase::Running | TrialPhase::Dwelling => {
                if fell_off(state.p_ball, params) {
                    self.phase = TrialPhase::Failed;
                    self.n_failures += 1;
                    events.push(ProtocolEvent::Failed {
                        t,
                        n_failures: self.n_failures,
                    });
                } else if in_target(state.p_ball, self.config.target_side, params) {
                    if self.phase == TrialPhase::Running {
                        self.phase = TrialPhase::Dwelling;
                        self.entry_t = Some(t);
                        self.dwell_ticks = 0;
                        events.push(ProtocolEvent::EnteredTarget { t });
                    } else {
                        self.dwell_ticks += 1;
                    }
                    if self.dwell_ticks >= self.dwell_required {
                        self.phase = TrialPhase::Succeeded;
                        let completion_time = self.entry_t.unwrap_or(t) - self.start_t.unwrap_or(t);
                        events.push(ProtocolEvent::Succeeded {
                            t,
                            completion_time,
                            n_failures: self.n_failures,
                        });
                    }
                } else if self.phase == TrialPhase::Dwelling {
                    self.phase = TrialPhase::Running;
                    self.entry_t = None;
                    events.push(ProtocolEvent::LeftTarget { t });
                }
            }
            TrialPhase::Succeeded | TrialPhase::Failed => {}
        }
        events
    }

    /// Re-arms the gate after a failure; the failure count is kept.
    pub fn restart(&mut self) {
        self.phase = TrialPhase::PreTrial;
        self.gate_ticks = 0;
        self.dwell_ticks = 0;
        self.start_t = None;
        self.entry_t = None;
    }

    /// Holds the machine in `PreTrial` with the gate disarmed.
    pub fn hold(&mut self) {
        if self.phase == TrialPhase::PreTrial {
            self.gate_ticks = 0;
        }
    }
}

/// One logged sample. Field order is the on-disk order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleFrame {
    pub t: f64,
    pub z_board: f64,
    pub z_board_dot: f64,
    pub theta: f64,
    pub theta_dot: f64,
    pub p_ball: f64,
    pub p_ball_dot: f64,
    pub z_left: f64,
    pub z_left_dot: f64,
    pub z_right: f64,
    pub z_right_dot: f64,
    pub f_left: f64,
    pub f_right: f64,
    pub haptic_on: bool,
    pub trial_index: u32,
    pub phase: TrialPhase,
}

impl SampleFrame {
    pub fn new(
        state: &SimState,
        input: &StylusInput,
        applied: &ForcePair,
        haptic_on: bool,
        trial_index: u32,
        phase: TrialPhase,
    ) -> Self {
        Self {
            t: state.t,
            z_board: state.z_board,
            z_board_dot: state.z_board_dot,
            theta: state.theta,
            theta_dot: state.theta_dot,
            p_ball: state.p_ball,
            p_ball_dot: state.p_ball_dot,
            z_left: input.z_left,
            z_left_dot: input.z_left_dot,
            z_right: input.z_right,
            z_right_dot: input.z_right_dot,
            f_left: applied.f_left,
            f_right: applied.f_right,
            haptic_on,
            trial_index,
            phase,
        }
    }

    pub fn state(&self) -> SimState {
        SimState {
            t: self.t,
            z_board: self.z_board,
            z_board_dot: self.z_board_dot,
            theta: self.theta,
            theta_dot: self.theta_dot,
            p_ball: self.p_ball,
            p_ball_dot: self.p_ball_dot,
        }
    }

    pub fn input(&self) -> StylusInput {
        StylusInput {
            z_left: self.z_left,
            z_left_dot: self.z_left_dot,
            z_right: self.z_right,
            z_right_dot: self.z_right_dot,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialOutcome {
    Succeeded,
    /// Closed by the headless watchdog.
    Aborted,
    /// Session ended before the trial closed.
    Incomplete,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub config: TrialConfig,
    /// Frames of every attempt, failed ones included, in time order.
    pub frames: Vec<SampleFrame>,
    pub outcome: TrialOutcome,
    pub completion_time: Option<f64>,
    pub n_failures: u32,
    /// Release time of the last attempt.
    pub attempt_start: Option<f64>,
}

impl TrialRecord {
    pub fn succeeded(&self) -> bool {
        self.outcome == TrialOutcome::Succeeded
    }

    /// Frames of the last attempt.
    pub fn final_attempt(&self) -> &[SampleFrame] {
        match self.attempt_start {
            Some(t0) => {
                let first = self.frames.partition_point(|f| f.t < t0);
                &self.frames[first..]
            }
            None => &[],
        }
    }
}

/// Output of one [`BlockRunner::tick`].
#[derive(Debug, Clone, Default)]
pub struct TickOutput {
    /// Force rendered on the handles; zero when feedback is off.
    pub rendered: ForcePair,
    pub events: Vec<ProtocolEvent>,
    /// Set when a trial closed this tick.
    pub closed_trial: Option<TrialOutcome>,
    pub block_done: bool,
}

/// Advances one block: simulation, protocol and frame logging.
#[derive(Debug, Clone)]
pub struct BlockRunner {
    params: SimParams,
    settings: ProtocolSettings,
    block: Block,
    state: SimState,
    tick: u64,
    protocol: TrialProtocol,
    frames: Vec<SampleFrame>,
    trial_first_tick: u64,
    watchdog_ticks: Option<u64>,
    records: Vec<TrialRecord>,
    held: bool,
}

impl BlockRunner {
    pub fn new(block: Block, params: SimParams, settings: ProtocolSettings) -> Self {
        Self::starting_from(block, params, settings, SimState::default())
    }

    pub fn starting_from(block: Block, params: SimParams, settings: ProtocolSettings, board: SimState) -> Self {
        let config = TrialConfig {
            target_side: Side::Right,
            dwell_required: settings.dwell_required,
            condition: block.condition,
            trial_index: 0,
            block_index: block.index,
        };
        let state = init_trial(&config, &params, &SimState { t: 0.0, ..board });
        Self {
            protocol: TrialProtocol::new(config, settings, &params),
            params,
            settings,
            block,
            state,
            tick: 0,
            frames: Vec::new(),
            trial_first_tick: 0,
            watchdog_ticks: None,
            records: Vec::new(),
            held: false,
        }
    }

    /// Closes a trial as aborted once it has run this long (s) in total.
    pub fn with_watchdog(mut self, seconds: f64) -> Self {
        self.watchdog_ticks = Some((seconds / self.params.dt).round() as u64);
        self
    }

    pub fn params(&self) -> &SimParams {
        &self.params
    }

    pub fn block(&self) -> &Block {
        &self.block
    }

    pub fn state(&self) -> &SimState {
        &self.state
    }

    pub fn tick_count(&self) -> u64 {
        self.tick
    }

    pub fn phase(&self) -> TrialPhase {
        self.protocol.phase()
    }

    pub fn trial_config(&self) -> &TrialConfig {
        self.protocol.config()
    }

    pub fn records(&self) -> &[TrialRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<TrialRecord> {
        self.records
    }

    pub fn is_done(&self) -> bool {
        self.records.len() as u32 >= self.block.trials_required
    }

    /// While held the ball stays fixed and the next trial is not released.
    pub fn set_held(&mut self, held: bool) {
        self.held = held;
    }

    fn hold_ball(&mut self) {
        let start = init_trial(self.protocol.config(), &self.params, &self.state);
        self.state.p_ball = start.p_ball;
        self.state.p_ball_dot = 0.0;
    }

    pub fn tick(&mut self, input: &StylusInput) -> Result<TickOutput> {
        let mut out = TickOutput::default();
        if self.is_done() {
            out.block_done = true;
            return Ok(out);
        }
        let input = StylusInput {
            z_left: input.z_left.clamp(-self.params.stylus_limit, self.params.stylus_limit),
            z_right: input.z_right.clamp(-self.params.stylus_limit, self.params.stylus_limit),
            ..*input
        };
        let (mut next, applied, haptic) = dynamics::step_with_forces(&self.state, &input, &self.params)?;
        self.tick += 1;
        next.t = self.tick as f64 * self.params.dt;
        self.state = next;
        let haptic_on = self.block.condition.haptic;
        out.rendered = if haptic_on { haptic } else { ForcePair::ZERO };

        if self.protocol.phase() == TrialPhase::PreTrial {
            self.hold_ball();
            if self.held {
                self.protocol.hold();
            }
        }
        if !(self.held && self.protocol.phase() == TrialPhase::PreTrial) {
            out.events = self.protocol.protocol_step(&self.state, &self.params);
        }

        let phase = self.protocol.phase();
        if phase != TrialPhase::PreTrial {
            self.frames.push(SampleFrame::new(
                &self.state,
                &input,
                &applied,
                haptic_on,
                self.protocol.config().trial_index,
                phase,
            ));
        }

        match phase {
            TrialPhase::Succeeded => {
                let completion_time = out.events.iter().find_map(|e| match e {
                    ProtocolEvent::Succeeded { completion_time, .. } => Some(*completion_time),
                    _ => None,
                });
                self.close_trial(TrialOutcome::Succeeded, completion_time);
                out.closed_trial = Some(TrialOutcome::Succeeded);
                // shift the ball to the center of the target it just reached
                self.state.p_ball = self.params.target_center(self.records.last().unwrap().config.target_side);
                self.state.p_ball_dot = 0.0;
            }
            TrialPhase::Failed => {
                self.protocol.restart();
                self.hold_ball();
            }
            _ => {
                if let Some(limit) = self.watchdog_ticks {
                    if self.tick - self.trial_first_tick >= limit {
                        self.close_trial(TrialOutcome::Aborted, None);
                        out.closed_trial = Some(TrialOutcome::Aborted);
                        self.hold_ball();
                    }
                }
            }
        }
        out.block_done = self.is_done();
        Ok(out)
    }

    fn close_trial(&mut self, outcome: TrialOutcome, completion_time: Option<f64>) {
        let config = *self.protocol.config();
        let record = TrialRecord {
            config,
            frames: std::mem::take(&mut self.frames),
            outcome,
            completion_time,
            n_failures: self.protocol.n_failures(),
            attempt_start: self.protocol.start_time(),
        };
        self.records.push(record);
        self.protocol = TrialProtocol::new(config.next(), self.settings, &self.params);
        self.trial_first_tick = self.tick;
    }

    /// Closes the trial in progress as incomplete (session shutdown).
    pub fn abandon(&mut self) -> Option<&TrialRecord> {
        if self.frames.is_empty() {
            return None;
        }
        let record = TrialRecord {
            config: *self.protocol.config(),
            frames: std::mem::take(&mut self.frames),
            outcome: TrialOutcome::Incomplete,
            completion_time: None,
            n_failures: self.protocol.n_failures(),
            attempt_start: self.protocol.start_time(),
        };
        self.records.push(record);
        self.records.last()
    }
}
