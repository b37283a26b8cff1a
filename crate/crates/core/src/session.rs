//! Interactive sessions, independent of the transport.
//!
//! A [`Session`] owns one block. Clients claim roles with `Join` and stream
//! stylus heights with `Input`; the session keeps only the latest height per
//! handle, derives velocities itself, advances the simulation one tick at a
//! time and hands back the messages to send. Everything that reaches the
//! simulation is recorded in a transcript so a session can be replayed
//! bit-exactly without clients.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agents::InputTracker;
use crate::dynamics::{Side, StylusInput};
use crate::error::Result;
use crate::logs::BlockLog;
use crate::params::SimParams;
use crate::protocol::{Block, BlockRunner, Mode, ProtocolEvent, ProtocolSettings, TrialPhase, TrialRecord};

/// State broadcasts per second of simulated time.
pub const STATE_RATE_HZ: u64 = 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Left,
    Right,
    /// One client driving both handles (bimanual).
    Both,
}

/// Height carried by an `Input`: one value for a one-handle role, a
/// `[left, right]` pair for `both`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InputHeight {
    One(f64),
    Two([f64; 2]),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockSummary {
    pub session: String,
    pub block_index: u32,
    pub condition: String,
    pub n_trials: u32,
    pub n_succeeded: u32,
    pub mean_completion_time: Option<f64>,
    pub incomplete: bool,
    #[serde(default)]
    pub files: Vec<String>,
    /// Set when the log could not be written.
    #[serde(default)]
    pub error: Option<String>,
}

/// Every message exchanged with clients, tagged by `type`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum WireMessage {
    Join {
        session: String,
        role: Role,
    },
    Input {
        seq: u64,
        t_client: f64,
        z: InputHeight,
    },
    Pong {
        t: f64,
    },
    Welcome {
        role: Role,
        params: SimParams,
        mode: Mode,
        haptic: bool,
    },
    Reject {
        reason: String,
    },
    State {
        t: f64,
        z_board: f64,
        theta: f64,
        p_ball: f64,
        phase: TrialPhase,
        target_side: Side,
        trial_index: u32,
    },
    TrialResult {
        completion_time: f64,
        n_failures: u32,
    },
    BlockDone {
        summary: BlockSummary,
    },
    Ping {
        t: f64,
    },
}

impl WireMessage {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("wire messages always serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

pub type ClientId = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Recipient {
    All,
    Client(ClientId),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outgoing {
    pub to: Recipient,
    pub message: WireMessage,
}

impl Outgoing {
    fn all(message: WireMessage) -> Self {
        Self { to: Recipient::All, message }
    }

    fn client(id: ClientId, message: WireMessage) -> Self {
        Self { to: Recipient::Client(id), message }
    }
}

/// What changed right before a tick. Only ticks with a change appear.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub tick: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub held: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z_left: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z_right: Option<f64>,
}

#[derive(Debug, Clone)]
struct ClientSlot {
    role: Role,
    last_seq: Option<u64>,
    rtt: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Session {
    id: String,
    runner: BlockRunner,
    clients: BTreeMap<ClientId, ClientSlot>,
    latest: [f64; 2],
    pending: [Option<f64>; 2],
    applied_held: Option<bool>,
    tracker: InputTracker,
    transcript: Vec<TranscriptEntry>,
    finished: bool,
    settings: ProtocolSettings,
}

impl Session {
    pub fn new(id: &str, block: Block, params: SimParams, settings: ProtocolSettings) -> Self {
        Self {
            id: id.to_string(),
            runner: BlockRunner::new(block, params, settings),
            clients: BTreeMap::new(),
            latest: [0.0; 2],
            pending: [None; 2],
            applied_held: None,
            tracker: InputTracker::new(&params),
            transcript: Vec::new(),
            finished: false,
            settings,
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn block(&self) -> &Block {
        self.runner.block()
    }

    pub fn runner(&self) -> &BlockRunner {
        &self.runner
    }

    pub fn transcript(&self) -> &[TranscriptEntry] {
        &self.transcript
    }

    pub fn records(&self) -> &[TrialRecord] {
        self.runner.records()
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    fn mode(&self) -> Mode {
        self.runner.block().condition.mode
    }

    fn required_roles(&self) -> &'static [Role] {
        match self.mode() {
            Mode::Bimanual => &[Role::Both],
            Mode::Dyadic => &[Role::Left, Role::Right],
        }
    }

    fn role_taken(&self, role: Role) -> bool {
        self.clients.values().any(|c| c.role == role)
    }

    pub fn roles(&self) -> Vec<Role> {
        self.clients.values().map(|c| c.role).collect()
    }

    /// Whether every role of the mode has a client.
    pub fn is_ready(&self) -> bool {
        self.required_roles().iter().all(|r| self.role_taken(*r))
    }

    /// Binds a role to a connection. Returns `Welcome` or `Reject`.
    pub fn assign_role(&mut self, client: ClientId, join: &WireMessage) -> WireMessage {
        let reject = |reason: String| WireMessage::Reject { reason };
        let WireMessage::Join { session, role } = join else {
            return reject("expected join".into());
        };
        if *session != self.id {
            return reject(format!("unknown session {session:?}"));
        }
        if self.clients.contains_key(&client) {
            return reject("connection already has a role".into());
        }
        if !self.required_roles().contains(role) {
            return reject(format!("role {role:?} not available in a {:?} session", self.mode()));
        }
        if self.role_taken(*role) {
            return reject(format!("role {role:?} already claimed"));
        }
        self.clients.insert(client, ClientSlot { role: *role, last_seq: None, rtt: None });
        let block = self.runner.block();
        WireMessage::Welcome {
            role: *role,
            params: *self.runner.params(),
            mode: block.condition.mode,
            haptic: block.condition.haptic,
        }
    }

    pub fn disconnect(&mut self, client: ClientId) {
        self.clients.remove(&client);
    }

    /// Handles a client message other than `Join`. Stale or out-of-role
    /// inputs are dropped; a reply is returned only for protocol errors.
    pub fn handle(&mut self, client: ClientId, message: &WireMessage) -> Option<Outgoing> {
        if matches!(message, WireMessage::Join { .. }) {
            return Some(Outgoing::client(client, self.assign_role(client, message)));
        }
        let Some(slot) = self.clients.get_mut(&client) else {
            return Some(Outgoing::client(client, WireMessage::Reject { reason: "join first".into() }));
        };
        match message {
            WireMessage::Input { seq, z, .. } => {
                if slot.last_seq.is_some_and(|last| *seq <= last) {
                    return None;
                }
                let heights = match (slot.role, z) {
                    (Role::Left, InputHeight::One(v)) => [Some(*v), None],
                    (Role::Right, InputHeight::One(v)) => [None, Some(*v)],
                    (Role::Both, InputHeight::Two([l, r])) => [Some(*l), Some(*r)],
                    _ => {
                        return Some(Outgoing::client(
                            client,
                            WireMessage::Reject { reason: "input shape does not match role".into() },
                        ))
                    }
                };
                if heights.iter().flatten().any(|v| !v.is_finite()) {
                    return None;
                }
                slot.last_seq = Some(*seq);
                for (i, h) in heights.into_iter().enumerate() {
                    if let Some(h) = h {
                        self.pending[i] = Some(h);
                    }
                }
                None
            }
            WireMessage::Pong { t } => {
                let now = self.runner.state().t;
                slot.rtt = Some(now - t);
                None
            }
            _ => Some(Outgoing::client(client, WireMessage::Reject { reason: "unexpected message".into() })),
        }
    }

    /// Everything needed to replay the session so far.
    pub fn transcript_file(&self) -> TranscriptFile {
        TranscriptFile {
            session: self.id.clone(),
            block: *self.runner.block(),
            params: *self.runner.params(),
            settings: self.settings,
            n_ticks: self.runner.tick_count(),
            entries: self.transcript.clone(),
        }
    }

    /// Round-trip times by role, in seconds of simulated time.
    pub fn rtts(&self) -> Vec<(Role, f64)> {
        self.clients.values().filter_map(|c| c.rtt.map(|r| (c.role, r))).collect()
    }

    /// Advances exactly one tick and returns the messages it produced.
    pub fn tick(&mut self) -> Result<Vec<Outgoing>> {
        let mut out = Vec::new();
        if self.finished {
            return Ok(out);
        }
        let held = !self.is_ready();
        let mut entry = TranscriptEntry { tick: self.runner.tick_count(), held: None, z_left: None, z_right: None };
        if self.applied_held != Some(held) {
            self.applied_held = Some(held);
            entry.held = Some(held);
        }
        if let Some(z) = self.pending[0].take() {
            if z != self.latest[0] {
                entry.z_left = Some(z);
            }
            self.latest[0] = z;
        }
        if let Some(z) = self.pending[1].take() {
            if z != self.latest[1] {
                entry.z_right = Some(z);
            }
            self.latest[1] = z;
        }
        if entry.held.is_some() || entry.z_left.is_some() || entry.z_right.is_some() {
            self.transcript.push(entry);
        }

        let tick = apply_tick(&mut self.runner, &mut self.tracker, held, self.latest)?;
        for event in &tick.events {
            if let ProtocolEvent::Succeeded { completion_time, n_failures, .. } = *event {
                out.push(Outgoing::all(WireMessage::TrialResult { completion_time, n_failures }));
            }
        }
        let n = self.runner.tick_count();
        if (n * STATE_RATE_HZ) / 1000 != ((n - 1) * STATE_RATE_HZ) / 1000 {
            out.push(Outgoing::all(self.state_message()));
        }
        if n.is_multiple_of(1000) {
            out.push(Outgoing::all(WireMessage::Ping { t: self.runner.state().t }));
        }
        if tick.block_done {
            self.finished = true;
        }
        Ok(out)
    }

    /// Snapshot for clients. Carries no stylus coordinate of any role.
    pub fn state_message(&self) -> WireMessage {
        let s = self.runner.state();
        WireMessage::State {
            t: s.t,
            z_board: s.z_board,
            theta: s.theta,
            p_ball: s.p_ball,
            phase: self.runner.phase(),
            target_side: self.runner.trial_config().target_side,
            trial_index: self.runner.trial_config().trial_index,
        }
    }

    fn players(&self) -> serde_json::Value {
        let clients: Vec<serde_json::Value> = self
            .clients
            .values()
            .map(|c| serde_json::json!({ "role": c.role, "rtt": c.rtt }))
            .collect();
        serde_json::json!({ "kind": "interactive", "clients": clients })
    }

    /// Builds the block log. A session that is not finished gets its open
    /// trial closed as incomplete first.
    pub fn block_log(&mut self) -> BlockLog {
        if !self.finished {
            self.runner.abandon();
            self.finished = true;
        }
        BlockLog::new(
            &self.id,
            *self.runner.block(),
            *self.runner.params(),
            self.players(),
            self.runner.records().to_vec(),
        )
    }

    /// Writes the block log, summary CSV and input transcript into `dir`
    /// and returns the `BlockDone` payload. A write failure is reported in
    /// the summary.
    pub fn persist(&mut self, dir: &Path) -> BlockSummary {
        let mut log = self.block_log();
        let mut summary = summarize(&log);
        let transcript = dir.join(format!("{}_transcript.json", log.stem()));
        let written = log.persist(dir).and_then(|files| self.transcript_file().write(&transcript).map(|_| files));
        match written {
            Ok((jsonl, csv)) => summary.files = vec![file_name(&jsonl), file_name(&csv), file_name(&transcript)],
            Err(e) => {
                log.footer.error = Some(e.to_string());
                summary.error = Some(e.to_string());
            }
        }
        summary
    }
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

pub fn summarize(log: &BlockLog) -> BlockSummary {
    let cts: Vec<f64> = log.trials.iter().filter_map(|t| t.completion_time).collect();
    BlockSummary {
        session: log.header.session.clone(),
        block_index: log.header.block.index,
        condition: log.header.block.condition.label(),
        n_trials: log.footer.n_trials,
        n_succeeded: log.footer.n_succeeded,
        mean_completion_time: (!cts.is_empty()).then(|| cts.iter().sum::<f64>() / cts.len() as f64),
        incomplete: log.footer.incomplete,
        files: Vec::new(),
        error: log.footer.error.clone(),
    }
}

fn apply_tick(
    runner: &mut BlockRunner,
    tracker: &mut InputTracker,
    held: bool,
    heights: [f64; 2],
) -> Result<crate::protocol::TickOutput> {
    runner.set_held(held);
    let input: StylusInput = tracker.update(heights[0], heights[1]);
    runner.tick(&input)
}

/// Re-runs a block from a transcript for `n_ticks` ticks.
pub fn replay(
    block: Block,
    params: SimParams,
    settings: ProtocolSettings,
    transcript: &[TranscriptEntry],
    n_ticks: u64,
) -> Result<BlockRunner> {
    let mut runner = BlockRunner::new(block, params, settings);
    let mut tracker = InputTracker::new(&params);
    let mut heights = [0.0; 2];
    let mut held = true;
    let mut entries = transcript.iter().peekable();
    for tick in 0..n_ticks {
        while let Some(e) = entries.next_if(|e| e.tick == tick) {
            held = e.held.unwrap_or(held);
            heights[0] = e.z_left.unwrap_or(heights[0]);
            heights[1] = e.z_right.unwrap_or(heights[1]);
        }
        if apply_tick(&mut runner, &mut tracker, held, heights)?.block_done {
            break;
        }
    }
    Ok(runner)
}

/// Input transcript of one session block, written next to its log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptFile {
    pub session: String,
    pub block: Block,
    pub params: SimParams,
    pub settings: ProtocolSettings,
    pub n_ticks: u64,
    pub entries: Vec<TranscriptEntry>,
}

impl TranscriptFile {
    pub fn replay(&self) -> Result<BlockRunner> {
        replay(self.block, self.params, self.settings, &self.entries, self.n_ticks)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }
}

/// Default location for session logs.
pub fn default_log_dir() -> PathBuf {
    PathBuf::from("logs")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::{Condition, Performer};

    fn block(mode: Mode, n: u32) -> Block {
        let performer = if mode == Mode::Dyadic { Performer::Dyad } else { Performer::ParticipantA };
        Block { index: 3, performer, condition: Condition { mode, haptic: true }, trials_required: n }
    }

    fn session(mode: Mode) -> Session {
        Session::new("s1", block(mode, 2), SimParams::default(), ProtocolSettings::default())
    }

    fn join(role: Role) -> WireMessage {
        WireMessage::Join { session: "s1".into(), role }
    }

    #[test]
    fn roles_by_mode() {
        let mut s = session(Mode::Bimanual);
        assert!(matches!(s.assign_role(1, &join(Role::Left)), WireMessage::Reject { .. }));
        assert!(matches!(s.assign_role(1, &join(Role::Both)), WireMessage::Welcome { role: Role::Both, .. }));
        assert!(matches!(s.assign_role(2, &join(Role::Both)), WireMessage::Reject { .. }));

        let mut d = session(Mode::Dyadic);
        assert!(matches!(d.assign_role(1, &join(Role::Left)), WireMessage::Welcome { .. }));
        assert!(matches!(d.assign_role(2, &join(Role::Left)), WireMessage::Reject { .. }));
        assert!(!d.is_ready());
        assert!(matches!(d.assign_role(2, &join(Role::Right)), WireMessage::Welcome { .. }));
        assert!(d.is_ready());
        let wrong = WireMessage::Join { session: "other".into(), role: Role::Right };
        assert!(matches!(d.assign_role(3, &wrong), WireMessage::Reject { .. }));
    }

    #[test]
    fn unclaimed_role_holds_pretrial_and_still_broadcasts() {
        let mut d = session(Mode::Dyadic);
        d.assign_role(1, &join(Role::Left));
        let mut states = 0;
        for _ in 0..1000 {
            for o in d.tick().unwrap() {
                if let WireMessage::State { phase, .. } = o.message {
                    assert_eq!(phase, TrialPhase::PreTrial);
                    states += 1;
                }
            }
        }
        assert_eq!(states, 60);
    }

    #[test]
    fn state_rate_is_decimated_to_sixty_hz() {
        let mut s = session(Mode::Bimanual);
        s.assign_role(1, &join(Role::Both));
        let mut ticks_with_state = Vec::new();
        for i in 1..=2000u64 {
            if s.tick().unwrap().iter().any(|o| matches!(o.message, WireMessage::State { .. })) {
                ticks_with_state.push(i);
            }
        }
        assert_eq!(ticks_with_state.len(), 120);
        assert!(ticks_with_state.windows(2).all(|w| (16..=17).contains(&(w[1] - w[0]))));
    }

    #[test]
    fn inputs_follow_latest_value_and_sequence() {
        let mut s = session(Mode::Dyadic);
        s.assign_role(1, &join(Role::Left));
        s.assign_role(2, &join(Role::Right));
        let input = |seq, z| WireMessage::Input { seq, t_client: 0.0, z: InputHeight::One(z) };
        assert!(s.handle(1, &input(2, 0.01)).is_none());
        assert!(s.handle(1, &input(1, 0.05)).is_none()); // stale
        assert!(s.handle(1, &input(3, 0.02)).is_none());
        let pair = WireMessage::Input { seq: 4, t_client: 0.0, z: InputHeight::Two([0.0, 0.0]) };
        assert!(matches!(s.handle(2, &pair), Some(Outgoing { message: WireMessage::Reject { .. }, .. })));
        s.tick().unwrap();
        assert_eq!(s.transcript()[0].z_left, Some(0.02));
        assert_eq!(s.transcript()[0].z_right, None);
        // no input for 2 s: the height is held
        for _ in 0..2000 {
            s.tick().unwrap();
        }
        assert_eq!(s.transcript().len(), 1);
        assert!(s.handle(9, &input(1, 0.0)).is_some());
    }

    #[test]
    fn state_never_carries_stylus_fields() {
        let mut s = session(Mode::Dyadic);
        s.assign_role(1, &join(Role::Left));
        s.assign_role(2, &join(Role::Right));
        s.handle(1, &WireMessage::Input { seq: 1, t_client: 0.0, z: InputHeight::One(0.03) });
        for _ in 0..200 {
            for o in s.tick().unwrap() {
                let json = o.message.to_json();
                assert!(!json.contains("z_left") && !json.contains("z_right"), "{json}");
            }
        }
    }

    #[test]
    fn wire_round_trip() {
        let msgs = [
            join(Role::Both),
            WireMessage::Input { seq: 7, t_client: 1.5, z: InputHeight::Two([0.01, -0.01]) },
            WireMessage::Input { seq: 8, t_client: 1.6, z: InputHeight::One(0.02) },
            session(Mode::Dyadic).state_message(),
            WireMessage::TrialResult { completion_time: 2.5, n_failures: 1 },
        ];
        for m in msgs {
            assert_eq!(WireMessage::from_json(&m.to_json()).unwrap(), m);
        }
        let parsed = WireMessage::from_json(r#"{"type":"input","seq":1,"t_client":0.0,"z":[0.1,0.2]}"#).unwrap();
        assert!(matches!(parsed, WireMessage::Input { z: InputHeight::Two(_), .. }));
    }

    #[test]
    fn abandoned_session_is_incomplete() {
        let mut s = session(Mode::Bimanual);
        s.assign_role(1, &join(Role::Both));
        for _ in 0..1500 {
            s.tick().unwrap();
        }
        let log = s.block_log();
        assert!(log.footer.incomplete);
        assert!(s.is_finished());
    }

    #[test]
    fn persist_failure_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        std::fs::write(&blocker, "x").unwrap();
        let mut s = session(Mode::Bimanual);
        let summary = s.persist(&blocker.join("sub"));
        assert!(summary.error.is_some());
        let summary = session(Mode::Bimanual).persist(dir.path());
        assert!(summary.error.is_none());
        assert_eq!(summary.files.len(), 3);
    }
}
