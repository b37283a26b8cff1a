//! WebSocket front end for interactive sessions.
//!
//! Each connection runs on its own thread and forwards parsed messages to
//! the mailbox of its session. A session thread owns the simulation: it
//! drains the mailbox at tick boundaries, advances the clock in real time
//! (at most 8 ticks per wake when it falls behind) and pushes serialized
//! messages back into per-connection outboxes.

use std::collections::{BTreeMap, HashMap};
use std::io::ErrorKind;
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender, TryRecvError};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use anyhow::Context;
use clap::{Args, ValueEnum};
use log::{info, warn};
use tungstenite::{Message, WebSocket};

use boardball_core::protocol::{build_schedule_with, Block, Mode, Performer, ProtocolSettings, TRIALS_PER_BLOCK};
use boardball_core::session::{ClientId, Outgoing, Recipient, Session, WireMessage};
use boardball_core::SimParams;

use crate::{load_params, usage};

/// Most ticks run back to back before the mailbox is checked again.
pub const MAX_CATCH_UP: u64 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Bimanual,
    Dyadic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OnOff {
    On,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ParticipantArg {
    A,
    B,
}

#[derive(Debug, Clone, Args)]
pub struct ServeArgs {
    #[arg(long, env = "BOARDBALL_PORT", default_value_t = 8765)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long, env = "BOARDBALL_LOG_DIR", default_value = "logs")]
    pub log_dir: PathBuf,
    #[arg(long, value_enum, default_value = "dyadic")]
    pub mode: ModeArg,
    /// Only play blocks with this feedback flag; default follows the
    /// schedule's alternation.
    #[arg(long, value_enum)]
    pub haptic: Option<OnOff>,
    #[arg(long)]
    pub counterbalance: bool,
    /// Whose bimanual blocks a bimanual session plays.
    #[arg(long, value_enum, default_value = "a")]
    pub participant: ParticipantArg,
    #[arg(long, default_value_t = TRIALS_PER_BLOCK)]
    pub trials_per_block: u32,
    /// Simulator parameters (TOML).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Seconds without any client before an unfinished session is saved
    /// as incomplete and closed.
    #[arg(long, default_value_t = 30.0)]
    pub idle_timeout: f64,
}

/// Everything a session thread needs.
#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub blocks: Vec<Block>,
    pub params: SimParams,
    pub settings: ProtocolSettings,
    pub log_dir: PathBuf,
    pub idle_timeout: Duration,
}

impl ServerConfig {
    pub fn from_args(args: &ServeArgs) -> anyhow::Result<Self> {
        if args.trials_per_block == 0 {
            return Err(usage("--trials-per-block must be at least 1"));
        }
        if !(args.idle_timeout.is_finite() && args.idle_timeout >= 0.0) {
            return Err(usage("--idle-timeout must be non-negative"));
        }
        let performer = match (args.mode, args.participant) {
            (ModeArg::Dyadic, _) => Performer::Dyad,
            (ModeArg::Bimanual, ParticipantArg::A) => Performer::ParticipantA,
            (ModeArg::Bimanual, ParticipantArg::B) => Performer::ParticipantB,
        };
        let blocks: Vec<Block> = build_schedule_with(args.counterbalance, args.trials_per_block)
            .blocks
            .into_iter()
            .filter(|b| b.performer == performer)
            .filter(|b| args.haptic.is_none_or(|h| b.condition.haptic == (h == OnOff::On)))
            .collect();
        Ok(Self {
            blocks,
            params: load_params(args.config.as_deref())?,
            settings: ProtocolSettings::default(),
            log_dir: args.log_dir.clone(),
            idle_timeout: Duration::from_secs_f64(args.idle_timeout),
        })
    }
}

enum Event {
    Join { client: ClientId, message: WireMessage, outbox: Sender<String> },
    Message { client: ClientId, message: WireMessage },
    Disconnect { client: ClientId },
}

type Registry = Arc<Mutex<HashMap<String, Sender<Event>>>>;

/// Real-time pacing statistics of one block.
#[derive(Debug, Default, Clone, Copy)]
struct Pacing {
    late_wakes: u64,
    max_backlog: u64,
}

struct Host {
    id: String,
    config: ServerConfig,
    cursor: usize,
    session: Session,
    outboxes: BTreeMap<ClientId, Sender<String>>,
    /// Join messages per connection, replayed when the next block starts.
    joins: BTreeMap<ClientId, WireMessage>,
    started: Instant,
    ticks: u64,
    pacing: Pacing,
    last_client: Instant,
}

impl Host {
    fn new(id: String, config: ServerConfig) -> Self {
        let session = Session::new(&id, config.blocks[0], config.params, config.settings);
        Self {
            id,
            config,
            cursor: 0,
            session,
            outboxes: BTreeMap::new(),
            joins: BTreeMap::new(),
            started: Instant::now(),
            ticks: 0,
            pacing: Pacing::default(),
            last_client: Instant::now(),
        }
    }

    fn send(&mut self, to: Recipient, message: &WireMessage) {
        let text = message.to_json();
        match to {
            Recipient::All => self.outboxes.retain(|_, tx| tx.send(text.clone()).is_ok()),
            Recipient::Client(id) => {
                if let Some(tx) = self.outboxes.get(&id) {
                    let _ = tx.send(text);
                }
            }
        }
    }

    fn dispatch(&mut self, out: Vec<Outgoing>) {
        for o in out {
            self.send(o.to, &o.message);
        }
    }

    fn on_event(&mut self, event: Event) {
        match event {
            Event::Join { client, message, outbox } => {
                self.outboxes.insert(client, outbox);
                let reply = self.session.assign_role(client, &message);
                if matches!(reply, WireMessage::Welcome { .. }) {
                    self.joins.insert(client, message);
                    info!("session {}: client {client} joined", self.id);
                }
                self.send(Recipient::Client(client), &reply);
            }
            Event::Message { client, message } => {
                if matches!(message, WireMessage::Join { .. }) {
                    self.on_event(Event::Join {
                        client,
                        message,
                        outbox: match self.outboxes.get(&client) {
                            Some(tx) => tx.clone(),
                            None => return,
                        },
                    });
                    return;
                }
                if let Some(reply) = self.session.handle(client, &message) {
                    self.dispatch(vec![reply]);
                }
            }
            Event::Disconnect { client } => {
                self.session.disconnect(client);
                self.joins.remove(&client);
                self.outboxes.remove(&client);
                info!("session {}: client {client} left", self.id);
            }
        }
    }

    /// Saves the current block and moves to the next one. Returns false
    /// when the schedule is exhausted.
    fn finish_block(&mut self) -> bool {
        std::fs::create_dir_all(&self.config.log_dir).ok();
        let summary = self.session.persist(&self.config.log_dir);
        match &summary.error {
            Some(e) => warn!("session {}: could not write block log: {e}", self.id),
            None => info!(
                "session {}: block {} saved ({} trials, {} late wakes, max backlog {} ticks)",
                self.id, summary.block_index, summary.n_trials, self.pacing.late_wakes, self.pacing.max_backlog
            ),
        }
        self.send(Recipient::All, &WireMessage::BlockDone { summary });
        self.cursor += 1;
        if self.cursor >= self.config.blocks.len() {
            return false;
        }
        let block = self.config.blocks[self.cursor];
        self.session = Session::new(&self.id, block, self.config.params, self.config.settings);
        for (client, join) in self.joins.clone() {
            let reply = self.session.assign_role(client, &join);
            self.send(Recipient::Client(client), &reply);
        }
        self.started = Instant::now();
        self.ticks = 0;
        self.pacing = Pacing::default();
        true
    }

    fn run(mut self, mailbox: Receiver<Event>) {
        loop {
            let wait = if self.behind() > 0 { Duration::ZERO } else { Duration::from_micros(500) };
            match mailbox.recv_timeout(wait) {
                Ok(e) => self.on_event(e),
                Err(RecvTimeoutError::Timeout) => {}
                Err(RecvTimeoutError::Disconnected) => return,
            }
            loop {
                match mailbox.try_recv() {
                    Ok(e) => self.on_event(e),
                    Err(TryRecvError::Empty) => break,
                    Err(TryRecvError::Disconnected) => return,
                }
            }
            if !self.outboxes.is_empty() {
                self.last_client = Instant::now();
            } else if self.last_client.elapsed() >= self.config.idle_timeout {
                if !self.session.records().is_empty() || self.session.runner().phase() != boardball_core::protocol::TrialPhase::PreTrial {
                    let summary = self.session.persist(&self.config.log_dir);
                    info!("session {}: idle, saved incomplete block {}", self.id, summary.block_index);
                }
                info!("session {}: closed", self.id);
                return;
            }

            let backlog = self.behind();
            if backlog > MAX_CATCH_UP {
                self.pacing.late_wakes += 1;
                self.pacing.max_backlog = self.pacing.max_backlog.max(backlog);
            }
            for _ in 0..backlog.min(MAX_CATCH_UP) {
                let out = match self.session.tick() {
                    Ok(out) => out,
                    Err(e) => {
                        warn!("session {}: simulation error: {e}", self.id);
                        self.finish_block();
                        return;
                    }
                };
                self.ticks += 1;
                self.dispatch(out);
                if self.session.is_finished() {
                    if !self.finish_block() {
                        info!("session {}: schedule complete", self.id);
                        return;
                    }
                    break;
                }
            }
        }
    }

    /// Ticks owed to the wall clock.
    fn behind(&self) -> u64 {
        let due = (self.started.elapsed().as_secs_f64() / self.config.params.dt) as u64;
        due.saturating_sub(self.ticks)
    }
}

fn session_mailbox(registry: &Registry, id: &str, config: &ServerConfig) -> Sender<Event> {
    let mut map = registry.lock().expect("registry lock");
    if let Some(tx) = map.get(id) {
        return tx.clone();
    }
    let (tx, rx) = mpsc::channel();
    map.insert(id.to_string(), tx.clone());
    let host = Host::new(id.to_string(), config.clone());
    let registry = Arc::clone(registry);
    let key = id.to_string();
    thread::spawn(move || {
        host.run(rx);
        registry.lock().expect("registry lock").remove(&key);
    });
    tx
}

fn send_text(ws: &mut WebSocket<TcpStream>, text: String) -> tungstenite::Result<()> {
    ws.send(Message::text(text))
}

fn handle_connection(stream: TcpStream, client: ClientId, registry: Registry, config: ServerConfig) -> anyhow::Result<()> {
    stream.set_nodelay(true).ok();
    let mut ws = tungstenite::accept(stream).context("websocket handshake")?;
    ws.get_ref().set_read_timeout(Some(Duration::from_millis(2)))?;
    let (out_tx, out_rx) = mpsc::channel::<String>();
    let mut mailbox: Option<Sender<Event>> = None;
    let result = (|| -> anyhow::Result<()> {
        loop {
            match ws.read() {
                Ok(Message::Text(text)) => match WireMessage::from_json(text.as_str()) {
                    Ok(message) => {
                        if let (None, WireMessage::Join { session, .. }) = (&mailbox, &message) {
                            if config.blocks.is_empty() {
                                send_text(&mut ws, WireMessage::Reject { reason: "no blocks to play".into() }.to_json())?;
                                continue;
                            }
                            let tx = session_mailbox(&registry, session, &config);
                            let event = Event::Join { client, message, outbox: out_tx.clone() };
                            if tx.send(event).is_err() {
                                send_text(&mut ws, WireMessage::Reject { reason: "session closing, retry".into() }.to_json())?;
                                continue;
                            }
                            mailbox = Some(tx);
                        } else if let Some(tx) = &mailbox {
                            if tx.send(Event::Message { client, message }).is_err() {
                                return Ok(());
                            }
                        } else {
                            send_text(&mut ws, WireMessage::Reject { reason: "join first".into() }.to_json())?;
                        }
                    }
                    Err(e) => send_text(&mut ws, WireMessage::Reject { reason: format!("bad message: {e}") }.to_json())?,
                },
                Ok(Message::Close(_)) => return Ok(()),
                Ok(_) => {}
                Err(tungstenite::Error::Io(e)) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {}
                Err(tungstenite::Error::ConnectionClosed | tungstenite::Error::AlreadyClosed) => return Ok(()),
                Err(e) => return Err(e.into()),
            }
            while let Ok(text) = out_rx.try_recv() {
                send_text(&mut ws, text)?;
            }
            ws.flush().or_else(|e| match e {
                tungstenite::Error::Io(ref io) if io.kind() == ErrorKind::WouldBlock => Ok(()),
                e => Err(e),
            })?;
        }
    })();
    if let Some(tx) = mailbox {
        let _ = tx.send(Event::Disconnect { client });
    }
    let _ = ws.close(None);
    result
}

/// Accepts connections forever.
pub fn serve(listener: TcpListener, config: ServerConfig) -> anyhow::Result<()> {
    let registry: Registry = Arc::new(Mutex::new(HashMap::new()));
    let next_id = AtomicU64::new(1);
    for stream in listener.incoming() {
        let stream = match stream {
            Ok(s) => s,
            Err(e) => {
                warn!("accept failed: {e}");
                continue;
            }
        };
        let client = next_id.fetch_add(1, Ordering::Relaxed);
        let registry = Arc::clone(&registry);
        let config = config.clone();
        thread::spawn(move || {
            if let Err(e) = handle_connection(stream, client, registry, config) {
                warn!("client {client}: {e:#}");
            }
        });
    }
    Ok(())
}

pub fn run(args: &ServeArgs) -> anyhow::Result<()> {
    let config = ServerConfig::from_args(args)?;
    let addr: SocketAddr = format!("{}:{}", args.host, args.port)
        .parse()
        .map_err(|e| usage(format!("bad address {}:{}: {e}", args.host, args.port)))?;
    let listener = TcpListener::bind(addr).with_context(|| format!("binding {addr}"))?;
    let mode = match config.blocks.first().map(|b| b.condition.mode) {
        Some(Mode::Bimanual) => "bimanual",
        _ => "dyadic",
    };
    println!(
        "listening on ws://{} ({mode}, {} blocks per session, logs in {})",
        listener.local_addr()?,
        config.blocks.len(),
        config.log_dir.display()
    );
    serve(listener, config)
}
