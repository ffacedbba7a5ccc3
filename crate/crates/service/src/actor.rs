//! One task per session. The task owns the [`Session`] and serializes
//! controls, pacing and reads through its mailbox.

use std::path::PathBuf;
use std::time::Duration;

use learnsim_core::session::{
    Ack, ControlMessage, LogEntry, Score, ServerMessage, Session, SessionError, Status,
    TickMessage,
};
use learnsim_core::Phase;
use serde::Serialize;
use tokio::io::AsyncWriteExt;
use tokio::sync::{broadcast, mpsc, oneshot};
use tokio::time::{interval, Instant, MissedTickBehavior};
use uuid::Uuid;

const MAILBOX: usize = 64;
const FANOUT: usize = 1024;

/// Snapshot returned by `GET /sessions/{id}/state`.
#[derive(Debug, Clone, Serialize)]
pub struct SessionState {
    pub id: Uuid,
    pub status: Status,
    pub phase: Phase,
    pub step: u64,
    pub total_steps: u64,
    pub clamp_count: usize,
    /// Simulated minutes per wall-clock second.
    pub tick_rate: f64,
    pub tick: TickMessage,
}

/// Tick history up to now plus everything broadcast afterwards, with no
/// gap between the two.
pub struct Subscription {
    pub history: Vec<TickMessage>,
    pub live: broadcast::Receiver<ServerMessage>,
}

enum Command {
    Control(ControlMessage, oneshot::Sender<Result<Ack, SessionError>>),
    Finish(oneshot::Sender<Result<Score, SessionError>>),
    State(oneshot::Sender<SessionState>),
    Log(oneshot::Sender<Vec<LogEntry>>),
    Subscribe(oneshot::Sender<Subscription>),
}

/// The session task stopped; only happens if it panicked.
#[derive(Debug, Clone, Copy)]
pub struct Gone;

#[derive(Clone)]
pub struct SessionHandle {
    tx: mpsc::Sender<Command>,
}

impl SessionHandle {
    async fn ask<T>(&self, make: impl FnOnce(oneshot::Sender<T>) -> Command) -> Result<T, Gone> {
        let (reply, rx) = oneshot::channel();
        self.tx.send(make(reply)).await.map_err(|_| Gone)?;
        rx.await.map_err(|_| Gone)
    }

    pub async fn control(&self, control: ControlMessage) -> Result<Result<Ack, SessionError>, Gone> {
        self.ask(|r| Command::Control(control, r)).await
    }

    pub async fn finish(&self) -> Result<Result<Score, SessionError>, Gone> {
        self.ask(Command::Finish).await
    }

    pub async fn state(&self) -> Result<SessionState, Gone> {
        self.ask(Command::State).await
    }

    pub async fn log(&self) -> Result<Vec<LogEntry>, Gone> {
        self.ask(Command::Log).await
    }

    pub async fn subscribe(&self) -> Result<Subscription, Gone> {
        self.ask(Command::Subscribe).await
    }
}

/// Appends new event-log entries to `{dir}/{id}.jsonl`.
struct LogFile {
    path: Option<PathBuf>,
    file: Option<tokio::fs::File>,
    written: usize,
}

impl LogFile {
    async fn sync(&mut self, log: &[LogEntry]) {
        let Some(path) = &self.path else { return };
        if self.written >= log.len() {
            return;
        }
        if self.file.is_none() {
            match tokio::fs::OpenOptions::new().create(true).append(true).open(path).await {
                Ok(f) => self.file = Some(f),
                Err(e) => {
                    tracing::warn!(path = %path.display(), "cannot open event log: {e}");
                    return;
                }
            }
        }
        let mut text = String::new();
        for entry in &log[self.written..] {
            text.push_str(&serde_json::to_string(entry).expect("log entries serialize"));
            text.push('\n');
        }
        let file = self.file.as_mut().expect("opened above");
        match file.write_all(text.as_bytes()).await {
            Ok(()) => self.written = log.len(),
            Err(e) => tracing::warn!(path = %path.display(), "cannot append to event log: {e}"),
        }
    }
}

struct Actor {
    id: Uuid,
    session: Session,
    tick_rate: f64,
    fanout: broadcast::Sender<ServerMessage>,
    log_file: LogFile,
}

/// Starts the task for `session` and returns its handle.
pub fn spawn(id: Uuid, session: Session, tick_rate: f64, log_path: Option<PathBuf>) -> SessionHandle {
    let (tx, rx) = mpsc::channel(MAILBOX);
    let (fanout, _) = broadcast::channel(FANOUT);
    let actor = Actor {
        id,
        session,
        tick_rate,
        fanout,
        log_file: LogFile {
            path: log_path,
            file: None,
            written: 0,
        },
    };
    tokio::spawn(actor.run(rx));
    SessionHandle { tx }
}

impl Actor {
    async fn run(mut self, mut rx: mpsc::Receiver<Command>) {
        self.log_file.sync(self.session.log()).await;
        let period = Duration::from_secs_f64(self.session.config().tick_minutes() / self.tick_rate);
        let mut pacer = interval(period);
        pacer.set_missed_tick_behavior(MissedTickBehavior::Delay);
        loop {
            let running = self.session.status() == Status::Running;
            tokio::select! {
                command = rx.recv() => {
                    let Some(command) = command else { break };
                    let was_running = running;
                    self.handle(command).await;
                    if !was_running && self.session.status() == Status::Running {
                        // First tick one full period after resuming.
                        pacer.reset_at(Instant::now() + period);
                    }
                }
                _ = pacer.tick(), if running => {
                    for tick in self.session.advance_ticks(1) {
                        let _ = self.fanout.send(ServerMessage::Tick(tick));
                    }
                }
            }
            self.log_file.sync(self.session.log()).await;
        }
        tracing::debug!(id = %self.id, "session task stopped");
    }

    async fn handle(&mut self, command: Command) {
        match command {
            Command::Control(control, reply) => {
                let result = self.session.apply_control(control);
                if let Ok(Ack { probe: Some(probe), .. }) = &result {
                    let _ = self.fanout.send(ServerMessage::Probe(probe.clone()));
                }
                let _ = reply.send(result);
            }
            Command::Finish(reply) => {
                let _ = reply.send(self.finish().await);
            }
            Command::State(reply) => {
                let _ = reply.send(SessionState {
                    id: self.id,
                    status: self.session.status(),
                    phase: self.session.phase(),
                    step: self.session.step_index(),
                    total_steps: self.session.config().total_steps(),
                    clamp_count: self.session.clamp_count(),
                    tick_rate: self.tick_rate,
                    tick: self.session.latest_tick().clone(),
                });
            }
            Command::Log(reply) => {
                let _ = reply.send(self.session.log().to_vec());
            }
            Command::Subscribe(reply) => {
                let _ = reply.send(Subscription {
                    history: self.session.ticks().to_vec(),
                    live: self.fanout.subscribe(),
                });
            }
        }
    }

    async fn finish(&mut self) -> Result<Score, SessionError> {
        if self.session.status() != Status::Finished {
            self.session.apply_control(ControlMessage::Finish)?;
        }
        // The reference optimization is CPU-bound; it runs off the async
        // workers and the result (with its cache) is swapped back in.
        let mut scoring = self.session.clone();
        let (scored, result) = tokio::task::spawn_blocking(move || {
            let result = scoring.score();
            (scoring, result)
        })
        .await
        .expect("scoring task panicked");
        self.session = scored;
        if let Ok(score) = &result {
            let _ = self.fanout.send(ServerMessage::Score(score.clone()));
        }
        result
    }
}
