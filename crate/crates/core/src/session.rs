//! Steerable class sessions.
//!
//! A session advances a class of learners on one clock while a teacher
//! changes the requirement level and complexity, calls breaks and probes
//! knowledge with tests. Time moves in whole ticks of `steps_per_tick`
//! engine steps, and controls always take effect from the next tick.
//!
//! Every command that changes a session is appended to its event log.
//! Replaying the log reproduces every tick bit for bit, and because each
//! learner is stepped through [`integrator::step`](crate::integrator::step)
//! a control log that mirrors a static timeline ends in exactly the state
//! [`simulate_timeline`](crate::integrator::simulate_timeline) reaches.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::integrator::{enter_phase, step, steps_in, Phase, Regime};
use crate::model::{effort, LearnerState, ModelParams};
use crate::optimizer::{optimize_schedule, OptimizerSettings};
use crate::scenario::{
    from_json_text, validate_learner, validate_timeline, ConfigError, LearnerDocument, Segment,
    SimulationConfig, TimelineDocument, DEFAULT_RECORD_EVERY,
};

pub const MAX_CLASS_SIZE: usize = 64;
/// Seed of the reference optimization used for grading.
pub const REFERENCE_SEED: u64 = 1;
/// Evaluation budget of the reference optimization used for grading.
pub const REFERENCE_BUDGET: usize = 300;

#[derive(Debug, Clone, PartialEq)]
pub struct SessionConfig {
    pub learners: Vec<(ModelParams, LearnerState)>,
    /// Template timeline: sets the session's length, its opening controls
    /// and the reference schedule for grading.
    pub template: Vec<Segment>,
    pub dt: f64,
    pub steps_per_tick: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SessionDocument {
    learners: Vec<LearnerDocument>,
    timeline: TimelineDocument,
    dt_min: f64,
    /// Simulated minutes per tick.
    tick_min: f64,
}

impl SessionConfig {
    /// Session with one copy of `config`'s learner per class member,
    /// `config`'s timeline as template, and ticks of `tick_min` minutes.
    pub fn from_simulation(config: &SimulationConfig, class_size: usize, tick_min: f64) -> Self {
        Self {
            learners: vec![(config.params.clone(), config.initial.clone()); class_size],
            template: config.timeline.clone(),
            dt: config.dt,
            steps_per_tick: steps_in(tick_min, config.dt).unwrap_or(0),
        }
    }

    pub fn tick_minutes(&self) -> f64 {
        self.steps_per_tick as f64 * self.dt
    }

    pub fn total_steps(&self) -> u64 {
        self.template
            .iter()
            .map(|s| steps_in(s.duration, self.dt).unwrap_or(0) as u64)
            .sum()
    }

    /// Every violated invariant, each prefixed with where it occurred.
    pub fn validate(&self) -> Vec<String> {
        let mut errors = Vec::new();
        if self.learners.is_empty() || self.learners.len() > MAX_CLASS_SIZE {
            errors.push(format!(
                "class size must be between 1 and {MAX_CLASS_SIZE} (got {})",
                self.learners.len()
            ));
        }
        if self.template.is_empty() {
            errors.push("timeline must contain at least one segment".into());
        }
        if self.steps_per_tick == 0 {
            errors.push("tick_min must be a positive whole number of dt steps".into());
        }
        for (i, (params, initial)) in self.learners.iter().enumerate() {
            let found = validate_learner(params, initial)
                .into_iter()
                .chain(validate_timeline(params, &self.template, self.dt));
            errors.extend(found.map(|e| format!("learners[{i}]: {e}")));
        }
        errors
    }

    /// The static simulation of learner `index` under the template.
    pub fn learner_config(&self, index: usize) -> SimulationConfig {
        let (params, initial) = &self.learners[index];
        SimulationConfig {
            params: params.clone(),
            initial: initial.clone(),
            timeline: self.template.clone(),
            dt: self.dt,
            record_every: DEFAULT_RECORD_EVERY,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(SessionDocument::from(self)).expect("session documents always serialize")
    }

    pub fn from_json_text(text: &str) -> Result<Self, ConfigError> {
        let doc: SessionDocument = from_json_text(text)?;
        Ok(doc.into())
    }
}

impl From<&SessionConfig> for SessionDocument {
    fn from(c: &SessionConfig) -> Self {
        Self {
            learners: c
                .learners
                .iter()
                .map(|(p, s)| LearnerDocument::from_model(p, s))
                .collect(),
            timeline: TimelineDocument::from_segments(&c.template),
            dt_min: c.dt,
            tick_min: c.tick_minutes(),
        }
    }
}

impl From<SessionDocument> for SessionConfig {
    fn from(doc: SessionDocument) -> Self {
        Self {
            learners: doc.learners.into_iter().map(LearnerDocument::into_model).collect(),
            template: doc.timeline.into_segments(),
            dt: doc.dt_min,
            steps_per_tick: steps_in(doc.tick_min, doc.dt_min).unwrap_or(0),
        }
    }
}

/// A teacher's action.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ControlMessage {
    SetRequirement {
        #[serde(rename = "U")]
        u: f64,
    },
    SetComplexity {
        #[serde(rename = "S")]
        s: f64,
    },
    StartBreak,
    EndBreak,
    GiveTest,
    Pause,
    Resume,
    Finish,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Running,
    Paused,
    Finished,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerTick {
    #[serde(rename = "Z")]
    pub z: Vec<f64>,
    #[serde(rename = "Z_total")]
    pub z_total: f64,
    pub r: f64,
    #[serde(rename = "F")]
    pub f: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickMessage {
    pub tick: u64,
    pub t_min: f64,
    pub phase: Phase,
    #[serde(rename = "U")]
    pub u: f64,
    #[serde(rename = "S")]
    pub s: f64,
    pub learners: Vec<LearnerTick>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerProbe {
    #[serde(rename = "Z_total")]
    pub z_total: f64,
    #[serde(rename = "Z_n")]
    pub z_strong: f64,
}

/// Result of a test: read-only snapshot of each learner's knowledge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeMessage {
    pub t_min: f64,
    pub learners: Vec<LearnerProbe>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ack {
    pub control: ControlMessage,
    /// First tick whose values reflect the control.
    pub effective_from_tick: u64,
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probe: Option<ProbeMessage>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerScore {
    #[serde(rename = "Z_n")]
    pub z_strong: f64,
    pub reference: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub learners: Vec<LearnerScore>,
    pub class_mean: f64,
    pub reference_objective: f64,
    /// Class mean over reference, capped to `[0, 1]`.
    pub grade: f64,
}

/// Everything the service sends to clients, one JSON object per line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Tick(TickMessage),
    Probe(ProbeMessage),
    Ack(Ack),
    Score(Score),
    Error { message: String },
}

/// One line of a session's event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LogEntry {
    Created { config: serde_json::Value },
    Advance { ticks: u64 },
    Control { at_step: u64, control: ControlMessage },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SessionError {
    #[error("invalid session: {}", .0.join("; "))]
    Invalid(Vec<String>),
    #[error("invalid control: {0}")]
    InvalidControl(String),
    #[error("session is finished")]
    Finished,
    #[error("session is not finished")]
    NotFinished,
    #[error("corrupt event log: {0}")]
    CorruptLog(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Controls {
    phase: Phase,
    /// Requirement for lessons; kept through breaks.
    lesson_u: f64,
    lesson_s: f64,
}

impl Controls {
    fn regime(&self) -> Regime {
        match self.phase {
            Phase::Lesson => Regime {
                phase: Phase::Lesson,
                u: self.lesson_u,
                s: self.lesson_s,
            },
            Phase::Break => Regime {
                phase: Phase::Break,
                u: 0.0,
                s: 0.0,
            },
        }
    }
}

#[derive(Debug, Clone)]
pub struct Session {
    config: SessionConfig,
    learners: Vec<LearnerState>,
    controls: Controls,
    status: Status,
    step_index: u64,
    tick_index: u64,
    total_steps: u64,
    clamp_count: usize,
    ticks: Vec<TickMessage>,
    log: Vec<LogEntry>,
    reference: Option<Vec<f64>>,
}

impl Session {
    /// Creates a paused session at the template's start, with tick 0
    /// already recorded.
    pub fn new(config: SessionConfig) -> Result<Self, SessionError> {
        let errors = config.validate();
        if !errors.is_empty() {
            return Err(SessionError::Invalid(errors));
        }
        let first = config.template[0];
        let controls = Controls {
            phase: first.kind,
            lesson_u: config
                .template
                .iter()
                .find(|s| s.kind == Phase::Lesson)
                .map_or(0.0, |s| s.u),
            lesson_s: if first.kind == Phase::Lesson { first.s } else { 0.0 },
        };
        let learners = config
            .learners
            .iter()
            .map(|(params, initial)| {
                let mut state = initial.clone();
                enter_phase(&mut state, params, None, controls.phase);
                state
            })
            .collect();
        let total_steps = config.total_steps();
        let log = vec![LogEntry::Created {
            config: config.to_json(),
        }];
        let mut session = Self {
            config,
            learners,
            controls,
            status: Status::Paused,
            step_index: 0,
            tick_index: 0,
            total_steps,
            clamp_count: 0,
            ticks: Vec::new(),
            log,
            reference: None,
        };
        let tick = session.snapshot();
        session.ticks.push(tick);
        Ok(session)
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn status(&self) -> Status {
        self.status
    }

    pub fn phase(&self) -> Phase {
        self.controls.phase
    }

    pub fn learners(&self) -> &[LearnerState] {
        &self.learners
    }

    pub fn step_index(&self) -> u64 {
        self.step_index
    }

    pub fn clamp_count(&self) -> usize {
        self.clamp_count
    }

    /// Every tick emitted so far, starting with tick 0.
    pub fn ticks(&self) -> &[TickMessage] {
        &self.ticks
    }

    pub fn latest_tick(&self) -> &TickMessage {
        self.ticks.last().expect("tick 0 is recorded at creation")
    }

    pub fn log(&self) -> &[LogEntry] {
        &self.log
    }

    fn snapshot(&self) -> TickMessage {
        let regime = self.controls.regime();
        TickMessage {
            tick: self.tick_index,
            t_min: self.learners[0].t_day,
            phase: regime.phase,
            u: regime.u,
            s: regime.s,
            learners: self
                .learners
                .iter()
                .zip(&self.config.learners)
                .map(|(state, (params, _))| {
                    let z_total = state.total();
                    LearnerTick {
                        z: state.z.clone(),
                        z_total,
                        r: state.r,
                        f: effort(regime.u, z_total, params.cutoff),
                    }
                })
                .collect(),
        }
    }

    fn probe(&self) -> ProbeMessage {
        ProbeMessage {
            t_min: self.learners[0].t_day,
            learners: self
                .learners
                .iter()
                .map(|s| LearnerProbe {
                    z_total: s.total(),
                    z_strong: s.strongest(),
                })
                .collect(),
        }
    }

    /// Applies a control at the current tick boundary.
    pub fn apply_control(&mut self, control: ControlMessage) -> Result<Ack, SessionError> {
        if self.status == Status::Finished && control != ControlMessage::Finish {
            return Err(SessionError::Finished);
        }
        let mut probe = None;
        match control {
            ControlMessage::SetRequirement { u } => {
                if !(u.is_finite() && u >= 0.0) {
                    return Err(SessionError::InvalidControl(format!("U = {u} must be >= 0")));
                }
                self.controls.lesson_u = u;
            }
            ControlMessage::SetComplexity { s } => {
                if !(0.0..1.0).contains(&s) {
                    return Err(SessionError::InvalidControl(format!("S = {s} must lie in [0, 1)")));
                }
                self.controls.lesson_s = s;
            }
            ControlMessage::StartBreak => self.switch_phase(Phase::Break),
            ControlMessage::EndBreak => self.switch_phase(Phase::Lesson),
            ControlMessage::GiveTest => probe = Some(self.probe()),
            ControlMessage::Pause => self.status = Status::Paused,
            ControlMessage::Resume => {
                if self.step_index < self.total_steps {
                    self.status = Status::Running;
                }
            }
            ControlMessage::Finish => self.status = Status::Finished,
        }
        self.log.push(LogEntry::Control {
            at_step: self.step_index,
            control,
        });
        Ok(Ack {
            control,
            effective_from_tick: self.tick_index + 1,
            status: self.status,
            probe,
        })
    }

    fn switch_phase(&mut self, next: Phase) {
        let previous = self.controls.phase;
        if previous == next {
            return;
        }
        for (state, (params, _)) in self.learners.iter_mut().zip(&self.config.learners) {
            enter_phase(state, params, Some(previous), next);
        }
        self.controls.phase = next;
    }

    /// Advances up to `ticks` ticks while running; returns the new ticks.
    /// The session finishes by itself once the template's duration is used
    /// up.
    pub fn advance_ticks(&mut self, ticks: u64) -> Vec<TickMessage> {
        let mut emitted = Vec::new();
        for _ in 0..ticks {
            if self.status != Status::Running {
                break;
            }
            let regime = self.controls.regime();
            let remaining = self.total_steps - self.step_index;
            let steps = (self.config.steps_per_tick as u64).min(remaining);
            for _ in 0..steps {
                for (state, (params, _)) in self.learners.iter_mut().zip(&self.config.learners) {
                    self.clamp_count += step(state, params, regime, self.config.dt);
                }
            }
            self.step_index += steps;
            self.tick_index += 1;
            if self.step_index >= self.total_steps {
                self.status = Status::Finished;
            }
            let tick = self.snapshot();
            self.ticks.push(tick.clone());
            emitted.push(tick);
        }
        if !emitted.is_empty() {
            self.log.push(LogEntry::Advance {
                ticks: emitted.len() as u64,
            });
        }
        emitted
    }

    /// Per-learner reference objectives: the best end-of-template strong
    /// knowledge found by the seeded optimizer. Computed once.
    pub fn reference_objectives(&mut self) -> Result<&[f64], SessionError> {
        if self.reference.is_none() {
            let mut refs = Vec::with_capacity(self.learners.len());
            for i in 0..self.learners.len() {
                let template = self.config.learner_config(i);
                let settings =
                    OptimizerSettings::for_template(&template, REFERENCE_BUDGET, REFERENCE_SEED);
                let result = optimize_schedule(&template, &settings)
                    .map_err(|e| SessionError::Invalid(vec![e.to_string()]))?;
                refs.push(result.objective);
            }
            self.reference = Some(refs);
        }
        Ok(self.reference.as_deref().unwrap_or_default())
    }

    /// Grades the teacher. Only available once the session has finished.
    pub fn score(&mut self) -> Result<Score, SessionError> {
        if self.status != Status::Finished {
            return Err(SessionError::NotFinished);
        }
        let refs = self.reference_objectives()?.to_vec();
        Ok(score_from(&self.learners, &refs))
    }

    /// Rebuilds a session from its event log, re-emitting every tick.
    pub fn replay(log: &[LogEntry]) -> Result<Self, SessionError> {
        let (first, rest) = log
            .split_first()
            .ok_or_else(|| SessionError::CorruptLog("empty log".into()))?;
        let LogEntry::Created { config } = first else {
            return Err(SessionError::CorruptLog("log must start with `created`".into()));
        };
        let config = SessionConfig::from_json_text(&config.to_string())
            .map_err(|e| SessionError::CorruptLog(e.to_string()))?;
        let mut session = Session::new(config)?;
        for entry in rest {
            match entry {
                LogEntry::Created { .. } => {
                    return Err(SessionError::CorruptLog("duplicate `created`".into()))
                }
                LogEntry::Advance { ticks } => {
                    let emitted = session.advance_ticks(*ticks);
                    if emitted.len() as u64 != *ticks {
                        return Err(SessionError::CorruptLog(format!(
                            "advance of {ticks} ticks produced {}",
                            emitted.len()
                        )));
                    }
                }
                LogEntry::Control { at_step, control } => {
                    if *at_step != session.step_index {
                        return Err(SessionError::CorruptLog(format!(
                            "control logged at step {at_step} replayed at step {}",
                            session.step_index
                        )));
                    }
                    session.apply_control(*control)?;
                }
            }
        }
        Ok(session)
    }

    /// Parses a JSON-lines event log.
    pub fn parse_log(text: &str) -> Result<Vec<LogEntry>, SessionError> {
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .enumerate()
            .map(|(i, line)| {
                serde_json::from_str(line)
                    .map_err(|e| SessionError::CorruptLog(format!("line {}: {e}", i + 1)))
            })
            .collect()
    }
}

/// Score of a class whose learners ended in `finals` against per-learner
/// reference objectives `refs`.
pub fn score_from(finals: &[LearnerState], refs: &[f64]) -> Score {
    let learners: Vec<LearnerScore> = finals
        .iter()
        .zip(refs)
        .map(|(s, &reference)| LearnerScore {
            z_strong: s.strongest(),
            reference,
        })
        .collect();
    let count = learners.len().max(1) as f64;
    let class_mean = learners.iter().map(|l| l.z_strong).sum::<f64>() / count;
    let reference_objective = refs.iter().sum::<f64>() / count;
    let grade = if reference_objective > 0.0 {
        (class_mean / reference_objective).clamp(0.0, 1.0)
    } else {
        1.0
    };
    Score {
        learners,
        class_mean,
        reference_objective,
        grade,
    }
}

/// Control log that drives a session through `timeline` starting from a
/// session created on it: `(step, control)` pairs in order. Each boundary
/// must fall on a tick boundary for the session to reproduce the timeline.
pub fn controls_for_timeline(timeline: &[Segment], dt: f64) -> Vec<(u64, ControlMessage)> {
    let mut out = Vec::new();
    let mut at = 0u64;
    let mut prev: Option<&Segment> = None;
    for seg in timeline {
        if let Some(p) = prev {
            match seg.kind {
                Phase::Break => {
                    if p.kind == Phase::Lesson {
                        out.push((at, ControlMessage::StartBreak));
                    }
                }
                Phase::Lesson => {
                    out.push((at, ControlMessage::SetRequirement { u: seg.u }));
                    out.push((at, ControlMessage::SetComplexity { s: seg.s }));
                    if p.kind == Phase::Break {
                        out.push((at, ControlMessage::EndBreak));
                    }
                }
            }
        } else if seg.kind == Phase::Lesson {
            out.push((at, ControlMessage::SetRequirement { u: seg.u }));
            out.push((at, ControlMessage::SetComplexity { s: seg.s }));
        }
        at += steps_in(seg.duration, dt).unwrap_or(0) as u64;
        prev = Some(seg);
    }
    out
}

/// Runs a session through `controls` (as produced by
/// [`controls_for_timeline`]) until it finishes.
pub fn drive(session: &mut Session, controls: &[(u64, ControlMessage)]) -> Result<(), SessionError> {
    session.apply_control(ControlMessage::Resume)?;
    let per_tick = session.config.steps_per_tick as u64;
    for &(at, control) in controls {
        while session.step_index < at {
            if session.status != Status::Running {
                return Err(SessionError::Finished);
            }
            let ticks = (at - session.step_index).div_ceil(per_tick);
            session.advance_ticks(ticks);
        }
        if session.step_index != at {
            return Err(SessionError::InvalidControl(format!(
                "step {at} is not on a tick boundary"
            )));
        }
        session.apply_control(control)?;
    }
    while session.status == Status::Running {
        session.advance_ticks(u64::MAX);
    }
    Ok(())
}
