//! Simulation configuration: the JSON document format, validation and the
//! built-in scenarios.
//!
//! Document layout (keys are emitted in this order):
//!
//! ```json
//! {
//!   "variant": "unicomponent",
//!   "params": { "alpha": [0.1], "gamma": [0.05], "b": 0.0, "C": "inf",
//!               "k1": 0.05, "k2": 1.0, "k3": 0.1, "k4": 0.0, "P0": 100.0, "r0": 1.0 },
//!   "initial": { "Z": [0.0], "r": 1.0 },
//!   "timeline": [ { "kind": "lesson", "duration_min": 20.0, "U": 10.0, "S": 0.0 } ],
//!   "dt_min": 0.01,
//!   "record_every": 10
//! }
//! ```
//!
//! Only `variant`, `params.alpha`, `params.gamma`, `initial.Z` and `dt_min`
//! are required. `C` accepts a number or `"inf"`.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::integrator::{steps_in, Phase};
use crate::model::{LearnerState, ModelParams, ModelVariant};

pub const DEFAULT_RECORD_EVERY: usize = 10;

/// Names accepted by [`builtin_scenario`].
pub const BUILTIN_NAMES: [&str; 5] = ["fig2a", "fig2b", "fig3", "fig4", "fig5"];

/// One lesson or break interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub kind: Phase,
    /// Minutes.
    pub duration: f64,
    /// Requirement level; zero for breaks.
    pub u: f64,
    /// Complexity in `[0, 1)`.
    pub s: f64,
}

impl Segment {
    pub fn lesson(duration: f64, u: f64, s: f64) -> Self {
        Self {
            kind: Phase::Lesson,
            duration,
            u,
            s,
        }
    }

    pub fn rest(duration: f64) -> Self {
        Self {
            kind: Phase::Break,
            duration,
            u: 0.0,
            s: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub params: ModelParams,
    pub initial: LearnerState,
    pub timeline: Vec<Segment>,
    /// Step size in minutes.
    pub dt: f64,
    pub record_every: usize,
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let errors = validate_config(self);
        if errors.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(errors))
        }
    }

    /// Total timeline duration in minutes.
    pub fn duration(&self) -> f64 {
        self.timeline.iter().map(|s| s.duration).sum()
    }

    pub fn lesson_count(&self) -> usize {
        self.timeline
            .iter()
            .filter(|s| s.kind == Phase::Lesson)
            .count()
    }

    /// Requirement levels of the lesson segments, in order.
    pub fn lesson_requirements(&self) -> Vec<f64> {
        self.timeline
            .iter()
            .filter(|s| s.kind == Phase::Lesson)
            .map(|s| s.u)
            .collect()
    }
}

/// A single violated invariant.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ValidationError {
    #[error("n must be at least 1")]
    NoComponents,
    #[error("{variant} requires n = 1 (got {n})")]
    SingleComponentVariant { variant: ModelVariant, n: usize },
    #[error("{variant} requires n >= 2 (got {n})")]
    MultiComponentVariant { variant: ModelVariant, n: usize },
    #[error("{field} has length {len}, expected n = {n}")]
    LengthMismatch {
        field: &'static str,
        len: usize,
        n: usize,
    },
    #[error("{field} = {value} is out of range: {expected}")]
    OutOfRange {
        field: String,
        value: f64,
        expected: &'static str,
    },
    #[error("gamma must be non-increasing (gamma[{index}] = {next} > gamma[{prev_index}] = {prev})",
        prev_index = .index - 1)]
    GammaNotNonIncreasing { index: usize, prev: f64, next: f64 },
    #[error("b > 0 with zero initial knowledge: the learner can never leave Z = 0")]
    ColdStart,
    #[error("dt * max(gamma) = {product} must be < 1 for a stable explicit Euler step")]
    UnstableForgetting { product: f64 },
    #[error("dt * k3 = {product} must be < 1 for a stable explicit Euler step")]
    UnstableRecovery { product: f64 },
    #[error("timeline[{index}]: duration {duration} is not a whole number of dt = {dt} steps")]
    NotDivisible {
        index: usize,
        duration: f64,
        dt: f64,
    },
    #[error("timeline[{index}]: a break must have U = 0 (got {u})")]
    BreakWithRequirement { index: usize, u: f64 },
    #[error("record_every must be at least 1")]
    ZeroRecordEvery,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("parse error at {path} (line {line}, column {column}): {message}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid configuration: {}", join(.0))]
    Invalid(Vec<ValidationError>),
    #[error("unknown scenario `{0}` (expected one of fig2a, fig2b, fig3, fig4, fig5)")]
    UnknownScenario(String),
}

fn join(errors: &[ValidationError]) -> String {
    errors
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

fn check_range(
    errors: &mut Vec<ValidationError>,
    field: impl Into<String>,
    value: f64,
    ok: bool,
    expected: &'static str,
) {
    if !ok || value.is_nan() {
        errors.push(ValidationError::OutOfRange {
            field: field.into(),
            value,
            expected,
        });
    }
}

/// Learner-level invariants: parameter ranges, chain lengths and the
/// initial state.
pub fn validate_learner(params: &ModelParams, initial: &LearnerState) -> Vec<ValidationError> {
    let mut errors = Vec::new();
    let n = params.n();
    if n == 0 {
        errors.push(ValidationError::NoComponents);
    } else if params.variant.is_single_component() && n != 1 {
        errors.push(ValidationError::SingleComponentVariant {
            variant: params.variant,
            n,
        });
    } else if !params.variant.is_single_component() && n < 2 {
        errors.push(ValidationError::MultiComponentVariant {
            variant: params.variant,
            n,
        });
    }
    for (field, len) in [("gamma", params.gamma.len()), ("initial.Z", initial.z.len())] {
        if len != n {
            errors.push(ValidationError::LengthMismatch { field, len, n });
        }
    }

    for (i, a) in params.alpha.iter().enumerate() {
        check_range(&mut errors, format!("alpha[{i}]"), *a, a.is_finite() && *a > 0.0, "positive");
    }
    for (i, g) in params.gamma.iter().enumerate() {
        check_range(&mut errors, format!("gamma[{i}]"), *g, g.is_finite() && *g >= 0.0, "non-negative");
    }
    for i in 1..params.gamma.len() {
        let (prev, next) = (params.gamma[i - 1], params.gamma[i]);
        if next > prev {
            errors.push(ValidationError::GammaNotNonIncreasing { index: i, prev, next });
        }
    }
    let b = params.b;
    check_range(&mut errors, "b", b, (0.0..=1.0).contains(&b), "[0, 1]");
    let c = params.cutoff;
    check_range(&mut errors, "C", c, c > 0.0, "positive or inf");
    for (field, v) in [("k1", params.k1), ("k2", params.k2), ("k3", params.k3), ("P0", params.p0)] {
        check_range(&mut errors, field, v, v.is_finite() && v > 0.0, "positive");
    }
    let k4 = params.k4;
    check_range(&mut errors, "k4", k4, k4.is_finite() && k4 >= 0.0, "non-negative");
    let r0 = params.r0;
    check_range(&mut errors, "r0", r0, r0 > 0.0 && r0 <= 1.0, "(0, 1]");

    for (i, z) in initial.z.iter().enumerate() {
        check_range(&mut errors, format!("initial.Z[{i}]"), *z, z.is_finite() && *z >= 0.0, "non-negative");
    }
    let r = initial.r;
    check_range(&mut errors, "initial.r", r, (0.0..=1.0).contains(&r), "[0, 1]");
    let t = initial.t_day;
    check_range(&mut errors, "initial.t_min", t, t.is_finite() && t >= 0.0, "non-negative");
    if b > 0.0 && initial.total() <= 0.0 {
        errors.push(ValidationError::ColdStart);
    }
    errors
}

/// Step-size and timeline invariants for `dt`.
pub fn validate_timeline(
    params: &ModelParams,
    timeline: &[Segment],
    dt: f64,
) -> Vec<ValidationError> {
    let mut errors = Vec::new();
    let dt_ok = dt.is_finite() && dt > 0.0;
    check_range(&mut errors, "dt_min", dt, dt_ok, "positive");
    if dt_ok {
        let product = dt * params.max_gamma();
        if product >= 1.0 {
            errors.push(ValidationError::UnstableForgetting { product });
        }
        if params.variant.tracks_workability() {
            let product = dt * params.k3;
            if product >= 1.0 {
                errors.push(ValidationError::UnstableRecovery { product });
            }
        }
    }
    for (index, seg) in timeline.iter().enumerate() {
        let d = seg.duration;
        if !(d.is_finite() && d > 0.0) {
            check_range(&mut errors, format!("timeline[{index}].duration_min"), d, false, "positive");
        } else if dt_ok && steps_in(d, dt).is_none() {
            errors.push(ValidationError::NotDivisible { index, duration: d, dt });
        }
        check_range(
            &mut errors,
            format!("timeline[{index}].U"),
            seg.u,
            seg.u.is_finite() && seg.u >= 0.0,
            "non-negative",
        );
        check_range(
            &mut errors,
            format!("timeline[{index}].S"),
            seg.s,
            (0.0..1.0).contains(&seg.s),
            "[0, 1)",
        );
        if seg.kind == Phase::Break && seg.u != 0.0 {
            errors.push(ValidationError::BreakWithRequirement { index, u: seg.u });
        }
    }
    errors
}

/// Every violated invariant of `config`; empty when valid.
pub fn validate_config(config: &SimulationConfig) -> Vec<ValidationError> {
    let mut errors = validate_learner(&config.params, &config.initial);
    errors.extend(validate_timeline(&config.params, &config.timeline, config.dt));
    if config.record_every == 0 {
        errors.push(ValidationError::ZeroRecordEvery);
    }
    errors
}

// ---------------------------------------------------------------------------
// Document format

#[derive(Debug, Clone, Copy, PartialEq)]
struct Cutoff(f64);

impl Serialize for Cutoff {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        if self.0.is_infinite() && self.0 > 0.0 {
            serializer.serialize_str("inf")
        } else {
            serializer.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for Cutoff {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Number(f64),
            Text(String),
        }
        match Repr::deserialize(deserializer)? {
            Repr::Number(v) => Ok(Cutoff(v)),
            Repr::Text(s) if matches!(s.as_str(), "inf" | "infinity" | "Infinity") => {
                Ok(Cutoff(f64::INFINITY))
            }
            Repr::Text(s) => Err(serde::de::Error::custom(format!(
                "expected a number or \"inf\", got \"{s}\""
            ))),
        }
    }
}

impl Default for Cutoff {
    fn default() -> Self {
        Cutoff(f64::INFINITY)
    }
}

fn default_k1() -> f64 {
    ModelParams::DEFAULT_K1
}
fn default_k2() -> f64 {
    ModelParams::DEFAULT_K2
}
fn default_k3() -> f64 {
    ModelParams::DEFAULT_K3
}
fn default_p0() -> f64 {
    ModelParams::DEFAULT_P0
}
fn default_r0() -> f64 {
    ModelParams::DEFAULT_R0
}
fn default_record_every() -> usize {
    DEFAULT_RECORD_EVERY
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct ParamsDocument {
    alpha: Vec<f64>,
    gamma: Vec<f64>,
    #[serde(default)]
    b: f64,
    #[serde(rename = "C", default)]
    cutoff: Cutoff,
    #[serde(default = "default_k1")]
    k1: f64,
    #[serde(default = "default_k2")]
    k2: f64,
    #[serde(default = "default_k3")]
    k3: f64,
    #[serde(default)]
    k4: f64,
    #[serde(rename = "P0", default = "default_p0")]
    p0: f64,
    #[serde(default = "default_r0")]
    r0: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct InitialDocument {
    #[serde(rename = "Z")]
    z: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    r: Option<f64>,
    #[serde(default, skip_serializing_if = "is_zero")]
    t_min: f64,
}

fn is_zero(v: &f64) -> bool {
    *v == 0.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct SegmentDocument {
    kind: Phase,
    duration_min: f64,
    #[serde(rename = "U", default)]
    u: f64,
    #[serde(rename = "S", default)]
    s: f64,
}

/// Learner description shared by configuration and session documents.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnerDocument {
    variant: ModelVariant,
    params: ParamsDocument,
    initial: InitialDocument,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigDocument {
    variant: ModelVariant,
    params: ParamsDocument,
    initial: InitialDocument,
    #[serde(default)]
    timeline: Vec<SegmentDocument>,
    dt_min: f64,
    #[serde(default = "default_record_every")]
    record_every: usize,
}

impl LearnerDocument {
    pub fn from_model(params: &ModelParams, initial: &LearnerState) -> Self {
        Self {
            variant: params.variant,
            params: ParamsDocument {
                alpha: params.alpha.clone(),
                gamma: params.gamma.clone(),
                b: params.b,
                cutoff: Cutoff(params.cutoff),
                k1: params.k1,
                k2: params.k2,
                k3: params.k3,
                k4: params.k4,
                p0: params.p0,
                r0: params.r0,
            },
            initial: InitialDocument {
                z: initial.z.clone(),
                r: Some(initial.r),
                t_min: initial.t_day,
            },
        }
    }

    pub fn into_model(self) -> (ModelParams, LearnerState) {
        let p = self.params;
        let params = ModelParams {
            variant: self.variant,
            alpha: p.alpha,
            gamma: p.gamma,
            b: p.b,
            cutoff: p.cutoff.0,
            k1: p.k1,
            k2: p.k2,
            k3: p.k3,
            k4: p.k4,
            p0: p.p0,
            r0: p.r0,
        };
        let mut initial = LearnerState::new(self.initial.z, self.initial.r.unwrap_or(params.r0));
        initial.t_day = self.initial.t_min;
        (params, initial)
    }
}

/// Timeline segment in document form.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TimelineDocument(Vec<SegmentDocument>);

impl TimelineDocument {
    pub fn from_segments(segments: &[Segment]) -> Self {
        Self(segments.iter().map(segment_to_document).collect())
    }

    pub fn into_segments(self) -> Vec<Segment> {
        self.0.into_iter().map(segment_from_document).collect()
    }
}

fn segment_to_document(s: &Segment) -> SegmentDocument {
    SegmentDocument {
        kind: s.kind,
        duration_min: s.duration,
        u: s.u,
        s: s.s,
    }
}

fn segment_from_document(s: SegmentDocument) -> Segment {
    Segment {
        kind: s.kind,
        duration: s.duration_min,
        u: s.u,
        s: s.s,
    }
}

impl From<ConfigDocument> for SimulationConfig {
    fn from(doc: ConfigDocument) -> Self {
        let (params, initial) = LearnerDocument {
            variant: doc.variant,
            params: doc.params,
            initial: doc.initial,
        }
        .into_model();
        SimulationConfig {
            params,
            initial,
            timeline: doc.timeline.into_iter().map(segment_from_document).collect(),
            dt: doc.dt_min,
            record_every: doc.record_every,
        }
    }
}

impl From<&SimulationConfig> for ConfigDocument {
    fn from(config: &SimulationConfig) -> Self {
        let learner = LearnerDocument::from_model(&config.params, &config.initial);
        ConfigDocument {
            variant: learner.variant,
            params: learner.params,
            initial: learner.initial,
            timeline: config.timeline.iter().map(segment_to_document).collect(),
            dt_min: config.dt,
            record_every: config.record_every,
        }
    }
}

/// Deserializes `T` from JSON text, reporting the field path and position
/// of the first error.
pub fn from_json_text<'a, T: Deserialize<'a>>(text: &'a str) -> Result<T, ConfigError> {
    let mut de = serde_json::Deserializer::from_str(text);
    let value: T = serde_path_to_error::deserialize(&mut de).map_err(|err| {
        let path = err.path().to_string();
        let inner = err.into_inner();
        ConfigError::Parse {
            path,
            line: inner.line(),
            column: inner.column(),
            message: inner.to_string(),
        }
    })?;
    de.end().map_err(|err| ConfigError::Parse {
        path: ".".into(),
        line: err.line(),
        column: err.column(),
        message: err.to_string(),
    })?;
    Ok(value)
}

/// Parses a configuration document and validates it.
pub fn parse_config(text: &str) -> Result<SimulationConfig, ConfigError> {
    let config = parse_config_unvalidated(text)?;
    config.validate()?;
    Ok(config)
}

/// Parses a configuration document, filling defaults, without validation.
pub fn parse_config_unvalidated(text: &str) -> Result<SimulationConfig, ConfigError> {
    let doc: ConfigDocument = from_json_text(text)?;
    Ok(doc.into())
}

/// Renders `config` as a pretty-printed document with a trailing newline.
pub fn serialize_config(config: &SimulationConfig) -> String {
    let mut out = serde_json::to_string_pretty(&ConfigDocument::from(config))
        .expect("configuration documents always serialize");
    out.push('\n');
    out
}

/// Configuration as a JSON value, for generic field access.
pub fn config_to_value(config: &SimulationConfig) -> serde_json::Value {
    serde_json::to_value(ConfigDocument::from(config)).expect("configuration documents always serialize")
}

pub fn config_from_value(value: serde_json::Value) -> Result<SimulationConfig, ConfigError> {
    let text = value.to_string();
    parse_config(&text)
}

// ---------------------------------------------------------------------------
// Built-in scenarios
//
// Coefficients are illustrative choices, picked so each run shows the
// qualitative behaviour named in its doc comment.

/// Returns the named built-in scenario.
pub fn builtin_scenario(name: &str) -> Result<SimulationConfig, ConfigError> {
    match name {
        "fig2a" => Ok(staircase(&[4.0, 8.0, 12.0, 16.0, 20.0])),
        "fig2b" => Ok(staircase(&[4.0, 16.0, 20.0, 24.0])),
        "fig3" => Ok(fig3()),
        "fig4" => Ok(fig4()),
        "fig5" => Ok(fig5()),
        other => Err(ConfigError::UnknownScenario(other.to_string())),
    }
}

/// Staircase of 30-minute lessons. `fig2a` keeps every step within the
/// cutoff so knowledge climbs; `fig2b` jumps past it on the second step and
/// knowledge only decays from there.
fn staircase(levels: &[f64]) -> SimulationConfig {
    let mut params = ModelParams::new(ModelVariant::Unicomponent, vec![0.1], vec![0.01]);
    params.cutoff = 6.0;
    SimulationConfig {
        params,
        initial: LearnerState::new(vec![0.0], 1.0),
        timeline: levels.iter().map(|&u| Segment::lesson(30.0, u, 0.0)).collect(),
        dt: 0.01,
        record_every: DEFAULT_RECORD_EVERY,
    }
}

/// Single-category learner over a day of three lessons separated by
/// breaks: workability sags within each lesson and recovers during breaks.
fn fig3() -> SimulationConfig {
    let mut params = ModelParams::new(ModelVariant::Workability, vec![0.06], vec![0.01]);
    params.k1 = 0.05;
    params.k2 = 1.0;
    params.k3 = 0.2;
    params.k4 = 0.001;
    params.p0 = 100.0;
    SimulationConfig {
        params,
        initial: LearnerState::new(vec![0.0], 1.0),
        timeline: vec![
            Segment::lesson(45.0, 10.0, 0.3),
            Segment::rest(15.0),
            Segment::lesson(45.0, 14.0, 0.3),
            Segment::rest(15.0),
            Segment::lesson(45.0, 18.0, 0.3),
        ],
        dt: 0.01,
        record_every: DEFAULT_RECORD_EVERY,
    }
}

/// Four strength categories through one lesson followed by a long break:
/// strong knowledge accumulates during the lesson, and afterwards each
/// category decays at its own rate.
fn fig4() -> SimulationConfig {
    let params = ModelParams::new(
        ModelVariant::Multicomponent,
        vec![0.1, 0.05, 0.03, 0.02],
        vec![0.1, 0.03, 0.01, 0.003],
    );
    SimulationConfig {
        params,
        initial: LearnerState::new(vec![0.0; 4], 1.0),
        timeline: vec![Segment::lesson(45.0, 10.0, 0.2), Segment::rest(60.0)],
        dt: 0.01,
        record_every: DEFAULT_RECORD_EVERY,
    }
}

/// Two-category learner with fatigue over a four-lesson day: strong
/// knowledge grows and barely decays, and recovered workability falls
/// through the day.
fn fig5() -> SimulationConfig {
    let mut params = ModelParams::new(
        ModelVariant::Generalized,
        vec![0.08, 0.02],
        vec![0.02, 0.0005],
    );
    params.k1 = 0.05;
    params.k2 = 0.5;
    params.k3 = 0.3;
    params.k4 = 0.001;
    params.p0 = 100.0;
    SimulationConfig {
        params,
        initial: LearnerState::new(vec![0.0, 0.0], 1.0),
        timeline: vec![
            Segment::lesson(45.0, 10.0, 0.2),
            Segment::rest(15.0),
            Segment::lesson(45.0, 14.0, 0.2),
            Segment::rest(15.0),
            Segment::lesson(45.0, 18.0, 0.2),
            Segment::rest(15.0),
            Segment::lesson(45.0, 22.0, 0.2),
            Segment::rest(60.0),
        ],
        dt: 0.01,
        record_every: DEFAULT_RECORD_EVERY,
    }
}

impl fmt::Display for Segment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} min (U = {}, S = {})",
            self.kind, self.duration, self.u, self.s
        )
    }
}
