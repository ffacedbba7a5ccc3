//! Explicit Euler integration of a learner through lesson and break
//! segments.
//!
//! [`step`] is the single code path that advances a learner by one time
//! step. Timeline simulation and live sessions both go through it, which is
//! what makes a steered session reproduce a static timeline bit for bit.

use serde::{Deserialize, Serialize};

use crate::model::{
    effort, rate_forgetting, rate_multicomponent, rate_unicomponent, rest_recovery_rate,
    work_rate, workability_during_lesson, LearnerState, ModelParams, ModelVariant, RateVector,
};
use crate::scenario::{ConfigError, Segment, SimulationConfig};

/// Teaching regime of a segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Lesson,
    Break,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Lesson => "lesson",
            Phase::Break => "break",
        }
    }
}

impl std::fmt::Display for Phase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Controls in force while stepping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Regime {
    pub phase: Phase,
    /// Requirement level. Always zero during a break.
    pub u: f64,
    /// Material complexity in `[0, 1)`.
    pub s: f64,
}

impl Regime {
    pub fn of(segment: &Segment) -> Self {
        Self {
            phase: segment.kind,
            u: segment.u,
            s: segment.s,
        }
    }
}

/// One recorded point of a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub phase: Phase,
    pub u: f64,
    pub s: f64,
    pub z: Vec<f64>,
    pub z_total: f64,
    pub r: f64,
    pub p: f64,
    pub f: f64,
}

impl Sample {
    pub fn capture(state: &LearnerState, regime: Regime, params: &ModelParams) -> Self {
        let z_total = state.total();
        Self {
            t: state.t_day,
            phase: regime.phase,
            u: regime.u,
            s: regime.s,
            z: state.z.clone(),
            z_total,
            r: state.r,
            p: state.p,
            f: effort(regime.u, z_total, params.cutoff),
        }
    }

    pub fn strongest(&self) -> f64 {
        self.z.last().copied().unwrap_or(0.0)
    }
}

/// Recorded output of one simulation run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub params: ModelParams,
    pub dt: f64,
    pub record_every: usize,
    pub samples: Vec<Sample>,
    /// Number of knowledge components clamped at zero. Nonzero means `dt`
    /// is too coarse for the configuration.
    pub clamp_count: usize,
    pub final_state: LearnerState,
}

impl Trajectory {
    pub fn last(&self) -> &Sample {
        self.samples.last().expect("trajectory always holds the initial sample")
    }
}

/// Advances every state component by one Euler step. Knowledge components
/// that would turn negative are set to zero; returns how many were.
pub fn euler_step(state: &mut LearnerState, rates: &RateVector, dt: f64) -> usize {
    let mut clamped = 0;
    for (z, dz) in state.z.iter_mut().zip(&rates.dz) {
        let next = *z + dt * dz;
        if next < 0.0 {
            *z = 0.0;
            clamped += 1;
        } else {
            *z = next;
        }
    }
    state.p += dt * rates.dp;
    state.r += dt * rates.dr;
    state.t_day += dt;
    clamped
}

/// Rates in force for `regime`. During a lesson of a fatigue-tracking
/// variant `dr` is zero: workability there is a function of accumulated
/// work and is re-evaluated after the step.
pub fn rates(state: &LearnerState, params: &ModelParams, regime: Regime) -> RateVector {
    match regime.phase {
        Phase::Break => {
            let mut rv = rate_forgetting(state, params);
            if params.variant.tracks_workability() {
                rv.dr = rest_recovery_rate(state.r, state.t_day, params);
            }
            rv
        }
        Phase::Lesson => match params.variant {
            ModelVariant::Unicomponent => rate_unicomponent(state, params, regime.u),
            ModelVariant::Multicomponent => {
                rate_multicomponent(state, params, regime.u, state.r, regime.s)
            }
            ModelVariant::Workability | ModelVariant::Generalized => {
                let mut rv = rate_multicomponent(state, params, regime.u, state.r, regime.s);
                rv.dp = work_rate(regime.u, state.total(), regime.s, params);
                rv
            }
        },
    }
}

/// Resets lesson bookkeeping when a lesson begins after a break or at the
/// start of a run. Consecutive lesson segments form one lesson.
pub fn enter_phase(
    state: &mut LearnerState,
    params: &ModelParams,
    previous: Option<Phase>,
    next: Phase,
) {
    if next == Phase::Lesson && previous != Some(Phase::Lesson) {
        state.p = 0.0;
        state.r_lesson_start = state.r;
        if params.variant.tracks_workability() {
            state.r = workability_during_lesson(state.r_lesson_start, 0.0, params);
        }
    }
}

/// One full time step under `regime`. Returns the clamp count of the step.
pub fn step(state: &mut LearnerState, params: &ModelParams, regime: Regime, dt: f64) -> usize {
    let rv = rates(state, params, regime);
    let clamped = euler_step(state, &rv, dt);
    if regime.phase == Phase::Lesson && params.variant.tracks_workability() {
        state.r = workability_during_lesson(state.r_lesson_start, state.p, params);
    }
    clamped
}

/// Number of whole steps of size `dt` in `duration`, if it divides evenly.
pub fn steps_in(duration: f64, dt: f64) -> Option<usize> {
    let steps = (duration / dt).round();
    if steps < 1.0 {
        return None;
    }
    let tol = 1e-9 * duration.abs().max(1.0);
    ((steps * dt - duration).abs() <= tol).then_some(steps as usize)
}

/// Runs one segment from `state`, appending samples every `record_every`
/// steps and at the segment's last step. Returns the clamp count.
///
/// The caller is responsible for [`enter_phase`]; [`simulate_timeline`]
/// does that for every segment.
pub fn simulate_segment(
    state: &mut LearnerState,
    segment: &Segment,
    params: &ModelParams,
    dt: f64,
    record_every: usize,
    samples: &mut Vec<Sample>,
) -> usize {
    let regime = Regime::of(segment);
    let steps = steps_in(segment.duration, dt).unwrap_or(0);
    let every = record_every.max(1);
    let mut clamps = 0;
    for k in 1..=steps {
        clamps += step(state, params, regime, dt);
        if k % every == 0 || k == steps {
            samples.push(Sample::capture(state, regime, params));
        }
    }
    clamps
}

/// Simulates the whole configured timeline. Deterministic: equal configs
/// produce bit-identical trajectories.
pub fn simulate_timeline(config: &SimulationConfig) -> Result<Trajectory, ConfigError> {
    config.validate()?;
    Ok(run_unchecked(config, config.dt))
}

/// Max-norm difference of the final knowledge vector between runs at `dt`
/// and `dt / 2`. First-order convergence shows up as this halving with `dt`.
pub fn richardson_error(config: &SimulationConfig, dt: f64) -> Result<f64, ConfigError> {
    let mut coarse = config.clone();
    coarse.dt = dt;
    coarse.validate()?;
    let mut fine = config.clone();
    fine.dt = dt / 2.0;
    fine.validate()?;

    let a = run_unchecked(&coarse, coarse.dt).final_state;
    let b = run_unchecked(&fine, fine.dt).final_state;
    Ok(a.z
        .iter()
        .zip(&b.z)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max))
}

fn run_unchecked(config: &SimulationConfig, dt: f64) -> Trajectory {
    let params = &config.params;
    let mut state = config.initial.clone();
    let mut samples = Vec::new();
    let mut clamp_count = 0;

    let first = config
        .timeline
        .first()
        .map(Regime::of)
        .unwrap_or(Regime {
            phase: Phase::Lesson,
            u: 0.0,
            s: 0.0,
        });
    enter_phase(&mut state, params, None, first.phase);
    samples.push(Sample::capture(&state, first, params));

    let mut previous = first.phase;
    for (i, segment) in config.timeline.iter().enumerate() {
        if i > 0 {
            enter_phase(&mut state, params, Some(previous), segment.kind);
        }
        clamp_count += simulate_segment(
            &mut state,
            segment,
            params,
            dt,
            config.record_every,
            &mut samples,
        );
        previous = segment.kind;
    }

    Trajectory {
        params: params.clone(),
        dt,
        record_every: config.record_every,
        samples,
        clamp_count,
        final_state: state,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelParams;
    use approx::assert_abs_diff_eq;

    fn lesson(duration: f64, u: f64, s: f64) -> Segment {
        Segment::lesson(duration, u, s)
    }

    fn linear_config(dt: f64) -> SimulationConfig {
        let params = ModelParams::new(ModelVariant::Unicomponent, vec![0.1], vec![0.05]);
        SimulationConfig {
            params,
            initial: LearnerState::new(vec![0.0], 1.0),
            timeline: vec![lesson(20.0, 10.0, 0.0)],
            dt,
            record_every: 10,
        }
    }

    #[test]
    fn euler_step_identity_and_update() {
        let mut s = LearnerState::new(vec![5.0], 0.8);
        let before = s.clone();
        let clamps = euler_step(&mut s, &RateVector::zeros(1), 0.1);
        assert_eq!(clamps, 0);
        assert_eq!(s.z, before.z);
        assert_eq!(s.r, before.r);
        assert_eq!(s.p, before.p);
        assert_abs_diff_eq!(s.t_day, 0.1, epsilon = 1e-15);

        let mut s = LearnerState::new(vec![5.0], 0.8);
        let rv = RateVector {
            dz: vec![-0.5],
            dp: 0.0,
            dr: 0.0,
        };
        euler_step(&mut s, &rv, 0.1);
        assert_abs_diff_eq!(s.z[0], 4.95, epsilon = 1e-15);
    }

    #[test]
    fn euler_step_clamps_at_zero() {
        let mut s = LearnerState::new(vec![0.01], 1.0);
        let rv = RateVector {
            dz: vec![-1.0],
            dp: 0.0,
            dr: 0.0,
        };
        assert_eq!(euler_step(&mut s, &rv, 0.1), 1);
        assert_eq!(s.z[0], 0.0);
    }

    #[test]
    fn break_decay_matches_exponential() {
        let params = ModelParams::new(ModelVariant::Unicomponent, vec![0.1], vec![0.1]);
        let mut state = LearnerState::new(vec![5.0], 1.0);
        let mut samples = Vec::new();
        simulate_segment(
            &mut state,
            &Segment::rest(10.0),
            &params,
            0.001,
            10,
            &mut samples,
        );
        let exact = 5.0 * (-1.0f64).exp();
        assert_abs_diff_eq!(state.total(), exact, epsilon = 1e-3);
        assert_abs_diff_eq!(exact, 1.839_397_205_857_211_6, epsilon = 1e-12);
    }

    #[test]
    fn linear_lesson_matches_closed_form() {
        let traj = simulate_timeline(&linear_config(0.01)).unwrap();
        let exact = 0.1 * 10.0 / 0.15 * (1.0 - (-0.15f64 * 20.0).exp());
        assert_abs_diff_eq!(exact, 6.334_752_877_547_574, epsilon = 1e-9);
        assert_abs_diff_eq!(traj.final_state.z[0], exact, epsilon = 0.01);
    }

    #[test]
    fn lesson_beyond_cutoff_equals_break() {
        let mut params = ModelParams::new(ModelVariant::Unicomponent, vec![0.1], vec![0.05]);
        params.cutoff = 3.0;
        let mut a = LearnerState::new(vec![2.0], 1.0);
        let mut b = a.clone();
        let (mut sa, mut sb) = (Vec::new(), Vec::new());
        simulate_segment(&mut a, &lesson(15.0, 20.0, 0.0), &params, 0.01, 10, &mut sa);
        simulate_segment(&mut b, &Segment::rest(15.0), &params, 0.01, 10, &mut sb);
        assert_eq!(a, b);
        assert_eq!(sa.len(), sb.len());
        for (x, y) in sa.iter().zip(&sb) {
            assert_eq!(x.z, y.z);
            assert_eq!(x.t, y.t);
        }
    }

    #[test]
    fn empty_timeline_has_single_sample() {
        let mut cfg = linear_config(0.01);
        cfg.timeline.clear();
        let traj = simulate_timeline(&cfg).unwrap();
        assert_eq!(traj.samples.len(), 1);
        assert_eq!(traj.samples[0].t, 0.0);
    }

    #[test]
    fn sample_spacing_and_closing_sample() {
        let mut cfg = linear_config(0.1);
        cfg.timeline = vec![lesson(2.5, 10.0, 0.0)];
        cfg.record_every = 10;
        let traj = simulate_timeline(&cfg).unwrap();
        let ts: Vec<f64> = traj.samples.iter().map(|s| s.t).collect();
        assert_eq!(ts.len(), 4);
        assert_abs_diff_eq!(ts[1], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(ts[2], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(ts[3], 2.5, epsilon = 1e-12);
    }

    #[test]
    fn rest_recovery_matches_closed_form() {
        // k4 = 0 keeps the ceiling at 1: r(t) = 1 - (1 - r0) exp(-k3 t).
        let mut params = ModelParams::new(ModelVariant::Workability, vec![0.1], vec![0.01]);
        params.k3 = 0.1;
        let mut state = LearnerState::new(vec![1.0], 0.4);
        let mut samples = Vec::new();
        simulate_segment(
            &mut state,
            &Segment::rest(10.0),
            &params,
            0.001,
            100,
            &mut samples,
        );
        let exact = 1.0 - 0.6 * (-1.0f64).exp();
        assert_abs_diff_eq!(state.r, exact, epsilon = 1e-4);
    }

    #[test]
    fn lesson_start_resets_work() {
        let params = ModelParams::new(ModelVariant::Workability, vec![0.1], vec![0.01]);
        let mut state = LearnerState::new(vec![1.0], 0.6);
        state.p = 42.0;
        enter_phase(&mut state, &params, Some(Phase::Break), Phase::Lesson);
        assert_eq!(state.p, 0.0);
        assert_eq!(state.r_lesson_start, 0.6);
        assert_abs_diff_eq!(state.r, 0.6 / (1.0 + (-5.0f64).exp()), epsilon = 1e-15);

        // Changing controls mid-lesson is not a new lesson.
        state.p = 7.0;
        enter_phase(&mut state, &params, Some(Phase::Lesson), Phase::Lesson);
        assert_eq!(state.p, 7.0);
    }

    #[test]
    fn richardson_zero_rates() {
        let params = ModelParams::new(ModelVariant::Unicomponent, vec![0.1], vec![0.0]);
        let cfg = SimulationConfig {
            params,
            initial: LearnerState::new(vec![3.0], 1.0),
            timeline: vec![lesson(5.0, 3.0, 0.0)],
            dt: 0.1,
            record_every: 10,
        };
        assert_eq!(richardson_error(&cfg, 0.1).unwrap(), 0.0);
    }

    #[test]
    fn richardson_rejects_unstable_step() {
        let mut cfg = linear_config(0.1);
        cfg.params.gamma = vec![15.0];
        assert!(richardson_error(&cfg, 0.1).is_err());
    }

    #[test]
    fn steps_in_requires_divisibility() {
        assert_eq!(steps_in(20.0, 0.01), Some(2000));
        assert_eq!(steps_in(45.0, 0.025), Some(1800));
        assert_eq!(steps_in(1.0, 0.3), None);
        assert_eq!(steps_in(0.0, 0.1), None);
    }
}
