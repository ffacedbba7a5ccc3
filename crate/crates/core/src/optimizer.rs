//! Search over piecewise-constant requirement schedules.
//!
//! A schedule assigns one requirement level to every lesson segment of a
//! template timeline. The objective is the strongest knowledge category at
//! the end of the timeline. Because effort switches off abruptly at the
//! motivation cutoff the objective is only piecewise smooth, so the search
//! is derivative-free: coordinate-wise hill climbing with step halving, run
//! from the template's own schedule and from three seeded random restarts.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::integrator::{simulate_timeline, Phase};
use crate::scenario::{ConfigError, SimulationConfig};

/// Random restarts after the run from the template schedule.
pub const RANDOM_RESTARTS: usize = 3;

/// Requirement level per lesson segment of a template, in timeline order.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    pub u: Vec<f64>,
}

impl Schedule {
    pub fn of_template(template: &SimulationConfig) -> Self {
        Self {
            u: template.lesson_requirements(),
        }
    }

    /// The template with this schedule's levels substituted into its
    /// lesson segments.
    pub fn apply(&self, template: &SimulationConfig) -> Result<SimulationConfig, ScheduleError> {
        let expected = template.lesson_count();
        if self.u.len() != expected {
            return Err(ScheduleError::LengthMismatch {
                expected,
                got: self.u.len(),
            });
        }
        let mut config = template.clone();
        let lessons = config
            .timeline
            .iter_mut()
            .filter(|s| s.kind == Phase::Lesson);
        for (segment, &u) in lessons.zip(&self.u) {
            segment.u = u;
        }
        Ok(config)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerSettings {
    /// Maximum number of objective evaluations.
    pub budget: usize,
    pub seed: u64,
    /// Upper bound on every requirement level.
    pub u_max: f64,
    /// Initial coordinate perturbation.
    pub step_init: f64,
}

impl OptimizerSettings {
    /// Settings with `u_max` at twice the template's highest requirement
    /// level (10 when it has none) and an initial step of a quarter of that.
    pub fn for_template(template: &SimulationConfig, budget: usize, seed: u64) -> Self {
        let top = template
            .lesson_requirements()
            .into_iter()
            .fold(0.0, f64::max);
        let u_max = if top > 0.0 { 2.0 * top } else { 10.0 };
        Self {
            budget,
            seed,
            u_max,
            step_init: u_max / 4.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationResult {
    pub schedule: Schedule,
    pub objective: f64,
    /// Objective of the template's own schedule (clamped to bounds).
    pub baseline_objective: f64,
    pub evaluations: usize,
    /// Best objective seen after each evaluation.
    pub trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScheduleError {
    #[error("schedule has {got} levels but the template has {expected} lessons")]
    LengthMismatch { expected: usize, got: usize },
    #[error("invalid optimizer settings: {0}")]
    Settings(&'static str),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

/// End-of-timeline strong knowledge under `schedule`.
pub fn evaluate_schedule(
    schedule: &Schedule,
    template: &SimulationConfig,
) -> Result<f64, ScheduleError> {
    let mut config = schedule.apply(template)?;
    // Only segment-closing samples are needed.
    config.record_every = usize::MAX;
    let trajectory = simulate_timeline(&config)?;
    Ok(trajectory.final_state.strongest())
}

struct Evaluator<'a> {
    template: &'a SimulationConfig,
    budget: usize,
    used: usize,
    best: f64,
    trace: Vec<f64>,
}

impl Evaluator<'_> {
    fn exhausted(&self) -> bool {
        self.used >= self.budget
    }

    fn eval(&mut self, u: &[f64]) -> Result<f64, ScheduleError> {
        let value = evaluate_schedule(&Schedule { u: u.to_vec() }, self.template)?;
        self.used += 1;
        self.best = self.best.max(value);
        self.trace.push(self.best);
        Ok(value)
    }
}

/// Coordinate-wise hill climbing from `x` until `limit` evaluations have
/// been spent or the step falls below `min_step`.
fn hill_climb(
    ev: &mut Evaluator<'_>,
    mut x: Vec<f64>,
    mut fx: f64,
    limit: usize,
    settings: &OptimizerSettings,
) -> Result<(Vec<f64>, f64), ScheduleError> {
    let min_step = settings.u_max * 1e-9;
    let mut step = settings.step_init;
    while ev.used < limit && step >= min_step {
        let mut improved = false;
        'coords: for i in 0..x.len() {
            for dir in [1.0, -1.0] {
                if ev.used >= limit {
                    break 'coords;
                }
                let moved = (x[i] + dir * step).clamp(0.0, settings.u_max);
                if moved == x[i] {
                    continue;
                }
                let mut candidate = x.clone();
                candidate[i] = moved;
                let fc = ev.eval(&candidate)?;
                if fc > fx {
                    x = candidate;
                    fx = fc;
                    improved = true;
                    break;
                }
            }
        }
        if !improved {
            step /= 2.0;
        }
    }
    Ok((x, fx))
}

/// Deterministic seeded local search for the schedule maximizing
/// end-of-timeline strong knowledge.
///
/// The first evaluation is the template's own schedule, so the result is
/// never worse than it; with `budget = 1` that schedule is returned as is.
/// Ties between restarts go to the earliest.
pub fn optimize_schedule(
    template: &SimulationConfig,
    settings: &OptimizerSettings,
) -> Result<OptimizationResult, ScheduleError> {
    if settings.budget == 0 {
        return Err(ScheduleError::Settings("budget must be at least 1"));
    }
    if !(settings.u_max.is_finite() && settings.u_max >= 0.0) {
        return Err(ScheduleError::Settings("u_max must be finite and non-negative"));
    }
    if !(settings.step_init.is_finite() && settings.step_init > 0.0) {
        return Err(ScheduleError::Settings("step_init must be positive"));
    }
    template.validate()?;

    let m = template.lesson_count();
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let mut starts = vec![template
        .lesson_requirements()
        .into_iter()
        .map(|u| u.clamp(0.0, settings.u_max))
        .collect::<Vec<_>>()];
    for _ in 0..RANDOM_RESTARTS {
        starts.push(
            (0..m)
                .map(|_| rng.random_range(0.0..=settings.u_max))
                .collect(),
        );
    }

    let mut ev = Evaluator {
        template,
        budget: settings.budget,
        used: 0,
        best: f64::NEG_INFINITY,
        trace: Vec::new(),
    };

    let baseline = ev.eval(&starts[0])?;
    let mut best = (starts[0].clone(), baseline);

    let runs = starts.len();
    for (index, start) in starts.into_iter().enumerate() {
        if ev.exhausted() || m == 0 {
            break;
        }
        let remaining = settings.budget - ev.used;
        let limit = ev.used + (remaining / (runs - index)).max(1);
        let f_start = if index == 0 { baseline } else { ev.eval(&start)? };
        let (x, fx) = hill_climb(&mut ev, start, f_start, limit, settings)?;
        if fx > best.1 {
            best = (x, fx);
        }
    }

    Ok(OptimizationResult {
        schedule: Schedule { u: best.0 },
        objective: best.1,
        baseline_objective: baseline,
        evaluations: ev.used,
        trace: ev.trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{LearnerState, ModelParams, ModelVariant};
    use crate::scenario::{builtin_scenario, Segment};
    use approx::assert_relative_eq;

    fn monotone_template() -> SimulationConfig {
        SimulationConfig {
            params: ModelParams::new(ModelVariant::Unicomponent, vec![0.1], vec![0.05]),
            initial: LearnerState::new(vec![1.0], 1.0),
            timeline: vec![Segment::lesson(10.0, 2.0, 0.0), Segment::lesson(10.0, 3.0, 0.0)],
            dt: 0.05,
            record_every: 10,
        }
    }

    #[test]
    fn zero_schedule_is_pure_decay() {
        let template = monotone_template();
        let value = evaluate_schedule(&Schedule { u: vec![0.0, 0.0] }, &template).unwrap();
        // Euler for dZ/dt = -gamma Z over 400 steps.
        let discrete = (1.0 - 0.05f64 * 0.05).powi(400);
        assert_relative_eq!(value, discrete, max_relative = 1e-12);
        // Continuous decay within the O(dt) Euler error gamma^2 * T * dt / 2.
        assert_relative_eq!(value, (-0.05f64 * 20.0).exp(), max_relative = 2e-3);
    }

    #[test]
    fn objective_non_decreasing_in_requirement() {
        let mut template = monotone_template();
        template.timeline.truncate(1);
        let values: Vec<f64> = (0..=20)
            .map(|k| evaluate_schedule(&Schedule { u: vec![k as f64] }, &template).unwrap())
            .collect();
        assert!(values.windows(2).all(|w| w[1] >= w[0]), "{values:?}");
    }

    #[test]
    fn wrong_length_rejected() {
        let template = monotone_template();
        assert_eq!(
            evaluate_schedule(&Schedule { u: vec![1.0] }, &template).unwrap_err(),
            ScheduleError::LengthMismatch { expected: 2, got: 1 }
        );
    }

    #[test]
    fn budget_one_returns_template() {
        let template = builtin_scenario("fig2b").unwrap();
        let settings = OptimizerSettings::for_template(&template, 1, 7);
        let result = optimize_schedule(&template, &settings).unwrap();
        assert_eq!(result.schedule, Schedule::of_template(&template));
        assert_eq!(result.evaluations, 1);
        assert_eq!(result.objective, result.baseline_objective);
    }

    #[test]
    fn zero_budget_rejected() {
        let template = monotone_template();
        let settings = OptimizerSettings::for_template(&template, 0, 7);
        assert!(matches!(
            optimize_schedule(&template, &settings),
            Err(ScheduleError::Settings(_))
        ));
    }

    #[test]
    fn monotone_case_reaches_upper_bound() {
        let template = monotone_template();
        let settings = OptimizerSettings::for_template(&template, 200, 3);
        let result = optimize_schedule(&template, &settings).unwrap();
        for u in &result.schedule.u {
            assert!((settings.u_max - u).abs() <= 1e-6, "{:?}", result.schedule);
        }
    }

    #[test]
    fn same_seed_same_result() {
        let template = builtin_scenario("fig2b").unwrap();
        let settings = OptimizerSettings::for_template(&template, 60, 42);
        let a = optimize_schedule(&template, &settings).unwrap();
        let b = optimize_schedule(&template, &settings).unwrap();
        assert_eq!(a, b);
        assert!(a.objective >= a.baseline_objective);
        assert_eq!(a.trace.len(), a.evaluations);
        assert!(a.trace.windows(2).all(|w| w[1] >= w[0]));
    }
}
