//! Learner model: parameters, state and the right-hand sides of every
//! knowledge, work and workability equation.
//!
//! Nothing in here advances time. The integrator owns stepping; these
//! functions only evaluate rates for a given state and teaching regime.
//!
//! Units: time in minutes, knowledge in abstract units of educational
//! material, work in work units.

use serde::{Deserialize, Serialize};

/// Largest exponent argument evaluated directly. Beyond it `exp` saturates.
const EXP_GUARD: f64 = 700.0;

/// Which of the four learning models a learner follows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelVariant {
    /// Single knowledge category, no fatigue.
    Unicomponent,
    /// Single knowledge category with fatigue and rest recovery.
    Workability,
    /// Chain of knowledge categories, workability held constant.
    Multicomponent,
    /// Chain of knowledge categories with fatigue, rest recovery and
    /// complexity-weighted work.
    Generalized,
}

impl ModelVariant {
    /// Variants restricted to a single knowledge category.
    pub fn is_single_component(self) -> bool {
        matches!(self, ModelVariant::Unicomponent | ModelVariant::Workability)
    }

    /// Variants where workability follows accumulated work and rest.
    pub fn tracks_workability(self) -> bool {
        matches!(self, ModelVariant::Workability | ModelVariant::Generalized)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ModelVariant::Unicomponent => "unicomponent",
            ModelVariant::Workability => "workability",
            ModelVariant::Multicomponent => "multicomponent",
            ModelVariant::Generalized => "generalized",
        }
    }
}

impl std::fmt::Display for ModelVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Coefficients of one learner.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub variant: ModelVariant,
    /// Assimilation coefficient of the first category followed by the
    /// transfer coefficients into each stronger category (per minute).
    pub alpha: Vec<f64>,
    /// Forgetting coefficient per category (per minute), weakest first.
    pub gamma: Vec<f64>,
    /// Knowledge exponent in `[0, 1]`.
    pub b: f64,
    /// Motivation cutoff: largest requirement gap the learner still works
    /// against. May be `f64::INFINITY`.
    pub cutoff: f64,
    /// Steepness of the workability logistic (per work unit).
    pub k1: f64,
    /// Work accumulation coefficient.
    pub k2: f64,
    /// Rest recovery rate (per minute).
    pub k3: f64,
    /// Day fatigue decay rate of the workability ceiling (per minute).
    pub k4: f64,
    /// Work after which workability halves.
    pub p0: f64,
    /// Workability at the start of the day.
    pub r0: f64,
}

impl ModelParams {
    pub const DEFAULT_K1: f64 = 0.05;
    pub const DEFAULT_K2: f64 = 1.0;
    pub const DEFAULT_K3: f64 = 0.1;
    pub const DEFAULT_K4: f64 = 0.0;
    pub const DEFAULT_P0: f64 = 100.0;
    pub const DEFAULT_R0: f64 = 1.0;

    /// Parameters with the given coefficient chains and every other
    /// coefficient at its default.
    pub fn new(variant: ModelVariant, alpha: Vec<f64>, gamma: Vec<f64>) -> Self {
        Self {
            variant,
            alpha,
            gamma,
            b: 0.0,
            cutoff: f64::INFINITY,
            k1: Self::DEFAULT_K1,
            k2: Self::DEFAULT_K2,
            k3: Self::DEFAULT_K3,
            k4: Self::DEFAULT_K4,
            p0: Self::DEFAULT_P0,
            r0: Self::DEFAULT_R0,
        }
    }

    /// Number of knowledge categories.
    pub fn n(&self) -> usize {
        self.alpha.len()
    }

    pub fn max_gamma(&self) -> f64 {
        self.gamma.iter().copied().fold(0.0, f64::max)
    }
}

/// Time-varying state of one learner.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnerState {
    /// Minutes since the start of the school day.
    pub t_day: f64,
    /// Knowledge per category, weakest first.
    pub z: Vec<f64>,
    /// Current workability in `[0, 1]`.
    pub r: f64,
    /// Work accumulated in the current lesson.
    pub p: f64,
    /// Workability captured when the current lesson began.
    pub r_lesson_start: f64,
}

impl LearnerState {
    /// State at the start of the day with the given knowledge and workability.
    pub fn new(z: Vec<f64>, r: f64) -> Self {
        Self {
            t_day: 0.0,
            z,
            r,
            p: 0.0,
            r_lesson_start: r,
        }
    }

    pub fn total(&self) -> f64 {
        self.z.iter().sum()
    }

    /// Strongest knowledge category (the whole of knowledge when `n = 1`).
    pub fn strongest(&self) -> f64 {
        self.z.last().copied().unwrap_or(0.0)
    }
}

/// Time derivatives of a [`LearnerState`].
#[derive(Debug, Clone, PartialEq)]
pub struct RateVector {
    pub dz: Vec<f64>,
    pub dp: f64,
    pub dr: f64,
}

impl RateVector {
    pub fn zeros(n: usize) -> Self {
        Self {
            dz: vec![0.0; n],
            dp: 0.0,
            dr: 0.0,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.dp.is_finite() && self.dr.is_finite() && self.dz.iter().all(|d| d.is_finite())
    }
}

/// Learner effort against requirement `u`.
///
/// Equals the gap `u - z_total` while it lies in `(0, cutoff]`, and zero
/// otherwise: there is nothing to strive for when the requirement is met,
/// and the learner gives up when the gap exceeds the cutoff.
pub fn effort(u: f64, z_total: f64, cutoff: f64) -> f64 {
    let gap = u - z_total;
    if gap > 0.0 && gap <= cutoff {
        gap
    } else {
        0.0
    }
}

/// `z^b`, with `z^0 = 1` for every `z` including zero.
pub fn knowledge_power(z_total: f64, b: f64) -> f64 {
    if b == 0.0 {
        1.0
    } else {
        z_total.max(0.0).powf(b)
    }
}

/// Knowledge rate of the single-category model without fatigue.
pub fn rate_unicomponent(state: &LearnerState, params: &ModelParams, u: f64) -> RateVector {
    let z = state.z[0];
    let f = effort(u, z, params.cutoff);
    let learn = params.alpha[0] * knowledge_power(z, params.b) * f;
    RateVector {
        dz: vec![learn - params.gamma[0] * z],
        dp: 0.0,
        dr: 0.0,
    }
}

/// Logistic workability after `p` units of work in the current lesson.
///
/// Saturates to zero (never NaN) when the exponent overflows.
pub fn workability_during_lesson(r_lesson_start: f64, p: f64, params: &ModelParams) -> f64 {
    let arg = params.k1 * (p - params.p0);
    if arg > EXP_GUARD {
        0.0
    } else if arg < -EXP_GUARD {
        r_lesson_start
    } else {
        r_lesson_start / (1.0 + arg.exp())
    }
}

/// Rate at which work accumulates during a lesson.
///
/// While the requirement exceeds knowledge, work grows with the gap,
/// weighted by `1 + s` in the generalized model. Otherwise the learner is
/// busy with easy tasks and work grows at the nominal rate `k2`.
pub fn work_rate(u: f64, z_total: f64, s: f64, params: &ModelParams) -> f64 {
    if u > z_total {
        let weight = match params.variant {
            ModelVariant::Generalized => 1.0 + s,
            _ => 1.0,
        };
        params.k2 * weight * (u - z_total)
    } else {
        params.k2
    }
}

/// Knowledge rates of the category chain.
///
/// The weakest category takes in new material and passes knowledge on to
/// the next category; each intermediate category receives from the one
/// below and passes to the one above; the strongest only receives. Every
/// category forgets at its own rate, outside the workability factor.
///
/// With a single category there is no transfer and this reduces to the
/// fatigue-aware single-category model.
pub fn rate_multicomponent(
    state: &LearnerState,
    params: &ModelParams,
    u: f64,
    r: f64,
    s: f64,
) -> RateVector {
    let n = state.z.len();
    let z_total = state.total();
    let f = effort(u, z_total, params.cutoff);
    let drive = r * (1.0 - s);
    let influx = params.alpha[0] * f * knowledge_power(z_total, params.b);
    let z = &state.z;

    let dz = (0..n)
        .map(|i| {
            let inflow = if i == 0 {
                influx
            } else {
                params.alpha[i] * z[i - 1]
            };
            let outflow = if i + 1 < n {
                params.alpha[i + 1] * z[i]
            } else {
                0.0
            };
            drive * (inflow - outflow) - params.gamma[i] * z[i]
        })
        .collect();

    RateVector {
        dz,
        dp: 0.0,
        dr: 0.0,
    }
}

/// Ceiling workability at minute `t_day` of the school day.
pub fn workability_ceiling(t_day: f64, params: &ModelParams) -> f64 {
    (-params.k4 * t_day).exp()
}

/// Recovery of workability during a break, toward the day's ceiling.
pub fn rest_recovery_rate(r: f64, t_day: f64, params: &ModelParams) -> f64 {
    params.k3 * (workability_ceiling(t_day, params) - r)
}

/// Pure forgetting: every category decays at its own rate.
pub fn rate_forgetting(state: &LearnerState, params: &ModelParams) -> RateVector {
    RateVector {
        dz: state
            .z
            .iter()
            .zip(&params.gamma)
            .map(|(z, g)| -(g * z))
            .collect(),
        dp: 0.0,
        dr: 0.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn uni(alpha: f64, gamma: f64, cutoff: f64) -> ModelParams {
        let mut p = ModelParams::new(ModelVariant::Unicomponent, vec![alpha], vec![gamma]);
        p.cutoff = cutoff;
        p
    }

    fn two_component() -> ModelParams {
        ModelParams::new(
            ModelVariant::Multicomponent,
            vec![0.1, 0.02],
            vec![0.05, 0.001],
        )
    }

    #[test]
    fn effort_regimes() {
        assert_eq!(effort(5.0, 5.0, 3.0), 0.0);
        assert_eq!(effort(10.0, 8.0, 3.0), 2.0);
        assert_eq!(effort(10.0, 4.0, 3.0), 0.0);
        // Gap exactly at the cutoff still counts.
        assert_eq!(effort(10.0, 7.0, 3.0), 3.0);
        assert_eq!(effort(10.0, 0.0, f64::INFINITY), 10.0);
    }

    #[test]
    fn unicomponent_rates() {
        let p = uni(0.1, 0.05, f64::INFINITY);
        let s = LearnerState::new(vec![0.0], 1.0);
        assert_abs_diff_eq!(rate_unicomponent(&s, &p, 10.0).dz[0], 1.0, epsilon = 1e-15);

        let steady = 0.1 * 10.0 / (0.1 + 0.05);
        let s = LearnerState::new(vec![steady], 1.0);
        assert_abs_diff_eq!(rate_unicomponent(&s, &p, 10.0).dz[0], 0.0, epsilon = 1e-12);

        let p = uni(0.1, 0.05, 3.0);
        let s = LearnerState::new(vec![4.0], 1.0);
        assert_abs_diff_eq!(rate_unicomponent(&s, &p, 10.0).dz[0], -0.2, epsilon = 1e-15);
    }

    #[test]
    fn zero_knowledge_with_positive_exponent_is_stuck() {
        let mut p = uni(0.1, 0.05, f64::INFINITY);
        p.b = 0.5;
        let s = LearnerState::new(vec![0.0], 1.0);
        assert_eq!(rate_unicomponent(&s, &p, 10.0).dz[0], 0.0);
    }

    #[test]
    fn logistic_workability() {
        let p = ModelParams::new(ModelVariant::Workability, vec![0.1], vec![0.01]);
        assert_abs_diff_eq!(workability_during_lesson(1.0, 100.0, &p), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(
            workability_during_lesson(1.0, 0.0, &p),
            0.993_307_149_075_715,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            workability_during_lesson(1.0, 200.0, &p),
            0.006_692_850_924_284_856,
            epsilon = 1e-12
        );
    }

    #[test]
    fn logistic_saturates_without_nan() {
        let mut p = ModelParams::new(ModelVariant::Workability, vec![0.1], vec![0.01]);
        p.k1 = 50.0;
        let r = workability_during_lesson(1.0, 1e6, &p);
        assert_eq!(r, 0.0);
        let r = workability_during_lesson(0.7, 0.0, &p);
        assert_eq!(r, 0.7);
    }

    #[test]
    fn work_rate_weights() {
        let mut p = ModelParams::new(ModelVariant::Generalized, vec![0.1, 0.02], vec![0.05, 0.0]);
        assert_abs_diff_eq!(work_rate(10.0, 6.0, 0.5, &p), 6.0, epsilon = 1e-15);
        p.variant = ModelVariant::Workability;
        assert_abs_diff_eq!(work_rate(10.0, 6.0, 0.5, &p), 4.0, epsilon = 1e-15);
        assert_abs_diff_eq!(work_rate(3.0, 6.0, 0.0, &p), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn multicomponent_examples() {
        let p = two_component();
        let s = LearnerState::new(vec![0.0, 0.0], 1.0);
        let rv = rate_multicomponent(&s, &p, 10.0, 1.0, 0.0);
        assert_abs_diff_eq!(rv.dz[0], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(rv.dz[1], 0.0, epsilon = 1e-15);

        let s = LearnerState::new(vec![5.0, 0.0], 1.0);
        let rv = rate_multicomponent(&s, &p, 5.0, 1.0, 0.0);
        assert_abs_diff_eq!(rv.dz[0], -0.35, epsilon = 1e-12);
        assert_abs_diff_eq!(rv.dz[1], 0.1, epsilon = 1e-12);
    }

    #[test]
    fn single_category_chain_has_no_transfer() {
        let p = ModelParams::new(ModelVariant::Workability, vec![0.1], vec![0.05]);
        let s = LearnerState::new(vec![2.0], 1.0);
        let rv = rate_multicomponent(&s, &p, 10.0, 0.5, 0.2);
        assert_abs_diff_eq!(rv.dz[0], 0.5 * 0.8 * 0.1 * 8.0 - 0.1, epsilon = 1e-15);
    }

    #[test]
    fn rest_recovery() {
        let mut p = ModelParams::new(ModelVariant::Generalized, vec![0.1, 0.02], vec![0.05, 0.0]);
        p.k4 = 0.002;
        let t = 120.0;
        let ceiling = (-0.002f64 * t).exp();
        assert_eq!(rest_recovery_rate(ceiling, t, &p), 0.0);

        p.k4 = 0.0;
        p.k3 = 0.1;
        assert_abs_diff_eq!(rest_recovery_rate(0.4, 37.0, &p), 0.06, epsilon = 1e-15);
    }
}
