use learnsim_core::optimizer::{optimize_schedule, OptimizerSettings};
use learnsim_core::session::{
    controls_for_timeline, drive, ControlMessage, Session, SessionConfig, REFERENCE_BUDGET,
    REFERENCE_SEED,
};
use learnsim_core::{builtin_scenario, simulate_timeline, SimulationConfig};

fn template() -> SimulationConfig {
    let mut cfg = builtin_scenario("fig2b").unwrap();
    cfg.dt = 0.05;
    cfg.initial.z = vec![5.0];
    cfg
}

#[test]
fn replaying_the_reference_schedule_earns_full_grade() {
    let template = template();
    let settings = OptimizerSettings::for_template(&template, REFERENCE_BUDGET, REFERENCE_SEED);
    let best = optimize_schedule(&template, &settings).unwrap();
    let taught = best.schedule.apply(&template).unwrap();

    let mut session = Session::new(SessionConfig::from_simulation(&template, 2, 1.0)).unwrap();
    drive(&mut session, &controls_for_timeline(&taught.timeline, taught.dt)).unwrap();
    let score = session.score().unwrap();
    assert_eq!(score.reference_objective, best.objective);
    assert_eq!(score.class_mean, best.objective);
    assert_eq!(score.grade, 1.0);
}

#[test]
fn idle_teacher_is_graded_on_pure_decay() {
    let template = template();
    let mut session = Session::new(SessionConfig::from_simulation(&template, 1, 1.0)).unwrap();
    let idle = [(0, ControlMessage::SetRequirement { u: 0.0 })];
    drive(&mut session, &idle).unwrap();
    let score = session.score().unwrap();

    let steps = (template.duration() / template.dt).round() as i32;
    let decayed = 5.0 * (1.0 - template.params.gamma[0] * template.dt).powi(steps);
    assert!((score.class_mean - decayed).abs() <= 1e-12 * decayed);
    let expected = decayed / score.reference_objective;
    assert!((score.grade - expected).abs() <= 1e-12);
    assert!(score.grade < 1.0);

    // The reference does at least as well as the template's own schedule.
    let baseline = simulate_timeline(&template).unwrap().final_state.strongest();
    assert!(score.reference_objective >= baseline);
}
