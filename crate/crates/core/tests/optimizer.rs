use learnsim_core::optimizer::{evaluate_schedule, optimize_schedule, OptimizerSettings, Schedule};
use learnsim_core::{builtin_scenario, simulate_timeline, Phase};

#[test]
fn optimized_lessons_stay_within_cutoff() {
    let template = builtin_scenario("fig2b").unwrap();
    let mut settings = OptimizerSettings::for_template(&template, 500, 42);
    settings.u_max = 60.0;
    settings.step_init = 15.0;
    let result = optimize_schedule(&template, &settings).unwrap();
    assert!(result.objective > result.baseline_objective);

    let best = result.schedule.apply(&template).unwrap();
    let traj = simulate_timeline(&best).unwrap();
    let c = template.params.cutoff;
    for s in traj.samples.iter().filter(|s| s.phase == Phase::Lesson) {
        assert!(s.u - s.z_total <= c + 1e-9, "U - Z = {} at t = {}", s.u - s.z_total, s.t);
    }
}

#[test]
fn never_below_template_or_restart_points() {
    let template = builtin_scenario("fig3").unwrap();
    let settings = OptimizerSettings::for_template(&template, 40, 9);
    let result = optimize_schedule(&template, &settings).unwrap();
    let own = evaluate_schedule(&Schedule::of_template(&template), &template).unwrap();
    assert!(result.objective >= own);
    assert_eq!(result.baseline_objective, own);
    assert_eq!(result.trace.last().copied(), Some(result.objective));
    assert_eq!(
        evaluate_schedule(&result.schedule, &template).unwrap(),
        result.objective
    );
}

#[test]
fn rerun_is_bit_equal() {
    let template = builtin_scenario("fig5").unwrap();
    let settings = OptimizerSettings::for_template(&template, 12, 5);
    let a = optimize_schedule(&template, &settings).unwrap();
    let b = optimize_schedule(&template, &settings).unwrap();
    assert_eq!(a.objective.to_bits(), b.objective.to_bits());
    assert_eq!(a, b);
    assert!(a.schedule.u.iter().all(|u| (0.0..=settings.u_max).contains(u)));
}
