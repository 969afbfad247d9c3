use fishswim_core::baseline::{heading_error, BaselineConfig, WaypointController};
use fishswim_core::env::{to_body_frame, EnvConfig, FishEnv, TrajectoryRecord};
use fishswim_core::harness::{eval_env_config, run_episode, EvalConfig, Task};

fn error_at(r: &TrajectoryRecord) -> f64 {
    heading_error(to_body_frame([r.pose[0], r.pose[1]], r.pose[2], r.target))
}

#[test]
fn baseline_turns_around_toward_a_target_behind() {
    let eval = EvalConfig {
        max_time: 16.0,
        ..Default::default()
    };
    let cfg = eval_env_config(&EnvConfig::desk(96, 1.8), &eval);
    let limit = cfg.sim.morphology.joint_limit;
    let mut env = FishEnv::new(cfg).unwrap();
    let mut ctrl = WaypointController::new(BaselineConfig::default());
    let out = run_episode(&mut env, &mut ctrl, &eval, Task::Uturn, 11).unwrap();
    let tr = &out.trajectory;

    assert!(error_at(&tr[0]).abs() > 170f64.to_radians());
    let turned = tr.iter().position(|r| error_at(r).abs() < 30f64.to_radians());
    let turned = turned.expect("baseline never faced the target");
    println!("faced the target after {:.2} s", tr[turned].t);

    let radius = out.metrics.min_turning_radius.unwrap();
    println!("min turning radius {radius:.3} m");
    assert!(radius > 0.0 && radius.is_finite());

    for r in tr {
        assert!(r.joints_desired.iter().all(|j| j.abs() <= limit + 1e-12));
    }
}
