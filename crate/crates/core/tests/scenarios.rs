mod support;

use support::*;
use udrive_core::compliance::{evaluate, Outcome};
use udrive_core::params::{ParamKey, Value};
use udrive_core::sim::{run_simulation, EndReason, Trace, TraceError};

fn light_at(trace: &Trace, tick: u64) -> &str {
    &trace.steps[tick as usize].planner_output.light
}

#[test]
fn empty_program_reaches_destination_on_baseline() {
    let sc = scenario("scenarios/minimal.yaml");
    let trace = run_simulation(&sc, &empty_program(), &baseline(), &[], None);
    let end = trace.end.as_ref().unwrap();
    assert_eq!(end.reason, EndReason::DestinationReached);
    assert!(end.final_position >= 480.0);
    assert!(trace.steps.iter().all(|s| s.active_rules.is_empty()));
    let report = evaluate(&trace).unwrap();
    assert_eq!(report.outcome, Outcome::Pass);
}

#[test]
fn night_beams_hand_over_with_traffic() {
    let sc = scenario("scenarios/night_traffic.yaml");
    let trace = run_simulation(&sc, &program("programs/ex2.udrv"), &baseline(), &[], Some(400));
    let base_max = baseline().baseline(ParamKey::SpeedMax).as_num().unwrap();

    // V1 is on the road from 5 s to 25 s (ticks 50..250)
    let first_seen = trace.steps.iter().find(|s| s.events.contains("vehicle_detected")).unwrap().tick;
    let gone = trace.steps.iter().find(|s| s.events.contains("vehicle_no_longer_detected")).unwrap().tick;
    assert!(first_seen < gone);
    assert_eq!(light_at(&trace, first_seen - 1), baseline().baseline(ParamKey::DeviceLightState).as_token().unwrap());
    for t in first_seen..gone {
        assert_eq!(light_at(&trace, t), "low_beam", "tick {t}");
        let s = &trace.steps[t as usize];
        assert_eq!(s.active_rules, vec!["night low beam".to_string()]);
        assert_eq!(s.params[&ParamKey::SpeedMax], Value::Num(base_max - 5.0));
    }
    // the handover happens on one tick with no conflict rejection
    let handover = &trace.steps[gone as usize];
    assert_eq!(handover.active_rules, vec!["night high beam".to_string()]);
    assert_eq!(handover.planner_output.light, "high_beam");
    assert_eq!(handover.params[&ParamKey::SpeedMax], Value::Num(base_max));
    assert!(handover.notes.iter().all(|n| !format!("{n:?}").contains("Conflict")), "{:?}", handover.notes);
    assert!(trace.steps[gone as usize..].iter().all(|s| s.planner_output.light == "high_beam"));
}

#[test]
fn scripted_stop_and_launch_at_jammed_junction() {
    let sc = scenario("scenarios/s10.yaml");
    let trace = run_simulation(&sc, &empty_program(), &baseline(), &script("scripts/ex5_stop_launch.jsonl"), None);
    // the stop issued at tick 150 takes hold at 151 and the car comes to rest
    assert!(trace.steps[150].planner_output.stop_reason.is_none());
    assert!(trace.steps[151].planner_output.stop_reason.is_some());
    let halted = trace.steps[151..451].iter().position(|s| s.scene.ego.speed == 0.0).expect("never stopped") + 151;
    assert!(trace.steps[halted..=451].iter().all(|s| s.scene.ego.speed == 0.0));
    assert!(trace.steps[halted].scene.ego.position < 200.0, "stopped past the junction entry");
    // launch at 450 releases the hold on 451
    assert!(trace.steps[451].planner_output.stop_reason.is_none());
    assert!(trace.steps.last().unwrap().scene.ego.position > trace.steps[450].scene.ego.position);
    assert_eq!(trace.end.as_ref().unwrap().reason, EndReason::DestinationReached);
}

#[test]
fn jam_rule_holds_until_the_junction_clears() {
    let sc = scenario("scenarios/s10.yaml");
    let trace = run_simulation(&sc, &program("programs/ex5.udrv"), &baseline(), &[], None);
    let report = evaluate(&trace).unwrap();
    assert_eq!(report.outcome, Outcome::Pass, "{}", report.to_table());
    // the jam lasts 40 s: the ego must not be inside the junction before then
    for s in trace.steps.iter().filter(|s| s.scene.time < 40.0) {
        assert!(s.scene.ego.position < 200.0, "entered the jammed junction at tick {}", s.tick);
    }
    assert_eq!(trace.end.as_ref().unwrap().reason, EndReason::DestinationReached);
}

#[test]
fn trajectory_limits_apply_only_when_checked() {
    let sc = scenario("scenarios/minimal.yaml");
    let limits = "rule \"limits\"\n  trigger always\n  then long_acc_range(-1, 0.5); speed_range(0, 20)\nend\n";
    let checked = format!("{limits}\nrule \"check\"\n  trigger always\n  then check_traj(true)\nend\n");

    let loose = run_simulation(&sc, &program_text(limits), &baseline(), &[], Some(400));
    let max_acc = loose.steps.iter().map(|s| s.planner_output.commanded_accel).fold(f64::MIN, f64::max);
    let max_speed = loose.steps.iter().map(|s| s.scene.ego.speed).fold(0.0, f64::max);
    assert!(max_acc > 0.5, "{max_acc}");
    assert!(max_speed > 20.5, "{max_speed}");

    let tight = run_simulation(&sc, &program_text(&checked), &baseline(), &[], Some(400));
    for s in &tight.steps[1..] {
        let a = s.planner_output.commanded_accel;
        assert!((-1.0..=0.5).contains(&a), "tick {}: accel {a}", s.tick);
        assert!(s.scene.ego.speed <= 20.5, "tick {}: {} km/h", s.tick, s.scene.ego.speed);
    }
}

#[test]
fn tick_limit_ends_in_timeout() {
    let sc = scenario("scenarios/motorway.yaml");
    let trace = run_simulation(&sc, &empty_program(), &baseline(), &[], Some(10));
    let end = trace.end.as_ref().unwrap();
    assert_eq!(end.reason, EndReason::MaxTicks);
    assert_eq!(end.ticks, 10);
    assert_eq!(trace.steps.len(), 10);
    assert_eq!(evaluate(&trace).unwrap().outcome, Outcome::Timeout);
}

#[test]
fn trace_survives_jsonl_round_trip() {
    let sc = scenario("scenarios/s8.yaml");
    let trace = run_simulation(&sc, &empty_program(), &baseline(), &script("scripts/s8_fog.jsonl"), None);
    let text = trace.to_jsonl();
    assert_eq!(text.lines().count(), trace.steps.len() + 2);
    let back = Trace::from_jsonl(&text).unwrap();
    assert_eq!(back, trace);
    assert_eq!(back.to_jsonl(), text);
    assert_eq!(evaluate(&back).unwrap(), evaluate(&trace).unwrap());
}

#[test]
fn truncated_trace_is_incomplete_or_corrupt() {
    let sc = scenario("scenarios/minimal.yaml");
    let text = run_simulation(&sc, &empty_program(), &baseline(), &[], None).to_jsonl();
    let lines: Vec<&str> = text.lines().collect();

    let no_end = lines[..lines.len() - 1].join("\n");
    let trace = Trace::from_jsonl(&no_end).unwrap();
    assert!(!trace.is_complete());
    assert!(evaluate(&trace).is_err());

    let cut = &text[..text.len() / 2];
    match Trace::from_jsonl(cut) {
        Err(TraceError::Parse { line, .. }) => assert_eq!(line, cut.lines().count()),
        other => panic!("expected a parse error, got {other:?}"),
    }
    assert!(matches!(Trace::from_jsonl(""), Err(TraceError::MissingHeader)));
}

#[test]
fn simulation_is_deterministic() {
    let sc = scenario("scenarios/s5.yaml");
    let prog = program("programs/ex4.udrv");
    let a = run_simulation(&sc, &prog, &baseline(), &[], None).to_jsonl();
    let b = run_simulation(&sc, &prog, &baseline(), &[], None).to_jsonl();
    assert_eq!(a, b);
}
