use pyo3::prelude::*;
use pyo3::types::PyDict;
use std::ffi::CString;

fn with_module<R>(f: impl for<'py> FnOnce(Python<'py>, &Bound<'py, PyDict>) -> R) -> R {
    static INIT: std::sync::Once = std::sync::Once::new();
    INIT.call_once(|| {
        pyo3::append_to_inittab!(udrive);
        Python::initialize();
    });
    Python::attach(|py| {
        let globals = PyDict::new(py);
        globals.set_item("udrive", py.import("udrive").unwrap()).unwrap();
        globals.set_item("fixtures", concat!(env!("CARGO_MANIFEST_DIR"), "/../core/fixtures")).unwrap();
        f(py, &globals)
    })
}

fn eval(code: &str) -> String {
    with_module(|py, g| {
        let code = CString::new(code).unwrap();
        py.eval(&code, Some(g), None).unwrap().str().unwrap().to_string()
    })
}

use ::udrive::udrive;

#[test]
fn program_round_trips_through_python() {
    let names = eval(r#"udrive.Program('rule "a"\n  trigger always\n  then stop\nend\n').rule_names"#);
    assert_eq!(names, "['a']");
}

#[test]
fn program_errors_raise_program_error() {
    assert_eq!(eval("udrive.ProgramError.__mro__[1].__name__"), "UdriveError");
    with_module(|py, g| {
        let err = py.eval(c"udrive.Program('rule')", Some(g), None).unwrap_err();
        assert!(err.is_instance_of::<pyo3::exceptions::PyException>(py));
        assert!(err.value(py).get_type().name().unwrap().to_string().contains("ProgramError"));
    });
}

#[test]
fn python_run_matches_rust_run() {
    let from_py = eval(
        "udrive.run(udrive.Scenario.load(fixtures + '/scenarios/red_v40.yaml'), \
         udrive.Program('rule \"g\"\\n  trigger always\\n  then stop_dist(2)\\nend\\n')).to_jsonl()",
    );
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures");
    let scenario = udrive_core::sim::scenario::Scenario::load(&dir.join("scenarios/red_v40.yaml")).unwrap();
    let (program, _) = udrive_core::dsl::load_program("rule \"g\"\n  trigger always\n  then stop_dist(2)\nend\n").unwrap();
    let baseline = udrive_core::catalog::load_baseline(None).unwrap();
    let trace = udrive_core::sim::run_simulation(&scenario, &program, &baseline, &[], None);
    assert_eq!(from_py, trace.to_jsonl());
}

#[test]
fn report_exposes_robustness_and_not_applicable() {
    let out = eval(
        "(lambda r: (r.outcome, r.robustness('law51_sub4'), r.robustness('law52')))(udrive.evaluate(udrive.run(\
         udrive.Scenario.load(fixtures + '/scenarios/red_v40.yaml'), \
         udrive.Program('rule \"g\"\\n  trigger always\\n  then stop_dist(2)\\nend\\n'))))",
    );
    assert!(out.contains("2.0") && out.ends_with("None)"), "{out}");
}

#[test]
fn stepping_rejects_bad_commands() {
    with_module(|py, g| {
        let sim = py
            .eval(c"udrive.Simulation(udrive.Scenario.load(fixtures + '/scenarios/motorway.yaml'))", Some(g), None)
            .unwrap();
        assert!(sim.call_method1("step", (vec!["fly()"],)).is_err());
        assert_eq!(sim.getattr("next_tick").unwrap().extract::<u64>().unwrap(), 0);
        sim.call_method1("step", (vec!["max_speed(25)"],)).unwrap();
        assert_eq!(sim.getattr("next_tick").unwrap().extract::<u64>().unwrap(), 1);
    });
}
