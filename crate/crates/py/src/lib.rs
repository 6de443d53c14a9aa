//! Python module `udrive`. Structured values (trace steps, reports, parameter
//! maps) cross the boundary as plain dicts and lists decoded from JSON.

use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyIndexError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

use udrive_core::bench::{run_bench, BenchConfig};
use udrive_core::catalog::{load_baseline, Catalog};
use udrive_core::compliance::{evaluate as evaluate_trace, ComplianceReport};
use udrive_core::dsl::{
    format_program, load_program, parse_online_command, parse_program, validate_program, Diagnostic, OnlineCommand,
    Program,
};
use udrive_core::params::ParameterStore;
use udrive_core::sim::scenario::Scenario;
use udrive_core::sim::{parse_script, run_simulation, ScriptedCommand, Simulation, Trace};

create_exception!(udrive, UdriveError, PyException);
create_exception!(udrive, ProgramError, UdriveError);
create_exception!(udrive, ScenarioError, UdriveError);

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| UdriveError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn render(diags: &[Diagnostic]) -> String {
    diags.iter().map(ToString::to_string).collect::<Vec<_>>().join("\n")
}

fn baseline(defaults: Option<PathBuf>) -> PyResult<ParameterStore> {
    load_baseline(defaults.as_deref()).map_err(|e| UdriveError::new_err(e.to_string()))
}

fn online(texts: &[String]) -> PyResult<Vec<OnlineCommand>> {
    texts
        .iter()
        .map(|t| parse_online_command(t, Catalog::standard()).map_err(|d| ProgramError::new_err(render(&d))))
        .collect()
}

/// A parsed and validated rule program.
#[pyclass(name = "Program", module = "udrive", frozen)]
pub struct PyProgram {
    inner: Program,
}

#[pymethods]
impl PyProgram {
    /// Parse and validate; raises ProgramError listing every error.
    #[new]
    fn new(text: &str) -> PyResult<Self> {
        let (inner, _warnings) = load_program(text).map_err(|d| ProgramError::new_err(render(&d)))?;
        Ok(PyProgram { inner })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let text = std::fs::read_to_string(&path).map_err(|e| UdriveError::new_err(format!("{}: {e}", path.display())))?;
        Self::new(&text)
    }

    #[getter]
    fn rule_names(&self) -> Vec<String> {
        self.inner.rules.iter().map(|r| r.name.clone()).collect()
    }

    /// Canonical source text.
    fn format(&self) -> String {
        format_program(&self.inner)
    }

    fn __len__(&self) -> usize {
        self.inner.rules.len()
    }

    fn __repr__(&self) -> String {
        format!("Program({:?})", self.rule_names())
    }
}

#[pyclass(name = "Scenario", module = "udrive", frozen)]
pub struct PyScenario {
    inner: Scenario,
}

#[pymethods]
impl PyScenario {
    /// Load a YAML or JSON scenario file.
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Scenario::load(&path)
            .map(|inner| PyScenario { inner })
            .map_err(|e| ScenarioError::new_err(e.to_string()))
    }

    #[staticmethod]
    fn from_yaml(text: &str) -> PyResult<Self> {
        Scenario::from_yaml(text)
            .map(|inner| PyScenario { inner })
            .map_err(|e| ScenarioError::new_err(e.to_string()))
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Scenario::from_json(text)
            .map(|inner| PyScenario { inner })
            .map_err(|e| ScenarioError::new_err(e.to_string()))
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name.clone()
    }

    #[getter]
    fn destination(&self) -> f64 {
        self.inner.destination
    }

    #[getter]
    fn route_length(&self) -> f64 {
        self.inner.route_length()
    }

    fn __repr__(&self) -> String {
        format!("Scenario({:?})", self.inner.name)
    }
}

#[pyclass(name = "Trace", module = "udrive", frozen)]
pub struct PyTrace {
    inner: Trace,
}

#[pymethods]
impl PyTrace {
    #[staticmethod]
    fn from_jsonl(text: &str) -> PyResult<Self> {
        Trace::from_jsonl(text).map(|inner| PyTrace { inner }).map_err(|e| UdriveError::new_err(e.to_string()))
    }

    fn to_jsonl(&self) -> String {
        self.inner.to_jsonl()
    }

    #[getter]
    fn complete(&self) -> bool {
        self.inner.is_complete()
    }

    /// Why the run ended, e.g. "destination_reached"; None if incomplete.
    #[getter]
    fn end_reason<'py>(&self, py: Python<'py>) -> PyResult<Option<Bound<'py, PyAny>>> {
        self.inner.end.as_ref().map(|e| to_py(py, &e.reason)).transpose()
    }

    #[getter]
    fn end<'py>(&self, py: Python<'py>) -> PyResult<Option<Bound<'py, PyAny>>> {
        self.inner.end.as_ref().map(|e| to_py(py, e)).transpose()
    }

    /// Ego speed per tick, km/h.
    #[getter]
    fn speeds(&self) -> Vec<f64> {
        self.inner.steps.iter().map(|s| s.scene.ego.speed).collect()
    }

    /// Ego position per tick, metres along the route.
    #[getter]
    fn positions(&self) -> Vec<f64> {
        self.inner.steps.iter().map(|s| s.scene.ego.position).collect()
    }

    /// One recorded step as a dict; negative indices count from the end.
    fn step<'py>(&self, py: Python<'py>, index: isize) -> PyResult<Bound<'py, PyAny>> {
        let n = self.inner.steps.len() as isize;
        let i = if index < 0 { index + n } else { index };
        if !(0..n).contains(&i) {
            return Err(PyIndexError::new_err(format!("step {index} out of range for {n} steps")));
        }
        to_py(py, &self.inner.steps[i as usize])
    }

    fn __len__(&self) -> usize {
        self.inner.steps.len()
    }
}

#[pyclass(name = "Report", module = "udrive", frozen)]
pub struct PyReport {
    inner: ComplianceReport,
}

#[pymethods]
impl PyReport {
    /// "pass", "violation", "collision" or "timeout".
    #[getter]
    fn outcome(&self) -> &'static str {
        self.inner.outcome.as_str()
    }

    #[getter]
    fn checks<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.checks)
    }

    /// Robustness of one check; None when it did not apply.
    fn robustness(&self, law: &str) -> PyResult<Option<f64>> {
        let c = self.inner.check(law).ok_or_else(|| PyValueError::new_err(format!("no check named {law}")))?;
        Ok(c.applicable().then_some(c.robustness))
    }

    fn violated(&self, law: &str) -> PyResult<bool> {
        let c = self.inner.check(law).ok_or_else(|| PyValueError::new_err(format!("no check named {law}")))?;
        Ok(c.violated)
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    fn table(&self) -> String {
        self.inner.to_table()
    }

    fn __repr__(&self) -> String {
        format!("Report(outcome={:?})", self.inner.outcome.as_str())
    }
}

/// Tick-by-tick simulation for interactive use.
#[pyclass(name = "Simulation", module = "udrive")]
pub struct PySimulation {
    inner: Simulation,
    steps: Vec<udrive_core::sim::TraceStep>,
}

#[pymethods]
impl PySimulation {
    #[new]
    #[pyo3(signature = (scenario, program=None, max_ticks=None, defaults=None))]
    fn new(
        scenario: &PyScenario,
        program: Option<&PyProgram>,
        max_ticks: Option<u64>,
        defaults: Option<PathBuf>,
    ) -> PyResult<Self> {
        let program = program.map(|p| p.inner.clone()).unwrap_or_default();
        let inner = Simulation::new(scenario.inner.clone(), program, baseline(defaults)?, max_ticks);
        Ok(PySimulation { inner, steps: Vec::new() })
    }

    /// Advance one tick with the given online commands, which apply at this
    /// tick. Returns the recorded step, or None once the run has ended.
    #[pyo3(signature = (commands=Vec::new()))]
    fn step<'py>(&mut self, py: Python<'py>, commands: Vec<String>) -> PyResult<Option<Bound<'py, PyAny>>> {
        let cmds = online(&commands)?;
        match self.inner.step(&cmds) {
            None => Ok(None),
            Some(step) => {
                let out = to_py(py, &step)?;
                self.steps.push(step);
                Ok(Some(out))
            }
        }
    }

    #[getter]
    fn next_tick(&self) -> u64 {
        self.inner.next_tick()
    }

    #[getter]
    fn finished(&self) -> bool {
        self.inner.is_finished()
    }

    #[getter]
    fn active_rules(&self) -> Vec<String> {
        self.inner.engine().active_names()
    }

    /// Everything recorded so far.
    fn trace(&self) -> PyTrace {
        PyTrace {
            inner: Trace {
                header: self.inner.header().clone(),
                steps: self.steps.clone(),
                end: self.inner.end().cloned(),
            },
        }
    }
}

/// Diagnostics for program text as dicts with severity, code, message, span.
#[pyfunction]
fn lint<'py>(py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyAny>> {
    let diags = match parse_program(text) {
        Ok(p) => validate_program(&p, Catalog::standard()),
        Err(d) => d,
    };
    to_py(py, &diags)
}

/// Canonical layout of program text; raises ProgramError on syntax errors.
#[pyfunction]
#[pyo3(name = "format")]
fn format_text(text: &str) -> PyResult<String> {
    parse_program(text).map(|p| format_program(&p)).map_err(|d| ProgramError::new_err(render(&d)))
}

/// Canonical text of one online command.
#[pyfunction]
fn parse_command(text: &str) -> PyResult<String> {
    Ok(online(&[text.to_string()])?[0].to_string())
}

/// The baseline parameter set, from `defaults`, $UDRIVE_DEFAULTS or built in.
#[pyfunction]
#[pyo3(signature = (defaults=None))]
fn baseline_parameters<'py>(py: Python<'py>, defaults: Option<PathBuf>) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &baseline(defaults)?.snapshot())
}

/// Run a scenario to completion. `script` is a list of (tick, command)
/// pairs; a command stamped at tick t takes effect at tick t + 1.
#[pyfunction]
#[pyo3(signature = (scenario, program=None, script=Vec::new(), max_ticks=None, defaults=None))]
fn run(
    scenario: &PyScenario,
    program: Option<&PyProgram>,
    script: Vec<(u64, String)>,
    max_ticks: Option<u64>,
    defaults: Option<PathBuf>,
) -> PyResult<PyTrace> {
    let mut commands = Vec::with_capacity(script.len());
    for (tick, text) in script {
        commands.push(ScriptedCommand { tick, command: online(&[text])?.remove(0) });
    }
    commands.sort_by_key(|c| c.tick);
    let program = program.map(|p| p.inner.clone()).unwrap_or_default();
    let trace = run_simulation(&scenario.inner, &program, &baseline(defaults)?, &commands, max_ticks);
    Ok(PyTrace { inner: trace })
}

/// Parse a JSON-lines command script into (tick, command) pairs.
#[pyfunction]
fn load_script(text: &str) -> PyResult<Vec<(u64, String)>> {
    let script = parse_script(text, Catalog::standard()).map_err(|e| ProgramError::new_err(e.to_string()))?;
    Ok(script.into_iter().map(|c| (c.tick, c.command.to_string())).collect())
}

/// Score a complete trace against the built-in traffic-rule checks.
#[pyfunction]
fn evaluate(trace: &PyTrace) -> PyResult<PyReport> {
    evaluate_trace(&trace.inner)
        .map(|inner| PyReport { inner })
        .map_err(|e| UdriveError::new_err(e.to_string()))
}

#[pyfunction]
#[pyo3(name = "bench", signature = (max_rules=20, actions_per_rule=3, max_actions=10, repetitions=200))]
fn bench_parser<'py>(
    py: Python<'py>,
    max_rules: usize,
    actions_per_rule: usize,
    max_actions: usize,
    repetitions: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg = BenchConfig { max_rules, actions_per_rule, max_actions, repetitions };
    let report = py.detach(|| run_bench(&cfg)).map_err(|e| PyValueError::new_err(e.to_string()))?;
    to_py(py, &report)
}

#[pymodule]
pub fn udrive(m: &Bound<'_, PyModule>) -> PyResult<()> {
    let py = m.py();
    m.add("UdriveError", py.get_type::<UdriveError>())?;
    m.add("ProgramError", py.get_type::<ProgramError>())?;
    m.add("ScenarioError", py.get_type::<ScenarioError>())?;
    m.add_class::<PyProgram>()?;
    m.add_class::<PyScenario>()?;
    m.add_class::<PyTrace>()?;
    m.add_class::<PyReport>()?;
    m.add_class::<PySimulation>()?;
    m.add_function(wrap_pyfunction!(lint, m)?)?;
    m.add_function(wrap_pyfunction!(format_text, m)?)?;
    m.add_function(wrap_pyfunction!(parse_command, m)?)?;
    m.add_function(wrap_pyfunction!(baseline_parameters, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(load_script, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(bench_parser, m)?)?;
    Ok(())
}
