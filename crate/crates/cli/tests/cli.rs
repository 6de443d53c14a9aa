use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures").join(rel)
}

fn udrive(args: &[&str]) -> Output {
    udrive_env(args, &[])
}

fn udrive_env(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_udrive"));
    cmd.args(args).env_remove("UDRIVE_DEFAULTS");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let path = dir.path().join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn run_scenario(out: &Path, scenario: &str, extra: &[&str]) -> Output {
    let sc = fixture(&format!("scenarios/{scenario}.yaml"));
    let mut args = vec!["run", "--scenario", p(&sc), "--out", p(out)];
    args.extend_from_slice(extra);
    udrive(&args)
}

fn compliance(out: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(out.join("compliance.json")).unwrap()).unwrap()
}

// ------------------------------------------------------------------ lint

#[test]
fn lint_accepts_a_valid_program() {
    let o = udrive(&["lint", p(&fixture("programs/ex1.udrv"))]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    assert!(stdout(&o).contains("1 file(s) checked: 0 error(s)"));
}

#[test]
fn lint_reports_missing_end() {
    let dir = TempDir::new().unwrap();
    let f = write(&dir, "broken.udrv", "rule \"r\"\n  trigger always\n  then max_speed(40)\n");
    let o = udrive(&["lint", p(&f)]);
    assert_eq!(code(&o), 1);
    assert!(stdout(&o).contains("error[MissingEnd]"), "{}", stdout(&o));
    assert!(stdout(&o).contains("broken.udrv:"));
}

#[test]
fn lint_aggregates_a_directory() {
    let dir = TempDir::new().unwrap();
    let sources: Vec<PathBuf> = std::fs::read_dir(fixture("programs")).unwrap().map(|e| e.unwrap().path()).collect();
    for i in 0..20 {
        let text = std::fs::read_to_string(&sources[i % sources.len()]).unwrap();
        write(&dir, &format!("p{i:02}.udrv"), &text);
    }
    write(&dir, "notes.txt", "not a program");
    let bad = dir.path().join("nested");
    std::fs::create_dir(&bad).unwrap();
    std::fs::write(bad.join("bad.udrv"), "rule \"x\" trigger always then fly(1) end").unwrap();

    let o = udrive(&["lint", p(dir.path())]);
    assert_eq!(code(&o), 1);
    let out = stdout(&o);
    assert!(out.contains("21 file(s) checked: 1 error(s)"), "{out}");
    assert!(out.contains("bad.udrv:1:"));
}

#[test]
fn lint_missing_file_is_operational_error() {
    let o = udrive(&["lint", "/definitely/not/here.udrv"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("cannot read"));
}

// ------------------------------------------------------------------ fmt

#[test]
fn fmt_prints_checks_and_rewrites() {
    let dir = TempDir::new().unwrap();
    let messy = "rule   \"a\" trigger always condition is_night then set_light(low_beam);max_speed(40) end";
    let f = write(&dir, "a.udrv", messy);

    let printed = udrive(&["fmt", p(&f)]);
    assert_eq!(code(&printed), 0);
    let canonical = stdout(&printed);
    assert!(canonical.starts_with("rule \"a\"\n"), "{canonical}");

    assert_eq!(code(&udrive(&["fmt", "--check", p(&f)])), 1);
    let w = udrive(&["fmt", "--write", p(&f)]);
    assert_eq!(code(&w), 0);
    assert_eq!(std::fs::read_to_string(&f).unwrap(), canonical);
    assert_eq!(code(&udrive(&["fmt", "--check", p(&f)])), 0);
}

#[test]
fn fmt_write_keeps_commented_files_unless_told() {
    let dir = TempDir::new().unwrap();
    let text = "# keep me\nrule \"a\" trigger always then max_speed(40) end\n";
    let f = write(&dir, "c.udrv", text);
    let o = udrive(&["fmt", "--write", p(&f)]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("--drop-comments"));
    assert_eq!(std::fs::read_to_string(&f).unwrap(), text);
    assert_eq!(code(&udrive(&["fmt", "--write", "--drop-comments", p(&f)])), 0);
    assert!(!std::fs::read_to_string(&f).unwrap().contains('#'));
}

#[test]
fn fmt_reports_syntax_errors() {
    let dir = TempDir::new().unwrap();
    let f = write(&dir, "bad.udrv", "rule \"a\" trigger always then");
    let o = udrive(&["fmt", p(&f)]);
    assert_eq!(code(&o), 1);
    assert!(stdout(&o).contains("error["));
}

// ------------------------------------------------------------------ run

#[test]
fn run_s5_flips_with_the_intersection_program() {
    let dir = TempDir::new().unwrap();
    let base = dir.path().join("base");
    let o = run_scenario(&base, "s5", &[]);
    assert_eq!(code(&o), 1, "{}", stdout(&o));
    assert_eq!(compliance(&base)["outcome"], "violation");
    for f in ["trace.jsonl", "compliance.json", "summary.txt"] {
        assert!(base.join(f).is_file(), "{f}");
    }
    assert!(stdout(&o).contains("law38_sub3"));

    let fixed = dir.path().join("fixed");
    let o = run_scenario(&fixed, "s5", &["--program", p(&fixture("programs/ex4.udrv"))]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    assert_eq!(compliance(&fixed)["outcome"], "pass");
}

#[test]
fn run_with_script_and_tick_limit() {
    let dir = TempDir::new().unwrap();
    let script = fixture("scripts/s8_fog.jsonl");
    let o = run_scenario(dir.path(), "s8", &["--script", p(&script)]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));

    let o = run_scenario(dir.path(), "s8", &["--max-ticks", "10"]);
    assert_eq!(code(&o), 1);
    assert_eq!(compliance(dir.path())["outcome"], "timeout");
    let trace = std::fs::read_to_string(dir.path().join("trace.jsonl")).unwrap();
    assert_eq!(trace.lines().count(), 12);
}

#[test]
fn identical_runs_write_identical_traces() {
    let dir = TempDir::new().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let prog = fixture("programs/ex2.udrv");
    for out in [&a, &b] {
        run_scenario(out, "night_traffic", &["--program", p(&prog)]);
    }
    let read = |d: &Path| std::fs::read(d.join("trace.jsonl")).unwrap();
    assert_eq!(read(&a), read(&b));
    assert!(!read(&a).is_empty());
}

#[test]
fn run_combines_programs_and_rejects_clashes() {
    let dir = TempDir::new().unwrap();
    let a = fixture("programs/ex1.udrv");
    let b = fixture("programs/ex2.udrv");
    let o = run_scenario(dir.path(), "minimal", &["-p", p(&a), "-p", p(&b)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let header = std::fs::read_to_string(dir.path().join("trace.jsonl")).unwrap();
    let header: serde_json::Value = serde_json::from_str(header.lines().next().unwrap()).unwrap();
    assert_eq!(header["rules"].as_array().unwrap().len(), 3);

    let o = run_scenario(dir.path(), "minimal", &["-p", p(&a), "-p", p(&a)]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("DuplicateRuleName"), "{}", stderr(&o));
}

#[test]
fn run_input_errors_exit_two() {
    let dir = TempDir::new().unwrap();
    let bad_sc = write(&dir, "bad.yaml", "name: x\nroute: []\ndestination: 10\n");
    let o = udrive(&["run", "--scenario", p(&bad_sc), "--out", p(dir.path())]);
    assert_eq!(code(&o), 2);

    let bad_prog = write(&dir, "bad.udrv", "rule \"a\" trigger always then max_speed(-5) end");
    assert_eq!(code(&run_scenario(dir.path(), "minimal", &["-p", p(&bad_prog)])), 2);

    let bad_script = write(&dir, "bad.jsonl", "{\"tick\": 3, \"command\": \"warp(9)\"}\n");
    assert_eq!(code(&run_scenario(dir.path(), "minimal", &["--script", p(&bad_script)])), 2);

    let bad_defaults = write(&dir, "defaults.toml", "[speed]\nmax = \"fast\"\n");
    assert_eq!(code(&run_scenario(dir.path(), "minimal", &["--defaults", p(&bad_defaults)])), 2);
}

#[test]
fn defaults_come_from_environment() {
    let dir = TempDir::new().unwrap();
    let builtin = std::fs::read_to_string(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/defaults.toml")).unwrap();
    let custom = write(&dir, "d.toml", &builtin.replace("cruise = 30.0", "cruise = 44.0"));
    let sc = fixture("scenarios/minimal.yaml");
    let out = dir.path().join("o");
    let o = udrive_env(&["run", "-s", p(&sc), "-o", p(&out)], &[("UDRIVE_DEFAULTS", p(&custom))]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let trace = std::fs::read_to_string(out.join("trace.jsonl")).unwrap();
    let step: serde_json::Value = serde_json::from_str(trace.lines().nth(1).unwrap()).unwrap();
    assert_eq!(step["params"]["speed.cruise"], 44.0);

    let o = udrive_env(&["run", "-s", p(&sc), "-o", p(&out)], &[("UDRIVE_DEFAULTS", "/no/such/defaults.toml")]);
    assert_eq!(code(&o), 2);
}

// ------------------------------------------------------------------ replay

#[test]
fn replay_scores_stored_traces() {
    let dir = TempDir::new().unwrap();
    let (pass, fail) = (dir.path().join("pass"), dir.path().join("fail"));
    run_scenario(&pass, "minimal", &[]);
    run_scenario(&fail, "s5", &[]);

    let o = udrive(&["replay", p(&pass.join("trace.jsonl"))]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("outcome: pass"));
    assert_eq!(stdout(&o), std::fs::read_to_string(pass.join("summary.txt")).unwrap());

    let o = udrive(&["replay", "--json", p(&fail.join("trace.jsonl"))]);
    assert_eq!(code(&o), 1);
    let replayed: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(replayed, compliance(&fail));
}

#[test]
fn replay_rejects_truncated_traces() {
    let dir = TempDir::new().unwrap();
    run_scenario(dir.path(), "minimal", &[]);
    let text = std::fs::read_to_string(dir.path().join("trace.jsonl")).unwrap();

    let cut = write(&dir, "cut.jsonl", &text[..text.len() / 3]);
    let o = udrive(&["replay", p(&cut)]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("line "), "{}", stderr(&o));

    let lines: Vec<&str> = text.lines().collect();
    let no_end = write(&dir, "no_end.jsonl", &lines[..lines.len() - 1].join("\n"));
    let o = udrive(&["replay", p(&no_end)]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("termination"));
}

// ------------------------------------------------------------------ bench

#[test]
fn bench_reports_and_validates_repetitions() {
    let o = udrive(&["bench", "--max-rules", "3", "--max-actions", "4", "--repetitions", "5", "--json"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(report["by_rules"].as_array().unwrap().len(), 3);
    assert_eq!(report["by_actions"].as_array().unwrap().len(), 4);
    assert!(report["rules_fit"]["slope"].is_number());

    let o = udrive(&["bench", "--repetitions", "0"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("repetitions"));
}

// ------------------------------------------------------------------ serve

#[test]
fn serve_without_clients_matches_run() {
    let dir = TempDir::new().unwrap();
    let (served, ran) = (dir.path().join("served"), dir.path().join("ran"));
    let sc = fixture("scenarios/minimal.yaml");
    let prog = fixture("programs/ex1.udrv");
    let o = udrive(&[
        "serve", "-s", p(&sc), "-p", p(&prog), "--port", "0", "--pace", "100000", "--out", p(&served),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).starts_with("listening on ws://127.0.0.1:"));
    run_scenario(&ran, "minimal", &["-p", p(&prog)]);
    let read = |d: &Path| std::fs::read_to_string(d.join("trace.jsonl")).unwrap();
    assert_eq!(read(&served), read(&ran));
}

#[test]
fn serve_bind_failure_exits_two() {
    let holder = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let port = holder.local_addr().unwrap().port().to_string();
    let sc = fixture("scenarios/minimal.yaml");
    let o = udrive(&["serve", "-s", p(&sc), "--port", &port]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("cannot bind"));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(code(&udrive(&["frobnicate"])), 2);
    assert_eq!(code(&udrive(&["run"])), 2);
    assert!(stdout(&udrive(&["--help"])).contains("replay"));
}
