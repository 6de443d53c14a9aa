use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use udrive_bridge::ServeConfig;
use udrive_core::bench::{run_bench, BenchConfig};
use udrive_core::catalog::{load_baseline, Catalog};
use udrive_core::compliance::{evaluate, ComplianceReport, Outcome};
use udrive_core::dsl::{format_program, has_errors, load_program, parse_program, validate_program, Program};
use udrive_core::params::ParameterStore;
use udrive_core::sim::scenario::Scenario;
use udrive_core::sim::{parse_script, run_simulation, EndReason, Trace};

pub const OK: i32 = 0;
pub const FAIL: i32 = 1;
pub const ERROR: i32 = 2;

const PROGRAM_EXT: &str = "udrv";

pub struct SimFiles {
    pub scenario: PathBuf,
    pub programs: Vec<PathBuf>,
    pub max_ticks: Option<u64>,
    pub defaults: Option<PathBuf>,
}

pub struct ServeOptions {
    pub addr: SocketAddr,
    pub pace: f64,
    pub start_paused: bool,
    pub pause_at: BTreeSet<u64>,
    pub static_dir: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

fn read(path: &Path) -> Result<String, i32> {
    fs::read_to_string(path).map_err(|e| {
        eprintln!("error: cannot read {}: {e}", path.display());
        ERROR
    })
}

fn collect_programs(dir: &Path, out: &mut Vec<PathBuf>) -> std::io::Result<()> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)?.map(|e| e.map(|e| e.path())).collect::<Result<_, _>>()?;
    entries.sort();
    for p in entries {
        if p.is_dir() {
            collect_programs(&p, out)?;
        } else if p.extension().is_some_and(|e| e == PROGRAM_EXT) {
            out.push(p);
        }
    }
    Ok(())
}

/// Files named on the command line, with directories expanded.
fn expand(paths: &[PathBuf]) -> Result<Vec<PathBuf>, i32> {
    let mut files = Vec::new();
    for p in paths {
        if p.is_dir() {
            collect_programs(p, &mut files).map_err(|e| {
                eprintln!("error: cannot list {}: {e}", p.display());
                ERROR
            })?;
        } else {
            files.push(p.clone());
        }
    }
    Ok(files)
}

pub fn lint(paths: &[PathBuf]) -> i32 {
    let files = match expand(paths) {
        Ok(f) => f,
        Err(code) => return code,
    };
    let (mut errors, mut warnings, mut unreadable) = (0, 0, 0);
    for f in &files {
        let Ok(text) = read(f) else {
            unreadable += 1;
            continue;
        };
        let diags = match parse_program(&text) {
            Ok(p) => validate_program(&p, Catalog::standard()),
            Err(d) => d,
        };
        for d in &diags {
            println!("{}", d.render(&f.display().to_string()));
            if d.is_error() {
                errors += 1;
            } else {
                warnings += 1;
            }
        }
    }
    println!("{} file(s) checked: {errors} error(s), {warnings} warning(s)", files.len());
    if unreadable > 0 {
        ERROR
    } else if errors > 0 {
        FAIL
    } else {
        OK
    }
}

pub fn fmt(paths: &[PathBuf], check: bool, write: bool, drop_comments: bool) -> i32 {
    let files = match expand(paths) {
        Ok(f) => f,
        Err(code) => return code,
    };
    let mut code = OK;
    for f in &files {
        let name = f.display().to_string();
        let text = match read(f) {
            Ok(t) => t,
            Err(c) => {
                code = code.max(c);
                continue;
            }
        };
        let program = match parse_program(&text) {
            Ok(p) => p,
            Err(diags) => {
                for d in diags {
                    println!("{}", d.render(&name));
                }
                code = code.max(FAIL);
                continue;
            }
        };
        let formatted = format_program(&program);
        if check {
            if formatted != text {
                println!("would reformat {name}");
                code = code.max(FAIL);
            }
        } else if write {
            if formatted == text {
                continue;
            }
            if text.contains('#') && !drop_comments {
                eprintln!("{name}: not rewritten, formatting would remove its comments (use --drop-comments)");
                code = code.max(FAIL);
                continue;
            }
            if let Err(e) = fs::write(f, &formatted) {
                eprintln!("error: cannot write {name}: {e}");
                code = ERROR;
            } else {
                println!("reformatted {name}");
            }
        } else {
            if files.len() > 1 {
                println!("# {name}");
            }
            print!("{formatted}");
        }
    }
    code
}

struct Loaded {
    scenario: Scenario,
    program: Program,
    baseline: ParameterStore,
}

fn load(files: &SimFiles) -> Result<Loaded, i32> {
    let scenario = Scenario::load(&files.scenario).map_err(|e| {
        eprintln!("error: {}: {e}", files.scenario.display());
        ERROR
    })?;
    let mut program = Program::default();
    for path in &files.programs {
        let name = path.display().to_string();
        match load_program(&read(path)?) {
            Ok((p, warnings)) => {
                for w in warnings {
                    eprintln!("{}", w.render(&name));
                }
                program.rules.extend(p.rules);
            }
            Err(diags) => {
                for d in diags {
                    eprintln!("{}", d.render(&name));
                }
                return Err(ERROR);
            }
        }
    }
    if files.programs.len() > 1 {
        let combined = validate_program(&program, Catalog::standard());
        if has_errors(&combined) {
            for d in combined.iter().filter(|d| d.is_error()) {
                eprintln!("{}", d.render("(combined programs)"));
            }
            return Err(ERROR);
        }
    }
    let baseline = load_baseline(files.defaults.as_deref()).map_err(|e| {
        eprintln!("error: {e}");
        ERROR
    })?;
    Ok(Loaded { scenario, program, baseline })
}

fn end_reason(r: EndReason) -> &'static str {
    match r {
        EndReason::DestinationReached => "destination reached",
        EndReason::Collision => "collision",
        EndReason::MaxTicks => "tick limit reached",
    }
}

fn summary(trace: &Trace, report: &ComplianceReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "scenario: {}", trace.header.scenario);
    if let Some(end) = &trace.end {
        let _ = write!(s, "end: {} after {} ticks at {:.3} m", end_reason(end.reason), end.ticks, end.final_position);
        if let Some(id) = &end.collided_with {
            let _ = write!(s, " (hit {id})");
        }
        s.push('\n');
    }
    s.push_str(&report.to_table());
    s
}

fn write_outputs(dir: &Path, trace: &Trace, report: &ComplianceReport) -> Result<(), i32> {
    let fail = |what: &str, e: std::io::Error| {
        eprintln!("error: cannot write {what} in {}: {e}", dir.display());
        ERROR
    };
    fs::create_dir_all(dir).map_err(|e| fail("output directory", e))?;
    let file = fs::File::create(dir.join("trace.jsonl")).map_err(|e| fail("trace.jsonl", e))?;
    let mut w = BufWriter::new(file);
    trace.write_jsonl(&mut w).and_then(|_| w.flush()).map_err(|e| fail("trace.jsonl", e))?;
    fs::write(dir.join("compliance.json"), report.to_json() + "\n").map_err(|e| fail("compliance.json", e))?;
    fs::write(dir.join("summary.txt"), summary(trace, report)).map_err(|e| fail("summary.txt", e))?;
    Ok(())
}

fn verdict(report: &ComplianceReport) -> i32 {
    if report.outcome == Outcome::Pass {
        OK
    } else {
        FAIL
    }
}

pub fn run(files: &SimFiles, script: Option<&Path>, out: &Path) -> i32 {
    let loaded = match load(files) {
        Ok(l) => l,
        Err(code) => return code,
    };
    let commands = match script {
        None => Vec::new(),
        Some(path) => {
            let text = match read(path) {
                Ok(t) => t,
                Err(code) => return code,
            };
            match parse_script(&text, Catalog::standard()) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {}: {e}", path.display());
                    return ERROR;
                }
            }
        }
    };
    let trace = run_simulation(&loaded.scenario, &loaded.program, &loaded.baseline, &commands, files.max_ticks);
    let report = evaluate(&trace).expect("simulation traces are complete");
    if let Err(code) = write_outputs(out, &trace, &report) {
        return code;
    }
    print!("{}", summary(&trace, &report));
    verdict(&report)
}

pub fn replay(path: &Path, json: bool) -> i32 {
    let file = match fs::File::open(path) {
        Ok(f) => f,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", path.display());
            return ERROR;
        }
    };
    let trace = match Trace::read_jsonl(BufReader::new(file)) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {}: {e}", path.display());
            return ERROR;
        }
    };
    let report = match evaluate(&trace) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {}: {e}", path.display());
            return ERROR;
        }
    };
    if json {
        println!("{}", report.to_json());
    } else {
        print!("{}", summary(&trace, &report));
    }
    verdict(&report)
}

pub fn bench(cfg: &BenchConfig, json: bool) -> i32 {
    let report = match run_bench(cfg) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ERROR;
        }
    };
    if json {
        println!("{}", serde_json::to_string_pretty(&report).expect("bench report serializes"));
        return OK;
    }
    println!("{:>5}  {:>7}  {:>10}  {:>10}  {:>8}", "rules", "actions", "mean ms", "max ms", "outliers");
    for p in report.by_rules.iter().chain(&report.by_actions) {
        println!(
            "{:>5}  {:>7}  {:>10.4}  {:>10.4}  {:>8}",
            p.rules, p.actions, p.mean_ms, p.max_ms, p.outliers
        );
    }
    for (what, f) in [("rules", report.rules_fit), ("actions", report.actions_fit)] {
        println!("fit over {what}: {:.5} ms per unit + {:.5} ms (r^2 {:.3})", f.slope, f.intercept, f.r2);
    }
    OK
}

pub fn serve(files: &SimFiles, opts: ServeOptions) -> i32 {
    let loaded = match load(files) {
        Ok(l) => l,
        Err(code) => return code,
    };
    let mut cfg = ServeConfig::new(loaded.scenario, loaded.program, loaded.baseline);
    cfg.max_ticks = files.max_ticks;
    cfg.pace = opts.pace;
    cfg.start_paused = opts.start_paused;
    cfg.pause_at = opts.pause_at;
    cfg.static_dir = opts.static_dir;

    let runtime = match tokio::runtime::Runtime::new() {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: cannot start runtime: {e}");
            return ERROR;
        }
    };
    let result = runtime.block_on(async {
        let server = udrive_bridge::bind(cfg, opts.addr).await?;
        println!("listening on ws://{}/ws", server.local_addr());
        let _ = std::io::stdout().flush();
        server.finished().await
    });
    let outcome = match result {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return ERROR;
        }
    };
    if let Some(dir) = &opts.out {
        if let Err(code) = write_outputs(dir, &outcome.trace, &outcome.report) {
            return code;
        }
    }
    print!("{}", summary(&outcome.trace, &outcome.report));
    verdict(&outcome.report)
}
