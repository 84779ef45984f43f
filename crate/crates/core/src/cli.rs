//! Command-line front end. Exit codes: 0 ok, 1 a check failed or no quorum
//! system exists, 2 usage or format error, 3 inconclusive.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use thiserror::Error;

use crate::checkers::{worst, Report, Verdict};
use crate::gqs::{is_classical_qs, GqsVerdict, QuorumFamily};
use crate::harness::derive_seed;
use crate::history::History;
use crate::scenario::{Analysis, Mode, Overrides, Plan, Scenario, ScenarioError};
use crate::sim::{parse_jsonl, SimError, Time, Trace, TraceError, TraceLevel};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Exit {
    Ok = 0,
    Fail = 1,
    Usage = 2,
    Inconclusive = 3,
}

impl Exit {
    fn of(v: &Verdict) -> Self {
        match v {
            Verdict::Pass => Exit::Ok,
            Verdict::Fail { .. } => Exit::Fail,
            Verdict::Inconclusive { .. } => Exit::Inconclusive,
        }
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("trace: {0}")]
    Trace(#[from] TraceError),
    #[error("simulation: {0}")]
    Sim(#[from] SimError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{0}")]
    Mismatch(String),
}

impl CliError {
    fn exit(&self) -> Exit {
        match self {
            CliError::Scenario(ScenarioError::NoGqs) => Exit::Fail,
            _ => Exit::Usage,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "gqslab", version, about = "Generalized quorum systems: analysis, simulation and checking")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate declared quorums or search for a generalized quorum system.
    Check { scenario: PathBuf },
    /// Run the scenario's workload once, write the trace and check it.
    Simulate {
        scenario: PathBuf,
        #[command(flatten)]
        run: RunFlags,
        /// Trace output path (default: <scenario name>.trace.jsonl).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Record only operations, faults and protocol records.
        #[arg(long)]
        ops_only: bool,
        /// Print reports as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Run many randomized simulations with derived seeds.
    Fuzz {
        scenario: PathBuf,
        #[command(flatten)]
        run: RunFlags,
        #[arg(long)]
        runs: Option<usize>,
        /// Re-run a single run index with a full trace.
        #[arg(long)]
        replay: Option<u64>,
        /// Trace output path for --replay.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-check a stored trace against a scenario.
    Verify {
        trace: PathBuf,
        scenario: PathBuf,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Debug, Args)]
pub struct RunFlags {
    /// Seed (fuzz: base seed for derived run seeds).
    #[arg(long, env = "GQSLAB_SEED")]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
    #[arg(long)]
    pub gst: Option<Time>,
    #[arg(long)]
    pub delta: Option<Time>,
    #[arg(long)]
    pub max_events: Option<u64>,
}

impl RunFlags {
    fn overrides(&self) -> Overrides {
        Overrides { seed: self.seed, mode: self.mode, gst: self.gst, delta: self.delta, max_events: self.max_events }
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn main_with(args: impl IntoIterator<Item = impl Into<OsString> + Clone>, out: &mut impl Write) -> Exit {
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { Exit::Usage } else { Exit::Ok };
            let _ = write!(out, "{}", e.render());
            return code;
        }
    };
    match execute(&cli.command, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(out, "error: {e}");
            e.exit()
        }
    }
}

pub fn execute(cmd: &Command, out: &mut impl Write) -> Result<Exit, CliError> {
    match cmd {
        Command::Check { scenario } => check(&Scenario::load(scenario)?, out),
        Command::Simulate { scenario, run, out: path, ops_only, json } => {
            let s = Scenario::load(scenario)?;
            let path = path.clone().unwrap_or_else(|| PathBuf::from(format!("{}.trace.jsonl", s.name)));
            simulate(&s, &run.overrides(), &path, !*ops_only, *json, out)
        }
        Command::Fuzz { scenario, run, runs, replay, out: path } => {
            let s = Scenario::load(scenario)?;
            fuzz(&s, scenario, run, *runs, *replay, path.as_deref(), out)
        }
        Command::Verify { trace, scenario, json } => verify(trace, &Scenario::load(scenario)?, *json, out),
    }
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.display().to_string(), source }
}

fn w(out: &mut impl Write, text: std::fmt::Arguments<'_>) {
    let _ = out.write_fmt(text);
    let _ = out.write_all(b"\n");
}

macro_rules! say {
    ($out:expr, $($t:tt)*) => { w($out, format_args!($($t)*)) };
}

fn families(s: &Scenario, reads: &QuorumFamily, writes: &QuorumFamily, out: &mut impl Write) {
    let show = |f: &QuorumFamily| f.iter().map(|q| s.show_set(q)).collect::<Vec<_>>().join(" ");
    say!(out, "  reads:  {}", show(reads));
    say!(out, "  writes: {}", show(writes));
}

fn availability_table(s: &Scenario, reads: &QuorumFamily, writes: &QuorumFamily, v: &GqsVerdict, out: &mut impl Write) {
    for (i, label) in s.pattern_names.iter().enumerate() {
        match v.availability[i] {
            Some(wit) => {
                let u = v.u_components.get(&i).map_or("undefined".to_string(), |u| s.show_set(u));
                say!(
                    out,
                    "  {label}: W={} R={} U={u}",
                    s.show_set(&writes.quorums()[wit.write]),
                    s.show_set(&reads.quorums()[wit.read])
                );
            }
            None => say!(out, "  {label}: no available write quorum reachable from a read quorum"),
        }
    }
}

pub fn check(s: &Scenario, out: &mut impl Write) -> Result<Exit, CliError> {
    say!(out, "scenario {}: {} processes, {} failure patterns", s.name, s.n(), s.system.patterns().len());
    let analysis = s.analyze()?;
    match &analysis {
        Analysis::Validated { reads, writes, verdict } => {
            say!(out, "declared quorums:");
            families(s, reads, writes, out);
            match verdict.violation {
                None => say!(out, "consistency: ok"),
                Some((r, wq)) => say!(
                    out,
                    "consistency: violated, {} and {} are disjoint",
                    s.show_set(&reads.quorums()[r]),
                    s.show_set(&writes.quorums()[wq])
                ),
            }
            say!(out, "availability:");
            availability_table(s, reads, writes, verdict, out);
            if verdict.is_valid() {
                say!(out, "verdict: valid generalized quorum system");
                if is_classical_qs(&s.system, reads, writes) {
                    say!(out, "also a classical quorum system");
                }
            } else {
                say!(out, "verdict: not a generalized quorum system");
            }
        }
        Analysis::Found(gqs, verdict) => {
            say!(out, "found quorums:");
            families(s, &gqs.reads, &gqs.writes, out);
            say!(out, "availability:");
            availability_table(s, &gqs.reads, &gqs.writes, verdict, out);
            say!(out, "verdict: a generalized quorum system exists");
        }
        Analysis::NoneExists => say!(out, "verdict: no GQS exists"),
    }
    Ok(if analysis.is_valid() { Exit::Ok } else { Exit::Fail })
}

fn print_reports(reports: &[Report], json: bool, out: &mut impl Write) {
    if json {
        say!(out, "{}", serde_json::to_string_pretty(reports).unwrap_or_default());
    } else {
        for r in reports {
            say!(out, "{r}");
        }
    }
}

fn summarize_history(s: &Scenario, h: &History, out: &mut impl Write) {
    let done = h.completed().count();
    say!(out, "operations: {} invoked, {done} returned", h.len());
    for o in h.pending() {
        say!(out, "  pending: {} at {} ({:?})", o.id, s.show_process(o.process), o.op);
    }
}

fn write_trace(trace: &Trace, path: &Path) -> Result<(), CliError> {
    std::fs::write(path, trace.to_jsonl()).map_err(io(path))
}

fn run_plan(s: &Scenario, plan: &Plan, path: Option<&Path>, json: bool, out: &mut impl Write) -> Result<Exit, CliError> {
    let (trace, reports) = plan.execute()?;
    let o = &trace.outcome;
    say!(
        out,
        "run: seed {} {:?}, {} events, ended at t={}{}",
        plan.config.seed,
        plan.config.timing,
        o.events,
        o.end_time,
        if o.exhausted { " (event budget exhausted)" } else { "" }
    );
    say!(out, "termination set: {}", s.show_set(&plan.termination));
    summarize_history(s, &trace.history, out);
    if let Some(path) = path {
        write_trace(&trace, path)?;
        say!(out, "trace: {}", path.display());
    }
    print_reports(&reports, json, out);
    let overall = worst(&reports);
    say!(out, "overall: {}", overall.label());
    Ok(Exit::of(&overall))
}

pub fn simulate(s: &Scenario, ov: &Overrides, path: &Path, full: bool, json: bool, out: &mut impl Write) -> Result<Exit, CliError> {
    let mut plan = s.plan(ov)?;
    plan.config.trace_level = if full { TraceLevel::Full } else { TraceLevel::Ops };
    run_plan(s, &plan, Some(path), json, out)
}

/// One fuzz run's result.
#[derive(Clone, Debug)]
pub struct FuzzRun {
    pub index: u64,
    pub seed: u64,
    pub verdict: Verdict,
    pub failing: Option<Report>,
}

/// Runs `runs` randomized simulations in parallel.
pub fn fuzz_runs(s: &Scenario, base: u64, runs: usize, ov: &Overrides) -> Result<Vec<FuzzRun>, CliError> {
    (0..runs as u64)
        .into_par_iter()
        .map(|index| {
            let seed = derive_seed(base, index);
            let mut plan = s.fuzz_plan(seed, ov)?;
            plan.config.trace_level = TraceLevel::Ops;
            let (_, reports) = plan.execute()?;
            let verdict = worst(&reports);
            let failing = reports.into_iter().find(|r| !r.verdict.is_pass());
            Ok(FuzzRun { index, seed, verdict, failing })
        })
        .collect()
}

fn fuzz(
    s: &Scenario,
    path: &Path,
    flags: &RunFlags,
    runs: Option<usize>,
    replay: Option<u64>,
    trace_out: Option<&Path>,
    out: &mut impl Write,
) -> Result<Exit, CliError> {
    let base = flags.seed.unwrap_or(s.run.seed);
    let ov = Overrides { seed: None, ..flags.overrides() };
    if let Some(index) = replay {
        let seed = derive_seed(base, index);
        say!(out, "replaying run {index} of base seed {base} (run seed {seed})");
        let plan = s.fuzz_plan(seed, &ov)?;
        return run_plan(s, &plan, trace_out, false, out);
    }
    let runs = runs.unwrap_or(s.fuzz.runs).max(1);
    let results = fuzz_runs(s, base, runs, &ov)?;
    let passed = results.iter().filter(|r| r.verdict.is_pass()).count();
    let failed = results.iter().filter(|r| r.verdict.is_fail()).count();
    let inconclusive = runs - passed - failed;
    say!(out, "fuzz {}: {passed}/{runs} PASS, {failed} FAIL, {inconclusive} INCONCLUSIVE (base seed {base})", s.name);
    let first_bad = results.iter().find(|r| r.verdict.is_fail()).or_else(|| results.iter().find(|r| !r.verdict.is_pass()));
    match first_bad {
        None => Ok(Exit::Ok),
        Some(r) => {
            if let Some(rep) = &r.failing {
                say!(out, "first non-passing run {} (seed {}): {rep}", r.index, r.seed);
            }
            say!(out, "repro: gqslab fuzz {} --seed {base} --replay {}", path.display(), r.index);
            Ok(if failed > 0 { Exit::Fail } else { Exit::Inconclusive })
        }
    }
}

pub fn verify(trace_path: &Path, s: &Scenario, json: bool, out: &mut impl Write) -> Result<Exit, CliError> {
    let text = std::fs::read_to_string(trace_path).map_err(io(trace_path))?;
    let parsed = parse_jsonl(&text)?;
    let object = s.object.ok_or(ScenarioError::NoObject)?;
    if let Some(recorded) = parsed.run_start.as_ref().and_then(|v| v.get("object")).and_then(|o| o.as_str()) {
        if recorded != object.to_string() {
            return Err(CliError::Mismatch(format!("trace is for a {recorded} run, scenario selects {object}")));
        }
    }
    if let Some(o) = parsed.history.ops.iter().find(|o| o.op.object() != object) {
        return Err(CliError::Mismatch(format!("{} is a {} operation, scenario selects {object}", o.id, o.op.object())));
    }
    let tset = s.termination_for_trace(parsed.run_start.as_ref())?;
    let mut reports = crate::harness::check_history(object, &parsed.history, &tset, parsed.outcome.as_ref());
    if parsed.partial_tail {
        if let Some(last) = reports.last_mut() {
            last.notes.push("the trace ends mid-line; the partial line was ignored".to_string());
        }
    }
    say!(out, "trace {}: {} events, termination set {}", trace_path.display(), parsed.events.len(), s.show_set(&tset));
    summarize_history(s, &parsed.history, out);
    print_reports(&reports, json, out);
    let overall = worst(&reports);
    say!(out, "overall: {}", overall.label());
    Ok(Exit::of(&overall))
}
