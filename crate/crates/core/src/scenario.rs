//! JSON scenario files: a fail-prone system, optional quorums, one object
//! with a run configuration and workload, and fuzzing parameters.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::Arc;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::checkers::Report;
use crate::fixtures::{threshold_quorums, threshold_system};
use crate::gqs::{find_gqs, validate_gqs, GqsError, GqsVerdict, GeneralizedQuorumSystem, QuorumFamily};
use crate::harness::{check_history, random_workload, simulate, Protocol, WorkloadShape};
use crate::history::{ObjectKind, Operation};
use crate::model::{processes, Channel, FailProneSystem, FailurePattern, ModelError, NetworkGraph, ProcessId, ProcessSet};
use crate::qaf::{QafVariant, Quorums};
use crate::sim::{
    CrashAt, DelayModel, DisconnectAt, FailureSchedule, SimConfig, SimError, Time, Timing, Trace,
    WorkloadEntry,
};

pub const SCHEMA: &str = "gqslab/scenario/1";

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("unsupported schema {0:?}, expected {SCHEMA:?}")]
    Schema(String),
    #[error("{field}: unknown process {name:?}")]
    UnknownProcess { field: String, name: String },
    #[error("{field}: bad channel {text:?}, expected \"from->to\"")]
    BadChannel { field: String, text: String },
    #[error("unknown failure pattern {0:?}")]
    UnknownPattern(String),
    #[error("the scenario has no object section")]
    NoObject,
    #[error("no generalized quorum system exists for this fail-prone system")]
    NoGqs,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Gqs(#[from] GqsError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProcessList {
    Count(usize),
    Names(Vec<String>),
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatternSpec {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub crashed: Vec<String>,
    /// Channels written `"a->b"`.
    #[serde(default)]
    pub dropped: Vec<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PatternsSpec {
    List(Vec<PatternSpec>),
    /// Every set of at most `crash_threshold` crashes, reliable channels.
    Threshold { crash_threshold: usize },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    pub processes: ProcessList,
    /// Network channels; all ordered pairs when absent.
    #[serde(default)]
    pub channels: Option<Vec<String>>,
    pub patterns: PatternsSpec,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum QuorumSpec {
    Explicit { reads: Vec<Vec<String>>, writes: Vec<Vec<String>> },
    /// Reads of size at least `n - threshold`, writes of size at least
    /// `threshold + 1`.
    Threshold { threshold: usize },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Async,
    #[default]
    Psync,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrashSpec {
    pub process: String,
    pub at: Time,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisconnectSpec {
    pub channel: String,
    pub at: Time,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSpec {
    #[serde(default)]
    pub crashes: Vec<CrashSpec>,
    #[serde(default)]
    pub disconnects: Vec<DisconnectSpec>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSpec {
    pub mode: Mode,
    pub gst: Time,
    pub delta: Time,
    pub seed: u64,
    pub delay: DelayModel,
    pub mean_delay: Time,
    pub max_drift_permille: u32,
    pub adversarial: bool,
    pub tick_interval: Time,
    pub view_constant: Time,
    pub max_events: u64,
    pub horizon: Option<Time>,
    pub variant: QafVariant,
    /// Pattern name (or `"#i"` for the i-th pattern); failure-free if absent.
    pub pattern: Option<String>,
    /// When the pattern's failures happen; all at time 0 if absent.
    pub schedule: Option<ScheduleSpec>,
    /// Processes whose operations must return; `U_f` of the pattern if
    /// absent (every process when failure-free).
    pub termination: Option<Vec<String>>,
}

impl Default for RunSpec {
    fn default() -> Self {
        RunSpec {
            mode: Mode::Psync,
            gst: 0,
            delta: 4,
            seed: 1,
            delay: DelayModel::Random,
            mean_delay: 4,
            max_drift_permille: 3000,
            adversarial: false,
            tick_interval: 2,
            view_constant: 20,
            max_events: 2_000_000,
            horizon: None,
            variant: QafVariant::Generalized,
            pattern: None,
            schedule: None,
            termination: None,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FuzzMode {
    Async,
    #[default]
    Psync,
    Mixed,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FuzzSpec {
    pub runs: usize,
    pub mode: FuzzMode,
    /// GST drawn from `[0, gst_max]`.
    pub gst_max: Time,
    /// Post-GST bound drawn from `[1, delta_max]`.
    pub delta_max: Time,
    /// Each failure of the drawn pattern happens at a time in
    /// `[0, failure_time_max]`.
    pub failure_time_max: Time,
    pub adversarial: bool,
    /// Pattern names to draw from; every pattern if absent.
    pub patterns: Option<Vec<String>>,
    pub workload: WorkloadShape,
}

impl Default for FuzzSpec {
    fn default() -> Self {
        FuzzSpec {
            runs: 100,
            mode: FuzzMode::Psync,
            gst_max: 300,
            delta_max: 4,
            failure_time_max: 100,
            adversarial: true,
            patterns: None,
            workload: WorkloadShape::default(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WorkloadSpec {
    pub at: Time,
    pub process: String,
    #[serde(flatten)]
    pub op: Operation,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub schema: String,
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub description: Option<String>,
    pub system: SystemSpec,
    #[serde(default)]
    pub quorums: Option<QuorumSpec>,
    #[serde(default)]
    pub object: Option<ObjectKind>,
    #[serde(default)]
    pub run: RunSpec,
    #[serde(default)]
    pub workload: Vec<WorkloadSpec>,
    #[serde(default)]
    pub fuzz: FuzzSpec,
}

/// A scenario with every name resolved.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub name: String,
    pub names: Vec<String>,
    pub system: FailProneSystem,
    pub graph: NetworkGraph,
    pub pattern_names: Vec<String>,
    pub quorums: Option<(QuorumFamily, QuorumFamily)>,
    pub object: Option<ObjectKind>,
    pub run: RunSpec,
    pub pattern: Option<usize>,
    pub schedule: Option<FailureSchedule>,
    pub termination: Option<ProcessSet>,
    pub workload: Vec<WorkloadEntry>,
    pub fuzz: FuzzSpec,
    pub fuzz_patterns: Vec<usize>,
}

/// Command-line values that replace scenario fields.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub mode: Option<Mode>,
    pub gst: Option<Time>,
    pub delta: Option<Time>,
    pub max_events: Option<u64>,
}

/// Everything needed for one simulation.
#[derive(Clone, Debug)]
pub struct Plan {
    pub config: SimConfig,
    pub protocol: Protocol,
    pub workload: Vec<WorkloadEntry>,
    pub termination: ProcessSet,
}

impl Plan {
    pub fn execute(&self) -> Result<(Trace, Vec<Report>), SimError> {
        let trace = simulate(&self.config, &self.protocol, &self.workload)?;
        let reports = check_history(self.protocol.object, &trace.history, &self.termination, Some(&trace.outcome));
        Ok((trace, reports))
    }
}

/// Result of analyzing the system section.
#[derive(Clone, Debug)]
pub enum Analysis {
    /// Declared quorums and their verdict.
    Validated { reads: QuorumFamily, writes: QuorumFamily, verdict: GqsVerdict },
    Found(GeneralizedQuorumSystem, GqsVerdict),
    NoneExists,
}

impl Analysis {
    pub fn is_valid(&self) -> bool {
        match self {
            Analysis::Validated { verdict, .. } => verdict.is_valid(),
            Analysis::Found(..) => true,
            Analysis::NoneExists => false,
        }
    }
}

struct Names<'a> {
    names: &'a [String],
}

impl Names<'_> {
    fn process(&self, field: &str, name: &str) -> Result<ProcessId, ScenarioError> {
        if let Some(i) = self.names.iter().position(|n| n == name) {
            return Ok(ProcessId::from_index(i));
        }
        crate::sim::parse_process(name)
            .filter(|p| p.index() < self.names.len())
            .ok_or_else(|| ScenarioError::UnknownProcess { field: field.to_string(), name: name.to_string() })
    }

    fn set(&self, field: &str, names: &[String]) -> Result<ProcessSet, ScenarioError> {
        names.iter().map(|n| self.process(field, n)).collect()
    }

    fn channel(&self, field: &str, text: &str) -> Result<Channel, ScenarioError> {
        let bad = || ScenarioError::BadChannel { field: field.to_string(), text: text.to_string() };
        let (a, b) = text.split_once("->").ok_or_else(bad)?;
        Ok(Channel::new(self.process(field, a.trim())?, self.process(field, b.trim())?))
    }
}

impl Scenario {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ScenarioError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|source| ScenarioError::Io { path: path.display().to_string(), source })?;
        let mut s = Self::from_json(&text)?;
        if s.name.is_empty() {
            s.name = path.file_stem().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        }
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let file: ScenarioFile = serde_json::from_str(text).map_err(|e| ScenarioError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        Self::resolve(file)
    }

    pub fn resolve(file: ScenarioFile) -> Result<Self, ScenarioError> {
        if file.schema != SCHEMA {
            return Err(ScenarioError::Schema(file.schema));
        }
        let names: Vec<String> = match &file.system.processes {
            ProcessList::Count(n) => processes(*n).map(|p| p.to_string()).collect(),
            ProcessList::Names(v) => v.clone(),
        };
        let n = names.len();
        if n == 0 {
            return Err(ModelError::NoProcesses.into());
        }
        let lookup = Names { names: &names };
        let graph = match &file.system.channels {
            None => NetworkGraph::complete(n),
            Some(list) => {
                let edges = list.iter().map(|c| lookup.channel("system.channels", c)).collect::<Result<BTreeSet<_>, _>>()?;
                NetworkGraph::from_parts(processes(n).collect(), edges)
            }
        };
        let (system, pattern_names) = match &file.system.patterns {
            PatternsSpec::Threshold { crash_threshold } => {
                let system = threshold_system(n, *crash_threshold);
                let labels = (0..system.patterns().len()).map(|i| format!("#{i}")).collect();
                (system, labels)
            }
            PatternsSpec::List(list) => {
                let mut patterns = Vec::new();
                let mut labels = Vec::new();
                for (i, spec) in list.iter().enumerate() {
                    let field = format!("system.patterns[{i}]");
                    let crashed = lookup.set(&field, &spec.crashed)?;
                    let dropped =
                        spec.dropped.iter().map(|c| lookup.channel(&field, c)).collect::<Result<Vec<_>, _>>()?;
                    patterns.push(FailurePattern::new(crashed, dropped)?);
                    labels.push(spec.name.clone().unwrap_or_else(|| format!("#{i}")));
                }
                (FailProneSystem::new(n, patterns)?, labels)
            }
        };
        let quorums = match &file.quorums {
            None => None,
            Some(QuorumSpec::Threshold { threshold }) => Some(threshold_quorums(n, *threshold)),
            Some(QuorumSpec::Explicit { reads, writes }) => {
                let family = |field: &str, qs: &[Vec<String>]| -> Result<QuorumFamily, ScenarioError> {
                    let sets = qs.iter().map(|q| lookup.set(field, q)).collect::<Result<Vec<_>, _>>()?;
                    Ok(QuorumFamily::new(sets)?)
                };
                Some((family("quorums.reads", reads)?, family("quorums.writes", writes)?))
            }
        };
        let pattern_index = |name: &str| -> Result<usize, ScenarioError> {
            if let Some(i) = pattern_names.iter().position(|p| p == name) {
                return Ok(i);
            }
            name.strip_prefix('#')
                .and_then(|i| i.parse::<usize>().ok())
                .filter(|&i| i < system.patterns().len())
                .ok_or_else(|| ScenarioError::UnknownPattern(name.to_string()))
        };
        let pattern = file.run.pattern.as_deref().map(pattern_index).transpose()?;
        let schedule = match &file.run.schedule {
            None => None,
            Some(spec) => Some(FailureSchedule {
                crashes: spec
                    .crashes
                    .iter()
                    .map(|c| Ok(CrashAt { process: lookup.process("run.schedule.crashes", &c.process)?, at: c.at }))
                    .collect::<Result<_, ScenarioError>>()?,
                disconnects: spec
                    .disconnects
                    .iter()
                    .map(|d| Ok(DisconnectAt { channel: lookup.channel("run.schedule.disconnects", &d.channel)?, at: d.at }))
                    .collect::<Result<_, ScenarioError>>()?,
            }),
        };
        let termination = file.run.termination.as_deref().map(|t| lookup.set("run.termination", t)).transpose()?;
        let workload = file
            .workload
            .iter()
            .enumerate()
            .map(|(i, w)| {
                Ok(WorkloadEntry { at: w.at, process: lookup.process(&format!("workload[{i}]"), &w.process)?, op: w.op.clone() })
            })
            .collect::<Result<Vec<_>, ScenarioError>>()?;
        let fuzz_patterns = match &file.fuzz.patterns {
            None => (0..system.patterns().len()).collect(),
            Some(list) => list.iter().map(|p| pattern_index(p)).collect::<Result<_, _>>()?,
        };
        Ok(Scenario {
            name: file.name.unwrap_or_default(),
            names,
            system,
            graph,
            pattern_names,
            quorums,
            object: file.object,
            run: file.run,
            pattern,
            schedule,
            termination,
            workload,
            fuzz: file.fuzz,
            fuzz_patterns,
        })
    }

    pub fn n(&self) -> usize {
        self.names.len()
    }

    pub fn show_process(&self, p: ProcessId) -> &str {
        self.names.get(p.index()).map_or("?", String::as_str)
    }

    pub fn show_set(&self, s: &ProcessSet) -> String {
        let parts: Vec<&str> = s.iter().map(|&p| self.show_process(p)).collect();
        format!("{{{}}}", parts.join(","))
    }

    pub fn analyze(&self) -> Result<Analysis, ScenarioError> {
        Ok(match &self.quorums {
            Some((reads, writes)) => {
                let verdict = validate_gqs(&self.system, reads, writes, &self.graph)?;
                Analysis::Validated { reads: reads.clone(), writes: writes.clone(), verdict }
            }
            None => match find_gqs(&self.system, &self.graph) {
                Some(gqs) => {
                    let verdict = validate_gqs(&self.system, &gqs.reads, &gqs.writes, &self.graph)?;
                    Analysis::Found(gqs, verdict)
                }
                None => Analysis::NoneExists,
            },
        })
    }

    /// Declared quorums, or a searched GQS when none are declared, plus
    /// the `U_f` of each pattern where it exists.
    pub fn quorum_system(&self) -> Result<(QuorumFamily, QuorumFamily, BTreeMap<usize, ProcessSet>), ScenarioError> {
        match self.analyze()? {
            Analysis::Validated { reads, writes, verdict } => Ok((reads, writes, verdict.u_components)),
            Analysis::Found(gqs, verdict) => Ok((gqs.reads, gqs.writes, verdict.u_components)),
            Analysis::NoneExists => Err(ScenarioError::NoGqs),
        }
    }

    fn termination_for(&self, pattern: Option<usize>, u: &BTreeMap<usize, ProcessSet>) -> ProcessSet {
        if let Some(t) = &self.termination {
            return t.clone();
        }
        match pattern {
            Some(i) => u.get(&i).cloned().unwrap_or_default(),
            None => processes(self.n()).collect(),
        }
    }

    fn base_config(&self, timing: Timing, seed: u64, ov: &Overrides) -> SimConfig {
        let r = &self.run;
        let mut cfg = SimConfig::new(self.n(), timing, seed);
        cfg.graph = self.graph.clone();
        cfg.delay = r.delay;
        cfg.mean_delay = r.mean_delay;
        cfg.max_drift_permille = r.max_drift_permille;
        cfg.adversarial = r.adversarial;
        cfg.tick_interval = r.tick_interval;
        cfg.max_events = ov.max_events.unwrap_or(r.max_events);
        cfg.horizon = r.horizon;
        cfg
    }

    fn protocol(&self, reads: &QuorumFamily, writes: &QuorumFamily) -> Result<Protocol, ScenarioError> {
        Ok(Protocol {
            object: self.object.ok_or(ScenarioError::NoObject)?,
            variant: self.run.variant,
            quorums: Arc::new(Quorums::new(reads, writes)),
            view_constant: self.run.view_constant,
        })
    }

    fn label(&self, protocol: &Protocol, pattern: Option<usize>, tset: &ProcessSet) -> Value {
        json!({
            "scenario": self.name,
            "object": protocol.object,
            "variant": protocol.variant,
            "view_constant": protocol.view_constant,
            "pattern_index": pattern,
            "pattern_name": pattern.map(|i| self.pattern_names[i].clone()),
            "termination": tset,
        })
    }

    fn finish(&self, mut config: SimConfig, protocol: Protocol, workload: Vec<WorkloadEntry>, pattern: Option<usize>, u: &BTreeMap<usize, ProcessSet>) -> Plan {
        let termination = self.termination_for(pattern, u);
        config.await_set = Some(termination.clone());
        config.label = self.label(&protocol, pattern, &termination);
        Plan { config, protocol, workload, termination }
    }

    /// The run described by the `run` and `workload` sections.
    pub fn plan(&self, ov: &Overrides) -> Result<Plan, ScenarioError> {
        let (reads, writes, u) = self.quorum_system()?;
        let protocol = self.protocol(&reads, &writes)?;
        let r = &self.run;
        let timing = match ov.mode.unwrap_or(r.mode) {
            Mode::Async => Timing::Async,
            Mode::Psync => Timing::PartialSync { gst: ov.gst.unwrap_or(r.gst), delta: ov.delta.unwrap_or(r.delta) },
        };
        let mut cfg = self.base_config(timing, ov.seed.unwrap_or(r.seed), ov);
        if let Some(i) = self.pattern {
            cfg.pattern = self.system.patterns()[i].clone();
            cfg.schedule = self.schedule.clone().unwrap_or_else(|| FailureSchedule::all_at(&cfg.pattern, 0));
        }
        Ok(self.finish(cfg, protocol, self.workload.clone(), self.pattern, &u))
    }

    /// A randomized run derived from `seed`: pattern, failure times,
    /// timing and workload are all drawn from the fuzz section.
    pub fn fuzz_plan(&self, seed: u64, ov: &Overrides) -> Result<Plan, ScenarioError> {
        let (reads, writes, u) = self.quorum_system()?;
        let protocol = self.protocol(&reads, &writes)?;
        let fz = &self.fuzz;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pattern = self.fuzz_patterns.choose(&mut rng).copied();
        let psync = match ov.mode {
            Some(Mode::Async) => false,
            Some(Mode::Psync) => true,
            None => match fz.mode {
                FuzzMode::Async => false,
                FuzzMode::Psync => true,
                FuzzMode::Mixed => rng.random_bool(0.5),
            },
        };
        let gst = rng.random_range(0..=fz.gst_max);
        let delta = rng.random_range(1..=fz.delta_max.max(1));
        let timing = if psync {
            Timing::PartialSync { gst: ov.gst.unwrap_or(gst), delta: ov.delta.unwrap_or(delta) }
        } else {
            Timing::Async
        };
        let mut cfg = self.base_config(timing, seed, ov);
        cfg.adversarial = fz.adversarial;
        if let Some(i) = pattern {
            let f = self.system.patterns()[i].clone();
            let mut at = || rng.random_range(0..=fz.failure_time_max);
            cfg.schedule = FailureSchedule {
                crashes: f.crashed.iter().map(|&process| CrashAt { process, at: at() }).collect(),
                disconnects: f.dropped.iter().map(|&channel| DisconnectAt { channel, at: at() }).collect(),
            };
            cfg.pattern = f;
        }
        let workload = random_workload(protocol.object, self.n(), &fz.workload, &mut rng);
        Ok(self.finish(cfg, protocol, workload, pattern, &u))
    }

    /// Termination set for a stored trace, from its run-start record.
    pub fn termination_for_trace(&self, run_start: Option<&Value>) -> Result<ProcessSet, ScenarioError> {
        let (_, _, u) = self.quorum_system()?;
        let by_index = run_start.and_then(|v| v.get("pattern_index")).and_then(Value::as_u64).map(|i| i as usize);
        let by_value = run_start
            .and_then(|v| v.get("pattern"))
            .and_then(|p| serde_json::from_value::<FailurePattern>(p.clone()).ok())
            .and_then(|f| self.system.patterns().iter().position(|g| *g == f));
        let pattern = by_index.filter(|&i| i < self.system.patterns().len()).or(by_value);
        Ok(self.termination_for(pattern, &u))
    }

}

#[cfg(test)]
mod tests {
    use super::*;

    const FIG: &str = r#"{
        "schema": "gqslab/scenario/1",
        "system": {
            "processes": ["a", "b", "c", "d"],
            "patterns": [
                {"name": "f1", "crashed": ["d"], "dropped": ["a->c", "b->c"]},
                {"name": "f2", "crashed": ["a"]}
            ]
        },
        "object": "register",
        "run": {"pattern": "f1", "seed": 9},
        "workload": [{"at": 0, "process": "a", "op": "write", "value": 1}, {"at": 5, "process": "p2", "op": "read"}]
    }"#;

    #[test]
    fn names_resolve() {
        let s = Scenario::from_json(FIG).unwrap();
        assert_eq!(s.n(), 4);
        assert_eq!(s.pattern, Some(0));
        assert_eq!(s.system.patterns()[0].dropped.len(), 2);
        assert_eq!(s.workload[1].process, ProcessId(2));
        assert_eq!(s.workload[0].op, Operation::Write { value: 1 });
        assert_eq!(s.show_set(&[ProcessId(1), ProcessId(3)].into()), "{a,c}");
    }

    #[test]
    fn errors_point_at_the_problem() {
        let bad_json = FIG.replace("\"seed\": 9", "\"seed\": 9,");
        let Err(ScenarioError::Parse { line, .. }) = Scenario::from_json(&bad_json) else { panic!() };
        assert_eq!(line, 11);
        let unknown = FIG.replace("\"crashed\": [\"a\"]", "\"crashed\": [\"z\"]");
        assert!(matches!(Scenario::from_json(&unknown), Err(ScenarioError::UnknownProcess { .. })));
        let schema = FIG.replace("scenario/1", "scenario/9");
        assert!(matches!(Scenario::from_json(&schema), Err(ScenarioError::Schema(_))));
        let channel = FIG.replace("a->c", "a-c");
        assert!(matches!(Scenario::from_json(&channel), Err(ScenarioError::BadChannel { .. })));
        let field = FIG.replace("\"seed\": 9", "\"sed\": 9");
        assert!(matches!(Scenario::from_json(&field), Err(ScenarioError::Parse { .. })));
    }

    #[test]
    fn threshold_sections() {
        let text = r#"{"schema": "gqslab/scenario/1",
            "system": {"processes": 5, "patterns": {"crash_threshold": 2}},
            "quorums": {"threshold": 2}}"#;
        let s = Scenario::from_json(text).unwrap();
        assert_eq!(s.system.patterns().len(), 16);
        assert!(s.analyze().unwrap().is_valid());
        assert!(matches!(s.plan(&Overrides::default()), Err(ScenarioError::NoObject)));
    }

    #[test]
    fn plan_and_fuzz_plan_apply_the_pattern() {
        let s = Scenario::from_json(FIG).unwrap();
        let plan = s.plan(&Overrides::default()).unwrap();
        assert_eq!(plan.config.pattern, s.system.patterns()[0]);
        assert_eq!(plan.config.seed, 9);
        assert_eq!(plan.config.schedule.crashes.len(), 1);
        let ov = Overrides { seed: Some(4), mode: Some(Mode::Async), ..Default::default() };
        let plan = s.plan(&ov).unwrap();
        assert_eq!((plan.config.seed, plan.config.timing), (4, Timing::Async));

        let a = s.fuzz_plan(77, &Overrides::default()).unwrap();
        let b = s.fuzz_plan(77, &Overrides::default()).unwrap();
        assert_eq!(a.workload, b.workload);
        assert_eq!(a.config.schedule, b.config.schedule);
    }
}
