//! The run configuration document, `--set` overrides and validation with
//! line-anchored diagnostics.

use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::dbmodels::{build_model, Engine, EngineConfig};
use crate::scenarios::{check_removal_order, default_removal_order, ScenarioKind, ScenarioSpec};
use crate::sim::SimSettings;
use crate::topology::{reference_topology, ClusterTopology, TopologyDoc};
use crate::workload::{preset, WorkloadSpec, PRESETS};

pub const PAPER_PRESET: &str = "paper-table3";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologySection {
    /// Built-in topology; only `paper-table3` exists.
    #[serde(default)]
    pub preset: Option<String>,
    #[serde(default)]
    pub custom: Option<TopologyDoc>,
}

/// A preset name or a full workload definition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WorkloadRef {
    Preset(String),
    Custom(WorkloadSpec),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub topology: TopologySection,
    pub engine: EngineConfig,
    #[serde(default = "default_workloads")]
    pub workloads: Vec<WorkloadRef>,
    #[serde(default)]
    pub scenario: ScenarioSpec,
    #[serde(default)]
    pub sim: SimSettings,
    /// Falls back to `FRAGSIM_OUTDIR`, then `fragsim-out`.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default = "one")]
    pub seed: u64,
    #[serde(default = "one_usize")]
    pub parallelism: usize,
    #[serde(default)]
    pub export_oplog: bool,
}

fn default_workloads() -> Vec<WorkloadRef> {
    vec![WorkloadRef::Preset("A".into())]
}
fn one() -> u64 {
    1
}
fn one_usize() -> usize {
    1
}

/// A problem found in a config document, anchored to a line when possible.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Diagnostic {
    pub line: usize,
    pub column: usize,
    /// JSON pointer of the offending value.
    pub pointer: Option<String>,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: ", self.line, self.column)?;
        if let Some(p) = &self.pointer {
            write!(f, "{p}: ")?;
        }
        f.write_str(&self.message)
    }
}

impl RunConfig {
    /// Defaults around the reference topology for `engine`.
    pub fn new(engine: Engine) -> Self {
        RunConfig {
            topology: TopologySection {
                preset: Some(PAPER_PRESET.into()),
                custom: None,
            },
            engine: EngineConfig::new(engine),
            workloads: default_workloads(),
            scenario: ScenarioSpec::default(),
            sim: SimSettings::default(),
            output_dir: None,
            seed: 1,
            parallelism: 1,
            export_oplog: false,
        }
    }

    /// Parses `text`, applies `key=value` overrides and runs every check.
    pub fn parse(text: &str, overrides: &[String]) -> Result<RunConfig, Vec<Diagnostic>> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| vec![serde_diag(&e)])?;
        let cfg = if overrides.is_empty() {
            cfg
        } else {
            let mut doc = serde_json::to_value(&cfg).expect("config serializes");
            for o in overrides {
                apply_override(&mut doc, o).map_err(|m| vec![at_start(m)])?;
            }
            serde_json::from_value(doc).map_err(|e| vec![at_start(format!("after overrides: {e}"))])?
        };
        let spans = Spans::new(text);
        let errs = cfg.check();
        if errs.is_empty() {
            Ok(cfg)
        } else {
            Err(errs.into_iter().map(|(p, m)| spans.diag(&p, m)).collect())
        }
    }

    /// Semantic checks; each problem comes with the pointer it concerns.
    pub fn check(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        let topo = match self.topology() {
            Ok(t) => Some(t),
            Err(e) => {
                out.push(("/topology".to_string(), e));
                None
            }
        };
        for (i, w) in self.workloads.iter().enumerate() {
            let r = match w {
                WorkloadRef::Preset(n) => preset(n).map(|_| ()),
                WorkloadRef::Custom(s) => s.validate(),
            };
            if let Err(e) = r {
                out.push((format!("/workloads/{i}"), e.to_string()));
            }
        }
        if self.workloads.is_empty() {
            out.push(("/workloads".into(), "at least one workload is required".into()));
        }
        if let Err(e) = self.scenario.validate() {
            out.push(("/scenario".into(), e.to_string()));
        }
        if self.parallelism == 0 {
            out.push(("/parallelism".into(), "parallelism must be at least 1".into()));
        }
        if self.sim.timeout_factor <= 0.0 || self.sim.bucket_ms == 0 {
            out.push(("/sim".into(), "timeout_factor and bucket_ms must be positive".into()));
        }
        let Some(topo) = topo else { return out };
        for (i, p) in self.engine.protected_nodes.iter().enumerate() {
            if topo.node_by_name(p).is_none() {
                out.push((format!("/engine/protected_nodes/{i}"), format!("unknown node `{p}`")));
            }
        }
        if self.scenario.kind != ScenarioKind::LinkChurn {
            if let Ok(client) = topo.client() {
                let members = topo.data_nodes();
                if let Err(e) = build_model(&self.engine, &topo, &members, client, 1, 0) {
                    out.push(("/engine".into(), e.to_string()));
                }
            } else {
                out.push(("/topology".into(), "exactly one node must have the client role".into()));
            }
        }
        if self.scenario.kind == ScenarioKind::Resize {
            let order = self
                .scenario
                .removal_order
                .clone()
                .unwrap_or_else(|| default_removal_order(self.engine.engine));
            if let Err(e) = check_removal_order(&topo, &self.engine, &order) {
                let msg = e.to_string();
                let pointer = match (&self.scenario.removal_order, &e) {
                    (Some(o), crate::scenarios::ScenarioError::Protected { node, .. }) => o
                        .iter()
                        .position(|n| n == node)
                        .map_or("/scenario/removal_order".into(), |i| format!("/scenario/removal_order/{i}")),
                    (_, crate::scenarios::ScenarioError::Unsupported(..)) => "/engine/engine".into(),
                    _ => "/scenario".into(),
                };
                out.push((pointer, msg));
            }
        }
        out
    }

    pub fn topology(&self) -> Result<ClusterTopology, String> {
        match (&self.topology.preset, &self.topology.custom) {
            (Some(p), None) if p == PAPER_PRESET => Ok(reference_topology()),
            (Some(p), None) => Err(format!("unknown topology preset `{p}` (expected `{PAPER_PRESET}`)")),
            (None, Some(doc)) => ClusterTopology::from_doc(doc).map_err(|e| e.to_string()),
            _ => Err("set exactly one of `preset` and `custom`".into()),
        }
    }

    /// Workloads with preset seeds taken from the run seed.
    pub fn workload_specs(&self) -> Vec<WorkloadSpec> {
        self.workloads
            .iter()
            .filter_map(|w| match w {
                WorkloadRef::Preset(n) => preset(n).ok().map(|mut s| {
                    s.rng_seed = self.seed;
                    s
                }),
                WorkloadRef::Custom(s) => Some(s.clone()),
            })
            .collect()
    }

    pub fn settings(&self) -> SimSettings {
        let mut s = self.sim.clone();
        s.seed = self.seed;
        s
    }

    pub fn scenario_spec(&self) -> ScenarioSpec {
        let mut s = self.scenario.clone();
        s.rng_seed = self.seed;
        s
    }
}

/// The built-in reference topology and all workload presets, as a
/// complete config document.
pub fn presets_document() -> RunConfig {
    let mut cfg = RunConfig::new(Engine::Cassandra);
    cfg.topology = TopologySection {
        preset: None,
        custom: Some(reference_topology().to_doc()),
    };
    cfg.workloads = PRESETS
        .iter()
        .map(|p| WorkloadRef::Custom(preset(p).expect("built-in preset")))
        .collect();
    cfg
}

/// Expands `A..F` or `A,C,E` into preset names.
pub fn parse_workload_list(s: &str) -> Result<Vec<String>, String> {
    let s = s.trim();
    if let Some((a, b)) = s.split_once("..") {
        let (a, b) = (a.trim().to_ascii_uppercase(), b.trim().to_ascii_uppercase());
        let i = PRESETS.iter().position(|p| *p == a);
        let j = PRESETS.iter().position(|p| *p == b);
        return match (i, j) {
            (Some(i), Some(j)) if i <= j => Ok(PRESETS[i..=j].iter().map(|p| p.to_string()).collect()),
            _ => Err(format!("bad workload range `{s}`")),
        };
    }
    s.split(',')
        .map(|w| {
            let w = w.trim().to_ascii_uppercase();
            preset(&w).map(|_| w).map_err(|e| e.to_string())
        })
        .collect()
}

/// Sets the value at a dotted path that already exists in `doc`. The
/// value is read as JSON, or as a plain string if it does not parse.
pub fn apply_override(doc: &mut Value, assignment: &str) -> Result<(), String> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| format!("override `{assignment}` is not of the form key=value"))?;
    let value: Value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut cur = doc;
    for part in path.split('.') {
        cur = match cur {
            Value::Object(m) => m.get_mut(part),
            Value::Array(a) => part.parse::<usize>().ok().and_then(|i| a.get_mut(i)),
            _ => None,
        }
        .ok_or_else(|| format!("override `{path}`: no such config key"))?;
    }
    *cur = value;
    Ok(())
}

fn serde_diag(e: &serde_json::Error) -> Diagnostic {
    Diagnostic {
        line: e.line().max(1),
        column: e.column().max(1),
        pointer: None,
        message: e.to_string(),
    }
}

fn at_start(message: String) -> Diagnostic {
    Diagnostic {
        line: 1,
        column: 1,
        pointer: None,
        message,
    }
}

/// Maps JSON pointers to positions in the original text.
struct Spans<'a> {
    text: &'a str,
    root: Option<json_spanned_value::spanned::Value>,
}

impl<'a> Spans<'a> {
    fn new(text: &'a str) -> Self {
        Spans {
            text,
            root: json_spanned_value::from_str(text).ok(),
        }
    }

    /// Anchors at the deepest part of `pointer` present in the text.
    fn diag(&self, pointer: &str, message: String) -> Diagnostic {
        let mut offset = 0;
        if let Some(root) = &self.root {
            let mut p = pointer.to_string();
            loop {
                if let Some(v) = root.pointer(&p) {
                    offset = v.start();
                    break;
                }
                match p.rfind('/') {
                    Some(i) => p.truncate(i),
                    None => break,
                }
            }
        }
        let before = &self.text[..offset.min(self.text.len())];
        let line = before.matches('\n').count() + 1;
        let column = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
        Diagnostic {
            line,
            column,
            pointer: Some(pointer.to_string()),
            message,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_document_round_trips_and_validates() {
        let text = serde_json::to_string_pretty(&presets_document()).unwrap();
        let cfg = RunConfig::parse(&text, &[]).unwrap();
        assert_eq!(cfg.workload_specs().len(), 6);
        assert!(text.contains("\"Melbourne-Sydney\""));
    }

    #[test]
    fn seed_in_removal_order_is_anchored() {
        let text = r#"{
  "topology": {"preset": "paper-table3"},
  "engine": {"engine": "cassandra"},
  "scenario": {
    "kind": "resize",
    "removal_order": ["Sydney",
                      "Melbourne"]
  }
}"#;
        let d = RunConfig::parse(text, &[]).unwrap_err();
        assert_eq!(d.len(), 1);
        assert_eq!((d[0].line, d[0].column), (7, 23));
        assert!(d[0].message.contains("seed"), "{}", d[0]);
    }

    #[test]
    fn unknown_engine_is_a_parse_error_with_position() {
        let text = "{\n  \"topology\": {\"preset\": \"paper-table3\"},\n  \"engine\": {\"engine\": \"oracle\"}\n}";
        let d = RunConfig::parse(text, &[]).unwrap_err();
        assert_eq!(d[0].line, 3);
        assert!(d[0].message.contains("unknown variant"));
    }

    #[test]
    fn overrides_touch_only_existing_keys() {
        let text = r#"{"topology": {"preset": "paper-table3"}, "engine": {"engine": "redis"}}"#;
        let cfg = RunConfig::parse(text, &["scenario.dwell_ms=5000".into(), "engine.rf=2".into()]).unwrap();
        assert_eq!((cfg.scenario.dwell_ms, cfg.engine.rf), (5000, 2));
        assert!(RunConfig::parse(text, &["scenario.nope=1".into()]).is_err());
        assert!(RunConfig::parse(text, &["engine.rf=\"x\"".into()]).is_err());
        let cfg = RunConfig::parse(text, &["engine.engine=mysql".into()]).unwrap();
        assert_eq!(cfg.engine.engine, Engine::Mysql);
    }

    #[test]
    fn workload_lists() {
        assert_eq!(parse_workload_list("A..F").unwrap().len(), 6);
        assert_eq!(parse_workload_list("b,d").unwrap(), ["B", "D"]);
        assert!(parse_workload_list("F..A").is_err());
        assert!(parse_workload_list("Z").is_err());
    }
}
