//! Flat `key = value` experiment configuration.
//!
//! One setting per line, `#` starts a comment. Keys:
//!
//! | key | values | default |
//! |-----|--------|---------|
//! | `task` | `regression`, `node_classification` | required |
//! | `dataset` | `synthetic_regression`, `sbm`, `json_dir` | required |
//! | `dataset.seed` | integer | `0` |
//! | `dataset.num_graphs` | integer (generated datasets) | `100` |
//! | `dataset.min_nodes`, `dataset.max_nodes` | integers (`synthetic_regression`) | `5`, `12` |
//! | `dataset.block_sizes` | comma list (`sbm`) | `20,20` |
//! | `dataset.p_intra`, `dataset.q_inter` | probabilities (`sbm`) | `0.9`, `0.1` |
//! | `dataset.feature_noise` | fraction of revealed nodes (`sbm`) | `0.1` |
//! | `dataset.path` | directory of graph JSON files (`json_dir`) | required there |
//! | `model.num_layers`, `model.num_heads`, `model.hidden_dim` | integers | `10`, `8`, `64` |
//! | `model.pe` | `none`, `laplacian`, `wl` | `none` |
//! | `model.pe_k` | integer (`laplacian`) | `4` |
//! | `model.wl_max_roles`, `model.wl_iterations` | integers (`wl`) | `32`, `3` |
//! | `model.norm` | `batch_norm`, `layer_norm` | `batch_norm` |
//! | `model.use_edge_features`, `model.add_self_loops` | bool | `false` |
//! | `model.clamp_bound` | positive real | `5` |
//! | `model.readout` | `mean` | `mean` |
//! | `schedule.initial_lr`, `schedule.decay_factor`, `schedule.patience`, `schedule.min_lr`, `schedule.max_epochs` | | `1e-3`, `0.5`, `5`, `1e-6`, `300` |
//! | `seeds` | comma list | `0,1,2,3` |
//! | `full_graph` | bool | `false` |
//! | `output_dir` | path | `results` |
//! | `batch_size` | graphs per batch | `16` |
//! | `val_fraction`, `test_fraction` | fractions of the dataset | `0.2`, `0.2` |
//! | `weighted_accuracy` | bool | `false` |
//! | `record_timing` | bool | `true` |

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{Error, Result};
use crate::graph::{SbmParams, NUM_ATOM_TYPES, NUM_BOND_TYPES};
use crate::model::{ModelConfig, NormKind, PeKind};
use crate::train::ScheduleConfig;

/// Every problem found in a configuration, reported together.
#[derive(Debug, Error, PartialEq)]
#[error("invalid configuration:\n  {}", problems.join("\n  "))]
pub struct ConfigError {
    pub problems: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Regression,
    NodeClassification,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSpec {
    SyntheticRegression {
        num_graphs: usize,
        min_nodes: usize,
        max_nodes: usize,
    },
    Sbm {
        num_graphs: usize,
        params: SbmParams,
    },
    JsonDir {
        path: PathBuf,
    },
}

impl DatasetSpec {
    pub fn name(&self) -> &'static str {
        match self {
            DatasetSpec::SyntheticRegression { .. } => "synthetic_regression",
            DatasetSpec::Sbm { .. } => "sbm",
            DatasetSpec::JsonDir { .. } => "json_dir",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub task: TaskKind,
    pub dataset: DatasetSpec,
    /// Seed of the dataset generator; the same data is shared by every run seed.
    pub dataset_seed: u64,
    pub model: ModelConfig,
    pub wl_iterations: usize,
    pub schedule: ScheduleConfig,
    pub seeds: Vec<u64>,
    pub full_graph: bool,
    pub output_dir: PathBuf,
    pub batch_size: usize,
    pub val_fraction: f64,
    pub test_fraction: f64,
    pub weighted_accuracy: bool,
    /// Wall-clock fields are zero when off, making reports reproducible
    /// byte for byte.
    pub record_timing: bool,
}

const DEFAULT_NUM_GRAPHS: usize = 100;
const DEFAULT_PE_K: usize = 4;
const DEFAULT_MAX_ROLES: usize = 32;
const DEFAULT_WL_ITERATIONS: usize = 3;

impl ExperimentConfig {
    /// A configuration with every default applied.
    pub fn new(task: TaskKind, dataset: DatasetSpec) -> Self {
        let mut cfg = ExperimentConfig {
            task,
            dataset,
            dataset_seed: 0,
            model: ModelConfig::new(0, 0),
            wl_iterations: DEFAULT_WL_ITERATIONS,
            schedule: ScheduleConfig::default(),
            seeds: vec![0, 1, 2, 3],
            full_graph: false,
            output_dir: PathBuf::from("results"),
            batch_size: 16,
            val_fraction: 0.2,
            test_fraction: 0.2,
            weighted_accuracy: false,
            record_timing: true,
        };
        cfg.resolve_input_dims();
        cfg
    }

    /// Fills the model's input widths for generated datasets; `json_dir`
    /// widths are only known once the files are read.
    pub fn resolve_input_dims(&mut self) {
        match &self.dataset {
            DatasetSpec::SyntheticRegression { .. } => {
                self.model.node_feature_dim = NUM_ATOM_TYPES;
                self.model.edge_feature_dim = NUM_BOND_TYPES;
            }
            DatasetSpec::Sbm { params, .. } => {
                self.model.node_feature_dim = params.feature_dim();
                self.model.edge_feature_dim = 0;
            }
            DatasetSpec::JsonDir { .. } => {}
        }
    }

    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut model = self.model.problems();
        let widths_known = !matches!(self.dataset, DatasetSpec::JsonDir { .. });
        if !widths_known {
            model.retain(|p| !p.contains("edge_feature_dim"));
        }
        out.extend(model.into_iter().map(|p| format!("model: {p}")));
        out.extend(self.schedule.problems().into_iter().map(|p| format!("schedule: {p}")));
        if self.seeds.is_empty() {
            out.push("seeds: at least one seed is required".to_string());
        }
        if self.full_graph && self.model.use_edge_features {
            out.push(
                "full_graph discards edge features when it connects every node pair; \
                 model.use_edge_features cannot be combined with full_graph"
                    .to_string(),
            );
        }
        if self.batch_size == 0 {
            out.push("batch_size must be at least 1".to_string());
        }
        for (name, f) in [("val_fraction", self.val_fraction), ("test_fraction", self.test_fraction)] {
            if !(0.0..1.0).contains(&f) {
                out.push(format!("{name} must lie in [0, 1), got {f}"));
            }
        }
        if self.val_fraction + self.test_fraction >= 1.0 {
            out.push("val_fraction + test_fraction must leave training graphs".to_string());
        }
        if self.wl_iterations == 0 {
            out.push("model.wl_iterations must be at least 1".to_string());
        }
        match (&self.task, &self.dataset) {
            (TaskKind::Regression, DatasetSpec::Sbm { .. }) => {
                out.push("task regression needs graph labels; dataset sbm provides node labels".to_string())
            }
            (TaskKind::NodeClassification, DatasetSpec::SyntheticRegression { .. }) => out.push(
                "task node_classification needs node labels; dataset synthetic_regression provides graph labels"
                    .to_string(),
            ),
            _ => {}
        }
        match &self.dataset {
            DatasetSpec::SyntheticRegression {
                num_graphs,
                min_nodes,
                max_nodes,
            } => {
                if *num_graphs == 0 {
                    out.push("dataset.num_graphs must be at least 1".to_string());
                }
                if *min_nodes < 2 || max_nodes < min_nodes {
                    out.push(format!(
                        "dataset.min_nodes/max_nodes must satisfy 2 <= min <= max, got {min_nodes}/{max_nodes}"
                    ));
                }
            }
            DatasetSpec::Sbm { num_graphs, params } => {
                if *num_graphs == 0 {
                    out.push("dataset.num_graphs must be at least 1".to_string());
                }
                if let Err(e) = params.validate() {
                    out.push(format!("dataset: {e}"));
                }
            }
            DatasetSpec::JsonDir { .. } => {}
        }
        out
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let problems = self.problems();
        if problems.is_empty() {
            Ok(())
        } else {
            Err(ConfigError { problems })
        }
    }

    /// Parses and validates the flat format; all problems are reported at once.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut problems = Vec::new();
        let mut entries: BTreeMap<String, (usize, String)> = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            match line.split_once('=') {
                Some((k, v)) => {
                    let key = k.trim().to_string();
                    if entries.insert(key.clone(), (lineno + 1, v.trim().to_string())).is_some() {
                        problems.push(format!("line {}: duplicate key {key}", lineno + 1));
                    }
                }
                None => problems.push(format!("line {}: expected key = value, got {line:?}", lineno + 1)),
            }
        }
        let mut p = FlatParser {
            entries,
            problems,
        };
        let cfg = p.build();
        p.report_unused();
        let mut problems = p.problems;
        if let Some(cfg) = &cfg {
            problems.extend(cfg.problems());
        }
        match cfg {
            Some(cfg) if problems.is_empty() => Ok(cfg),
            _ => Err(ConfigError { problems }),
        }
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| Error::io(&path, e))?;
        Ok(Self::parse(&text)?)
    }

    /// The flat format with every key written explicitly; [`Self::parse`]
    /// returns an equal config.
    pub fn to_flat_string(&self) -> String {
        let mut lines: Vec<(String, String)> = Vec::new();
        let mut put = |k: &str, v: String| lines.push((k.to_string(), v));
        put(
            "task",
            match self.task {
                TaskKind::Regression => "regression",
                TaskKind::NodeClassification => "node_classification",
            }
            .into(),
        );
        put("dataset", self.dataset.name().into());
        put("dataset.seed", self.dataset_seed.to_string());
        match &self.dataset {
            DatasetSpec::SyntheticRegression {
                num_graphs,
                min_nodes,
                max_nodes,
            } => {
                put("dataset.num_graphs", num_graphs.to_string());
                put("dataset.min_nodes", min_nodes.to_string());
                put("dataset.max_nodes", max_nodes.to_string());
            }
            DatasetSpec::Sbm { num_graphs, params } => {
                put("dataset.num_graphs", num_graphs.to_string());
                put("dataset.block_sizes", join(&params.block_sizes));
                put("dataset.p_intra", params.p_intra.to_string());
                put("dataset.q_inter", params.q_inter.to_string());
                put("dataset.feature_noise", params.feature_noise.to_string());
            }
            DatasetSpec::JsonDir { path } => put("dataset.path", path.display().to_string()),
        }
        let m = &self.model;
        put("model.num_layers", m.num_layers.to_string());
        put("model.num_heads", m.num_heads.to_string());
        put("model.hidden_dim", m.hidden_dim.to_string());
        match m.pe_kind {
            PeKind::None => put("model.pe", "none".into()),
            PeKind::Laplacian { k } => {
                put("model.pe", "laplacian".into());
                put("model.pe_k", k.to_string());
            }
            PeKind::Wl { max_roles } => {
                put("model.pe", "wl".into());
                put("model.wl_max_roles", max_roles.to_string());
                put("model.wl_iterations", self.wl_iterations.to_string());
            }
        }
        put(
            "model.norm",
            match m.norm_kind {
                NormKind::BatchNorm => "batch_norm",
                NormKind::LayerNorm => "layer_norm",
            }
            .into(),
        );
        put("model.use_edge_features", m.use_edge_features.to_string());
        put("model.clamp_bound", m.clamp_bound.to_string());
        put("model.add_self_loops", m.add_self_loops.to_string());
        put("model.readout", "mean".into());
        let s = &self.schedule;
        put("schedule.initial_lr", s.initial_lr.to_string());
        put("schedule.decay_factor", s.decay_factor.to_string());
        put("schedule.patience", s.patience.to_string());
        put("schedule.min_lr", s.min_lr.to_string());
        put("schedule.max_epochs", s.max_epochs.to_string());
        put("seeds", join(&self.seeds));
        put("full_graph", self.full_graph.to_string());
        put("output_dir", self.output_dir.display().to_string());
        put("batch_size", self.batch_size.to_string());
        put("val_fraction", self.val_fraction.to_string());
        put("test_fraction", self.test_fraction.to_string());
        put("weighted_accuracy", self.weighted_accuracy.to_string());
        put("record_timing", self.record_timing.to_string());
        lines.into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

fn join<T: Display>(xs: &[T]) -> String {
    xs.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

struct FlatParser {
    entries: BTreeMap<String, (usize, String)>,
    problems: Vec<String>,
}

impl FlatParser {
    fn take_raw(&mut self, key: &str) -> Option<String> {
        self.entries.remove(key).map(|(_, v)| v)
    }

    fn take<T: FromStr>(&mut self, key: &str, default: T) -> T
    where
        T::Err: Display,
    {
        match self.take_raw(key) {
            None => default,
            Some(v) => v.parse().unwrap_or_else(|e| {
                self.problems.push(format!("{key}: cannot parse {v:?}: {e}"));
                default
            }),
        }
    }

    fn take_list<T: FromStr>(&mut self, key: &str, default: Vec<T>) -> Vec<T>
    where
        T::Err: Display,
    {
        match self.take_raw(key) {
            None => default,
            Some(v) if v.is_empty() => vec![],
            Some(v) => {
                let parsed: std::result::Result<Vec<T>, _> = v.split(',').map(|x| x.trim().parse::<T>()).collect();
                parsed.unwrap_or_else(|e| {
                    self.problems.push(format!("{key}: cannot parse {v:?}: {e}"));
                    default
                })
            }
        }
    }

    fn take_choice<T: Copy>(&mut self, key: &str, default: Option<T>, choices: &[(&str, T)]) -> Option<T> {
        match self.take_raw(key) {
            None => {
                if default.is_none() {
                    self.problems.push(format!("{key} is required"));
                }
                default
            }
            Some(v) => match choices.iter().find(|(name, _)| *name == v) {
                Some((_, c)) => Some(*c),
                None => {
                    let names: Vec<&str> = choices.iter().map(|(n, _)| *n).collect();
                    self.problems.push(format!("{key}: {v:?} is not one of {}", names.join(", ")));
                    default
                }
            },
        }
    }

    fn build(&mut self) -> Option<ExperimentConfig> {
        let task = self.take_choice(
            "task",
            None,
            &[("regression", TaskKind::Regression), ("node_classification", TaskKind::NodeClassification)],
        );
        let kind = self.take_choice("dataset", None, &[("synthetic_regression", 0), ("sbm", 1), ("json_dir", 2)]);
        let dataset_seed = self.take("dataset.seed", 0u64);
        let dataset = match kind {
            Some(0) => Some(DatasetSpec::SyntheticRegression {
                num_graphs: self.take("dataset.num_graphs", DEFAULT_NUM_GRAPHS),
                min_nodes: self.take("dataset.min_nodes", 5),
                max_nodes: self.take("dataset.max_nodes", 12),
            }),
            Some(1) => {
                let num_graphs = self.take("dataset.num_graphs", DEFAULT_NUM_GRAPHS);
                let sizes = self.take_list("dataset.block_sizes", vec![20usize, 20]);
                let p = self.take("dataset.p_intra", 0.9);
                let q = self.take("dataset.q_inter", 0.1);
                let noise = self.take("dataset.feature_noise", 0.1);
                Some(DatasetSpec::Sbm {
                    num_graphs,
                    params: SbmParams::new(sizes, p, q, noise),
                })
            }
            Some(_) => match self.take_raw("dataset.path") {
                Some(p) => Some(DatasetSpec::JsonDir { path: PathBuf::from(p) }),
                None => {
                    self.problems.push("dataset.path is required for dataset = json_dir".to_string());
                    None
                }
            },
            None => None,
        };

        let defaults = ModelConfig::new(0, 0);
        let pe = self.take_choice("model.pe", Some(0), &[("none", 0), ("laplacian", 1), ("wl", 2)]);
        let pe_k = self.take_raw("model.pe_k");
        let max_roles = self.take_raw("model.wl_max_roles");
        let wl_iters = self.take_raw("model.wl_iterations");
        let mut parse_usize = |key: &str, v: Option<String>, default: usize, applies: bool, to: &str| {
            match v {
                None => default,
                Some(_) if !applies => {
                    self.problems.push(format!("{key} only applies to model.pe = {to}"));
                    default
                }
                Some(v) => v.parse().unwrap_or_else(|e| {
                    self.problems.push(format!("{key}: cannot parse {v:?}: {e}"));
                    default
                }),
            }
        };
        let k = parse_usize("model.pe_k", pe_k, DEFAULT_PE_K, pe == Some(1), "laplacian");
        let roles = parse_usize("model.wl_max_roles", max_roles, DEFAULT_MAX_ROLES, pe == Some(2), "wl");
        let wl_iterations = parse_usize("model.wl_iterations", wl_iters, DEFAULT_WL_ITERATIONS, pe == Some(2), "wl");
        let pe_kind = match pe {
            Some(1) => PeKind::Laplacian { k },
            Some(2) => PeKind::Wl { max_roles: roles },
            _ => PeKind::None,
        };
        let norm_kind = self
            .take_choice(
                "model.norm",
                Some(defaults.norm_kind),
                &[("batch_norm", NormKind::BatchNorm), ("layer_norm", NormKind::LayerNorm)],
            )
            .unwrap_or(defaults.norm_kind);
        let readout = self.take_choice("model.readout", Some(defaults.readout), &[("mean", defaults.readout)]);
        let model = ModelConfig {
            num_layers: self.take("model.num_layers", defaults.num_layers),
            num_heads: self.take("model.num_heads", defaults.num_heads),
            hidden_dim: self.take("model.hidden_dim", defaults.hidden_dim),
            pe_kind,
            norm_kind,
            use_edge_features: self.take("model.use_edge_features", false),
            clamp_bound: self.take("model.clamp_bound", defaults.clamp_bound),
            add_self_loops: self.take("model.add_self_loops", false),
            readout: readout.unwrap_or_default(),
            ..defaults
        };
        let sd = ScheduleConfig::default();
        let schedule = ScheduleConfig {
            initial_lr: self.take("schedule.initial_lr", sd.initial_lr),
            decay_factor: self.take("schedule.decay_factor", sd.decay_factor),
            patience: self.take("schedule.patience", sd.patience),
            min_lr: self.take("schedule.min_lr", sd.min_lr),
            max_epochs: self.take("schedule.max_epochs", sd.max_epochs),
        };
        let seeds = self.take_list("seeds", vec![0u64, 1, 2, 3]);
        let full_graph = self.take("full_graph", false);
        let output_dir = PathBuf::from(self.take("output_dir", "results".to_string()));
        let batch_size = self.take("batch_size", 16usize);
        let val_fraction = self.take("val_fraction", 0.2);
        let test_fraction = self.take("test_fraction", 0.2);
        let weighted_accuracy = self.take("weighted_accuracy", false);
        let record_timing = self.take("record_timing", true);

        let mut cfg = ExperimentConfig {
            task: task?,
            dataset: dataset?,
            dataset_seed,
            model,
            wl_iterations,
            schedule,
            seeds,
            full_graph,
            output_dir,
            batch_size,
            val_fraction,
            test_fraction,
            weighted_accuracy,
            record_timing,
        };
        cfg.resolve_input_dims();
        Some(cfg)
    }

    fn report_unused(&mut self) {
        let leftover: Vec<(String, usize)> = self.entries.iter().map(|(k, (l, _))| (k.clone(), *l)).collect();
        for (k, line) in leftover {
            self.problems.push(format!("line {line}: unknown key {k}"));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "task = regression\ndataset = synthetic_regression\n";

    #[test]
    fn minimal_config_gets_defaults() {
        let c = ExperimentConfig::parse(MINIMAL).unwrap();
        assert_eq!(c.model.num_layers, 10);
        assert_eq!(c.model.num_heads, 8);
        assert_eq!(c.seeds, vec![0, 1, 2, 3]);
        assert_eq!(c.model.node_feature_dim, NUM_ATOM_TYPES);
        assert!(!c.full_graph && !c.model.add_self_loops);
    }

    #[test]
    fn indivisible_hidden_dim_rejected() {
        let err = ExperimentConfig::parse(&format!("{MINIMAL}model.hidden_dim = 100\nmodel.num_heads = 8\n")).unwrap_err();
        assert!(err.problems.iter().any(|p| p.contains("not divisible")), "{err}");
    }

    #[test]
    fn full_graph_with_edge_features_rejected() {
        let err = ExperimentConfig::parse(&format!("{MINIMAL}full_graph = true\nmodel.use_edge_features = true\n"))
            .unwrap_err();
        assert!(err.problems.iter().any(|p| p.contains("discards edge features")), "{err}");
    }

    #[test]
    fn every_problem_reported_at_once() {
        let text = "task = regression\ndataset = sbm\nmodel.hidden_dim = 10\nmodel.num_heads = 4\n\
                    bogus = 1\nseeds =\nmodel.pe_k = 3\nschedule.decay_factor = two\nmodel.use_edge_features = true\n";
        let err = ExperimentConfig::parse(text).unwrap_err();
        let joined = err.problems.join("\n");
        for needle in [
            "unknown key bogus",
            "model.pe_k only applies",
            "schedule.decay_factor",
            "not divisible",
            "seeds",
            "edge_feature_dim",
            "node labels",
        ] {
            assert!(joined.contains(needle), "missing {needle:?} in\n{joined}");
        }
    }

    #[test]
    fn missing_required_keys() {
        let err = ExperimentConfig::parse("").unwrap_err();
        assert!(err.problems.iter().any(|p| p == "task is required"));
        assert!(err.problems.iter().any(|p| p == "dataset is required"));
    }

    #[test]
    fn flat_round_trip() {
        let text = "task = node_classification\ndataset = sbm\ndataset.block_sizes = 7,9\n\
                    dataset.feature_noise = 0.25\nmodel.pe = wl\nmodel.wl_max_roles = 12\n\
                    model.norm = layer_norm\nschedule.initial_lr = 0.0007\nseeds = 5\nrecord_timing = false\n";
        let c = ExperimentConfig::parse(text).unwrap();
        let again = ExperimentConfig::parse(&c.to_flat_string()).unwrap();
        assert_eq!(c, again);
        assert_eq!(again.to_flat_string(), c.to_flat_string());
    }

    #[test]
    fn comments_and_blank_lines() {
        let c = ExperimentConfig::parse("# experiment\n\ntask = regression # inline\ndataset = synthetic_regression\n")
            .unwrap();
        assert_eq!(c.task, TaskKind::Regression);
    }
}
