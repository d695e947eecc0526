use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use singulate::network::{AdamConfig, TrainConfig};
use singulate::oracle::LabelCriteria;
use singulate::perception::{RenderStyle, DEFAULT_SCALE, DEFAULT_SPLIT_PROB};
use singulate::proposals::DEFAULT_PER_SEGMENT;
use singulate::runner::{PolicyKind, TrialConfig, VALIDATION_FRACTION};
use singulate::scene::{DEFAULT_PUSH_LENGTH, SINGULATION_THRESHOLD};

use crate::failure::Failure;

/// Name of the resolved config written next to every run's outputs.
pub const RESOLVED_CONFIG: &str = "config.toml";

/// Everything a run depends on. Loaded from TOML, then overridden by
/// `--set section.key=value` and the dedicated flags.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Subcommand that produced a resolved config; used by `replay`.
    pub command: Option<String>,
    pub seed: u64,
    pub jobs: usize,
    pub trial: TrialSection,
    pub collect: CollectSection,
    pub train: TrainSection,
    pub aggregate: AggregateSection,
    pub eval: EvalSection,
    pub inspect: InspectSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            command: None,
            seed: 2024,
            jobs: 1,
            trial: TrialSection::default(),
            collect: CollectSection::default(),
            train: TrainSection::default(),
            aggregate: AggregateSection::default(),
            eval: EvalSection::default(),
            inspect: InspectSection::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrialSection {
    pub singulation_threshold: f64,
    pub positive_threshold: f64,
    pub split_prob: f64,
    pub per_segment: usize,
    pub push_length: f64,
    pub view_scale: f64,
    pub render: RenderStyle,
    pub criteria: LabelCriteria,
}

impl Default for TrialSection {
    fn default() -> Self {
        Self {
            singulation_threshold: SINGULATION_THRESHOLD,
            positive_threshold: 0.5,
            split_prob: DEFAULT_SPLIT_PROB,
            per_segment: DEFAULT_PER_SEGMENT,
            push_length: DEFAULT_PUSH_LENGTH,
            view_scale: DEFAULT_SCALE,
            render: RenderStyle::default(),
            criteria: LabelCriteria::default(),
        }
    }
}

impl TrialSection {
    /// Template trial; the harness fills in object count, budget and policy.
    pub fn template(&self, policy: PolicyKind) -> TrialConfig {
        TrialConfig {
            singulation_threshold: self.singulation_threshold,
            positive_threshold: self.positive_threshold,
            split_prob: self.split_prob,
            per_segment: self.per_segment,
            push_length: self.push_length,
            view_scale: self.view_scale,
            render: self.render,
            criteria: self.criteria,
            ..TrialConfig::new(4, policy)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CollectSection {
    pub policy: PolicyKind,
    pub trials: usize,
    pub objects: Vec<usize>,
    pub validation_fraction: f64,
    pub model: Option<PathBuf>,
    pub out: PathBuf,
}

impl Default for CollectSection {
    fn default() -> Self {
        Self {
            policy: PolicyKind::Random,
            trials: 560,
            objects: vec![3, 4, 5, 6],
            validation_fraction: VALIDATION_FRACTION,
            model: None,
            out: PathBuf::from("runs/collect"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub data: Option<PathBuf>,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub min_positive_ratio: f64,
    pub out: PathBuf,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            data: None,
            epochs: t.epochs,
            batch_size: t.batch_size,
            lr: t.adam.learning_rate,
            min_positive_ratio: t.min_positive_ratio,
            out: PathBuf::from("runs/train"),
        }
    }
}

impl TrainSection {
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            min_positive_ratio: self.min_positive_ratio,
            adam: AdamConfig {
                learning_rate: self.lr,
                ..AdamConfig::default()
            },
            ..TrainConfig::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AggregateSection {
    /// Round-1 (random policy) dataset.
    pub data: Option<PathBuf>,
    /// Round-2 trials acting with the vanilla network.
    pub trials: usize,
    pub objects: Vec<usize>,
    pub out: PathBuf,
}

impl Default for AggregateSection {
    fn default() -> Self {
        Self {
            data: None,
            trials: 240,
            objects: vec![3, 4, 5, 6],
            out: PathBuf::from("runs/aggregate"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub trials: usize,
    pub objects: Vec<usize>,
    pub policies: Vec<PolicyKind>,
    /// Directory holding `vanilla.model` and `aggregated.model`, or a single
    /// model file used for both network policies.
    pub model: Option<PathBuf>,
    pub out: PathBuf,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            trials: 100,
            objects: vec![4, 6],
            policies: PolicyKind::ALL.to_vec(),
            model: None,
            out: PathBuf::from("runs/eval"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InspectSection {
    pub objects: usize,
    pub policy: PolicyKind,
    pub model: Option<PathBuf>,
    /// When set, dump push images of this dataset instead of a fresh scene.
    pub data: Option<PathBuf>,
    /// Number of push images to dump.
    pub top: usize,
    pub out: PathBuf,
}

impl Default for InspectSection {
    fn default() -> Self {
        Self {
            objects: 4,
            policy: PolicyKind::Baseline,
            model: None,
            data: None,
            top: 5,
            out: PathBuf::from("runs/inspect"),
        }
    }
}

/// Reads `path` (if any) as a TOML table and applies `key.path=value`
/// overrides before deserializing.
pub fn load(path: Option<&Path>, sets: &[String]) -> Result<RunConfig, Failure> {
    let mut table = match path {
        None => toml::Table::new(),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Failure::io(p, e))?;
            text.parse::<toml::Table>()
                .map_err(|e| Failure::config(format!("{}: {e}", p.display())))?
        }
    };
    for s in sets {
        apply_set(&mut table, s)?;
    }
    toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| Failure::config(e.to_string()))
}

fn apply_set(table: &mut toml::Table, assignment: &str) -> Result<(), Failure> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Failure::usage(format!("--set expects key=value, got {assignment:?}")))?;
    // bare words are strings; everything else is a TOML literal
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let parts: Vec<&str> = key.trim().split('.').collect();
    let (last, parents) = parts.split_last().unwrap();
    let mut cur = table;
    for p in parents {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Failure::usage(format!("--set {key}: {p} is not a section")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

pub fn write_resolved(dir: &Path, config: &RunConfig) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(|e| Failure::io(dir, e))?;
    let text = toml::to_string_pretty(config).map_err(|e| Failure::config(e.to_string()))?;
    let path = dir.join(RESOLVED_CONFIG);
    std::fs::write(&path, text).map_err(|e| Failure::io(&path, e))
}
