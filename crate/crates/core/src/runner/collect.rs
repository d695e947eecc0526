use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{run_trial, PolicyKind, TrialConfig, TrialRecord};
use crate::dataset::{LabeledSample, SampleMeta, Split};
use crate::encoder::PushImage;
use crate::error::{Error, Result};
use crate::network::NetworkParams;
use crate::rng::{derive_seed, rng_from, STREAM_SCENE, STREAM_SPLIT, STREAM_TRIAL};
use crate::scene::{default_shape_library, generate_scene, Scene, TableSpec};

/// Share of collection trials whose samples go to the validation split.
pub const VALIDATION_FRACTION: f64 = 0.1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollectConfig {
    pub policy: PolicyKind,
    pub n_trials: usize,
    /// Trial `i` uses `object_counts[i % len]` objects.
    pub object_counts: Vec<usize>,
    pub seed: u64,
    pub trial: TrialConfig,
    pub validation_fraction: f64,
}

impl CollectConfig {
    pub fn new(policy: PolicyKind, n_trials: usize, object_counts: Vec<usize>, seed: u64) -> Self {
        Self {
            policy,
            n_trials,
            object_counts,
            seed,
            trial: TrialConfig::new(4, policy),
            validation_fraction: VALIDATION_FRACTION,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialSpec {
    pub trial_id: u64,
    pub n_objects: usize,
    pub scene_seed: u64,
    pub trial_seed: u64,
}

impl TrialSpec {
    pub fn scene(&self, table: TableSpec) -> Result<Scene> {
        generate_scene(self.n_objects, &default_shape_library(), table, self.scene_seed)
    }
}

/// Seeds for trials `0..n_trials`; a function of `(seed, trial index, object
/// count)` only, so every policy sees the same scenes.
pub fn trial_specs(seed: u64, n_trials: usize, object_counts: &[usize]) -> Vec<TrialSpec> {
    if object_counts.is_empty() {
        return Vec::new();
    }
    (0..n_trials)
        .map(|i| {
            let n = object_counts[i % object_counts.len()];
            let i = i as u64;
            TrialSpec {
                trial_id: i,
                n_objects: n,
                scene_seed: derive_seed(seed, &[STREAM_SCENE, n as u64, i]),
                trial_seed: derive_seed(seed, &[STREAM_TRIAL, n as u64, i]),
            }
        })
        .collect()
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CollectSummary {
    pub trials: usize,
    pub samples: usize,
    pub positives: usize,
    pub negatives: usize,
    pub successes: usize,
}

pub struct Collected {
    pub samples: Vec<LabeledSample>,
    pub records: Vec<TrialRecord>,
    pub summary: CollectSummary,
}

fn samples_from(record: &TrialRecord, split: Split) -> Vec<LabeledSample> {
    record
        .pushes
        .iter()
        .map(|p| LabeledSample {
            image: PushImage {
                pixels: p.image.clone(),
                proposal: p.chosen,
            },
            label: p.label as u8,
            meta: SampleMeta {
                trial_id: record.trial_id,
                push_index: p.push_index as u32,
                policy: record.policy,
                split,
                trial_seed: record.trial_seed,
                n_objects: record.n_objects,
                breakdown: p.breakdown,
            },
        })
        .collect()
}

/// Runs the configured trials (in parallel, results kept in trial order) and
/// turns every executed push into a labeled sample.
pub fn collect_dataset(config: &CollectConfig, model: Option<&NetworkParams>) -> Result<Collected> {
    if config.object_counts.iter().any(|&n| n == 0) {
        return Err(Error::InvalidScene("object counts must be positive".into()));
    }
    let specs = trial_specs(config.seed, config.n_trials, &config.object_counts);
    let table = TableSpec::default();
    let records: Vec<TrialRecord> = specs
        .par_iter()
        .map(|spec| {
            let scene = spec.scene(table)?;
            let mut trial = config.trial.clone();
            trial.policy = config.policy;
            trial.n_objects = spec.n_objects;
            trial.max_pushes = super::max_pushes_for(spec.n_objects);
            run_trial(&trial, model, &scene, spec.trial_id, spec.trial_seed)
        })
        .collect::<Result<_>>()?;

    let mut samples = Vec::new();
    let mut summary = CollectSummary {
        trials: records.len(),
        ..Default::default()
    };
    for r in &records {
        let u: f64 = rng_from(derive_seed(config.seed, &[STREAM_SPLIT, r.trial_id])).gen();
        let split = if u < config.validation_fraction {
            Split::Validation
        } else {
            Split::Train
        };
        samples.extend(samples_from(r, split));
        summary.successes += (r.status == super::TerminalStatus::Success) as usize;
    }
    summary.samples = samples.len();
    summary.positives = samples.iter().filter(|s| s.is_positive()).count();
    summary.negatives = summary.samples - summary.positives;
    log::info!(
        "collected {} samples ({} positive) from {} trials",
        summary.samples,
        summary.positives,
        summary.trials
    );
    Ok(Collected {
        samples,
        records,
        summary,
    })
}
