use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{collect_dataset, CollectConfig, CollectSummary, PolicyKind};
use crate::dataset::{write_dataset, LabeledSample};
use crate::encoder::EncoderConventions;
use crate::error::{Error, Result};
use crate::network::{save_model, train, NetworkParams, TrainConfig, TrainLog};
use crate::rng::derive_seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub train: TrainConfig,
    /// Collection run with the vanilla network acting; its policy field is
    /// overridden.
    pub round2: CollectConfig,
    pub seed: u64,
}

pub struct PipelineOutput {
    pub vanilla: NetworkParams,
    pub vanilla_log: TrainLog,
    pub round2: Vec<LabeledSample>,
    pub round2_summary: CollectSummary,
    pub aggregated: NetworkParams,
    pub aggregated_log: TrainLog,
    /// Size of the aggregated training set (round 1 plus round 2).
    pub merged_len: usize,
}

/// Trains the vanilla network on round-1 data, collects round-2 data acting
/// with it, and trains the aggregated network on the union.
pub fn train_iterations(round1: &[LabeledSample], config: &PipelineConfig) -> Result<PipelineOutput> {
    let (vanilla, vanilla_log) = train(round1, &config.train, derive_seed(config.seed, &[1]))?;

    let mut round2_cfg = config.round2.clone();
    round2_cfg.policy = PolicyKind::VanillaNetwork;
    round2_cfg.trial.policy = PolicyKind::VanillaNetwork;
    let collected = collect_dataset(&round2_cfg, Some(&vanilla))?;

    let mut merged = round1.to_vec();
    merged.extend(collected.samples.iter().cloned());
    let (aggregated, aggregated_log) = train(&merged, &config.train, derive_seed(config.seed, &[2]))?;
    Ok(PipelineOutput {
        vanilla,
        vanilla_log,
        round2: collected.samples,
        round2_summary: collected.summary,
        aggregated,
        aggregated_log,
        merged_len: merged.len(),
    })
}

impl PipelineOutput {
    /// Writes `vanilla.model`, `aggregated.model`, `round2.ndjson`,
    /// `merged.ndjson` and `train_logs.json` into `dir`.
    pub fn save(&self, dir: &Path, round1: &[LabeledSample], conventions: &EncoderConventions) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, 0, e))?;
        save_model(&dir.join("vanilla.model"), &self.vanilla, conventions)?;
        save_model(&dir.join("aggregated.model"), &self.aggregated, conventions)?;
        write_dataset(&dir.join("round2.ndjson"), &self.round2)?;
        let mut merged = round1.to_vec();
        merged.extend(self.round2.iter().cloned());
        write_dataset(&dir.join("merged.ndjson"), &merged)?;
        let logs = serde_json::json!({
            "vanilla": self.vanilla_log,
            "aggregated": self.aggregated_log,
            "round2": self.round2_summary,
            "merged_len": self.merged_len,
        });
        let path = dir.join("train_logs.json");
        std::fs::write(&path, serde_json::to_string_pretty(&logs)?).map_err(|e| Error::io(&path, 0, e))
    }
}
