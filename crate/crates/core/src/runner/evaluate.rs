use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{max_pushes_for, run_trial, trial_specs, PolicyKind, TerminalStatus, TrialConfig, TrialRecord};
use crate::error::{Error, Result};
use crate::network::NetworkParams;
use crate::scene::TableSpec;

pub const REPORT_SCHEMA: &str = "singulate.report/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub object_counts: Vec<usize>,
    pub n_trials: usize,
    pub policies: Vec<PolicyKind>,
    pub seed: u64,
    /// Template; policy, object count and budget are filled per run.
    pub trial: TrialConfig,
}

#[derive(Clone, Debug, Default)]
pub struct Models {
    pub vanilla: Option<NetworkParams>,
    pub aggregated: Option<NetworkParams>,
}

impl Models {
    fn for_policy(&self, p: PolicyKind) -> Result<Option<&NetworkParams>> {
        let m = match p {
            PolicyKind::VanillaNetwork => self.vanilla.as_ref(),
            PolicyKind::AggregatedNetwork => self.aggregated.as_ref(),
            _ => return Ok(None),
        };
        m.map(Some).ok_or(Error::MissingModel {
            policy: p.to_string(),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub policy: PolicyKind,
    pub n_objects: usize,
    pub trial: u64,
    pub pushes_used: usize,
    pub success: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicySummary {
    pub policy: PolicyKind,
    pub n_objects: usize,
    pub trials: usize,
    pub successes: usize,
    pub success_rate: f64,
    /// Over successful trials only.
    pub mean_pushes: Option<f64>,
    /// Sample standard deviation over successful trials.
    pub std_pushes: Option<f64>,
    /// `curve[k]`: fraction of trials singulated within `k` pushes.
    pub curve: Vec<f64>,
    pub budget_exhausted: usize,
    pub no_feasible_positive: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema: String,
    pub seed: u64,
    pub rows: Vec<EvalRow>,
    pub summaries: Vec<PolicySummary>,
}

fn summarize(policy: PolicyKind, n_objects: usize, max_pushes: usize, records: &[TrialRecord]) -> PolicySummary {
    let trials = records.len();
    let succ: Vec<f64> = records
        .iter()
        .filter(|r| r.status == TerminalStatus::Success)
        .map(|r| r.pushes_used as f64)
        .collect();
    let successes = succ.len();
    let mean = (successes > 0).then(|| succ.iter().sum::<f64>() / successes as f64);
    let std = mean.filter(|_| successes > 1).map(|m| {
        (succ.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (successes - 1) as f64).sqrt()
    });
    let curve = (0..=max_pushes)
        .map(|k| {
            if trials == 0 {
                0.0
            } else {
                succ.iter().filter(|&&p| p as usize <= k).count() as f64 / trials as f64
            }
        })
        .collect();
    let count = |s| records.iter().filter(|r| r.status == s).count();
    PolicySummary {
        policy,
        n_objects,
        trials,
        successes,
        success_rate: if trials == 0 { 0.0 } else { successes as f64 / trials as f64 },
        mean_pushes: mean,
        std_pushes: std,
        curve,
        budget_exhausted: count(TerminalStatus::PushBudgetExhausted),
        no_feasible_positive: count(TerminalStatus::NoFeasiblePositive),
    }
}

/// Runs every policy on the same seeded start scenes for each object count.
pub fn evaluate(config: &EvalConfig, models: &Models) -> Result<(EvalReport, Vec<TrialRecord>)> {
    let table = TableSpec::default();
    let mut rows = Vec::new();
    let mut summaries = Vec::new();
    let mut all = Vec::new();
    for &n in &config.object_counts {
        let specs = trial_specs(config.seed, config.n_trials, &[n]);
        let scenes = specs
            .iter()
            .map(|s| s.scene(table))
            .collect::<Result<Vec<_>>>()?;
        for &policy in &config.policies {
            let model = models.for_policy(policy)?;
            let mut trial = config.trial.clone();
            trial.policy = policy;
            trial.n_objects = n;
            trial.max_pushes = max_pushes_for(n);
            let records: Vec<TrialRecord> = specs
                .par_iter()
                .zip(&scenes)
                .map(|(spec, scene)| run_trial(&trial, model, scene, spec.trial_id, spec.trial_seed))
                .collect::<Result<_>>()?;
            for r in &records {
                rows.push(EvalRow {
                    policy,
                    n_objects: n,
                    trial: r.trial_id,
                    pushes_used: r.pushes_used,
                    success: r.status == TerminalStatus::Success,
                });
            }
            let s = summarize(policy, n, trial.max_pushes, &records);
            log::info!(
                "{policy} with {n} objects: {}/{} singulated",
                s.successes,
                s.trials
            );
            summaries.push(s);
            all.extend(records);
        }
    }
    Ok((
        EvalReport {
            schema: REPORT_SCHEMA.to_string(),
            seed: config.seed,
            rows,
            summaries,
        },
        all,
    ))
}

/// Writes `report.csv` (one row per trial) and `report.json` (summaries with
/// curves) into `dir`.
pub fn write_report(dir: &Path, report: &EvalReport) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, 0, e))?;
    let csv_path = dir.join("report.csv");
    let mut w = csv::Writer::from_path(&csv_path).map_err(|e| csv_error(&csv_path, e))?;
    w.write_record(["policy", "n_objects", "trial", "pushes_used", "success"])
        .map_err(|e| csv_error(&csv_path, e))?;
    for r in &report.rows {
        w.write_record([
            r.policy.name().to_string(),
            r.n_objects.to_string(),
            r.trial.to_string(),
            r.pushes_used.to_string(),
            (r.success as u8).to_string(),
        ])
        .map_err(|e| csv_error(&csv_path, e))?;
    }
    w.flush().map_err(|e| Error::io(&csv_path, 0, e))?;
    let json_path = dir.join("report.json");
    std::fs::write(&json_path, serde_json::to_string_pretty(report)?)
        .map_err(|e| Error::io(&json_path, 0, e))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::io(path, 0, std::io::Error::other(e))
}
