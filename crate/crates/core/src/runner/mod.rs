//! Closed-loop trials: observe, sample, rank, check feasibility, push, stop.
//! Also data collection, the two-round training pipeline and evaluation.

mod collect;
mod evaluate;
mod pipeline;

pub use collect::{
    collect_dataset, trial_specs, CollectConfig, CollectSummary, Collected, TrialSpec,
    VALIDATION_FRACTION,
};
pub use evaluate::{
    evaluate, write_report, EvalConfig, EvalReport, EvalRow, Models, PolicySummary,
    REPORT_SCHEMA,
};
pub use pipeline::{train_iterations, PipelineConfig, PipelineOutput};

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::baseline::{self, BaselineScore, SegmentGraph, TrackState};
use crate::encoder::{encode, PushImage};
use crate::error::{Error, Result};
use crate::geometry::Vec2;
use crate::network::{forward, NetworkParams};
use crate::oracle::{label_push, LabelBreakdown, LabelCriteria};
use crate::perception::{
    over_segment, render_with, RenderStyle, ViewTransform, DEFAULT_SCALE, DEFAULT_SPLIT_PROB,
};
use crate::proposals::{sample_handles, to_proposals, PushHandle, PushProposal, DEFAULT_PER_SEGMENT};
use crate::rng::{derive_seed, rng_from, STREAM_HANDLES, STREAM_POLICY, STREAM_SEGMENT};
use crate::scene::{
    apply_push, is_singulated, singulated_count, PushOutcome, Scene, DEFAULT_PUSH_LENGTH,
    SINGULATION_THRESHOLD,
};

pub const PUSHER_RADIUS: f64 = 0.015;
pub const PUSHER_BACKOFF: f64 = 0.02;
pub const TRIAL_LOG_SCHEMA: &str = "singulate.trial/1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Random,
    VanillaNetwork,
    AggregatedNetwork,
    Baseline,
    /// Simulates every proposal one step ahead and takes the best outcome.
    LookaheadOracle,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 5] = [
        PolicyKind::Random,
        PolicyKind::VanillaNetwork,
        PolicyKind::AggregatedNetwork,
        PolicyKind::Baseline,
        PolicyKind::LookaheadOracle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Random => "random",
            PolicyKind::VanillaNetwork => "vanilla_network",
            PolicyKind::AggregatedNetwork => "aggregated_network",
            PolicyKind::Baseline => "baseline",
            PolicyKind::LookaheadOracle => "lookahead_oracle",
        }
    }

    pub fn is_network(self) -> bool {
        matches!(self, PolicyKind::VanillaNetwork | PolicyKind::AggregatedNetwork)
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        PolicyKind::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| format!("unknown policy {s:?}"))
    }
}

/// `⌊1.3 · n⌋ + 1`.
pub fn max_pushes_for(n_objects: usize) -> usize {
    (13 * n_objects) / 10 + 1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialConfig {
    pub n_objects: usize,
    pub max_pushes: usize,
    pub singulation_threshold: f64,
    pub policy: PolicyKind,
    pub positive_threshold: f64,
    pub split_prob: f64,
    pub per_segment: usize,
    pub push_length: f64,
    pub view_scale: f64,
    pub render: RenderStyle,
    pub criteria: LabelCriteria,
}

impl TrialConfig {
    pub fn new(n_objects: usize, policy: PolicyKind) -> Self {
        Self {
            n_objects,
            max_pushes: max_pushes_for(n_objects),
            singulation_threshold: SINGULATION_THRESHOLD,
            policy,
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

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminalStatus {
    Success,
    PushBudgetExhausted,
    NoFeasiblePositive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PushRecord {
    pub push_index: usize,
    pub scene_before: Scene,
    pub segment_count: usize,
    pub proposals: usize,
    pub dropped_handles: usize,
    /// Candidate scores in proposal order.
    pub scores: Vec<f64>,
    pub chosen: PushProposal,
    pub chosen_index: usize,
    pub chosen_score: f64,
    pub feasible_checked: usize,
    pub baseline: Option<BaselineScore>,
    pub outcome: PushOutcome,
    pub label: bool,
    pub breakdown: LabelBreakdown,
    /// Encoded push image of the executed proposal.
    #[serde(skip)]
    pub image: Vec<f32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial_id: u64,
    pub trial_seed: u64,
    pub n_objects: usize,
    pub max_pushes: usize,
    pub policy: PolicyKind,
    pub pushes: Vec<PushRecord>,
    pub status: TerminalStatus,
    pub pushes_used: usize,
    /// Whether the explicit distance check held when the trial ended; for
    /// `NoFeasiblePositive` this tells whether the implicit stop was right.
    pub final_singulated: bool,
    pub final_scene: Scene,
}

/// True iff a pusher disc can be placed behind the handle, backed off along
/// the push normal, without touching any object. The table edge does not
/// block it.
pub fn feasibility_check(scene: &Scene, handle: &PushHandle) -> bool {
    feasibility_check_with(scene, handle, PUSHER_RADIUS, PUSHER_BACKOFF)
}

pub fn feasibility_check_with(scene: &Scene, handle: &PushHandle, radius: f64, backoff: f64) -> bool {
    let center: Vec2 = handle.position - handle.normal * backoff;
    scene
        .objects
        .iter()
        .all(|o| o.world_polygon().distance_to_point(center) >= radius)
}

struct Ranked {
    scores: Vec<f64>,
    baseline: Option<Vec<BaselineScore>>,
    images: Option<Vec<PushImage>>,
}

fn lookahead_value(scene: &Scene, handle: &PushHandle, config: &TrialConfig) -> Result<f64> {
    let (after, outcome) = apply_push(scene, &handle.command())?;
    let b = label_push(scene, &after, &outcome, handle, &config.criteria)?;
    let done = is_singulated(&after, config.singulation_threshold);
    let frac = singulated_count(&after, config.singulation_threshold) as f64
        / after.objects.len().max(1) as f64;
    Ok(2.0 * done as u8 as f64 + b.label() as u8 as f64 + frac)
}

/// Runs one trial from `scene`. `model` must be present exactly for the
/// network policies.
pub fn run_trial(
    config: &TrialConfig,
    model: Option<&NetworkParams>,
    scene: &Scene,
    trial_id: u64,
    trial_seed: u64,
) -> Result<TrialRecord> {
    if config.policy.is_network() != model.is_some() {
        return Err(match model {
            None => Error::MissingModel {
                policy: config.policy.to_string(),
            },
            Some(_) => Error::InvalidScene(format!(
                "{} policy does not take a model",
                config.policy
            )),
        });
    }
    let view = ViewTransform::for_table(&scene.table, config.view_scale);
    let diag = (scene.table.width.powi(2) + scene.table.height.powi(2)).sqrt();
    let mut current = scene.clone();
    let mut tracks = TrackState::new();
    let mut pushes = Vec::new();

    let status = loop {
        if is_singulated(&current, config.singulation_threshold) {
            break TerminalStatus::Success;
        }
        let k = pushes.len();
        if k >= config.max_pushes {
            break TerminalStatus::PushBudgetExhausted;
        }
        let k64 = k as u64;
        let segments = over_segment(
            &current,
            derive_seed(trial_seed, &[STREAM_SEGMENT, k64]),
            config.split_prob,
        );
        let observation = render_with(&current, &segments, &view, &config.render);
        let handles = sample_handles(
            &segments,
            &current.table,
            config.per_segment,
            config.push_length,
            derive_seed(trial_seed, &[STREAM_HANDLES, k64]),
        );
        let (proposals, dropped) = to_proposals(&handles, &view);
        if proposals.is_empty() {
            break TerminalStatus::NoFeasiblePositive;
        }
        tracks.update(&segments, diag);

        let ranked = match config.policy {
            PolicyKind::Random => {
                let mut rng = rng_from(derive_seed(trial_seed, &[STREAM_POLICY, k64]));
                Ranked {
                    scores: proposals.iter().map(|_| rng.gen::<f64>()).collect(),
                    baseline: None,
                    images: None,
                }
            }
            PolicyKind::VanillaNetwork | PolicyKind::AggregatedNetwork => {
                let images: Vec<PushImage> =
                    proposals.iter().map(|p| encode(&observation, p)).collect();
                let scores = forward(model.expect("checked above"), &images)?;
                Ranked {
                    scores,
                    baseline: None,
                    images: Some(images),
                }
            }
            PolicyKind::Baseline => {
                let graph = SegmentGraph::new(&segments);
                let b: Vec<BaselineScore> = proposals
                    .iter()
                    .map(|p| baseline::score(&p.handle, &graph, &tracks, config.push_length))
                    .collect();
                Ranked {
                    scores: b.iter().map(|s| s.score).collect(),
                    baseline: Some(b),
                    images: None,
                }
            }
            PolicyKind::LookaheadOracle => Ranked {
                scores: proposals
                    .iter()
                    .map(|p| lookahead_value(&current, &p.handle, config))
                    .collect::<Result<_>>()?,
                baseline: None,
                images: None,
            },
        };

        let mut order: Vec<usize> = (0..proposals.len()).collect();
        order.sort_by(|&a, &b| ranked.scores[b].total_cmp(&ranked.scores[a]).then(a.cmp(&b)));
        let mut checked = 0;
        let mut chosen = None;
        for &i in &order {
            if config.policy.is_network() && ranked.scores[i] < config.positive_threshold {
                break;
            }
            checked += 1;
            if feasibility_check(&current, &proposals[i].handle) {
                chosen = Some(i);
                break;
            }
        }
        let Some(ci) = chosen else {
            break TerminalStatus::NoFeasiblePositive;
        };

        let proposal = proposals[ci];
        let (after, outcome) = apply_push(&current, &proposal.handle.command())?;
        let breakdown = label_push(&current, &after, &outcome, &proposal.handle, &config.criteria)?;
        let image = match ranked.images {
            Some(mut imgs) => std::mem::take(&mut imgs[ci].pixels),
            None => encode(&observation, &proposal).pixels,
        };
        log::debug!(
            "push {k}: proposal {ci} score {:.3}, label {}",
            ranked.scores[ci],
            breakdown.label()
        );
        tracks.record_push(proposal.handle.segment);
        pushes.push(PushRecord {
            push_index: k,
            scene_before: std::mem::replace(&mut current, after),
            segment_count: segments.len(),
            proposals: proposals.len(),
            dropped_handles: dropped,
            chosen_score: ranked.scores[ci],
            baseline: ranked.baseline.as_ref().map(|b| b[ci]),
            scores: ranked.scores,
            chosen: proposal,
            chosen_index: ci,
            feasible_checked: checked,
            outcome,
            label: breakdown.label(),
            breakdown,
            image,
        });
    };

    Ok(TrialRecord {
        trial_id,
        trial_seed,
        n_objects: scene.objects.len(),
        max_pushes: config.max_pushes,
        policy: config.policy,
        pushes_used: pushes.len(),
        pushes,
        status,
        final_singulated: is_singulated(&current, config.singulation_threshold),
        final_scene: current,
    })
}

/// One NDJSON line of a trial log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TrialLogLine {
    Push {
        schema: String,
        trial_id: u64,
        policy: PolicyKind,
        record: Box<PushRecord>,
    },
    End {
        schema: String,
        trial_id: u64,
        trial_seed: u64,
        policy: PolicyKind,
        n_objects: usize,
        max_pushes: usize,
        status: TerminalStatus,
        pushes_used: usize,
        final_singulated: bool,
    },
}

impl TrialRecord {
    /// Serialized NDJSON lines: one per push, then a terminal line.
    pub fn to_ndjson(&self) -> Result<String> {
        let mut out = String::new();
        for p in &self.pushes {
            out.push_str(&serde_json::to_string(&TrialLogLine::Push {
                schema: TRIAL_LOG_SCHEMA.into(),
                trial_id: self.trial_id,
                policy: self.policy,
                record: Box::new(p.clone()),
            })?);
            out.push('\n');
        }
        out.push_str(&serde_json::to_string(&TrialLogLine::End {
            schema: TRIAL_LOG_SCHEMA.into(),
            trial_id: self.trial_id,
            trial_seed: self.trial_seed,
            policy: self.policy,
            n_objects: self.n_objects,
            max_pushes: self.max_pushes,
            status: self.status,
            pushes_used: self.pushes_used,
            final_singulated: self.final_singulated,
        })?);
        out.push('\n');
        Ok(out)
    }
}
