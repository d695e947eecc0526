//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Criterion 6 runs the full collect/train/aggregate/evaluate
//! pipeline and dominates the runtime.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use singulate::baseline::{aabb_manhattan, fuse, history_feature};
use singulate::dataset::write_dataset;
use singulate::encoder::{encode, EncoderConventions, CROP_SIZE};
use singulate::geometry::{Aabb, Pose, Vec2};
use singulate::network::{build_reduced_architecture, forward_inputs, TrainConfig};
use singulate::perception::{over_segment, render, RenderStyle, SegmentId, ViewTransform, DEFAULT_SCALE};
use singulate::proposals::{PushHandle, PushProposal};
use singulate::runner::*;
use singulate::scene::*;

mod common;
use common::*;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn gradient_oracle() -> Outcome {
    let t = Instant::now();
    let g = gradient_check(5, 250, 1e-4);
    let secs = t.elapsed().as_secs_f64();
    outcome(
        g.checked >= 200 && g.worst <= 1e-4 && secs < 60.0,
        format!(
            "reduced net, {} coordinates over {:?}, worst relative error {:.2e}, {:.1}s",
            g.checked, g.kinds, g.worst, secs
        ),
    )
}

fn forward_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for draw in 0..50 {
        let p = random_params(build_reduced_architecture(), draw);
        let inputs: Vec<Vec<f32>> = (0..4).map(|_| random_input(&mut rng, 256)).collect();
        let refs: Vec<&[f32]> = inputs.iter().map(|v| v.as_slice()).collect();
        let got = match forward_inputs(&p, &refs) {
            Ok(g) => g,
            Err(e) => return outcome(false, e.to_string()),
        };
        for (x, g) in inputs.iter().zip(&got) {
            worst = worst.max((naive_forward(&p, x) - g).abs());
        }
    }
    outcome(worst <= 1e-5, format!("50 draws, worst |batch - naive| {worst:.2e}"))
}

fn baseline_formulas() -> Outcome {
    let bx = |x0, y0, x1, y1| Aabb::new(Vec2::new(x0, y0), Vec2::new(x1, y1));
    let checks = [
        (aabb_manhattan(&bx(0.0, 0.0, 1.0, 1.0), &bx(0.5, 0.5, 2.0, 2.0)), 0.0),
        (aabb_manhattan(&bx(0.0, 0.0, 0.1, 0.1), &bx(0.2, 0.0, 0.3, 0.1)), 0.1),
        (aabb_manhattan(&bx(0.0, 0.0, 0.1, 0.1), &bx(0.2, 0.3, 0.3, 0.4)), 0.3),
        (history_feature(0), 1.0),
        (history_feature(1), 0.367_879_441_171_442_3),
        (history_feature(3), 0.049_787_068_367_863_94),
        (fuse(0.0, history_feature(0)), 0.5),
        (fuse(1.0, history_feature(0)), 1.0),
        (fuse(0.667, history_feature(2)), 0.5 * 0.667 + 0.5 * 0.135_335_283_236_612_7),
    ];
    let worst = checks.iter().map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    outcome(worst <= 1e-12, format!("{} hand-computed values, worst error {worst:.1e}", checks.len()))
}

fn geometry_oracle() -> Outcome {
    let table = TableSpec::new(100.0, 100.0, Vec2::new(-50.0, -50.0)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    let mut overlapping = 0;
    for _ in 0..1000 {
        let a = random_convex_polygon(&mut rng, Vec2::ZERO, 0.1);
        let off = Vec2::new(rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3));
        let b = random_convex_polygon(&mut rng, off, 0.1);
        let expected = brute_force_distance(&a, &b);
        let objects = [a, b]
            .into_iter()
            .enumerate()
            .map(|(i, p)| SceneObject::new(ObjectId(i as u32), p, Pose::default()))
            .collect();
        let scene = Scene::new(table, objects, 0).unwrap();
        worst = worst.max((min_pairwise_distance(&scene) - expected).abs());
        overlapping += (expected == 0.0) as usize;
    }
    outcome(
        worst <= 1e-9,
        format!("1000 pairs ({overlapping} touching/overlapping), worst error {worst:.1e}"),
    )
}

fn protocol_constants() -> Outcome {
    let (m4, m6) = (max_pushes_for(4), max_pushes_for(6));
    outcome(
        m4 == 6 && m6 == 8 && SINGULATION_THRESHOLD == 0.03,
        format!("max_pushes(4) = {m4}, max_pushes(6) = {m6}, threshold = {SINGULATION_THRESHOLD} m"),
    )
}

fn rate(report: &EvalReport, policy: PolicyKind, n: usize) -> f64 {
    report
        .summaries
        .iter()
        .find(|s| s.policy == policy && s.n_objects == n)
        .map_or(f64::NAN, |s| s.success_rate)
}

fn direction_of_effect() -> Outcome {
    let t = Instant::now();
    let round1 = match collect_dataset(&CollectConfig::new(PolicyKind::Random, 560, vec![3, 4, 5, 6], 2024), None) {
        Ok(c) => c,
        Err(e) => return outcome(false, e.to_string()),
    };
    let config = PipelineConfig {
        train: TrainConfig::default(),
        round2: CollectConfig::new(PolicyKind::VanillaNetwork, 240, vec![3, 4, 5, 6], 2025),
        seed: 7,
    };
    let out = match train_iterations(&round1.samples, &config) {
        Ok(o) => o,
        Err(e) => return outcome(false, e.to_string()),
    };
    let eval = EvalConfig {
        object_counts: vec![4, 6],
        n_trials: 100,
        policies: PolicyKind::ALL.to_vec(),
        seed: 99,
        trial: TrialConfig::new(4, PolicyKind::Random),
    };
    let models = Models {
        vanilla: Some(out.vanilla),
        aggregated: Some(out.aggregated),
    };
    let report = match evaluate(&eval, &models) {
        Ok((r, _)) => r,
        Err(e) => return outcome(false, e.to_string()),
    };
    let mut rates = BTreeMap::new();
    for s in &report.summaries {
        rates.insert(format!("{}@{}", s.policy, s.n_objects), s.success_rate);
    }
    let a = rate(&report, PolicyKind::VanillaNetwork, 4) - rate(&report, PolicyKind::Random, 4);
    let b = rate(&report, PolicyKind::AggregatedNetwork, 6) - rate(&report, PolicyKind::VanillaNetwork, 6);
    let c = report.summaries.iter().all(|s| s.success_rate <= rate(&report, PolicyKind::LookaheadOracle, s.n_objects));
    outcome(
        a >= 0.15 && b >= 0.0 && c,
        format!(
            "(a) vanilla - random @4 = {a:+.2} (b) aggregated - vanilla @6 = {b:+.2} (c) oracle bound {c}; \
             {} pushes collected; rates {rates:?}; {:.0}s",
            round1.samples.len() + out.round2.len(),
            t.elapsed().as_secs_f64()
        ),
    )
}

fn run_small_pipeline(dir: &Path) -> singulate::Result<()> {
    let round1 = collect_dataset(&CollectConfig::new(PolicyKind::Random, 16, vec![3, 4], 5), None)?;
    write_dataset(&dir.join("round1.ndjson"), &round1.samples)?;
    let config = PipelineConfig {
        train: TrainConfig {
            epochs: 2,
            batch_size: 16,
            ..TrainConfig::default()
        },
        round2: CollectConfig::new(PolicyKind::VanillaNetwork, 4, vec![3, 4], 6),
        seed: 8,
    };
    let out = train_iterations(&round1.samples, &config)?;
    out.save(dir, &round1.samples, &EncoderConventions::default())?;
    let eval = EvalConfig {
        object_counts: vec![4],
        n_trials: 3,
        policies: PolicyKind::ALL.to_vec(),
        seed: 9,
        trial: TrialConfig::new(4, PolicyKind::Random),
    };
    let models = Models {
        vanilla: Some(out.vanilla),
        aggregated: Some(out.aggregated),
    };
    let (report, _) = evaluate(&eval, &models)?;
    write_report(dir, &report)
}

fn determinism() -> Outcome {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        if let Err(e) = run_small_pipeline(d.path()) {
            return outcome(false, e.to_string());
        }
    }
    let mut names: Vec<String> = fs::read_dir(a.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    let differing: Vec<&String> = names
        .iter()
        .filter(|n| fs::read(a.path().join(n)).ok() != fs::read(b.path().join(n)).ok())
        .collect();
    let required = ["round1.ndjson", "vanilla.model", "aggregated.model", "report.csv", "report.json"];
    let present = required.iter().all(|r| names.iter().any(|n| n == r));
    outcome(
        differing.is_empty() && present,
        format!("{} files compared byte for byte {names:?}; differing {differing:?}", names.len()),
    )
}

fn encoder_properties() -> Outcome {
    let table = TableSpec::default();
    let dummy = PushHandle {
        position: Vec2::ZERO,
        normal: Vec2::new(1.0, 0.0),
        segment: SegmentId(0),
        object: ObjectId(0),
        length: DEFAULT_PUSH_LENGTH,
    };
    let mut identity_ok = true;
    let mut half_turn_worst: f32 = 0.0;
    for seed in 0..5 {
        let scene = generate_scene(5, &default_shape_library(), table, seed).unwrap();
        let img = render(&scene, &over_segment(&scene, seed, 0.3), &ViewTransform::for_table(&table, DEFAULT_SCALE));
        let c = Vec2::new(160.0, 128.0);
        let a = encode(&img, &PushProposal { c, alpha: 0.0, handle: dummy });
        let b = encode(&img, &PushProposal { c, alpha: std::f64::consts::PI, handle: dummy });
        for v in 0..CROP_SIZE {
            for u in 0..CROP_SIZE {
                identity_ok &= a.pixels[v * CROP_SIZE + u] == img.get(u + 128, v + 96);
                let r = b.pixels[(CROP_SIZE - 1 - v) * CROP_SIZE + (CROP_SIZE - 1 - u)];
                half_turn_worst = half_turn_worst.max((a.pixels[v * CROP_SIZE + u] - r).abs());
            }
        }
    }
    let fractions: Vec<f64> = (0..50)
        .map(|seed| equivariance_fraction(seed, 4.0 / 255.0, &RenderStyle::default()))
        .collect();
    let min = fractions.iter().cloned().fold(1.0, f64::min);
    let mean = fractions.iter().sum::<f64>() / fractions.len() as f64;
    outcome(
        identity_ok && half_turn_worst <= 2.0 / 255.0 && min >= 0.99,
        format!(
            "identity exact {identity_ok}; half-turn worst {:.2}/255; equivariance over 50 scenes min {min:.4} mean {mean:.4}",
            half_turn_worst * 255.0
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("gradient oracle", gradient_oracle),
        ("forward oracle", forward_oracle),
        ("baseline formulas", baseline_formulas),
        ("geometry oracle", geometry_oracle),
        ("protocol constants", protocol_constants),
        ("direction of effect", direction_of_effect),
        ("determinism", determinism),
        ("encoder properties", encoder_properties),
    ];
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|s| s.parse().ok());
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        if only.is_some_and(|k| k != i + 1) {
            continue;
        }
        let o = f();
        failed += !o.pass as usize;
        println!("{} criterion {} ({name}): {}", if o.pass { "PASS" } else { "FAIL" }, i + 1, o.detail);
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
