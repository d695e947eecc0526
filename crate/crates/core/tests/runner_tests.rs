use singulate::geometry::{ConvexPolygon, Pose, Vec2};
use singulate::perception::SegmentId;
use singulate::proposals::PushHandle;
use singulate::runner::*;
use singulate::scene::*;
use singulate::Error;

fn squares(centers: &[(f64, f64)]) -> Scene {
    let objects = centers
        .iter()
        .enumerate()
        .map(|(i, &(x, y))| {
            SceneObject::new(
                ObjectId(i as u32),
                ConvexPolygon::rectangle(0.08, 0.08).unwrap(),
                Pose::new(Vec2::new(x, y), 0.0),
            )
        })
        .collect();
    Scene::new(TableSpec::default(), objects, 0).unwrap()
}

fn handle(object: u32, position: Vec2, normal: Vec2) -> PushHandle {
    PushHandle {
        position,
        normal,
        segment: SegmentId(object),
        object: ObjectId(object),
        length: DEFAULT_PUSH_LENGTH,
    }
}

#[test]
fn push_budget_constants() {
    assert_eq!(max_pushes_for(4), 6);
    assert_eq!(max_pushes_for(6), 8);
    assert_eq!(max_pushes_for(8), 11);
    assert_eq!(TrialConfig::new(4, PolicyKind::Random).singulation_threshold, 0.03);
}

#[test]
fn singulated_start_takes_no_pushes() {
    let s = squares(&[(0.2, 0.2), (0.6, 0.5)]);
    for policy in [PolicyKind::Random, PolicyKind::Baseline, PolicyKind::LookaheadOracle] {
        let r = run_trial(&TrialConfig::new(2, policy), None, &s, 0, 1).unwrap();
        assert_eq!(r.status, TerminalStatus::Success);
        assert_eq!(r.pushes_used, 0);
        assert!(r.pushes.is_empty());
    }
}

#[test]
fn feasibility_examples() {
    // isolated object, pushed from outside
    let s = squares(&[(0.5, 0.4)]);
    assert!(feasibility_check(&s, &handle(0, Vec2::new(0.46, 0.4), Vec2::new(1.0, 0.0))));
    // crevice between two touching squares: the disc would overlap the neighbour
    let s = squares(&[(0.4, 0.4), (0.4805, 0.4)]);
    assert!(!feasibility_check(&s, &handle(1, Vec2::new(0.4405, 0.4), Vec2::new(1.0, 0.0))));
    // object in a table corner; the table edge does not block the pusher
    let s = squares(&[(0.04, 0.04)]);
    assert!(feasibility_check(&s, &handle(0, Vec2::new(0.0, 0.04), Vec2::new(1.0, 0.0))));
}

#[test]
fn network_policy_requires_model() {
    let s = squares(&[(0.4, 0.4), (0.4805, 0.4)]);
    let cfg = TrialConfig::new(2, PolicyKind::VanillaNetwork);
    assert!(matches!(run_trial(&cfg, None, &s, 0, 1), Err(Error::MissingModel { .. })));
    let c = CollectConfig::new(PolicyKind::AggregatedNetwork, 1, vec![2], 1);
    assert!(matches!(collect_dataset(&c, None), Err(Error::MissingModel { .. })));
}

#[test]
fn collection_respects_budgets() {
    let c = CollectConfig::new(PolicyKind::Random, 10, vec![4], 17);
    let out = collect_dataset(&c, None).unwrap();
    assert!(out.samples.len() <= 60);
    assert_eq!(out.summary.trials, 10);
    assert_eq!(out.summary.samples, out.samples.len());
    assert_eq!(out.summary.positives + out.summary.negatives, out.samples.len());
    for r in &out.records {
        assert!(r.pushes_used <= r.max_pushes);
        assert_eq!(r.pushes_used, r.pushes.len());
        assert_eq!(r.status == TerminalStatus::Success, is_singulated(&r.final_scene, 0.03));
        if r.status == TerminalStatus::Success {
            assert!(r.final_singulated);
        }
        for (k, p) in r.pushes.iter().enumerate() {
            assert_eq!(p.push_index, k);
            assert_eq!(p.label, p.breakdown.label());
            assert_eq!(p.image.len(), 64 * 64);
        }
    }
}

#[test]
fn collection_is_deterministic() {
    let c = CollectConfig::new(PolicyKind::Baseline, 4, vec![3, 5], 23);
    let a = collect_dataset(&c, None).unwrap();
    let b = collect_dataset(&c, None).unwrap();
    assert_eq!(a.samples, b.samples);
    for (x, y) in a.records.iter().zip(&b.records) {
        assert_eq!(x.to_ndjson().unwrap(), y.to_ndjson().unwrap());
    }
}

#[test]
fn trial_specs_depend_only_on_seed_and_index() {
    let a = trial_specs(3, 8, &[4, 6]);
    let b = trial_specs(3, 4, &[4, 6]);
    assert_eq!(&a[..4], &b[..]);
    assert!(trial_specs(3, 5, &[]).is_empty());
    assert_eq!(a[1].n_objects, 6);
}

fn eval_config(n_trials: usize, policies: Vec<PolicyKind>) -> EvalConfig {
    EvalConfig {
        object_counts: vec![4],
        n_trials,
        policies,
        seed: 31,
        trial: TrialConfig::new(4, PolicyKind::Random),
    }
}

#[test]
fn zero_trial_evaluation() {
    let (rep, records) = evaluate(&eval_config(0, vec![PolicyKind::Random]), &Models::default()).unwrap();
    assert!(records.is_empty());
    assert!(rep.rows.is_empty());
    for s in &rep.summaries {
        assert_eq!(s.trials, 0);
        assert_eq!(s.success_rate, 0.0);
    }
}

#[test]
fn evaluation_curves_and_oracle_bound() {
    let policies = vec![PolicyKind::Random, PolicyKind::Baseline, PolicyKind::LookaheadOracle];
    let (rep, _) = evaluate(&eval_config(10, policies), &Models::default()).unwrap();
    assert_eq!(rep.rows.len(), 30);
    let oracle = rep
        .summaries
        .iter()
        .find(|s| s.policy == PolicyKind::LookaheadOracle)
        .unwrap()
        .success_rate;
    for s in &rep.summaries {
        assert_eq!(s.curve.len(), max_pushes_for(4) + 1);
        assert!(s.curve.windows(2).all(|w| w[0] <= w[1]));
        assert!((s.curve.last().unwrap() - s.success_rate).abs() < 1e-12);
        assert!(s.success_rate <= oracle, "{} beat the oracle", s.policy);
        assert_eq!(s.successes + s.budget_exhausted + s.no_feasible_positive, s.trials);
    }
    let dir = tempfile::tempdir().unwrap();
    write_report(dir.path(), &rep).unwrap();
    let csv = std::fs::read_to_string(dir.path().join("report.csv")).unwrap();
    assert!(csv.starts_with("policy,n_objects,trial,pushes_used,success\n"));
    assert_eq!(csv.lines().count(), 31);
}

#[test]
fn evaluation_needs_models_for_network_policies() {
    let r = evaluate(&eval_config(1, vec![PolicyKind::VanillaNetwork]), &Models::default());
    assert!(matches!(r, Err(Error::MissingModel { .. })));
}

#[test]
fn policy_names_round_trip() {
    for p in PolicyKind::ALL {
        assert_eq!(p.name().parse::<PolicyKind>().unwrap(), p);
    }
    assert!("nonsense".parse::<PolicyKind>().is_err());
}
