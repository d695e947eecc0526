use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde_json::json;
use singulate::baseline::{score as baseline_score, SegmentGraph, TrackState};
use singulate::dataset::{read_dataset, write_dataset};
use singulate::encoder::{encode, EncoderConventions};
use singulate::network::{forward, load_model, save_model, train, NetworkParams};
use singulate::oracle::label_push;
use singulate::perception::{over_segment, render_with, ViewTransform};
use singulate::proposals::{sample_handles, to_proposals};
use singulate::rng::{derive_seed, STREAM_HANDLES, STREAM_SEGMENT};
use singulate::runner::*;
use singulate::scene::{apply_push, TableSpec};

use crate::config::{write_resolved, RunConfig, RESOLVED_CONFIG};
use crate::failure::{require, Failure};

/// Files a replayed run must reproduce, per command.
pub const COLLECT_FILES: [&str; 4] = ["dataset.ndjson", "dataset.bin", "trials.ndjson", "summary.json"];
pub const EVAL_FILES: [&str; 3] = ["report.csv", "report.json", "trials.ndjson"];

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), Failure> {
    fs::write(path, bytes).map_err(|e| Failure::io(path, e))
}

fn conventions(cfg: &RunConfig) -> EncoderConventions {
    EncoderConventions::current(cfg.trial.view_scale, &cfg.trial.render)
}

/// Loads a model and refuses one trained under different encoder
/// conventions.
fn load_checked(path: &Path, cfg: &RunConfig) -> Result<NetworkParams, Failure> {
    require(path)?;
    let (params, conv) = load_model(path)?;
    let want = conventions(cfg);
    if conv != want {
        return Err(Failure::schema(format!(
            "{} was trained with encoder conventions {conv:?}, this run uses {want:?}",
            path.display()
        )));
    }
    Ok(params)
}

fn trial_log(records: &[TrialRecord]) -> Result<String, Failure> {
    let mut out = String::new();
    for r in records {
        out.push_str(&r.to_ndjson()?);
    }
    Ok(out)
}

fn required<'a>(path: &'a Option<PathBuf>, what: &str) -> Result<&'a Path, Failure> {
    let p = path
        .as_deref()
        .ok_or_else(|| Failure::usage(format!("{what} needs --data")))?;
    require(p)?;
    Ok(p)
}

pub fn collect(cfg: &RunConfig) -> Result<serde_json::Value, Failure> {
    let c = &cfg.collect;
    let model = if c.policy.is_network() {
        let p = c
            .model
            .as_deref()
            .ok_or_else(|| Failure::usage(format!("policy {} needs --model", c.policy)))?;
        Some(load_checked(p, cfg)?)
    } else {
        None
    };
    write_resolved(&c.out, cfg)?;
    let config = CollectConfig {
        policy: c.policy,
        n_trials: c.trials,
        object_counts: c.objects.clone(),
        seed: cfg.seed,
        trial: cfg.trial.template(c.policy),
        validation_fraction: c.validation_fraction,
    };
    let out = collect_dataset(&config, model.as_ref())?;
    write_dataset(&c.out.join("dataset.ndjson"), &out.samples)?;
    write_file(&c.out.join("trials.ndjson"), trial_log(&out.records)?)?;
    let summary = serde_json::to_value(&out.summary)?;
    write_file(&c.out.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    Ok(summary)
}

pub fn train_cmd(cfg: &RunConfig) -> Result<serde_json::Value, Failure> {
    let t = &cfg.train;
    let data = required(&t.data, "train")?;
    let samples = read_dataset(data)?;
    write_resolved(&t.out, cfg)?;
    let (params, log) = train(&samples, &t.train_config(), cfg.seed)?;
    save_model(&t.out.join("network.model"), &params, &conventions(cfg))?;
    let log = serde_json::to_value(&log)?;
    write_file(&t.out.join("train_log.json"), serde_json::to_string_pretty(&log)?)?;
    Ok(json!({
        "model": t.out.join("network.model"),
        "epochs": log["epochs"].as_array().map_or(0, |e| e.len()),
        "final": log["epochs"].as_array().and_then(|e| e.last().cloned()),
    }))
}

pub fn aggregate(cfg: &RunConfig) -> Result<serde_json::Value, Failure> {
    let a = &cfg.aggregate;
    let data = required(&a.data, "aggregate")?;
    let round1 = read_dataset(data)?;
    write_resolved(&a.out, cfg)?;
    let policy = PolicyKind::VanillaNetwork;
    let config = PipelineConfig {
        train: cfg.train.train_config(),
        round2: CollectConfig {
            policy,
            n_trials: a.trials,
            object_counts: a.objects.clone(),
            // round-2 scenes must not repeat the round-1 ones
            seed: derive_seed(cfg.seed, &[2]),
            trial: cfg.trial.template(policy),
            validation_fraction: cfg.collect.validation_fraction,
        },
        seed: cfg.seed,
    };
    let out = train_iterations(&round1, &config)?;
    out.save(&a.out, &round1, &conventions(cfg))?;
    Ok(json!({
        "round1": round1.len(),
        "round2": out.round2_summary,
        "merged": out.merged_len,
        "out": a.out,
    }))
}

fn models_for(cfg: &RunConfig) -> Result<Models, Failure> {
    let e = &cfg.eval;
    let needs = |p: PolicyKind| e.policies.contains(&p);
    if !e.policies.iter().any(|p| p.is_network()) {
        return Ok(Models::default());
    }
    let base = e
        .model
        .as_deref()
        .ok_or_else(|| Failure::usage("network policies need --model (a model file or an aggregate output directory)"))?;
    require(base)?;
    let pick = |name: &str| if base.is_dir() { base.join(name) } else { base.to_path_buf() };
    let load = |p: PolicyKind, name: &str| -> Result<Option<NetworkParams>, Failure> {
        if needs(p) {
            load_checked(&pick(name), cfg).map(Some)
        } else {
            Ok(None)
        }
    };
    Ok(Models {
        vanilla: load(PolicyKind::VanillaNetwork, "vanilla.model")?,
        aggregated: load(PolicyKind::AggregatedNetwork, "aggregated.model")?,
    })
}

pub fn eval(cfg: &RunConfig) -> Result<serde_json::Value, Failure> {
    let e = &cfg.eval;
    let models = models_for(cfg)?;
    write_resolved(&e.out, cfg)?;
    let config = EvalConfig {
        object_counts: e.objects.clone(),
        n_trials: e.trials,
        policies: e.policies.clone(),
        seed: cfg.seed,
        trial: cfg.trial.template(PolicyKind::Random),
    };
    let (report, records) = evaluate(&config, &models)?;
    write_report(&e.out, &report)?;
    write_file(&e.out.join("trials.ndjson"), trial_log(&records)?)?;
    Ok(json!({
        "out": e.out,
        "summaries": report.summaries.iter().map(|s| json!({
            "policy": s.policy,
            "n_objects": s.n_objects,
            "trials": s.trials,
            "success_rate": s.success_rate,
            "mean_pushes": s.mean_pushes,
            "std_pushes": s.std_pushes,
        })).collect::<Vec<_>>(),
    }))
}

/// Prints one CSV table of summaries across report files.
pub fn compare(reports: &[PathBuf], out: &mut impl Write) -> Result<(), Failure> {
    if reports.is_empty() {
        return Err(Failure::usage("compare needs at least one --data report.json"));
    }
    let mut loaded = Vec::new();
    for p in reports {
        require(p)?;
        let text = fs::read_to_string(p).map_err(|e| Failure::io(p, e))?;
        let report: EvalReport = serde_json::from_str(&text)
            .map_err(|e| Failure::schema(format!("{}: not an evaluation report ({e})", p.display())))?;
        if report.schema != REPORT_SCHEMA {
            return Err(Failure::schema(format!(
                "{}: schema {} (expected {REPORT_SCHEMA})",
                p.display(),
                report.schema
            )));
        }
        loaded.push((p, report));
    }
    let fmt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.3}"));
    let io = |e| Failure::other(format!("stdout: {e}"));
    writeln!(out, "report,policy,n_objects,trials,success_rate,mean_pushes,std_pushes").map_err(io)?;
    for (p, r) in &loaded {
        for s in &r.summaries {
            writeln!(
                out,
                "{},{},{},{},{:.3},{},{}",
                p.display(),
                s.policy,
                s.n_objects,
                s.trials,
                s.success_rate,
                fmt(s.mean_pushes),
                fmt(s.std_pushes)
            )
            .map_err(io)?;
        }
    }
    Ok(())
}

/// Re-runs a stored collect or eval run from its resolved config and checks
/// that every artifact comes out byte-identical.
pub fn replay(run_dir: &Path, out: Option<&Path>) -> Result<serde_json::Value, Failure> {
    let cfg_path = run_dir.join(RESOLVED_CONFIG);
    require(&cfg_path)?;
    let mut cfg = crate::config::load(Some(&cfg_path), &[])?;
    let dest = out.map_or_else(|| run_dir.join("replay"), Path::to_path_buf);
    let files: &[&str] = match cfg.command.as_deref() {
        Some("collect") => {
            cfg.collect.out = dest.clone();
            collect(&cfg)?;
            &COLLECT_FILES
        }
        Some("eval") => {
            cfg.eval.out = dest.clone();
            eval(&cfg)?;
            &EVAL_FILES
        }
        other => {
            return Err(Failure::usage(format!(
                "replay supports collect and eval runs, {} was produced by {other:?}",
                run_dir.display()
            )))
        }
    };
    let mut verdicts = Vec::new();
    let mut identical = true;
    for f in files {
        let a = fs::read(run_dir.join(f)).map_err(|e| Failure::io(&run_dir.join(f), e))?;
        let b = fs::read(dest.join(f)).map_err(|e| Failure::io(&dest.join(f), e))?;
        identical &= a == b;
        verdicts.push(json!({ "file": f, "identical": a == b }));
    }
    let result = json!({ "identical": identical, "replay": dest, "files": verdicts });
    if identical {
        Ok(result)
    } else {
        Err(Failure::other(format!("replay diverged: {result}")))
    }
}

pub fn inspect(cfg: &RunConfig) -> Result<serde_json::Value, Failure> {
    let i = &cfg.inspect;
    if let Some(data) = &i.data {
        require(data)?;
        let samples = read_dataset(data)?;
        fs::create_dir_all(&i.out).map_err(|e| Failure::io(&i.out, e))?;
        write_resolved(&i.out, cfg)?;
        let mut table = String::from("index,label,trial_id,push_index,policy,c_x,c_y,alpha\n");
        for (k, s) in samples.iter().take(i.top).enumerate() {
            write_file(&i.out.join(format!("sample_{k:04}.pgm")), s.image.to_pgm())?;
            let p = &s.image.proposal;
            table.push_str(&format!(
                "{k},{},{},{},{},{},{},{}\n",
                s.label, s.meta.trial_id, s.meta.push_index, s.meta.policy, p.c.x, p.c.y, p.alpha
            ));
        }
        write_file(&i.out.join("samples.csv"), table)?;
        return Ok(json!({ "dumped": samples.len().min(i.top), "out": i.out }));
    }

    let model = match (i.policy.is_network(), &i.model) {
        (true, None) => return Err(Failure::usage(format!("policy {} needs --model", i.policy))),
        (_, Some(p)) => Some(load_checked(p, cfg)?),
        (false, None) => None,
    };
    write_resolved(&i.out, cfg)?;
    let table = TableSpec::default();
    let spec = trial_specs(cfg.seed, 1, &[i.objects])[0];
    let scene = spec.scene(table)?;
    let t = &cfg.trial;
    let segments = over_segment(&scene, derive_seed(spec.trial_seed, &[STREAM_SEGMENT, 0]), t.split_prob);
    let view = ViewTransform::for_table(&table, t.view_scale);
    let obs = render_with(&scene, &segments, &view, &t.render);
    write_file(&i.out.join("observation.pgm"), obs.to_pgm())?;
    write_file(&i.out.join("observation.json"), serde_json::to_string(&obs.sidecar())?)?;
    write_file(&i.out.join("scene.json"), scene.to_json()?)?;

    let handles = sample_handles(
        &segments,
        &table,
        t.per_segment,
        t.push_length,
        derive_seed(spec.trial_seed, &[STREAM_HANDLES, 0]),
    );
    let (proposals, dropped) = to_proposals(&handles, &view);
    let images: Vec<_> = proposals.iter().map(|p| encode(&obs, p)).collect();
    let network = match &model {
        Some(m) => Some(forward(m, &images)?),
        None => None,
    };
    let graph = SegmentGraph::new(&segments);
    let mut tracks = TrackState::new();
    tracks.update(&segments, (table.width.powi(2) + table.height.powi(2)).sqrt());

    let mut rows = Vec::with_capacity(proposals.len());
    for (k, p) in proposals.iter().enumerate() {
        let b = baseline_score(&p.handle, &graph, &tracks, t.push_length);
        let (after, outcome) = apply_push(&scene, &p.handle.command())?;
        let label = label_push(&scene, &after, &outcome, &p.handle, &t.criteria)?.label();
        let rank_score = network.as_ref().map_or(b.score, |n| n[k]);
        rows.push((k, p, b, network.as_ref().map(|n| n[k]), label, feasibility_check(&scene, &p.handle), rank_score));
    }
    let mut csv = String::from(
        "index,segment,object,c_x,c_y,alpha,feasible,f_s,f_h,baseline_score,network_score,oracle_label\n",
    );
    for (k, p, b, n, label, feasible, _) in &rows {
        csv.push_str(&format!(
            "{k},{},{},{},{},{},{},{},{},{},{},{}\n",
            p.handle.segment.0,
            p.handle.object.0,
            p.c.x,
            p.c.y,
            p.alpha,
            *feasible as u8,
            b.f_s,
            b.f_h,
            b.score,
            n.map_or(String::new(), |v| v.to_string()),
            *label as u8
        ));
    }
    write_file(&i.out.join("scores.csv"), csv)?;

    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.sort_by(|&a, &b| rows[b].6.total_cmp(&rows[a].6).then(a.cmp(&b)));
    for (rank, &k) in order.iter().take(i.top).enumerate() {
        write_file(&i.out.join(format!("push_{rank:02}_{k:04}.pgm")), images[k].to_pgm())?;
    }
    Ok(json!({
        "objects": scene.objects.len(),
        "segments": segments.len(),
        "proposals": proposals.len(),
        "dropped": dropped,
        "out": i.out,
    }))
}
