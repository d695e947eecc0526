mod commands;
mod config;
mod failure;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use singulate::runner::PolicyKind;

use config::RunConfig;
use failure::Failure;

#[derive(Parser, Debug)]
#[command(name = "singulate", version, about = "Push-proposal object singulation pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run trials with one policy and write a labeled dataset plus trial logs.
    Collect(Flags),
    /// Train a push classifier on a dataset.
    Train(Flags),
    /// Train the vanilla network, collect with it, and train the aggregated one.
    Aggregate(Flags),
    /// Evaluate policies on shared seeded scenes and write report files.
    Eval(Flags),
    /// Tabulate summaries from one or more report.json files.
    Compare(Flags),
    /// Re-run a collect or eval directory from its config and verify its files.
    Replay(Flags),
    /// Dump observation and push images and a proposal score table.
    Inspect(Flags),
}

#[derive(Args, Debug, Default)]
struct Flags {
    /// TOML config file with [trial], [collect], [train], [aggregate], [eval] and [inspect] sections.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override any config key, e.g. --set trial.push_length=0.15 (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    jobs: Option<usize>,
    /// Object counts, comma separated.
    #[arg(long, value_delimiter = ',')]
    objects: Option<Vec<usize>>,
    #[arg(long)]
    trials: Option<usize>,
    /// Policy name; eval accepts a comma-separated list.
    #[arg(long, value_delimiter = ',')]
    policy: Option<Vec<PolicyKind>>,
    #[arg(long)]
    model: Option<PathBuf>,
    /// Input dataset, report, or run directory (repeatable for compare).
    #[arg(long)]
    data: Vec<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    positive_threshold: Option<f64>,
    /// Number of push images inspect dumps.
    #[arg(long)]
    top: Option<usize>,
}

fn reject(flag: &str, command: &str) -> Failure {
    Failure::usage(format!("--{flag} does not apply to {command}"))
}

fn single_policy(p: &[PolicyKind], command: &str) -> Result<PolicyKind, Failure> {
    match p {
        [one] => Ok(*one),
        _ => Err(Failure::usage(format!("{command} takes exactly one --policy"))),
    }
}

fn single_data(d: &[PathBuf], command: &str) -> Result<Option<PathBuf>, Failure> {
    match d {
        [] => Ok(None),
        [one] => Ok(Some(one.clone())),
        _ => Err(Failure::usage(format!("{command} takes at most one --data"))),
    }
}

/// Inputs are stored absolute so a resolved config replays from anywhere.
fn absolute(p: Option<PathBuf>) -> Option<PathBuf> {
    p.map(|p| std::path::absolute(&p).unwrap_or(p))
}

/// Applies the dedicated flags on top of the loaded config.
fn resolve(name: &str, f: &Flags) -> Result<RunConfig, Failure> {
    let mut cfg = config::load(f.config.as_deref(), &f.sets)?;
    cfg.command = Some(name.to_string());
    if let Some(s) = f.seed {
        cfg.seed = s;
    }
    if let Some(j) = f.jobs {
        cfg.jobs = j;
    }
    if let Some(t) = f.positive_threshold {
        cfg.trial.positive_threshold = t;
    }
    let data = if name == "compare" { None } else { single_data(&f.data, name)? };
    match name {
        "collect" => {
            let c = &mut cfg.collect;
            if let Some(p) = &f.policy {
                c.policy = single_policy(p, name)?;
            }
            c.trials = f.trials.unwrap_or(c.trials);
            c.objects = f.objects.clone().unwrap_or(c.objects.clone());
            c.model = absolute(f.model.clone().or(c.model.take()));
            c.out = f.out.clone().unwrap_or(c.out.clone());
            if data.is_some() {
                return Err(reject("data", name));
            }
        }
        "train" | "aggregate" => {
            let t = &mut cfg.train;
            t.epochs = f.epochs.unwrap_or(t.epochs);
            t.batch_size = f.batch_size.unwrap_or(t.batch_size);
            t.lr = f.lr.unwrap_or(t.lr);
            if name == "train" {
                t.data = absolute(data.or(t.data.take()));
                t.out = f.out.clone().unwrap_or(t.out.clone());
                for (set, flag) in [(f.trials.is_some(), "trials"), (f.objects.is_some(), "objects")] {
                    if set {
                        return Err(reject(flag, name));
                    }
                }
            } else {
                let a = &mut cfg.aggregate;
                a.data = absolute(data.or(a.data.take()));
                a.trials = f.trials.unwrap_or(a.trials);
                a.objects = f.objects.clone().unwrap_or(a.objects.clone());
                a.out = f.out.clone().unwrap_or(a.out.clone());
            }
            for (set, flag) in [(f.policy.is_some(), "policy"), (f.model.is_some(), "model")] {
                if set {
                    return Err(reject(flag, name));
                }
            }
        }
        "eval" => {
            let e = &mut cfg.eval;
            e.policies = f.policy.clone().unwrap_or(e.policies.clone());
            e.trials = f.trials.unwrap_or(e.trials);
            e.objects = f.objects.clone().unwrap_or(e.objects.clone());
            e.model = absolute(f.model.clone().or(e.model.take()));
            e.out = f.out.clone().unwrap_or(e.out.clone());
            if data.is_some() {
                return Err(reject("data", name));
            }
        }
        "inspect" => {
            let i = &mut cfg.inspect;
            if let Some(p) = &f.policy {
                i.policy = single_policy(p, name)?;
            }
            if let Some(o) = &f.objects {
                i.objects = *o.first().ok_or_else(|| Failure::usage("--objects is empty"))?;
            }
            i.top = f.top.unwrap_or(i.top);
            i.model = absolute(f.model.clone().or(i.model.take()));
            i.data = absolute(data.or(i.data.take()));
            i.out = f.out.clone().unwrap_or(i.out.clone());
        }
        _ => {}
    }
    if cfg.jobs == 0 {
        return Err(Failure::usage("--jobs must be at least 1"));
    }
    Ok(cfg)
}

fn init_threads(jobs: usize) -> Result<(), Failure> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build_global()
        .map_err(|e| Failure::other(e.to_string()))
}

fn run(cli: Cli) -> Result<(), Failure> {
    let (name, flags) = match &cli.command {
        Command::Collect(f) => ("collect", f),
        Command::Train(f) => ("train", f),
        Command::Aggregate(f) => ("aggregate", f),
        Command::Eval(f) => ("eval", f),
        Command::Compare(f) => ("compare", f),
        Command::Replay(f) => ("replay", f),
        Command::Inspect(f) => ("inspect", f),
    };
    let cfg = resolve(name, flags)?;
    init_threads(cfg.jobs)?;
    log::info!("{name}: seed {} on {} thread(s)", cfg.seed, cfg.jobs);
    let summary = match name {
        "collect" => commands::collect(&cfg)?,
        "train" => commands::train_cmd(&cfg)?,
        "aggregate" => commands::aggregate(&cfg)?,
        "eval" => commands::eval(&cfg)?,
        "compare" => return commands::compare(&flags.data, &mut std::io::stdout().lock()),
        "replay" => {
            let dir = single_data(&flags.data, name)?.ok_or_else(|| Failure::usage("replay needs --data <run directory>"))?;
            commands::replay(&dir, flags.out.as_deref())?
        }
        "inspect" => commands::inspect(&cfg)?,
        _ => unreachable!(),
    };
    println!("{summary}");
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SINGULATE_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let f = Failure::usage(e.to_string().trim().to_string());
            eprintln!("{}", f.to_json());
            return ExitCode::from(f.exit_code as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", f.to_json());
            ExitCode::from(f.exit_code as u8)
        }
    }
}
