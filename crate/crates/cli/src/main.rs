use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use replan_core::backend::{ChatBackend, HttpBackend, HttpConfig, MatchMode, OracleBackend, ScriptedBackend, Transcript};
use replan_core::orchestrator::{run_batch, Ablation, EpisodeConfig, EpisodeResult};
use replan_core::report::{build_report, report_dir, summarize, Report};
use replan_core::world::TaskId;

#[derive(Parser)]
#[command(name = "replan", version, about = "Run and report closed-loop replanning episodes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run seeded episodes for each task and ablation.
    Run(RunArgs),
    /// Summarize a directory of episode logs.
    Report {
        log_dir: PathBuf,
        /// Also write the report as JSON here.
        #[arg(long)]
        json: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum BackendKind {
    Oracle,
    Scripted,
    Http,
}

/// Every flag is optional so a config file can fill the gaps.
#[derive(Debug, Clone, Default, clap::Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
struct RunArgs {
    /// Task name or "all"; repeatable.
    #[arg(long)]
    task: Vec<String>,
    #[arg(long, value_enum)]
    backend: Option<BackendKind>,
    /// Modules to remove for one cell, e.g. "perceiver" or "verifier+replan";
    /// repeatable, one cell per value. "none" is the full pipeline.
    #[arg(long)]
    ablate: Vec<String>,
    #[arg(long)]
    runs: Option<usize>,
    /// First seed; run i uses seed + i.
    #[arg(long)]
    seed: Option<u64>,
    /// Probability that an oracle diagnosis answer names the wrong object.
    #[arg(long)]
    noise_rate: Option<f64>,
    #[arg(long)]
    max_plan_attempts: Option<usize>,
    #[arg(long)]
    max_action_retries: Option<usize>,
    #[arg(long)]
    log_dir: Option<PathBuf>,
    /// Transcript replayed by the scripted backend.
    #[arg(long)]
    transcript: Option<PathBuf>,
    /// Match replayed prompts by template fingerprint instead of exact text.
    #[arg(long)]
    pattern_match: Option<bool>,
    /// Write each episode's exchanges as a transcript.
    #[arg(long)]
    record: Option<PathBuf>,
    /// JSON file with the same keys as the flags; flags win.
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
}

impl RunArgs {
    fn merged(self, file: RunArgs) -> RunArgs {
        fn pick<T>(a: Option<T>, b: Option<T>) -> Option<T> {
            a.or(b)
        }
        fn pick_vec<T>(a: Vec<T>, b: Vec<T>) -> Vec<T> {
            if a.is_empty() { b } else { a }
        }
        RunArgs {
            task: pick_vec(self.task, file.task),
            backend: pick(self.backend, file.backend),
            ablate: pick_vec(self.ablate, file.ablate),
            runs: pick(self.runs, file.runs),
            seed: pick(self.seed, file.seed),
            noise_rate: pick(self.noise_rate, file.noise_rate),
            max_plan_attempts: pick(self.max_plan_attempts, file.max_plan_attempts),
            max_action_retries: pick(self.max_action_retries, file.max_action_retries),
            log_dir: pick(self.log_dir, file.log_dir),
            transcript: pick(self.transcript, file.transcript),
            pattern_match: pick(self.pattern_match, file.pattern_match),
            record: pick(self.record, file.record),
            config: None,
        }
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{0}")]
struct ConfigError(String);

fn config_err(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

struct Plan {
    configs: Vec<EpisodeConfig>,
    backend: BackendKind,
    noise: f64,
    transcript: Option<(Transcript, MatchMode)>,
    http: Option<HttpConfig>,
    log_dir: Option<PathBuf>,
    record: Option<PathBuf>,
}

fn resolve(args: RunArgs) -> Result<Plan> {
    let args = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
            let file: RunArgs = serde_json::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
            args.merged(file)
        }
        None => args,
    };

    let mut tasks = Vec::new();
    for name in if args.task.is_empty() { vec!["all".to_string()] } else { args.task } {
        if name == "all" {
            tasks.extend(TaskId::ALL);
        } else {
            tasks.push(name.parse::<TaskId>().map_err(|e| config_err(e.to_string()))?);
        }
    }
    let mut ablations = Vec::new();
    for a in if args.ablate.is_empty() { vec!["none".to_string()] } else { args.ablate } {
        ablations.push(a.parse::<Ablation>().map_err(|e| config_err(e.to_string()))?);
    }
    let runs = args.runs.unwrap_or(10);
    if runs == 0 {
        return Err(config_err("--runs must be at least 1"));
    }
    let noise = args.noise_rate.unwrap_or(0.0);
    if !(0.0..=1.0).contains(&noise) {
        return Err(config_err("--noise-rate must be within [0, 1]"));
    }
    let base_seed = args.seed.unwrap_or(0);

    let mut configs = Vec::new();
    for &ablation in &ablations {
        for &task in &tasks {
            for i in 0..runs as u64 {
                let mut c = EpisodeConfig::new(task, base_seed.wrapping_add(i));
                c.ablation = ablation;
                if let Some(p) = args.max_plan_attempts {
                    c.plan_budget = p;
                }
                if let Some(r) = args.max_action_retries {
                    c.replan_budget = r;
                }
                configs.push(c);
            }
        }
    }

    let backend = args.backend.unwrap_or(BackendKind::Oracle);
    let mode = if args.pattern_match.unwrap_or(false) { MatchMode::Pattern } else { MatchMode::Exact };
    let transcript = match (backend, &args.transcript) {
        (BackendKind::Scripted, Some(p)) => {
            Some((Transcript::load(p, mode).map_err(|e| config_err(format!("{}: {e}", p.display())))?, mode))
        }
        (BackendKind::Scripted, None) => return Err(config_err("the scripted backend needs --transcript")),
        _ => None,
    };
    let http = match backend {
        BackendKind::Http => Some(HttpConfig::from_env().map_err(|e| config_err(e.to_string()))?),
        _ => None,
    };
    Ok(Plan { configs, backend, noise, transcript, http, log_dir: args.log_dir, record: args.record })
}

fn backend_for(plan: &Plan, cfg: &EpisodeConfig) -> Arc<dyn ChatBackend> {
    match plan.backend {
        BackendKind::Oracle => Arc::new(OracleBackend::with_noise(plan.noise, cfg.seed)),
        BackendKind::Scripted => {
            let (t, _) = plan.transcript.as_ref().expect("checked in resolve");
            Arc::new(ScriptedBackend::new(t.clone()))
        }
        BackendKind::Http => Arc::new(HttpBackend::new(plan.http.clone().expect("checked in resolve"))),
    }
}

fn episode_name(r: &EpisodeResult) -> String {
    format!("{}__{}__seed{}", r.task.as_str(), r.ablation.label(), r.seed)
}

fn run(args: RunArgs) -> Result<()> {
    let plan = resolve(args)?;
    let results = run_batch(&plan.configs, |c| backend_for(&plan, c));

    if let Some(dir) = &plan.log_dir {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        for r in &results {
            let path = dir.join(format!("{}.jsonl", episode_name(r)));
            std::fs::write(&path, r.log_jsonl()).with_context(|| format!("writing {}", path.display()))?;
        }
    }
    if let Some(path) = &plan.record {
        let mode = plan.transcript.as_ref().map_or(MatchMode::Exact, |(_, m)| *m);
        for r in &results {
            let exchanges: Vec<_> = r.exchanges().cloned().collect();
            let target = if results.len() == 1 { path.clone() } else { numbered(path, &episode_name(r)) };
            Transcript::from_exchanges(&exchanges, mode)
                .save(&target)
                .with_context(|| format!("writing {}", target.display()))?;
        }
    }

    let summaries: Vec<_> = results.iter().map(|r| summarize(&r.events)).collect::<Result<_, _>>()?;
    let report = build_report(&summaries);
    emit(&report, plan.log_dir.as_deref().map(|d| d.join("report.json")).as_deref())?;
    for r in results.iter().filter(|r| r.failure.is_some()) {
        log::info!("{} failed: {:?}", episode_name(r), r.failure);
    }
    Ok(())
}

/// `runs/t.jsonl` + "x" -> `runs/t-x.jsonl`.
fn numbered(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let ext = path.extension().map(|e| format!(".{}", e.to_string_lossy())).unwrap_or_default();
    path.with_file_name(format!("{stem}-{suffix}{ext}"))
}

fn emit(report: &Report, json: Option<&Path>) -> Result<()> {
    print!("{}", report.to_table());
    if let Some(path) = json {
        let text = serde_json::to_string_pretty(report)?;
        std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::Report { log_dir, json } => report_dir(&log_dir)
            .map_err(|e| config_err(format!("{}: {e}", log_dir.display())))
            .and_then(|r| emit(&r, json.as_deref())),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is::<ConfigError>() => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
