//! Aggregate reports over episode logs.
//!
//! Failed episodes are put into one failure category, checked in this order:
//!
//! - `robot-reason-dropped`: a diagnosis summary blamed the robot itself.
//! - `inconsistent-diagnoses`: the explanations for one failure disagreed.
//! - `primary-selection`: a primary term was not chosen by the verifier.
//! - `perception`: an explanation could not be mapped onto the scene, or every
//!   motion succeeded after a scene question and the goal was still missed.
//! - otherwise the episode's terminal failure kind.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::orchestrator::{Ablation, Event, EventKind, Failure};
use crate::text::tokens;
use crate::world::TaskId;

#[derive(Debug, thiserror::Error)]
pub enum LogError {
    #[error("line {line}: {source}")]
    Json { line: usize, source: serde_json::Error },
    #[error("log has no {0} event")]
    Missing(&'static str),
}

/// What the report needs from one episode log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub task: TaskId,
    pub seed: u64,
    pub ablation: Ablation,
    pub success: bool,
    pub actions: usize,
    pub perceiver_actions: usize,
    pub mpc_actions: usize,
    pub failure_category: Option<String>,
}

pub fn parse_log(jsonl: &str) -> Result<Vec<Event>, LogError> {
    jsonl
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|source| LogError::Json { line: i + 1, source }))
        .collect()
}

pub fn summarize(events: &[Event]) -> Result<EpisodeSummary, LogError> {
    let (task, seed, ablation) = events
        .iter()
        .find_map(|e| match &e.event {
            EventKind::Start { task, seed, ablation, .. } => Some((*task, *seed, *ablation)),
            _ => None,
        })
        .ok_or(LogError::Missing("start"))?;
    let outcome = events
        .iter()
        .rev()
        .find_map(|e| match &e.event {
            EventKind::Outcome { success, actions, perceiver_actions, mpc_actions, failure, .. } => {
                Some((*success, *actions, *perceiver_actions, *mpc_actions, failure.clone()))
            }
            _ => None,
        })
        .ok_or(LogError::Missing("outcome"))?;
    let (success, actions, perceiver_actions, mpc_actions, failure) = outcome;
    let failure_category = (!success).then(|| categorize(events, failure.as_ref()));
    Ok(EpisodeSummary { task, seed, ablation, success, actions, perceiver_actions, mpc_actions, failure_category })
}

fn categorize(events: &[Event], failure: Option<&Failure>) -> String {
    let kinds = || events.iter().map(|e| &e.event);
    let dropped = kinds().any(|k| matches!(k, EventKind::Diagnosis { dropped, .. } if !dropped.is_empty()));
    if dropped {
        return "robot-reason-dropped".into();
    }
    let inconsistent = kinds().any(|k| match k {
        EventKind::Diagnosis { explanations, .. } => {
            let distinct: BTreeSet<Vec<String>> = explanations.iter().map(|x| tokens(&x.text)).collect();
            distinct.len() > 1
        }
        _ => false,
    });
    if inconsistent {
        return "inconsistent-diagnoses".into();
    }
    let unverified_primary =
        kinds().any(|k| matches!(k, EventKind::Verify { fallback, primary_step, .. } if *fallback || primary_step.is_none()));
    if unverified_primary {
        return "primary-selection".into();
    }
    let flagged = kinds().any(|k| matches!(k, EventKind::Diagnosis { explanations, .. } if explanations.iter().any(|x| x.flagged)));
    let asked = kinds().any(|k| matches!(k, EventKind::Answer { .. }));
    let motion_failed = kinds().any(|k| matches!(k, EventKind::Mpc { success: false, .. }));
    if flagged || (asked && !motion_failed) {
        return "perception".into();
    }
    match failure {
        Some(Failure::PlanBudgetExhausted) => "plan-budget-exhausted",
        Some(Failure::ActionCapReached) => "action-cap-reached",
        Some(Failure::Backend { .. }) => "backend",
        None => "unknown",
    }
    .into()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub min: usize,
    pub max: usize,
}

impl Stats {
    pub fn of(values: &[usize]) -> Option<Stats> {
        let n = values.len() as f64;
        let mean = values.iter().sum::<usize>() as f64 / n;
        let var = values.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
        Some(Stats { mean, std: var.sqrt(), min: *values.iter().min()?, max: *values.iter().max()? })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub task: TaskId,
    pub ablation: String,
    pub runs: usize,
    pub successes: usize,
    /// Percent of runs that reached the goal.
    pub completion: f64,
    pub actions: Option<Stats>,
    pub perceiver_actions: Option<Stats>,
    pub mpc_actions: Option<Stats>,
    pub failures: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub cells: Vec<CellReport>,
    /// Mean completion per ablation label.
    pub averages: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub skipped: Vec<String>,
}

pub fn build_report(episodes: &[EpisodeSummary]) -> Report {
    let mut groups: BTreeMap<(String, TaskId), Vec<&EpisodeSummary>> = BTreeMap::new();
    for e in episodes {
        groups.entry((e.ablation.label(), e.task)).or_default().push(e);
    }
    let mut cells = Vec::new();
    for ((ablation, task), runs) in groups {
        let successes = runs.iter().filter(|e| e.success).count();
        let pick = |f: fn(&EpisodeSummary) -> usize| Stats::of(&runs.iter().map(|e| f(e)).collect::<Vec<_>>());
        let mut failures = BTreeMap::new();
        for c in runs.iter().filter_map(|e| e.failure_category.clone()) {
            *failures.entry(c).or_insert(0) += 1;
        }
        cells.push(CellReport {
            task,
            ablation,
            runs: runs.len(),
            successes,
            completion: 100.0 * successes as f64 / runs.len() as f64,
            actions: pick(|e| e.actions),
            perceiver_actions: pick(|e| e.perceiver_actions),
            mpc_actions: pick(|e| e.mpc_actions),
            failures,
        });
    }
    let mut sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for c in &cells {
        let s = sums.entry(c.ablation.clone()).or_default();
        s.0 += c.completion;
        s.1 += 1;
    }
    let averages = sums.into_iter().map(|(k, (sum, n))| (k, sum / n as f64)).collect();
    Report { cells, averages, skipped: Vec::new() }
}

/// Reads every `*.jsonl` file in `dir` in name order. Unreadable or malformed
/// logs are skipped with a warning and listed in the report.
pub fn report_dir(dir: &Path) -> std::io::Result<Report> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    paths.sort();
    let mut summaries = Vec::new();
    let mut skipped = Vec::new();
    for p in paths {
        let parsed = std::fs::read_to_string(&p)
            .map_err(|e| e.to_string())
            .and_then(|text| parse_log(&text).and_then(|ev| summarize(&ev)).map_err(|e| e.to_string()));
        match parsed {
            Ok(s) => summaries.push(s),
            Err(e) => {
                log::warn!("skipping {}: {e}", p.display());
                skipped.push(p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default());
            }
        }
    }
    let mut report = build_report(&summaries);
    report.skipped = skipped;
    Ok(report)
}

impl Report {
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<18} {:<14} {:>7} {:>6} {:>13} {:>9} {:>8}  failures",
            "task", "ablation", "success", "rate", "actions", "min-max", "perc/mpc"
        );
        for c in &self.cells {
            let (actions, range) = match c.actions {
                Some(s) => (format!("{:.1} ± {:.1}", s.mean, s.std), format!("{}-{}", s.min, s.max)),
                None => ("-".into(), "-".into()),
            };
            let split = match (c.perceiver_actions, c.mpc_actions) {
                (Some(p), Some(m)) => format!("{:.1}/{:.1}", p.mean, m.mean),
                _ => "-".into(),
            };
            let failures: Vec<String> = c.failures.iter().map(|(k, v)| format!("{k}:{v}")).collect();
            let _ = writeln!(
                out,
                "{:<18} {:<14} {:>7} {:>5.0}% {:>13} {:>9} {:>8}  {}",
                c.task.as_str(),
                c.ablation,
                format!("{}/{}", c.successes, c.runs),
                c.completion,
                actions,
                range,
                split,
                failures.join(" ")
            );
        }
        for (label, avg) in &self.averages {
            let _ = writeln!(out, "average {label}: {avg:.1}%");
        }
        for s in &self.skipped {
            let _ = writeln!(out, "skipped {s}");
        }
        out
    }
}
