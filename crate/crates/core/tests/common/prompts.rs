//! Prompt fixtures and golden comparison shared by the integration tests.

use std::path::PathBuf;

use replan_core::prompts::{self, HistoryEntry, QaPair, TemplateId};
use serde::Deserialize;

#[derive(Deserialize)]
struct Qa {
    question: String,
    answer: String,
}

#[derive(Deserialize)]
pub struct Fixtures {
    object: String,
    objects: Vec<String>,
    joints: Vec<String>,
    goal: String,
    plan: Vec<String>,
    action: String,
    relocation_action: String,
    motion_plan: Vec<String>,
    qa: Vec<Qa>,
    call: String,
    sentence: String,
    explanations: Vec<String>,
    question: String,
    action_failure: HistoryEntryFixture,
    plan_failure: HistoryEntryFixture,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum HistoryEntryFixture {
    Action { plan_step: String, action: String, reason: String },
    Plan { thought: String, steps: Vec<String>, reason: String },
}

impl From<&HistoryEntryFixture> for HistoryEntry {
    fn from(f: &HistoryEntryFixture) -> Self {
        match f {
            HistoryEntryFixture::Action { plan_step, action, reason } => {
                HistoryEntry::Action { plan_step: plan_step.clone(), action: action.clone(), reason: reason.clone() }
            }
            HistoryEntryFixture::Plan { thought, steps, reason } => {
                HistoryEntry::Plan { thought: thought.clone(), steps: steps.clone(), reason: reason.clone() }
            }
        }
    }
}

fn dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden/prompts")
}

fn lower_first(s: &str) -> String {
    let mut c = s.chars();
    c.next().map(|f| f.to_lowercase().chain(c).collect()).unwrap_or_default()
}

/// (golden file stem, template, rendered text)
pub fn rendered(f: &Fixtures) -> Vec<(&'static str, TemplateId, String)> {
    let qa: Vec<QaPair> = f.qa.iter().map(|p| QaPair { question: p.question.clone(), answer: p.answer.clone() }).collect();
    let action_failure = HistoryEntry::from(&f.action_failure);
    let plan_failure = HistoryEntry::from(&f.plan_failure);
    let wish = lower_first(&f.action);
    let p = |stem, prompt: prompts::Prompt| (stem, prompt.template, prompt.text);
    vec![
        p("presence-query", prompts::presence_query(&f.object)),
        p("plan-generate", prompts::plan_generate(&f.objects, &f.goal, &[])),
        p("classify-action", prompts::classify_action(&f.action)),
        p("motion-plan", prompts::motion_plan(&f.objects, &f.joints, &f.plan, &qa, &f.relocation_action, true)),
        p("motion-plan.optional", prompts::motion_plan(&f.objects, &f.joints, &f.plan, &qa, &f.action, false)),
        p("relocation-check", prompts::relocation_check(&f.relocation_action)),
        p("reward-code", prompts::reward_code(&f.objects, &f.joints, &f.action, &f.motion_plan)),
        p("verify-reward-step", prompts::verify_reward_step(&f.motion_plan, &f.call)),
        p("verify-primary-step", prompts::verify_primary_step(&f.action, &f.motion_plan)),
        (
            "diagnosis",
            TemplateId::Diagnosis,
            (0..6).map(|v| prompts::diagnosis(v, &wish, &f.objects).text).collect::<Vec<_>>().join("\n"),
        ),
        p("remap-detect", prompts::remap_detect(&f.objects, &f.sentence)),
        p("remap-rewrite", prompts::remap_rewrite(&f.objects, &f.sentence)),
        p("diagnosis-summary", prompts::diagnosis_summary(&wish, &f.explanations)),
        p("action-replan", prompts::plan_generate(&f.objects, &f.goal, std::slice::from_ref(&action_failure))),
        p("question-generate", prompts::question_generate(&f.goal, &f.plan, &f.action, &f.objects)),
        p("question-type", prompts::question_type(&f.question)),
        p("state-query", prompts::state_query(&f.question, &f.objects, &f.action)),
        p("completion-check", prompts::completion_check(&f.plan, &f.action, &qa)),
        p("plan-replan", prompts::plan_generate(&f.objects, &f.goal, &[action_failure, plan_failure])),
    ]
}

/// Stems whose rendering differs from the golden file, with the first
/// differing byte printed to stderr.
pub fn golden_mismatches() -> Vec<&'static str> {
    let f: Fixtures = serde_json::from_str(&std::fs::read_to_string(dir().join("fixtures.json")).unwrap()).unwrap();
    let all = rendered(&f);
    let mut covered: Vec<TemplateId> = all.iter().map(|(_, t, _)| *t).collect();
    covered.sort();
    covered.dedup();
    assert_eq!(covered.len(), TemplateId::ALL.len(), "fixtures must cover every template");

    let mut mismatched = Vec::new();
    for (stem, _, text) in &all {
        let golden = std::fs::read_to_string(dir().join(format!("{stem}.txt"))).unwrap_or_default();
        if &golden != text {
            let at = golden.bytes().zip(text.bytes()).position(|(a, b)| a != b).unwrap_or(golden.len().min(text.len()));
            eprintln!("{stem}: first difference at byte {at}");
            mismatched.push(*stem);
        }
    }
    mismatched
}
