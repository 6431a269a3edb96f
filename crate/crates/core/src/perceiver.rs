//! Perceiver: presence sweeps, scene questions and failure diagnosis.

use serde::{Deserialize, Serialize};

use crate::backend::{BackendError, ChatSession, Role};
use crate::prompts;
use crate::text::{extract_tags, tokens, yes_no_lead};
use crate::world::WorldState;

/// Number of differently worded diagnosis questions asked per failure.
pub const DIAGNOSIS_VARIANTS: usize = 6;

/// Vocabulary entries the perceiver reports seeing, in vocabulary order.
pub fn presence_sweep(
    session: &ChatSession,
    scene: &WorldState,
    vocabulary: &[String],
) -> Result<Vec<String>, BackendError> {
    let mut seen = Vec::new();
    for name in vocabulary {
        let r = session.ask(Role::Perceiver, &prompts::presence_query(name), Some(scene))?;
        if yes_no_lead(&r) == Some(true) {
            seen.push(name.clone());
        }
    }
    Ok(seen)
}

pub fn query_state(
    session: &ChatSession,
    scene: &WorldState,
    question: &str,
    objects: &[String],
    context: &str,
) -> Result<String, BackendError> {
    session.ask(Role::Perceiver, &prompts::state_query(question, objects, context), Some(scene))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Explanation {
    pub raw: String,
    /// After mapping onto scene names.
    pub text: String,
    /// Still names something outside the scene after the rewrite.
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnosis {
    pub explanations: Vec<Explanation>,
    /// Up to two consolidated reasons, robot-related ones removed.
    pub reasons: Vec<String>,
    /// Reasons the summary gave that were about the robot itself.
    pub dropped: Vec<String>,
}

impl Diagnosis {
    pub fn reason(&self) -> Option<String> {
        (!self.reasons.is_empty()).then(|| self.reasons.join(" "))
    }
}

/// Rewrites `sentence` onto the scene vocabulary when the detector says it
/// uses other names.
pub fn remap(session: &ChatSession, objects: &[String], sentence: &str) -> Result<Explanation, BackendError> {
    let detect = session.ask(Role::Verifier, &prompts::remap_detect(objects, sentence), None)?;
    if yes_no_lead(&detect) != Some(true) {
        return Ok(Explanation { raw: sentence.into(), text: sentence.into(), flagged: false });
    }
    let rewritten = session.ask(Role::Verifier, &prompts::remap_rewrite(objects, sentence), None)?;
    let rewritten = rewritten.trim().to_string();
    let flagged = rewritten.is_empty() || rewritten == sentence.trim();
    let text = if rewritten.is_empty() { sentence.to_string() } else { rewritten };
    Ok(Explanation { raw: sentence.into(), text, flagged })
}

const ROBOT_WORDS: &[&str] = &["robot", "gripper", "arm", "palm", "manipulator", "holding", "grasping"];

/// True for reasons about the robot rather than the scene.
pub fn is_robot_reason(reason: &str) -> bool {
    tokens(reason).iter().any(|t| ROBOT_WORDS.contains(&t.as_str()))
}

/// Asks every diagnosis variant in a fixed order, maps the answers onto the
/// scene vocabulary (when `remap_names` is set) and consolidates them.
pub fn diagnose(
    session: &ChatSession,
    scene: &WorldState,
    action: &str,
    objects: &[String],
    remap_names: bool,
) -> Result<Diagnosis, BackendError> {
    let wish = lower_first(action);
    let mut explanations = Vec::with_capacity(DIAGNOSIS_VARIANTS);
    for v in 0..DIAGNOSIS_VARIANTS {
        let raw = session.ask(Role::Perceiver, &prompts::diagnosis(v, &wish, objects), Some(scene))?;
        let raw = raw.trim();
        explanations.push(if remap_names {
            remap(session, objects, raw)?
        } else {
            Explanation { raw: raw.into(), text: raw.into(), flagged: false }
        });
    }
    let texts: Vec<String> = explanations.iter().map(|e| e.text.clone()).collect();
    let summary = session.ask(Role::Planner, &prompts::diagnosis_summary(&wish, &texts), None)?;
    let (dropped, reasons): (Vec<String>, Vec<String>) = extract_tags(&summary, "reason")
        .into_iter()
        .filter(|r| !r.is_empty())
        .take(2)
        .partition(|r| is_robot_reason(r));
    Ok(Diagnosis { explanations, reasons, dropped })
}

fn lower_first(s: &str) -> String {
    let mut c = s.trim().chars();
    c.next().map(|f| f.to_lowercase().chain(c).collect()).unwrap_or_default()
}
