//! High-level planner: plans, action classification, perception questions
//! and completion checks.

use serde::{Deserialize, Serialize};

use crate::backend::{BackendError, ChatSession, Role};
use crate::prompts::{self, HistoryEntry, QaPair, TemplateId};
use crate::text::{extract_tags, parse_plan, yes_no_lead};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Plan {
    pub thought: String,
    pub steps: Vec<String>,
    /// Prompt the plan came from: first plan, action replan or plan replan.
    pub template: TemplateId,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PlannerError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("no plan could be read from the response")]
    Unparseable,
}

pub fn generate_plan(
    session: &ChatSession,
    objects: &[String],
    goal: &str,
    history: &[HistoryEntry],
) -> Result<Plan, PlannerError> {
    let prompt = prompts::plan_generate(objects, goal, history);
    // One retry with the same prompt; sampled backends often fix formatting.
    for _ in 0..2 {
        let response = session.ask(Role::Planner, &prompt, None)?;
        if let Some((thought, steps)) = parse_plan(&response) {
            return Ok(Plan { thought, steps, template: prompt.template });
        }
        log::warn!("unparseable plan response");
    }
    Err(PlannerError::Unparseable)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ActionKind {
    Vision,
    Motion,
}

/// Anything other than a leading "yes" is treated as a motion action.
pub fn classify_action(session: &ChatSession, action: &str) -> Result<ActionKind, BackendError> {
    let r = session.ask(Role::Planner, &prompts::classify_action(action), None)?;
    Ok(if yes_no_lead(&r) == Some(true) { ActionKind::Vision } else { ActionKind::Motion })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum QuestionType {
    ObjectPresence,
    ObjectAttribute,
    Neither,
}

pub fn question_type(session: &ChatSession, question: &str) -> Result<QuestionType, BackendError> {
    let r = session.ask(Role::Planner, &prompts::question_type(question), None)?.to_ascii_uppercase();
    // Check the longer label first: a response may mention both.
    Ok(if r.contains("OBJECT_ATTRIBUTE") {
        QuestionType::ObjectAttribute
    } else if r.contains("OBJECT_PRESENCE") {
        QuestionType::ObjectPresence
    } else {
        QuestionType::Neither
    })
}

/// At most two questions for the perceiver, minus those it cannot answer.
pub fn generate_questions(
    session: &ChatSession,
    goal: &str,
    plan: &[String],
    action: &str,
    observed: &[String],
) -> Result<Vec<String>, BackendError> {
    let r = session.ask(Role::Planner, &prompts::question_generate(goal, plan, action, observed), None)?;
    let mut kept = Vec::new();
    for q in extract_tags(&r, "question").into_iter().filter(|q| !q.is_empty()).take(2) {
        if question_type(session, &q)? != QuestionType::Neither {
            kept.push(q);
        }
    }
    Ok(kept)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Completion {
    pub done: bool,
    /// What is left to do when not done.
    pub residual: Option<String>,
}

pub fn check_complete(
    session: &ChatSession,
    plan: &[String],
    action: &str,
    qa: &[QaPair],
) -> Result<Completion, BackendError> {
    let r = session.ask(Role::Planner, &prompts::completion_check(plan, action, qa), None)?;
    let done = yes_no_lead(&r).unwrap_or(false);
    let residual = if done { None } else { extract_tags(&r, "action").into_iter().find(|a| !a.is_empty()) };
    Ok(Completion { done, residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{ChatBackend, ChatRequest};
    use std::sync::{Arc, Mutex};

    /// Answers from a queue.
    struct Queue(Mutex<Vec<&'static str>>);
    impl ChatBackend for Queue {
        fn complete(&self, _: &ChatRequest<'_>) -> Result<String, BackendError> {
            Ok(self.0.lock().unwrap().remove(0).to_string())
        }
    }

    fn session(answers: Vec<&'static str>) -> ChatSession {
        ChatSession::new(Arc::new(Queue(Mutex::new(answers))))
    }

    #[test]
    fn plan_gets_one_retry() {
        let s = session(vec!["I refuse", "[start plan]\n>Open the drawer\n[end plan]"]);
        let p = generate_plan(&s, &[], "g", &[]).unwrap();
        assert_eq!(p.steps, vec!["Open the drawer"]);
        assert_eq!(s.exchanges().len(), 2);
        let s = session(vec!["no", "still no"]);
        assert_eq!(generate_plan(&s, &[], "g", &[]), Err(PlannerError::Unparseable));
    }

    #[test]
    fn questions_drop_neither_and_cap_at_two() {
        let s = session(vec![
            "<question>a?</question><question>b?</question><question>c?</question>",
            "NEITHER",
            "OBJECT_PRESENCE",
        ]);
        assert_eq!(generate_questions(&s, "g", &[], "Look", &[]).unwrap(), vec!["b?"]);
    }

    #[test]
    fn completion_residual() {
        let s = session(vec!["No, the door is shut. <Action>Open the door</Action>", "Yes"]);
        let c = check_complete(&s, &[], "Look inside", &[]).unwrap();
        assert_eq!(c, Completion { done: false, residual: Some("Open the door".into()) });
        assert!(check_complete(&s, &[], "Look inside", &[]).unwrap().done);
    }
}
