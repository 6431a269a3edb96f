//! Low-level planner: action to motion description to reward program.

use crate::backend::{BackendError, ChatSession, Role};
use crate::dsl::{parse_reward_program, validate_names, ParseError, RewardProgram, ValidationError};
use crate::prompts::{self, QaPair};
use crate::text::{parse_motion_plan, yes_no_lead};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LowLevelError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("no motion description could be read from the response")]
    UnparseableMotionPlan,
    #[error("reward code does not parse: {0}")]
    Parse(#[from] ParseError),
    #[error("reward code does not validate: {0}")]
    Validation(#[from] ValidationError),
}

/// True when the action moves an object somewhere.
pub fn relocation_check(session: &ChatSession, action: &str) -> Result<bool, BackendError> {
    let r = session.ask(Role::Planner, &prompts::relocation_check(action), None)?;
    Ok(yes_no_lead(&r) == Some(true))
}

pub fn motion_plan(
    session: &ChatSession,
    objects: &[String],
    joints: &[String],
    procedure: &[String],
    observed: &[QaPair],
    action: &str,
    relocation: bool,
) -> Result<Vec<String>, LowLevelError> {
    let prompt = prompts::motion_plan(objects, joints, procedure, observed, action, relocation);
    let r = session.ask(Role::Planner, &prompt, None)?;
    parse_motion_plan(&r).ok_or(LowLevelError::UnparseableMotionPlan)
}

/// Reward program for `motion_plan`, parsed and checked against `vocabulary`
/// (the scene names the program may use, aliases included). A response that
/// fails either check is requested once more before giving up.
pub fn reward_code(
    session: &ChatSession,
    objects: &[String],
    vocabulary: &[String],
    joints: &[String],
    action: &str,
    motion_plan: &[String],
) -> Result<RewardProgram, LowLevelError> {
    let prompt = prompts::reward_code(objects, joints, action, motion_plan);
    let mut last = None;
    for _ in 0..2 {
        let r = session.ask(Role::Planner, &prompt, None)?;
        let checked = parse_reward_program(&r)
            .map_err(LowLevelError::from)
            .and_then(|p| validate_names(p, vocabulary, joints).map_err(LowLevelError::from));
        match checked {
            Ok(p) => return Ok(p),
            Err(e) => {
                log::warn!("rejected reward code: {e}");
                last = Some(e);
            }
        }
    }
    Err(last.expect("loop ran"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{ChatBackend, ChatRequest};
    use std::sync::{Arc, Mutex};

    struct Queue(Mutex<Vec<&'static str>>);
    impl ChatBackend for Queue {
        fn complete(&self, _: &ChatRequest<'_>) -> Result<String, BackendError> {
            Ok(self.0.lock().unwrap().remove(0).to_string())
        }
    }

    fn session(answers: Vec<&'static str>) -> ChatSession {
        ChatSession::new(Arc::new(Queue(Mutex::new(answers))))
    }

    fn s(v: &[&str]) -> Vec<String> {
        v.iter().map(|x| x.to_string()).collect()
    }

    #[test]
    fn reward_code_retries_once_then_reports() {
        let good = "reset_reward()\nminimize_l2_distance_reward(\"palm\", \"kettle\")\nexecute_plan()";
        let sess = session(vec!["reset_reward()\nexecute_plan(", good]);
        let vocab = s(&["kettle"]);
        let p = reward_code(&sess, &vocab, &vocab, &[], "Grab the kettle", &[]).unwrap();
        assert_eq!(p.term_indices(), vec![1]);

        let bad = "reset_reward()\nminimize_l2_distance_reward(\"palm\", \"teapot\")\nexecute_plan()";
        let sess = session(vec![bad, bad]);
        let err = reward_code(&sess, &vocab, &vocab, &[], "Grab", &[]).unwrap_err();
        assert_eq!(err, LowLevelError::Validation(ValidationError::UnknownObject { name: "teapot".into(), line: 2 }));
    }

    #[test]
    fn motion_plan_needs_markers() {
        let sess = session(vec!["palm close to kettle"]);
        let r = motion_plan(&sess, &[], &[], &[], &[], "Grab", false);
        assert_eq!(r, Err(LowLevelError::UnparseableMotionPlan));
    }
}
