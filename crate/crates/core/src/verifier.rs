//! Reward verifier: drops terms that match no motion-plan step and picks the
//! primary term.

use serde::{Deserialize, Serialize};

use crate::backend::{BackendError, ChatSession, Role};
use crate::dsl::RewardProgram;
use crate::prompts;
use crate::text::step_tag;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verified {
    pub program: RewardProgram,
    /// Printed calls that were dropped.
    pub removed: Vec<String>,
    /// 1-based motion-plan step the primary term was chosen for.
    pub primary_step: Option<usize>,
    /// True when no kept term matched the chosen step and the last term was used.
    pub fallback: bool,
}

/// Motion-plan step for each term call, `None` when the verifier answered -1.
/// An unreadable answer keeps the term with no step.
pub fn filter_terms(
    session: &ChatSession,
    motion_plan: &[String],
    program: &RewardProgram,
) -> Result<Vec<(usize, Option<Option<usize>>)>, BackendError> {
    let mut out = Vec::new();
    for i in program.term_indices() {
        let call = program.calls[i].to_string();
        let r = session.ask(Role::Verifier, &prompts::verify_reward_step(motion_plan, &call), None)?;
        let step = match step_tag(&r) {
            Some(n) if n >= 1 && (n as usize) <= motion_plan.len() => Some(Some(n as usize)),
            Some(_) => Some(None),
            None => None,
        };
        out.push((i, step));
    }
    Ok(out)
}

pub fn verify(
    session: &ChatSession,
    action: &str,
    motion_plan: &[String],
    program: &RewardProgram,
) -> Result<Verified, BackendError> {
    let steps = filter_terms(session, motion_plan, program)?;
    let keep: Vec<usize> = steps.iter().filter(|(_, s)| *s != Some(None)).map(|(i, _)| *i).collect();
    let removed = steps
        .iter()
        .filter(|(_, s)| *s == Some(None))
        .map(|(i, _)| program.calls[*i].to_string())
        .collect();

    let r = session.ask(Role::Verifier, &prompts::verify_primary_step(action, motion_plan), None)?;
    let primary_step = step_tag(&r).filter(|n| *n >= 1).map(|n| n as usize);
    let chosen = primary_step.and_then(|n| {
        steps.iter().rev().find(|(i, s)| keep.contains(i) && *s == Some(Some(n))).map(|(i, _)| *i)
    });
    let fallback = chosen.is_none();
    let primary_call = chosen.or_else(|| keep.last().copied());
    let retained = program.clone().with_primary(primary_call).retain_terms(&keep);
    Ok(Verified { program: retained, removed, primary_step, fallback })
}

/// Verifier disabled: every term kept; the inline primary if the program
/// marks one, otherwise the last term.
pub fn unverified(program: &RewardProgram) -> Verified {
    let fallback = program.primary.is_none();
    let primary = program.primary.or_else(|| program.term_indices().last().copied());
    Verified { program: program.clone().with_primary(primary), removed: Vec::new(), primary_step: None, fallback }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{ChatBackend, ChatRequest};
    use crate::dsl::{parse_reward_program, RewardFunction};
    use std::sync::{Arc, Mutex};

    struct Queue(Mutex<Vec<&'static str>>);
    impl ChatBackend for Queue {
        fn complete(&self, _: &ChatRequest<'_>) -> Result<String, BackendError> {
            Ok(self.0.lock().unwrap().remove(0).to_string())
        }
    }

    const KETTLE: &str = "reset_reward()\nminimize_l2_distance_reward(\"palm\", \"kettle\")\nmaximize_l2_distance_reward(\"kettle\", \"microwave_handle\")\nminimize_l2_distance_reward(\"palm\", \"rest_position\")\nexecute_plan()";

    fn plan() -> Vec<String> {
        vec!["palm close to kettle".into(), "kettle far from microwave_handle".into()]
    }

    #[test]
    fn drops_unmatched_and_selects_step() {
        let s = ChatSession::new(Arc::new(Queue(Mutex::new(vec![
            "<step>1</step>",
            "<step>2</step>",
            "<step>-1</step>",
            "It is step 2. <step>2</step>",
        ]))));
        let p = parse_reward_program(KETTLE).unwrap();
        let v = verify(&s, "Move the kettle away", &plan(), &p).unwrap();
        assert_eq!(v.removed, vec!["minimize_l2_distance_reward(\"palm\", \"rest_position\")"]);
        assert_eq!(v.program.calls.len(), 4);
        let primary = &v.program.calls[v.program.primary.unwrap()];
        assert_eq!(primary.function, RewardFunction::MaximizeL2DistanceReward);
        assert!(!v.fallback);
    }

    #[test]
    fn falls_back_to_last_kept_term() {
        let s = ChatSession::new(Arc::new(Queue(Mutex::new(vec!["<step>1</step>", "?", "<step>-1</step>", "no tag"]))));
        let p = parse_reward_program(KETTLE).unwrap();
        let v = verify(&s, "Move the kettle away", &plan(), &p).unwrap();
        assert!(v.fallback);
        assert_eq!(v.program.primary, Some(2));
        let u = unverified(&p);
        assert_eq!(u.program.primary, Some(3));
        assert!(u.fallback);
    }

    #[test]
    fn unverified_keeps_inline_primary() {
        let p = parse_reward_program(
            "reset_reward()\nminimize_l2_distance_reward(\"palm\", \"bar\", primary_reward=True)\nmaximize_l2_distance_reward(\"bar\", \"cabinet\")\nexecute_plan()",
        )
        .unwrap();
        let u = unverified(&p);
        assert_eq!(u.program.primary, Some(1));
        assert!(!u.fallback);
    }
}
