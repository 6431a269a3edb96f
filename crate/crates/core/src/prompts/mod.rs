//! Prompt library: template ids, slot rendering and the list formats each
//! slot expects.

pub mod templates;

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use templates as t;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TemplateId {
    PresenceQuery,
    PlanGenerate,
    ClassifyAction,
    MotionPlan,
    RelocationCheck,
    RewardCode,
    VerifyRewardStep,
    VerifyPrimaryStep,
    Diagnosis,
    RemapDetect,
    RemapRewrite,
    DiagnosisSummary,
    ActionReplan,
    QuestionGenerate,
    QuestionType,
    StateQuery,
    CompletionCheck,
    PlanReplan,
}

impl TemplateId {
    pub const ALL: [TemplateId; 18] = [
        TemplateId::PresenceQuery,
        TemplateId::PlanGenerate,
        TemplateId::ClassifyAction,
        TemplateId::MotionPlan,
        TemplateId::RelocationCheck,
        TemplateId::RewardCode,
        TemplateId::VerifyRewardStep,
        TemplateId::VerifyPrimaryStep,
        TemplateId::Diagnosis,
        TemplateId::RemapDetect,
        TemplateId::RemapRewrite,
        TemplateId::DiagnosisSummary,
        TemplateId::ActionReplan,
        TemplateId::QuestionGenerate,
        TemplateId::QuestionType,
        TemplateId::StateQuery,
        TemplateId::CompletionCheck,
        TemplateId::PlanReplan,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TemplateId::PresenceQuery => "presence-query",
            TemplateId::PlanGenerate => "plan-generate",
            TemplateId::ClassifyAction => "classify-action",
            TemplateId::MotionPlan => "motion-plan",
            TemplateId::RelocationCheck => "relocation-check",
            TemplateId::RewardCode => "reward-code",
            TemplateId::VerifyRewardStep => "verify-reward-step",
            TemplateId::VerifyPrimaryStep => "verify-primary-step",
            TemplateId::Diagnosis => "diagnosis",
            TemplateId::RemapDetect => "remap-detect",
            TemplateId::RemapRewrite => "remap-rewrite",
            TemplateId::DiagnosisSummary => "diagnosis-summary",
            TemplateId::ActionReplan => "action-replan",
            TemplateId::QuestionGenerate => "question-generate",
            TemplateId::QuestionType => "question-type",
            TemplateId::StateQuery => "state-query",
            TemplateId::CompletionCheck => "completion-check",
            TemplateId::PlanReplan => "plan-replan",
        }
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A rendered prompt together with what it was rendered from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prompt {
    pub template: TemplateId,
    /// Diagnosis prompt variant, 0 for everything else.
    pub variant: usize,
    pub slots: Vec<String>,
    pub text: String,
}

impl Prompt {
    fn new(template: TemplateId, source: &str, slots: Vec<String>) -> Self {
        let text = render(source, &slots);
        Self { template, variant: 0, slots, text }
    }

    /// Template id plus a digest of the whitespace-normalized slots.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for s in &self.slots {
            h.update(normalize_whitespace(s).as_bytes());
            h.update([0u8]);
        }
        let digest = hex::encode(&h.finalize()[..12]);
        if self.template == TemplateId::Diagnosis {
            format!("{}.{}:{}", self.template, self.variant, digest)
        } else {
            format!("{}:{}", self.template, digest)
        }
    }
}

pub fn normalize_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Single-pass substitution of `{N}` slots. `{{` and `}}` are template text
/// meant for the model and are kept as-is; substituted values are never
/// rescanned.
pub fn render(template: &str, slots: &[String]) -> String {
    let bytes = template.as_bytes();
    let mut out = String::with_capacity(template.len() + slots.iter().map(String::len).sum::<usize>());
    let mut i = 0;
    let mut copied = 0;
    while i < bytes.len() {
        if bytes[i] == b'{' && bytes.get(i + 1) == Some(&b'{') {
            i += 2;
            continue;
        }
        if bytes[i] == b'{' {
            let digits = bytes[i + 1..].iter().take_while(|b| b.is_ascii_digit()).count();
            if digits > 0 && bytes.get(i + 1 + digits) == Some(&b'}') {
                let n: usize = template[i + 1..i + 1 + digits].parse().unwrap_or(usize::MAX);
                if let Some(value) = slots.get(n) {
                    out.push_str(&template[copied..i]);
                    out.push_str(value);
                    i += digits + 2;
                    copied = i;
                    continue;
                }
            }
        }
        i += 1;
    }
    out.push_str(&template[copied..]);
    out
}

/// `a, b, c`
pub fn comma_list(items: &[String]) -> String {
    items.join(", ")
}

/// `1. first\n2. second`
pub fn numbered(lines: &[String]) -> String {
    lines.iter().enumerate().map(|(i, l)| format!("{}. {l}", i + 1)).collect::<Vec<_>>().join("\n")
}

/// Plan steps as they appear between the plan markers.
pub fn plan_block(steps: &[String]) -> String {
    steps.iter().map(|s| format!("    >{s}")).collect::<Vec<_>>().join("\n")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaPair {
    pub question: String,
    pub answer: String,
}

/// `Q: q, A: a` lines, or `None` when nothing has been observed.
pub fn observations(qa: &[QaPair]) -> String {
    if qa.is_empty() {
        return "None".to_string();
    }
    qa.iter().map(|p| format!("Q: {}, A: {}", p.question, p.answer)).collect::<Vec<_>>().join("\n")
}

const MODIFIER_RELOCATION: &str =
    "object1={{CHOICE: {0}}} should be {{CHOICE: close to, far from}} object2={{CHOICE: {0}}}.";
const MODIFIER_OPTIONAL: &str = "[optional] object1={{CHOICE: {0}}} should be close to object2={{CHOICE: {0}}}.\n[optional] object1={{CHOICE: {0}}} should be far from object2={{CHOICE: {0}}}.";
const MODIFIER_JOINT: &str = "[optional] joint={{CHOICE: {3}}} needs to be {{CHOICE: open, closed}}.";

/// One entry of the failure history shown to the planner.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum HistoryEntry {
    /// An action could not be executed.
    Action { plan_step: String, action: String, reason: String },
    /// A whole plan ran without reaching the goal.
    Plan { thought: String, steps: Vec<String>, reason: String },
}

pub fn history_block(history: &[HistoryEntry]) -> String {
    if history.is_empty() {
        return String::new();
    }
    let mut lines = vec![t::HISTORY_HEADER.to_string()];
    for (i, e) in history.iter().enumerate() {
        lines.push(format!("{}{}{}", t::ATTEMPT_RULE_LEFT, i + 1, t::ATTEMPT_RULE_RIGHT));
        lines.push(match e {
            HistoryEntry::Action { plan_step, action, reason } => {
                render(t::ACTION_FAILURE_ENTRY, &[plan_step.clone(), action.clone(), reason.clone()])
            }
            HistoryEntry::Plan { thought, steps, reason } => {
                render(t::PLAN_FAILURE_ENTRY, &[thought.clone(), plan_block(steps), reason.clone()])
            }
        });
    }
    lines.push(t::HISTORY_FOOTER.to_string());
    lines.push(t::HISTORY_REMINDER.to_string());
    lines.join("\n")
}

/// Inverse of [`history_block`]. Entries that do not parse are skipped.
pub fn parse_history(block: &str) -> Vec<HistoryEntry> {
    let Some(body) = block.split_once(t::HISTORY_HEADER).map(|(_, b)| b) else {
        return Vec::new();
    };
    let body = body.split(t::HISTORY_FOOTER).next().unwrap_or("");
    let (action_head, action_rest) = t::ACTION_FAILURE_ENTRY.split_once("{0}").unwrap_or_default();
    let (action_mid1, action_rest) = action_rest.split_once("{1}").unwrap_or_default();
    let (action_mid2, action_tail) = action_rest.split_once("{2}").unwrap_or_default();
    let mut out = Vec::new();
    for chunk in body.split(t::ATTEMPT_RULE_LEFT).skip(1) {
        let Some((_, entry)) = chunk.split_once(t::ATTEMPT_RULE_RIGHT) else { continue };
        let entry = entry.trim_matches('\n');
        if let Some(rest) = entry.strip_prefix(action_head) {
            let parsed = rest.split_once(action_mid1).and_then(|(step, rest)| {
                let (action, rest) = rest.split_once(action_mid2)?;
                let reason = rest.strip_suffix(action_tail)?;
                Some(HistoryEntry::Action { plan_step: step.into(), action: action.into(), reason: reason.into() })
            });
            out.extend(parsed);
        } else if entry.starts_with("The proposed plan was:") {
            let thought = crate::text::extract_tags(entry, "thought").into_iter().next().unwrap_or_default();
            let steps = crate::text::parse_plan(entry).map(|(_, s)| s).unwrap_or_default();
            let reason = entry
                .rsplit_once("The plan failed because ")
                .map(|(_, r)| r.trim_end().trim_end_matches('.').to_string())
                .unwrap_or_default();
            out.push(HistoryEntry::Plan { thought, steps, reason });
        }
    }
    out
}

pub fn presence_query(object: &str) -> Prompt {
    Prompt::new(TemplateId::PresenceQuery, t::PRESENCE_QUERY, vec![object.into()])
}

/// First plan, or a replan when `history` is non-empty. The template id
/// follows the most recent failure kind.
pub fn plan_generate(objects: &[String], goal: &str, history: &[HistoryEntry]) -> Prompt {
    let id = match history.last() {
        None => TemplateId::PlanGenerate,
        Some(HistoryEntry::Action { .. }) => TemplateId::ActionReplan,
        Some(HistoryEntry::Plan { .. }) => TemplateId::PlanReplan,
    };
    Prompt::new(id, t::PLAN_GENERATE, vec![comma_list(objects), goal.into(), history_block(history)])
}

pub fn classify_action(action: &str) -> Prompt {
    Prompt::new(TemplateId::ClassifyAction, t::CLASSIFY_ACTION, vec![action.into()])
}

pub fn relocation_check(action: &str) -> Prompt {
    Prompt::new(TemplateId::RelocationCheck, t::RELOCATION_CHECK, vec![action.into()])
}

pub fn motion_plan(
    objects: &[String],
    joints: &[String],
    procedure: &[String],
    observed: &[QaPair],
    action: &str,
    relocation: bool,
) -> Prompt {
    let objs = comma_list(objects);
    let modifier = if relocation { MODIFIER_RELOCATION } else { MODIFIER_OPTIONAL };
    let m1 = format!("\n{}", render(modifier, &[objs.clone()]));
    let m2 = if joints.is_empty() {
        String::new()
    } else {
        let slots = [String::new(), String::new(), String::new(), comma_list(joints)];
        format!("\n{}", render(MODIFIER_JOINT, &slots))
    };
    Prompt::new(
        TemplateId::MotionPlan,
        t::MOTION_PLAN,
        vec![objs, m1, m2, comma_list(joints), numbered(procedure), observations(observed), action.into()],
    )
}

/// `objects` is the scene vocabulary; `palm` is appended here.
pub fn reward_code(objects: &[String], joints: &[String], action: &str, motion_plan: &[String]) -> Prompt {
    let mut with_palm = objects.to_vec();
    with_palm.push("palm".into());
    Prompt::new(
        TemplateId::RewardCode,
        t::REWARD_CODE,
        vec![comma_list(&with_palm), comma_list(joints), action.into(), numbered(motion_plan)],
    )
}

pub fn verify_reward_step(motion_plan: &[String], call: &str) -> Prompt {
    Prompt::new(TemplateId::VerifyRewardStep, t::VERIFY_REWARD_STEP, vec![numbered(motion_plan), call.into()])
}

pub fn verify_primary_step(action: &str, motion_plan: &[String]) -> Prompt {
    Prompt::new(TemplateId::VerifyPrimaryStep, t::VERIFY_PRIMARY_STEP, vec![action.into(), numbered(motion_plan)])
}

/// `variant` in 0..6.
pub fn diagnosis(variant: usize, action: &str, objects: &[String]) -> Prompt {
    let mut p = Prompt::new(
        TemplateId::Diagnosis,
        t::DIAGNOSIS_VARIANTS[variant % t::DIAGNOSIS_VARIANTS.len()],
        vec![action.into(), comma_list(objects)],
    );
    p.variant = variant % t::DIAGNOSIS_VARIANTS.len();
    p
}

pub fn remap_detect(objects: &[String], sentence: &str) -> Prompt {
    Prompt::new(TemplateId::RemapDetect, t::REMAP_DETECT, vec![comma_list(objects), sentence.into()])
}

pub fn remap_rewrite(objects: &[String], sentence: &str) -> Prompt {
    Prompt::new(TemplateId::RemapRewrite, t::REMAP_REWRITE, vec![comma_list(objects), sentence.into()])
}

pub fn diagnosis_summary(action: &str, explanations: &[String]) -> Prompt {
    Prompt::new(TemplateId::DiagnosisSummary, t::DIAGNOSIS_SUMMARY, vec![action.into(), explanations.join("\n    ")])
}

pub fn question_generate(goal: &str, plan: &[String], action: &str, observed_objects: &[String]) -> Prompt {
    Prompt::new(
        TemplateId::QuestionGenerate,
        t::QUESTION_GENERATE,
        vec![goal.into(), numbered(plan), action.into(), comma_list(observed_objects)],
    )
}

pub fn question_type(question: &str) -> Prompt {
    Prompt::new(TemplateId::QuestionType, t::QUESTION_TYPE, vec![question.into()])
}

/// `context` is the action the question serves.
pub fn state_query(question: &str, objects: &[String], context: &str) -> Prompt {
    Prompt::new(TemplateId::StateQuery, t::STATE_QUERY, vec![comma_list(objects), context.into(), question.into()])
}

pub fn completion_check(plan: &[String], action: &str, qa: &[QaPair]) -> Prompt {
    Prompt::new(TemplateId::CompletionCheck, t::COMPLETION_CHECK, vec![numbered(plan), action.into(), observations(qa)])
}
