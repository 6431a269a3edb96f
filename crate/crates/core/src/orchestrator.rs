//! Episode loop: plan, execute, diagnose, replan.
//!
//! Every backend exchange is attached to the log event it produced, so a log
//! is a complete record of the episode. The log hash is SHA-256 over the
//! JSONL text. Event timestamps are simulated seconds, so logs are
//! reproducible.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::backend::{BackendError, ChatBackend, ChatExchange, ChatSession};
use crate::dsl::compile;
use crate::low_level::{self, LowLevelError};
use crate::mpc::{run_mpc, MpcConfig, MpcOutcome, TrajectoryPoint};
use crate::perceiver::{self, Explanation};
use crate::planner::{self, ActionKind, Plan, PlannerError};
use crate::prompts::{HistoryEntry, QaPair, TemplateId};
use crate::verifier;
use crate::world::{load_task, SceneSnapshot, TaskDefinition, TaskId, WorldState};

/// Reason recorded when every step ran but the goal was not reached.
pub const PLAN_COMPLETED_REASON: &str = "the plan was completed but the goal was not reached";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Ablation {
    /// Keep every reward term and use the last one as primary.
    #[serde(default)]
    pub no_verifier: bool,
    /// No perceiver calls: vision steps pass, diagnosis is empty, the object
    /// list is what is visible at the start.
    #[serde(default)]
    pub no_perceiver: bool,
    /// One plan, no action-level replanning.
    #[serde(default)]
    pub no_replan: bool,
}

impl Ablation {
    pub const NONE: Ablation = Ablation { no_verifier: false, no_perceiver: false, no_replan: false };

    /// "full", or the removed modules joined with '+', e.g. "no-verifier+no-replan".
    pub fn label(&self) -> String {
        let parts: Vec<&str> = [
            (self.no_verifier, "no-verifier"),
            (self.no_perceiver, "no-perceiver"),
            (self.no_replan, "no-replan"),
        ]
        .into_iter()
        .filter_map(|(on, name)| on.then_some(name))
        .collect();
        if parts.is_empty() { "full".into() } else { parts.join("+") }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown module '{0}' (expected verifier, perceiver, replan or none)")]
pub struct UnknownAblation(pub String);

/// Accepts "none", "full" or modules joined with '+', each optionally
/// prefixed with "no-": "perceiver", "no-verifier+replan".
impl std::str::FromStr for Ablation {
    type Err = UnknownAblation;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut a = Ablation::NONE;
        if matches!(s.trim(), "none" | "full") {
            return Ok(a);
        }
        for part in s.split('+') {
            match part.trim().trim_start_matches("no-") {
                "verifier" => a.no_verifier = true,
                "perceiver" => a.no_perceiver = true,
                "replan" => a.no_replan = true,
                other => return Err(UnknownAblation(other.to_string())),
            }
        }
        Ok(a)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeConfig {
    pub task: TaskId,
    pub seed: u64,
    /// Plans per episode.
    pub plan_budget: usize,
    /// Action-level replans per plan.
    pub replan_budget: usize,
    /// Episode stops once this many actions have been taken.
    pub max_actions: usize,
    #[serde(default)]
    pub ablation: Ablation,
    #[serde(default)]
    pub mpc: MpcConfig,
}

impl EpisodeConfig {
    pub fn new(task: TaskId, seed: u64) -> Self {
        Self { task, seed, plan_budget: 3, replan_budget: 2, max_actions: 40, ablation: Ablation::NONE, mpc: MpcConfig::default() }
    }

    fn budgets(&self) -> (usize, usize) {
        if self.ablation.no_replan {
            (1, 0)
        } else {
            (self.plan_budget.max(1), self.replan_budget)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EventKind {
    Start { task: TaskId, instruction: String, seed: u64, ablation: Ablation, scene: SceneSnapshot },
    Presence { visible: Vec<String> },
    Plan { attempt: usize, template: TemplateId, thought: String, steps: Vec<String> },
    PlanError { attempt: usize, message: String },
    Classify { action: String, vision: bool },
    #[serde(rename = "question")]
    Questions { action: String, questions: Vec<String> },
    #[serde(rename = "qa")]
    Answer { question: String, answer: String },
    Completion { action: String, done: bool, residual: Option<String> },
    MotionPlan { action: String, relocation: bool, lines: Vec<String> },
    RewardCode { action: String, program: Option<String>, error: Option<String> },
    Verify { removed: Vec<String>, primary: Option<String>, primary_step: Option<usize>, fallback: bool },
    Mpc {
        action: String,
        seed: u64,
        outcome: MpcOutcome,
        success: bool,
        steps: usize,
        cost_trace: Vec<f64>,
        trajectory: Vec<TrajectoryPoint>,
        scene: SceneSnapshot,
    },
    Diagnosis { action: String, explanations: Vec<Explanation>, reasons: Vec<String>, dropped: Vec<String> },
    Replan { level: ReplanLevel, reason: String },
    Outcome {
        success: bool,
        actions: usize,
        perceiver_actions: usize,
        mpc_actions: usize,
        plans: usize,
        failure: Option<Failure>,
        scene: SceneSnapshot,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReplanLevel {
    Action,
    Plan,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub seq: usize,
    /// Simulated time in seconds.
    pub timestamp: f64,
    pub event: EventKind,
    /// Exchanges made since the previous event.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub exchanges: Vec<ChatExchange>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Failure {
    PlanBudgetExhausted,
    ActionCapReached,
    Backend { message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub task: TaskId,
    pub seed: u64,
    pub ablation: Ablation,
    pub success: bool,
    pub actions: usize,
    pub perceiver_actions: usize,
    pub mpc_actions: usize,
    pub plans: usize,
    pub failure: Option<Failure>,
    pub log_hash: String,
    pub events: Vec<Event>,
}

impl EpisodeResult {
    pub fn log_jsonl(&self) -> String {
        log_jsonl(&self.events)
    }

    pub fn exchanges(&self) -> impl Iterator<Item = &ChatExchange> {
        self.events.iter().flat_map(|e| e.exchanges.iter())
    }
}

pub fn log_jsonl(events: &[Event]) -> String {
    let mut out = String::new();
    for e in events {
        out.push_str(&serde_json::to_string(e).expect("events serialize"));
        out.push('\n');
    }
    out
}

pub fn log_hash(jsonl: &str) -> String {
    hex::encode(Sha256::digest(jsonl.as_bytes()))
}

enum Abort {
    ActionCap,
    Backend(BackendError),
}

impl From<BackendError> for Abort {
    fn from(e: BackendError) -> Self {
        Abort::Backend(e)
    }
}

enum StepOutcome {
    Done,
    Failed { action: String },
}

struct Episode<'a> {
    task: &'a TaskDefinition,
    cfg: &'a EpisodeConfig,
    session: ChatSession,
    state: WorldState,
    visible: Vec<String>,
    history: Vec<HistoryEntry>,
    qa: Vec<QaPair>,
    perceiver_actions: usize,
    mpc_actions: usize,
    events: Vec<Event>,
}

impl Episode<'_> {
    fn emit(&mut self, event: EventKind) {
        let exchanges = self.session.drain();
        self.events.push(Event { seq: self.events.len(), timestamp: self.state.time, event, exchanges });
    }

    fn actions(&self) -> usize {
        self.perceiver_actions + self.mpc_actions
    }

    fn count_action(&mut self, mpc: bool) -> Result<(), Abort> {
        if self.actions() >= self.cfg.max_actions {
            return Err(Abort::ActionCap);
        }
        if mpc {
            self.mpc_actions += 1;
        } else {
            self.perceiver_actions += 1;
        }
        Ok(())
    }

    fn sweep(&mut self) -> Result<(), Abort> {
        if self.cfg.ablation.no_perceiver {
            return Ok(());
        }
        self.visible = perceiver::presence_sweep(&self.session, &self.state, &self.task.interactable_objects)?;
        let visible = self.visible.clone();
        self.emit(EventKind::Presence { visible });
        Ok(())
    }

    /// Names a reward program may use: visible objects and their aliases.
    fn vocabulary(&self) -> Vec<String> {
        let mut v = self.visible.clone();
        for (alias, target) in &self.state.aliases {
            if self.visible.contains(target) {
                v.push(alias.clone());
            }
        }
        v
    }

    fn plan(&mut self, attempt: usize) -> Result<Option<Plan>, Abort> {
        self.sweep()?;
        match planner::generate_plan(&self.session, &self.visible, &self.task.instruction, &self.history) {
            Ok(p) => {
                self.emit(EventKind::Plan {
                    attempt,
                    template: p.template,
                    thought: p.thought.clone(),
                    steps: p.steps.clone(),
                });
                Ok(Some(p))
            }
            Err(PlannerError::Backend(e)) => Err(e.into()),
            Err(e @ PlannerError::Unparseable) => {
                self.emit(EventKind::PlanError { attempt, message: e.to_string() });
                Ok(None)
            }
        }
    }

    fn run(&mut self) -> Result<bool, Abort> {
        let (plan_budget, replan_budget) = self.cfg.budgets();
        for attempt in 0..plan_budget {
            let Some(mut plan) = self.plan(attempt)? else {
                self.history.push(HistoryEntry::Plan {
                    thought: String::new(),
                    steps: Vec::new(),
                    reason: "no plan could be read".into(),
                });
                continue;
            };
            self.qa.clear();
            let mut replans = 0;
            let mut i = 0;
            let mut failed_plan = None;
            while i < plan.steps.len() {
                let step = plan.steps[i].clone();
                match self.execute(&plan, &step)? {
                    StepOutcome::Done => i += 1,
                    StepOutcome::Failed { action } => {
                        let more = replans < replan_budget || attempt + 1 < plan_budget;
                        let reason = if more { self.diagnose(&action)? } else { None };
                        if replans < replan_budget {
                            replans += 1;
                            let reason = reason.unwrap_or_default();
                            self.emit(EventKind::Replan { level: ReplanLevel::Action, reason: reason.clone() });
                            self.history.push(HistoryEntry::Action { plan_step: step, action, reason });
                            match self.plan(attempt)? {
                                Some(p) => {
                                    plan = p;
                                    i = 0;
                                    continue;
                                }
                                None => {
                                    failed_plan = Some("no plan could be read".to_string());
                                    break;
                                }
                            }
                        }
                        let mut why = format!("the robot was not able to {}", lower_first(&action));
                        if let Some(r) = reason {
                            why = format!("{why}: {}", r.trim_end_matches('.'));
                        }
                        failed_plan = Some(why);
                        break;
                    }
                }
            }
            let reason = match failed_plan {
                Some(r) => r,
                None => {
                    if self.task.check_success(&self.state) {
                        return Ok(true);
                    }
                    self.goal_reason(&plan)?
                }
            };
            self.emit(EventKind::Replan { level: ReplanLevel::Plan, reason: reason.clone() });
            self.history.push(HistoryEntry::Plan { thought: plan.thought.clone(), steps: plan.steps.clone(), reason });
        }
        Ok(false)
    }

    /// Why a fully executed plan did not finish the job, as the agent sees it.
    fn goal_reason(&mut self, plan: &Plan) -> Result<String, Abort> {
        if self.cfg.ablation.no_perceiver {
            return Ok(PLAN_COMPLETED_REASON.into());
        }
        let goal = self.task.instruction.clone();
        let c = planner::check_complete(&self.session, &plan.steps, &goal, &self.qa)?;
        self.emit(EventKind::Completion { action: goal, done: c.done, residual: c.residual.clone() });
        let negative = self.qa.iter().rev().find(|p| crate::text::yes_no_lead(&p.answer) == Some(false));
        Ok(match (c.done, negative) {
            (false, Some(p)) => format!("{PLAN_COMPLETED_REASON}: {}", p.answer.trim().trim_end_matches('.')),
            _ => PLAN_COMPLETED_REASON.into(),
        })
    }

    fn diagnose(&mut self, action: &str) -> Result<Option<String>, Abort> {
        if self.cfg.ablation.no_perceiver {
            return Ok(None);
        }
        self.count_action(false)?;
        let remap = !self.cfg.ablation.no_verifier;
        let d = perceiver::diagnose(&self.session, &self.state, action, &self.visible, remap)?;
        let reason = d.reason();
        self.emit(EventKind::Diagnosis {
            action: action.into(),
            explanations: d.explanations,
            reasons: d.reasons,
            dropped: d.dropped,
        });
        Ok(reason)
    }

    fn execute(&mut self, plan: &Plan, step: &str) -> Result<StepOutcome, Abort> {
        let kind = planner::classify_action(&self.session, step)?;
        self.emit(EventKind::Classify { action: step.into(), vision: kind == ActionKind::Vision });
        match kind {
            ActionKind::Motion => self.motion(plan, step),
            ActionKind::Vision if self.cfg.ablation.no_perceiver => Ok(StepOutcome::Done),
            ActionKind::Vision => self.vision(plan, step),
        }
    }

    fn vision(&mut self, plan: &Plan, step: &str) -> Result<StepOutcome, Abort> {
        self.count_action(false)?;
        let goal = self.task.instruction.clone();
        let questions = planner::generate_questions(&self.session, &goal, &plan.steps, step, &self.visible)?;
        self.emit(EventKind::Questions { action: step.into(), questions: questions.clone() });
        let mut asked = Vec::new();
        for q in questions {
            let answer = perceiver::query_state(&self.session, &self.state, &q, &self.visible, step)?;
            self.emit(EventKind::Answer { question: q.clone(), answer: answer.clone() });
            asked.push(QaPair { question: q, answer });
        }
        self.qa.extend(asked.iter().cloned());
        let c = planner::check_complete(&self.session, &plan.steps, step, &asked)?;
        self.emit(EventKind::Completion { action: step.into(), done: c.done, residual: c.residual.clone() });
        self.sweep()?;
        match c.residual {
            Some(rest) if !c.done => self.motion(plan, &rest),
            _ => Ok(StepOutcome::Done),
        }
    }

    fn motion(&mut self, plan: &Plan, action: &str) -> Result<StepOutcome, Abort> {
        let failed = || Ok(StepOutcome::Failed { action: action.to_string() });
        let relocation = low_level::relocation_check(&self.session, action)?;
        let joints = self.task.joints.clone();
        let lines = match low_level::motion_plan(&self.session, &self.visible, &joints, &plan.steps, &self.qa, action, relocation) {
            Ok(l) => l,
            Err(LowLevelError::Backend(e)) => return Err(e.into()),
            Err(e) => {
                self.emit(EventKind::MotionPlan { action: action.into(), relocation, lines: vec![e.to_string()] });
                return failed();
            }
        };
        self.emit(EventKind::MotionPlan { action: action.into(), relocation, lines: lines.clone() });
        let vocabulary = self.vocabulary();
        let program = match low_level::reward_code(&self.session, &self.visible, &vocabulary, &joints, action, &lines) {
            Ok(p) => p,
            Err(LowLevelError::Backend(e)) => return Err(e.into()),
            Err(e) => {
                self.emit(EventKind::RewardCode { action: action.into(), program: None, error: Some(e.to_string()) });
                return failed();
            }
        };
        self.emit(EventKind::RewardCode { action: action.into(), program: Some(program.to_string()), error: None });
        let verified = if self.cfg.ablation.no_verifier {
            verifier::unverified(&program)
        } else {
            verifier::verify(&self.session, action, &lines, &program)?
        };
        self.emit(EventKind::Verify {
            removed: verified.removed.clone(),
            primary: verified.program.primary.map(|i| verified.program.calls[i].to_string()),
            primary_step: verified.primary_step,
            fallback: verified.fallback,
        });

        self.count_action(true)?;
        let spec = compile(&verified.program);
        let seed = self.cfg.seed.wrapping_mul(1_000_003).wrapping_add(self.mpc_actions as u64);
        let mpc = MpcConfig { seed, ..self.cfg.mpc.clone() };
        let result = run_mpc(&self.state, &spec, &mpc);
        self.state = result.final_state;
        self.emit(EventKind::Mpc {
            action: action.into(),
            seed,
            outcome: result.outcome,
            success: result.success,
            steps: result.steps_used,
            cost_trace: result.cost_trace,
            trajectory: result.trajectory,
            scene: self.state.snapshot(),
        });
        if result.success { Ok(StepOutcome::Done) } else { failed() }
    }
}

fn lower_first(s: &str) -> String {
    let mut c = s.trim().chars();
    c.next().map(|f| f.to_lowercase().chain(c).collect()).unwrap_or_default()
}

fn start<'a>(task: &'a TaskDefinition, cfg: &'a EpisodeConfig, backend: Arc<dyn ChatBackend>) -> Episode<'a> {
    let visible: Vec<String> = task
        .interactable_objects
        .iter()
        .filter(|o| task.initial.is_visible(o))
        .cloned()
        .collect();
    Episode {
        task,
        cfg,
        session: ChatSession::new(backend),
        state: task.initial.clone(),
        visible,
        history: Vec::new(),
        qa: Vec::new(),
        perceiver_actions: 0,
        mpc_actions: 0,
        events: Vec::new(),
    }
}

pub fn run_episode(cfg: &EpisodeConfig, backend: Arc<dyn ChatBackend>) -> EpisodeResult {
    let task = load_task(cfg.task);
    let mut ep = start(&task, cfg, backend);
    ep.emit(EventKind::Start {
        task: cfg.task,
        instruction: task.instruction.clone(),
        seed: cfg.seed,
        ablation: cfg.ablation,
        scene: task.initial.snapshot(),
    });
    let (success, failure) = match ep.run() {
        Ok(true) => (true, None),
        Ok(false) => (false, Some(Failure::PlanBudgetExhausted)),
        Err(Abort::ActionCap) => (false, Some(Failure::ActionCapReached)),
        Err(Abort::Backend(e)) => (false, Some(Failure::Backend { message: e.to_string() })),
    };
    let plans = ep.events.iter().filter(|e| matches!(e.event, EventKind::Plan { .. })).count();
    let (actions, perceiver_actions, mpc_actions) = (ep.actions(), ep.perceiver_actions, ep.mpc_actions);
    let scene = ep.state.snapshot();
    ep.emit(EventKind::Outcome { success, actions, perceiver_actions, mpc_actions, plans, failure: failure.clone(), scene });
    let events = ep.events;
    let log_hash = log_hash(&log_jsonl(&events));
    EpisodeResult {
        task: cfg.task,
        seed: cfg.seed,
        ablation: cfg.ablation,
        success,
        actions,
        perceiver_actions,
        mpc_actions,
        plans,
        failure,
        log_hash,
        events,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkillResult {
    /// The primary reward was satisfied.
    pub success: bool,
    pub state: WorldState,
    pub events: Vec<Event>,
}

/// Runs one action through the motion path alone (relocation check to MPC)
/// from the task's initial scene.
pub fn run_skill(cfg: &EpisodeConfig, action: &str, backend: Arc<dyn ChatBackend>) -> SkillResult {
    let task = load_task(cfg.task);
    let mut ep = start(&task, cfg, backend);
    let plan = Plan { thought: String::new(), steps: vec![action.to_string()], template: TemplateId::PlanGenerate };
    let success = matches!(ep.motion(&plan, action), Ok(StepOutcome::Done));
    SkillResult { success, state: ep.state, events: ep.events }
}

/// Runs episodes in parallel; results keep the input order.
pub fn run_batch<F>(configs: &[EpisodeConfig], backend_for: F) -> Vec<EpisodeResult>
where
    F: Fn(&EpisodeConfig) -> Arc<dyn ChatBackend> + Sync,
{
    use rayon::prelude::*;
    configs.par_iter().map(|c| run_episode(c, backend_for(c))).collect()
}
