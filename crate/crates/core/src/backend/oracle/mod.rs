//! Deterministic rule-based stand-in for the language and vision models.
//!
//! Language roles read only the prompt slots. Vision roles read the scene
//! attached to the request. Diagnosis answers can be corrupted with a
//! seeded probability to exercise the consensus step.

mod language;
mod vision;

use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{BackendError, ChatBackend, ChatRequest};
use crate::prompts::TemplateId;

pub struct OracleBackend {
    noise: f64,
    rng: Mutex<ChaCha8Rng>,
}

impl OracleBackend {
    pub fn new(seed: u64) -> Self {
        Self::with_noise(0.0, seed)
    }

    /// `noise` is the chance that a single diagnosis answer names the wrong object.
    pub fn with_noise(noise: f64, seed: u64) -> Self {
        Self { noise: noise.clamp(0.0, 1.0), rng: Mutex::new(ChaCha8Rng::seed_from_u64(seed)) }
    }

    /// Index of the substitute object, or `None` to answer truthfully.
    fn corruption(&self, candidates: usize) -> Option<usize> {
        if self.noise <= 0.0 || candidates == 0 {
            return None;
        }
        let mut rng = self.rng.lock().unwrap_or_else(|p| p.into_inner());
        let hit = rng.gen_bool(self.noise);
        let pick = rng.gen_range(0..candidates);
        hit.then_some(pick)
    }
}

impl ChatBackend for OracleBackend {
    fn complete(&self, request: &ChatRequest<'_>) -> Result<String, BackendError> {
        let s = &request.prompt.slots;
        let slot = |i: usize| s.get(i).map(String::as_str).unwrap_or("");
        let scene = request.scene;
        let needs_scene = || BackendError::Config(format!("{} needs a scene", request.prompt.template));
        Ok(match request.prompt.template {
            TemplateId::PresenceQuery => vision::presence(scene.ok_or_else(needs_scene)?, slot(0)),
            TemplateId::StateQuery => vision::state_query(scene.ok_or_else(needs_scene)?, slot(2)),
            TemplateId::Diagnosis => {
                let objects = language::list(slot(1));
                let truth = vision::diagnose(scene.ok_or_else(needs_scene)?, slot(0));
                let others: Vec<&String> = objects.iter().filter(|o| Some(o.as_str()) != truth.key.as_deref()).collect();
                match self.corruption(others.len()) {
                    Some(i) => truth.corrupt(others[i]),
                    None => truth.sentence,
                }
            }
            TemplateId::PlanGenerate | TemplateId::ActionReplan | TemplateId::PlanReplan => {
                language::plan(&language::list(slot(0)), slot(1), slot(2))
            }
            TemplateId::ClassifyAction => language::classify(slot(0)),
            TemplateId::RelocationCheck => language::relocation(slot(0)),
            TemplateId::MotionPlan => {
                language::motion_plan(&language::list(slot(0)), &language::list(slot(3)), slot(5), slot(6))
            }
            TemplateId::RewardCode => language::reward_code(&language::list(slot(1)), slot(3)),
            TemplateId::VerifyRewardStep => language::verify_reward_step(slot(0), slot(1)),
            TemplateId::VerifyPrimaryStep => language::verify_primary_step(slot(1)),
            TemplateId::RemapDetect => language::remap_detect(&language::list(slot(0)), slot(1)),
            TemplateId::RemapRewrite => language::remap_rewrite(&language::list(slot(0)), slot(1)),
            TemplateId::DiagnosisSummary => language::summarize(slot(1)),
            TemplateId::QuestionGenerate => language::questions(slot(0), slot(2), &language::list(slot(3))),
            TemplateId::QuestionType => language::question_type(slot(0)),
            TemplateId::CompletionCheck => language::completion(slot(1), slot(2)),
        })
    }
}
