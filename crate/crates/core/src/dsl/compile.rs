use serde::{Deserialize, Serialize};

use super::{RewardFunction, RewardProgram};
use crate::geometry::wrap_angle;
use crate::world::{EntityRef, WorldState};

/// Seconds, when `execute_plan()` has no argument.
pub const DEFAULT_DURATION: f64 = 2.0;
/// Target separation of `maximize_l2_distance_reward` without `distance=`.
pub const DEFAULT_MAX_DISTANCE: f64 = 0.5;

const MIN_DISTANCE_TOL: f64 = 0.06;
const JOINT_TOL: f64 = 0.3;
const Z_TOL: f64 = 0.05;
const ORIENTATION_TOL: f64 = 0.15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Residual {
    MinimizeDistance { a: String, b: String },
    MaximizeDistance { a: String, b: String, target: f64 },
    JointFraction { joint: String, target: f64 },
    ZPosition { object: String, target: f64 },
    Orientation { object: String, target: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostTerm {
    pub residual: Residual,
    pub weight: f64,
}

/// Compiled cost: c(x) = -sum_i w_i r_i(x).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostSpec {
    pub terms: Vec<CostTerm>,
    pub duration: f64,
    /// Index into `terms`.
    pub primary: Option<usize>,
}

pub fn compile(program: &RewardProgram) -> CostSpec {
    let mut terms = Vec::new();
    let mut primary = None;
    for (i, call) in program.calls.iter().enumerate() {
        let names = call.names();
        let name = |k: usize| names.get(k).map_or_else(String::new, |s| s.to_string());
        let residual = match call.function {
            RewardFunction::ResetReward | RewardFunction::ExecutePlan => continue,
            RewardFunction::MinimizeL2DistanceReward => Residual::MinimizeDistance { a: name(0), b: name(1) },
            RewardFunction::MaximizeL2DistanceReward => Residual::MaximizeDistance {
                a: name(0),
                b: name(1),
                target: call.number().unwrap_or(DEFAULT_MAX_DISTANCE),
            },
            RewardFunction::SetJointFractionReward => {
                Residual::JointFraction { joint: name(0), target: call.number().unwrap_or(1.0) }
            }
            RewardFunction::SetObjZPositionReward => {
                Residual::ZPosition { object: name(0), target: call.number().unwrap_or(0.0) }
            }
            RewardFunction::SetObjOrientationReward => {
                Residual::Orientation { object: name(0), target: call.number().unwrap_or(0.0) }
            }
        };
        if program.primary == Some(i) {
            primary = Some(terms.len());
        }
        terms.push(CostTerm { residual, weight: 1.0 });
    }
    CostSpec { terms, duration: program.duration(), primary }
}

impl CostSpec {
    pub fn cost(&self, state: &WorldState) -> f64 {
        self.resolve(state).cost(state)
    }

    pub fn residual(&self, term: usize, state: &WorldState) -> f64 {
        self.resolve(state).residual(term, state)
    }

    pub fn primary_satisfied(&self, state: &WorldState) -> bool {
        self.resolve(state).primary_satisfied(state)
    }

    /// Binds names to indices in `state` so evaluation avoids string lookups.
    /// Valid for any state derived from `state` by stepping.
    pub fn resolve(&self, state: &WorldState) -> ResolvedSpec {
        let terms = self
            .terms
            .iter()
            .map(|t| {
                let r = match &t.residual {
                    Residual::MinimizeDistance { a, b } => {
                        pair(state, a, b).map(|(a, b)| Bound::Min { a, b })
                    }
                    Residual::MaximizeDistance { a, b, target } => {
                        pair(state, a, b).map(|(a, b)| Bound::Max { a, b, target: *target })
                    }
                    Residual::JointFraction { joint, target } => {
                        state.joint_index(joint).map(|j| Bound::Joint { j, target: *target })
                    }
                    Residual::ZPosition { object, target } => {
                        state.resolve(object).map(|e| Bound::Z { e, target: *target })
                    }
                    Residual::Orientation { object, target } => state.object_index(object).map(|o| {
                        Bound::Yaw { o, target: wrap_angle(*target) }
                    }),
                };
                (r.unwrap_or(Bound::Missing), t.weight)
            })
            .collect();
        ResolvedSpec { terms, primary: self.primary }
    }
}

fn pair(state: &WorldState, a: &str, b: &str) -> Option<(EntityRef, EntityRef)> {
    Some((state.resolve(a)?, state.resolve(b)?))
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Bound {
    Min { a: EntityRef, b: EntityRef },
    Max { a: EntityRef, b: EntityRef, target: f64 },
    Joint { j: usize, target: f64 },
    Z { e: EntityRef, target: f64 },
    Yaw { o: usize, target: f64 },
    /// A name that does not exist in the scene: contributes nothing, never satisfied.
    Missing,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedSpec {
    terms: Vec<(Bound, f64)>,
    primary: Option<usize>,
}

impl ResolvedSpec {
    pub fn residual(&self, term: usize, s: &WorldState) -> f64 {
        match self.terms[term].0 {
            Bound::Min { a, b } => -s.position(a).distance(s.position(b)),
            Bound::Max { a, b, target } => s.position(a).distance(s.position(b)).min(target),
            Bound::Joint { j, target } => -(s.joints[j].fraction - target).abs(),
            Bound::Z { e, target } => -(s.position(e).z - target).abs(),
            Bound::Yaw { o, target } => -wrap_angle(s.objects[o].pose.orientation - target).abs(),
            Bound::Missing => 0.0,
        }
    }

    pub fn cost(&self, s: &WorldState) -> f64 {
        -(0..self.terms.len()).map(|i| self.terms[i].1 * self.residual(i, s)).sum::<f64>()
    }

    pub fn satisfied(&self, term: usize, s: &WorldState) -> bool {
        let r = self.residual(term, s);
        match self.terms[term].0 {
            Bound::Min { .. } => -r <= MIN_DISTANCE_TOL,
            Bound::Max { target, .. } => r >= target,
            Bound::Joint { .. } => -r <= JOINT_TOL,
            Bound::Z { .. } => -r <= Z_TOL,
            Bound::Yaw { .. } => -r <= ORIENTATION_TOL,
            Bound::Missing => false,
        }
    }

    pub fn primary_satisfied(&self, s: &WorldState) -> bool {
        self.primary.is_some_and(|p| self.satisfied(p, s))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse_reward_program;
    use crate::geometry::Vec3;
    use crate::world::{load_task, TaskId};
    use proptest::prelude::*;

    fn spec(src: &str, primary: Option<usize>) -> CostSpec {
        compile(&parse_reward_program(src).unwrap().with_primary(primary))
    }

    #[test]
    fn empty_program_has_zero_cost() {
        let s = spec("reset_reward()\nexecute_plan()", None);
        assert!(s.terms.is_empty());
        assert_eq!(s.duration, DEFAULT_DURATION);
        let w = load_task(TaskId::CabinetOpen).initial;
        assert_eq!(s.cost(&w), 0.0);
        assert!(!s.primary_satisfied(&w));
    }

    #[test]
    fn self_distance_is_zero() {
        let s = spec("reset_reward()\nminimize_l2_distance_reward('palm','palm')\nexecute_plan()", Some(1));
        let w = load_task(TaskId::CabinetOpen).initial;
        assert_eq!(s.residual(0, &w), 0.0);
        assert!(s.primary_satisfied(&w));
    }

    #[test]
    fn primary_maps_to_term_index() {
        let s = spec(
            "reset_reward()\nminimize_l2_distance_reward('palm','kettle')\nmaximize_l2_distance_reward('kettle','microwave_handle')\nexecute_plan()",
            Some(2),
        );
        assert_eq!(s.terms.len(), 2);
        assert_eq!(s.primary, Some(1));
        assert!(matches!(s.terms[1].residual, Residual::MaximizeDistance { target, .. } if target == DEFAULT_MAX_DISTANCE));
    }

    #[test]
    fn tolerances() {
        let mut w = load_task(TaskId::CabinetClosed).initial;
        let joint = spec("reset_reward()\nset_joint_fraction_reward('wooden_cabinet', 1.0)\nexecute_plan()", Some(1));
        w.joints[0].fraction = 0.72;
        assert!(joint.primary_satisfied(&w));
        w.joints[0].fraction = 0.69;
        assert!(!joint.primary_satisfied(&w));

        let max = spec("reset_reward()\nmaximize_l2_distance_reward('palm','rest_position')\nexecute_plan()", Some(1));
        w.gripper.position = w.rest_position + Vec3::new(0.5, 0.0, 0.0);
        assert!(max.primary_satisfied(&w));
        w.gripper.position = w.rest_position + Vec3::new(0.49, 0.0, 0.0);
        assert!(!max.primary_satisfied(&w));
    }

    #[test]
    fn alias_resolves() {
        let s = spec(
            "reset_reward()\nmaximize_l2_distance_reward('red_block_right_side','target_position_in_cabinet')\nexecute_plan()",
            Some(1),
        );
        let w = load_task(TaskId::CabinetBlocked).initial;
        assert!(s.residual(0, &w) > 0.0);
    }

    proptest! {
        #[test]
        fn improving_a_residual_lowers_cost(dx in -0.3f64..0.3, dy in -0.3f64..0.3) {
            let s = spec(
                "reset_reward()\nminimize_l2_distance_reward('palm','yellow_cube')\nset_joint_fraction_reward('wooden_cabinet', 1.0)\nexecute_plan()",
                None,
            );
            let w0 = load_task(TaskId::CabinetClosed).initial;
            let mut w1 = w0.clone();
            w1.gripper.position = w0.gripper.position + Vec3::new(dx, dy, 0.0);
            let expected = -(s.residual(0, &w0) + s.residual(1, &w0));
            prop_assert!((s.cost(&w0) - expected).abs() < 1e-12);
            let (r0, r1) = (s.residual(0, &w0), s.residual(0, &w1));
            if r1 > r0 {
                prop_assert!(s.cost(&w1) < s.cost(&w0));
            }
        }
    }
}
