use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{
    Gripper, LockCondition, ObjectKind, SimJoint, SimObject, WorldState, OPEN_THRESHOLD,
    PLACE_RADIUS, SENSOR_RADIUS, UNBLOCK_DISTANCE,
};
use crate::geometry::{Aabb, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskId {
    CabinetOpen,
    CabinetClosed,
    CabinetBlocked,
    CabinetLocked,
    CubesColor,
    CubesBlocked,
    KitchenExplore,
    CompositeExplore,
}

impl TaskId {
    pub const ALL: [TaskId; 8] = [
        TaskId::CabinetOpen,
        TaskId::CabinetClosed,
        TaskId::CabinetBlocked,
        TaskId::CabinetLocked,
        TaskId::CubesColor,
        TaskId::CubesBlocked,
        TaskId::KitchenExplore,
        TaskId::CompositeExplore,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskId::CabinetOpen => "cabinet-open",
            TaskId::CabinetClosed => "cabinet-closed",
            TaskId::CabinetBlocked => "cabinet-blocked",
            TaskId::CabinetLocked => "cabinet-locked",
            TaskId::CubesColor => "cubes-color",
            TaskId::CubesBlocked => "cubes-blocked",
            TaskId::KitchenExplore => "kitchen-explore",
            TaskId::CompositeExplore => "composite-explore",
        }
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown task id '{0}'")]
pub struct UnknownTask(pub String);

impl FromStr for TaskId {
    type Err = UnknownTask;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TaskId::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| UnknownTask(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskDefinition {
    pub id: TaskId,
    pub initial: WorldState,
    pub instruction: String,
    pub interactable_objects: Vec<String>,
    pub joints: Vec<String>,
    pub hidden_objects: Vec<String>,
}

impl TaskDefinition {
    /// Ground-truth goal predicate.
    pub fn check_success(&self, state: &WorldState) -> bool {
        match self.id {
            TaskId::CabinetOpen | TaskId::CabinetClosed | TaskId::CabinetBlocked => {
                placed_near(state, "yellow_cube", "target_position_in_wooden_cabinet")
            }
            TaskId::CabinetLocked => state.is_visible("blue_cube"),
            TaskId::CubesColor | TaskId::CubesBlocked => {
                state.crate_occupants("crate") == ["red_cube"]
            }
            TaskId::KitchenExplore => state.is_visible("green_apple"),
            TaskId::CompositeExplore => {
                state.joint("stone_cabinet").is_some_and(|j| j.fraction >= OPEN_THRESHOLD)
            }
        }
    }
}

fn placed_near(state: &WorldState, object: &str, target: &str) -> bool {
    match (state.object(object), state.object(target)) {
        (Some(o), Some(t)) => {
            !state.is_held(&o.name) && o.pose.position.distance(t.pose.position) <= PLACE_RADIUS
        }
        _ => false,
    }
}

pub fn load_task(id: TaskId) -> TaskDefinition {
    let mut def = match id {
        TaskId::CabinetOpen | TaskId::CabinetClosed | TaskId::CabinetBlocked => cabinet_scene(id),
        TaskId::CabinetLocked => lever_scene(),
        TaskId::CubesColor | TaskId::CubesBlocked => cubes_scene(id),
        TaskId::KitchenExplore => kitchen_scene(),
        TaskId::CompositeExplore => composite_scene(),
    };
    def.initial.refresh_locks();
    def
}

fn v(x: f64, y: f64, z: f64) -> Vec3 {
    Vec3::new(x, y, z)
}

fn names(list: &[&str]) -> Vec<String> {
    list.iter().map(|s| s.to_string()).collect()
}

fn base_state() -> WorldState {
    let rest = v(0.0, 0.0, 0.5);
    WorldState {
        gripper: Gripper { position: rest, held: None },
        rest_position: rest,
        ..WorldState::empty()
    }
}

fn joint(
    name: &str,
    handle: &str,
    closed: Vec3,
    open: Vec3,
    fraction: f64,
    lock: Option<LockCondition>,
    interior: Option<Aabb>,
) -> SimJoint {
    SimJoint {
        name: name.to_string(),
        fraction,
        lock,
        locked: false,
        handle: handle.to_string(),
        handle_closed: closed,
        handle_open: open,
        interior,
    }
}

/// Adds the joint together with its handle object, placed on the handle path.
fn add_joint(state: &mut WorldState, j: SimJoint) {
    let p = j.handle_position();
    if state.object_index(&j.handle).is_none() {
        state.objects.push(SimObject::new(&j.handle, ObjectKind::FixedFixture, p));
    }
    state.joints.push(j);
}

const CABINET_INSTRUCTION: &str =
    "move the yellow_cube to target_position inside the wooden_cabinet";

fn wooden_cabinet(state: &mut WorldState, fraction: f64, lock: Option<LockCondition>) {
    state.objects.push(SimObject::new("wooden_cabinet", ObjectKind::FixedFixture, v(0.2, 0.7, 0.15)));
    add_joint(
        state,
        joint(
            "wooden_cabinet",
            "wooden_cabinet_handle",
            v(0.2, 0.5, 0.2),
            v(-0.15, 0.3, 0.2),
            fraction,
            lock,
            Some(Aabb::new(v(0.0, 0.55, 0.0), v(0.4, 0.85, 0.3))),
        ),
    );
}

fn cabinet_scene(id: TaskId) -> TaskDefinition {
    let mut s = base_state();
    let fraction = if id == TaskId::CabinetOpen { 1.0 } else { 0.0 };
    let lock = (id == TaskId::CabinetBlocked).then(|| LockCondition::BarAcrossHandles {
        bar: "red_block_right_side".into(),
        anchor: v(0.2, 0.5, 0.2),
        unblock_distance: UNBLOCK_DISTANCE,
    });
    wooden_cabinet(&mut s, fraction, lock);
    s.objects.push(SimObject::new(
        "target_position_in_wooden_cabinet",
        ObjectKind::FixedFixture,
        v(0.2, 0.7, 0.08),
    ));
    s.objects.push(SimObject::new("yellow_cube", ObjectKind::Cube, v(-0.25, 0.0, 0.04)).with_color("yellow"));
    let mut vocab = vec![
        "yellow_cube",
        "wooden_cabinet",
        "wooden_cabinet_handle",
        "target_position_in_wooden_cabinet",
    ];
    if id == TaskId::CabinetBlocked {
        s.objects.push(
            SimObject::new("red_block_right_side", ObjectKind::Bar, v(0.25, 0.5, 0.2)).with_color("red"),
        );
        vocab.push("red_block_right_side");
    }
    s.aliases.insert(
        "target_position_in_cabinet".into(),
        "target_position_in_wooden_cabinet".into(),
    );
    TaskDefinition {
        id,
        initial: s,
        instruction: CABINET_INSTRUCTION.into(),
        interactable_objects: names(&vocab),
        joints: names(&["wooden_cabinet"]),
        hidden_objects: Vec::new(),
    }
}

fn lever_scene() -> TaskDefinition {
    let mut s = base_state();
    wooden_cabinet(
        &mut s,
        0.0,
        Some(LockCondition::LeverUnlocked { lever: "lever".into(), threshold: OPEN_THRESHOLD }),
    );
    s.objects.push(SimObject::new("lever", ObjectKind::Lever, v(-0.4, 0.4, 0.3)));
    add_joint(&mut s, joint("lever", "lever", v(-0.4, 0.4, 0.3), v(-0.4, 0.1, 0.3), 0.0, None, None));
    s.objects.push(SimObject::new("blue_cube", ObjectKind::Cube, v(0.2, 0.7, 0.05)).with_color("blue"));
    TaskDefinition {
        id: TaskId::CabinetLocked,
        initial: s,
        instruction: "find the blue_cube".into(),
        interactable_objects: names(&["wooden_cabinet", "wooden_cabinet_handle", "lever", "blue_cube"]),
        joints: names(&["wooden_cabinet", "lever"]),
        hidden_objects: names(&["blue_cube"]),
    }
}

fn cubes_scene(id: TaskId) -> TaskDefinition {
    let mut s = base_state();
    let crate_pos = v(0.3, 0.3, 0.05);
    s.objects.push(SimObject::new("crate", ObjectKind::Crate, crate_pos).with_color("red"));
    let (instruction, vocab, yellow) = if id == TaskId::CubesColor {
        (
            "place the cube with the same color as the crate on the crate",
            ["yellow_cube", "red_cube", "crate"],
            v(0.0, 0.4, 0.05),
        )
    } else {
        ("place the red cube on the crate", ["red_cube", "yellow_cube", "crate"], crate_pos)
    };
    s.objects.push(SimObject::new("red_cube", ObjectKind::Cube, v(-0.2, 0.3, 0.05)).with_color("red"));
    s.objects.push(SimObject::new("yellow_cube", ObjectKind::Cube, yellow).with_color("yellow"));
    TaskDefinition {
        id,
        initial: s,
        instruction: instruction.into(),
        interactable_objects: names(&vocab),
        joints: Vec::new(),
        hidden_objects: Vec::new(),
    }
}

fn kitchen_scene() -> TaskDefinition {
    let mut s = base_state();
    s.objects.push(SimObject::new("kitchen_cabinet", ObjectKind::FixedFixture, v(-0.4, 0.7, 0.25)));
    add_joint(
        &mut s,
        joint(
            "kitchen_cabinet",
            "kitchen_cabinet_handle",
            v(-0.3, 0.5, 0.3),
            v(-0.6, 0.3, 0.3),
            0.0,
            None,
            Some(Aabb::new(v(-0.6, 0.55, 0.0), v(-0.2, 0.85, 0.5))),
        ),
    );
    s.objects.push(SimObject::new("microwave", ObjectKind::FixedFixture, v(0.45, 0.7, 0.3)));
    let microwave_handle = v(0.35, 0.5, 0.3);
    add_joint(
        &mut s,
        joint(
            "microwave",
            "microwave_handle",
            microwave_handle,
            v(0.65, 0.3, 0.3),
            0.0,
            Some(LockCondition::ObjectInFront {
                blocker: "kettle".into(),
                anchor: microwave_handle,
                unblock_distance: UNBLOCK_DISTANCE,
            }),
            Some(Aabb::new(v(0.3, 0.55, 0.15), v(0.6, 0.85, 0.45))),
        ),
    );
    s.objects.push(SimObject::new("kettle", ObjectKind::Kettle, v(0.3, 0.37, 0.3)).with_color("blue"));
    s.objects.push(SimObject::new("green_apple", ObjectKind::Apple, v(0.45, 0.7, 0.25)).with_color("green"));
    // The published instruction names a green cube; the only green object is the apple.
    s.aliases.insert("green_cube".into(), "green_apple".into());
    TaskDefinition {
        id: TaskId::KitchenExplore,
        initial: s,
        instruction: "find the green_cube".into(),
        interactable_objects: names(&[
            "kitchen_cabinet",
            "kitchen_cabinet_handle",
            "microwave",
            "microwave_handle",
            "kettle",
            "green_apple",
        ]),
        joints: names(&["kitchen_cabinet", "microwave"]),
        hidden_objects: names(&["green_apple"]),
    }
}

fn composite_scene() -> TaskDefinition {
    let mut s = base_state();
    s.objects.push(SimObject::new("stone_cabinet", ObjectKind::FixedFixture, v(0.5, 0.6, 0.2)));
    add_joint(
        &mut s,
        joint(
            "stone_cabinet",
            "stone_cabinet_handle",
            v(0.35, 0.45, 0.2),
            v(0.05, 0.45, 0.2),
            0.0,
            Some(LockCondition::WeightOnSensor { sensor: "weight_sensor".into(), radius: SENSOR_RADIUS }),
            Some(Aabb::new(v(0.35, 0.5, 0.0), v(0.65, 0.8, 0.4))),
        ),
    );
    s.objects.push(SimObject::new("weight_sensor", ObjectKind::FixedFixture, v(0.45, 0.05, 0.05)));
    s.objects.push(SimObject::new("wooden_drawer", ObjectKind::FixedFixture, v(-0.35, 0.65, 0.15)));
    add_joint(
        &mut s,
        joint(
            "wooden_drawer",
            "wooden_drawer_handle",
            v(-0.35, 0.45, 0.15),
            v(-0.35, 0.15, 0.15),
            0.0,
            None,
            Some(Aabb::new(v(-0.5, 0.5, 0.0), v(-0.2, 0.8, 0.3))),
        ),
    );
    s.objects.push(SimObject::new("red_cube", ObjectKind::Weight, v(-0.35, 0.65, 0.05)).with_color("red"));
    TaskDefinition {
        id: TaskId::CompositeExplore,
        initial: s,
        instruction:
            "open the stone_cabinet. The weight sensor lock can be unlocked by putting the red_cube on it."
                .into(),
        interactable_objects: names(&[
            "stone_cabinet",
            "stone_cabinet_handle",
            "wooden_drawer",
            "wooden_drawer_handle",
            "weight_sensor",
            "red_cube",
        ]),
        joints: names(&["stone_cabinet", "wooden_drawer"]),
        hidden_objects: names(&["red_cube"]),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{Control, GripCommand};

    #[test]
    fn ids_round_trip() {
        for id in TaskId::ALL {
            assert_eq!(id.as_str().parse::<TaskId>().unwrap(), id);
        }
        assert!("cabinet-ajar".parse::<TaskId>().is_err());
    }

    #[test]
    fn initial_states_are_not_successful() {
        for id in TaskId::ALL {
            let t = load_task(id);
            assert!(!t.check_success(&t.initial), "{id}");
        }
    }

    #[test]
    fn vocabulary_names_exist_and_hidden_are_hidden() {
        for id in TaskId::ALL {
            let t = load_task(id);
            for n in &t.interactable_objects {
                assert!(t.initial.object(n).is_some(), "{id}: {n}");
            }
            for j in &t.joints {
                assert!(t.initial.joint(j).is_some(), "{id}: {j}");
            }
            let visible = t.initial.visible_objects();
            for h in &t.hidden_objects {
                assert!(!visible.contains(h), "{id}: {h}");
            }
        }
    }

    #[test]
    fn initial_locks() {
        assert!(load_task(TaskId::CabinetBlocked).initial.joint("wooden_cabinet").unwrap().locked);
        assert!(!load_task(TaskId::CabinetClosed).initial.joint("wooden_cabinet").unwrap().locked);
        assert!(load_task(TaskId::CabinetLocked).initial.joint("wooden_cabinet").unwrap().locked);
        assert!(load_task(TaskId::KitchenExplore).initial.joint("microwave").unwrap().locked);
        assert!(load_task(TaskId::CompositeExplore).initial.joint("stone_cabinet").unwrap().locked);
        let cubes = load_task(TaskId::CubesBlocked);
        assert_eq!(cubes.initial.crate_occupants("crate"), vec!["yellow_cube"]);
    }

    #[test]
    fn cabinet_open_success_when_cube_released_at_target() {
        let t = load_task(TaskId::CabinetOpen);
        let mut s = t.initial.clone();
        let target = s.object("target_position_in_wooden_cabinet").unwrap().pose.position;
        let i = s.object_index("yellow_cube").unwrap();
        s.objects[i].pose.position = target;
        assert!(t.check_success(&s));
        s.gripper.held = Some("yellow_cube".into());
        assert!(!t.check_success(&s));
        s.step_in_place(&Control::grip(GripCommand::Release), 0.05);
        assert!(t.check_success(&s));
    }
}
