//! Kinematic world model.
//!
//! The gripper is a velocity-controlled point with a grasp radius. Articulated
//! joints are 1-DOF scalars whose handle travels along a straight segment from
//! the closed to the open position. Nothing has mass; released objects stay
//! where they are let go, except that a crate accepts only one cube.

mod tasks;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::geometry::{project_onto_segment, wrap_angle, Aabb, Vec3};

pub use tasks::{load_task, TaskDefinition, TaskId, UnknownTask};

/// Grasp succeeds only for objects (or handles) within this distance, meters.
pub const GRASP_RADIUS: f64 = 0.10;
/// Joint fraction at which a container counts as open.
pub const OPEN_THRESHOLD: f64 = 0.7;
/// Distance a blocker must keep from a handle for the joint to unlock, meters.
pub const UNBLOCK_DISTANCE: f64 = 0.25;
/// Radius of a placement target (crate top, cabinet target), meters.
pub const PLACE_RADIUS: f64 = 0.08;
/// Radius within which the weight sensor registers an object, meters.
pub const SENSOR_RADIUS: f64 = 0.08;
/// Gripper speed limit, m/s.
pub const MAX_SPEED: f64 = 0.5;
/// Where a rejected cube ends up, measured from the crate center, meters.
pub const CRATE_SLIDE_OFF: f64 = 0.2;

/// Name that always resolves to the gripper.
pub const PALM: &str = "palm";
/// Name that always resolves to the gripper's rest point.
pub const REST_POSITION: &str = "rest_position";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub position: Vec3,
    /// Rotation about the vertical axis, radians, kept in (-pi, pi].
    pub orientation: f64,
}

impl Pose {
    pub fn at(position: Vec3) -> Self {
        Self { position, orientation: 0.0 }
    }

    pub fn new(position: Vec3, orientation: f64) -> Self {
        Self { position, orientation: wrap_angle(orientation) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObjectKind {
    Cube,
    Bar,
    Kettle,
    Apple,
    Crate,
    Lever,
    Weight,
    FixedFixture,
}

impl ObjectKind {
    /// Kinds that can sit inside a closed container and be hidden by it.
    fn hideable(self) -> bool {
        matches!(self, Self::Cube | Self::Bar | Self::Kettle | Self::Apple | Self::Weight)
    }

    /// Kinds a crate or a weight sensor register.
    fn is_load(self) -> bool {
        matches!(self, Self::Cube | Self::Weight)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimObject {
    pub name: String,
    pub pose: Pose,
    pub graspable: bool,
    pub kind: ObjectKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub color: Option<String>,
}

impl SimObject {
    pub fn new(name: &str, kind: ObjectKind, position: Vec3) -> Self {
        let graspable = matches!(
            kind,
            ObjectKind::Cube | ObjectKind::Bar | ObjectKind::Kettle | ObjectKind::Apple | ObjectKind::Weight
        );
        Self { name: name.to_string(), pose: Pose::at(position), graspable, kind, color: None }
    }

    pub fn with_color(mut self, color: &str) -> Self {
        self.color = Some(color.to_string());
        self
    }
}

/// Predicate gating a joint. Evaluated against the world state alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LockCondition {
    /// A bar lies across the handles until it is moved away from `anchor`.
    BarAcrossHandles { bar: String, anchor: Vec3, unblock_distance: f64 },
    /// An object stands in front of the door until it is moved away from `anchor`.
    ObjectInFront { blocker: String, anchor: Vec3, unblock_distance: f64 },
    /// Locked while the lever joint is below `threshold`.
    LeverUnlocked { lever: String, threshold: f64 },
    /// Locked until a cube or weight rests on the sensor.
    WeightOnSensor { sensor: String, radius: f64 },
}

impl LockCondition {
    pub fn is_locked(&self, state: &WorldState) -> bool {
        match self {
            Self::BarAcrossHandles { bar: blocker, anchor, unblock_distance }
            | Self::ObjectInFront { blocker, anchor, unblock_distance } => state
                .object(blocker)
                .is_some_and(|o| o.pose.position.distance(*anchor) <= *unblock_distance),
            Self::LeverUnlocked { lever, threshold } => {
                state.joint(lever).map_or(true, |j| j.fraction < *threshold)
            }
            Self::WeightOnSensor { sensor, radius } => {
                let Some(sensor) = state.object(sensor) else { return true };
                !state.objects.iter().any(|o| {
                    o.kind.is_load()
                        && !state.is_held(&o.name)
                        && o.pose.position.distance(sensor.pose.position) <= *radius
                })
            }
        }
    }

    /// The scene object whose state this lock depends on.
    pub fn key_object(&self) -> &str {
        match self {
            Self::BarAcrossHandles { bar, .. } => bar,
            Self::ObjectInFront { blocker, .. } => blocker,
            Self::LeverUnlocked { lever, .. } => lever,
            Self::WeightOnSensor { sensor, .. } => sensor,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimJoint {
    pub name: String,
    /// 0 is closed, 1 is open.
    pub fraction: f64,
    pub lock: Option<LockCondition>,
    /// Cached lock state, refreshed at the end of every step.
    pub locked: bool,
    /// Object that moves with the joint and can be grasped to drive it.
    pub handle: String,
    pub handle_closed: Vec3,
    pub handle_open: Vec3,
    /// Container volume hidden and unreachable while the joint is closed.
    pub interior: Option<Aabb>,
}

impl SimJoint {
    pub fn handle_position(&self) -> Vec3 {
        self.handle_closed.lerp(self.handle_open, self.fraction)
    }

    pub fn is_open(&self) -> bool {
        self.fraction >= OPEN_THRESHOLD
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gripper {
    pub position: Vec3,
    pub held: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GripCommand {
    #[default]
    Hold,
    Grasp,
    Release,
}

/// Bounded gripper velocity plus a grasp command.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Control {
    pub velocity: Vec3,
    pub grip: GripCommand,
}

impl Control {
    pub fn velocity(velocity: Vec3) -> Self {
        Self { velocity, grip: GripCommand::Hold }
    }

    pub fn grip(grip: GripCommand) -> Self {
        Self { velocity: Vec3::ZERO, grip }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub objects: Vec<SimObject>,
    pub joints: Vec<SimJoint>,
    pub gripper: Gripper,
    pub rest_position: Vec3,
    pub time: f64,
    /// Extra names accepted for objects, mapped to the canonical name.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub aliases: BTreeMap<String, String>,
}

/// JSON scene snapshot: `{"joints": {name: fraction}, "objects": {name: [x, y, z]}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSnapshot {
    pub joints: BTreeMap<String, f64>,
    pub objects: BTreeMap<String, Vec3>,
}

/// Reference to something with a position.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntityRef {
    Palm,
    Rest,
    Object(usize),
}

impl WorldState {
    pub fn empty() -> Self {
        Self {
            objects: Vec::new(),
            joints: Vec::new(),
            gripper: Gripper { position: Vec3::ZERO, held: None },
            rest_position: Vec3::ZERO,
            time: 0.0,
            aliases: BTreeMap::new(),
        }
    }

    fn canonical<'a>(&'a self, name: &'a str) -> &'a str {
        self.aliases.get(name).map_or(name, String::as_str)
    }

    pub fn object_index(&self, name: &str) -> Option<usize> {
        let name = self.canonical(name);
        self.objects.iter().position(|o| o.name == name)
    }

    pub fn object(&self, name: &str) -> Option<&SimObject> {
        self.object_index(name).map(|i| &self.objects[i])
    }

    pub fn joint_index(&self, name: &str) -> Option<usize> {
        self.joints.iter().position(|j| j.name == name)
    }

    pub fn joint(&self, name: &str) -> Option<&SimJoint> {
        self.joint_index(name).map(|i| &self.joints[i])
    }

    pub fn resolve(&self, name: &str) -> Option<EntityRef> {
        match name {
            PALM => Some(EntityRef::Palm),
            REST_POSITION => Some(EntityRef::Rest),
            _ => self.object_index(name).map(EntityRef::Object),
        }
    }

    pub fn position(&self, entity: EntityRef) -> Vec3 {
        match entity {
            EntityRef::Palm => self.gripper.position,
            EntityRef::Rest => self.rest_position,
            EntityRef::Object(i) => self.objects[i].pose.position,
        }
    }

    pub fn position_of(&self, name: &str) -> Option<Vec3> {
        self.resolve(name).map(|e| self.position(e))
    }

    pub fn is_held(&self, name: &str) -> bool {
        self.gripper.held.as_deref() == Some(name)
    }

    /// Joint whose handle is the named object.
    pub fn joint_for_handle(&self, handle: &str) -> Option<usize> {
        self.joints.iter().position(|j| j.handle == handle)
    }

    /// True when `p` lies inside the interior of a container that is not open.
    pub fn inside_closed_container(&self, p: Vec3) -> bool {
        self.closed_container_at(p).is_some()
    }

    /// Index of the closed container whose interior holds `p`.
    pub fn closed_container_at(&self, p: Vec3) -> Option<usize> {
        self.joints
            .iter()
            .position(|j| !j.is_open() && j.interior.is_some_and(|b| b.contains(p)))
    }

    pub fn is_visible(&self, name: &str) -> bool {
        let Some(o) = self.object(name) else { return false };
        if !o.kind.hideable() || self.is_held(&o.name) {
            return true;
        }
        !self.inside_closed_container(o.pose.position)
    }

    /// Names of objects the robot can currently see, in scene order.
    pub fn visible_objects(&self) -> Vec<String> {
        self.objects
            .iter()
            .filter(|o| self.is_visible(&o.name))
            .map(|o| o.name.clone())
            .collect()
    }

    /// Loads (cubes, weights) resting on the named crate, excluding the held object.
    pub fn crate_occupants(&self, crate_name: &str) -> Vec<&str> {
        let Some(c) = self.object(crate_name) else { return Vec::new() };
        self.objects
            .iter()
            .filter(|o| {
                o.kind.is_load()
                    && !self.is_held(&o.name)
                    && o.pose.position.distance(c.pose.position) <= PLACE_RADIUS
            })
            .map(|o| o.name.as_str())
            .collect()
    }

    pub fn snapshot(&self) -> SceneSnapshot {
        let joints = self.joints.iter().map(|j| (j.name.clone(), j.fraction)).collect();
        let mut objects: BTreeMap<String, Vec3> =
            self.objects.iter().map(|o| (o.name.clone(), o.pose.position)).collect();
        objects.insert(PALM.to_string(), self.gripper.position);
        SceneSnapshot { joints, objects }
    }

    /// Recomputes the cached lock flags.
    pub fn refresh_locks(&mut self) {
        let flags: Vec<bool> = self
            .joints
            .iter()
            .map(|j| j.lock.as_ref().is_some_and(|l| l.is_locked(self)))
            .collect();
        for (j, locked) in self.joints.iter_mut().zip(flags) {
            j.locked = locked;
        }
    }

    /// Transition function: pure in `(self, control, dt)`.
    pub fn step(&self, control: &Control, dt: f64) -> WorldState {
        let mut next = self.clone();
        next.step_in_place(control, dt);
        next
    }

    pub fn step_in_place(&mut self, control: &Control, dt: f64) {
        if !(dt > 0.0) {
            return;
        }
        self.time += dt;
        match control.grip {
            GripCommand::Hold => {}
            GripCommand::Grasp => self.grasp(),
            GripCommand::Release => self.release(),
        }

        let velocity = if control.velocity.is_finite() {
            control.velocity.clamp_norm(MAX_SPEED)
        } else {
            Vec3::ZERO
        };
        let current = self.gripper.position;
        let mut desired = current + velocity * dt;
        desired.z = desired.z.max(0.0);

        let handle_joint = self.gripper.held.as_deref().and_then(|h| self.joint_for_handle(h));
        if let Some(ji) = handle_joint {
            let joint = &mut self.joints[ji];
            if !joint.locked {
                joint.fraction = project_onto_segment(desired, joint.handle_closed, joint.handle_open);
            }
            let p = joint.handle_position();
            let handle = joint.handle.clone();
            self.gripper.position = p;
            if let Some(i) = self.object_index(&handle) {
                self.objects[i].pose.position = p;
            }
        } else {
            if self.inside_closed_container(desired) && !self.inside_closed_container(current) {
                desired = current;
            }
            self.gripper.position = desired;
            if let Some(i) = self.gripper.held.as_deref().and_then(|h| self.object_index(h)) {
                self.objects[i].pose.position = desired;
            }
        }
        // Handles of joints not being driven follow their joint.
        for j in 0..self.joints.len() {
            let p = self.joints[j].handle_position();
            if let Some(i) = self.object_index(&self.joints[j].handle.clone()) {
                self.objects[i].pose.position = p;
            }
        }
        self.refresh_locks();
    }

    fn grasp(&mut self) {
        if self.gripper.held.is_some() {
            return;
        }
        let p = self.gripper.position;
        let best = self
            .objects
            .iter()
            .filter(|o| {
                (o.graspable && self.is_visible(&o.name)) || self.joint_for_handle(&o.name).is_some()
            })
            .map(|o| (o.pose.position.distance(p), &o.name))
            .filter(|(d, _)| *d <= GRASP_RADIUS)
            .min_by(|a, b| a.0.total_cmp(&b.0));
        if let Some((_, name)) = best {
            self.gripper.held = Some(name.clone());
        }
    }

    fn release(&mut self) {
        let Some(name) = self.gripper.held.take() else { return };
        if self.joint_for_handle(&name).is_some() {
            return;
        }
        let Some(idx) = self.object_index(&name) else { return };
        if !self.objects[idx].kind.is_load() {
            return;
        }
        let pos = self.objects[idx].pose.position;
        let crates: Vec<Vec3> = self
            .objects
            .iter()
            .filter(|o| o.kind == ObjectKind::Crate)
            .map(|o| o.pose.position)
            .collect();
        for c in crates {
            if pos.distance(c) > PLACE_RADIUS {
                continue;
            }
            let occupied = self.objects.iter().enumerate().any(|(i, o)| {
                i != idx && o.kind.is_load() && o.pose.position.distance(c) <= PLACE_RADIUS
            });
            if occupied {
                let mut dir = Vec3::new(pos.x - c.x, pos.y - c.y, 0.0);
                if dir.norm() < 1e-9 {
                    dir = Vec3::new(1.0, 0.0, 0.0);
                }
                let dir = dir * (1.0 / dir.norm());
                self.objects[idx].pose.position = Vec3::new(c.x, c.y, c.z) + dir * CRATE_SLIDE_OFF;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn door_world() -> WorldState {
        let mut w = WorldState::empty();
        w.objects.push(SimObject::new("door_handle", ObjectKind::FixedFixture, Vec3::ZERO));
        w.objects.push(SimObject::new("bar", ObjectKind::Bar, Vec3::new(0.05, 0.0, 0.0)));
        w.joints.push(SimJoint {
            name: "door".into(),
            fraction: 0.0,
            lock: Some(LockCondition::BarAcrossHandles {
                bar: "bar".into(),
                anchor: Vec3::ZERO,
                unblock_distance: UNBLOCK_DISTANCE,
            }),
            locked: false,
            handle: "door_handle".into(),
            handle_closed: Vec3::ZERO,
            handle_open: Vec3::new(0.0, -0.4, 0.0),
            interior: None,
        });
        w.refresh_locks();
        w
    }

    #[test]
    fn pulling_locked_handle_keeps_fraction() {
        let mut w = door_world();
        assert!(w.joints[0].locked);
        w.step_in_place(&Control::grip(GripCommand::Grasp), 0.05);
        assert_eq!(w.gripper.held.as_deref(), Some("door_handle"));
        for _ in 0..20 {
            w.step_in_place(&Control::velocity(Vec3::new(0.0, -0.5, 0.0)), 0.05);
        }
        assert_eq!(w.joints[0].fraction, 0.0);
    }

    #[test]
    fn grasp_with_nothing_in_reach_holds_nothing() {
        let mut w = door_world();
        w.gripper.position = Vec3::new(1.0, 1.0, 1.0);
        w.step_in_place(&Control::grip(GripCommand::Grasp), 0.05);
        assert!(w.gripper.held.is_none());
    }

    #[test]
    fn unlocked_handle_drives_joint() {
        let mut w = door_world();
        w.objects[1].pose.position = Vec3::new(2.0, 0.0, 0.0);
        w.refresh_locks();
        w.step_in_place(&Control::grip(GripCommand::Grasp), 0.05);
        for _ in 0..10 {
            w.step_in_place(&Control::velocity(Vec3::new(0.0, -0.5, 0.0)), 0.05);
        }
        assert!((w.joints[0].fraction - 0.625).abs() < 1e-9);
        assert_eq!(w.gripper.position, w.objects[0].pose.position);
    }

    #[test]
    fn speed_is_clamped_and_nan_is_ignored() {
        let mut w = WorldState::empty();
        w.step_in_place(&Control::velocity(Vec3::new(100.0, 0.0, 0.0)), 0.1);
        assert!((w.gripper.position.x - MAX_SPEED * 0.1).abs() < 1e-12);
        w.step_in_place(&Control::velocity(Vec3::new(f64::NAN, 0.0, 0.0)), 0.1);
        assert!((w.gripper.position.x - MAX_SPEED * 0.1).abs() < 1e-12);
        w.step_in_place(&Control::velocity(Vec3::new(0.0, 0.0, -5.0)), 0.1);
        assert_eq!(w.gripper.position.z, 0.0);
    }

    #[test]
    fn crate_rejects_second_cube() {
        let mut w = WorldState::empty();
        w.objects.push(SimObject::new("crate", ObjectKind::Crate, Vec3::ZERO));
        w.objects.push(SimObject::new("a", ObjectKind::Cube, Vec3::ZERO));
        w.objects.push(SimObject::new("b", ObjectKind::Cube, Vec3::new(0.02, 0.0, 0.0)));
        w.gripper.position = Vec3::new(0.02, 0.0, 0.0);
        w.gripper.held = Some("b".into());
        w.step_in_place(&Control::grip(GripCommand::Release), 0.05);
        let b = w.object("b").unwrap().pose.position;
        assert!((b.distance(Vec3::ZERO) - CRATE_SLIDE_OFF).abs() < 1e-9);
        assert_eq!(w.crate_occupants("crate"), vec!["a"]);
    }

    #[test]
    fn empty_scene_has_no_visible_objects() {
        assert!(WorldState::empty().visible_objects().is_empty());
    }

    #[test]
    fn snapshot_shape() {
        let w = door_world();
        let json = serde_json::to_value(w.snapshot()).unwrap();
        assert_eq!(json["joints"]["door"], 0.0);
        assert_eq!(json["objects"]["bar"], serde_json::json!([0.05, 0.0, 0.0]));
        assert!(json["objects"]["palm"].is_array());
    }
}
