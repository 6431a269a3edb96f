use crate::text::{mentioned_names, mentions, tokens};
use crate::world::{LockCondition, ObjectKind, WorldState};

pub(super) fn presence(scene: &WorldState, object: &str) -> String {
    if scene.is_visible(object.trim()) { "Yes." } else { "No." }.to_string()
}

/// Every name the scene answers to, aliases included.
fn scene_names(scene: &WorldState) -> Vec<String> {
    scene.objects.iter().map(|o| o.name.clone()).chain(scene.aliases.keys().cloned()).collect()
}

fn is_container(scene: &WorldState, name: &str) -> bool {
    scene.joint(name).is_some_and(|j| j.interior.is_some())
}

pub(super) fn state_query(scene: &WorldState, question: &str) -> String {
    let q = question.to_ascii_lowercase();
    let names = scene_names(scene);
    let mentioned = mentioned_names(question, &names);
    let container = mentioned.iter().copied().find(|n| is_container(scene, n));
    let subject = mentioned
        .iter()
        .copied()
        .find(|n| !is_container(scene, n) && scene.joint_for_handle(n).is_none());

    if q.contains("color") || q.contains("colour") {
        return colors(scene, question, &mentioned);
    }
    if let Some(c) = container {
        let j = scene.joint(c).expect("container is a joint");
        if !j.is_open() {
            return format!("No, the {c} is closed, so I cannot see inside it.");
        }
        let interior = j.interior.expect("container has an interior");
        let inside = |n: &str| {
            scene.is_visible(n) && scene.position_of(n).is_some_and(|p| interior.contains(p))
        };
        return match subject {
            Some(x) if inside(x) => format!("Yes, there is a {x} inside the {c}."),
            Some(x) => format!("No, there is no {x} inside the {c}."),
            None => {
                let seen: Vec<&str> = scene
                    .objects
                    .iter()
                    .filter(|o| o.graspable && inside(&o.name))
                    .map(|o| o.name.as_str())
                    .collect();
                if seen.is_empty() {
                    format!("The {c} is empty.")
                } else {
                    format!("I see the {} inside the {c}.", seen.join(" and the "))
                }
            }
        };
    }
    match subject {
        Some(x) if scene.is_visible(x) => format!("Yes, I can see the {x}."),
        Some(x) => format!("No, I cannot see the {x}."),
        None => "I am not sure.".to_string(),
    }
}

/// Colors of the mentioned objects, plus every visible object matching a
/// plural noun such as "cubes".
fn colors(scene: &WorldState, question: &str, mentioned: &[&str]) -> String {
    let plurals: Vec<String> = tokens(question)
        .into_iter()
        .filter_map(|t| t.strip_suffix('s').map(str::to_string))
        .filter(|t| t.len() > 2)
        .collect();
    let parts: Vec<String> = scene
        .objects
        .iter()
        .filter(|o| scene.is_visible(&o.name))
        .filter(|o| {
            mentioned.contains(&o.name.as_str())
                || o.name.split('_').any(|piece| plurals.iter().any(|p| p == piece))
        })
        .filter_map(|o| o.color.as_ref().map(|c| format!("The {} is {c}.", o.name)))
        .collect();
    if parts.is_empty() {
        "I cannot tell.".to_string()
    } else {
        parts.join(" ")
    }
}

/// A diagnosis sentence split around the object it blames.
#[derive(Debug, Clone, PartialEq)]
pub(super) struct Diagnosis {
    pub sentence: String,
    pub key: Option<String>,
    prefix: String,
    suffix: String,
}

impl Diagnosis {
    fn blaming(prefix: &str, key: &str, suffix: &str) -> Self {
        Self {
            sentence: format!("{prefix}{key}{suffix}"),
            key: Some(key.to_string()),
            prefix: prefix.into(),
            suffix: suffix.into(),
        }
    }

    fn nothing() -> Self {
        Self {
            sentence: "I do not see anything in the scene preventing that.".into(),
            key: None,
            prefix: "The ".into(),
            suffix: " is preventing that.".into(),
        }
    }

    /// Same sentence with `other` blamed instead.
    pub fn corrupt(&self, other: &str) -> String {
        format!("{}{other}{}", self.prefix, self.suffix)
    }
}

pub(super) fn diagnose(scene: &WorldState, action: &str) -> Diagnosis {
    for j in &scene.joints {
        if !(mentions(action, &j.name) || mentions(action, &j.handle)) || !j.locked {
            continue;
        }
        let (joint, handle) = (j.name.as_str(), j.handle.as_str());
        match &j.lock {
            Some(LockCondition::BarAcrossHandles { bar, .. }) => {
                return Diagnosis::blaming("The ", bar, &format!(" is lying across the {handle} and keeps the {joint} shut."));
            }
            Some(LockCondition::ObjectInFront { blocker, .. }) => {
                return Diagnosis::blaming("The ", blocker, &format!(" is in front of the {joint} and blocks the {handle}."));
            }
            Some(LockCondition::LeverUnlocked { lever, .. }) => {
                return Diagnosis::blaming("The ", lever, &format!(" has not been pulled, so the {joint} is still locked."));
            }
            Some(LockCondition::WeightOnSensor { sensor, .. }) => {
                return Diagnosis::blaming("The ", sensor, &format!(" has nothing on it, so the {joint} is still locked."));
            }
            None => {}
        }
    }
    for c in scene.objects.iter().filter(|o| o.kind == ObjectKind::Crate && mentions(action, &o.name)) {
        if let Some(occ) = scene.crate_occupants(&c.name).into_iter().find(|n| !mentions(action, n)) {
            return Diagnosis::blaming("The ", occ, &format!(" is already on the {}, which only holds one cube.", c.name));
        }
    }
    let names = scene_names(scene);
    for n in mentioned_names(action, &names) {
        let Some(p) = scene.position_of(n) else { continue };
        if let Some(ci) = scene.closed_container_at(p) {
            let c = &scene.joints[ci].name;
            if !mentions(action, c) {
                return Diagnosis::blaming("The ", c, " is closed, so nothing can get inside it.");
            }
        }
    }
    Diagnosis::nothing()
}
