use crate::prompts::{parse_history, plan_block, HistoryEntry};
use crate::text::{mentioned_names, mentions, tokens, yes_no_lead};
use crate::world::{PALM, REST_POSITION};

const VISION_VERBS: &[&str] = &[
    "look", "check", "identify", "inspect", "observe", "see", "search", "examine", "locate", "find", "detect",
    "verify", "scan", "view",
];
const RELOCATION_VERBS: &[&str] = &[
    "move", "place", "put", "relocate", "carry", "bring", "transfer", "remove", "take", "drop", "stack", "lift",
    "pick",
];
const JOINT_VERBS: &[&str] = &["open", "close", "pull", "push", "turn", "activate", "unlock"];
const PREPOSITIONS: &[&str] = &[" to ", " onto ", " on ", " into ", " inside ", " in "];

pub(super) fn list(slot: &str) -> Vec<String> {
    slot.split(',').map(str::trim).filter(|s| !s.is_empty()).map(str::to_string).collect()
}

fn lead_verb(text: &str) -> String {
    tokens(text).into_iter().next().unwrap_or_default()
}

fn first_sentence(text: &str) -> &str {
    text.split('.').map(str::trim).find(|s| !s.is_empty()).unwrap_or("")
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    c.next().map(|f| f.to_uppercase().chain(c).collect()).unwrap_or_default()
}

/// The word following the first "the ".
fn noun_after_the(text: &str) -> Option<String> {
    let lower = text.to_ascii_lowercase();
    let at = lower.find("the ")? + 4;
    let word: String = text[at..].chars().take_while(|c| c.is_ascii_alphanumeric() || *c == '_').collect();
    (!word.is_empty()).then_some(word)
}

fn phrase_after(text: &str, marker: &str) -> Option<String> {
    let lower = text.to_ascii_lowercase();
    let at = lower.find(marker)? + marker.len();
    noun_after_the(&format!("the {}", &text[at..]))
}

fn strip_the(s: &str) -> &str {
    let t = s.trim();
    t.strip_prefix("the ").or_else(|| t.strip_prefix("The ")).unwrap_or(t).trim()
}

/// Objects that open: those listed together with a `<name>_handle`.
fn containers(objects: &[String]) -> Vec<String> {
    objects.iter().filter(|o| objects.contains(&format!("{o}_handle"))).cloned().collect()
}

fn handle_of(objects: &[String], joint: &str) -> String {
    let h = format!("{joint}_handle");
    if objects.contains(&h) { h } else { joint.to_string() }
}

/// Mentioned names ordered by where they first appear.
fn mentioned_in_order<'a>(text: &str, names: &'a [String]) -> Vec<&'a str> {
    let lower = text.to_ascii_lowercase();
    let mut found: Vec<(usize, &str)> = mentioned_names(text, names)
        .into_iter()
        .map(|n| {
            let spaced = n.replace('_', " ");
            let pos = lower.find(n).or_else(|| lower.find(&spaced)).unwrap_or(usize::MAX);
            (pos, n)
        })
        .collect();
    found.sort();
    found.into_iter().map(|(_, n)| n).collect()
}

/// Object whose name shares the most words with `phrase`.
fn best_overlap(phrase: &str, objects: &[String]) -> Option<String> {
    let words: Vec<String> = phrase.to_ascii_lowercase().split(|c: char| !c.is_ascii_alphanumeric()).map(str::to_string).collect();
    objects
        .iter()
        .map(|o| (o.split('_').filter(|p| words.iter().any(|w| w == p)).count(), o))
        .filter(|(score, _)| *score > 0)
        .max_by(|a, b| a.0.cmp(&b.0).then(b.1.len().cmp(&a.1.len())))
        .map(|(_, o)| o.clone())
}

/// `(object phrase, preposition, destination phrase)` split at the earliest preposition.
fn split_destination(action: &str) -> Option<(String, String, String)> {
    let lower = action.to_ascii_lowercase();
    let (at, prep) = PREPOSITIONS
        .iter()
        .filter_map(|p| lower.find(p).map(|i| (i, *p)))
        .min_by_key(|(i, p)| (*i, std::cmp::Reverse(p.len())))?;
    let verb_len = action.split_whitespace().next().map_or(0, str::len);
    let object = action.get(verb_len..at)?.trim().to_string();
    Some((object, prep.trim().to_string(), action[at + prep.len()..].trim().to_string()))
}

fn is_descriptive(phrase: &str) -> bool {
    let l = phrase.to_ascii_lowercase();
    l.contains("same color") || l.contains("same colour")
}

struct BasePlan {
    thought: String,
    steps: Vec<String>,
    /// Object the goal says must be carried somewhere first.
    carried: Option<String>,
}

fn explore(objects: &[String], skip: &[String]) -> Option<String> {
    let all = containers(objects);
    all.iter()
        .find(|c| !skip.contains(c))
        .cloned()
}

fn base_plan(objects: &[String], goal: &str, explored: &[String]) -> BasePlan {
    let first = first_sentence(goal);
    let verb = lead_verb(first);
    let mut steps = Vec::new();
    let mut carried = None;
    let thought;
    match verb.as_str() {
        "find" | "locate" | "search" | "retrieve" => {
            let x = noun_after_the(first).unwrap_or_else(|| first.to_string());
            if objects.contains(&x) {
                thought = format!("The {x} should already be in view, so I will look at it.");
                steps.push(format!("Look at the {x}"));
            } else {
                let c = explore(objects, explored).or_else(|| explore(objects, &[]));
                match c {
                    Some(c) => {
                        thought = format!("To find the {x}, I will start by looking inside the {c}.");
                        steps.push(format!("Open the {c}"));
                        steps.push(format!("Look inside the {c}"));
                    }
                    None => {
                        thought = format!("I will look around for the {x}.");
                        steps.push(format!("Look for the {x}"));
                    }
                }
            }
        }
        "open" => {
            let c = mentioned_in_order(first, objects)
                .first()
                .map(|s| s.to_string())
                .or_else(|| noun_after_the(first))
                .unwrap_or_default();
            let hint = &goal[goal.find(first).map_or(0, |i| i + first.len())..];
            let w = ["putting the ", "placing the ", "put the ", "place the "]
                .iter()
                .find_map(|m| phrase_after(hint, m));
            let sensor = mentioned_in_order(hint, objects)
                .into_iter()
                .find(|n| Some(*n) != w.as_deref() && *n != c)
                .map(str::to_string);
            match (w, sensor) {
                (Some(w), Some(s)) => {
                    if !objects.contains(&w) {
                        let skip: Vec<String> = explored.iter().cloned().chain([c.clone()]).collect();
                        if let Some(d) = explore(objects, &skip).or_else(|| explore(objects, &[c.clone()])) {
                            steps.push(format!("Open the {d}"));
                            steps.push(format!("Look inside the {d}"));
                        }
                    }
                    thought = format!("The {c} unlocks once the {w} is on the {s}.");
                    steps.push(format!("Place the {w} on the {s}"));
                    carried = Some(w);
                }
                _ => thought = format!("I will open the {c}."),
            }
            steps.push(format!("Open the {c}"));
        }
        v if RELOCATION_VERBS.contains(&v) => match split_destination(first) {
            Some((xp, prep, yp)) => {
                let y = best_overlap(&yp, objects).unwrap_or_else(|| strip_the(&yp).to_string());
                let container = containers(objects).into_iter().find(|c| *c != y && (mentions(&yp, c) || y.contains(c.as_str())));
                if let Some(c) = &container {
                    steps.push(format!("Open the {c}"));
                }
                let x = if is_descriptive(&xp) {
                    let x = strip_the(&xp).to_string();
                    steps.push(format!("Identify the {x}"));
                    x
                } else {
                    mentioned_in_order(&xp, objects).first().map_or_else(|| strip_the(&xp).to_string(), |s| s.to_string())
                };
                thought = match &container {
                    Some(c) => format!("The {y} is inside the {c}, so I will open it before moving the {x}."),
                    None => format!("I will move the {x} {prep} the {y}."),
                };
                steps.push(format!("{} the {x} {prep} the {y}", capitalize(v)));
            }
            None => {
                thought = "I will do it directly.".into();
                steps.push(capitalize(first));
            }
        },
        _ => {
            thought = "I will do it directly.".into();
            steps.push(capitalize(first));
        }
    }
    BasePlan { thought, steps, carried }
}

/// Step to run before a failed one, read off the diagnosed reason.
fn prerequisite(objects: &[String], base: &BasePlan, action: &str, reason: &str) -> Option<String> {
    if reason.trim().is_empty() {
        return None;
    }
    let blamed = mentioned_in_order(reason, objects);
    if let Some(lever) = blamed.iter().find(|n| n.contains("lever")) {
        return Some(format!("Pull the {lever}"));
    }
    if let Some(sensor) = blamed.iter().find(|n| n.contains("sensor")) {
        return base.carried.as_ref().map(|w| format!("Place the {w} on the {sensor}"));
    }
    let in_action = mentioned_in_order(action, objects);
    let boxes = containers(objects);
    let blocker = blamed.iter().find(|n| {
        !in_action.contains(n) && !n.ends_with("_handle") && !boxes.iter().any(|c| c == *n)
    });
    if let Some(b) = blocker {
        let target = blamed
            .iter()
            .find(|n| in_action.contains(n))
            .or_else(|| in_action.last())?;
        return Some(format!("Move the {b} away from the {target}"));
    }
    if reason.to_ascii_lowercase().contains("closed") {
        if let Some(c) = blamed.iter().find(|n| boxes.iter().any(|c| c == *n) && !in_action.contains(n)) {
            return Some(format!("Open the {c}"));
        }
    }
    None
}

pub(super) fn plan(objects: &[String], goal: &str, history_block: &str) -> String {
    let history = parse_history(history_block);
    let explored: Vec<String> = history
        .iter()
        .filter_map(|e| match e {
            HistoryEntry::Plan { steps, reason, .. } if reason.contains("completed") => Some(steps),
            _ => None,
        })
        .flatten()
        .filter_map(|s| s.strip_prefix("Look inside the ").map(|c| c.trim().to_string()))
        .collect();
    let base = base_plan(objects, goal, &explored);
    let recent_from = history.iter().rposition(|e| matches!(e, HistoryEntry::Plan { .. })).map_or(0, |i| i + 1);
    let recent: Vec<(&str, &str, &str)> = history[recent_from..]
        .iter()
        .filter_map(|e| match e {
            HistoryEntry::Action { plan_step, action, reason } => Some((plan_step.as_str(), action.as_str(), reason.as_str())),
            HistoryEntry::Plan { .. } => None,
        })
        .collect();
    let mut steps = base.steps.clone();
    for (plan_step, action, reason) in &recent {
        let Some(p) = prerequisite(objects, &base, action, reason) else { continue };
        if steps.contains(&p) || recent.iter().any(|(s, _, _)| *s == p) {
            continue;
        }
        let at = steps.iter().position(|s| s == plan_step).unwrap_or(0);
        steps.insert(at, p);
    }
    format!("<thought>{}</thought>\n[start plan]\n{}\n[end plan]", base.thought, plan_block(&steps))
}

pub(super) fn classify(action: &str) -> String {
    if VISION_VERBS.contains(&lead_verb(action).as_str()) { "Yes." } else { "No." }.to_string()
}

pub(super) fn relocation(action: &str) -> String {
    if RELOCATION_VERBS.contains(&lead_verb(action).as_str()) { "Yes." } else { "No." }.to_string()
}

/// Resolves "the cube with the same color as the crate" from the answers so far.
fn resolve_by_color(phrase: &str, reference: &str, objects: &[String], observations: &str) -> String {
    let text = observations.to_ascii_lowercase();
    let color_of = |name: &str| {
        let marker = format!("the {} is ", name.to_ascii_lowercase());
        let at = text.find(&marker)? + marker.len();
        let word: String = text[at..].chars().take_while(char::is_ascii_alphabetic).collect();
        (!word.is_empty()).then_some(word)
    };
    let others = || objects.iter().filter(|o| o.as_str() != reference);
    if let Some(c) = color_of(reference) {
        if let Some(o) = others().find(|o| color_of(o).as_deref() == Some(c.as_str())) {
            return o.clone();
        }
    }
    let noun = noun_after_the(&format!("the {}", strip_the(phrase))).unwrap_or_default();
    others()
        .find(|o| o.contains(noun.as_str()) && mentions(observations, o))
        .or_else(|| others().find(|o| o.contains(noun.as_str())))
        .or_else(|| others().next())
        .cloned()
        .unwrap_or_default()
}

pub(super) fn motion_plan(objects: &[String], joints: &[String], observations: &str, action: &str) -> String {
    let verb = lead_verb(action);
    let approach = |x: &str| format!("The manipulator's palm should move close to {x}.");
    let joint = mentioned_in_order(action, joints).first().map(|s| s.to_string());
    let lower = action.to_ascii_lowercase();
    let mut lines = Vec::new();
    if let Some(at) = lower.find(" away from ") {
        let x = mentioned_in_order(&action[..at], objects).first().map(|s| s.to_string()).unwrap_or_default();
        let anchor = mentioned_in_order(&action[at..], objects).first().map(|s| s.to_string()).unwrap_or_default();
        lines.push(approach(&x));
        lines.push(format!("{x} should be far from {}.", handle_of(objects, &anchor)));
    } else if let (true, Some(j)) = (JOINT_VERBS.contains(&verb.as_str()), &joint) {
        lines.push(approach(&handle_of(objects, j)));
        let state = if verb == "close" { "closed" } else { "open" };
        lines.push(format!("The {j} needs to be {state}."));
    } else if let (true, Some((xp, _, yp))) = (RELOCATION_VERBS.contains(&verb.as_str()), split_destination(action)) {
        let y = best_overlap(&yp, objects).unwrap_or_else(|| strip_the(&yp).to_string());
        let x = if is_descriptive(&xp) {
            resolve_by_color(&xp, &y, objects, observations)
        } else {
            mentioned_in_order(&xp, objects).first().map_or_else(|| strip_the(&xp).to_string(), |s| s.to_string())
        };
        lines.push(approach(&x));
        lines.push(format!("{x} should be close to {y}."));
    } else if let Some(j) = joint {
        lines.push(approach(&handle_of(objects, &j)));
        lines.push(format!("The {j} needs to be open."));
    } else if let Some(x) = mentioned_in_order(action, objects).first() {
        lines.push(approach(x));
    }
    format!("[start of description]\n{}\n[end of description]", lines.join("\n"))
}

#[derive(Debug, Clone, PartialEq)]
enum Call {
    Min(String, String),
    Max(String, String),
    Joint(String, f64),
}

impl Call {
    fn render(&self) -> String {
        match self {
            Call::Min(a, b) => format!("minimize_l2_distance_reward(\"{a}\", \"{b}\")"),
            Call::Max(a, b) => format!("maximize_l2_distance_reward(\"{a}\", \"{b}\")"),
            Call::Joint(j, f) => format!("set_joint_fraction_reward(\"{j}\", {f:?})"),
        }
    }

    fn same_as(&self, other: &Call) -> bool {
        match (self, other) {
            (Call::Min(a, b), Call::Min(c, d)) => (a == c && b == d) || (a == d && b == c),
            _ => self == other,
        }
    }

    fn is_approach(&self) -> bool {
        matches!(self, Call::Min(a, _) if a == PALM)
    }

    /// Parses one rendered call back.
    fn parse(text: &str) -> Option<Call> {
        let t = text.trim();
        let (name, rest) = t.split_once('(')?;
        let args: Vec<&str> = rest.split('"').skip(1).step_by(2).collect();
        let number = rest.rsplit(',').next().and_then(|n| n.trim().trim_end_matches(')').parse::<f64>().ok());
        match (name.trim(), args.as_slice()) {
            ("minimize_l2_distance_reward", [a, b, ..]) => Some(Call::Min(a.to_string(), b.to_string())),
            ("maximize_l2_distance_reward", [a, b, ..]) => Some(Call::Max(a.to_string(), b.to_string())),
            ("set_joint_fraction_reward", [j, ..]) => Some(Call::Joint(j.to_string(), number.unwrap_or(1.0))),
            _ => None,
        }
    }
}

fn clean_name(s: &str) -> String {
    let s = s.trim().trim_end_matches('.');
    let s = ["object1=", "object2=", "joint="].iter().fold(s.to_string(), |acc, p| acc.replace(p, ""));
    strip_the(&s).to_string()
}

/// Motion-plan line to the call it describes.
fn line_to_call(line: &str) -> Option<Call> {
    let l = line.trim().trim_start_matches("[optional]").trim().trim_end_matches('.');
    if let Some((_, x)) = l.split_once("palm should move close to ") {
        return Some(Call::Min(PALM.into(), clean_name(x)));
    }
    if let Some((a, b)) = l.split_once(" should be close to ") {
        return Some(Call::Min(clean_name(a), clean_name(b)));
    }
    if let Some((a, b)) = l.split_once(" should be far from ") {
        return Some(Call::Max(clean_name(a), clean_name(b)));
    }
    if let Some((j, state)) = l.split_once(" needs to be ") {
        let f = if state.trim().starts_with("closed") { 0.0 } else { 1.0 };
        return Some(Call::Joint(clean_name(j), f));
    }
    None
}

fn plan_lines(numbered: &str) -> Vec<String> {
    numbered
        .lines()
        .map(|l| {
            let l = l.trim();
            let digits = l.chars().take_while(char::is_ascii_digit).count();
            l[digits..].trim_start_matches('.').trim().to_string()
        })
        .filter(|l| !l.is_empty())
        .collect()
}

pub(super) fn reward_code(_joints: &[String], motion_plan: &str) -> String {
    let calls: Vec<Call> = plan_lines(motion_plan).iter().filter_map(|l| line_to_call(l)).collect();
    let relocates = calls.iter().any(|c| matches!(c, Call::Min(a, _) | Call::Max(a, _) if a != PALM));
    let mut body: Vec<String> = calls.iter().map(Call::render).collect();
    if relocates {
        body.push(Call::Min(PALM.into(), REST_POSITION.into()).render());
    }
    format!("```python\nreset_reward()\n{}\nexecute_plan()\n```", body.join("\n"))
}

pub(super) fn verify_reward_step(motion_plan: &str, call: &str) -> String {
    let step = Call::parse(call).and_then(|c| {
        plan_lines(motion_plan).iter().position(|l| line_to_call(l).is_some_and(|lc| lc.same_as(&c)))
    });
    format!("<step>{}</step>", step.map_or(-1, |i| i as i64 + 1))
}

pub(super) fn verify_primary_step(motion_plan: &str) -> String {
    let lines = plan_lines(motion_plan);
    let n = lines
        .iter()
        .rposition(|l| line_to_call(l).is_some_and(|c| !c.is_approach()))
        .unwrap_or(lines.len().saturating_sub(1))
        + 1;
    format!("The action is done once step {n} holds. <step>{n}</step>")
}

const SYNONYMS: &[(&str, &str)] = &[
    ("teapot", "kettle"),
    ("pot", "kettle"),
    ("oven", "microwave"),
    ("cupboard", "cabinet"),
    ("closet", "cabinet"),
    ("box", "crate"),
    ("basket", "crate"),
    ("bar", "block"),
    ("stick", "block"),
    ("fruit", "apple"),
    ("door", "handle"),
    ("knob", "handle"),
    ("switch", "lever"),
    ("scale", "sensor"),
    ("block", "cube"),
];

fn name_pieces(objects: &[String]) -> Vec<String> {
    objects.iter().flat_map(|o| std::iter::once(o.clone()).chain(o.split('_').map(str::to_string))).collect()
}

pub(super) fn remap_detect(objects: &[String], sentence: &str) -> String {
    let known = name_pieces(objects);
    let off = tokens(sentence).into_iter().any(|t| SYNONYMS.iter().any(|(w, _)| *w == t) && !known.contains(&t));
    if off { "Yes, the sentence uses names that are not in the scene." } else { "No." }.to_string()
}

pub(super) fn remap_rewrite(objects: &[String], sentence: &str) -> String {
    let known = name_pieces(objects);
    let words: Vec<&str> = sentence.split(' ').collect();
    let mut out: Vec<String> = Vec::new();
    for w in words {
        let core: String = w.chars().filter(char::is_ascii_alphanumeric).collect::<String>().to_ascii_lowercase();
        let tail: String = w.chars().rev().take_while(|c| !c.is_ascii_alphanumeric() && *c != '_').collect::<Vec<_>>().into_iter().rev().collect();
        let target = (!known.contains(&core))
            .then(|| SYNONYMS.iter().find(|(s, _)| *s == core))
            .flatten()
            .and_then(|(_, canon)| {
                let prev = out.last().map(|p| p.to_ascii_lowercase());
                let cands: Vec<&String> = objects.iter().filter(|o| o.split('_').any(|p| p == *canon)).collect();
                cands
                    .iter()
                    .find(|o| prev.as_ref().is_some_and(|p| o.split('_').any(|piece| piece == p)))
                    .or_else(|| cands.first())
                    .map(|o| o.to_string())
            });
        match target {
            Some(name) => {
                if out.last().is_some_and(|p| name.split('_').any(|piece| piece.eq_ignore_ascii_case(p))) {
                    out.pop();
                }
                out.push(format!("{name}{tail}"));
            }
            None => out.push(w.to_string()),
        }
    }
    out.join(" ")
}

pub(super) fn summarize(explanations: &str) -> String {
    let mut counts: Vec<(String, &str, usize)> = Vec::new();
    for e in explanations.lines().map(str::trim).filter(|e| !e.is_empty()) {
        let key = e.to_ascii_lowercase().trim_end_matches('.').to_string();
        match counts.iter_mut().find(|(k, _, _)| *k == key) {
            Some(entry) => entry.2 += 1,
            None => counts.push((key, e, 1)),
        }
    }
    let best = counts.iter().fold(None::<&(String, &str, usize)>, |acc, c| match acc {
        Some(a) if a.2 >= c.2 => Some(a),
        _ => Some(c),
    });
    match best {
        Some((key, text, _)) if !key.contains("do not see anything") => format!("<reason>{text}</reason>"),
        _ => "None of the explanations point at an object in the scene.".to_string(),
    }
}

pub(super) fn questions(goal: &str, action: &str, observed: &[String]) -> String {
    let lower = action.to_ascii_lowercase();
    let named = mentioned_in_order(action, observed);
    let container = named.iter().find(|n| containers(observed).iter().any(|c| c == *n));
    let sought = tokens(goal).into_iter().find(|t| t.contains('_') && !observed.contains(t));
    let mut qs = Vec::new();
    if lower.contains("color") || lower.contains("colour") {
        if let Some(o) = named.first() {
            qs.push(format!("What is the color of the {o}?"));
        }
        if let Some(noun) = noun_after_the(action).filter(|n| !observed.contains(n)) {
            qs.push(format!("What are the colors of the {noun}s?"));
        }
    } else if let (Some(c), true) = (container, lower.contains("inside") || lower.contains(" in ")) {
        qs.push(match &sought {
            Some(x) => format!("Is there a {x} inside the {c}?"),
            None => format!("What is inside the {c}?"),
        });
    } else if let Some(x) = named.first().map(|s| s.to_string()).or(sought) {
        qs.push(format!("Do you see the {x}?"));
    } else {
        qs.push("What do you see?".into());
    }
    qs.iter().map(|q| format!("<question>{q}</question>")).collect::<Vec<_>>().join("\n")
}

pub(super) fn question_type(question: &str) -> String {
    let q = question.trim().to_ascii_lowercase();
    let kind = if ["is there", "are there", "do you see", "can you see"].iter().any(|p| q.starts_with(p)) {
        "OBJECT_PRESENCE"
    } else if q.contains("color") || q.contains("colour") || q.starts_with("what is") || q.starts_with("what are") {
        "OBJECT_ATTRIBUTE"
    } else {
        "NEITHER"
    };
    kind.to_string()
}

pub(super) fn completion(action: &str, observations: &str) -> String {
    if !["find", "locate", "search", "retrieve"].contains(&lead_verb(action).as_str()) {
        return "Yes, the action is complete.".to_string();
    }
    let Some(x) = noun_after_the(action) else { return "Yes.".to_string() };
    let found = observations.lines().any(|l| {
        let (q, a) = l.rsplit_once(", A: ").unwrap_or((l, ""));
        mentions(q, &x) && yes_no_lead(a) == Some(true)
    });
    if found {
        format!("Yes, the {x} has been found.")
    } else {
        format!("No, the {x} has not been seen yet. <Action>{}</Action>", action.trim())
    }
}
