//! Reward programs: the call-statement language the low-level planner emits.
//!
//! A program is a flat list of calls with literal arguments. Anything else
//! (assignments, loops, arithmetic, unknown functions) is rejected with the
//! line it appeared on.

mod compile;

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

pub use compile::{compile, CostSpec, CostTerm, ResolvedSpec, Residual, DEFAULT_DURATION, DEFAULT_MAX_DISTANCE};

use crate::world::{PALM, REST_POSITION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardFunction {
    ResetReward,
    MinimizeL2DistanceReward,
    MaximizeL2DistanceReward,
    SetJointFractionReward,
    SetObjZPositionReward,
    SetObjOrientationReward,
    ExecutePlan,
}

/// Argument shapes accepted by a function.
struct Signature {
    /// Leading string arguments (object or joint names).
    names: usize,
    /// Numeric parameter: keyword name and whether it may be omitted.
    number: Option<(&'static str, bool)>,
    primary_allowed: bool,
}

impl RewardFunction {
    pub const ALL: [RewardFunction; 7] = [
        RewardFunction::ResetReward,
        RewardFunction::MinimizeL2DistanceReward,
        RewardFunction::MaximizeL2DistanceReward,
        RewardFunction::SetJointFractionReward,
        RewardFunction::SetObjZPositionReward,
        RewardFunction::SetObjOrientationReward,
        RewardFunction::ExecutePlan,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::ResetReward => "reset_reward",
            Self::MinimizeL2DistanceReward => "minimize_l2_distance_reward",
            Self::MaximizeL2DistanceReward => "maximize_l2_distance_reward",
            Self::SetJointFractionReward => "set_joint_fraction_reward",
            Self::SetObjZPositionReward => "set_obj_z_position_reward",
            Self::SetObjOrientationReward => "set_obj_orientation_reward",
            Self::ExecutePlan => "execute_plan",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.name() == name)
    }

    /// True for calls that contribute a cost term.
    pub fn is_term(self) -> bool {
        !matches!(self, Self::ResetReward | Self::ExecutePlan)
    }

    fn signature(self) -> Signature {
        let term = |names, number| Signature { names, number, primary_allowed: true };
        match self {
            Self::ResetReward => Signature { names: 0, number: None, primary_allowed: false },
            Self::ExecutePlan => {
                Signature { names: 0, number: Some(("duration", true)), primary_allowed: false }
            }
            Self::MinimizeL2DistanceReward => term(2, None),
            Self::MaximizeL2DistanceReward => term(2, Some(("distance", true))),
            Self::SetJointFractionReward => term(1, Some(("fraction", false))),
            Self::SetObjZPositionReward => term(1, Some(("z", false))),
            Self::SetObjOrientationReward => term(1, Some(("radians", false))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Literal {
    Bool(bool),
    Num(f64),
    Str(String),
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Str(s) => write!(f, "\"{s}\""),
            Literal::Num(n) => write!(f, "{n:?}"),
            Literal::Bool(true) => f.write_str("True"),
            Literal::Bool(false) => f.write_str("False"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardCall {
    pub function: RewardFunction,
    pub args: Vec<Literal>,
    pub kwargs: Vec<(String, Literal)>,
    /// 1-based line in the parsed source.
    pub line: usize,
}

impl RewardCall {
    pub fn kwarg(&self, key: &str) -> Option<&Literal> {
        self.kwargs.iter().find(|(k, _)| k == key).map(|(_, v)| v)
    }

    /// The string arguments, in order.
    pub fn names(&self) -> Vec<&str> {
        self.args
            .iter()
            .filter_map(|a| match a {
                Literal::Str(s) => Some(s.as_str()),
                _ => None,
            })
            .collect()
    }

    /// The numeric parameter, positional or keyword.
    pub fn number(&self) -> Option<f64> {
        let sig = self.function.signature();
        let (key, _) = sig.number?;
        let lit = self.args.get(sig.names).or_else(|| self.kwarg(key))?;
        match lit {
            Literal::Num(n) => Some(*n),
            _ => None,
        }
    }

    pub fn is_inline_primary(&self) -> bool {
        matches!(self.kwarg("primary_reward"), Some(Literal::Bool(true)))
    }
}

impl fmt::Display for RewardCall {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.function.name())?;
        let mut first = true;
        for a in &self.args {
            if !first {
                f.write_str(", ")?;
            }
            first = false;
            write!(f, "{a}")?;
        }
        for (k, v) in &self.kwargs {
            if !first {
                f.write_str(", ")?;
            }
            first = false;
            write!(f, "{k}={v}")?;
        }
        f.write_str(")")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardProgram {
    pub calls: Vec<RewardCall>,
    /// Index into `calls` of the primary term, if chosen.
    pub primary: Option<usize>,
}

impl RewardProgram {
    /// Indices of calls that contribute cost terms.
    pub fn term_indices(&self) -> Vec<usize> {
        (0..self.calls.len()).filter(|&i| self.calls[i].function.is_term()).collect()
    }

    pub fn duration(&self) -> f64 {
        self.calls
            .iter()
            .find(|c| c.function == RewardFunction::ExecutePlan)
            .and_then(RewardCall::number)
            .unwrap_or(DEFAULT_DURATION)
    }

    /// Keeps only the listed term calls, preserving order; reset and execute stay.
    pub fn retain_terms(&self, keep: &[usize]) -> RewardProgram {
        let mut calls = Vec::new();
        let mut primary = None;
        for (i, c) in self.calls.iter().enumerate() {
            if !c.function.is_term() || keep.contains(&i) {
                if self.primary == Some(i) {
                    primary = Some(calls.len());
                }
                calls.push(c.clone());
            }
        }
        RewardProgram { calls, primary }
    }

    pub fn with_primary(mut self, primary: Option<usize>) -> RewardProgram {
        self.primary = primary;
        self
    }
}

impl fmt::Display for RewardProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.calls {
            writeln!(f, "{c}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
pub enum ParseErrorKind {
    #[error("unknown function '{0}'")]
    UnknownFunction(String),
    #[error("{function} takes {expected} argument(s), got {got}")]
    BadArity { function: String, expected: String, got: usize },
    #[error("argument '{0}' is not a literal of the expected type")]
    BadArgument(String),
    #[error("unknown keyword argument '{0}'")]
    UnknownKeyword(String),
    #[error("duplicate keyword argument '{0}'")]
    DuplicateKeyword(String),
    #[error("unsupported statement '{0}'")]
    Syntax(String),
    #[error("only numpy may be imported")]
    ForbiddenImport,
    #[error("missing reset_reward()")]
    MissingReset,
    #[error("reset_reward() must be the first call")]
    ResetNotFirst,
    #[error("missing execute_plan()")]
    MissingExecute,
    #[error("execute_plan() called more than once")]
    DuplicateExecute,
    #[error("execute_plan() must be the last call")]
    ExecuteNotLast,
    #[error("more than one call is marked primary_reward=True")]
    MultiplePrimary,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[error("line {line}: {kind}")]
pub struct ParseError {
    pub line: usize,
    pub kind: ParseErrorKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
pub enum ValidationError {
    #[error("line {line}: unknown object '{name}'")]
    UnknownObject { name: String, line: usize },
    #[error("line {line}: unknown joint '{name}'")]
    UnknownJoint { name: String, line: usize },
}

/// Lines of the program body: the first fenced block if there is one.
fn body_lines(source: &str) -> Vec<(usize, &str)> {
    let lines: Vec<(usize, &str)> = source.lines().enumerate().map(|(i, l)| (i + 1, l)).collect();
    let is_fence = |l: &str| l.trim_start().starts_with("```");
    let Some(open) = lines.iter().position(|(_, l)| is_fence(l)) else { return lines };
    let rest = &lines[open + 1..];
    let close = rest.iter().position(|(_, l)| is_fence(l)).unwrap_or(rest.len());
    rest[..close].to_vec()
}

pub fn parse_reward_program(source: &str) -> Result<RewardProgram, ParseError> {
    let mut calls = Vec::new();
    let mut last_line = 0;
    for (line, raw) in body_lines(source) {
        last_line = line;
        let text = strip_comment(raw).trim();
        if text.is_empty() {
            continue;
        }
        if let Some(rest) = text.strip_prefix("import ").or_else(|| text.strip_prefix("from ")) {
            let module = rest.split(|c: char| c.is_whitespace() || c == '.' || c == ',').next();
            if module != Some("numpy") {
                return Err(ParseError { line, kind: ParseErrorKind::ForbiddenImport });
            }
            continue;
        }
        let call = parse_call(text, line).map_err(|kind| ParseError { line, kind })?;
        calls.push(call);
    }
    check_structure(calls, last_line)
}

fn check_structure(calls: Vec<RewardCall>, last_line: usize) -> Result<RewardProgram, ParseError> {
    let err = |line, kind| Err(ParseError { line, kind });
    let Some(first) = calls.first() else { return err(last_line.max(1), ParseErrorKind::MissingExecute) };
    if first.function != RewardFunction::ResetReward {
        return match calls.iter().find(|c| c.function == RewardFunction::ResetReward) {
            Some(reset) => err(reset.line, ParseErrorKind::ResetNotFirst),
            None => err(first.line, ParseErrorKind::MissingReset),
        };
    }
    let mut primary = None;
    let mut execute_seen: Option<usize> = None;
    for (i, c) in calls.iter().enumerate() {
        if let Some(exec_line) = execute_seen {
            return if c.function == RewardFunction::ExecutePlan {
                err(c.line, ParseErrorKind::DuplicateExecute)
            } else {
                err(exec_line, ParseErrorKind::ExecuteNotLast)
            };
        }
        match c.function {
            RewardFunction::ResetReward if i > 0 => return err(c.line, ParseErrorKind::ResetNotFirst),
            RewardFunction::ExecutePlan => execute_seen = Some(c.line),
            _ => {}
        }
        if c.is_inline_primary() {
            if primary.is_some() {
                return err(c.line, ParseErrorKind::MultiplePrimary);
            }
            primary = Some(i);
        }
    }
    if execute_seen.is_none() {
        return err(calls.last().map_or(last_line, |c| c.line), ParseErrorKind::MissingExecute);
    }
    Ok(RewardProgram { calls, primary })
}

fn strip_comment(line: &str) -> &str {
    let mut quote: Option<char> = None;
    for (i, c) in line.char_indices() {
        match (quote, c) {
            (Some(q), c) if c == q => quote = None,
            (None, '"' | '\'') => quote = Some(c),
            (None, '#') => return &line[..i],
            _ => {}
        }
    }
    line
}

fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    chars.next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn parse_call(text: &str, line: usize) -> Result<RewardCall, ParseErrorKind> {
    let text = text.strip_suffix(';').unwrap_or(text).trim_end();
    let syntax = || ParseErrorKind::Syntax(text.to_string());
    let open = text.find('(').ok_or_else(syntax)?;
    let name = text[..open].trim();
    if !is_ident(name) || !text.ends_with(')') {
        return Err(syntax());
    }
    let function = RewardFunction::from_name(name).ok_or_else(|| ParseErrorKind::UnknownFunction(name.into()))?;
    let inner = &text[open + 1..text.len() - 1];

    let mut args = Vec::new();
    let mut kwargs: Vec<(String, Literal)> = Vec::new();
    for piece in split_args(inner).map_err(|_| syntax())? {
        let piece = piece.trim();
        if piece.is_empty() {
            return Err(syntax());
        }
        match split_keyword(piece) {
            Some((key, value)) => {
                if kwargs.iter().any(|(k, _)| k == key) {
                    return Err(ParseErrorKind::DuplicateKeyword(key.into()));
                }
                let lit = parse_literal(value).ok_or_else(|| ParseErrorKind::BadArgument(value.into()))?;
                kwargs.push((key.to_string(), lit));
            }
            None => {
                if !kwargs.is_empty() {
                    return Err(syntax());
                }
                args.push(parse_literal(piece).ok_or_else(|| ParseErrorKind::BadArgument(piece.into()))?);
            }
        }
    }
    let call = RewardCall { function, args, kwargs, line };
    check_signature(&call)?;
    Ok(call)
}

/// Splits on top-level commas. Allows one trailing comma.
fn split_args(inner: &str) -> Result<Vec<&str>, ()> {
    if inner.trim().is_empty() {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    let mut quote: Option<char> = None;
    let mut depth = 0i32;
    let mut start = 0;
    for (i, c) in inner.char_indices() {
        match (quote, c) {
            (Some(q), c) if c == q => quote = None,
            (Some(_), _) => {}
            (None, '"' | '\'') => quote = Some(c),
            (None, '(' | '[' | '{') => depth += 1,
            (None, ')' | ']' | '}') => depth -= 1,
            (None, ',') if depth == 0 => {
                out.push(&inner[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    if quote.is_some() || depth != 0 {
        return Err(());
    }
    let tail = &inner[start..];
    if !tail.trim().is_empty() || out.is_empty() {
        out.push(tail);
    }
    Ok(out)
}

fn split_keyword(piece: &str) -> Option<(&str, &str)> {
    let eq = piece.find('=')?;
    let key = piece[..eq].trim();
    let value = piece[eq + 1..].trim();
    (is_ident(key) && !value.starts_with('=')).then_some((key, value))
}

fn parse_literal(s: &str) -> Option<Literal> {
    let s = s.trim();
    match s {
        "True" => return Some(Literal::Bool(true)),
        "False" => return Some(Literal::Bool(false)),
        _ => {}
    }
    for q in ['"', '\''] {
        if s.len() >= 2 && s.starts_with(q) && s.ends_with(q) {
            let body = &s[1..s.len() - 1];
            return (!body.contains(['"', '\'', '\\'])).then(|| Literal::Str(body.to_string()));
        }
    }
    let numeric = s.chars().next().is_some_and(|c| c.is_ascii_digit() || matches!(c, '-' | '+' | '.'))
        && s.chars().all(|c| c.is_ascii_digit() || matches!(c, '-' | '+' | '.' | 'e' | 'E'));
    if numeric {
        return s.parse::<f64>().ok().filter(|n| n.is_finite()).map(Literal::Num);
    }
    None
}

fn check_signature(call: &RewardCall) -> Result<(), ParseErrorKind> {
    let sig = call.function.signature();
    let name = call.function.name();
    let (num_key, num_optional) = match sig.number {
        Some((k, opt)) => (Some(k), opt),
        None => (None, true),
    };
    let max_pos = sig.names + usize::from(num_key.is_some());
    if call.args.len() > max_pos || call.args.len() < sig.names {
        let expected = if max_pos == sig.names { sig.names.to_string() } else { format!("{}-{}", sig.names, max_pos) };
        return Err(ParseErrorKind::BadArity { function: name.into(), expected, got: call.args.len() });
    }
    for a in &call.args[..sig.names] {
        if !matches!(a, Literal::Str(_)) {
            return Err(ParseErrorKind::BadArgument(a.to_string()));
        }
    }
    let positional_number = call.args.get(sig.names);
    if let Some(a) = positional_number {
        if !matches!(a, Literal::Num(_)) {
            return Err(ParseErrorKind::BadArgument(a.to_string()));
        }
    }
    for (k, v) in &call.kwargs {
        let ok = match k.as_str() {
            "primary_reward" if sig.primary_allowed => matches!(v, Literal::Bool(_)),
            key if Some(key) == num_key => {
                if positional_number.is_some() {
                    return Err(ParseErrorKind::DuplicateKeyword(key.into()));
                }
                matches!(v, Literal::Num(_))
            }
            _ => return Err(ParseErrorKind::UnknownKeyword(k.clone())),
        };
        if !ok {
            return Err(ParseErrorKind::BadArgument(v.to_string()));
        }
    }
    if !num_optional && call.number().is_none() {
        return Err(ParseErrorKind::BadArity {
            function: name.into(),
            expected: (sig.names + 1).to_string(),
            got: call.args.len(),
        });
    }
    if call.function == RewardFunction::ExecutePlan && call.number().is_some_and(|d| d <= 0.0) {
        return Err(ParseErrorKind::BadArgument(call.number().unwrap_or_default().to_string()));
    }
    Ok(())
}

/// Checks every object and joint argument against the scene vocabulary.
pub fn validate_names(
    program: RewardProgram,
    vocabulary: &[String],
    joints: &[String],
) -> Result<RewardProgram, ValidationError> {
    let objects: BTreeSet<&str> =
        vocabulary.iter().map(String::as_str).chain([PALM, REST_POSITION]).collect();
    for c in &program.calls {
        for name in c.names() {
            if c.function == RewardFunction::SetJointFractionReward {
                if !joints.iter().any(|j| j == name) {
                    return Err(ValidationError::UnknownJoint { name: name.into(), line: c.line });
                }
            } else if !objects.contains(name) {
                return Err(ValidationError::UnknownObject { name: name.into(), line: c.line });
            }
        }
    }
    Ok(program)
}
