//! Lenient extraction helpers for model responses.

/// Contents of every `<tag>...</tag>` pair, trimmed. Tag names match
/// case-insensitively.
pub fn extract_tags(text: &str, tag: &str) -> Vec<String> {
    let lower = text.to_ascii_lowercase();
    let open = format!("<{}>", tag.to_ascii_lowercase());
    let close = format!("</{}>", tag.to_ascii_lowercase());
    let mut out = Vec::new();
    let mut from = 0;
    while let Some(start) = lower[from..].find(&open) {
        let body = from + start + open.len();
        let Some(end) = lower[body..].find(&close) else { break };
        out.push(text[body..body + end].trim().to_string());
        from = body + end + close.len();
    }
    out
}

/// `Some(true)` for a response starting with "yes", `Some(false)` for "no".
/// Leading punctuation, quotes and markdown emphasis are skipped.
pub fn yes_no_lead(text: &str) -> Option<bool> {
    let t = text.trim_start_matches(|c: char| !c.is_alphanumeric());
    let word: String = t.chars().take_while(|c| c.is_ascii_alphabetic()).collect();
    match word.to_ascii_lowercase().as_str() {
        "yes" => Some(true),
        "no" => Some(false),
        _ => None,
    }
}

/// First `<step>N</step>` value.
pub fn step_tag(text: &str) -> Option<i64> {
    let tags = extract_tags(text, "step");
    if tags.len() != 1 {
        return None;
    }
    tags[0].trim().trim_end_matches('.').parse().ok()
}

/// Thought and steps between the plan markers. Steps are the `>` lines.
pub fn parse_plan(text: &str) -> Option<(String, Vec<String>)> {
    let lower = text.to_ascii_lowercase();
    let start = lower.find("[start plan]")? + "[start plan]".len();
    let end = start + lower[start..].find("[end plan]")?;
    let steps: Vec<String> = text[start..end]
        .lines()
        .filter_map(|l| l.trim().strip_prefix('>'))
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect();
    if steps.is_empty() {
        return None;
    }
    let thought = extract_tags(text, "thought").into_iter().next().unwrap_or_default();
    Some((thought, steps))
}

/// Non-empty lines between the description markers, list numbering removed.
pub fn parse_motion_plan(text: &str) -> Option<Vec<String>> {
    let lower = text.to_ascii_lowercase();
    let start = lower.find("[start of description]")? + "[start of description]".len();
    let end = start + lower[start..].find("[end of description]")?;
    let lines: Vec<String> = text[start..end]
        .lines()
        .map(|l| strip_numbering(l.trim()).to_string())
        .filter(|l| !l.is_empty())
        .collect();
    (!lines.is_empty()).then_some(lines)
}

fn strip_numbering(line: &str) -> &str {
    let digits = line.chars().take_while(char::is_ascii_digit).count();
    if digits > 0 {
        if let Some(rest) = line[digits..].strip_prefix('.') {
            return rest.trim_start();
        }
    }
    line.strip_prefix("- ").unwrap_or(line)
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

/// True when `name` occurs in `text` as a whole identifier, either verbatim
/// or with underscores read as spaces. Case-insensitive.
pub fn mentions(text: &str, name: &str) -> bool {
    let hay = text.to_ascii_lowercase();
    let name = name.to_ascii_lowercase();
    let spaced = name.replace('_', " ");
    [name.as_str(), spaced.as_str()].iter().any(|needle| find_word(&hay, needle))
}

fn find_word(hay: &str, needle: &str) -> bool {
    if needle.is_empty() {
        return false;
    }
    let mut from = 0;
    while let Some(pos) = hay[from..].find(needle) {
        let start = from + pos;
        let end = start + needle.len();
        let before = hay[..start].chars().next_back();
        let after = hay[end..].chars().next();
        if !before.is_some_and(is_ident_char) && !after.is_some_and(is_ident_char) {
            return true;
        }
        from = start + 1;
        while !hay.is_char_boundary(from) {
            from += 1;
        }
    }
    false
}

/// Names from `vocabulary` mentioned in `text`, longest first so that
/// `wooden_cabinet_handle` wins over `wooden_cabinet`.
pub fn mentioned_names<'a>(text: &str, vocabulary: &'a [String]) -> Vec<&'a str> {
    let mut names: Vec<&str> = vocabulary.iter().map(String::as_str).filter(|n| mentions(text, n)).collect();
    names.sort_by_key(|n| std::cmp::Reverse(n.len()));
    let mut kept: Vec<&str> = Vec::new();
    for n in names {
        // Drop a name mentioned only as part of a longer mentioned name.
        let covered = kept.iter().any(|k| k.contains(n)) && !mentions(&strip_names(text, &kept), n);
        if !covered {
            kept.push(n);
        }
    }
    kept
}

fn strip_names(text: &str, names: &[&str]) -> String {
    let mut out = text.to_ascii_lowercase();
    for n in names {
        out = out.replace(&n.to_ascii_lowercase(), " ").replace(&n.replace('_', " ").to_ascii_lowercase(), " ");
    }
    out
}

/// Lowercased identifier tokens.
pub fn tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !is_ident_char(c))
        .filter(|t| !t.is_empty())
        .map(str::to_ascii_lowercase)
        .collect()
}
