//! Text-level repair passes for malformed action strings.
//!
//! Each pass is a pure `&str -> String` rewrite that leaves already-valid
//! input untouched. Passes run in the order of [`RepairPass::ORDER`].

use serde::{Deserialize, Serialize};

use super::grammar::{ANSWER_CLOSE, ANSWER_OPEN, TOOL_CLOSE, TOOL_OPEN};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RepairPass {
    StripFence,
    QuoteNormalize,
    QuoteBareKeys,
    RemoveTrailingCommas,
    BalanceClosers,
}

impl RepairPass {
    pub const ORDER: [RepairPass; 5] = [
        RepairPass::StripFence,
        RepairPass::QuoteNormalize,
        RepairPass::QuoteBareKeys,
        RepairPass::RemoveTrailingCommas,
        RepairPass::BalanceClosers,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RepairPass::StripFence => "strip-fence",
            RepairPass::QuoteNormalize => "quote-normalize",
            RepairPass::QuoteBareKeys => "quote-bare-keys",
            RepairPass::RemoveTrailingCommas => "remove-trailing-commas",
            RepairPass::BalanceClosers => "balance-closers",
        }
    }

    pub fn apply(self, s: &str) -> String {
        match self {
            RepairPass::StripFence => strip_fences(s),
            RepairPass::QuoteNormalize => normalize_quotes(s),
            RepairPass::QuoteBareKeys => quote_bare_keys(s),
            RepairPass::RemoveTrailingCommas => remove_trailing_commas(s),
            RepairPass::BalanceClosers => balance_closers(s),
        }
    }
}

impl std::fmt::Display for RepairPass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Drop markdown code fences, including the language tag after an opening fence.
fn strip_fences(s: &str) -> String {
    if !s.contains("```") {
        return s.to_string();
    }
    let mut out = String::with_capacity(s.len());
    let mut rest = s;
    let mut opening = true;
    while let Some(i) = rest.find("```") {
        out.push_str(&rest[..i]);
        rest = &rest[i + 3..];
        if opening {
            let tag_len = rest
                .find(|c: char| !(c.is_ascii_alphanumeric() || c == '_' || c == '-'))
                .unwrap_or(rest.len());
            rest = &rest[tag_len..];
        }
        opening = !opening;
    }
    out.push_str(rest);
    out.trim().to_string()
}

/// Rewrite single-quoted strings as double-quoted ones. Text already inside
/// double quotes is copied verbatim.
fn normalize_quotes(s: &str) -> String {
    if !s.contains('\'') {
        return s.to_string();
    }
    let mut out = String::with_capacity(s.len());
    let (mut in_double, mut in_single, mut escape) = (false, false, false);
    for c in s.chars() {
        if in_double {
            out.push(c);
            if escape {
                escape = false;
            } else if c == '\\' {
                escape = true;
            } else if c == '"' {
                in_double = false;
            }
        } else if in_single {
            if escape {
                if c != '\'' {
                    out.push('\\');
                }
                out.push(c);
                escape = false;
            } else if c == '\\' {
                escape = true;
            } else if c == '\'' {
                out.push('"');
                in_single = false;
            } else if c == '"' {
                out.push_str("\\\"");
            } else {
                out.push(c);
            }
        } else if c == '"' {
            in_double = true;
            out.push(c);
        } else if c == '\'' {
            in_single = true;
            out.push('"');
        } else {
            out.push(c);
        }
    }
    out
}

/// Iterate over `s`, calling `f` with characters outside string literals and
/// copying string literals through unchanged.
fn outside_strings(s: &str, mut f: impl FnMut(&mut String, &[char], usize) -> usize) -> String {
    let chars: Vec<char> = s.chars().collect();
    let mut out = String::with_capacity(s.len());
    let mut i = 0;
    let mut in_str = false;
    let mut escape = false;
    while i < chars.len() {
        let c = chars[i];
        if in_str {
            out.push(c);
            if escape {
                escape = false;
            } else if c == '\\' {
                escape = true;
            } else if c == '"' {
                in_str = false;
            }
            i += 1;
        } else if c == '"' {
            in_str = true;
            out.push(c);
            i += 1;
        } else {
            i = f(&mut out, &chars, i);
        }
    }
    out
}

fn next_non_ws(chars: &[char], mut i: usize) -> Option<char> {
    while i < chars.len() && chars[i].is_whitespace() {
        i += 1;
    }
    chars.get(i).copied()
}

fn quote_bare_keys(s: &str) -> String {
    outside_strings(s, |out, chars, i| {
        let c = chars[i];
        let prev = out.trim_end().chars().last();
        if (c.is_ascii_alphabetic() || c == '_') && matches!(prev, Some('{' | ',')) {
            let mut j = i;
            while j < chars.len() && (chars[j].is_ascii_alphanumeric() || chars[j] == '_') {
                j += 1;
            }
            let ident: String = chars[i..j].iter().collect();
            if next_non_ws(chars, j) == Some(':') {
                out.push('"');
                out.push_str(&ident);
                out.push('"');
            } else {
                out.push_str(&ident);
            }
            j
        } else {
            out.push(c);
            i + 1
        }
    })
}

fn remove_trailing_commas(s: &str) -> String {
    outside_strings(s, |out, chars, i| {
        let c = chars[i];
        if c == ',' && matches!(next_non_ws(chars, i + 1), Some('}' | ']')) {
            return i + 1;
        }
        out.push(c);
        i + 1
    })
}

/// Close a truncated JSON body and complete a missing or partial close tag.
fn balance_closers(s: &str) -> String {
    let t = s.trim();
    if let Some(rest) = t.strip_prefix(TOOL_OPEN) {
        balance_tool_call(s, rest)
    } else if let Some(rest) = t.strip_prefix(ANSWER_OPEN) {
        if rest.contains(ANSWER_CLOSE) {
            return s.to_string();
        }
        let (inner, tail) = rest.split_at(rest.find('<').unwrap_or(rest.len()));
        if tail.is_empty() || ANSWER_CLOSE.starts_with(tail) {
            format!("{ANSWER_OPEN}{inner}{ANSWER_CLOSE}")
        } else {
            s.to_string()
        }
    } else {
        s.to_string()
    }
}

fn balance_tool_call(original: &str, rest: &str) -> String {
    let mut stack = Vec::new();
    let (mut in_str, mut escape, mut started) = (false, false, false);
    let mut body_end = None;
    let mut cut = None;
    for (i, c) in rest.char_indices() {
        if in_str {
            if escape {
                escape = false;
            } else if c == '\\' {
                escape = true;
            } else if c == '"' {
                in_str = false;
            }
            continue;
        }
        match c {
            '"' => in_str = true,
            '{' | '[' => {
                stack.push(c);
                started = true;
            }
            '}' | ']' => {
                stack.pop();
                if started && stack.is_empty() {
                    body_end = Some(i + 1);
                    break;
                }
            }
            '<' if started => {
                cut = Some(i);
                break;
            }
            _ => {}
        }
    }
    if let Some(end) = body_end {
        let tail = rest[end..].trim();
        if tail == TOOL_CLOSE || !TOOL_CLOSE.starts_with(tail) {
            return original.to_string();
        }
        return format!("{TOOL_OPEN}{}{TOOL_CLOSE}", &rest[..end]);
    }
    if !started {
        return original.to_string();
    }
    let (body, tail) = rest.split_at(cut.unwrap_or(rest.len()));
    let mut fixed = body.trim_end().to_string();
    if in_str {
        fixed.push('"');
    }
    if fixed.ends_with(',') {
        fixed.pop();
    }
    for open in stack.iter().rev() {
        fixed.push(if *open == '{' { '}' } else { ']' });
    }
    let tail = tail.trim();
    let tail = if TOOL_CLOSE.starts_with(tail) { TOOL_CLOSE } else { tail };
    format!("{TOOL_OPEN}{fixed}{tail}")
}
