//! Strict recursive-descent parser for the action-string grammar.
//!
//! ```text
//! action    := ws (tool_call | answer) ws
//! tool_call := "<tool_call>" ws object ws "</tool_call>"
//! answer    := "<answer>" ws digits ws "</answer>"
//! object    := {"name": <tool>, "arguments": {...}}   (standard JSON)
//! ```
//!
//! Failures report the first violation found.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::trajectory::{AgentAction, ToolArgs, ToolKind};

pub const TOOL_OPEN: &str = "<tool_call>";
pub const TOOL_CLOSE: &str = "</tool_call>";
pub const ANSWER_OPEN: &str = "<answer>";
pub const ANSWER_CLOSE: &str = "</answer>";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ParseFailure {
    NoTag,
    MissingCloseTag,
    TrailingText,
    EmptyBody,
    TrailingComma,
    SingleQuote,
    UnquotedKey,
    UnterminatedString,
    UnexpectedEnd,
    UnexpectedChar(char),
    InvalidNumber,
    InvalidEscape,
    DuplicateKey(String),
    MissingField(String),
    UnknownField(String),
    UnknownTool(String),
    BadArguments(String),
    BadAnswer,
}

impl fmt::Display for ParseFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParseFailure::NoTag => f.write_str("no-tag"),
            ParseFailure::MissingCloseTag => f.write_str("missing-close-tag"),
            ParseFailure::TrailingText => f.write_str("trailing-text"),
            ParseFailure::EmptyBody => f.write_str("empty-body"),
            ParseFailure::TrailingComma => f.write_str("trailing-comma"),
            ParseFailure::SingleQuote => f.write_str("single-quote"),
            ParseFailure::UnquotedKey => f.write_str("unquoted-key"),
            ParseFailure::UnterminatedString => f.write_str("unterminated-string"),
            ParseFailure::UnexpectedEnd => f.write_str("unexpected-end"),
            ParseFailure::UnexpectedChar(c) => write!(f, "unexpected-char({c:?})"),
            ParseFailure::InvalidNumber => f.write_str("invalid-number"),
            ParseFailure::InvalidEscape => f.write_str("invalid-escape"),
            ParseFailure::DuplicateKey(k) => write!(f, "duplicate-key({k})"),
            ParseFailure::MissingField(k) => write!(f, "missing-field({k})"),
            ParseFailure::UnknownField(k) => write!(f, "unknown-field({k})"),
            ParseFailure::UnknownTool(k) => write!(f, "unknown-tool({k})"),
            ParseFailure::BadArguments(m) => write!(f, "bad-arguments({m})"),
            ParseFailure::BadAnswer => f.write_str("bad-answer"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Value {
    Null,
    Bool(bool),
    Number(f64),
    String(String),
    Array(Vec<Value>),
    Object(Vec<(String, Value)>),
}

fn is_ws(b: u8) -> bool {
    matches!(b, b' ' | b'\t' | b'\n' | b'\r')
}

struct Cursor<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn peek(&self) -> Option<u8> {
        self.src.as_bytes().get(self.pos).copied()
    }

    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(is_ws) {
            self.pos += 1;
        }
    }

    fn expect_some(&self) -> Result<u8, ParseFailure> {
        self.peek().ok_or(ParseFailure::UnexpectedEnd)
    }

    fn unexpected(&self) -> ParseFailure {
        match self.rest().chars().next() {
            Some(c) => ParseFailure::UnexpectedChar(c),
            None => ParseFailure::UnexpectedEnd,
        }
    }

    fn value(&mut self) -> Result<Value, ParseFailure> {
        self.skip_ws();
        match self.expect_some()? {
            b'{' => self.object(),
            b'[' => self.array(),
            b'"' => self.string().map(Value::String),
            b'\'' => Err(ParseFailure::SingleQuote),
            b'-' | b'0'..=b'9' => self.number(),
            b't' | b'f' | b'n' => self.literal(),
            _ => Err(self.unexpected()),
        }
    }

    fn literal(&mut self) -> Result<Value, ParseFailure> {
        for (word, v) in [
            ("true", Value::Bool(true)),
            ("false", Value::Bool(false)),
            ("null", Value::Null),
        ] {
            if self.rest().starts_with(word) {
                self.pos += word.len();
                return Ok(v);
            }
        }
        Err(self.unexpected())
    }

    fn object(&mut self) -> Result<Value, ParseFailure> {
        self.pos += 1;
        let mut fields: Vec<(String, Value)> = Vec::new();
        self.skip_ws();
        if self.peek() == Some(b'}') {
            self.pos += 1;
            return Ok(Value::Object(fields));
        }
        loop {
            self.skip_ws();
            let key = match self.expect_some()? {
                b'"' => self.string()?,
                b'\'' => return Err(ParseFailure::SingleQuote),
                b'}' => return Err(ParseFailure::TrailingComma),
                b if b.is_ascii_alphabetic() || b == b'_' => return Err(ParseFailure::UnquotedKey),
                _ => return Err(self.unexpected()),
            };
            if fields.iter().any(|(k, _)| *k == key) {
                return Err(ParseFailure::DuplicateKey(key));
            }
            self.skip_ws();
            if self.expect_some()? != b':' {
                return Err(self.unexpected());
            }
            self.pos += 1;
            let v = self.value()?;
            fields.push((key, v));
            self.skip_ws();
            match self.expect_some()? {
                b',' => self.pos += 1,
                b'}' => {
                    self.pos += 1;
                    return Ok(Value::Object(fields));
                }
                _ => return Err(self.unexpected()),
            }
        }
    }

    fn array(&mut self) -> Result<Value, ParseFailure> {
        self.pos += 1;
        let mut items = Vec::new();
        self.skip_ws();
        if self.peek() == Some(b']') {
            self.pos += 1;
            return Ok(Value::Array(items));
        }
        loop {
            self.skip_ws();
            if self.expect_some()? == b']' {
                return Err(ParseFailure::TrailingComma);
            }
            items.push(self.value()?);
            self.skip_ws();
            match self.expect_some()? {
                b',' => self.pos += 1,
                b']' => {
                    self.pos += 1;
                    return Ok(Value::Array(items));
                }
                _ => return Err(self.unexpected()),
            }
        }
    }

    fn string(&mut self) -> Result<String, ParseFailure> {
        self.pos += 1;
        let mut out = String::new();
        let mut chars = self.rest().char_indices();
        while let Some((i, c)) = chars.next() {
            match c {
                '"' => {
                    self.pos += i + 1;
                    return Ok(out);
                }
                '\\' => {
                    let (_, e) = chars.next().ok_or(ParseFailure::UnterminatedString)?;
                    match e {
                        '"' => out.push('"'),
                        '\\' => out.push('\\'),
                        '/' => out.push('/'),
                        'b' => out.push('\u{8}'),
                        'f' => out.push('\u{c}'),
                        'n' => out.push('\n'),
                        'r' => out.push('\r'),
                        't' => out.push('\t'),
                        'u' => {
                            let hex: String = chars.by_ref().take(4).map(|(_, c)| c).collect();
                            let code = u32::from_str_radix(&hex, 16)
                                .ok()
                                .filter(|_| hex.len() == 4)
                                .ok_or(ParseFailure::InvalidEscape)?;
                            out.push(char::from_u32(code).ok_or(ParseFailure::InvalidEscape)?);
                        }
                        _ => return Err(ParseFailure::InvalidEscape),
                    }
                }
                c if (c as u32) < 0x20 => return Err(ParseFailure::UnexpectedChar(c)),
                c => out.push(c),
            }
        }
        Err(ParseFailure::UnterminatedString)
    }

    fn number(&mut self) -> Result<Value, ParseFailure> {
        let bytes = self.src.as_bytes();
        let start = self.pos;
        let mut i = start;
        let digits = |i: &mut usize| {
            let s = *i;
            while *i < bytes.len() && bytes[*i].is_ascii_digit() {
                *i += 1;
            }
            *i - s
        };
        if bytes.get(i) == Some(&b'-') {
            i += 1;
        }
        let int_start = i;
        let n = digits(&mut i);
        if n == 0 || (n > 1 && bytes[int_start] == b'0') {
            return Err(ParseFailure::InvalidNumber);
        }
        if bytes.get(i) == Some(&b'.') {
            i += 1;
            if digits(&mut i) == 0 {
                return Err(ParseFailure::InvalidNumber);
            }
        }
        if matches!(bytes.get(i), Some(b'e' | b'E')) {
            i += 1;
            if matches!(bytes.get(i), Some(b'+' | b'-')) {
                i += 1;
            }
            if digits(&mut i) == 0 {
                return Err(ParseFailure::InvalidNumber);
            }
        }
        let x: f64 = self.src[start..i].parse().map_err(|_| ParseFailure::InvalidNumber)?;
        if !x.is_finite() {
            return Err(ParseFailure::InvalidNumber);
        }
        self.pos = i;
        Ok(Value::Number(x))
    }
}

fn trim_ws(s: &str) -> &str {
    s.trim_matches(|c: char| c.is_ascii() && is_ws(c as u8))
}

/// Parse one action string under the strict grammar.
pub fn parse_action(s: &str) -> Result<AgentAction, ParseFailure> {
    let t = trim_ws(s);
    if let Some(rest) = t.strip_prefix(TOOL_OPEN) {
        parse_tool_call(rest)
    } else if let Some(rest) = t.strip_prefix(ANSWER_OPEN) {
        parse_answer(rest)
    } else {
        Err(ParseFailure::NoTag)
    }
}

fn parse_tool_call(rest: &str) -> Result<AgentAction, ParseFailure> {
    let mut cur = Cursor { src: rest, pos: 0 };
    cur.skip_ws();
    match cur.peek() {
        None => return Err(ParseFailure::UnexpectedEnd),
        Some(b'<') if cur.rest().starts_with(TOOL_CLOSE) => return Err(ParseFailure::EmptyBody),
        Some(b'{') => {}
        Some(b'\'') => return Err(ParseFailure::SingleQuote),
        Some(_) => return Err(cur.unexpected()),
    }
    let body = cur.value()?;
    cur.skip_ws();
    let tail = cur.rest();
    if tail.is_empty() {
        return Err(ParseFailure::MissingCloseTag);
    }
    match tail.strip_prefix(TOOL_CLOSE) {
        Some("") => interpret(body),
        Some(_) => Err(ParseFailure::TrailingText),
        None if tail.starts_with(',') => Err(ParseFailure::TrailingComma),
        None if TOOL_CLOSE.starts_with(tail) => Err(ParseFailure::MissingCloseTag),
        None => Err(ParseFailure::TrailingText),
    }
}

fn parse_answer(rest: &str) -> Result<AgentAction, ParseFailure> {
    let end = rest.find(ANSWER_CLOSE).ok_or(ParseFailure::MissingCloseTag)?;
    if !rest[end + ANSWER_CLOSE.len()..].is_empty() {
        return Err(ParseFailure::TrailingText);
    }
    let inner = trim_ws(&rest[..end]);
    if inner.is_empty() || !inner.bytes().all(|b| b.is_ascii_digit()) {
        return Err(ParseFailure::BadAnswer);
    }
    let choice = inner.parse().map_err(|_| ParseFailure::BadAnswer)?;
    Ok(AgentAction::Answer { choice })
}

fn interpret(body: Value) -> Result<AgentAction, ParseFailure> {
    let Value::Object(fields) = body else {
        return Err(ParseFailure::BadArguments("body is not an object".into()));
    };
    let mut name = None;
    let mut arguments = None;
    for (k, v) in fields {
        match k.as_str() {
            "name" => name = Some(v),
            "arguments" => arguments = Some(v),
            _ => return Err(ParseFailure::UnknownField(k)),
        }
    }
    let name = match name.ok_or_else(|| ParseFailure::MissingField("name".into()))? {
        Value::String(s) => s,
        _ => return Err(ParseFailure::BadArguments("name must be a string".into())),
    };
    let tool = ToolKind::from_wire_name(&name).ok_or(ParseFailure::UnknownTool(name))?;
    let args = match arguments.ok_or_else(|| ParseFailure::MissingField("arguments".into()))? {
        Value::Object(a) => a,
        _ => return Err(ParseFailure::BadArguments("arguments must be an object".into())),
    };
    let no_args = |a: &[(String, Value)]| {
        if a.is_empty() {
            Ok(())
        } else {
            Err(ParseFailure::BadArguments(format!("{tool} takes no arguments")))
        }
    };
    let args = match tool {
        ToolKind::Browse => no_args(&args).map(|_| ToolArgs::Browse)?,
        ToolKind::FramePick => no_args(&args).map(|_| ToolArgs::FramePick)?,
        ToolKind::ZoomIn => no_args(&args).map(|_| ToolArgs::ZoomIn)?,
        ToolKind::SegmentRetrieve => {
            let bad = || ParseFailure::BadArguments("segment_retrieve takes {\"query\": [numbers]}".into());
            let [(key, Value::Array(items))] = args.as_slice() else {
                return Err(bad());
            };
            if key != "query" || items.is_empty() {
                return Err(bad());
            }
            let query = items
                .iter()
                .map(|v| match v {
                    Value::Number(x) => Ok(*x),
                    _ => Err(bad()),
                })
                .collect::<Result<Vec<_>, _>>()?;
            ToolArgs::SegmentRetrieve { query }
        }
    };
    Ok(AgentAction::Invoke(args))
}

/// Canonical wire form of an action.
pub fn serialize(action: &AgentAction) -> String {
    match action {
        AgentAction::Answer { choice } => format!("{ANSWER_OPEN}{choice}{ANSWER_CLOSE}"),
        AgentAction::Invoke(args) => {
            let arguments = match args {
                ToolArgs::SegmentRetrieve { query } => {
                    let xs: Vec<String> = query.iter().map(|x| format!("{x}")).collect();
                    format!("{{\"query\": [{}]}}", xs.join(", "))
                }
                _ => "{}".to_string(),
            };
            format!(
                "{TOOL_OPEN}{{\"name\": \"{}\", \"arguments\": {arguments}}}{TOOL_CLOSE}",
                args.kind().wire_name()
            )
        }
    }
}
