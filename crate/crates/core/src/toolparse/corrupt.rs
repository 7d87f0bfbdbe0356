//! Corruptions that invert the repair passes, used to build repair corpora
//! and to inject format noise into rollouts.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::grammar::{ANSWER_CLOSE, ANSWER_OPEN, TOOL_CLOSE, TOOL_OPEN};
use super::repair::RepairPass;
use crate::trajectory::AgentAction;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Corruption {
    /// Wrap in a markdown code fence.
    Fence,
    /// Swap every double quote for a single quote.
    SingleQuotes,
    /// Drop the quotes around object keys.
    BareKeys,
    /// Insert a comma before the closing brace of the body.
    TrailingComma,
    /// Cut off part of the closing braces and tag.
    Truncate,
    /// Remove the opening tag; no pass can recover this.
    DropOpenTag,
}

impl Corruption {
    pub const ALL: [Corruption; 6] = [
        Corruption::Fence,
        Corruption::SingleQuotes,
        Corruption::BareKeys,
        Corruption::TrailingComma,
        Corruption::Truncate,
        Corruption::DropOpenTag,
    ];

    /// The pass that undoes this corruption, if any.
    pub fn inverse_pass(self) -> Option<RepairPass> {
        match self {
            Corruption::Fence => Some(RepairPass::StripFence),
            Corruption::SingleQuotes => Some(RepairPass::QuoteNormalize),
            Corruption::BareKeys => Some(RepairPass::QuoteBareKeys),
            Corruption::TrailingComma => Some(RepairPass::RemoveTrailingCommas),
            Corruption::Truncate => Some(RepairPass::BalanceClosers),
            Corruption::DropOpenTag => None,
        }
    }

    pub fn applies_to(self, action: &AgentAction) -> bool {
        match self {
            Corruption::SingleQuotes | Corruption::BareKeys | Corruption::TrailingComma => {
                matches!(action, AgentAction::Invoke(_))
            }
            _ => true,
        }
    }
}

/// Length of the suffix made only of closing brackets and the close tag.
pub fn closing_suffix_len(s: &str) -> usize {
    let (body, tag) = if let Some(b) = s.strip_suffix(TOOL_CLOSE) {
        (b, TOOL_CLOSE)
    } else if let Some(b) = s.strip_suffix(ANSWER_CLOSE) {
        (b, ANSWER_CLOSE)
    } else {
        return 0;
    };
    let brackets = body.len() - body.trim_end_matches(['}', ']']).len();
    tag.len() + brackets
}

/// Apply `kind` to a canonical action string. `rng` picks the truncation
/// length.
pub fn corrupt(s: &str, kind: Corruption, rng: &mut impl Rng) -> String {
    match kind {
        Corruption::Fence => format!("```json\n{s}\n```"),
        Corruption::SingleQuotes => s.replace('"', "'"),
        Corruption::BareKeys => unquote_keys(s),
        Corruption::TrailingComma => match s.rfind('}') {
            Some(i) => format!("{},{}", &s[..i], &s[i..]),
            None => s.to_string(),
        },
        Corruption::Truncate => {
            let n = closing_suffix_len(s);
            if n == 0 {
                return s.to_string();
            }
            let k = rng.random_range(1..=n);
            s[..s.len() - k].to_string()
        }
        Corruption::DropOpenTag => s.replacen(TOOL_OPEN, "", 1).replacen(ANSWER_OPEN, "", 1),
    }
}

fn unquote_keys(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut rest = s;
    while let Some(i) = rest.find('"') {
        let after = &rest[i + 1..];
        match after.find('"') {
            Some(j) if after[j + 1..].starts_with(':') => {
                out.push_str(&rest[..i]);
                out.push_str(&after[..j]);
                rest = &after[j + 1..];
            }
            Some(j) => {
                out.push_str(&rest[..i + j + 2]);
                rest = &after[j + 1..];
            }
            None => break,
        }
    }
    out.push_str(rest);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toolparse::serialize;
    use crate::trajectory::ToolArgs;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn corruptions_of_browse() {
        let s = serialize(&AgentAction::Invoke(ToolArgs::Browse));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(
            corrupt(&s, Corruption::BareKeys, &mut rng),
            "<tool_call>{name: \"browse\", arguments: {}}</tool_call>"
        );
        assert_eq!(
            corrupt(&s, Corruption::TrailingComma, &mut rng),
            "<tool_call>{\"name\": \"browse\", \"arguments\": {},}</tool_call>"
        );
        assert_eq!(closing_suffix_len(&s), "}}</tool_call>".len());
        assert_eq!(closing_suffix_len("<answer>1</answer>"), "</answer>".len());
    }
}
