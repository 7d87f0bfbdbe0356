//! The tool-call wire format: canonical serialization, a strict parser, an
//! ordered list of repair passes, and the format-quality metric.

mod corrupt;
mod grammar;
mod repair;

use thiserror::Error;

pub use corrupt::{closing_suffix_len, corrupt, Corruption};
pub use grammar::{serialize, ParseFailure, ANSWER_CLOSE, ANSWER_OPEN, TOOL_CLOSE, TOOL_OPEN};
pub use repair::RepairPass;

use crate::trajectory::{AgentAction, FormatStatus, Trajectory};

#[derive(Debug, Clone, PartialEq)]
pub enum ParseOutcome {
    Parsed(AgentAction),
    Repaired(AgentAction, Vec<RepairPass>),
    Failed(ParseFailure),
}

impl ParseOutcome {
    pub fn action(&self) -> Option<&AgentAction> {
        match self {
            ParseOutcome::Parsed(a) | ParseOutcome::Repaired(a, _) => Some(a),
            ParseOutcome::Failed(_) => None,
        }
    }

    pub fn into_action(self) -> Option<AgentAction> {
        match self {
            ParseOutcome::Parsed(a) | ParseOutcome::Repaired(a, _) => Some(a),
            ParseOutcome::Failed(_) => None,
        }
    }

    pub fn format_status(&self) -> FormatStatus {
        match self {
            ParseOutcome::Parsed(_) => FormatStatus::Strict,
            ParseOutcome::Repaired(_, passes) => FormatStatus::Repaired { passes: passes.clone() },
            ParseOutcome::Failed(reason) => FormatStatus::Failed {
                reason: reason.to_string(),
            },
        }
    }
}

pub fn parse_strict(s: &str) -> ParseOutcome {
    match grammar::parse_action(s) {
        Ok(a) => ParseOutcome::Parsed(a),
        Err(e) => ParseOutcome::Failed(e),
    }
}

/// Strict parse, falling back to the repair passes applied cumulatively in
/// order. The first prefix of passes after which the text strict-parses wins;
/// only passes that changed the text are reported.
pub fn parse_with_repair(s: &str) -> ParseOutcome {
    let first_failure = match grammar::parse_action(s) {
        Ok(a) => return ParseOutcome::Parsed(a),
        Err(e) => e,
    };
    let mut text = s.to_string();
    let mut applied = Vec::new();
    for pass in RepairPass::ORDER {
        let next = pass.apply(&text);
        if next == text {
            continue;
        }
        text = next;
        applied.push(pass);
        if let Ok(a) = grammar::parse_action(&text) {
            return ParseOutcome::Repaired(a, applied);
        }
    }
    ParseOutcome::Failed(first_failure)
}

#[derive(Debug, Error, PartialEq)]
pub enum FormatError {
    #[error("format quality needs at least one episode")]
    EmptyCorpus,
}

/// Fraction of episodes whose every action string strict-parses.
pub fn format_quality(episodes: &[Trajectory]) -> Result<f64, FormatError> {
    if episodes.is_empty() {
        return Err(FormatError::EmptyCorpus);
    }
    let clean = episodes
        .iter()
        .filter(|t| t.raw_strings().all(|s| grammar::parse_action(s).is_ok()))
        .count();
    Ok(clean as f64 / episodes.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sandbox::ObservationState;
    use crate::trajectory::{ToolArgs, Turn};

    #[test]
    fn single_quotes_repair_with_one_pass() {
        let out = parse_with_repair("<tool_call>{'name': 'browse', 'arguments': {}}</tool_call>");
        assert_eq!(
            out,
            ParseOutcome::Repaired(AgentAction::Invoke(ToolArgs::Browse), vec![RepairPass::QuoteNormalize])
        );
    }

    #[test]
    fn strict_input_short_circuits() {
        let s = serialize(&AgentAction::Answer { choice: 1 });
        assert_eq!(
            parse_with_repair(&s),
            ParseOutcome::Parsed(AgentAction::Answer { choice: 1 })
        );
    }

    #[test]
    fn truncated_braces_and_tag_repair() {
        let out = parse_with_repair("<tool_call>{\"name\": \"browse\", \"arguments\": {");
        assert_eq!(
            out,
            ParseOutcome::Repaired(AgentAction::Invoke(ToolArgs::Browse), vec![RepairPass::BalanceClosers])
        );
    }

    #[test]
    fn stacked_corruptions_need_several_passes() {
        let s = "```\n<tool_call>{name: 'browse', arguments: {},}</tool_call>\n```";
        match parse_with_repair(s) {
            ParseOutcome::Repaired(a, passes) => {
                assert_eq!(a, AgentAction::Invoke(ToolArgs::Browse));
                assert_eq!(
                    passes,
                    vec![
                        RepairPass::StripFence,
                        RepairPass::QuoteNormalize,
                        RepairPass::QuoteBareKeys,
                        RepairPass::RemoveTrailingCommas
                    ]
                );
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn garbage_fails_with_strict_reason() {
        assert_eq!(parse_with_repair(""), ParseOutcome::Failed(ParseFailure::NoTag));
        assert_eq!(
            parse_with_repair("I would call browse"),
            ParseOutcome::Failed(ParseFailure::NoTag)
        );
    }

    fn episode(raws: &[&str]) -> Trajectory {
        let mut t = Trajectory::new("e", "q");
        for r in raws {
            t.turns.push(Turn {
                state: ObservationState::initial(),
                decision: None,
                raw: r.to_string(),
                format: parse_with_repair(r).format_status(),
                action: parse_with_repair(r).into_action(),
                observation: String::new(),
            });
        }
        t
    }

    #[test]
    fn format_quality_is_strict() {
        let good = "<answer>1</answer>";
        let repairable = "<answer>1";
        let broken = "answer 1";
        assert_eq!(format_quality(&[episode(&[good]), episode(&[good, good])]), Ok(1.0));
        assert_eq!(format_quality(&[episode(&[good]), episode(&[good, broken])]), Ok(0.5));
        assert_eq!(
            format_quality(&[episode(&[repairable]), episode(&[good, repairable])]),
            Ok(0.0)
        );
        assert_eq!(format_quality(&[]), Err(FormatError::EmptyCorpus));
    }
}
