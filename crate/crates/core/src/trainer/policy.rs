//! Tabular softmax policy over discrete episode states, plus scripted actors
//! used as baselines and in tests.

use std::fmt::Write as _;

use rand::Rng;
use thiserror::Error;

use crate::sandbox::{EvidenceGranularity, Granularity, IntentCue, SandboxItem};
use crate::trajectory::ActionHead;

const CUES: [IntentCue; 2] = [IntentCue::Global, IntentCue::Local];

/// What the policy conditions on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PolicyState {
    pub cue: IntentCue,
    pub granularity: Granularity,
    pub visible: bool,
    pub turn: usize,
}

impl PolicyState {
    pub fn state_count(max_turns: usize) -> usize {
        CUES.len() * Granularity::ALL.len() * 2 * max_turns
    }

    pub fn index(&self, max_turns: usize) -> usize {
        let cue = CUES.iter().position(|c| *c == self.cue).expect("known cue");
        ((cue * Granularity::ALL.len() + self.granularity.index()) * 2 + usize::from(self.visible)) * max_turns
            + self.turn
    }

    pub fn from_index(index: usize, max_turns: usize) -> Self {
        let turn = index % max_turns;
        let rest = index / max_turns;
        let visible = rest % 2 == 1;
        let rest = rest / 2;
        Self {
            cue: CUES[rest / Granularity::ALL.len()],
            granularity: Granularity::ALL[rest % Granularity::ALL.len()],
            visible,
            turn,
        }
    }

    /// Compact label such as `local/segment/hidden/t1`.
    pub fn label(&self) -> String {
        format!(
            "{}/{}/{}/t{}",
            self.cue.name(),
            self.granularity.name(),
            if self.visible { "visible" } else { "hidden" },
            self.turn
        )
    }

    pub fn parse_label(s: &str) -> Option<Self> {
        let mut parts = s.split('/');
        let cue = match parts.next()? {
            "global" => IntentCue::Global,
            "local" => IntentCue::Local,
            _ => return None,
        };
        let granularity = Granularity::from_name(parts.next()?)?;
        let visible = match parts.next()? {
            "visible" => true,
            "hidden" => false,
            _ => return None,
        };
        let turn = parts.next()?.strip_prefix('t')?.parse().ok()?;
        if parts.next().is_some() {
            return None;
        }
        Some(Self {
            cue,
            granularity,
            visible,
            turn,
        })
    }
}

/// Chooses an action head for the current state.
pub trait Actor: Sync {
    fn decide(&self, item: &SandboxItem, state: &PolicyState, rng: &mut dyn rand::RngCore) -> ActionHead;
}

#[derive(Debug, Error)]
pub enum PolicyFileError {
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("policy file has no max_turns header")]
    MissingHeader,
}

/// Preferences `theta(s, a)` for every state and action head.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyTable {
    pub max_turns: usize,
    pub theta: Vec<[f64; ActionHead::COUNT]>,
}

impl PolicyTable {
    pub fn zeros(max_turns: usize) -> Self {
        Self {
            max_turns,
            theta: vec![[0.0; ActionHead::COUNT]; PolicyState::state_count(max_turns)],
        }
    }

    pub fn probs(&self, state: &PolicyState) -> [f64; ActionHead::COUNT] {
        softmax(&self.theta[state.index(self.max_turns)])
    }

    pub fn sample(&self, state: &PolicyState, rng: &mut dyn rand::RngCore) -> ActionHead {
        let p = self.probs(state);
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, pi) in p.iter().enumerate() {
            acc += pi;
            if u < acc {
                return ActionHead::ALL[i];
            }
        }
        ActionHead::ALL[ActionHead::COUNT - 1]
    }

    pub fn greedy(&self, state: &PolicyState) -> ActionHead {
        let p = self.probs(state);
        ActionHead::ALL[crate::util::argmax(p).expect("non-empty")]
    }

    /// Tab-separated `state head preference` rows after a header line.
    pub fn to_text(&self) -> String {
        let mut out = format!("# max_turns={}\nstate\thead\tpreference\n", self.max_turns);
        for (i, row) in self.theta.iter().enumerate() {
            let label = PolicyState::from_index(i, self.max_turns).label();
            for head in ActionHead::ALL {
                writeln!(out, "{label}\t{}\t{}", head.name(), row[head.index()]).expect("write to string");
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, PolicyFileError> {
        let mut lines = text.lines().enumerate();
        let max_turns = lines
            .next()
            .and_then(|(_, l)| l.strip_prefix("# max_turns="))
            .and_then(|v| v.parse::<usize>().ok())
            .filter(|&m| m >= 1)
            .ok_or(PolicyFileError::MissingHeader)?;
        let mut table = Self::zeros(max_turns);
        let mut seen = vec![[false; ActionHead::COUNT]; table.theta.len()];
        for (n, line) in lines {
            let bad = |reason: &str| PolicyFileError::Malformed {
                line: n + 1,
                reason: reason.to_string(),
            };
            if line == "state\thead\tpreference" || line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 3 {
                return Err(bad("expected three tab-separated columns"));
            }
            let state = PolicyState::parse_label(cols[0]).ok_or_else(|| bad("unknown state"))?;
            if state.turn >= max_turns {
                return Err(bad("turn out of range"));
            }
            let head = ActionHead::from_name(cols[1]).ok_or_else(|| bad("unknown action head"))?;
            let value: f64 = cols[2].parse().map_err(|_| bad("preference is not a number"))?;
            if !value.is_finite() {
                return Err(bad("preference is not finite"));
            }
            let s = state.index(max_turns);
            if seen[s][head.index()] {
                return Err(bad("duplicate entry"));
            }
            seen[s][head.index()] = true;
            table.theta[s][head.index()] = value;
        }
        if seen.iter().flatten().any(|&b| !b) {
            return Err(PolicyFileError::Malformed {
                line: text.lines().count(),
                reason: "table is incomplete".into(),
            });
        }
        Ok(table)
    }
}

impl Actor for PolicyTable {
    fn decide(&self, _item: &SandboxItem, state: &PolicyState, rng: &mut dyn rand::RngCore) -> ActionHead {
        self.sample(state, rng)
    }
}

/// Greedy decoding of a table policy.
pub struct Greedy<'a>(pub &'a PolicyTable);

impl Actor for Greedy<'_> {
    fn decide(&self, _item: &SandboxItem, state: &PolicyState, _rng: &mut dyn rand::RngCore) -> ActionHead {
        self.0.greedy(state)
    }
}

pub fn softmax(x: &[f64; ActionHead::COUNT]) -> [f64; ActionHead::COUNT] {
    let m = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e = x.map(|v| (v - m).exp());
    let z: f64 = e.iter().sum();
    e.map(|v| v / z)
}

/// Browse for global questions, the retrieval chain down to the evidence
/// granularity for local ones, then answer.
pub struct OptimalActor;

impl Actor for OptimalActor {
    fn decide(&self, item: &SandboxItem, state: &PolicyState, _rng: &mut dyn rand::RngCore) -> ActionHead {
        if state.visible {
            return ActionHead::Answer;
        }
        match (item.granularity(), state.granularity) {
            (EvidenceGranularity::Global, _) => ActionHead::Browse,
            (_, Granularity::SegmentSelected) => ActionHead::Frame,
            (_, Granularity::FrameSelected) => ActionHead::Zoom,
            _ => ActionHead::Segment,
        }
    }
}

/// Plays a fixed head sequence, answering once it runs out.
pub struct ScriptedActor(pub Vec<ActionHead>);

impl Actor for ScriptedActor {
    fn decide(&self, _item: &SandboxItem, state: &PolicyState, _rng: &mut dyn rand::RngCore) -> ActionHead {
        self.0.get(state.turn).copied().unwrap_or(ActionHead::Answer)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn state_space_under_defaults() {
        assert_eq!(PolicyState::state_count(4), 80);
        for i in 0..80 {
            let s = PolicyState::from_index(i, 4);
            assert_eq!(s.index(4), i);
            assert_eq!(PolicyState::parse_label(&s.label()), Some(s));
        }
    }

    #[test]
    fn zero_policy_is_uniform() {
        let p = PolicyTable::zeros(4);
        let s = PolicyState::from_index(17, 4);
        assert_eq!(p.probs(&s), [0.2; 5]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut counts = [0usize; 5];
        for _ in 0..50_000 {
            counts[p.sample(&s, &mut rng).index()] += 1;
        }
        for c in counts {
            assert!((c as f64 / 50_000.0 - 0.2).abs() < 0.01);
        }
    }

    #[test]
    fn softmax_sums_to_one() {
        let p = softmax(&[3.0, -700.0, 700.0, 0.0, 1e-3]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn text_round_trip() {
        let mut p = PolicyTable::zeros(4);
        p.theta[5] = [0.1, -0.2, 1.0 / 3.0, 1e-17, 12345.678];
        let back = PolicyTable::from_text(&p.to_text()).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn malformed_policy_files() {
        assert!(matches!(
            PolicyTable::from_text(""),
            Err(PolicyFileError::MissingHeader)
        ));
        let good = PolicyTable::zeros(2).to_text();
        let truncated: String = good.lines().take(10).map(|l| format!("{l}\n")).collect();
        assert!(PolicyTable::from_text(&truncated).is_err());
        let garbled = good.replacen("\t0\n", "\tabc\n", 1);
        assert!(matches!(
            PolicyTable::from_text(&garbled),
            Err(PolicyFileError::Malformed { line: 3, .. })
        ));
    }
}
