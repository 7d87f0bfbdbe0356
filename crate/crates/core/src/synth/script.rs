//! Ready-made mock scripts for the synthesis pipeline, built from the
//! sandbox ground truth.

use serde::{Deserialize, Serialize};

use super::client::{ScriptedClient, Stage};
use super::{SynthConfig, BASE_SYSTEM_PROMPT};
use crate::sandbox::{EvidenceGranularity, SandboxItem};
use crate::toolparse::{corrupt, serialize, Corruption};
use crate::trajectory::{AgentAction, ToolArgs, ToolKind};
use crate::util::rng_for;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Profile {
    /// Minimal chains, medium curation counts: every item yields an exemplar.
    Optimal,
    /// Tool orders that break the retrieval chain on every attempt.
    ChainViolating,
    /// Like `Optimal`, but item `i` is answered correctly `i mod (trials+1)`
    /// times during curation.
    Banded,
    /// Like `Optimal`, with single-quoted action strings that need repair.
    Repairing,
}

impl Profile {
    pub const ALL: [Profile; 4] = [
        Profile::Optimal,
        Profile::ChainViolating,
        Profile::Banded,
        Profile::Repairing,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Profile::Optimal => "optimal",
            Profile::ChainViolating => "chain-violating",
            Profile::Banded => "banded",
            Profile::Repairing => "repairing",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.name() == s)
    }
}

/// The shortest tool chain that exposes the item's evidence.
pub fn minimal_chain(item: &SandboxItem) -> Vec<ToolKind> {
    match item.granularity() {
        EvidenceGranularity::Global => vec![ToolKind::Browse],
        EvidenceGranularity::Segment => vec![ToolKind::SegmentRetrieve],
        EvidenceGranularity::Frame => vec![ToolKind::SegmentRetrieve, ToolKind::FramePick],
        EvidenceGranularity::Region => vec![ToolKind::SegmentRetrieve, ToolKind::FramePick, ToolKind::ZoomIn],
    }
}

/// One call past the evidence: the overuse a concise agent would avoid.
fn overuse_call(item: &SandboxItem) -> ToolKind {
    match item.granularity() {
        EvidenceGranularity::Global => ToolKind::Browse,
        EvidenceGranularity::Segment => ToolKind::FramePick,
        EvidenceGranularity::Frame => ToolKind::ZoomIn,
        EvidenceGranularity::Region => ToolKind::ZoomIn,
    }
}

fn args_for(kind: ToolKind, item: &SandboxItem) -> ToolArgs {
    match kind {
        ToolKind::Browse => ToolArgs::Browse,
        ToolKind::SegmentRetrieve => ToolArgs::SegmentRetrieve {
            query: item.question.query.clone(),
        },
        ToolKind::FramePick => ToolArgs::FramePick,
        ToolKind::ZoomIn => ToolArgs::ZoomIn,
    }
}

fn answer(choice: usize) -> String {
    serialize(&AgentAction::Answer { choice })
}

fn turns(item: &SandboxItem, chain: &[ToolKind], repair: bool, seed: u64) -> Vec<String> {
    let mut rng = rng_for(seed, &[]);
    let mut out: Vec<String> = chain
        .iter()
        .map(|&k| {
            let s = serialize(&AgentAction::Invoke(args_for(k, item)));
            let s = if repair {
                corrupt(&s, Corruption::SingleQuotes, &mut rng)
            } else {
                s
            };
            format!("The next step is {}.\n{s}", k.wire_name())
        })
        .collect();
    out.push(format!("The evidence is visible.\n{}", answer(item.correct_choice())));
    out
}

fn order_text(chain: &[ToolKind]) -> String {
    chain
        .iter()
        .map(|k| match k {
            ToolKind::Browse => "browse",
            ToolKind::SegmentRetrieve => "segment",
            ToolKind::FramePick => "frame",
            ToolKind::ZoomIn => "zoom",
        })
        .collect::<Vec<_>>()
        .join(", ")
}

/// Build a mock client that plays `profile` on `corpus`.
pub fn scripted_client(profile: Profile, corpus: &[SandboxItem], cfg: &SynthConfig, seed: u64) -> ScriptedClient {
    let mut client = ScriptedClient::new();
    for (i, item) in corpus.iter().enumerate() {
        let id = item.question.id.as_str();
        let correct = item.correct_choice();
        let wrong = (correct + 1) % item.question.choices;
        client.reply(Stage::Necessity, id, answer(wrong));
        let chain = minimal_chain(item);
        for _ in 0..cfg.retry_cap.max(1) {
            let order = match profile {
                Profile::ChainViolating => "zoom, segment".to_string(),
                _ => order_text(&chain),
            };
            client.reply(Stage::Order, id, order);
        }
        client.reply(
            Stage::Rewrite,
            id,
            format!("{BASE_SYSTEM_PROMPT}\nPlan for this question: {}.", order_text(&chain)),
        );
        for c in 0..cfg.candidates {
            let mut calls = chain.clone();
            if c % 2 == 1 {
                calls.push(overuse_call(item));
            }
            let key = format!("{id}/c{c}");
            let repair = profile == Profile::Repairing && c == 0;
            for t in turns(
                item,
                &calls,
                repair,
                crate::util::derive_seed(seed, &[i as u64, c as u64]),
            ) {
                client.reply(Stage::Trajectory, key.as_str(), t);
            }
        }
        // only even-indexed candidates are minimal
        let survivors = cfg.candidates.div_ceil(2);
        let ranks: Vec<String> = (1..=survivors).map(|r| r.to_string()).collect();
        client.reply(Stage::Adjudicate, id, ranks.join(", "));
        let hits = match profile {
            Profile::Banded => i % (cfg.trials + 1),
            _ => (cfg.band_low + cfg.band_high) / 2,
        };
        for trial in 0..cfg.trials {
            client.reply(Stage::Curate, id, answer(if trial < hits { correct } else { wrong }));
        }
    }
    client
}
