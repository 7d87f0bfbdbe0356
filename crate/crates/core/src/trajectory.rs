//! Shared domain types: tool identities, agent actions, tool calls, rewards,
//! advantages and the trajectory record that ties them together.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sandbox::ObservationState;
use crate::toolparse::RepairPass;

/// The four tools of the hierarchical toolkit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToolKind {
    Browse,
    SegmentRetrieve,
    FramePick,
    ZoomIn,
}

impl ToolKind {
    pub const COUNT: usize = 4;
    pub const ALL: [ToolKind; 4] = [
        ToolKind::Browse,
        ToolKind::SegmentRetrieve,
        ToolKind::FramePick,
        ToolKind::ZoomIn,
    ];

    /// Name used on the wire inside `<tool_call>` bodies.
    pub fn wire_name(self) -> &'static str {
        match self {
            ToolKind::Browse => "browse",
            ToolKind::SegmentRetrieve => "segment_retrieve",
            ToolKind::FramePick => "frame_pick",
            ToolKind::ZoomIn => "zoom_in",
        }
    }

    pub fn from_wire_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.wire_name() == name)
    }

    pub fn index(self) -> usize {
        self as usize
    }

    /// Position in the grounding chain (segment < frame < zoom). Browse is
    /// not part of the chain.
    pub fn chain_rank(self) -> Option<u8> {
        match self {
            ToolKind::Browse => None,
            ToolKind::SegmentRetrieve => Some(0),
            ToolKind::FramePick => Some(1),
            ToolKind::ZoomIn => Some(2),
        }
    }
}

impl fmt::Display for ToolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.wire_name())
    }
}

/// Arguments carried by a tool invocation. Only segment retrieval takes a
/// payload; the other tools act on the current selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "tool", rename_all = "snake_case")]
pub enum ToolArgs {
    Browse,
    SegmentRetrieve { query: Vec<f64> },
    FramePick,
    ZoomIn,
}

impl ToolArgs {
    pub fn kind(&self) -> ToolKind {
        match self {
            ToolArgs::Browse => ToolKind::Browse,
            ToolArgs::SegmentRetrieve { .. } => ToolKind::SegmentRetrieve,
            ToolArgs::FramePick => ToolKind::FramePick,
            ToolArgs::ZoomIn => ToolKind::ZoomIn,
        }
    }
}

/// One agent decision: answer, or invoke a tool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentAction {
    Answer { choice: usize },
    Invoke(ToolArgs),
}

impl AgentAction {
    pub fn head(&self) -> ActionHead {
        match self {
            AgentAction::Answer { .. } => ActionHead::Answer,
            AgentAction::Invoke(args) => ActionHead::from_tool(args.kind()),
        }
    }

    pub fn tool(&self) -> Option<ToolKind> {
        match self {
            AgentAction::Answer { .. } => None,
            AgentAction::Invoke(args) => Some(args.kind()),
        }
    }
}

/// Discrete action head: what kind of action is taken, without payload.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionHead {
    Answer,
    Browse,
    Segment,
    Frame,
    Zoom,
}

impl ActionHead {
    pub const COUNT: usize = 5;
    pub const ALL: [ActionHead; 5] = [
        ActionHead::Answer,
        ActionHead::Browse,
        ActionHead::Segment,
        ActionHead::Frame,
        ActionHead::Zoom,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_tool(tool: ToolKind) -> Self {
        match tool {
            ToolKind::Browse => ActionHead::Browse,
            ToolKind::SegmentRetrieve => ActionHead::Segment,
            ToolKind::FramePick => ActionHead::Frame,
            ToolKind::ZoomIn => ActionHead::Zoom,
        }
    }

    pub fn tool(self) -> Option<ToolKind> {
        match self {
            ActionHead::Answer => None,
            ActionHead::Browse => Some(ToolKind::Browse),
            ActionHead::Segment => Some(ToolKind::SegmentRetrieve),
            ActionHead::Frame => Some(ToolKind::FramePick),
            ActionHead::Zoom => Some(ToolKind::ZoomIn),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ActionHead::Answer => "answer",
            ActionHead::Browse => "browse",
            ActionHead::Segment => "segment",
            ActionHead::Frame => "frame",
            ActionHead::Zoom => "zoom",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|h| h.name() == name)
    }
}

impl fmt::Display for ActionHead {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A single tool invocation inside a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCall {
    pub tool: ToolKind,
    /// 1-based position in the trajectory's tool-call sequence.
    pub step: usize,
    pub args: ToolArgs,
    /// The action string strict-parsed (no repair needed).
    pub parse_valid: bool,
    /// Chain order, budget and argument checks all passed.
    pub precondition_valid: bool,
    pub observation_id: String,
    /// Whether the evidence was already visible when this call was issued.
    pub evidence_visible_before: bool,
}

/// How an emitted action string fared against the wire grammar.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum FormatStatus {
    Strict,
    Repaired { passes: Vec<RepairPass> },
    Failed { reason: String },
}

impl FormatStatus {
    pub fn is_strict(&self) -> bool {
        matches!(self, FormatStatus::Strict)
    }

    pub fn is_acceptable(&self, accept_repaired: bool) -> bool {
        match self {
            FormatStatus::Strict => true,
            FormatStatus::Repaired { .. } => accept_repaired,
            FormatStatus::Failed { .. } => false,
        }
    }
}

/// One turn: the state the agent saw, the string it emitted, what that string
/// parsed to, and the environment's reply.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub state: ObservationState,
    /// Action head the agent decided on, when known (always set for policy
    /// rollouts; synthesized trajectories derive it from the parsed action).
    pub decision: Option<ActionHead>,
    pub raw: String,
    pub format: FormatStatus,
    /// Parsed action, absent when the string could not be parsed.
    pub action: Option<AgentAction>,
    pub observation: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub acc: u8,
    pub fmt: u8,
    /// Bonus after gating on `acc`.
    pub tool_bonus: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CallAdvantage {
    pub step: usize,
    pub tool: ToolKind,
    pub advantage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdvantageBreakdown {
    pub grpo: f64,
    pub tagpo: f64,
    pub per_call: Vec<CallAdvantage>,
    /// Always `grpo + tagpo`.
    pub composite_weight: f64,
}

impl AdvantageBreakdown {
    pub fn new(grpo: f64, per_call: Vec<CallAdvantage>) -> Self {
        let tagpo = if per_call.is_empty() {
            0.0
        } else {
            per_call.iter().map(|c| c.advantage).sum::<f64>() / per_call.len() as f64
        };
        Self {
            grpo,
            tagpo,
            per_call,
            composite_weight: grpo + tagpo,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum TrajectoryError {
    #[error("trajectory {0} is not finalized (no answer and not truncated)")]
    NotFinalized(String),
}

/// Ordered record of one rollout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub id: String,
    pub question_id: String,
    pub turns: Vec<Turn>,
    pub tool_calls: Vec<ToolCall>,
    pub final_answer: Option<usize>,
    pub truncated: bool,
    /// Judged correctness of the final answer; false when truncated.
    pub correct: bool,
    pub rewards: Option<RewardBreakdown>,
    pub advantage: Option<AdvantageBreakdown>,
}

impl Trajectory {
    pub fn new(id: impl Into<String>, question_id: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            question_id: question_id.into(),
            turns: Vec::new(),
            tool_calls: Vec::new(),
            final_answer: None,
            truncated: false,
            correct: false,
            rewards: None,
            advantage: None,
        }
    }

    pub fn is_finalized(&self) -> bool {
        self.final_answer.is_some() || self.truncated
    }

    /// `L_i`: the number of tool calls.
    pub fn call_count(&self) -> usize {
        self.tool_calls.len()
    }

    pub fn tools(&self) -> impl Iterator<Item = ToolKind> + '_ {
        self.tool_calls.iter().map(|c| c.tool)
    }

    pub fn raw_strings(&self) -> impl Iterator<Item = &str> {
        self.turns.iter().map(|t| t.raw.as_str())
    }

    pub fn episode_reward(&self) -> Option<f64> {
        self.rewards.map(|r| r.total)
    }

    /// Tool calls issued after the evidence was already visible.
    pub fn post_visibility_calls(&self) -> usize {
        self.tool_calls.iter().filter(|c| c.evidence_visible_before).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySummary {
    pub turns: usize,
    pub tool_calls: usize,
    pub per_tool: BTreeMap<ToolKind, usize>,
    pub reward: Option<f64>,
    pub truncated: bool,
}

pub fn trajectory_summary(t: &Trajectory) -> Result<TrajectorySummary, TrajectoryError> {
    if !t.is_finalized() {
        return Err(TrajectoryError::NotFinalized(t.id.clone()));
    }
    let mut per_tool = BTreeMap::new();
    let mut invokes = 0;
    for turn in &t.turns {
        if let Some(AgentAction::Invoke(args)) = &turn.action {
            *per_tool.entry(args.kind()).or_insert(0) += 1;
            invokes += 1;
        }
    }
    debug_assert_eq!(invokes, t.tool_calls.len());
    Ok(TrajectorySummary {
        turns: t.turns.len(),
        tool_calls: invokes,
        per_tool,
        reward: t.episode_reward(),
        truncated: t.truncated,
    })
}

/// The N rollouts sampled for one question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutGroup {
    pub question_id: String,
    pub trajectories: Vec<Trajectory>,
}

impl RolloutGroup {
    pub fn rewards(&self) -> Vec<f64> {
        self.trajectories
            .iter()
            .map(|t| t.episode_reward().unwrap_or(0.0))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }
}
