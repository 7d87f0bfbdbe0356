//! Group-relative advantages: episode-level GRPO scores, per-tool TAGPO
//! scores averaged per trajectory, their composite, and rollout filtering.
//!
//! All standard scores use the population standard deviation. A set of
//! values that are all identical scores to zero.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rewards::{per_call_rewards, CallReward, RewardConfig, RewardError};
use crate::trajectory::{AdvantageBreakdown, CallAdvantage, RolloutGroup, ToolKind};
use crate::util::{all_equal, mean, population_std};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum AdvantageError {
    #[error("group {question_id} has {n} rollouts; at least 2 are needed")]
    TooFewRollouts { question_id: String, n: usize },
    #[error(transparent)]
    Reward(#[from] RewardError),
}

/// Pool over which per-call tool statistics are computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TagpoScope {
    /// The rollouts of one question.
    #[default]
    Group,
    /// Every rollout group in the training step.
    Batch,
}

/// Which advantage drives the policy update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Grpo,
    Tagpo,
    #[default]
    Composite,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::Grpo, Algorithm::Tagpo, Algorithm::Composite];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Grpo => "grpo",
            Algorithm::Tagpo => "tagpo",
            Algorithm::Composite => "composite",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.name() == s)
    }

    pub fn weight(self, adv: &AdvantageBreakdown) -> f64 {
        match self {
            Algorithm::Grpo => adv.grpo,
            Algorithm::Tagpo => adv.tagpo,
            Algorithm::Composite => adv.composite_weight,
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::from_name(s).ok_or_else(|| format!("unknown algorithm '{s}' (expected grpo, tagpo or composite)"))
    }
}

/// Mean and population standard deviation of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: f64,
    pub std: f64,
    pub count: usize,
    /// All values identical; scores are pinned to zero.
    pub degenerate: bool,
}

impl Moments {
    pub fn of(xs: &[f64]) -> Self {
        Self {
            mean: mean(xs),
            std: population_std(xs),
            count: xs.len(),
            degenerate: all_equal(xs),
        }
    }

    pub fn score(&self, x: f64) -> f64 {
        if self.degenerate {
            0.0
        } else {
            (x - self.mean) / self.std
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub episode: Moments,
    /// Indexed by [`ToolKind::index`]; absent when the tool was never called.
    pub per_tool: [Option<Moments>; ToolKind::COUNT],
}

pub fn group_stats(group: &RolloutGroup, cfg: &RewardConfig) -> Result<GroupStats, AdvantageError> {
    let table = per_call_rewards(group, cfg)?;
    Ok(GroupStats {
        episode: Moments::of(&group.rewards()),
        per_tool: tool_moments(std::slice::from_ref(&table)),
    })
}

fn tool_moments(tables: &[Vec<CallReward>]) -> [Option<Moments>; ToolKind::COUNT] {
    ToolKind::ALL.map(|k| {
        let xs: Vec<f64> = tables
            .iter()
            .flatten()
            .filter(|r| r.tool == k)
            .map(|r| r.reward)
            .collect();
        (!xs.is_empty()).then(|| Moments::of(&xs))
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GrpoAdvantages {
    pub advantages: Vec<f64>,
    pub degenerate: bool,
}

pub fn grpo_advantages(group: &RolloutGroup) -> Result<GrpoAdvantages, AdvantageError> {
    if group.len() < 2 {
        return Err(AdvantageError::TooFewRollouts {
            question_id: group.question_id.clone(),
            n: group.len(),
        });
    }
    let rewards = group.rewards();
    let m = Moments::of(&rewards);
    Ok(GrpoAdvantages {
        advantages: rewards.iter().map(|&r| m.score(r)).collect(),
        degenerate: m.degenerate,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TagpoAdvantages {
    /// Per trajectory, its calls in step order.
    pub per_call: Vec<Vec<CallAdvantage>>,
    /// Mean of each trajectory's per-call advantages, zero without calls.
    pub trajectory: Vec<f64>,
}

fn tagpo_from_table(n: usize, table: &[CallReward], moments: &[Option<Moments>; ToolKind::COUNT]) -> TagpoAdvantages {
    let mut per_call = vec![Vec::new(); n];
    for row in table {
        let m = moments[row.tool.index()].expect("tool present in table has moments");
        per_call[row.trajectory].push(CallAdvantage {
            step: row.step,
            tool: row.tool,
            advantage: m.score(row.reward),
        });
    }
    let trajectory = per_call
        .iter()
        .map(|calls| {
            if calls.is_empty() {
                0.0
            } else {
                calls.iter().map(|c| c.advantage).sum::<f64>() / calls.len() as f64
            }
        })
        .collect();
    TagpoAdvantages { per_call, trajectory }
}

/// Per-call advantages standardized within the group's same-tool calls.
pub fn tagpo_advantages(group: &RolloutGroup, cfg: &RewardConfig) -> Result<TagpoAdvantages, AdvantageError> {
    let table = per_call_rewards(group, cfg)?;
    let moments = tool_moments(std::slice::from_ref(&table));
    Ok(tagpo_from_table(group.len(), &table, &moments))
}

/// TAGPO for a whole step, with statistics pooled per `scope`.
pub fn tagpo_batch(
    groups: &[RolloutGroup],
    cfg: &RewardConfig,
    scope: TagpoScope,
) -> Result<Vec<TagpoAdvantages>, AdvantageError> {
    let tables = groups
        .iter()
        .map(|g| per_call_rewards(g, cfg))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(match scope {
        TagpoScope::Group => groups
            .iter()
            .zip(&tables)
            .map(|(g, t)| tagpo_from_table(g.len(), t, &tool_moments(std::slice::from_ref(t))))
            .collect(),
        TagpoScope::Batch => {
            let pooled = tool_moments(&tables);
            groups
                .iter()
                .zip(&tables)
                .map(|(g, t)| tagpo_from_table(g.len(), t, &pooled))
                .collect()
        }
    })
}

/// `w_i = A_i^GRPO + A_i^TAGPO` for one group.
pub fn composite_weights(group: &RolloutGroup, cfg: &RewardConfig) -> Result<Vec<AdvantageBreakdown>, AdvantageError> {
    let grpo = grpo_advantages(group)?;
    let tagpo = tagpo_advantages(group, cfg)?;
    Ok(combine(grpo, tagpo))
}

fn combine(grpo: GrpoAdvantages, tagpo: TagpoAdvantages) -> Vec<AdvantageBreakdown> {
    grpo.advantages
        .into_iter()
        .zip(tagpo.per_call)
        .map(|(g, calls)| AdvantageBreakdown::new(g, calls))
        .collect()
}

/// Compute and attach advantage breakdowns to every trajectory of every group.
pub fn compute_advantages(
    groups: &mut [RolloutGroup],
    cfg: &RewardConfig,
    scope: TagpoScope,
) -> Result<(), AdvantageError> {
    let tagpo = tagpo_batch(groups, cfg, scope)?;
    for (group, tagpo) in groups.iter_mut().zip(tagpo) {
        let breakdowns = combine(grpo_advantages(group)?, tagpo);
        for (t, adv) in group.trajectories.iter_mut().zip(breakdowns) {
            t.advantage = Some(adv);
        }
    }
    Ok(())
}

/// Whether a group carries any episode-level reward signal.
pub fn is_informative(group: &RolloutGroup) -> bool {
    !all_equal(&group.rewards())
}

/// Keep only groups whose episode rewards are not all identical.
pub fn rollout_filter(groups: Vec<RolloutGroup>) -> Vec<RolloutGroup> {
    groups.into_iter().filter(is_informative).collect()
}
