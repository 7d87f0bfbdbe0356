//! Episode reward and discounted per-call tool rewards.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trajectory::{RewardBreakdown, RolloutGroup, ToolKind, Trajectory};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardConfig {
    /// Flat bonus added once per correct episode that used at least one tool.
    pub tool_bonus: f64,
    /// Decay applied per step of distance from the final call.
    pub gamma: f64,
    /// Whether repaired action strings still earn the format reward.
    pub accept_repaired_format: bool,
    pub acc_weight: f64,
    pub fmt_weight: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            tool_bonus: 0.5,
            gamma: 0.9,
            accept_repaired_format: true,
            acc_weight: 1.0,
            fmt_weight: 1.0,
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum RewardError {
    #[error("invalid reward config: {0}")]
    InvalidConfig(String),
    #[error("trajectory {0} is not finalized")]
    NotFinalized(String),
    #[error("trajectory {0} has no episode reward")]
    MissingReward(String),
}

impl RewardConfig {
    pub fn validate(&self) -> Result<(), RewardError> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(RewardError::InvalidConfig(format!(
                "gamma must lie in (0, 1], got {}",
                self.gamma
            )));
        }
        if !self.tool_bonus.is_finite() || self.tool_bonus < 0.0 {
            return Err(RewardError::InvalidConfig(format!(
                "tool_bonus must be a non-negative number, got {}",
                self.tool_bonus
            )));
        }
        for (name, w) in [("acc_weight", self.acc_weight), ("fmt_weight", self.fmt_weight)] {
            if !w.is_finite() || w < 0.0 {
                return Err(RewardError::InvalidConfig(format!(
                    "{name} must be non-negative, got {w}"
                )));
            }
        }
        Ok(())
    }
}

/// Score a finalized trajectory. Correctness comes from `t.correct`, which the
/// rollout loop sets from the sandbox judgment.
pub fn episode_reward(t: &Trajectory, cfg: &RewardConfig) -> Result<RewardBreakdown, RewardError> {
    if !t.is_finalized() {
        return Err(RewardError::NotFinalized(t.id.clone()));
    }
    let acc = u8::from(t.correct && t.final_answer.is_some());
    let fmt = u8::from(
        !t.turns.is_empty()
            && t.turns
                .iter()
                .all(|turn| turn.format.is_acceptable(cfg.accept_repaired_format)),
    );
    let tool_bonus = if acc > 0 && t.call_count() >= 1 {
        cfg.tool_bonus
    } else {
        0.0
    };
    let total = cfg.acc_weight * f64::from(acc) + cfg.fmt_weight * f64::from(fmt) + tool_bonus;
    Ok(RewardBreakdown {
        acc,
        fmt,
        tool_bonus,
        total,
    })
}

/// One row of the per-call reward table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallReward {
    /// Position of the trajectory within its group.
    pub trajectory: usize,
    pub trajectory_id: String,
    pub step: usize,
    pub tool: ToolKind,
    pub reward: f64,
}

/// `[acc > 0] * gamma^(L - j) * R` for every call of every trajectory, in
/// trajectory then step order.
pub fn per_call_rewards(group: &RolloutGroup, cfg: &RewardConfig) -> Result<Vec<CallReward>, RewardError> {
    let mut rows = Vec::new();
    for (i, t) in group.trajectories.iter().enumerate() {
        let r = t.rewards.ok_or_else(|| RewardError::MissingReward(t.id.clone()))?;
        let len = t.call_count();
        for call in &t.tool_calls {
            let reward = if r.acc > 0 {
                cfg.gamma.powi((len - call.step) as i32) * r.total
            } else {
                0.0
            };
            rows.push(CallReward {
                trajectory: i,
                trajectory_id: t.id.clone(),
                step: call.step,
                tool: call.tool,
                reward,
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::sandbox::ObservationState;
    use crate::trajectory::{AgentAction, FormatStatus, ToolArgs, ToolCall, Turn};

    /// A finalized trajectory with the given call kinds, correctness, and
    /// format status on every turn.
    pub(crate) fn scripted(id: &str, tools: &[ToolKind], correct: bool, format: FormatStatus) -> Trajectory {
        let mut t = Trajectory::new(id, "q");
        for (j, &tool) in tools.iter().enumerate() {
            let args = match tool {
                ToolKind::Browse => ToolArgs::Browse,
                ToolKind::SegmentRetrieve => ToolArgs::SegmentRetrieve { query: vec![1.0, 0.0] },
                ToolKind::FramePick => ToolArgs::FramePick,
                ToolKind::ZoomIn => ToolArgs::ZoomIn,
            };
            t.turns.push(Turn {
                state: ObservationState::initial(),
                decision: None,
                raw: String::new(),
                format: format.clone(),
                action: Some(AgentAction::Invoke(args.clone())),
                observation: String::new(),
            });
            t.tool_calls.push(ToolCall {
                tool,
                step: j + 1,
                args,
                parse_valid: true,
                precondition_valid: true,
                observation_id: format!("obs-{}", j + 1),
                evidence_visible_before: false,
            });
        }
        t.turns.push(Turn {
            state: ObservationState::initial(),
            decision: None,
            raw: String::new(),
            format,
            action: Some(AgentAction::Answer { choice: 0 }),
            observation: String::new(),
        });
        t.final_answer = Some(0);
        t.correct = correct;
        t
    }

    fn with_reward(mut t: Trajectory, total: f64, acc: u8) -> Trajectory {
        t.rewards = Some(RewardBreakdown {
            acc,
            fmt: 1,
            tool_bonus: 0.0,
            total,
        });
        t
    }

    use ToolKind::{FramePick as B, SegmentRetrieve as A};

    #[test]
    fn episode_reward_examples() {
        let cfg = RewardConfig::default();
        let r = episode_reward(&scripted("a", &[A, B], true, FormatStatus::Strict), &cfg).unwrap();
        assert_eq!((r.acc, r.fmt, r.tool_bonus, r.total), (1, 1, 0.5, 2.5));
        let r = episode_reward(&scripted("b", &[A, B, A], false, FormatStatus::Strict), &cfg).unwrap();
        assert_eq!((r.acc, r.tool_bonus, r.total), (0, 0.0, 1.0));
        let r = episode_reward(&scripted("c", &[], true, FormatStatus::Strict), &cfg).unwrap();
        assert_eq!((r.tool_bonus, r.total), (0.0, 2.0));
    }

    #[test]
    fn format_switch() {
        let repaired = FormatStatus::Repaired { passes: vec![] };
        let t = scripted("a", &[A], true, repaired);
        assert_eq!(episode_reward(&t, &RewardConfig::default()).unwrap().fmt, 1);
        let strict_only = RewardConfig {
            accept_repaired_format: false,
            ..RewardConfig::default()
        };
        let r = episode_reward(&t, &strict_only).unwrap();
        assert_eq!((r.fmt, r.total), (0, 1.5));
        let failed = scripted("f", &[A], true, FormatStatus::Failed { reason: "x".into() });
        assert_eq!(episode_reward(&failed, &RewardConfig::default()).unwrap().fmt, 0);
    }

    #[test]
    fn truncated_trajectory_has_no_accuracy() {
        let mut t = scripted("t", &[A, A, A, A], true, FormatStatus::Strict);
        t.turns.pop();
        t.final_answer = None;
        t.truncated = true;
        let r = episode_reward(&t, &RewardConfig::default()).unwrap();
        assert_eq!((r.acc, r.fmt, r.total), (0, 1, 1.0));
    }

    #[test]
    fn unfinalized_is_rejected() {
        let t = Trajectory::new("x", "q");
        assert_eq!(
            episode_reward(&t, &RewardConfig::default()),
            Err(RewardError::NotFinalized("x".into()))
        );
    }

    #[test]
    fn per_call_decay_examples() {
        let cfg = RewardConfig {
            gamma: 0.5,
            ..RewardConfig::default()
        };
        let group = RolloutGroup {
            question_id: "q".into(),
            trajectories: vec![
                with_reward(scripted("t1", &[A, A, B], true, FormatStatus::Strict), 2.0, 1),
                with_reward(scripted("t2", &[A, B], false, FormatStatus::Strict), 1.0, 0),
                with_reward(scripted("t3", &[B], true, FormatStatus::Strict), 2.0, 1),
            ],
        };
        let rows = per_call_rewards(&group, &cfg).unwrap();
        let rewards: Vec<f64> = rows.iter().map(|r| r.reward).collect();
        assert_eq!(rewards, vec![0.5, 1.0, 2.0, 0.0, 0.0, 2.0]);
        assert_eq!(rows.len(), 6);
        assert_eq!(rows[3].trajectory_id, "t2");
    }

    #[test]
    fn invalid_configs() {
        for cfg in [
            RewardConfig {
                gamma: 0.0,
                ..RewardConfig::default()
            },
            RewardConfig {
                gamma: 1.5,
                ..RewardConfig::default()
            },
            RewardConfig {
                tool_bonus: -1.0,
                ..RewardConfig::default()
            },
            RewardConfig {
                acc_weight: f64::NAN,
                ..RewardConfig::default()
            },
        ] {
            assert!(cfg.validate().is_err());
        }
        assert!(RewardConfig {
            gamma: 1.0,
            ..RewardConfig::default()
        }
        .validate()
        .is_ok());
    }
}
