//! Rollouts, the advantage-weighted policy update and the training loop.

pub mod metrics;
pub mod policy;
pub mod rollout;

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::advantage::{compute_advantages, is_informative, AdvantageError, Algorithm, TagpoScope};
use crate::rewards::{RewardConfig, RewardError};
use crate::sandbox::{IntentCue, JudgeMode, SandboxItem};
use crate::toolkit::BudgetConfig;
use crate::trajectory::{ActionHead, RolloutGroup, Trajectory};
use crate::util::{derive_seed, rng_for};

pub use metrics::{EpisodeStats, StepMetrics};
pub use policy::{Actor, Greedy, OptimalActor, PolicyState, PolicyTable, ScriptedActor};
pub use rollout::{rollout_group, run_episode};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainerConfig {
    pub max_turns: usize,
    /// Rollouts per question.
    pub rollouts: usize,
    pub lr: f64,
    pub steps: usize,
    /// Questions per step.
    pub batch: usize,
    pub seed: u64,
    pub judge: JudgeMode,
    /// Probability that an emitted action string is corrupted.
    pub corruption_rate: f64,
    pub algorithm: Algorithm,
    pub tagpo_scope: TagpoScope,
    pub reward: RewardConfig,
    pub budget: BudgetConfig,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            max_turns: 4,
            rollouts: 8,
            lr: 0.1,
            steps: 200,
            batch: 32,
            seed: 0,
            judge: JudgeMode::Guess,
            corruption_rate: 0.02,
            algorithm: Algorithm::Composite,
            tagpo_scope: TagpoScope::Group,
            reward: RewardConfig::default(),
            budget: BudgetConfig::default(),
        }
    }
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid trainer config: {0}")]
    InvalidConfig(String),
    #[error("question corpus is empty")]
    EmptyCorpus,
    #[error(transparent)]
    Reward(#[from] RewardError),
    #[error(transparent)]
    Advantage(#[from] AdvantageError),
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::InvalidConfig(m));
        if self.max_turns < 1 {
            return bad("max_turns must be at least 1".into());
        }
        if self.rollouts < 2 {
            return bad(format!("rollouts must be at least 2, got {}", self.rollouts));
        }
        if !self.lr.is_finite() || self.lr <= 0.0 {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        if self.batch < 1 {
            return bad("batch must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.corruption_rate) {
            return bad(format!(
                "corruption_rate must lie in [0, 1], got {}",
                self.corruption_rate
            ));
        }
        self.reward.validate()?;
        Ok(())
    }
}

/// A rollout group together with the cue its question shows the policy.
#[derive(Debug, Clone, PartialEq)]
pub struct CuedGroup {
    pub cue: IntentCue,
    pub group: RolloutGroup,
}

/// The (state, head) decisions taken in a trajectory.
pub fn decisions(t: &Trajectory, cue: IntentCue) -> impl Iterator<Item = (PolicyState, ActionHead)> + '_ {
    t.turns.iter().filter_map(move |turn| {
        turn.decision.map(|head| {
            (
                PolicyState {
                    cue,
                    granularity: turn.state.granularity,
                    visible: turn.state.evidence_visible,
                    turn: turn.state.turn,
                },
                head,
            )
        })
    })
}

fn weight(t: &Trajectory, algorithm: Algorithm) -> f64 {
    t.advantage.as_ref().map_or(0.0, |a| algorithm.weight(a))
}

/// Gradient of `sum_i w_i sum_t log pi(a_t | s_t)` with respect to every
/// preference, evaluated at the current table.
pub fn policy_gradient(
    policy: &PolicyTable,
    batch: &[CuedGroup],
    algorithm: Algorithm,
) -> Vec<[f64; ActionHead::COUNT]> {
    let mut grad = vec![[0.0; ActionHead::COUNT]; policy.theta.len()];
    for cg in batch {
        for t in &cg.group.trajectories {
            let w = weight(t, algorithm);
            if w == 0.0 {
                continue;
            }
            for (state, head) in decisions(t, cg.cue) {
                let p = policy.probs(&state);
                let g = &mut grad[state.index(policy.max_turns)];
                for b in 0..ActionHead::COUNT {
                    g[b] += w * (f64::from(u8::from(b == head.index())) - p[b]);
                }
            }
        }
    }
    grad
}

/// The advantage-weighted log-likelihood whose gradient the update follows.
pub fn objective(policy: &PolicyTable, batch: &[CuedGroup], algorithm: Algorithm) -> f64 {
    let mut total = 0.0;
    for cg in batch {
        for t in &cg.group.trajectories {
            let w = weight(t, algorithm);
            for (state, head) in decisions(t, cg.cue) {
                total += w * policy.probs(&state)[head.index()].ln();
            }
        }
    }
    total
}

/// One synchronous update: accumulate over the batch, then apply.
pub fn policy_update(policy: &mut PolicyTable, batch: &[CuedGroup], algorithm: Algorithm, lr: f64) {
    let grad = policy_gradient(policy, batch, algorithm);
    for (row, g) in policy.theta.iter_mut().zip(grad) {
        for (x, d) in row.iter_mut().zip(g) {
            *x += lr * d;
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub metrics: Vec<StepMetrics>,
    pub policy: PolicyTable,
}

/// Questions used at `step`: a seeded sample without replacement.
pub fn step_batch(cfg: &TrainerConfig, corpus_len: usize, step: usize) -> Vec<usize> {
    let mut rng = rng_for(cfg.seed, &[1, step as u64]);
    index::sample(&mut rng, corpus_len, cfg.batch.min(corpus_len)).into_vec()
}

/// Train a zero-initialized policy on `corpus`.
pub fn train(cfg: &TrainerConfig, corpus: &[SandboxItem]) -> Result<TrainOutcome, TrainError> {
    train_from(cfg, corpus, PolicyTable::zeros(cfg.max_turns), |_| {})
}

/// Train starting from `policy`, calling `on_step` after every step.
pub fn train_from(
    cfg: &TrainerConfig,
    corpus: &[SandboxItem],
    mut policy: PolicyTable,
    mut on_step: impl FnMut(&StepMetrics),
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    if corpus.is_empty() {
        return Err(TrainError::EmptyCorpus);
    }
    let mut log = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let items: Vec<&SandboxItem> = step_batch(cfg, corpus.len(), step)
            .into_iter()
            .map(|i| &corpus[i])
            .collect();
        let mut groups: Vec<RolloutGroup> = items
            .par_iter()
            .enumerate()
            .map(|(slot, item)| {
                rollout_group(
                    &policy,
                    item,
                    cfg,
                    derive_seed(cfg.seed, &[2, step as u64, slot as u64]),
                )
            })
            .collect();
        compute_advantages(&mut groups, &cfg.reward, cfg.tagpo_scope)?;
        let batch: Vec<CuedGroup> = items
            .iter()
            .zip(&groups)
            .filter(|(_, g)| is_informative(g))
            .map(|(item, g)| CuedGroup {
                cue: item.question.cue,
                group: g.clone(),
            })
            .collect();
        let m = StepMetrics::from_groups(step, &items, &groups, batch.len());
        on_step(&m);
        log.push(m);
        policy_update(&mut policy, &batch, cfg.algorithm, cfg.lr);
    }
    Ok(TrainOutcome { metrics: log, policy })
}

/// Play `episodes_per_item` episodes of every question and aggregate.
pub fn evaluate(
    actor: &dyn Actor,
    corpus: &[SandboxItem],
    cfg: &TrainerConfig,
    seed: u64,
    episodes_per_item: usize,
) -> EpisodeStats {
    let runs: Vec<(usize, Trajectory)> = (0..corpus.len())
        .into_par_iter()
        .flat_map_iter(|i| {
            (0..episodes_per_item).map(move |e| {
                let mut rng = rng_for(seed, &[3, i as u64, e as u64]);
                let id = format!("{}#eval{e}", corpus[i].question.id);
                (i, run_episode(actor, &corpus[i], cfg, id, &mut rng))
            })
        })
        .collect();
    EpisodeStats::collect(runs.iter().map(|(i, t)| (&corpus[*i], t)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sandbox::ObservationState;
    use crate::sandbox::{generate_corpus, SandboxConfig};
    use crate::trajectory::{AdvantageBreakdown, Turn};

    fn one_decision(state: PolicyState, head: ActionHead, w: f64) -> CuedGroup {
        let mut t = Trajectory::new("t", "q");
        let mut obs = ObservationState::initial();
        obs.granularity = state.granularity;
        obs.evidence_visible = state.visible;
        obs.turn = state.turn;
        t.turns.push(Turn {
            state: obs,
            decision: Some(head),
            raw: String::new(),
            format: crate::trajectory::FormatStatus::Strict,
            action: None,
            observation: String::new(),
        });
        t.advantage = Some(AdvantageBreakdown::new(w, vec![]));
        CuedGroup {
            cue: state.cue,
            group: RolloutGroup {
                question_id: "q".into(),
                trajectories: vec![t],
            },
        }
    }

    #[test]
    fn single_step_update_by_hand() {
        let state = PolicyState::from_index(9, 4);
        let mut p = PolicyTable::zeros(4);
        policy_update(
            &mut p,
            &[one_decision(state, ActionHead::Frame, 1.0)],
            Algorithm::Grpo,
            0.1,
        );
        let row = p.theta[9];
        for h in ActionHead::ALL {
            let expected = if h == ActionHead::Frame { 0.08 } else { -0.02 };
            assert!((row[h.index()] - expected).abs() < 1e-15, "{h:?} {}", row[h.index()]);
        }
        assert!((p.probs(&state).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p.theta.iter().enumerate().all(|(i, r)| i == 9 || *r == [0.0; 5]));
    }

    #[test]
    fn zero_weights_leave_policy_unchanged() {
        let state = PolicyState::from_index(3, 4);
        let mut p = PolicyTable::zeros(4);
        p.theta[3] = [0.3, -0.1, 0.0, 0.2, 0.5];
        let before = p.clone();
        policy_update(
            &mut p,
            &[one_decision(state, ActionHead::Answer, 0.0)],
            Algorithm::Composite,
            0.1,
        );
        assert_eq!(p, before);
    }

    #[test]
    fn training_is_deterministic() {
        let corpus = generate_corpus(5, &SandboxConfig::default(), 24).unwrap();
        let cfg = TrainerConfig {
            steps: 4,
            batch: 8,
            seed: 11,
            ..TrainerConfig::default()
        };
        let a = train(&cfg, &corpus).unwrap();
        let b = train(&cfg, &corpus).unwrap();
        assert_eq!(a.metrics, b.metrics);
        assert_eq!(a.policy, b.policy);
        assert_eq!(a.metrics.len(), 4);
    }

    #[test]
    fn invalid_configs_rejected() {
        let corpus = generate_corpus(5, &SandboxConfig::default(), 4).unwrap();
        for cfg in [
            TrainerConfig {
                rollouts: 1,
                ..TrainerConfig::default()
            },
            TrainerConfig {
                max_turns: 0,
                ..TrainerConfig::default()
            },
            TrainerConfig {
                lr: 0.0,
                ..TrainerConfig::default()
            },
        ] {
            assert!(matches!(train(&cfg, &corpus), Err(TrainError::InvalidConfig(_))));
        }
        assert!(matches!(
            train(&TrainerConfig::default(), &[]),
            Err(TrainError::EmptyCorpus)
        ));
    }
}
