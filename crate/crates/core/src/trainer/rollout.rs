//! The multi-turn episode loop and per-question rollout groups.

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::policy::{Actor, PolicyState};
use super::TrainerConfig;
use crate::rewards::episode_reward;
use crate::sandbox::{judge_answer, SandboxItem};
use crate::toolkit::ToolSession;
use crate::toolparse::{corrupt, parse_with_repair, serialize, Corruption, ParseOutcome};
use crate::trajectory::{ActionHead, AgentAction, RolloutGroup, ToolArgs, Trajectory, Turn};
use crate::util::rng_for;

fn action_for(
    head: ActionHead,
    item: &SandboxItem,
    visible: bool,
    cfg: &TrainerConfig,
    rng: &mut ChaCha8Rng,
) -> AgentAction {
    match head {
        ActionHead::Answer => {
            let choice = if visible {
                item.correct_choice()
            } else {
                match cfg.judge {
                    crate::sandbox::JudgeMode::Guess => rng.random_range(0..item.question.choices),
                    crate::sandbox::JudgeMode::Deterministic => 0,
                }
            };
            AgentAction::Answer { choice }
        }
        ActionHead::Browse => AgentAction::Invoke(ToolArgs::Browse),
        ActionHead::Segment => AgentAction::Invoke(ToolArgs::SegmentRetrieve {
            query: item.question.query.clone(),
        }),
        ActionHead::Frame => AgentAction::Invoke(ToolArgs::FramePick),
        ActionHead::Zoom => AgentAction::Invoke(ToolArgs::ZoomIn),
    }
}

/// Serialize an action and, with probability `rate`, damage the string.
fn emit(action: &AgentAction, rate: f64, rng: &mut ChaCha8Rng) -> String {
    let s = serialize(action);
    if rate > 0.0 && rng.random_bool(rate) {
        let options: Vec<Corruption> = Corruption::ALL.into_iter().filter(|c| c.applies_to(action)).collect();
        let kind = *options.choose(rng).expect("fence always applies");
        return corrupt(&s, kind, rng);
    }
    s
}

/// Play one episode: observe, pick a head, emit and parse the action string,
/// then run the tool or judge the answer. Stops at an answer or the turn cap.
pub fn run_episode(
    actor: &dyn Actor,
    item: &SandboxItem,
    cfg: &TrainerConfig,
    id: String,
    rng: &mut ChaCha8Rng,
) -> Trajectory {
    let mut t = Trajectory::new(id, item.question.id.clone());
    let mut session = ToolSession::new(item, &cfg.budget);
    for turn in 0..cfg.max_turns {
        let mut snapshot = session.obs.clone();
        snapshot.turn = turn;
        let state = PolicyState {
            cue: item.question.cue,
            granularity: snapshot.granularity,
            visible: snapshot.evidence_visible,
            turn,
        };
        let head = actor.decide(item, &state, rng);
        let intended = action_for(head, item, snapshot.evidence_visible, cfg, rng);
        let raw = emit(&intended, cfg.corruption_rate, rng);
        let outcome = parse_with_repair(&raw);
        let format = outcome.format_status();
        let strict = matches!(outcome, ParseOutcome::Parsed(_));
        let action = outcome.into_action();
        let observation = match &action {
            None => "error: action string could not be parsed".to_string(),
            Some(AgentAction::Invoke(args)) => session.invoke(args, strict),
            Some(AgentAction::Answer { choice }) => {
                let correct = judge_answer(item, *choice, &session.obs, cfg.judge, rng).unwrap_or(false);
                t.final_answer = Some(*choice);
                t.correct = correct;
                format!("answered {choice}")
            }
        };
        let answered = matches!(action, Some(AgentAction::Answer { .. }));
        t.turns.push(Turn {
            state: snapshot,
            decision: Some(head),
            raw,
            format,
            action,
            observation,
        });
        if answered {
            break;
        }
    }
    t.truncated = t.final_answer.is_none();
    t.tool_calls = session.calls;
    t.rewards = Some(episode_reward(&t, &cfg.reward).expect("episode is finalized"));
    t
}

/// `cfg.rollouts` independent episodes of one question. Episode `r` draws
/// from the stream `(seed, r)`.
pub fn rollout_group(actor: &dyn Actor, item: &SandboxItem, cfg: &TrainerConfig, seed: u64) -> RolloutGroup {
    let trajectories = (0..cfg.rollouts)
        .map(|r| {
            let mut rng = rng_for(seed, &[r as u64]);
            run_episode(actor, item, cfg, format!("{}#{r}", item.question.id), &mut rng)
        })
        .collect();
    RolloutGroup {
        question_id: item.question.id.clone(),
        trajectories,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::advantage::rollout_filter;
    use crate::sandbox::{generate_video_with, EvidenceGranularity, JudgeMode, SandboxConfig};
    use crate::trainer::policy::{OptimalActor, PolicyTable, ScriptedActor};

    fn item(g: EvidenceGranularity, seed: u64) -> SandboxItem {
        generate_video_with(seed, &SandboxConfig::default(), g, format!("q{seed}")).unwrap()
    }

    fn det() -> TrainerConfig {
        TrainerConfig {
            judge: JudgeMode::Deterministic,
            corruption_rate: 0.0,
            ..TrainerConfig::default()
        }
    }

    #[test]
    fn browse_then_answer_on_global() {
        let it = item(EvidenceGranularity::Global, 1);
        let actor = ScriptedActor(vec![ActionHead::Browse, ActionHead::Answer]);
        let t = run_episode(&actor, &it, &det(), "e".into(), &mut rng_for(0, &[]));
        assert!(t.correct);
        assert_eq!((t.call_count(), t.turns.len()), (1, 2));
        assert_eq!(t.rewards.unwrap().total, 2.5);
    }

    #[test]
    fn immediate_answer_on_local_fails() {
        for g in [
            EvidenceGranularity::Segment,
            EvidenceGranularity::Frame,
            EvidenceGranularity::Region,
        ] {
            let it = item(g, 2);
            let actor = ScriptedActor(vec![ActionHead::Answer]);
            let t = run_episode(&actor, &it, &det(), "e".into(), &mut rng_for(0, &[]));
            assert!(!t.correct);
            assert_eq!(t.rewards.unwrap().total, 1.0);
        }
    }

    #[test]
    fn turn_cap_truncates() {
        let it = item(EvidenceGranularity::Region, 3);
        let actor = ScriptedActor(vec![ActionHead::Browse; 8]);
        let t = run_episode(&actor, &it, &det(), "e".into(), &mut rng_for(0, &[]));
        assert!(t.truncated);
        assert_eq!((t.turns.len(), t.call_count()), (4, 4));
        assert_eq!(t.rewards.unwrap().acc, 0);
    }

    #[test]
    fn optimal_actor_always_correct() {
        for seed in 0..40 {
            let g = EvidenceGranularity::ALL[seed as usize % 4];
            let it = item(g, seed);
            let t = run_episode(&OptimalActor, &it, &det(), "e".into(), &mut rng_for(seed, &[]));
            assert!(t.correct, "seed {seed} {g:?}");
            assert_eq!(t.post_visibility_calls(), 0);
        }
    }

    #[test]
    fn groups_are_deterministic() {
        let it = item(EvidenceGranularity::Frame, 4);
        let cfg = TrainerConfig::default();
        let p = PolicyTable::zeros(cfg.max_turns);
        let a = rollout_group(&p, &it, &cfg, 99);
        let b = rollout_group(&p, &it, &cfg, 99);
        assert_eq!(a, b);
        assert_eq!(a.len(), 8);
        assert!(a.trajectories.iter().all(|t| t.question_id == "q4"));
        let c = rollout_group(&p, &it, &cfg, 100);
        assert_ne!(a, c);
    }

    #[test]
    fn always_answer_group_is_filtered() {
        let it = item(EvidenceGranularity::Segment, 5);
        let g = rollout_group(&ScriptedActor(vec![]), &it, &det(), 1);
        assert!(g.rewards().iter().all(|&r| r == 1.0));
        assert!(rollout_filter(vec![g]).is_empty());
    }

    #[test]
    fn corruption_noise_reaches_format_status() {
        let it = item(EvidenceGranularity::Global, 6);
        let cfg = TrainerConfig {
            corruption_rate: 1.0,
            ..det()
        };
        let actor = ScriptedActor(vec![ActionHead::Browse, ActionHead::Browse, ActionHead::Browse]);
        let mut any_repaired = false;
        for s in 0..20 {
            let t = run_episode(&actor, &it, &cfg, "e".into(), &mut rng_for(s, &[]));
            assert!(t.turns.iter().all(|turn| !turn.format.is_strict()));
            any_repaired |= t
                .turns
                .iter()
                .any(|turn| matches!(turn.format, crate::trajectory::FormatStatus::Repaired { .. }));
        }
        assert!(any_repaired);
    }
}
