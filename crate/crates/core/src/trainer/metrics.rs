//! Per-step training metrics and evaluation reports.

use serde::{Deserialize, Serialize};

use crate::sandbox::{EvidenceGranularity, IntentCue, SandboxItem};
use crate::toolparse::format_quality;
use crate::trajectory::{ActionHead, RolloutGroup, ToolKind, Trajectory};

/// First-action distribution for one intent cue, indexed by [`ActionHead::index`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Routing {
    pub episodes: usize,
    pub counts: [usize; ActionHead::COUNT],
}

impl Routing {
    pub fn add(&mut self, first: Option<ActionHead>) {
        if let Some(h) = first {
            self.episodes += 1;
            self.counts[h.index()] += 1;
        }
    }

    pub fn fraction(&self, head: ActionHead) -> f64 {
        if self.episodes == 0 {
            0.0
        } else {
            self.counts[head.index()] as f64 / self.episodes as f64
        }
    }
}

/// Aggregate statistics over a set of finished episodes.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EpisodeStats {
    pub episodes: usize,
    pub mean_reward: f64,
    pub accuracy: f64,
    pub format_quality: f64,
    /// Tool calls in correct episodes over all tool calls; zero without calls.
    pub valid_tool_reward: f64,
    pub mean_tool_calls: f64,
    pub tool_counts: [usize; ToolKind::COUNT],
    /// Mean tool calls per correct episode on frame-granularity questions.
    pub frame_calls_per_success: f64,
    pub frame_successes: usize,
    pub routing_global: Routing,
    pub routing_local: Routing,
}

impl EpisodeStats {
    /// `episodes` pairs each trajectory with the item it was played on.
    pub fn collect<'a>(episodes: impl IntoIterator<Item = (&'a SandboxItem, &'a Trajectory)>) -> Self {
        let mut s = EpisodeStats::default();
        let mut all = Vec::new();
        let (mut reward, mut correct, mut calls, mut valid_calls) = (0.0, 0usize, 0usize, 0usize);
        let mut frame_calls = 0usize;
        for (item, t) in episodes {
            s.episodes += 1;
            reward += t.episode_reward().unwrap_or(0.0);
            correct += usize::from(t.correct);
            calls += t.call_count();
            if t.correct {
                valid_calls += t.call_count();
            }
            for k in t.tools() {
                s.tool_counts[k.index()] += 1;
            }
            if t.correct && item.granularity() == EvidenceGranularity::Frame {
                s.frame_successes += 1;
                frame_calls += t.call_count();
            }
            let first = t.turns.first().and_then(|turn| turn.decision);
            match item.question.cue {
                IntentCue::Global => s.routing_global.add(first),
                IntentCue::Local => s.routing_local.add(first),
            }
            all.push(t);
        }
        if s.episodes == 0 {
            return s;
        }
        let n = s.episodes as f64;
        s.mean_reward = reward / n;
        s.accuracy = correct as f64 / n;
        s.mean_tool_calls = calls as f64 / n;
        s.valid_tool_reward = if calls == 0 {
            0.0
        } else {
            valid_calls as f64 / calls as f64
        };
        if s.frame_successes > 0 {
            s.frame_calls_per_success = frame_calls as f64 / s.frame_successes as f64;
        }
        let owned: Vec<Trajectory> = all.into_iter().cloned().collect();
        s.format_quality = format_quality(&owned).unwrap_or(0.0);
        s
    }
}

/// One row of the training log.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub step: usize,
    pub stats: EpisodeStats,
    pub groups: usize,
    pub retained_groups: usize,
    pub mean_abs_grpo: f64,
    pub mean_abs_tagpo: f64,
}

impl StepMetrics {
    pub fn from_groups(step: usize, items: &[&SandboxItem], groups: &[RolloutGroup], retained: usize) -> Self {
        let stats = EpisodeStats::collect(
            items
                .iter()
                .zip(groups)
                .flat_map(|(item, g)| g.trajectories.iter().map(move |t| (*item, t))),
        );
        let advs: Vec<_> = groups
            .iter()
            .flat_map(|g| &g.trajectories)
            .filter_map(|t| t.advantage.as_ref())
            .collect();
        let n = advs.len().max(1) as f64;
        StepMetrics {
            step,
            stats,
            groups: groups.len(),
            retained_groups: retained,
            mean_abs_grpo: advs.iter().map(|a| a.grpo.abs()).sum::<f64>() / n,
            mean_abs_tagpo: advs.iter().map(|a| a.tagpo.abs()).sum::<f64>() / n,
        }
    }
}

pub const ROUTING_COLUMNS: usize = 2 * ActionHead::COUNT;

/// Column names of the metrics table, in order.
pub fn metrics_header() -> Vec<String> {
    let mut h: Vec<String> = [
        "step",
        "episodes",
        "mean_reward",
        "accuracy",
        "format_quality",
        "valid_tool_reward",
        "mean_tool_calls",
    ]
    .map(String::from)
    .to_vec();
    h.extend(ToolKind::ALL.iter().map(|k| format!("calls_{}", k.wire_name())));
    h.extend(
        [
            "frame_calls_per_success",
            "frame_successes",
            "groups",
            "retained_groups",
            "mean_abs_grpo",
            "mean_abs_tagpo",
        ]
        .map(String::from),
    );
    for cue in [IntentCue::Global, IntentCue::Local] {
        h.extend(
            ActionHead::ALL
                .iter()
                .map(|a| format!("route_{}_{}", cue.name(), a.name())),
        );
    }
    h
}

pub fn metrics_row(m: &StepMetrics) -> Vec<String> {
    let s = &m.stats;
    let mut r = vec![
        m.step.to_string(),
        s.episodes.to_string(),
        s.mean_reward.to_string(),
        s.accuracy.to_string(),
        s.format_quality.to_string(),
        s.valid_tool_reward.to_string(),
        s.mean_tool_calls.to_string(),
    ];
    r.extend(s.tool_counts.iter().map(|c| c.to_string()));
    r.extend([
        s.frame_calls_per_success.to_string(),
        s.frame_successes.to_string(),
        m.groups.to_string(),
        m.retained_groups.to_string(),
        m.mean_abs_grpo.to_string(),
        m.mean_abs_tagpo.to_string(),
    ]);
    for routing in [&s.routing_global, &s.routing_local] {
        r.extend(ActionHead::ALL.iter().map(|&a| routing.fraction(a).to_string()));
    }
    r
}

/// Write the metrics table as CSV.
pub fn write_metrics<W: std::io::Write>(out: W, rows: &[StepMetrics]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(metrics_header())?;
    for m in rows {
        w.write_record(metrics_row(m))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sandbox::{generate_video_with, SandboxConfig};
    use crate::trainer::policy::{OptimalActor, ScriptedActor};
    use crate::trainer::rollout::run_episode;
    use crate::trainer::TrainerConfig;
    use crate::util::rng_for;

    #[test]
    fn header_and_row_align() {
        assert_eq!(metrics_header().len(), metrics_row(&StepMetrics::default()).len());
    }

    #[test]
    fn valid_tool_reward_counts_calls() {
        let cfg = TrainerConfig {
            judge: crate::sandbox::JudgeMode::Deterministic,
            corruption_rate: 0.0,
            ..TrainerConfig::default()
        };
        let sc = SandboxConfig::default();
        let frame = generate_video_with(1, &sc, EvidenceGranularity::Frame, "f".into()).unwrap();
        let global = generate_video_with(2, &sc, EvidenceGranularity::Global, "g".into()).unwrap();
        let good = run_episode(&OptimalActor, &frame, &cfg, "a".into(), &mut rng_for(0, &[]));
        // three calls then a wrong answer: chain on a global question never browses
        let bad_actor = ScriptedActor(vec![ActionHead::Segment, ActionHead::Frame, ActionHead::Zoom]);
        let bad = run_episode(&bad_actor, &global, &cfg, "b".into(), &mut rng_for(0, &[]));
        assert!(good.correct && !bad.correct);
        let s = EpisodeStats::collect([(&frame, &good), (&global, &bad)]);
        assert_eq!(s.valid_tool_reward, 2.0 / 5.0);
        assert_eq!(s.accuracy, 0.5);
        assert_eq!(s.frame_calls_per_success, 2.0);
        assert_eq!(s.routing_global.fraction(ActionHead::Segment), 1.0);
        assert_eq!(s.routing_local.fraction(ActionHead::Segment), 1.0);
        assert_eq!(s.format_quality, 1.0);
    }
}
