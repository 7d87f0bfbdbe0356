//! Executable semantics of the hierarchical toolkit: browse, segment
//! retrieval, frame pick and zoom-in, with chain-order checks and a visual
//! token budget.
//!
//! Tool failures are soft: the call is recorded with `precondition_valid =
//! false`, an error observation is produced, and the episode goes on.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sandbox::{reveal_rule, Granularity, ObservationState, SandboxItem};
pub use crate::trajectory::ToolArgs;
use crate::trajectory::{ToolCall, ToolKind};
use crate::util::{argmax, cosine, norm};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BudgetConfig {
    pub total_tokens: u32,
    /// Cost of one retrieved frame at native resolution.
    pub frame_tokens: u32,
    /// Per-frame cost of the coarse overview at resolution level 0.
    pub coarse_frame_tokens: u32,
    pub initial_frames: u32,
    pub max_frames: u32,
}

impl Default for BudgetConfig {
    fn default() -> Self {
        Self {
            total_tokens: 1960,
            frame_tokens: 196,
            coarse_frame_tokens: 12,
            initial_frames: 8,
            max_frames: 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetLedger {
    pub total: u32,
    pub consumed: u32,
    pub resolution_level: u32,
    pub frames_loaded: u32,
    /// Per-frame overview cost at the current resolution level.
    pub per_frame_cost: u32,
    pub frame_tokens: u32,
    pub max_frames: u32,
}

impl BudgetLedger {
    pub fn new(cfg: &BudgetConfig) -> Self {
        Self {
            total: cfg.total_tokens,
            consumed: 0,
            resolution_level: 0,
            frames_loaded: cfg.initial_frames,
            per_frame_cost: cfg.coarse_frame_tokens,
            frame_tokens: cfg.frame_tokens,
            max_frames: cfg.max_frames,
        }
    }

    pub fn remaining(&self) -> u32 {
        self.total - self.consumed
    }

    /// Frames and per-frame cost after one more browse: frames double up to
    /// the cap and spatial resolution doubles.
    pub fn next_browse(&self) -> (u32, u32) {
        ((self.frames_loaded * 2).min(self.max_frames), self.per_frame_cost * 2)
    }

    pub fn browse_cost(&self) -> u32 {
        let (frames, per_frame) = self.next_browse();
        frames * per_frame
    }

    fn charge(&mut self, cost: u32) -> Result<(), ToolError> {
        if cost > self.remaining() {
            return Err(ToolError::BudgetExceeded {
                needed: cost,
                remaining: self.remaining(),
            });
        }
        self.consumed += cost;
        Ok(())
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ToolError {
    #[error("budget exceeded: call needs {needed} tokens, {remaining} remaining")]
    BudgetExceeded { needed: u32, remaining: u32 },
    #[error("chain order violation: {tool} requires a selected {requires}")]
    ChainOrderViolation { tool: ToolKind, requires: &'static str },
    #[error("invalid query: {0}")]
    InvalidQuery(String),
}

/// Result of a successful tool execution.
#[derive(Debug, Clone, PartialEq)]
pub struct ToolStep {
    pub obs: ObservationState,
    pub ledger: BudgetLedger,
    pub observation: String,
}

fn finish(item: &SandboxItem, mut obs: ObservationState, ledger: BudgetLedger, text: String) -> ToolStep {
    obs.tokens_consumed = ledger.consumed;
    obs.evidence_visible = obs.evidence_visible || reveal_rule(&item.video.evidence, &obs);
    let observation = if obs.evidence_visible {
        format!("{text}; evidence visible: answer choice {}", item.correct_choice())
    } else {
        format!("{text}; evidence not visible")
    };
    ToolStep {
        obs,
        ledger,
        observation,
    }
}

pub fn execute_browse(
    item: &SandboxItem,
    obs: &ObservationState,
    ledger: &BudgetLedger,
) -> Result<ToolStep, ToolError> {
    let mut ledger = ledger.clone();
    let cost = ledger.browse_cost();
    ledger.charge(cost)?;
    let (frames, per_frame) = ledger.next_browse();
    ledger.frames_loaded = frames;
    ledger.per_frame_cost = per_frame;
    ledger.resolution_level += 1;
    let mut obs = obs.clone();
    obs.resolution_level = ledger.resolution_level;
    obs.granularity = Granularity::Browsed;
    let text = format!(
        "browse: resolution level {}, {} frames loaded, {} tokens",
        ledger.resolution_level, frames, cost
    );
    Ok(finish(item, obs, ledger, text))
}

fn validate_query(query: &[f64], dim: usize) -> Result<(), ToolError> {
    if query.len() != dim {
        return Err(ToolError::InvalidQuery(format!(
            "expected {dim} components, got {}",
            query.len()
        )));
    }
    if query.iter().any(|x| !x.is_finite()) {
        return Err(ToolError::InvalidQuery("non-finite component".into()));
    }
    let n = norm(query);
    if (n - 1.0).abs() > 1e-6 {
        return Err(ToolError::InvalidQuery(format!("norm {n} is not 1")));
    }
    Ok(())
}

pub fn execute_segment_retrieve(
    item: &SandboxItem,
    query: &[f64],
    obs: &ObservationState,
    ledger: &BudgetLedger,
) -> Result<ToolStep, ToolError> {
    let video = &item.video;
    validate_query(query, video.frame_embeddings[0].len())?;
    let mut ledger = ledger.clone();
    ledger.charge(video.segment_size as u32 * ledger.frame_tokens)?;
    let scores: Vec<f64> = (0..video.segment_count())
        .map(|s| cosine(query, &video.segment_mean(s)))
        .collect();
    let segment = argmax(scores.iter().copied()).expect("video has segments");
    let mut obs = obs.clone();
    obs.granularity = Granularity::SegmentSelected;
    obs.selected_segment = Some(segment);
    obs.selected_frame = None;
    obs.selected_region = None;
    let text = format!("segment {segment} selected (similarity {:.4})", scores[segment]);
    Ok(finish(item, obs, ledger, text))
}

pub fn execute_frame_pick(
    item: &SandboxItem,
    obs: &ObservationState,
    ledger: &BudgetLedger,
) -> Result<ToolStep, ToolError> {
    let segment = obs.selected_segment.ok_or(ToolError::ChainOrderViolation {
        tool: ToolKind::FramePick,
        requires: "segment",
    })?;
    let video = &item.video;
    let mut ledger = ledger.clone();
    ledger.charge(ledger.frame_tokens)?;
    let range = video.segment_frames(segment);
    let start = range.start;
    let frame = start
        + argmax(range.map(|f| cosine(&item.question.query, &video.frame_embeddings[f]))).expect("segment has frames");
    let mut obs = obs.clone();
    obs.granularity = Granularity::FrameSelected;
    obs.selected_frame = Some(frame);
    obs.selected_region = None;
    let text = format!("frame {frame} selected in segment {segment}");
    Ok(finish(item, obs, ledger, text))
}

pub fn execute_zoom_in(
    item: &SandboxItem,
    obs: &ObservationState,
    ledger: &BudgetLedger,
) -> Result<ToolStep, ToolError> {
    let frame = obs.selected_frame.ok_or(ToolError::ChainOrderViolation {
        tool: ToolKind::ZoomIn,
        requires: "frame",
    })?;
    let mut ledger = ledger.clone();
    ledger.charge(ledger.frame_tokens)?;
    let region = argmax(
        item.video.region_embeddings[frame]
            .iter()
            .map(|e| cosine(&item.question.query, e)),
    )
    .expect("frame has regions");
    let mut obs = obs.clone();
    obs.granularity = Granularity::RegionSelected;
    obs.selected_region = Some(region);
    let text = format!("region {region} selected in frame {frame}");
    Ok(finish(item, obs, ledger, text))
}

pub fn execute(
    item: &SandboxItem,
    args: &ToolArgs,
    obs: &ObservationState,
    ledger: &BudgetLedger,
) -> Result<ToolStep, ToolError> {
    match args {
        ToolArgs::Browse => execute_browse(item, obs, ledger),
        ToolArgs::SegmentRetrieve { query } => execute_segment_retrieve(item, query, obs, ledger),
        ToolArgs::FramePick => execute_frame_pick(item, obs, ledger),
        ToolArgs::ZoomIn => execute_zoom_in(item, obs, ledger),
    }
}

/// Per-episode tool state: observation, budget and the call log.
#[derive(Debug, Clone)]
pub struct ToolSession<'a> {
    pub item: &'a SandboxItem,
    pub obs: ObservationState,
    pub ledger: BudgetLedger,
    pub calls: Vec<ToolCall>,
}

impl<'a> ToolSession<'a> {
    pub fn new(item: &'a SandboxItem, budget: &BudgetConfig) -> Self {
        Self {
            item,
            obs: ObservationState::initial(),
            ledger: BudgetLedger::new(budget),
            calls: Vec::new(),
        }
    }

    /// Execute one call, append it to the log, and return the observation.
    pub fn invoke(&mut self, args: &ToolArgs, parse_valid: bool) -> String {
        let step = self.calls.len() + 1;
        let visible_before = self.obs.evidence_visible;
        let (ok, observation) = match execute(self.item, args, &self.obs, &self.ledger) {
            Ok(s) => {
                self.obs = s.obs;
                self.ledger = s.ledger;
                (true, s.observation)
            }
            Err(e) => (false, format!("error: {e}")),
        };
        self.calls.push(ToolCall {
            tool: args.kind(),
            step,
            args: args.clone(),
            parse_valid,
            precondition_valid: ok,
            observation_id: format!("obs-{step}"),
            evidence_visible_before: visible_before,
        });
        observation
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sandbox::{generate_video_with, EvidenceGranularity, SandboxConfig};

    fn item(g: EvidenceGranularity, seed: u64) -> SandboxItem {
        generate_video_with(seed, &SandboxConfig::default(), g, "t".into()).unwrap()
    }

    fn fresh() -> (ObservationState, BudgetLedger) {
        (ObservationState::initial(), BudgetLedger::new(&BudgetConfig::default()))
    }

    #[test]
    fn browse_doubles_frames_and_level() {
        let it = item(EvidenceGranularity::Global, 1);
        let (obs, ledger) = fresh();
        assert_eq!((ledger.frames_loaded, ledger.resolution_level), (8, 0));
        let s = execute_browse(&it, &obs, &ledger).unwrap();
        assert_eq!(s.obs.granularity, Granularity::Browsed);
        assert_eq!((s.ledger.frames_loaded, s.ledger.resolution_level), (16, 1));
        assert!(s.obs.evidence_visible);
        assert_eq!(s.ledger.consumed, 16 * 24);
        // second browse costs four times the first (2x frames, 2x spatial)
        let s2 = execute_browse(&it, &s.obs, &s.ledger).unwrap();
        assert_eq!(s2.ledger.consumed - s.ledger.consumed, 4 * 16 * 24);
        assert_eq!(s2.ledger.frames_loaded, 32);
        // third is over budget
        assert!(matches!(
            execute_browse(&it, &s2.obs, &s2.ledger),
            Err(ToolError::BudgetExceeded { .. })
        ));
    }

    #[test]
    fn browse_over_remaining_budget_is_rejected() {
        let it = item(EvidenceGranularity::Global, 2);
        let (obs, mut ledger) = fresh();
        ledger.consumed = ledger.total - 100;
        assert!(ledger.browse_cost() > 100);
        assert_eq!(
            execute_browse(&it, &obs, &ledger),
            Err(ToolError::BudgetExceeded {
                needed: 384,
                remaining: 100
            })
        );
    }

    #[test]
    fn segment_retrieve_finds_evidence_segment() {
        for seed in 0..20 {
            let it = item(EvidenceGranularity::Segment, seed);
            let (obs, ledger) = fresh();
            let s = execute_segment_retrieve(&it, &it.question.query, &obs, &ledger).unwrap();
            assert_eq!(s.obs.selected_segment, it.video.evidence.segment);
            assert!(s.obs.evidence_visible);
            assert_eq!(s.ledger.consumed, 8 * 196);
            let again = execute_segment_retrieve(&it, &it.question.query, &obs, &ledger).unwrap();
            assert_eq!(again, s);
        }
    }

    #[test]
    fn orthogonal_query_ties_to_segment_zero() {
        let mut it = item(EvidenceGranularity::Segment, 4);
        // make every frame orthogonal to e0 and query along e0
        for f in it.video.frame_embeddings.iter_mut() {
            f[0] = 0.0;
            let n = norm(f);
            f.iter_mut().for_each(|x| *x /= n);
        }
        let mut q = vec![0.0; 16];
        q[0] = 1.0;
        let (obs, ledger) = fresh();
        let s = execute_segment_retrieve(&it, &q, &obs, &ledger).unwrap();
        assert_eq!(s.obs.selected_segment, Some(0));
    }

    #[test]
    fn invalid_query_is_rejected() {
        let it = item(EvidenceGranularity::Segment, 5);
        let (obs, ledger) = fresh();
        let q: Vec<f64> = it.question.query.iter().map(|x| x * 2.0).collect();
        assert!(matches!(
            execute_segment_retrieve(&it, &q, &obs, &ledger),
            Err(ToolError::InvalidQuery(_))
        ));
        assert!(matches!(
            execute_segment_retrieve(&it, &[1.0, 0.0], &obs, &ledger),
            Err(ToolError::InvalidQuery(_))
        ));
    }

    #[test]
    fn frame_and_zoom_follow_the_chain() {
        for seed in 0..20 {
            let it = item(EvidenceGranularity::Region, seed);
            let (obs, ledger) = fresh();
            let s = execute_segment_retrieve(&it, &it.question.query, &obs, &ledger).unwrap();
            let f = execute_frame_pick(&it, &s.obs, &s.ledger).unwrap();
            assert_eq!(f.obs.selected_frame, it.video.evidence.frame);
            assert!(!f.obs.evidence_visible);
            let z = execute_zoom_in(&it, &f.obs, &f.ledger).unwrap();
            assert_eq!(z.obs.selected_region, it.video.evidence.region);
            assert!(z.obs.evidence_visible);
            // the full chain exactly exhausts the default budget
            assert_eq!(z.ledger.consumed, 1960);
        }
    }

    #[test]
    fn chain_violations() {
        let it = item(EvidenceGranularity::Frame, 6);
        let (obs, ledger) = fresh();
        assert!(matches!(
            execute_frame_pick(&it, &obs, &ledger),
            Err(ToolError::ChainOrderViolation {
                tool: ToolKind::FramePick,
                ..
            })
        ));
        let b = execute_browse(&it, &obs, &ledger).unwrap();
        assert!(matches!(
            execute_zoom_in(&it, &b.obs, &b.ledger),
            Err(ToolError::ChainOrderViolation {
                tool: ToolKind::ZoomIn,
                ..
            })
        ));
    }

    #[test]
    fn wrong_segment_never_reveals_frame_evidence() {
        let it = item(EvidenceGranularity::Frame, 7);
        let ev_seg = it.video.evidence.segment.unwrap();
        let (mut obs, ledger) = fresh();
        obs.selected_segment = Some((ev_seg + 1) % it.video.segment_count());
        obs.granularity = Granularity::SegmentSelected;
        let f = execute_frame_pick(&it, &obs, &ledger).unwrap();
        assert!(f.obs.selected_frame.is_some());
        assert!(!f.obs.evidence_visible);
    }

    #[test]
    fn zoom_after_frame_evidence_keeps_visibility() {
        let it = item(EvidenceGranularity::Frame, 8);
        let mut session = ToolSession::new(&it, &BudgetConfig::default());
        session.invoke(
            &ToolArgs::SegmentRetrieve {
                query: it.question.query.clone(),
            },
            true,
        );
        session.invoke(&ToolArgs::FramePick, true);
        assert!(session.obs.evidence_visible);
        let obs = session.invoke(&ToolArgs::ZoomIn, true);
        assert!(session.obs.evidence_visible);
        assert!(obs.contains("evidence visible"));
        assert_eq!(session.calls.len(), 3);
        assert!(session.calls[2].evidence_visible_before);
        assert_eq!(session.calls.iter().map(|c| c.step).collect::<Vec<_>>(), vec![1, 2, 3]);
    }

    #[test]
    fn soft_errors_are_recorded() {
        let it = item(EvidenceGranularity::Frame, 9);
        let mut session = ToolSession::new(&it, &BudgetConfig::default());
        let obs = session.invoke(&ToolArgs::ZoomIn, true);
        assert!(obs.starts_with("error: chain order violation"));
        assert!(!session.calls[0].precondition_valid);
        assert_eq!(session.obs, ObservationState::initial());
    }
}
