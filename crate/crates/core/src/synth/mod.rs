//! Sandbox trajectory synthesis: necessity filtering, tool-order prediction,
//! system-prompt rewriting, stepwise trajectory generation, adjudication and
//! difficulty curation, all driven through a [`ModelClient`].

pub mod client;
pub mod script;

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use client::{
    ClientError, ClientRequest, ModelClient, RemoteClient, RemoteConfig, Scripted, ScriptedClient, Stage,
};

use crate::rewards::{episode_reward, RewardConfig};
use crate::sandbox::{judge_answer, JudgeMode, ObservationState, SandboxItem};
use crate::toolkit::{BudgetConfig, ToolSession};
use crate::toolparse::{parse_with_repair, ParseOutcome, RepairPass, ANSWER_OPEN, TOOL_OPEN};
use crate::trajectory::{AgentAction, ToolKind, Trajectory, Turn};
use crate::util::rng_for;

pub const BASE_SYSTEM_PROMPT: &str = "You answer questions about a long video using tools. \
Call exactly one tool per turn as <tool_call>{\"name\": NAME, \"arguments\": ARGS}</tool_call>. \
Tools: browse (coarse overview at higher resolution), segment_retrieve (select the segment closest to a query), \
frame_pick (select the best frame in the selected segment), zoom_in (select the best region of the selected frame). \
Stop retrieving once the evidence is visible and reply <answer>K</answer> with the choice index K.";

/// Strings a rewritten system prompt must still contain.
pub const REQUIRED_MARKERS: [&str; 8] = [
    "<tool_call>",
    "</tool_call>",
    "<answer>",
    "</answer>",
    "browse",
    "segment_retrieve",
    "frame_pick",
    "zoom_in",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    /// Trajectories generated per item before adjudication.
    pub candidates: usize,
    pub max_turns: usize,
    /// Attempts per client-dependent stage.
    pub retry_cap: usize,
    /// Curation trials per question.
    pub trials: usize,
    /// Kept iff `band_low < correct < band_high`.
    pub band_low: usize,
    pub band_high: usize,
    pub budget: BudgetConfig,
    pub reward: RewardConfig,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            candidates: 2,
            max_turns: 4,
            retry_cap: 2,
            trials: 10,
            band_low: 3,
            band_high: 7,
            budget: BudgetConfig::default(),
            reward: RewardConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum StageStatus {
    Passed,
    /// The stage completed with a fallback; the item continues.
    Flagged {
        reason: String,
    },
    Failed {
        reason: String,
    },
    Skipped,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Necessity {
    DirectAnswerable,
    NeedsTools,
}

/// One generated trajectory and how it was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub index: usize,
    pub trajectory: Trajectory,
    /// Reasoning text preceding each action string.
    pub reasoning: Vec<String>,
    /// Repairs applied, by turn index.
    pub repairs: Vec<(usize, Vec<RepairPass>)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthItem {
    pub question_id: String,
    pub stages: BTreeMap<Stage, StageStatus>,
    pub necessity: Option<Necessity>,
    pub predicted_order: Vec<ToolKind>,
    pub system_prompt: String,
    pub candidates: Vec<Candidate>,
    /// Candidates dropped during generation, with the reason.
    pub discarded: Vec<(usize, String)>,
    /// `(candidate index, rank)` for candidates that survived the pre-filter,
    /// best first.
    pub ranks: Vec<(usize, usize)>,
    pub exemplar: Option<usize>,
    pub correct_count: Option<usize>,
    pub kept: bool,
}

impl SynthItem {
    pub fn new(question_id: impl Into<String>) -> Self {
        Self {
            question_id: question_id.into(),
            stages: BTreeMap::new(),
            necessity: None,
            predicted_order: Vec::new(),
            system_prompt: BASE_SYSTEM_PROMPT.to_string(),
            candidates: Vec::new(),
            discarded: Vec::new(),
            ranks: Vec::new(),
            exemplar: None,
            correct_count: None,
            kept: false,
        }
    }

    pub fn exemplar_trajectory(&self) -> Option<&Trajectory> {
        let i = self.exemplar?;
        self.candidates.iter().find(|c| c.index == i).map(|c| &c.trajectory)
    }

    fn set(&mut self, stage: Stage, status: StageStatus) {
        self.stages.insert(stage, status);
    }
}

fn describe(item: &SandboxItem) -> String {
    format!(
        "Question {} ({} intent, {} choices, video {}).",
        item.question.id,
        item.question.cue.name(),
        item.question.choices,
        item.question.video_ref
    )
}

/// Submit with up to `cap` attempts, retrying on client errors and on
/// responses rejected by `accept`.
fn ask<T>(
    client: &dyn ModelClient,
    request: &ClientRequest,
    cap: usize,
    mut accept: impl FnMut(&str) -> Result<T, String>,
) -> Result<T, String> {
    let mut last = String::from("no attempts made");
    for _ in 0..cap.max(1) {
        match client.submit(request) {
            Ok(text) => match accept(&text) {
                Ok(v) => return Ok(v),
                Err(e) => last = e,
            },
            Err(e) => last = e.to_string(),
        }
    }
    Err(last)
}

fn answer_choice(text: &str) -> Option<usize> {
    let start = text.find(ANSWER_OPEN).unwrap_or(0);
    match parse_with_repair(&text[start..]).into_action()? {
        AgentAction::Answer { choice } => Some(choice),
        AgentAction::Invoke(_) => None,
    }
}

/// Ask the client to answer without tools. A correct answer marks the item
/// as directly answerable.
pub fn filter_necessity(
    item: &mut SynthItem,
    q: &SandboxItem,
    client: &dyn ModelClient,
    cfg: &SynthConfig,
) -> Option<Necessity> {
    let request = ClientRequest {
        stage: Stage::Necessity,
        key: q.question.id.clone(),
        system: "Answer from the question alone, without any tools.".into(),
        prompt: describe(q),
        context: vec![],
    };
    match ask(client, &request, cfg.retry_cap, |t| Ok(answer_choice(t))) {
        Ok(choice) => {
            let n = if choice == Some(q.correct_choice()) {
                Necessity::DirectAnswerable
            } else {
                Necessity::NeedsTools
            };
            item.necessity = Some(n);
            item.set(Stage::Necessity, StageStatus::Passed);
            Some(n)
        }
        Err(reason) => {
            item.set(Stage::Necessity, StageStatus::Failed { reason });
            None
        }
    }
}

/// Parse a tool list such as `segment, frame`.
pub fn parse_order(text: &str) -> Result<Vec<ToolKind>, String> {
    let mut order = Vec::new();
    for token in text
        .split(|c: char| c == ',' || c == ';' || c == '>' || c == '\n' || c.is_whitespace())
        .map(|t| t.trim_matches(|c: char| !c.is_ascii_alphanumeric() && c != '_'))
        .filter(|t| !t.is_empty() && *t != "-" && *t != "then")
    {
        let kind = match token.to_ascii_lowercase().as_str() {
            "browse" => ToolKind::Browse,
            "segment" | "segment_retrieve" => ToolKind::SegmentRetrieve,
            "frame" | "frame_pick" => ToolKind::FramePick,
            "zoom" | "zoom_in" => ToolKind::ZoomIn,
            other => return Err(format!("unknown tool '{other}'")),
        };
        order.push(kind);
    }
    if order.is_empty() {
        return Err("empty tool order".into());
    }
    Ok(order)
}

/// Frame picks need an earlier segment retrieval and zooms an earlier frame pick.
pub fn check_chain(order: &[ToolKind]) -> Result<(), String> {
    let (mut seg, mut frame) = (false, false);
    for &k in order {
        match k {
            ToolKind::SegmentRetrieve => seg = true,
            ToolKind::FramePick if !seg => return Err("frame_pick before segment_retrieve".into()),
            ToolKind::FramePick => frame = true,
            ToolKind::ZoomIn if !frame => return Err("zoom_in before frame_pick".into()),
            _ => {}
        }
    }
    Ok(())
}

pub fn predict_order(
    item: &mut SynthItem,
    q: &SandboxItem,
    client: &dyn ModelClient,
    cfg: &SynthConfig,
) -> Option<Vec<ToolKind>> {
    let request = ClientRequest {
        stage: Stage::Order,
        key: q.question.id.clone(),
        system: "List the tools, in order, needed to answer. Use browse, segment, frame, zoom.".into(),
        prompt: describe(q),
        context: vec![],
    };
    let result = ask(client, &request, cfg.retry_cap, |t| {
        let order = parse_order(t)?;
        check_chain(&order)?;
        Ok(order)
    });
    match result {
        Ok(order) => {
            item.predicted_order = order.clone();
            item.set(Stage::Order, StageStatus::Passed);
            Some(order)
        }
        Err(reason) => {
            item.set(Stage::Order, StageStatus::Failed { reason });
            None
        }
    }
}

/// Reasons a rewritten prompt is unusable, if any.
pub fn validate_prompt(text: &str) -> Result<(), String> {
    if text.trim().is_empty() {
        return Err("empty rewrite".into());
    }
    match REQUIRED_MARKERS.iter().find(|m| !text.contains(*m)) {
        Some(m) => Err(format!("rewrite lacks marker {m}")),
        None => Ok(()),
    }
}

pub fn rewrite_prompt(item: &mut SynthItem, q: &SandboxItem, client: &dyn ModelClient) {
    let order: Vec<&str> = item.predicted_order.iter().map(|k| k.wire_name()).collect();
    let request = ClientRequest {
        stage: Stage::Rewrite,
        key: q.question.id.clone(),
        system: BASE_SYSTEM_PROMPT.into(),
        prompt: format!(
            "Rewrite the system prompt for this plan: {}. {}",
            order.join(", "),
            describe(q)
        ),
        context: vec![],
    };
    let status = match client.submit(&request) {
        Ok(text) => match validate_prompt(&text) {
            Ok(()) => {
                item.system_prompt = text;
                StageStatus::Passed
            }
            Err(reason) => StageStatus::Flagged { reason },
        },
        Err(e) => StageStatus::Flagged { reason: e.to_string() },
    };
    if !matches!(status, StageStatus::Passed) {
        item.system_prompt = BASE_SYSTEM_PROMPT.into();
    }
    item.set(Stage::Rewrite, status);
}

/// Split a completion into reasoning and the action string.
pub fn split_completion(text: &str) -> (&str, &str) {
    let start = ["```", TOOL_OPEN, ANSWER_OPEN]
        .iter()
        .filter_map(|m| text.find(m))
        .min()
        .unwrap_or(text.len());
    (text[..start].trim(), text[start..].trim())
}

/// Run one candidate conversation through the sandbox.
pub fn generate_trajectory(
    q: &SandboxItem,
    client: &dyn ModelClient,
    system_prompt: &str,
    cfg: &SynthConfig,
    index: usize,
) -> Result<Candidate, String> {
    let key = format!("{}/c{index}", q.question.id);
    let mut t = Trajectory::new(key.clone(), q.question.id.clone());
    let mut session = ToolSession::new(q, &cfg.budget);
    let mut context = Vec::new();
    let mut reasoning = Vec::new();
    let mut repairs = Vec::new();
    let mut last_observation = String::from("Coarse overview loaded.");
    for turn in 0..cfg.max_turns {
        let request = ClientRequest {
            stage: Stage::Trajectory,
            key: key.clone(),
            system: system_prompt.to_string(),
            prompt: format!("{} Turn {turn}. {last_observation}", describe(q)),
            context: context.clone(),
        };
        let text = client.submit(&request).map_err(|e| format!("turn {turn}: {e}"))?;
        let (thought, raw) = split_completion(&text);
        let outcome = parse_with_repair(raw);
        if let ParseOutcome::Failed(reason) = &outcome {
            return Err(format!("turn {turn}: unparseable action ({reason})"));
        }
        if let ParseOutcome::Repaired(_, passes) = &outcome {
            repairs.push((turn, passes.clone()));
        }
        let format = outcome.format_status();
        let strict = matches!(outcome, ParseOutcome::Parsed(_));
        let action = outcome.into_action().expect("parsed");
        let mut snapshot = session.obs.clone();
        snapshot.turn = turn;
        let observation = match &action {
            AgentAction::Invoke(args) => session.invoke(args, strict),
            AgentAction::Answer { choice } => {
                t.final_answer = Some(*choice);
                let mut rng = rng_for(0, &[]);
                t.correct = judge_answer(q, *choice, &session.obs, JudgeMode::Deterministic, &mut rng).unwrap_or(false);
                format!("answered {choice}")
            }
        };
        let answered = matches!(action, AgentAction::Answer { .. });
        t.turns.push(Turn {
            state: snapshot,
            decision: Some(action.head()),
            raw: raw.to_string(),
            format,
            action: Some(action),
            observation: observation.clone(),
        });
        reasoning.push(thought.to_string());
        context.push(text.clone());
        context.push(observation.clone());
        last_observation = observation;
        if answered {
            break;
        }
    }
    t.truncated = t.final_answer.is_none();
    t.tool_calls = session.calls;
    t.rewards = Some(episode_reward(&t, &cfg.reward).map_err(|e| e.to_string())?);
    Ok(Candidate {
        index,
        trajectory: t,
        reasoning,
        repairs,
    })
}

/// Correct, no call after the evidence was visible, no failed precondition.
pub fn is_minimal(t: &Trajectory) -> bool {
    t.correct && t.post_visibility_calls() == 0 && t.tool_calls.iter().all(|c| c.precondition_valid)
}

fn parse_ranks(text: &str, n: usize) -> Result<Vec<usize>, String> {
    let ranks: Vec<usize> = text
        .split(|c: char| !c.is_ascii_digit())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| format!("bad rank '{s}'")))
        .collect::<Result<_, _>>()?;
    if ranks.len() != n {
        return Err(format!("expected {n} ranks, got {}", ranks.len()));
    }
    Ok(ranks)
}

/// Rule-based pre-filter, client ranking of the survivors, and selection of
/// the best one. Ties go to fewer calls, then fewer turns.
pub fn adjudicate(item: &mut SynthItem, client: &dyn ModelClient, cfg: &SynthConfig) -> Option<usize> {
    let survivors: Vec<&Candidate> = item.candidates.iter().filter(|c| is_minimal(&c.trajectory)).collect();
    if survivors.is_empty() {
        item.set(
            Stage::Adjudicate,
            StageStatus::Failed {
                reason: "all candidates filtered".into(),
            },
        );
        return None;
    }
    let listing: Vec<String> = survivors
        .iter()
        .map(|c| {
            let tools: Vec<&str> = c.trajectory.tools().map(|k| k.wire_name()).collect();
            format!(
                "candidate {}: {} calls [{}], {} turns",
                c.index,
                c.trajectory.call_count(),
                tools.join(", "),
                c.trajectory.turns.len()
            )
        })
        .collect();
    let request = ClientRequest {
        stage: Stage::Adjudicate,
        key: item.question_id.clone(),
        system: "Rank the candidate trajectories by conciseness and precision. Reply with one rank per candidate, 1 is best."
            .into(),
        prompt: listing.join("\n"),
        context: vec![],
    };
    let (ranks, status) = match ask(client, &request, cfg.retry_cap, |t| parse_ranks(t, survivors.len())) {
        Ok(r) => (r, StageStatus::Passed),
        Err(reason) => (vec![1; survivors.len()], StageStatus::Flagged { reason }),
    };
    let mut order: Vec<(usize, &Candidate)> = ranks.into_iter().zip(survivors).collect();
    order.sort_by_key(|(rank, c)| (*rank, c.trajectory.call_count(), c.trajectory.turns.len(), c.index));
    item.ranks = order.iter().map(|(r, c)| (c.index, *r)).collect();
    let best = order[0].1.index;
    item.exemplar = Some(best);
    item.set(Stage::Adjudicate, status);
    Some(best)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curation {
    pub question_id: String,
    pub correct: usize,
    pub kept: bool,
}

/// Whether `correct` lies strictly inside the band.
pub fn in_band(correct: usize, cfg: &SynthConfig) -> bool {
    cfg.band_low < correct && correct < cfg.band_high
}

/// Answer each question `cfg.trials` times and keep the medium-difficulty ones.
pub fn curate_difficulty(questions: &[&SandboxItem], client: &dyn ModelClient, cfg: &SynthConfig) -> Vec<Curation> {
    questions
        .iter()
        .map(|q| {
            let correct = (0..cfg.trials)
                .filter(|trial| {
                    let request = ClientRequest {
                        stage: Stage::Curate,
                        key: q.question.id.clone(),
                        system: "Answer the question.".into(),
                        prompt: format!("{} Trial {trial}.", describe(q)),
                        context: vec![],
                    };
                    client
                        .submit(&request)
                        .ok()
                        .and_then(|t| answer_choice(&t))
                        .is_some_and(|c| c == q.correct_choice())
                })
                .count();
            Curation {
                question_id: q.question.id.clone(),
                correct,
                kept: in_band(correct, cfg),
            }
        })
        .collect()
}

/// All stages for one item.
pub fn process_item(q: &SandboxItem, client: &dyn ModelClient, cfg: &SynthConfig) -> SynthItem {
    let mut item = SynthItem::new(q.question.id.clone());
    let skip_rest = |item: &mut SynthItem, from: usize| {
        for s in &Stage::ALL[from..] {
            item.stages.entry(*s).or_insert(StageStatus::Skipped);
        }
    };
    match filter_necessity(&mut item, q, client, cfg) {
        Some(Necessity::NeedsTools) => {}
        _ => {
            skip_rest(&mut item, 1);
            return item;
        }
    }
    if predict_order(&mut item, q, client, cfg).is_none() {
        skip_rest(&mut item, 2);
        return item;
    }
    rewrite_prompt(&mut item, q, client);
    for c in 0..cfg.candidates {
        match generate_trajectory(q, client, &item.system_prompt, cfg, c) {
            Ok(cand) => item.candidates.push(cand),
            Err(reason) => item.discarded.push((c, reason)),
        }
    }
    if item.candidates.is_empty() {
        item.set(
            Stage::Trajectory,
            StageStatus::Failed {
                reason: "every candidate was discarded".into(),
            },
        );
        skip_rest(&mut item, 4);
        return item;
    }
    item.set(Stage::Trajectory, StageStatus::Passed);
    if adjudicate(&mut item, client, cfg).is_none() {
        skip_rest(&mut item, 5);
        return item;
    }
    let curation = curate_difficulty(&[q], client, cfg).remove(0);
    item.correct_count = Some(curation.correct);
    item.kept = curation.kept;
    item.set(
        Stage::Curate,
        if curation.kept {
            StageStatus::Passed
        } else {
            StageStatus::Failed {
                reason: format!("{} of {} correct is outside the band", curation.correct, cfg.trials),
            }
        },
    );
    item
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageCounts {
    pub passed: usize,
    pub flagged: usize,
    pub failed: usize,
    pub skipped: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthReport {
    pub items: Vec<SynthItem>,
}

impl SynthReport {
    pub fn stage_counts(&self) -> BTreeMap<Stage, StageCounts> {
        let mut out: BTreeMap<Stage, StageCounts> = Stage::ALL.iter().map(|s| (*s, StageCounts::default())).collect();
        for item in &self.items {
            for (stage, status) in &item.stages {
                let c = out.get_mut(stage).expect("known stage");
                match status {
                    StageStatus::Passed => c.passed += 1,
                    StageStatus::Flagged { .. } => c.flagged += 1,
                    StageStatus::Failed { .. } => c.failed += 1,
                    StageStatus::Skipped => c.skipped += 1,
                }
            }
        }
        out
    }

    pub fn kept(&self) -> impl Iterator<Item = &SynthItem> {
        self.items.iter().filter(|i| i.kept)
    }
}

/// Run every stage over the corpus. Items are processed concurrently unless
/// the client asks for single-flight; output order follows the corpus.
pub fn run_pipeline(corpus: &[SandboxItem], client: &dyn ModelClient, cfg: &SynthConfig) -> SynthReport {
    let items = if client.single_flight() {
        corpus.iter().map(|q| process_item(q, client, cfg)).collect()
    } else {
        corpus.par_iter().map(|q| process_item(q, client, cfg)).collect()
    };
    SynthReport { items }
}

/// Re-execute a kept exemplar against a fresh toolkit session and check that
/// every parse, observation and call record comes out identical.
pub fn replay(exemplar: &Trajectory, q: &SandboxItem, budget: &BudgetConfig) -> Result<(), String> {
    let mut session = ToolSession::new(q, budget);
    for (i, turn) in exemplar.turns.iter().enumerate() {
        let outcome = parse_with_repair(&turn.raw);
        if outcome.format_status() != turn.format {
            return Err(format!("turn {i}: format status differs on replay"));
        }
        let action = outcome
            .into_action()
            .ok_or_else(|| format!("turn {i}: action no longer parses"))?;
        if Some(&action) != turn.action.as_ref() {
            return Err(format!("turn {i}: parsed action differs"));
        }
        let mut snapshot: ObservationState = session.obs.clone();
        snapshot.turn = i;
        if snapshot != turn.state {
            return Err(format!("turn {i}: state snapshot differs"));
        }
        if let AgentAction::Invoke(args) = &action {
            let observation = session.invoke(args, turn.format.is_strict());
            if observation != turn.observation {
                return Err(format!(
                    "turn {i}: observation differs: '{observation}' vs '{}'",
                    turn.observation
                ));
            }
        }
    }
    if session.calls != exemplar.tool_calls {
        return Err("tool-call log differs".into());
    }
    Ok(())
}

/// Provenance for one item: stage outcomes, repairs and ranks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub question_id: String,
    pub stages: BTreeMap<Stage, StageStatus>,
    pub necessity: Option<Necessity>,
    pub predicted_order: Vec<ToolKind>,
    pub system_prompt_rewritten: bool,
    pub candidates: Vec<CandidateProvenance>,
    pub discarded: Vec<(usize, String)>,
    pub ranks: Vec<(usize, usize)>,
    pub exemplar: Option<usize>,
    pub correct_count: Option<usize>,
    pub kept: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateProvenance {
    pub index: usize,
    pub calls: usize,
    pub turns: usize,
    pub correct: bool,
    pub minimal: bool,
    pub repairs: Vec<(usize, Vec<RepairPass>)>,
}

impl From<&SynthItem> for Provenance {
    fn from(item: &SynthItem) -> Self {
        Provenance {
            question_id: item.question_id.clone(),
            stages: item.stages.clone(),
            necessity: item.necessity,
            predicted_order: item.predicted_order.clone(),
            system_prompt_rewritten: item.system_prompt != BASE_SYSTEM_PROMPT,
            candidates: item
                .candidates
                .iter()
                .map(|c| CandidateProvenance {
                    index: c.index,
                    calls: c.trajectory.call_count(),
                    turns: c.trajectory.turns.len(),
                    correct: c.trajectory.correct,
                    minimal: is_minimal(&c.trajectory),
                    repairs: c.repairs.clone(),
                })
                .collect(),
            discarded: item.discarded.clone(),
            ranks: item.ranks.clone(),
            exemplar: item.exemplar,
            correct_count: item.correct_count,
            kept: item.kept,
        }
    }
}

/// Kept exemplars as trajectory records, one per line.
pub fn write_exemplars<W: Write>(mut out: W, report: &SynthReport) -> std::io::Result<()> {
    for item in report.kept() {
        let t = item.exemplar_trajectory().expect("kept items have an exemplar");
        writeln!(out, "{}", serde_json::to_string(t)?)?;
    }
    Ok(())
}

/// One provenance record per item, kept or not.
pub fn write_provenance<W: Write>(mut out: W, report: &SynthReport) -> std::io::Result<()> {
    for item in &report.items {
        writeln!(out, "{}", serde_json::to_string(&Provenance::from(item))?)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests;
