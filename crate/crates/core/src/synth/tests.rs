use super::script::{minimal_chain, scripted_client, Profile};
use super::*;
use crate::sandbox::{generate_corpus, generate_video_with, EvidenceGranularity, SandboxConfig};
use crate::toolparse::serialize;
use crate::trajectory::ToolArgs;

fn item(g: EvidenceGranularity, seed: u64) -> SandboxItem {
    generate_video_with(seed, &SandboxConfig::default(), g, format!("q{seed}")).unwrap()
}

fn answer(c: usize) -> String {
    serialize(&AgentAction::Answer { choice: c })
}

#[test]
fn necessity_follows_the_answer() {
    let q = item(EvidenceGranularity::Segment, 1);
    let cfg = SynthConfig::default();
    let mut c = ScriptedClient::new();
    c.reply(Stage::Necessity, "q1", answer(q.correct_choice()));
    let mut it = SynthItem::new("q1");
    assert_eq!(
        filter_necessity(&mut it, &q, &c, &cfg),
        Some(Necessity::DirectAnswerable)
    );

    let mut c = ScriptedClient::new();
    c.reply(Stage::Necessity, "q1", answer((q.correct_choice() + 1) % 4));
    assert_eq!(filter_necessity(&mut it, &q, &c, &cfg), Some(Necessity::NeedsTools));

    let mut c = ScriptedClient::new();
    c.push(Stage::Necessity, "q1", Scripted::Timeout);
    c.push(Stage::Necessity, "q1", Scripted::Timeout);
    let mut it = SynthItem::new("q1");
    assert_eq!(filter_necessity(&mut it, &q, &c, &cfg), None);
    assert!(matches!(it.stages[&Stage::Necessity], StageStatus::Failed { .. }));
}

#[test]
fn order_parsing_and_chain_rule() {
    assert_eq!(
        parse_order("segment, frame").unwrap(),
        vec![ToolKind::SegmentRetrieve, ToolKind::FramePick]
    );
    assert_eq!(
        parse_order("browse -> zoom_in").unwrap(),
        vec![ToolKind::Browse, ToolKind::ZoomIn]
    );
    assert!(parse_order("").is_err());
    assert!(parse_order("segment, teleport").is_err());
    assert!(check_chain(&parse_order("zoom, segment").unwrap()).is_err());
    assert!(check_chain(&parse_order("frame").unwrap()).is_err());
    assert!(check_chain(&parse_order("browse, segment, frame, zoom").unwrap()).is_ok());
}

#[test]
fn order_retries_then_fails() {
    let q = item(EvidenceGranularity::Frame, 2);
    let cfg = SynthConfig::default();
    let mut c = ScriptedClient::new();
    c.reply(Stage::Order, "q2", "zoom, segment");
    c.reply(Stage::Order, "q2", "segment, frame");
    let mut it = SynthItem::new("q2");
    assert_eq!(
        predict_order(&mut it, &q, &c, &cfg),
        Some(vec![ToolKind::SegmentRetrieve, ToolKind::FramePick])
    );
    assert_eq!(c.served(Stage::Order, "q2"), 2);

    let mut c = ScriptedClient::new();
    c.reply(Stage::Order, "q2", "???");
    c.reply(Stage::Order, "q2", "no idea");
    c.reply(Stage::Order, "q2", "segment");
    let mut it = SynthItem::new("q2");
    assert_eq!(predict_order(&mut it, &q, &c, &cfg), None);
    assert_eq!(c.served(Stage::Order, "q2"), 2);
    assert!(matches!(it.stages[&Stage::Order], StageStatus::Failed { .. }));
}

#[test]
fn rewrite_validation() {
    let q = item(EvidenceGranularity::Global, 3);
    let good = format!("{BASE_SYSTEM_PROMPT} Be brief.");
    for (reply, accepted) in [
        (good.clone(), true),
        (good.replace("<tool_call>", "[call]"), false),
        (String::new(), false),
    ] {
        let mut c = ScriptedClient::new();
        c.reply(Stage::Rewrite, "q3", reply.clone());
        let mut it = SynthItem::new("q3");
        rewrite_prompt(&mut it, &q, &c);
        assert_eq!(it.system_prompt == reply, accepted);
        if !accepted {
            assert_eq!(it.system_prompt, BASE_SYSTEM_PROMPT);
            assert!(matches!(it.stages[&Stage::Rewrite], StageStatus::Flagged { .. }));
        }
    }
}

fn script_turns(c: &mut ScriptedClient, key: &str, turns: &[String]) {
    for t in turns {
        c.reply(Stage::Trajectory, key, t.clone());
    }
}

#[test]
fn generation_outcomes() {
    let cfg = SynthConfig::default();
    let q = item(EvidenceGranularity::Frame, 4);
    let seg = serialize(&AgentAction::Invoke(ToolArgs::SegmentRetrieve {
        query: q.question.query.clone(),
    }));
    let frame = serialize(&AgentAction::Invoke(ToolArgs::FramePick));
    let mut c = ScriptedClient::new();
    script_turns(
        &mut c,
        "q4/c0",
        &[format!("look\n{seg}"), frame.clone(), answer(q.correct_choice())],
    );
    script_turns(&mut c, "q4/c1", &[answer(q.correct_choice())]);
    script_turns(
        &mut c,
        "q4/c2",
        &[seg.replace('"', "'"), frame.clone(), answer(q.correct_choice())],
    );
    script_turns(&mut c, "q4/c3", &["I will call browse".into()]);

    let optimal = generate_trajectory(&q, &c, BASE_SYSTEM_PROMPT, &cfg, 0).unwrap();
    assert!(optimal.trajectory.correct);
    assert_eq!(optimal.reasoning[0], "look");
    assert!(optimal.repairs.is_empty());

    let hasty = generate_trajectory(&q, &c, BASE_SYSTEM_PROMPT, &cfg, 1).unwrap();
    assert!(!hasty.trajectory.correct);
    assert_eq!(hasty.trajectory.call_count(), 0);

    let repaired = generate_trajectory(&q, &c, BASE_SYSTEM_PROMPT, &cfg, 2).unwrap();
    assert!(repaired.trajectory.correct);
    assert_eq!(repaired.repairs, vec![(0, vec![RepairPass::QuoteNormalize])]);

    assert!(generate_trajectory(&q, &c, BASE_SYSTEM_PROMPT, &cfg, 3).is_err());
}

fn candidate(index: usize, q: &SandboxItem, chain: &[ToolKind]) -> Candidate {
    let mut c = ScriptedClient::new();
    let key = format!("{}/c{index}", q.question.id);
    for &k in chain {
        let args = match k {
            ToolKind::Browse => ToolArgs::Browse,
            ToolKind::SegmentRetrieve => ToolArgs::SegmentRetrieve {
                query: q.question.query.clone(),
            },
            ToolKind::FramePick => ToolArgs::FramePick,
            ToolKind::ZoomIn => ToolArgs::ZoomIn,
        };
        c.reply(Stage::Trajectory, key.as_str(), serialize(&AgentAction::Invoke(args)));
    }
    c.reply(Stage::Trajectory, key.as_str(), answer(q.correct_choice()));
    generate_trajectory(q, &c, BASE_SYSTEM_PROMPT, &SynthConfig::default(), index).unwrap()
}

#[test]
fn adjudication_prefilters_and_breaks_ties() {
    let cfg = SynthConfig::default();
    let q = item(EvidenceGranularity::Frame, 5);
    let mut it = SynthItem::new("q5");
    it.candidates = vec![
        candidate(
            0,
            &q,
            &[ToolKind::SegmentRetrieve, ToolKind::FramePick, ToolKind::ZoomIn],
        ),
        candidate(1, &q, &[ToolKind::SegmentRetrieve, ToolKind::FramePick]),
    ];
    let mut c = ScriptedClient::new();
    c.reply(Stage::Adjudicate, "q5", "1");
    assert_eq!(adjudicate(&mut it, &c, &cfg), Some(1));
    assert_eq!(it.ranks, vec![(1, 1)]);

    // two minimal candidates with equal rank: fewer calls wins, then fewer turns
    let g = item(EvidenceGranularity::Global, 6);
    let mut it = SynthItem::new("q6");
    let mut longer = candidate(0, &g, &[ToolKind::Browse]);
    longer.trajectory.turns.insert(0, longer.trajectory.turns[0].clone());
    it.candidates = vec![longer, candidate(1, &g, &[ToolKind::Browse])];
    let mut c = ScriptedClient::new();
    c.reply(Stage::Adjudicate, "q6", "1, 1");
    assert_eq!(adjudicate(&mut it, &c, &cfg), Some(1));

    let mut it = SynthItem::new("q5");
    it.candidates = vec![candidate(
        0,
        &q,
        &[ToolKind::FramePick, ToolKind::SegmentRetrieve, ToolKind::FramePick],
    )];
    assert_eq!(adjudicate(&mut it, &ScriptedClient::new(), &cfg), None);
}

#[test]
fn curation_band_is_strict() {
    let cfg = SynthConfig::default();
    let qs: Vec<SandboxItem> = (0..11).map(|s| item(EvidenceGranularity::Segment, 100 + s)).collect();
    let mut c = ScriptedClient::new();
    for (i, q) in qs.iter().enumerate() {
        for t in 0..10 {
            let choice = if t < i {
                q.correct_choice()
            } else {
                (q.correct_choice() + 1) % 4
            };
            c.reply(Stage::Curate, q.question.id.as_str(), answer(choice));
        }
    }
    let refs: Vec<&SandboxItem> = qs.iter().collect();
    let out = curate_difficulty(&refs, &c, &cfg);
    let kept: Vec<usize> = out.iter().filter(|r| r.kept).map(|r| r.correct).collect();
    assert_eq!(kept, vec![4, 5, 6]);
    assert_eq!(out[3].correct, 3);
    assert!(!out[3].kept && !out[10].kept);
}

#[test]
fn optimal_profile_keeps_everything() {
    let cfg = SynthConfig::default();
    let corpus = generate_corpus(9, &SandboxConfig::default(), 12).unwrap();
    let client = scripted_client(Profile::Optimal, &corpus, &cfg, 0);
    let report = run_pipeline(&corpus, &client, &cfg);
    assert_eq!(report.kept().count(), 12);
    for (item, q) in report.items.iter().zip(&corpus) {
        let t = item.exemplar_trajectory().unwrap();
        assert_eq!(t.call_count(), minimal_chain(q).len());
        assert_eq!(t.post_visibility_calls(), 0);
        replay(t, q, &cfg.budget).unwrap();
    }
}

#[test]
fn chain_violating_profile_fails_at_order() {
    let cfg = SynthConfig::default();
    let corpus = generate_corpus(9, &SandboxConfig::default(), 6).unwrap();
    let client = scripted_client(Profile::ChainViolating, &corpus, &cfg, 0);
    let report = run_pipeline(&corpus, &client, &cfg);
    let counts = report.stage_counts();
    assert_eq!(counts[&Stage::Order].failed, 6);
    assert_eq!(counts[&Stage::Trajectory].skipped, 6);
    assert_eq!(report.kept().count(), 0);
}

#[test]
fn repairing_profile_logs_repairs() {
    let cfg = SynthConfig::default();
    let corpus = generate_corpus(9, &SandboxConfig::default(), 6).unwrap();
    let client = scripted_client(Profile::Repairing, &corpus, &cfg, 0);
    let report = run_pipeline(&corpus, &client, &cfg);
    assert_eq!(report.kept().count(), 6);
    for (item, q) in report.items.iter().zip(&corpus) {
        assert!(!item.candidates[0].repairs.is_empty());
        replay(item.exemplar_trajectory().unwrap(), q, &cfg.budget).unwrap();
    }
}

#[test]
fn replay_detects_tampering() {
    let cfg = SynthConfig::default();
    let q = item(EvidenceGranularity::Region, 7);
    let mut t = candidate(0, &q, &minimal_chain(&q)).trajectory;
    replay(&t, &q, &cfg.budget).unwrap();
    t.turns[1].observation.push('!');
    assert!(replay(&t, &q, &cfg.budget).is_err());
}

#[test]
fn outputs_are_deterministic() {
    let cfg = SynthConfig::default();
    let corpus = generate_corpus(9, &SandboxConfig::default(), 8).unwrap();
    let render = || {
        let client = scripted_client(Profile::Banded, &corpus, &cfg, 3);
        let report = run_pipeline(&corpus, &client, &cfg);
        let (mut a, mut b) = (Vec::new(), Vec::new());
        write_exemplars(&mut a, &report).unwrap();
        write_provenance(&mut b, &report).unwrap();
        (a, b)
    };
    assert_eq!(render(), render());
}
