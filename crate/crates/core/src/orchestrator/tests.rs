use proptest::prelude::*;
use serde_json::json;

use super::*;
use crate::fixtures;
use crate::xml::emit_case;

const SHORT_RUN: (&str, &str) = ("<run tmax=\"2\" tout=\"0.1\"", "<run tmax=\"0.1\" tout=\"0.05\"");

fn c1_xml() -> String {
    emit_case(&fixtures::c1_dam_break()).unwrap()
}

fn fixture_reply(id: &str, replace: &[(&str, &str)]) -> CaseReply {
    CaseReply {
        fixture: Some(id.into()),
        replace: replace.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect(),
        rationale: format!("case {id}"),
        ..CaseReply::default()
    }
}

fn rule(replies: Vec<CaseReply>) -> CaseRule {
    CaseRule {
        when: When::default(),
        replies,
    }
}

fn tool_rule(keys: &[&str], replies: Vec<ToolChoice>) -> ToolRule {
    ToolRule {
        when: When {
            any_text: keys.iter().map(|s| s.to_string()).collect(),
            ..When::default()
        },
        replies,
    }
}

fn choice(tool: &str, args: Value) -> ToolChoice {
    ToolChoice {
        tool: tool.into(),
        args,
        rationale: format!("use {tool}"),
    }
}

/// Short C1 run, unchanged revisions, and a few analysis routes.
fn short_script() -> Script {
    Script {
        propose: vec![rule(vec![fixture_reply("C1", &[SHORT_RUN])])],
        revise: vec![rule(vec![CaseReply {
            rationale: "kept".into(),
            ..CaseReply::default()
        }])],
        tools: vec![
            tool_rule(&["run-off"], vec![choice("runout_distance", json!({"group": 10}))]),
            tool_rule(&["vorticity"], vec![choice("render_snapshot", json!({"time": 0.1, "color_by": "vorticity"}))]),
            tool_rule(
                &["force"],
                vec![choice("reaction_force", json!({"group": "floor"})), choice("reaction_force", json!({"group": 1}))],
            ),
            tool_rule(&["moment"], vec![choice("bending_moment", json!({"group": 1}))]),
            tool_rule(&["volume"], vec![choice("debris_volume", json!({}))]),
        ],
    }
}

fn open(dir: &Path, script: Script, config: SessionConfig) -> Session {
    Session::start(
        "s1",
        dir,
        InputEnvelope::text("2D dam break of a debris column"),
        Box::new(ScriptedPlanner::new(script)),
        config,
        SkillContext::builtin(),
    )
    .unwrap()
}

fn kinds(s: &Session) -> Vec<&'static str> {
    s.transcript()
        .iter()
        .map(|e| match &e.kind {
            EventKind::SessionStarted { .. } => "started",
            EventKind::DraftProposed { .. } => "proposed",
            EventKind::ParseFailed { .. } => "parse_failed",
            EventKind::AutoRepair => "auto_repair",
            EventKind::DraftValidated { .. } => "validated",
            EventKind::PlannerFailed { .. } => "planner_failed",
            EventKind::HitlRound { .. } => "round",
            EventKind::CapExceeded { .. } => "cap",
            EventKind::Approved { .. } => "approved",
            EventKind::Restarted => "restarted",
            EventKind::Rejected { .. } => "rejected",
            EventKind::RunStarted { .. } => "run_started",
            EventKind::Progress { .. } => "progress",
            EventKind::RunCompleted { .. } => "run_completed",
            EventKind::Instability { .. } => "instability",
            EventKind::RunFailed { .. } => "run_failed",
            EventKind::ToolRequested { .. } => "tool_requested",
            EventKind::ToolSelected { .. } => "tool_selected",
            EventKind::ToolRejected { .. } => "tool_rejected",
            EventKind::ToolCompleted { .. } => "tool_completed",
            EventKind::ToolFailed { .. } => "tool_failed",
            EventKind::Closed => "closed",
        })
        .collect()
}

#[test]
fn builtin_planner_drafts_c1_for_review() {
    let dir = tempfile::tempdir().unwrap();
    let config = SessionConfig {
        truth: Some(fixtures::c1_truth()),
        ..SessionConfig::default()
    };
    let s = Session::start(
        "c1",
        dir.path(),
        InputEnvelope::text("C1 dam break"),
        Box::new(ScriptedPlanner::builtin()),
        config,
        SkillContext::builtin(),
    )
    .unwrap();
    assert_eq!(s.phase(), Phase::AwaitingApproval);
    assert!(s.validation().unwrap().passed, "{}", s.validation().unwrap().to_text());
    assert_eq!(s.draft(), Some(&fixtures::c1_dam_break()));
    let snap = s.snapshot();
    let preview = snap.preview.unwrap();
    assert!(fs::read_to_string(dir.path().join(&preview)).unwrap().starts_with("<svg"));
    assert_eq!(kinds(&s), ["started", "proposed", "validated"]);
}

#[test]
fn empty_envelope_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let r = Session::start(
        "e",
        dir.path(),
        InputEnvelope::text("   "),
        Box::new(ScriptedPlanner::builtin()),
        SessionConfig::default(),
        SkillContext::builtin(),
    );
    assert!(matches!(r, Err(SessionError::EmptyEnvelope)));
}

#[test]
fn malformed_draft_gets_one_automatic_repair() {
    let broken = CaseReply {
        xml: Some("<case dim=\"2\"><constants>".into()),
        ..CaseReply::default()
    };
    let repair_rule = |replies| CaseRule {
        when: When {
            automatic: Some(true),
            ..When::default()
        },
        replies,
    };
    let dir = tempfile::tempdir().unwrap();
    let script = Script {
        propose: vec![rule(vec![broken.clone()])],
        revise: vec![repair_rule(vec![fixture_reply("C1", &[])])],
        ..Script::default()
    };
    let s = open(dir.path(), script, SessionConfig::default());
    assert_eq!(kinds(&s), ["started", "proposed", "parse_failed", "auto_repair", "proposed", "validated"]);
    assert_eq!(s.phase(), Phase::AwaitingApproval);
    assert_eq!(s.hitl_rounds(), 0);

    let dir = tempfile::tempdir().unwrap();
    let script = Script {
        propose: vec![rule(vec![broken.clone()])],
        revise: vec![repair_rule(vec![broken])],
        ..Script::default()
    };
    let s = open(dir.path(), script, SessionConfig::default());
    assert_eq!(kinds(&s), ["started", "proposed", "parse_failed", "auto_repair", "proposed", "parse_failed"]);
    assert_eq!(s.phase(), Phase::Revising);
    assert_eq!(s.validation().unwrap().modes().into_iter().collect::<Vec<_>>(), [FailureMode::F5]);
}

#[test]
fn planner_failure_leaves_the_session_drafting() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = open(dir.path(), Script::default(), SessionConfig::default());
    assert_eq!(s.phase(), Phase::Drafting);
    assert_eq!(kinds(&s), ["started", "planner_failed"]);
    assert!(s.hitl_turn(Action::Approve).is_err());
    assert!(s.hitl_turn(Action::Message { text: "hi".into() }).is_err());
    s.hitl_turn(Action::Restart).unwrap();
    assert_eq!(s.phase(), Phase::Drafting);
}

#[test]
fn approve_at_round_zero_is_a_zero_shot_candidate() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = open(dir.path(), short_script(), SessionConfig::default());
    s.hitl_turn(Action::Approve).unwrap();
    assert_eq!(s.phase(), Phase::Simulating);
    assert!(matches!(s.transcript().last().unwrap().kind, EventKind::Approved { round: 0, zero_shot: true }));
    // A second approve is outside AwaitingApproval.
    let err = s.hitl_turn(Action::Approve).unwrap_err();
    assert!(matches!(err, SessionError::Rejected { phase: Phase::Simulating, .. }));
    assert_eq!(s.phase(), Phase::Simulating);
}

#[test]
fn rounds_are_counted_and_tagged_past_the_cap() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = open(dir.path(), short_script(), SessionConfig::default());
    for k in 1..=5 {
        s.hitl_turn(Action::Message { text: format!("change {k}") }).unwrap();
    }
    assert_eq!(s.hitl_rounds(), 5);
    assert!(s.converged());
    s.hitl_turn(Action::Restart).unwrap();
    assert_eq!(s.hitl_rounds(), 5);
    s.hitl_turn(Action::DirectEdit { xml: c1_xml() }).unwrap();
    assert_eq!(s.hitl_rounds(), 6);
    assert!(!s.converged());
    s.hitl_turn(Action::Message { text: "again".into() }).unwrap();
    assert_eq!(kinds(&s).iter().filter(|k| **k == "cap").count(), 1);
    // Past the cap the session still proceeds.
    s.hitl_turn(Action::Approve).unwrap();
    assert!(matches!(s.transcript().last().unwrap().kind, EventKind::Approved { round: 7, zero_shot: false }));
    assert_eq!(s.revision_count(), s.hitl_rounds());
}

#[test]
fn direct_edit_follows_the_planner_path() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = open(dir.path(), short_script(), SessionConfig::default());
    let mut case = fixtures::c1_dam_break();
    case.primitives[0].layers = Some(2);
    s.hitl_turn(Action::DirectEdit { xml: emit_case(&case).unwrap() }).unwrap();
    assert_eq!(s.phase(), Phase::AwaitingApproval);
    assert!(s.validation().unwrap().modes().contains(&FailureMode::F3));
    s.hitl_turn(Action::DirectEdit { xml: "<case".into() }).unwrap();
    assert_eq!(s.phase(), Phase::Revising);
    assert!(s.validation().unwrap().modes().contains(&FailureMode::F5));
    assert!(!kinds(&s).contains(&"auto_repair"));
    assert!(s.hitl_turn(Action::Approve).is_err());
    s.hitl_turn(Action::Message { text: "fix it".into() }).unwrap();
    assert_eq!(s.hitl_rounds(), 3);
}

#[test]
fn run_then_analyse() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = open(dir.path(), short_script(), SessionConfig::default());
    assert!(s.postproc_request("run-off").is_err());
    s.hitl_turn(Action::Approve).unwrap();
    s.run_phase2().unwrap();
    assert_eq!(s.phase(), Phase::PostProcessing);
    assert_eq!(s.run().unwrap().frames, 3);
    let times: Vec<f64> = s
        .transcript()
        .iter()
        .filter_map(|e| match e.kind {
            EventKind::Progress { time, .. } => Some(time),
            _ => None,
        })
        .collect();
    assert!(times.len() >= 3);
    assert!(times.windows(2).all(|w| w[0] <= w[1]));

    s.postproc_request("plot run-off distance of the debris").unwrap();
    let EventKind::ToolCompleted { tool, files, .. } = &s.transcript().last().unwrap().kind else {
        panic!("{:?}", s.transcript().last())
    };
    assert_eq!(tool, "runout_distance");
    let files = files.clone();
    let first = fs::read(dir.path().join(&files[0])).unwrap();
    s.postproc_request("plot run-off distance of the debris").unwrap();
    let EventKind::ToolCompleted { files: again, .. } = &s.transcript().last().unwrap().kind else {
        panic!()
    };
    assert_ne!(&files, again);
    assert_eq!(first, fs::read(dir.path().join(&again[0])).unwrap());

    s.postproc_request("colour by vorticity").unwrap();
    assert!(matches!(&s.transcript().last().unwrap().kind, EventKind::ToolFailed { message, .. } if message.contains("vorticity")));

    // Bad arguments go back to the planner once.
    s.postproc_request("floor force").unwrap();
    let k = kinds(&s);
    assert_eq!(&k[k.len() - 5..], ["tool_requested", "tool_selected", "tool_rejected", "tool_selected", "tool_completed"]);
    s.postproc_request("moment").unwrap();
    let k = kinds(&s);
    assert_eq!(&k[k.len() - 5..], ["tool_requested", "tool_selected", "tool_rejected", "tool_selected", "tool_failed"]);

    s.postproc_request("debris volume").unwrap();
    assert!(matches!(&s.transcript().last().unwrap().kind, EventKind::ToolFailed { message, .. } if message.contains("debris_volume")));
    assert_eq!(s.phase(), Phase::PostProcessing);

    // A message from post-processing goes back to review.
    s.hitl_turn(Action::Message { text: "longer run".into() }).unwrap();
    assert_eq!(s.phase(), Phase::AwaitingApproval);
    assert_eq!(s.hitl_rounds(), 1);
}

#[test]
fn blow_up_returns_to_revision() {
    let dir = tempfile::tempdir().unwrap();
    let script = Script {
        propose: vec![rule(vec![fixture_reply("C1", &[("cs=\"28.01\"", "cs=\"0.05\"")])])],
        ..Script::default()
    };
    let mut s = open(dir.path(), script, SessionConfig::default());
    s.hitl_turn(Action::Approve).unwrap();
    s.run_phase2().unwrap();
    assert_eq!(s.phase(), Phase::Revising);
    assert!(kinds(&s).contains(&"instability"));
    assert!(s.run().unwrap().instability.is_some());
}

fn scripted_session(dir: &Path) -> Session {
    let mut s = open(dir, short_script(), SessionConfig::default());
    s.hitl_turn(Action::Message { text: "looks fine".into() }).unwrap();
    s.hitl_turn(Action::Approve).unwrap();
    s.run_phase2().unwrap();
    s.postproc_request("run-off").unwrap();
    s.hitl_turn(Action::Close).unwrap();
    s
}

#[test]
fn transcript_is_byte_reproducible() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let sa = scripted_session(a.path());
    let sb = scripted_session(b.path());
    let ta = fs::read(a.path().join(TRANSCRIPT_FILE)).unwrap();
    assert_eq!(ta, fs::read(b.path().join(TRANSCRIPT_FILE)).unwrap());
    assert_eq!(ta, sa.transcript_jsonl().as_bytes());
    assert_eq!(sa.phase(), Phase::Closed);
    assert_eq!(sb.snapshot().artifacts, sa.snapshot().artifacts);
    let parsed: Vec<Event> = sa.transcript_jsonl().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(parsed, sa.transcript());
}

#[derive(Debug, Clone)]
enum Op {
    Message,
    EditGood,
    EditBad,
    Approve,
    Restart,
    Close,
    /// Claim a run and report a failure without solving.
    Run,
    Analyse,
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        Just(Op::Message),
        Just(Op::EditGood),
        Just(Op::EditBad),
        Just(Op::Approve),
        Just(Op::Restart),
        Just(Op::Close),
        Just(Op::Run),
        Just(Op::Analyse),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, ..ProptestConfig::default() })]

    #[test]
    fn simulating_is_only_entered_by_approval(ops in prop::collection::vec(op(), 1..14)) {
        let dir = tempfile::tempdir().unwrap();
        let mut s = open(dir.path(), short_script(), SessionConfig { hitl_cap: 2, ..SessionConfig::default() });
        let good = c1_xml();
        let mut revisions = 0;
        for op in ops {
            let before = s.phase();
            let action = match op {
                Op::Message => Some(Action::Message { text: "tweak".into() }),
                Op::EditGood => Some(Action::DirectEdit { xml: good.clone() }),
                Op::EditBad => Some(Action::DirectEdit { xml: "<case dim=\"2\">".into() }),
                Op::Approve => Some(Action::Approve),
                Op::Restart => Some(Action::Restart),
                Op::Close => Some(Action::Close),
                Op::Run => {
                    if let Ok(job) = s.begin_run() {
                        s.finish_run(&job, Err("skipped".into())).unwrap();
                    }
                    None
                }
                Op::Analyse => {
                    let _ = s.postproc_request("run-off");
                    None
                }
            };
            if let Some(a) = action {
                let revision = a.is_revision();
                if s.hitl_turn(a).is_ok() && revision {
                    revisions += 1;
                }
            }
            prop_assert!(s.phase() != Phase::Simulating || before == Phase::Simulating || matches!(s.transcript().last().unwrap().kind, EventKind::Approved { .. }), "entered Simulating without approval");
            prop_assert_eq!(s.hitl_rounds(), revisions);
            prop_assert_eq!(s.revision_count(), revisions);
            prop_assert_eq!(s.converged(), revisions <= 2);
        }
        let t = s.transcript();
        for w in t.windows(2) {
            if w[1].phase == Phase::Simulating && w[0].phase != Phase::Simulating {
                prop_assert!(matches!(w[1].kind, EventKind::Approved { .. }), "transition at seq {}", w[1].seq);
            }
        }
        for (k, e) in t.iter().enumerate() {
            prop_assert_eq!(e.seq, k as u64);
        }
    }
}
