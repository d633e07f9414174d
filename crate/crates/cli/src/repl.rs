use std::fs;
use std::io::{BufRead, Write};
use std::path::Path;

use anyhow::Context as _;
use sphflow_core::orchestrator::{Action, Attachment, Event, EventKind, InputEnvelope, Phase, Session, SessionConfig, SkillContext};

use crate::{usage, CliResult, PlannerFactory, ReplArgs, EXIT_OK};

const HELP: &str = "\
commands:
  :approve         approve the draft and run it
  :restart         draft again from the original input
  :edit <path>     replace the draft with a document you wrote
  :ask <request>   run an analysis on the latest run
  :status          phase, rounds and validation
  :quit            close the session
anything else is sent to the planner as a revision request";

/// One line per event for terminal display.
pub fn describe(e: &Event) -> String {
    let body = match &e.kind {
        EventKind::SessionStarted { skill_version, .. } => format!("session started (skill context v{skill_version})"),
        EventKind::DraftProposed { source, draft, rationale } => format!("draft {draft} from {source}: {rationale}"),
        EventKind::ParseFailed { report, .. } => format!("draft does not parse:\n{}", report.to_text().trim_end()),
        EventKind::AutoRepair => "asking the planner to repair the document".into(),
        EventKind::DraftValidated {
            passed,
            modes,
            preview,
            particles,
            report,
            ..
        } => {
            let modes: Vec<&str> = modes.iter().map(|m| m.code()).collect();
            let verdict = if *passed { "passed".to_string() } else { format!("findings {}", modes.join(",")) };
            format!(
                "validation {verdict}; {particles} particles; report {report}; preview {}",
                preview.as_deref().unwrap_or("none")
            )
        }
        EventKind::PlannerFailed { operation, message } => format!("planner {operation} failed: {message}"),
        EventKind::HitlRound { round, action, .. } => format!("revision round {round} ({action})"),
        EventKind::CapExceeded { rounds, cap } => format!("{rounds} rounds exceed the cap of {cap}; session tagged unconverged"),
        EventKind::Approved { round, zero_shot } => format!("approved after {round} rounds{}", if *zero_shot { " (zero-shot)" } else { "" }),
        EventKind::Restarted => "restarting from the original input".into(),
        EventKind::Rejected { action, reason } => format!("{action} rejected: {reason}"),
        EventKind::RunStarted { run_dir } => format!("run started in {run_dir}"),
        EventKind::Progress { fraction, time, .. } => format!("progress {:.0}% t = {time:.3} s", fraction * 100.0),
        EventKind::RunCompleted { frames, final_time, steps, .. } => format!("run completed: {frames} frames, t = {final_time} s, {steps} steps"),
        EventKind::Instability { frames, message, .. } => format!("run stopped: {message} ({frames} frames kept)"),
        EventKind::RunFailed { message } => format!("run failed: {message}"),
        EventKind::ToolRequested { text } => format!("analysis request: {text}"),
        EventKind::ToolSelected { tool, args, rationale, attempt } => format!("tool {tool} {args} (attempt {attempt}): {rationale}"),
        EventKind::ToolRejected { tool, message } => format!("{tool} arguments rejected: {message}"),
        EventKind::ToolCompleted { summary, files, .. } => format!("{summary}\n    {}", files.join("\n    ")),
        EventKind::ToolFailed { tool, message } => format!("{tool} failed: {message}"),
        EventKind::Closed => "session closed".into(),
    };
    format!("[{:>3}] {:?}: {body}", e.seq, e.phase)
}

pub fn envelope_from(a: &ReplArgs) -> Result<InputEnvelope, crate::CliError> {
    let image = match &a.image {
        Some(p) => {
            let data = fs::read(p).map_err(|e| usage(format!("{}: {e}", p.display())))?;
            let name = p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            let media = match p.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
                Some("png") => "image/png",
                Some("jpg" | "jpeg") => "image/jpeg",
                Some("svg") => "image/svg+xml",
                _ => "application/octet-stream",
            };
            Some(Attachment::new(&name, media, data))
        }
        None => None,
    };
    let xml = match &a.xml {
        Some(p) => Some(fs::read_to_string(p).map_err(|e| usage(format!("{}: {e}", p.display())))?),
        None => None,
    };
    Ok(InputEnvelope {
        text: a.text.clone(),
        image,
        xml,
    })
}

/// Drive a session from `input` lines, echoing events to `out`.
pub fn run_repl(a: &ReplArgs, root: &Path, planner: PlannerFactory, config: SessionConfig, input: impl BufRead, mut out: impl Write) -> CliResult {
    let envelope = envelope_from(a)?;
    if envelope.is_empty() {
        return Err(usage("give --text, --image or --xml"));
    }
    let dir = root.join("sessions").join(&a.name);
    let mut s = Session::start(&a.name, &dir, envelope, planner(), config, SkillContext::builtin())?;
    let mut shown = 0;
    let mut flush = |s: &Session, out: &mut dyn Write| -> std::io::Result<()> {
        for e in &s.transcript()[shown..] {
            writeln!(out, "{}", describe(e))?;
        }
        shown = s.transcript().len();
        out.flush()
    };
    flush(&s, &mut out)?;
    writeln!(out, "{HELP}")?;
    for line in input.lines() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (cmd, rest) = line.split_once(' ').map(|(c, r)| (c, r.trim())).unwrap_or((line, ""));
        let result = match cmd {
            ":approve" => s.hitl_turn(Action::Approve).and_then(|_| s.run_phase2()),
            ":restart" => s.hitl_turn(Action::Restart),
            ":edit" => {
                let xml = fs::read_to_string(rest).with_context(|| format!("reading {rest}"))?;
                s.hitl_turn(Action::DirectEdit { xml })
            }
            ":ask" => s.postproc_request(rest),
            ":status" => {
                let snap = s.snapshot();
                writeln!(
                    out,
                    "phase {:?}, {} rounds, converged {}, validation {}",
                    snap.phase,
                    snap.hitl_rounds,
                    snap.converged,
                    snap.validation.map(|v| if v.passed { "passed" } else { "has findings" }).unwrap_or("none")
                )?;
                Ok(())
            }
            ":help" => {
                writeln!(out, "{HELP}")?;
                Ok(())
            }
            ":quit" | ":close" => s.hitl_turn(Action::Close),
            _ => s.hitl_turn(Action::Message { text: line.into() }),
        };
        flush(&s, &mut out)?;
        if let Err(e) = result {
            writeln!(out, "! {e}")?;
        }
        if s.phase() == Phase::Closed {
            break;
        }
    }
    writeln!(out, "transcript: {}", dir.join(sphflow_core::orchestrator::TRANSCRIPT_FILE).display())?;
    Ok(EXIT_OK)
}
