//! Session state machine for the three-phase workflow: drafting a case with
//! a planner and human review, an approved deterministic run, then
//! tool-based analysis. The planner only proposes; every transition is made
//! here after validation.

mod planner;
mod skill;

use std::fs::{self, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

pub use planner::{
    fingerprint, Attachment, CaseReply, CaseRule, InputEnvelope, Planner, PlannerError, Proposal, RevisionRequest, Script,
    ScriptedPlanner, ToolChoice, ToolRequest, ToolRule, When,
};
pub use skill::{SkillContext, SkillSection};

use crate::case::CaseDefinition;
use crate::particles::generate_particles;
use crate::pipeline::{run_pipeline_with, PipelineOptions, Progress, RunSummary};
use crate::postproc::registry::{descriptor, descriptors, invoke_tool, validate_args, ToolError};
use crate::postproc::RunData;
use crate::render::{render_snapshot, ViewSpec};
use crate::validate::{
    check_boundary_thickness, check_interface, generation_failure_report, parse_failure_report, validate_all, FailureMode,
    GroundTruthSpec, ValidationReport,
};
use crate::xml::parse_case;

pub const TRANSCRIPT_FILE: &str = "transcript.jsonl";
pub const DEFAULT_HITL_CAP: u32 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Phase {
    Drafting,
    AwaitingApproval,
    Simulating,
    PostProcessing,
    Revising,
    Closed,
}

/// User turn in a session.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum Action {
    Message { text: String },
    DirectEdit { xml: String },
    Approve,
    Restart,
    Close,
}

impl Action {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Message { .. } => "message",
            Self::DirectEdit { .. } => "direct_edit",
            Self::Approve => "approve",
            Self::Restart => "restart",
            Self::Close => "close",
        }
    }

    /// Message and direct edit count as revision rounds.
    pub fn is_revision(&self) -> bool {
        matches!(self, Self::Message { .. } | Self::DirectEdit { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EventKind {
    SessionStarted {
        text: Option<String>,
        image: Option<Attachment>,
        xml_supplied: bool,
        skill_version: String,
    },
    DraftProposed {
        source: String,
        draft: String,
        rationale: String,
    },
    ParseFailed {
        draft: String,
        report: ValidationReport,
    },
    AutoRepair,
    DraftValidated {
        draft: String,
        passed: bool,
        modes: Vec<FailureMode>,
        report: String,
        preview: Option<String>,
        particles: usize,
    },
    PlannerFailed {
        operation: String,
        message: String,
    },
    HitlRound {
        round: u32,
        action: String,
        text: Option<String>,
    },
    CapExceeded {
        rounds: u32,
        cap: u32,
    },
    Approved {
        round: u32,
        zero_shot: bool,
    },
    Restarted,
    Rejected {
        action: String,
        reason: String,
    },
    RunStarted {
        run_dir: String,
    },
    Progress {
        fraction: f64,
        time: f64,
        frame: Option<usize>,
    },
    RunCompleted {
        run_dir: String,
        frames: usize,
        final_time: f64,
        steps: u64,
        particles: usize,
    },
    Instability {
        run_dir: String,
        frames: usize,
        message: String,
    },
    RunFailed {
        message: String,
    },
    ToolRequested {
        text: String,
    },
    ToolSelected {
        tool: String,
        args: Value,
        rationale: String,
        attempt: u32,
    },
    ToolRejected {
        tool: String,
        message: String,
    },
    ToolCompleted {
        tool: String,
        files: Vec<String>,
        summary: String,
    },
    ToolFailed {
        tool: String,
        message: String,
    },
    Closed,
}

/// Transcript entry. `phase` is the phase after the event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub seq: u64,
    pub phase: Phase,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("input envelope is empty: give text, an image or a case document")]
    EmptyEnvelope,
    #[error("{action} is not allowed in phase {phase:?}")]
    Rejected { action: String, phase: Phase },
    #[error("session I/O at {path}: {message}")]
    Io { path: PathBuf, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    /// Rounds after which the session is tagged unconverged.
    pub hitl_cap: u32,
    /// Reference geometry; without it only the reference-free checks run.
    pub truth: Option<GroundTruthSpec>,
    pub csv_only: bool,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            hitl_cap: DEFAULT_HITL_CAP,
            truth: None,
            csv_only: false,
        }
    }
}

/// Latest run of a session; paths relative to the session directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunHandle {
    pub dir: String,
    pub frames: usize,
    pub final_time: f64,
    pub instability: Option<String>,
}

/// Read-only view of a session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub id: String,
    pub phase: Phase,
    pub hitl_rounds: u32,
    pub converged: bool,
    pub draft_xml: Option<String>,
    pub validation: Option<ValidationReport>,
    pub preview: Option<String>,
    pub run: Option<RunHandle>,
    pub artifacts: Vec<String>,
    pub events: usize,
}

/// Work order for a phase-2 run, detached from the session so it can run
/// on another thread.
#[derive(Debug, Clone)]
pub struct RunJob {
    pub case: CaseDefinition,
    pub dir: PathBuf,
    pub rel_dir: String,
    pub options: PipelineOptions,
}

impl RunJob {
    pub fn execute(&self, progress: impl FnMut(&Progress)) -> Result<RunSummary, String> {
        run_pipeline_with(&self.case, &self.dir, &self.options, progress).map_err(|e| e.to_string())
    }
}

pub struct Session {
    pub id: String,
    dir: PathBuf,
    config: SessionConfig,
    skill: SkillContext,
    planner: Box<dyn Planner>,
    envelope: InputEnvelope,
    phase: Phase,
    draft_xml: Option<String>,
    draft: Option<CaseDefinition>,
    runnable: bool,
    validation: Option<ValidationReport>,
    preview: Option<String>,
    hitl_rounds: u32,
    converged: bool,
    transcript: Vec<Event>,
    run: Option<RunHandle>,
    run_data: Option<RunData>,
    artifacts: Vec<String>,
    drafts: u32,
    runs: u32,
    analyses: u32,
}

fn rel(p: &Path, base: &Path) -> String {
    p.strip_prefix(base)
        .unwrap_or(p)
        .components()
        .map(|c| c.as_os_str().to_string_lossy())
        .collect::<Vec<_>>()
        .join("/")
}

impl Session {
    /// Open a session in `dir` and draft the first case from `envelope`.
    pub fn start(
        id: &str,
        dir: &Path,
        envelope: InputEnvelope,
        planner: Box<dyn Planner>,
        config: SessionConfig,
        skill: SkillContext,
    ) -> Result<Self, SessionError> {
        if envelope.is_empty() {
            return Err(SessionError::EmptyEnvelope);
        }
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        let transcript = dir.join(TRANSCRIPT_FILE);
        fs::write(&transcript, "").map_err(|e| io_err(&transcript, e))?;
        let mut s = Self {
            id: id.into(),
            dir: dir.to_path_buf(),
            config,
            skill,
            planner,
            envelope,
            phase: Phase::Drafting,
            draft_xml: None,
            draft: None,
            runnable: false,
            validation: None,
            preview: None,
            hitl_rounds: 0,
            converged: true,
            transcript: Vec::new(),
            run: None,
            run_data: None,
            artifacts: Vec::new(),
            drafts: 0,
            runs: 0,
            analyses: 0,
        };
        s.push(EventKind::SessionStarted {
            text: s.envelope.text.clone(),
            image: s.envelope.image.clone(),
            xml_supplied: s.envelope.xml.is_some(),
            skill_version: s.skill.version.clone(),
        })?;
        s.propose("propose")?;
        Ok(s)
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn hitl_rounds(&self) -> u32 {
        self.hitl_rounds
    }

    pub fn converged(&self) -> bool {
        self.converged
    }

    pub fn transcript(&self) -> &[Event] {
        &self.transcript
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn draft(&self) -> Option<&CaseDefinition> {
        self.draft.as_ref()
    }

    pub fn validation(&self) -> Option<&ValidationReport> {
        self.validation.as_ref()
    }

    pub fn run(&self) -> Option<&RunHandle> {
        self.run.as_ref()
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot {
            id: self.id.clone(),
            phase: self.phase,
            hitl_rounds: self.hitl_rounds,
            converged: self.converged,
            draft_xml: self.draft_xml.clone(),
            validation: self.validation.clone(),
            preview: self.preview.clone(),
            run: self.run.clone(),
            artifacts: self.artifacts.clone(),
            events: self.transcript.len(),
        }
    }

    /// Transcript as JSON lines; identical to the transcript file.
    pub fn transcript_jsonl(&self) -> String {
        self.transcript.iter().map(|e| event_line(e)).collect()
    }

    fn push(&mut self, kind: EventKind) -> Result<(), SessionError> {
        let event = Event {
            seq: self.transcript.len() as u64,
            phase: self.phase,
            kind,
        };
        let path = self.dir.join(TRANSCRIPT_FILE);
        let mut f = OpenOptions::new().append(true).create(true).open(&path).map_err(|e| io_err(&path, e))?;
        f.write_all(event_line(&event).as_bytes()).map_err(|e| io_err(&path, e))?;
        self.transcript.push(event);
        Ok(())
    }

    fn artifact(&mut self, sub: &str, name: &str, text: &str) -> Result<String, SessionError> {
        let dir = self.dir.join(sub);
        fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
        let path = dir.join(name);
        fs::write(&path, text).map_err(|e| io_err(&path, e))?;
        let r = rel(&path, &self.dir);
        self.artifacts.push(r.clone());
        Ok(r)
    }

    fn planner_failed(&mut self, operation: &str, e: PlannerError) -> Result<(), SessionError> {
        self.push(EventKind::PlannerFailed {
            operation: operation.into(),
            message: e.0,
        })
    }

    fn propose(&mut self, source: &str) -> Result<(), SessionError> {
        match self.planner.propose_case(&self.envelope, &self.skill) {
            Ok(p) => self.accept_draft(source, p, true),
            Err(e) => {
                self.phase = Phase::Drafting;
                self.planner_failed("propose_case", e)
            }
        }
    }

    /// Parse, generate, validate and preview a draft. A parse failure goes
    /// back to the planner once when `repair` is set.
    fn accept_draft(&mut self, source: &str, proposal: Proposal, repair: bool) -> Result<(), SessionError> {
        self.drafts += 1;
        let k = self.drafts;
        let draft = self.artifact("drafts", &format!("draft_{k:03}.xml"), &proposal.xml)?;
        self.push(EventKind::DraftProposed {
            source: source.into(),
            draft: draft.clone(),
            rationale: proposal.rationale.clone(),
        })?;
        self.draft_xml = Some(proposal.xml.clone());
        self.preview = None;
        let case = match parse_case(&proposal.xml) {
            Ok(c) => c,
            Err(e) => {
                let report = parse_failure_report(&e);
                self.draft = None;
                self.runnable = false;
                self.validation = Some(report.clone());
                self.phase = Phase::Revising;
                self.push(EventKind::ParseFailed { draft, report: report.clone() })?;
                if repair {
                    self.push(EventKind::AutoRepair)?;
                    let req = RevisionRequest {
                        draft_xml: proposal.xml,
                        message: String::new(),
                        feedback: report.to_text(),
                        automatic: true,
                    };
                    match self.planner.revise_case(&req, &self.skill) {
                        Ok(p) => return self.accept_draft("repair", p, false),
                        Err(e) => return self.planner_failed("revise_case", e),
                    }
                }
                return Ok(());
            }
        };
        let (report, preview, particles) = match generate_particles(&case) {
            Ok(frame) => {
                let report = match &self.config.truth {
                    Some(t) => validate_all(&case, &frame, t, &case.numerics),
                    None => {
                        let mut f = check_interface(&frame, &case.numerics, &[]);
                        f.extend(check_boundary_thickness(&case, &frame, &case.numerics));
                        ValidationReport::from_findings(f)
                    }
                };
                let view = ViewSpec {
                    title: format!("draft {k}"),
                    ..ViewSpec::side("kind")
                };
                let svg = render_snapshot(&frame, &view).expect("built-in view is valid");
                let preview = self.artifact("drafts", &format!("preview_{k:03}.svg"), &svg)?;
                (report, Some(preview), frame.len())
            }
            Err(e) => (generation_failure_report(&e), None, 0),
        };
        let report_path = self.artifact("drafts", &format!("validation_{k:03}.txt"), &report.to_text())?;
        self.runnable = preview.is_some();
        self.draft = Some(case);
        self.validation = Some(report.clone());
        self.preview = preview.clone();
        self.phase = if self.runnable { Phase::AwaitingApproval } else { Phase::Revising };
        self.push(EventKind::DraftValidated {
            draft,
            passed: report.passed,
            modes: report.modes().into_iter().collect(),
            report: report_path,
            preview,
            particles,
        })
    }

    fn reject(&mut self, action: &Action, reason: &str) -> Result<(), SessionError> {
        self.push(EventKind::Rejected {
            action: action.name().into(),
            reason: reason.into(),
        })?;
        Err(SessionError::Rejected {
            action: action.name().into(),
            phase: self.phase,
        })
    }

    /// Apply one user action.
    pub fn hitl_turn(&mut self, action: Action) -> Result<(), SessionError> {
        let review = matches!(self.phase, Phase::AwaitingApproval | Phase::Revising | Phase::PostProcessing);
        match &action {
            Action::Close if self.phase != Phase::Closed && self.phase != Phase::Simulating => {
                self.phase = Phase::Closed;
                return self.push(EventKind::Closed);
            }
            Action::Restart if review || self.phase == Phase::Drafting => {
                self.push(EventKind::Restarted)?;
                self.run_data = None;
                return self.propose("restart");
            }
            Action::Approve if self.phase == Phase::AwaitingApproval && self.runnable => {
                self.phase = Phase::Simulating;
                let zero_shot = self.hitl_rounds == 0 && self.validation.as_ref().is_some_and(|v| v.passed);
                return self.push(EventKind::Approved {
                    round: self.hitl_rounds,
                    zero_shot,
                });
            }
            Action::Approve if self.phase == Phase::AwaitingApproval => {
                return self.reject(&action, "the draft has no particles to run");
            }
            Action::Message { .. } | Action::DirectEdit { .. } if review => {}
            _ => return self.reject(&action, "not allowed in this phase"),
        }

        self.hitl_rounds += 1;
        let text = match &action {
            Action::Message { text } => Some(text.clone()),
            _ => None,
        };
        self.push(EventKind::HitlRound {
            round: self.hitl_rounds,
            action: action.name().into(),
            text,
        })?;
        if self.hitl_rounds > self.config.hitl_cap && self.converged {
            self.converged = false;
            self.push(EventKind::CapExceeded {
                rounds: self.hitl_rounds,
                cap: self.config.hitl_cap,
            })?;
        }
        match action {
            Action::Message { text } => {
                let req = RevisionRequest {
                    draft_xml: self.draft_xml.clone().unwrap_or_default(),
                    message: text,
                    feedback: self.validation.as_ref().map(|v| v.to_text()).unwrap_or_default(),
                    automatic: false,
                };
                match self.planner.revise_case(&req, &self.skill) {
                    Ok(p) => self.accept_draft("revise", p, true),
                    Err(e) => self.planner_failed("revise_case", e),
                }
            }
            Action::DirectEdit { xml } => self.accept_draft(
                "user_edit",
                Proposal {
                    xml,
                    rationale: "edited by the user".into(),
                },
                false,
            ),
            _ => unreachable!(),
        }
    }

    /// Claim the approved draft for a run.
    pub fn begin_run(&mut self) -> Result<RunJob, SessionError> {
        if self.phase != Phase::Simulating {
            return Err(SessionError::Rejected {
                action: "run".into(),
                phase: self.phase,
            });
        }
        self.runs += 1;
        let rel_dir = format!("runs/run_{:03}", self.runs);
        self.run = None;
        self.run_data = None;
        self.push(EventKind::RunStarted { run_dir: rel_dir.clone() })?;
        Ok(RunJob {
            case: self.draft.clone().expect("approved drafts are parsed"),
            dir: self.dir.join(&rel_dir),
            rel_dir,
            options: PipelineOptions {
                truth: self.config.truth.clone(),
                csv_only: self.config.csv_only,
            },
        })
    }

    pub fn record_progress(&mut self, p: &Progress) -> Result<(), SessionError> {
        if self.phase != Phase::Simulating {
            return Ok(());
        }
        self.push(EventKind::Progress {
            fraction: p.fraction,
            time: p.time,
            frame: p.frame,
        })
    }

    pub fn finish_run(&mut self, job: &RunJob, result: Result<RunSummary, String>) -> Result<(), SessionError> {
        match result {
            Ok(s) => {
                self.run = Some(RunHandle {
                    dir: job.rel_dir.clone(),
                    frames: s.frames_written,
                    final_time: s.final_time,
                    instability: s.instability.as_ref().map(|e| e.to_string()),
                });
                self.artifacts.push(format!("{}/", job.rel_dir));
                if let Some(e) = s.instability {
                    self.phase = Phase::Revising;
                    self.push(EventKind::Instability {
                        run_dir: job.rel_dir.clone(),
                        frames: s.frames_written,
                        message: e.to_string(),
                    })
                } else {
                    self.phase = Phase::PostProcessing;
                    self.push(EventKind::RunCompleted {
                        run_dir: job.rel_dir.clone(),
                        frames: s.frames_written,
                        final_time: s.final_time,
                        steps: s.steps,
                        particles: s.particles,
                    })
                }
            }
            Err(message) => {
                self.phase = Phase::Revising;
                self.push(EventKind::RunFailed { message })
            }
        }
    }

    /// Run the approved case to completion on the calling thread.
    pub fn run_phase2(&mut self) -> Result<(), SessionError> {
        let job = self.begin_run()?;
        let mut seen = Vec::new();
        let result = job.execute(|p| seen.push(p.clone()));
        for p in &seen {
            self.record_progress(p)?;
        }
        self.finish_run(&job, result)
    }

    /// Let the planner pick a tool for `text`, check its arguments and run
    /// it on the latest run.
    pub fn postproc_request(&mut self, text: &str) -> Result<(), SessionError> {
        if self.phase != Phase::PostProcessing {
            self.push(EventKind::Rejected {
                action: "postproc_request".into(),
                reason: "not allowed in this phase".into(),
            })?;
            return Err(SessionError::Rejected {
                action: "postproc_request".into(),
                phase: self.phase,
            });
        }
        self.push(EventKind::ToolRequested { text: text.into() })?;
        let mut request = ToolRequest {
            text: text.into(),
            tools: descriptors(),
            feedback: None,
        };
        let mut attempt = 1;
        let (choice, args) = loop {
            let choice = match self.planner.select_tool(&request, &self.skill) {
                Ok(c) => c,
                Err(e) => return self.planner_failed("select_tool", e),
            };
            self.push(EventKind::ToolSelected {
                tool: choice.tool.clone(),
                args: choice.args.clone(),
                rationale: choice.rationale.clone(),
                attempt,
            })?;
            let Some(desc) = descriptor(&choice.tool) else {
                return self.push(EventKind::ToolFailed {
                    tool: choice.tool.clone(),
                    message: ToolError::UnknownTool(choice.tool).to_string(),
                });
            };
            match validate_args(&desc, &choice.args) {
                Ok(_) => break (choice.clone(), choice.args),
                Err(e) => {
                    let message = e.to_string();
                    if attempt >= 2 {
                        return self.push(EventKind::ToolFailed { tool: choice.tool, message });
                    }
                    self.push(EventKind::ToolRejected {
                        tool: choice.tool,
                        message: message.clone(),
                    })?;
                    request.feedback = Some(message);
                    attempt += 1;
                }
            }
        };
        let run_dir = self.dir.join(&self.run.as_ref().expect("post-processing has a run").dir);
        if self.run_data.is_none() {
            match RunData::load(&run_dir) {
                Ok(d) => self.run_data = Some(d),
                Err(e) => {
                    return self.push(EventKind::ToolFailed {
                        tool: choice.tool,
                        message: e.to_string(),
                    })
                }
            }
        }
        self.analyses += 1;
        let out = self.dir.join(format!("analyses/analysis_{:03}", self.analyses));
        let result = invoke_tool(self.run_data.as_ref().unwrap(), &choice.tool, &args, &out);
        match result {
            Ok(o) => {
                let files: Vec<String> = o.files.iter().map(|f| rel(f, &self.dir)).collect();
                self.artifacts.extend(files.iter().cloned());
                self.push(EventKind::ToolCompleted {
                    tool: o.tool,
                    files,
                    summary: o.summary,
                })
            }
            Err(e) => self.push(EventKind::ToolFailed {
                tool: choice.tool,
                message: e.to_string(),
            }),
        }
    }

    /// Revision actions recorded in the transcript.
    pub fn revision_count(&self) -> u32 {
        self.transcript
            .iter()
            .filter(|e| matches!(e.kind, EventKind::HitlRound { .. }))
            .count() as u32
    }
}

fn event_line(e: &Event) -> String {
    let mut s = serde_json::to_string(e).expect("events serialize");
    s.push('\n');
    s
}

fn io_err(path: &Path, e: std::io::Error) -> SessionError {
    SessionError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

#[cfg(test)]
mod tests;
