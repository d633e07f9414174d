use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::skill::SkillContext;
use crate::fixtures;
use crate::postproc::registry::ToolDescriptor;
use crate::xml::emit_case;

/// Opaque input file (sketch, photo). Only the name and fingerprint reach
/// the transcript.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attachment {
    pub name: String,
    pub media_type: String,
    pub sha256: String,
    #[serde(skip)]
    pub data: Vec<u8>,
}

impl Attachment {
    pub fn new(name: &str, media_type: &str, data: Vec<u8>) -> Self {
        Self {
            name: name.into(),
            media_type: media_type.into(),
            sha256: fingerprint(&data),
            data,
        }
    }
}

pub fn fingerprint(data: &[u8]) -> String {
    Sha256::digest(data).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputEnvelope {
    pub text: Option<String>,
    pub image: Option<Attachment>,
    /// Existing case document offered as a starting point.
    pub xml: Option<String>,
}

impl InputEnvelope {
    pub fn text(t: &str) -> Self {
        Self {
            text: Some(t.into()),
            ..Self::default()
        }
    }

    pub fn is_empty(&self) -> bool {
        self.text.as_deref().is_none_or(|t| t.trim().is_empty()) && self.image.is_none() && self.xml.is_none()
    }
}

/// A draft document with the planner's explanation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Proposal {
    pub xml: String,
    pub rationale: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RevisionRequest {
    pub draft_xml: String,
    /// User message; empty for automatic repair rounds.
    pub message: String,
    /// Validation or parse report on the current draft.
    pub feedback: String,
    pub automatic: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolRequest {
    pub text: String,
    pub tools: Vec<ToolDescriptor>,
    /// Why the previous selection was rejected, on the single retry.
    pub feedback: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolChoice {
    pub tool: String,
    pub args: Value,
    pub rationale: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("planner: {0}")]
pub struct PlannerError(pub String);

/// Decision points delegated to a planner. Implementations only return
/// proposals; the session validates and executes them.
pub trait Planner: Send {
    fn propose_case(&mut self, envelope: &InputEnvelope, skill: &SkillContext) -> Result<Proposal, PlannerError>;
    fn revise_case(&mut self, request: &RevisionRequest, skill: &SkillContext) -> Result<Proposal, PlannerError>;
    fn select_tool(&mut self, request: &ToolRequest, skill: &SkillContext) -> Result<ToolChoice, PlannerError>;
}

/// Conditions a scripted rule matches on. Unset fields match anything.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct When {
    /// Case-insensitive substrings; any one suffices.
    pub any_text: Vec<String>,
    pub image_sha256: Option<String>,
    /// Matches repair rounds and tool retries (true) or first calls (false).
    pub automatic: Option<bool>,
}

impl When {
    fn text_matches(&self, text: &str) -> bool {
        let t = text.to_lowercase();
        self.any_text.is_empty() || self.any_text.iter().any(|k| t.contains(&k.to_lowercase()))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CaseReply {
    /// Start from a built-in case (C1..C5).
    pub fixture: Option<String>,
    /// Start from this literal document.
    pub xml: Option<String>,
    /// Literal substitutions applied to the starting document in order.
    pub replace: Vec<(String, String)>,
    pub rationale: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseRule {
    #[serde(default)]
    pub when: When,
    pub replies: Vec<CaseReply>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToolRule {
    #[serde(default)]
    pub when: When,
    pub replies: Vec<ToolChoice>,
}

/// Rule tables for [`ScriptedPlanner`]. The first matching rule answers;
/// successive calls hitting the same rule step through its replies and stay
/// on the last one.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Script {
    pub propose: Vec<CaseRule>,
    pub revise: Vec<CaseRule>,
    pub tools: Vec<ToolRule>,
}

/// Deterministic planner driven by a [`Script`].
#[derive(Debug, Clone)]
pub struct ScriptedPlanner {
    script: Script,
    cursors: BTreeMap<(u8, usize), usize>,
}

fn pick<'a, T>(cursors: &mut BTreeMap<(u8, usize), usize>, key: (u8, usize), replies: &'a [T]) -> Option<&'a T> {
    let c = cursors.entry(key).or_insert(0);
    let r = replies.get((*c).min(replies.len().checked_sub(1)?));
    *c += 1;
    r
}

impl ScriptedPlanner {
    pub fn new(script: Script) -> Self {
        Self {
            script,
            cursors: BTreeMap::new(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        Ok(Self::new(serde_json::from_str(text)?))
    }

    /// Maps the benchmark case names to their fixtures, leaves drafts
    /// unchanged on revision and routes common analysis requests to tools.
    pub fn builtin() -> Self {
        let case = |keys: &[&str], id: &str| CaseRule {
            when: When {
                any_text: keys.iter().map(|s| s.to_string()).collect(),
                ..When::default()
            },
            replies: vec![CaseReply {
                fixture: Some(id.into()),
                rationale: format!("matched the description to reference case {id}"),
                ..CaseReply::default()
            }],
        };
        let tool = |keys: &[&str], name: &str, args: Value| ToolRule {
            when: When {
                any_text: keys.iter().map(|s| s.to_string()).collect(),
                ..When::default()
            },
            replies: vec![ToolChoice {
                tool: name.into(),
                args,
                rationale: format!("request mentions {}", keys[0]),
            }],
        };
        use serde_json::json;
        Self::new(Script {
            propose: vec![
                case(&["c1", "dam break", "dam-break"], "C1"),
                case(&["c2", "barrier"], "C2"),
                case(&["c3", "trench", "channel"], "C3"),
                case(&["c4", "erosion", "erodible"], "C4"),
                case(&["c5", "floating", "blocks"], "C5"),
            ],
            revise: vec![CaseRule {
                when: When::default(),
                replies: vec![CaseReply {
                    rationale: "no scripted revision; draft unchanged".into(),
                    ..CaseReply::default()
                }],
            }],
            tools: vec![
                tool(&["run-off", "runout", "run-out"], "runout_distance", json!({"group": 10})),
                tool(&["front"], "front_position", json!({"group": 10})),
                tool(&["surge"], "surge_height", json!({"group": 10})),
                tool(&["profile"], "surface_profile", json!({"plane_point": [1.0, 0.0, 0.0], "plane_normal": [1.0, 0.0, 0.0], "time": 1.0})),
                tool(&["partition", "overtop", "leak"], "partition_flow", json!({"barrier_group": 20})),
                tool(&["bending"], "bending_moment", json!({"group": 20, "base_point": [0.9, 0.0, 0.0]})),
                tool(&["reaction", "force"], "reaction_force", json!({"group": 20})),
                tool(&["flux"], "mass_flux", json!({"plane_point": [1.0, 0.0, 0.0], "plane_normal": [1.0, 0.0, 0.0]})),
                tool(&["downstream"], "downstream_mass", json!({"group": 10, "plane_point": [1.0, 0.0, 0.0], "plane_normal": [1.0, 0.0, 0.0]})),
                tool(&["hit"], "hit_time", json!({"group": 20})),
                tool(&["bulge", "sink volume"], "sink_bulge_volume", json!({"group": 10})),
                tool(&["sinking", "depth"], "sinking_depth", json!({"group": 10})),
                tool(&["centre of mass", "center of mass", "trajectory"], "body_com_series", json!({"group": 30})),
                tool(&["snapshot", "velocity field", "picture"], "render_snapshot", json!({"time": 1.0, "color_by": "speed"})),
            ],
        })
    }

    fn build(reply: &CaseReply, base: Option<&str>) -> Result<Proposal, PlannerError> {
        let mut xml = if let Some(id) = &reply.fixture {
            let (case, _) = fixtures::by_id(id).ok_or_else(|| PlannerError(format!("unknown fixture {id}")))?;
            emit_case(&case).map_err(|e| PlannerError(e.to_string()))?
        } else if let Some(x) = &reply.xml {
            x.clone()
        } else {
            base.ok_or_else(|| PlannerError("scripted reply has no document to start from".into()))?
                .to_string()
        };
        for (from, to) in &reply.replace {
            if !xml.contains(from.as_str()) {
                return Err(PlannerError(format!("scripted substitution target '{from}' not in draft")));
            }
            xml = xml.replace(from.as_str(), to);
        }
        Ok(Proposal {
            xml,
            rationale: reply.rationale.clone(),
        })
    }
}

impl Planner for ScriptedPlanner {
    fn propose_case(&mut self, envelope: &InputEnvelope, _: &SkillContext) -> Result<Proposal, PlannerError> {
        let text = envelope.text.as_deref().unwrap_or("");
        let sha = envelope.image.as_ref().map(|a| a.sha256.as_str());
        let hit = self.script.propose.iter().enumerate().find(|(_, r)| {
            r.when.automatic != Some(true)
                && r.when.image_sha256.as_deref().is_none_or(|s| Some(s) == sha)
                && (r.when.text_matches(text) || (r.when.image_sha256.is_some() && r.when.any_text.is_empty()))
        });
        match hit {
            Some((k, rule)) => {
                let reply = pick(&mut self.cursors, (0, k), &rule.replies).ok_or_else(|| PlannerError("rule has no replies".into()))?;
                Self::build(reply, envelope.xml.as_deref())
            }
            None => match &envelope.xml {
                Some(x) => Ok(Proposal {
                    xml: x.clone(),
                    rationale: "using the supplied document".into(),
                }),
                None => Err(PlannerError("no scripted proposal matches the input".into())),
            },
        }
    }

    fn revise_case(&mut self, req: &RevisionRequest, _: &SkillContext) -> Result<Proposal, PlannerError> {
        let hit = self
            .script
            .revise
            .iter()
            .enumerate()
            .find(|(_, r)| r.when.automatic.is_none_or(|a| a == req.automatic) && r.when.text_matches(&req.message));
        let (k, rule) = hit.ok_or_else(|| PlannerError("no scripted revision matches the message".into()))?;
        let reply = pick(&mut self.cursors, (1, k), &rule.replies).ok_or_else(|| PlannerError("rule has no replies".into()))?;
        Self::build(reply, Some(&req.draft_xml))
    }

    fn select_tool(&mut self, req: &ToolRequest, _: &SkillContext) -> Result<ToolChoice, PlannerError> {
        let retry = req.feedback.is_some();
        let hit = self
            .script
            .tools
            .iter()
            .enumerate()
            .find(|(_, r)| r.when.automatic.is_none_or(|a| a == retry) && r.when.text_matches(&req.text));
        let (k, rule) = hit.ok_or_else(|| PlannerError("no scripted tool matches the request".into()))?;
        pick(&mut self.cursors, (2, k), &rule.replies)
            .cloned()
            .ok_or_else(|| PlannerError("rule has no replies".into()))
    }
}
