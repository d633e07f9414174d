//! Planner adapter for a remote backend. Each decision is one POST to
//! `{endpoint}/{operation}` carrying the skill context and the request; the
//! response body is the proposal or tool choice as JSON.

use std::time::Duration;

use base64::Engine as _;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};
use sphflow_core::orchestrator::{
    InputEnvelope, Planner, PlannerError, Proposal, RevisionRequest, SkillContext, ToolChoice, ToolRequest,
};

/// Bearer token for the planner endpoint, if it needs one.
pub const TOKEN_ENV: &str = "SPHFLOW_PLANNER_TOKEN";

pub struct HttpPlanner {
    endpoint: String,
    token: Option<String>,
    agent: ureq::Agent,
}

impl HttpPlanner {
    pub fn new(endpoint: &str, timeout: Duration) -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build();
        Self {
            endpoint: endpoint.trim_end_matches('/').to_string(),
            token: std::env::var(TOKEN_ENV).ok().filter(|t| !t.is_empty()),
            agent: config.into(),
        }
    }

    fn once<T: DeserializeOwned>(&self, url: &str, body: &Value) -> Result<T, (bool, String)> {
        let mut req = self.agent.post(url);
        if let Some(t) = &self.token {
            req = req.header("Authorization", &format!("Bearer {t}"));
        }
        let mut resp = req.send_json(body).map_err(|e| (true, e.to_string()))?;
        let status = resp.status().as_u16();
        if status >= 500 {
            return Err((true, format!("{url} answered {status}")));
        }
        if status >= 400 {
            let text = resp.body_mut().read_to_string().unwrap_or_default();
            return Err((false, format!("{url} answered {status}: {text}")));
        }
        resp.body_mut()
            .read_json::<T>()
            .map_err(|e| (false, format!("{url}: malformed response: {e}")))
    }

    /// POST with a single retry on transport errors and 5xx answers.
    fn call<T: DeserializeOwned>(&self, operation: &str, payload: impl Serialize, skill: &SkillContext) -> Result<T, PlannerError> {
        let url = format!("{}/{operation}", self.endpoint);
        let body = json!({
            "operation": operation,
            "skill_version": skill.version,
            "skill_context": skill.render(),
            "request": payload,
        });
        match self.once(&url, &body) {
            Ok(v) => Ok(v),
            Err((true, _)) => self.once(&url, &body).map_err(|(_, m)| PlannerError(m)),
            Err((false, m)) => Err(PlannerError(m)),
        }
    }
}

fn envelope_json(env: &InputEnvelope) -> Value {
    json!({
        "text": env.text,
        "xml": env.xml,
        "image": env.image.as_ref().map(|a| json!({
            "name": a.name,
            "media_type": a.media_type,
            "sha256": a.sha256,
            "data_base64": base64::engine::general_purpose::STANDARD.encode(&a.data),
        })),
    })
}

impl Planner for HttpPlanner {
    fn propose_case(&mut self, envelope: &InputEnvelope, skill: &SkillContext) -> Result<Proposal, PlannerError> {
        self.call("propose_case", envelope_json(envelope), skill)
    }

    fn revise_case(&mut self, request: &RevisionRequest, skill: &SkillContext) -> Result<Proposal, PlannerError> {
        self.call("revise_case", request, skill)
    }

    fn select_tool(&mut self, request: &ToolRequest, skill: &SkillContext) -> Result<ToolChoice, PlannerError> {
        self.call("select_tool", request, skill)
    }
}
