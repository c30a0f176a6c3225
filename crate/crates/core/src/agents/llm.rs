//! Language-model agent. The model must answer with exactly one JSON
//! document matching [`AgentOutput`]; anything else is a parse failure and
//! goes to the orchestrator's retry path. Requests and responses are kept
//! verbatim as numbered transcript files.

use std::path::PathBuf;

use super::{Agent, AgentContext, AgentError, AgentOutput, ChatMessage, ModelRequest, ModelTransport};
use crate::reasoning::{ControlIntent, TOOL_WHITELIST};

pub const SYSTEM_PREAMBLE: &str = r#"You analyse mobility events from a radio access network and decide the next step of a reasoning cycle.

Modes:
- NEXT: you need one more piece of evidence. Request exactly one read-only tool.
- HUMAN: you need the operator, either to review a configuration proposal or to read a message.
- STOP: you are done. Give a short summary.

Tools (read-only, one per step):
- LOG_QUERY params {"ue_id"?: int, "time_range": {"from_s": number, "to_s": number}, "kinds"?: ["A3_TRIGGER"|"HO_ATTEMPT"|"HO_SUCCESS"|"HO_FAILURE"], "limit": 1..500}
- METRIC_QUERY params {"series": "RSRP"|"FPS", "cell"?: {"gnb_id": int, "cell_id": int}, "time_range": {...}, "downsample_s": number >= 0.1}
- CONFIG_GET params {"paths": ["gnb/<g>/cell/<c>/a3/offset-db" | ".../hysteresis-db" | ".../ttt-ms", ...]} (1 to 12 paths)

You cannot change configuration. To suggest a change, ask the operator with a proposal whose patch lists
{"path", "expected_old", "new"} for every leaf you want to change. Once you have asked the operator, do not request tools.

Reply with one JSON document and nothing else:
{"mode": "NEXT"|"HUMAN"|"STOP",
 "explanation": "<why, for the operator>",
 "intent": {"type": "CONTINUE", "request": {"tool": "<tool>", "params": {...}}}
         | {"type": "ASK_HUMAN", "payload": {"proposal": {"patch": {"entries": [...]}, "rationale": "<text>"}}}
         | {"type": "ASK_HUMAN", "payload": {"message": "<text>"}}
         | {"type": "STOP", "summary": "<text>"}}
The mode must match the intent: CONTINUE is NEXT, ASK_HUMAN is HUMAN, STOP is STOP.
"#;

/// Strict parse of one model response.
pub fn parse_agent_response(text: &str) -> Result<AgentOutput, AgentError> {
    let out: AgentOutput = serde_json::from_str(text).map_err(|e| AgentError::ParseFailure(e.to_string()))?;
    if out.mode != out.intent.mode() {
        return Err(AgentError::ParseFailure(format!(
            "mode {} does not match intent {}",
            out.mode.as_str(),
            out.intent.mode().as_str()
        )));
    }
    if out.explanation.trim().is_empty() {
        return Err(AgentError::ParseFailure("empty explanation".into()));
    }
    if let ControlIntent::Continue { request } = &out.intent {
        if !TOOL_WHITELIST.contains(&request.tool.as_str()) {
            return Err(AgentError::ParseFailure(format!("unknown tool `{}`", request.tool)));
        }
    }
    Ok(out)
}

pub struct LlmAgent {
    transport: Box<dyn ModelTransport>,
    model: String,
    transcript_dir: Option<PathBuf>,
    exchanges: u32,
}

impl std::fmt::Debug for LlmAgent {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LlmAgent").field("model", &self.model).field("exchanges", &self.exchanges).finish()
    }
}

impl LlmAgent {
    pub fn new(transport: Box<dyn ModelTransport>, model: impl Into<String>) -> Self {
        Self { transport, model: model.into(), transcript_dir: None, exchanges: 0 }
    }

    /// Writes `NNNN.request.json` / `NNNN.response.txt` pairs into `dir`.
    pub fn with_transcripts(mut self, dir: impl Into<PathBuf>) -> Self {
        self.transcript_dir = Some(dir.into());
        self
    }

    pub fn request_for(&self, ctx: &AgentContext) -> ModelRequest {
        ModelRequest {
            model: self.model.clone(),
            messages: vec![
                ChatMessage { role: "system".into(), content: SYSTEM_PREAMBLE.into() },
                ChatMessage { role: "user".into(), content: ctx.render() },
            ],
            temperature: 0.0,
        }
    }

    fn save(&self, name: String, contents: &str) -> Result<(), AgentError> {
        if let Some(dir) = &self.transcript_dir {
            std::fs::create_dir_all(dir)
                .and_then(|_| std::fs::write(dir.join(name), contents))
                .map_err(|e| AgentError::Remote(format!("cannot store transcript: {e}")))?;
        }
        Ok(())
    }
}

impl Agent for LlmAgent {
    fn name(&self) -> &str {
        "llm"
    }

    fn analyze(&mut self, ctx: &AgentContext) -> Result<AgentOutput, AgentError> {
        self.exchanges += 1;
        let n = self.exchanges;
        let request = self.request_for(ctx);
        self.save(format!("{n:04}.request.json"), &serde_json::to_string_pretty(&request).expect("request"))?;
        let text = self.transport.complete(&request)?;
        self.save(format!("{n:04}.response.txt"), &text)?;
        parse_agent_response(&text)
    }
}
