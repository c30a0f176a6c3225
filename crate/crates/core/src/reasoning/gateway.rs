use std::sync::Arc;

use serde_json::Value;

use super::{ConfigQuery, ToolCall, ToolExchange, ToolRequest, ToolResult};
use crate::audit::{digest, Actor, AuditAction, AuditLog};
use crate::config::ConfigService;
use crate::telemetry::{LogQuery, MetricQuery, TelemetryStore};

pub const TOOL_WHITELIST: [&str; 3] = ["LOG_QUERY", "METRIC_QUERY", "CONFIG_GET"];
/// Serialized size limit for tool parameters.
pub const MAX_PARAMS_BYTES: usize = 4096;
pub const MAX_CONFIG_PATHS: usize = 12;

/// The only way an agent reaches the stores. Every route is a read; there
/// is no path from here to a configuration write.
#[derive(Debug, Clone)]
pub struct ToolGateway {
    telemetry: Arc<TelemetryStore>,
    config: Arc<ConfigService>,
    audit: Arc<AuditLog>,
}

fn parse_params<T: serde::de::DeserializeOwned>(v: &Value) -> Result<T, String> {
    serde_json::from_value(v.clone()).map_err(|e| format!("malformed params: {e}"))
}

impl ToolGateway {
    pub fn new(telemetry: Arc<TelemetryStore>, config: Arc<ConfigService>, audit: Arc<AuditLog>) -> Self {
        Self { telemetry, config, audit }
    }

    /// Whitelist, size and schema checks. Does not touch the stores.
    pub fn parse(call: &ToolCall) -> Result<ToolRequest, String> {
        if !TOOL_WHITELIST.contains(&call.tool.as_str()) {
            return Err(format!("tool `{}` is not permitted", call.tool));
        }
        let size = serde_json::to_vec(&call.params).map(|b| b.len()).unwrap_or(usize::MAX);
        if size > MAX_PARAMS_BYTES {
            return Err(format!("params are {size} bytes, limit {MAX_PARAMS_BYTES}"));
        }
        let req = match call.tool.as_str() {
            "LOG_QUERY" => ToolRequest::LogQuery(parse_params::<LogQuery>(&call.params)?),
            "METRIC_QUERY" => ToolRequest::MetricQuery(parse_params::<MetricQuery>(&call.params)?),
            _ => {
                let q: ConfigQuery = parse_params(&call.params)?;
                if q.paths.is_empty() || q.paths.len() > MAX_CONFIG_PATHS {
                    return Err(format!("CONFIG_GET takes 1 to {MAX_CONFIG_PATHS} paths"));
                }
                ToolRequest::ConfigGet(q)
            }
        };
        Ok(req)
    }

    fn run(&self, req: &ToolRequest) -> Result<Value, String> {
        let to_value = |v: Result<Value, serde_json::Error>| v.map_err(|e| e.to_string());
        match req {
            ToolRequest::LogQuery(q) => {
                to_value(serde_json::to_value(self.telemetry.query_logs(q).map_err(|e| e.to_string())?))
            }
            ToolRequest::MetricQuery(q) => {
                to_value(serde_json::to_value(self.telemetry.query_metrics(q).map_err(|e| e.to_string())?))
            }
            ToolRequest::ConfigGet(q) => to_value(serde_json::to_value(
                self.config.get_configs(&q.paths, Actor::Agent).map_err(|e| e.to_string())?,
            )),
        }
    }

    /// Validates and executes one call. Failures come back as
    /// [`ToolResult::Rejected`]; either way the exchange is audited.
    pub fn dispatch(&self, call: &ToolCall, cycle_id: &str) -> ToolExchange {
        let result = match Self::parse(call) {
            Ok(req) => match self.run(&req) {
                Ok(data) => ToolResult::Ok { data },
                Err(reason) => ToolResult::Rejected { reason },
            },
            Err(reason) => ToolResult::Rejected { reason },
        };
        let request_digest = digest(call);
        let result_digest = digest(&result);
        let action = if result.is_ok() { AuditAction::ToolDispatched } else { AuditAction::ToolRejected };
        let note = match &result {
            ToolResult::Ok { .. } => format!("{} ok", call.tool),
            ToolResult::Rejected { reason } => format!("{}: {reason}", call.tool),
        };
        self.audit.append_noted(Actor::Agent, action, cycle_id, &(&request_digest, &result_digest), note);
        ToolExchange { tool: call.tool.clone(), request: call.params.clone(), result, request_digest, result_digest }
    }
}
