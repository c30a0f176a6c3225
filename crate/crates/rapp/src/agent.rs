//! Agent backends behind one factory type.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use rapp_core::agents::{
    AgentError, HttpTransport, LlmAgent, ModelRequest, ModelTransport, RemoteSettings, ReplayTransport,
};
use rapp_core::experiment::{rule_agent_factory, AgentFactory};
use rapp_core::{Agent, AgentContext, AgentOutput};

use crate::settings::AgentBackend;

/// Stands in for the remote agent when its transport cannot be built. Every
/// call fails, so the orchestrator escalates to the operator.
struct Unavailable(String);

impl Agent for Unavailable {
    fn name(&self) -> &str {
        "unavailable"
    }

    fn analyze(&mut self, _ctx: &AgentContext) -> Result<AgentOutput, AgentError> {
        Err(AgentError::Remote(self.0.clone()))
    }
}

/// Builds the factory for `backend`. The remote backend reads its endpoint
/// from `RAPP_REMOTE_*` and fails here if they are missing. With a
/// transcript directory each agent instance writes to its own
/// `agent-NNNN` subdirectory.
pub fn factory(backend: AgentBackend, transcript_dir: Option<&Path>) -> Result<AgentFactory, String> {
    match backend {
        AgentBackend::Rule => Ok(rule_agent_factory()),
        AgentBackend::Remote => remote_factory(RemoteSettings::from_env()?, transcript_dir.map(Path::to_path_buf)),
    }
}

pub fn remote_factory(settings: RemoteSettings, transcript_dir: Option<PathBuf>) -> Result<AgentFactory, String> {
    HttpTransport::new(settings.clone()).map_err(|e| e.to_string())?;
    let counter = AtomicU64::new(0);
    Ok(Arc::new(move || {
        let transport = match HttpTransport::new(settings.clone()) {
            Ok(t) => t,
            Err(e) => return Box::new(Unavailable(e.to_string())) as Box<dyn Agent>,
        };
        let mut agent = LlmAgent::new(Box::new(transport), settings.model.clone());
        if let Some(dir) = &transcript_dir {
            let n = counter.fetch_add(1, Ordering::Relaxed) + 1;
            agent = agent.with_transcripts(dir.join(format!("agent-{n:04}")));
        }
        Box::new(agent)
    }))
}

/// One recorded transcript shared by every agent a run creates, consumed in
/// order.
#[derive(Clone)]
pub struct SharedReplay(Arc<Mutex<ReplayTransport>>);

impl SharedReplay {
    pub fn from_dir(dir: &Path) -> std::io::Result<Self> {
        Ok(Self(Arc::new(Mutex::new(ReplayTransport::from_dir(dir)?))))
    }

    pub fn remaining(&self) -> usize {
        self.0.lock().expect("replay lock").remaining()
    }

    pub fn factory(&self) -> AgentFactory {
        let shared = self.clone();
        Arc::new(move || Box::new(LlmAgent::new(Box::new(shared.clone()), "replay")) as Box<dyn Agent>)
    }
}

impl ModelTransport for SharedReplay {
    fn complete(&mut self, request: &ModelRequest) -> Result<String, AgentError> {
        self.0.lock().expect("replay lock").complete(request)
    }
}
