//! Background experiment runs started over the API. Each run gets its own
//! stores and thread; its cycle updates go to the shared stream tagged with
//! the run id.

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use rapp_core::experiment::{run_experiment_with, AgentFactory, RunMode, RunOptions, RunReport};
use rapp_core::ran_sim::ScenarioSpec;

use crate::stream::StreamHub;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RunState {
    Running,
    Done,
    Failed,
}

#[derive(Debug, Clone)]
enum Slot {
    Running,
    Done(Box<RunReport>),
    Failed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunLookup {
    Unknown,
    Running,
    Done(Box<RunReport>),
    Failed(String),
}

pub struct RunRegistry {
    runs: Arc<Mutex<BTreeMap<String, Slot>>>,
    stream: Arc<StreamHub>,
}

impl std::fmt::Debug for RunRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RunRegistry").field("runs", &self.runs.lock().map(|r| r.len()).unwrap_or(0)).finish()
    }
}

impl RunRegistry {
    pub fn new(stream: Arc<StreamHub>) -> Self {
        Self { runs: Arc::new(Mutex::new(BTreeMap::new())), stream }
    }

    /// Starts a run on its own thread and returns its id.
    pub fn start(&self, spec: ScenarioSpec, mode: RunMode, auto_approve: bool, agent: AgentFactory) -> String {
        let id = {
            let mut runs = self.runs.lock().expect("run registry lock");
            let id = format!("run-{:04}", runs.len() + 1);
            runs.insert(id.clone(), Slot::Running);
            id
        };
        let options =
            RunOptions { auto_approve, agent, observer: Some(self.stream.observer(&id)) };
        let runs = self.runs.clone();
        let run_id = id.clone();
        std::thread::Builder::new()
            .name(run_id.clone())
            .spawn(move || {
                let slot = match run_experiment_with(&spec, mode, &options) {
                    Ok(a) => Slot::Done(Box::new(a.report)),
                    Err(e) => Slot::Failed(e.to_string()),
                };
                tracing::info!(%run_id, "run finished");
                runs.lock().expect("run registry lock").insert(run_id, slot);
            })
            .expect("spawn run thread");
        id
    }

    pub fn get(&self, id: &str) -> RunLookup {
        match self.runs.lock().expect("run registry lock").get(id) {
            None => RunLookup::Unknown,
            Some(Slot::Running) => RunLookup::Running,
            Some(Slot::Done(r)) => RunLookup::Done(r.clone()),
            Some(Slot::Failed(e)) => RunLookup::Failed(e.clone()),
        }
    }

    pub fn list(&self) -> Vec<(String, RunState)> {
        self.runs
            .lock()
            .expect("run registry lock")
            .iter()
            .map(|(id, s)| {
                let state = match s {
                    Slot::Running => RunState::Running,
                    Slot::Done(_) => RunState::Done,
                    Slot::Failed(_) => RunState::Failed,
                };
                (id.clone(), state)
            })
            .collect()
    }
}
