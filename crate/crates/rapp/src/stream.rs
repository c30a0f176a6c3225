//! Cycle progress as a numbered record stream. Records are kept for replay
//! on reconnect and fanned out to live subscribers.

use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use tokio::sync::broadcast;

use rapp_core::reasoning::{CycleUpdate, UpdateObserver};

/// Source tag of updates from the live service, as opposed to a run id.
pub const LIVE: &str = "live";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamRecord {
    /// 1-based, gapless.
    pub seq: u64,
    pub source: String,
    pub update: CycleUpdate,
}

#[derive(Debug)]
pub struct StreamHub {
    history: Mutex<Vec<StreamRecord>>,
    tx: broadcast::Sender<StreamRecord>,
}

impl Default for StreamHub {
    fn default() -> Self {
        Self::new(1024)
    }
}

impl StreamHub {
    pub fn new(capacity: usize) -> Self {
        Self { history: Mutex::new(Vec::new()), tx: broadcast::channel(capacity.max(1)).0 }
    }

    pub fn push(&self, source: &str, update: CycleUpdate) -> u64 {
        // Numbered and sent under one lock so subscribers see seq order.
        let mut history = self.history.lock().expect("stream lock");
        let record = StreamRecord { seq: history.len() as u64 + 1, source: source.to_string(), update };
        let seq = record.seq;
        history.push(record.clone());
        let _ = self.tx.send(record);
        seq
    }

    /// Records with `seq > after`.
    pub fn since(&self, after: u64) -> Vec<StreamRecord> {
        self.history.lock().expect("stream lock").iter().skip(after as usize).cloned().collect()
    }

    pub fn subscribe(&self) -> broadcast::Receiver<StreamRecord> {
        self.tx.subscribe()
    }

    pub fn observer(self: &Arc<Self>, source: &str) -> UpdateObserver {
        let hub = self.clone();
        let source = source.to_string();
        Arc::new(move |u: &CycleUpdate| {
            hub.push(&source, u.clone());
        })
    }
}
