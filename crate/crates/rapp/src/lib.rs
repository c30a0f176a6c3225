//! The deployable side of the net analyzer rApp: a live service that batches
//! incoming mobility events into gated reasoning cycles, a web API over it,
//! and a command-line runner for headless before/after experiments.

pub mod agent;
pub mod api;
pub mod cli;
pub mod runs;
pub mod scenario;
pub mod settings;
pub mod state;
pub mod stream;

pub use settings::{AgentBackend, ServiceSettings};
pub use state::{LiveService, ServiceError};
