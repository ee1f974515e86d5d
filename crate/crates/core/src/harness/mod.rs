//! Configuration, event-sourced persistence, synthetic task generation, and
//! the end-to-end search/eval loops.

pub mod config;
pub mod engine;
pub mod events;
pub mod tasks;

pub use config::{AblationFlags, BackendConfig, ConditioningRow, RunConfig};
pub use engine::{
    backend_from_config, default_generator, Engine, EvalMetrics, EvalOutcome, EvalRecord,
    SearchMetrics, SearchOutcome,
};
pub use events::{from_ndjson, to_ndjson, EngineSnapshot, EventKind, EventLogEntry};
pub use tasks::{from_jsonl, gen_tasks, to_jsonl, DomainSpec, TaskGenSpec};
