//! Queue-driven stage workers with an idempotent outcome journal.
//!
//! Each routed stage consumes from its own queue. A worker that receives a
//! task first checks the journal: if the outcome is already recorded it only
//! republishes downstream, so redelivery after a crash never recomputes or
//! double-records. Otherwise it computes, appends, publishes, and only then
//! acknowledges.

pub mod broker;
pub mod handler;
pub mod journal;
pub mod pipeline;
pub mod routing;
pub mod simulate;
pub mod worker;

pub use broker::{Broker, ConsumerId, Delivery, InMemoryBroker, QueueStats};
pub use handler::{CurationHandler, SimulationHandler, StageHandler};
pub use journal::{read_journal, Appended, Journal};
pub use pipeline::{enqueue_assets, run_pipeline, Pipeline};
pub use routing::RoutingTable;
pub use simulate::{simulate, SimulationConfig, SimulationReport};
pub use worker::{Checkpoint, CrashPoint};
