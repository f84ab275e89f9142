//! Simulator for semi-synchronous wireless federated learning.
//!
//! Clients are grouped into latency tiers against a per-round deadline;
//! tier-`j` clients upload every `j` rounds and train with a `j`-scaled step
//! size, so every client participates without the server waiting for
//! stragglers. FedAvg (wait for everyone) and FedCS (only clients that beat
//! the deadline) run on the same engine for comparison.
//!
//! Modules:
//! - [`radio`]: computation and upload latency of a client.
//! - [`population`]: random client placement and hardware draws.
//! - [`cohort`]: tier assignment and the upload schedule.
//! - [`learner`]: softmax-regression / MLP models and local SGD.
//! - [`data`]: synthetic and MNIST data, Dirichlet label partitioning.
//! - [`engine`]: the round loop, aggregation and run outputs.

pub mod cohort;
pub mod data;
pub mod engine;
pub mod learner;
pub mod population;
pub mod radio;
pub mod rng;

pub use cohort::{assign_tier, tier_due, Round, Tier, TierAssignment};
pub use engine::{Algorithm, RoundRecord, RunConfig, RunOutput, Simulation, StopRule};
pub use learner::{ModelParams, ModelSpec};
pub use radio::ClientId;
