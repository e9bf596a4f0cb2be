//! Agent-based simulation of belief dynamics when the volume of produced
//! content far exceeds what any consumer can read.
//!
//! Agents hold positions in a K-dimensional belief space (the unit ball).
//! Each step every free agent publishes, a curator shows each agent the
//! documents within its visibility radius, the agent reads at most `k` of
//! them, and moves toward their extremity-weighted mean. Committed agents
//! never move and inject misinformation.

pub mod belief;
pub mod cli;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod metrics;
pub mod rng;
pub mod sweep;

pub use belief::{
    clamp_to_unit_ball, distance, init_population, norm, Agent, BeliefVector, Document, SimState,
};
pub use config::{
    parse_config, ConsumerKind, ConsumerMix, ProductionMode, SimConfig, SweepSpec,
};
pub use dynamics::{
    consume_biased, consume_uniform, curate_for_agent, influence_weight, produce_documents, run,
    step, step_detailed, update_belief, ConsumptionRecord, DocumentPool, RunOutput,
};
pub use error::SimError;
pub use metrics::{belief_histogram, has_converged, polarization_q, principal_axis, StepTrace};
pub use sweep::{aggregate, derive_seed, run_sweep, CellSummary, SweepRow};
