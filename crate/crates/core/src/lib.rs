//! Simulated CI/CD pipeline under attack, the specialized defense agents that
//! watch it, and the reinforcement-learned mitigation policies that act on
//! their verdicts.
//!
//! The crate is organized around the closed loop the rest of the workspace
//! drives: [`env`] produces observations, [`agents`] turns them into an
//! [`agents::Assessment`], [`policy`] maps the encoded assessment to a
//! [`domain::MitigationAction`], and the environment applies it.

pub mod agents;
pub mod domain;
pub mod env;
pub mod policy;
pub mod seed;

pub use domain::{
    AgentRole, AttackScenario, MitigationAction, ObservationSignal, PipelineStage, SignalKind,
    VulnerabilityClass,
};
