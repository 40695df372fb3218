//! Simulation and estimation laboratory for experiments on mixed human-AI
//! populations with latent unit types and unknown interaction networks.
//!
//! The crate has three layers:
//!
//! * **Data generation** — [`model`] holds the shared domain types and the
//!   type/prior/treatment generative processes; [`dynamics`] simulates the
//!   type-dependent interference dynamics (including parallel counterfactual
//!   worlds and Monte Carlo ground truth); [`agentsim`] is a rule-based
//!   discussion-platform simulator producing panels of the same shape.
//! * **Estimation** — [`ese`] is the deterministic state-evolution engine
//!   (the forward model and analytic oracle); [`subpop`] constructs
//!   outcome-free composition/exposure-diverse subpopulations; [`estimator`]
//!   fits the reduced parameter vector by least squares and propagates
//!   human counterfactuals; [`baselines`] holds the reference estimators.
//! * **Orchestration** — [`harness`] runs seeded benchmarks, computes
//!   metrics, and writes CSV/JSON/SVG reports.

pub mod agentsim;
pub mod baselines;
pub mod dynamics;
pub mod error;
pub mod ese;
pub mod estimator;
pub mod harness;
pub mod model;
pub mod rng;
pub mod subpop;

pub use error::{Error, Result};
pub use model::{
    EffectSeries, Panel, PopulationConfig, PriorMode, PriorQualityConfig, PriorSpec, Scenario,
    StructuralParams, TreatmentPlan, TypeAssignment,
};
