//! Collaborative-filtering recommender driven by an idiotypic immune network.
//!
//! Candidate users act as antibodies competing for a place in the target
//! user's neighbourhood. Their concentrations evolve under antigen
//! stimulation, mutual suppression and decay; survivors vote on unseen
//! movies weighted by concentration. Affinity between users is pluggable:
//! Weighted Kappa, Kendall's Tau, or a Pearson baseline.

pub mod affinity;
pub mod datastore;
pub mod domain;
pub mod evaluation;
pub mod exec;
pub mod fixtures;
pub mod immune_network;
pub mod recommender;

pub use affinity::{affinity, AffinityMeasure, MeasureKind};
pub use domain::{Dataset, Rating, UserProfile};
pub use exec::Execution;
pub use immune_network::{run_to_convergence, FinalPopulation, ImmuneParams};
