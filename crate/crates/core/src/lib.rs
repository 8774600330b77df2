//! Reference-free consensus selection for LLM ensembles.
//!
//! * [`textsim`] and [`embedding`] provide the lexical and semantic halves of
//!   the hybrid utility.
//! * [`consensus`] scores a candidate pool and selects its centroid, or
//!   abstains when agreement is too weak.
//! * [`riskmodel`] computes the probability that a correlated ensemble
//!   certifies a falsehood, exactly, by simulation, or via a Hoeffding bound.
//! * [`planner`] picks the cheapest model subset and per-model sample count
//!   that meets a failure tolerance.
//! * [`orchestrator`] fans a prompt out to chat-completion backends along a
//!   temperature ladder.
//! * [`records`] and [`cli`] define the line-delimited file formats and the
//!   `humbr` command.

pub mod cli;
pub mod config;
pub mod consensus;
pub mod embedding;
pub mod planner;
pub mod orchestrator;
pub mod records;
pub mod riskmodel;
pub mod textsim;
