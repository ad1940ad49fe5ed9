//! Cost-sensitive diagnostic policy learning.
//!
//! A diagnostic policy is a decision tree that repeatedly chooses between
//! measuring another attribute (paying its test cost) and committing to a
//! diagnosis (risking a misdiagnosis cost). This crate learns such policies
//! from labeled examples and evaluates them on held-out data:
//!
//! * [`dataset`] loads CSV data, removes incomplete records, discretizes
//!   continuous attributes, and cuts stratified train/test replicas.
//! * [`costs`] holds test costs and misdiagnosis cost matrices.
//! * [`mdp`] estimates the transition and class probabilities that drive
//!   every learner, with optional Laplace smoothing.
//! * [`andor`] is the shared AND/OR graph with admissible lower bounds and
//!   anytime upper bounds on the value of every explored state.
//! * [`aostar`] runs systematic AO* search over that graph, optionally with
//!   statistical pruning, early stopping, or pessimistic post-pruning.
//! * [`greedy`] grows baseline policies top-down: an information-gain tree,
//!   its cost-sensitive variant, and a one-step value-of-information rule.
//! * [`policy`] is the learned artifact: execution, expected values,
//!   serialization, and Graphviz export.
//! * [`eval`] compares policies with a paired bootstrap test and runs full
//!   round-robin tournaments with reproducible seed manifests.
//!
//! Start with the runnable examples (`cargo run --example end_to_end`), or
//! use the thin `diagpol` binary for the same steps from a shell.

pub mod andor;
pub mod aostar;
pub mod cli;
pub mod costs;
pub mod dataset;
pub mod eval;
pub mod greedy;
pub mod learners;
pub mod mdp;
pub mod policy;

pub use aostar::{ao_star, AoConfig, SearchTrace};
pub use costs::{CostConfig, CostModel};
pub use dataset::{Dataset, Replica, TrainFrac};
pub use eval::{bdelta_cost, chess_score, run_experiment, Outcome, ScoreTable, Verdict};
pub use learners::{learn, Algorithm, Method};
pub use mdp::{Estimator, State};
pub use policy::Policy;
