//! Desk-scale harness for probing why challenge datasets are hard.
//!
//! The workflow: pretrain a small hashed-feature text-pair classifier on an
//! original dataset, fine-tune it on graded amounts of challenge data, and
//! classify the result into one of three outcome signatures — dataset
//! weakness, model weakness, or distribution shift. Synthetic generators
//! with planted annotation artifacts make each outcome reproducible and
//! testable end to end.
//!
//! Modules follow the pipeline order: `corpus` (data model and JSON Lines
//! I/O), `synthgen` (dataset generators and the 3-rule baseline), `perturb`
//! (challenge transformations), `model` (features, softmax, gradients),
//! `trainer` (training loops and schedules), `inoculation` (the sweep),
//! `outcomes` (classification) and `report` (CSV and summary emission).

pub mod corpus;
pub mod error;
pub mod hash;
pub mod inoculation;
pub mod model;
pub mod outcomes;
pub mod perturb;
pub mod report;
pub mod synthgen;
pub mod trainer;

pub use error::{Error, Result};
