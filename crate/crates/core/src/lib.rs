//! Bi-level traffic accident duration modelling.
//!
//! A random-forest classifier routes each incident to a short- or long-duration
//! branch, where a histogram gradient-boosted regressor prices it in minutes.
//! Everything from CSV ingestion to TreeSHAP attribution lives here.

pub mod ensemble;
pub mod explain;
pub mod features;
pub mod ingest;
pub mod metrics;
pub mod pipeline;
pub mod preprocess;
pub mod report;
pub mod synth;
pub mod tree;
