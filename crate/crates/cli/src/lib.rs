//! Batch front end for the attack toolkit: configuration loading, dataset
//! ingestion, synthetic data generation, experiment orchestration and
//! result persistence. The `pat` binary is a thin dispatcher over this
//! crate.

pub mod config;
pub mod datagen;
pub mod dataset;
pub mod runner;
pub mod store;
