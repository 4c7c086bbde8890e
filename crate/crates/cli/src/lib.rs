//! Scenario-driven front end for the `renewal-kit` library.
//!
//! [`scenario`] defines the JSON schema for declarative verification
//! runs, [`exec`] executes them and evaluates their checks, and
//! [`report`] writes the result files. The `renkit` binary is a thin
//! argument parser over [`exec::run_scenario`] and [`exec::verify_all`].

pub mod exec;
pub mod report;
pub mod scenario;
