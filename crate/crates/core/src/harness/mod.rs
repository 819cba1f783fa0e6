//! Test harness: simulated network, scenarios, data, reports and the CLI.

pub mod bus;
pub mod cli;
pub mod generate;
pub mod metrics;
pub mod report;
pub mod scenario;
pub mod trajectory;
