//! Scenario runner for the emergence toolkit: JSON configuration, a closed
//! catalog of scenarios with embedded verdicts, and CSV / JSON outputs.

pub mod config;
pub mod report;
pub mod scenarios;

pub use config::{parse, validate, ScenarioConfig, Violation};
pub use report::{emit, Check, Format, ScenarioResult, Table};
pub use scenarios::{run, Scenario};
