//! Scenario-driven front end for `minqds`.
//!
//! A scenario file selects a model and the analyses to run on it; the
//! result is a [`ScenarioReport`] written as JSON plus plottable CSV tables.
//! Exit codes: 0 completed, 2 a hypothesis was refuted, 1 structural error.

pub mod config;
pub mod report;
pub mod scenario;

pub use config::{ConfigError, ScenarioConfig};
pub use report::{compare_report, write_artifacts, ReportDiff};
pub use scenario::{build_bundle, run_scenario, RunError, ScenarioReport, Stage};

/// Scenario run by `minqds demo`.
pub const DEMO_SCENARIO: &str = include_str!("../scenarios/demo_scalar.toml");

/// Stages implied by the sections present in a config (the `run` command).
pub fn configured_stages(cfg: &ScenarioConfig) -> Vec<Stage> {
    let mut v = vec![Stage::CheckA, Stage::Defect, Stage::Resolve];
    if cfg.certificate.is_some() {
        v.push(Stage::Certify);
    }
    if cfg.evolution.is_some() {
        v.push(Stage::Evolve);
    }
    if cfg.oracle.as_ref().is_some_and(|o| o.enabled) {
        v.push(Stage::Oracle);
    }
    if cfg.sweep.is_some() {
        v.push(Stage::Sweep);
    }
    v
}
