//! Scenario corpus, reports and command line front end for `rootsim-core`.
//!
//! Each scenario is a small binding program, correct or deliberately
//! broken, run on a fresh runtime under a [`ModeConfig`]. The runner turns
//! what happened into a [`ScenarioReport`] and checks it against the
//! outcome the scenario declares for that mode.

pub mod cli;
pub mod oracle;
pub mod report;
pub mod scenarios;

pub use cli::cli_main;
pub use report::{ModeConfig, Outcome, ScenarioReport};
pub use scenarios::{list_scenarios, run_scenario, run_scenario_traced, Expected, ScenarioRun, UnknownScenario};
