//! Batch front end for the entropic dynamics engines: TOML scenarios, runs that
//! emit CSV snapshots plus a `summary.json`, cross-run comparisons and audits.

pub mod audits;
pub mod compare;
pub mod error;
pub mod report;
pub mod run;
pub mod scenario;

pub use error::{LabError, Result};
pub use scenario::{load_scenario, parse_scenario, Engine, Scenario};
