//! File formats, built-in scenarios and helpers behind the `cadmm` binary.

pub mod demo;
pub mod output;
pub mod scenario;

pub use output::{write_outputs, Summary};
pub use scenario::{load_scenario, parse_scenario, scenario_json, LoadError};
