//! Configuration, presets and the command pipelines behind the CLI.

pub mod config;
pub mod presets;
pub mod run;

pub use config::{parse_key_values, Command, RunConfig};
pub use presets::{build_section6_problem, Section6Preset, Section6Problem};
pub use run::{exit_code, run, RunSummary};
