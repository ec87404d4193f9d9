//! Library surface of the command-line driver: presets, the scenario config
//! format, and plot/export helpers. The binary in `main.rs` wires these to
//! subcommands.

pub mod config;
pub mod presets;
pub mod svg;

pub use config::{emit_scenario, parse_scenario, ConfigError};
pub use presets::{preset, Scenario, PRESET_NAMES};
