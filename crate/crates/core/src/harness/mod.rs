//! File formats and the command-line front end.

pub mod cli;
pub mod plot;
pub mod scenario_file;
pub mod trace;

pub use cli::run_cli;
pub use plot::emit_plot_data;
pub use scenario_file::{load_scenario, parse_scenario, ScenarioFile, FORMAT_VERSION};
pub use trace::{
    load_trace, read_trace, recompute, save_trace, write_trace, TraceFile, TraceLayout,
};
