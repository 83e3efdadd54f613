//! Files in and out: datasets, run configuration, and the artifacts of each command.

mod config;
mod csv;
mod run;

pub use config::{
    apply_overrides, load_config, parse_config, serialize_config, BandGrid, Command, FunctionalSection,
    FunctionalSpec, Gamma, KernelChoice, MeasureChoice, RunConfig,
};
pub use csv::{format_csv, load_csv, median_heuristic_gamma, parse_csv, save_csv};
pub use run::{run, RunOutput};
