//! Case files and result artifacts.

pub mod artifacts;
pub mod case_files;

pub use artifacts::{export_plot_data, summary_json, write_artifacts, RunCell, RunReport};
pub use case_files::{load_case, write_case};
