//! Scenario configuration, orchestration and CSV export.
//!
//! A scenario is a TOML file naming a task (`loschmidt`, `landscape`, `fock`
//! or `conditioned`), a model and the grids to sample. [`run_scenario`] writes
//! one CSV per data set plus `summary.toml` into an output directory.

mod builtin;
mod config;
mod csv;
mod run;

pub use builtin::{builtin, builtin_names, BuiltinScenario, BUILTIN};
pub use config::{
    AsymptoticSection, FockSection, InitialState, LandscapeSection, ModelKind, ModelSection, ScenarioConfig,
    SeedingKind, Task, TimeSection, ToleranceSection,
};
pub use csv::{format_float, strip_stamp, Cell, CsvTable, STAMP_MARKER};
pub use run::{
    run_scenario, AsymptoticSummary, ConditionedSummary, CriticalSummary, CutSummary, FockSummary, LandscapeSummary,
    RunOptions, RunSummary, ScenarioOutput, Summary, SUMMARY_FILE, VERSION,
};
