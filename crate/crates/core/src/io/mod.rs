//! Scenario files and result bundles.

mod results;
mod scenario_file;

pub use results::{
    decay_fit, write_bundle, write_trajectory_csv, write_xi_csv, BundleOptions, Eigenvalue,
    FitSummary, LocalizabilitySummary, RigiditySummary, SegmentSummary, SpectrumReport, Summary,
};
pub use scenario_file::{
    AgentEntry, LoadedScenario, Role, ScenarioError, ScenarioFile, SegmentEntry,
};
