//! Experiment plumbing: configuration documents, Monte Carlo orchestration,
//! built-in presets, and result emission.

pub mod emit;
pub mod presets;
pub mod runner;
pub mod spec;

pub use emit::{emit_comparison, emit_results, EmitError, Format};
pub use presets::{preset, PRESET_NAMES};
pub use runner::{run_comparison, run_experiment, ComparisonBundle, ResultBundle, RunError, SizedRun};
pub use spec::{
    load_spec, ComparisonSpec, CovarianceSpec, ExperimentDoc, ExperimentSpec, LinkModeSpec,
    LoadedSpec, NodeDoc, OutputKind, S0Spec, SpecError, StepRule,
};
