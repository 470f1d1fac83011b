//! Monte Carlo orchestration: run an experiment's trials (optionally in
//! parallel), aggregate curves and summaries, and sweep comparisons across
//! network sizes.
//!
//! Results are a pure function of the experiment description. Trials own
//! disjoint RNG substreams, workers return whole records, and aggregation
//! always walks trials in index order, so a run is bit-identical at any
//! parallelism level.

use std::time::{Duration, Instant};

use nalgebra::DVector;
use rayon::prelude::*;
use thiserror::Error;

use crate::analysis::{
    self, CurveAccumulator, LearningCurve, ModeTable, StabilityReport, SteadyStateEstimate,
};
use crate::engine::{self, EngineError, TrialRecord};
use crate::model::{NetworkConfig, UnknownParameter};

use super::spec::{ComparisonSpec, ExperimentSpec, OutputKind, SpecError};

/// Trials aggregated per parallel dispatch; bounds peak memory while keeping
/// workers busy.
const TRIAL_BATCH: u64 = 32;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(
        "trial {trial} diverged at node {node}, iteration {iteration}; \
         the step sizes are likely outside the stable range (see the stability check)"
    )]
    TrialDiverged { trial: u64, node: usize, iteration: usize },
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Analysis(#[from] analysis::AnalysisError),
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error("failed to build the worker pool: {0}")]
    WorkerPool(String),
}

/// Everything one experiment produced. Optional fields follow the requested
/// `outputs` set; the mean final estimate and empirical bias are filled
/// whenever Monte Carlo trials ran.
#[derive(Debug, Clone)]
pub struct ResultBundle {
    pub spec: ExperimentSpec,
    /// The concrete parameter vector the run estimated.
    pub s0: UnknownParameter,
    pub curve: Option<LearningCurve>,
    pub steady: Option<SteadyStateEstimate>,
    pub modes: Option<ModeTable>,
    pub stability: Option<StabilityReport>,
    pub mean_recursion: Option<Vec<DVector<f64>>>,
    /// Across-trial average of the estimate after the final iteration.
    pub mean_final_estimate: Option<DVector<f64>>,
    /// Euclidean distance between the mean final estimate and s0.
    pub empirical_bias: Option<f64>,
    pub duration: Duration,
}

/// One size's run within a comparison.
#[derive(Debug, Clone)]
pub struct SizedRun {
    pub size: usize,
    pub step_size: f64,
    pub bundle: ResultBundle,
}

#[derive(Debug, Clone)]
pub struct ComparisonBundle {
    pub spec: ComparisonSpec,
    pub runs: Vec<SizedRun>,
    pub duration: Duration,
}

/// Run every trial of an experiment and aggregate the requested outputs.
///
/// `parallelism` is the worker-thread count (clamped to at least 1); it
/// affects scheduling only, never results.
pub fn run_experiment(spec: &ExperimentSpec, parallelism: usize) -> Result<ResultBundle, RunError> {
    let start = Instant::now();
    let config = spec.config();
    let s0 = spec.resolve_s0();
    let outputs = spec.outputs();

    let mut curve = None;
    let mut steady = None;
    let mut mean_final_estimate = None;
    let mut empirical_bias = None;
    let wants_curve = outputs.contains(&OutputKind::LearningCurve);
    let wants_steady = outputs.contains(&OutputKind::SteadyState);
    if wants_curve || wants_steady {
        let (c, mean_final) =
            monte_carlo(config, &s0, spec.iterations(), spec.trials(), parallelism)?;
        if wants_steady {
            steady = Some(analysis::steady_state(&c, spec.window_fraction())?);
        }
        if wants_curve {
            curve = Some(c);
        }
        empirical_bias = Some((&mean_final - s0.values()).norm());
        mean_final_estimate = Some(mean_final);
    }

    let modes = outputs.contains(&OutputKind::Modes).then(|| mode_table(spec));
    let stability = outputs.contains(&OutputKind::Stability).then(|| analysis::stability_check(config));
    let mean_recursion = outputs
        .contains(&OutputKind::MeanRecursion)
        .then(|| analysis::mean_error_recursion(config, s0.values(), spec.iterations()));

    Ok(ResultBundle {
        spec: spec.clone(),
        s0,
        curve,
        steady,
        modes,
        stability,
        mean_recursion,
        mean_final_estimate,
        empirical_bias,
        duration: start.elapsed(),
    })
}

/// Run a size comparison: one experiment per listed size, each built from the
/// uniform base profile with the step size assigned by the step rule (the
/// first listed size is the reference).
pub fn run_comparison(spec: &ComparisonSpec, parallelism: usize) -> Result<ComparisonBundle, RunError> {
    let start = Instant::now();
    let mut runs = Vec::with_capacity(spec.sizes().len());
    for &size in spec.sizes() {
        let step_size = spec.step_size_for(size);
        let derived = spec.derived_experiment(size, step_size)?;
        let bundle = run_experiment(&derived, parallelism)?;
        runs.push(SizedRun { size, step_size, bundle });
    }
    Ok(ComparisonBundle { spec: spec.clone(), runs, duration: start.elapsed() })
}

/// The convergence-mode table for a spec: over its mu*lambda grid when one is
/// configured, otherwise over the first node's covariance spectrum at that
/// node's step size.
fn mode_table(spec: &ExperimentSpec) -> ModeTable {
    let n_nodes = spec.config().n_nodes();
    match spec.mode_grid() {
        Some(grid) => analysis::convergence_modes(1.0, grid, n_nodes),
        None => {
            let profile = spec.config().node(0);
            let mut eigenvalues: Vec<f64> = nalgebra::SymmetricEigen::new(
                profile.regressor_covariance().clone(),
            )
            .eigenvalues
            .iter()
            .copied()
            .collect();
            eigenvalues.sort_by(|a, b| a.partial_cmp(b).expect("eigenvalues are finite"));
            // Clamp tiny negatives from the eigensolver; covariances are
            // validated positive semidefinite.
            for ev in &mut eigenvalues {
                *ev = ev.max(0.0);
            }
            analysis::convergence_modes(profile.step_size(), &eigenvalues, n_nodes)
        }
    }
}

/// Run all trials and return the mean curve plus the mean final estimate.
/// Aggregation order is trial-index order regardless of scheduling.
fn monte_carlo(
    config: &NetworkConfig,
    s0: &UnknownParameter,
    iterations: usize,
    trials: usize,
    parallelism: usize,
) -> Result<(LearningCurve, DVector<f64>), RunError> {
    let mut accumulator = CurveAccumulator::new(iterations, config.n_nodes());
    let mut final_sum = DVector::zeros(config.dimension());
    {
        let mut consume = |trial: u64,
                           result: Result<(TrialRecord, DVector<f64>), EngineError>|
         -> Result<(), RunError> {
            let (record, final_estimate) = result.map_err(|err| match err {
                EngineError::Divergence { node, iteration } => {
                    RunError::TrialDiverged { trial, node, iteration }
                }
                other => RunError::Engine(other),
            })?;
            accumulator.push(&record)?;
            final_sum += final_estimate;
            Ok(())
        };

        let end = trials as u64;
        if parallelism <= 1 {
            for trial in 0..end {
                consume(trial, engine::run_trial_full(config, s0, iterations, trial))?;
            }
        } else {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(parallelism)
                .build()
                .map_err(|err| RunError::WorkerPool(err.to_string()))?;
            let mut next = 0u64;
            while next < end {
                let hi = (next + TRIAL_BATCH).min(end);
                let batch: Vec<_> = pool.install(|| {
                    (next..hi)
                        .into_par_iter()
                        .map(|trial| (trial, engine::run_trial_full(config, s0, iterations, trial)))
                        .collect()
                });
                for (trial, result) in batch {
                    consume(trial, result)?;
                }
                next = hi;
            }
        }
    }
    let curve = accumulator.finish()?;
    let mean_final = final_sum / trials as f64;
    Ok((curve, mean_final))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::run_trial;
    use crate::experiment::spec::{
        parse_spec, CovarianceSpec, ExperimentDoc, LinkModeSpec, LoadedSpec, NodeDoc, S0Spec,
        StepRule,
    };

    fn uniform_doc(n_nodes: usize, step_size: f64, noise_variance: f64) -> ExperimentDoc {
        ExperimentDoc {
            dimension: 2,
            seed: 11,
            link_mode: LinkModeSpec::Ideal,
            iterations: 60,
            trials: 5,
            window_fraction: 0.1,
            s0: S0Spec::default(),
            nodes: vec![
                NodeDoc {
                    regressor_covariance: CovarianceSpec::identity(),
                    measurement_noise_variance: noise_variance,
                    step_size,
                    link_noise_covariance: CovarianceSpec::zero(),
                };
                n_nodes
            ],
            outputs: [OutputKind::LearningCurve, OutputKind::SteadyState].into_iter().collect(),
            mode_grid: None,
            sizes: None,
            step_rule: None,
        }
    }

    fn spec_from(doc: &ExperimentDoc) -> ExperimentSpec {
        ExperimentSpec::from_doc(doc).unwrap()
    }

    #[test]
    fn single_trial_curve_equals_the_trial_record() {
        let mut doc = uniform_doc(3, 0.05, 1e-3);
        doc.trials = 1;
        let spec = spec_from(&doc);
        let bundle = run_experiment(&spec, 1).unwrap();
        let record = run_trial(spec.config(), &spec.resolve_s0(), spec.iterations(), 0).unwrap();
        let curve = bundle.curve.unwrap();
        assert_eq!(curve.trials(), 1);
        for t in 0..spec.iterations() {
            for j in 0..3 {
                assert_eq!(curve.value(t, j), record.value(t, j));
            }
        }
    }

    #[test]
    fn results_are_bitwise_identical_across_parallelism_levels() {
        let mut doc = uniform_doc(4, 0.05, 1e-3);
        doc.trials = 37; // not a multiple of the batch size
        let spec = spec_from(&doc);
        let a = run_experiment(&spec, 1).unwrap();
        let b = run_experiment(&spec, 8).unwrap();
        assert_eq!(a.curve, b.curve);
        assert_eq!(a.steady, b.steady);
        assert_eq!(a.mean_final_estimate, b.mean_final_estimate);
        assert_eq!(a.empirical_bias, b.empirical_bias);
    }

    #[test]
    fn noise_free_stable_run_contracts_to_machine_scale_steady_state() {
        let mut doc = uniform_doc(4, 0.1, 0.0);
        doc.iterations = 300;
        doc.trials = 3;
        let spec = spec_from(&doc);
        let bundle = run_experiment(&spec, 2).unwrap();
        for msd in bundle.steady.unwrap().msd_per_node() {
            assert!(*msd <= 1e-8, "steady-state MSD {msd}");
        }
        assert!(bundle.empirical_bias.unwrap() <= 1e-4);
    }

    #[test]
    fn requested_outputs_control_what_is_computed() {
        let mut doc = uniform_doc(2, 0.05, 1e-3);
        doc.outputs = [OutputKind::Modes, OutputKind::Stability, OutputKind::MeanRecursion]
            .into_iter()
            .collect();
        doc.iterations = 10;
        let spec = spec_from(&doc);
        let bundle = run_experiment(&spec, 1).unwrap();
        assert!(bundle.curve.is_none());
        assert!(bundle.steady.is_none());
        assert!(bundle.mean_final_estimate.is_none());
        let modes = bundle.modes.unwrap();
        // Identity covariance: both eigenvalues are 1, magnitude |1-mu|^N.
        assert_eq!(modes.entries().len(), 2);
        let expected = (1.0_f64 - 0.05).abs().powi(2);
        assert!((modes.entries()[0].magnitude - expected).abs() < 1e-12);
        assert!(bundle.stability.unwrap().stable);
        assert_eq!(bundle.mean_recursion.unwrap().len(), 10);
    }

    #[test]
    fn mode_grid_sweeps_are_evaluated_verbatim() {
        let mut doc = uniform_doc(2, 0.05, 1e-3);
        doc.outputs = [OutputKind::Modes].into_iter().collect();
        doc.mode_grid = Some(vec![0.0, 0.5, 1.0, 2.0]);
        let spec = spec_from(&doc);
        let bundle = run_experiment(&spec, 1).unwrap();
        let modes = bundle.modes.unwrap();
        let products: Vec<f64> = modes.entries().iter().map(|e| e.mu_lambda).collect();
        assert_eq!(products, vec![0.0, 0.5, 1.0, 2.0]);
        assert_eq!(modes.entries()[0].magnitude, 1.0);
        assert_eq!(modes.entries()[2].magnitude, 0.0);
        assert_eq!(modes.entries()[3].magnitude, 1.0);
    }

    #[test]
    fn divergent_configurations_name_the_failing_trial() {
        let mut doc = uniform_doc(2, 30.0, 0.0);
        doc.iterations = 5000;
        doc.trials = 3;
        let spec = spec_from(&doc);
        match run_experiment(&spec, 1) {
            Err(RunError::TrialDiverged { trial: 0, node, iteration }) => {
                assert!(node >= 1 && iteration >= 1);
            }
            other => panic!("unexpected result {other:?}"),
        }
    }

    #[test]
    fn singleton_comparison_reproduces_the_base_experiment_bitwise() {
        let mut doc = uniform_doc(3, 0.05, 1e-3);
        doc.sizes = Some(vec![3]);
        let (cmp, base) = match parse_spec(&serde_json::to_string(&doc).unwrap(), "test").unwrap() {
            LoadedSpec::Comparison(cmp) => {
                doc.sizes = None;
                (cmp, spec_from(&doc))
            }
            LoadedSpec::Experiment(_) => panic!("expected a comparison"),
        };
        let comparison = run_comparison(&cmp, 2).unwrap();
        assert_eq!(comparison.runs.len(), 1);
        let direct = run_experiment(&base, 2).unwrap();
        assert_eq!(comparison.runs[0].bundle.curve, direct.curve);
        assert_eq!(comparison.runs[0].bundle.steady, direct.steady);
        assert_eq!(comparison.runs[0].step_size, 0.05);
    }

    #[test]
    fn comparison_step_rules_assign_the_documented_steps() {
        let mut doc = uniform_doc(1, 0.04, 1e-3);
        doc.sizes = Some(vec![10, 40]);
        doc.trials = 2;
        doc.iterations = 20;
        let cmp = ComparisonSpec::from_doc(&doc).unwrap();
        let fair = run_comparison(&cmp, 1).unwrap();
        assert_eq!(fair.runs[0].step_size, 0.04);
        assert_eq!(fair.runs[1].step_size, 0.01);
        assert_eq!(fair.runs[1].bundle.spec.config().n_nodes(), 40);
        // The adaptation product mu * N is preserved exactly.
        let p0 = fair.runs[0].step_size * 10.0;
        let p1 = fair.runs[1].step_size * 40.0;
        assert_eq!(p0, p1);

        doc.step_rule = Some(StepRule::Fixed);
        let cmp = ComparisonSpec::from_doc(&doc).unwrap();
        let fixed = run_comparison(&cmp, 1).unwrap();
        assert_eq!(fixed.runs[0].step_size, 0.04);
        assert_eq!(fixed.runs[1].step_size, 0.04);
    }

    #[test]
    fn comparison_sizes_share_the_same_resolved_parameter() {
        let mut doc = uniform_doc(2, 0.05, 1e-3);
        doc.sizes = Some(vec![2, 5]);
        doc.trials = 2;
        doc.iterations = 10;
        let cmp = ComparisonSpec::from_doc(&doc).unwrap();
        let bundle = run_comparison(&cmp, 1).unwrap();
        assert_eq!(bundle.runs[0].bundle.s0, bundle.runs[1].bundle.s0);
    }
}
