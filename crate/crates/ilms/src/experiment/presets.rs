//! Built-in experiment presets: ready-made size comparisons for the three
//! canonical studies (ideal-link size sweep, convergence-mode sweep, and
//! noisy-link size sweep).
//!
//! All presets share one uniform profile: dimension 4, identity regressor
//! covariance, measurement-noise variance 1e-3, reference step 0.02 at the
//! reference size of 10 nodes, 200 trials of 2000 iterations, seed 42, and a
//! unit-norm parameter drawn from the seed. Every value is recorded in the
//! run metadata and overridable through a config file or CLI flags.

use std::collections::BTreeSet;

use super::spec::{
    ComparisonSpec, CovarianceSpec, ExperimentDoc, LinkModeSpec, LoadedSpec, NodeDoc, OutputKind,
    S0Spec, SpecError, StepRule,
};

pub const PRESET_NAMES: &[&str] = &["fig2_ideal_size", "fig3_modes", "fig4_noisy_size"];

const PRESET_SEED: u64 = 42;
const PRESET_DIMENSION: usize = 4;
const PRESET_NOISE_VARIANCE: f64 = 1e-3;
/// Reference step size, paired with the first (reference) entry of
/// [`PRESET_SIZES`].
const PRESET_STEP: f64 = 0.02;
const PRESET_TRIALS: usize = 200;
const PRESET_ITERATIONS: usize = 2000;
const PRESET_SIZES: [usize; 2] = [10, 40];
/// Per-component link-noise variance for the noisy-link preset.
const NOISY_LINK_VARIANCE: f64 = 1e-4;

/// Look up a built-in preset by name.
pub fn preset(name: &str) -> Result<LoadedSpec, SpecError> {
    let doc = match name {
        "fig2_ideal_size" => comparison_doc(
            LinkModeSpec::Ideal,
            0.0,
            [OutputKind::LearningCurve, OutputKind::SteadyState].into_iter().collect(),
            None,
        ),
        "fig3_modes" => comparison_doc(
            LinkModeSpec::Ideal,
            0.0,
            [OutputKind::Modes, OutputKind::Stability].into_iter().collect(),
            // mu*lambda from 0 to 2 in steps of 0.05, endpoints exact.
            Some((0..=40).map(|i| i as f64 / 20.0).collect()),
        ),
        "fig4_noisy_size" => comparison_doc(
            LinkModeSpec::Noisy,
            NOISY_LINK_VARIANCE,
            [OutputKind::LearningCurve, OutputKind::SteadyState].into_iter().collect(),
            None,
        ),
        other => {
            return Err(SpecError::UnknownPreset {
                name: other.to_string(),
                available: PRESET_NAMES.join(", "),
            })
        }
    };
    Ok(LoadedSpec::Comparison(ComparisonSpec::from_doc(&doc)?))
}

/// The shared comparison document: a uniform base network at the reference
/// size, swept over [`PRESET_SIZES`] under the fair step rule.
fn comparison_doc(
    link_mode: LinkModeSpec,
    link_variance: f64,
    outputs: BTreeSet<OutputKind>,
    mode_grid: Option<Vec<f64>>,
) -> ExperimentDoc {
    let node = NodeDoc {
        regressor_covariance: CovarianceSpec::identity(),
        measurement_noise_variance: PRESET_NOISE_VARIANCE,
        step_size: PRESET_STEP,
        link_noise_covariance: CovarianceSpec::ScaledIdentity { scaled_identity: link_variance },
    };
    ExperimentDoc {
        dimension: PRESET_DIMENSION,
        seed: PRESET_SEED,
        link_mode,
        iterations: PRESET_ITERATIONS,
        trials: PRESET_TRIALS,
        window_fraction: 0.1,
        s0: S0Spec::default(),
        nodes: vec![node; PRESET_SIZES[0]],
        outputs,
        mode_grid,
        sizes: Some(PRESET_SIZES.to_vec()),
        step_rule: Some(StepRule::Fair),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::fair_step_size;
    use crate::model::LinkMode;

    fn comparison(name: &str) -> ComparisonSpec {
        match preset(name).unwrap() {
            LoadedSpec::Comparison(cmp) => cmp,
            LoadedSpec::Experiment(_) => panic!("presets are comparisons"),
        }
    }

    #[test]
    fn unknown_names_list_the_available_presets() {
        match preset("fig9") {
            Err(SpecError::UnknownPreset { name, available }) => {
                assert_eq!(name, "fig9");
                for known in PRESET_NAMES {
                    assert!(available.contains(known));
                }
            }
            other => panic!("unexpected result {other:?}"),
        }
    }

    #[test]
    fn size_sweep_presets_preserve_the_adaptation_product_exactly() {
        for name in ["fig2_ideal_size", "fig4_noisy_size"] {
            let cmp = comparison(name);
            assert_eq!(cmp.sizes(), &PRESET_SIZES);
            assert_eq!(cmp.step_rule(), StepRule::Fair);
            let mu_small = cmp.base().config().node(0).step_size();
            let mu_large = fair_step_size(mu_small, PRESET_SIZES[0], PRESET_SIZES[1]);
            assert_eq!(mu_small * PRESET_SIZES[0] as f64, mu_large * PRESET_SIZES[1] as f64);
        }
    }

    #[test]
    fn link_modes_and_noise_follow_the_preset_names() {
        let ideal = comparison("fig2_ideal_size");
        assert_eq!(ideal.base().config().link_mode(), LinkMode::Ideal);
        assert!(ideal.base().config().node(0).link_noise_covariance().iter().all(|x| *x == 0.0));

        let noisy = comparison("fig4_noisy_size");
        assert_eq!(noisy.base().config().link_mode(), LinkMode::Noisy);
        assert_eq!(noisy.base().config().node(0).link_noise_covariance()[(0, 0)], NOISY_LINK_VARIANCE);
    }

    #[test]
    fn mode_sweep_grid_covers_the_closed_interval_with_exact_endpoints() {
        let cmp = comparison("fig3_modes");
        let grid = cmp.base().mode_grid().unwrap();
        assert_eq!(grid.len(), 41);
        assert_eq!(grid[0], 0.0);
        assert_eq!(grid[20], 1.0);
        assert_eq!(grid[40], 2.0);
        assert!(grid.windows(2).all(|w| w[0] < w[1]));
        assert!(cmp.base().outputs().contains(&OutputKind::Modes));
    }

    #[test]
    fn presets_round_trip_through_their_canonical_documents() {
        use crate::experiment::spec::{canonical_json, parse_spec};
        for name in PRESET_NAMES {
            let original = preset(name).unwrap();
            let reloaded = parse_spec(&canonical_json(&original.to_doc()), "canonical").unwrap();
            assert_eq!(original, reloaded);
        }
    }
}
