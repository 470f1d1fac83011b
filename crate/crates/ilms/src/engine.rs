//! The incremental ring recursion: per-node LMS updates, cycles, and trials.
//!
//! At each measurement time the estimate starts from the value the last node
//! produced at the previous time, visits every node once in ring order, and
//! each node applies one LMS correction using only its own fresh measurement:
//!
//! ```text
//! s_j(t) = s_{j-1}(t) + mu_j * h_j(t)^T * (x_j(t) - h_j(t) s_{j-1}(t))
//! ```
//!
//! Under noisy links the incoming estimate is perturbed by additive noise
//! before the same correction is applied. All inner products and axpy updates
//! run in fixed left-to-right order (see `vecops`), so results are bitwise
//! reproducible and a plain scalar LMS filter reproduces the single-node ring
//! exactly.

use nalgebra::DVector;
use thiserror::Error;

use crate::model::{self, LinkMode, Measurement, NetworkConfig, UnknownParameter};
use crate::rng::TrialStreams;
use crate::vecops;

/// The estimate vector as it circulates the ring.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleState {
    estimate: DVector<f64>,
}

impl CycleState {
    /// The conventional cold start: the zero vector.
    pub fn zero(dimension: usize) -> Self {
        Self { estimate: DVector::zeros(dimension) }
    }

    pub fn new(estimate: DVector<f64>) -> Self {
        Self { estimate }
    }

    pub fn estimate(&self) -> &DVector<f64> {
        &self.estimate
    }

    pub fn into_estimate(self) -> DVector<f64> {
        self.estimate
    }
}

/// Failures raised while running the recursion.
#[derive(Debug, Error)]
pub enum EngineError {
    #[error("estimate diverged to a non-finite value at node {node}, iteration {iteration}")]
    Divergence { node: usize, iteration: usize },
    #[error("unknown parameter has {actual} entries, network dimension is {expected}")]
    DimensionMismatch { expected: usize, actual: usize },
}

/// One LMS correction against a single measurement.
///
/// Evaluation order is pinned: the prediction error is
/// `e = x - sum_i h[i] s[i]` accumulated left to right, the gain is
/// `g = step * e`, and each component updates as `s[i] + g * h[i]`.
pub fn node_update_ideal(incoming: &CycleState, measurement: &Measurement, step_size: f64) -> CycleState {
    let s = incoming.estimate.as_slice();
    let h = measurement.regressor.as_slice();
    debug_assert_eq!(s.len(), h.len());
    let error = measurement.observation - vecops::dot(h, s);
    let gain = step_size * error;
    let estimate =
        DVector::from_iterator(s.len(), s.iter().zip(h).map(|(si, hi)| si + gain * hi));
    CycleState { estimate }
}

/// The noisy-link variant: the incoming estimate is perturbed by the link
/// noise, then the standard correction is applied to the perturbed value.
///
/// This is algebraically the same as adding `q - step * h^T h q` after an
/// ideal update of the unperturbed estimate, and it reduces bitwise to
/// [`node_update_ideal`] when the noise vector is zero.
pub fn node_update_noisy(
    incoming: &CycleState,
    link_noise: &DVector<f64>,
    measurement: &Measurement,
    step_size: f64,
) -> CycleState {
    let perturbed = CycleState { estimate: &incoming.estimate + link_noise };
    node_update_ideal(&perturbed, measurement, step_size)
}

/// Pass the estimate once around the ring at measurement time `iteration`
/// (1-based), drawing fresh data at every node.
///
/// Returns the updated state and the squared estimation error
/// `||s0 - s_j(t)||^2` recorded after each node's update, in ring order.
/// Link-noise variates are drawn on every hop in both link modes, so an
/// ideal-mode run and a noisy-mode run with zero link covariance consume
/// identical stream positions and produce identical results.
pub fn run_cycle(
    state: CycleState,
    config: &NetworkConfig,
    s0: &UnknownParameter,
    streams: &mut TrialStreams,
    iteration: usize,
) -> Result<(CycleState, Vec<f64>), EngineError> {
    let mut state = state;
    let mut errors = Vec::with_capacity(config.n_nodes());
    for (idx, profile) in config.nodes().iter().enumerate() {
        let h = model::sample_regressor(profile, streams.regressor(idx));
        let measurement = model::sample_measurement(h, s0, profile, streams.measurement(idx));
        let q = model::sample_link_noise(profile, streams.link(idx));
        state = match config.link_mode() {
            LinkMode::Ideal => node_update_ideal(&state, &measurement, profile.step_size()),
            LinkMode::Noisy => node_update_noisy(&state, &q, &measurement, profile.step_size()),
        };
        if !vecops::all_finite(state.estimate.as_slice()) {
            return Err(EngineError::Divergence { node: idx + 1, iteration });
        }
        errors.push(vecops::squared_distance(s0.values().as_slice(), state.estimate.as_slice()));
    }
    Ok((state, errors))
}

/// Squared estimation errors for one trial, indexed by measurement time and
/// ring position (both 0-based here; reporting layers shift to 1-based).
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    iterations: usize,
    nodes: usize,
    // Row-major: entry (t, j) at t * nodes + j.
    per_node_error_sq: Vec<f64>,
}

impl TrialRecord {
    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    /// Squared error after node `node`'s update at measurement time `t`.
    pub fn value(&self, t: usize, node: usize) -> f64 {
        self.per_node_error_sq[t * self.nodes + node]
    }

    /// All squared errors at measurement time `t`, in ring order.
    pub fn row(&self, t: usize) -> &[f64] {
        &self.per_node_error_sq[t * self.nodes..(t + 1) * self.nodes]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.per_node_error_sq
    }
}

/// Run one full trial from the zero start: `iterations` measurement times,
/// each one full pass around the ring.
///
/// `trial_index` selects the trial's independent random substreams; distinct
/// indices give statistically independent trials under the same seed.
pub fn run_trial(
    config: &NetworkConfig,
    s0: &UnknownParameter,
    iterations: usize,
    trial_index: u64,
) -> Result<TrialRecord, EngineError> {
    run_trial_full(config, s0, iterations, trial_index).map(|(record, _)| record)
}

/// [`run_trial`] plus the final estimate, for callers that aggregate the mean
/// final estimate across trials.
pub fn run_trial_full(
    config: &NetworkConfig,
    s0: &UnknownParameter,
    iterations: usize,
    trial_index: u64,
) -> Result<(TrialRecord, DVector<f64>), EngineError> {
    assert!(iterations > 0, "iterations must be positive");
    if s0.len() != config.dimension() {
        return Err(EngineError::DimensionMismatch {
            expected: config.dimension(),
            actual: s0.len(),
        });
    }
    let nodes = config.n_nodes();
    let mut streams = TrialStreams::new(config.seed(), nodes, trial_index);
    let mut state = CycleState::zero(config.dimension());
    let mut per_node_error_sq = Vec::with_capacity(iterations * nodes);
    for t in 1..=iterations {
        let (next, errors) = run_cycle(state, config, s0, &mut streams, t)?;
        state = next;
        per_node_error_sq.extend_from_slice(&errors);
    }
    let record = TrialRecord { iterations, nodes, per_node_error_sq };
    Ok((record, state.into_estimate()))
}
