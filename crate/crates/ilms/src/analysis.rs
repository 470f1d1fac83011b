//! Closed-form and statistical analysis companions to the simulator: the
//! Wiener (linear MMSE) solution, empirical MSD learning curves and their
//! steady-state summaries, the mean weight-error recursion and its convergence
//! modes, stability checks, and the fair step-size rule for comparing
//! networks of different sizes.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use thiserror::Error;

use crate::engine::TrialRecord;
use crate::model::NetworkConfig;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("covariance must be square and match the cross-covariance: matrix is {rows}x{cols}, vector has {len}")]
    ShapeMismatch { rows: usize, cols: usize, len: usize },
    #[error("covariance is not symmetric (max asymmetry {asymmetry:.3e})")]
    NotSymmetric { asymmetry: f64 },
    #[error("covariance is not positive definite (smallest eigenvalue {min_eigenvalue:.6e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },
    #[error("no trial records supplied")]
    EmptyRecords,
    #[error("record {index} has shape {iterations}x{nodes}, expected {expected_iterations}x{expected_nodes}")]
    RecordShapeMismatch {
        index: usize,
        expected_iterations: usize,
        expected_nodes: usize,
        iterations: usize,
        nodes: usize,
    },
    #[error("window_fraction must lie in (0, 1], got {value}")]
    InvalidWindowFraction { value: f64 },
}

/// Solve `cov_h * s = cross_cov` for the linear MMSE estimate by Cholesky
/// factorization (never explicit inversion).
pub fn wiener_solution(
    cov_h: &DMatrix<f64>,
    cross_cov: &DVector<f64>,
) -> Result<DVector<f64>, AnalysisError> {
    if cov_h.nrows() != cov_h.ncols() || cov_h.nrows() != cross_cov.len() || cross_cov.is_empty() {
        return Err(AnalysisError::ShapeMismatch {
            rows: cov_h.nrows(),
            cols: cov_h.ncols(),
            len: cross_cov.len(),
        });
    }
    let scale = cov_h.iter().fold(0.0_f64, |a, x| a.max(x.abs())).max(1.0);
    let asymmetry = (cov_h - cov_h.transpose()).iter().fold(0.0_f64, |a, x| a.max(x.abs()));
    if asymmetry > 1e-9 * scale {
        return Err(AnalysisError::NotSymmetric { asymmetry });
    }
    match Cholesky::new(cov_h.clone()) {
        Some(chol) => Ok(chol.solve(cross_cov)),
        None => {
            let min_eigenvalue =
                SymmetricEigen::new(cov_h.clone()).eigenvalues.iter().fold(f64::INFINITY, |a, x| a.min(*x));
            Err(AnalysisError::NotPositiveDefinite { min_eigenvalue })
        }
    }
}

/// Empirical MSD as a function of measurement time and ring position: the
/// entrywise average of per-trial squared errors.
#[derive(Debug, Clone, PartialEq)]
pub struct LearningCurve {
    iterations: usize,
    nodes: usize,
    trials: usize,
    // Row-major: entry (t, j) at t * nodes + j.
    msd: Vec<f64>,
}

impl LearningCurve {
    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    /// Number of trials averaged into each entry.
    pub fn trials(&self) -> usize {
        self.trials
    }

    /// MSD after node `node`'s update at measurement time `t` (both 0-based).
    pub fn value(&self, t: usize, node: usize) -> f64 {
        self.msd[t * self.nodes + node]
    }

    /// The time series of one node's MSD.
    pub fn node_series(&self, node: usize) -> impl Iterator<Item = f64> + '_ {
        (0..self.iterations).map(move |t| self.value(t, node))
    }

    /// All per-node MSD values at measurement time `t` (0-based), in node order.
    pub fn row(&self, t: usize) -> &[f64] {
        &self.msd[t * self.nodes..(t + 1) * self.nodes]
    }

    /// 0-based index of the last node in the ring, whose series is the
    /// conventional "learning curve" of the whole network.
    pub fn terminal_node(&self) -> usize {
        self.nodes - 1
    }
}

/// Streaming mean of trial records, accumulated in push order so results are
/// independent of how trials were scheduled.
#[derive(Debug)]
pub struct CurveAccumulator {
    iterations: usize,
    nodes: usize,
    count: usize,
    sum: Vec<f64>,
}

impl CurveAccumulator {
    pub fn new(iterations: usize, nodes: usize) -> Self {
        Self { iterations, nodes, count: 0, sum: vec![0.0; iterations * nodes] }
    }

    pub fn push(&mut self, record: &TrialRecord) -> Result<(), AnalysisError> {
        if record.iterations() != self.iterations || record.nodes() != self.nodes {
            return Err(AnalysisError::RecordShapeMismatch {
                index: self.count,
                expected_iterations: self.iterations,
                expected_nodes: self.nodes,
                iterations: record.iterations(),
                nodes: record.nodes(),
            });
        }
        for (acc, x) in self.sum.iter_mut().zip(record.as_slice()) {
            *acc += x;
        }
        self.count += 1;
        Ok(())
    }

    pub fn finish(self) -> Result<LearningCurve, AnalysisError> {
        if self.count == 0 {
            return Err(AnalysisError::EmptyRecords);
        }
        let n = self.count as f64;
        let msd = self.sum.into_iter().map(|s| s / n).collect();
        Ok(LearningCurve { iterations: self.iterations, nodes: self.nodes, trials: self.count, msd })
    }
}

/// Entrywise mean of the given records (at least one, all the same shape).
pub fn empirical_learning_curve(records: &[TrialRecord]) -> Result<LearningCurve, AnalysisError> {
    let first = records.first().ok_or(AnalysisError::EmptyRecords)?;
    let mut acc = CurveAccumulator::new(first.iterations(), first.nodes());
    for record in records {
        acc.push(record)?;
    }
    acc.finish()
}

/// Trailing-window summary of a learning curve: per-node mean MSD and its
/// standard error over the final stretch of iterations.
///
/// Window bounds are 1-based iteration numbers; `window_end` is always the
/// final iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct SteadyStateEstimate {
    msd_per_node: Vec<f64>,
    standard_error_per_node: Vec<f64>,
    window_start: usize,
    window_end: usize,
}

impl SteadyStateEstimate {
    pub fn nodes(&self) -> usize {
        self.msd_per_node.len()
    }

    pub fn msd_per_node(&self) -> &[f64] {
        &self.msd_per_node
    }

    pub fn standard_error_per_node(&self) -> &[f64] {
        &self.standard_error_per_node
    }

    /// Steady-state MSD at the last node in the ring.
    pub fn terminal_msd(&self) -> f64 {
        *self.msd_per_node.last().expect("estimate has at least one node")
    }

    pub fn terminal_standard_error(&self) -> f64 {
        *self.standard_error_per_node.last().expect("estimate has at least one node")
    }

    pub fn window_start(&self) -> usize {
        self.window_start
    }

    pub fn window_end(&self) -> usize {
        self.window_end
    }
}

/// Estimate the steady-state MSD per node as the mean over the trailing
/// `ceil(window_fraction * iterations)` iterations, with the standard error
/// of that mean (sample standard deviation over the window divided by the
/// square root of the window length; zero for a single-iteration window).
pub fn steady_state(
    curve: &LearningCurve,
    window_fraction: f64,
) -> Result<SteadyStateEstimate, AnalysisError> {
    if !(window_fraction > 0.0 && window_fraction <= 1.0) {
        return Err(AnalysisError::InvalidWindowFraction { value: window_fraction });
    }
    let iterations = curve.iterations();
    let window = ((window_fraction * iterations as f64).ceil() as usize).clamp(1, iterations);
    let start = iterations - window; // 0-based first window index
    let mut msd_per_node = Vec::with_capacity(curve.nodes());
    let mut standard_error_per_node = Vec::with_capacity(curve.nodes());
    for node in 0..curve.nodes() {
        let mut sum = 0.0;
        for t in start..iterations {
            sum += curve.value(t, node);
        }
        let mean = sum / window as f64;
        let se = if window > 1 {
            let mut sq = 0.0;
            for t in start..iterations {
                let d = curve.value(t, node) - mean;
                sq += d * d;
            }
            (sq / (window - 1) as f64).sqrt() / (window as f64).sqrt()
        } else {
            0.0
        };
        msd_per_node.push(mean);
        standard_error_per_node.push(se);
    }
    Ok(SteadyStateEstimate {
        msd_per_node,
        standard_error_per_node,
        window_start: start + 1,
        window_end: iterations,
    })
}

/// Step size giving a network of `n_target` nodes the same total
/// per-measurement-time adaptation as `mu_ref` gives a network of `n_ref`
/// nodes: the product `mu * n` is preserved.
pub fn fair_step_size(mu_ref: f64, n_ref: usize, n_target: usize) -> f64 {
    assert!(mu_ref > 0.0 && mu_ref.is_finite(), "reference step must be positive");
    assert!(n_ref > 0 && n_target > 0, "node counts must be positive");
    mu_ref * n_ref as f64 / n_target as f64
}

/// The matrix a full ring cycle applies to the mean weight error: the product
/// of the per-node factors `I - mu_j * C_j`, node 1's factor applied first.
pub fn cycle_transition_matrix(config: &NetworkConfig) -> DMatrix<f64> {
    let m = config.dimension();
    let eye = DMatrix::<f64>::identity(m, m);
    let mut transition = eye.clone();
    for profile in config.nodes() {
        let factor = &eye - profile.regressor_covariance() * profile.step_size();
        transition = factor * transition;
    }
    transition
}

/// Iterate the mean weight-error recursion `v(t) = T v(t-1)` from
/// `initial_mean_error`, returning `v(1), ..., v(iterations)`.
///
/// Divergent growth is legitimate output here; callers decide stability via
/// [`stability_check`].
pub fn mean_error_recursion(
    config: &NetworkConfig,
    initial_mean_error: &DVector<f64>,
    iterations: usize,
) -> Vec<DVector<f64>> {
    assert_eq!(
        initial_mean_error.len(),
        config.dimension(),
        "initial mean error must match the network dimension"
    );
    let transition = cycle_transition_matrix(config);
    let mut sequence = Vec::with_capacity(iterations);
    let mut v = initial_mean_error.clone();
    for _ in 0..iterations {
        v = &transition * v;
        sequence.push(v.clone());
    }
    sequence
}

/// One convergence mode: the contraction factor of the mean error along one
/// eigendirection of the (uniform) regressor covariance, compounded over a
/// full ring cycle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeEntry {
    /// 1-based eigenvalue (or grid-point) index.
    pub index: usize,
    /// The product mu * lambda for this mode.
    pub mu_lambda: f64,
    /// |1 - mu*lambda|^n_nodes.
    pub magnitude: f64,
}

/// Per-eigenvalue convergence-mode magnitudes for a uniform network of a
/// given size.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeTable {
    n_nodes: usize,
    entries: Vec<ModeEntry>,
}

impl ModeTable {
    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn entries(&self) -> &[ModeEntry] {
        &self.entries
    }
}

/// Magnitude of each mean-error convergence mode, `|1 - mu*lambda|^n_nodes`,
/// for a uniform network of `n_nodes` nodes whose regressor covariance has
/// the given eigenvalues.
///
/// Zero eigenvalues are permitted so sweeps can include the no-adaptation
/// boundary, where the magnitude is exactly 1; it is also exactly 1 at
/// `mu * lambda = 2` and exactly 0 at `mu * lambda = 1`.
pub fn convergence_modes(mu: f64, eigenvalues: &[f64], n_nodes: usize) -> ModeTable {
    assert!(mu > 0.0 && mu.is_finite(), "step size must be positive");
    assert!(n_nodes > 0, "node count must be positive");
    let entries = eigenvalues
        .iter()
        .enumerate()
        .map(|(i, lambda)| {
            assert!(*lambda >= 0.0 && lambda.is_finite(), "eigenvalues must be nonnegative");
            let mu_lambda = mu * lambda;
            ModeEntry {
                index: i + 1,
                mu_lambda,
                magnitude: (1.0 - mu_lambda).abs().powi(n_nodes as i32),
            }
        })
        .collect();
    ModeTable { n_nodes, entries }
}

/// Spectral radius of the cycle transition matrix and the resulting
/// mean-stability verdict (stable iff radius < 1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityReport {
    pub spectral_radius: f64,
    pub stable: bool,
}

/// Mean-error stability of a configuration: the spectral radius of the full
/// cycle transition matrix, computed by dense eigendecomposition.
pub fn stability_check(config: &NetworkConfig) -> StabilityReport {
    let transition = cycle_transition_matrix(config);
    let spectral_radius =
        transition.complex_eigenvalues().iter().fold(0.0_f64, |a, c| a.max(c.norm()));
    StabilityReport { spectral_radius, stable: spectral_radius < 1.0 }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::run_trial;
    use crate::model::{LinkMode, NodeProfile, UnknownParameter};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_spd(m: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        // A A^T plus a diagonal bump is symmetric positive definite.
        let a = DMatrix::from_fn(m, m, |_, _| rng.gen_range(-1.0..1.0));
        &a * a.transpose() + DMatrix::identity(m, m) * 0.5
    }

    fn uniform_config(
        dimension: usize,
        n_nodes: usize,
        covariance: DMatrix<f64>,
        step_size: f64,
        seed: u64,
    ) -> NetworkConfig {
        let zero = DMatrix::zeros(dimension, dimension);
        let profile = NodeProfile::new(covariance, 0.0, step_size, zero).unwrap();
        NetworkConfig::new(dimension, vec![profile; n_nodes], LinkMode::Ideal, seed).unwrap()
    }

    #[test]
    fn wiener_identity_system_returns_the_cross_covariance() {
        let v = DVector::from_row_slice(&[1.5, -2.0, 0.25]);
        let s = wiener_solution(&DMatrix::identity(3, 3), &v).unwrap();
        assert!((s - v).norm() < 1e-14);
    }

    #[test]
    fn wiener_recovers_s0_from_analytic_network_moments() {
        // Summed per-node moments C = sum C_j and c = sum C_j s0 must return
        // exactly the configured parameter (up to solver tolerance).
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..20 {
            let m = rng.gen_range(2..=5);
            let n_nodes = rng.gen_range(1..=4);
            let s0 = DVector::from_fn(m, |_, _| rng.gen_range(-2.0..2.0));
            let mut cov_sum = DMatrix::zeros(m, m);
            let mut cross_sum = DVector::zeros(m);
            for _ in 0..n_nodes {
                let c = random_spd(m, &mut rng);
                cross_sum += &c * &s0;
                cov_sum += c;
            }
            let recovered = wiener_solution(&cov_sum, &cross_sum).unwrap();
            assert!(
                (&recovered - &s0).norm() <= 1e-10 * s0.norm().max(1.0),
                "residual {}",
                (&recovered - &s0).norm()
            );
        }
    }

    #[test]
    fn wiener_recovers_s0_from_sample_moments() {
        use crate::model::{sample_measurement, sample_regressor};
        use crate::rng::TrialStreams;

        let m = 2;
        let n_nodes = 3;
        let draws_per_node = 33_334; // ~1e5 measurements total
        let s0 = UnknownParameter::new(DVector::from_row_slice(&[0.8, -1.3])).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(90);
        let profiles: Vec<NodeProfile> = (0..n_nodes)
            .map(|_| {
                NodeProfile::new(random_spd(m, &mut rng), 0.5, 0.01, DMatrix::zeros(m, m)).unwrap()
            })
            .collect();
        let mut streams = TrialStreams::new(90, n_nodes, 0);
        let mut cov_sum = DMatrix::<f64>::zeros(m, m);
        let mut cross_sum = DVector::<f64>::zeros(m);
        for (j, profile) in profiles.iter().enumerate() {
            let mut cov = DMatrix::<f64>::zeros(m, m);
            let mut cross = DVector::<f64>::zeros(m);
            for _ in 0..draws_per_node {
                let h = sample_regressor(profile, streams.regressor(j));
                let meas = sample_measurement(h, &s0, profile, streams.measurement(j));
                cov += &meas.regressor * meas.regressor.transpose();
                cross += &meas.regressor * meas.observation;
            }
            cov_sum += cov / draws_per_node as f64;
            cross_sum += cross / draws_per_node as f64;
        }
        let recovered = wiener_solution(&cov_sum, &cross_sum).unwrap();
        let total_draws = (n_nodes * draws_per_node) as f64;
        let tol = 3.0 / total_draws.sqrt();
        let rel = (&recovered - s0.values()).norm() / s0.values().norm();
        assert!(rel < tol, "relative error {rel} exceeds {tol}");
    }

    #[test]
    fn wiener_rejects_singular_and_asymmetric_inputs() {
        let singular = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let v = DVector::from_row_slice(&[1.0, 1.0]);
        match wiener_solution(&singular, &v) {
            Err(AnalysisError::NotPositiveDefinite { min_eigenvalue }) => {
                assert!(min_eigenvalue.abs() < 1e-9, "smallest eigenvalue {min_eigenvalue}");
            }
            other => panic!("unexpected result {other:?}"),
        }

        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.0, 1.0]);
        assert!(matches!(wiener_solution(&asym, &v), Err(AnalysisError::NotSymmetric { .. })));

        let bad_len = DVector::from_row_slice(&[1.0]);
        assert!(matches!(
            wiener_solution(&DMatrix::identity(2, 2), &bad_len),
            Err(AnalysisError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn curve_of_one_record_equals_the_record() {
        let config = uniform_config(2, 3, DMatrix::identity(2, 2), 0.05, 4);
        let s0 = UnknownParameter::random_unit(2, 4);
        let record = run_trial(&config, &s0, 40, 0).unwrap();
        let curve = empirical_learning_curve(std::slice::from_ref(&record)).unwrap();
        assert_eq!(curve.trials(), 1);
        for t in 0..40 {
            for j in 0..3 {
                assert_eq!(curve.value(t, j), record.value(t, j));
            }
        }
    }

    #[test]
    fn curve_averages_two_records_entrywise() {
        let config = uniform_config(2, 2, DMatrix::identity(2, 2), 0.05, 9);
        let s0 = UnknownParameter::random_unit(2, 9);
        let a = run_trial(&config, &s0, 25, 0).unwrap();
        let b = run_trial(&config, &s0, 25, 1).unwrap();
        let curve = empirical_learning_curve(&[a.clone(), b.clone()]).unwrap();
        for t in 0..25 {
            for j in 0..2 {
                let expected = (a.value(t, j) + b.value(t, j)) / 2.0;
                assert_eq!(curve.value(t, j), expected);
            }
        }
    }

    #[test]
    fn curve_rejects_mismatched_shapes_and_empty_input() {
        let config = uniform_config(2, 2, DMatrix::identity(2, 2), 0.05, 9);
        let s0 = UnknownParameter::random_unit(2, 9);
        let a = run_trial(&config, &s0, 25, 0).unwrap();
        let b = run_trial(&config, &s0, 30, 1).unwrap();
        assert!(matches!(
            empirical_learning_curve(&[a, b]),
            Err(AnalysisError::RecordShapeMismatch { index: 1, .. })
        ));
        assert!(matches!(empirical_learning_curve(&[]), Err(AnalysisError::EmptyRecords)));
    }

    #[test]
    fn accumulator_matches_the_batch_mean_bitwise() {
        let config = uniform_config(3, 2, DMatrix::identity(3, 3), 0.05, 13);
        let s0 = UnknownParameter::random_unit(3, 13);
        let records: Vec<TrialRecord> =
            (0..7).map(|i| run_trial(&config, &s0, 15, i).unwrap()).collect();
        let batch = empirical_learning_curve(&records).unwrap();
        let mut acc = CurveAccumulator::new(15, 2);
        for r in &records {
            acc.push(r).unwrap();
        }
        assert_eq!(acc.finish().unwrap(), batch);
    }

    #[test]
    fn steady_state_of_noise_free_contraction_is_tiny() {
        // Stable, noise-free, link-noise-free: the estimate contracts to s0,
        // so the trailing-window MSD is numerically zero.
        let config = uniform_config(2, 4, DMatrix::identity(2, 2), 0.2, 6);
        let s0 = UnknownParameter::random_unit(2, 6);
        let record = run_trial(&config, &s0, 200, 0).unwrap();
        let curve = empirical_learning_curve(&[record]).unwrap();
        let steady = steady_state(&curve, 0.1).unwrap();
        for msd in steady.msd_per_node() {
            assert!(*msd <= 1e-8, "steady-state MSD {msd}");
        }
    }

    #[test]
    fn steady_state_of_a_constant_window_is_exact_with_zero_error() {
        // A single-iteration window is trivially constant: the mean is the
        // lone value and the standard error is exactly zero.
        let config = uniform_config(2, 3, DMatrix::identity(2, 2), 0.05, 2);
        let s0 = UnknownParameter::random_unit(2, 2);
        let record = run_trial(&config, &s0, 1, 0).unwrap();
        let curve = empirical_learning_curve(&[record.clone()]).unwrap();
        let steady = steady_state(&curve, 1.0).unwrap();
        assert_eq!(steady.window_start(), 1);
        assert_eq!(steady.window_end(), 1);
        for j in 0..3 {
            assert_eq!(steady.msd_per_node()[j], record.value(0, j));
            assert_eq!(steady.standard_error_per_node()[j], 0.0);
        }
    }

    #[test]
    fn steady_state_window_matches_a_direct_summation_oracle() {
        let config = uniform_config(2, 3, DMatrix::identity(2, 2), 0.05, 12);
        let s0 = UnknownParameter::random_unit(2, 12);
        let records: Vec<TrialRecord> =
            (0..4).map(|i| run_trial(&config, &s0, 120, i).unwrap()).collect();
        let curve = empirical_learning_curve(&records).unwrap();
        let steady = steady_state(&curve, 0.1).unwrap();
        // ceil(0.1 * 120) = 12 -> window covers iterations 109..=120 (1-based).
        assert_eq!(steady.window_start(), 109);
        assert_eq!(steady.window_end(), 120);
        for node in 0..3 {
            // Independent summation in reverse order.
            let mut sum = 0.0;
            for t in (108..120).rev() {
                sum += curve.value(t, node);
            }
            let mean = sum / 12.0;
            let got = steady.msd_per_node()[node];
            assert!(
                (got - mean).abs() <= 1e-12 * mean.abs().max(1e-300),
                "node {node}: {got} vs oracle {mean}"
            );
            let mut sq = 0.0;
            for t in (108..120).rev() {
                let d = curve.value(t, node) - mean;
                sq += d * d;
            }
            let se = (sq / 11.0).sqrt() / 12.0_f64.sqrt();
            let got_se = steady.standard_error_per_node()[node];
            assert!((got_se - se).abs() <= 1e-12 * se.max(1e-300), "node {node}: SE {got_se} vs {se}");
        }
    }

    #[test]
    fn steady_state_with_full_window_averages_everything() {
        let config = uniform_config(2, 1, DMatrix::identity(2, 2), 0.05, 3);
        let s0 = UnknownParameter::random_unit(2, 3);
        let record = run_trial(&config, &s0, 50, 0).unwrap();
        let curve = empirical_learning_curve(&[record]).unwrap();
        let steady = steady_state(&curve, 1.0).unwrap();
        assert_eq!((steady.window_start(), steady.window_end()), (1, 50));
        let mean: f64 = curve.node_series(0).sum::<f64>() / 50.0;
        assert!((steady.msd_per_node()[0] - mean).abs() < 1e-15);
    }

    #[test]
    fn steady_state_rejects_bad_window_fractions() {
        let config = uniform_config(2, 1, DMatrix::identity(2, 2), 0.05, 3);
        let s0 = UnknownParameter::random_unit(2, 3);
        let curve =
            empirical_learning_curve(&[run_trial(&config, &s0, 5, 0).unwrap()]).unwrap();
        assert!(matches!(steady_state(&curve, 0.0), Err(AnalysisError::InvalidWindowFraction { .. })));
        assert!(matches!(steady_state(&curve, 1.5), Err(AnalysisError::InvalidWindowFraction { .. })));
    }

    #[test]
    fn fair_step_size_matches_direct_ratios() {
        assert_eq!(fair_step_size(0.02, 10, 10), 0.02);
        assert_eq!(fair_step_size(0.04, 10, 40), 0.01);
    }

    #[test]
    fn fair_step_size_round_trip_is_an_involution() {
        let mut rng = ChaCha8Rng::seed_from_u64(55);
        for _ in 0..500 {
            let mu = rng.gen_range(1e-4..0.5);
            let n1 = rng.gen_range(1..200usize);
            let n2 = rng.gen_range(1..200usize);
            let back = fair_step_size(fair_step_size(mu, n1, n2), n2, n1);
            assert!((back - mu).abs() <= 1e-15 * mu, "{back} vs {mu}");
        }
    }

    #[test]
    fn fair_step_size_preserves_the_adaptation_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(56);
        for _ in 0..500 {
            let mu = rng.gen_range(1e-4..0.5);
            let n1 = rng.gen_range(1..200usize);
            let n2 = rng.gen_range(1..200usize);
            let mu2 = fair_step_size(mu, n1, n2);
            let p1 = mu * n1 as f64;
            let p2 = mu2 * n2 as f64;
            assert!((p1 - p2).abs() <= 1e-15 * p1, "{p1} vs {p2}");
        }
    }

    #[test]
    fn recursion_from_zero_stays_at_zero() {
        let config = uniform_config(3, 4, DMatrix::identity(3, 3), 0.1, 0);
        let seq = mean_error_recursion(&config, &DVector::zeros(3), 20);
        assert_eq!(seq.len(), 20);
        for v in seq {
            assert!(v.iter().all(|x| *x == 0.0));
        }
    }

    #[test]
    fn recursion_under_uniform_profile_matches_the_scalar_closed_form() {
        // C = lambda I with uniform mu gives v(t) = (1 - mu*lambda)^(N t) v(0).
        let lambda = 1.5;
        let mu = 0.2;
        let n_nodes = 3;
        let cov = DMatrix::from_diagonal_element(2, 2, lambda);
        let config = uniform_config(2, n_nodes, cov, mu, 0);
        let v0 = DVector::from_row_slice(&[1.0, -0.5]);
        let seq = mean_error_recursion(&config, &v0, 100);
        let factor: f64 = 1.0 - mu * lambda;
        for (idx, v) in seq.iter().enumerate() {
            let t = idx + 1;
            let scale = factor.powi((n_nodes * t) as i32);
            for i in 0..2 {
                let expected = scale * v0[i];
                assert!(
                    (v[i] - expected).abs() <= 1e-12 * expected.abs().max(1e-300),
                    "t={t}, component {i}: {} vs {expected}",
                    v[i]
                );
            }
        }
    }

    #[test]
    fn recursion_matches_an_explicit_matrix_product_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        let m = 2;
        let zero = DMatrix::zeros(m, m);
        let profiles: Vec<NodeProfile> = (0..3)
            .map(|_| {
                let c = random_spd(m, &mut rng);
                NodeProfile::new(c, 0.0, rng.gen_range(0.01..0.1), zero.clone()).unwrap()
            })
            .collect();
        let config = NetworkConfig::new(m, profiles.clone(), LinkMode::Ideal, 0).unwrap();
        let v0 = DVector::from_row_slice(&[0.7, -1.1]);
        let seq = mean_error_recursion(&config, &v0, 5);

        // Oracle: apply the factors one node at a time, five cycles over.
        let eye = DMatrix::<f64>::identity(m, m);
        let mut v = v0.clone();
        for _ in 0..5 {
            for p in &profiles {
                let factor = &eye - p.regressor_covariance() * p.step_size();
                v = factor * v;
            }
        }
        let got = &seq[4];
        assert!((got - &v).norm() <= 1e-12 * v.norm().max(1e-300), "{got} vs {v}");
    }

    #[test]
    fn mode_magnitudes_hit_the_exact_boundaries() {
        let table = convergence_modes(1.0, &[0.0, 1.0, 2.0], 7);
        assert_eq!(table.entries()[0].magnitude, 1.0);
        assert_eq!(table.entries()[1].magnitude, 0.0);
        assert_eq!(table.entries()[2].magnitude, 1.0);
        assert_eq!(table.entries()[0].index, 1);
        assert_eq!(table.n_nodes(), 7);
    }

    #[test]
    fn mode_magnitude_matches_direct_power_evaluation() {
        let table = convergence_modes(0.1, &[1.0], 10);
        let got = table.entries()[0].magnitude;
        assert!((got - 0.3486784401).abs() <= 1e-12, "0.9^10 = {got}");
    }

    #[test]
    fn mode_magnitudes_shrink_with_network_size_inside_the_stable_interval() {
        // Strictly decreasing in N for mu*lambda in (0, 2) except exactly 1,
        // where every size gives exactly zero.
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..200 {
            let mu_lambda = rng.gen_range(0.0001..1.9999);
            let small = convergence_modes(1.0, &[mu_lambda], 10).entries()[0].magnitude;
            let large = convergence_modes(1.0, &[mu_lambda], 40).entries()[0].magnitude;
            if (mu_lambda - 1.0).abs() < 1e-12 {
                continue;
            }
            assert!(
                large < small,
                "mu*lambda = {mu_lambda}: magnitude(40) = {large} !< magnitude(10) = {small}"
            );
        }
        // Non-strict at the zero factor.
        assert_eq!(convergence_modes(1.0, &[1.0], 10).entries()[0].magnitude, 0.0);
        assert_eq!(convergence_modes(1.0, &[1.0], 40).entries()[0].magnitude, 0.0);
    }

    #[test]
    fn stability_of_uniform_scalar_profiles_matches_the_closed_form() {
        let cov = DMatrix::from_diagonal_element(2, 2, 1.0);
        for n_nodes in [1, 4, 10] {
            let config = uniform_config(2, n_nodes, cov.clone(), 0.5, 0);
            let report = stability_check(&config);
            let expected = 0.5_f64.powi(n_nodes as i32);
            assert!(report.stable);
            assert!(
                (report.spectral_radius - expected).abs() <= 1e-12 * expected,
                "N={n_nodes}: {} vs {expected}",
                report.spectral_radius
            );
        }

        // mu*lambda = 2.5, one node: radius 1.5, unstable.
        let config = uniform_config(2, 1, cov, 2.5, 0);
        let report = stability_check(&config);
        assert!(!report.stable);
        assert!((report.spectral_radius - 1.5).abs() <= 1e-12);
    }

    #[test]
    fn stability_radius_matches_a_power_iteration_oracle() {
        // Uniform covariance with per-node steps keeps the transition matrix
        // symmetric (all factors are polynomials in the same C), so power
        // iteration converges to the dominant magnitude.
        let mut rng = ChaCha8Rng::seed_from_u64(83);
        let m = 3;
        let c = random_spd(m, &mut rng);
        let zero = DMatrix::zeros(m, m);
        let profiles: Vec<NodeProfile> = [0.05, 0.11, 0.02]
            .iter()
            .map(|mu| NodeProfile::new(c.clone(), 0.0, *mu, zero.clone()).unwrap())
            .collect();
        let config = NetworkConfig::new(m, profiles, LinkMode::Ideal, 0).unwrap();
        let transition = cycle_transition_matrix(&config);

        let mut v = DVector::from_fn(m, |_, _| rng.gen_range(0.1..1.0));
        v /= v.norm();
        let mut estimate = 0.0;
        for _ in 0..5000 {
            let w = &transition * &v;
            estimate = w.norm();
            v = w / estimate;
        }
        let report = stability_check(&config);
        assert!(
            (report.spectral_radius - estimate).abs() <= 1e-8,
            "{} vs power iteration {estimate}",
            report.spectral_radius
        );
    }

    #[test]
    fn stable_recursion_norm_decays_to_zero() {
        // Symmetric (uniform-covariance) case: the norm must decay monotonically.
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let c = random_spd(2, &mut rng);
        let config = uniform_config(2, 2, c, 0.05, 0);
        let report = stability_check(&config);
        assert!(report.stable, "radius {}", report.spectral_radius);
        let v0 = DVector::from_row_slice(&[1.0, 1.0]);
        let seq = mean_error_recursion(&config, &v0, 500);
        let mut prev = v0.norm();
        for v in &seq {
            let n = v.norm();
            assert!(n <= prev * (1.0 + 1e-12), "norm rose from {prev} to {n}");
            prev = n;
        }
        assert!(prev <= 1e-6 * v0.norm(), "t=500 norm {prev}");

        // General (non-uniform) stable case: only the limit is asserted.
        let zero = DMatrix::zeros(2, 2);
        let profiles: Vec<NodeProfile> = (0..3)
            .map(|_| {
                NodeProfile::new(random_spd(2, &mut rng), 0.0, rng.gen_range(0.02..0.08), zero.clone())
                    .unwrap()
            })
            .collect();
        let config = NetworkConfig::new(2, profiles, LinkMode::Ideal, 0).unwrap();
        let report = stability_check(&config);
        assert!(report.stable, "radius {}", report.spectral_radius);
        let seq = mean_error_recursion(&config, &v0, 500);
        assert!(seq[499].norm() <= 1e-6 * v0.norm(), "t=500 norm {}", seq[499].norm());
    }
}
