//! Domain types and synthetic data generation for the linear measurement model
//! `x_j(t) = h_j(t) s0 + n_j(t)`.
//!
//! A [`NetworkConfig`] describes a ring of nodes. Each node has a
//! [`NodeProfile`]: the covariance of its Gaussian regressor rows, its scalar
//! measurement-noise variance, its LMS step size, and the covariance of the
//! additive noise on its incoming link. Profiles pre-factor their covariances
//! at construction so the samplers only perform a matrix-vector product per
//! draw.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::rng::{self, StreamKind};
use crate::vecops;

/// Relative tolerance for symmetry and positive-semidefiniteness checks.
const PSD_TOL: f64 = 1e-9;

/// Validation failures for a single node profile.
#[derive(Debug, Error)]
pub enum ProfileError {
    #[error("{matrix} must be square with side {expected}, got {rows}x{cols}")]
    MatrixShape { matrix: &'static str, expected: usize, rows: usize, cols: usize },
    #[error("{matrix} has non-finite entries")]
    NonFiniteMatrix { matrix: &'static str },
    #[error("{matrix} is not symmetric (max asymmetry {asymmetry:.3e})")]
    NotSymmetric { matrix: &'static str, asymmetry: f64 },
    #[error("{matrix} is not positive semidefinite (smallest eigenvalue {min_eigenvalue:.6e})")]
    NotPositiveSemidefinite { matrix: &'static str, min_eigenvalue: f64 },
    #[error("step_size must be positive and finite, got {value}")]
    InvalidStepSize { value: f64 },
    #[error("measurement_noise_variance must be nonnegative and finite, got {value}")]
    InvalidNoiseVariance { value: f64 },
}

/// Validation failures for a whole network.
///
/// Node indices in messages are 1-based, matching the reporting convention
/// used everywhere else in the toolkit.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("dimension must be positive")]
    ZeroDimension,
    #[error("network must contain at least one node")]
    EmptyNetwork,
    #[error("node {node}: {source}")]
    Node {
        node: usize,
        #[source]
        source: ProfileError,
    },
    #[error("node {node}: profile dimension {actual} does not match network dimension {expected}")]
    DimensionMismatch { node: usize, expected: usize, actual: usize },
    #[error("unknown parameter must have {expected} finite entries, got {actual}")]
    InvalidParameter { expected: usize, actual: usize },
}

/// The ground-truth parameter vector every node estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct UnknownParameter {
    values: DVector<f64>,
}

impl UnknownParameter {
    /// Wrap an explicit parameter vector. Entries must be finite and the
    /// vector nonempty; length is checked against the network at run time.
    pub fn new(values: DVector<f64>) -> Result<Self, ConfigError> {
        if values.is_empty() || !vecops::all_finite(values.as_slice()) {
            return Err(ConfigError::InvalidParameter { expected: values.len().max(1), actual: values.len() });
        }
        Ok(Self { values })
    }

    /// Draw a uniformly random direction of unit Euclidean norm, deterministic
    /// in the seed. Uses the dedicated parameter stream, so it does not
    /// disturb any trial's data streams.
    pub fn random_unit(dimension: usize, seed: u64) -> Self {
        assert!(dimension > 0, "dimension must be positive");
        let mut rng = rng::substream(seed, 0, 0, StreamKind::Parameter);
        loop {
            let v = standard_normal_vector(dimension, &mut rng);
            let norm = v.norm();
            if norm > 1e-12 {
                return Self { values: v / norm };
            }
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }
}

/// Per-node statistics and adaptation parameters.
#[derive(Debug, Clone)]
pub struct NodeProfile {
    regressor_covariance: DMatrix<f64>,
    measurement_noise_variance: f64,
    step_size: f64,
    link_noise_covariance: DMatrix<f64>,
    // Cached factors F with F F^T equal to the covariance, applied to standard
    // normal draws by the samplers.
    regressor_factor: DMatrix<f64>,
    link_noise_factor: DMatrix<f64>,
}

impl PartialEq for NodeProfile {
    fn eq(&self, other: &Self) -> bool {
        // The factors are derived, so semantic equality is equality of the
        // defining fields.
        self.regressor_covariance == other.regressor_covariance
            && self.measurement_noise_variance == other.measurement_noise_variance
            && self.step_size == other.step_size
            && self.link_noise_covariance == other.link_noise_covariance
    }
}

impl NodeProfile {
    /// Validate and pre-factor a profile.
    ///
    /// Both covariances must be symmetric positive semidefinite; a zero
    /// matrix is legal and produces exactly zero samples. The link-noise
    /// covariance must match the regressor covariance in size.
    pub fn new(
        regressor_covariance: DMatrix<f64>,
        measurement_noise_variance: f64,
        step_size: f64,
        link_noise_covariance: DMatrix<f64>,
    ) -> Result<Self, ProfileError> {
        let m = regressor_covariance.nrows();
        let regressor_factor = covariance_factor(&regressor_covariance, "regressor_covariance", m)?;
        let link_noise_factor = covariance_factor(&link_noise_covariance, "link_noise_covariance", m)?;
        if !(step_size > 0.0 && step_size.is_finite()) {
            return Err(ProfileError::InvalidStepSize { value: step_size });
        }
        if !(measurement_noise_variance >= 0.0 && measurement_noise_variance.is_finite()) {
            return Err(ProfileError::InvalidNoiseVariance { value: measurement_noise_variance });
        }
        Ok(Self {
            regressor_covariance,
            measurement_noise_variance,
            step_size,
            link_noise_covariance,
            regressor_factor,
            link_noise_factor,
        })
    }

    /// Convenience constructor for the common isotropic case: identity
    /// regressor covariance and (optionally zero) isotropic link noise.
    pub fn isotropic(
        dimension: usize,
        measurement_noise_variance: f64,
        step_size: f64,
        link_noise_variance: f64,
    ) -> Result<Self, ProfileError> {
        let eye = DMatrix::identity(dimension, dimension);
        let link = DMatrix::from_diagonal_element(dimension, dimension, link_noise_variance);
        Self::new(eye, measurement_noise_variance, step_size, link)
    }

    pub fn dimension(&self) -> usize {
        self.regressor_covariance.nrows()
    }

    pub fn regressor_covariance(&self) -> &DMatrix<f64> {
        &self.regressor_covariance
    }

    pub fn measurement_noise_variance(&self) -> f64 {
        self.measurement_noise_variance
    }

    pub fn step_size(&self) -> f64 {
        self.step_size
    }

    pub fn link_noise_covariance(&self) -> &DMatrix<f64> {
        &self.link_noise_covariance
    }

    /// Copy of this profile with a different step size (used by size sweeps
    /// that rescale steps across network sizes).
    pub fn with_step_size(&self, step_size: f64) -> Result<Self, ProfileError> {
        Self::new(
            self.regressor_covariance.clone(),
            self.measurement_noise_variance,
            step_size,
            self.link_noise_covariance.clone(),
        )
    }
}

/// Whether estimates travel the ring unchanged or pick up additive noise on
/// every hop.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinkMode {
    Ideal,
    Noisy,
}

/// An ordered ring of node profiles plus the global problem dimension, link
/// mode, and root RNG seed.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfig {
    dimension: usize,
    nodes: Vec<NodeProfile>,
    link_mode: LinkMode,
    seed: u64,
}

impl NetworkConfig {
    pub fn new(
        dimension: usize,
        nodes: Vec<NodeProfile>,
        link_mode: LinkMode,
        seed: u64,
    ) -> Result<Self, ConfigError> {
        if dimension == 0 {
            return Err(ConfigError::ZeroDimension);
        }
        if nodes.is_empty() {
            return Err(ConfigError::EmptyNetwork);
        }
        for (idx, profile) in nodes.iter().enumerate() {
            if profile.dimension() != dimension {
                return Err(ConfigError::DimensionMismatch {
                    node: idx + 1,
                    expected: dimension,
                    actual: profile.dimension(),
                });
            }
        }
        Ok(Self { dimension, nodes, link_mode, seed })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[NodeProfile] {
        &self.nodes
    }

    /// Profile of the node at 0-based ring position `idx`.
    pub fn node(&self, idx: usize) -> &NodeProfile {
        &self.nodes[idx]
    }

    pub fn link_mode(&self) -> LinkMode {
        self.link_mode
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_link_mode(mut self, link_mode: LinkMode) -> Self {
        self.link_mode = link_mode;
        self
    }

    /// True when every node carries the same profile (required by size sweeps
    /// that replicate one profile across different ring lengths).
    pub fn is_uniform(&self) -> bool {
        self.nodes.windows(2).all(|w| w[0] == w[1])
    }
}

/// One node observation: the regressor row and the scalar measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    pub regressor: DVector<f64>,
    pub observation: f64,
}

/// Draw a zero-mean Gaussian regressor row with the profile's covariance.
pub fn sample_regressor<R: Rng + ?Sized>(profile: &NodeProfile, rng: &mut R) -> DVector<f64> {
    let z = standard_normal_vector(profile.dimension(), rng);
    &profile.regressor_factor * z
}

/// Form one measurement `x = h . s0 + n` from an already drawn regressor.
///
/// The noise variate is always consumed, even when the configured variance is
/// zero, so stream positions do not depend on profile values.
pub fn sample_measurement<R: Rng + ?Sized>(
    regressor: DVector<f64>,
    s0: &UnknownParameter,
    profile: &NodeProfile,
    rng: &mut R,
) -> Measurement {
    debug_assert_eq!(regressor.len(), s0.len());
    let z: f64 = rng.sample(StandardNormal);
    let noise = profile.measurement_noise_variance.sqrt() * z;
    let observation = vecops::dot(regressor.as_slice(), s0.values().as_slice()) + noise;
    Measurement { regressor, observation }
}

/// Draw one additive link-noise vector with the profile's link covariance.
/// A zero covariance yields the zero vector while still consuming the same
/// number of variates.
pub fn sample_link_noise<R: Rng + ?Sized>(profile: &NodeProfile, rng: &mut R) -> DVector<f64> {
    let z = standard_normal_vector(profile.dimension(), rng);
    &profile.link_noise_factor * z
}

fn standard_normal_vector<R: Rng + ?Sized>(len: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_iterator(len, (0..len).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

/// Check a covariance for shape, symmetry, and positive semidefiniteness and
/// return a factor `F` with `F F^T` equal to it. Positive definite matrices
/// get their Cholesky factor; semidefinite ones fall back to the symmetric
/// eigendecomposition square root with tiny negative eigenvalues clamped.
fn covariance_factor(
    c: &DMatrix<f64>,
    name: &'static str,
    expected: usize,
) -> Result<DMatrix<f64>, ProfileError> {
    if c.nrows() != expected || c.ncols() != expected || expected == 0 {
        return Err(ProfileError::MatrixShape {
            matrix: name,
            expected,
            rows: c.nrows(),
            cols: c.ncols(),
        });
    }
    if !vecops::all_finite(c.as_slice()) {
        return Err(ProfileError::NonFiniteMatrix { matrix: name });
    }
    let scale = c.iter().fold(0.0_f64, |a, x| a.max(x.abs())).max(1.0);
    let asymmetry = (c - c.transpose()).iter().fold(0.0_f64, |a, x| a.max(x.abs()));
    if asymmetry > PSD_TOL * scale {
        return Err(ProfileError::NotSymmetric { matrix: name, asymmetry });
    }
    if let Some(chol) = Cholesky::new(c.clone()) {
        return Ok(chol.unpack());
    }
    // Semidefinite (or numerically borderline) case.
    let eig = SymmetricEigen::new(c.clone());
    let max_ev = eig.eigenvalues.iter().fold(0.0_f64, |a, x| a.max(*x));
    let min_ev = eig.eigenvalues.iter().fold(f64::INFINITY, |a, x| a.min(*x));
    if min_ev < -PSD_TOL * max_ev.max(1.0) {
        return Err(ProfileError::NotPositiveSemidefinite { matrix: name, min_eigenvalue: min_ev });
    }
    let mut factor = eig.eigenvectors;
    for (j, ev) in eig.eigenvalues.iter().enumerate() {
        factor.column_mut(j).scale_mut(ev.max(0.0).sqrt());
    }
    Ok(factor)
}
