//! The experiment configuration schema: JSON documents, validation into typed
//! specs, and canonicalization back into the schema.
//!
//! A document describes either a single network experiment or, when it lists
//! `sizes`, a comparison that replicates one uniform node profile across
//! several ring lengths. Loading validates every invariant up front and fills
//! defaults, so downstream code never re-checks. Canonicalization expands all
//! covariance shorthands to full row-major matrices and makes every default
//! explicit; reloading a canonical document yields a structurally identical
//! spec.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ConfigError, LinkMode, NetworkConfig, NodeProfile, UnknownParameter};

#[derive(Debug, Error)]
pub enum SpecError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Parse {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("node {node}: {matrix} must be a {expected}x{expected} matrix, got {detail}")]
    CovarianceShape { node: usize, matrix: &'static str, expected: usize, detail: String },
    #[error("s0 must have {expected} entries to match the dimension, got {actual}")]
    S0Length { expected: usize, actual: usize },
    #[error("s0 entries must be finite")]
    S0NotFinite,
    #[error("iterations must be at least 1")]
    ZeroIterations,
    #[error("trials must be at least 1")]
    ZeroTrials,
    #[error("window_fraction must lie in (0, 1], got {0}")]
    WindowFraction(f64),
    #[error("mode_grid entries must be finite and nonnegative")]
    InvalidModeGrid,
    #[error("sizes must be a nonempty list of node counts, each at least 1")]
    InvalidSizes,
    #[error("step_rule only applies to comparison documents that also list sizes")]
    StepRuleWithoutSizes,
    #[error("expected a single-network document, but this one declares a size comparison")]
    UnexpectedComparison,
    #[error("comparisons replicate one profile across sizes, so all base nodes must be identical")]
    NonUniformComparison,
    #[error("unknown preset {name:?}; available presets: {available}")]
    UnknownPreset { name: String, available: String },
}

/// Link mode as written in documents: `"ideal"` or `"noisy"`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinkModeSpec {
    #[default]
    Ideal,
    Noisy,
}

impl From<LinkModeSpec> for LinkMode {
    fn from(value: LinkModeSpec) -> Self {
        match value {
            LinkModeSpec::Ideal => LinkMode::Ideal,
            LinkModeSpec::Noisy => LinkMode::Noisy,
        }
    }
}

impl From<LinkMode> for LinkModeSpec {
    fn from(value: LinkMode) -> Self {
        match value {
            LinkMode::Ideal => LinkModeSpec::Ideal,
            LinkMode::Noisy => LinkModeSpec::Noisy,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NamedCovariance {
    Identity,
}

/// A covariance matrix as written in documents: the string `"identity"`, a
/// scaled identity `{"scaled_identity": c}`, a list of rows, or a flat
/// row-major list of `dimension * dimension` entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CovarianceSpec {
    Named(NamedCovariance),
    ScaledIdentity { scaled_identity: f64 },
    Rows(Vec<Vec<f64>>),
    Flat(Vec<f64>),
}

impl CovarianceSpec {
    /// The default link-noise covariance: the zero matrix.
    pub fn zero() -> Self {
        Self::ScaledIdentity { scaled_identity: 0.0 }
    }

    pub fn identity() -> Self {
        Self::Named(NamedCovariance::Identity)
    }

    /// Canonical form of a concrete matrix: full rows.
    pub fn full_rows(matrix: &DMatrix<f64>) -> Self {
        let rows = (0..matrix.nrows())
            .map(|i| (0..matrix.ncols()).map(|j| matrix[(i, j)]).collect())
            .collect();
        Self::Rows(rows)
    }

    fn build(&self, dimension: usize) -> Result<DMatrix<f64>, String> {
        match self {
            Self::Named(NamedCovariance::Identity) => Ok(DMatrix::identity(dimension, dimension)),
            Self::ScaledIdentity { scaled_identity } => {
                Ok(DMatrix::from_diagonal_element(dimension, dimension, *scaled_identity))
            }
            Self::Rows(rows) => {
                if rows.len() != dimension {
                    return Err(format!("{} rows", rows.len()));
                }
                let mut m = DMatrix::zeros(dimension, dimension);
                for (i, row) in rows.iter().enumerate() {
                    if row.len() != dimension {
                        return Err(format!("row {} has {} entries", i + 1, row.len()));
                    }
                    for (j, x) in row.iter().enumerate() {
                        m[(i, j)] = *x;
                    }
                }
                Ok(m)
            }
            Self::Flat(entries) => {
                if entries.len() != dimension * dimension {
                    return Err(format!("a flat list of {} entries", entries.len()));
                }
                Ok(DMatrix::from_row_slice(dimension, dimension, entries))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NamedS0 {
    #[serde(rename = "random-unit")]
    RandomUnit,
}

/// The unknown parameter as written in documents: an explicit list of reals
/// or the string `"random-unit"` for a unit-norm vector drawn from the seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum S0Spec {
    Named(NamedS0),
    Explicit(Vec<f64>),
}

impl Default for S0Spec {
    fn default() -> Self {
        Self::Named(NamedS0::RandomUnit)
    }
}

/// Which result tables an experiment computes and emits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputKind {
    LearningCurve,
    SteadyState,
    Modes,
    Stability,
    MeanRecursion,
}

/// How a size comparison assigns step sizes to each network size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StepRule {
    /// Rescale steps so the product step * n_nodes is the same at every size
    /// (equal total adaptation per measurement time).
    #[serde(rename = "fair_eq14")]
    Fair,
    /// Use the base profile's step size unchanged at every size.
    #[serde(rename = "fixed")]
    Fixed,
}

/// One node as written in documents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeDoc {
    pub regressor_covariance: CovarianceSpec,
    pub measurement_noise_variance: f64,
    pub step_size: f64,
    #[serde(default = "CovarianceSpec::zero")]
    pub link_noise_covariance: CovarianceSpec,
}

fn default_iterations() -> usize {
    1000
}

fn default_trials() -> usize {
    100
}

fn default_window_fraction() -> f64 {
    0.1
}

fn default_outputs() -> BTreeSet<OutputKind> {
    [OutputKind::LearningCurve, OutputKind::SteadyState].into_iter().collect()
}

/// The on-disk document. One schema covers both single experiments and size
/// comparisons; the optional `sizes`/`step_rule` keys mark the latter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentDoc {
    pub dimension: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub link_mode: LinkModeSpec,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_window_fraction")]
    pub window_fraction: f64,
    #[serde(default)]
    pub s0: S0Spec,
    pub nodes: Vec<NodeDoc>,
    #[serde(default = "default_outputs")]
    pub outputs: BTreeSet<OutputKind>,
    /// Optional sweep of mu*lambda products for the modes output. Without it,
    /// modes are computed from the first node's covariance spectrum.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode_grid: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sizes: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_rule: Option<StepRule>,
}

/// A fully validated single-network experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    config: NetworkConfig,
    s0: S0Spec,
    iterations: usize,
    trials: usize,
    window_fraction: f64,
    outputs: BTreeSet<OutputKind>,
    mode_grid: Option<Vec<f64>>,
}

impl ExperimentSpec {
    /// Validate a single-network document. Documents carrying comparison keys
    /// are rejected; load them through [`load_spec`] or [`ComparisonSpec::from_doc`].
    pub fn from_doc(doc: &ExperimentDoc) -> Result<Self, SpecError> {
        if doc.sizes.is_some() {
            return Err(SpecError::UnexpectedComparison);
        }
        if doc.step_rule.is_some() {
            return Err(SpecError::StepRuleWithoutSizes);
        }
        Self::from_doc_base(doc)
    }

    /// Validate the experiment fields of a document, ignoring comparison keys.
    fn from_doc_base(doc: &ExperimentDoc) -> Result<Self, SpecError> {
        if doc.dimension == 0 {
            return Err(SpecError::Config(ConfigError::ZeroDimension));
        }
        let mut profiles = Vec::with_capacity(doc.nodes.len());
        for (idx, node) in doc.nodes.iter().enumerate() {
            let regressor = node.regressor_covariance.build(doc.dimension).map_err(|detail| {
                SpecError::CovarianceShape {
                    node: idx + 1,
                    matrix: "regressor_covariance",
                    expected: doc.dimension,
                    detail,
                }
            })?;
            let link = node.link_noise_covariance.build(doc.dimension).map_err(|detail| {
                SpecError::CovarianceShape {
                    node: idx + 1,
                    matrix: "link_noise_covariance",
                    expected: doc.dimension,
                    detail,
                }
            })?;
            let profile =
                NodeProfile::new(regressor, node.measurement_noise_variance, node.step_size, link)
                    .map_err(|source| ConfigError::Node { node: idx + 1, source })?;
            profiles.push(profile);
        }
        let config = NetworkConfig::new(doc.dimension, profiles, doc.link_mode.into(), doc.seed)?;
        if let S0Spec::Explicit(values) = &doc.s0 {
            if values.len() != doc.dimension {
                return Err(SpecError::S0Length { expected: doc.dimension, actual: values.len() });
            }
            if !values.iter().all(|x| x.is_finite()) {
                return Err(SpecError::S0NotFinite);
            }
        }
        if doc.iterations == 0 {
            return Err(SpecError::ZeroIterations);
        }
        if doc.trials == 0 {
            return Err(SpecError::ZeroTrials);
        }
        if !(doc.window_fraction > 0.0 && doc.window_fraction <= 1.0) {
            return Err(SpecError::WindowFraction(doc.window_fraction));
        }
        if let Some(grid) = &doc.mode_grid {
            if !grid.iter().all(|x| x.is_finite() && *x >= 0.0) {
                return Err(SpecError::InvalidModeGrid);
            }
        }
        Ok(Self {
            config,
            s0: doc.s0.clone(),
            iterations: doc.iterations,
            trials: doc.trials,
            window_fraction: doc.window_fraction,
            outputs: doc.outputs.clone(),
            mode_grid: doc.mode_grid.clone(),
        })
    }

    /// The canonical document: defaults explicit, covariances as full rows.
    pub fn to_doc(&self) -> ExperimentDoc {
        ExperimentDoc {
            dimension: self.config.dimension(),
            seed: self.config.seed(),
            link_mode: self.config.link_mode().into(),
            iterations: self.iterations,
            trials: self.trials,
            window_fraction: self.window_fraction,
            s0: self.s0.clone(),
            nodes: self
                .config
                .nodes()
                .iter()
                .map(|p| NodeDoc {
                    regressor_covariance: CovarianceSpec::full_rows(p.regressor_covariance()),
                    measurement_noise_variance: p.measurement_noise_variance(),
                    step_size: p.step_size(),
                    link_noise_covariance: CovarianceSpec::full_rows(p.link_noise_covariance()),
                })
                .collect(),
            outputs: self.outputs.clone(),
            mode_grid: self.mode_grid.clone(),
            sizes: None,
            step_rule: None,
        }
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn s0(&self) -> &S0Spec {
        &self.s0
    }

    /// The concrete parameter vector this spec estimates: the explicit list,
    /// or a unit-norm draw from the seed for `"random-unit"`.
    pub fn resolve_s0(&self) -> UnknownParameter {
        match &self.s0 {
            S0Spec::Named(NamedS0::RandomUnit) => {
                UnknownParameter::random_unit(self.config.dimension(), self.config.seed())
            }
            S0Spec::Explicit(values) => {
                UnknownParameter::new(DVector::from_row_slice(values))
                    .expect("explicit s0 validated at load time")
            }
        }
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn trials(&self) -> usize {
        self.trials
    }

    pub fn window_fraction(&self) -> f64 {
        self.window_fraction
    }

    pub fn outputs(&self) -> &BTreeSet<OutputKind> {
        &self.outputs
    }

    pub fn mode_grid(&self) -> Option<&[f64]> {
        self.mode_grid.as_deref()
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.config = self.config.clone().with_seed(seed);
    }

    pub fn set_trials(&mut self, trials: usize) -> Result<(), SpecError> {
        if trials == 0 {
            return Err(SpecError::ZeroTrials);
        }
        self.trials = trials;
        Ok(())
    }

    pub fn set_iterations(&mut self, iterations: usize) -> Result<(), SpecError> {
        if iterations == 0 {
            return Err(SpecError::ZeroIterations);
        }
        self.iterations = iterations;
        Ok(())
    }
}

/// A fully validated size comparison: a uniform base experiment replicated
/// across several ring lengths.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonSpec {
    base: ExperimentSpec,
    sizes: Vec<usize>,
    step_rule: StepRule,
}

impl ComparisonSpec {
    /// Validate a comparison document. `step_rule` defaults to the fair
    /// (product-preserving) rule when omitted.
    pub fn from_doc(doc: &ExperimentDoc) -> Result<Self, SpecError> {
        let sizes = doc.sizes.clone().ok_or(SpecError::InvalidSizes)?;
        if sizes.is_empty() || sizes.contains(&0) {
            return Err(SpecError::InvalidSizes);
        }
        let base = ExperimentSpec::from_doc_base(doc)?;
        if !base.config.is_uniform() {
            return Err(SpecError::NonUniformComparison);
        }
        Ok(Self { base, sizes, step_rule: doc.step_rule.unwrap_or(StepRule::Fair) })
    }

    pub fn to_doc(&self) -> ExperimentDoc {
        let mut doc = self.base.to_doc();
        doc.sizes = Some(self.sizes.clone());
        doc.step_rule = Some(self.step_rule);
        doc
    }

    pub fn base(&self) -> &ExperimentSpec {
        &self.base
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn step_rule(&self) -> StepRule {
        self.step_rule
    }

    /// Step size the step rule assigns to a network of `size` nodes. The
    /// first listed size is the reference and keeps the base step verbatim,
    /// so the reference run never pays a multiply/divide rounding round-trip.
    pub fn step_size_for(&self, size: usize) -> f64 {
        let mu_ref = self.base.config.node(0).step_size();
        let n_ref = self.sizes[0];
        match self.step_rule {
            StepRule::Fair if size != n_ref => {
                crate::analysis::fair_step_size(mu_ref, n_ref, size)
            }
            _ => mu_ref,
        }
    }

    /// The single-network experiment this comparison runs at one size: the
    /// base profile replicated `size` times with the given step size.
    pub fn derived_experiment(&self, size: usize, step_size: f64) -> Result<ExperimentSpec, SpecError> {
        let template = self
            .base
            .config
            .node(0)
            .with_step_size(step_size)
            .map_err(|source| ConfigError::Node { node: 1, source })?;
        let config = NetworkConfig::new(
            self.base.config.dimension(),
            vec![template; size],
            self.base.config.link_mode(),
            self.base.config.seed(),
        )?;
        Ok(ExperimentSpec {
            config,
            s0: self.base.s0.clone(),
            iterations: self.base.iterations,
            trials: self.base.trials,
            window_fraction: self.base.window_fraction,
            outputs: self.base.outputs.clone(),
            mode_grid: self.base.mode_grid.clone(),
        })
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.base.set_seed(seed);
    }

    pub fn set_trials(&mut self, trials: usize) -> Result<(), SpecError> {
        self.base.set_trials(trials)
    }

    pub fn set_iterations(&mut self, iterations: usize) -> Result<(), SpecError> {
        self.base.set_iterations(iterations)
    }
}

/// A validated document of either kind.
#[derive(Debug, Clone, PartialEq)]
pub enum LoadedSpec {
    Experiment(ExperimentSpec),
    Comparison(ComparisonSpec),
}

impl LoadedSpec {
    pub fn to_doc(&self) -> ExperimentDoc {
        match self {
            Self::Experiment(spec) => spec.to_doc(),
            Self::Comparison(spec) => spec.to_doc(),
        }
    }

    pub fn set_seed(&mut self, seed: u64) {
        match self {
            Self::Experiment(spec) => spec.set_seed(seed),
            Self::Comparison(spec) => spec.set_seed(seed),
        }
    }

    pub fn set_trials(&mut self, trials: usize) -> Result<(), SpecError> {
        match self {
            Self::Experiment(spec) => spec.set_trials(trials),
            Self::Comparison(spec) => spec.set_trials(trials),
        }
    }

    pub fn set_iterations(&mut self, iterations: usize) -> Result<(), SpecError> {
        match self {
            Self::Experiment(spec) => spec.set_iterations(iterations),
            Self::Comparison(spec) => spec.set_iterations(iterations),
        }
    }
}

/// Parse a document from a string (no file involved); `origin` labels errors.
pub fn parse_spec(text: &str, origin: &str) -> Result<LoadedSpec, SpecError> {
    let doc: ExperimentDoc = serde_json::from_str(text)
        .map_err(|source| SpecError::Parse { path: origin.to_string(), source })?;
    validate_doc(&doc)
}

/// Validate an already parsed document into the appropriate spec kind.
pub fn validate_doc(doc: &ExperimentDoc) -> Result<LoadedSpec, SpecError> {
    if doc.sizes.is_some() {
        Ok(LoadedSpec::Comparison(ComparisonSpec::from_doc(doc)?))
    } else if doc.step_rule.is_some() {
        Err(SpecError::StepRuleWithoutSizes)
    } else {
        Ok(LoadedSpec::Experiment(ExperimentSpec::from_doc(doc)?))
    }
}

/// Load and validate a document from disk.
pub fn load_spec(path: &Path) -> Result<LoadedSpec, SpecError> {
    let text = fs::read_to_string(path)
        .map_err(|source| SpecError::Io { path: path.display().to_string(), source })?;
    parse_spec(&text, &path.display().to_string())
}

/// Pretty-printed canonical JSON for a document.
pub fn canonical_json(doc: &ExperimentDoc) -> String {
    serde_json::to_string_pretty(doc).expect("documents always serialize")
}
