//! Deterministic simulator and analysis toolkit for incremental LMS adaptive
//! networks on a ring.
//!
//! A shared estimate of an unknown parameter vector circulates around a ring
//! of nodes. At each measurement time every node, in ring order, refines the
//! incoming estimate with one least-mean-squares step against its own noisy
//! linear measurement and hands the result to its neighbor. Inter-node links
//! are either ideal or perturbed by additive Gaussian noise.
//!
//! The crate is organized in layers:
//!
//! - [`model`] — network description: node profiles (regressor covariance,
//!   measurement-noise variance, step size, link-noise covariance), the
//!   unknown parameter, and sampling of all random quantities.
//! - [`rng`] — counter-based stream derivation so every (trial, node, kind)
//!   coordinate gets an independent, reproducible random stream.
//! - [`engine`] — the per-node update, full ring cycles, and Monte Carlo
//!   trials that record squared estimation error after every node update.
//! - [`analysis`] — Wiener solutions, learning-curve aggregation,
//!   steady-state windows, step-size scaling across network sizes,
//!   mean-error recursions, convergence-mode tables, and stability checks.
//! - [`experiment`] — JSON experiment specs, named presets, the runner that
//!   ties simulation and analysis together, and CSV/JSON emission.
//!
//! Every run is bitwise reproducible for a given seed: random streams are
//! derived per coordinate rather than shared, floating-point reductions use
//! a fixed association order, and parallel trial scheduling cannot affect
//! results.

pub mod analysis;
pub mod engine;
pub mod experiment;
pub mod model;
pub mod rng;
mod vecops;
