//! Simulator and security engine for a passive-state-preparation CV-QKD
//! passive optical network: one transmitter (QLT) feeding N receivers (QNUs)
//! through a splitter tree.
//!
//! Layers, bottom up:
//!
//! - [`gaussian`]: covariance algebra, symplectic spectra, entropies.
//! - [`optics`]: thermal source, PSP, splitters, channels, detectors, switch.
//! - [`dsp`]: filtering, sync, phase tracking, shot-noise normalization.
//! - [`security`]: estimation, Holevo bounds, key rates.
//! - [`harness`]: scenarios, end-to-end runs, sweeps, reports.
//!
//! All quadratures are in shot-noise units with vacuum variance 1.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dsp;
pub mod exec;
pub mod frame;
pub mod gaussian;
pub mod harness;
pub mod optics;
pub mod rng;
pub mod security;

pub use exec::Execution;
pub use frame::{FrameKind, QuadratureFrame, Role};
pub use gaussian::CovMatrix;
pub use harness::{ScenarioConfig, KeyRateReport};
