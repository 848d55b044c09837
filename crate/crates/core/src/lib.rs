//! Event-study toolkit for panels of correlated asset returns.
//!
//! The pipeline runs in layers:
//!
//! - [`ingest`]: daily price files, calendar alignment, simple returns, capping.
//! - [`events`]: the event registry, selection audit and overlap annotation.
//! - [`abnormal`]: benchmark-model fits, abnormal returns and CARs per event-asset pair.
//! - [`inference`]: event-level block bootstrap, exact permutation, few-cluster
//!   t-tests and the Kolari-Pynnönen correction.
//! - [`robustness`]: placebo events, leave-one-out, window and cap sweeps,
//!   subsample filters and grouped decompositions.
//! - [`power`]: normal-approximation power and minimum detectable effect.
//! - [`calibration`]: a correlated-return simulator and Monte Carlo size/coverage study.
//!
//! All randomness is drawn from counter-based ChaCha substreams keyed by
//! `(seed, index)`, so results do not depend on the rayon worker count.

pub mod abnormal;
pub mod calibration;
pub mod events;
pub mod inference;
pub mod ingest;
pub mod power;
pub mod robustness;
pub mod rng;
pub mod stats;

pub use abnormal::{
    build_ew_proxy, compute_car, event_panel_cars, fit_constant_mean, fit_market_model,
    Benchmark, CarError, CarResult, CarTable, EventWindow, ModelFit, ModelKind, ModelSpec,
    WindowConfig,
};
pub use events::{Category, Event, EventSet, RegistryError, Selection};
pub use inference::{
    block_bootstrap_diff, block_bootstrap_mean, event_level_means, im_t_test, kp_adjust, BootstrapConfig,
    permutation_test, welch_t, BootstrapResult, InferenceError, PermResult, TTestResult,
    WeightingScheme,
};
pub use ingest::{compute_returns, winsorize, IngestError, PricePanel, ReturnPanel, Series};
