//! # fedsim
//!
//! A deterministic, single-process simulator of federated image
//! classification under multi-target backdoor attacks. Multiple colluding
//! clients each implant a distinct frequency-domain trigger with its own
//! target label, replay each other's backdoor samples to keep earlier
//! backdoors alive, and scale their updates to survive averaging. The
//! harness measures attack success, persistence, and trigger stealth, with
//! and without robust-aggregation defenses.
//!
//! The crate is organized as:
//!
//! - [`kernel`] — tensor ops, a small CNN, cross-entropy, SGD (f64).
//! - [`data`] — synthetic dataset, raw binary ingestion, Dirichlet
//!   partitioning.
//! - [`trigger`] — 2-D DCT, frequency-block triggers, patch triggers.
//! - [`stealth`] — SSIM and PSNR.
//! - [`attack`] — poisoned batch composition, backdoor replay, malicious
//!   local training, update amplification.
//! - [`fed`] — round loop, FedAvg, ClippedClustering and DP-FedAvg
//!   defenses, evaluation.
//! - [`harness`] — config files, experiment runner, sweeps, CSV reports.
//!
//! Every run is reproducible: all randomness flows from per-purpose
//! [`rng`] streams keyed by the experiment seed, so results are identical
//! across re-runs and across parallelism degrees.

pub mod attack;
pub mod data;
pub mod fed;
pub mod harness;
pub mod image;
pub mod kernel;
pub mod rng;
pub mod stealth;
pub mod trigger;

pub use image::ImageTensor;
