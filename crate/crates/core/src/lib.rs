//! Photon-number distribution (PND) reconstruction from on/off detector click
//! statistics, together with a time-domain model of a pulsed, lossy Kerr
//! microresonator that produces two-mode squeezed light.
//!
//! The crate is `no_std` and only needs an allocator. The modules are layered:
//!
//! - [`fock`]: model distributions (thermal, coherent, two-mode squeezed vacuum,
//!   thermal-background convolution) and binomial loss channels.
//! - [`forward`]: the on/off detection model, click probabilities, response
//!   matrices and multinomial sampling of click tables.
//! - [`em`]: expectation-maximization reconstruction of single-mode and joint
//!   distributions, and reference-plane rescaling.
//! - [`metrics`]: fidelity, moments, Mandel Q, noise reduction factor, and model
//!   fits (source model, power scaling, straight lines).
//! - [`dynamics`]: classical pump with self-phase modulation, two-mode Lindblad
//!   evolution, photodetection trajectories and exact photocount statistics.
//!
//! Enable the `parallel` feature to spread trajectory ensembles and grid
//! searches over a rayon thread pool. Results do not depend on the schedule.
#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;
#[cfg(feature = "std")]
extern crate std;

pub mod dynamics;
pub mod em;
mod error;
pub mod fock;
pub mod forward;
pub mod linalg;
pub mod metrics;
mod par;
pub mod rng;

pub use error::{Error, Result};
pub use fock::{Arm, JointPnd, Pnd, PowerScaling, SourceModelParams};
pub use forward::{ClickProbs, ClickRow, ClickTable, Counts, EfficiencyLadder, OffFrequency, Setting};
