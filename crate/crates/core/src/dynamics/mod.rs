//! Pulsed-source dynamics.
//!
//! A classical pump amplitude drives a two-mode signal/idler master equation
//! with pair creation, cross-phase shifts and cavity decay. Detected counts
//! per pulse come from photodetection-conditioned trajectories, from the
//! exact count-resolved evolution, or (for means and `ḡ₂`) from the
//! truncation-free Gaussian moments.

mod gaussian;
mod master;
mod params;
mod pump;
mod state;
mod trajectories;

pub use gaussian::{
    detuning_scan, g2bar_gaussian, mean_scattered_gaussian, optimal_detuning, second_moments, DetuningPoint,
    G2Estimate, SecondMoments,
};
pub use master::{
    counting_pnd, evolve, evolve_observed, mean_scattered, photon_balance, CountingResult, Evolution, QuantumConfig,
    COUPLING_CUTOFF, DEFAULT_TRUNCATION, TAIL_LIMIT, TOP_POPULATION_LIMIT,
};
pub use params::{PulseParams, ResonatorParams, HBAR, PUMP_WAVELENGTH, SPEED_OF_LIGHT};
pub use pump::{solve_pump, steady_state_intensity, PumpSeries, MAX_STEP_FRACTION, RING_DOWN_LIFETIMES};
pub use state::{Layout, QuantumState};
pub use trajectories::{
    g2bar, g2bar_of_pnd, pnd_from_trajectories, simulate_trajectories, ClickCount, TrajectoryConfig,
    TrajectoryRecord, MAX_JUMP_PROBABILITY, MAX_REFINEMENTS,
};
