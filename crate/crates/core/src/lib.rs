//! Robust beamforming analysis for MISO interference channels whose
//! transmitters only know channel estimates inside ellipsoidal error regions.
//!
//! The crate is organised bottom-up:
//!
//! * [`numerics`]: complex vector/matrix helpers (projectors, `σ_max`, realification).
//! * [`model`]: scenarios, uncertainty ellipsoids, seeded generation and the scenario file format.
//! * [`worst_case`]: closed-form worst-case gains, extremal errors and worst-case rates.
//! * [`robust_design`]: cone programs for robust MRT, interference caps and Pareto candidates.
//! * [`pareto`]: λ-grid sweeps of the robust rate region and non-dominated filtering.
//! * [`asymptotics`]: high-SNR slopes, multiplexing gain and low-SNR energy-per-bit metrics.
//! * [`cli`]: the `robust-miso` command line front end.

pub mod asymptotics;
pub mod cli;
pub mod error;
pub mod model;
pub mod numerics;
pub mod pareto;
pub mod robust_design;
pub mod worst_case;

pub use error::{Error, Result};
pub use model::{BeamformerSet, Ellipsoid, Link, Scenario};
pub use numerics::{CMatrix, CVector, C64};
