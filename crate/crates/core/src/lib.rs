//! Numerical toolkit for identical-particle quantum states and the emergence
//! of classical particles: (anti)symmetrized many-party states, partial
//! traces, Schmidt decompositions and the localized-packet particle
//! criterion, wave-packet dynamics with and without decoherence, exchange
//! statistics, and the permuted classical ensemble.
//!
//! Every numerical type is generic over a [`Real`] scalar; the aliases at the
//! crate root fix it to `f64`, which is what the stated tolerances assume.

pub mod classical;
pub mod decompose;
pub mod dynamics;
pub mod grid;
pub mod manybody;
pub mod scalar;
pub mod stats;

mod error;
mod fft;

pub use error::{Error, Result};
pub use scalar::{Real, C};

pub type Grid = grid::Grid<f64>;
pub type WaveFunction = grid::WaveFunction<f64>;
pub type PacketParams = grid::PacketParams<f64>;
pub type Interval = grid::Interval<f64>;
pub type SchmidtDecomposition = decompose::SchmidtDecomposition<f64>;
pub type ParticleDecomposition = decompose::ParticleDecomposition<f64>;
pub type PotentialSpec = dynamics::PotentialSpec<f64>;
pub type Trajectory = dynamics::Trajectory<f64>;
pub type OpenSystemParams = dynamics::OpenSystemParams<f64>;
pub type PositionDensityMatrix = dynamics::PositionDensityMatrix<f64>;
pub type OccupationTable = stats::OccupationTable<f64>;
pub type DetectionTable = stats::DetectionTable<f64>;
pub type PhasePoint = classical::PhasePoint<f64>;
pub type ClassicalEnsemble = classical::ClassicalEnsemble<f64>;
