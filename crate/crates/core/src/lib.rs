//! Simulation of entanglement transitions driven by noisy quantum-data
//! collection in random Clifford circuits.
//!
//! The compressed simulator ([`TrackedTableau`]) keeps only the system (and
//! optional reference) support of the stabilizer generators; the full-tableau
//! oracle ([`oracle::FullTableau`]) keeps everything and is used to check it.

pub mod analysis;
pub mod circuit;
pub mod ensemble;
pub mod error;
pub mod gf2;
pub mod observables;
pub mod oracle;
pub mod tableau;
pub mod verify;

pub use circuit::{
    run_trajectory, sample_two_qubit_clifford, BrickSymmetry, CircuitConfig, Snapshot, Trajectory,
    TrajectoryRecord,
};
pub use error::{Error, Result};
pub use gf2::{BitMatrix, BitRow, ColumnWindow, Gf2Error, SymplecticGate};
pub use observables::{EntropyQueries, Observable, Region};
pub use oracle::FullTableau;
pub use tableau::{InitialState, TrackedTableau};
