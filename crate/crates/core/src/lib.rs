//! Truncated-Fock simulation of two bosonic modes coupled to one qubit, with
//! interferometer circuits, sideband readout models, Fisher-information
//! bounds and fitting.

pub mod curve;
pub mod error;
pub mod expm;
pub mod fitting;
pub mod fock;
pub mod gates;
pub mod interferometer;
pub mod metrology;
pub mod sideband;

pub use error::{Error, Result};
pub use fock::{Mode, ModeConfig, Qubit, Truncation, TwoModeQubitState};
pub use interferometer::{CircuitKind, CircuitProgram, FringeDataset};
