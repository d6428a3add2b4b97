//! Parity-code (LHZ) toolkit.
//!
//! The parity code stores logical information in physical qubits labelled by
//! sets of logical indices; a qubit labelled `{i, j}` holds the Z-parity of
//! logicals `i` and `j`. All stabilizers are Z products, so the code corrects
//! bit flips only and relies on biased-noise hardware to suppress phase flips.
//!
//! Modules, bottom up:
//!
//! - [`gf2`]: packed bit vectors and Gaussian elimination.
//! - [`labels`]: label algebra (symmetric difference).
//! - [`code`]: the code model, logical operators, distance, text format.
//! - [`layouts`]: LHZ, limited-range and custom layouts on a square grid.
//! - [`deform`]: adding and removing qubits with stabilizer bookkeeping.
//! - [`decode`]: syndromes, belief propagation and an exhaustive ML oracle.
//! - [`montecarlo`]: the parity vs. repetition logical error comparison.
//! - [`circuit`]: circuit IR, text format and a statevector simulator.
//! - [`gates`]: logical gate constructions with branch-exhaustive checks.

pub mod circuit;
pub mod code;
pub mod decode;
pub mod deform;
mod error;
pub mod gates;
pub mod gf2;
pub mod labels;
pub mod layouts;
pub mod montecarlo;

pub use code::{ParityCode, PauliMask, PhysicalQubit, Stabilizer};
pub use error::Error;
pub use labels::{LogicalIndex, QubitLabel};
