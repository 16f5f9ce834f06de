//! Discrete-event simulator of a two-node quantum repeater link.
//!
//! The simulator generates entanglement over a noisy optical link
//! (MeetInTheMiddle or SenderReceiver architecture), runs a RuleSet-based
//! protocol engine on both nodes (recurrence purification followed by
//! link-level tomography), and reconstructs the link's density matrix from
//! the accumulated joint measurement outcomes.
//!
//! Quantum state is tracked as a Pauli frame per memory qubit plus a small
//! set of non-Pauli statuses (excited, relaxed, mixed, dark-count fake).
//! Density matrices are built on demand for tomography measurements only.

// Fixed 4x4 and 7x7 matrix arithmetic reads clearest with symmetric
// index loops.
#![allow(clippy::needless_range_loop)]

pub mod engine;
pub mod errmodel;
pub mod link;
pub mod qstate;
pub mod ruleset;
pub mod simcore;
pub mod tomography;
