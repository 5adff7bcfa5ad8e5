//! Neural key exchange with tree parity machines.
//!
//! * [`tpm`] machine arithmetic and learning rules
//! * [`rng`] seeded SplitMix64 inputs and weights
//! * [`keymat`] key octets and FNV-1a fingerprints
//! * [`session`] partner / eavesdropper state machines and local sessions
//! * [`wire`] the framed KDC protocol
//! * [`kdc`] the KDC service and its clients
//! * [`experiments`] CSV-producing experiment harness

pub mod experiments;
pub mod kdc;
pub mod keymat;
pub mod rng;
pub mod session;
pub mod tpm;
pub mod wire;

pub use keymat::{derive_key, fnv1a64, KeyMaterial};
pub use rng::SeededGenerator;
pub use session::{
    run_attack_session, run_local_session, AttackReport, PartnerStatus, SessionConfig, SyncReport,
};
pub use tpm::{
    compute_output, overlap, update_weights, InputVector, LearningRule, RoundTrace, Spin,
    TpmParams, WeightMatrix,
};
pub use wire::{Message, Role};
