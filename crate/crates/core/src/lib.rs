//! Simulation of redundantly encoded photonic resource states generated by a
//! single spin-photon interface, and of type-II fusion on the emitted
//! photons.
//!
//! States are sparse superpositions over Fock configurations ([`fock`]).
//! The emitter protocol ([`protocol`]) acts on them with the spin gates of
//! [`gates`]; [`targets`] builds the ideal states independently, and
//! [`formulas`] holds the closed-form fidelities checked against both.

pub mod fock;
pub mod formulas;
pub mod fusion;
pub mod gates;
pub mod protocol;
pub mod targets;

pub use fock::{
    fidelity, inner_product, trace_loss_modes, BasisKet, Channel, Mixture, Mode, ModeAddress, Port,
    PureState, Spin, TimeBin,
};
pub use protocol::{
    run_protocol, simulated_fidelity, ErrorModel, InitialSign, ProtocolConfig, RotationError,
    Step5bMode,
};
