//! Entangling and communication capacities of two-qubit canonical gates.
//!
//! A gate `U = exp(-i Σ_k α_k σ_k⊗σ_k)` acts on Alice's qubit `A_U` and Bob's
//! qubit `B_U`; each side may also hold an ancilla of dimension `d_anc` that
//! the gate does not touch. The crate evaluates four figures of merit on
//! explicit inputs and maximizes them stochastically:
//!
//! - `E_U`: entanglement of `U(|φ⟩⊗|χ⟩)` over product inputs,
//! - `ΔE_U`: entanglement gain over arbitrary pure inputs,
//! - `χ_U`: Holevo information Bob can read after the gate, starting from
//!   ensembles produced by Alice-local unitaries on a shared state,
//! - `Δχ_U`: Holevo-information gain over arbitrary ensembles.

pub mod annealer;
pub mod error;
pub mod gates;
pub mod objectives;
pub mod sweep;
pub mod tensor;

pub use annealer::{
    maximize_chi, maximize_delta_chi, maximize_entanglement, optimize, AnnealConfig, CapacityKind, EncoderScope,
    OptProblem, OptResult, SigmaScheme, Witness,
};
pub use error::{Error, Result};
pub use gates::{canonical_gate, embed_gate, CanonicalParams, EmbeddedGate, FamilyTag, GateFamily};
pub use tensor::{ComplexMatrix, DensityMatrix, StateVector, SubsystemLayout};
