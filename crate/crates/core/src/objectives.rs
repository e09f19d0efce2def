//! Objective functions: final entanglement, entanglement gain, Holevo
//! information of encoded ensembles and Holevo-information gain of free
//! ensembles. The optimizer evaluates candidates through the same code paths,
//! so a reported optimum re-evaluates bit-identically from its witness.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gates::EmbeddedGate;
use crate::tensor::{
    gram_cols, kron_vec, norm_sqr, ComplexMatrix, DensityMatrix, EntropyScratch, StateVector, SubsystemLayout,
    TensorProduct, MIN_STATE_NORM, ZERO,
};

/// Members lighter than this contribute nothing to `Σ pᵢ S(ρᵢ)`.
pub const PROBABILITY_FLOOR: f64 = 1e-12;

const NORMALIZED_TOL: f64 = 1e-10;

/// `|φ⟩_A ⊗ |χ⟩_B` with Alice's state over `A_U ⊗ A_anc` and Bob's over `B_U ⊗ B_anc`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProductInput {
    pub phi_a: StateVector,
    pub chi_b: StateVector,
}

impl ProductInput {
    pub fn new(phi_a: StateVector, chi_b: StateVector) -> Result<Self> {
        if phi_a.layout().bob_dim() != 1 || chi_b.layout().alice_dim() != 1 {
            return Err(Error::Layout("product input needs an Alice-only and a Bob-only state".into()));
        }
        if !phi_a.is_normalized(NORMALIZED_TOL) || !chi_b.is_normalized(NORMALIZED_TOL) {
            return Err(Error::Contract("product input states must be normalized".into()));
        }
        Ok(Self { phi_a, chi_b })
    }

    pub fn layout(&self) -> SubsystemLayout {
        let (a, b) = (self.phi_a.layout(), self.chi_b.layout());
        SubsystemLayout { d_au: a.d_au, d_aanc: a.d_aanc, d_bu: b.d_bu, d_banc: b.d_banc }
    }

    pub fn joint(&self) -> StateVector {
        self.phi_a.tensor(&self.chi_b).expect("layout dimensions are capped")
    }
}

/// Bob's ensemble `{pᵢ, ρᵢ}`.
#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleReduced {
    probs: Vec<f64>,
    rhos: Vec<DensityMatrix>,
}

impl EnsembleReduced {
    pub fn new(probs: Vec<f64>, rhos: Vec<DensityMatrix>) -> Result<Self> {
        if probs.is_empty() || probs.len() != rhos.len() {
            return Err(Error::Contract("ensemble needs one density matrix per probability".into()));
        }
        check_probabilities(&probs, 1e-10)?;
        let d = rhos[0].dim();
        if rhos.iter().any(|r| r.dim() != d) {
            return Err(Error::Dimension("ensemble members have different dimensions".into()));
        }
        Ok(Self { probs, rhos })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn rhos(&self) -> &[DensityMatrix] {
        &self.rhos
    }

    pub fn average(&self) -> DensityMatrix {
        let d = self.rhos[0].dim();
        let mut mix = vec![ZERO; d * d];
        for (p, rho) in self.probs.iter().zip(&self.rhos) {
            for (m, r) in mix.iter_mut().zip(rho.as_slice()) {
                *m += r * *p;
            }
        }
        DensityMatrix::from_raw(d, mix)
    }
}

fn check_probabilities(probs: &[f64], tol: f64) -> Result<()> {
    if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
        return Err(Error::Contract("probabilities must be finite and nonnegative".into()));
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > tol {
        return Err(Error::Contract(format!("probabilities sum to {total}")));
    }
    Ok(())
}

/// Shared state `ψ` with Alice-local encoders `V⁽ⁱ⁾` on `A_U ⊗ A_anc` chosen with probabilities `pᵢ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncodedEnsemble {
    pub psi: StateVector,
    pub encoders: Vec<ComplexMatrix>,
    pub probs: Vec<f64>,
}

impl EncodedEnsemble {
    pub fn new(psi: StateVector, encoders: Vec<ComplexMatrix>, probs: Vec<f64>) -> Result<Self> {
        let da = psi.layout().alice_dim();
        if encoders.is_empty() || encoders.len() != probs.len() {
            return Err(Error::Contract("ensemble needs one encoder per probability".into()));
        }
        if let Some(v) = encoders.iter().find(|v| v.rows() != da || v.cols() != da) {
            return Err(Error::Layout(format!(
                "{}x{} encoder does not act on Alice's {da}-dimensional space",
                v.rows(),
                v.cols()
            )));
        }
        if !psi.is_normalized(NORMALIZED_TOL) {
            return Err(Error::Contract("shared state must be normalized".into()));
        }
        check_probabilities(&probs, 1e-12)?;
        if encoders.iter().any(|v| !v.is_unitary(1e-10)) {
            return Err(Error::Contract("encoders must be unitary".into()));
        }
        Ok(Self { psi, encoders, probs })
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// The shared states `(V⁽ⁱ⁾ ⊗ I_B)|ψ⟩` before the gate.
    pub fn encoded_states(&self) -> Vec<StateVector> {
        let l = self.psi.layout();
        self.encoders
            .iter()
            .map(|v| {
                let mut out = vec![ZERO; l.total()];
                apply_alice(v.as_slice(), self.psi.amplitudes(), l.alice_dim(), l.bob_dim(), &mut out);
                StateVector::new(l, out).expect("same layout")
            })
            .collect()
    }
}

/// Unnormalized member states; `pᵢ = ‖ψ⁽ⁱ⁾‖² / Σⱼ ‖ψ⁽ʲ⁾‖²`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FreeEnsemble {
    pub states: Vec<StateVector>,
}

impl FreeEnsemble {
    pub fn new(states: Vec<StateVector>) -> Result<Self> {
        let Some(first) = states.first() else {
            return Err(Error::Contract("ensemble must have at least one member".into()));
        };
        let l = first.layout();
        if states.iter().any(|s| s.layout() != l) {
            return Err(Error::Layout("ensemble members have different layouts".into()));
        }
        if states.iter().any(|s| s.norm_sqr() == 0.0) {
            return Err(Error::Contract("ensemble member with zero norm".into()));
        }
        let total: f64 = states.iter().map(|s| s.norm_sqr()).sum();
        if !(total > MIN_STATE_NORM * MIN_STATE_NORM) {
            return Err(Error::Degenerate("all ensemble norms underflow".into()));
        }
        Ok(Self { states })
    }

    pub fn layout(&self) -> SubsystemLayout {
        self.states[0].layout()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        let w: Vec<f64> = self.states.iter().map(|s| s.norm_sqr()).collect();
        let total: f64 = w.iter().sum();
        w.into_iter().map(|x| x / total).collect()
    }

    pub fn conj(&self) -> Self {
        Self { states: self.states.iter().map(|s| s.conj()).collect() }
    }
}

/// `out = (V ⊗ I_B) ψ` with `ψ` viewed as a row-major `da × db` matrix.
pub(crate) fn apply_alice(v: &[C64], psi: &[C64], da: usize, db: usize, out: &mut [C64]) {
    out[..da * db].fill(ZERO);
    for a in 0..da {
        let dst = &mut out[a * db..(a + 1) * db];
        for a2 in 0..da {
            let c = v[a * da + a2];
            let src = &psi[a2 * db..(a2 + 1) * db];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += c * s;
            }
        }
    }
}

/// Reusable buffers for objective evaluation.
#[derive(Clone, Debug, Default)]
pub struct Scratch {
    entropy: EntropyScratch,
    joint: Vec<C64>,
    evolved: Vec<C64>,
    rho: Vec<C64>,
    mix: Vec<C64>,
}

impl Scratch {
    pub fn new() -> Self {
        Self::default()
    }

    fn ensure(&mut self, total: usize, db: usize) {
        self.joint.resize(total, ZERO);
        self.evolved.resize(total, ZERO);
        self.rho.resize(db * db, ZERO);
        self.mix.resize(db * db, ZERO);
    }

    /// `E(U |φ⟩|χ⟩)`.
    pub(crate) fn final_entanglement(&mut self, gate: &EmbeddedGate, phi: &[C64], chi: &[C64]) -> Result<f64> {
        let l = gate.layout();
        self.ensure(l.total(), l.bob_dim());
        for (a, x) in phi.iter().enumerate() {
            for (b, y) in chi.iter().enumerate() {
                self.joint[a * chi.len() + b] = x * y;
            }
        }
        gate.apply_into(&self.joint, &mut self.evolved);
        self.entropy.pure_state_entropy(&self.evolved, l.alice_dim(), l.bob_dim())
    }

    /// `E(U|ψ⟩) − E(|ψ⟩)`.
    pub(crate) fn entanglement_gain(&mut self, gate: &EmbeddedGate, psi: &[C64]) -> Result<f64> {
        let l = gate.layout();
        self.ensure(l.total(), l.bob_dim());
        gate.apply_into(psi, &mut self.evolved);
        let after = self.entropy.pure_state_entropy(&self.evolved, l.alice_dim(), l.bob_dim())?;
        let before = self.entropy.pure_state_entropy(psi, l.alice_dim(), l.bob_dim())?;
        Ok(after - before)
    }

    /// Holevo information of `{probs[k], scales[k] · Tr_A |m_k⟩⟨m_k|}` where
    /// `m_k = U members[k]` (or `members[k]` when `gate` is `None`).
    fn holevo_of_members(
        &mut self,
        gate: Option<&EmbeddedGate>,
        layout: SubsystemLayout,
        members: &[C64],
        probs: &[f64],
        scales: &[f64],
    ) -> Result<f64> {
        let (da, db, n) = (layout.alice_dim(), layout.bob_dim(), layout.total());
        self.ensure(n, db);
        self.mix.fill(ZERO);
        let mut mean_entropy = 0.0;
        for (k, (&p, &s)) in probs.iter().zip(scales).enumerate() {
            let member = &members[k * n..(k + 1) * n];
            let state: &[C64] = match gate {
                Some(g) => {
                    g.apply_into(member, &mut self.evolved);
                    &self.evolved
                }
                None => member,
            };
            if p < PROBABILITY_FLOOR {
                gram_cols(state, da, db, p * s, &mut self.mix);
                continue;
            }
            self.rho.fill(ZERO);
            gram_cols(state, da, db, s, &mut self.rho);
            mean_entropy += p * self.entropy.hermitian_entropy(&self.rho, db)?;
            for (m, r) in self.mix.iter_mut().zip(&self.rho) {
                *m += r * p;
            }
        }
        let total = self.entropy.hermitian_entropy(&self.mix, db)?;
        Ok(total - mean_entropy)
    }

    /// χ after the gate for encoded states already laid out in `encoded`.
    pub(crate) fn chi_encoded(&mut self, gate: &EmbeddedGate, encoded: &[C64], probs: &[f64]) -> Result<f64> {
        let ones = vec![1.0; probs.len()];
        self.holevo_of_members(Some(gate), gate.layout(), encoded, probs, &ones)
    }

    pub(crate) fn chi_before_encoded(&mut self, layout: SubsystemLayout, encoded: &[C64], probs: &[f64]) -> Result<f64> {
        let ones = vec![1.0; probs.len()];
        self.holevo_of_members(None, layout, encoded, probs, &ones)
    }

    /// `χ(Tr_A Uℰ) − χ(Tr_A ℰ)` for unnormalized members laid out contiguously.
    pub(crate) fn delta_chi(&mut self, gate: &EmbeddedGate, members: &[C64], count: usize) -> Result<f64> {
        let l = gate.layout();
        let n = l.total();
        let weights: Vec<f64> = (0..count).map(|k| norm_sqr(&members[k * n..(k + 1) * n])).collect();
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::Degenerate("all ensemble norms vanish".into()));
        }
        let probs: Vec<f64> = weights.iter().map(|w| w / total).collect();
        let scales: Vec<f64> = weights.iter().map(|w| 1.0 / w).collect();
        let after = self.holevo_of_members(Some(gate), l, members, &probs, &scales)?;
        let before = self.holevo_of_members(None, l, members, &probs, &scales)?;
        Ok(after - before)
    }
}

/// Lays out `(V⁽ᵏ⁾ ⊗ I_B)|ψ⟩` for every encoder contiguously in `out`.
pub(crate) fn encode_members(encoders: &[&[C64]], psi: &[C64], layout: SubsystemLayout, out: &mut Vec<C64>) {
    let (da, db, n) = (layout.alice_dim(), layout.bob_dim(), layout.total());
    out.resize(encoders.len() * n, ZERO);
    for (k, v) in encoders.iter().enumerate() {
        apply_alice(v, psi, da, db, &mut out[k * n..(k + 1) * n]);
    }
}

fn check_gate_layout(gate: &EmbeddedGate, layout: SubsystemLayout) -> Result<()> {
    if gate.layout() != layout {
        return Err(Error::Layout(format!("gate layout {:?} does not match state layout {layout:?}", gate.layout())));
    }
    Ok(())
}

/// `E(U |φ⟩_A |χ⟩_B)` in ebits.
pub fn final_entanglement(gate: &EmbeddedGate, input: &ProductInput) -> Result<f64> {
    check_gate_layout(gate, input.layout())?;
    Scratch::new().final_entanglement(gate, input.phi_a.amplitudes(), input.chi_b.amplitudes())
}

/// `E(U|ψ⟩) − E(|ψ⟩)` in ebits; negative for unlucky inputs.
pub fn entanglement_gain(gate: &EmbeddedGate, psi: &StateVector) -> Result<f64> {
    check_gate_layout(gate, psi.layout())?;
    Scratch::new().entanglement_gain(gate, psi.amplitudes())
}

/// `χ = S(Σ pᵢρᵢ) − Σ pᵢ S(ρᵢ)` in bits.
pub fn holevo_information(e: &EnsembleReduced) -> Result<f64> {
    let mut sc = EntropyScratch::default();
    let mut mean = 0.0;
    for (p, rho) in e.probs.iter().zip(&e.rhos) {
        if *p >= PROBABILITY_FLOOR {
            mean += p * sc.hermitian_entropy(rho.as_slice(), rho.dim())?;
        }
    }
    let mix = e.average();
    Ok(sc.hermitian_entropy(mix.as_slice(), mix.dim())? - mean)
}

fn encoder_slices(e: &EncodedEnsemble) -> Vec<&[C64]> {
    e.encoders.iter().map(|v| v.as_slice()).collect()
}

/// Holevo information of Bob's states after `U (V⁽ⁱ⁾ ⊗ I) |ψ⟩`.
pub fn chi_u_objective(gate: &EmbeddedGate, e: &EncodedEnsemble) -> Result<f64> {
    let l = e.psi.layout();
    check_gate_layout(gate, l)?;
    let mut members = Vec::new();
    encode_members(&encoder_slices(e), e.psi.amplitudes(), l, &mut members);
    let mut sc = Scratch::new();
    debug_assert!(sc.chi_before_encoded(l, &members, &e.probs).map_or(true, |x| x.abs() < 1e-10));
    sc.chi_encoded(gate, &members, &e.probs)
}

/// Holevo information of the encoded ensemble before the gate; zero up to
/// rounding because Alice-local encoders leave Bob's state unchanged.
pub fn initial_holevo(e: &EncodedEnsemble) -> Result<f64> {
    let l = e.psi.layout();
    let mut members = Vec::new();
    encode_members(&encoder_slices(e), e.psi.amplitudes(), l, &mut members);
    Scratch::new().chi_before_encoded(l, &members, &e.probs)
}

fn flatten(e: &FreeEnsemble) -> Vec<C64> {
    e.states.iter().flat_map(|s| s.amplitudes().iter().copied()).collect()
}

/// `χ(Tr_A Uℰ) − χ(Tr_A ℰ)` in bits.
pub fn delta_chi_objective(gate: &EmbeddedGate, e: &FreeEnsemble) -> Result<f64> {
    check_gate_layout(gate, e.layout())?;
    Scratch::new().delta_chi(gate, &flatten(e), e.states.len())
}

/// Bob's reduced ensemble of a free ensemble, optionally after the gate.
pub fn reduced_free_ensemble(gate: Option<&EmbeddedGate>, e: &FreeEnsemble) -> Result<EnsembleReduced> {
    let probs = e.probabilities();
    let rhos = e
        .states
        .iter()
        .map(|s| {
            let evolved = match gate {
                Some(g) => StateVector::new(s.layout(), g.apply(s.amplitudes()))?,
                None => s.clone(),
            };
            let normed = crate::tensor::normalize_state(&evolved)?;
            Ok(crate::tensor::partial_trace(&normed, crate::tensor::Party::Bob))
        })
        .collect::<Result<Vec<_>>>()?;
    EnsembleReduced::new(probs, rhos)
}

/// Product of normalized Alice and Bob amplitude vectors as a joint state.
pub fn product_state(layout: SubsystemLayout, phi: &[C64], chi: &[C64]) -> Result<StateVector> {
    StateVector::new(layout, kron_vec(phi, chi))
}
